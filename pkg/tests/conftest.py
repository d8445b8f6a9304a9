from hypothesis import settings

# timing varies a lot on shared single-core runners
settings.register_profile("default", deadline=None)
settings.load_profile("default")
