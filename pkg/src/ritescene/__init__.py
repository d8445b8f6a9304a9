"""Location recognition for pilgrimage-ritual video clips.

Pipeline: shot segmentation, per-shot background modelling, SIFT on the
background image, sparse coding with max pooling, and KNN / MLP / SVM
classification with per-class precision and recall reports.
"""
__version__ = "0.1.0"
