"""Detected vs planted cuts on seeded synthetic hard-cut videos.

    python3 scripts/shot_detection_demo.py --videos 20
"""
import argparse

from ritescene.imaging import Frame
from ritescene.shotseg import ShotParams, detect_shots
from ritescene.synth import shot_video


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--videos", type=int, default=20)
    ap.add_argument("--k", type=int, default=10)
    args = ap.parse_args()
    params = ShotParams(k=args.k)
    exact = 0
    for seed in range(args.videos):
        frames, cuts = shot_video(seed)
        found = detect_shots([Frame(f, "RGB") for f in frames], params).boundaries
        ok = len(found) == len(cuts) and all(abs(a - b) <= params.k for a, b in zip(found, cuts))
        exact += ok
        print(f"video {seed:2d}: {len(frames):3d} frames  planted {cuts}  detected {found}  {'ok' if ok else 'MISMATCH'}")
    print(f"{exact}/{args.videos} exact")


if __name__ == "__main__":
    main()
