"""Shot boundary detection by frame skipping, hue motion and block voting.

Frames ``i`` and ``i + k`` are compared for ``i = 0, k, 2k, ...``; a cut is
marked at ``i + k`` when both the mean circular hue distance and the
fraction of changed blocks exceed their thresholds.  Skipping turns short
gradual transitions into a single cut.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .imaging import DimensionError, Frame, rgb_to_hsi


@dataclass(frozen=True)
class ShotParams:
    k: int = 10
    motion_threshold: float = 0.10
    block_threshold: float = 0.25
    block_size: int = 64
    block_change_level: float = 0.08

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        for name in ("motion_threshold", "block_threshold", "block_change_level"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class Shot:
    start: int
    end: int
    keyframes: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty shot [{self.start}, {self.end})")
        kf = tuple(int(i) for i in self.keyframes)
        if any(not self.start <= i < self.end for i in kf) or any(a >= b for a, b in zip(kf, kf[1:])):
            raise ValueError(f"bad keyframes {kf} for shot [{self.start}, {self.end})")
        object.__setattr__(self, "keyframes", kf)

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ShotList:
    shots: tuple[Shot, ...]
    length: int

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple(self.shots))
        pos = 0
        for s in self.shots:
            if s.start != pos:
                raise ValueError(f"shots do not partition [0, {self.length}): gap/overlap at {pos}")
            pos = s.end
        if pos != self.length:
            raise ValueError(f"shots end at {pos}, sequence has {self.length} frames")

    @property
    def boundaries(self) -> list[int]:
        return [s.start for s in self.shots[1:]]

    @property
    def keyframes(self) -> list[int]:
        return [i for s in self.shots for i in s.keyframes]


def _check_shapes(a: Frame, b: Frame) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"frame sizes differ: {a.shape} vs {b.shape}")


def hue_motion_difference(a: Frame, b: Frame) -> float:
    """Mean circular hue distance between two HSI frames, scaled to [0, 1]."""
    _check_shapes(a, b)
    d = np.abs(a.plane(0) - b.plane(0)) % 1.0
    return float(np.mean(2.0 * np.minimum(d, 1.0 - d)))


def block_means(diff: np.ndarray, block_size: int) -> np.ndarray:
    """Mean of ``diff`` over block_size tiles; edge tiles may be smaller."""
    h, w = diff.shape
    ys = np.arange(0, h, block_size)
    xs = np.arange(0, w, block_size)
    sums = np.add.reduceat(np.add.reduceat(diff, ys, axis=0), xs, axis=1)
    counts = np.outer(np.diff(np.append(ys, h)), np.diff(np.append(xs, w)))
    return sums / counts


def block_change_ratio(a: Frame, b: Frame, params: ShotParams = ShotParams()) -> float:
    _check_shapes(a, b)
    diff = np.abs(a.planes - b.planes).mean(axis=0)
    means = block_means(diff, params.block_size)
    return float(np.mean(means > params.block_change_level))


def comparison_pairs(n: int, k: int) -> list[tuple[int, int]]:
    """(i, j) pairs compared by the detector; the last pair may be shorter than k."""
    pairs = []
    for i in range(0, n - 1, k):
        pairs.append((i, min(i + k, n - 1)))
    return pairs


def keyframes_for(start: int, end: int, k: int) -> tuple[int, ...]:
    return tuple(range(start, end, k))


def shots_from_boundaries(boundaries: Sequence[int], n: int, k: int) -> ShotList:
    edges = [0] + sorted(set(int(b) for b in boundaries if 0 < b < n)) + [n]
    shots = [Shot(s, e, keyframes_for(s, e, k)) for s, e in zip(edges, edges[1:])]
    return ShotList(tuple(shots), n)


def pair_scores(frames: Sequence[Frame], params: ShotParams) -> list[tuple[int, int, float, float]]:
    """(i, j, motion, block ratio) for every comparison pair."""
    n = len(frames)
    hsi_cache: dict[int, Frame] = {}

    def hsi(idx):
        if idx not in hsi_cache:
            f = frames[idx]
            hsi_cache[idx] = f if f.colorspace == "HSI" else rgb_to_hsi(f)
        return hsi_cache[idx]

    out = []
    for i, j in comparison_pairs(n, params.k):
        motion = hue_motion_difference(hsi(i), hsi(j))
        blocks = block_change_ratio(frames[i], frames[j], params)
        out.append((i, j, motion, blocks))
    return out


def detect_shots(frames: Sequence[Frame], params: ShotParams = ShotParams()) -> ShotList:
    """Split a frame sequence (RGB frames) into shots with keyframes every k frames."""
    n = len(frames)
    if n == 0:
        raise ValueError("empty frame sequence")
    boundaries = [
        j for i, j, motion, blocks in pair_scores(frames, params)
        if motion > params.motion_threshold and blocks > params.block_threshold
    ]
    return shots_from_boundaries(boundaries, n, params.k)


# -- report ------------------------------------------------------------------

def export_shots(shots: ShotList) -> str:
    records = [{"start": s.start, "end": s.end, "keyframes": list(s.keyframes)} for s in shots.shots]
    return json.dumps(records, indent=1)


def parse_shots(text: str) -> ShotList:
    records = json.loads(text)
    if not isinstance(records, list):
        raise ValueError("shot report must be a JSON array")
    shots = tuple(Shot(int(r["start"]), int(r["end"]), tuple(r["keyframes"])) for r in records)
    length = shots[-1].end if shots else 0
    return ShotList(shots, length)
