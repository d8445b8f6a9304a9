"""Procedural scene families standing in for real location footage.

Each class has its own background structure and base hue; samples jitter
geometry and hue, add small moving foreground squares and per-frame noise.
Everything is drawn from ``numpy.random.default_rng`` keyed on
(seed, class, sample), so trees are byte-identical per seed.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import Frame, encode_ppm

CLASSES = ("tawaf", "say", "arafat", "muzdalifah", "mina", "jamarat")
FAMILIES = ("bullseyes", "dashes", "discs", "crosses", "checkers", "stars")
FRAME_NAME = "frame_{:06d}.ppm"


def _marks(rng: np.random.Generator, h: int, w: int, lo: int, hi: int, draw) -> np.ndarray:
    """Scatter ``draw(dy, dx, rng)`` shapes (local coordinates) over the image."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    t = np.zeros((h, w))
    for _ in range(int(rng.integers(lo, hi))):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        t = np.maximum(t, draw(yy - cy, xx - cx, rng))
    return t


def _bullseye(dy, dx, rng):
    r = np.hypot(dy, dx)
    period = rng.uniform(6.0, 8.0)
    return np.where(r < 1.75 * period, 0.5 + 0.5 * np.cos(2 * np.pi * r / period), 0.0)


def _bar(angle):
    def draw(dy, dx, rng):
        u = dx * np.cos(angle) + dy * np.sin(angle)
        v = -dx * np.sin(angle) + dy * np.cos(angle)
        return ((np.abs(u) < rng.uniform(6.0, 8.0)) & (np.abs(v) < 2.5)).astype(np.float64)
    return draw


def _disc(dy, dx, rng):
    return (np.hypot(dy, dx) < rng.uniform(3.0, 6.0)).astype(np.float64)


def _cross(dy, dx, rng):
    arm = rng.uniform(5.0, 7.0)
    return (((np.abs(dy) < 1.5) & (np.abs(dx) < arm)) | ((np.abs(dx) < 1.5) & (np.abs(dy) < arm))).astype(np.float64)


def _star(dy, dx, rng):
    r = np.hypot(dy, dx)
    phi = np.arctan2(dy, dx)
    return ((r < rng.uniform(10.0, 13.0)) & (np.sin(3 * phi + rng.uniform(0, 2 * np.pi)) > 0)).astype(np.float64)


def texture(family: str, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Background structure in [0, 1]: scattered marks, or a tilted checkerboard."""
    if family == "bullseyes":
        return _marks(rng, h, w, 14, 20, _bullseye)
    if family == "dashes":
        return _marks(rng, h, w, 20, 28, _bar(rng.uniform(0, np.pi)))
    if family == "discs":
        return _marks(rng, h, w, 18, 26, _disc)
    if family == "crosses":
        return _marks(rng, h, w, 16, 22, _cross)
    if family == "checkers":
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        cell = rng.uniform(12.0, 18.0)
        ang = rng.uniform(-0.3, 0.3)
        u = xx * np.cos(ang) + yy * np.sin(ang)
        v = -xx * np.sin(ang) + yy * np.cos(ang)
        return ((np.floor(u / cell) + np.floor(v / cell)) % 2).astype(np.float64)
    if family == "stars":
        return _marks(rng, h, w, 10, 14, _star)
    raise ValueError(f"unknown scene family {family!r}")


def palette(hue: float) -> np.ndarray:
    """Tinted colour, saturation about 1/3, scaled by brightness later."""
    pure = np.array(colorsys.hsv_to_rgb(hue % 1.0, 1.0, 1.0))
    return 0.4 + 0.6 * pure


@dataclass
class _Square:
    y: float
    x: float
    vy: float
    vx: float
    size: int
    color: np.ndarray


def _squares(rng: np.random.Generator, h: int, w: int, count: int) -> list[_Square]:
    out = []
    for _ in range(count):
        size = int(rng.integers(10, 15))
        out.append(_Square(rng.uniform(0, h - size), rng.uniform(0, w - size),
                           rng.uniform(-2.0, 2.0), rng.uniform(-2.5, 2.5), size, rng.uniform(0.1, 0.9, 3)))
    return out


def scene_frames(family_index: int, rng: np.random.Generator, n_frames: int, h: int = 120, w: int = 160,
                 noise: float = 0.02, n_squares: int = 2) -> list[np.ndarray]:
    """RGB frames as (3, h, w) arrays for one continuous take."""
    t = texture(FAMILIES[family_index], rng, h, w)
    hue = family_index / len(FAMILIES) + rng.uniform(-0.03, 0.03)
    base = (0.25 + 0.75 * t)[None] * palette(hue)[:, None, None]
    squares = _squares(rng, h, w, n_squares)
    frames = []
    for _ in range(n_frames):
        img = base.copy()
        for sq in squares:
            y0, x0 = int(round(sq.y)), int(round(sq.x))
            img[:, y0:y0 + sq.size, x0:x0 + sq.size] = sq.color[:, None, None]
            sq.y += sq.vy
            sq.x += sq.vx
            if not 0 <= sq.y <= h - sq.size:
                sq.vy = -sq.vy
                sq.y = min(max(sq.y, 0), h - sq.size)
            if not 0 <= sq.x <= w - sq.size:
                sq.vx = -sq.vx
                sq.x = min(max(sq.x, 0), w - sq.size)
        img = img + rng.normal(0.0, noise, img.shape)
        frames.append(np.clip(img, 0.0, 1.0))
    return frames


def sample_rng(seed: int, class_index: int, sample_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, class_index, sample_index])


def write_frames(directory: Path, frames: list[np.ndarray]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        (directory / FRAME_NAME.format(i)).write_bytes(encode_ppm(Frame(f, "RGB")))


def generate_synthetic(dest: str | Path, seed: int = 42, classes: int = 6, samples_per_class: int = 10,
                       frames_per_sample: int = 60, height: int = 120, width: int = 160,
                       splits: dict[str, int] | None = None) -> Path:
    """Write ``dest/<label>/sample_NNN/frame_*.ppm``.

    With ``splits`` (e.g. ``{"train": 10, "test": 5}``) each split gets its
    own ``dest/<split>/<label>/...`` tree and disjoint sample streams.
    """
    dest = Path(dest)
    if not 1 <= classes <= len(CLASSES):
        raise ValueError(f"classes must be in [1, {len(CLASSES)}]")
    plan = [(None, samples_per_class)] if not splits else list(splits.items())
    offset = 0
    for split, count in plan:
        root = dest if split is None else dest / split
        for ci in range(classes):
            for si in range(count):
                rng = sample_rng(seed, ci, offset + si)
                frames = scene_frames(ci, rng, frames_per_sample, height, width)
                write_frames(root / CLASSES[ci] / f"sample_{si:03d}", frames)
        offset += count
    return dest


def shot_video(seed: int, n_scenes: int | None = None, height: int = 120, width: int = 160,
               min_len: int = 20, max_len: int = 40) -> tuple[list[np.ndarray], list[int]]:
    """Hard-cut video from distinct scene families; returns frames and cut indices."""
    rng = np.random.default_rng([seed, 7919])
    if n_scenes is None:
        n_scenes = int(rng.integers(3, 7))
    fams = rng.permutation(len(FAMILIES))[:n_scenes]
    frames, cuts = [], []
    for fam in fams:
        if frames:
            cuts.append(len(frames))
        length = int(rng.integers(min_len, max_len + 1))
        frames.extend(scene_frames(int(fam), rng, length, height, width))
    return frames, cuts
