"""Scale-invariant keypoints and 128-d gradient-histogram descriptors.

Pipeline: Gaussian pyramid -> difference of Gaussians -> 26-neighbour
extrema -> contrast / principal-curvature filtering -> one dominant
orientation -> 4x4x8 descriptor.  Images are single-channel floats in
[0, 1]; blurs extend borders symmetrically, gradient sampling replicates
the edge pixel.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
from scipy.ndimage import correlate1d, map_coordinates

from .imaging import Frame

logger = logging.getLogger(__name__)

MIN_OCTAVE_SIDE = 8
DESCRIPTOR_CLAMP = 0.2
ORI_BINS = 36


@dataclass(frozen=True)
class PyramidParams:
    octaves: int = 4
    scales: int = 3
    sigma0: float = 1.6
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0

    def __post_init__(self):
        if self.octaves < 1 or self.scales < 1:
            raise ValueError("octaves and scales must be >= 1")
        if self.sigma0 <= 0 or self.contrast_threshold <= 0:
            raise ValueError("sigma0 and contrast_threshold must be positive")
        if self.edge_ratio <= 1:
            raise ValueError("edge_ratio must exceed 1")

    @property
    def k(self) -> float:
        return 2.0 ** (1.0 / self.scales)

    def level_sigma(self, level: int) -> float:
        """Blur of a level in its own octave's pixel units."""
        return self.sigma0 * self.k ** level


@dataclass
class ScaleSpace:
    gaussians: list[np.ndarray]  # per octave, (s + 3, h, w)
    dogs: list[np.ndarray]  # per octave, (s + 2, h, w)
    params: PyramidParams
    _grad: dict = field(default_factory=dict, repr=False)

    @property
    def n_octaves(self) -> int:
        return len(self.gaussians)

    def sigma(self, octave: int, level: int) -> float:
        """Blur of a level in base-image pixel units."""
        return self.params.level_sigma(level) * 2 ** octave

    def gradients(self, octave: int, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Central differences (no halving) of a Gaussian level: (d/dx, d/dy)."""
        key = (octave, level)
        if key not in self._grad:
            img = np.pad(self.gaussians[octave][level], 1, mode="edge")
            gx = img[1:-1, 2:] - img[1:-1, :-2]
            gy = img[2:, 1:-1] - img[:-2, 1:-1]
            self._grad[key] = (gx, gy)
        return self._grad[key]


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    octave: int
    level: int
    sigma: float
    theta: float = 0.0
    row: int = 0  # position in the octave grid
    col: int = 0
    response: float = 0.0


@dataclass(frozen=True)
class Descriptor:
    vector: np.ndarray
    keypoint: Keypoint


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 1-d Gaussian on radius ceil(3 sigma), normalised to sum 1."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = int(math.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable blur with half-sample symmetric borders.

    Symmetric extension commutes with symmetric kernels, so successive blurs
    compose like one blur of the combined width up to the image border.
    """
    if sigma <= 0:
        return np.array(image, dtype=np.float64)
    kern = gaussian_kernel(sigma)
    out = correlate1d(np.asarray(image, dtype=np.float64), kern, axis=0, mode="reflect")
    return correlate1d(out, kern, axis=1, mode="reflect")


def _plane(image) -> np.ndarray:
    if isinstance(image, Frame):
        if image.colorspace != "GRAY":
            raise ValueError(f"SIFT needs a GRAY frame, got {image.colorspace}")
        return image.plane(0)
    return np.asarray(image, dtype=np.float64)


def build_scale_space(image, params: PyramidParams = PyramidParams()) -> ScaleSpace:
    """Each level is blurred directly from its octave base, so level ``i`` of
    octave 0 is exactly the input convolved with a sigma0 * k**i kernel."""
    base = _plane(image)
    if min(base.shape) < 16:
        raise ValueError(f"image {base.shape} is smaller than 16x16")
    s = params.scales
    gaussians, dogs = [], []
    for o in range(params.octaves):
        if min(base.shape) < MIN_OCTAVE_SIDE:
            logger.warning("image too small for %d octaves; using %d", params.octaves, o)
            break
        levels = []
        for i in range(s + 3):
            target = params.level_sigma(i)
            if o == 0:
                levels.append(gaussian_blur(base, target))
            elif i == 0:
                levels.append(base.copy())
            else:
                levels.append(gaussian_blur(base, math.sqrt(target ** 2 - params.sigma0 ** 2)))
        stack = np.stack(levels)
        gaussians.append(stack)
        dogs.append(stack[1:] - stack[:-1])
        # level s carries twice sigma0; subsampling brings it back to sigma0
        base = stack[s][::2, ::2]
    return ScaleSpace(gaussians, dogs, params)


def detect_extrema(space: ScaleSpace) -> list[Keypoint]:
    """Strict maxima / minima over the 3x3x3 neighbourhood, inner DoG levels only."""
    found = []
    for o, dog in enumerate(space.dogs):
        n_lev, h, w = dog.shape
        if h < 3 or w < 3:
            continue
        for lev in range(1, n_lev - 1):
            center = dog[lev, 1:-1, 1:-1]
            is_max = np.ones(center.shape, dtype=bool)
            is_min = np.ones(center.shape, dtype=bool)
            for dl in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        if dl == dy == dx == 0:
                            continue
                        nb = dog[lev + dl, 1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
                        is_max &= center > nb
                        is_min &= center < nb
            rows, cols = np.nonzero(is_max | is_min)
            for r, c in zip(rows + 1, cols + 1):
                scale = 2 ** o
                found.append(Keypoint(
                    x=float(c * scale), y=float(r * scale), octave=o, level=lev,
                    sigma=space.sigma(o, lev), row=int(r), col=int(c),
                    response=float(dog[lev, r, c]),
                ))
    return found


def hessian_2d(plane: np.ndarray, r: int, c: int) -> np.ndarray:
    d = plane
    dxx = d[r, c + 1] + d[r, c - 1] - 2.0 * d[r, c]
    dyy = d[r + 1, c] + d[r - 1, c] - 2.0 * d[r, c]
    dxy = (d[r + 1, c + 1] - d[r + 1, c - 1] - d[r - 1, c + 1] + d[r - 1, c - 1]) / 4.0
    return np.array([[dxx, dxy], [dxy, dyy]])


def passes_edge_test(hess: np.ndarray, edge_ratio: float) -> bool:
    tr = hess[0, 0] + hess[1, 1]
    det = hess[0, 0] * hess[1, 1] - hess[0, 1] ** 2
    if det <= 0:
        return False
    return tr * tr / det < (edge_ratio + 1.0) ** 2 / edge_ratio


def filter_keypoints(candidates: Iterable[Keypoint], space: ScaleSpace,
                     params: PyramidParams | None = None) -> list[Keypoint]:
    params = params or space.params
    kept = []
    for kp in candidates:
        plane = space.dogs[kp.octave][kp.level]
        if abs(plane[kp.row, kp.col]) < params.contrast_threshold:
            continue
        if passes_edge_test(hessian_2d(plane, kp.row, kp.col), params.edge_ratio):
            kept.append(kp)
    return kept


def gradient_at(image, x: int, y: int) -> tuple[float, float]:
    """Central-difference magnitude and orientation (degrees in [0, 360))."""
    img = _plane(image)
    h, w = img.shape

    def px(yy, xx):
        return img[min(max(yy, 0), h - 1), min(max(xx, 0), w - 1)]

    dx = px(y, x + 1) - px(y, x - 1)
    dy = px(y + 1, x) - px(y - 1, x)
    mag = math.hypot(dx, dy)
    if mag == 0.0:
        return 0.0, 0.0
    return mag, math.degrees(math.atan2(dy, dx)) % 360.0


def assign_orientation(kp: Keypoint, space: ScaleSpace) -> Keypoint:
    gx, gy = space.gradients(kp.octave, kp.level)
    h, w = gx.shape
    sig = space.params.level_sigma(kp.level)
    sig_w = 1.5 * sig
    radius = int(math.ceil(3.0 * sig_w))
    off = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(off, off, indexing="ij")
    inside = dx ** 2 + dy ** 2 <= radius ** 2
    dy, dx = dy[inside], dx[inside]
    rr = np.clip(kp.row + dy, 0, h - 1)
    cc = np.clip(kp.col + dx, 0, w - 1)
    sx, sy = gx[rr, cc], gy[rr, cc]
    mag = np.hypot(sx, sy)
    weight = mag * np.exp(-(dx ** 2 + dy ** 2) / (2.0 * sig_w ** 2))
    ang = np.degrees(np.arctan2(sy, sx)) % 360.0
    # bins centred on multiples of 10 degrees
    bins = np.floor(ang / (360.0 / ORI_BINS) + 0.5).astype(int) % ORI_BINS
    hist = np.bincount(bins, weights=weight, minlength=ORI_BINS)
    if not np.any(hist > 0):
        return replace(kp, theta=0.0)
    p = int(np.argmax(hist))
    left, mid, right = hist[(p - 1) % ORI_BINS], hist[p], hist[(p + 1) % ORI_BINS]
    denom = left - 2.0 * mid + right
    shift = 0.5 * (left - right) / denom if denom != 0 else 0.0
    theta = ((p + shift) * (360.0 / ORI_BINS)) % 360.0
    return replace(kp, theta=float(theta))


def clamp_normalize(v: np.ndarray, clamp: float = DESCRIPTOR_CLAMP) -> np.ndarray:
    """Unit-normalise with every entry capped at ``clamp``.

    This is the fixed point of repeated normalise-clamp-renormalise.  It
    needs at least ceil(1 / clamp**2) nonzero bins; with fewer, unit norm
    wins and the cap is applied once before renormalising.
    """
    v = np.maximum(np.asarray(v, dtype=np.float64), 0.0)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.zeros_like(v)
    v = v / norm
    nz = np.count_nonzero(v)
    if nz * clamp ** 2 < 1.0:
        v = np.minimum(v, clamp)
        return v / np.linalg.norm(v)
    # find scale c with ||min(c v, clamp)|| = 1: entries above clamp/c saturate
    order = np.sort(v[v > 0])[::-1]
    for m in range(len(order) + 1):
        rest = np.sum(order[m:] ** 2)
        if rest <= 0:
            break
        c = math.sqrt(max(1.0 - m * clamp ** 2, 0.0) / rest)
        if m == len(order) or order[m] * c <= clamp:
            out = np.minimum(c * v, clamp)
            return out / np.linalg.norm(out)
    out = np.where(v > 0, clamp, 0.0)
    return out / np.linalg.norm(out)


def compute_descriptor(kp: Keypoint, space: ScaleSpace) -> Descriptor:
    gx, gy = space.gradients(kp.octave, kp.level)
    sig = space.params.level_sigma(kp.level)
    cell = 3.0 * sig
    step = cell / 4.0
    idx = np.arange(16) - 7.5
    vv, uu = np.meshgrid(idx, idx, indexing="ij")  # grid rows (v), columns (u)
    t = math.radians(kp.theta)
    cos_t, sin_t = math.cos(t), math.sin(t)
    xs = kp.col + step * (cos_t * uu - sin_t * vv)
    ys = kp.row + step * (sin_t * uu + cos_t * vv)
    coords = np.stack([ys.ravel(), xs.ravel()])
    sx = map_coordinates(gx, coords, order=1, mode="nearest")
    sy = map_coordinates(gy, coords, order=1, mode="nearest")
    mag = np.hypot(sx, sy) * np.exp(-(uu.ravel() ** 2 + vv.ravel() ** 2) / (2.0 * 8.0 ** 2))
    rel = (np.arctan2(sy, sx) - t) % (2.0 * math.pi)

    rb = (vv.ravel() + 7.5 - 1.5) / 4.0
    cb = (uu.ravel() + 7.5 - 1.5) / 4.0
    ob = rel / (2.0 * math.pi) * 8.0
    r0, c0, o0 = np.floor(rb).astype(int), np.floor(cb).astype(int), np.floor(ob).astype(int)
    fr, fc, fo = rb - r0, cb - c0, ob - o0
    hist = np.zeros((4, 4, 8))
    for dr in (0, 1):
        wr = fr if dr else 1.0 - fr
        rr = r0 + dr
        for dc in (0, 1):
            wc = fc if dc else 1.0 - fc
            cc = c0 + dc
            ok = (rr >= 0) & (rr < 4) & (cc >= 0) & (cc < 4)
            for do in (0, 1):
                wo = fo if do else 1.0 - fo
                oo = (o0 + do) % 8
                np.add.at(hist, (rr[ok], cc[ok], oo[ok]), (mag * wr * wc * wo)[ok])
    return Descriptor(clamp_normalize(hist.ravel()), kp)


def extract(image, params: PyramidParams = PyramidParams()) -> list[tuple[Keypoint, Descriptor]]:
    space = build_scale_space(image, params)
    kps = filter_keypoints(detect_extrema(space), space, params)
    kps.sort(key=lambda k: (k.octave, k.level, k.row, k.col))
    out = []
    for kp in kps:
        kp = assign_orientation(kp, space)
        out.append((kp, compute_descriptor(kp, space)))
    return out


def descriptor_matrix(features: list[tuple[Keypoint, Descriptor]]) -> np.ndarray:
    if not features:
        return np.zeros((0, 128))
    return np.stack([d.vector for _, d in features])


# -- dump format: one JSON object per line -------------------------------------

def dump_descriptors(features: list[tuple[Keypoint, Descriptor]]) -> str:
    lines = []
    for kp, d in features:
        lines.append(json.dumps({
            "x": kp.x, "y": kp.y, "sigma": kp.sigma, "theta": kp.theta,
            "octave": kp.octave, "level": kp.level,
            "descriptor": [float(v) for v in d.vector],
        }))
    return "".join(line + "\n" for line in lines)


def load_descriptors(text: str) -> list[tuple[Keypoint, Descriptor]]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        vec = np.array(rec["descriptor"], dtype=np.float64)
        if vec.shape != (128,):
            raise ValueError(f"descriptor has {vec.size} entries, expected 128")
        octave, level = int(rec.get("octave", 0)), int(rec.get("level", 0))
        scale = 2 ** octave
        kp = Keypoint(x=float(rec["x"]), y=float(rec["y"]), octave=octave, level=level,
                      sigma=float(rec["sigma"]), theta=float(rec["theta"]),
                      row=int(round(rec["y"] / scale)), col=int(round(rec["x"] / scale)))
        out.append((kp, Descriptor(vec, kp)))
    return out
