"""Per-pixel Gaussian background model over H, S, I and windowed
correlation-distance segmentation."""
from __future__ import annotations

import base64
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import DimensionError, Frame, check_same_shape, hsi_to_rgb

CHANNELS = {"H": 0, "S": 1, "I": 2}
# centred window norms below this count as zero (constant patch)
FLAT_NORM = 1e-9


@dataclass(frozen=True)
class BackgroundModel:
    mu: np.ndarray  # (3, H, W)
    sigma: np.ndarray  # (3, H, W)
    n_frames: int
    eps: float = 1e-3
    rho: float = 0.05

    @property
    def shape(self) -> tuple[int, int]:
        return self.mu.shape[1], self.mu.shape[2]

    def background_image(self) -> Frame:
        """The mean plane rendered back to RGB."""
        return hsi_to_rgb(Frame(self.mu, "HSI"))

    def to_dict(self) -> dict:
        return {
            "height": self.shape[0],
            "width": self.shape[1],
            "n_frames": self.n_frames,
            "eps": self.eps,
            "rho": self.rho,
            "mu": encode_array(self.mu),
            "sigma": encode_array(self.sigma),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackgroundModel":
        shape = (3, int(d["height"]), int(d["width"]))
        return cls(
            mu=decode_array(d["mu"], shape),
            sigma=decode_array(d["sigma"], shape),
            n_frames=int(d["n_frames"]),
            eps=float(d["eps"]),
            rho=float(d["rho"]),
        )


def encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def decode_array(s: str, shape) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(s), dtype="<f8")
    return raw.reshape(shape).astype(np.float64)


def fit_background(frames: Sequence[Frame], eps: float = 1e-3, rho: float = 0.05) -> BackgroundModel:
    if len(frames) < 2:
        raise ValueError(f"need at least 2 frames to fit a background, got {len(frames)}")
    if eps <= 0:
        raise ValueError("sigma floor must be positive")
    check_same_shape(frames)
    stack = np.stack([f.planes for f in frames])
    mu = stack.mean(axis=0)
    sigma = np.maximum(stack.std(axis=0), eps)
    return BackgroundModel(mu, sigma, len(frames), eps, rho)


def pixel_probability(model: BackgroundModel, channel: int, x: float, pos: tuple[int, int]) -> float:
    """Gaussian density with the exponent written as -(x - mu)^2 / sigma^2."""
    mu = model.mu[channel][pos]
    sigma = model.sigma[channel][pos]
    return float(math.exp(-((x - mu) ** 2) / sigma ** 2) / (math.sqrt(2.0 * math.pi) * sigma))


def correlation_distance(x, y, flat_rms: float = 0.0) -> float:
    """One minus the Pearson correlation of two equal-size sample windows.

    A window whose centred RMS is at most ``flat_rms`` (or numerically
    zero) counts as constant: two constant windows are at distance 0, a
    constant and a textured one at distance 2.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"window sizes differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("windows need at least 2 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    nx, ny = np.linalg.norm(xc), np.linalg.norm(yc)
    floor = max(FLAT_NORM, flat_rms * np.sqrt(x.size))
    if nx <= floor or ny <= floor:
        return 0.0 if (nx <= floor and ny <= floor) else 2.0
    return float(np.clip(1.0 - np.dot(xc, yc) / (nx * ny), 0.0, 2.0))


def _windows(plane: np.ndarray, window: int) -> np.ndarray:
    r = window // 2
    padded = np.pad(plane, r, mode="edge")
    return sliding_window_view(padded, (window, window)).reshape(plane.shape + (window * window,))


def correlation_map(current: np.ndarray, reference: np.ndarray, window: int = 5,
                    flat_rms: float = 0.0) -> np.ndarray:
    """correlation_distance evaluated on the window around every pixel."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be an odd positive integer")
    if current.shape != reference.shape:
        raise DimensionError(f"plane sizes differ: {current.shape} vs {reference.shape}")
    xw = _windows(current, window)
    yw = _windows(reference, window)
    xc = xw - xw.mean(axis=-1, keepdims=True)
    yc = yw - yw.mean(axis=-1, keepdims=True)
    nx = np.sqrt(np.einsum("...i,...i->...", xc, xc))
    ny = np.sqrt(np.einsum("...i,...i->...", yc, yc))
    dot = np.einsum("...i,...i->...", xc, yc)
    floor = max(FLAT_NORM, flat_rms * window)
    fx, fy = nx <= floor, ny <= floor
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = 1.0 - dot / (nx * ny)
    dist = np.clip(dist, 0.0, 2.0)
    dist = np.where(fx | fy, np.where(fx & fy, 0.0, 2.0), dist)
    return dist


def segment_frame(model: BackgroundModel, frame: Frame, window: int = 5, thr: float = 0.2,
                  channel: str = "I", flat_rms: float = 0.0) -> np.ndarray:
    """Foreground mask (uint8, 1 = foreground) for an HSI frame."""
    if frame.shape != model.shape:
        raise DimensionError(f"frame {frame.shape} does not match model {model.shape}")
    c = CHANNELS[channel]
    dist = correlation_map(frame.plane(c), model.mu[c], window, flat_rms)
    return (~(dist < thr)).astype(np.uint8)


def update_background(model: BackgroundModel, frame: Frame, mask: np.ndarray) -> BackgroundModel:
    """Running-Gaussian update restricted to background (mask == 0) pixels."""
    if frame.shape != model.shape or mask.shape != model.shape:
        raise DimensionError("frame, mask and model sizes must match")
    rho = model.rho
    x = frame.planes
    bg = (mask == 0)[None]
    mu_new = (1.0 - rho) * model.mu + rho * x
    # deviation from the updated mean, so rho = 1 collapses sigma to the floor
    var_new = np.maximum(model.eps ** 2, (1.0 - rho) * model.sigma ** 2 + rho * (x - mu_new) ** 2)
    mu = np.where(bg, mu_new, model.mu)
    sigma = np.where(bg, np.sqrt(var_new), model.sigma)
    return replace(model, mu=mu, sigma=sigma)


def masked_frame(frame: Frame, mask: np.ndarray) -> Frame:
    """Keep only foreground pixels of an RGB frame."""
    return Frame(frame.planes * mask[None].astype(np.float64), frame.colorspace)


def mask_frame(mask: np.ndarray) -> Frame:
    return Frame.gray(mask.astype(np.float64))
