"""Frames, netpbm I/O and the colour-space conversions used by every phase.

Samples are double precision in [0, 1]; 8-bit values only appear at the
file boundary.  Hue is stored as degrees / 360.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

COLORSPACES = ("RGB", "HSI", "GRAY")


class DecodeError(ValueError):
    """Malformed or unsupported netpbm data."""


class ColorspaceError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    """One image as planar channels, shape ``(channels, height, width)``."""

    planes: np.ndarray
    colorspace: str = "RGB"

    def __post_init__(self):
        if self.colorspace not in COLORSPACES:
            raise ColorspaceError(f"unknown colorspace {self.colorspace!r}")
        planes = np.asarray(self.planes, dtype=np.float64)
        if planes.ndim == 2:
            planes = planes[None]
        want = 1 if self.colorspace == "GRAY" else 3
        if planes.ndim != 3 or planes.shape[0] != want:
            raise DimensionError(f"{self.colorspace} frame needs {want} planes, got shape {planes.shape}")
        if planes.shape[1] * planes.shape[2] == 0:
            raise DimensionError("frame has no pixels")
        planes = planes.copy()
        planes.setflags(write=False)
        object.__setattr__(self, "planes", planes)

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1], self.planes.shape[2]

    def plane(self, i: int = 0) -> np.ndarray:
        return self.planes[i]

    @classmethod
    def gray(cls, image: np.ndarray) -> "Frame":
        return cls(np.asarray(image, dtype=np.float64)[None], "GRAY")

    @classmethod
    def from_hwc(cls, image: np.ndarray, colorspace: str = "RGB") -> "Frame":
        return cls(np.moveaxis(np.asarray(image, dtype=np.float64), -1, 0), colorspace)

    def to_hwc(self) -> np.ndarray:
        return np.moveaxis(self.planes, 0, -1)


def quantize(values: np.ndarray) -> np.ndarray:
    """Unit-interval samples to bytes, round half up."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


# -- netpbm ------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_header(data: bytes, magic: bytes) -> tuple[int, int, int]:
    """Return (width, height, offset of first pixel byte)."""
    if not data.startswith(magic):
        raise DecodeError(f"expected magic {magic.decode()!r} at byte offset 0")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise DecodeError(f"truncated header at byte offset {pos}")
        tok = m.group(1)
        if not tok.isdigit():
            raise DecodeError(f"non-numeric header field {tok[:16]!r} at byte offset {m.start(1)}")
        fields.append((int(tok), m.start(1)))
        pos = m.end(1)
    (width, woff), (height, hoff), (maxval, moff) = fields
    if width <= 0 or height <= 0:
        raise DecodeError(f"non-positive dimensions at byte offset {woff if width <= 0 else hoff}")
    if maxval != 255:
        raise DecodeError(f"unsupported maxval {maxval} at byte offset {moff}")
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise DecodeError(f"missing whitespace after maxval at byte offset {pos}")
    return width, height, pos + 1


def _decode_raster(data: bytes, magic: bytes, channels: int) -> np.ndarray:
    width, height, start = _read_header(data, magic)
    need = width * height * channels
    have = len(data) - start
    if have < need:
        raise DecodeError(f"truncated pixel data: expected {need} bytes from byte offset {start}, got {have}")
    raw = np.frombuffer(data, dtype=np.uint8, count=need, offset=start)
    return raw.reshape(height, width, channels)


def decode_ppm(data: bytes) -> Frame:
    """Decode a binary P6 image with maxval 255 into an RGB frame."""
    raster = _decode_raster(data, b"P6", 3)
    return Frame.from_hwc(raster / 255.0, "RGB")


def encode_ppm(frame: Frame) -> bytes:
    if frame.colorspace != "RGB":
        raise ColorspaceError(f"PPM needs an RGB frame, got {frame.colorspace}")
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + quantize(frame.to_hwc()).tobytes()


def decode_pgm(data: bytes) -> Frame:
    raster = _decode_raster(data, b"P5", 1)
    return Frame.gray(raster[..., 0] / 255.0)


def encode_pgm(frame: Frame) -> bytes:
    if frame.colorspace != "GRAY":
        raise ColorspaceError(f"PGM needs a GRAY frame, got {frame.colorspace}")
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + quantize(frame.plane(0)).tobytes()


def read_image(path: str | Path) -> Frame:
    data = Path(path).read_bytes()
    if data.startswith(b"P5"):
        return decode_pgm(data)
    return decode_ppm(data)


def write_image(path: str | Path, frame: Frame) -> None:
    """Write RGB frames as PPM and GRAY frames as PGM."""
    data = encode_pgm(frame) if frame.colorspace == "GRAY" else encode_ppm(frame)
    Path(path).write_bytes(data)


# -- colour ------------------------------------------------------------------

def rgb_to_hsi(frame: Frame) -> Frame:
    """RGB to HSI with the B > G hue reflection; hue normalised to [0, 1)."""
    if frame.colorspace != "RGB":
        raise ColorspaceError(f"expected RGB, got {frame.colorspace}")
    r, g, b = frame.planes
    total = r + g + b
    num = 0.5 * ((r - g) + (r - b))
    den = np.sqrt((r - g) ** 2 + (r - b) * (g - b))
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
        theta = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
        hue = np.where(b > g, 360.0 - theta, theta)
        hue = np.where(den > 0, hue, 0.0) / 360.0
        hue = np.where(hue >= 1.0, 0.0, hue)
        sat = np.where(total > 0, 1.0 - 3.0 * np.minimum(np.minimum(r, g), b) / np.where(total > 0, total, 1.0), 0.0)
    sat = np.clip(sat, 0.0, 1.0)
    return Frame(np.stack([hue, sat, total / 3.0]), "HSI")


def hsi_to_rgb(frame: Frame) -> Frame:
    """Inverse of :func:`rgb_to_hsi` (sector formulas), clipped to [0, 1]."""
    if frame.colorspace != "HSI":
        raise ColorspaceError(f"expected HSI, got {frame.colorspace}")
    h, s, i = frame.planes
    deg = (h % 1.0) * 360.0
    sector = np.minimum((deg // 120.0).astype(int), 2)
    local = np.radians(deg - 120.0 * sector)
    low = i * (1.0 - s)
    high = i * (1.0 + s * np.cos(local) / np.cos(np.radians(60.0) - local))
    mid = 3.0 * i - (low + high)
    # sector 0: (high, mid, low) as (R, G, B); later sectors rotate the roles
    rgb = np.empty((3,) + h.shape)
    for k in range(3):
        sel = sector == k
        rgb[k][sel] = high[sel]
        rgb[(k + 1) % 3][sel] = mid[sel]
        rgb[(k + 2) % 3][sel] = low[sel]
    return Frame(np.clip(rgb, 0.0, 1.0), "RGB")


LUMA = np.array([0.299, 0.587, 0.114])


def luminance(frame: Frame) -> Frame:
    if frame.colorspace != "RGB":
        raise ColorspaceError(f"expected RGB, got {frame.colorspace}")
    return Frame.gray(np.tensordot(LUMA, frame.planes, axes=1))


# -- sequences ---------------------------------------------------------------

@dataclass
class FrameSequence:
    """Lazily decoded, lexicographically ordered frame files."""

    paths: list[Path]
    fps: float = 30.0
    _shape: tuple[int, int] | None = field(default=None, repr=False)
    _cache: dict[int, Frame] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, index: int) -> Frame:
        if index < 0:
            index += len(self.paths)
        if index in self._cache:
            return self._cache[index]
        path = self.paths[index]
        frame = read_image(path)
        if self._shape is None:
            self._shape = frame.shape
        elif frame.shape != self._shape:
            raise DimensionError(
                f"{path.name}: {frame.width}x{frame.height} differs from sequence size "
                f"{self._shape[1]}x{self._shape[0]}"
            )
        self._cache[index] = frame
        return frame

    def __iter__(self) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self[i]

    def frames(self) -> list[Frame]:
        return list(self)

    def release(self) -> None:
        self._cache.clear()


class InMemorySequence(list):
    """A plain list of frames exposing the FrameSequence surface."""

    fps = 30.0

    def frames(self) -> list[Frame]:
        return list(self)


def load_sequence(directory: str | Path, pattern: str = "frame_*.ppm", fps: float = 30.0) -> FrameSequence:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    paths = sorted((p for p in directory.glob(pattern) if p.is_file()), key=lambda p: p.name.encode())
    if not paths:
        raise FileNotFoundError(f"no frames matched {pattern!r} in {directory}")
    return FrameSequence(paths, fps=fps)


def check_same_shape(frames: Sequence[Frame]) -> tuple[int, int]:
    shape = frames[0].shape
    for k, f in enumerate(frames):
        if f.shape != shape:
            raise DimensionError(f"frame {k} is {f.shape}, expected {shape}")
    return shape
