import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ritescene.imaging import (
    ColorspaceError,
    DecodeError,
    DimensionError,
    Frame,
    decode_pgm,
    decode_ppm,
    encode_pgm,
    encode_ppm,
    hsi_to_rgb,
    load_sequence,
    luminance,
    quantize,
    rgb_to_hsi,
    write_image,
)


def pixel(r, g, b):
    return Frame(np.array([r, g, b], dtype=float).reshape(3, 1, 1), "RGB")


def hsi_of(r, g, b):
    return rgb_to_hsi(pixel(r, g, b)).planes[:, 0, 0]


unit = st.floats(0.0, 1.0, allow_nan=False)
rgb_images = arrays(np.float64, st.tuples(st.just(3), st.integers(1, 6), st.integers(1, 6)), elements=unit)


# -- netpbm --

def test_decode_single_red_pixel():
    f = decode_ppm(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))
    assert f.planes[:, 0, 0].tolist() == [1.0, 0.0, 0.0]


def test_decode_endpoints():
    f = decode_ppm(b"P6\n2 1\n255\n" + bytes([0, 0, 0, 255, 255, 255]))
    assert f.shape == (1, 2)
    assert np.all(f.planes[:, 0, 0] == 0.0) and np.all(f.planes[:, 0, 1] == 1.0)


def test_header_comments_are_skipped():
    f = decode_ppm(b"P6\n# made by hand\n1 1\n# max\n255\n" + bytes([0, 51, 255]))
    assert f.planes[:, 0, 0].tolist() == [0.0, 0.2, 1.0]


def test_encode_black_pixel_bytes():
    assert encode_ppm(pixel(0, 0, 0)) == b"P6\n1 1\n255\n" + bytes([0, 0, 0])


def test_half_rounds_up():
    assert encode_ppm(pixel(0.5, 0, 0))[-3] == 128
    assert quantize(np.array([127.5 / 255, 127.49 / 255])).tolist() == [128, 127]


def test_random_ppm_round_trip_bit_exact():
    rng = np.random.default_rng(3)
    raw = b"P6\n8 8\n255\n" + rng.integers(0, 256, 8 * 8 * 3, dtype=np.uint8).tobytes()
    assert encode_ppm(decode_ppm(raw)) == raw


@given(rgb_images)
def test_decode_encode_is_quantization(planes):
    f = Frame(planes, "RGB")
    back = decode_ppm(encode_ppm(f))
    assert np.array_equal(quantize(back.planes), quantize(f.planes))
    assert np.array_equal(back.planes * 255, quantize(f.planes).astype(float))


def test_pgm_round_trip():
    g = Frame.gray(np.array([[0.0, 0.5], [1.0, 0.25]]))
    data = encode_pgm(g)
    assert data.startswith(b"P5\n2 2\n255\n")
    assert np.array_equal(decode_pgm(data).planes * 255, quantize(g.planes).astype(float))


@pytest.mark.parametrize(
    "data, offset",
    [
        (b"P3\n1 1\n255\n000", "offset 0"),
        (b"P6\n1 1\n65535\n" + bytes(6), "offset 7"),
        (b"P6\n2 2\n255\n" + bytes(5), "offset 11"),
        (b"P6\nx 1\n255\n", "offset 3"),
        (b"P6\n1", "offset"),
    ],
)
def test_decode_errors_name_offsets(data, offset):
    with pytest.raises(DecodeError, match=offset):
        decode_ppm(data)


def test_encode_rejects_non_rgb():
    with pytest.raises(ColorspaceError):
        encode_ppm(Frame.gray(np.zeros((1, 1))))
    with pytest.raises(ColorspaceError):
        encode_pgm(pixel(0, 0, 0))


def test_frame_validates_planes():
    with pytest.raises(DimensionError):
        Frame(np.zeros((2, 3, 3)), "RGB")
    with pytest.raises(DimensionError):
        Frame(np.zeros((3, 0, 3)), "RGB")
    with pytest.raises(ColorspaceError):
        Frame(np.zeros((3, 1, 1)), "YUV")


# -- colour --

def test_grey_is_achromatic():
    assert hsi_of(0.5, 0.5, 0.5).tolist() == [0.0, 0.0, 0.5]


def test_pure_red():
    h, s, i = hsi_of(1, 0, 0)
    assert h == 0.0 and s == pytest.approx(1.0) and i == pytest.approx(1 / 3)


def test_pure_green_from_formula():
    # theta = acos(0.5 * (-1 + 0) / sqrt(1 + 0)) = acos(-0.5) = 120 degrees
    theta = math.degrees(math.acos(-0.5))
    h, s, i = hsi_of(0, 1, 0)
    assert h == pytest.approx(theta / 360.0) and h == pytest.approx(1 / 3)
    assert s == pytest.approx(1.0) and i == pytest.approx(1 / 3)


def test_blue_uses_reflection():
    # without the B > G branch blue would land on 120 degrees like green
    assert hsi_of(0, 0, 1)[0] == pytest.approx(240 / 360)
    assert hsi_of(1, 0, 1)[0] == pytest.approx(300 / 360)


def test_black_has_zero_saturation():
    assert hsi_of(0, 0, 0).tolist() == [0.0, 0.0, 0.0]


@given(rgb_images)
def test_hsi_ranges(planes):
    h, s, i = rgb_to_hsi(Frame(planes, "RGB")).planes
    assert np.all((0 <= h) & (h < 1)) and np.all((0 <= s) & (s <= 1)) and np.all((0 <= i) & (i <= 1))


@given(unit)
def test_achromatic_saturation_zero(v):
    assert hsi_of(v, v, v)[1] == 0.0


@settings(max_examples=200)
@given(rgb_images)
def test_hsi_inverse(planes):
    f = Frame(planes, "RGB")
    assert np.allclose(hsi_to_rgb(rgb_to_hsi(f)).planes, planes, atol=1e-9)


def test_luminance_values():
    assert luminance(pixel(1, 1, 1)).planes[0, 0, 0] == pytest.approx(1.0)
    assert luminance(pixel(0, 1, 0)).planes[0, 0, 0] == pytest.approx(0.587)
    assert luminance(pixel(0.2, 0.4, 0.6)).planes[0, 0, 0] == pytest.approx(0.3630, abs=1e-12)


@given(rgb_images, unit)
def test_luminance_linear(planes, a):
    f = Frame(planes, "RGB")
    scaled = Frame(planes * a, "RGB")
    assert np.allclose(luminance(scaled).planes, a * luminance(f).planes, atol=1e-12)


@given(st.tuples(unit, unit, unit), st.integers(0, 2), st.floats(0.0, 1.0))
def test_luminance_monotone(p, channel, bump):
    q = list(p)
    q[channel] = min(1.0, q[channel] + bump)
    assert luminance(pixel(*q)).planes[0, 0, 0] >= luminance(pixel(*p)).planes[0, 0, 0] - 1e-15


# -- sequences --

def _write(path, h, w, value=0.0):
    write_image(path, Frame(np.full((3, h, w), value), "RGB"))


def test_sequence_in_index_order(tmp_path):
    for i in (3, 1, 2):
        _write(tmp_path / f"frame_{i:06d}.ppm", 2, 2, i / 10)
    seq = load_sequence(tmp_path)
    assert len(seq) == 3
    assert [p.name for p in seq.paths] == ["frame_000001.ppm", "frame_000002.ppm", "frame_000003.ppm"]
    assert [round(f.planes[0, 0, 0] * 10) for f in seq] == [1, 2, 3]


def test_empty_directory(tmp_path):
    with pytest.raises(FileNotFoundError, match="no frames matched"):
        load_sequence(tmp_path)


def test_dimension_mismatch_names_file(tmp_path):
    _write(tmp_path / "frame_000000.ppm", 64, 64)
    _write(tmp_path / "frame_000001.ppm", 32, 32)
    seq = load_sequence(tmp_path)
    seq[0]
    with pytest.raises(DimensionError, match="frame_000001.ppm"):
        seq[1]
