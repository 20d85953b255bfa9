import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gesturehci.imaging import (
    PnmError,
    PnmTruncated,
    PnmUnsupportedDepth,
    decode_pnm,
    encode_pnm,
    integral,
    read_pnm,
    rect_sum,
    resize_area,
    rgb_to_ycbcr,
    to_gray,
    write_pnm,
    ycbcr_to_rgb,
)
from oracles import rect_sum_naive, ycbcr_pixel

frames = hnp.arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12), st.just(3)))
grays = hnp.arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)))


def px(rgb):
    return np.array([[rgb]], dtype=np.uint8)


def test_black_and_white_have_neutral_chroma():
    assert rgb_to_ycbcr(px((0, 0, 0)))[0, 0].tolist() == [0, 128, 128]
    assert rgb_to_ycbcr(px((255, 255, 255)))[0, 0].tolist() == [255, 128, 128]


def test_pure_red_hand_evaluated():
    # Y = 76.245, Cb = 84.972, Cr = 255.5 (clipped)
    assert rgb_to_ycbcr(px((255, 0, 0)))[0, 0].tolist() == [76, 85, 255]


@given(st.tuples(*[st.integers(0, 255)] * 3))
def test_conversion_matches_per_pixel_formula(rgb):
    assert tuple(rgb_to_ycbcr(px(rgb))[0, 0]) == ycbcr_pixel(*rgb)


def test_inverse_within_one_level_on_every_colour_cube_sample():
    v = np.arange(0, 256, 5, dtype=np.uint8)
    rgb = np.stack(np.meshgrid(v, v, v, indexing="ij"), axis=-1).reshape(-1, 1, 3)
    back = ycbcr_to_rgb(rgb_to_ycbcr(rgb)).astype(int)
    assert np.abs(back - rgb.astype(int)).max() <= 1


def test_conversion_rejects_non_frames():
    with pytest.raises(ValueError):
        rgb_to_ycbcr(np.zeros((4, 4), np.uint8))
    with pytest.raises(ValueError):
        rgb_to_ycbcr(np.zeros((4, 4, 3), np.float64))


def test_to_gray_is_luma_and_passes_gray_through():
    f = np.random.default_rng(0).integers(0, 256, (5, 6, 3)).astype(np.uint8)
    assert np.array_equal(to_gray(f), rgb_to_ycbcr(f)[..., 0])
    g = f[..., 0]
    assert to_gray(g) is g


def test_integral_small_cases():
    assert rect_sum(integral(np.ones((2, 2), np.uint8)), 0, 0, 2, 2) == 4
    assert rect_sum(integral(np.array([[7]], np.uint8)), 0, 0, 1, 1) == 7


def test_integral_all_225_rectangles_of_5x5():
    img = np.random.default_rng(3).integers(0, 256, (5, 5))
    ii = integral(img)
    n = 0
    for y in range(5):
        for x in range(5):
            for h in range(1, 6 - y):
                for w in range(1, 6 - x):
                    assert rect_sum(ii, x, y, w, h) == rect_sum_naive(img, x, y, w, h)
                    n += 1
    assert n == 225


@given(hnp.arrays(np.uint8, st.tuples(st.integers(1, 64), st.integers(1, 64))), st.data())
def test_integral_random_rectangles(img, data):
    H, W = img.shape
    ii = integral(img)
    assert ii.dtype == np.int64
    for _ in range(10):
        x = data.draw(st.integers(0, W - 1))
        y = data.draw(st.integers(0, H - 1))
        w = data.draw(st.integers(1, W - x))
        h = data.draw(st.integers(1, H - y))
        assert rect_sum(ii, x, y, w, h) == int(img[y : y + h, x : x + w].astype(np.int64).sum())


def test_integral_does_not_overflow_at_full_white():
    img = np.full((64, 64), 255, np.uint8)
    assert rect_sum(integral(img), 0, 0, 64, 64) == 255 * 64 * 64


def test_integral_rejects_empty():
    with pytest.raises(ValueError):
        integral(np.zeros((0, 3)))


def test_resize_area_averages_blocks():
    img = np.arange(16, dtype=float).reshape(4, 4)
    out = resize_area(img, 2, 2)
    assert out.tolist() == [[2.5, 4.5], [10.5, 12.5]]


def test_p6_header_example():
    data = b"P6\n2 2\n255\n" + bytes(range(12))
    f = decode_pnm(data)
    assert f.shape == (2, 2, 3)
    assert f[1, 1].tolist() == [9, 10, 11]


def test_header_comments_are_skipped():
    f = decode_pnm(b"P5\n# made by hand\n3 1 # width height\n255\n" + b"\x01\x02\x03")
    assert f.tolist() == [[1, 2, 3]]


def test_maxval_65535_is_rejected():
    with pytest.raises(PnmUnsupportedDepth):
        decode_pnm(b"P5\n1 1\n65535\n\x00\x00")


@pytest.mark.parametrize(
    "data",
    [b"", b"P3\n1 1\n255\n0 0 0", b"P5\n1\n", b"P5\nx 1\n255\n\x00", b"P5\n0 1\n255\n"],
)
def test_malformed_headers(data):
    with pytest.raises(PnmError):
        decode_pnm(data)


def test_truncated_payload_reports_sizes():
    with pytest.raises(PnmTruncated) as e:
        decode_pnm(b"P6\n2 2\n255\n" + bytes(5))
    assert (e.value.expected, e.value.got) == (12, 5)


@given(frames)
def test_p6_round_trip_is_byte_identical(f):
    data = encode_pnm(f)
    assert np.array_equal(decode_pnm(data), f)
    assert encode_pnm(decode_pnm(data)) == data


@given(grays)
def test_p5_round_trip_is_byte_identical(g):
    data = encode_pnm(g)
    assert data[:2] == b"P5"
    assert np.array_equal(decode_pnm(data), g)
    assert encode_pnm(decode_pnm(data)) == data


def test_file_round_trip(tmp_path):
    f = np.random.default_rng(1).integers(0, 256, (7, 9, 3)).astype(np.uint8)
    write_pnm(f, tmp_path / "a.ppm")
    assert np.array_equal(read_pnm(tmp_path / "a.ppm"), f)


def test_bool_masks_are_written_as_0_255():
    m = np.array([[True, False]])
    assert decode_pnm(encode_pnm(m)).tolist() == [[255, 0]]
