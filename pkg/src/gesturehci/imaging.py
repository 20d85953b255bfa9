"""Raster helpers: colour conversion, integral images and PNM I/O.

Frames are ``(H, W, 3)`` uint8 arrays, grayscale rasters ``(H, W)`` uint8 and
masks ``(H, W)`` bool arrays. Nothing here mutates its inputs.

Colour conversion is full-range BT.601 (the JPEG/JFIF matrix)::

    Y  =       0.299    R + 0.587    G + 0.114    B
    Cb = 128 - 0.168736 R - 0.331264 G + 0.5      B
    Cr = 128 + 0.5      R - 0.418688 G - 0.081312 B

Results are rounded half-up (``floor(v + 0.5)``) and clipped to [0, 255]. The
forward transform runs in exact integer arithmetic on the coefficients scaled
by 10^6, so ties such as Cr = 80.5 always round the same way.
"""
from __future__ import annotations

import os

import numpy as np

_FWD = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_OFFSET = np.array([0.0, 128.0, 128.0])
_SCALE = 1_000_000
_FWD_INT = np.rint(_FWD * _SCALE).astype(np.int64)
_OFFSET_INT = (_OFFSET * _SCALE).astype(np.int64) + _SCALE // 2


class PnmError(ValueError):
    """Malformed PNM header. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class PnmUnsupportedDepth(PnmError):
    pass


class PnmTruncated(ValueError):
    """The header parsed but the pixel payload is short."""

    def __init__(self, expected: int, got: int):
        super().__init__(f"truncated PNM payload: expected {expected} bytes, got {got}")
        self.expected = expected
        self.got = got


def as_frame(frame) -> np.ndarray:
    arr = np.asarray(frame)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected an (H, W, 3) frame, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {arr.dtype}")
    return arr


def _round_half_up(v: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def rgb_to_ycbcr(frame) -> np.ndarray:
    """Full-range YCbCr planes, shape ``(H, W, 3)`` uint8 ordered (Y, Cb, Cr)."""
    rgb = as_frame(frame).astype(np.int64)
    v = (rgb @ _FWD_INT.T + _OFFSET_INT) // _SCALE
    return np.clip(v, 0, 255).astype(np.uint8)


def ycbcr_to_rgb(ycc) -> np.ndarray:
    """Inverse of :func:`rgb_to_ycbcr`; reproduces RGB within +-1 per channel."""
    v = np.asarray(ycc, dtype=np.float64)
    y, cb, cr = v[..., 0], v[..., 1] - 128.0, v[..., 2] - 128.0
    rgb = np.stack(
        [
            y + 1.402 * cr,
            y - 0.344136 * cb - 0.714136 * cr,
            y + 1.772 * cb,
        ],
        axis=-1,
    )
    return _round_half_up(rgb)


def to_gray(frame) -> np.ndarray:
    """Luma plane of a frame (grayscale rasters pass through)."""
    arr = np.asarray(frame)
    if arr.ndim == 2:
        return arr
    return rgb_to_ycbcr(arr)[..., 0]


def integral(image) -> np.ndarray:
    """Summed-area table of shape ``(H+1, W+1)`` with a zero first row/column.

    ``ii[r, c]`` is the sum of ``image[:r, :c]``.
    """
    img = np.asarray(image)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("integral() needs a non-empty 2-D raster")
    ii = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(img, axis=0, dtype=np.int64), axis=1, out=ii[1:, 1:])
    return ii


def rect_sum(ii: np.ndarray, x: int, y: int, w: int, h: int) -> int:
    """Sum of the ``w x h`` rectangle with top-left corner (x, y)."""
    return int(ii[y + h, x + w] - ii[y, x + w] - ii[y + h, x] + ii[y, x])


def resize_nearest(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resample: output (i, j) takes input (i*h//out_h, j*w//out_w)."""
    h, w = img.shape[:2]
    rows = (np.arange(out_h) * h) // out_h
    cols = (np.arange(out_w) * w) // out_w
    return img[rows[:, None], cols[None, :]]


def resize_area(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Box-filter downsample to ``(out_h, out_w)`` as float64.

    Each output cell averages the input pixels whose centres fall inside it;
    cells that catch no centre (upsampling) fall back to nearest neighbour.
    """
    src = np.asarray(img, dtype=np.float64)
    h, w = src.shape
    ri = (np.arange(h) * out_h) // h
    ci = (np.arange(w) * out_w) // w
    acc = np.zeros((out_h, out_w))
    cnt = np.zeros((out_h, out_w))
    np.add.at(acc, (ri[:, None], ci[None, :]), src)
    np.add.at(cnt, (ri[:, None], ci[None, :]), 1.0)
    empty = cnt == 0
    if empty.any():
        near = resize_nearest(src, out_h, out_w)
        acc[empty] = near[empty]
        cnt[empty] = 1.0
    return acc / cnt


# ---------------------------------------------------------------------------
# PNM
# ---------------------------------------------------------------------------


def _header_tokens(data: bytes, count: int) -> tuple[list[tuple[bytes, int]], int]:
    """Read ``count`` whitespace-separated header tokens (``#`` comments allowed).

    Returns the tokens with their byte offsets and the offset of the first
    payload byte (one whitespace character after the last token).
    """
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i >= n:
            raise PnmError("unexpected end of header", i)
        if data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        tokens.append((data[start:i], start))
    if i >= n or not data[i : i + 1].isspace():
        raise PnmError("missing whitespace after header", i)
    return tokens, i + 1


def decode_pnm(data: bytes) -> np.ndarray:
    """Decode P5 (grayscale) or P6 (RGB) bytes with maxval 255."""
    if len(data) < 2:
        raise PnmError("file too short for a PNM magic number", 0)
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"unsupported magic {magic!r}, expected P5 or P6", 0)
    tokens, payload_at = _header_tokens(data, 4)
    values = []
    for tok, off in tokens[1:]:
        if not tok.isdigit():
            raise PnmError(f"expected an unsigned integer, got {tok!r}", off)
        values.append(int(tok))
    width, height, maxval = values
    if width < 1 or height < 1:
        raise PnmError("width and height must be positive", tokens[1][1])
    if maxval != 255:
        raise PnmUnsupportedDepth(f"unsupported maxval {maxval}, only 255 is handled", tokens[3][1])
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    payload = data[payload_at : payload_at + expected]
    if len(payload) < expected:
        raise PnmTruncated(expected, len(payload))
    arr = np.frombuffer(payload, dtype=np.uint8).copy()
    if channels == 3:
        return arr.reshape(height, width, 3)
    return arr.reshape(height, width)


def encode_pnm(image) -> bytes:
    img = np.asarray(image)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    if img.dtype != np.uint8:
        raise ValueError(f"PNM output needs uint8 pixels, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot encode shape {img.shape} as PNM")
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read())


def write_pnm(image, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pnm(image))
