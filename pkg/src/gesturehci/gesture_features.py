"""Hand-shape features: convex-hull angles/distances and Fourier descriptors.

Coordinates handed to the geometry functions are ``(x, y)`` with y pointing
*up*: a raster pixel at (row, col) in an ``H``-row image maps to
``(col, H - 1 - row)``. In that frame counter-clockwise means positive
shoelace area and angles read the way they look on screen.
"""
from __future__ import annotations

import csv
import functools
import math
import os

import numpy as np

from .segmentation import label

SIZE = 100
N_FOURIER = 11
N_HULL = 6
DIM = N_HULL + N_FOURIER

# Moore neighbourhood in (drow, dcol), clockwise on screen starting west.
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))


class DegenerateContour(ValueError):
    pass


def normalize_gesture(mask, bbox=None) -> np.ndarray:
    """Crop to the tight box around the foreground and rescale to 100x100.

    ``bbox`` (x, y, w, h) restricts the search region. Rescaling is
    nearest-neighbour and non-uniform.
    """
    m = np.asarray(mask, dtype=bool)
    if bbox is not None:
        x, y, w, h = bbox
        m = m[max(y, 0) : y + h, max(x, 0) : x + w]
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    if rows.size == 0:
        raise ValueError("no foreground pixels inside the box")
    crop = m[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    h, w = crop.shape
    ri = (np.arange(SIZE) * h) // SIZE
    ci = (np.arange(SIZE) * w) // SIZE
    return crop[ri[:, None], ci[None, :]]


def largest_component(mask) -> np.ndarray:
    labels, count = label(mask, 8)
    if count <= 1:
        return np.asarray(mask, dtype=bool)
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    areas[0] = 0
    return labels == int(np.argmax(areas))


def trace_contour(mask) -> np.ndarray:
    """Moore-neighbour boundary of the largest 8-connected component.

    Starts at the topmost-leftmost pixel and walks counter-clockwise
    (y-up frame). Returns an ``(n, 2)`` int array of (x, y) points.
    Tracing stops when the start pixel is re-entered from the initial
    backtrack direction (Jacob's criterion).
    """
    m = largest_component(mask)
    if not m.any():
        raise ValueError("empty mask")
    H, W = m.shape
    r0 = int(np.flatnonzero(m.any(axis=1))[0])
    c0 = int(np.flatnonzero(m[r0])[0])

    def fg(r, c):
        return 0 <= r < H and 0 <= c < W and m[r, c]

    pts = [(r0, c0)]
    # the pixel to the west of the start is background by construction
    cur = (r0, c0)
    back = 0  # index into _MOORE of the backtrack neighbour
    start_state = None
    while True:
        found = -1
        for k in range(1, 9):
            d = (back + k) % 8
            dr, dc = _MOORE[d]
            if fg(cur[0] + dr, cur[1] + dc):
                found = d
                break
        if found < 0:
            break  # isolated pixel
        prev_d = (found - 1) % 8
        pr, pc = _MOORE[prev_d]
        nxt = (cur[0] + _MOORE[found][0], cur[1] + _MOORE[found][1])
        # backtrack = previous (background) neighbour, expressed relative to nxt
        bpos = (cur[0] + pr - nxt[0], cur[1] + pc - nxt[1])
        state = (cur, found)
        if start_state is None:
            start_state = state
        elif state == start_state:
            break
        cur = nxt
        back = _MOORE.index(bpos)
        pts.append(cur)
    if len(pts) > 1:
        pts.pop()  # last point repeats the start
    # the walk above is clockwise on screen; reverse it, keeping the start first
    pts = [pts[0]] + pts[:0:-1]
    return np.array([(c, H - 1 - r) for r, c in pts], dtype=np.int64)


def signed_area(points) -> float:
    p = np.asarray(points, dtype=np.float64)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Graham scan. Strict hull (collinear points dropped), counter-clockwise.

    The pivot is the lowest point (then leftmost); the angular sort breaks
    ties by distance from the pivot.
    """
    pts = sorted({(p[0], p[1]) for p in np.asarray(points).tolist()})
    if not pts:
        raise ValueError("convex_hull needs at least one point")
    if len(pts) <= 2:
        return np.array(pts)
    pivot = min(pts, key=lambda p: (p[1], p[0]))
    rest = [p for p in pts if p != pivot]

    def cmp(a, b):
        c = _cross(pivot, a, b)
        if c > 0:
            return -1
        if c < 0:
            return 1
        da = (a[0] - pivot[0]) ** 2 + (a[1] - pivot[1]) ** 2
        db = (b[0] - pivot[0]) ** 2 + (b[1] - pivot[1]) ** 2
        return -1 if da < db else (1 if da > db else 0)

    rest.sort(key=functools.cmp_to_key(cmp))
    stack = [pivot]
    for p in rest:
        while len(stack) >= 2 and _cross(stack[-2], stack[-1], p) <= 0:
            stack.pop()
        stack.append(p)
    return np.array(stack)


def hull_features(hull) -> np.ndarray:
    """Three segment angles (degrees, [0, 180)) then three segment lengths.

    The four hull vertices farthest from the vertex centroid are taken in
    descending-distance order (ties keep counter-clockwise order) and the
    segments b1-b2, b2-b3, b3-b4 are measured. Hulls with fewer than four
    vertices repeat their last vertex.
    """
    h = np.asarray(hull, dtype=np.float64).reshape(-1, 2)
    if len(h) == 0:
        raise ValueError("empty hull")
    centre = h.mean(axis=0)
    dist = np.hypot(h[:, 0] - centre[0], h[:, 1] - centre[1])
    order = sorted(range(len(h)), key=lambda i: (-dist[i], i))[:4]
    sel = [h[i] for i in order]
    while len(sel) < 4:
        sel.append(sel[-1])
    angles, lengths = [], []
    for a, b in zip(sel[:-1], sel[1:]):
        dx, dy = b[0] - a[0], b[1] - a[1]
        ang = math.degrees(math.atan2(dy, dx)) % 180.0
        if ang >= 180.0:
            ang = 0.0
        angles.append(ang)
        lengths.append(math.hypot(dx, dy))
    return np.array(angles + lengths)


def fourier_coefficients(contour) -> np.ndarray:
    """``z(k) = 1/n * sum_l p(l) exp(-j 2 pi l k / n)`` with ``p = x + j y``."""
    c = np.asarray(contour, dtype=np.float64)
    p = c[:, 0] + 1j * c[:, 1]
    return np.fft.fft(p) / len(p)


def fourier_descriptors(contour, m: int = N_FOURIER) -> np.ndarray:
    """``|z(k)| / |z(1)|`` for k = 1..m. The first entry is always 1."""
    n = len(contour)
    if n <= m:
        raise DegenerateContour(f"contour has {n} points, need more than {m}")
    z = fourier_coefficients(contour)
    mag = np.abs(z[1 : m + 1])
    if mag[0] < 1e-12:
        raise DegenerateContour("|z(1)| vanishes")
    return mag / mag[0]


def gesture_vector(gesture) -> np.ndarray:
    """17 features: hull block (6) followed by Fourier block (11)."""
    g = np.asarray(gesture, dtype=bool)
    contour = trace_contour(g)
    hull = convex_hull(contour)
    return np.concatenate([hull_features(hull), fourier_descriptors(contour, N_FOURIER)])


def mask_to_vector(mask, bbox=None) -> np.ndarray:
    return gesture_vector(normalize_gesture(mask, bbox))


FEATURE_NAMES = (
    [f"angle{i}" for i in range(1, 4)]
    + [f"dist{i}" for i in range(1, 4)]
    + [f"fd{i}" for i in range(1, N_FOURIER + 1)]
)


def write_features_csv(path: str | os.PathLike, X, y) -> None:
    """One row per sample: 17 feature columns then the class label (1..5)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_NAMES + ["label"])
        for row, lab in zip(np.asarray(X), y):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def read_features_csv(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][-1] != "label":
        raise ValueError(f"{path}: not a feature CSV")
    body = rows[1:]
    X = np.array([[float(v) for v in r[:-1]] for r in body]).reshape(len(body), -1)
    y = np.array([int(r[-1]) for r in body], dtype=np.int64)
    if X.shape[1] != DIM:
        raise ValueError(f"{path}: expected {DIM} feature columns, got {X.shape[1]}")
    return X, y
