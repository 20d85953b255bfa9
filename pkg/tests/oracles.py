"""Slow, obviously-correct reference implementations used by the tests."""
from __future__ import annotations

import fractions
import functools
import itertools
import math

import numpy as np


def ycbcr_pixel(r, g, b) -> tuple[int, int, int]:
    """Full-range BT.601 for one pixel in exact rationals, rounded half-up, clipped."""
    F = fractions.Fraction
    vals = (
        F("0.299") * r + F("0.587") * g + F("0.114") * b,
        128 - F("0.168736") * r - F("0.331264") * g + F("0.5") * b,
        128 + F("0.5") * r - F("0.418688") * g - F("0.081312") * b,
    )
    return tuple(min(255, max(0, math.floor(v + 0.5))) for v in vals)


def rect_sum_naive(img, x, y, w, h) -> int:
    total = 0
    for r in range(y, y + h):
        for c in range(x, x + w):
            total += int(img[r][c])
    return total


def flood_fill_labels(mask, eight: bool = True) -> np.ndarray:
    """Label by depth-first flood fill, starting components in raster order."""
    m = np.asarray(mask, dtype=bool)
    H, W = m.shape
    out = np.zeros((H, W), dtype=np.int64)
    nbrs = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    if not eight:
        nbrs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    k = 0
    for y in range(H):
        for x in range(W):
            if m[y, x] and out[y, x] == 0:
                k += 1
                out[y, x] = k
                stack = [(y, x)]
                while stack:
                    cy, cx = stack.pop()
                    for dy, dx in nbrs:
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < H and 0 <= nx < W and m[ny, nx] and out[ny, nx] == 0:
                            out[ny, nx] = k
                            stack.append((ny, nx))
    return out


def same_partition(a, b) -> bool:
    """True when two label images differ only by a renaming of labels."""
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    if not np.array_equal(a == 0, b == 0):
        return False
    fwd, bwd = {}, {}
    for u, v in zip(a.tolist(), b.tolist()):
        if fwd.setdefault(u, v) != v or bwd.setdefault(v, u) != u:
            return False
    return True


def disk(radius: int) -> list[tuple[int, int]]:
    r = radius
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dx * dx + dy * dy <= r * r]


def erode_naive(mask, radius, border=False) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    H, W = m.shape
    out = np.zeros_like(m)
    offs = disk(radius)
    for y in range(H):
        for x in range(W):
            ok = True
            for dy, dx in offs:
                yy, xx = y + dy, x + dx
                v = m[yy, xx] if 0 <= yy < H and 0 <= xx < W else border
                if not v:
                    ok = False
                    break
            out[y, x] = ok
    return out


def dilate_naive(mask, radius) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    H, W = m.shape
    out = np.zeros_like(m)
    for y, x in zip(*np.nonzero(m)):
        for dy, dx in disk(radius):
            yy, xx = y + dy, x + dx
            if 0 <= yy < H and 0 <= xx < W:
                out[yy, xx] = True
    return out


@functools.lru_cache(maxsize=None)
def _combos(n, r) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n), r)), dtype=np.int64).reshape(-1, r)


def hull_vertices_bruteforce(points) -> set[tuple[int, int]]:
    """Extreme points: a point is a vertex unless it lies strictly inside a
    triangle of other points or on a closed segment between two others."""
    pts = sorted({(int(p[0]), int(p[1])) for p in points})
    if len(pts) <= 2:
        return set(pts)
    P = np.array(pts, dtype=np.int64)
    n = len(P)
    pairs, tris = _combos(n - 1, 2), _combos(n - 1, 3)
    keep = set()
    for i in range(n):
        px, py = P[i]
        others = np.delete(P, i, axis=0)

        def cr(o, a):
            return (a[:, 0] - o[:, 0]) * (py - o[:, 1]) - (a[:, 1] - o[:, 1]) * (px - o[:, 0])

        A, B = others[pairs[:, 0]], others[pairs[:, 1]]
        on_seg = (
            (cr(A, B) == 0)
            & (np.minimum(A[:, 0], B[:, 0]) <= px) & (px <= np.maximum(A[:, 0], B[:, 0]))
            & (np.minimum(A[:, 1], B[:, 1]) <= py) & (py <= np.maximum(A[:, 1], B[:, 1]))
        )
        inside = bool(on_seg.any())
        if not inside and len(tris):
            A, B, C = others[tris[:, 0]], others[tris[:, 1]], others[tris[:, 2]]
            c1, c2, c3 = cr(A, B), cr(B, C), cr(C, A)
            inside = bool((((c1 > 0) & (c2 > 0) & (c3 > 0)) | ((c1 < 0) & (c2 < 0) & (c3 < 0))).any())
        if not inside:
            keep.add(pts[i])
    return keep


def naive_dft(contour) -> np.ndarray:
    c = np.asarray(contour, dtype=np.float64)
    n = len(c)
    p = [complex(x, y) for x, y in c]
    out = []
    for k in range(n):
        s = 0j
        for l_ in range(n):
            s += p[l_] * complex(math.cos(-2 * math.pi * l_ * k / n), math.sin(-2 * math.pi * l_ * k / n))
        out.append(s / n)
    return np.array(out)


def haar_bruteforce(img, feature, wx=0, wy=0, scale=1.0, base=24) -> float:
    """Weighted pixel sums over the feature's rectangles, divided by window area."""
    a = np.asarray(img, dtype=np.float64)
    size = int(base * scale)
    total = 0.0
    for rx, ry, rw, rh, wt in feature.rects(scale):
        total += wt * a[wy + ry : wy + ry + rh, wx + rx : wx + rx + rw].sum()
    return total / (size * size)


def best_stump_error(values, y, w) -> float:
    """Minimum weighted error of any threshold/polarity stump on one feature."""
    v = np.asarray(values, dtype=np.float64)
    cuts = np.concatenate([[v.min() - 1], (np.unique(v)[:-1] + np.unique(v)[1:]) / 2, [v.max() + 1]])
    best = np.inf
    for t in cuts:
        for pol in (1, -1):
            pred = np.where(pol * v < pol * t, 1, -1)
            best = min(best, float(np.sum(w[pred != y])))
    return best


class PlainMLP:
    """One-hidden-layer sigmoid network trained by per-sample backprop on
    ``0.5 * |y - O|^2``; biases are the last column of each weight matrix."""

    def __init__(self, W1, W2):
        self.W1 = np.array(W1, dtype=np.float64)
        self.W2 = np.array(W2, dtype=np.float64)

    @staticmethod
    def _sig(z):
        return 1.0 / (1.0 + np.exp(-z))

    def forward(self, x):
        xa = np.append(x, 1.0)
        v = self._sig(self.W1 @ xa)
        va = np.append(v, 1.0)
        return xa, v, va, self._sig(self.W2 @ va)

    def step(self, x, y, eta):
        xa, v, va, O = self.forward(x)
        d_out = (y - O) * O * (1 - O)
        d_hid = (self.W2[:, :-1].T @ d_out) * v * (1 - v)
        self.W2 += eta * np.outer(d_out, va)
        self.W1 += eta * np.outer(d_hid, xa)


def central_difference(f, arr, idx, h=1e-5) -> float:
    """d f() / d arr[idx] by central differences; ``arr`` is restored."""
    old = arr[idx]
    arr[idx] = old + h
    fp = f()
    arr[idx] = old - h
    fm = f()
    arr[idx] = old
    return (fp - fm) / (2 * h)


def rel_error(a, b, floor=1e-6) -> float:
    """Relative difference; entries smaller than ``floor`` compare absolutely
    (central differences cannot resolve them better than that)."""
    return abs(a - b) / max(abs(a), abs(b), floor)
