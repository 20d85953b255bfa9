"""Haar-feature cascade: features, AdaBoost training, sliding-window detection.

Feature kinds and their sign convention (``+`` rectangles add, ``-``
rectangles subtract, every value is divided by the window area):

``two_h``    left half ``+``, right half ``-``
``two_v``    top half ``+``, bottom half ``-``
``three_h``  outer thirds ``+``, middle third ``-2``
``three_v``  top/bottom thirds ``+``, middle third ``-2``
``four``     top-left and bottom-right ``+``, the other two quadrants ``-``

All kinds vanish on a uniform image. A weak classifier votes ``+1`` when
``polarity * value < polarity * threshold``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ._jit import njit, pick
from .imaging import integral, resize_area, to_gray

BASE = 24
KINDS = ("two_h", "two_v", "three_h", "three_v", "four")
_SPLIT = {"two_h": (2, 1), "two_v": (1, 2), "three_h": (3, 1), "three_v": (1, 3), "four": (2, 2)}
_MAX_RECTS = 4


class FaceNotVerified(RuntimeError):
    pass


@dataclass(frozen=True)
class HaarFeature:
    kind: str
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.kind not in _SPLIT:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        sx, sy = _SPLIT[self.kind]
        if self.w % sx or self.h % sy or self.w <= 0 or self.h <= 0:
            raise ValueError(f"{self.kind} feature size {self.w}x{self.h} does not split evenly")

    def rects(self, scale: float = 1.0) -> list[tuple[int, int, int, int, float]]:
        """Weighted rectangles ``(x, y, w, h, weight)`` at the given scale.

        Positions and cell sizes are floored after scaling, so a feature that
        fits the base window also fits the scaled window ``int(BASE * scale)``.
        """
        sx, sy = _SPLIT[self.kind]
        cw = max(1, int(self.w // sx * scale))
        ch = max(1, int(self.h // sy * scale))
        x0 = int(self.x * scale)
        y0 = int(self.y * scale)
        if self.kind == "two_h":
            return [(x0, y0, cw, ch, 1.0), (x0 + cw, y0, cw, ch, -1.0)]
        if self.kind == "two_v":
            return [(x0, y0, cw, ch, 1.0), (x0, y0 + ch, cw, ch, -1.0)]
        if self.kind == "three_h":
            return [(x0, y0, cw, ch, 1.0), (x0 + cw, y0, cw, ch, -2.0), (x0 + 2 * cw, y0, cw, ch, 1.0)]
        if self.kind == "three_v":
            return [(x0, y0, cw, ch, 1.0), (x0, y0 + ch, cw, ch, -2.0), (x0, y0 + 2 * ch, cw, ch, 1.0)]
        return [
            (x0, y0, cw, ch, 1.0),
            (x0 + cw, y0, cw, ch, -1.0),
            (x0, y0 + ch, cw, ch, -1.0),
            (x0 + cw, y0 + ch, cw, ch, 1.0),
        ]


@dataclass(frozen=True)
class WeakClassifier:
    feature: HaarFeature
    threshold: float
    polarity: int
    alpha: float


@dataclass
class Stage:
    weak: list[WeakClassifier]
    threshold: float = 0.0


@dataclass
class Cascade:
    stages: list[Stage]
    window: int = BASE

    def __post_init__(self):
        if not self.stages or any(not s.weak for s in self.stages):
            raise ValueError("a cascade needs at least one non-empty stage")


@dataclass(frozen=True)
class Detection:
    bbox: tuple[int, int, int, int]
    score: float

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return (x + (w - 1) / 2.0, y + (h - 1) / 2.0)


def enumerate_features(base: int = BASE, pos_step: int = 2, size_step: int = 4) -> list[HaarFeature]:
    """Feature pool in a fixed order: kind, then height, width, y, x (all ascending).

    Cell sizes are multiples of ``size_step // 2`` (at least 2 pixels) and
    positions are multiples of ``pos_step``.
    """
    out = []
    cell = max(2, size_step // 2)
    for kind in KINDS:
        sx, sy = _SPLIT[kind]
        for h in range(sy * cell, base + 1, sy * cell):
            for w in range(sx * cell, base + 1, sx * cell):
                for y in range(0, base - h + 1, pos_step):
                    for x in range(0, base - w + 1, pos_step):
                        out.append(HaarFeature(kind, x, y, w, h))
    return out


def haar_value(ii: np.ndarray, f: HaarFeature, window: tuple[int, int, float] = (0, 0, 1.0)) -> float:
    """Feature value for the window at (x, y) with the given scale."""
    wx, wy, scale = window
    size = int(BASE * scale)
    H, W = ii.shape[0] - 1, ii.shape[1] - 1
    if wx < 0 or wy < 0 or wx + size > W or wy + size > H:
        raise ValueError(f"window ({wx}, {wy}) at scale {scale} does not fit a {W}x{H} image")
    total = 0.0
    for rx, ry, rw, rh, wt in f.rects(scale):
        x, y = wx + rx, wy + ry
        total += wt * float(ii[y + rh, x + rw] - ii[y, x + rw] - ii[y + rh, x] + ii[y, x])
    return total / float(size * size)


def feature_matrix(windows, features: list[HaarFeature]) -> np.ndarray:
    """Values of every feature on every ``BASE x BASE`` window, shape (n, nf)."""
    wins = np.asarray(windows)
    n = wins.shape[0]
    ii = np.zeros((n, BASE + 1, BASE + 1))
    ii[:, 1:, 1:] = np.cumsum(np.cumsum(wins.astype(np.float64), axis=1), axis=2)
    flat = ii.reshape(n, -1)
    rows, cols, vals = [], [], []
    stride = BASE + 1
    for j, f in enumerate(features):
        for rx, ry, rw, rh, wt in f.rects(1.0):
            for (yy, xx), s in (
                ((ry + rh, rx + rw), 1.0),
                ((ry, rx + rw), -1.0),
                ((ry + rh, rx), -1.0),
                ((ry, rx), 1.0),
            ):
                rows.append(yy * stride + xx)
                cols.append(j)
                vals.append(s * wt)
    A = sparse.csc_matrix((vals, (rows, cols)), shape=(stride * stride, len(features)))
    return np.asarray((A.T @ flat.T).T) / float(BASE * BASE)


def _best_stumps(F_sorted, order, y, w):
    """Weighted-error table for every feature/split/polarity of one chunk.

    Returns errors with shape (nf, n + 1, 2); entry [j, k, p] puts the k
    smallest values of feature j on the ``p == 0 -> +1`` side.
    """
    n, nf = F_sorted.shape
    ws = w[order]
    pos = y[order] > 0
    sp = np.zeros((n + 1, nf))
    sn = np.zeros((n + 1, nf))
    np.cumsum(np.where(pos, ws, 0.0), axis=0, out=sp[1:])
    np.cumsum(np.where(pos, 0.0, ws), axis=0, out=sn[1:])
    tp, tn = sp[-1], sn[-1]
    e_plus = sn + (tp - sp)
    e_minus = sp + (tn - sn)
    valid = np.ones((n + 1, nf), dtype=bool)
    valid[1:n] = F_sorted[1:] > F_sorted[:-1]
    e_plus[~valid] = np.inf
    e_minus[~valid] = np.inf
    return np.stack([e_plus, e_minus], axis=-1).transpose(1, 0, 2)


def _stump_search_numpy(F_sorted, order, y, w):
    """(error, feature, split, polarity) of the best stump in one chunk."""
    E = _best_stumps(F_sorted, order, y, w)
    j, k, p = np.unravel_index(int(np.argmin(E)), E.shape)
    return float(E[j, k, p]), int(j), int(k), int(p)


@njit
def _stump_search_numba(F_sorted, order, y, w):
    # same sums in the same order as the numpy table, without materialising it
    n, nf = F_sorted.shape
    best, bj, bk, bp = np.inf, -1, -1, -1
    for j in range(nf):
        tp = 0.0
        tn = 0.0
        for i in range(n):
            s = order[i, j]
            if y[s] > 0:
                tp += w[s]
            else:
                tn += w[s]
        sp = 0.0
        sn = 0.0
        for k in range(n + 1):
            if k > 0:
                s = order[k - 1, j]
                if y[s] > 0:
                    sp += w[s]
                else:
                    sn += w[s]
            if 0 < k < n and not F_sorted[k, j] > F_sorted[k - 1, j]:
                continue
            e = sn + (tp - sp)
            if e < best:
                best, bj, bk, bp = e, j, k, 0
            e = sp + (tn - sn)
            if e < best:
                best, bj, bk, bp = e, j, k, 1
    return best, bj, bk, bp


_stump_search = pick(_stump_search_numba, _stump_search_numpy)


@dataclass
class TrainResult:
    weak: list[WeakClassifier]
    errors: list[float] = field(default_factory=list)  # training error after each round
    weight_sums: list[float] = field(default_factory=list)
    bound: list[float] = field(default_factory=list)  # product of normalisers Z_t
    halted: bool = False


def _stump_predict(values, threshold, polarity):
    return np.where(polarity * values < polarity * threshold, 1, -1)


def train_adaboost(
    windows,
    labels,
    rounds: int,
    features: list[HaarFeature] | None = None,
    balanced: bool = True,
    chunk: int = 1024,
    values: np.ndarray | None = None,
) -> TrainResult:
    """Discrete AdaBoost over decision stumps on Haar features.

    ``labels`` are +1 (face) / -1 (not face). With ``balanced`` the initial
    weights give each class half the mass. Each round picks the minimum
    weighted error (ties: lowest feature index, then lowest threshold, then
    polarity +1). Training stops early when the best error reaches 0.5.
    ``values`` may carry a precomputed :func:`feature_matrix`.
    """
    y = np.asarray(labels, dtype=np.int64)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not ((y == 1).any() and (y == -1).any()):
        raise ValueError("both classes must be present")
    if features is None:
        features = enumerate_features()
    F = feature_matrix(windows, features) if values is None else np.asarray(values, dtype=np.float64)
    n, nf = F.shape
    if balanced:
        w = np.where(y > 0, 0.5 / (y > 0).sum(), 0.5 / (y < 0).sum())
    else:
        w = np.full(n, 1.0 / n)
    w = w / w.sum()

    chunks = []
    for s in range(0, nf, chunk):
        block = F[:, s : s + chunk]
        order = np.ascontiguousarray(np.argsort(block, axis=0, kind="stable"))
        chunks.append((s, order, np.ascontiguousarray(np.take_along_axis(block, order, axis=0))))

    result = TrainResult(weak=[])
    score = np.zeros(n)
    bound = 1.0
    for _ in range(rounds):
        best = (np.inf, -1, -1, -1)
        for s, order, fs in chunks:
            e, j, k, p = _stump_search(fs, order, y, w)
            if e < best[0]:
                best = (float(e), s + int(j), int(k), int(p))
        err, j, k, p = best
        if err >= 0.5:
            result.halted = True
            break
        s0 = (j // chunk) * chunk
        fs = chunks[j // chunk][2][:, j - s0]
        if k == 0:
            thr = fs[0] - 1.0
        elif k == n:
            thr = fs[-1] + 1.0
        else:
            thr = 0.5 * (fs[k - 1] + fs[k])
        polarity = 1 if p == 0 else -1
        eps = min(max(err, 1e-10), 1.0 - 1e-10)
        alpha = 0.5 * np.log((1.0 - eps) / eps)
        pred = _stump_predict(F[:, j], thr, polarity)
        w = w * np.exp(-alpha * y * pred)
        z = w.sum()
        bound *= z
        w = w / z
        score += alpha * pred
        result.weak.append(WeakClassifier(features[j], float(thr), polarity, float(alpha)))
        result.errors.append(float(np.mean(np.where(score >= 0, 1, -1) != y)))
        result.weight_sums.append(float(w.sum()))
        result.bound.append(float(bound))
    return result


# --- window evaluation ------------------------------------------------------


def _cascade_tables(cascade: Cascade, scale: float):
    weak = [wk for st in cascade.stages for wk in st.weak]
    nw = len(weak)
    rects = np.zeros((nw, _MAX_RECTS, 5))
    thr = np.empty(nw)
    pol = np.empty(nw)
    alpha = np.empty(nw)
    stage_of = np.empty(nw, dtype=np.int64)
    i = 0
    for si, st in enumerate(cascade.stages):
        for wk in st.weak:
            for r, rect in enumerate(wk.feature.rects(scale)):
                rects[i, r] = rect
            thr[i], pol[i], alpha[i], stage_of[i] = wk.threshold, wk.polarity, wk.alpha, si
            i += 1
    stage_thr = np.array([st.threshold for st in cascade.stages])
    return rects, thr, pol, alpha, stage_of, stage_thr


@njit
def _scan_numba(ii, xs, ys, size, rects, thr, pol, alpha, stage_of, stage_thr):
    ny, nx = ys.shape[0], xs.shape[0]
    n_stage = stage_thr.shape[0]
    scores = np.full((ny, nx), -np.inf)
    area = float(size * size)
    for a in range(ny):
        for b in range(nx):
            wy, wx = ys[a], xs[b]
            i = 0
            ok = True
            last = 0.0
            for s in range(n_stage):
                acc = 0.0
                tot = 0.0
                while i < stage_of.shape[0] and stage_of[i] == s:
                    v = 0.0
                    for r in range(rects.shape[1]):
                        wt = rects[i, r, 4]
                        if wt == 0.0:
                            continue
                        x = wx + int(rects[i, r, 0])
                        y = wy + int(rects[i, r, 1])
                        rw = int(rects[i, r, 2])
                        rh = int(rects[i, r, 3])
                        v += wt * (ii[y + rh, x + rw] - ii[y, x + rw] - ii[y + rh, x] + ii[y, x])
                    v /= area
                    h = 1.0 if pol[i] * v < pol[i] * thr[i] else -1.0
                    acc += alpha[i] * h
                    tot += alpha[i]
                    i += 1
                last = acc / tot if tot > 0 else 0.0
                if last < stage_thr[s]:
                    ok = False
                    break
            if ok:
                scores[a, b] = last
    return scores


def _scan_numpy(ii, xs, ys, size, rects, thr, pol, alpha, stage_of, stage_thr):
    area = float(size * size)
    alive = np.ones((ys.size, xs.size), dtype=bool)
    last = np.zeros((ys.size, xs.size))
    for s in range(stage_thr.size):
        acc = np.zeros_like(last)
        tot = 0.0
        for i in np.flatnonzero(stage_of == s):
            v = np.zeros_like(last)
            for rx, ry, rw, rh, wt in rects[i]:
                if wt == 0.0:
                    continue
                y0 = (ys + int(ry))[:, None]
                x0 = (xs + int(rx))[None, :]
                rw, rh = int(rw), int(rh)
                v += wt * (ii[y0 + rh, x0 + rw] - ii[y0, x0 + rw] - ii[y0 + rh, x0] + ii[y0, x0])
            v /= area
            acc += alpha[i] * np.where(pol[i] * v < pol[i] * thr[i], 1.0, -1.0)
            tot += alpha[i]
        last = acc / tot if tot > 0 else np.zeros_like(last)
        alive &= last >= stage_thr[s]
    return np.where(alive, last, -np.inf)


_scan = pick(_scan_numba, _scan_numpy)


def scan_scale(ii, cascade: Cascade, scale: float, stride: int = 2, region=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scores of every window at one scale (``-inf`` where rejected).

    ``region`` (x, y, w, h) limits window origins so that windows stay inside it.
    """
    H, W = ii.shape[0] - 1, ii.shape[1] - 1
    size = int(cascade.window * scale)
    rx, ry, rw, rh = region if region is not None else (0, 0, W, H)
    rx, ry = max(0, rx), max(0, ry)
    x_end = min(W, rx + rw) - size
    y_end = min(H, ry + rh) - size
    xs = np.arange(rx, x_end + 1, stride, dtype=np.int64)
    ys = np.arange(ry, y_end + 1, stride, dtype=np.int64)
    if xs.size == 0 or ys.size == 0:
        return np.full((0, 0), -np.inf), xs, ys
    tables = _cascade_tables(cascade, scale)
    return _scan(np.ascontiguousarray(ii, dtype=np.float64), xs, ys, size, *tables), xs, ys


def window_score(cascade: Cascade, window) -> tuple[float, bool]:
    """(score, accepted) for one ``BASE x BASE`` window."""
    ii = integral(np.asarray(window))
    scores, _, _ = scan_scale(ii, cascade, 1.0, stride=1, region=(0, 0, BASE, BASE))
    s = float(scores[0, 0])
    if np.isfinite(s):
        return s, True
    # rejected: report the raw last-stage score for ranking
    tables = _cascade_tables(cascade, 1.0)
    raw = _scan_numpy(ii.astype(np.float64), np.array([0]), np.array([0]), BASE, *tables[:-1], np.full(len(cascade.stages), -np.inf))
    return float(raw[0, 0]), False


def iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def _contained(a, b) -> float:
    """Fraction of box ``a`` lying inside box ``b``."""
    ix = max(0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    return ix * iy / float(a[2] * a[3])


def merge_detections(cands: list[Detection], overlap: float = 0.3, nested: float | None = 0.5) -> list[Detection]:
    """Greedy merge: keep the best remaining window, drop every window with
    IoU > ``overlap`` against it, repeat. Order of ``cands`` does not matter:
    ties sort by (-score, y, x, size).

    With ``nested`` set, a window is also dropped when more than that
    fraction of it lies inside a kept window (a small box inside a large one
    has a low IoU however deep inside it sits).
    """
    rest = sorted(cands, key=lambda d: (-d.score, d.bbox[1], d.bbox[0], d.bbox[2]))
    out = []
    while rest:
        head = rest[0]
        out.append(head)
        rest = [
            d
            for d in rest[1:]
            if iou(head.bbox, d.bbox) <= overlap and (nested is None or _contained(d.bbox, head.bbox) <= nested)
        ]
    return out


def scales_for(shape, window: int = BASE, scale_factor: float = 1.25, min_size: int | None = None, max_size: int | None = None):
    H, W = shape[:2]
    out = []
    s = 1.0
    while int(window * s) <= min(H, W):
        size = int(window * s)
        if (min_size is None or size >= min_size) and (max_size is None or size <= max_size):
            out.append(s)
        s *= scale_factor
    return out


def detect(
    frame,
    cascade: Cascade,
    scale_factor: float = 1.25,
    stride: int = 2,
    region=None,
    min_size: int | None = None,
    max_size: int | None = None,
    overlap: float = 0.3,
    nested: float | None = 0.5,
) -> list[Detection]:
    """Sliding-window detection over all scales, merged, best first.

    Window origins step by ``stride`` pixels at every scale.
    """
    gray = to_gray(frame)
    if min(gray.shape) < cascade.window:
        raise ValueError(f"frame {gray.shape[1]}x{gray.shape[0]} is smaller than the {cascade.window}px window")
    ii = integral(gray)
    raw = []
    for s in scales_for(gray.shape, cascade.window, scale_factor, min_size, max_size):
        scores, xs, ys = scan_scale(ii, cascade, s, stride, region)
        size = int(cascade.window * s)
        for a, b in zip(*np.nonzero(np.isfinite(scores))):
            raw.append(Detection((int(xs[b]), int(ys[a]), size, size), float(scores[a, b])))
    return merge_detections(raw, overlap, nested)


def crop_window(gray, bbox) -> np.ndarray:
    """Crop ``bbox`` from a grayscale raster and box-resample to ``BASE x BASE``."""
    x, y, w, h = bbox
    patch = np.asarray(gray)[max(0, y) : y + h, max(0, x) : x + w]
    if patch.size == 0:
        raise ValueError(f"empty crop for bbox {bbox}")
    return np.clip(np.floor(resize_area(patch, BASE, BASE) + 0.5), 0, 255).astype(np.uint8)


def square_box(bbox) -> tuple[int, int, int, int]:
    """Square box with side max(w, h) sharing the centre of ``bbox``."""
    x, y, w, h = bbox
    side = max(w, h)
    return (int(np.floor(x + (w - side) / 2.0 + 0.5)), int(np.floor(y + (h - side) / 2.0 + 0.5)), side, side)


def pick_face(cand_a, cand_b, frame, cascade: Cascade):
    """Decide which of two skin components is the face.

    Each candidate's bbox is squared up (side = longer edge, same centre),
    resampled to the base window and scored. An
    accepted candidate beats a rejected one, then the higher score wins,
    then the larger area, then ``cand_a``. Returns ``(face, hand, face_score)``.
    """
    gray = to_gray(frame)
    sa, oka = window_score(cascade, crop_window(gray, square_box(cand_a.bbox)))
    sb, okb = window_score(cascade, crop_window(gray, square_box(cand_b.bbox)))
    if not (oka or okb):
        raise FaceNotVerified(f"neither candidate passes the cascade (scores {sa:.3f}, {sb:.3f})")
    key_a = (oka, sa, cand_a.area, 1)
    key_b = (okb, sb, cand_b.area, 0)
    if key_a >= key_b:
        return cand_a, cand_b, sa
    return cand_b, cand_a, sb


# --- cascade file -----------------------------------------------------------

_HEADER = "gesturehci-cascade 1"


def dumps_cascade(cascade: Cascade) -> str:
    lines = [_HEADER, f"window {cascade.window}", f"stages {len(cascade.stages)}"]
    for st in cascade.stages:
        lines.append(f"stage {len(st.weak)} {st.threshold!r}")
        for wk in st.weak:
            f = wk.feature
            lines.append(f"weak {f.kind} {f.x} {f.y} {f.w} {f.h} {wk.threshold!r} {wk.polarity} {wk.alpha!r}")
    return "\n".join(lines) + "\n"


def loads_cascade(text: str) -> Cascade:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]

    def fail(i, msg):
        raise ValueError(f"cascade line {i + 1}: {msg}")

    if not lines or lines[0] != _HEADER:
        fail(0, f"expected header {_HEADER!r}")
    i = 1
    try:
        key, val = lines[i].split()
        if key != "window":
            fail(i, "expected 'window <size>'")
        window = int(val)
        i += 1
        key, val = lines[i].split()
        if key != "stages":
            fail(i, "expected 'stages <count>'")
        n_stages = int(val)
        i += 1
        stages = []
        for _ in range(n_stages):
            tok = lines[i].split()
            if tok[0] != "stage" or len(tok) != 3:
                fail(i, "expected 'stage <count> <threshold>'")
            count, sthr = int(tok[1]), float(tok[2])
            i += 1
            weak = []
            for _ in range(count):
                tok = lines[i].split()
                if tok[0] != "weak" or len(tok) != 9:
                    fail(i, "expected 'weak <kind> <x> <y> <w> <h> <threshold> <polarity> <alpha>'")
                feat = HaarFeature(tok[1], *map(int, tok[2:6]))
                weak.append(WeakClassifier(feat, float(tok[6]), int(tok[7]), float(tok[8])))
                i += 1
            stages.append(Stage(weak, sthr))
    except IndexError:
        fail(i, "unexpected end of file")
    return Cascade(stages, window)


def save_cascade(cascade: Cascade, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_cascade(cascade))


def load_cascade(path: str | os.PathLike) -> Cascade:
    with open(path) as fh:
        return loads_cascade(fh.read())
