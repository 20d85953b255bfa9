"""Colour-histogram particle filter for the hand, plus the face-hand trigger."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._jit import njit, pick
from .imaging import as_frame


class TargetLost(RuntimeError):
    pass


class Trigger(enum.Enum):
    PROCEED = "proceed"
    STAY = "stay"


@dataclass(frozen=True)
class TrackConfig:
    n_particles: int = 100
    sigma_motion: float = 8.0
    lam: float = 20.0
    # likelihood is zero below this Bhattacharyya coefficient
    min_similarity: float = 0.5
    bins: int = 8
    init_sigma: float | None = None  # None -> bbox diagonal / 8


@dataclass(frozen=True)
class TriggerConfig:
    threshold: float

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("trigger threshold must be positive")


@dataclass
class ParticleSet:
    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    ref_hist: np.ndarray
    box: tuple[int, int]  # w, h

    @property
    def n(self) -> int:
        return self.x.size

    def estimate(self) -> tuple[float, float]:
        return float(np.dot(self.weights, self.x)), float(np.dot(self.weights, self.y))

    def ess(self) -> float:
        return 1.0 / float(np.sum(self.weights**2))


def bin_image(frame, bins: int = 8) -> np.ndarray:
    """Per-pixel joint RGB bin index, ``bins`` levels per channel."""
    f = as_frame(frame).astype(np.int64)
    q = (f * bins) >> 8
    return (q[..., 0] * bins + q[..., 1]) * bins + q[..., 2]


@njit
def _hist_at(bidx, cx, cy, bw, bh, nbins):
    H, W = bidx.shape
    hist = np.zeros(nbins)
    hx = bw / 2.0
    hy = bh / 2.0
    x0 = max(0, int(math.floor(cx - hx)))
    x1 = min(W - 1, int(math.ceil(cx + hx)))
    y0 = max(0, int(math.floor(cy - hy)))
    y1 = min(H - 1, int(math.ceil(cy + hy)))
    tot = 0.0
    for yy in range(y0, y1 + 1):
        dy = (yy - cy) / hy
        for xx in range(x0, x1 + 1):
            dx = (xx - cx) / hx
            k = 1.0 - (dx * dx + dy * dy)
            if k > 0.0:
                hist[bidx[yy, xx]] += k
                tot += k
    if tot > 0.0:
        hist /= tot
    return hist


@njit
def _similarity_numba(bidx, xs, ys, bw, bh, ref):
    out = np.zeros(xs.shape[0])
    for i in range(xs.shape[0]):
        h = _hist_at(bidx, xs[i], ys[i], bw, bh, ref.shape[0])
        s = 0.0
        for b in range(ref.shape[0]):
            s += math.sqrt(h[b] * ref[b])
        out[i] = s
    return out


def _hist_numpy(bidx, cx, cy, bw, bh, nbins):
    H, W = bidx.shape
    hx, hy = bw / 2.0, bh / 2.0
    x0, x1 = max(0, math.floor(cx - hx)), min(W - 1, math.ceil(cx + hx))
    y0, y1 = max(0, math.floor(cy - hy)), min(H - 1, math.ceil(cy + hy))
    if x1 < x0 or y1 < y0:
        return np.zeros(nbins)
    dy = (np.arange(y0, y1 + 1) - cy) / hy
    dx = (np.arange(x0, x1 + 1) - cx) / hx
    k = 1.0 - (dy[:, None] ** 2 + dx[None, :] ** 2)
    keep = k > 0
    hist = np.bincount(bidx[y0 : y1 + 1, x0 : x1 + 1][keep], weights=k[keep], minlength=nbins)
    tot = hist.sum()
    return hist / tot if tot > 0 else hist


def _similarity_numpy(bidx, xs, ys, bw, bh, ref):
    sref = np.sqrt(ref)
    return np.array([np.dot(np.sqrt(_hist_numpy(bidx, x, y, bw, bh, ref.size)), sref) for x, y in zip(xs, ys)])


_similarity = pick(_similarity_numba, _similarity_numpy)


def region_hist(frame, center, box, bins: int = 8) -> np.ndarray:
    """Epanechnikov-weighted colour histogram of the box centred at ``center``."""
    return _hist_numpy(bin_image(frame, bins), float(center[0]), float(center[1]), float(box[0]), float(box[1]), bins**3)


def bhattacharyya(p, q) -> float:
    return float(np.sum(np.sqrt(np.asarray(p) * np.asarray(q))))


def similarities(frame, xs, ys, box, ref, bins: int = 8) -> np.ndarray:
    bidx = bin_image(frame, bins)
    return _similarity(
        bidx,
        np.ascontiguousarray(xs, dtype=np.float64),
        np.ascontiguousarray(ys, dtype=np.float64),
        float(box[0]),
        float(box[1]),
        np.ascontiguousarray(ref, dtype=np.float64),
    )


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def init_particles(hand, frame, n: int | None = None, seed=None, cfg: TrackConfig = TrackConfig()) -> ParticleSet:
    """Scatter particles around the hand centroid with uniform weights.

    ``hand`` is a segmentation ``Component`` (its bbox sets the box size).
    """
    n = cfg.n_particles if n is None else n
    if n < 1:
        raise ValueError("need at least one particle")
    rng = _rng(seed)
    bx, by, bw, bh = hand.bbox
    cx, cy = hand.centroid
    sigma = math.hypot(bw, bh) / 8.0 if cfg.init_sigma is None else cfg.init_sigma
    H, W = frame.shape[:2]
    x = np.clip(cx + sigma * rng.standard_normal(n), 0, W - 1)
    y = np.clip(cy + sigma * rng.standard_normal(n), 0, H - 1)
    ref = region_hist(frame, (cx, cy), (bw, bh), cfg.bins)
    return ParticleSet(x, y, np.full(n, 1.0 / n), ref, (int(bw), int(bh)))


def systematic_resample(weights, u0: float) -> np.ndarray:
    """Indices drawn at positions ``(u0 + i) / n`` of the weight CDF (u0 in [0, 1))."""
    n = len(weights)
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, (u0 + np.arange(n)) / n, side="right"), n - 1)


def step(ps: ParticleSet, frame, seed=None, cfg: TrackConfig = TrackConfig()) -> tuple[ParticleSet, tuple[float, float]]:
    """Predict, weight, normalise, estimate, then resample if ESS < N/2."""
    rng = _rng(seed)
    H, W = frame.shape[:2]
    n = ps.n
    x = ps.x + cfg.sigma_motion * rng.standard_normal(n)
    y = ps.y + cfg.sigma_motion * rng.standard_normal(n)
    np.clip(x, 0, W - 1, out=x)
    np.clip(y, 0, H - 1, out=y)
    bc = similarities(frame, x, y, ps.box, ps.ref_hist, cfg.bins)
    lik = np.where(bc >= cfg.min_similarity, np.exp(-cfg.lam * (1.0 - bc)), 0.0)
    w = ps.weights * lik
    total = w.sum()
    if not total > 0:
        raise TargetLost(f"all {n} particle likelihoods are zero")
    w = w / total
    est = (float(np.dot(w, x)), float(np.dot(w, y)))
    u0 = rng.random()
    if 1.0 / np.sum(w**2) < n / 2.0:
        idx = systematic_resample(w, u0)
        x, y = x[idx], y[idx]
        w = np.full(n, 1.0 / n)
    return ParticleSet(x, y, w, ps.ref_hist, ps.box), est


def distance(face_center, hand_center) -> float:
    (x2, y2), (x1, y1) = face_center, hand_center
    return math.sqrt((x2 - x1) ** 2 + (y2 - y1) ** 2)


def check_trigger(d: float, cfg: TriggerConfig) -> Trigger:
    if d < 0:
        raise ValueError("distance must be non-negative")
    return Trigger.PROCEED if d <= cfg.threshold else Trigger.STAY
