"""PCA face features and nearest-neighbour viewer verification."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import modelio
from ._jit import njit, pick
from .imaging import resize_area, to_gray

FACE_SIZE = 32


# --- cyclic Jacobi eigen-solver ----------------------------------------------


@njit
def _jacobi_numba(a, tol, max_sweeps):
    A = a.copy()
    m = A.shape[0]
    V = np.eye(m)
    scale = np.sqrt(np.sum(A * A))
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(m):
            for q in range(m):
                if p != q:
                    off += A[p, q] * A[p, q]
        if np.sqrt(off) <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                d = A[q, q] - A[p, p]
                t = 2.0 * abs(apq) / (abs(d) + math.hypot(d, 2.0 * apq))
                if d != 0.0 and (d > 0.0) != (apq > 0.0):
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(m):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(m):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                for k in range(m):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    return np.diag(A).copy(), V


def _jacobi_numpy(a, tol, max_sweeps):
    A = np.array(a, dtype=np.float64)
    m = A.shape[0]
    V = np.eye(m)
    scale = np.sqrt(np.sum(A * A))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum((A - np.diag(np.diag(A))) ** 2))
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # tan of the rotation angle, written so that a tiny apq cannot overflow
                d = A[q, q] - A[p, p]
                t = 2.0 * abs(apq) / (abs(d) + math.hypot(d, 2.0 * apq))
                if d != 0.0 and (d > 0.0) != (apq > 0.0):
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * cp - s * cq, s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * rp - s * rq, s * rp + c * rq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    return np.diag(A).copy(), V


_jacobi = pick(_jacobi_numba, _jacobi_numpy)


def jacobi_eigh(a, tol: float = 1e-10, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, eigenvalues descending.

    Sweeps stop once the off-diagonal Frobenius norm is below ``tol`` times
    the matrix norm.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    vals, vecs = _jacobi(a, tol, max_sweeps)
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


# --- PCA ----------------------------------------------------------------------


@dataclass
class PcaModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (k, d), unit rows
    eigenvalues: np.ndarray  # (k,), covariance eigenvalues, descending
    shape: tuple[int, ...] = ()

    @property
    def k(self) -> int:
        return self.components.shape[0]


def _flatten(faces) -> tuple[np.ndarray, tuple[int, ...]]:
    arrs = [np.asarray(f, dtype=np.float64) for f in faces]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs):
        raise ValueError("all faces must have the same size")
    return np.stack([a.ravel() for a in arrs]), shape


def fit_pca(faces, k: int) -> PcaModel:
    """Principal directions of equal-size rasters (or row vectors).

    Uses the ``n x n`` Gram matrix when there are fewer samples than pixels.
    Each component is flipped so its largest-magnitude entry is positive.
    """
    X, shape = _flatten(faces)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least two samples")
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} outside 1..{min(n - 1, d)}")
    mean = X.mean(axis=0)
    Xc = X - mean
    if n < d:
        lam, V = jacobi_eigh(Xc @ Xc.T)
        lam, V = lam[:k], V[:, :k]
        U = Xc.T @ V
        U /= np.linalg.norm(U, axis=0)
        comps = U.T
    else:
        lam, V = jacobi_eigh(Xc.T @ Xc)
        lam, comps = lam[:k], V[:, :k].T
    comps = np.array(comps, order="C")
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    ev = np.clip(lam, 0.0, None) / (n - 1)
    return PcaModel(mean, comps, ev, shape)


def _check(model: PcaModel, x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).ravel()
    if v.size != model.mean.size:
        raise ValueError(f"input has {v.size} values, model expects {model.mean.size}")
    return v


def project(face, model: PcaModel) -> np.ndarray:
    return model.components @ (_check(model, face) - model.mean)


def reconstruct(vec, model: PcaModel) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.size != model.k:
        raise ValueError(f"expected a {model.k}-vector")
    out = model.mean + model.components.T @ v
    return out.reshape(model.shape) if model.shape else out


def face_patch(frame, bbox, size: int = FACE_SIZE, mask=None) -> np.ndarray:
    """Grayscale face crop box-resampled to ``size x size`` (float64).

    With a frame-sized ``mask`` of the face region, pixels outside it are
    replaced by the mean grey level inside, so the backdrop colour in the
    corners of the box does not leak into the features.
    """
    x, y, w, h = bbox
    gray = to_gray(frame).astype(np.float64)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != gray.shape:
            raise ValueError("mask must match the frame size")
        if m.any():
            gray[~m] = gray[m].mean()
    patch = gray[max(0, y) : y + h, max(0, x) : x + w]
    return resize_area(patch, size, size)


# --- gallery ------------------------------------------------------------------


@dataclass
class Gallery:
    identities: list[str]  # sorted; index = identity id
    vectors: np.ndarray  # (m, k)
    labels: np.ndarray  # (m,) index into identities
    threshold: float

    def __post_init__(self):
        if not self.identities:
            raise ValueError("gallery needs at least one identity")
        if not self.threshold > 0:
            raise ValueError("gallery threshold must be positive")


def build_gallery(model: PcaModel, faces, names, threshold: float | None = None, margin: float = 1.5) -> Gallery:
    """Project faces into a gallery.

    Without an explicit threshold, use ``margin`` times the largest distance
    from any sample to its nearest same-identity neighbour.
    """
    ids = sorted(set(names))
    labels = np.array([ids.index(n) for n in names], dtype=np.int64)
    vecs = np.stack([project(f, model) for f in faces])
    if threshold is None:
        worst = 0.0
        for i in range(len(vecs)):
            same = (labels == labels[i]) & (np.arange(len(vecs)) != i)
            if same.any():
                worst = max(worst, float(np.min(np.linalg.norm(vecs[same] - vecs[i], axis=1))))
        threshold = margin * worst if worst > 0 else 1.0
    return Gallery(ids, vecs, labels, float(threshold))


def nearest(vec, gallery: Gallery) -> tuple[int, float]:
    """(identity id, distance) of the closest gallery vector; ties -> lowest id."""
    d = np.linalg.norm(gallery.vectors - vec, axis=1)
    best = d.min()
    return int(gallery.labels[d == best].min()), float(best)


def verify(face, model: PcaModel, gallery: Gallery) -> tuple[str | None, float]:
    """Nearest identity and its distance; identity is ``None`` (rejected) when
    the distance exceeds the gallery threshold."""
    ident, dist = nearest(project(face, model), gallery)
    if dist <= gallery.threshold:
        return gallery.identities[ident], dist
    return None, dist


def save_faces(path: str | os.PathLike, model: PcaModel, gallery: Gallery) -> None:
    modelio.save(
        path,
        "pca-gallery",
        {
            "mean": model.mean,
            "components": model.components,
            "eigenvalues": model.eigenvalues,
            "shape": np.array(model.shape, dtype=np.int64),
            "vectors": gallery.vectors,
            "labels": gallery.labels,
            "threshold": np.array([gallery.threshold]),
        },
        {"identities": ",".join(gallery.identities)},
    )


def load_faces(path: str | os.PathLike) -> tuple[PcaModel, Gallery]:
    a, meta = modelio.load(path, "pca-gallery")
    model = PcaModel(a["mean"], a["components"], a["eigenvalues"], tuple(int(v) for v in a["shape"]))
    ids = meta.get("identities", "").split(",")
    return model, Gallery(ids, a["vectors"], a["labels"], float(a["threshold"][0]))
