"""Desk-scale training recipes for the three models the pipeline loads."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import face_detect as fd
from .. import moe
from ..face_features import build_gallery, fit_pca
from ..gesture_features import mask_to_vector
from ..imaging import integral, to_gray
from . import synth


@dataclass(frozen=True)
class CascadeRecipe:
    rounds: int = 50
    mining_passes: int = 6
    n_pos: int = 500
    n_neg: int = 1000
    mining_frames: int = 20
    pos_step: int = 4
    size_step: int = 4


def mine_negatives(cascade: fd.Cascade, n_frames: int, rng, limit: int) -> np.ndarray:
    """Windows accepted by ``cascade`` that miss the face (IoU <= 0.3) on
    synthetic frames; every other frame holds a face, every frame two hands."""
    out = []
    for i in range(n_frames):
        if i % 2:
            img, face = synth.detection_frame(rng)
        else:
            img, face = synth.background(rng), None
        for _ in range(2):
            m = synth.hand_mask(synth.GESTURES[rng.integers(5)], rng.uniform(45, 70), rng)
            bb = (rng.uniform(30, synth.FRAME_W - 30), rng.uniform(30, synth.FRAME_H - 30))
            if face is not None and abs(bb[0] - face[0] - face[2] / 2) < face[2] and abs(bb[1] - face[1] - face[3] / 2) < face[3]:
                continue
            synth.paste(img, m, bb[0], bb[1], synth.SKIN)
        if face is None:
            img = synth.finish(img, rng)
        gray = to_gray(img)
        ii = integral(gray)
        for s in fd.scales_for(gray.shape, cascade.window):
            scores, xs, ys = fd.scan_scale(ii, cascade, s, stride=4)
            size = int(cascade.window * s)
            for a, b in zip(*np.nonzero(np.isfinite(scores))):
                box = (int(xs[b]), int(ys[a]), size, size)
                if face is None or fd.iou(box, face) <= 0.3:
                    out.append(fd.crop_window(gray, box))
    if not out:
        return np.zeros((0, fd.BASE, fd.BASE), dtype=np.uint8)
    out = np.stack(out)
    if len(out) > limit:
        out = out[rng.choice(len(out), limit, replace=False)]
    return out


def train_face_cascade(seed: int = 0, recipe: CascadeRecipe = CascadeRecipe()) -> fd.Cascade:
    """Single boosted stage (threshold 0) on synthetic faces.

    After each training pass, windows the current stage wrongly accepts on
    synthetic frames are added to the negatives and the stage is retrained
    from scratch. Mining stops early once a pass finds nothing.
    """
    rng = np.random.default_rng(seed)
    feats = fd.enumerate_features(fd.BASE, recipe.pos_step, recipe.size_step)
    Fp = fd.feature_matrix(synth.face_windows(recipe.n_pos, rng), feats)
    Fn = fd.feature_matrix(synth.nonface_windows(recipe.n_neg, rng), feats)
    y_pos = np.ones(len(Fp), dtype=np.int64)
    for p in range(recipe.mining_passes + 1):
        y = np.concatenate([y_pos, -np.ones(len(Fn), dtype=np.int64)])
        res = fd.train_adaboost(None, y, recipe.rounds, feats, values=np.vstack([Fp, Fn]))
        cascade = fd.Cascade([fd.Stage(res.weak, 0.0)])
        if p == recipe.mining_passes:
            break
        mined = mine_negatives(cascade, recipe.mining_frames, rng, recipe.n_neg // 2)
        if len(mined) == 0:
            break
        Fn = np.vstack([Fn, fd.feature_matrix(mined, feats)])
    return cascade


def gesture_features(per_class: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    masks, y = synth.gesture_samples(per_class, seed)
    return np.stack([mask_to_vector(m) for m in masks]), y


def train_gesture_moe(per_class: int = 100, seed: int = 0, cfg: moe.TrainConfig | None = None):
    """Synthetic gesture set, 50/50 split per class, MoE training.

    Returns ``(model, log, (X, y, train_idx, test_idx))``.
    """
    X, y = gesture_features(per_class, seed)
    tr, te = synth.split_half(y, seed)
    model, log = moe.train(X[tr], y[tr], X[te], y[te], cfg or moe.TrainConfig(seed=seed))
    return model, log, (X, y, tr, te)


def fit_face_gallery(per_identity: int = 10, k: int = 12, seed: int = 0):
    """PCA basis and gallery from synthetic identities."""
    faces, names = synth.face_samples(per_identity, seed)
    model = fit_pca(faces, k)
    return model, build_gallery(model, faces, names)
