"""Readers for the on-disk dataset layout written by :mod:`.synth`.

A dataset is a directory of PNM frames plus ``labels.csv``::

    file,label,split          (gesture sets)
    0000.pnm,1,train

    file,identity             (face sets)
    0000.pnm,alice
"""
from __future__ import annotations

import csv
import os

import numpy as np

from ..face_detect import square_box
from ..face_features import face_patch
from ..gesture_features import mask_to_vector, read_features_csv
from ..imaging import PnmError, PnmTruncated, read_pnm
from ..segmentation import SegmentConfig, segment
from .synth import split_half

FRAME_EXT = (".pnm", ".ppm", ".pgm")


class DatasetError(ValueError):
    pass


def _rows(directory) -> list[dict]:
    path = os.path.join(directory, "labels.csv")
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as e:
        raise DatasetError(f"{path}: {e.strerror or e}") from e


def frame_paths(directory) -> list[str]:
    """Frame files of a directory in name order."""
    try:
        names = sorted(n for n in os.listdir(directory) if n.lower().endswith(FRAME_EXT))
    except OSError as e:
        raise DatasetError(f"{directory}: {e.strerror or e}") from e
    return [os.path.join(directory, n) for n in names]


def read_frame(path) -> np.ndarray:
    try:
        return read_pnm(path)
    except (PnmError, PnmTruncated) as e:
        raise DatasetError(f"{path}: {e}") from e


def read_frames(directory) -> list[np.ndarray]:
    return [read_frame(p) for p in frame_paths(directory)]


def _largest_mask(frame, cfg: SegmentConfig):
    seg = segment(frame, cfg)
    if not seg.components:
        return None, None
    c = seg.components[0]
    return seg.component_mask(c), c.bbox


def gesture_set(source, seed: int = 0, cfg: SegmentConfig = SegmentConfig(min_area_frac=0.0)):
    """``(X, y, train_idx, test_idx)`` from a frame directory or a features CSV.

    A features CSV carries no split, so it is split 50/50 per class with ``seed``.
    """
    if os.path.isfile(source):
        X, y = read_features_csv(source)
        tr, te = split_half(y, seed)
        return X, y, tr, te
    X, y, split = [], [], []
    for row in _rows(source):
        path = os.path.join(source, row["file"])
        mask, bbox = _largest_mask(read_frame(path), cfg)
        if mask is None:
            raise DatasetError(f"{path}: no skin region found")
        X.append(mask_to_vector(mask, bbox))
        try:
            y.append(int(row["label"]))
        except (KeyError, ValueError):
            raise DatasetError(f"{path}: bad or missing label") from None
        split.append(row.get("split", "train"))
    split = np.array(split)
    return np.stack(X), np.array(y, dtype=np.int64), np.flatnonzero(split == "train"), np.flatnonzero(split == "test")


def face_set(directory, cfg: SegmentConfig = SegmentConfig(min_area_frac=0.0)) -> tuple[list[np.ndarray], list[str]]:
    """32x32 face patches (largest skin component, squared and masked) and identity names."""
    patches, names = [], []
    for row in _rows(directory):
        path = os.path.join(directory, row["file"])
        frame = read_frame(path)
        mask, bbox = _largest_mask(frame, cfg)
        if bbox is None:
            raise DatasetError(f"{path}: no skin region found")
        patches.append(face_patch(frame, square_box(bbox), mask=mask))
        names.append(row["identity"])
    return patches, names
