"""Skin mask, disk morphology, hole filling and connected components."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._jit import njit, pick
from .imaging import as_frame, rgb_to_ycbcr


class NotEnoughCandidates(RuntimeError):
    pass


@dataclass(frozen=True)
class SkinRule:
    """Chroma box in full-range YCbCr; all bounds inclusive."""

    cb: tuple[int, int] = (77, 127)
    cr: tuple[int, int] = (133, 173)
    y_min: int | None = None

    def __post_init__(self):
        for name, (lo, hi) in (("cb", self.cb), ("cr", self.cr)):
            if not 0 <= lo <= hi <= 255:
                raise ValueError(f"bad {name} interval {lo}..{hi}")


@dataclass(frozen=True)
class Component:
    label: int
    area: int
    bbox: tuple[int, int, int, int]  # x, y, w, h
    centroid: tuple[float, float]  # x, y

    @property
    def center(self) -> tuple[float, float]:
        return self.centroid


@dataclass(frozen=True)
class SegmentConfig:
    rule: SkinRule = field(default_factory=SkinRule)
    erode_radius: int = 2
    dilate_radius: int = 4
    min_area_frac: float = 0.005


def skin_mask(frame, rule: SkinRule = SkinRule()) -> np.ndarray:
    ycc = rgb_to_ycbcr(as_frame(frame))
    y, cb, cr = ycc[..., 0], ycc[..., 1], ycc[..., 2]
    m = (cb >= rule.cb[0]) & (cb <= rule.cb[1]) & (cr >= rule.cr[0]) & (cr <= rule.cr[1])
    if rule.y_min is not None:
        m &= y >= rule.y_min
    return m


def disk_offsets(radius: int) -> np.ndarray:
    """Lattice points (dy, dx) with dx^2 + dy^2 <= radius^2, row-major order."""
    r = int(radius)
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    keep = dx * dx + dy * dy <= r * r
    return np.stack([dy[keep], dx[keep]], axis=1).astype(np.int64)


# --- morphology ---------------------------------------------------------------
# Shifted-slice AND/OR over a padded copy. Measured faster than a compiled
# per-pixel loop at frame sizes, so there is no numba variant here.


def _erode_numpy(mask, offs, border):
    h, w = mask.shape
    r = int(np.abs(offs).max()) if len(offs) else 0
    padded = np.pad(mask, r, constant_values=bool(border))
    out = np.ones((h, w), dtype=bool)
    for dy, dx in offs:
        out &= padded[r + dy : r + dy + h, r + dx : r + dx + w]
    return out


def _dilate_numpy(mask, offs):
    h, w = mask.shape
    r = int(np.abs(offs).max()) if len(offs) else 0
    padded = np.pad(mask, r, constant_values=False)
    out = np.zeros((h, w), dtype=bool)
    # the disk is symmetric, so shifting by -d equals shifting by +d
    for dy, dx in offs:
        out |= padded[r + dy : r + dy + h, r + dx : r + dx + w]
    return out


_erode = _erode_numpy
_dilate = _dilate_numpy


def erode(mask, radius: int, border_value: bool = False) -> np.ndarray:
    """Erosion by a disk. Pixels outside the image count as ``border_value``."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    return _erode(np.ascontiguousarray(mask, dtype=bool), disk_offsets(radius), bool(border_value))


def dilate(mask, radius: int) -> np.ndarray:
    if radius < 1:
        raise ValueError("radius must be >= 1")
    return _dilate(np.ascontiguousarray(mask, dtype=bool), disk_offsets(radius))


def opening(mask, radius: int) -> np.ndarray:
    return dilate(erode(mask, radius), radius)


def closing(mask, radius: int) -> np.ndarray:
    # erosion of the closing treats the outside as foreground so that the
    # result is the exact dual of opening
    return erode(dilate(mask, radius), radius, border_value=True)


# --- labelling kernels -----------------------------------------------------


@njit
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit
def _label_numba(mask, eight):
    h, w = mask.shape
    parent = np.arange(h * w)
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            i = y * w + x
            # already-visited neighbours: W, NW, N, NE
            for k in range(4):
                if k == 0:
                    yy, xx = y, x - 1
                elif k == 1:
                    if not eight:
                        continue
                    yy, xx = y - 1, x - 1
                elif k == 2:
                    yy, xx = y - 1, x
                else:
                    if not eight:
                        continue
                    yy, xx = y - 1, x + 1
                if yy < 0 or xx < 0 or xx >= w or not mask[yy, xx]:
                    continue
                a = _find(parent, i)
                b = _find(parent, yy * w + xx)
                if a != b:
                    if a < b:
                        parent[b] = a
                    else:
                        parent[a] = b
    labels = np.zeros((h, w), dtype=np.int64)
    remap = np.zeros(h * w, dtype=np.int64)
    count = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                r = _find(parent, y * w + x)
                if remap[r] == 0:
                    count += 1
                    remap[r] = count
                labels[y, x] = remap[r]
    return labels, count


def _label_numpy(mask, eight):
    h, w = mask.shape
    big = h * w
    idx = np.arange(big, dtype=np.int64).reshape(h, w)
    lab = np.where(mask, idx, big)
    if eight:
        shifts = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    else:
        shifts = [(-1, 0), (0, -1), (0, 1), (1, 0)]
    while True:
        padded = np.pad(lab, 1, constant_values=big)
        new = lab.copy()
        for dy, dx in shifts:
            np.minimum(new, padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w], out=new)
        new = np.where(mask, new, big)
        # pointer jumping: a label is the raster index of a pixel in the same component
        flat = np.append(new.ravel(), big)
        while True:
            jumped = flat[flat]
            if np.array_equal(jumped, flat):
                break
            flat = jumped
        new = flat[:-1].reshape(h, w)
        if np.array_equal(new, lab):
            break
        lab = new
    labels = np.zeros((h, w), dtype=np.int64)
    roots = np.unique(lab[mask])
    if roots.size:
        labels[mask] = np.searchsorted(roots, lab[mask]) + 1
    return labels, int(roots.size)


_label = pick(_label_numba, _label_numpy)


def label(mask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label image (0 = background, 1..K in raster order of first pixel) and K."""
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    m = np.ascontiguousarray(mask, dtype=bool)
    labels, count = _label(m, connectivity == 8)
    return labels, int(count)


def fill_holes(mask) -> np.ndarray:
    """Fill background regions that are not 4-connected to the image border."""
    m = np.asarray(mask, dtype=bool)
    bg_labels, _ = label(~m, connectivity=4)
    edge = np.concatenate([bg_labels[0], bg_labels[-1], bg_labels[:, 0], bg_labels[:, -1]])
    outside = np.isin(bg_labels, edge[edge > 0])
    return m | ~outside


def components_from_labels(labels: np.ndarray, count: int) -> list[Component]:
    if count == 0:
        return []
    ys, xs = np.nonzero(labels)
    ids = labels[ys, xs]
    area = np.bincount(ids, minlength=count + 1)
    sx = np.bincount(ids, weights=xs, minlength=count + 1)
    sy = np.bincount(ids, weights=ys, minlength=count + 1)
    x0 = np.full(count + 1, np.iinfo(np.int64).max)
    y0 = np.full(count + 1, np.iinfo(np.int64).max)
    x1 = np.full(count + 1, -1)
    y1 = np.full(count + 1, -1)
    np.minimum.at(x0, ids, xs)
    np.minimum.at(y0, ids, ys)
    np.maximum.at(x1, ids, xs)
    np.maximum.at(y1, ids, ys)
    comps = [
        Component(
            label=k,
            area=int(area[k]),
            bbox=(int(x0[k]), int(y0[k]), int(x1[k] - x0[k] + 1), int(y1[k] - y0[k] + 1)),
            centroid=(sx[k] / area[k], sy[k] / area[k]),
        )
        for k in range(1, count + 1)
    ]
    comps.sort(key=_rank_key)
    return comps


def _rank_key(c: Component):
    return (-c.area, c.bbox[1], c.bbox[0], c.label)


def label_components(mask, connectivity: int = 8) -> list[Component]:
    """Connected components sorted by area, largest first."""
    return components_from_labels(*label(mask, connectivity))


def select_candidates(components, min_area: int) -> tuple[Component, Component]:
    """The two largest components with ``area >= min_area``.

    Equal areas are ordered by bounding-box origin (top first, then left).
    """
    kept = sorted((c for c in components if c.area >= min_area), key=_rank_key)
    if len(kept) < 2:
        raise NotEnoughCandidates(f"{len(kept)} component(s) with area >= {min_area}")
    return kept[0], kept[1]


@dataclass
class Segmentation:
    mask: np.ndarray
    labels: np.ndarray
    components: list[Component]

    def component_mask(self, comp: Component) -> np.ndarray:
        return self.labels == comp.label


def clean_mask(mask, cfg: SegmentConfig = SegmentConfig()) -> np.ndarray:
    m = erode(mask, cfg.erode_radius)
    m = dilate(m, cfg.dilate_radius)
    return fill_holes(m)


def segment(frame, cfg: SegmentConfig = SegmentConfig()) -> Segmentation:
    """Skin mask -> erode -> dilate -> fill holes -> 8-connected components."""
    m = clean_mask(skin_mask(frame, cfg.rule), cfg)
    labels, count = label(m, 8)
    return Segmentation(m, labels, components_from_labels(labels, count))


def min_area_for(shape, cfg: SegmentConfig = SegmentConfig()) -> int:
    return max(1, int(round(cfg.min_area_frac * shape[0] * shape[1])))
