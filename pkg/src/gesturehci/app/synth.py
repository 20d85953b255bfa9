"""Seeded synthetic scenes: faces, hand-gesture silhouettes and episodes.

Everything here is a deterministic function of its seed. Frames are drawn on
a plain non-skin background with Gaussian pixel noise and a few small
skin-coloured specks (removed by the segmentation's erosion/area filter).
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..face_detect import crop_window, square_box
from ..face_features import face_patch
from ..imaging import to_gray, write_pnm
from ..segmentation import SegmentConfig, segment

FRAME_W, FRAME_H = 256, 192
SKIN = (224, 172, 140)
BACKGROUNDS = ((40, 90, 160), (60, 130, 70), (128, 128, 128), (200, 200, 210), (90, 60, 120))
GESTURES = ("G1", "G2", "G3", "G4", "G5")
HAND_HEIGHT = 52.0


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# --- faces --------------------------------------------------------------------


@dataclass(frozen=True)
class FaceIdentity:
    name: str
    aspect: float  # height / width of the head ellipse
    eye_dx: float  # half eye spacing, fraction of width
    eye_y: float  # eye height above centre, fraction of height
    eye_r: float  # eye radius, fraction of width
    brow: float  # brow thickness, fraction of height (0 = none)
    mouth_w: float  # half mouth width, fraction of width
    mouth_y: float  # mouth depth below centre, fraction of height
    skin: tuple[int, int, int] = SKIN


IDENTITIES = (
    FaceIdentity("alice", 1.22, 0.20, 0.12, 0.075, 0.00, 0.20, 0.24),
    FaceIdentity("bob", 1.30, 0.25, 0.08, 0.100, 0.05, 0.26, 0.27, (214, 160, 128)),
    FaceIdentity("carol", 1.18, 0.17, 0.15, 0.085, 0.03, 0.13, 0.21, (230, 182, 150)),
    FaceIdentity("dave", 1.25, 0.22, 0.10, 0.065, 0.07, 0.30, 0.30, (206, 150, 118)),
    FaceIdentity("erin", 1.20, 0.19, 0.06, 0.110, 0.02, 0.17, 0.22, (236, 178, 146)),
)
EYE = (25, 25, 60)
BROW = (70, 45, 40)
MOUTH = (130, 40, 60)


def _ellipse(shape, cx, cy, ax, ay, angle=0.0):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    dx, dy = xx - cx, yy - cy
    c, s = math.cos(angle), math.sin(angle)
    u = (c * dx + s * dy) / ax
    v = (-s * dx + c * dy) / ay
    return u * u + v * v <= 1.0


def render_face(img, cx, cy, width, ident: FaceIdentity, rng=None, jitter: float = 0.0) -> tuple[int, int, int, int]:
    """Draw a face in place; returns the tight bbox of the head ellipse."""
    rng = _rng(rng)
    j = (lambda: 1.0 + jitter * rng.uniform(-1, 1)) if jitter else (lambda: 1.0)
    w = width
    h = width * ident.aspect
    head = _ellipse(img.shape, cx, cy, w / 2.0, h / 2.0)
    img[head] = ident.skin
    ey = cy - ident.eye_y * h * j()
    er = max(1.5, ident.eye_r * w * j())
    for side in (-1, 1):
        ex = cx + side * ident.eye_dx * w * j()
        img[_ellipse(img.shape, ex, ey, er * 1.3, er)] = EYE
        if ident.brow > 0:
            bt = max(1.0, ident.brow * h)
            img[_ellipse(img.shape, ex, ey - er - bt - 1.0, er * 1.8, bt)] = BROW
    my = cy + ident.mouth_y * h * j()
    img[_ellipse(img.shape, cx, my, ident.mouth_w * w * j(), max(1.5, 0.035 * h))] = MOUTH
    ys, xs = np.nonzero(head)
    return int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)


# --- hands --------------------------------------------------------------------

# (angle from vertical in degrees, length, half-width) as fractions of hand height
FINGERS = {
    "G1": [(-80, 0.36, 0.075), (-36, 0.48, 0.065), (-12, 0.54, 0.065), (12, 0.52, 0.065), (36, 0.44, 0.06)],
    "G2": [],
    "G3": [(-18, 0.56, 0.07), (18, 0.56, 0.07)],
    "G4": [(0, 0.60, 0.075)],
    "G5": [(-26, 0.52, 0.065), (0, 0.56, 0.065), (26, 0.52, 0.065)],
}


def _capsule(xx, yy, p0, p1, r):
    d = np.array(p1) - np.array(p0)
    L2 = float(d @ d)
    t = np.clip(((xx - p0[0]) * d[0] + (yy - p0[1]) * d[1]) / L2, 0.0, 1.0)
    px, py = p0[0] + t * d[0], p0[1] + t * d[1]
    return (xx - px) ** 2 + (yy - py) ** 2 <= r * r


def hand_mask(gesture: str, height: float = 60.0, rng=None, vary: bool = True) -> np.ndarray:
    """Tight boolean silhouette of a gesture template.

    With ``vary`` the template gets a rotation within +-10 degrees, a scale
    within +-20 %, small per-finger jitter and boundary pixel noise.
    """
    rng = _rng(rng)
    if gesture not in FINGERS:
        raise ValueError(f"unknown gesture {gesture!r}")
    rot = math.radians(rng.uniform(-10, 10)) if vary else 0.0
    H = height * (rng.uniform(0.8, 1.2) if vary else 1.0)
    n = int(2.4 * H)
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    c0 = n / 2.0
    # work in template coordinates, then rotate the sampling grid
    cr, sr = math.cos(rot), math.sin(rot)
    u = cr * (xx - c0) + sr * (yy - c0)
    v = -sr * (xx - c0) + cr * (yy - c0)
    a, b = 0.30 * H, 0.27 * H
    if gesture == "G2":
        # fist: a squarish superellipse
        m = (np.abs(u) / (0.33 * H)) ** 4 + (np.abs(v) / (0.31 * H)) ** 4 <= 1.0
    else:
        m = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    for ang, length, half_w in FINGERS[gesture]:
        phi = math.radians(ang + (rng.uniform(-4, 4) if vary else 0.0))
        L = length * H * (rng.uniform(0.92, 1.08) if vary else 1.0)
        base = (0.7 * a * math.sin(phi), -0.7 * b * math.cos(phi))
        tip = (base[0] + L * math.sin(phi), base[1] - L * math.cos(phi))
        m |= _capsule(u, v, base, tip, half_w * H)
    if vary:
        edge = m ^ _shrink(m)
        m = m ^ (edge & (rng.random(m.shape) < 0.25))
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    return m[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]


def _shrink(m):
    out = m.copy()
    out[1:] &= m[:-1]
    out[:-1] &= m[1:]
    out[:, 1:] &= m[:, :-1]
    out[:, :-1] &= m[:, 1:]
    return out


def paste(img, mask, cx, cy, color) -> tuple[int, int, int, int]:
    """Paint ``mask`` centred at (cx, cy); returns the painted bbox (clipped)."""
    h, w = mask.shape
    x0 = int(round(cx - w / 2.0))
    y0 = int(round(cy - h / 2.0))
    H, W = img.shape[:2]
    xa, ya = max(0, x0), max(0, y0)
    xb, yb = min(W, x0 + w), min(H, y0 + h)
    if xb <= xa or yb <= ya:
        return (xa, ya, 0, 0)
    sub = mask[ya - y0 : yb - y0, xa - x0 : xb - x0]
    img[ya:yb, xa:xb][sub] = color
    return (xa, ya, xb - xa, yb - ya)


def background(rng, shape=(FRAME_H, FRAME_W), color=None) -> np.ndarray:
    rng = _rng(rng)
    col = BACKGROUNDS[rng.integers(len(BACKGROUNDS))] if color is None else color
    img = np.empty(shape + (3,), dtype=np.uint8)
    img[...] = col
    return img


def finish(img, rng, noise: float = 5.0, specks: int = 3) -> np.ndarray:
    """Add skin-coloured specks and Gaussian pixel noise."""
    rng = _rng(rng)
    H, W = img.shape[:2]
    for _ in range(int(rng.integers(0, specks + 1))):
        r = rng.uniform(1.0, 3.0)
        img[_ellipse(img.shape, rng.uniform(0, W), rng.uniform(0, H), r, r)] = SKIN
    if noise > 0:
        img = np.clip(img + rng.normal(0, noise, img.shape), 0, 255).astype(np.uint8)
    return img


# --- gesture samples ----------------------------------------------------------


def gesture_frame(gesture: str, rng=None, size: int = 128):
    """A small frame holding one hand; returns (frame, hand mask after segmentation)."""
    rng = _rng(rng)
    img = background(rng, (size, size))
    m = hand_mask(gesture, HAND_HEIGHT, rng)
    paste(img, m, size / 2.0 + rng.uniform(-4, 4), size / 2.0 + rng.uniform(-4, 4), SKIN)
    img = finish(img, rng)
    seg = segment(img, SegmentConfig(min_area_frac=0.0))
    if not seg.components:
        raise RuntimeError("synthetic hand vanished after segmentation")
    return img, seg.component_mask(seg.components[0])


def gesture_samples(per_class: int, seed=0) -> tuple[list[np.ndarray], np.ndarray]:
    """Segmented hand masks, classes interleaved (G1, G2, ..., G5, G1, ...)."""
    rng = _rng(seed)
    masks, labels = [], []
    for _ in range(per_class):
        for k, g in enumerate(GESTURES):
            masks.append(gesture_frame(g, rng)[1])
            labels.append(k + 1)
    return masks, np.array(labels, dtype=np.int64)


def split_half(labels, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Per-class 50/50 split; returns (train indices, test indices)."""
    rng = _rng(seed)
    labels = np.asarray(labels)
    tr, te = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        half = len(idx) // 2
        tr.extend(idx[:half])
        te.extend(idx[half:])
    return np.sort(np.array(tr)), np.sort(np.array(te))


# --- face samples -------------------------------------------------------------


def face_frame(ident: FaceIdentity, rng=None, width: float | None = None, shape=(FRAME_H, FRAME_W), center=None):
    """Frame with one face; returns (frame, head bbox)."""
    rng = _rng(rng)
    img = background(rng, shape)
    w = rng.uniform(42, 54) if width is None else width
    if center is None:
        margin = w * 0.8
        center = (rng.uniform(margin, shape[1] - margin), rng.uniform(margin, shape[0] - margin))
    bbox = render_face(img, center[0], center[1], w, ident, rng, jitter=0.08)
    return finish(img, rng), bbox


def face_component(frame, near=None):
    """``(mask, bbox)`` of the skin component taken as the face (largest, or
    nearest ``near``); ``(None, None)`` when there is none."""
    seg = segment(frame, SegmentConfig(min_area_frac=0.0))
    comps = seg.components
    if not comps:
        return None, None
    if near is None:
        c = comps[0]
    else:
        c = min(comps, key=lambda c: math.hypot(c.centroid[0] - near[0], c.centroid[1] - near[1]))
    return seg.component_mask(c), c.bbox


def face_samples(per_identity: int, seed=0, identities=IDENTITIES):
    """32x32 masked face patches cut from segmented synthetic frames, with names."""
    rng = _rng(seed)
    patches, names = [], []
    for _ in range(per_identity):
        for ident in identities:
            frame, _ = face_frame(ident, rng)
            mask, box = face_component(frame)
            patches.append(face_patch(frame, square_box(box), mask=mask))
            names.append(ident.name)
    return patches, names


# --- cascade training windows -------------------------------------------------


def _jitter_box(box, rng, shift: float, scale: float):
    x, y, s, _ = box
    f = 1.0 + rng.uniform(-scale, scale)
    ns = max(4, int(round(s * f)))
    cx = x + s / 2.0 + rng.uniform(-shift, shift) * s
    cy = y + s / 2.0 + rng.uniform(-shift, shift) * s
    return (int(round(cx - ns / 2.0)), int(round(cy - ns / 2.0)), ns, ns)


def _inside(box, shape):
    x, y, w, h = box
    return x >= 0 and y >= 0 and x + w <= shape[1] and y + h <= shape[0]


def face_windows(n: int, rng=None) -> np.ndarray:
    """Positive windows: square face crops with small shift/scale jitter."""
    rng = _rng(rng)
    out = []
    while len(out) < n:
        ident = IDENTITIES[rng.integers(len(IDENTITIES))]
        frame, bbox = face_frame(ident, rng)
        box = _jitter_box(square_box(bbox), rng, 0.04, 0.06)
        if _inside(box, frame.shape):
            out.append(crop_window(to_gray(frame), box))
    return np.stack(out)


def nonface_windows(n: int, rng=None) -> np.ndarray:
    """Negative windows: hands, background, misaligned faces and noise."""
    rng = _rng(rng)
    out = []
    while len(out) < n:
        kind = rng.integers(4)
        if kind == 0:
            img = background(rng)
            g = GESTURES[rng.integers(5)]
            m = hand_mask(g, rng.uniform(45, 70), rng)
            cx, cy = rng.uniform(50, FRAME_W - 50), rng.uniform(50, FRAME_H - 50)
            bb = paste(img, m, cx, cy, SKIN)
            img = finish(img, rng)
            box = _jitter_box(square_box(bb), rng, 0.15, 0.2)
        elif kind == 1:
            img = finish(background(rng), rng)
            s = int(rng.uniform(24, 90))
            box = (int(rng.integers(0, FRAME_W - s)), int(rng.integers(0, FRAME_H - s)), s, s)
        elif kind == 2:
            ident = IDENTITIES[rng.integers(len(IDENTITIES))]
            img, bbox = face_frame(ident, rng)
            x, y, s, _ = square_box(bbox)
            # far enough off that IoU with the true box stays below ~0.4
            dx, dy = rng.choice([-1, 1], size=2) * rng.uniform(0.3, 0.6, size=2) * s
            f = rng.uniform(0.6, 1.5)
            ns = int(s * f)
            box = (int(x + s / 2 + dx - ns / 2), int(y + s / 2 + dy - ns / 2), ns, ns)
        else:
            img = background(rng)
            img = finish(img, rng, noise=rng.uniform(10, 60))
            s = int(rng.uniform(24, 80))
            box = (int(rng.integers(0, FRAME_W - s)), int(rng.integers(0, FRAME_H - s)), s, s)
        if box[2] >= 8 and _inside(box, img.shape):
            out.append(crop_window(to_gray(img), box))
    return np.stack(out)


def detection_frame(rng=None, with_hand: bool = True):
    """Frame with one face (and optionally a hand); returns (frame, true square face box)."""
    rng = _rng(rng)
    ident = IDENTITIES[rng.integers(len(IDENTITIES))]
    img = background(rng)
    w = rng.uniform(42, 54)
    side = w * ident.aspect
    cx = rng.uniform(side / 2 + 4, FRAME_W - side / 2 - 4)
    cy = rng.uniform(side / 2 + 4, FRAME_H - side / 2 - 4)
    bbox = render_face(img, cx, cy, w, ident, rng, jitter=0.08)
    if with_hand:
        m = hand_mask(GESTURES[rng.integers(5)], 60.0, rng)
        hx = cx + 110 if cx < FRAME_W / 2 else cx - 110
        paste(img, m, hx, rng.uniform(40, FRAME_H - 40), SKIN)
    return finish(img, rng), square_box(bbox)


# --- episodes -----------------------------------------------------------------


@dataclass
class SynthScene:
    """Parameters of one scripted episode (hand approaches the face, then holds)."""

    seed: int
    gesture: str = "G3"
    identity: int = 0
    face_center: tuple[float, float] = (60.0, 96.0)
    face_width: float = 50.0
    side: int = 1  # hand comes from the right (+1) or left (-1)
    start_dx: float = 130.0
    dy: float = 10.0
    speed: float = 4.0
    hold_frames: int = 12
    noise: float = 5.0
    background: tuple[int, int, int] = BACKGROUNDS[0]
    hand_height: float = HAND_HEIGHT
    frame_size: tuple[int, int] = (FRAME_W, FRAME_H)


@dataclass
class FrameTruth:
    index: int
    phase: str  # "approach" (outside the trigger zone) or "hold"
    face_box: tuple[int, int, int, int]  # square box
    hand_center: tuple[float, float]
    distance: float
    threshold: float


@dataclass
class Episode:
    scene: SynthScene
    frames: list[np.ndarray]
    truth: list[FrameTruth] = field(default_factory=list)
    hold_dx: float = 0.0

    @property
    def label(self) -> int:
        return GESTURES.index(self.scene.gesture) + 1


def random_scene(seed: int, gesture: str | None = None, identity: int | None = None) -> SynthScene:
    rng = np.random.default_rng(seed)
    side = int(rng.choice([-1, 1]))
    fx = rng.uniform(50, 66)
    return SynthScene(
        seed=seed,
        gesture=GESTURES[rng.integers(5)] if gesture is None else gesture,
        identity=int(rng.integers(len(IDENTITIES))) if identity is None else identity,
        face_center=(fx if side > 0 else FRAME_W - 1 - fx, rng.uniform(80, 110)),
        face_width=rng.uniform(48, 54),
        side=side,
        start_dx=rng.uniform(125, 140),
        dy=rng.uniform(-12, 16),
        speed=rng.uniform(3.0, 4.5),
        hold_frames=int(rng.integers(8, 13)),
        background=BACKGROUNDS[rng.integers(len(BACKGROUNDS))],
    )


def _mask_offset(mask, cx, cy) -> tuple[float, float]:
    """Centroid of ``mask`` once pasted centred at (cx, cy)."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    return int(round(cx - w / 2.0)) + xs.mean(), int(round(cy - h / 2.0)) + ys.mean()


def render_episode(scene: SynthScene, trigger_multiplier: float = 1.5) -> Episode:
    """Frames and ground truth for a scene.

    The hand moves at constant speed toward its rest point, then holds still.
    The rest point keeps at least a 10 px gap between face and hand boxes and
    sits at about 0.8 of the trigger distance. A frame is labelled
    ``approach`` while the true face-hand distance exceeds the true trigger
    threshold and ``hold`` afterwards.
    """
    rng = np.random.default_rng(scene.seed)
    ident = IDENTITIES[scene.identity]
    W, H = scene.frame_size
    hand = hand_mask(scene.gesture, scene.hand_height, rng)
    fx, fy = scene.face_center
    probe = np.zeros((H, W, 3), dtype=np.uint8)
    fbox = render_face(probe, fx, fy, scene.face_width, ident, None)
    sq = square_box(fbox)
    threshold = trigger_multiplier * sq[2]
    fc = (sq[0] + (sq[2] - 1) / 2.0, sq[1] + (sq[3] - 1) / 2.0)
    gap_dx = fbox[2] / 2.0 + hand.shape[1] / 2.0 + 10.0
    hold_dx = max(gap_dx, math.sqrt(max(0.0, (0.8 * threshold) ** 2 - scene.dy**2)))
    start_dx = max(scene.start_dx, hold_dx + 1.0)
    n_move = int(math.ceil((start_dx - hold_dx) / scene.speed))
    frames, truth = [], []
    face_seed = int(rng.integers(2**31))
    inside = False
    for i in range(n_move + scene.hold_frames):
        dx = max(hold_dx, start_dx - i * scene.speed)
        hx, hy = fx + scene.side * dx, fy + scene.dy
        img = background(rng, (H, W), scene.background)
        render_face(img, fx, fy, scene.face_width, ident, np.random.default_rng(face_seed))
        paste(img, hand, hx, hy, ident.skin)
        img = finish(img, rng, scene.noise)
        hc = _mask_offset(hand, hx, hy)
        d = math.hypot(hc[0] - fc[0], hc[1] - fc[1])
        inside = inside or d <= threshold
        frames.append(img)
        truth.append(FrameTruth(i, "hold" if inside else "approach", sq, hc, d, threshold))
    return Episode(scene, frames, truth, hold_dx)


# --- tracking sequences ------------------------------------------------------


def blob_sequence(seed, n_frames: int = 100, max_speed: float = 5.0, radius: float = 12.0, shape=(FRAME_H, FRAME_W)):
    """A skin disc moving with constant velocity (|v| <= max_speed), bouncing
    off the borders. Returns (frames, centres)."""
    rng = np.random.default_rng(seed)
    H, W = shape
    speed = rng.uniform(0.5 * max_speed, max_speed)
    ang = rng.uniform(0, 2 * math.pi)
    v = np.array([speed * math.cos(ang), speed * math.sin(ang)])
    p = np.array([rng.uniform(radius + 10, W - radius - 10), rng.uniform(radius + 10, H - radius - 10)])
    bg = BACKGROUNDS[rng.integers(len(BACKGROUNDS))]
    frames, centers = [], []
    for _ in range(n_frames):
        img = background(rng, shape, bg)
        img[_ellipse(img.shape, p[0], p[1], radius, radius)] = SKIN
        frames.append(finish(img, rng, 5.0, specks=0))
        centers.append((float(p[0]), float(p[1])))
        p = p + v
        for k, lim in ((0, W), (1, H)):
            if p[k] < radius + 2 or p[k] > lim - radius - 3:
                v[k] = -v[k]
                p[k] = min(max(p[k], radius + 2), lim - radius - 3)
    return frames, centers


# --- dataset files ------------------------------------------------------------


def write_gesture_dataset(out_dir, per_class: int, seed=0) -> None:
    """``out_dir/NNNN.pnm`` hand frames plus ``labels.csv`` (file,label,split)."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    labels = []
    for _ in range(per_class):
        for k, g in enumerate(GESTURES):
            frame, _ = gesture_frame(g, rng)
            name = f"{len(labels):04d}.pnm"
            write_pnm(frame, os.path.join(out_dir, name))
            labels.append((name, k + 1))
    tr, _ = split_half([lab for _, lab in labels], seed)
    train = set(tr.tolist())
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "label", "split"])
        for i, (name, lab) in enumerate(labels):
            w.writerow([name, lab, "train" if i in train else "test"])


def write_face_dataset(out_dir, per_identity: int, seed=0) -> None:
    """``out_dir/NNNN.pnm`` face frames plus ``labels.csv`` (file,identity)."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(per_identity):
        for ident in IDENTITIES:
            frame, _ = face_frame(ident, rng)
            name = f"{len(rows):04d}.pnm"
            write_pnm(frame, os.path.join(out_dir, name))
            rows.append((name, ident.name))
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "identity"])
        w.writerows(rows)


def write_episode(out_dir, episode: Episode) -> None:
    """Frames ``NNNN.pnm`` plus ``labels.csv`` with per-frame ground truth."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "phase", "gesture", "identity", "hand_x", "hand_y", "distance", "threshold"])
        for frame, t in zip(episode.frames, episode.truth):
            name = f"{t.index:04d}.pnm"
            write_pnm(frame, os.path.join(out_dir, name))
            w.writerow(
                [
                    name,
                    t.phase,
                    episode.scene.gesture,
                    IDENTITIES[episode.scene.identity].name,
                    f"{t.hand_center[0]:.2f}",
                    f"{t.hand_center[1]:.2f}",
                    f"{t.distance:.2f}",
                    f"{t.threshold:.2f}",
                ]
            )
