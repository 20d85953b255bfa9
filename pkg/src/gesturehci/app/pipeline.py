"""Frame-by-frame state machine: detect, track, recognise, act."""
from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import face_detect as fd
from .. import moe
from ..face_features import Gallery, PcaModel, face_patch, load_faces, verify
from ..gesture_features import DegenerateContour, mask_to_vector
from ..segmentation import Component, NotEnoughCandidates, min_area_for, segment, select_candidates
from ..tracking import TargetLost, Trigger, TriggerConfig, check_trigger, distance, init_particles, step
from .config import PipelineConfig

COMMANDS = ("Stop", "Play", "Next", "VolumeUp", "VolumeDown")


def map_command(gesture) -> str:
    """G1..G5 (or 1..5) -> media-player command."""
    if isinstance(gesture, str) and gesture[:1] == "G":
        gesture = gesture[1:]
    k = int(gesture)
    if not 1 <= k <= len(COMMANDS):
        raise ValueError(f"no gesture G{k}")
    return COMMANDS[k - 1]


class State(enum.Enum):
    DETECTING = "Detecting"
    TRACKING = "Tracking"
    RECOGNIZING = "Recognizing"
    ACTING = "Acting"


@dataclass(frozen=True)
class ControlEvent:
    frame: int
    gesture: int
    command: str
    confidence: float
    identity: str

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "gesture": f"G{self.gesture}",
            "command": self.command,
            "confidence": round(self.confidence, 6),
            "identity": self.identity,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class TraceRow:
    frame: int
    state: str
    next_state: str = ""
    face: tuple[int, int, int, int] | None = None
    hand: tuple[float, float] | None = None
    distance: float | None = None
    threshold: float | None = None
    trigger: str | None = None
    vote: int | None = None
    note: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("distance", "threshold"):
            if d[k] is not None:
                d[k] = round(d[k], 4)
        if d["hand"] is not None:
            d["hand"] = [round(v, 4) for v in d["hand"]]
        return d


class ModelLoadError(ValueError):
    pass


@dataclass
class Models:
    cascade: fd.Cascade
    moe: moe.MoEModel
    pca: PcaModel
    gallery: Gallery


def load_models(cfg: PipelineConfig) -> Models:
    """Load the three model files named in ``cfg``; errors carry the path."""
    loaded = []
    for path, loader in ((cfg.cascade_path, fd.load_cascade), (cfg.moe_path, moe.load_moe), (cfg.faces_path, load_faces)):
        if path is None:
            raise ModelLoadError("model path not configured")
        try:
            loaded.append(loader(path))
        except (OSError, ValueError) as e:
            raise ModelLoadError(f"{path}: {e}") from e
    (cascade, net, (pca, gallery)) = loaded
    return Models(cascade, net, pca, gallery)


def _box_center(b) -> tuple[float, float]:
    return (b[0] + (b[2] - 1) / 2.0, b[1] + (b[3] - 1) / 2.0)


def _overlap(a, b) -> int:
    ix = min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0])
    iy = min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1])
    return max(0, ix) * max(0, iy)


@dataclass
class Pipeline:
    """Stateful driver; feed frames in order with :meth:`process`."""

    models: Models
    cfg: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.cfg.seed)
        self.state = State.DETECTING
        self.index = 0
        self.events: list[ControlEvent] = []
        self.trace: list[TraceRow] = []
        self._reset()

    def _reset(self):
        self.state = State.DETECTING
        self.particles = None
        self.face_box = None
        self.misses = 0
        self.votes: list[tuple[int, float] | None] = []
        self.cooldown_left = 0
        self._seg = None

    def process(self, frame) -> ControlEvent | None:
        row = TraceRow(self.index, self.state.value)
        self.index += 1
        event = None
        try:
            event = getattr(self, "_" + self.state.name.lower())(np.asarray(frame), row)
        except (TargetLost, fd.FaceNotVerified, NotEnoughCandidates) as e:
            row.note = f"{type(e).__name__}: {e}"
            self._reset()
        row.next_state = self.state.value
        self.trace.append(row)
        if event is not None:
            self.events.append(event)
        return event

    def run(self, frames) -> tuple[list[ControlEvent], list[TraceRow]]:
        for f in frames:
            self.process(f)
        return self.events, self.trace

    # --- states ---------------------------------------------------------------

    def _detecting(self, frame, row):
        seg = segment(frame, self.cfg.segment)
        a, b = select_candidates(seg.components, min_area_for(frame.shape, self.cfg.segment))
        face, hand, _ = fd.pick_face(a, b, frame, self.models.cascade)
        self.face_box = fd.square_box(face.bbox)
        self.particles = init_particles(hand, frame, seed=self.rng, cfg=self.cfg.track)
        row.face, row.hand = self.face_box, hand.centroid
        self.state = State.TRACKING

    def _tracking(self, frame, row):
        if self._follow(frame, row) is Trigger.PROCEED:
            self.votes = []
            self.state = State.RECOGNIZING

    def _recognizing(self, frame, row):
        if self._follow(frame, row) is Trigger.STAY:
            self.votes = []
            self.state = State.TRACKING
            return None
        vote, face_comp = self._classify(frame, row)
        self.votes = (self.votes + [vote])[-self.cfg.vote_window :]
        if len(self.votes) < self.cfg.vote_window:
            return None
        counts = Counter(v[0] for v in self.votes if v is not None)
        if not counts:
            return None
        gesture, n = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if n < self.cfg.vote_min:
            return None
        if face_comp is None:
            raise fd.FaceNotVerified("no face component for verification")
        patch = face_patch(frame, fd.square_box(face_comp.bbox), mask=self._seg.component_mask(face_comp))
        ident, dist = verify(patch, self.models.pca, self.models.gallery)
        if ident is None:
            raise fd.FaceNotVerified(f"viewer rejected (distance {dist:.3f})")
        conf = float(np.mean([v[1] for v in self.votes if v is not None and v[0] == gesture]))
        self.votes = []
        if self.cfg.cooldown > 0:
            self.state, self.cooldown_left = State.ACTING, self.cfg.cooldown
        else:
            self.state = State.TRACKING
        row.note = f"event {map_command(gesture)} for {ident}"
        return ControlEvent(row.frame, gesture, map_command(gesture), conf, ident)

    def _acting(self, frame, row):
        self._follow(frame, row)
        self.cooldown_left -= 1
        if self.cooldown_left <= 0:
            self.state = State.TRACKING

    # --- helpers --------------------------------------------------------------

    def _follow(self, frame, row) -> Trigger:
        self.particles, est = step(self.particles, frame, self.rng, self.cfg.track)
        self._update_face(frame)
        d = distance(_box_center(self.face_box), est)
        thr = self.cfg.trigger_multiplier * self.face_box[2]
        trig = check_trigger(d, TriggerConfig(thr))
        row.face, row.hand, row.distance, row.threshold, row.trigger = self.face_box, est, d, thr, trig.value
        return trig

    def _update_face(self, frame):
        """Confirm the face with the cascade near its last box, then take the
        box from the skin component under the best detection."""
        x, y, s, _ = self.face_box
        m = s // 2
        dets = fd.detect(
            frame,
            self.models.cascade,
            self.cfg.scale_factor,
            self.cfg.stride,
            region=(x - m, y - m, s + 2 * m, s + 2 * m),
            min_size=int(0.7 * s),
            max_size=int(math.ceil(1.4 * s)),
        )
        self._seg = segment(frame, self.cfg.segment)
        if not dets:
            self.misses += 1
            if self.misses > self.cfg.max_face_misses:
                raise fd.FaceNotVerified(f"face not re-detected for {self.misses} frames")
            return
        self.misses = 0
        cx, cy = dets[0].center
        under = [
            c
            for c in self._seg.components
            if c.bbox[0] <= cx < c.bbox[0] + c.bbox[2] and c.bbox[1] <= cy < c.bbox[1] + c.bbox[3]
        ]
        if under:
            self.face_box = fd.square_box(max(under, key=lambda c: (c.area, -c.label)).bbox)
        else:
            self.face_box = dets[0].bbox

    def _classify(self, frame, row) -> tuple[tuple[int, float] | None, Component | None]:
        """Classify the hand component under the tracked box; also returns the
        component nearest the face centre."""
        seg = self._seg
        comps = [c for c in seg.components if c.area >= min_area_for(frame.shape, self.cfg.segment)]
        if not comps:
            return None, None
        fc = _box_center(self.face_box)
        face = min(comps, key=lambda c: (math.hypot(c.centroid[0] - fc[0], c.centroid[1] - fc[1]), c.label))
        bw, bh = self.particles.box
        hx, hy = row.hand
        track_box = (int(round(hx - bw / 2.0)), int(round(hy - bh / 2.0)), bw, bh)
        scored = [(_overlap(c.bbox, track_box), c.area, -c.label, c) for c in comps if c is not face]
        scored = [t for t in scored if t[0] > 0]
        if not scored:
            return None, face
        hand = max(scored, key=lambda t: t[:3])[3]
        try:
            x = mask_to_vector(seg.component_mask(hand), hand.bbox)
        except DegenerateContour:
            return None, face
        cls, conf = moe.classify(self.models.moe, x)
        row.vote = cls
        return (cls, conf), face


def run_pipeline(frames, models: Models, cfg: PipelineConfig = PipelineConfig()) -> tuple[list[ControlEvent], list[TraceRow]]:
    return Pipeline(models, cfg).run(frames)
