"""Recognition tables, confusion matrices and episode scoring.

Recognition table columns: ``gesture,NA,NCR,AR`` where NA is the number of
samples of the class, NCR the number correctly recognised and AR the
accuracy rate in percent (two decimals, ``undefined`` for an empty class).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .. import moe
from .config import PipelineConfig
from .pipeline import ControlEvent, Models, run_pipeline
from .synth import Episode

UNDEFINED = "undefined"


@dataclass(frozen=True)
class ClassRow:
    gesture: str
    na: int
    ncr: int

    @property
    def ar(self) -> float | None:
        return 100.0 * self.ncr / self.na if self.na else None


def recognition_table(true, pred, n_classes: int = moe.N_CLASSES) -> list[ClassRow]:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    return [ClassRow(f"G{c}", int(np.sum(true == c)), int(np.sum((true == c) & (pred == c)))) for c in range(1, n_classes + 1)]


def table_csv(rows: list[ClassRow]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["gesture", "NA", "NCR", "AR"])
    for r in rows:
        w.writerow([r.gesture, r.na, r.ncr, UNDEFINED if r.ar is None else f"{r.ar:.2f}"])
    return out.getvalue()


def confusion_csv(cm) -> str:
    """Rows are true classes, columns predicted classes."""
    cm = np.asarray(cm)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["true\\pred"] + [f"G{c}" for c in range(1, cm.shape[1] + 1)])
    for i, row in enumerate(cm, 1):
        w.writerow([f"G{i}"] + [int(v) for v in row])
    return out.getvalue()


def evaluate(model: moe.MoEModel, X, y) -> tuple[list[ClassRow], np.ndarray]:
    pred = moe.predict(model, X)
    return recognition_table(y, pred), moe.confusion_matrix(y, pred)


@dataclass(frozen=True)
class EpisodeOutcome:
    seed: int
    gesture: int
    events: tuple[ControlEvent, ...]
    approach_events: int

    @property
    def correct(self) -> bool:
        return len(self.events) == 1 and self.events[0].gesture == self.gesture and self.approach_events == 0


def score_episode(episode: Episode, events) -> EpisodeOutcome:
    approach = sum(1 for e in events if episode.truth[e.frame].phase == "approach")
    return EpisodeOutcome(episode.scene.seed, episode.label, tuple(events), approach)


def run_episode(episode: Episode, models: Models, cfg: PipelineConfig = PipelineConfig()) -> EpisodeOutcome:
    events, _ = run_pipeline(episode.frames, models, cfg)
    return score_episode(episode, events)
