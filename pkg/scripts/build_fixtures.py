"""Rebuild the files under tests/fixtures (models, smoke episode, goldens).

    python3 scripts/build_fixtures.py

Everything is seeded; rerunning reproduces the same bytes on the same
numpy/numba versions.
"""
from __future__ import annotations

import dataclasses
import os
import sys

from gesturehci import face_detect as fd
from gesturehci import moe
from gesturehci.app import evaluate as ev
from gesturehci.app import models as recipes
from gesturehci.app import synth
from gesturehci.app.config import PipelineConfig, dump_config
from gesturehci.app.pipeline import Models, run_pipeline
from gesturehci.face_features import save_faces
from gesturehci.gesture_features import write_features_csv

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests", "fixtures")


def smoke_scene() -> synth.SynthScene:
    base = synth.random_scene(7, gesture="G3")
    # short approach so the event lands inside ten frames
    return dataclasses.replace(base, start_dx=95.0, speed=4.5, hold_frames=10)


def main() -> int:
    models_dir = os.path.join(ROOT, "models")
    os.makedirs(models_dir, exist_ok=True)

    cascade = recipes.train_face_cascade(0)
    fd.save_cascade(cascade, os.path.join(models_dir, "face.cascade"))
    net, _, (X, y, tr, te) = recipes.train_gesture_moe(100, 0)
    moe.save_moe(os.path.join(models_dir, "gestures.moe"), net, {"experts": 3, "hidden": 20})
    pca, gallery = recipes.fit_face_gallery(10, 12, 0)
    save_faces(os.path.join(models_dir, "faces.pca"), pca, gallery)

    # a small features file and the confusion matrix the fixture model gives on it
    Xf, yf = recipes.gesture_features(20, 11)
    write_features_csv(os.path.join(ROOT, "features.csv"), Xf, yf)
    _, tef = synth.split_half(yf, 0)
    rows, cm = ev.evaluate(net, Xf[tef], yf[tef])
    with open(os.path.join(ROOT, "golden_table.csv"), "w") as fh:
        fh.write(ev.table_csv(rows))
    with open(os.path.join(ROOT, "golden_confusion.csv"), "w") as fh:
        fh.write(ev.confusion_csv(cm))

    ep = synth.render_episode(smoke_scene())
    ep.frames, ep.truth = ep.frames[:10], ep.truth[:10]
    synth.write_episode(os.path.join(ROOT, "smoke"), ep)

    cfg = PipelineConfig(cascade_path="models/face.cascade", moe_path="models/gestures.moe", faces_path="models/faces.pca")
    with open(os.path.join(ROOT, "smoke.cfg"), "w") as fh:
        fh.write("# pipeline configuration for the smoke fixture\n" + dump_config(cfg))

    events, _ = run_pipeline(ep.frames, Models(cascade, net, pca, gallery), PipelineConfig())
    print("smoke events:", [e.to_json() for e in events])
    return 0 if len(events) == 1 and events[0].command == "Next" else 1


if __name__ == "__main__":
    sys.exit(main())
