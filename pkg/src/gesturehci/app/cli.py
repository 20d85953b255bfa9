"""Command-line entry point: ``gesturehci <command> ...``.

Exit status: 0 success, 1 usage error, 2 data error (missing or malformed
input files; the message names the path).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .. import face_detect as fd
from .. import moe
from ..face_features import build_gallery, fit_pca, save_faces
from ..gesture_features import write_features_csv
from ..imaging import PnmError, PnmTruncated, write_pnm
from ..modelio import ModelFormatError
from . import evaluate as ev
from . import models as recipes
from . import synth
from .config import ConfigError, PipelineConfig, load_config
from .datasets import DatasetError, face_set, gesture_set, read_frames
from .pipeline import ModelLoadError, Pipeline, load_models


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


DATA_ERRORS = (OSError, DatasetError, ConfigError, ModelLoadError, ModelFormatError, PnmError, PnmTruncated)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gesturehci", description="Hand-gesture media control on synthetic or PNM video.")
    p.add_argument("--config", help="key = value pipeline configuration file")
    p.add_argument("--seed", type=int, help="overrides the configured seed")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("kind", choices=("gestures", "faces", "episode", "features"))
    s.add_argument("--out", required=True, help="output directory (features: CSV file)")
    s.add_argument("--count", type=int, default=10, help="samples per class / identity")
    s.add_argument("--gesture", choices=synth.GESTURES, help="episode gesture (default: random)")

    s = sub.add_parser("train-cascade", help="train the face cascade on synthetic windows")
    s.add_argument("--out", required=True)
    s.add_argument("--rounds", type=int, default=recipes.CascadeRecipe.rounds, help="boosting rounds of the single stage")
    s.add_argument("--mining-passes", type=int, default=recipes.CascadeRecipe.mining_passes, help="hard-negative retraining passes")
    s.add_argument("--positives", type=int, default=recipes.CascadeRecipe.n_pos)
    s.add_argument("--negatives", type=int, default=recipes.CascadeRecipe.n_neg)

    s = sub.add_parser("train-moe", help="train (a sweep of) mixture-of-experts classifiers")
    s.add_argument("--data", required=True, help="gesture dataset directory or features CSV")
    s.add_argument("--experts", type=_int_list, default=[3])
    s.add_argument("--hidden", type=_int_list, default=[20])
    s.add_argument("--epochs", type=int, default=300)
    s.add_argument("--out", help="write the best model of the sweep here")
    s.add_argument("--log", help="write the per-epoch log of the best model here (CSV)")

    s = sub.add_parser("fit-faces", help="fit the PCA basis and identity gallery")
    s.add_argument("--data", required=True, help="face dataset directory")
    s.add_argument("--k", type=int, default=12)
    s.add_argument("--out", required=True)

    for name, hlp in (("run", "run the pipeline; events as JSON lines on stdout"), ("trace", "run the pipeline and write overlay frames")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("frames", help="directory of PNM frames")
        s.add_argument("--cascade")
        s.add_argument("--moe")
        s.add_argument("--faces")
        if name == "run":
            s.add_argument("--trace", dest="trace_file", help="also write the per-frame trace (JSON lines)")
        else:
            s.add_argument("--out", required=True, help="directory for overlay PNMs")

    s = sub.add_parser("eval", help="recognition table and confusion matrix")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True, help="gesture dataset directory or features CSV")
    s.add_argument("--split", choices=("test", "train", "all"), default="test")
    s.add_argument("--table", help="write the NA/NCR/AR table here (CSV)")
    s.add_argument("--confusion", help="write the confusion matrix here (CSV)")
    return p


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _write(path, text: str):
    with open(path, "w") as fh:
        fh.write(text)


def cmd_synth(args, cfg, out):
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    if args.kind == "gestures":
        synth.write_gesture_dataset(args.out, args.count, cfg.seed)
    elif args.kind == "faces":
        synth.write_face_dataset(args.out, args.count, cfg.seed)
    elif args.kind == "features":
        X, y = recipes.gesture_features(args.count, cfg.seed)
        write_features_csv(args.out, X, y)
    else:
        scene = synth.random_scene(cfg.seed, args.gesture)
        synth.write_episode(args.out, synth.render_episode(scene, cfg.trigger_multiplier))
    print(f"wrote {args.kind} to {args.out}", file=out)


def cmd_train_cascade(args, cfg, out):
    if args.rounds < 1 or args.mining_passes < 0:
        raise UsageError("--rounds must be >= 1 and --mining-passes >= 0")
    recipe = recipes.CascadeRecipe(args.rounds, args.mining_passes, n_pos=args.positives, n_neg=args.negatives)
    cascade = recipes.train_face_cascade(cfg.seed, recipe)
    fd.save_cascade(cascade, args.out)
    print(f"cascade: {len(cascade.stages)} stages, {sum(len(s.weak) for s in cascade.stages)} weak classifiers -> {args.out}", file=out)


def cmd_train_moe(args, cfg, out):
    X, y, tr, te = gesture_set(args.data, cfg.seed, replace(cfg.segment, min_area_frac=0.0))
    if len(te) == 0:
        raise DatasetError(f"{args.data}: no test samples")
    best = None
    print("experts,hidden,accuracy", file=out)
    for e in args.experts:
        for h in args.hidden:
            tc = moe.TrainConfig(epochs=args.epochs, n_experts=e, hidden=h, seed=cfg.seed)
            model, log = moe.train(X[tr], y[tr], X[te], y[te], tc)
            acc = moe.accuracy(model, X[te], y[te])
            print(f"{e},{h},{acc:.4f}", file=out)
            if best is None or acc > best[0]:
                best = (acc, model, log, e, h)
    acc, model, log, e, h = best
    if args.out:
        moe.save_moe(args.out, model, {"experts": e, "hidden": h, "accuracy": f"{acc:.6f}"})
    if args.log:
        _write(args.log, log.to_csv())


def cmd_fit_faces(args, cfg, out):
    faces, names = face_set(args.data, replace(cfg.segment, min_area_frac=0.0))
    if len(set(names)) < 1 or len(faces) < 2:
        raise DatasetError(f"{args.data}: need at least two faces")
    k = min(args.k, len(faces) - 1)
    pca = fit_pca(faces, k)
    gallery = build_gallery(pca, faces, names)
    save_faces(args.out, pca, gallery)
    print(f"faces: {len(faces)} samples, {len(gallery.identities)} identities, k={k}, threshold={gallery.threshold:.3f} -> {args.out}", file=out)


def _pipeline(args, cfg) -> tuple[Pipeline, list[np.ndarray]]:
    cfg = replace(
        cfg,
        cascade_path=args.cascade or cfg.cascade_path,
        moe_path=args.moe or cfg.moe_path,
        faces_path=args.faces or cfg.faces_path,
    )
    models = load_models(cfg)
    frames = read_frames(args.frames)
    return Pipeline(models, cfg), frames


def cmd_run(args, cfg, out):
    pipe, frames = _pipeline(args, cfg)
    for f in frames:
        e = pipe.process(f)
        if e is not None:
            print(e.to_json(), file=out)
    if args.trace_file:
        _write(args.trace_file, "".join(json.dumps(r.to_dict()) + "\n" for r in pipe.trace))


STATE_COLOURS = {"Detecting": (128, 128, 128), "Tracking": (0, 160, 255), "Recognizing": (255, 200, 0), "Acting": (0, 220, 0)}


def _rect(img, box, colour):
    H, W = img.shape[:2]
    x, y, w, h = box
    x0, y0, x1, y1 = max(0, x), max(0, y), min(W - 1, x + w - 1), min(H - 1, y + h - 1)
    if x1 < x0 or y1 < y0:
        return
    img[y0, x0 : x1 + 1] = colour
    img[y1, x0 : x1 + 1] = colour
    img[y0 : y1 + 1, x0] = colour
    img[y0 : y1 + 1, x1] = colour


def overlay(frame, row) -> np.ndarray:
    """Frame with the face box, hand cross and a state bar drawn on it."""
    img = np.array(frame, dtype=np.uint8, copy=True)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    img[:4, :] = STATE_COLOURS.get(row.next_state, (255, 255, 255))
    if row.face is not None:
        _rect(img, row.face, (255, 0, 0))
    if row.hand is not None:
        hx, hy = int(round(row.hand[0])), int(round(row.hand[1]))
        _rect(img, (hx - 3, hy, 7, 1), (0, 255, 0))
        _rect(img, (hx, hy - 3, 1, 7), (0, 255, 0))
    return img


def cmd_trace(args, cfg, out):
    pipe, frames = _pipeline(args, cfg)
    os.makedirs(args.out, exist_ok=True)
    for f in frames:
        e = pipe.process(f)
        row = pipe.trace[-1]
        write_pnm(overlay(f, row), os.path.join(args.out, f"{row.frame:04d}.pnm"))
        if e is not None:
            print(e.to_json(), file=out)
    print(f"wrote {len(frames)} overlay frames to {args.out}", file=sys.stderr)


def cmd_eval(args, cfg, out):
    try:
        model = moe.load_moe(args.model)
    except (OSError, ValueError) as e:
        raise ModelLoadError(f"{args.model}: {e}") from e
    X, y, tr, te = gesture_set(args.data, cfg.seed, replace(cfg.segment, min_area_frac=0.0))
    idx = {"test": te, "train": tr, "all": np.arange(len(y))}[args.split]
    rows, cm = ev.evaluate(model, X[idx], y[idx])
    table, conf = ev.table_csv(rows), ev.confusion_csv(cm)
    if args.table:
        _write(args.table, table)
    if args.confusion:
        _write(args.confusion, conf)
    out.write(table)
    out.write(conf)


COMMANDS = {
    "synth": cmd_synth,
    "train-cascade": cmd_train_cascade,
    "train-moe": cmd_train_moe,
    "fit-faces": cmd_fit_faces,
    "run": cmd_run,
    "trace": cmd_trace,
    "eval": cmd_eval,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg, out)
    except UsageError as e:
        print(f"gesturehci: error: {e}", file=sys.stderr)
        return 1
    except DATA_ERRORS as e:
        print(f"gesturehci: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
