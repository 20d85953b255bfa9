import dataclasses
import filecmp
import json
import os

import numpy as np
import pytest

from gesturehci import moe
from gesturehci.app import datasets, synth
from gesturehci.app import evaluate as ev
from gesturehci.app.config import ConfigError, PipelineConfig, dump_config, load_config, parse_config
from gesturehci.app.models import gesture_features
from gesturehci.app.pipeline import (
    ControlEvent,
    ModelLoadError,
    Pipeline,
    State,
    load_models,
    map_command,
    run_pipeline,
)

LEGAL = {
    ("Detecting", "Detecting"),
    ("Detecting", "Tracking"),
    ("Tracking", "Tracking"),
    ("Tracking", "Recognizing"),
    ("Recognizing", "Recognizing"),
    ("Recognizing", "Tracking"),
    ("Recognizing", "Acting"),
    ("Acting", "Acting"),
    ("Acting", "Tracking"),
}


@pytest.fixture(scope="module")
def smoke_frames(fixtures_dir):
    return datasets.read_frames(os.path.join(fixtures_dir, "smoke"))


@pytest.fixture(scope="module")
def long_episode():
    scene = dataclasses.replace(synth.random_scene(21, gesture="G4"), hold_frames=60)
    return synth.render_episode(scene)


# --- config -------------------------------------------------------------------


def test_config_round_trip():
    cfg = PipelineConfig(cooldown=7, trigger_multiplier=1.75, moe_path="/m/g.moe", seed=4)
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config(dump_config(PipelineConfig())) == PipelineConfig()


def test_config_comments_and_values():
    cfg = parse_config("# comment\n\nskin.cb_min = 80\npf.particles=50\n")
    assert cfg.segment.rule.cb[0] == 80 and cfg.track.n_particles == 50


@pytest.mark.parametrize(
    "text,where",
    [("no_such.key = 1\n", ":1:"), ("\nseed = x\n", ":2:"), ("seed\n", ":1:"), ("skin.cb_min = 200\n", ":1:")],
)
def test_config_errors_name_the_line(text, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(text)


def test_relative_model_paths_resolve_against_config_dir(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("model.moe = models/g.moe\nmodel.faces = /abs/f.pca\n")
    cfg = load_config(p)
    assert cfg.moe_path == os.path.join(str(tmp_path), "models/g.moe")
    assert cfg.faces_path == "/abs/f.pca"


def test_missing_model_file_names_the_path(tmp_path, fixtures_dir):
    cfg = load_config(os.path.join(fixtures_dir, "smoke.cfg"))
    bad = dataclasses.replace(cfg, moe_path=str(tmp_path / "nope.moe"))
    with pytest.raises(ModelLoadError, match="nope.moe"):
        load_models(bad)


# --- commands -----------------------------------------------------------------


@pytest.mark.parametrize(
    "g,cmd", [("G1", "Stop"), ("G2", "Play"), ("G3", "Next"), ("G4", "VolumeUp"), ("G5", "VolumeDown"), (3, "Next")]
)
def test_map_command(g, cmd):
    assert map_command(g) == cmd


def test_unknown_gesture():
    with pytest.raises(ValueError):
        map_command("G6")


def test_event_json_layout():
    e = ControlEvent(4, 3, "Next", 0.91234567, "dave")
    assert json.loads(e.to_json()) == {"frame": 4, "gesture": "G3", "command": "Next", "confidence": 0.912346, "identity": "dave"}


# --- pipeline -----------------------------------------------------------------


def test_no_frames_no_events(fixture_models):
    models, cfg = fixture_models
    assert run_pipeline([], models, cfg) == ([], [])


def test_smoke_episode_gives_one_next(fixture_models, smoke_frames):
    models, cfg = fixture_models
    events, trace = run_pipeline(smoke_frames, models, cfg)
    assert [e.command for e in events] == ["Next"]
    assert len(trace) == len(smoke_frames) == 10


def test_runs_are_bit_identical(fixture_models, smoke_frames):
    models, cfg = fixture_models
    a = run_pipeline(smoke_frames, models, cfg)
    b = run_pipeline(smoke_frames, models, cfg)
    assert [e.to_json() for e in a[0]] == [e.to_json() for e in b[0]]
    assert [r.to_dict() for r in a[1]] == [r.to_dict() for r in b[1]]


def test_state_machine_on_a_long_hold(fixture_models, long_episode):
    models, cfg = fixture_models
    events, trace = run_pipeline(long_episode.frames, models, cfg)
    assert len(events) >= 2
    for r in trace:
        assert (r.state, r.next_state) in LEGAL or r.next_state == "Detecting"
    for e in events:
        row = trace[e.frame]
        assert row.state == "Recognizing" and row.trigger == "proceed"
        assert e.command == "VolumeUp" and e.identity == synth.IDENTITIES[long_episode.scene.identity].name
    frames = [e.frame for e in events]
    assert frames == sorted(frames)
    assert all(b - a > cfg.cooldown for a, b in zip(frames, frames[1:]))


def test_no_cooldown_allows_back_to_back_events(fixture_models, long_episode):
    models, cfg = fixture_models
    events, _ = run_pipeline(long_episode.frames, models, dataclasses.replace(cfg, cooldown=0))
    with_cd, _ = run_pipeline(long_episode.frames, models, cfg)
    assert len(events) > len(with_cd)


def test_process_returns_the_event(fixture_models, smoke_frames):
    models, cfg = fixture_models
    p = Pipeline(models, cfg)
    got = [p.process(f) for f in smoke_frames]
    assert [e for e in got if e is not None] == p.events
    assert p.state in State


def test_rejected_viewer_emits_nothing(fixture_models, smoke_frames):
    models, cfg = fixture_models
    strict = dataclasses.replace(models, gallery=dataclasses.replace(models.gallery, threshold=1e-9))
    events, trace = run_pipeline(smoke_frames, strict, cfg)
    assert events == []
    assert any("FaceNotVerified" in r.note for r in trace)


def test_blank_frames_stay_in_detecting(fixture_models):
    models, cfg = fixture_models
    frames = [np.full((192, 256, 3), 90, np.uint8)] * 3
    events, trace = run_pipeline(frames, models, cfg)
    assert events == [] and all(r.next_state == "Detecting" for r in trace)


# --- evaluation -----------------------------------------------------------------


def test_perfect_classifier_table():
    y = np.repeat(np.arange(1, 6), 4)
    rows = ev.recognition_table(y, y)
    assert [(r.na, r.ncr, r.ar) for r in rows] == [(4, 4, 100.0)] * 5
    assert np.array_equal(moe.confusion_matrix(y, y), 4 * np.eye(5, dtype=int))


def test_always_g1_classifier():
    y = np.array([1, 1, 2, 3, 3, 3, 4, 5])
    pred = np.ones_like(y)
    rows = ev.recognition_table(y, pred)
    assert [r.ar for r in rows] == [100.0, 0.0, 0.0, 0.0, 0.0]
    cm = moe.confusion_matrix(y, pred)
    assert cm[:, 0].tolist() == [2, 1, 3, 1, 1] and cm[:, 1:].sum() == 0


def test_empty_class_is_undefined():
    y = np.array([1, 2, 2, 4, 5])
    text = ev.table_csv(ev.recognition_table(y, y))
    assert "G3,0,0,undefined" in text.splitlines()


def test_confusion_rows_sum_to_class_sizes():
    rng = np.random.default_rng(0)
    y, p = rng.integers(1, 6, 200), rng.integers(1, 6, 200)
    rows = ev.recognition_table(y, p)
    assert moe.confusion_matrix(y, p).sum(axis=1).tolist() == [r.na for r in rows]


def test_golden_tables_are_byte_identical(fixtures_dir, fixture_models):
    models, _ = fixture_models
    X, y, _, te = datasets.gesture_set(os.path.join(fixtures_dir, "features.csv"), seed=0)
    rows, cm = ev.evaluate(models.moe, X[te], y[te])
    with open(os.path.join(fixtures_dir, "golden_table.csv")) as fh:
        assert ev.table_csv(rows) == fh.read()
    with open(os.path.join(fixtures_dir, "golden_confusion.csv")) as fh:
        assert ev.confusion_csv(cm) == fh.read()


def test_episode_scoring_counts_approach_events(long_episode):
    first_hold = next(t.index for t in long_episode.truth if t.phase == "hold")
    early = ControlEvent(first_hold - 1, 4, "VolumeUp", 1.0, "x")
    late = ControlEvent(first_hold + 2, 4, "VolumeUp", 1.0, "x")
    assert ev.score_episode(long_episode, [late]).correct
    bad = ev.score_episode(long_episode, [early])
    assert bad.approach_events == 1 and not bad.correct
    assert not ev.score_episode(long_episode, [late, late]).correct


# --- synthetic data ---------------------------------------------------------------


def test_gesture_dataset_is_reproducible(tmp_path):
    synth.write_gesture_dataset(tmp_path / "a", 2, seed=3)
    synth.write_gesture_dataset(tmp_path / "b", 2, seed=3)
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert not mismatch and not errors


def test_gesture_dataset_counts_and_split(tmp_path):
    synth.write_gesture_dataset(tmp_path, 4, seed=1)
    X, y, tr, te = datasets.gesture_set(str(tmp_path))
    assert X.shape == (20, 17)
    assert np.bincount(y, minlength=6)[1:].tolist() == [4] * 5
    assert np.bincount(y[tr], minlength=6)[1:].tolist() == [2] * 5
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(20))


def test_templates_separate_under_nearest_centroid():
    X, y = gesture_features(20, seed=5)
    tr, te = synth.split_half(y, 5)
    mu, sd = X[tr].mean(axis=0), X[tr].std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    cents = np.stack([Z[tr][y[tr] == c].mean(axis=0) for c in range(1, 6)])
    pred = np.argmin(((Z[te][:, None, :] - cents[None]) ** 2).sum(axis=2), axis=1) + 1
    assert np.mean(pred == y[te]) >= 0.9


def test_hand_templates_respect_variation_limits():
    base = synth.hand_mask("G1", 60.0, vary=False)
    for s in range(10):
        m = synth.hand_mask("G1", 60.0, np.random.default_rng(s))
        assert 0.6 <= m.sum() / base.sum() <= 1.5


def test_episode_truth(long_episode):
    t = long_episode.truth
    phases = [r.phase for r in t]
    k = phases.index("hold")
    assert all(p == "approach" for p in phases[:k]) and all(p == "hold" for p in phases[k:])
    assert all(r.distance > r.threshold for r in t[:k]) and t[k].distance <= t[k].threshold
    assert len(long_episode.frames) == len(t)


def test_episode_files(tmp_path, long_episode):
    synth.write_episode(tmp_path, long_episode)
    frames = datasets.read_frames(str(tmp_path))
    assert len(frames) == len(long_episode.frames)
    assert np.array_equal(frames[3], long_episode.frames[3])


def test_face_dataset_round_trip(tmp_path):
    synth.write_face_dataset(tmp_path, 2, seed=0)
    patches, names = datasets.face_set(str(tmp_path))
    assert len(patches) == 10 and sorted(set(names)) == sorted(i.name for i in synth.IDENTITIES)
    assert patches[0].shape == (32, 32)


def test_dataset_errors(tmp_path):
    with pytest.raises(datasets.DatasetError, match="labels.csv"):
        datasets.gesture_set(str(tmp_path))
    (tmp_path / "labels.csv").write_text("file,label,split\n0000.pnm,1,train\n")
    (tmp_path / "0000.pnm").write_bytes(b"P6\n2 2\n255\n\x00")
    with pytest.raises(datasets.DatasetError, match="0000.pnm"):
        datasets.gesture_set(str(tmp_path))
    with pytest.raises(datasets.DatasetError):
        datasets.frame_paths(str(tmp_path / "missing"))


def test_blob_sequence_speed_bound():
    _, centres = synth.blob_sequence(3, max_speed=5.0)
    steps = np.hypot(*np.diff(np.array(centres), axis=0).T)
    assert steps.max() <= 5.0 + 1e-9
