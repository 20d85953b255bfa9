import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gesturehci import tracking as tr
from gesturehci.app import synth
from gesturehci.segmentation import SegmentConfig, segment
from gesturehci.tracking import (
    ParticleSet,
    TargetLost,
    TrackConfig,
    Trigger,
    TriggerConfig,
    check_trigger,
    distance,
    init_particles,
    step,
    systematic_resample,
)


def blob_frame(cx, cy, shape=(120, 160), r=12, bg=synth.BACKGROUNDS[0]):
    img = np.empty(shape + (3,), np.uint8)
    img[:] = bg
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    img[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = synth.SKIN
    return img


def hand_of(frame):
    return segment(frame, SegmentConfig(min_area_frac=0.0)).components[0]


def test_init_weights_are_exactly_uniform():
    f = blob_frame(60, 50)
    for n in (1, 3, 100, 257):
        ps = init_particles(hand_of(f), f, n, seed=0)
        assert ps.n == n and np.all(ps.weights == 1.0 / n)


def test_single_particle_without_spread_sits_on_centroid():
    f = blob_frame(60, 50)
    h = hand_of(f)
    ps = init_particles(h, f, 1, seed=0, cfg=TrackConfig(init_sigma=0.0))
    assert (ps.x[0], ps.y[0]) == h.centroid


def test_init_is_deterministic():
    f = blob_frame(60, 50)
    a = init_particles(hand_of(f), f, 50, seed=4)
    b = init_particles(hand_of(f), f, 50, seed=4)
    for k in ("x", "y", "weights", "ref_hist"):
        assert np.array_equal(getattr(a, k), getattr(b, k))
    assert a.box == b.box


def test_init_needs_a_particle():
    f = blob_frame(60, 50)
    with pytest.raises(ValueError):
        init_particles(hand_of(f), f, 0)


def test_reference_histogram_is_normalised():
    f = blob_frame(60, 50)
    ps = init_particles(hand_of(f), f, 10, seed=0)
    assert ps.ref_hist.shape == (512,)
    assert ps.ref_hist.sum() == pytest.approx(1.0, abs=1e-12)


def test_static_blob_without_motion_noise():
    f = blob_frame(70, 55)
    rng = np.random.default_rng(0)
    cfg = TrackConfig(sigma_motion=0.0)
    ps = init_particles(hand_of(f), f, seed=rng, cfg=cfg)
    ests = []
    for _ in range(50):
        ps, est = step(ps, f, rng, cfg)
        assert ps.weights.sum() == pytest.approx(1.0, abs=1e-12)
        ests.append(est)
    ests = np.array(ests)
    assert np.abs(ests - (70, 55)).max() <= 1.0
    assert np.ptp(ests[:, 0]) <= 1.0 and np.ptp(ests[:, 1]) <= 1.0


def test_linear_motion_at_3px_per_frame():
    shape = (140, 400)
    path = [(40 + 3 * i, 60 + 0.4 * i) for i in range(100)]
    frames = [blob_frame(x, y, shape) for x, y in path]
    rng = np.random.default_rng(1)
    ps = init_particles(hand_of(frames[0]), frames[0], seed=rng)
    errs = []
    for f, (x, y) in zip(frames[1:], path[1:]):
        ps, est = step(ps, f, rng)
        errs.append(math.hypot(est[0] - x, est[1] - y))
    assert np.mean(errs) <= 10.0


def test_step_keeps_particle_count_and_normalises():
    f = blob_frame(70, 55)
    rng = np.random.default_rng(2)
    ps = init_particles(hand_of(f), f, 64, seed=rng)
    for _ in range(5):
        ps, _ = step(ps, f, rng)
        assert ps.n == 64
        assert abs(ps.weights.sum() - 1.0) <= 1e-12
        assert np.all(ps.weights >= 0)


def test_step_is_deterministic_for_a_seed():
    f = blob_frame(70, 55)
    a = init_particles(hand_of(f), f, seed=3)
    b = init_particles(hand_of(f), f, seed=3)
    (pa, ea), (pb, eb) = step(a, f, 11), step(b, f, 11)
    assert ea == eb and np.array_equal(pa.x, pb.x)


def test_lost_target_raises():
    f = blob_frame(70, 55)
    ps = init_particles(hand_of(f), f, seed=0)
    empty = blob_frame(-100, -100)
    with pytest.raises(TargetLost):
        step(ps, empty, 0)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=50), st.floats(0, 0.999999))
def test_systematic_resample(ws, u0):
    w = np.array(ws) / np.sum(ws)
    idx = systematic_resample(w, u0)
    assert len(idx) == len(w)
    assert idx.min() >= 0 and idx.max() < len(w)
    assert np.all(np.diff(idx) >= 0)
    # each particle is copied floor or ceil of n * w times
    counts = np.bincount(idx, minlength=len(w))
    assert np.all(np.abs(counts - len(w) * w) < 1 + 1e-9)


def test_degenerate_weights_trigger_resampling():
    f = blob_frame(70, 55)
    ps = init_particles(hand_of(f), f, 40, seed=0, cfg=TrackConfig(init_sigma=0.0))
    # three quarters of the particles sit on background and get zero likelihood
    ps.x[10:], ps.y[10:] = 5.0, 5.0
    out, _ = step(ps, f, 0, TrackConfig(sigma_motion=0.0))
    assert out.n == 40
    assert np.all(out.weights == 1.0 / 40)
    assert np.all(out.x == 70.0)


@given(st.integers(0, 2**32 - 1))
def test_estimate_ignores_particle_order(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    x, y = rng.uniform(0, 100, n), rng.uniform(0, 100, n)
    w = rng.random(n)
    w /= w.sum()
    p = rng.permutation(n)
    a = ParticleSet(x, y, w, np.ones(1), (4, 4)).estimate()
    b = ParticleSet(x[p], y[p], w[p], np.ones(1), (4, 4)).estimate()
    assert a == pytest.approx(b, abs=1e-9)


def test_distance_examples():
    assert distance((0, 0), (0, 0)) == 0
    assert distance((0, 0), (3, 4)) == 5
    assert distance((10, 10), (13, 14)) == 5


pts = st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))


@given(pts, pts, pts)
def test_distance_is_a_metric(a, b, c):
    assert distance(a, b) == distance(b, a)
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9


def test_trigger_boundary_is_inclusive():
    cfg = TriggerConfig(75.0)
    assert check_trigger(75.0, cfg) is Trigger.PROCEED
    assert check_trigger(np.nextafter(75.0, 100.0), cfg) is Trigger.STAY
    assert check_trigger(0.0, cfg) is Trigger.PROCEED


def test_trigger_config_validated():
    with pytest.raises(ValueError):
        TriggerConfig(0.0)
    with pytest.raises(ValueError):
        check_trigger(-1.0, TriggerConfig(1.0))


def test_histogram_similarity_of_identical_regions_is_one():
    f = blob_frame(70, 55)
    h = tr.region_hist(f, (70, 55), (24, 24))
    assert tr.bhattacharyya(h, h) == pytest.approx(1.0, abs=1e-12)
