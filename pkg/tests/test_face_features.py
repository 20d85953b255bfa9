import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gesturehci import face_features as ff
from gesturehci.app import synth
from gesturehci.face_features import (
    Gallery,
    build_gallery,
    fit_pca,
    jacobi_eigh,
    load_faces,
    project,
    reconstruct,
    save_faces,
    verify,
)


@pytest.fixture(scope="module")
def faces():
    return synth.face_samples(6, seed=1)


def rms(a, b):
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_jacobi_matches_definition(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    a = a + a.T
    vals, vecs = jacobi_eigh(a)
    assert np.all(np.diff(vals) <= 0)
    assert np.allclose(vecs.T @ vecs, np.eye(n), atol=1e-8)
    assert np.allclose(a @ vecs, vecs * vals, atol=1e-7)


def test_points_on_a_line():
    t = np.linspace(-3, 5, 40)
    pts = np.stack([t, 2 * t], axis=1) + (7.0, -1.0)
    m = fit_pca(pts, 1)
    cos = abs(m.components[0] @ np.array([1.0, 2.0]) / np.sqrt(5))
    assert cos >= 1 - 1e-6


@given(st.integers(0, 2**32 - 1))
def test_components_orthonormal_and_sorted(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(3, 30)), int(rng.integers(2, 40))
    X = rng.normal(size=(n, d)) * rng.uniform(0.1, 5, d)
    k = int(rng.integers(1, min(n - 1, d) + 1))
    m = fit_pca(X, k)
    assert np.allclose(m.components @ m.components.T, np.eye(k), rtol=0, atol=1e-8)
    assert np.all(m.eigenvalues >= 0)
    assert np.all(np.diff(m.eigenvalues) <= 1e-9 * max(1.0, m.eigenvalues[0]))


def test_eigenvalues_are_sample_variances():
    X = np.random.default_rng(0).normal(size=(50, 4)) * (5, 3, 2, 1)
    m = fit_pca(X, 4)
    ref = np.sort(np.linalg.eigvalsh(np.cov(X.T)))[::-1]
    assert np.allclose(m.eigenvalues, ref, rtol=1e-9)


def test_sign_convention():
    X = np.random.default_rng(1).normal(size=(20, 6))
    for row in fit_pca(X, 4).components:
        assert row[np.argmax(np.abs(row))] > 0


def test_k_range_checked():
    X = np.zeros((5, 3))
    with pytest.raises(ValueError):
        fit_pca(X, 0)
    with pytest.raises(ValueError):
        fit_pca(X, 4)
    with pytest.raises(ValueError):
        fit_pca(X[:1], 1)


def test_mixed_sizes_rejected():
    with pytest.raises(ValueError):
        fit_pca([np.zeros((4, 4)), np.zeros((4, 5))], 1)


def test_mean_projects_to_zero(faces):
    m = fit_pca(faces[0], 8)
    assert np.allclose(project(m.mean, m), 0, atol=1e-9)


def test_full_rank_reconstruction(faces):
    patches = faces[0]
    m = fit_pca(patches, len(patches) - 1)
    for f in patches:
        assert rms(reconstruct(project(f, m), m), f) <= 1e-6


def test_size_mismatch_rejected(faces):
    m = fit_pca(faces[0], 3)
    with pytest.raises(ValueError):
        project(np.zeros((8, 8)), m)
    with pytest.raises(ValueError):
        reconstruct(np.zeros(4), m)


def test_reconstruction_error_non_increasing_in_k(faces):
    held_out, _ = synth.face_samples(2, seed=99)
    prev = np.inf
    for k in range(1, len(faces[0])):
        m = fit_pca(faces[0], k)
        mse = np.mean([rms(reconstruct(project(f, m), m), f) ** 2 for f in held_out])
        assert mse <= prev + 1e-9
        prev = mse


def test_translation_equivariance(faces):
    X = np.stack([f.ravel() for f in faces[0]])
    shift = np.random.default_rng(2).normal(size=X.shape[1]) * 40
    a, b = fit_pca(X, 6), fit_pca(X + shift, 6)
    assert np.allclose(b.mean, a.mean + shift, atol=1e-8)
    assert np.allclose(a.components, b.components, atol=1e-8)


def test_self_query_is_accepted_at_distance_zero(faces):
    patches, names = faces
    m = fit_pca(patches, 10)
    g = build_gallery(m, patches, names)
    for f, n in zip(patches, names):
        who, d = verify(f, m, g)
        assert who == n and d == pytest.approx(0.0, abs=1e-9)


def test_far_query_is_rejected(faces):
    patches, names = faces
    m = fit_pca(patches, 10)
    g = build_gallery(m, patches, names)
    # move along the first component past every gallery vector
    reach = np.linalg.norm(g.vectors, axis=1).max() + 2 * g.threshold
    who, d = verify(m.mean + reach * m.components[0], m, g)
    assert who is None and d > g.threshold


def test_gallery_order_does_not_matter(faces):
    patches, names = faces
    m = fit_pca(patches, 10)
    g1 = build_gallery(m, patches, names)
    p = np.random.default_rng(3).permutation(len(patches))
    g2 = build_gallery(m, [patches[i] for i in p], [names[i] for i in p])
    assert g1.threshold == pytest.approx(g2.threshold)
    queries, _ = synth.face_samples(1, seed=7)
    for q in queries:
        (a, da), (b, db) = verify(q, m, g1), verify(q, m, g2)
        assert a == b and da == pytest.approx(db, abs=1e-9)


def test_exact_tie_goes_to_lowest_identity():
    g = Gallery(["a", "b"], np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1, 0]), 5.0)
    assert ff.nearest(np.zeros(2), g) == (0, 1.0)


def test_gallery_validation():
    with pytest.raises(ValueError):
        Gallery([], np.zeros((0, 2)), np.zeros(0, int), 1.0)
    with pytest.raises(ValueError):
        Gallery(["a"], np.zeros((1, 2)), np.zeros(1, int), 0.0)


def test_leave_one_out_verification():
    patches, names = synth.face_samples(10, seed=5)
    hits = 0
    for i in range(len(patches)):
        rest = [j for j in range(len(patches)) if j != i]
        m = fit_pca([patches[j] for j in rest], 12)
        g = build_gallery(m, [patches[j] for j in rest], [names[j] for j in rest])
        hits += verify(patches[i], m, g)[0] == names[i]
    assert hits >= 0.95 * len(patches)


def test_save_load_round_trip(tmp_path, faces):
    patches, names = faces
    m = fit_pca(patches, 5)
    g = build_gallery(m, patches, names)
    save_faces(tmp_path / "f.model", m, g)
    m2, g2 = load_faces(tmp_path / "f.model")
    assert np.array_equal(m.components, m2.components) and m2.shape == m.shape
    assert g2.identities == g.identities and g2.threshold == g.threshold
    assert verify(patches[0], m2, g2) == verify(patches[0], m, g)


def test_face_patch_size():
    frame, box = synth.face_frame(synth.IDENTITIES[0], np.random.default_rng(0))
    p = ff.face_patch(frame, box)
    assert p.shape == (32, 32) and p.dtype == np.float64


def test_masked_patch_ignores_backdrop():
    ident = synth.IDENTITIES[1]
    a, _ = synth.face_frame(ident, np.random.default_rng(0), width=48, center=(80, 70))
    b = a.copy()
    mask, box = synth.face_component(a)
    b[~mask] = (255, 0, 255)
    box = synth.square_box(box)
    assert np.array_equal(ff.face_patch(a, box, mask=mask), ff.face_patch(b, box, mask=mask))
    assert not np.array_equal(ff.face_patch(a, box), ff.face_patch(b, box))
    with pytest.raises(ValueError):
        ff.face_patch(a, box, mask=mask[1:])
