import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gssref._validation import InvalidInputError
from gssref.gss import (
    GuidedCACGMM,
    activity_from_segments,
    activity_grid,
    normalize_observations,
    target_noise_masks,
)

from conftest import crandn


def test_normalize_example():
    unit, valid = normalize_observations(np.array([3.0, 4.0j]))
    np.testing.assert_allclose(unit, [0.6, 0.8j])
    assert valid


def test_normalize_zero_vector_flagged():
    unit, valid = normalize_observations(np.zeros((3, 2, 2)))
    assert not unit.any()
    assert not valid.any()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), m=st.integers(1, 6))
def test_normalized_vectors_have_unit_norm(seed, m):
    rng = np.random.default_rng(seed)
    unit, _ = normalize_observations(crandn(rng, m, 5, 7))
    np.testing.assert_allclose(np.linalg.norm(unit, axis=0), 1.0, atol=1e-12)


def sample_cacg(rng, B, n):
    """Draw n unit vectors from a complex ACG with shape matrix B."""
    root = np.linalg.cholesky(B)
    g = crandn(rng, B.shape[0], n) / np.sqrt(2)
    z = root @ g
    return z / np.linalg.norm(z, axis=0)


def synthetic_mixture(rng, n_freqs=4, n_frames=300, m=2):
    """Two talkers with orthogonal steering e1, e2; background class always active."""
    e = np.eye(m)
    shapes = [np.outer(e[0], e[0]) + 0.02 * np.eye(m), np.outer(e[1], e[1]) + 0.02 * np.eye(m)]
    act = np.zeros((2, n_frames), dtype=bool)
    act[0, : 2 * n_frames // 3] = True
    act[1, n_frames // 3 :] = True
    truth = np.where(act[0] & act[1], rng.integers(0, 2, n_frames), np.where(act[0], 0, 1))
    Y = np.zeros((m, n_freqs, n_frames), dtype=complex)
    for f in range(n_freqs):
        for k in range(2):
            idx = np.flatnonzero(truth == k)
            Y[:, f, idx] = sample_cacg(rng, shapes[k], idx.size) * rng.uniform(0.5, 2, idx.size)
    return Y, activity_grid(act), truth


def test_recovers_generating_class(rng):
    Y, act, truth = synthetic_mixture(rng)
    post = GuidedCACGMM().fit_predict_proba(Y, act)
    avg = np.mean([post[truth[l], :, l].mean() for l in range(Y.shape[-1])])
    assert avg >= 0.9


def test_activity_gating_is_exact(rng):
    Y, act, _ = synthetic_mixture(rng)
    post = GuidedCACGMM().fit_predict_proba(Y, act)
    assert np.all(post[~act[:, None, :].repeat(Y.shape[1], 1)] == 0.0)
    mu_x, mu_n = target_noise_masks(post, 0)
    assert np.all(mu_x[:, ~act[0]] == 0.0)
    assert np.all(mu_n[:, ~act[0]] == 1.0)
    np.testing.assert_allclose(post.sum(axis=0), 1.0, atol=1e-10)


def test_single_active_class_gets_full_mask(rng):
    Y = crandn(rng, 3, 4, 50)
    act = activity_grid(np.zeros((1, 50), dtype=bool))
    post = GuidedCACGMM().fit_predict_proba(Y, act)
    assert np.all(post[-1] == 1.0)
    assert np.all(post[0] == 0.0)


def test_log_likelihood_non_decreasing(rng):
    Y, act, _ = synthetic_mixture(rng)
    Y += 0.1 * crandn(rng, *Y.shape)
    ll = GuidedCACGMM(iterations=8).fit(Y, act).log_likelihood_
    assert np.all(np.diff(ll) >= -1e-6 * np.abs(ll[:-1]))


def test_concentrations_hermitian_trace_m(rng):
    Y, act, _ = synthetic_mixture(rng)
    est = GuidedCACGMM().fit(Y, act)
    B = est.concentrations_
    assert np.max(np.abs(B - B.conj().swapaxes(-1, -2))) <= 1e-10
    np.testing.assert_allclose(np.trace(B, axis1=-2, axis2=-1).real, 2.0, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(B) > 0)
    np.testing.assert_allclose(est.priors_.sum(axis=1), 1.0)


def test_permutation_consistency(rng):
    Y, act, _ = synthetic_mixture(rng)
    post = GuidedCACGMM().fit_predict_proba(Y, act)
    perm = [1, 0, 2]
    post_p = GuidedCACGMM().fit_predict_proba(Y, act[perm])
    np.testing.assert_allclose(post_p, post[perm], atol=1e-10)


def test_predict_proba_reproduces_final_posteriors(rng):
    Y, act, _ = synthetic_mixture(rng)
    est = GuidedCACGMM().fit(Y, act)
    np.testing.assert_allclose(est.predict_proba(Y, act), est.posteriors_, atol=1e-12)


def test_zero_bins_are_excluded(rng):
    Y, act, _ = synthetic_mixture(rng)
    Y[:, 0, :10] = 0
    est = GuidedCACGMM().fit(Y, act)
    assert est.n_excluded_ == 10
    assert np.all(np.isfinite(est.posteriors_))


def test_mask_pair_examples():
    masks = np.array([[[0.7]], [[0.3]]])
    mu_x, mu_n = target_noise_masks(masks, 0)
    assert mu_n[0, 0] == pytest.approx(0.3)
    with pytest.raises(InvalidInputError):
        target_noise_masks(masks, 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), c=st.integers(2, 5))
def test_mask_pair_sums_to_one(seed, c):
    rng = np.random.default_rng(seed)
    raw = rng.random((c, 3, 4))
    masks = raw / raw.sum(axis=0)
    mu_x, mu_n = target_noise_masks(masks, 0)
    np.testing.assert_allclose(mu_x + mu_n, 1.0, atol=1e-12)


def test_invalid_activity(rng):
    Y = crandn(rng, 2, 3, 20)
    bad = np.ones((2, 20), dtype=bool)
    bad[-1, 3] = False
    with pytest.raises(InvalidInputError):
        GuidedCACGMM().fit(Y, bad)
    with pytest.raises(InvalidInputError):
        GuidedCACGMM().fit(Y[:1], np.ones((2, 20), dtype=bool))


def test_rasterize_half_overlap_rule():
    # frame_len 8, shift 4: frame l spans samples [4l - 4, 4l + 4)
    segs = [("a", 8 / 1000, 14 / 1000)]
    act = activity_from_segments(segs, ["a"], 6, 8, 4, sample_rate=1000)
    # frame 2 covers [4, 12) -> 4 of 8 samples; frame 3 covers [8, 16) -> 6; frame 4 [12, 20) -> 2
    np.testing.assert_array_equal(act[0], [0, 0, 1, 1, 0, 0])
    assert act[1].all()
