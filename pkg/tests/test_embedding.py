import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srlab.embedding import (CalibrationError, Embedding, TsneConfig, compute_affinities, conditional_affinities,
                             kl_divergence, kl_gradient, loo_knn_accuracy, map_state, map_states,
                             row_perplexities, run_tsne)
from srlab.safety import StateRanges

SMALL = TsneConfig(perplexity=8.0, iterations=300, exaggeration_iters=100, momentum_switch=100, seed=2)


def _blobs(rng, n=60):
    a = rng.normal(0.0, 0.05, size=(n // 2, 6))
    b = rng.normal(0.0, 0.05, size=(n - n // 2, 6)) + 0.6
    X = np.vstack([a, b]) * StateRanges().widths
    z = np.r_[np.zeros(n // 2), np.ones(n - n // 2)].astype(np.int64)
    return X, z


def _entropy_perplexity(row):
    p = row[row > 0]
    return np.exp(-np.sum(p * np.log(p)))


def test_perplexity_calibrated_per_point(rng, ranges):
    X = rng.uniform(ranges.lo, ranges.hi, size=(1000, 6))
    _, sigma, Pc = compute_affinities(X, ranges, 30.0)
    perp = row_perplexities(Pc)
    assert np.max(np.abs(perp - 30.0)) < 1e-3
    # independent recomputation with natural logarithms
    for i in (0, 17, 999):
        assert _entropy_perplexity(Pc[i]) == pytest.approx(30.0, abs=1e-3)
    assert np.all(sigma > 0)


def test_conditional_rows_are_distributions(rng):
    X = rng.normal(size=(40, 6))
    D = ((X[:, None] - X[None]) ** 2).sum(-1)
    P, sigma = conditional_affinities(D, 5.0)
    assert np.allclose(P.sum(axis=1), 1.0) and np.all(np.diag(P) == 0)


def test_bandwidth_matches_gaussian_weights(rng):
    X = rng.normal(size=(30, 6))
    D = ((X[:, None] - X[None]) ** 2).sum(-1)
    P, sigma = conditional_affinities(D, 6.0)
    i = 4
    w = np.exp(-D[i] / (2 * sigma[i] ** 2))
    w[i] = 0.0
    assert np.allclose(P[i], w / w.sum(), rtol=1e-9)


def test_perplexity_out_of_range(rng):
    D = np.ones((5, 5))
    with pytest.raises(CalibrationError):
        conditional_affinities(D, 10.0)


def test_joint_affinities_symmetric(rng, ranges):
    X = rng.uniform(ranges.lo, ranges.hi, size=(50, 6))
    P, _, _ = compute_affinities(X, ranges, 10.0)
    assert np.allclose(P, P.T) and P.sum() == pytest.approx(1.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_kl_gradient_finite_difference(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 6))
    P, _, _ = compute_affinities(X, StateRanges(), 4.0)
    Y = rng.normal(size=(12, 2))
    G = kl_gradient(P, Y)
    h = 1e-6
    for i, d in [(0, 0), (5, 1), (11, 0)]:
        E = np.zeros_like(Y)
        E[i, d] = h
        fd = (kl_divergence(P, Y + E) - kl_divergence(P, Y - E)) / (2 * h)
        assert fd == pytest.approx(G[i, d], rel=1e-5, abs=1e-8)


def test_tsne_separates_blobs(rng, ranges):
    X, z = _blobs(rng)
    emb = run_tsne(X, z, ranges, SMALL)
    assert loo_knn_accuracy(emb.points, z) == 1.0
    post = emb.kl_trace[SMALL.exaggeration_iters:]
    assert emb.final_kl <= post[0]
    assert emb.final_kl >= 0


def test_tsne_deterministic(rng, ranges):
    X, z = _blobs(rng, 30)
    cfg = TsneConfig(perplexity=5.0, iterations=60, exaggeration_iters=20, momentum_switch=20)
    a = run_tsne(X, z, ranges, cfg)
    b = run_tsne(X, z, ranges, cfg)
    assert np.array_equal(a.points, b.points)


def test_map_training_state_returns_its_point(rng, ranges):
    X, z = _blobs(rng, 30)
    emb = run_tsne(X, z, ranges, TsneConfig(perplexity=5.0, iterations=60, exaggeration_iters=20,
                                            momentum_switch=20))
    assert np.array_equal(map_state(X[7], emb, ranges), emb.points[7])
    Y = map_states(X, emb, ranges)
    assert np.array_equal(Y, emb.points)


def test_map_far_state_falls_back_to_nearest(rng, ranges):
    X, z = _blobs(rng, 30)
    emb = run_tsne(X, z, ranges, TsneConfig(perplexity=5.0, iterations=60, exaggeration_iters=20,
                                            momentum_switch=20))
    far = X[0] + 1e4
    y = map_state(far, emb, ranges)
    assert np.all(np.isfinite(y))


def test_embedding_roundtrip(rng, ranges):
    X, z = _blobs(rng, 30)
    emb = run_tsne(X, z, ranges, TsneConfig(perplexity=5.0, iterations=30, exaggeration_iters=10,
                                            momentum_switch=10))
    again = Embedding.from_dict(emb.to_dict())
    assert np.array_equal(again.points, emb.points) and np.array_equal(again.bandwidths, emb.bandwidths)
    assert again.config == emb.config


def test_loo_knn_toy():
    pts = np.array([[0, 0], [0, 1], [1, 0], [10, 10], [10, 11], [11, 10.0]])
    z = np.array([0, 0, 0, 1, 1, 1])
    assert loo_knn_accuracy(pts, z, n_neighbors=1) == 1.0
    assert loo_knn_accuracy(pts, 1 - z, n_neighbors=1) == 1.0
