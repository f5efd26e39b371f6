import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srlab.datagen import (DatasetSpec, DegenerateModel, InsufficientData, MndModel, build_dataset,
                           collect_rollouts, fit_mnd, sample_mnd, sample_ud)
from srlab.safety import StateRanges


@pytest.mark.parametrize("alpha,n_ud", [(0.0, 0), (0.5, 500), (1.0, 1000), (0.0005, 1), (0.0015, 2)])
def test_ud_count_rounds_half_up(alpha, n_ud):
    spec = DatasetSpec(k=1000, alpha=alpha)
    assert spec.n_ud == n_ud and spec.n_ud + spec.n_mnd == 1000


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5000), st.floats(0, 1))
def test_counts_always_sum_to_k(k, alpha):
    spec = DatasetSpec(k=k, alpha=alpha)
    assert 0 <= spec.n_ud <= k and spec.n_ud + spec.n_mnd == k


def test_alpha_out_of_range():
    with pytest.raises(ValueError):
        DatasetSpec(alpha=1.5)


def test_ud_samples_inside_ranges(ranges, rng):
    X = sample_ud(5000, ranges, rng)
    assert X.shape == (5000, 6) and np.all(ranges.contains(X))
    assert sample_ud(0, ranges, rng).shape == (0, 6)


def test_rollouts_start_upright_and_stop_at_ground(nominal, sim):
    X = collect_rollouts(nominal, sim, 5, 300, np.random.default_rng(0))
    assert np.array_equal(X[0], np.zeros(6))
    # every episode ends at the ground or the length limit
    assert np.all(np.abs(X[:, 0]) < np.pi / 2 + 0.5)


def test_rollouts_deterministic(nominal, sim):
    a = collect_rollouts(nominal, sim, 3, 50, np.random.default_rng(5))
    b = collect_rollouts(nominal, sim, 3, 50, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_fit_mnd_recovers_moments(rng):
    X = rng.multivariate_normal(np.arange(6.0), np.diag(np.arange(1.0, 7.0)), size=20000)
    m = fit_mnd(X)
    assert np.allclose(m.mean, np.arange(6.0), atol=0.06)
    assert np.allclose(np.diag(m.covariance), np.arange(1.0, 7.0), rtol=0.05)
    assert np.allclose(m.covariance, m.covariance.T)


def test_fit_mnd_needs_two_states():
    with pytest.raises(InsufficientData):
        fit_mnd(np.zeros((1, 6)))


def test_mnd_roundtrip(rng):
    m = fit_mnd(rng.normal(size=(50, 6)))
    m2 = MndModel.from_dict(m.to_dict())
    assert np.array_equal(m.mean, m2.mean) and np.array_equal(m.covariance, m2.covariance)


def test_truncated_samples_in_range(ranges, rng):
    m = MndModel(np.zeros(6), np.diag([1.0, 4.0, 4.0, 50.0, 100.0, 100.0]))
    X = sample_mnd(m, 500, ranges, rng)
    assert np.all(ranges.contains(X))


def test_truncation_gives_up_far_outside(ranges, rng):
    m = MndModel(np.full(6, 100.0), np.eye(6) * 1e-4)
    with pytest.raises(DegenerateModel):
        sample_mnd(m, 1, ranges, rng)


def test_small_dataset_composition(nominal, gain, sim):
    spec = DatasetSpec(k=40, alpha=0.25, seed=3, rollout_episodes=5, rollout_length=50)
    ds = build_dataset(spec, nominal, gain, sim)
    assert ds.states.shape == (40, 6)
    assert ds.provenance == ["ud"] * 10 + ["mnd"] * 30
    assert set(np.unique(ds.labels)) <= {0, 1}
    again = build_dataset(spec, nominal, gain, sim)
    assert np.array_equal(ds.states, again.states) and np.array_equal(ds.labels, again.labels)


def test_dataset_labels_use_nominal_plant(gain, sim):
    from srlab.dynamics import PendulumParams
    spec = DatasetSpec(k=20, alpha=0.5, seed=1, rollout_episodes=4, rollout_length=40)
    a = build_dataset(spec, PendulumParams(delta=4.0), gain, sim)
    b = build_dataset(spec, PendulumParams(), gain, sim)
    assert np.array_equal(a.labels, b.labels)
