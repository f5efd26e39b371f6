import math

import numpy as np
import pytest

from srlab.dynamics import PendulumParams
from srlab.safety import (LabeledSample, SafetyOracle, StateRanges, label_batch, label_state,
                          normalized_distance, read_labeled_csv, write_labeled_csv)


def test_default_ranges():
    r = StateRanges()
    assert r.widths.tolist() == [math.pi, 2 * math.pi, 2 * math.pi, 20.0, 40.0, 40.0]


def test_theta1_bounds_are_open():
    r = StateRanges()
    edge = np.zeros((2, 6))
    edge[0, 0] = math.pi / 2
    edge[1, 1] = math.pi
    assert r.contains(edge).tolist() == [False, True]


def test_ranges_validation():
    with pytest.raises(ValueError):
        StateRanges(lower=(0,) * 6, upper=(0,) * 6)


def test_normalized_distance_uses_widths():
    r = StateRanges()
    a, b = np.zeros(6), np.zeros(6)
    b[3] = 20.0
    assert normalized_distance(a, b, r) == pytest.approx(1.0)


def test_origin_is_safe_and_falling_state_unsafe(gain, nominal, sim):
    assert label_state(np.zeros(6), nominal, gain, sim) == 1
    assert label_state(np.array([1.5, 0, 0, 8.0, 0, 0]), nominal, gain, sim) == 0


def test_oracle_batch_matches_single(gain, nominal, sim, ranges, rng):
    X = rng.uniform(ranges.lo, ranges.hi, size=(12, 6)) * 0.5
    labels = SafetyOracle(nominal, gain, sim)(X)
    assert labels.tolist() == [label_state(x, nominal, gain, sim) for x in X]
    samples = label_batch(X, nominal, gain, sim)
    assert all(isinstance(s, LabeledSample) for s in samples)
    assert [s.label for s in samples] == labels.tolist()


def test_empty_batch(gain, nominal, sim):
    assert label_batch(np.zeros((0, 6)), nominal, gain, sim) == []


def test_real_and_nominal_agree_at_delta_one(gain, sim, ranges, rng):
    X = rng.uniform(ranges.lo, ranges.hi, size=(30, 6))
    a = SafetyOracle(PendulumParams(), gain, sim)(X)
    b = SafetyOracle(PendulumParams(delta=1.0), gain, sim)(X)
    assert np.array_equal(a, b)


def test_labeled_csv_roundtrip(tmp_path, rng):
    X = rng.normal(size=(7, 6))
    z = rng.integers(0, 2, 7)
    prov = ["ud"] * 3 + ["mnd"] * 4
    path = write_labeled_csv(tmp_path / "d.csv", X, z, prov, {"seed": 1})
    X2, z2, p2 = read_labeled_csv(path)
    assert np.array_equal(X, X2) and np.array_equal(z, z2) and p2 == prov
    assert path.read_text().startswith("# version: srlab")
