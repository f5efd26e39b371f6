"""Simulation-based safety labels.

A state is safe (label 1) when the corrective controller brings it back to the
origin without the first link reaching the ground. Nominal labels use
``delta == 1``; the mismatched real system uses the same procedure with its own
``delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .corrective import FeedbackGain, recovery_codes
from .dynamics import PendulumParams, SimConfig
from .io import read_csv, write_csv

STATE_COLUMNS = ["theta1", "theta2", "theta3", "dtheta1", "dtheta2", "dtheta3"]


@dataclass(frozen=True)
class StateRanges:
    lower: tuple = (-math.pi / 2, -math.pi, -math.pi, -10.0, -20.0, -20.0)
    upper: tuple = (math.pi / 2, math.pi, math.pi, 10.0, 20.0, 20.0)

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (6,) or hi.shape != (6,):
            raise ValueError("ranges need six lower and six upper bounds")
        if not np.all(lo < hi):
            raise ValueError("every lower bound must be below its upper bound")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=np.float64)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=np.float64)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, states) -> np.ndarray:
        """Membership mask; theta1 bounds are open (ground contact is excluded)."""
        X = np.atleast_2d(states)
        inside = np.all((X >= self.lo) & (X <= self.hi), axis=1)
        return inside & (X[:, 0] > self.lo[0]) & (X[:, 0] < self.hi[0])

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


class LabeledSample(NamedTuple):
    state: np.ndarray
    label: int


def normalized_distance(a, b, ranges: StateRanges) -> float:
    """Euclidean distance after dividing each dimension by its range width."""
    d = (np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) / ranges.widths
    return float(np.sqrt(np.dot(d, d)))


@dataclass(frozen=True)
class SafetyOracle:
    """Labeling function of one system (nominal or real) under a fixed gain."""

    params: PendulumParams
    gain: FeedbackGain
    config: SimConfig = field(default_factory=SimConfig)
    ranges: StateRanges = field(default_factory=StateRanges)
    horizon: float = 10.0
    tolerance: float = 0.01

    def __call__(self, states) -> np.ndarray:
        X = np.asarray(states, dtype=np.float64).reshape(-1, 6)
        codes = recovery_codes(X, self.gain, self.params, self.config, self.ranges.widths,
                               self.horizon, self.tolerance)
        return (codes == 1).astype(np.int64)


def label_state(state, params: PendulumParams, gain: FeedbackGain, config: SimConfig,
                ranges: StateRanges | None = None, horizon: float = 10.0,
                tolerance: float = 0.01) -> int:
    oracle = SafetyOracle(params, gain, config, ranges or StateRanges(), horizon, tolerance)
    return int(oracle([state])[0])


def label_batch(states, params: PendulumParams, gain: FeedbackGain, config: SimConfig,
                ranges: StateRanges | None = None, horizon: float = 10.0,
                tolerance: float = 0.01) -> list[LabeledSample]:
    X = np.asarray(states, dtype=np.float64).reshape(-1, 6)
    if len(X) == 0:
        return []
    labels = SafetyOracle(params, gain, config, ranges or StateRanges(), horizon, tolerance)(X)
    return [LabeledSample(x.copy(), int(z)) for x, z in zip(X, labels)]


def write_labeled_csv(path, states, labels, provenance=None, config=None):
    header = STATE_COLUMNS + ["label"] + (["provenance"] if provenance is not None else [])
    rows = []
    for i, (x, z) in enumerate(zip(np.asarray(states), labels)):
        row = [float(v) for v in x] + [int(z)]
        if provenance is not None:
            row.append(provenance[i])
        rows.append(row)
    return write_csv(path, header, rows, config)


def read_labeled_csv(path):
    """Returns (states, labels, provenance-or-None)."""
    header, rows = read_csv(path)
    if header[:7] != STATE_COLUMNS + ["label"]:
        raise ValueError(f"unexpected dataset header {header}")
    states = np.array([[float(v) for v in r[:6]] for r in rows], dtype=np.float64).reshape(-1, 6)
    labels = np.array([int(r[6]) for r in rows], dtype=np.int64)
    prov = [r[7] for r in rows] if "provenance" in header else None
    return states, labels, prov
