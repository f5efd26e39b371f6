"""Training-set generation: uniform samples, random-policy rollouts, a fitted
multivariate normal, and their alpha-weighted combination.

Randomness: every entry point takes a ``numpy.random.Generator``. Composite
routines split it with ``Generator.spawn`` (SeedSequence children), one child
per independent task, and merge results in task order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corrective import FeedbackGain
from .dynamics import PendulumParams, SimConfig, SimulationDivergence, integrate_step
from .safety import SafetyOracle, StateRanges

MAX_REJECTIONS = 1000


class InsufficientData(ValueError):
    pass


class DegenerateModel(RuntimeError):
    pass


@dataclass(frozen=True)
class MndModel:
    mean: np.ndarray
    covariance: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.ravel().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MndModel":
        mean = np.asarray(d["mean"], dtype=np.float64)
        n = mean.shape[0]
        return cls(mean, np.asarray(d["covariance"], dtype=np.float64).reshape(n, n))


@dataclass(frozen=True)
class DatasetSpec:
    k: int = 1000
    alpha: float = 0.5
    seed: int = 0
    ranges: StateRanges = field(default_factory=StateRanges)
    rollout_episodes: int = 200
    rollout_length: int = 300

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    @property
    def n_ud(self) -> int:
        # round half up
        return int(math.floor(self.alpha * self.k + 0.5))

    @property
    def n_mnd(self) -> int:
        return self.k - self.n_ud


@dataclass
class Dataset:
    states: np.ndarray  # (k, 6)
    labels: np.ndarray  # (k,)
    provenance: list  # "ud" | "mnd" per row
    mnd: MndModel
    rollout_states: np.ndarray

    def safe_fraction(self) -> float:
        return float(np.mean(self.labels))


def sample_ud(count: int, ranges: StateRanges, rng: np.random.Generator) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be non-negative")
    out = rng.uniform(ranges.lo, ranges.hi, size=(count, 6))
    # theta1 range is open; redraw the measure-zero boundary hits
    bad = ~ranges.contains(out) if count else np.zeros(0, bool)
    while np.any(bad):
        out[bad] = rng.uniform(ranges.lo, ranges.hi, size=(int(bad.sum()), 6))
        bad = ~ranges.contains(out)
    return out


def collect_rollouts(params: PendulumParams, config: SimConfig, n_episodes: int, episode_len: int,
                     rng: np.random.Generator) -> np.ndarray:
    """States visited by the nominal plant under uniformly random torques.

    Every episode starts at the origin and stops after the first state with
    ``|theta1| >= pi/2`` (that state is kept).
    """
    chunks = [np.zeros((0, 6))]
    for child in rng.spawn(n_episodes) if n_episodes > 0 else []:
        x = np.zeros(6)
        visited = [x]
        for _ in range(episode_len):
            u = child.uniform(params.u_min, params.u_max, size=3)
            try:
                x = integrate_step(x, u, params, config)
            except SimulationDivergence:
                break
            visited.append(x)
            if abs(x[0]) >= math.pi / 2:
                break
        chunks.append(np.asarray(visited))
    return np.concatenate(chunks, axis=0)


def fit_mnd(X) -> MndModel:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InsufficientData("fitting a normal distribution needs at least two states")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1) + 1e-8 * np.eye(X.shape[1])
    return MndModel(mean, 0.5 * (cov + cov.T))


def sample_mnd(model: MndModel, count: int, ranges: StateRanges, rng: np.random.Generator) -> np.ndarray:
    """Gaussian draws truncated to ``ranges`` by per-sample rejection."""
    L = np.linalg.cholesky(model.covariance)
    out = np.empty((count, model.mean.shape[0]))
    for i in range(count):
        for _ in range(MAX_REJECTIONS):
            x = model.mean + L @ rng.standard_normal(model.mean.shape[0])
            if ranges.contains(x)[0]:
                out[i] = x
                break
        else:
            raise DegenerateModel(f"no in-range draw after {MAX_REJECTIONS} attempts (sample {i})")
    return out


def build_dataset(spec: DatasetSpec, params: PendulumParams, gain: FeedbackGain, config: SimConfig,
                  oracle: SafetyOracle | None = None) -> Dataset:
    """Uniform part first, then the normal part; all labels from the nominal oracle."""
    nominal = params.nominal()
    rng_roll, rng_ud, rng_mnd = np.random.default_rng(spec.seed).spawn(3)
    X = collect_rollouts(nominal, config, spec.rollout_episodes, spec.rollout_length, rng_roll)
    mnd = fit_mnd(X)
    ud = sample_ud(spec.n_ud, spec.ranges, rng_ud)
    mn = sample_mnd(mnd, spec.n_mnd, spec.ranges, rng_mnd)
    states = np.concatenate([ud, mn], axis=0)
    oracle = oracle or SafetyOracle(nominal, gain, config, spec.ranges)
    labels = oracle(states)
    provenance = ["ud"] * spec.n_ud + ["mnd"] * spec.n_mnd
    return Dataset(states, labels, provenance, mnd, X)
