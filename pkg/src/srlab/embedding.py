"""Exact t-SNE over range-normalized pendulum states and the out-of-sample
state mapping (Nadaraya-Watson interpolation of the embedded coordinates)."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .safety import StateRanges


class CalibrationError(RuntimeError):
    pass


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    output_dim: int = 2
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    init_std: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.perplexity <= 1:
            raise ValueError("perplexity must exceed 1")
        if self.output_dim < 1 or self.iterations < 1:
            raise ValueError("output_dim and iterations must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Embedding:
    points: np.ndarray  # (k, n_y)
    bandwidths: np.ndarray  # (k,) Gaussian widths in normalized state units
    source_states: np.ndarray  # (k, 6)
    labels: np.ndarray  # (k,)
    final_kl: float
    config: TsneConfig = field(default_factory=TsneConfig)
    kl_trace: np.ndarray | None = None

    def __post_init__(self):
        k = len(self.source_states)
        if len(self.points) != k or len(self.bandwidths) != k or len(self.labels) != k:
            raise ValueError("embedding arrays disagree in length")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("embedded coordinates must be finite")
        if not np.all(self.bandwidths > 0):
            raise ValueError("bandwidths must be strictly positive")

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "bandwidths": self.bandwidths.tolist(),
            "source_states": self.source_states.tolist(),
            "labels": self.labels.tolist(),
            "final_kl": float(self.final_kl),
            "tsne_config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Embedding":
        return cls(
            points=np.asarray(d["points"], dtype=np.float64),
            bandwidths=np.asarray(d["bandwidths"], dtype=np.float64),
            source_states=np.asarray(d["source_states"], dtype=np.float64),
            labels=np.asarray(d["labels"], dtype=np.int64),
            final_kl=float(d["final_kl"]),
            config=TsneConfig(**d["tsne_config"]),
        )


def _pairwise_sq(X) -> np.ndarray:
    # exact differences: the expanded form loses precision for near-duplicates
    diff = X[:, None, :] - X[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def conditional_affinities(D: np.ndarray, perplexity: float, tol: float = 1e-4, max_steps: int = 100):
    """Row-stochastic Gaussian affinities with per-row perplexity calibration.

    ``D`` holds squared distances with the diagonal ignored. Bisection runs on
    ``log(beta)`` for all rows at once, ``beta = 1 / (2 sigma^2)``. Returns the
    conditional matrix and the calibrated ``sigma`` per row.
    """
    k = D.shape[0]
    if not 1 < perplexity < k:
        raise CalibrationError(f"perplexity {perplexity} outside (1, {k})")
    off = ~np.eye(k, dtype=bool)
    Doff = D[off].reshape(k, k - 1)
    Dshift = Doff - Doff.min(axis=1, keepdims=True)
    target = np.log(perplexity)
    lo = np.full(k, -50.0)
    hi = np.full(k, 50.0)

    def entropy(logbeta):
        beta = np.exp(logbeta)[:, None]
        W = np.exp(-beta * Dshift)
        s = W.sum(axis=1)
        H = np.log(s) + beta[:, 0] * (W * Dshift).sum(axis=1) / s
        return H, W / s[:, None]

    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        H, _ = entropy(mid)
        # entropy decreases with beta
        too_flat = H > target
        lo = np.where(too_flat, mid, lo)
        hi = np.where(too_flat, hi, mid)
    logbeta = 0.5 * (lo + hi)
    H, Prow = entropy(logbeta)
    bad = np.abs(np.exp(H) - perplexity) > tol
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise CalibrationError(
            f"perplexity bisection failed for point {i} (achieved {np.exp(H[i]):.6g}, target {perplexity})")
    P = np.zeros((k, k))
    P[off] = Prow.ravel()
    sigma = np.sqrt(0.5 / np.exp(logbeta))
    return P, sigma


def row_perplexities(Pcond: np.ndarray) -> np.ndarray:
    """2 ** (Shannon entropy in bits) of each row."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Pcond > 0, -Pcond * np.log2(Pcond), 0.0)
    return 2.0 ** terms.sum(axis=1)


def compute_affinities(states, ranges: StateRanges, perplexity: float):
    """Symmetrized joint affinities ``(p_j|i + p_i|j) / 2k`` and per-point widths."""
    X = np.asarray(states, dtype=np.float64)
    if X.shape[0] < 3:
        raise CalibrationError("need at least three states")
    D = _pairwise_sq(X / ranges.widths)
    Pc, sigma = conditional_affinities(D, perplexity)
    P = (Pc + Pc.T) / (2.0 * X.shape[0])
    np.fill_diagonal(P, 0.0)
    return P, sigma, Pc


def _sq_dists_lowdim(Y: np.ndarray) -> np.ndarray:
    n = (Y * Y).sum(axis=1)
    return np.maximum(n[:, None] + n[None, :] - 2.0 * Y @ Y.T, 0.0)


def student_q(Y: np.ndarray):
    """Low-dimensional joint affinities and the unnormalized kernel matrix."""
    num = 1.0 / (1.0 + _sq_dists_lowdim(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    Q, _ = student_q(Y)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))))


def kl_gradient(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    Q, num = student_q(Y)
    W = (P - Q) * num
    return 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)


def run_tsne(states, labels, ranges: StateRanges, config: TsneConfig = TsneConfig()) -> Embedding:
    """Exact-gradient t-SNE with early exaggeration, momentum and adaptive gains.

    ``kl_trace[i]`` is the (unexaggerated) objective at the start of iteration i.
    """
    X = np.asarray(states, dtype=np.float64)
    P, sigma, _ = compute_affinities(X, ranges, config.perplexity)
    mask = P > 0
    plogp = float(np.sum(P[mask] * np.log(P[mask])))
    rng = np.random.default_rng(config.seed)
    Y = config.init_std * rng.standard_normal((X.shape[0], config.output_dim))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace = np.empty(config.iterations)
    for it in range(config.iterations):
        exag = config.exaggeration if it < config.exaggeration_iters else 1.0
        mom = config.momentum_initial if it < config.momentum_switch else config.momentum_final
        Q, num = student_q(Y)
        trace[it] = plogp - float(np.sum(P[mask] * np.log(np.maximum(Q[mask], 1e-300))))
        if not np.isfinite(trace[it]):
            raise OptimizationError(f"non-finite KL at iteration {it}")
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = mom * update - config.learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    final = kl_divergence(P, Y)
    if not np.isfinite(final):
        raise OptimizationError("non-finite final KL")
    return Embedding(Y, sigma, X.copy(), np.asarray(labels, dtype=np.int64).copy(), final, config, trace)


def map_states(X, embedding: Embedding, ranges: StateRanges, chunk: int = 256) -> np.ndarray:
    """Simplified states of many system states.

    Exact training states map to their own coordinates; other states get the
    kernel-weighted mean of the embedded points with weights
    ``exp(-d(x, x_i)^2 / (2 sigma_i^2))``. When every weight underflows the
    nearest source state's coordinates are returned.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    src = embedding.source_states / ranges.widths
    inv2s2 = 0.5 / embedding.bandwidths ** 2
    out = np.empty((X.shape[0], embedding.points.shape[1]))
    for start in range(0, X.shape[0], chunk):
        xs = X[start:start + chunk] / ranges.widths
        diff = xs[:, None, :] - src[None, :, :]
        D2 = np.einsum("ijk,ijk->ij", diff, diff)
        nearest = np.argmin(D2, axis=1)
        W = np.exp(-D2 * inv2s2[None, :])
        s = W.sum(axis=1)
        ok = s > 0
        Y = embedding.points[nearest].copy()
        Y[ok] = (W[ok] @ embedding.points) / s[ok, None]
        exact = np.sqrt(D2[np.arange(len(xs)), nearest]) < 1e-12
        Y[exact] = embedding.points[nearest[exact]]
        out[start:start + chunk] = Y
    return out


def map_state(x, embedding: Embedding, ranges: StateRanges) -> np.ndarray:
    """Simplified state ``y`` of a single system state (see ``map_states``)."""
    return map_states(np.asarray(x, dtype=np.float64)[None, :], embedding, ranges)[0]


def loo_knn_accuracy(points, labels, n_neighbors: int = 5) -> float:
    """Leave-one-out k-nearest-neighbour label accuracy (majority vote)."""
    Y = np.asarray(points, dtype=np.float64)
    z = np.asarray(labels)
    D = _pairwise_sq(Y)
    np.fill_diagonal(D, np.inf)
    idx = np.argsort(D, axis=1, kind="stable")[:, :n_neighbors]
    votes = z[idx].mean(axis=1)
    pred = (votes > 0.5).astype(z.dtype)
    return float(np.mean(pred == z))
