"""Safety assessment over the embedded space and the induced binary hypothesis.

``gamma`` is a Gaussian-kernel estimate of the safe-label frequency around a
simplified state; a state is predicted safe when ``gamma(map_state(x)) > p_t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corrective import FeedbackGain
from .embedding import Embedding, map_states
from .safety import StateRanges

DEFAULT_THRESHOLD = 0.8
DEFAULT_BANDWIDTH_FRACTION = 0.02


class SingleClassError(ValueError):
    """Training labels contain only one class, so the assessment is constant."""


def bbox_diagonal(points) -> float:
    P = np.asarray(points)
    return float(np.linalg.norm(P.max(axis=0) - P.min(axis=0)))


@dataclass
class SafeRegionModel:
    embedding: Embedding
    gamma_bandwidth: float | None = None
    p_t: float = DEFAULT_THRESHOLD
    gain: FeedbackGain | None = None
    ranges: StateRanges = field(default_factory=StateRanges)

    def __post_init__(self):
        labels = set(np.unique(self.embedding.labels).tolist())
        if labels != {0, 1}:
            raise SingleClassError(f"need both safe and unsafe samples, got labels {sorted(labels)}")
        if self.gamma_bandwidth is None:
            self.gamma_bandwidth = DEFAULT_BANDWIDTH_FRACTION * bbox_diagonal(self.embedding.points)
        if not self.gamma_bandwidth > 0:
            raise ValueError("gamma_bandwidth must be positive")
        if not 0.0 < self.p_t < 1.0:
            raise ValueError("p_t must lie strictly between 0 and 1")

    # -- assessment -------------------------------------------------------

    def gamma_many(self, Y, chunk: int = 512) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        pts = self.embedding.points
        z = self.embedding.labels.astype(np.float64)
        inv = 0.5 / self.gamma_bandwidth ** 2
        out = np.empty(Y.shape[0])
        for s in range(0, Y.shape[0], chunk):
            diff = Y[s:s + chunk, None, :] - pts[None, :, :]
            D2 = np.einsum("ijk,ijk->ij", diff, diff)
            W = np.exp(-D2 * inv)
            den = W.sum(axis=1)
            g = z[np.argmin(D2, axis=1)]
            ok = den > 0
            g[ok] = (W[ok] @ z) / den[ok]
            # rounding in the weighted mean can step just outside [0, 1]
            out[s:s + chunk] = np.clip(g, 0.0, 1.0)
        return out

    def gamma(self, y) -> float:
        return float(self.gamma_many(np.asarray(y, dtype=np.float64)[None, :])[0])

    def predict_many(self, X) -> np.ndarray:
        Y = map_states(X, self.embedding, self.ranges)
        return (self.gamma_many(Y) > self.p_t).astype(np.int64)

    def predict(self, x) -> int:
        return int(self.predict_many(np.asarray(x, dtype=np.float64)[None, :])[0])

    def __call__(self, X) -> np.ndarray:
        return self.predict_many(X)

    # -- grids and serialization --------------------------------------------

    def default_bounds(self):
        lo = self.embedding.points.min(axis=0)
        hi = self.embedding.points.max(axis=0)
        pad = 0.1 * (hi - lo)
        return lo - pad, hi + pad

    def region_grid(self, bounds=None, resolution: int = 100):
        """Gamma on a regular grid; returns (axes, values) with values shaped by axes."""
        if resolution < 2:
            raise ValueError("resolution must be at least 2 per axis")
        lo, hi = bounds if bounds is not None else self.default_bounds()
        axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return axes, self.gamma_many(pts).reshape(mesh[0].shape)

    def to_dict(self) -> dict:
        return {
            "embedding": self.embedding.to_dict(),
            "gamma_bandwidth": float(self.gamma_bandwidth),
            "p_t": float(self.p_t),
            "gain": None if self.gain is None else self.gain.to_dict(),
            "ranges": self.ranges.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SafeRegionModel":
        r = d.get("ranges")
        return cls(
            embedding=Embedding.from_dict(d["embedding"]),
            gamma_bandwidth=float(d["gamma_bandwidth"]),
            p_t=float(d["p_t"]),
            gain=None if d.get("gain") is None else FeedbackGain.from_dict(d["gain"]),
            ranges=StateRanges(tuple(r["lower"]), tuple(r["upper"])) if r else StateRanges(),
        )
