"""Estimates of the generalization-error bound terms and exact checks on finite toys.

The bound under study is

    eps(h, l) <= eps_n(h, l_n) + d_HdH(D, D_n) / 2 + min(E1, E2)

with eps over the visited-state distribution D against the real labels l and
eps_n over the training distribution D_n against the nominal labels l_n.
On continuous state spaces only Monte-Carlo frequencies and a discriminator
proxy for d_HdH are available; on finite toys every term is enumerated.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

from .safety import StateRanges

MAX_TOY_STATES = 32


class EmptySampleError(ValueError):
    pass


class ToyTooLarge(ValueError):
    pass


@dataclass
class BoundReport:
    eps_hat: float
    eps_n_hat: float
    e1_hat: float
    e2_hat: float
    fp_rate: float
    fn_rate: float
    n_D: int
    n_Dn: int
    div_proxy: float | None = None
    seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("eps_hat", "eps_n_hat", "e1_hat", "e2_hat", "fp_rate", "fn_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if abs(self.eps_hat - (self.fp_rate + self.fn_rate)) > 1e-12:
            raise ValueError("eps_hat must equal fp_rate + fn_rate")

    @property
    def rhs(self) -> float | None:
        if self.div_proxy is None:
            return None
        return self.eps_n_hat + 0.5 * self.div_proxy + min(self.e1_hat, self.e2_hat)

    def render(self) -> str:
        d = "n/a" if self.div_proxy is None else f"{self.div_proxy:.4f} (5-NN proxy)"
        tail = "" if self.rhs is None else f" = {self.rhs:.4f}"
        return (f"eps(h,l) = {self.eps_hat:.4f} <= eps_n(h,l_n) + d/2 + min(E1,E2) = "
                f"{self.eps_n_hat:.4f} + {d}/2 + min({self.e1_hat:.4f}, {self.e2_hat:.4f}){tail}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rhs"] = self.rhs
        out["inequality"] = self.render()
        out["divergence_note"] = "div_proxy is a 5-NN discriminator proxy, not the supremum distance"
        return out


def _labels(fn, X) -> np.ndarray:
    return np.asarray(fn(X)).astype(np.int64).reshape(-1)


def estimate_errors(h, samples_D, samples_Dn, oracle_real, oracle_nominal) -> BoundReport:
    """Monte-Carlo frequencies of every error term.

    All callables take an (n, 6) array and return 0/1 labels with 1 = safe.
    A false positive is a state predicted safe that is actually unsafe.
    """
    XD = np.atleast_2d(np.asarray(samples_D, dtype=np.float64))
    XDn = np.atleast_2d(np.asarray(samples_Dn, dtype=np.float64))
    if XD.shape[0] == 0 or XD.size == 0 or XDn.shape[0] == 0 or XDn.size == 0:
        raise EmptySampleError("both sample sets must be non-empty")

    hD, lD, lnD = _labels(h, XD), _labels(oracle_real, XD), _labels(oracle_nominal, XD)
    hDn, lDn, lnDn = _labels(h, XDn), _labels(oracle_real, XDn), _labels(oracle_nominal, XDn)
    n, nn = XD.shape[0], XDn.shape[0]

    n_fp = int(np.count_nonzero((hD == 1) & (lD == 0)))
    n_fn = int(np.count_nonzero((hD == 0) & (lD == 1)))
    return BoundReport(
        eps_hat=(n_fp + n_fn) / n,
        eps_n_hat=float(np.count_nonzero(hDn != lnDn)) / nn,
        e1_hat=float(np.count_nonzero(lDn != lnDn)) / nn,
        e2_hat=float(np.count_nonzero(lD != lnD)) / n,
        fp_rate=n_fp / n,
        fn_rate=n_fn / n,
        n_D=n,
        n_Dn=nn,
    )


def _digest(X: np.ndarray) -> bytes:
    return hashlib.sha256(np.ascontiguousarray(X).tobytes()).digest()


def divergence_proxy(samples_D, samples_Dn, seed: int = 0, ranges: StateRanges | None = None,
                     n_neighbors: int = 5) -> float:
    """Proxy distance 2(1 - 2 err) of a 5-NN discriminator between the two sets.

    Each set is split 50/50 into fit and validation halves; err is the
    class-balanced validation error. The split streams are assigned in a
    content-defined order so swapping the arguments gives the same value.
    """
    ranges = ranges or StateRanges()
    A = np.atleast_2d(np.asarray(samples_D, dtype=np.float64))
    B = np.atleast_2d(np.asarray(samples_Dn, dtype=np.float64))
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise EmptySampleError("each set needs at least two samples for a fit/validation split")
    if (A.shape[0], _digest(A)) > (B.shape[0], _digest(B)):
        A, B = B, A
    rng_a, rng_b = np.random.default_rng(seed).spawn(2)

    def split(X, rng):
        idx = rng.permutation(X.shape[0])
        half = X.shape[0] // 2
        return X[idx[:half]], X[idx[half:]]

    scale = ranges.widths
    fitA, valA = split(A / scale, rng_a)
    fitB, valB = split(B / scale, rng_b)
    fit = np.vstack([fitA, fitB])
    y = np.concatenate([np.zeros(len(fitA)), np.ones(len(fitB))])
    k = min(n_neighbors, fit.shape[0])
    tree = cKDTree(fit)

    def predict(V):
        _, idx = tree.query(V, k=k)
        votes = y[np.asarray(idx).reshape(V.shape[0], -1)].mean(axis=1)
        return (votes > 0.5).astype(np.int64)

    err_a = float(np.mean(predict(valA) != 0))
    err_b = float(np.mean(predict(valB) != 1))
    err = 0.5 * (err_a + err_b)
    return float(np.clip(2.0 * (1.0 - 2.0 * err), 0.0, 2.0))


# -- finite toys ---------------------------------------------------------------


@dataclass(frozen=True)
class ToySpec:
    """Finite instance: distributions are Fractions over states 0..n-1.

    ``hypotheses`` is the finite class H as 0/1 tuples; ``h_index`` picks h.
    """
    D: tuple
    D_n: tuple
    l: tuple
    l_n: tuple
    hypotheses: tuple
    h_index: int = 0

    @property
    def n_states(self) -> int:
        return len(self.D)

    def validate(self):
        n = self.n_states
        if n > MAX_TOY_STATES:
            raise ToyTooLarge(f"toy has {n} states, at most {MAX_TOY_STATES} are enumerated")
        for name in ("D_n", "l", "l_n"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has the wrong length")
        for name in ("D", "D_n"):
            p = getattr(self, name)
            if any(v < 0 for v in p) or sum(p, Fraction(0)) != 1:
                raise ValueError(f"{name} is not a probability vector")
        if any(len(hyp) != n for hyp in self.hypotheses):
            raise ValueError("hypothesis with the wrong length")
        if not 0 <= self.h_index < len(self.hypotheses):
            raise ValueError("h_index outside the hypothesis class")


def _disagree(p, f, g) -> Fraction:
    return sum((pi for pi, a, b in zip(p, f, g) if a != b), Fraction(0))


def hdh_distance(spec: ToySpec) -> Fraction:
    """2 * max over pairs in H of |P_D(h1 != h2) - P_Dn(h1 != h2)|."""
    best = Fraction(0)
    for h1, h2 in combinations(spec.hypotheses, 2):
        best = max(best, abs(_disagree(spec.D, h1, h2) - _disagree(spec.D_n, h1, h2)))
    return 2 * best


def verify_bound_toy(spec: ToySpec) -> dict:
    """Enumerate every term exactly and check the bound and both proof branches.

    The branches use l (first) or l_n (second) as the intermediate
    hypothesis, so both must belong to H for the distance term to apply.
    """
    spec.validate()
    hyps = [tuple(x) for x in spec.hypotheses]
    if tuple(spec.l) not in hyps or tuple(spec.l_n) not in hyps:
        raise ValueError("the hypothesis class must contain both labeling functions")
    h = hyps[spec.h_index]
    D, Dn = spec.D, spec.D_n
    eps = _disagree(D, h, spec.l)
    eps_n = _disagree(Dn, h, spec.l_n)
    E1 = _disagree(Dn, spec.l, spec.l_n)
    E2 = _disagree(D, spec.l, spec.l_n)
    d = hdh_distance(spec)
    rhs1 = eps_n + E1 + d / 2
    rhs2 = eps_n + E2 + d / 2
    rhs = eps_n + d / 2 + min(E1, E2)
    return {
        "n_states": spec.n_states,
        "n_hypotheses": len(hyps),
        "lhs": eps,
        "eps_n": eps_n,
        "E1": E1,
        "E2": E2,
        "d_hdh": d,
        "rhs": rhs,
        "rhs_branch_1": rhs1,
        "rhs_branch_2": rhs2,
        "branch_1_holds": eps <= rhs1,
        "branch_2_holds": eps <= rhs2,
        "bound_holds": eps <= rhs,
    }


def _random_distribution(rng, n: int, denom: int) -> tuple:
    # integer compositions of denom give exact rational weights
    cuts = np.sort(rng.integers(0, denom + 1, size=n - 1))
    counts = np.diff(np.concatenate([[0], cuts, [denom]]))
    return tuple(Fraction(int(c), denom) for c in counts)


def random_toy(seed: int, n_states: int | None = None, n_extra: int | None = None) -> ToySpec:
    rng = np.random.default_rng(seed)
    n = int(n_states if n_states is not None else rng.integers(2, 21))
    m = int(n_extra if n_extra is not None else rng.integers(1, 9))
    denom = int(rng.integers(n, 4 * n + 1))
    l = tuple(int(v) for v in rng.integers(0, 2, n))
    # nominal labels differ from the real ones on a random subset
    flip = rng.random(n) < rng.uniform(0.0, 0.5)
    l_n = tuple(int(a ^ f) for a, f in zip(l, flip))
    extra = [tuple(int(v) for v in rng.integers(0, 2, n)) for _ in range(m)]
    hyps = tuple(extra + [l, l_n])
    return ToySpec(D=_random_distribution(rng, n, denom), D_n=_random_distribution(rng, n, denom),
                   l=l, l_n=l_n, hypotheses=hyps, h_index=int(rng.integers(0, len(hyps))))


def toy_report_json(report: dict) -> dict:
    """Fractions rendered as 'p/q' strings next to their float values."""
    out = {}
    for k, v in report.items():
        if isinstance(v, Fraction):
            out[k] = {"exact": f"{v.numerator}/{v.denominator}", "value": float(v)}
        else:
            out[k] = v
    return out
