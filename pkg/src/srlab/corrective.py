"""LQR corrective controller synthesized on the linearized nominal pendulum,
and closed-loop recovery rollouts."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numba import njit

from .dynamics import (
    INPUT_DIM,
    STATE_DIM,
    PendulumParams,
    SimConfig,
    _rk4,
    dynamics_eval,
    saturate,
)

DEFAULT_Q = (10.0, 10.0, 10.0, 1.0, 1.0, 1.0)
DEFAULT_R = 0.1
GROUND_LIMIT = math.pi / 2


class SynthesisError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class FeedbackGain:
    K: np.ndarray  # (3, 6)

    def to_dict(self) -> dict:
        return {"K": self.K.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackGain":
        return cls(np.asarray(d["K"], dtype=np.float64))


@dataclass
class RecoveryOutcome:
    success: bool
    violation: bool
    trajectory: np.ndarray  # (n, 6), starts at the initial state
    diverged: bool = False


def linearize(params: PendulumParams, step: float = 1e-6) -> LinearModel:
    """Central-difference Jacobians of the dynamics at the upright equilibrium."""
    x0 = np.zeros(STATE_DIM)
    u0 = np.zeros(INPUT_DIM)
    A = np.empty((STATE_DIM, STATE_DIM))
    B = np.empty((STATE_DIM, INPUT_DIM))
    for j in range(STATE_DIM):
        e = np.zeros(STATE_DIM)
        e[j] = step
        A[:, j] = (dynamics_eval(x0 + e, u0, params) - dynamics_eval(x0 - e, u0, params)) / (2 * step)
    for j in range(INPUT_DIM):
        e = np.zeros(INPUT_DIM)
        e[j] = step
        B[:, j] = (dynamics_eval(x0, u0 + e, params) - dynamics_eval(x0, u0 - e, params)) / (2 * step)
    return LinearModel(A, B)


def care_residual(A, B, Q, R, P) -> np.ndarray:
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q


def solve_care(A, B, Q, R, tol: float = 1e-8, max_iter: int = 50) -> np.ndarray:
    """Stabilizing solution of the continuous algebraic Riccati equation.

    A Schur-based solve provides the initial iterate; Newton-Kleinman steps then
    polish it until ``||residual||_F < tol * ||P||_F``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    try:
        P = scipy.linalg.solve_continuous_are(A, B, Q, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SynthesisError(f"Riccati solve failed: {exc}") from exc
    P = 0.5 * (P + P.T)

    def converged(P):
        res = np.linalg.norm(care_residual(A, B, Q, R, P))
        return res <= tol * np.linalg.norm(P) or res < 1e-300

    for _ in range(max_iter):
        if converged(P):
            return P
        K = np.linalg.solve(R, B.T @ P)
        Acl = A - B @ K
        P_next = scipy.linalg.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P_next + P_next.T)
    if converged(P):
        return P
    raise SynthesisError(f"Riccati residual did not converge within {max_iter} refinements")


def synthesize_gain(params: PendulumParams, q_diag=DEFAULT_Q, r_scale: float = DEFAULT_R) -> FeedbackGain:
    """LQR gain K = R^-1 B^T P for the nominal linearization of ``params``."""
    lin = linearize(params.nominal())
    Q = np.diag(np.asarray(q_diag, dtype=np.float64))
    R = r_scale * np.eye(INPUT_DIM)
    P = solve_care(lin.A, lin.B, Q, R)
    K = np.linalg.solve(R, lin.B.T @ P)
    if np.max(np.linalg.eigvals(lin.A - lin.B @ K).real) >= 0:
        raise SynthesisError("closed loop is not strictly stable")
    return FeedbackGain(K)


def corrective_control(state, gain: FeedbackGain, params: PendulumParams) -> np.ndarray:
    return saturate(-gain.K @ np.asarray(state, dtype=np.float64), params)


# ---------------------------------------------------------------------------
# closed-loop simulation kernels


@njit(cache=True)
def _recover(x0, K, p, umin, umax, h, nsub, n_steps, tol, scale, traj):
    """Closed-loop rollout from ``x0``.

    Returns (code, n_recorded) with code 1 = converged, 0 = horizon exhausted,
    -1 = ground violation, -2 = divergence. ``traj`` (rows >= n_steps + 1, or
    zero rows to skip recording) receives the visited states.
    """
    record = traj.shape[0] > 0
    x = x0.copy()
    u = np.empty(3)
    n = 0
    for step in range(n_steps + 1):
        if record:
            traj[n, :] = x
        n += 1
        if abs(x[0]) >= 0.5 * math.pi:
            return -1, n
        r = 0.0
        for i in range(6):
            r += (x[i] / scale[i]) ** 2
        if math.sqrt(r) < tol:
            return 1, n
        if step == n_steps:
            break
        # feedback refreshed every physics step: the fast LQR mode is not
        # stable under a hold of one control period
        for _ in range(nsub):
            for j in range(3):
                acc = 0.0
                for i in range(6):
                    acc -= K[j, i] * x[i]
                u[j] = min(max(acc, umin), umax)
            x, status = _rk4(x, u, p, h, 1)
            if status != 0:
                return -2, n
            if abs(x[0]) >= 0.5 * math.pi:
                if record:
                    traj[n, :] = x
                return -1, n + 1
    return 0, n


@njit(cache=True)
def _recover_batch(X0, K, p, umin, umax, h, nsub, n_steps, tol, scale):
    out = np.empty(X0.shape[0], dtype=np.int64)
    empty = np.empty((0, 6))
    for k in range(X0.shape[0]):
        code, _ = _recover(X0[k], K, p, umin, umax, h, nsub, n_steps, tol, scale, empty)
        out[k] = code
    return out


def _horizon_steps(horizon: float, config: SimConfig) -> int:
    return int(round(horizon / config.dt_control))


def recovery_rollout(state, gain: FeedbackGain, params: PendulumParams, config: SimConfig,
                     scale, horizon: float = 10.0, tolerance: float = 0.01) -> RecoveryOutcome:
    """Simulate the corrective closed loop from ``state``.

    ``scale`` holds per-dimension range widths for the normalized convergence
    norm. Success requires reaching the tolerance ball before ``horizon`` with
    ``|theta1| < pi/2`` throughout.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    n_steps = _horizon_steps(horizon, config)
    traj = np.empty((n_steps + 1, STATE_DIM))
    code, n = _recover(
        np.ascontiguousarray(state, dtype=np.float64), np.ascontiguousarray(gain.K), params.packed(),
        params.u_min, params.u_max, config.dt_physics, config.substeps, n_steps, tolerance,
        np.ascontiguousarray(scale, dtype=np.float64), traj,
    )
    return RecoveryOutcome(success=code == 1, violation=code == -1, trajectory=traj[:n].copy(),
                           diverged=code == -2)


def recovery_codes(states, gain: FeedbackGain, params: PendulumParams, config: SimConfig,
                   scale, horizon: float = 10.0, tolerance: float = 0.01) -> np.ndarray:
    """Outcome code per state (1 success, 0 timeout, -1 violation, -2 divergence)."""
    X = np.ascontiguousarray(np.atleast_2d(states), dtype=np.float64)
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return _recover_batch(
        X, np.ascontiguousarray(gain.K), params.packed(), params.u_min, params.u_max,
        config.dt_physics, config.substeps, _horizon_steps(horizon, config), tolerance,
        np.ascontiguousarray(scale, dtype=np.float64),
    )
