"""Three-link inverted pendulum: equations of motion, RK4 integration, kinematics.

State layout is ``[theta1, theta2, theta3, dtheta1, dtheta2, dtheta3]`` with
``theta1`` measured from the upward vertical and ``theta2``/``theta3`` relative
to the preceding link. Each link carries a point mass at its midpoint; the
base joint sits at the Cartesian origin.

The numerical kernels are compiled with numba and take a packed parameter
vector ``[m1, m2, m3, l1, l2, l3, g]`` (masses already scaled by ``delta``).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

STATE_DIM = 6
INPUT_DIM = 3


class SimulationDivergence(RuntimeError):
    """Integration produced a non-finite state."""


class SingularConfiguration(RuntimeError):
    """Mass matrix could not be inverted (internal fault for positive masses)."""


@dataclass(frozen=True)
class PendulumParams:
    m1: float = 1.0
    m2: float = 1.0
    m3: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    l3: float = 1.0
    gravity: float = 9.81
    u_max: float = 100.0
    u_min: float = -100.0
    delta: float = 1.0  # scales m1 and m2 only

    def __post_init__(self):
        for name in ("m1", "m2", "m3", "l1", "l2", "l3", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")

    def packed(self) -> np.ndarray:
        return np.array(
            [self.m1 * self.delta, self.m2 * self.delta, self.m3,
             self.l1, self.l2, self.l3, self.gravity],
            dtype=np.float64,
        )

    def nominal(self) -> "PendulumParams":
        d = asdict(self)
        d["delta"] = 1.0
        return PendulumParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimConfig:
    dt_physics: float = 1e-3
    dt_control: float = 0.01

    def __post_init__(self):
        if not self.dt_physics > 0:
            raise ValueError("dt_physics must be positive")
        ratio = self.dt_control / self.dt_physics
        if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt_control must be a positive integer multiple of dt_physics")

    @property
    def substeps(self) -> int:
        return int(round(self.dt_control / self.dt_physics))

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _deriv(x, u, p, out):
    """Write dx/dt into ``out``; returns False if the mass matrix is singular."""
    m1, m2, m3, l1, l2, l3, g = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    # absolute link angles
    a1 = x[0]
    a2 = x[0] + x[1]
    a3 = x[0] + x[1] + x[2]
    w1 = x[3]
    w2 = x[3] + x[4]
    w3 = x[3] + x[4] + x[5]

    c11 = m1 * 0.25 * l1 * l1 + (m2 + m3) * l1 * l1
    c22 = m2 * 0.25 * l2 * l2 + m3 * l2 * l2
    c33 = m3 * 0.25 * l3 * l3
    c12 = (0.5 * m2 + m3) * l1 * l2
    c13 = 0.5 * m3 * l1 * l3
    c23 = 0.5 * m3 * l2 * l3
    g1 = g * (0.5 * m1 + m2 + m3) * l1
    g2 = g * (0.5 * m2 + m3) * l2
    g3 = g * 0.5 * m3 * l3

    cos12 = math.cos(a1 - a2)
    cos13 = math.cos(a1 - a3)
    cos23 = math.cos(a2 - a3)
    sin12 = math.sin(a1 - a2)
    sin13 = math.sin(a1 - a3)
    sin23 = math.sin(a2 - a3)

    M11 = c11
    M22 = c22
    M33 = c33
    M12 = c12 * cos12
    M13 = c13 * cos13
    M23 = c23 * cos23

    # joint torques -> generalized forces on absolute angles
    t1 = u[0] - u[1]
    t2 = u[1] - u[2]
    t3 = u[2]

    r1 = t1 - c12 * sin12 * w2 * w2 - c13 * sin13 * w3 * w3 + g1 * math.sin(a1)
    r2 = t2 + c12 * sin12 * w1 * w1 - c23 * sin23 * w3 * w3 + g2 * math.sin(a2)
    r3 = t3 + c13 * sin13 * w1 * w1 + c23 * sin23 * w2 * w2 + g3 * math.sin(a3)

    # symmetric 3x3 solve by cofactors
    A11 = M22 * M33 - M23 * M23
    A12 = M13 * M23 - M12 * M33
    A13 = M12 * M23 - M13 * M22
    A22 = M11 * M33 - M13 * M13
    A23 = M12 * M13 - M11 * M23
    A33 = M11 * M22 - M12 * M12
    det = M11 * A11 + M12 * A12 + M13 * A13
    if not (det > 1e-12 * (M11 * M22 * M33)):
        return False
    b1 = (A11 * r1 + A12 * r2 + A13 * r3) / det
    b2 = (A12 * r1 + A22 * r2 + A23 * r3) / det
    b3 = (A13 * r1 + A23 * r2 + A33 * r3) / det

    out[0] = x[3]
    out[1] = x[4]
    out[2] = x[5]
    out[3] = b1
    out[4] = b2 - b1
    out[5] = b3 - b2
    return True


@njit(cache=True)
def _rk4(x, u, p, h, nsub):
    """Fixed-step RK4 over ``nsub`` steps of size ``h`` with held input.

    Returns (new_state, status) where status 0 = ok, 1 = singular, 2 = non-finite.
    """
    y = x.copy()
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    tmp = np.empty(6)
    for _ in range(nsub):
        if not _deriv(y, u, p, k1):
            return y, 1
        for i in range(6):
            tmp[i] = y[i] + 0.5 * h * k1[i]
        if not _deriv(tmp, u, p, k2):
            return y, 1
        for i in range(6):
            tmp[i] = y[i] + 0.5 * h * k2[i]
        if not _deriv(tmp, u, p, k3):
            return y, 1
        for i in range(6):
            tmp[i] = y[i] + h * k3[i]
        if not _deriv(tmp, u, p, k4):
            return y, 1
        for i in range(6):
            y[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(6):
            if not np.isfinite(y[i]):
                return y, 2
    return y, 0


@njit(cache=True)
def _energy(x, p):
    m1, m2, m3, l1, l2, l3, g = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    a1 = x[0]
    a2 = x[0] + x[1]
    a3 = a2 + x[2]
    w1 = x[3]
    w2 = x[3] + x[4]
    w3 = w2 + x[5]
    # point-mass velocities
    v1x = 0.5 * l1 * math.cos(a1) * w1
    v1y = -0.5 * l1 * math.sin(a1) * w1
    v2x = l1 * math.cos(a1) * w1 + 0.5 * l2 * math.cos(a2) * w2
    v2y = -l1 * math.sin(a1) * w1 - 0.5 * l2 * math.sin(a2) * w2
    v3x = l1 * math.cos(a1) * w1 + l2 * math.cos(a2) * w2 + 0.5 * l3 * math.cos(a3) * w3
    v3y = -l1 * math.sin(a1) * w1 - l2 * math.sin(a2) * w2 - 0.5 * l3 * math.sin(a3) * w3
    kin = 0.5 * (m1 * (v1x * v1x + v1y * v1y) + m2 * (v2x * v2x + v2y * v2y)
                 + m3 * (v3x * v3x + v3y * v3y))
    y1 = 0.5 * l1 * math.cos(a1)
    y2 = l1 * math.cos(a1) + 0.5 * l2 * math.cos(a2)
    y3 = l1 * math.cos(a1) + l2 * math.cos(a2) + 0.5 * l3 * math.cos(a3)
    return kin + g * (m1 * y1 + m2 * y2 + m3 * y3)


# ---------------------------------------------------------------------------
# public API


def saturate(u, params: PendulumParams) -> np.ndarray:
    return np.clip(np.asarray(u, dtype=np.float64), params.u_min, params.u_max)


def dynamics_eval(state, u, params: PendulumParams) -> np.ndarray:
    """Time derivative of ``state`` under (already saturated) joint torques ``u``."""
    x = np.ascontiguousarray(state, dtype=np.float64)
    uu = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty(STATE_DIM)
    if not _deriv(x, uu, params.packed(), out):
        raise SingularConfiguration(f"singular mass matrix at state {x.tolist()}")
    return out


def integrate_step(state, u, params: PendulumParams, config: SimConfig) -> np.ndarray:
    """Advance one control period with RK4 at ``dt_physics`` and held input."""
    x = np.ascontiguousarray(state, dtype=np.float64)
    uu = np.ascontiguousarray(u, dtype=np.float64)
    y, status = _rk4(x, uu, params.packed(), config.dt_physics, config.substeps)
    if status == 1:
        raise SingularConfiguration(f"singular mass matrix from state {x.tolist()}")
    if status == 2:
        raise SimulationDivergence(f"non-finite state reached from {x.tolist()}")
    return y


def total_energy(state, params: PendulumParams) -> float:
    """Kinetic plus gravitational potential energy (zero height at the base)."""
    return float(_energy(np.ascontiguousarray(state, dtype=np.float64), params.packed()))


def forward_kinematics(state, params: PendulumParams | None = None) -> np.ndarray:
    """Cartesian position of the tip of link 3."""
    p = params or PendulumParams()
    x = np.asarray(state, dtype=np.float64)
    a1 = x[..., 0]
    a2 = a1 + x[..., 1]
    a3 = a2 + x[..., 2]
    px = p.l1 * np.sin(a1) + p.l2 * np.sin(a2) + p.l3 * np.sin(a3)
    py = p.l1 * np.cos(a1) + p.l2 * np.cos(a2) + p.l3 * np.cos(a3)
    return np.stack([px, py], axis=-1)
