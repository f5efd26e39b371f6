import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from srlab.dynamics import (PendulumParams, SimConfig, SimulationDivergence, SingularConfiguration, dynamics_eval,
                            forward_kinematics, integrate_step, saturate, total_energy)


def _lagrangian_oracle(params):
    """Accelerations from an independent symbolic Lagrangian in joint coordinates."""
    q = sp.symbols("q1:4")
    dq = sp.symbols("dq1:4")
    tau = sp.symbols("u1:4")
    t = sp.Symbol("t")
    qt = [sp.Function(f"q{i}")(t) for i in range(1, 4)]
    m = [params.m1 * params.delta, params.m2 * params.delta, params.m3]
    ls = [params.l1, params.l2, params.l3]
    a = [qt[0], qt[0] + qt[1], qt[0] + qt[1] + qt[2]]
    T = 0
    V = 0
    base_x, base_y = 0, 0
    for i in range(3):
        cx = base_x + sp.Rational(1, 2) * ls[i] * sp.sin(a[i])
        cy = base_y + sp.Rational(1, 2) * ls[i] * sp.cos(a[i])
        T += sp.Rational(1, 2) * m[i] * (sp.diff(cx, t) ** 2 + sp.diff(cy, t) ** 2)
        V += m[i] * params.gravity * cy
        base_x += ls[i] * sp.sin(a[i])
        base_y += ls[i] * sp.cos(a[i])
    L = T - V
    eqs = [sp.diff(sp.diff(L, sp.diff(qt[i], t)), t) - sp.diff(L, qt[i]) - tau[i] for i in range(3)]
    dd = sp.symbols("ddq1:4")
    subs = {}
    for i in range(3):
        subs[sp.diff(qt[i], t, 2)] = dd[i]
    for i in range(3):
        subs[sp.diff(qt[i], t)] = dq[i]
    for i in range(3):
        subs[qt[i]] = q[i]
    eqs = [e.subs(subs) for e in eqs]
    Mmat, rhs = sp.linear_eq_to_matrix(eqs, dd)
    return sp.lambdify((q, dq, tau), (Mmat, rhs), "numpy")


@pytest.fixture(scope="module")
def oracle():
    return _lagrangian_oracle(PendulumParams())


def test_matches_symbolic_lagrangian(oracle):
    rng = np.random.default_rng(7)
    p = PendulumParams()
    for _ in range(25):
        x = rng.uniform([-1.5, -3, -3, -5, -10, -10], [1.5, 3, 3, 5, 10, 10])
        u = rng.uniform(-100, 100, 3)
        M, r = oracle(x[:3], x[3:], u)
        acc = np.linalg.solve(np.asarray(M, float), np.asarray(r, float).ravel())
        got = dynamics_eval(x, u, p)
        assert np.allclose(got[:3], x[3:], rtol=0, atol=0)
        assert np.allclose(got[3:], acc, rtol=1e-9, atol=1e-9)


def test_delta_scales_first_two_masses():
    rng = np.random.default_rng(3)
    p = PendulumParams(delta=1.5)
    manual = PendulumParams(m1=1.5, m2=1.5)
    x = rng.normal(size=6)
    u = rng.normal(size=3) * 10
    assert np.allclose(dynamics_eval(x, u, p), dynamics_eval(x, u, manual), rtol=1e-14)
    assert p.nominal().delta == 1.0


def test_upright_is_equilibrium():
    assert np.array_equal(dynamics_eval(np.zeros(6), np.zeros(3), PendulumParams()), np.zeros(6))


def test_forward_kinematics_zero_state():
    assert forward_kinematics(np.zeros(6)).tolist() == [0.0, 3.0]


def test_forward_kinematics_broadcasts():
    X = np.zeros((4, 5, 6))
    X[..., 0] = math.pi / 2
    out = forward_kinematics(X)
    assert out.shape == (4, 5, 2)
    assert np.allclose(out, [3.0, 0.0])


def test_energy_drift_unforced_swing():
    p, cfg = PendulumParams(), SimConfig()
    x = np.array([0.3, 0.0, 0.0, 0.0, 0.0, 0.0])
    e0 = total_energy(x, p)
    for _ in range(100):
        x = integrate_step(x, np.zeros(3), p, cfg)
    assert abs(total_energy(x, p) - e0) / abs(e0) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=6, max_size=6))
def test_energy_conserved_from_random_states(v):
    p, cfg = PendulumParams(), SimConfig()
    x = np.array(v) * [1.2, 2.0, 2.0, 2.0, 2.0, 2.0]
    e0 = total_energy(x, p)
    for _ in range(20):
        x = integrate_step(x, np.zeros(3), p, cfg)
    assert abs(total_energy(x, p) - e0) <= 1e-6 * max(1.0, abs(e0))


def test_rk4_fourth_order():
    p = PendulumParams()
    x0 = np.array([0.4, -0.3, 0.2, 0.5, -0.5, 1.0])
    u = np.array([5.0, -3.0, 1.0])

    def run(h):
        return integrate_step(x0, u, p, SimConfig(dt_physics=h, dt_control=0.1))

    ref = run(1e-4)
    e1 = np.linalg.norm(run(0.02) - ref)
    e2 = np.linalg.norm(run(0.01) - ref)
    assert 12.0 < e1 / e2 < 20.0


def test_saturation_clips():
    p = PendulumParams()
    assert saturate([150.0, -150.0, 3.0], p).tolist() == [100.0, -100.0, 3.0]


def test_torque_moves_first_joint():
    p = PendulumParams()
    d = dynamics_eval(np.zeros(6), np.array([1.0, 0.0, 0.0]), p)
    assert d[3] > 0


@pytest.mark.parametrize("kwargs", [dict(m1=0.0), dict(delta=-1.0), dict(u_min=1.0, u_max=0.0)])
def test_invalid_params(kwargs):
    with pytest.raises(ValueError):
        PendulumParams(**kwargs)


def test_sim_config_requires_integer_ratio():
    with pytest.raises(ValueError):
        SimConfig(dt_physics=0.003, dt_control=0.01)
    assert SimConfig().substeps == 10


def test_non_finite_state_raises():
    x = np.array([np.nan, 0, 0, 0, 0, 0])
    with pytest.raises((SimulationDivergence, SingularConfiguration)):
        integrate_step(x, np.zeros(3), PendulumParams(), SimConfig())
