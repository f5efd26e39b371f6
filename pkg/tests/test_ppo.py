import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srlab.ppo import ActorCritic, Adam, PolicyConfig, clip_grad_norm, gae, policy_gradient_check, ppo_update


def _batch(net, rng, n=16):
    obs = rng.normal(size=(n, net.obs_dim))
    actions = rng.normal(size=(n, net.act_dim))
    logp = net.log_prob(obs, actions) + rng.normal(scale=0.3, size=n)
    return {"obs": obs, "actions": actions, "logp_old": logp,
            "advantages": rng.normal(size=n), "returns": rng.normal(size=n)}


def test_gae_hand_example():
    g, lam = 0.99, 0.95
    adv, ret = gae(np.ones(3), np.zeros(3), np.zeros(3), [0, 0, 1], [0, 0, 1], g, lam)
    c = g * lam
    expected = [1 + c * (1 + c), 1 + c, 1.0]
    assert np.allclose(adv, expected, rtol=0, atol=1e-9)
    assert adv[0] == pytest.approx(2.82504025, abs=1e-9)
    assert np.array_equal(ret, adv)


def test_gae_truncation_bootstraps_but_cuts_recursion():
    adv, _ = gae([1.0, 1.0], [0.0, 0.0], [0.0, 5.0], [0, 0], [1, 1], 0.9, 0.95)
    assert adv.tolist() == pytest.approx([1.0, 1.0 + 0.9 * 5.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.floats(0, 1), st.floats(0, 1))
def test_gae_lambda_one_is_discounted_return(rewards, gamma, _lam):
    n = len(rewards)
    ends = np.zeros(n)
    ends[-1] = 1
    adv, ret = gae(np.array(rewards), np.zeros(n), np.zeros(n), ends, ends, gamma, 1.0)
    expected = [sum(gamma ** (j - i) * rewards[j] for j in range(i, n)) for i in range(n)]
    assert np.allclose(ret, expected, atol=1e-9)


def test_gradient_check_small_policy():
    rng = np.random.default_rng(0)
    net = ActorCritic(5, 3, hidden=(4, 4), log_std_init=-0.3, rng=rng)
    batch = _batch(net, rng)
    assert policy_gradient_check(net, batch, clip_range=0.2, vf_coef=1.0, ent_coef=0.01) < 1e-4


def test_zero_signal_zero_gradient():
    rng = np.random.default_rng(1)
    net = ActorCritic(5, 3, hidden=(4, 4), rng=rng)
    obs = rng.normal(size=(10, 5))
    act = rng.normal(size=(10, 3))
    batch = {"obs": obs, "actions": act, "logp_old": net.log_prob(obs, act),
             "advantages": np.zeros(10), "returns": net.value(obs)}
    _, grad, _ = net.loss_and_grad(batch, 0.2, 1.0, 0.0)
    assert np.linalg.norm(grad) < 1e-10


def test_log_prob_matches_gaussian_density():
    rng = np.random.default_rng(2)
    net = ActorCritic(4, 2, hidden=(4,), log_std_init=0.5, rng=rng)
    obs = rng.normal(size=(3, 4))
    a = rng.normal(size=(3, 2))
    mu = net.mean(obs)
    s = np.exp(0.5)
    ref = np.sum(-0.5 * ((a - mu) / s) ** 2 - np.log(s * np.sqrt(2 * np.pi)), axis=1)
    assert np.allclose(net.log_prob(obs, a), ref)


def test_serialization_roundtrip():
    net = ActorCritic(8, 3, hidden=(6, 5), rng=np.random.default_rng(3))
    again = ActorCritic.from_dict(net.to_dict())
    assert np.array_equal(again.theta, net.theta)
    layers = {l["name"]: l["shape"] for l in net.to_dict()["layers"]}
    assert layers["pi_W0"] == [8, 6] and layers["log_std"] == [3]


def test_clip_grad_norm():
    g = np.array([3.0, 4.0])
    assert clip_grad_norm(g, 1.0) == 5.0
    assert np.linalg.norm(g) == pytest.approx(1.0)


def test_adam_moves_against_gradient():
    theta = np.zeros(2)
    Adam(2, 0.1).step(theta, np.array([1.0, -1.0]))
    assert theta[0] < 0 < theta[1]


def test_update_is_deterministic():
    cfg = PolicyConfig(hidden=(8, 8), steps_per_update=64, minibatches=4, epochs=2)
    results = []
    for _ in range(2):
        rng = np.random.default_rng(4)
        net = ActorCritic(5, 3, hidden=cfg.hidden, rng=rng)
        batch = _batch(net, rng, 64)
        ppo_update(net, Adam(net.theta.size, cfg.learning_rate), batch, cfg, np.random.default_rng(9))
        results.append(net.theta.copy())
    assert np.array_equal(*results)


def test_policy_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig(learning_rate=0.0)
