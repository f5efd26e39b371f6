"""Clipped-surrogate policy gradient with a numpy actor-critic.

The networks are small tanh MLPs with hand-written backpropagation; all
parameters live in one flat vector so Adam, gradient clipping and the
finite-difference check operate on a single array.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class TrainingFailure(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class PolicyConfig:
    hidden: tuple = (128, 128)
    steps_per_update: int = 2048
    epochs: int = 10
    minibatches: int = 128
    learning_rate: float = 1e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    vf_coef: float = 1.0
    max_grad_norm: float = 10.0
    ent_coef: float = 0.0
    clip_range: float = 0.2
    log_std_init: float = 0.0
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        positive = ("steps_per_update", "epochs", "minibatches", "learning_rate", "gamma",
                    "gae_lambda", "max_grad_norm", "clip_range")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.vf_coef < 0 or self.ent_coef < 0:
            raise ValueError("loss coefficients must be non-negative")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def gae(rewards, values, next_values, terminals, episode_ends, gamma: float, lam: float):
    """Generalized advantage estimates and value targets.

    ``terminals`` zero the bootstrap; ``episode_ends`` (a superset of
    terminals, also covering truncation) cut the recursion.
    """
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * (1.0 - terminals[t]) * next_values[t] - values[t]
        last = delta + gamma * lam * (1.0 - episode_ends[t]) * last
        adv[t] = last
    return adv, adv + np.asarray(values)


def _orthogonal(rng, shape, gain):
    a = rng.standard_normal((max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


class ActorCritic:
    """Gaussian policy (state-independent log-std) and a separate value network."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(128, 128), log_std_init: float = 0.0,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.obs_dim, self.act_dim, self.hidden = obs_dim, act_dim, tuple(hidden)
        sizes = [obs_dim, *self.hidden]
        shapes = []
        for net, out in (("pi", act_dim), ("vf", 1)):
            for i in range(len(sizes) - 1):
                shapes += [(f"{net}_W{i}", (sizes[i], sizes[i + 1])), (f"{net}_b{i}", (sizes[i + 1],))]
            shapes += [(f"{net}_Wout", (sizes[-1], out)), (f"{net}_bout", (out,))]
        shapes.append(("log_std", (act_dim,)))
        self.shapes = shapes
        self.theta = np.zeros(sum(int(np.prod(s)) for _, s in shapes))
        self.p = {}
        off = 0
        for name, s in shapes:
            n = int(np.prod(s))
            self.p[name] = self.theta[off:off + n].reshape(s)
            off += n
        for net, out_gain in (("pi", 0.01), ("vf", 1.0)):
            for i in range(len(self.hidden)):
                w = self.p[f"{net}_W{i}"]
                w[...] = _orthogonal(rng, w.shape, math.sqrt(2.0))
            w = self.p[f"{net}_Wout"]
            w[...] = _orthogonal(rng, w.shape, out_gain)
        self.p["log_std"][...] = log_std_init

    # -- forward ------------------------------------------------------------

    def _mlp(self, net, obs):
        acts = [obs]
        h = obs
        for i in range(len(self.hidden)):
            h = np.tanh(h @ self.p[f"{net}_W{i}"] + self.p[f"{net}_b{i}"])
            acts.append(h)
        return h @ self.p[f"{net}_Wout"] + self.p[f"{net}_bout"], acts

    def mean(self, obs):
        return self._mlp("pi", np.atleast_2d(obs))[0]

    def value(self, obs):
        return self._mlp("vf", np.atleast_2d(obs))[0][:, 0]

    def log_prob(self, obs, actions):
        mu = self.mean(obs)
        ls = self.p["log_std"]
        z = (actions - mu) / np.exp(ls)
        return (-0.5 * z * z - ls - 0.5 * LOG_2PI).sum(axis=1)

    def act(self, obs, rng: np.random.Generator):
        """Sample one action; returns (action, log_prob, value)."""
        o = obs[None, :]
        mu = self.mean(o)[0]
        std = np.exp(self.p["log_std"])
        a = mu + std * rng.standard_normal(self.act_dim)
        z = (a - mu) / std
        logp = float((-0.5 * z * z - self.p["log_std"] - 0.5 * LOG_2PI).sum())
        return a, logp, float(self.value(o)[0])

    # -- loss and gradient -----------------------------------------------------

    def _backprop(self, net, acts, dout, grads):
        g = dout
        grads[f"{net}_Wout"] += acts[-1].T @ g
        grads[f"{net}_bout"] += g.sum(axis=0)
        g = g @ self.p[f"{net}_Wout"].T
        for i in range(len(self.hidden) - 1, -1, -1):
            g = g * (1.0 - acts[i + 1] ** 2)
            grads[f"{net}_W{i}"] += acts[i].T @ g
            grads[f"{net}_b{i}"] += g.sum(axis=0)
            if i > 0:
                g = g @ self.p[f"{net}_W{i}"].T

    def loss_and_grad(self, batch: dict, clip_range: float, vf_coef: float, ent_coef: float,
                      with_grad: bool = True):
        """Total loss (clipped surrogate + value + entropy terms) and its gradient.

        ``batch`` keys: obs, actions, logp_old, advantages, returns.
        """
        obs, act = batch["obs"], batch["actions"]
        A, ret = batch["advantages"], batch["returns"]
        N = obs.shape[0]
        mu, pi_acts = self._mlp("pi", obs)
        v, vf_acts = self._mlp("vf", obs)
        v = v[:, 0]
        ls = self.p["log_std"]
        std = np.exp(ls)
        z = (act - mu) / std
        logp = (-0.5 * z * z - ls - 0.5 * LOG_2PI).sum(axis=1)
        ratio = np.exp(logp - batch["logp_old"])
        surr1 = ratio * A
        surr2 = np.clip(ratio, 1.0 - clip_range, 1.0 + clip_range) * A
        policy_loss = -np.mean(np.minimum(surr1, surr2))
        value_loss = np.mean((v - ret) ** 2)
        entropy = float(np.sum(ls + 0.5 * (LOG_2PI + 1.0)))
        loss = policy_loss + vf_coef * value_loss - ent_coef * entropy
        info = {"policy_loss": float(policy_loss), "value_loss": float(value_loss),
                "entropy": entropy, "clip_fraction": float(np.mean(np.abs(ratio - 1) > clip_range))}
        if not with_grad:
            return float(loss), None, info
        grad = np.zeros_like(self.theta)
        grads = {}
        off = 0
        for name, s in self.shapes:
            n = int(np.prod(s))
            grads[name] = grad[off:off + n].reshape(s)
            off += n
        # d(policy_loss)/d(logp): the unclipped branch is active iff surr1 <= surr2
        dlogp = np.where(surr1 <= surr2, -A * ratio / N, 0.0)
        dmu = dlogp[:, None] * z / std
        grads["log_std"] += (dlogp[:, None] * (z * z - 1.0)).sum(axis=0) - ent_coef
        self._backprop("pi", pi_acts, dmu, grads)
        dv = (vf_coef * 2.0 / N) * (v - ret)
        self._backprop("vf", vf_acts, dv[:, None], grads)
        return float(loss), grad, info

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "hidden": list(self.hidden),
            "layers": [{"name": name, "shape": list(s), "values": self.p[name].ravel().tolist()}
                       for name, s in self.shapes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ActorCritic":
        net = cls(d["obs_dim"], d["act_dim"], tuple(d["hidden"]))
        for layer in d["layers"]:
            net.p[layer["name"]][...] = np.asarray(layer["values"]).reshape(layer["shape"])
        return net


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        theta -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> float:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        grad *= max_norm / (norm + 1e-12)
    return norm


def ppo_update(net: ActorCritic, opt: Adam, batch: dict, config: PolicyConfig,
               rng: np.random.Generator) -> dict:
    """Epochs of shuffled minibatch steps on one rollout batch."""
    n = batch["obs"].shape[0]
    adv = batch["advantages"]
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    data = dict(batch, advantages=adv)
    size = max(1, n // config.minibatches)
    stats = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, size * config.minibatches, size):
            idx = order[start:start + size]
            if len(idx) == 0:
                continue
            mb = {k: v[idx] for k, v in data.items()}
            loss, grad, info = net.loss_and_grad(mb, config.clip_range, config.vf_coef, config.ent_coef)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingFailure("non-finite loss or gradient", {
                    "loss": loss, "info": info, "theta_norm": float(np.linalg.norm(net.theta)),
                    "adv_abs_max": float(np.max(np.abs(mb["advantages"]))),
                    "returns_abs_max": float(np.max(np.abs(mb["returns"])))})
            clip_grad_norm(grad, config.max_grad_norm)
            opt.step(net.theta, grad)
            stats.append(info["policy_loss"])
    return {"mean_policy_loss": float(np.mean(stats)) if stats else 0.0}


def policy_gradient_check(net: ActorCritic, batch: dict, clip_range: float = 0.2, vf_coef: float = 1.0,
                          ent_coef: float = 0.0, step: float = 1e-5) -> float:
    """Max elementwise relative error between the analytic gradient and central differences.

    Relative error is ``|g - f| / max(|g|, |f|, 1e-6)``.
    """
    _, g, _ = net.loss_and_grad(batch, clip_range, vf_coef, ent_coef)
    f = np.empty_like(g)
    for i in range(net.theta.size):
        old = net.theta[i]
        net.theta[i] = old + step
        lp, _, _ = net.loss_and_grad(batch, clip_range, vf_coef, ent_coef, with_grad=False)
        net.theta[i] = old - step
        lm, _, _ = net.loss_and_grad(batch, clip_range, vf_coef, ent_coef, with_grad=False)
        net.theta[i] = old
        f[i] = (lp - lm) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(g), np.abs(f)), 1e-6)
    return float(np.max(np.abs(g - f) / denom))
