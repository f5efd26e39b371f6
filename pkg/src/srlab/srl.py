"""Supervised learning loop: target tracking task, switching supervisor,
episode lifecycle with safety recovery, and training metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corrective import FeedbackGain, corrective_control, recovery_rollout
from .dynamics import PendulumParams, SimConfig, SimulationDivergence, forward_kinematics, integrate_step, saturate
from .ppo import ActorCritic, Adam, PolicyConfig, gae, ppo_update
from .safe_region import SafeRegionModel
from .safety import StateRanges

CIRCLE_CENTER = (0.0, 2.7)
CIRCLE_RADIUS = 0.3
CIRCLE_RATE = math.pi  # rad/s
SAFE_REWARD = 2.0
DISTANCE_WEIGHT = 10.0

OBS_DIM = 8
ACT_DIM = 3

HORIZON = "horizon"
PREDICTED_UNSAFE = "predicted-unsafe"
CONSTRAINT_VIOLATED = "constraint-violated"

NOT_TRIGGERED = "not-triggered"
SUCCESS = "success"
FAILURE = "failure"

POLICY = "policy"
CORRECTIVE = "corrective"


def target_position(t: float) -> np.ndarray:
    """Point on the target circle; starts at the top and moves with angular rate pi."""
    return np.array([CIRCLE_CENTER[0] + CIRCLE_RADIUS * math.sin(CIRCLE_RATE * t),
                     CIRCLE_CENTER[1] + CIRCLE_RADIUS * math.cos(CIRCLE_RATE * t)])


def reward(state, t: float, params: PendulumParams | None = None) -> float:
    d = forward_kinematics(state, params) - target_position(t)
    return SAFE_REWARD - DISTANCE_WEIGHT * float(math.hypot(d[0], d[1]))


def observe(state, t: float, ranges: StateRanges) -> np.ndarray:
    """Range-scaled state plus the (sin, cos) target phase."""
    half = 0.5 * ranges.widths
    return np.concatenate([np.asarray(state) / half, [math.sin(CIRCLE_RATE * t), math.cos(CIRCLE_RATE * t)]])


@dataclass
class EpisodeRecord:
    total_reward: float
    steps: int
    termination: str
    recovery: str = NOT_TRIGGERED
    recovery_violation: bool = False

    def __post_init__(self):
        if (self.recovery == NOT_TRIGGERED) != (self.termination in (HORIZON, CONSTRAINT_VIOLATED)):
            raise ValueError("recovery outcome must be not-triggered exactly when no supervisor switch occurred")


@dataclass
class LearningMetrics:
    update_rewards: list = field(default_factory=list)
    update_steps: list = field(default_factory=list)
    update_activations: list = field(default_factory=list)
    update_failures: list = field(default_factory=list)
    update_violations: list = field(default_factory=list)
    update_mean_length: list = field(default_factory=list)
    activations: int = 0
    failures: int = 0
    failures_ground: int = 0
    failures_timeout: int = 0
    violations: int = 0
    episodes: list = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return float("nan") if self.activations == 0 else 1.0 - self.failures / self.activations

    def rows(self):
        return list(zip(range(len(self.update_rewards)), self.update_steps, self.update_rewards,
                        self.update_activations, self.update_failures, self.update_violations,
                        self.update_mean_length))


METRIC_COLUMNS = ["update", "env_steps", "mean_reward", "activations", "failures", "violations",
                  "mean_episode_length"]


class Supervisor:
    """One-way switch from the learning policy to the corrective controller.

    The switch time is the first call of ``step`` whose state is predicted
    unsafe; the corrective controller stays in charge until ``reset``.
    """

    def __init__(self, model: SafeRegionModel, gain: FeedbackGain, params: PendulumParams,
                 config: SimConfig):
        self.model, self.gain, self.params, self.config = model, gain, params, config
        self.triggered = False
        self.switch_time = None

    def reset(self):
        self.triggered = False
        self.switch_time = None

    def step(self, state, t: float, policy_action):
        """Advance one control period; ``policy_action`` is called only while allowed.

        Returns (next_state, tag) with tag ``"policy"`` or ``"corrective"``.
        """
        if not self.triggered and self.model.predict(state) == 0:
            self.triggered = True
            self.switch_time = t
        if self.triggered:
            u = corrective_control(state, self.gain, self.params)
            tag = CORRECTIVE
        else:
            u = saturate(policy_action(state, t), self.params)
            tag = POLICY
        return integrate_step(state, u, self.params, self.config), tag


def supervised_step(state, t, policy_action, supervisor: Supervisor):
    return supervisor.step(state, t, policy_action)


def reset_state(model: SafeRegionModel | None, ranges: StateRanges) -> np.ndarray:
    """Upright origin, unless the model predicts it unsafe.

    In that case the episode starts from the training state that is labeled
    safe, predicted safe, and nearest to the origin in normalized distance.
    """
    origin = np.zeros(6)
    if model is None or model.predict(origin) == 1:
        return origin
    src = model.embedding.source_states
    ok = (model.embedding.labels == 1) & (model.predict_many(src) == 1)
    if not np.any(ok):
        raise ValueError("the safe-region model predicts every safe training state unsafe")
    cand = src[ok]
    d = np.linalg.norm(cand / ranges.widths, axis=1)
    return cand[int(np.argmin(d))].copy()


@dataclass(frozen=True)
class TaskConfig:
    horizon_steps: int = 500
    action_scale: float = 1.0  # policy outputs raw N*m before saturation
    recovery_horizon: float = 10.0
    recovery_tolerance: float = 0.01


@dataclass
class TrainResult:
    metrics: LearningMetrics
    policy: ActorCritic
    visited_states: np.ndarray
    step_log: dict | None = None


def train(policy_config: PolicyConfig, model: SafeRegionModel | None, params_real: PendulumParams,
          gain: FeedbackGain, sim_config: SimConfig = SimConfig(), total_steps: int = 100_000,
          seed: int = 0, task: TaskConfig = TaskConfig(), ranges: StateRanges | None = None,
          log_steps: bool = False, progress=None) -> TrainResult:
    """PPO on the real plant, with the supervisor when ``model`` is given.

    Without a model episodes end at ``|theta1| >= pi/2`` and count a violation.
    With a model an episode ends at the first predicted-unsafe state; the
    corrective recovery is simulated from there (outside the learning batch)
    and the environment is reset to the upright origin.
    """
    ranges = ranges or (model.ranges if model is not None else StateRanges())
    rng_init, rng_act, rng_opt = np.random.default_rng([seed, policy_config.seed]).spawn(3)
    net = ActorCritic(OBS_DIM, ACT_DIM, policy_config.hidden, policy_config.log_std_init, rng_init)
    opt = Adam(net.theta.size, policy_config.learning_rate, eps=policy_config.adam_eps)
    metrics = LearningMetrics()
    dt = sim_config.dt_control
    origin = reset_state(model, ranges)

    log = {"episode": [], "step": [], "prediction": [], "tag": []} if log_steps else None
    origin_pred = 1 if model is None else model.predict(origin)
    visited = []
    x = origin.copy()
    pred_x = origin_pred
    t = 0.0
    ep_reward, ep_steps, episode = 0.0, 0, 0
    n_steps = policy_config.steps_per_update
    env_steps = 0

    def end_episode(termination, recovery=NOT_TRIGGERED, violation=False):
        nonlocal x, t, ep_reward, ep_steps, episode, pred_x
        metrics.episodes.append(EpisodeRecord(ep_reward, ep_steps, termination, recovery, violation))
        x = origin.copy()
        pred_x = origin_pred
        t = 0.0
        ep_reward, ep_steps = 0.0, 0
        episode += 1

    while env_steps < total_steps:
        buf = {k: [] for k in ("obs", "actions", "logp_old", "values", "rewards", "next_values",
                               "terminals", "ends")}
        ep_start = len(metrics.episodes)
        for _ in range(n_steps):
            obs = observe(x, t, ranges)
            a, logp, v = net.act(obs, rng_act)
            u = saturate(task.action_scale * a, params_real)
            visited.append(x)
            if log is not None:
                log["episode"].append(episode)
                log["step"].append(ep_steps)
                log["prediction"].append(pred_x)
                log["tag"].append(POLICY)
            try:
                x_next = integrate_step(x, u, params_real, sim_config)
                diverged = False
            except SimulationDivergence:
                x_next, diverged = x, True
            t_next = t + dt
            r = reward(x_next, t_next, params_real) if not diverged else SAFE_REWARD - DISTANCE_WEIGHT * 6.0
            ep_reward += r
            ep_steps += 1
            env_steps += 1
            buf["obs"].append(obs)
            buf["actions"].append(a)
            buf["logp_old"].append(logp)
            buf["values"].append(v)
            buf["rewards"].append(r)

            terminal = end = False
            termination = None
            if diverged or abs(x_next[0]) >= math.pi / 2:
                metrics.violations += 1
            if model is None:
                if diverged or abs(x_next[0]) >= math.pi / 2:
                    terminal = end = True
                    termination = CONSTRAINT_VIOLATED
            else:
                pred_next = 0 if diverged else model.predict(x_next)
                if pred_next == 0:
                    terminal = end = True
                    termination = PREDICTED_UNSAFE
            if not end and ep_steps >= task.horizon_steps:
                end = True
                termination = HORIZON

            buf["terminals"].append(float(terminal))
            buf["ends"].append(float(end))
            if terminal:
                buf["next_values"].append(0.0)
            else:
                buf["next_values"].append(float(net.value(observe(x_next, t_next, ranges))[0]))

            if termination == PREDICTED_UNSAFE:
                metrics.activations += 1
                out = recovery_rollout(x_next, gain, params_real, sim_config, ranges.widths,
                                       task.recovery_horizon, task.recovery_tolerance)
                if log is not None:
                    # corrective steps: only the switch state is assessed (-1 = not evaluated)
                    n_corr = max(len(out.trajectory) - 1, 1)
                    log["episode"].extend([episode] * n_corr)
                    log["step"].extend(range(ep_steps, ep_steps + n_corr))
                    log["prediction"].extend([0] + [-1] * (n_corr - 1))
                    log["tag"].extend([CORRECTIVE] * n_corr)
                if not out.success:
                    metrics.failures += 1
                    if out.violation:
                        metrics.failures_ground += 1
                    else:
                        metrics.failures_timeout += 1
                end_episode(termination, SUCCESS if out.success else FAILURE, out.violation)
            elif end:
                end_episode(termination)
            else:
                x, t = x_next, t_next
                pred_x = 1 if model is None else pred_next
            if env_steps >= total_steps:
                break

        batch = {k: np.asarray(v, dtype=np.float64) for k, v in buf.items()}
        adv, ret = gae(batch["rewards"], batch["values"], batch["next_values"], batch["terminals"],
                       batch["ends"], policy_config.gamma, policy_config.gae_lambda)
        ppo_update(net, opt, {"obs": batch["obs"], "actions": batch["actions"], "logp_old": batch["logp_old"],
                              "advantages": adv, "returns": ret}, policy_config, rng_opt)

        finished = metrics.episodes[ep_start:]
        if finished:
            mean_r = float(np.mean([e.total_reward for e in finished]))
            mean_len = float(np.mean([e.steps for e in finished]))
        else:
            mean_r, mean_len = float(ep_reward), float(ep_steps)
        metrics.update_rewards.append(mean_r)
        metrics.update_steps.append(env_steps)
        metrics.update_activations.append(metrics.activations)
        metrics.update_failures.append(metrics.failures)
        metrics.update_violations.append(metrics.violations)
        metrics.update_mean_length.append(mean_len)
        if progress is not None:
            progress(len(metrics.update_rewards), env_steps, mean_r, metrics)

    step_log = None if log is None else {k: np.asarray(v) for k, v in log.items()}
    return TrainResult(metrics, net, np.asarray(visited).reshape(-1, 6), step_log)


def check_supervisor_log(step_log: dict) -> int:
    """Number of policy actions taken at a predicted-unsafe state or after a switch."""
    bad = 0
    switched = {}
    for ep, pred, tag in zip(step_log["episode"], step_log["prediction"], step_log["tag"]):
        if tag == CORRECTIVE:
            switched[ep] = True
        elif pred == 0 or switched.get(ep, False):
            bad += 1
    return bad
