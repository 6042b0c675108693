"""PPO with generalized advantage estimation over the hybrid action space."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .nn import AdamConfig, AdamState, Mlp, adam_update, backprop, clip_by_global_norm, mlp_forward
from .policy import PolicyOutput, entropy_grads, logprob_grads, policy_entropy, logprob_pre_tanh

log = logging.getLogger(__name__)


@dataclass
class PpoConfig:
    lr: float = 3e-4
    gamma: float = 0.95
    clip_epsilon: float = 0.2
    gae_lambda: float = 0.95
    epochs_per_update: int = 4
    minibatch_size: int = 256
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    rollout_length: int = 2048
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_grad_norm: float | None = 0.5
    reward_scale: float = 0.01

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must be in [0, 1]")
        if not self.clip_epsilon > 0:
            raise ValueError("clip_epsilon must be positive")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.adam_beta1, self.adam_beta2, self.adam_eps)


@dataclass
class Trajectory:
    """Transitions from one environment, in order, since its last reset or
    since the previous update."""

    obs: list = field(default_factory=list)
    pre_tanh: list = field(default_factory=list)
    gbs: list = field(default_factory=list)
    log_prob: list = field(default_factory=list)
    reward: list = field(default_factory=list)
    value: list = field(default_factory=list)
    done: list = field(default_factory=list)

    def add(self, obs, pre_tanh, gbs, log_prob, reward, value, done):
        self.obs.append(obs)
        self.pre_tanh.append(pre_tanh)
        self.gbs.append(gbs)
        self.log_prob.append(log_prob)
        self.reward.append(reward)
        self.value.append(value)
        self.done.append(done)

    def __len__(self):
        return len(self.reward)


def compute_gae(traj, gamma: float, lam: float, bootstrap_value: float = 0.0):
    """Advantages and value targets.

    ``traj`` needs ``reward``, ``value`` and ``done`` sequences;
    ``bootstrap_value`` is V of the state after the last transition and is
    ignored when that transition ended an episode.
    """
    r = np.asarray(traj.reward, dtype=float)
    v = np.asarray(traj.value, dtype=float)
    d = np.asarray(traj.done, dtype=float)
    if len(r) == 0:
        raise ValueError("empty trajectory")
    next_v = np.append(v[1:], bootstrap_value)
    delta = r + gamma * next_v * (1.0 - d) - v
    adv = np.zeros_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        running = delta[t] + gamma * lam * (1.0 - d[t]) * running
        adv[t] = running
    return adv, adv + v


def clipped_surrogate(ratio, advantage, eps: float):
    """Per-sample ``min(rho A, clip(rho, 1-eps, 1+eps) A)`` and its derivative in rho."""
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantage
    obj = np.minimum(unclipped, clipped)
    d_ratio = np.where(unclipped <= clipped, advantage, 0.0)
    return obj, d_ratio


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    adv = np.asarray(adv, dtype=float)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


class ActorCritic:
    """Separate policy and value networks plus the shared log-std vector."""

    def __init__(self, obs_dim: int, n_gbs: int | None, hidden=(128, 128), rng=None,
                 init_log_std: float = -0.5):
        rng = rng if rng is not None else np.random.default_rng()
        self.obs_dim = obs_dim
        self.n_gbs = n_gbs
        head = 3 + (n_gbs or 0)
        self.policy = Mlp.init([obs_dim, *hidden, head], rng, out_scale=0.01)
        self.value = Mlp.init([obs_dim, *hidden, 1], rng, out_scale=1.0)
        self.log_std = np.full(3, float(init_log_std))

    def heads(self, obs) -> PolicyOutput:
        out = mlp_forward(self.policy, obs)
        logits = out[..., 3:] if self.n_gbs else None
        return PolicyOutput(out[..., :3], self.log_std, logits)

    def values(self, obs) -> np.ndarray:
        return mlp_forward(self.value, obs)[..., 0]

    def policy_params(self) -> list[np.ndarray]:
        return self.policy.params() + [self.log_std]

    def value_params(self) -> list[np.ndarray]:
        return self.value.params()

    def snapshot(self):
        return [p.copy() for p in self.policy_params() + self.value_params()]

    def restore(self, snap):
        for p, s in zip(self.policy_params() + self.value_params(), snap):
            p[...] = s


def policy_loss_and_grads(ac: ActorCritic, obs, pre_tanh, gbs, old_logp, adv, cfg: PpoConfig):
    """Clipped-surrogate loss (negated, to minimize) with entropy bonus and
    its gradients in :meth:`ActorCritic.policy_params` order."""
    n = len(adv)
    out = ac.heads(obs)
    new_logp = logprob_pre_tanh(out, pre_tanh, gbs if ac.n_gbs else None)
    ratio = np.exp(new_logp - old_logp)
    obj, d_ratio = clipped_surrogate(ratio, adv, cfg.clip_epsilon)
    ent = policy_entropy(out)
    loss = -obj.mean() - cfg.entropy_coef * ent.mean()

    g_lp = -(d_ratio * ratio) / n
    dm, dls, dlg = logprob_grads(out, pre_tanh, gbs if ac.n_gbs else None)
    em, els, elg = entropy_grads(out)
    k = -cfg.entropy_coef / n
    d_mean = g_lp[:, None] * dm + k * em
    d_log_std = (g_lp[:, None] * dls).sum(axis=0) + k * els.sum(axis=0)
    head_grad = d_mean
    if ac.n_gbs:
        head_grad = np.concatenate([d_mean, g_lp[:, None] * dlg + k * elg], axis=1)
    grads = backprop(ac.policy, obs, head_grad) + [d_log_std]
    stats = {
        "policy_loss": float(-obj.mean()),
        "entropy": float(ent.mean()),
        "approx_kl": float(np.mean(old_logp - new_logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_epsilon)),
    }
    return loss, grads, stats


def value_loss_and_grads(ac: ActorCritic, obs, returns, cfg: PpoConfig):
    v = ac.values(obs)
    err = v - returns
    loss = cfg.value_coef * float(np.mean(err * err))
    grads = backprop(ac.value, obs, (cfg.value_coef * 2.0 * err / len(err))[:, None])
    return loss, grads, float(np.mean(err * err))


@dataclass
class UpdateReport:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float
    aborted: bool = False
    diagnostics: str = ""


def ppo_update(ac: ActorCritic, batch: dict, cfg: PpoConfig, opt_state: dict, rng) -> UpdateReport:
    """``epochs_per_update`` passes of shuffled minibatch Adam steps.

    ``batch`` holds ``obs``, ``pre_tanh``, ``gbs``, ``log_prob``,
    ``advantages`` and ``returns`` arrays. Advantages are normalized over
    the whole batch first. A non-finite loss restores the parameters from
    before the update and returns an aborted report.
    """
    n = len(batch["advantages"])
    adv = normalize_advantages(batch["advantages"])
    snap = ac.snapshot()
    if "policy" not in opt_state:
        opt_state["policy"] = AdamState.like(ac.policy_params())
        opt_state["value"] = AdamState.like(ac.value_params())
    acc = {"policy_loss": [], "value_loss": [], "entropy": [], "approx_kl": [], "clip_fraction": []}
    mb = max(1, min(cfg.minibatch_size, n))
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            obs = batch["obs"][idx]
            loss, pgrads, stats = policy_loss_and_grads(
                ac, obs, batch["pre_tanh"][idx], batch["gbs"][idx], batch["log_prob"][idx], adv[idx], cfg)
            vloss, vgrads, mse = value_loss_and_grads(ac, obs, batch["returns"][idx], cfg)
            if not (np.isfinite(loss) and np.isfinite(vloss)):
                ac.restore(snap)
                return UpdateReport(float("nan"), float("nan"), float("nan"), float("nan"), float("nan"),
                                    aborted=True,
                                    diagnostics=f"non-finite loss (policy={loss}, value={vloss}) "
                                                f"at minibatch starting {start}")
            pgrads, _ = clip_by_global_norm(pgrads, cfg.max_grad_norm)
            vgrads, _ = clip_by_global_norm(vgrads, cfg.max_grad_norm)
            adam_update(ac.policy_params(), pgrads, opt_state["policy"], cfg.adam)
            adam_update(ac.value_params(), vgrads, opt_state["value"], cfg.adam)
            for k in ("policy_loss", "entropy", "approx_kl", "clip_fraction"):
                acc[k].append(stats[k])
            acc["value_loss"].append(mse)
    return UpdateReport(**{k: float(np.mean(v)) for k, v in acc.items()})
