"""Estimator-style agents: ``fit`` on a scenario, ``predict`` on observations."""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import fields
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ..env import ActionCommand, EnvConfig, TerminalKind, UavEnv
from .nn import Mlp
from .policy import HybridAction, policy_sample
from .ppo import ActorCritic, PpoConfig, Trajectory, compute_gae, ppo_update

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"UAVSIMCK"
CHECKPOINT_VERSION = 1


class PPOAgent(BaseEstimator):
    """PPO path planner over the hybrid move + GBS action.

    With ``handover="agent"`` the policy picks the serving GBS each step;
    with ``handover="a3"`` it only steers and the environment hands over
    with the A3 rule (the baseline planner).

    Parameters mirror :class:`~uavsim.agent.ppo.PpoConfig`, plus the
    network width, the step budget ``total_steps``, the number of
    lockstep environments ``n_envs`` and the seed ``random_state``.
    """

    def __init__(
        self,
        hidden_sizes=(128, 128),
        lr=3e-4,
        gamma=0.95,
        clip_epsilon=0.2,
        gae_lambda=0.95,
        epochs_per_update=4,
        minibatch_size=256,
        entropy_coef=0.01,
        value_coef=0.5,
        rollout_length=2048,
        adam_beta1=0.9,
        adam_beta2=0.999,
        adam_eps=1e-8,
        max_grad_norm=0.5,
        reward_scale=0.01,
        init_log_std=-0.5,
        total_steps=200_000,
        n_envs=1,
        handover="agent",
        random_state=None,
    ):
        self.hidden_sizes = hidden_sizes
        self.lr = lr
        self.gamma = gamma
        self.clip_epsilon = clip_epsilon
        self.gae_lambda = gae_lambda
        self.epochs_per_update = epochs_per_update
        self.minibatch_size = minibatch_size
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.rollout_length = rollout_length
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.max_grad_norm = max_grad_norm
        self.reward_scale = reward_scale
        self.init_log_std = init_log_std
        self.total_steps = total_steps
        self.n_envs = n_envs
        self.handover = handover
        self.random_state = random_state

    def ppo_config(self) -> PpoConfig:
        params = self.get_params()
        return PpoConfig(**{f.name: params[f.name] for f in fields(PpoConfig)})

    def _init_model(self, env: UavEnv, rng) -> None:
        self.obs_dim_ = env.obs_dim
        self.gbs_ids_ = list(env.gbs_ids)
        n_gbs = len(self.gbs_ids_) if self.handover == "agent" else None
        self.model_ = ActorCritic(self.obs_dim_, n_gbs, tuple(self.hidden_sizes), rng, self.init_log_std)

    def fit(self, scenario, env_config: EnvConfig | None = None, callback=None):
        """Train on ``scenario``. ``callback(record)`` sees each log record."""
        if self.handover not in ("agent", "a3"):
            raise ValueError(f"handover must be 'agent' or 'a3', got {self.handover!r}")
        cfg = self.ppo_config()
        env_config = env_config or EnvConfig()
        if env_config.handover != self.handover:
            env_config = EnvConfig.from_json({**env_config.to_json(), "handover": self.handover})
        rng = np.random.default_rng(self.random_state)
        n_envs = max(int(self.n_envs), 1)
        envs = [UavEnv(scenario, env_config) for _ in range(n_envs)]
        self._init_model(envs[0], rng)
        self.env_config_ = env_config
        self.training_log_ = []
        if self.total_steps <= 0:
            return self

        ac = self.model_
        opt_state: dict = {}
        seeds = rng.integers(0, 2**31 - 1, size=n_envs)
        obs = np.stack([env.reset(int(s)) is not None and env.observe() for env, s in zip(envs, seeds)])
        ep_return = np.zeros(n_envs)
        per_env = max(cfg.rollout_length // n_envs, 1)
        steps, iteration = 0, 0
        while steps < self.total_steps:
            iteration += 1
            trajs = [Trajectory() for _ in range(n_envs)]
            finished: list[tuple[float, TerminalKind]] = []
            for _ in range(per_env):
                out = ac.heads(obs)
                action, logp = policy_sample(out, rng)
                values = ac.values(obs)
                for i, env in enumerate(envs):
                    gbs_idx = int(action.gbs[i]) if action.gbs is not None else 0
                    cmd = ActionCommand(action.delta[i], self.gbs_ids_[gbs_idx])
                    res = env.step(cmd)
                    ep_return[i] += res.reward
                    trajs[i].add(obs[i].copy(), action.pre_tanh[i], gbs_idx, logp[i],
                                 res.reward * cfg.reward_scale, values[i], res.done)
                    if res.done:
                        finished.append((ep_return[i], res.terminal_kind))
                        ep_return[i] = 0.0
                        env.reset(int(rng.integers(0, 2**31 - 1)))
                    obs[i] = env.observe()
                steps += n_envs
                if steps >= self.total_steps:
                    break
            boot = ac.values(obs)
            parts = []
            for i, tr in enumerate(trajs):
                if len(tr):
                    adv, ret = compute_gae(tr, cfg.gamma, cfg.gae_lambda, boot[i])
                    parts.append((tr, adv, ret))
            batch = {
                "obs": np.concatenate([np.asarray(t.obs) for t, _, _ in parts]),
                "pre_tanh": np.concatenate([np.asarray(t.pre_tanh) for t, _, _ in parts]),
                "gbs": np.concatenate([np.asarray(t.gbs, dtype=int) for t, _, _ in parts]),
                "log_prob": np.concatenate([np.asarray(t.log_prob) for t, _, _ in parts]),
                "advantages": np.concatenate([a for _, a, _ in parts]),
                "returns": np.concatenate([r for _, _, r in parts]),
            }
            report = ppo_update(ac, batch, cfg, opt_state, rng)
            if report.aborted:
                log.warning("iteration %d: update aborted: %s", iteration, report.diagnostics)
            n_done = len(finished)
            record = {
                "iteration": iteration,
                "steps": steps,
                "episodes": n_done,
                "mean_reward": float(np.mean([r for r, _ in finished])) if n_done else None,
                "reach_rate": sum(k is TerminalKind.REACHED for _, k in finished) / n_done if n_done else None,
                "collision_rate": sum(k is TerminalKind.COLLIDED for _, k in finished) / n_done if n_done else None,
                "policy_loss": report.policy_loss,
                "value_loss": report.value_loss,
                "entropy": report.entropy,
            }
            self.training_log_.append(record)
            if callback is not None:
                callback(record)
        return self

    # -- acting ----------------------------------------------------------

    def _heads(self, obs):
        check_is_fitted(self, "model_")
        obs = check_array(np.atleast_2d(obs), dtype=float)
        if obs.shape[1] != self.obs_dim_:
            raise ValueError(f"expected {self.obs_dim_} observation features, got {obs.shape[1]}")
        return self.model_.heads(obs)

    def predict(self, obs) -> HybridAction:
        """Distribution modes for a batch of observations."""
        action, _ = policy_sample(self._heads(obs), None, deterministic=True)
        return action

    def act(self, obs, rng=None, deterministic: bool = True) -> ActionCommand:
        action, _ = policy_sample(self._heads(obs), rng, deterministic=deterministic)
        gbs = self.gbs_ids_[int(action.gbs[0])] if action.gbs is not None else self.gbs_ids_[0]
        return ActionCommand(action.delta[0], gbs)

    def value(self, obs) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.values(check_array(np.atleast_2d(obs), dtype=float))


class RandomAgent(BaseEstimator):
    """Uniform moves and uniform GBS picks; the floor for comparisons."""

    def __init__(self, handover="agent", random_state=None):
        self.handover = handover
        self.random_state = random_state

    def fit(self, scenario, env_config=None):
        self.gbs_ids_ = list(scenario.gbs_ids)
        return self

    def act(self, obs, rng=None, deterministic: bool = False) -> ActionCommand:
        check_is_fitted(self, "gbs_ids_")
        rng = rng if rng is not None else np.random.default_rng(self.random_state)
        return ActionCommand(rng.uniform(-1, 1, 3), self.gbs_ids_[int(rng.integers(len(self.gbs_ids_)))])


def train(scenario, env_cfg: EnvConfig | None, ppo_cfg: PpoConfig | None, total_steps: int, seed: int,
          n_envs: int = 1, handover: str = "agent", hidden_sizes=(128, 128), callback=None):
    """Train a PPO agent; returns ``(agent, training_log)``."""
    params = vars(ppo_cfg or PpoConfig())
    agent = PPOAgent(hidden_sizes=hidden_sizes, total_steps=total_steps, n_envs=n_envs,
                     handover=handover, random_state=seed, **params)
    agent.fit(scenario, env_cfg, callback=callback)
    return agent, agent.training_log_


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(agent: PPOAgent, path) -> None:
    """Header, JSON metadata, tensor shapes, then little-endian float64 data."""
    check_is_fitted(agent, "model_")
    ac = agent.model_
    tensors = ac.policy.params() + [ac.log_std] + ac.value.params()
    meta = json.dumps({
        "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in agent.get_params().items()},
        "obs_dim": agent.obs_dim_,
        "gbs_ids": agent.gbs_ids_,
        "policy_sizes": ac.policy.sizes,
        "value_sizes": ac.value.sizes,
        "env_config": agent.env_config_.to_json(),
    }, sort_keys=True).encode()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(meta)), meta,
              struct.pack("<I", len(tensors))]
    for t in tensors:
        chunks.append(struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
    for t in tensors:
        chunks.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> PPOAgent:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a uavsim checkpoint")
    version, meta_len = struct.unpack_from("<II", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 16
    meta = json.loads(raw[off:off + meta_len])
    off += meta_len
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    shapes = []
    for _ in range(n):
        (nd,) = struct.unpack_from("<I", raw, off)
        off += 4
        shapes.append(struct.unpack_from(f"<{nd}I", raw, off))
        off += 4 * nd
    tensors = []
    for shp in shapes:
        size = int(np.prod(shp))
        tensors.append(np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shp).astype(float))
        off += 8 * size
    params = meta["params"]
    params["hidden_sizes"] = tuple(params["hidden_sizes"])
    agent = PPOAgent(**params)
    agent.obs_dim_ = meta["obs_dim"]
    agent.gbs_ids_ = meta["gbs_ids"]
    agent.env_config_ = EnvConfig.from_json(meta["env_config"])
    psz, vsz = meta["policy_sizes"], meta["value_sizes"]
    np_ = 2 * (len(psz) - 1)
    ac = ActorCritic.__new__(ActorCritic)
    ac.obs_dim = agent.obs_dim_
    ac.n_gbs = len(agent.gbs_ids_) if agent.handover == "agent" else None
    ac.policy = Mlp(psz, tensors[0:np_:2], tensors[1:np_:2])
    ac.log_std = tensors[np_]
    ac.value = Mlp(vsz, tensors[np_ + 1::2], tensors[np_ + 2::2])
    agent.model_ = ac
    agent.training_log_ = []
    return agent
