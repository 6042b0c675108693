"""Learning agents: numpy networks, PPO, and the A3 handover baseline."""
from .baseline import BaselineState, baseline_select_gbs
from .nn import AdamConfig, AdamState, Mlp, adam_update, backprop, mlp_forward
from .policy import PolicyOutput, policy_entropy, policy_logprob, policy_sample
from .ppo import ActorCritic, PpoConfig, Trajectory, clipped_surrogate, compute_gae, ppo_update

_LAZY = {"PPOAgent", "RandomAgent", "train", "save_checkpoint", "load_checkpoint"}


def __getattr__(name):
    # estimator imports the environment, which itself imports .baseline
    if name in _LAZY:
        from . import estimator
        return getattr(estimator, name)
    raise AttributeError(name)
