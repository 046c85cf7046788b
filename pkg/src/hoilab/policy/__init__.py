"""Actor-critic learning: MLPs, Gaussian policy, GAE/TD(lambda), PPO."""
from .mlp import Mlp, gelu, gelu_grad
from .optim import Adam, RunningNorm, clip_grad
from .gaussian import GaussianPolicy
from .returns import gae_advantages, td_lambda_returns
from .ppo import RolloutBatch, ppo_update, surrogate_gradient, reinforce_gradient
from .config import TrainerConfig, FULL_HIDDEN, DESK_HIDDEN
from .checkpoint import save_checkpoint, load_checkpoint, Checkpoint, CheckpointError

__all__ = ["Mlp", "gelu", "gelu_grad", "Adam", "RunningNorm", "clip_grad", "GaussianPolicy",
           "gae_advantages", "td_lambda_returns", "RolloutBatch", "ppo_update",
           "surrogate_gradient", "reinforce_gradient", "TrainerConfig", "FULL_HIDDEN",
           "DESK_HIDDEN", "save_checkpoint", "load_checkpoint", "Checkpoint", "CheckpointError"]
