from .pd import pd_torques, ActionMap, Action
from .observation import build_observation, observation_size, ObservationLayout
from .rewards import (RewardConfig, RewardBreakdown, rotation_distance, hand_reward,
                      object_reward, total_reward, compute_reward)

__all__ = ["pd_torques", "ActionMap", "Action", "build_observation", "observation_size",
           "ObservationLayout", "RewardConfig", "RewardBreakdown", "rotation_distance",
           "hand_reward", "object_reward", "total_reward", "compute_reward"]
