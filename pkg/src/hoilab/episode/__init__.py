"""Reference synthesis, episode lifecycle, environments and training loops."""
from .reference import (ReferenceFrame, ReferenceSequence, ReferenceError, NoiseSpec,
                        generate_reference, sequence_from_states, SCRIPTS)
from .lifecycle import (Thresholds, EpisodeSpec, start_episode, initial_state, check_termination,
                        tracking_errors, CONTINUE, EARLY_STOP, SEQUENCE_END)
from .env import Tracker, HoiEnv, Transition, control_step, rollout, FAULT
from .learner import Learner, EpochStats
from .toy import PointMassTracking
from .training import (RunConfig, EpisodeConfig, ConfigError, load_run_config,
                       run_config_from_dict, train, train_env, make_env, normalize_curve,
                       read_curves, latest_checkpoint, restore_learner)
from .ablation import AblationConfig, ArmResult, run_arm, run_ablation, compare

__all__ = [
    "ReferenceFrame", "ReferenceSequence", "ReferenceError", "NoiseSpec", "generate_reference",
    "sequence_from_states", "SCRIPTS", "Thresholds", "EpisodeSpec", "start_episode",
    "initial_state", "check_termination", "tracking_errors", "CONTINUE", "EARLY_STOP",
    "SEQUENCE_END", "Tracker", "HoiEnv", "Transition", "control_step", "rollout", "FAULT", "Learner",
    "EpochStats", "PointMassTracking", "RunConfig", "EpisodeConfig", "ConfigError",
    "load_run_config", "run_config_from_dict", "train", "train_env", "make_env",
    "normalize_curve", "read_curves", "latest_checkpoint", "restore_learner", "AblationConfig",
    "ArmResult", "run_arm", "run_ablation", "compare"]
