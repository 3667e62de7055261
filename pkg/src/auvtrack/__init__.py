"""Cooperative multi-AUV target tracking: simulation, scene-adaptive
multi-agent learning, an acoustic beacon layer, and a deterministic
training/eval harness."""

from .channel import AcousticChannel, transmission_delay
from .config import (ChannelParams, Hyperparams, RewardCoefficients, RunConfig,
                     ScenarioConfig, build_config, load_config_file)
from .env import Observation, WorldState, init_world, observe, step_world
from .errors import (AuvTrackError, CheckpointError, ConfigError,
                     ContractViolation, MalformedBeacon)
from .harness import (EpisodeContext, run_episode, run_eval_suite,
                      run_training, replay_episode)
from .marl import ReplayBuffer, SceneWeights, Trainer, Transition, fuse_q
from .metrics import EpisodeRecord, EpisodeTrace, tracking_accuracy
from .rewards import RewardBreakdown, assign_targets, compose_reward
from .checkpoint import load_checkpoint, restore_trainer, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "AcousticChannel", "transmission_delay",
    "ChannelParams", "Hyperparams", "RewardCoefficients", "RunConfig",
    "ScenarioConfig", "build_config", "load_config_file",
    "Observation", "WorldState", "init_world", "observe", "step_world",
    "AuvTrackError", "CheckpointError", "ConfigError", "ContractViolation",
    "MalformedBeacon",
    "EpisodeContext", "run_episode", "run_eval_suite", "run_training",
    "replay_episode",
    "ReplayBuffer", "SceneWeights", "Trainer", "Transition", "fuse_q",
    "EpisodeRecord", "EpisodeTrace", "tracking_accuracy",
    "RewardBreakdown", "assign_targets", "compose_reward",
    "load_checkpoint", "restore_trainer", "save_checkpoint",
    "__version__",
]
