"""Learned priority-order policies for the rolling-horizon planner.

Talks to the planner only over its NDJSON bridge and CLI; checkpoints are
.npz weight archives with JSON manifests.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .client import BridgeProtocolError, StdioEnv, TcpEnv, run_episode
from .model import (
    ModelConfig,
    OrderPolicyNet,
    PathEncoder,
    PermutationDecoder,
    ValueNet,
)
from .ppo import Episode, LossReport, PPOConfig, StepRecord, ppo_update, rewards_to_go

__all__ = [
    "BridgeProtocolError",
    "Episode",
    "LossReport",
    "ModelConfig",
    "OrderPolicyNet",
    "PathEncoder",
    "PermutationDecoder",
    "PPOConfig",
    "StepRecord",
    "StdioEnv",
    "TcpEnv",
    "ValueNet",
    "load_checkpoint",
    "ppo_update",
    "rewards_to_go",
    "run_episode",
    "save_checkpoint",
]
