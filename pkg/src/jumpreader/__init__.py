"""jumpreader: an LSTM text classifier that learns to skip words and jump
across punctuation structure, with exact FLOP accounting of what it saves."""

from .agents import JumpAction, SkipAction, select_action
from .corpus import (
    Document,
    Token,
    TokenKind,
    Vocabulary,
    build_jump_table,
    load_dataset,
    load_embeddings,
    tokenize,
)
from .estimator import SpeedReaderClassifier
from .metrics import (
    CostModel,
    FlopLedger,
    episode_flops,
    flop_reduction,
    flops_dense,
    flops_lstm_step,
    full_read_flops,
    reading_stats,
)
from .model import ClassifierHead, ModelParams
from .reader import FORCE_READ, StepRecord, Trajectory, predict, read_document, trace
from .trainer import (
    TrainConfig,
    add_rewards,
    evaluate_split,
    parse_config,
    pretrain,
    returns,
    speedread_train,
    step_reward,
)

__all__ = [
    "ClassifierHead",
    "CostModel",
    "Document",
    "FlopLedger",
    "FORCE_READ",
    "JumpAction",
    "ModelParams",
    "SkipAction",
    "SpeedReaderClassifier",
    "StepRecord",
    "Token",
    "TokenKind",
    "TrainConfig",
    "Trajectory",
    "Vocabulary",
    "add_rewards",
    "build_jump_table",
    "episode_flops",
    "evaluate_split",
    "flop_reduction",
    "flops_dense",
    "flops_lstm_step",
    "full_read_flops",
    "load_dataset",
    "load_embeddings",
    "parse_config",
    "predict",
    "pretrain",
    "read_document",
    "reading_stats",
    "returns",
    "select_action",
    "speedread_train",
    "step_reward",
    "tokenize",
    "trace",
]

__version__ = "0.1.0"
