"""LSTM controllers, baseline differentiable stacks, and the four language models."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .lstm import LstmState, init_lstm, lstm_step, zero_state
from .models import (
    MODEL_KINDS,
    LanguageModel,
    LstmLanguageModel,
    ModelConfig,
    NsRnn,
    StratificationStackRnn,
    SuperpositionStackRnn,
    build_model,
)
from .stacks import stratification_step, superposition_step

__all__ = [
    "CheckpointError",
    "LanguageModel",
    "LstmLanguageModel",
    "LstmState",
    "MODEL_KINDS",
    "ModelConfig",
    "NsRnn",
    "StratificationStackRnn",
    "SuperpositionStackRnn",
    "build_model",
    "init_lstm",
    "load_checkpoint",
    "lstm_step",
    "save_checkpoint",
    "stratification_step",
    "superposition_step",
    "zero_state",
]
