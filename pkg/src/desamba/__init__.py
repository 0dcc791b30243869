"""Decoupled multi-sequence 3D classification with spectral adaptive modulation."""
__version__ = "0.1.0"

from .config import (ABLATION_TABLE, FLAG_NAMES, ExperimentConfig, ModelConfig, TrainConfig,
                     ablation_config, ablation_registry, load_config, save_config)
from .drlm import DRLM, DecoupledBundle, drlm_losses
from .errors import (ConfigError, ContractError, DesambaError, EvaluationError, IngestionError,
                     NumericInputError, ValidationError)
from .model import DeSamba, SAMNetClassifier, build_model
from .samnet import SAMBlock, SAMNet, StagePlan
from .spectral import SAMB, SpectralTensor, forward_spectral, inverse_spectral, modulate

__all__ = [
    "ABLATION_TABLE", "FLAG_NAMES", "ExperimentConfig", "ModelConfig", "TrainConfig",
    "ablation_config", "ablation_registry", "load_config", "save_config",
    "DRLM", "DecoupledBundle", "drlm_losses",
    "ConfigError", "ContractError", "DesambaError", "EvaluationError", "IngestionError",
    "NumericInputError", "ValidationError",
    "DeSamba", "SAMNetClassifier", "build_model", "SAMBlock", "SAMNet", "StagePlan",
    "SAMB", "SpectralTensor", "forward_spectral", "inverse_spectral", "modulate",
]
