"""Training harness: configuration, optimizer, metrics, checkpoints and run loops."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import MODES, ConfigError, TrainConfig
from .metrics import MetricsReport, compute_metrics, confusion_matrix
from .optim import Adam
from .training import (Corpora, NumericalError, RunArtifacts, TrainedRun, evaluate,
                       evaluate_classifier, export_latent, generate_sentences, load_corpora,
                       load_run, predict, save_run, train)

__all__ = [
    "Adam", "CheckpointError", "ConfigError", "Corpora", "MODES", "MetricsReport",
    "NumericalError", "RunArtifacts", "TrainConfig", "TrainedRun", "compute_metrics",
    "confusion_matrix", "evaluate", "evaluate_classifier", "export_latent",
    "generate_sentences", "load_checkpoint", "load_corpora", "load_run", "predict",
    "save_checkpoint", "save_run", "train",
]
