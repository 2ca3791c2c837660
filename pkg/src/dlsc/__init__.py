"""Clustering with a jointly trained generator, encoder and critic whose latent
space is split into a one-hot cluster code and a continuous style code."""

__version__ = "0.1.0"

from .data import Dataset, load_csv, load_idx, scale_dataset, synth_gmm  # noqa: E402
from .evaluate import acc, ari, assign, cluster_report, kmeans, nmi  # noqa: E402
from .losses import LossWeights  # noqa: E402
from .trainer import TrainConfig, Trainer, load_checkpoint, save_checkpoint, train  # noqa: E402

__all__ = [
    "Dataset",
    "LossWeights",
    "TrainConfig",
    "Trainer",
    "acc",
    "ari",
    "assign",
    "cluster_report",
    "kmeans",
    "load_checkpoint",
    "load_csv",
    "load_idx",
    "nmi",
    "save_checkpoint",
    "scale_dataset",
    "synth_gmm",
    "train",
]
