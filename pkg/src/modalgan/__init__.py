"""Clustered generation with GANs: multimodal latent spaces, latent inverters and matched mode priors."""

from .datasets import LabeledDataset, gmm_ring, load_idx, merge_classes, subsample_classes, two_moons
from .latent import (
    LatentConfig,
    ModePriorParams,
    cumulative_breakpoints,
    mode_of,
    reparam_indicator,
    sample_latent,
    sample_mode,
    softmax_prior,
)
from .nn import Mlp, Optimizer
from .trainer import Conditions, GanModel, TrainConfig, generate, train

__version__ = "0.1.0"

__all__ = [
    "Conditions", "GanModel", "LabeledDataset", "LatentConfig", "Mlp", "ModePriorParams", "Optimizer",
    "TrainConfig", "cumulative_breakpoints", "generate", "gmm_ring", "load_idx", "merge_classes", "mode_of",
    "reparam_indicator", "sample_latent", "sample_mode", "softmax_prior", "subsample_classes", "train",
    "two_moons",
]
