"""Grayscale-infrared cross-modality person re-identification toolkit."""

__version__ = "0.1.0"

from .backbone import DualPathExtractor, StagedExtractorConfig, global_average_pool
from .data import (
    DatasetManifest,
    ImageRecord,
    SyntheticSpec,
    augment_train,
    generate_synthetic,
    load_manifest,
    save_manifest,
    write_synthetic_dataset,
)
from .evaluate import EvalProtocol, EvalReport, compute_cmc, compute_map, evaluate, rank_gallery
from .grayscale import expand_channels, to_grayscale, visible_to_network_input
from .head import IdentityHead, identity_loss
from .losses import (
    MarginConfig,
    bidirectional_ranking_loss,
    cross_modality_loss,
    inter_modality_loss,
    intra_modality_loss,
    pairwise_distances,
    ranking_objective,
    total_loss,
)
from .sampler import BatchSampler, MiniBatch, draw_batch_indices
from .train import ReIDModel, TrainConfig, build_model, load_checkpoint, lr_at_epoch, train

__all__ = [
    "BatchSampler",
    "DatasetManifest",
    "DualPathExtractor",
    "EvalProtocol",
    "EvalReport",
    "IdentityHead",
    "ImageRecord",
    "MarginConfig",
    "MiniBatch",
    "ReIDModel",
    "StagedExtractorConfig",
    "SyntheticSpec",
    "TrainConfig",
    "augment_train",
    "bidirectional_ranking_loss",
    "build_model",
    "compute_cmc",
    "compute_map",
    "cross_modality_loss",
    "draw_batch_indices",
    "evaluate",
    "expand_channels",
    "generate_synthetic",
    "global_average_pool",
    "identity_loss",
    "inter_modality_loss",
    "intra_modality_loss",
    "load_checkpoint",
    "load_manifest",
    "lr_at_epoch",
    "pairwise_distances",
    "rank_gallery",
    "ranking_objective",
    "save_manifest",
    "to_grayscale",
    "total_loss",
    "train",
    "visible_to_network_input",
    "write_synthetic_dataset",
]
