"""Attention-aware adversarial cross-modal hashing."""

from ._core import (
    ConfigError,
    Dataset,
    DimensionError,
    IoError,
    Modality,
    Model,
    NumericError,
    average_precision,
    encode,
    evaluate,
    generate_synthetic,
    gradcheck,
    hamming_rank,
    load_checkpoint,
    load_dataset,
    mask_stats,
    save_dataset,
    train,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "DimensionError",
    "IoError",
    "Modality",
    "Model",
    "NumericError",
    "average_precision",
    "encode",
    "evaluate",
    "generate_synthetic",
    "gradcheck",
    "hamming_rank",
    "load_checkpoint",
    "load_dataset",
    "mask_stats",
    "save_dataset",
    "train",
]
