"""Feature pyramid network land-cover segmentation."""

from ._fpnseg import (
    CLASS_COLORS,
    CLASS_NAMES,
    CheckpointError,
    ConfigError,
    DataError,
    FpnsegError,
    InvalidValueError,
    IoError,
    Model,
    ShapeError,
    TrainingError,
    combined_loss,
    conv2d,
    cross_entropy,
    decode_mask,
    encode_mask,
    iou,
    pad_to_multiple,
    rotate90,
    run_cli,
    soft_jaccard,
    softmax,
    write_synth_dataset,
)

__all__ = [
    "CLASS_COLORS",
    "CLASS_NAMES",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "FpnsegError",
    "InvalidValueError",
    "IoError",
    "Model",
    "ShapeError",
    "TrainingError",
    "combined_loss",
    "conv2d",
    "cross_entropy",
    "decode_mask",
    "encode_mask",
    "iou",
    "pad_to_multiple",
    "rotate90",
    "run_cli",
    "soft_jaccard",
    "softmax",
    "write_synth_dataset",
]
