"""Sequence-to-point energy disaggregation with appliance and cross-domain transfer."""

from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    S2PError,
    ShapeError,
    SpecError,
)
from .kernels import backend as kernel_backend
from .metrics import compute_report, energy_share, epd, mae, nde, sae
from .neuralnet import LayerSpec, seq2point_stack
from .powerdata import AlignedPair, ChannelLayout, PowerSeries, align, parse_channel_file, resample, split_on_gaps
from .seq2point import (
    ApplianceSpec,
    Seq2PointModel,
    TrainConfig,
    TrainHistory,
    build_model,
    extract_features,
    predict,
    synthesize_household,
    train,
)
from .transfer import (
    atl_transfer,
    ctl_apply,
    ctl_finetune,
    freeze,
    load_checkpoint,
    save_checkpoint,
)
from .windowing import (
    DEFAULT_NORMALIZATION,
    NormalizationParams,
    WindowBatch,
    denormalize,
    make_training_pairs,
    normalize,
    pad_and_window,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedPair",
    "ApplianceSpec",
    "ChannelLayout",
    "CheckpointError",
    "ConfigError",
    "DEFAULT_NORMALIZATION",
    "DataError",
    "LayerSpec",
    "NormalizationParams",
    "PowerSeries",
    "S2PError",
    "Seq2PointModel",
    "ShapeError",
    "SpecError",
    "TrainConfig",
    "TrainHistory",
    "WindowBatch",
    "align",
    "atl_transfer",
    "build_model",
    "compute_report",
    "ctl_apply",
    "ctl_finetune",
    "denormalize",
    "energy_share",
    "epd",
    "extract_features",
    "freeze",
    "kernel_backend",
    "load_checkpoint",
    "mae",
    "make_training_pairs",
    "nde",
    "normalize",
    "pad_and_window",
    "parse_channel_file",
    "predict",
    "resample",
    "sae",
    "save_checkpoint",
    "seq2point_stack",
    "split_on_gaps",
    "synthesize_household",
    "train",
]
