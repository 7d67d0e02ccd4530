"""Relevance-guided pruning of a small OFDM channel-estimation denoiser."""

from .errors import (
    CheckpointError,
    ConfigError,
    CorruptCheckpoint,
    InvalidLength,
    LayerCollapse,
    MaskEmpty,
    MaskError,
    NoImprovement,
    RelpruneError,
    SimError,
    TraceError,
    TrainingDiverged,
    VersionMismatch,
)
from .estimators import EstimateSeries, dpa_estimate, frequency_average, initial_estimate, sta_estimate
from .fnn import (
    ModelParams,
    TrainConfig,
    TrainHistory,
    compact_model,
    devectorize,
    fit_standardization,
    forward,
    init_model,
    load_checkpoint,
    masked_forward,
    save_checkpoint,
    train,
    vectorize,
)
from .harness import ExperimentConfig, equalize_and_ber, generate_dataset, load_experiment_config, run_pipeline
from .lrp import GlobalRelevance, RelevanceMap, SubcarrierTaxonomy, aggregate, categorize, explain, lrp_backward
from .phy import (
    ChannelProfile,
    FrameConfig,
    build_frame,
    qam_demap,
    qam_map,
    realize_channel,
    transmit,
)
from .prune import (
    TAU_ZERO_PLUS,
    MaskPair,
    SearchGrid,
    SearchResult,
    arch_mask,
    flops,
    flops_from_widths,
    grid_search,
    input_mask,
    reduction,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigError",
    "CorruptCheckpoint",
    "InvalidLength",
    "LayerCollapse",
    "MaskEmpty",
    "MaskError",
    "NoImprovement",
    "RelpruneError",
    "SimError",
    "TraceError",
    "TrainingDiverged",
    "VersionMismatch",
    "ModelParams",
    "TrainConfig",
    "TrainHistory",
    "compact_model",
    "devectorize",
    "fit_standardization",
    "forward",
    "init_model",
    "load_checkpoint",
    "masked_forward",
    "save_checkpoint",
    "train",
    "vectorize",
    "ChannelProfile",
    "FrameConfig",
    "build_frame",
    "qam_demap",
    "qam_map",
    "realize_channel",
    "transmit",
    "TAU_ZERO_PLUS",
    "MaskPair",
    "SearchGrid",
    "SearchResult",
    "arch_mask",
    "flops",
    "flops_from_widths",
    "grid_search",
    "input_mask",
    "reduction",
    "EstimateSeries",
    "dpa_estimate",
    "frequency_average",
    "initial_estimate",
    "sta_estimate",
    "ExperimentConfig",
    "equalize_and_ber",
    "generate_dataset",
    "load_experiment_config",
    "run_pipeline",
    "GlobalRelevance",
    "RelevanceMap",
    "SubcarrierTaxonomy",
    "aggregate",
    "categorize",
    "explain",
    "lrp_backward",
]
