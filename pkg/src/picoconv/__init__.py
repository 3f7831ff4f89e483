"""picoconv: compression, fixed-point inference and accelerator modelling for
small grouped 1-D CNNs."""

from .ir import (
    GAP,
    BatchNorm1d,
    Conv1d,
    CountReport,
    Linear,
    NetworkConfig,
    ReLU,
    ShapeError,
    conv_param_fraction,
    count_ops,
    count_params,
    dense_baseline,
    output_shape,
    preset,
)
from .reference import ModelParams, forward
from .fixed import FxFormat
from .fxp import PEConfig, calibrate_formats, pe_step, quant_forward
from .pipeline import StageError, compress_model, run_pipeline
from .estimators import (
    BiasDrivenPruner,
    FixedPointClassifier,
    NearZeroPruner,
    ReferenceClassifier,
    WeightClusterer,
    compression_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "GAP", "BatchNorm1d", "Conv1d", "CountReport", "Linear", "NetworkConfig", "ReLU", "ShapeError",
    "conv_param_fraction", "count_ops", "count_params", "dense_baseline", "output_shape", "preset",
    "ModelParams", "forward", "FxFormat", "PEConfig", "calibrate_formats", "pe_step", "quant_forward",
    "StageError", "compress_model", "run_pipeline",
    "BiasDrivenPruner", "FixedPointClassifier", "NearZeroPruner", "ReferenceClassifier",
    "WeightClusterer", "compression_pipeline",
]
