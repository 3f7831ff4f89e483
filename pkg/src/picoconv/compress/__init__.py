"""Compression passes: pruning, clustering, BN folding, quantization and their ledger."""

from .cluster import Codebook, cluster_weights, kmeans_1d
from .ledger import (
    CALIBRATED,
    COMPUTED,
    REPORTED_INPUT,
    REPORTED_STAGE_RATIOS,
    REPORTED_TOTAL,
    CompressionLedger,
    StageRecord,
    architecture_stage,
    build_ledger,
    reported_ledger,
)
from .prune import (
    DEFAULT_BDP_THRESHOLDS,
    DEFAULT_NZP_THRESHOLDS,
    bias_driven_prune,
    format_rate_table,
    near_zero_prune,
    negative_rate,
    negative_rate_analysis,
    retained_params,
)
from .quantize import (
    FoldedPEParams,
    FxTensor,
    QBlock,
    QuantizedModel,
    QuantSpec,
    fold_bn,
    pe_form_forward,
    quantization_stages,
    quantize,
)

__all__ = [
    "CALIBRATED", "COMPUTED", "REPORTED_INPUT", "REPORTED_STAGE_RATIOS", "REPORTED_TOTAL",
    "DEFAULT_BDP_THRESHOLDS", "DEFAULT_NZP_THRESHOLDS",
    "Codebook", "CompressionLedger", "FoldedPEParams", "FxTensor", "QBlock", "QuantizedModel",
    "QuantSpec", "StageRecord",
    "architecture_stage", "bias_driven_prune", "build_ledger", "cluster_weights", "fold_bn",
    "format_rate_table", "kmeans_1d", "near_zero_prune", "negative_rate", "negative_rate_analysis",
    "pe_form_forward", "quantization_stages", "quantize", "reported_ledger", "retained_params",
]
