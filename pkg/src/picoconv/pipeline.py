"""End-to-end run: prune, cluster, quantize, infer, simulate, and report."""

from __future__ import annotations

import numpy as np

from . import hwsim
from .compress import (
    COMPUTED,
    DEFAULT_BDP_THRESHOLDS,
    DEFAULT_NZP_THRESHOLDS,
    REPORTED_INPUT,
    QuantSpec,
    architecture_stage,
    bias_driven_prune,
    build_ledger,
    cluster_weights,
    near_zero_prune,
    quantization_stages,
    quantize,
    reported_ledger,
)
from .compress.ledger import CALIBRATED
from .fxp import ACTIVATION_WIDTH, calibrate_formats, error_bound, quant_forward
from .ir import OPS_CONVENTION, NetworkConfig, conv_param_fraction, count_ops, count_params, dense_baseline
from .reference import BN_EPS, ModelParams, forward


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def jsonable(obj):
    """Recursively convert numpy scalars/arrays so ``json`` can encode them."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def inspect_network(net: NetworkConfig) -> dict:
    """Parameter/operation accounting for ``net`` and its dense baseline."""
    base = dense_baseline(net)
    params, ops = count_params(net), count_ops(net)
    frac = conv_param_fraction(net)
    arch = architecture_stage(base, net)
    return {
        "provenance": COMPUTED,
        "network": net.name,
        "shapes": [list(s) for s in net.shapes],
        "params": params.to_dict(),
        "ops": ops.to_dict(),
        "conv_fraction": {"params": frac[0], "ops": frac[1]},
        "baseline": {"name": base.name, "params": count_params(base).total, "ops": count_ops(base).total},
        "architecture_ratio": arch.ratio,
    }


def knobs(nzp, bdp, spec: QuantSpec, seed: int, power_watts: float, slack: int,
          words_per_tick: float, overlap: bool) -> dict:
    return {
        "seed": seed,
        "nzp_thresholds": list(nzp),
        "bdp_thresholds": list(bdp),
        "widths": spec.to_dict(),
        "activation_width": ACTIVATION_WIDTH,
        "rounding": "round-half-even, saturating",
        "padding": "zeros",
        "bn_eps": BN_EPS,
        "kmeans": {"init": "k-means++", "max_iter": 100, "tol": 1e-7, "zero_code": "reserved"},
        "ops_convention": OPS_CONVENTION,
        "line_buffer_slack": slack,
        "load_words_per_tick": {"value": words_per_tick, "provenance": CALIBRATED},
        "load_compute_overlap": overlap,
        "clocks_hz": {"load": hwsim.LOAD_CLOCK_HZ, "pe": hwsim.PE_CLOCK_HZ},
        "power_watts": {"value": power_watts, "provenance": REPORTED_INPUT},
    }


def compress_model(params: ModelParams, nzp=DEFAULT_NZP_THRESHOLDS, bdp=DEFAULT_BDP_THRESHOLDS,
                   spec: QuantSpec = QuantSpec(), seed: int = 0):
    """NZP -> BDP -> cluster -> quantize.  Returns (pruned params, qmodel, stage records)."""
    stage = "near_zero_prune"
    try:
        p1, r_nzp = near_zero_prune(params, nzp)
        stage = "bias_driven_prune"
        p2, r_bdp = bias_driven_prune(p1, bdp)
        stage = "cluster"
        codebook = cluster_weights(p2, spec.conv_weight, seed=seed)
        stage = "quantize"
        qmodel = quantize(p2, codebook, spec)
        r_cluster, r_quant = quantization_stages(qmodel)
    except Exception as exc:
        raise StageError(stage, exc) from exc
    return p2, qmodel, [r_nzp, r_bdp, r_cluster, r_quant]


def run_pipeline(params: ModelParams, signals, nzp=DEFAULT_NZP_THRESHOLDS, bdp=DEFAULT_BDP_THRESHOLDS,
                 spec: QuantSpec = QuantSpec(), seed: int = 0, power_watts: float = 0.11,
                 slack: int = hwsim.DEFAULT_SLACK,
                 words_per_tick: float = hwsim.DEFAULT_LOAD_WORDS_PER_TICK,
                 overlap: bool = False) -> dict:
    """Run every stage and return the report; any failure raises :class:`StageError`."""
    net = params.net
    signals = [np.asarray(s, dtype=np.float64) for s in signals]
    if not signals:
        raise StageError("inputs", ValueError("at least one signal is required"))
    pruned, qmodel, records = compress_model(params, nzp, bdp, spec, seed)

    try:
        deq = qmodel.dequantize()
        qmodel = qmodel.with_activation_formats(calibrate_formats(qmodel, signals, params=deq))
    except Exception as exc:
        raise StageError("calibrate", exc) from exc

    arch = architecture_stage(dense_baseline(net), net)
    ledger = build_ledger([arch, *records])

    inference = []
    try:
        for k, s in enumerate(signals):
            ref_logits, _ = forward(net, params, s)
            deq_logits, _ = forward(net, deq, s)
            fx_logits, _, sat = quant_forward(qmodel, s)
            inference.append({
                "signal": k,
                "float_logits": ref_logits,
                "compressed_float_logits": deq_logits,
                "fixed_logits": fx_logits,
                "argmax": {"float": int(np.argmax(ref_logits)), "compressed_float": int(np.argmax(deq_logits)),
                           "fixed": int(np.argmax(fx_logits))},
                "max_abs_fixed_vs_compressed": float(np.max(np.abs(fx_logits - deq_logits))),
                "saturation": sat,
            })
    except Exception as exc:
        raise StageError("infer", exc) from exc

    try:
        sim = hwsim.simulate(net, power_watts, slack, words_per_tick, overlap)
    except Exception as exc:
        raise StageError("simulate", exc) from exc

    return jsonable({
        "knobs": knobs(nzp, bdp, spec, seed, power_watts, slack, words_per_tick, overlap),
        "counts": inspect_network(net),
        "ledger": {"provenance": COMPUTED, **ledger.to_dict()},
        "reference_ledger": {"provenance": REPORTED_INPUT,
                             **reported_ledger(arch).to_dict()},
        "quantization": {"provenance": COMPUTED, **qmodel.bits,
                         "activation_formats": [f.to_dict() for f in qmodel.act_formats],
                         "saturation": qmodel.saturation,
                         "error_bound": error_bound(qmodel)},
        "inference": {"provenance": COMPUTED, "signals": inference},
        "cycles": {"provenance": COMPUTED, **sim["cycles"]},
        "memory": {"provenance": COMPUTED, **sim["memory"]},
        "performance": {"provenance": CALIBRATED, **sim["performance"]},
    })
