"""Near-zero (magnitude) pruning, bias-driven channel pruning and the BN negative-rate table."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..ir import BatchNorm1d, Conv1d, Linear, NetworkConfig, blocks
from ..reference import ModelParams, batchnorm_forward, forward
from .ledger import StageRecord

DEFAULT_NZP_THRESHOLDS = (0.017, 0.014, 0.015, 0.014)
DEFAULT_BDP_THRESHOLDS = (-0.061, -0.046, -0.183)


def _bn_of(net: NetworkConfig) -> dict:
    """conv layer index -> index of the BN that directly follows it (if any)."""
    return {b.main: b.bn for b in blocks(net) if isinstance(net.layers[b.main], Conv1d)}


def retained_params(params: ModelParams) -> int:
    """Learnable parameters still stored after pruning.

    Conv weights count where the keep-mask is set; conv bias and the BN
    gamma/beta of a conv block count only for alive channels.
    """
    net = params.net
    bn_of = _bn_of(net)
    owned_bn = {}
    n = 0
    for i in net.conv_indices():
        alive = int(params.alive[i].sum())
        n += int(params.masks[i].sum()) + alive
        if bn_of.get(i) is not None:
            owned_bn[bn_of[i]] = alive
    for i, layer in enumerate(net.layers):
        if isinstance(layer, BatchNorm1d):
            n += 2 * owned_bn.get(i, layer.channels)
        elif isinstance(layer, Linear):
            n += layer.in_features * layer.out_features + layer.out_features
    return n


def _conv_nonzeros(params: ModelParams) -> int:
    return sum(int(params.masks[i].sum()) for i in params.net.conv_indices())


def near_zero_prune(params: ModelParams, thresholds: Sequence[float]) -> tuple[ModelParams, StageRecord]:
    """Zero every conv weight with ``|w| < threshold`` of its layer."""
    convs = params.net.conv_indices()
    thresholds = tuple(float(t) for t in thresholds)
    if len(thresholds) != len(convs):
        raise ValueError(f"need {len(convs)} near-zero thresholds, got {len(thresholds)}")
    if any(t < 0 for t in thresholds):
        raise ValueError("near-zero thresholds must be >= 0")
    before, conv_before = retained_params(params), _conv_nonzeros(params)
    tensors, masks = {}, {}
    for i, t in zip(convs, thresholds):
        w = params.get(i, "weight")
        keep = params.masks[i] & (np.abs(w) >= t)
        tensors[f"{i}.weight"] = np.where(keep, w, 0.0)
        masks[i] = keep
    out = params.replace(tensors, masks)
    record = StageRecord(
        "near_zero_prune", before, retained_params(out),
        details={"conv_weights_before": conv_before, "conv_weights_after": _conv_nonzeros(out),
                 "thresholds": list(thresholds)},
    )
    return out, record


def bias_driven_prune(params: ModelParams, thresholds: Sequence[float]) -> tuple[ModelParams, StageRecord]:
    """Kill conv output channels whose BN bias falls below the block threshold.

    Thresholds apply to the first ``len(thresholds)`` conv+BN blocks in order.
    A dead channel has its conv weights, conv bias, gamma and beta zeroed, so
    its BN output, and hence its post-ReLU map, is exactly zero.
    """
    net = params.net
    bn_of = _bn_of(net)
    targets = [i for i in net.conv_indices() if bn_of.get(i) is not None]
    thresholds = tuple(float(t) for t in thresholds)
    if len(thresholds) > len(targets):
        raise ValueError(f"at most {len(targets)} bias-driven thresholds, got {len(thresholds)}")
    before = retained_params(params)
    tensors, masks, alive = {}, {}, {}
    killed = []
    for i, t in zip(targets, thresholds):
        bn = bn_of[i]
        beta = params.get(bn, "beta")
        live = params.alive[i] & ~(beta < t)
        killed.append(int(params.alive[i].sum() - live.sum()))
        keep = params.masks[i] & live[:, None, None]
        tensors[f"{i}.weight"] = np.where(keep, params.get(i, "weight"), 0.0)
        tensors[f"{i}.bias"] = np.where(live, params.get(i, "bias"), 0.0)
        tensors[f"{bn}.gamma"] = np.where(live, params.get(bn, "gamma"), 0.0)
        tensors[f"{bn}.beta"] = np.where(live, beta, 0.0)
        masks[i], alive[i] = keep, live
    out = params.replace(tensors, masks, alive)
    after = retained_params(out)
    record = StageRecord(
        "bias_driven_prune", before, after,
        details={"params_removed": before - after, "channels_killed": killed,
                 "thresholds": list(thresholds)},
    )
    return out, record


def negative_rate(pre_bn: np.ndarray, gamma, beta, mean, var) -> np.ndarray:
    """Per-channel fraction of strictly negative BN outputs.

    ``pre_bn`` has shape (channels, samples).
    """
    out = batchnorm_forward(pre_bn, gamma, beta, mean, var)
    return np.mean(out < 0, axis=1)


def negative_rate_analysis(params: ModelParams, signals) -> list[tuple[int, int, float, float]]:
    """Rows ``(bn layer, channel, beta, negative rate)`` over a batch of signals."""
    signals = list(signals)
    if not signals:
        raise ValueError("negative-rate analysis needs at least one signal")
    net = params.net
    bns = net.bn_indices()
    counts = {i: np.zeros(net.layers[i].channels) for i in bns}
    total = {i: 0 for i in bns}
    for s in signals:
        _, acts = forward(net, params, s)
        for i in bns:
            counts[i] += np.sum(acts[i] < 0, axis=1)
            total[i] += acts[i].shape[1]
    rows = []
    for i in bns:
        beta = params.get(i, "beta")
        rates = counts[i] / total[i]
        rows += [(i, c, float(beta[c]), float(rates[c])) for c in range(len(beta))]
    return rows


def format_rate_table(rows, delimiter: str = ",") -> str:
    """Two-column ``beta<delim>negative_rate`` text for external plotting."""
    lines = [f"beta{delimiter}negative_rate"]
    lines += [f"{beta!r}{delimiter}{rate!r}" for _, _, beta, rate in rows]
    return "\n".join(lines) + "\n"
