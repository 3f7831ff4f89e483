"""Bit-accurate fixed-point inference through 128-lane process engines.

Each PE evaluates ``(sum(x[i] * w[i]) + b) * w_bn + beta`` exactly in
integers and rounds once (half-to-even, saturating) into the activation
format.  Zero-padded lanes contribute nothing, so any block with fan-in up to
the lane count maps onto one PE pass per output element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compress.quantize import QuantizedModel
from .fixed import FxFormat, as_object, format_for, quantize_array, round_div, round_shift, saturate
from .ir import Conv1d, NetworkConfig
from .reference import ModelParams, conv_windows, forward

ACTIVATION_WIDTH = 16


@dataclass(frozen=True)
class PEConfig:
    lanes: int = 128
    adders: int = 64
    act_format: FxFormat = FxFormat(ACTIVATION_WIDTH, 8)

    def accumulator_width(self, x: FxFormat, w: FxFormat) -> int:
        """Bits that hold ``lanes`` full products plus a bias without overflow."""
        return x.width + w.width + (self.lanes - 1).bit_length() + 1


def fused_tail(acc, acc_frac: int, b, b_frac: int, w_bn, w_bn_frac: int, beta, beta_frac: int,
               out: FxFormat, relu: bool = False):
    """Exact ``(acc + b) * w_bn + beta`` followed by one rounding into ``out``.

    Operands are integer codes (Python ints or object arrays).  ReLU, when
    requested, is applied to the exact value before rounding, which yields the
    same code as rounding first and clamping afterwards.
    Returns ``(codes, saturated)``.
    """
    f1 = max(acc_frac, b_frac)
    s = round_shift(acc, acc_frac - f1) + round_shift(b, b_frac - f1)  # left shifts only
    f2 = f1 + w_bn_frac
    p = s * w_bn
    f3 = max(f2, beta_frac)
    total = round_shift(p, f2 - f3) + round_shift(beta, beta_frac - f3)
    if relu:
        total = np.maximum(total, 0) if isinstance(total, np.ndarray) else max(total, 0)
    return saturate(round_shift(total, f3 - out.fraction), out)


def pe_step(x, w, b: int, w_bn: int, beta: int, x_fmt: FxFormat, w_fmt: FxFormat, b_fmt: FxFormat,
            w_bn_fmt: FxFormat, beta_fmt: FxFormat, out_fmt: FxFormat, relu: bool = False,
            config: PEConfig = PEConfig()) -> tuple[int, bool]:
    """One PE evaluation over up to ``config.lanes`` integer operand pairs."""
    x = [int(v) for v in x]
    w = [int(v) for v in w]
    if len(x) != len(w) or len(x) > config.lanes:
        raise ValueError(f"need equal-length operands of at most {config.lanes} lanes")
    x += [0] * (config.lanes - len(x))
    w += [0] * (config.lanes - len(w))
    acc = sum(a * c for a, c in zip(x, w))
    limit = 1 << (config.accumulator_width(x_fmt, w_fmt) - 1)
    if not -limit <= acc < limit:
        raise OverflowError(f"accumulator {acc} exceeds {config.accumulator_width(x_fmt, w_fmt)} bits")
    code, sat = fused_tail(acc, x_fmt.fraction + w_fmt.fraction, int(b), b_fmt.fraction, int(w_bn),
                           w_bn_fmt.fraction, int(beta), beta_fmt.fraction, out_fmt, relu)
    return int(code), bool(sat)


def _block_tail(acc, qb, x_fmt: FxFormat, out_fmt: FxFormat):
    """Vectorised fused tail for a (channels, length) int64 accumulator."""
    col = lambda t: as_object(t.codes)[:, None]
    codes, sat = fused_tail(as_object(acc), x_fmt.fraction + qb.weight_fmt.fraction,
                            col(qb.b), qb.b.fmt.fraction, col(qb.w_bn), qb.w_bn.fmt.fraction,
                            col(qb.beta), qb.beta.fmt.fraction, out_fmt, qb.relu)
    return codes.astype(np.int64), int(np.count_nonzero(sat))


def _conv_acc(x: np.ndarray, layer: Conv1d, w: np.ndarray) -> np.ndarray:
    g = layer.groups
    cig, cog = layer.in_channels // g, layer.out_channels // g
    win = conv_windows(x, layer)
    t_out = win.shape[1]
    cols = win.reshape(g, cig, t_out, layer.kernel_size).transpose(0, 1, 3, 2).reshape(g, cig * layer.kernel_size, t_out)
    return np.matmul(w.reshape(g, cog, cig * layer.kernel_size), cols).reshape(layer.out_channels, t_out)


def quant_forward(qmodel: QuantizedModel, signal, config: PEConfig = PEConfig()):
    """Integer forward pass.

    Returns ``(logits, fx_maps, saturation)`` where ``fx_maps`` are the integer
    codes after the input quantizer and every block, and ``saturation`` counts
    clamped values per stage.
    """
    if qmodel.act_formats is None:
        raise ValueError("activation formats not set; run calibrate_formats first")
    net = qmodel.net
    fmts = qmodel.act_formats
    x, n_sat = quantize_array(np.asarray(signal, dtype=np.float64), fmts[0])
    if x.shape != (net.input_channels, net.input_length):
        raise ValueError(f"signal shape {x.shape} != {(net.input_channels, net.input_length)}")
    maps, saturation = [x], {"input": n_sat}
    for k, qb in enumerate(qmodel.blocks):
        x_fmt, out_fmt = fmts[k], fmts[k + 1]
        if qb.kind == "gap":
            total = as_object(x.sum(axis=1))[:, None]
            length = x.shape[1]
            shift = out_fmt.fraction - x_fmt.fraction
            if shift >= 0:
                q = round_div(total * (1 << shift), length)
            else:
                q = round_div(total, length << -shift)
            q, sat = saturate(q, out_fmt)
            x, n = q.astype(np.int64), int(np.count_nonzero(sat))
        else:
            lanes = net.layers[qb.block.main].fan_in
            if lanes > config.lanes:
                raise ValueError(f"layer {qb.block.main}: fan-in {lanes} exceeds {config.lanes} PE lanes")
            w = qb.weight_codes()
            if qb.kind == "conv":
                acc = _conv_acc(x, net.layers[qb.block.main], w)
            else:
                acc = (w @ x.reshape(-1))[:, None]
            x, n = _block_tail(acc, qb, x_fmt, out_fmt)
        maps.append(x)
        saturation[f"block{k}"] = n
    logits = x.reshape(-1) * fmts[-1].quantum
    return logits, maps, saturation


def _block_outputs(net: NetworkConfig, acts: list, qmodel: QuantizedModel) -> list:
    return [acts[qb.block.last] for qb in qmodel.blocks]


def calibrate_formats(qmodel: QuantizedModel, signals, width: int = ACTIVATION_WIDTH,
                      params: ModelParams | None = None) -> list[FxFormat]:
    """Activation formats (input + every block output) from sample signals.

    Each boundary gets the largest fraction count that keeps one spare
    integer bit above the largest magnitude observed in the float forward
    pass of the dequantized model (or ``params`` when given).
    """
    signals = list(signals)
    if not signals:
        raise ValueError("calibration needs at least one signal")
    params = params if params is not None else qmodel.dequantize()
    net = qmodel.net
    peaks = np.zeros(len(qmodel.blocks) + 1)
    for s in signals:
        _, acts = forward(net, params, s)
        outs = [np.asarray(s)] + _block_outputs(net, acts, qmodel)
        peaks = np.maximum(peaks, [np.max(np.abs(a)) for a in outs])
    return [format_for([p], width, guard=True) for p in peaks]


def error_bound(qmodel: QuantizedModel) -> float:
    """Worst-case |logit| gap between :func:`quant_forward` and the float
    forward of ``qmodel.dequantize()``, assuming no saturation.

    Every stage rounds once (at most half a quantum) and passes incoming
    error through a map whose infinity-norm gain is bounded by
    ``max_c |w_bn[c]| * sum|w[c, :]|`` (ReLU and averaging do not amplify).
    """
    fmts = qmodel.act_formats
    err = fmts[0].quantum / 2
    for k, qb in enumerate(qmodel.blocks):
        if qb.kind != "gap":
            w = np.abs(qb.weight_codes().astype(np.float64) * qb.weight_fmt.quantum)
            rows = w.reshape(w.shape[0], -1).sum(axis=1)
            gain = float(np.max(np.abs(qb.w_bn.dequantize()) * rows))
            err *= gain
        err += fmts[k + 1].quantum / 2
    return err
