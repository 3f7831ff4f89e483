"""BN folding into PE form and mixed-width fixed-point quantization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..fixed import FxFormat, dequantize, format_for, quantize_array
from ..ir import Block, Conv1d, GAP, Linear, NetworkConfig, blocks
from ..reference import BN_EPS, ModelParams, conv1d_forward, gap_forward, linear_forward, relu
from .cluster import Codebook
from .ledger import StageRecord
from .prune import retained_params

FLOAT_BITS = 32


@dataclass(frozen=True)
class QuantSpec:
    """Bit widths per tensor class.

    ``conv_weight`` is the codebook index width; the centroid values
    themselves are stored at ``codebook`` bits.  ``fractions`` optionally pins
    fraction bits per tensor key (e.g. ``"0.bias"``); otherwise the largest
    fraction count covering the tensor's max magnitude is used.
    """

    conv_weight: int = 7
    conv_bias: int = 8
    bn_weight: int = 16
    bn_bias: int = 14
    linear_weight: int = 8
    linear_bias: int = 11
    codebook: int = 16
    fractions: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("conv_weight", "conv_bias", "bn_weight", "bn_bias", "linear_weight",
                     "linear_bias", "codebook"):
            w = getattr(self, name)
            if not 2 <= w <= 32:
                raise ValueError(f"{name} width must be in [2, 32], got {w}")

    @classmethod
    def from_widths(cls, widths, **kw) -> "QuantSpec":
        """Six widths in the order conv weight, conv bias, BN weight, BN bias, linear weight, linear bias."""
        widths = [int(w) for w in widths]
        if len(widths) != 6:
            raise ValueError(f"expected 6 widths, got {len(widths)}")
        names = ("conv_weight", "conv_bias", "bn_weight", "bn_bias", "linear_weight", "linear_bias")
        return cls(**dict(zip(names, widths)), **kw)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("conv_weight", "conv_bias", "bn_weight", "bn_bias",
                                              "linear_weight", "linear_bias", "codebook")}


# -- folding -------------------------------------------------------------------

@dataclass(frozen=True)
class FoldedBlock:
    block: Block
    weight: np.ndarray
    b: np.ndarray
    w_bn: np.ndarray
    beta: np.ndarray
    relu: bool


@dataclass(frozen=True)
class FoldedPEParams:
    net: NetworkConfig
    blocks: tuple


def fold_bn(params: ModelParams) -> FoldedPEParams:
    """Rewrite every conv/linear block as ``(sum(x*w) + b) * w_bn + beta``.

    With a following BN: ``b = bias - mean`` and ``w_bn = gamma / sqrt(var + eps)``.
    Without one (linear layers) ``w_bn = 1`` and ``beta = 0``.
    """
    net = params.net
    out = []
    for blk in blocks(net):
        if isinstance(net.layers[blk.main], GAP):
            out.append(FoldedBlock(blk, None, None, None, None, False))
            continue
        w, bias = params.get(blk.main, "weight"), params.get(blk.main, "bias")
        if blk.bn is not None:
            b = bias - params.get(blk.bn, "mean")
            w_bn = params.get(blk.bn, "gamma") / np.sqrt(params.get(blk.bn, "var") + BN_EPS)
            beta = params.get(blk.bn, "beta").copy()
        else:
            b, w_bn, beta = bias.copy(), np.ones_like(bias), np.zeros_like(bias)
        out.append(FoldedBlock(blk, w, b, w_bn, beta, blk.relu is not None))
    return FoldedPEParams(net, tuple(out))


def pe_form_forward(folded: FoldedPEParams, signal) -> tuple[np.ndarray, list[np.ndarray]]:
    """Float forward pass evaluating each block in folded PE form."""
    net = folded.net
    x = np.asarray(signal, dtype=np.float64)
    outs = []
    for fb in folded.blocks:
        layer = net.layers[fb.block.main]
        if isinstance(layer, GAP):
            x = gap_forward(x)
        else:
            zero = np.zeros_like(fb.b)
            if isinstance(layer, Conv1d):
                acc = conv1d_forward(x, layer, fb.weight, zero)
            else:
                acc = linear_forward(x, fb.weight, zero)
            x = (acc + fb.b[:, None]) * fb.w_bn[:, None] + fb.beta[:, None]
            if fb.relu:
                x = relu(x)
        outs.append(x)
    return x.reshape(-1), outs


# -- quantization ----------------------------------------------------------------

@dataclass(frozen=True)
class FxTensor:
    codes: np.ndarray
    fmt: FxFormat

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.size and (codes.min() < self.fmt.lo or codes.max() > self.fmt.hi):
            raise ValueError("codes outside the representable range of their format")
        object.__setattr__(self, "codes", codes)

    @property
    def dims(self) -> tuple:
        return self.codes.shape

    def dequantize(self) -> np.ndarray:
        return dequantize(self.codes, self.fmt)


@dataclass(frozen=True)
class QBlock:
    """One PE block in integer form.

    Conv blocks store ``indices`` into ``centroids`` (index 0 is exact zero);
    linear blocks store ``weight`` directly.  GAP blocks carry nothing.
    """

    block: Block
    kind: str
    b: FxTensor | None = None
    w_bn: FxTensor | None = None
    beta: FxTensor | None = None
    relu: bool = False
    indices: np.ndarray | None = None
    centroids: FxTensor | None = None
    weight: FxTensor | None = None

    def weight_codes(self) -> np.ndarray:
        """Integer weights in the layer's native tensor shape."""
        if self.kind == "conv":
            table = np.concatenate([[0], self.centroids.codes]).astype(np.int64)
            return table[self.indices]
        return self.weight.codes

    @property
    def weight_fmt(self) -> FxFormat:
        return self.centroids.fmt if self.kind == "conv" else self.weight.fmt


@dataclass(frozen=True)
class QuantizedModel:
    net: NetworkConfig
    blocks: tuple
    spec: QuantSpec
    bits: dict
    saturation: dict
    act_formats: tuple | None = None

    def with_activation_formats(self, formats) -> "QuantizedModel":
        formats = tuple(formats)
        if len(formats) != len(self.blocks) + 1:
            raise ValueError(f"need {len(self.blocks) + 1} activation formats, got {len(formats)}")
        return replace(self, act_formats=formats)

    def dequantize(self) -> ModelParams:
        """Float params whose reference forward equals the quantized PE arithmetic.

        BN statistics are set to mean 0, var 1 - eps so BN reduces to
        ``x * w_bn + beta`` and the conv bias carries the folded ``b``.
        """
        net = self.net
        tensors = {}
        for qb in self.blocks:
            if qb.kind == "gap":
                continue
            i = qb.block.main
            tensors[f"{i}.weight"] = dequantize(qb.weight_codes(), qb.weight_fmt)
            if qb.block.bn is not None:
                tensors[f"{i}.bias"] = qb.b.dequantize()
                bn = qb.block.bn
                c = len(qb.b.codes)
                tensors[f"{bn}.gamma"] = qb.w_bn.dequantize()
                tensors[f"{bn}.beta"] = qb.beta.dequantize()
                tensors[f"{bn}.mean"] = np.zeros(c)
                tensors[f"{bn}.var"] = np.full(c, 1.0 - BN_EPS)
            else:
                # no BN to absorb w_bn/beta; only valid when they are 1 and 0
                tensors[f"{i}.bias"] = qb.b.dequantize()
        masks = {qb.block.main: qb.indices != 0 for qb in self.blocks if qb.kind == "conv"}
        return ModelParams(net, tensors, masks)


def _fx(values, width: int, key: str, spec: QuantSpec, sat: dict) -> FxTensor:
    if key in spec.fractions:
        fmt = FxFormat(width, int(spec.fractions[key]))
    else:
        fmt = format_for(values, width)
    codes, n = quantize_array(values, fmt)
    sat[key] = n
    return FxTensor(codes, fmt)


_UNIT = FxFormat(2, 0)


def quantize(params: ModelParams, codebook: Codebook, spec: QuantSpec = QuantSpec()) -> QuantizedModel:
    """Fold BN and quantize every tensor to ``spec``.

    Bit accounting compares ``32 * retained params`` against stored data bits
    (conv weights at index width, everything else at its fixed-point width,
    pruned positions and dead channels not stored).  Codebook storage is
    reported separately and in ``ratio_with_codebook``.
    """
    folded = fold_bn(params)
    sat: dict = {}
    qblocks = []
    data_bits = codebook_bits = conv_weight_count = 0
    for fb in folded.blocks:
        blk = fb.block
        i = blk.main
        if fb.weight is None:
            qblocks.append(QBlock(blk, "gap"))
            continue
        if isinstance(params.net.layers[i], Conv1d):
            if codebook.bits[i] != spec.conv_weight:
                raise ValueError(f"layer {i}: codebook has {codebook.bits[i]}-bit indices, "
                                 f"spec wants {spec.conv_weight}")
            alive = params.alive[i]
            cents = _fx(codebook.centroids[i], spec.codebook, f"{i}.centroids", spec, sat)
            b = _fx(np.where(alive, fb.b, 0.0), spec.conv_bias, f"{i}.bias", spec, sat)
            w_bn = _fx(np.where(alive, fb.w_bn, 0.0), spec.bn_weight, f"{blk.bn}.w_bn", spec, sat)
            beta = _fx(np.where(alive, fb.beta, 0.0), spec.bn_bias, f"{blk.bn}.beta", spec, sat)
            n_w = int(params.masks[i].sum())
            n_alive = int(alive.sum())
            conv_weight_count += n_w
            data_bits += n_w * spec.conv_weight + n_alive * (spec.conv_bias + spec.bn_weight + spec.bn_bias)
            codebook_bits += len(codebook.centroids[i]) * spec.codebook
            qblocks.append(QBlock(blk, "conv", b, w_bn, beta, fb.relu,
                                  indices=codebook.codes[i].copy(), centroids=cents))
        else:
            if blk.bn is not None:
                raise ValueError(f"layer {i}: BN after a linear layer is not supported")
            w = _fx(fb.weight, spec.linear_weight, f"{i}.weight", spec, sat)
            b = _fx(fb.b, spec.linear_bias, f"{i}.bias", spec, sat)
            ones = FxTensor(np.ones(len(fb.b), np.int64), _UNIT)
            zeros = FxTensor(np.zeros(len(fb.b), np.int64), _UNIT)
            data_bits += w.codes.size * spec.linear_weight + b.codes.size * spec.linear_bias
            qblocks.append(QBlock(blk, "linear", b, ones, zeros, fb.relu, weight=w))
    n = retained_params(params)
    bits = {
        "retained_params": n,
        "float_bits": FLOAT_BITS * n,
        "conv_weight_count": conv_weight_count,
        "data_bits": data_bits,
        "codebook_bits": codebook_bits,
        "ratio": FLOAT_BITS * n / data_bits,
        "ratio_with_codebook": FLOAT_BITS * n / (data_bits + codebook_bits),
    }
    return QuantizedModel(params.net, tuple(qblocks), spec, bits, sat)


def quantization_stages(qmodel: QuantizedModel) -> tuple[StageRecord, StageRecord]:
    """Split the bit reduction into a clustering stage and a fixed-point stage.

    Clustering shrinks conv weights from 32-bit floats to index codes; the
    second stage covers all remaining tensors.  The two ratios multiply to
    ``bits['ratio']``.
    """
    b, spec = qmodel.bits, qmodel.spec
    n, ncw = b["retained_params"], b["conv_weight_count"]
    full = FLOAT_BITS * n
    clustered = spec.conv_weight * ncw + FLOAT_BITS * (n - ncw)
    cluster = StageRecord("cluster", full, clustered, "bits",
                          details={"index_width": spec.conv_weight, "conv_weights": ncw,
                                   "codebook_bits": b["codebook_bits"]})
    quant = StageRecord("quantize", clustered, b["data_bits"], "bits",
                        details={"widths": spec.to_dict(),
                                 "ratio_with_codebook": b["ratio_with_codebook"]})
    return cluster, quant
