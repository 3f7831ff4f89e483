"""On-disk formats: network config (INI), weight container (binary) and signals (CSV).

Weight container layout, all little-endian::

    magic  b"PCW1"
    u16    format version (1)
    u32    tensor count
    per tensor:
        u16 name length, UTF-8 name
        u8  dtype code: 0 = float64, 1 = fixed point (followed by u8 width, u8 fraction)
        u8  rank, then rank x u32 dims
        payload: float64, or signed ints of 1/2/4 bytes depending on width
"""

from __future__ import annotations

import configparser
import io as _io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .fixed import FxFormat
from .ir import LAYER_KINDS, BatchNorm1d, Conv1d, GAP, Linear, NetworkConfig, ReLU
from .reference import ModelParams

MAGIC = b"PCW1"
VERSION = 1
DTYPE_FLOAT64 = 0
DTYPE_FIXED = 1


class FormatError(ValueError):
    pass


def atomic_write(path, data: bytes | str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


# -- network config -------------------------------------------------------------

_KEYS = {
    "Conv1d": {"in": "in_channels", "out": "out_channels", "k": "kernel_size", "stride": "stride",
               "pad_l": "pad_left", "pad_r": "pad_right", "groups": "groups"},
    "Linear": {"in": "in_features", "out": "out_features"},
}


def parse_config(text: str) -> NetworkConfig:
    """Parse a ``[network]`` section plus one ``[layer.N]`` section per layer.

    Example::

        [network]
        name = tiny
        input_channels = 5
        input_length = 64

        [layer.0]
        kind = Conv1d
        in = 5
        out = 8
        k = 16
        pad_l = 8
        pad_r = 7
    """
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if "network" not in cp:
        raise FormatError("config lacks a [network] section")
    net = cp["network"]
    sections = sorted((s for s in cp.sections() if s.startswith("layer.")), key=lambda s: int(s.split(".", 1)[1]))
    layers = []
    for name in sections:
        sec = cp[name]
        kind = sec.get("kind")
        if kind not in LAYER_KINDS:
            raise FormatError(f"[{name}]: unknown kind {kind!r}")
        if kind in _KEYS:
            kwargs = {field: sec.getint(key) for key, field in _KEYS[kind].items() if key in sec}
            layers.append(LAYER_KINDS[kind](**kwargs))
        else:
            layers.append(LAYER_KINDS[kind](sec.getint("channels", fallback=sec.getint("out", fallback=0))))
    return NetworkConfig(tuple(layers), net.getint("input_channels"), net.getint("input_length"),
                         name=net.get("name", "custom"))


def format_config(net: NetworkConfig) -> str:
    cp = configparser.ConfigParser()
    cp["network"] = {"name": net.name, "input_channels": str(net.input_channels),
                     "input_length": str(net.input_length)}
    for i, layer in enumerate(net.layers):
        sec = {"kind": layer.kind}
        if layer.kind in _KEYS:
            sec.update({key: str(getattr(layer, field)) for key, field in _KEYS[layer.kind].items()})
        else:
            sec["channels"] = str(layer.channels)
        cp[f"layer.{i}"] = sec
    buf = _io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path_or_preset: str) -> NetworkConfig:
    """Read a config file, or build a named preset when no such file exists."""
    from .ir import PRESETS, preset

    if path_or_preset in PRESETS and not Path(path_or_preset).exists():
        return preset(path_or_preset)
    return parse_config(Path(path_or_preset).read_text())


# -- weight container ----------------------------------------------------------------

def _int_dtype(width: int) -> str:
    return "<i1" if width <= 8 else "<i2" if width <= 16 else "<i4"


def encode_tensors(tensors: dict) -> bytes:
    """Serialize ``name -> ndarray`` (float) or ``name -> (codes, FxFormat)``."""
    out = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, value in tensors.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        if isinstance(value, tuple):
            codes, fmt = value
            codes = np.asarray(codes)
            out.append(struct.pack("<BBB", DTYPE_FIXED, fmt.width, fmt.fraction))
            payload = codes.astype(_int_dtype(fmt.width)).tobytes()
        else:
            codes = np.asarray(value, dtype=np.float64)
            out.append(struct.pack("<B", DTYPE_FLOAT64))
            payload = codes.astype("<f8").tobytes()
        out.append(struct.pack("<B", codes.ndim) + struct.pack(f"<{codes.ndim}I", *codes.shape))
        out.append(payload)
    return b"".join(out)


def decode_tensors(data: bytes) -> dict:
    if data[:4] != MAGIC:
        raise FormatError("not a PCW1 weight file")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    pos = 10
    tensors = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            if name in tensors:
                raise FormatError(f"duplicate tensor name {name!r}")
            (code,) = struct.unpack_from("<B", data, pos)
            pos += 1
            fmt = None
            if code == DTYPE_FIXED:
                width, frac = struct.unpack_from("<BB", data, pos)
                pos += 2
                try:
                    fmt = FxFormat(width, frac)
                except ValueError as exc:
                    raise FormatError(f"tensor {name!r}: {exc}") from None
                dtype = np.dtype(_int_dtype(width))
            elif code == DTYPE_FLOAT64:
                dtype = np.dtype("<f8")
            else:
                raise FormatError(f"tensor {name!r}: unknown dtype code {code}")
            (rank,) = struct.unpack_from("<B", data, pos)
            dims = struct.unpack_from(f"<{rank}I", data, pos + 1)
            pos += 1 + 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if pos + size > len(data):
                raise FormatError(f"tensor {name!r}: payload truncated")
            arr = np.frombuffer(data, dtype, int(np.prod(dims, dtype=np.int64)), pos).reshape(dims)
            pos += size
            tensors[name] = (arr.astype(np.int64), fmt) if fmt else arr.astype(np.float64)
    except struct.error as exc:
        raise FormatError(f"weight file truncated: {exc}") from None
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after last tensor")
    return tensors


def write_weights(path, params: ModelParams) -> None:
    tensors = dict(params.tensors)
    for i, m in params.masks.items():
        if not m.all():
            tensors[f"{i}.mask"] = (m.astype(np.int64), FxFormat(2, 0))
        if not params.alive[i].all():
            tensors[f"{i}.alive"] = (params.alive[i].astype(np.int64), FxFormat(2, 0))
    atomic_write(path, encode_tensors(tensors))


def read_weights(path, net: NetworkConfig) -> ModelParams:
    raw = decode_tensors(Path(path).read_bytes())
    masks, alive, tensors = {}, {}, {}
    for name, value in raw.items():
        if name.endswith(".mask"):
            masks[int(name.split(".")[0])] = value[0].astype(bool)
        elif name.endswith(".alive"):
            alive[int(name.split(".")[0])] = value[0].astype(bool)
        elif isinstance(value, tuple):
            tensors[name] = value[0] * value[1].quantum
        else:
            tensors[name] = value
    return ModelParams(net, tensors, masks, alive)


# -- signals --------------------------------------------------------------------

def format_signal(signal: np.ndarray, sample_rate: float) -> str:
    signal = np.asarray(signal, dtype=np.float64)
    lines = [f"{signal.shape[0]},{signal.shape[1]},{sample_rate!r}"]
    lines += [",".join(repr(float(v)) for v in row) for row in signal]
    return "\n".join(lines) + "\n"


def parse_signal(text: str) -> tuple[np.ndarray, float]:
    rows = [r for r in text.strip().splitlines() if r.strip()]
    if not rows:
        raise FormatError("empty signal file")
    head = rows[0].split(",")
    if len(head) != 3:
        raise FormatError("signal header must be 'channels,length,sample_rate_hz'")
    channels, length, rate = int(head[0]), int(head[1]), float(head[2])
    data = rows[1:]
    if len(data) != channels:
        raise FormatError(f"expected {channels} channel rows, got {len(data)}")
    signal = np.array([[float(v) for v in r.split(",")] for r in data])
    if signal.shape != (channels, length):
        raise FormatError(f"signal rows must each hold {length} samples")
    return signal, rate


def write_signal(path, signal, sample_rate: float) -> None:
    atomic_write(path, format_signal(signal, sample_rate))


def read_signal(path) -> tuple[np.ndarray, float]:
    return parse_signal(Path(path).read_text())


def write_json(path, doc: dict) -> None:
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- quantized models ------------------------------------------------------------

_META = FxFormat(8, 0)


def write_quantized(path, qmodel) -> None:
    """Store a :class:`QuantizedModel` as fixed-point tensors in the PCW1 container."""
    spec = qmodel.spec
    widths = [spec.conv_weight, spec.conv_bias, spec.bn_weight, spec.bn_bias,
              spec.linear_weight, spec.linear_bias, spec.codebook]
    tensors = {"meta.widths": (np.array(widths), _META)}
    if qmodel.act_formats is not None:
        tensors["meta.act_formats"] = (np.array([[f.width, f.fraction] for f in qmodel.act_formats]), _META)
    for qb in qmodel.blocks:
        i = qb.block.main
        if qb.kind == "gap":
            continue
        if qb.kind == "conv":
            tensors[f"{i}.indices"] = (qb.indices, FxFormat(min(spec.conv_weight + 1, 32), 0))
            tensors[f"{i}.centroids"] = (qb.centroids.codes, qb.centroids.fmt)
        else:
            tensors[f"{i}.weight"] = (qb.weight.codes, qb.weight.fmt)
        for name in ("b", "w_bn", "beta"):
            t = getattr(qb, name)
            tensors[f"{i}.{name}"] = (t.codes, t.fmt)
    atomic_write(path, encode_tensors(tensors))


def read_quantized(path, net: NetworkConfig):
    from .compress.quantize import FxTensor, QBlock, QuantizedModel, QuantSpec
    from .ir import blocks

    raw = decode_tensors(Path(path).read_bytes())
    if "meta.widths" not in raw:
        raise FormatError("not a quantized model file (missing meta.widths)")
    w = [int(v) for v in raw["meta.widths"][0]]
    spec = QuantSpec(*w)
    fx = lambda key: FxTensor(*raw[key]) if key in raw else _missing(key)
    qblocks = []
    for blk in blocks(net):
        i = blk.main
        layer = net.layers[i]
        if isinstance(layer, GAP):
            qblocks.append(QBlock(blk, "gap"))
            continue
        common = dict(b=fx(f"{i}.b"), w_bn=fx(f"{i}.w_bn"), beta=fx(f"{i}.beta"), relu=blk.relu is not None)
        if isinstance(layer, Conv1d):
            qblocks.append(QBlock(blk, "conv", indices=fx(f"{i}.indices").codes,
                                  centroids=fx(f"{i}.centroids"), **common))
        else:
            qblocks.append(QBlock(blk, "linear", weight=fx(f"{i}.weight"), **common))
    fmts = None
    if "meta.act_formats" in raw:
        fmts = tuple(FxFormat(int(a), int(b)) for a, b in raw["meta.act_formats"][0])
    return QuantizedModel(net, tuple(qblocks), spec, {}, {}, fmts)


def _missing(key):
    raise FormatError(f"missing tensor {key!r}")


def is_quantized_file(path) -> bool:
    try:
        return "meta.widths" in decode_tensors(Path(path).read_bytes())
    except FormatError:
        return False
