"""Command-line driver: ``picoconv <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import hwsim
from .compress import (
    DEFAULT_BDP_THRESHOLDS,
    DEFAULT_NZP_THRESHOLDS,
    QuantSpec,
    format_rate_table,
    negative_rate_analysis,
)
from .fxp import calibrate_formats, quant_forward
from .io import (
    format_signal,
    is_quantized_file,
    load_config,
    read_quantized,
    read_signal,
    read_weights,
    write_json,
    write_quantized,
    write_signal,
    write_weights,
)
from .pipeline import StageError, compress_model, inspect_network, jsonable, run_pipeline
from .reference import forward
from .synth import SAMPLE_RATE_HZ, gen_params, gen_signal

SEED_ENV = "PICOCONV_SEED"


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def resolve_seed(arg) -> int:
    if arg is not None:
        return int(arg)
    return int(os.environ.get(SEED_ENV, 0))


def _emit(doc, args) -> None:
    doc = jsonable(doc)
    if args.report_out:
        write_json(args.report_out, doc)
    else:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def _signals(args, net, seed: int) -> list:
    if args.signal:
        return [read_signal(p)[0] for p in args.signal]
    return [gen_signal(seed + k, net.input_channels, net.input_length) for k in range(args.n_signals)]


def _params(args, net, seed: int):
    return read_weights(args.weights, net) if args.weights else gen_params(seed, net)


def _spec(args) -> QuantSpec:
    return QuantSpec.from_widths(args.widths) if args.widths else QuantSpec()


# -- subcommands ---------------------------------------------------------------------

def cmd_inspect(args):
    _emit(inspect_network(load_config(args.config)), args)


def cmd_gen_data(args):
    seed = resolve_seed(args.seed)
    sig = gen_signal(seed, args.channels, args.length, args.sample_rate)
    if args.out:
        write_signal(args.out, sig, args.sample_rate)
    else:
        sys.stdout.write(format_signal(sig, args.sample_rate))


def cmd_gen_weights(args):
    net = load_config(args.config)
    write_weights(args.out, gen_params(resolve_seed(args.seed), net))


def cmd_compress(args):
    net = load_config(args.config)
    seed = resolve_seed(args.seed)
    params = _params(args, net, seed)
    pruned, qmodel, records = compress_model(params, args.nzp_thresholds, args.bdp_thresholds, _spec(args), seed)
    if args.signal or args.n_signals:
        qmodel = qmodel.with_activation_formats(calibrate_formats(qmodel, _signals(args, net, seed)))
    if args.out:
        write_quantized(args.out, qmodel)
    if args.pruned_out:
        write_weights(args.pruned_out, pruned)
    _emit({"stages": [r.to_dict() for r in records], "bits": qmodel.bits, "saturation": qmodel.saturation}, args)


def cmd_infer(args):
    net = load_config(args.config)
    seed = resolve_seed(args.seed)
    signals = _signals(args, net, seed)
    results = []
    if args.mode == "float":
        params = _params(args, net, seed)
        for s in signals:
            logits, _ = forward(net, params, s)
            results.append({"logits": logits, "argmax": int(np.argmax(logits))})
    else:
        if args.weights and is_quantized_file(args.weights):
            qmodel = read_quantized(args.weights, net)
        else:
            _, qmodel, _ = compress_model(_params(args, net, seed), args.nzp_thresholds,
                                          args.bdp_thresholds, _spec(args), seed)
        if qmodel.act_formats is None:
            qmodel = qmodel.with_activation_formats(calibrate_formats(qmodel, signals))
        for s in signals:
            logits, _, sat = quant_forward(qmodel, s)
            results.append({"logits": logits, "argmax": int(np.argmax(logits)), "saturation": sat})
    _emit({"mode": args.mode, "results": results}, args)


def cmd_simulate(args):
    net = load_config(args.config)
    _emit(hwsim.simulate(net, args.power_watts, args.slack, args.load_words_per_tick, args.overlap), args)


def cmd_analyze_bias(args):
    net = load_config(args.config)
    seed = resolve_seed(args.seed)
    rows = negative_rate_analysis(_params(args, net, seed), _signals(args, net, seed))
    text = format_rate_table(rows, args.delimiter)
    if args.report_out:
        from .io import atomic_write
        atomic_write(args.report_out, text)
    else:
        sys.stdout.write(text)


def cmd_pipeline(args):
    net = load_config(args.config)
    seed = resolve_seed(args.seed)
    params = _params(args, net, seed)
    signals = _signals(args, net, seed)
    report = run_pipeline(params, signals, args.nzp_thresholds, args.bdp_thresholds, _spec(args), seed,
                          args.power_watts, args.slack, args.load_words_per_tick, args.overlap)
    _emit(report, args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="picoconv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, weights=True, signals=False, compress=False, sim=False):
        p.add_argument("--config", default="salenet", help="config file or preset name")
        p.add_argument("--seed", type=int, default=None, help=f"seed (fallback: ${SEED_ENV}, then 0)")
        p.add_argument("--report-out", default=None, help="write the report here instead of stdout")
        if weights:
            p.add_argument("--weights", default=None, help="weight file (default: seeded synthetic)")
        if signals:
            p.add_argument("--signal", action="append", default=[], help="signal CSV (repeatable)")
            p.add_argument("--n-signals", type=int, default=1, help="synthetic signals when --signal is absent")
        if compress:
            p.add_argument("--nzp-thresholds", type=_floats, default=DEFAULT_NZP_THRESHOLDS)
            p.add_argument("--bdp-thresholds", type=_floats, default=DEFAULT_BDP_THRESHOLDS)
            p.add_argument("--widths", type=_ints, default=None,
                           help="conv_w,conv_b,bn_w,bn_b,lin_w,lin_b (default 7,8,16,14,8,11)")
        if sim:
            p.add_argument("--power-watts", type=float, default=0.11)
            p.add_argument("--slack", type=int, default=hwsim.DEFAULT_SLACK)
            p.add_argument("--load-words-per-tick", type=float, default=hwsim.DEFAULT_LOAD_WORDS_PER_TICK)
            p.add_argument("--overlap", action="store_true", help="overlap loading with PE compute")
        return p

    p = common(sub.add_parser("inspect", help="parameter/operation counts"), weights=False)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gen-data", help="seeded synthetic signal")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--channels", type=int, default=5)
    p.add_argument("--length", type=int, default=1254)
    p.add_argument("--sample-rate", type=float, default=SAMPLE_RATE_HZ)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gen-weights", help="seeded synthetic weights")
    p.add_argument("--config", default="salenet")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_weights)

    p = common(sub.add_parser("compress", help="prune, cluster and quantize"), signals=True, compress=True)
    p.add_argument("--out", default=None, help="quantized model file")
    p.add_argument("--pruned-out", default=None, help="pruned float weights file")
    p.set_defaults(func=cmd_compress, n_signals=0)

    p = common(sub.add_parser("infer", help="float or fixed-point inference"), signals=True, compress=True)
    p.add_argument("--mode", choices=("float", "fixed"), default="float")
    p.set_defaults(func=cmd_infer)

    p = common(sub.add_parser("simulate", help="cycles, memory and performance"), weights=False, sim=True)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("analyze-bias", help="BN bias vs negative-rate table"), signals=True)
    p.add_argument("--delimiter", default=",")
    p.set_defaults(func=cmd_analyze_bias)

    p = common(sub.add_parser("pipeline", help="every stage, one report"), signals=True, compress=True, sim=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
