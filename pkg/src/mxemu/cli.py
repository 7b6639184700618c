"""Command line interface: ``mxemu {quantize,dequantize,gemm,train-demo}``.

Reports go to stdout as one JSON line; logs go to stderr.
Exit codes: 0 ok, 1 usage, 2 I/O, 3 file format, 4 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .block import QuantConfig
from .errors import DivergenceError, FormatError
from .flow import DEMO_LR, DEMO_SEED, DEMO_STEPS, FlowConfig, train_demo
from .formats import MX_FORMATS
from .io import read_f32, read_mxt, write_f32, write_mxt
from .linalg import fp32_gemm, mx_gemm
from .metrics import error_report
from .tensor import dequantize_tensor, quantize_tensor

log = logging.getLogger("mxemu")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_DIVERGED = 0, 1, 2, 3, 4

FORMAT_CHOICES = sorted(MX_FORMATS)
ROUNDING_CHOICES = ["rne", "rhaz"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _check_block_size(k):
    if not 1 <= k <= 0xFFFF:
        raise UsageError(f"--block-size must be in [1, 65535], got {k}")


def _check_nonempty(arr, what):
    if arr.ndim == 0 or arr.size == 0:
        raise UsageError(f"{what}: tensor has empty dims {arr.shape}")


def _emit(report):
    print(json.dumps(report.to_dict()), flush=True)


def cmd_quantize(args):
    _check_block_size(args.block_size)
    arr = read_f32(args.input)
    _check_nonempty(arr, args.input)
    if arr.ndim > 255:
        raise UsageError(f"{args.input}: rank {arr.ndim} too large")
    if not -arr.ndim <= args.axis < arr.ndim:
        raise UsageError(f"--axis {args.axis} out of range for rank {arr.ndim}")
    cfg = QuantConfig.make(args.format, args.block_size, args.rounding)
    mt = quantize_tensor(arr, args.axis, cfg)
    write_mxt(args.output, mt)
    rep = error_report(arr, dequantize_tensor(mt))
    rep.clamped_lane_count = mt.clamped_lane_count
    rep.nan_block_count = mt.nan_block_count
    log.info("quantized %s -> %s (%d blocks)", args.input, args.output, mt.n_blocks)
    _emit(rep)
    return EXIT_OK


def cmd_dequantize(args):
    mt = read_mxt(args.input)
    write_f32(args.output, dequantize_tensor(mt))
    return EXIT_OK


def cmd_gemm(args):
    _check_block_size(args.block_size)
    fmt_a = args.format_a or args.format
    fmt_b = args.format_b or args.format
    if fmt_a is None or fmt_b is None:
        raise UsageError("give --format, or both --format-a and --format-b")
    a = read_f32(args.a)
    b = read_f32(args.b)
    for arr, name in ((a, args.a), (b, args.b)):
        _check_nonempty(arr, name)
        if arr.ndim != 2:
            raise UsageError(f"{name}: gemm needs rank-2 tensors, got rank {arr.ndim}")
    if a.shape[1] != b.shape[0]:
        raise UsageError(f"inner dimensions differ: {a.shape} x {b.shape}")
    qa = quantize_tensor(a, 1, QuantConfig.make(fmt_a, args.block_size, args.rounding))
    qb = quantize_tensor(b, 0, QuantConfig.make(fmt_b, args.block_size, args.rounding))
    ref = fp32_gemm(a, b) if args.reference else None
    res = mx_gemm(qa, qb, reference=ref)
    write_f32(args.out, res.out)
    if res.report is not None:
        _emit(res.report)
    return EXIT_OK


def cmd_train_demo(args):
    flow = FlowConfig.make(
        args.weight_format, args.act_format, args.grad_format, args.block_size, args.rounding
    )
    quantized = [c is not None for c in (flow.weight_cfg, flow.act_cfg, flow.grad)]
    if any(quantized) and not all(quantized):
        raise UsageError("fp32 passthrough must be used for all roles or none")
    code = EXIT_OK
    try:
        records = train_demo(flow, seed=args.seed, steps=args.steps, lr=args.lr)
    except DivergenceError as exc:
        log.error("%s", exc)
        records, code = exc.records, EXIT_DIVERGED
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss", "grad_norm"])
        for r in records:
            w.writerow([r.step, repr(float(r.loss)), repr(float(r.grad_norm))])
    if records:
        log.info("final loss %.6g after %d steps", records[-1].loss, len(records))
    return code


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mxemu", description="Microscaling (MX) format emulation")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def quant_opts(sp):
        sp.add_argument("--block-size", type=int, default=32)
        sp.add_argument("--rounding", choices=ROUNDING_CHOICES, default="rne")

    q = sub.add_parser("quantize", help="FP32 tensor file -> MX tensor file")
    q.add_argument("input")
    q.add_argument("output")
    q.add_argument("--format", required=True, choices=FORMAT_CHOICES)
    q.add_argument("--axis", type=int, default=-1)
    quant_opts(q)
    q.set_defaults(func=cmd_quantize)

    d = sub.add_parser("dequantize", help="MX tensor file -> FP32 tensor file")
    d.add_argument("input")
    d.add_argument("output")
    d.set_defaults(func=cmd_dequantize)

    g = sub.add_parser("gemm", help="MX GEMM of two FP32 matrices")
    g.add_argument("a")
    g.add_argument("b")
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=FORMAT_CHOICES)
    g.add_argument("--format-a", choices=FORMAT_CHOICES)
    g.add_argument("--format-b", choices=FORMAT_CHOICES)
    g.add_argument("--reference", action="store_true", help="report error against the FP32 GEMM")
    quant_opts(g)
    g.set_defaults(func=cmd_gemm)

    t = sub.add_parser("train-demo", help="train the fixed 2-layer MLP and write a loss CSV")
    fmts = FORMAT_CHOICES + ["fp32"]
    t.add_argument("--weight-format", required=True, choices=fmts)
    t.add_argument("--act-format", required=True, choices=fmts)
    t.add_argument("--grad-format", choices=fmts)
    t.add_argument("--steps", type=int, default=DEMO_STEPS)
    t.add_argument("--seed", type=int, default=DEMO_SEED)
    t.add_argument("--lr", type=float, default=DEMO_LR)
    t.add_argument("--block-size", type=int, default=32)
    t.add_argument("--rounding", choices=ROUNDING_CHOICES, default="rhaz")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_demo)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        with np.errstate(over="ignore"):
            return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
