"""Train the demo MLP in FP32 and under MX formats; report final-loss gaps.

    python scripts/train_parity.py
    python scripts/train_parity.py --steps 200 --run mxfp8_e4m3:mxfp8_e4m3 --out-dir curves/
"""

import argparse
import csv
import sys
import time
from pathlib import Path

from mxemu.flow import DEMO_LR, DEMO_SEED, DEMO_STEPS, FlowConfig, train_demo

DEFAULT_RUNS = ["mxfp6_e3m2:mxfp6_e3m2", "mxfp4:mxfp6_e3m2"]


def parse_run(text):
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected WEIGHT:ACT[:GRAD], got {text!r}")
    return tuple(parts)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--run", type=parse_run, action="append", help="WEIGHT:ACT[:GRAD] format names; repeatable")
    p.add_argument("--steps", type=int, default=DEMO_STEPS)
    p.add_argument("--lr", type=float, default=DEMO_LR)
    p.add_argument("--seed", type=int, default=DEMO_SEED)
    p.add_argument("--rounding", choices=["rne", "rhaz"], default="rhaz")
    p.add_argument("--out-dir", type=Path, help="write one loss-curve CSV per run")
    args = p.parse_args(argv)

    runs = [("fp32", FlowConfig.fp32())]
    for run in args.run or [parse_run(s) for s in DEFAULT_RUNS]:
        w, a, *g = run
        runs.append(("/".join(run), FlowConfig.make(w, a, g[0] if g else None, rounding=args.rounding)))

    base = None
    for label, flow in runs:
        t0 = time.perf_counter()
        recs = train_demo(flow, seed=args.seed, steps=args.steps, lr=args.lr)
        final = recs[-1].loss
        base = final if base is None else base
        gap = (final - base) / base
        print(f"{label:<32} final loss {final:.6f}  gap {gap:+7.2%}  ({time.perf_counter() - t0:.1f}s)")
        if args.out_dir:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            with open(args.out_dir / f"{label.replace('/', '_')}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["step", "loss", "grad_norm"])
                w.writerows((r.step, repr(r.loss), repr(r.grad_norm)) for r in recs)
    return 0


if __name__ == "__main__":
    sys.exit(main())
