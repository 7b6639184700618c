"""Quantization and GEMM SQNR for every MX format on synthetic inputs.

    python scripts/sqnr_sweep.py --dist gaussian --seeds 8
    python scripts/sqnr_sweep.py --dist student-t --csv sweep.csv
"""

import argparse
import csv
import sys

import numpy as np

from mxemu.block import QuantConfig, quantization_error
from mxemu.formats import MX_FORMATS
from mxemu.linalg import fp32_gemm, mx_gemm
from mxemu.tensor import quantize_tensor


def sample(rng, dist, shape):
    if dist == "gaussian":
        return rng.standard_normal(shape)
    if dist == "laplace":
        return rng.laplace(size=shape)
    return rng.standard_t(3, size=shape)


def sweep(dist, seeds, m, k, n, block_size, rounding):
    rows = []
    for name in MX_FORMATS:
        cfg = QuantConfig.make(name, block_size, rounding)
        elem, gemm = [], []
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            A = sample(rng, dist, (m, k)).astype(np.float32)
            B = sample(rng, dist, (k, n)).astype(np.float32)
            elem.append(quantization_error(A, cfg).sqnr_db)
            res = mx_gemm(quantize_tensor(A, 1, cfg), quantize_tensor(B, 0, cfg), reference=fp32_gemm(A, B))
            gemm.append(res.report.sqnr_db)
        rows.append({"format": name, "elem_sqnr_db": float(np.mean(elem)), "gemm_sqnr_db": float(np.mean(gemm))})
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dist", choices=["gaussian", "laplace", "student-t"], default="gaussian")
    p.add_argument("--seeds", type=int, default=8)
    p.add_argument("--shape", type=int, nargs=3, default=(64, 256, 64), metavar=("M", "K", "N"))
    p.add_argument("--block-size", type=int, default=32)
    p.add_argument("--rounding", choices=["rne", "rhaz"], default="rne")
    p.add_argument("--csv", help="also write the table here")
    args = p.parse_args(argv)

    rows = sweep(args.dist, args.seeds, *args.shape, args.block_size, args.rounding)
    rows.sort(key=lambda r: r["gemm_sqnr_db"])
    print(f"{'format':<12} {'elem SQNR':>10} {'GEMM SQNR':>10}   ({args.dist}, {args.seeds} seeds)")
    for r in rows:
        print(f"{r['format']:<12} {r['elem_sqnr_db']:10.3f} {r['gemm_sqnr_db']:10.3f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
