"""Minimal-width sweep over state dimension and the log-log fit of N against n.

    python scripts/run_scaling.py --dims 2 4 6 8 --eps 0.1 --threads 1 --out out/scaling
"""
import argparse
import json
from pathlib import Path

from lyapnet.experiments import ExperimentConfig, scaling_sweep, write_records_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 4, 6, 8])
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--arch", default="sublayer", choices=["sublayer", "transform", "dense"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--m-hi", type=int, default=16)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="out/scaling")
    args = ap.parse_args()

    cfg = ExperimentConfig(dims=args.dims, eps=args.eps, arch=args.arch, seeds=args.seeds, M_hi=args.m_hi)
    records, fit = scaling_sweep(cfg, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(records, out / "records.csv", wall_clock=True)
    (out / "scaling.json").write_text(json.dumps({"fit": fit, "records": [r.to_dict() for r in records]}, indent=2))
    for r in records:
        print(f"n={r.n:3d}  M={r.M}  N={r.N}  sup={r.sup_err:.3e}  {r.verdict}  ({r.wall_ms / 1e3:.1f}s)")
    if "slope" in fit:
        print(f"log N = {fit['slope']:.3f} log n + {fit['intercept']:.3f}   (R^2 = {fit['r2']:.3f})")
    if fit["excluded"]:
        print("excluded (not found):", fit["excluded"])


if __name__ == "__main__":
    main()
