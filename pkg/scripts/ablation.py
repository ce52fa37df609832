"""Ablation sweep: c1 / c2 / c3 / full over several seeds on a vapor-heavy test set.

    python scripts/ablation.py --work runs/ablation --seeds 0 1 2
"""
import argparse
import json
import logging
import statistics
import sys
from dataclasses import replace
from pathlib import Path

from dualrain.cli import MODES, run_ablation
from dualrain.runconfig import RunConfig
from dualrain.synth import StreakParams, VaporParams, make_blend_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", default="runs/ablation")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--train-count", type=int, default=200)
    ap.add_argument("--test-count", type=int, default=40)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))
    ap.add_argument("--config", help="RunConfig file (train/arch keys are used)")
    ap.add_argument("--heavy-vapor", type=float, nargs=2, default=[0.5, 0.8])
    ap.add_argument("--train-vapor", type=float, nargs=2, default=None,
                    help="vapor strength range for training (default: same as test)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)

    work = Path(args.work)
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    heavy = VaporParams(strength_range=tuple(args.heavy_vapor))
    train_vp = VaporParams(strength_range=tuple(args.train_vapor)) if args.train_vapor else heavy
    rows = {m: [] for m in args.modes}
    for seed in args.seeds:
        tr = make_blend_dataset(None, args.train_count, args.size, StreakParams(), train_vp,
                                work / f"train_{seed}", seed=1000 + seed)
        te = make_blend_dataset(None, args.test_count, args.size, StreakParams(), heavy,
                                work / f"test_{seed}", seed=2000 + seed)
        res = run_ablation(args.modes, tr, te, cfg.with_seed(seed), work / f"seed_{seed}")
        for m in args.modes:
            rows[m].append((res[m].mean_psnr, res[m].mean_ssim))
            print(f"seed {seed} {m:<5} PSNR {res[m].mean_psnr:7.3f} SSIM {res[m].mean_ssim:.4f}", flush=True)
    summary = {m: {"psnr": statistics.fmean(p for p, _ in v), "ssim": statistics.fmean(s for _, s in v)}
               for m, v in rows.items()}
    for m, v in summary.items():
        print(f"mean {m:<5} PSNR {v['psnr']:7.3f} SSIM {v['ssim']:.4f}")
    (work / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
