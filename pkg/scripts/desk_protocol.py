"""Desk training run: generate blend data, train all stages, score held-out pairs.

    python scripts/desk_protocol.py --work runs/desk
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path

from dualrain.networks import save_checkpoint
from dualrain.pipeline import evaluate_identity, evaluate_samples
from dualrain.runconfig import RunConfig
from dualrain.synth import StreakParams, VaporParams, make_blend_dataset
from dualrain.training import joint_train, load_samples, pretrain_anet, pretrain_snet


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", default="runs/desk")
    ap.add_argument("--train-count", type=int, default=200)
    ap.add_argument("--test-count", type=int, default=40)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, nargs=3, default=[10, 40, 20], metavar=("ANET", "SNET", "JOINT"))
    ap.add_argument("--config", help="RunConfig file; --epochs overrides its epoch counts")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)

    work = Path(args.work)
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    ea, es, ej = args.epochs
    tc = cfg.with_seed(args.seed).train
    tc = type(tc)(**{**tc.to_dict(), "epochs_anet": ea, "epochs_snet": es, "epochs_joint": ej})
    sp, vp = StreakParams(), VaporParams()
    train = load_samples(make_blend_dataset(None, args.train_count, args.size, sp, vp, work / "train", seed=11))
    test = load_samples(make_blend_dataset(None, args.test_count, args.size, sp, vp, work / "test", seed=12))

    t0 = time.perf_counter()
    anet, _ = pretrain_anet(train, tc, cfg.arch)
    snet, anet, _ = pretrain_snet(train, anet, tc, cfg.arch)
    snet_only = evaluate_samples(test, snet, anet, eps=tc.eps)
    snet, vnet, anet, _ = joint_train(train, snet, anet, tc)
    minutes = (time.perf_counter() - t0) / 60
    for name, params in (("anet", anet), ("snet", snet), ("vnet", vnet)):
        save_checkpoint(work / f"{name}.ckpt", params, {"train_config": tc.to_dict()})

    rows = {"rainy": evaluate_identity(test), "snet_only": snet_only,
            "full": evaluate_samples(test, snet, anet, vnet, eps=tc.eps)}
    for name, r in rows.items():
        print(f"{name:<10} PSNR {r.mean_psnr:7.3f} SSIM {r.mean_ssim:.4f}")
    print(f"training took {minutes:.1f} min")
    summary = {k: {"psnr": r.mean_psnr, "ssim": r.mean_ssim} for k, r in rows.items()}
    (work / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
