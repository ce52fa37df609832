"""Command-line entry point: ``dualrain {synth,train,ablate,derain,eval}``.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O failure,
3 numerical failure. Progress goes to standard error, results to standard
output.
"""
from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import files
from .errors import (
    ArchMismatch,
    CheckpointError,
    DimensionMismatch,
    DualRainError,
    EmptyCorpus,
    InvalidParams,
    NameMismatch,
    NoUsableSamples,
    NonFiniteActivation,
    NonFiniteLoss,
    ShapeMismatch,
    TooSmall,
    UnknownArch,
)
from .files import DatasetManifest
from .metrics import EvalResult, evaluate_dirs
from .networks import init_params, load_checkpoint, save_checkpoint
from .pipeline import derain, evaluate_samples, label_atmosphere
from .rain_model import recover_background
from .runconfig import RunConfig
from .synth import MIN_SIDE, RainScene, make_blend_dataset, make_scene_dataset
from .training import TrainReport, joint_train, load_samples, pretrain_anet, pretrain_snet

log = logging.getLogger("dualrain")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
CKPT = {"anet": "anet.ckpt", "snet": "snet.ckpt", "vnet": "vnet.ckpt"}
MODES = ("c1", "c2", "c3", "full")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# shared helpers


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = cfg.train.seed
        log.info("using seed %d%s", seed, " from config" if args.config else " (default)")
    return cfg.with_seed(seed)


def _path(args, cfg: RunConfig, name: str, required: bool = True):
    value = getattr(args, name, None) or cfg.paths.get(name)
    if value is None and required:
        raise UsageError(f"missing --{name.replace('_', '-')} (or paths.{name} in the config)")
    return Path(value) if value is not None else None


def _require_file(path: Path, what: str):
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")


def _empty_or_missing(out: Path):
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise UsageError(f"output directory {out} exists and is not empty")


def _publish(staging: Path, out: Path):
    if out.exists():
        out.rmdir()
    os.replace(staging, out)


# synth


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = _path(args, cfg, "out")
    clean_dir = _path(args, cfg, "clean_dir", required=False)
    if args.count < 0:
        raise InvalidParams(f"--count must be >= 0, got {args.count}")
    if args.size < MIN_SIDE:
        raise InvalidParams(f"--size must be >= {MIN_SIDE}, got {args.size}")
    if clean_dir is not None and not clean_dir.is_dir():
        raise FileNotFoundError(f"clean image directory not found: {clean_dir}")
    _empty_or_missing(out)
    staging = out.with_name(out.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    make = make_blend_dataset if args.kind == "blend" else make_scene_dataset
    m = make(clean_dir, args.count, args.size, cfg.streak, cfg.vapor, staging, cfg.train.seed)
    _publish(staging, out)
    print(f"synth {args.kind}: {len(m.entries)} entries, size {args.size}, seed {cfg.train.seed} -> {out}")
    return EXIT_OK


# train


def _meta(stage: str, cfg: RunConfig) -> dict:
    return {"stage": stage, "train_config": cfg.train.to_dict()}


def _load_prereq(ckpt_dir: Path, arch_id: str, ablation: bool):
    path = ckpt_dir / CKPT[arch_id]
    if not path.is_file():
        if ablation:
            log.warning("no %s checkpoint in %s; starting from initialization (--ablation)", arch_id, ckpt_dir)
            return None
        raise UsageError(f"missing prerequisite checkpoint {path}; train that stage first or pass --ablation")
    p = load_checkpoint(path)
    if p.arch_id != arch_id:
        raise ArchMismatch(f"{path} holds {p.arch_id} parameters, expected {arch_id}")
    return p


def run_training(stage: str, data, cfg: RunConfig, out: Path, ckpt_dir: Path,
                 ablation: bool = False) -> TrainReport:
    tc, arch = cfg.train, cfg.arch
    stages = ("anet", "snet", "joint") if stage == "all" else (stage,)
    report = TrainReport(seed=tc.seed, config=tc.to_dict(), arch=arch.to_dict())
    anet = snet = None
    if "anet" not in stages:
        anet = _load_prereq(ckpt_dir, "anet", ablation)
    if "snet" not in stages and "joint" in stages:
        snet = _load_prereq(ckpt_dir, "snet", ablation)
    samples = load_samples(data)
    out.mkdir(parents=True, exist_ok=True)
    if "anet" in stages:
        anet, rep = pretrain_anet(samples, tc, arch)
        report.merge(rep)
        report.checkpoints["anet"] = str(save_checkpoint(out / CKPT["anet"], anet, _meta("anet", cfg)))
    if "snet" in stages:
        anet_pre = anet is not None
        anet = anet if anet_pre else init_params("anet", arch, tc.seed)
        snet, anet, rep = pretrain_snet(samples, anet, tc, arch)
        rep.stages["snet"].pretrained["anet"] = anet_pre
        report.merge(rep)
        report.checkpoints["snet"] = str(save_checkpoint(out / CKPT["snet"], snet, _meta("snet", cfg)))
        report.checkpoints["anet"] = str(save_checkpoint(out / CKPT["anet"], anet, _meta("snet", cfg)))
    if "joint" in stages:
        flags = {"snet_pretrained": snet is not None, "anet_pretrained": anet is not None}
        snet = snet if snet is not None else init_params("snet", arch, tc.seed)
        anet = anet if anet is not None else init_params("anet", arch, tc.seed)
        snet, vnet, anet, rep = joint_train(samples, snet, anet, tc, **flags)
        report.merge(rep)
        for name, p in (("snet", snet), ("vnet", vnet), ("anet", anet)):
            report.checkpoints[name] = str(save_checkpoint(out / CKPT[name], p, _meta("joint", cfg)))
    report.checkpoints = {k: Path(v).name for k, v in report.checkpoints.items()}
    name = "report.json" if stage == "all" else f"report_{stage}.json"
    tmp = out / (name + ".partial")
    tmp.write_text(report.to_json())
    os.replace(tmp, out / name)
    return report


def cmd_train(args) -> int:
    cfg = _config(args)
    data = _path(args, cfg, "data")
    out = _path(args, cfg, "out")
    ckpt_dir = _path(args, cfg, "checkpoint", required=False) or out
    _require_file(data, "dataset manifest")
    t0 = time.perf_counter()
    report = run_training(args.stage, data, cfg, out, ckpt_dir, args.ablation)
    for name, st in report.stages.items():
        last = f"{st.losses[-1]:.6f}" if st.losses else "n/a"
        print(f"{name}: {st.epochs} epochs, final loss {last}")
    print(f"checkpoints in {out} ({time.perf_counter() - t0:.1f} s)")
    return EXIT_OK


# ablate


def run_ablation(modes, train_data, test_data, cfg: RunConfig, out: Path | None = None) -> dict[str, EvalResult]:
    """Train and score the requested pipeline variants.

    c1: SNet with per-image brightest-rain-pixel labels for A (no ANet);
    c2: SNet with a frozen pretrained ANet; c3: SNet with the pretrained ANet
    fine-tuned alongside (no VNet); full: c3 followed by joint training.
    """
    tc, arch = cfg.train, cfg.arch
    train = load_samples(train_data)
    test = load_samples(test_data)
    results, reports = {}, {}
    anet = snet3 = anet3 = None
    if {"c2", "c3", "full"} & set(modes):
        anet, rep = pretrain_anet(train, tc, arch)
        reports["anet"] = rep
    for mode in modes:
        log.info("[ablate] mode %s", mode)
        if mode == "c1":
            snet, _, rep = pretrain_snet(train, None, tc, arch, atmosphere="label")
            results[mode] = evaluate_samples(test, snet, atmosphere="label", eps=tc.eps)
        elif mode == "c2":
            snet, a2, rep = pretrain_snet(train, anet, tc, arch, anet_lr=0.0)
            results[mode] = evaluate_samples(test, snet, a2, eps=tc.eps)
        else:
            if snet3 is None:
                snet3, anet3, rep3 = pretrain_snet(train, anet, tc, arch)
                reports["c3"] = rep3
            rep = reports["c3"]
            if mode == "c3":
                results[mode] = evaluate_samples(test, snet3, anet3, eps=tc.eps)
            else:
                s, v, a, rep = joint_train(train, snet3, anet3, tc)
                results[mode] = evaluate_samples(test, s, a, v, eps=tc.eps)
        reports[mode] = rep
        log.info("[ablate] %s: PSNR %.3f SSIM %.4f", mode, results[mode].mean_psnr, results[mode].mean_ssim)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for mode in modes:
            (out / f"report_{mode}.json").write_text(reports[mode].to_json())
        with open(out / "ablation.csv", "w") as fh:
            fh.write("mode,psnr_db,ssim\n")
            for mode in modes:
                fh.write(f"{mode},{results[mode].mean_psnr:.6f},{results[mode].mean_ssim:.6f}\n")
    return results


def cmd_ablate(args) -> int:
    cfg = _config(args)
    data = _path(args, cfg, "data")
    test = _path(args, cfg, "test_data")
    out = _path(args, cfg, "out", required=False)
    _require_file(data, "training manifest")
    _require_file(test, "test manifest")
    modes = list(dict.fromkeys(args.mode or MODES))
    results = run_ablation(modes, data, test, cfg, out)
    print(f"{'mode':<6}  {'PSNR(dB)':>9}  {'SSIM':>7}")
    for mode in modes:
        print(f"{mode:<6}  {results[mode].mean_psnr:9.3f}  {results[mode].mean_ssim:7.4f}")
    return EXIT_OK


# derain


def _inputs(path: Path, suffixes) -> list[Path]:
    if path.is_dir():
        found = sorted(p for p in path.iterdir() if p.suffix.lower() in suffixes)
        if not found:
            raise FileNotFoundError(f"no input files in {path}")
        return found
    if not path.is_file():
        raise FileNotFoundError(f"input not found: {path}")
    return [path]


def _write_outputs(out: Path, stem: str, rainy, j, streak_only, ts, tv, a, dump: bool, save_float: bool):
    files.write_image(out / f"{stem}.png", j)
    if save_float:
        np.save(out / f"{stem}.npy", j)
    if dump:
        files.write_map(out / f"{stem}_ts.png", ts)
        files.write_map(out / f"{stem}_tv.png", tv)
        (out / f"{stem}_A.txt").write_text(" ".join(f"{v:.6f}" for v in a) + "\n")
        files.write_image(out / f"{stem}_removed_streak.png", np.abs(rainy - streak_only))
        files.write_image(out / f"{stem}_removed_vapor.png", np.abs(streak_only - j))


def cmd_derain(args) -> int:
    out = Path(args.output)
    eps = args.eps
    if args.oracle_maps:
        inputs = _inputs(Path(args.input), {".npz"})
        out.mkdir(parents=True, exist_ok=True)
        for path in inputs:
            s = RainScene.load_npz(path)
            j = recover_background(s.rainy, s.t_streak, s.t_vapor, s.atmosphere, eps)
            j_s = recover_background(s.rainy, s.t_streak, np.zeros_like(s.t_vapor), s.atmosphere, eps)
            _write_outputs(out, path.stem, s.rainy, j, j_s, s.t_streak, s.t_vapor, s.atmosphere,
                           args.dump_maps, True)
        print(f"derain (oracle maps): {len(inputs)} scenes -> {out}")
        return EXIT_OK
    if not args.checkpoint:
        raise UsageError("--checkpoint is required unless --oracle-maps is given")
    ckpt = Path(args.checkpoint)
    nets = {}
    for arch_id, fname in CKPT.items():
        path = ckpt / fname
        _require_file(path, f"{arch_id} checkpoint")
        nets[arch_id] = load_checkpoint(path)
        if nets[arch_id].arch_id != arch_id:
            raise ArchMismatch(f"{path} holds {nets[arch_id].arch_id} parameters, expected {arch_id}")
    src = Path(args.input)
    if src.suffix == ".json":
        # a manifest: restore each rainy image under its clean image's name
        _require_file(src, "manifest")
        m = DatasetManifest.load(src)
        jobs = [(m.resolve(e.rainy_path), Path(e.clean_path).stem) for e in m.entries]
    else:
        jobs = [(p, p.stem) for p in _inputs(src, files.IMAGE_SUFFIXES)]
    images = [(p, stem, files.read_image(p)) for p, stem in jobs]
    out.mkdir(parents=True, exist_ok=True)
    for path, stem, img in images:
        t0 = time.perf_counter()
        a = label_atmosphere(img) if args.label_atmosphere else None
        r = derain(img, nets["snet"], nets["anet"], nets["vnet"], atmosphere=a, eps=eps)
        log.info("%s: %dx%d in %.3f s", path.name, img.shape[1], img.shape[0], time.perf_counter() - t0)
        _write_outputs(out, stem, img, r.background, r.streak_only, r.t_streak, r.t_vapor,
                       r.atmosphere, args.dump_maps, args.save_float)
    print(f"derain: {len(images)} images -> {out}")
    return EXIT_OK


# eval


def cmd_eval(args) -> int:
    pred, gt = Path(args.pred_dir), Path(args.gt_dir)
    for d in (pred, gt):
        if not d.is_dir():
            raise FileNotFoundError(f"directory not found: {d}")
    csv_path = Path(args.csv) if args.csv else pred / "eval.csv"
    result = evaluate_dirs(pred, gt, csv_path)
    print(result.table())
    log.info("wrote %s", csv_path)
    return EXIT_OK


# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dualrain", description="Dual-transmission single-image deraining.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("kind", choices=("blend", "scenes"))
    s.add_argument("--clean-dir", help="directory of clean images (default: procedural backgrounds)")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--config")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="run training stages")
    t.add_argument("--stage", choices=("anet", "snet", "joint", "all"), required=True)
    t.add_argument("--data", help="training manifest.json")
    t.add_argument("--config")
    t.add_argument("--out", help="checkpoint and report directory")
    t.add_argument("--checkpoint", help="where prerequisite checkpoints live (default: --out)")
    t.add_argument("--seed", type=int)
    t.add_argument("--ablation", action="store_true",
                   help="allow stages to start without their prerequisite checkpoints")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", help="train and compare pipeline variants")
    a.add_argument("--mode", choices=MODES, action="append",
                   help="variant to run; repeat for several (default: all four)")
    a.add_argument("--data", help="training manifest.json")
    a.add_argument("--test-data", help="test manifest.json")
    a.add_argument("--config")
    a.add_argument("--out", help="directory for per-mode reports and ablation.csv")
    a.add_argument("--seed", type=int)
    a.set_defaults(func=cmd_ablate)

    d = sub.add_parser("derain", help="restore images with trained networks")
    d.add_argument("--checkpoint", help="directory with anet/snet/vnet checkpoints")
    d.add_argument("--input", required=True,
                   help="image file, directory, or dataset manifest.json (outputs named after clean images)")
    d.add_argument("--output", required=True, help="output directory")
    d.add_argument("--dump-maps", action="store_true",
                   help="also write Ts, Tv, A and removed-streak/vapor images")
    d.add_argument("--oracle-maps", action="store_true",
                   help="read scene .npz files and invert with their ground-truth maps")
    d.add_argument("--label-atmosphere", action="store_true",
                   help="take A from the brightest rain pixel instead of ANet")
    d.add_argument("--save-float", action="store_true", help="also save the restoration as .npy")
    d.add_argument("--eps", type=float, default=0.05)
    d.set_defaults(func=cmd_derain)

    e = sub.add_parser("eval", help="PSNR/SSIM of predictions against ground truth")
    e.add_argument("--pred-dir", required=True)
    e.add_argument("--gt-dir", required=True)
    e.add_argument("--csv", help="CSV path (default: <pred-dir>/eval.csv)")
    e.set_defaults(func=cmd_eval)
    return p


USAGE_ERRORS = (UsageError, InvalidParams, ArchMismatch, NameMismatch, UnknownArch, DimensionMismatch,
                ShapeMismatch, TooSmall, NoUsableSamples, EmptyCorpus)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr, force=True)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLoss, NonFiniteActivation, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DualRainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
