"""The staged training protocol: ANet pretraining, SNet pretraining with
``Tv = 0``, then joint training with VNet."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..errors import ArchMismatch, NoRainPixels, NoUsableSamples, NonFiniteLoss
from ..networks import ArchConfig, ParamSet, anet_forward, init_params, snet_forward, vnet_forward
from ..rain_model import recover_background_tensor
from .config import TrainConfig
from .data import Sample, iterate_batches, load_samples
from .labels import detect_rain_pixels, extract_atmosphere_label
from .losses import loss_anet, loss_snet, loss_total
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

STAGE_INDEX = {"anet": 1, "snet": 2, "joint": 3}


@dataclass
class StageReport:
    epochs: int
    losses: list[float] = field(default_factory=list)
    lr: dict[str, float] = field(default_factory=dict)
    skipped: int = 0
    atmosphere: str = "anet"
    pretrained: dict[str, bool] = field(default_factory=dict)
    update_norms: dict[str, float] = field(default_factory=dict)


@dataclass
class TrainReport:
    seed: int
    config: dict
    arch: dict
    stages: dict[str, StageReport] = field(default_factory=dict)
    checkpoints: dict[str, str] = field(default_factory=dict)
    wall_time: float = 0.0

    def merge(self, other: "TrainReport") -> "TrainReport":
        self.stages.update(other.stages)
        self.checkpoints.update(other.checkpoints)
        self.wall_time += other.wall_time
        return self

    def to_json(self, include_time: bool = False) -> str:
        body = asdict(self)
        if not include_time:
            body.pop("wall_time")
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _check_arch(p: ParamSet | None, arch_id: str):
    if p is not None and p.arch_id != arch_id:
        raise ArchMismatch(f"expected {arch_id} parameters, got {p.arch_id}")


def atmosphere_labels(samples: list[Sample]) -> dict[int, np.ndarray]:
    """Full-image labels per sample index; samples without rain pixels are left out."""
    labels = {}
    for k, s in enumerate(samples):
        try:
            labels[k] = extract_atmosphere_label(s.rainy, detect_rain_pixels(s.rainy, s.mask))
        except NoRainPixels:
            continue
    return labels


def _delta_norm(before: ParamSet, after: ParamSet) -> float:
    sq = sum(float(((after[k] - before[k]).double() ** 2).sum()) for k in before.names())
    return math.sqrt(sq)


def _fit(stage: str, samples, indices, cfg: TrainConfig, epochs: int,
         nets: dict[str, tuple[ParamSet, float]], batch_loss) -> list[float]:
    """Generic loop: ``batch_loss(idx, rainy, clean)`` returns a scalar tensor.

    Networks with learning rate 0 are held fixed and get no gradient.
    """
    states = {name: AdamState() for name in nets}
    for p, lr in nets.values():
        p.requires_grad_(lr > 0)
    history = []
    for epoch in range(epochs):
        total, count = 0.0, 0
        for idx, rainy, clean in iterate_batches(samples, indices, cfg, STAGE_INDEX[stage], epoch):
            loss = batch_loss(idx, rainy, clean)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"{stage} stage: non-finite loss at epoch {epoch + 1}")
            trainable = [(n, p, lr) for n, (p, lr) in nets.items() if lr > 0]
            tensors = [t for _, p, _ in trainable for t in p.tensors.values()]
            grads = torch.autograd.grad(loss, tensors, allow_unused=True)
            it = iter(grads)
            for name, p, lr in trainable:
                g = {k: next(it) for k in p.names()}
                adam_step(p.tensors, g, states[name], lr, (cfg.beta1, cfg.beta2), cfg.adam_eps)
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        history.append(total / count)
        log.info("[%s] epoch %d/%d loss %.6f", stage, epoch + 1, epochs, history[-1])
    for p, _ in nets.values():
        p.requires_grad_(False)
    return history


def _report(cfg: TrainConfig, arch: ArchConfig, stage: str, sr: StageReport, t0: float) -> TrainReport:
    rep = TrainReport(seed=cfg.seed, config=cfg.to_dict(), arch=arch.to_dict())
    rep.stages[stage] = sr
    rep.wall_time = time.perf_counter() - t0
    return rep


def pretrain_anet(data, cfg: TrainConfig, arch: ArchConfig | None = None,
                  anet: ParamSet | None = None) -> tuple[ParamSet, TrainReport]:
    """Fit ANet to brightest-rain-pixel labels."""
    t0 = time.perf_counter()
    arch = arch or (anet.cfg if anet is not None else ArchConfig())
    _check_arch(anet, "anet")
    samples = load_samples(data)
    anet = (anet or init_params("anet", arch, cfg.seed)).clone()
    labels = atmosphere_labels(samples)
    skipped = len(samples) - len(labels)
    if skipped:
        log.info("[anet] skipped %d entries without detectable rain pixels", skipped)
    sr = StageReport(epochs=cfg.epochs_anet, lr={"anet": cfg.lr_anet_pre}, skipped=skipped,
                     atmosphere="label")
    if cfg.epochs_anet == 0:
        return anet, _report(cfg, arch, "anet", sr, t0)
    if not labels:
        raise NoUsableSamples("no entry has detectable rain pixels")
    before = anet.clone()

    def batch_loss(idx, rainy, clean):
        target = torch.from_numpy(np.stack([labels[k] for k in idx]).astype(np.float32))
        return loss_anet(anet_forward(rainy, anet), target)

    sr.losses = _fit("anet", samples, sorted(labels), cfg, cfg.epochs_anet,
                     {"anet": (anet, cfg.lr_anet_pre)}, batch_loss)
    sr.update_norms = {"anet": _delta_norm(before, anet)}
    return anet, _report(cfg, arch, "anet", sr, t0)


def pretrain_snet(data, anet: ParamSet | None, cfg: TrainConfig, arch: ArchConfig | None = None,
                  snet: ParamSet | None = None, atmosphere: str = "anet",
                  anet_lr: float | None = None) -> tuple[ParamSet, ParamSet | None, TrainReport]:
    """Train SNet with ``Tv = 0`` on the squared-error loss.

    ``atmosphere="anet"`` takes A from ANet, fine-tuned at ``anet_lr``
    (default ``cfg.lr_finetune``; 0 freezes it). ``atmosphere="label"`` uses
    the per-image brightest-rain-pixel labels and no ANet at all.
    """
    t0 = time.perf_counter()
    if atmosphere not in ("anet", "label"):
        raise ValueError(f"atmosphere must be 'anet' or 'label', got {atmosphere!r}")
    _check_arch(anet, "anet")
    _check_arch(snet, "snet")
    if atmosphere == "anet" and anet is None:
        raise ArchMismatch("atmosphere='anet' needs ANet parameters")
    arch = arch or (snet.cfg if snet is not None else ArchConfig())
    samples = load_samples(data)
    snet = (snet or init_params("snet", arch, cfg.seed)).clone()
    anet = anet.clone() if anet is not None else None
    anet_lr = cfg.lr_finetune if anet_lr is None else anet_lr
    if atmosphere == "label":
        labels = atmosphere_labels(samples)
        indices = sorted(labels)
        nets = {"snet": (snet, cfg.lr_main)}
    else:
        labels, indices = None, list(range(len(samples)))
        nets = {"snet": (snet, cfg.lr_main), "anet": (anet, anet_lr)}
    sr = StageReport(epochs=cfg.epochs_snet, lr={k: lr for k, (_, lr) in nets.items()},
                     skipped=len(samples) - len(indices), atmosphere=atmosphere,
                     pretrained={"anet": anet is not None})
    if cfg.epochs_snet == 0:
        return snet, anet, _report(cfg, arch, "snet", sr, t0)
    if not indices:
        raise NoUsableSamples("no usable training entries")
    before = {k: p.clone() for k, (p, _) in nets.items()}

    def batch_loss(idx, rainy, clean):
        if labels is not None:
            a = torch.from_numpy(np.stack([labels[k] for k in idx]).astype(np.float32))
        else:
            a = anet_forward(rainy, anet)
        ts = snet_forward(rainy, snet)
        j_hat = recover_background_tensor(rainy, ts, None, a, cfg.eps)
        return loss_snet(j_hat, clean)

    sr.losses = _fit("snet", samples, indices, cfg, cfg.epochs_snet, nets, batch_loss)
    sr.update_norms = {k: _delta_norm(before[k], p) for k, (p, _) in nets.items()}
    return snet, anet, _report(cfg, arch, "snet", sr, t0)


def joint_train(data, snet: ParamSet, anet: ParamSet, cfg: TrainConfig,
                vnet: ParamSet | None = None, snet_pretrained: bool = True,
                anet_pretrained: bool = True) -> tuple[ParamSet, ParamSet, ParamSet, TrainReport]:
    """Train VNet and fine-tune SNet and ANet on the gradient + L1 loss.

    SNet gets gradient both through the recovered image and through VNet's input.
    """
    t0 = time.perf_counter()
    _check_arch(snet, "snet")
    _check_arch(anet, "anet")
    _check_arch(vnet, "vnet")
    arch = snet.cfg
    samples = load_samples(data)
    snet, anet = snet.clone(), anet.clone()
    vnet = (vnet or init_params("vnet", arch, cfg.seed)).clone()
    nets = {"vnet": (vnet, cfg.lr_main), "snet": (snet, cfg.lr_finetune),
            "anet": (anet, cfg.lr_finetune)}
    sr = StageReport(epochs=cfg.epochs_joint, lr={k: lr for k, (_, lr) in nets.items()},
                     pretrained={"snet": snet_pretrained, "anet": anet_pretrained})
    if not (snet_pretrained and anet_pretrained):
        log.warning("[joint] running without pretrained %s",
                    ", ".join(k for k, v in sr.pretrained.items() if not v))
    if cfg.epochs_joint == 0:
        return snet, vnet, anet, _report(cfg, arch, "joint", sr, t0)
    before = {k: p.clone() for k, (p, _) in nets.items()}

    def batch_loss(idx, rainy, clean):
        a = anet_forward(rainy, anet)
        ts = snet_forward(rainy, snet)
        tv = vnet_forward(rainy, ts, vnet)
        j_hat = recover_background_tensor(rainy, ts, tv, a, cfg.eps)
        return loss_total(j_hat, clean, cfg.lambda1, cfg.lambda2)

    sr.losses = _fit("joint", samples, list(range(len(samples))), cfg, cfg.epochs_joint, nets, batch_loss)
    sr.update_norms = {k: _delta_norm(before[k], p) for k, (p, _) in nets.items()}
    return snet, vnet, anet, _report(cfg, arch, "joint", sr, t0)
