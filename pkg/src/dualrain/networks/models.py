"""SNet, VNet and ANet as pure functions of (parameters, input)."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import ArchMismatch, InvalidParams, NonFiniteActivation, ShapeMismatch, UnknownArch
from . import ops

ARCH_IDS = ("snet", "vnet", "anet")


@dataclass(frozen=True)
class ArchConfig:
    groups: int = 3  # SNet grouped-conv groups; also the number of stem branches
    base_channels: int = 12  # SNet stem width; encoder doubles it twice
    middle_units: int = 3
    bottleneck_ratio: float = 0.5
    vnet_channels: int = 32
    vnet_groups: int = 2
    vnet_units: int = 2
    vnet_scale: int = 4  # VNet runs on an average-pooled input; its gate is upsampled back
    spp_levels: tuple[int, ...] = (1, 2, 4, 8)
    spp_channels: int = 8
    anet_channels: tuple[int, ...] = (16, 32, 64)
    slope: float = 0.1
    vnet_out_bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "spp_levels", tuple(int(v) for v in self.spp_levels))
        object.__setattr__(self, "anet_channels", tuple(int(v) for v in self.anet_channels))
        g = self.groups
        if g < 1 or self.base_channels % g:
            raise InvalidParams(f"groups={g} must divide base_channels={self.base_channels}")
        for c in self._snet_widths():
            if _bottleneck(c, self.bottleneck_ratio) % g:
                raise InvalidParams(f"groups={g} must divide the bottleneck of width {c}")
        vg = self.vnet_groups
        if vg < 1 or self.vnet_channels % vg or _bottleneck(self.vnet_channels, self.bottleneck_ratio) % vg:
            raise InvalidParams(f"vnet_groups={vg} must divide vnet_channels and its bottleneck")
        lv = self.spp_levels
        if not lv or any(b <= a for a, b in zip(lv, lv[1:])) or lv[0] < 1:
            raise InvalidParams(f"spp_levels must be strictly increasing positive, got {lv}")
        if len(self.anet_channels) < 1 or min(self.anet_channels) < 1:
            raise InvalidParams("anet_channels must be non-empty and positive")
        if self.vnet_scale < 1:
            raise InvalidParams(f"vnet_scale must be >= 1, got {self.vnet_scale}")
        if self.spp_channels < 1 or self.middle_units < 0 or self.vnet_units < 0:
            raise InvalidParams("invalid unit or channel counts")

    def _snet_widths(self):
        c = self.base_channels
        return (c, 2 * c, 4 * c)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spp_levels"] = list(self.spp_levels)
        d["anet_channels"] = list(self.anet_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(**d)

    def reduced(self, factor: int = 8) -> "ArchConfig":
        """Narrow variant (for gradient checks and quick experiments)."""
        return ArchConfig(
            groups=self.groups,
            base_channels=max(self.groups * 2, self.base_channels // factor),
            middle_units=self.middle_units,
            bottleneck_ratio=self.bottleneck_ratio,
            vnet_channels=max(self.vnet_groups * 2, self.vnet_channels // factor),
            vnet_groups=self.vnet_groups,
            vnet_units=self.vnet_units,
            vnet_scale=self.vnet_scale,
            spp_levels=self.spp_levels,
            spp_channels=max(1, self.spp_channels // factor),
            anet_channels=tuple(max(1, c // factor) for c in self.anet_channels),
            slope=self.slope,
            vnet_out_bias=self.vnet_out_bias,
        )


def _bottleneck(c: int, ratio: float) -> int:
    return max(1, int(round(c * ratio)))


@dataclass
class ParamSet:
    """Named tensors for one network plus the metadata needed to rebuild them."""

    arch_id: str
    cfg: ArchConfig
    init_seed: int
    tensors: dict[str, torch.Tensor] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def numel(self) -> int:
        return sum(t.numel() for t in self.tensors.values())

    def sub(self, prefix: str) -> dict[str, torch.Tensor]:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.tensors.items() if k.startswith(prefix + ".")}

    def clone(self) -> "ParamSet":
        return ParamSet(self.arch_id, self.cfg, self.init_seed,
                        {k: v.detach().clone() for k, v in self.tensors.items()})

    def to(self, dtype) -> "ParamSet":
        return ParamSet(self.arch_id, self.cfg, self.init_seed,
                        {k: v.detach().to(dtype) for k, v in self.tensors.items()})

    def requires_grad_(self, flag: bool = True) -> "ParamSet":
        for t in self.tensors.values():
            t.requires_grad_(flag)
        return self

    def equal(self, other: "ParamSet") -> bool:
        return (self.arch_id == other.arch_id and self.names() == other.names()
                and all(torch.equal(self[k], other[k]) for k in self.names()))


# Gain 2 for weights feeding the leaky rectifier, 1 for layers whose output
# stays linear (depthwise, residual projections, SPP, logit heads); a uniform
# gain of 2 compounds through the residual units and saturates the outputs.
RECT, LIN = 2.0, 1.0


def _unit_layout(prefix, c_in, c_out, mid, g):
    return [
        (f"{prefix}.pw1.w", (mid, c_in // g, 1, 1), c_in // g, RECT),
        (f"{prefix}.pw1.b", (mid,), None, None),
        (f"{prefix}.dw1.w", (mid, 1, 3, 3), 9, LIN),
        (f"{prefix}.pw2.w", (mid, mid // g, 1, 1), mid // g, RECT),
        (f"{prefix}.pw2.b", (mid,), None, None),
        (f"{prefix}.dw2.w", (mid, 1, 3, 3), 9, LIN),
        (f"{prefix}.pw3.w", (c_out, mid // g, 1, 1), mid // g, LIN),
        (f"{prefix}.pw3.b", (c_out,), None, None),
    ]


def _conv_layout(prefix, c_in, c_out, k, gain=RECT):
    return [(f"{prefix}.w", (c_out, c_in, k, k), c_in * k * k, gain), (f"{prefix}.b", (c_out,), None, None)]


def param_layout(arch_id: str, cfg: ArchConfig) -> list[tuple[str, tuple, int | None, float | None]]:
    """(name, shape, fan_in, gain) per tensor; ``fan_in`` and ``gain`` are None for biases.

    Weights are drawn uniformly with variance ``gain / fan_in``.
    """
    r = cfg.bottleneck_ratio
    if arch_id == "snet":
        g, c = cfg.groups, cfg.base_channels
        out = []
        for i in range(g):
            out += _conv_layout(f"stem.{i}", 3, c // g, 5)
        out += _unit_layout("enc.0", c, c, _bottleneck(c, r), g)
        out += _unit_layout("enc.1", 2 * c, 2 * c, _bottleneck(2 * c, r), g)
        for i in range(cfg.middle_units):
            out += _unit_layout(f"mid.{i}", 4 * c, 4 * c, _bottleneck(4 * c, r), g)
        out += _conv_layout("dec.0", 4 * c, 2 * c, 3)
        out += _conv_layout("dec.1", 2 * c, c, 3)
        out += _conv_layout("head", c, 1, 3, LIN)
        return out
    if arch_id == "vnet":
        c, g, cp = cfg.vnet_channels, cfg.vnet_groups, cfg.spp_channels
        out = _conv_layout("inp", 4, c, 3)
        for i in range(cfg.vnet_units):
            out += _unit_layout(f"unit.{i}", c, c, _bottleneck(c, r), g)
        for i in range(len(cfg.spp_levels)):
            out += _conv_layout(f"spp.l{i}", c, cp, 1, LIN)
        out += _conv_layout("fuse.0", c + len(cfg.spp_levels) * cp, c, 3)
        out += _conv_layout("fuse.1", c, 1, 3, LIN)
        return out
    if arch_id == "anet":
        widths = (3,) + cfg.anet_channels
        out = []
        for i in range(len(cfg.anet_channels)):
            out += _conv_layout(f"enc.{i}", widths[i], widths[i + 1], 3)
        out += _conv_layout("out", widths[-1], 3, 1, LIN)
        return out
    raise UnknownArch(arch_id)


def init_params(arch_id: str, cfg: ArchConfig | None = None, seed: int = 0,
                dtype=torch.float32) -> ParamSet:
    """Fan-in scaled uniform weights (see ``param_layout``), zero biases."""
    if arch_id not in ARCH_IDS:
        raise UnknownArch(arch_id)
    cfg = cfg or ArchConfig()
    rng = np.random.default_rng(np.random.SeedSequence([seed, ARCH_IDS.index(arch_id)]))
    tensors = {}
    for name, shape, fan_in, gain in param_layout(arch_id, cfg):
        if fan_in is None:
            arr = np.zeros(shape)
        else:
            bound = math.sqrt(3.0 * gain / fan_in)
            arr = rng.uniform(-bound, bound, size=shape)
        tensors[name] = torch.from_numpy(arr).to(dtype)
    if arch_id == "vnet" and cfg.vnet_out_bias:
        tensors["fuse.1.b"].fill_(cfg.vnet_out_bias)
    return ParamSet(arch_id, cfg, seed, tensors)


def _expect(p: ParamSet, arch_id: str):
    if p.arch_id != arch_id:
        raise ArchMismatch(f"expected {arch_id} parameters, got {p.arch_id}")


def _check_image(x: torch.Tensor, channels: int, name: str):
    if x.ndim != 4 or x.shape[1] != channels:
        raise ShapeMismatch(f"{name} must be (B, {channels}, H, W), got {tuple(x.shape)}")


def _finite(y: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(y).all():
        raise NonFiniteActivation(f"non-finite values in {where} output")
    return y


def snet_forward(i: torch.Tensor, p: ParamSet) -> torch.Tensor:
    """Streak transmission ``(B, 1, H, W)`` in (0, 1) from a rainy image."""
    _expect(p, "snet")
    _check_image(i, 3, "I")
    h, w = i.shape[-2:]
    if h % 4 or w % 4:
        raise ShapeMismatch(f"SNet input sides must be divisible by 4, got {h}x{w}")
    cfg, t = p.cfg, p.tensors
    g, s = cfg.groups, cfg.slope
    x0 = ops.leaky(torch.cat([ops.conv(i, t[f"stem.{k}.w"], t[f"stem.{k}.b"]) for k in range(g)], 1), s)
    x1 = ops.shuffle_unit_cat(x0, p.sub("enc.0"), g, s)
    x = ops.shuffle_unit_cat(x1, p.sub("enc.1"), g, s)
    for k in range(cfg.middle_units):
        x = ops.shuffle_unit_add(x, p.sub(f"mid.{k}"), g, s)
    x = ops.leaky(ops.conv(ops.upsample2(x), t["dec.0.w"], t["dec.0.b"]), s) + x1
    x = ops.leaky(ops.conv(ops.upsample2(x), t["dec.1.w"], t["dec.1.b"]), s) + x0
    return _finite(torch.sigmoid(ops.conv(x, t["head.w"], t["head.b"])), "SNet")


def vnet_forward(i: torch.Tensor, ts: torch.Tensor, p: ParamSet) -> torch.Tensor:
    """Vapor transmission gated by ``1 - Ts`` so that ``Ts + Tv <= 1``."""
    _expect(p, "vnet")
    _check_image(i, 3, "I")
    _check_image(ts, 1, "Ts")
    if ts.shape[0] != i.shape[0] or ts.shape[-2:] != i.shape[-2:]:
        raise ShapeMismatch(f"Ts {tuple(ts.shape)} does not match I {tuple(i.shape)}")
    cfg, t = p.cfg, p.tensors
    s, k = cfg.slope, cfg.vnet_scale
    h, w = i.shape[-2:]
    x = torch.cat([i, ts], 1)
    if k > 1:
        if h % k or w % k:
            raise ShapeMismatch(f"VNet input sides must be divisible by {k}, got {h}x{w}")
        x = F.avg_pool2d(x, k)
    x = ops.leaky(ops.conv(x, t["inp.w"], t["inp.b"]), s)
    for u in range(cfg.vnet_units):
        x = ops.shuffle_unit_add(x, p.sub(f"unit.{u}"), cfg.vnet_groups, s)
    x = ops.spp(x, cfg.spp_levels, p.sub("spp"))
    x = ops.leaky(ops.conv(x, t["fuse.0.w"], t["fuse.0.b"]), s)
    logits = ops.conv(x, t["fuse.1.w"], t["fuse.1.b"])
    if k > 1:
        logits = F.interpolate(logits, size=(h, w), mode="bilinear", align_corners=False)
    return _finite(torch.sigmoid(logits) * (1.0 - ts), "VNet")


def anet_forward(i: torch.Tensor, p: ParamSet) -> torch.Tensor:
    """Per-image atmosphere light ``(B, 3)`` in (0, 1)."""
    _expect(p, "anet")
    _check_image(i, 3, "I")
    t, s = p.tensors, p.cfg.slope
    x = i
    for k in range(len(p.cfg.anet_channels)):
        x = ops.leaky(ops.conv(x, t[f"enc.{k}.w"], t[f"enc.{k}.b"], stride=2), s)
    x = F.adaptive_avg_pool2d(x, 1)
    x = F.conv2d(x, t["out.w"], t["out.b"])
    return _finite(torch.sigmoid(x.flatten(1)), "ANet")
