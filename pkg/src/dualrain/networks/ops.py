"""Differentiable building blocks on NCHW tensors.

Unit parameters are plain mappings from local names (``pw1.w``, ``dw1.w``,
...) to tensors, so the same code serves full networks and isolated tests.
"""
from __future__ import annotations

from collections.abc import Mapping, Sequence

import torch
import torch.nn.functional as F

from ..errors import IndivisibleChannels, LevelTooLarge, ShapeMismatch

Params = Mapping[str, torch.Tensor]


def channel_shuffle(x: torch.Tensor, g: int) -> torch.Tensor:
    """Output channel ``i`` reads input channel ``(i % g) * (C // g) + i // g``."""
    b, c, h, w = x.shape
    if g < 1 or c % g:
        raise IndivisibleChannels(f"{g} groups do not divide {c} channels")
    return x.reshape(b, g, c // g, h, w).transpose(1, 2).reshape(b, c, h, w)


def shuffle_index(c: int, g: int) -> list[int]:
    """Source channel for each output channel of ``channel_shuffle``."""
    if g < 1 or c % g:
        raise IndivisibleChannels(f"{g} groups do not divide {c} channels")
    return [(i % g) * (c // g) + i // g for i in range(c)]


def pad_reflect(x: torch.Tensor, pad: int) -> torch.Tensor:
    if pad == 0:
        return x
    # reflect needs more than `pad` pixels per side; tiny maps fall back to replicate
    mode = "reflect" if min(x.shape[-2:]) > pad else "replicate"
    return F.pad(x, (pad, pad, pad, pad), mode=mode)


def conv(x, w, b=None, stride=1, groups=1):
    """Convolution with reflective 'same' padding for odd kernels."""
    k = w.shape[-1]
    return F.conv2d(pad_reflect(x, k // 2), w, b, stride=stride, groups=groups)


def sdw_conv(x: torch.Tensor, k: torch.Tensor, stride: int = 1) -> torch.Tensor:
    """Depthwise 3x3 convolution with symmetric (reflective) 1-pixel padding."""
    c = x.shape[1]
    if k.shape != (c, 1, 3, 3):
        raise ShapeMismatch(f"depthwise kernel must be {(c, 1, 3, 3)}, got {tuple(k.shape)}")
    if stride not in (1, 2):
        raise ShapeMismatch(f"stride must be 1 or 2, got {stride}")
    return F.conv2d(pad_reflect(x, 1), k, stride=stride, groups=c)


def leaky(x, slope):
    return F.leaky_relu(x, slope)


def _check_unit(x, p: Params, g: int):
    c = x.shape[1]
    if c % g:
        raise IndivisibleChannels(f"{g} groups do not divide {c} channels")
    if p["pw1.w"].shape[1] * g != c or p["pw3.w"].shape[0] != c:
        raise ShapeMismatch(
            f"unit weights {tuple(p['pw1.w'].shape)}/{tuple(p['pw3.w'].shape)} "
            f"do not fit {c} input channels with {g} groups"
        )


def _unit_branch(x, p: Params, g: int, slope: float, stride: int):
    y = F.conv2d(x, p["pw1.w"], p["pw1.b"], groups=g)
    y = channel_shuffle(leaky(y, slope), g)
    y = sdw_conv(y, p["dw1.w"], stride)
    y = F.conv2d(y, p["pw2.w"], p["pw2.b"], groups=g)
    y = channel_shuffle(leaky(y, slope), g)
    y = sdw_conv(y, p["dw2.w"], 1)
    return F.conv2d(y, p["pw3.w"], p["pw3.b"], groups=g)


def shuffle_unit_add(x: torch.Tensor, p: Params, g: int, slope: float = 0.1) -> torch.Tensor:
    """Residual shuffle unit; keeps shape."""
    _check_unit(x, p, g)
    return x + _unit_branch(x, p, g, slope, 1)


def shuffle_unit_cat(x: torch.Tensor, p: Params, g: int, slope: float = 0.1) -> torch.Tensor:
    """Downsampling shuffle unit: stride-2 branch concatenated with a pooled shortcut."""
    _check_unit(x, p, g)
    main = _unit_branch(x, p, g, slope, 2)
    short = F.avg_pool2d(x, 3, stride=2, padding=1, count_include_pad=False)
    return torch.cat([main, short], dim=1)


def spp(x: torch.Tensor, levels: Sequence[int], p: Params) -> torch.Tensor:
    """Spatial pyramid pooling; level ``l`` uses ``p['l{i}.w']``/``p['l{i}.b']``.

    Output has ``C + len(levels) * C'`` channels at the input resolution.
    """
    h, w = x.shape[-2:]
    if max(levels) > min(h, w):
        raise LevelTooLarge(f"pool level {max(levels)} exceeds input size {h}x{w}")
    feats = [x]
    for i, level in enumerate(levels):
        y = F.adaptive_avg_pool2d(x, level)
        y = F.conv2d(y, p[f"l{i}.w"], p[f"l{i}.b"])
        feats.append(F.interpolate(y, size=(h, w), mode="bilinear", align_corners=False))
    return torch.cat(feats, dim=1)


def upsample2(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def broadcast_atmosphere(a: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """Replicate a ``(B, 3)`` atmosphere light over an ``h x w`` grid."""
    if a.ndim != 2 or a.shape[1] != 3:
        raise ShapeMismatch(f"atmosphere light must be (B, 3), got {tuple(a.shape)}")
    return a[:, :, None, None].expand(a.shape[0], 3, h, w)
