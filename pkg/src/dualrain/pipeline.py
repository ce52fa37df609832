"""Inference: predict maps and atmosphere light, then invert the rain model."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .metrics import EvalResult
from .networks import ParamSet, anet_forward, snet_forward, vnet_forward
from .rain_model import DEFAULT_EPS, recover_background
from .training.data import Sample, to_tensor
from .training.labels import detect_rain_pixels, extract_atmosphere_label


@dataclass
class Restoration:
    background: np.ndarray  # (H, W, 3)
    t_streak: np.ndarray  # (H, W)
    t_vapor: np.ndarray  # (H, W)
    atmosphere: np.ndarray  # (3,)
    streak_only: np.ndarray  # restoration with Tv = 0


def _multiple(snet: ParamSet, vnet: ParamSet | None) -> int:
    m = 4
    if vnet is not None:
        m = m * vnet.cfg.vnet_scale // math.gcd(m, vnet.cfg.vnet_scale)
    return m


def pad_to_multiple(img: np.ndarray, m: int) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = img.shape[:2]
    ph, pw = (-h) % m, (-w) % m
    if ph == 0 and pw == 0:
        return img, (h, w)
    mode = "reflect" if min(h, w) > max(ph, pw) else "symmetric"
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode=mode), (h, w)


def label_atmosphere(img: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Brightest rain pixel, falling back to the brightest pixel when none is detected."""
    rain = detect_rain_pixels(img, mask)
    if not rain.any():
        rain = np.ones(img.shape[:2], dtype=bool)
    return extract_atmosphere_label(img, rain)


@torch.no_grad()
def derain(img: np.ndarray, snet: ParamSet, anet: ParamSet | None = None,
           vnet: ParamSet | None = None, atmosphere=None, eps: float = DEFAULT_EPS) -> Restoration:
    """Restore one ``(H, W, 3)`` image of any size.

    The input is reflection-padded to the networks' size multiple and the
    outputs cropped back. ``atmosphere`` overrides ANet.
    """
    img = np.asarray(img, dtype=np.float64)
    padded, (h, w) = pad_to_multiple(img, _multiple(snet, vnet))
    x = to_tensor(padded)
    ts = snet_forward(x, snet)
    tv = vnet_forward(x, ts, vnet) if vnet is not None else torch.zeros_like(ts)
    if atmosphere is None:
        if anet is None:
            raise ValueError("either anet or atmosphere must be given")
        a = anet_forward(x, anet)[0].double().numpy()
    else:
        a = np.asarray(atmosphere, dtype=np.float64).reshape(3)
    ts_np = ts[0, 0].double().numpy()[:h, :w]
    tv_np = tv[0, 0].double().numpy()[:h, :w]
    j = recover_background(img, ts_np, tv_np, a, eps)
    j_s = recover_background(img, ts_np, np.zeros_like(ts_np), a, eps)
    return Restoration(j, ts_np, tv_np, a, j_s)


def evaluate_samples(samples: list[Sample], snet: ParamSet, anet: ParamSet | None = None,
                     vnet: ParamSet | None = None, atmosphere: str = "anet",
                     eps: float = DEFAULT_EPS) -> EvalResult:
    """PSNR/SSIM of restorations against clean images.

    ``atmosphere="label"`` takes A from the brightest detected rain pixel of
    each test image instead of ANet. Stored streak masks are not used here,
    since they would not exist for real inputs.
    """
    result = EvalResult()
    for s in samples:
        a = label_atmosphere(s.rainy) if atmosphere == "label" else None
        r = derain(s.rainy, snet, anet, vnet, atmosphere=a, eps=eps)
        result.add(s.name, r.background, s.clean)
    return result


def evaluate_identity(samples: list[Sample]) -> EvalResult:
    """Score the unprocessed rainy inputs (the do-nothing baseline)."""
    result = EvalResult()
    for s in samples:
        result.add(s.name, s.rainy, s.clean)
    return result
