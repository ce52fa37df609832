"""Dual-transmission rain formation model and its inversion.

A rainy image is formed from the background ``J``, a streak transmission
``Ts``, a vapor transmission ``Tv`` and a global atmosphere light ``A``::

    I = (Ts + Tv) * J + (1 - Ts - Tv) * A

Images are ``(H, W, 3)`` float arrays, transmission maps ``(H, W)`` (a
trailing singleton channel is accepted) and ``A`` a length-3 vector.
"""
from __future__ import annotations

import numpy as np
import torch

from .errors import DimensionMismatch, InvalidParams, TransmissionRangeViolation

DEFAULT_EPS = 0.05
_RANGE_TOL = 1e-9


def _as_map(t, name: str) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 3 and t.shape[2] == 1:
        t = t[..., 0]
    if t.ndim != 2:
        raise DimensionMismatch(f"{name} must be (H, W) or (H, W, 1), got {t.shape}")
    return t


def _as_image(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be (H, W, 3), got {x.shape}")
    return x


def _as_atmosphere(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if a.shape != (3,):
        raise DimensionMismatch(f"atmosphere light must have 3 channels, got {a.shape}")
    return a


def _check_same_hw(*arrays):
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise DimensionMismatch(f"spatial dimensions differ: {sorted(shapes)}")


def effective_transmission(ts, tv, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Per-pixel ``clamp(Ts + Tv, eps, 1)``."""
    ts, tv = _as_map(ts, "Ts"), _as_map(tv, "Tv")
    _check_same_hw(ts, tv)
    return np.clip(ts + tv, eps, 1.0)


def compose(j, ts, tv, a) -> np.ndarray:
    """Render a rainy image from background, transmissions and atmosphere light."""
    j = _as_image(j, "J")
    ts, tv = _as_map(ts, "Ts"), _as_map(tv, "Tv")
    a = _as_atmosphere(a)
    _check_same_hw(j, ts, tv)
    t = ts + tv
    if np.any(t > 1.0 + _RANGE_TOL) or np.any(ts < -_RANGE_TOL) or np.any(tv < -_RANGE_TOL):
        raise TransmissionRangeViolation(
            f"Ts + Tv must lie in [0, 1]; got range [{t.min():.6g}, {t.max():.6g}]"
        )
    t = np.clip(t, 0.0, 1.0)[..., None]
    out = t * j + (1.0 - t) * a
    return np.clip(out, 0.0, 1.0)


def recover_background(i, ts, tv, a, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Invert the formation model with the total transmission clamped to ``[eps, 1]``."""
    if not 0.0 < eps <= 0.5:
        raise InvalidParams(f"eps must be in (0, 0.5], got {eps}")
    i = _as_image(i, "I")
    a = _as_atmosphere(a)
    t = effective_transmission(ts, tv, eps)
    _check_same_hw(i, t)
    t = t[..., None]
    j = (i - (1.0 - t) * a) / t
    return np.clip(j, 0.0, 1.0)


def recover_background_tensor(
    i: torch.Tensor,
    ts: torch.Tensor,
    tv: torch.Tensor | None,
    a: torch.Tensor,
    eps: float = DEFAULT_EPS,
    clamp_output: bool = True,
) -> torch.Tensor:
    """Batched, differentiable inversion on NCHW tensors.

    ``i`` is ``(B, 3, H, W)``, ``ts``/``tv`` are ``(B, 1, H, W)`` and ``a`` is
    ``(B, 3)``. ``tv=None`` means no vapor term.
    """
    if i.shape[1] != 3 or ts.shape[1] != 1 or ts.shape[-2:] != i.shape[-2:]:
        raise DimensionMismatch(f"incompatible shapes I={tuple(i.shape)} Ts={tuple(ts.shape)}")
    t = ts if tv is None else ts + tv
    t = t.clamp(eps, 1.0)
    a = a.reshape(a.shape[0], 3, 1, 1)
    j = (i - (1.0 - t) * a) / t
    if clamp_output:
        j = j.clamp(0.0, 1.0)
    return j
