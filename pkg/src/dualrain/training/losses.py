"""Training losses. Norms are normalized per element so the weights stay
balanced across patch sizes."""
from __future__ import annotations

import torch

from ..errors import ShapeMismatch


def _same(a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")


def loss_anet(pred: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    """Batch mean of the squared Euclidean distance between 3-vectors."""
    _same(pred, label)
    return ((pred - label) ** 2).sum(dim=1).mean()


def loss_snet(j_hat: torch.Tensor, j: torch.Tensor) -> torch.Tensor:
    _same(j_hat, j)
    return ((j_hat - j) ** 2).mean()


def image_gradient(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward differences; the last column (dx) and last row (dy) are zero."""
    if x.ndim != 4 or x.shape[-1] < 2 or x.shape[-2] < 2:
        raise ShapeMismatch(f"expected (B, C, H, W) with H, W >= 2, got {tuple(x.shape)}")
    dx = torch.zeros_like(x)
    dy = torch.zeros_like(x)
    dx[..., :, :-1] = x[..., :, 1:] - x[..., :, :-1]
    dy[..., :-1, :] = x[..., 1:, :] - x[..., :-1, :]
    return dx, dy


def loss_total(j_hat: torch.Tensor, j: torch.Tensor, lambda1: float = 0.01,
               lambda2: float = 1.0) -> torch.Tensor:
    """``lambda1 * mean|grad diff|^2 + lambda2 * mean|diff|``."""
    _same(j_hat, j)
    gx_hat, gy_hat = image_gradient(j_hat)
    gx, gy = image_gradient(j)
    grad_term = 0.5 * (((gx_hat - gx) ** 2).mean() + ((gy_hat - gy) ** 2).mean())
    return lambda1 * grad_term + lambda2 * (j_hat - j).abs().mean()
