"""In-memory training samples and seeded batch assembly."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .. import files
from ..errors import InvalidParams
from ..files import DatasetManifest
from .config import TrainConfig


@dataclass
class Sample:
    name: str
    rainy: np.ndarray  # (H, W, 3) float32
    clean: np.ndarray
    mask: np.ndarray | None = None


def load_samples(data) -> list[Sample]:
    """Accept a manifest, a path to one, or an already loaded sample list."""
    if isinstance(data, list):
        return data
    if not isinstance(data, DatasetManifest):
        data = DatasetManifest.load(data)
    out = []
    for e in data.entries:
        mask = files.read_mask(data.resolve(e.mask_path)) if e.mask_path else None
        out.append(Sample(
            name=e.rainy_path,
            rainy=files.read_image(data.resolve(e.rainy_path)).astype(np.float32),
            clean=files.read_image(data.resolve(e.clean_path)).astype(np.float32),
            mask=mask,
        ))
    return out


def to_tensor(img: np.ndarray) -> torch.Tensor:
    """(H, W, 3) array -> (1, 3, H, W) float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(np.asarray(img, dtype=np.float32).transpose(2, 0, 1)))[None]


def epoch_rng(seed: int, stage: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stage, epoch]))


def iterate_batches(samples: list[Sample], indices: list[int], cfg: TrainConfig,
                    stage: int, epoch: int):
    """Yield ``(idx, rainy, clean)`` batches of random crops in a seed-fixed order."""
    rng = epoch_rng(cfg.seed, stage, epoch)
    order = [indices[k] for k in rng.permutation(len(indices))]
    p = cfg.patch
    for start in range(0, len(order), cfg.batch):
        idx = order[start : start + cfg.batch]
        rainy, clean = [], []
        for k in idx:
            s = samples[k]
            h, w = s.rainy.shape[:2]
            if h < p or w < p:
                raise InvalidParams(f"sample {s.name} ({h}x{w}) is smaller than patch {p}")
            y = int(rng.integers(0, h - p + 1))
            x = int(rng.integers(0, w - p + 1))
            r = s.rainy[y : y + p, x : x + p]
            c = s.clean[y : y + p, x : x + p]
            if cfg.flips and rng.random() < 0.5:
                r, c = r[:, ::-1], c[:, ::-1]
            rainy.append(r.transpose(2, 0, 1))
            clean.append(c.transpose(2, 0, 1))
        yield idx, torch.from_numpy(np.ascontiguousarray(np.stack(rainy))), \
            torch.from_numpy(np.ascontiguousarray(np.stack(clean)))
