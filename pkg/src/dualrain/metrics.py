"""PSNR and SSIM on float images in [0, 1], plus directory evaluation."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import files
from .errors import DimensionMismatch, NameMismatch, TooSmall

log = logging.getLogger(__name__)

PSNR_CAP = 100.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak 1.0; capped at 100 dB when the MSE is below 1e-10."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x, g):
    # separable correlation, then keep only windows fully inside the image
    r = len(g) // 2
    y = ndimage.correlate1d(x, g, axis=0, mode="constant")
    y = ndimage.correlate1d(y, g, axis=1, mode="constant")
    return y[r:-r, r:-r]


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """SSIM index map for single-channel images (valid windows only)."""
    g = gaussian_window()
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a**2
    sbb = _filter_valid(b * b, g) - mu_b**2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return num / den


def ssim(a, b) -> float:
    """Gaussian-window SSIM (11x11, sigma 1.5), averaged over RGB channels."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < SSIM_WIN:
        raise TooSmall(f"SSIM needs at least {SSIM_WIN}x{SSIM_WIN} pixels, got {a.shape[:2]}")
    if np.array_equal(a, b):
        return 1.0
    vals = [ssim_map(a[..., c], b[..., c]).mean() for c in range(a.shape[2])]
    return float(np.mean(vals))


@dataclass
class EvalResult:
    names: list[str] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.names)

    @property
    def mean_psnr(self) -> float:
        return math.fsum(self.psnr) / self.count if self.count else float("nan")

    @property
    def mean_ssim(self) -> float:
        return math.fsum(self.ssim) / self.count if self.count else float("nan")

    def add(self, name: str, pred, gt) -> None:
        self.names.append(name)
        self.psnr.append(psnr(pred, gt))
        self.ssim.append(ssim(pred, gt))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["filename", "psnr_db", "ssim"])
            for n, p, s in zip(self.names, self.psnr, self.ssim):
                w.writerow([n, f"{p:.6f}", f"{s:.6f}"])
            w.writerow(["mean", f"{self.mean_psnr:.6f}", f"{self.mean_ssim:.6f}"])

    def table(self) -> str:
        width = max([len("mean")] + [len(n) for n in self.names])
        lines = [f"{'filename':<{width}}  {'PSNR(dB)':>9}  {'SSIM':>7}"]
        for n, p, s in zip(self.names, self.psnr, self.ssim):
            lines.append(f"{n:<{width}}  {p:9.3f}  {s:7.4f}")
        lines.append(f"{'mean':<{width}}  {self.mean_psnr:9.3f}  {self.mean_ssim:7.4f}")
        return "\n".join(lines)


def evaluate_dirs(pred_dir, gt_dir, csv_path=None) -> EvalResult:
    """Score every image in ``pred_dir`` against the same-named file in ``gt_dir``."""
    pred = {p.name: p for p in files.list_images(pred_dir)}
    gt = {p.name: p for p in files.list_images(gt_dir)}
    common = sorted(pred.keys() & gt.keys())
    if not common:
        raise NameMismatch(f"no matching filenames between {pred_dir} and {gt_dir}")
    missing = sorted(pred.keys() ^ gt.keys())
    if missing:
        log.warning("ignoring %d unmatched files, e.g. %s", len(missing), missing[0])
    result = EvalResult()
    for name in common:
        result.add(name, files.read_image(pred[name]), files.read_image(gt[name]))
    if csv_path is not None:
        result.write_csv(Path(csv_path))
    return result
