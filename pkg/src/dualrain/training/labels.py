"""Rain-pixel detection and atmosphere-light labels from the low-transmission limit.

Where a rain pixel is (nearly) opaque, ``Ts + Tv ~ 0`` and the observed colour
equals the atmosphere light, so the brightest rain pixel serves as the label.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import NoRainPixels

LUMA = np.array([0.299, 0.587, 0.114])


def luminance(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) @ LUMA


def detect_rain_pixels(img: np.ndarray, mask: np.ndarray | None = None,
                       percentile: float = 99.5, contrast: float = 0.1,
                       window: int = 11) -> np.ndarray:
    """Boolean rain-pixel field; a provided mask is returned as is."""
    if mask is not None:
        return np.asarray(mask, dtype=bool)
    lum = luminance(img)
    local = ndimage.uniform_filter(lum, size=window, mode="reflect")
    return (lum >= np.percentile(lum, percentile)) & (lum - local >= contrast)


def extract_atmosphere_label(img: np.ndarray, rain: np.ndarray) -> np.ndarray:
    """RGB of the most luminous rain pixel; the first in row-major order wins ties."""
    rain = np.asarray(rain, dtype=bool)
    idx = np.flatnonzero(rain)
    if idx.size == 0:
        raise NoRainPixels("no rain pixels to take the atmosphere light from")
    img = np.asarray(img, dtype=np.float64)
    lum = luminance(img).reshape(-1)
    best = idx[np.argmax(lum[idx])]
    return img.reshape(-1, 3)[best].copy()
