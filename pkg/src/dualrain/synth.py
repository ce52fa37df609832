"""Synthetic rain data: streak and vapor rendering, model-consistent scenes,
and screen-blend training pairs."""
from __future__ import annotations

import logging
import math
import zipfile
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from . import files
from .errors import DimensionMismatch, EmptyCorpus, InvalidParams
from .files import DatasetManifest, ManifestEntry
from .rain_model import compose

log = logging.getLogger(__name__)

MIN_SIDE = 16


def _check_range(name, r, lo=-math.inf, hi=math.inf):
    if len(r) != 2 or r[0] > r[1]:
        raise InvalidParams(f"{name} must be an ordered pair, got {r}")
    if r[0] < lo or r[1] > hi:
        raise InvalidParams(f"{name} must lie within [{lo}, {hi}], got {r}")


@dataclass(frozen=True)
class StreakParams:
    density: float = 2.0  # expected streaks per 1000 pixels
    length_range: tuple[float, float] = (8.0, 24.0)
    width_range: tuple[float, float] = (1.0, 2.0)
    angle_range: tuple[float, float] = (-20.0, 20.0)  # degrees from vertical
    intensity_range: tuple[float, float] = (0.6, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not (self.density >= 0 and math.isfinite(self.density)):
            raise InvalidParams(f"density must be >= 0, got {self.density}")
        _check_range("length_range", self.length_range, 1.0)
        _check_range("width_range", self.width_range, 0.5)
        _check_range("angle_range", self.angle_range, -90.0, 90.0)
        _check_range("intensity_range", self.intensity_range, 0.0, 1.0)


@dataclass(frozen=True)
class VaporParams:
    octaves: int = 2
    base_scale: float = 32.0  # pixels between coarsest noise lattice points
    strength_range: tuple[float, float] = (0.2, 0.6)
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.octaves <= 3):
            raise InvalidParams(f"octaves must be in 1..3, got {self.octaves}")
        if self.base_scale < 8:
            raise InvalidParams(f"base_scale must be >= 8 pixels, got {self.base_scale}")
        _check_range("strength_range", self.strength_range, 0.0, 1.0)


@dataclass
class RainScene:
    background: np.ndarray  # (H, W, 3)
    t_streak: np.ndarray  # (H, W)
    t_vapor: np.ndarray  # (H, W)
    atmosphere: np.ndarray  # (3,)
    rainy: np.ndarray  # (H, W, 3)
    streak_mask: np.ndarray  # (H, W) bool

    def save_npz(self, path) -> None:
        # np.savez stamps zip members with the wall clock; fix it for reproducible bytes.
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
            for name in ("background", "t_streak", "t_vapor", "atmosphere", "rainy", "streak_mask"):
                info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                with zf.open(info, "w") as fh:
                    np.lib.format.write_array(fh, np.ascontiguousarray(getattr(self, name)))

    @classmethod
    def load_npz(cls, path) -> "RainScene":
        with np.load(path) as z:
            return cls(**{k: z[k] for k in z.files})


def _check_side(h, w):
    if h < MIN_SIDE or w < MIN_SIDE:
        raise InvalidParams(f"fields must be at least {MIN_SIDE}x{MIN_SIDE}, got {h}x{w}")


def render_streak_layer(h: int, w: int, p: StreakParams) -> tuple[np.ndarray, np.ndarray]:
    """Render oriented streaks; returns the layer in [0, 1] and its mask (layer > 0.1)."""
    _check_side(h, w)
    rng = np.random.default_rng(p.seed)
    n = int(rng.poisson(p.density * h * w / 1000.0)) if p.density > 0 else 0
    layer = np.zeros((h, w))
    for _ in range(n):
        cy = int(rng.integers(0, h))
        cx = int(rng.integers(0, w))
        theta = math.radians(rng.uniform(*p.angle_range))
        length = rng.uniform(*p.length_range)
        width = rng.uniform(*p.width_range)
        intensity = rng.uniform(*p.intensity_range)
        _stamp_streak(layer, cy, cx, theta, length, width, intensity)
    return layer, layer > 0.1


def _stamp_streak(layer, cy, cx, theta, length, width, intensity):
    # Anti-aliased line kernel: full value within the core, 1 px linear falloff.
    h, w = layer.shape
    r = int(math.ceil(length / 2 + width)) + 1
    y0, y1 = max(cy - r, 0), min(cy + r + 1, h)
    x0, x1 = max(cx - r, 0), min(cx + r + 1, w)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    py, px = yy - cy, xx - cx
    dy, dx = math.cos(theta), math.sin(theta)
    along = np.clip(py * dy + px * dx, -length / 2, length / 2)
    dist = np.hypot(py - along * dy, px - along * dx)
    value = np.clip((width + 1) / 2 - dist, 0.0, 1.0) * intensity
    np.maximum(layer[y0:y1, x0:x1], value, out=layer[y0:y1, x0:x1])


def screen_blend(j: np.ndarray, layer: np.ndarray) -> np.ndarray:
    """``1 - (1 - J) * (1 - layer)`` with a single-channel layer broadcast over RGB."""
    j = np.asarray(j, dtype=np.float64)
    layer = np.asarray(layer, dtype=np.float64)
    if layer.ndim == 3 and layer.shape[2] == 1:
        layer = layer[..., 0]
    if layer.shape != j.shape[:2]:
        raise DimensionMismatch(f"layer {layer.shape} does not match image {j.shape}")
    out = 1.0 - (1.0 - j) * (1.0 - layer[..., None])
    return np.clip(out, 0.0, 1.0)


def _value_noise(h, w, spacing, rng):
    gh = int(math.ceil((h - 1) / spacing)) + 2
    gw = int(math.ceil((w - 1) / spacing)) + 2
    lattice = rng.random((gh, gw))
    oy, ox = rng.random(2)  # random sub-lattice phase
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = np.stack([yy / spacing + oy, xx / spacing + ox])
    return ndimage.map_coordinates(lattice, coords, order=1, mode="nearest")


def render_vapor_map(h: int, w: int, p: VaporParams) -> np.ndarray:
    """Smooth vapor density field in ``[0, strength]`` built from value noise."""
    _check_side(h, w)
    rng = np.random.default_rng(p.seed)
    strength = rng.uniform(*p.strength_range)
    total = np.zeros((h, w))
    amp_sum = 0.0
    for k in range(p.octaves):
        amp = 0.5**k
        total += amp * _value_noise(h, w, p.base_scale / 2**k, rng)
        amp_sum += amp
    field = total / amp_sum
    sigma = max(1.0, p.base_scale / 2**p.octaves / 2)
    field = ndimage.gaussian_filter(field, sigma, mode="reflect")
    field = np.clip(0.3 + 0.7 * field, 0.0, 1.0)
    return strength * field


def make_model_scene(
    j: np.ndarray,
    sp: StreakParams,
    vp: VaporParams,
    a,
    alpha: float = 0.4,
) -> RainScene:
    """Build a scene that satisfies the formation model exactly.

    With streak layer ``s`` and vapor field ``v``: ``Ts = (1-alpha)(1-s)`` and
    ``Tv = alpha(1-v)``, so ``Ts + Tv <= 1`` always holds.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParams(f"alpha must be in (0, 1), got {alpha}")
    j = np.asarray(j, dtype=np.float64)
    h, w = j.shape[:2]
    s, mask = render_streak_layer(h, w, sp)
    v = render_vapor_map(h, w, vp)
    ts = (1.0 - alpha) * (1.0 - s)
    tv = alpha * (1.0 - v)
    a = np.asarray(a, dtype=np.float64).reshape(3)
    rainy = compose(j, ts, tv, a)
    return RainScene(j, ts, tv, a, rainy, mask)


def procedural_background(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Textured synthetic clean image: colored smooth noise plus flat shapes."""
    img = np.empty((h, w, 3))
    base = rng.uniform(0.15, 0.75, size=3)
    for c in range(3):
        coarse = _value_noise(h, w, max(h, w) / 2, rng)
        fine = _value_noise(h, w, 6.0, rng)
        img[..., c] = base[c] + 0.35 * (coarse - 0.5) + 0.12 * (fine - 0.5)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(rng.integers(2, 6))):
        color = rng.uniform(0.05, 0.85, size=3)
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        if rng.random() < 0.5:
            ry, rx = rng.uniform(h / 10, h / 3), rng.uniform(w / 10, w / 3)
            inside = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            rad = rng.uniform(min(h, w) / 10, min(h, w) / 3)
            inside = (yy - cy) ** 2 + (xx - cx) ** 2 < rad**2
        img[inside] = 0.6 * color + 0.4 * img[inside]
    return np.clip(img, 0.02, 0.95)


def sample_atmosphere(rng: np.random.Generator, lo: float = 0.75, hi: float = 1.0) -> np.ndarray:
    level = rng.uniform(lo, hi)
    tint = rng.uniform(-0.03, 0.03, size=3)
    return np.clip(level + tint, 0.0, 1.0)


def veil(j: np.ndarray, v: np.ndarray, a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(3)
    v = np.asarray(v)[..., None]
    return (1.0 - v) * j + v * a


def _crop_or_resize(img: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    h, w = img.shape[:2]
    if min(h, w) < size:
        scale = size / min(h, w)
        nh, nw = max(size, round(h * scale)), max(size, round(w * scale))
        pil = PILImage.fromarray(np.round(img * 255).astype(np.uint8))
        img = np.asarray(pil.resize((nw, nh), PILImage.BICUBIC), dtype=np.float64) / 255.0
        h, w = nh, nw
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return img[y : y + size, x : x + size]


def _entry_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _sub_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def _load_corpus(clean_dir):
    if clean_dir is None:
        return None
    paths = files.list_images(clean_dir)
    if not paths:
        raise EmptyCorpus(f"no readable images in {clean_dir}")
    return paths


def _clean_image(corpus, size, rng):
    if corpus is None:
        return procedural_background(size, size, rng)
    src = corpus[int(rng.integers(0, len(corpus)))]
    return _crop_or_resize(files.read_image(src), size, rng)


def _params_record(sp, vp, **extra):
    rec = {"streak": asdict(sp), "vapor": asdict(vp)}
    rec.update(extra)
    return rec


def make_blend_dataset(
    clean_dir,
    count: int,
    size: int,
    sp: StreakParams,
    vp: VaporParams,
    out_dir,
    seed: int,
    atmosphere_range: tuple[float, float] = (0.75, 1.0),
) -> DatasetManifest:
    """Write ``count`` rainy/clean pairs: ``screen_blend(veil(J, v), streaks)``.

    ``clean_dir=None`` draws procedural backgrounds instead of reading a corpus.
    """
    if count < 0:
        raise InvalidParams(f"count must be >= 0, got {count}")
    _check_side(size, size)
    corpus = _load_corpus(clean_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(
        generator_params=_params_record(
            sp, vp, size=size, atmosphere_range=list(atmosphere_range),
            clean_dir=None if clean_dir is None else str(clean_dir),
        ),
        global_seed=seed,
        kind="blend",
        root=out,
    )
    for i in range(count):
        rng = _entry_rng(seed, i)
        j = _clean_image(corpus, size, rng)
        a = sample_atmosphere(rng, *atmosphere_range)
        layer, mask = render_streak_layer(size, size, replace(sp, seed=_sub_seed(rng)))
        v = render_vapor_map(size, size, replace(vp, seed=_sub_seed(rng)))
        rainy = screen_blend(veil(j, v, a), layer)
        stem = f"{i:05d}"
        entry = ManifestEntry(
            rainy_path=f"rainy_{stem}.png",
            clean_path=f"clean_{stem}.png",
            mask_path=f"mask_{stem}.png",
            atmosphere=[float(x) for x in a],
            seed=i,
        )
        files.write_image(out / entry.rainy_path, rainy)
        files.write_image(out / entry.clean_path, j)
        files.write_mask(out / entry.mask_path, mask)
        manifest.entries.append(entry)
    manifest.save(out / "manifest.json")
    log.info("wrote %d blend pairs to %s (seed %d)", count, out, seed)
    return manifest


def make_scene_dataset(
    clean_dir,
    count: int,
    size: int,
    sp: StreakParams,
    vp: VaporParams,
    out_dir,
    seed: int,
    alpha: float = 0.4,
    atmosphere_range: tuple[float, float] = (0.75, 1.0),
) -> DatasetManifest:
    """Write model-consistent scenes with ground-truth maps (PNG plus exact ``.npz``)."""
    if count < 0:
        raise InvalidParams(f"count must be >= 0, got {count}")
    if not 0.0 < alpha < 1.0:
        raise InvalidParams(f"alpha must be in (0, 1), got {alpha}")
    _check_side(size, size)
    corpus = _load_corpus(clean_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(
        generator_params=_params_record(
            sp, vp, size=size, alpha=alpha, atmosphere_range=list(atmosphere_range),
            clean_dir=None if clean_dir is None else str(clean_dir),
        ),
        global_seed=seed,
        kind="scenes",
        root=out,
    )
    for i in range(count):
        rng = _entry_rng(seed, i)
        j = _clean_image(corpus, size, rng)
        a = sample_atmosphere(rng, *atmosphere_range)
        scene = make_model_scene(
            j, replace(sp, seed=_sub_seed(rng)), replace(vp, seed=_sub_seed(rng)), a, alpha
        )
        stem = f"{i:05d}"
        entry = ManifestEntry(
            rainy_path=f"rainy_{stem}.png",
            clean_path=f"clean_{stem}.png",
            mask_path=f"mask_{stem}.png",
            ts_path=f"ts_{stem}.png",
            tv_path=f"tv_{stem}.png",
            scene_path=f"scene_{stem}.npz",
            atmosphere=[float(x) for x in a],
            seed=i,
        )
        files.write_image(out / entry.rainy_path, scene.rainy)
        files.write_image(out / entry.clean_path, scene.background)
        files.write_mask(out / entry.mask_path, scene.streak_mask)
        files.write_map(out / entry.ts_path, scene.t_streak)
        files.write_map(out / entry.tv_path, scene.t_vapor)
        scene.save_npz(out / entry.scene_path)
        manifest.entries.append(entry)
    manifest.save(out / "manifest.json")
    log.info("wrote %d model scenes to %s (seed %d)", count, out, seed)
    return manifest
