"""PNG and manifest I/O.

Images are stored as 8-bit RGB PNG, transmission maps as 16-bit grayscale
PNG, masks as 8-bit grayscale PNG (0/255). Arrays in memory are float64 in
``[0, 1]``.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def read_image(path) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_image(path, img: np.ndarray) -> None:
    arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    PILImage.fromarray(arr, mode="RGB").save(path, optimize=False)


def read_map(path) -> np.ndarray:
    with PILImage.open(path) as im:
        peak = 65535.0 if im.mode.startswith("I") else 255.0
        arr = np.asarray(im if im.mode.startswith("I") else im.convert("L"), dtype=np.float64)
    return arr / peak


def write_map(path, t: np.ndarray) -> None:
    arr = np.round(np.clip(t, 0.0, 1.0) * 65535.0).astype(np.uint16)
    PILImage.fromarray(arr).save(path, optimize=False)


def read_mask(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_mask(path, mask: np.ndarray) -> None:
    PILImage.fromarray((np.asarray(mask, dtype=bool) * 255).astype(np.uint8), mode="L").save(path)


def list_images(directory) -> list[Path]:
    d = Path(directory)
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass
class ManifestEntry:
    rainy_path: str
    clean_path: str
    atmosphere: list[float]
    seed: int
    mask_path: str | None = None
    ts_path: str | None = None
    tv_path: str | None = None
    scene_path: str | None = None


@dataclass
class DatasetManifest:
    """Index of a generated dataset. Entry paths are relative to ``root``."""

    entries: list[ManifestEntry] = field(default_factory=list)
    generator_params: dict = field(default_factory=dict)
    global_seed: int = 0
    kind: str = "blend"
    root: Path | None = None

    def resolve(self, rel: str | None) -> Path | None:
        if rel is None:
            return None
        return (self.root or Path(".")) / rel

    def to_json(self) -> str:
        body = {
            "kind": self.kind,
            "global_seed": self.global_seed,
            "generator_params": self.generator_params,
            "entries": [asdict(e) for e in self.entries],
        }
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".partial")
        tmp.write_text(self.to_json())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        body = json.loads(path.read_text())
        entries = [ManifestEntry(**e) for e in body.get("entries", [])]
        return cls(
            entries=entries,
            generator_params=body.get("generator_params", {}),
            global_seed=int(body.get("global_seed", 0)),
            kind=body.get("kind", "blend"),
            root=path.parent,
        )
