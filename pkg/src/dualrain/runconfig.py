"""Plain-text run configuration: one ``key = value`` per line.

Keys carry a section prefix naming the type they configure::

    # comments and blank lines are ignored
    train.epochs_snet = 40
    train.seed = 3
    arch.base_channels = 12
    arch.spp_levels = 1, 2, 4, 8
    streak.density = 2.5
    vapor.strength_range = 0.4, 0.8
    paths.data = data/train/manifest.json

Sections: ``train`` (TrainConfig), ``arch`` (ArchConfig), ``streak``
(StreakParams), ``vapor`` (VaporParams) and ``paths`` (``data``,
``test_data``, ``clean_dir``, ``out``, ``checkpoint``). Tuple values are comma
separated. Unknown keys and invalid values raise ``InvalidParams``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import DualRainError, InvalidParams
from .networks import ArchConfig
from .synth import StreakParams, VaporParams
from .training import TrainConfig

PATH_KEYS = ("data", "test_data", "clean_dir", "out", "checkpoint")
SECTIONS = {"train": TrainConfig, "arch": ArchConfig, "streak": StreakParams, "vapor": VaporParams}


def _parse_scalar(text: str, like):
    if isinstance(like, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def _parse_value(text: str, default):
    if isinstance(default, tuple):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        like = default[0] if default else 0.0
        return tuple(_parse_scalar(p, like) for p in parts)
    return _parse_scalar(text, default)


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    streak: StreakParams = field(default_factory=StreakParams)
    vapor: VaporParams = field(default_factory=VaporParams)
    paths: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        updates: dict[str, dict] = {name: {} for name in SECTIONS}
        paths = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            where = f"{source}:{lineno}"
            if not sep or not key:
                raise InvalidParams(f"{where}: expected 'key = value', got {raw.strip()!r}")
            section, _, name = key.partition(".")
            if section == "paths" and name in PATH_KEYS:
                paths[name] = value
                continue
            kind = SECTIONS.get(section)
            defaults = {f.name: f for f in fields(kind)} if kind else {}
            if name not in defaults:
                raise InvalidParams(f"{where}: unknown key {key!r}")
            f = defaults[name]
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            try:
                updates[section][name] = _parse_value(value, default)
            except ValueError as exc:
                raise InvalidParams(f"{where}: bad value for {key}: {exc}") from None
        built = {}
        for section, kind in SECTIONS.items():
            try:
                built[section] = kind(**updates[section])
            except DualRainError as exc:
                raise InvalidParams(f"{source}: [{section}] {exc}") from None
        return cls(paths=paths, **built)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        return cls.parse(path.read_text(), str(path))

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=seed))
