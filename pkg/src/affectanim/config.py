"""Run configuration (TOML, with JSON accepted)."""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from affectanim.audio import FrontendConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class NetConfig:
    widths: tuple = ()
    fc: tuple = ()
    dropout: float = 0.5
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3


def _dern_default() -> NetConfig:
    return NetConfig(widths=(32, 64, 128), fc=(256,), epochs=200)


def _dsrn_default() -> NetConfig:
    return NetConfig(widths=(32, 64, 128, 128), fc=(1024, 500), epochs=200)


@dataclass
class RunConfig:
    manifest: str | None = None
    work_dir: str = "work"
    ka: int = 15
    kv: int = 5
    n_params: int = 18
    seed: int = 0
    fold: int = 0
    n_folds: int = 5
    test_fraction: float = 0.1
    speaker_holdout: bool = False
    threshold: float = 0.65
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    dern: NetConfig = field(default_factory=_dern_default)
    dsrn: NetConfig = field(default_factory=_dsrn_default)

    def __post_init__(self):
        for name in ("ka", "kv"):
            v = getattr(self, name)
            if v <= 0 or v % 2 == 0:
                raise ValueError(f"{name} must be a positive odd integer, got {v}")
        if not 0 <= self.fold < self.n_folds:
            raise ValueError(f"fold {self.fold} outside 0..{self.n_folds - 1}")

    @property
    def work(self) -> Path:
        return Path(self.work_dir)

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        if k in ("widths", "fc") and isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    return cls(**kwargs)


def config_from_dict(data: dict, base_dir=None) -> RunConfig:
    data = dict(data)
    nested = {
        "frontend": _build(FrontendConfig, data.pop("frontend", {})),
        "dern": _build(NetConfig, {**asdict(_dern_default()), **data.pop("dern", {})}),
        "dsrn": _build(NetConfig, {**asdict(_dsrn_default()), **data.pop("dsrn", {})}),
    }
    cfg = _build(RunConfig, {**data, **nested})
    if base_dir is not None:
        base = Path(base_dir)
        if cfg.manifest and not Path(cfg.manifest).is_absolute():
            cfg.manifest = str(base / cfg.manifest)
        if not Path(cfg.work_dir).is_absolute():
            cfg.work_dir = str(base / cfg.work_dir)
    return cfg


def load_config(path) -> RunConfig:
    """Read a ``.toml`` or ``.json`` config; relative paths resolve against its directory."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
    else:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    return config_from_dict(data, path.parent)
