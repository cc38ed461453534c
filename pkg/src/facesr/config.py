"""Run configuration and its ``key = value`` text format."""

from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .generator import GeneratorConfig
from .losses import LossWeights

# fields that locate files on disk; kept out of checkpoint records
PATH_FIELDS = ("train_manifest", "test_manifest", "out_dir")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # optimizer
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 64
    # schedule
    stage1_epochs: int = 200
    stage2_epochs: int = 100
    checkpoint_every: int = 10
    # loss weights
    lambda1: float = 100.0
    lambda2: float = 10.0
    # model
    base_channels: int = 32
    disc_channels: int = 32
    encoder_depth: int = 7
    lr_size: int = 32
    noise_enabled: bool = False
    noise_sigma: float = 0.05
    use_head: bool = True
    use_global: bool = True
    use_local: bool = True
    smooth: bool = False
    extractor: str = "auto"
    extractor_seed: int = 0
    seed: int = 0
    # paths
    train_manifest: str = ""
    test_manifest: str = ""
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {getattr(self, name)}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ConfigError("stage lengths must be non-negative")
        if self.use_local and not self.use_global:
            raise ConfigError("use_local requires use_global")
        try:
            LossWeights(self.lambda1, self.lambda2)
            self.generator_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2)

    @property
    def total_epochs(self) -> int:
        return self.stage1_epochs + self.stage2_epochs

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            base_channels=self.base_channels,
            encoder_depth=self.encoder_depth,
            noise_enabled=self.noise_enabled,
            noise_sigma=self.noise_sigma,
            seed=self.seed,
            lr_size=self.lr_size,
            use_head=self.use_head,
            smooth=self.smooth,
        )

    def to_dict(self, paths: bool = True) -> dict:
        d = asdict(self)
        if not paths:
            for k in PATH_FIELDS:
                d.pop(k)
        return d

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def field_types() -> dict[str, str]:
    return {f.name: f.type for f in fields(TrainConfig)}


def coerce(name: str, raw: str):
    kind = field_types()[name]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw.strip("\"'")


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines (``#`` comments) into typed overrides."""
    types = field_types()
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown field {key!r}")
        try:
            out[key] = coerce(key, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: field {key!r}: {exc}") from exc
    return out


def load_config(path: str | Path | None, **overrides) -> TrainConfig:
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values = parse_config(path.read_text(), str(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n" for k, v in cfg.to_dict().items())
