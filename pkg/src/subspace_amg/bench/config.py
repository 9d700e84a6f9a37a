"""Experiment configuration: an INI-style file plus ``key=value`` overrides."""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError
from ..fem import Family
from ..learn.mlp import FULL_HIDDEN, SMALL_HIDDEN

METHODS = ("nlss", "subspace", "svd", "sa")
SECTION = "experiment"
TEST_SEED_OFFSET = 1_000_000


@dataclass
class ExperimentConfig:
    family: str = "diffusion"
    N: int = 9
    K: int = 32
    s1: int = 10
    jitter: float = 0.25
    ranks: list = field(default_factory=lambda: [4, 8, 16, 24, 32])
    train_size: int = 1000
    test_size: int = 100
    seed: int = 0
    test_seed_offset: int = TEST_SEED_OFFSET
    methods: list = field(default_factory=lambda: list(METHODS))
    delta: float = 1e-6
    nu1: int = 5
    nu2: int = 5
    omega: float = 0.66
    theta: float = 0.25
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 1e-3
    hidden: str = "auto"
    train_seed: int = 0
    bench_ranks: list = field(default_factory=lambda: [16])
    bench_instances: int = 20
    ablate_N: list = field(default_factory=lambda: [8, 16, 24])
    ablate_instances: int = 10
    ablate_train_size: int = 100
    ablate_epochs: int = 20
    out_dir: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if "," in str(self.family):
            raise ConfigError("a corpus holds exactly one PDE family")
        try:
            self.family = Family.parse(self.family).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.N < 2 or self.K < 1 or self.s1 < 0:
            raise ConfigError("need N >= 2, K >= 1, s1 >= 0")
        if not 0.0 <= self.jitter < 0.5:
            raise ConfigError("jitter must lie in [0, 0.5)")
        bad = [r for r in list(self.ranks) + list(self.bench_ranks) if not 1 <= r <= self.K]
        if bad:
            raise ConfigError(f"ranks {bad} outside [1, K={self.K}]")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")
        if self.train_size < 0 or self.test_size < 0:
            raise ConfigError("corpus sizes must be nonnegative")
        if self.test_seed_offset < self.train_size:
            raise ConfigError("train and test seed ranges overlap")
        if self.delta <= 0 or self.nu1 < 0 or self.nu2 < 0:
            raise ConfigError("invalid solver parameters")
        if self.hidden not in ("auto", "small", "full"):
            raise ConfigError("hidden must be auto, small or full")

    def hidden_layers(self) -> tuple:
        if self.hidden == "small" or (self.hidden == "auto" and self.N < 32):
            return SMALL_HIDDEN
        return FULL_HIDDEN

    def train_seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.train_size)]

    def test_seeds(self) -> list[int]:
        return [self.seed + self.test_seed_offset + i for i in range(self.test_size)]

    def to_dict(self) -> dict:
        return asdict(self)


def _canonical(name: str) -> str:
    """Config keys are case-insensitive (``N`` and ``n`` are the same key)."""
    names = {f.name.lower(): f.name for f in fields(ExperimentConfig)}
    key = name.strip().lower().replace("-", "_")
    if key not in names:
        raise ConfigError(f"unknown config key {name!r}")
    return names[key]


def _coerce(name: str, text: str):
    default = getattr(ExperimentConfig(), name)
    text = text.strip()
    try:
        if isinstance(default, list):
            items = [t.strip() for t in text.split(",") if t.strip()]
            return [int(t) for t in items] if name != "methods" else [t.lower() for t in items]
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc
    return text


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Read ``[experiment]`` from ``path`` (optional), then apply overrides.

    ``overrides`` is a mapping or an iterable of ``"key=value"`` strings.
    """
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        if parser.has_section(SECTION):
            values.update(parser[SECTION])
    if overrides:
        if isinstance(overrides, dict):
            values.update({k: str(v) for k, v in overrides.items()})
        else:
            for item in overrides:
                key, sep, value = item.partition("=")
                if not sep:
                    raise ConfigError(f"override {item!r} is not key=value")
                values[key.strip()] = value
    resolved = {}
    for k, v in values.items():
        key = _canonical(k)
        resolved[key] = _coerce(key, v)
    return ExperimentConfig(**resolved)


def save_config(path, config: ExperimentConfig) -> None:
    parser = configparser.ConfigParser()
    parser[SECTION] = {k: ",".join(map(str, v)) if isinstance(v, list) else str(v)
                       for k, v in config.to_dict().items()}
    with open(Path(path), "w") as fh:
        parser.write(fh)
