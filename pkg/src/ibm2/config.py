"""Run configuration: JSON schema (``config_version: 1``), mode-dependent
defaults and conversion into trainer/search configs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .linear import TrainConfig
from .noise import SAMPLING_MODES
from .search import SearchConfig

CONFIG_VERSION = 1

PFSL, FSL = "pfsl", "fsl"
BASELINE, IBM2 = "baseline", "ibm2"
LR_POLICIES = ("fixed", "grid", "probe")

PFSL_LR_GRID = (0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0)
FSL_LR_GRID = (0.00001, 0.0001, 0.001, 0.01, 0.1, 1.0)
DEFAULT_LR = {BASELINE: 0.005, IBM2: 1.0}

_MODE_DEFAULTS = {
    PFSL: {"t_init": 0.9, "search_epochs": 20, "epochs": 100, "runs": 3, "shots": [1]},
    FSL: {"t_init": 0.999, "search_epochs": 50, "epochs": 200, "runs": 5, "shots": [1, 5]},
}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class LrPolicy:
    policy: str = "fixed"
    value: float | None = None  # fixed policy: None means the method default
    candidates: list[float] | None = None
    probe_episodes: int = 20


@dataclass
class TrainerSection:
    batch_size: int = 256
    epochs: int | None = None
    label_smoothing: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class SearchSection:
    right_init: float = 10.0
    tol: float = 0.05
    epochs: int | None = None
    lr: float = 1.0
    batch_size: int | None = None
    warm_start: bool = True
    resample_per_step: bool = False


@dataclass
class RunConfig:
    mode: str = PFSL
    method: str = IBM2
    sampling: str = "ellipsoidal"
    R: int = 200
    t_init: float | None = None
    shots: list[int] | None = None
    way: int = 5
    query: int = 15
    episodes: int = 500
    runs: int | None = None
    seed: int = 0
    data: dict = field(default_factory=lambda: {"preset": "iso", "seed": 0})
    lr: LrPolicy = field(default_factory=LrPolicy)
    trainer: TrainerSection = field(default_factory=TrainerSection)
    search: SearchSection = field(default_factory=SearchSection)
    config_version: int = CONFIG_VERSION

    # resolved views -------------------------------------------------------
    def resolved(self) -> "RunConfig":
        """Copy with every mode-dependent default filled in."""
        d = _MODE_DEFAULTS[self.mode]
        lr = replace(self.lr)
        if lr.candidates is None:
            lr.candidates = list(PFSL_LR_GRID if self.mode == PFSL else FSL_LR_GRID)
        return replace(
            self,
            t_init=d["t_init"] if self.t_init is None else self.t_init,
            shots=list(d["shots"] if self.shots is None else self.shots),
            runs=d["runs"] if self.runs is None else self.runs,
            lr=lr,
            trainer=replace(self.trainer, epochs=self.trainer.epochs or d["epochs"]),
            search=replace(
                self.search,
                epochs=self.search.epochs or d["search_epochs"],
                batch_size=self.search.batch_size or self.trainer.batch_size,
            ),
        )

    def train_config(self, lr: float, seed: int) -> TrainConfig:
        t = self.trainer
        return TrainConfig(
            init_lr=lr, batch_size=t.batch_size, epochs=t.epochs or _MODE_DEFAULTS[self.mode]["epochs"],
            label_smoothing=t.label_smoothing, beta1=t.beta1, beta2=t.beta2,
            adam_eps=t.adam_eps, seed=seed,
        )

    def search_train_config(self, seed: int) -> TrainConfig:
        s = self.search
        return self.train_config(s.lr, seed).replace(
            epochs=s.epochs or _MODE_DEFAULTS[self.mode]["search_epochs"],
            batch_size=s.batch_size or self.trainer.batch_size,
        )

    def search_config(self, seed: int) -> SearchConfig:
        s = self.search
        t = self.t_init if self.t_init is not None else _MODE_DEFAULTS[self.mode]["t_init"]
        return SearchConfig(
            threshold=t, right_init=s.right_init, tol=s.tol, replicas=self.R,
            epochs=s.epochs or _MODE_DEFAULTS[self.mode]["search_epochs"], lr=s.lr,
            warm_start=s.warm_start, resample_per_step=s.resample_per_step, seed=seed,
        )

    def default_lr(self, method: str | None = None) -> float:
        method = method or self.method
        if self.lr.policy == "fixed" and self.lr.value is not None and method == self.method:
            return self.lr.value
        return DEFAULT_LR[method]

    def validate(self) -> "RunConfig":
        try:
            return self._validate()
        except TypeError as exc:
            # wrong value types, e.g. "R": "200"
            raise ConfigError(f"bad value type: {exc}") from exc

    def _validate(self) -> "RunConfig":
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(f"config_version {self.config_version} unsupported (expected {CONFIG_VERSION})")
        if self.mode not in (PFSL, FSL):
            raise ConfigError(f"mode must be pfsl or fsl, got {self.mode!r}")
        if self.method not in (BASELINE, IBM2):
            raise ConfigError(f"method must be baseline or ibm2, got {self.method!r}")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}")
        if self.lr.policy not in LR_POLICIES:
            raise ConfigError(f"lr policy must be one of {LR_POLICIES}, got {self.lr.policy!r}")
        if self.R < 1:
            raise ConfigError("R must be >= 1")
        if self.shots is not None and (not self.shots or min(self.shots) < 1):
            raise ConfigError("shots must be a non-empty list of positive integers")
        if self.way < 1 or self.query < 1 or self.episodes < 1:
            raise ConfigError("way, query and episodes must be >= 1")
        if self.runs is not None and self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.lr.probe_episodes < 1:
            raise ConfigError("probe_episodes must be >= 1")
        if self.lr.candidates is not None and not self.lr.candidates:
            raise ConfigError("lr candidates must be non-empty")
        if not isinstance(self.data, dict) or not ({"preset", "pool"} & set(self.data)):
            raise ConfigError("data must name a 'preset' or a 'pool' file")
        if self.mode == PFSL and "pool" in self.data and "test" not in self.data:
            raise ConfigError("pfsl mode needs data.test alongside data.pool")
        try:
            self.search_config(0)
            self.train_config(self.default_lr(), 0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    nested = {
        "lr": _section(LrPolicy, raw.pop("lr", None), "lr"),
        "trainer": _section(TrainerSection, raw.pop("trainer", None), "trainer"),
        "search": _section(SearchSection, raw.pop("search", None), "search"),
    }
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = RunConfig(**raw, **nested)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = config_from_dict(raw)
    base = Path(path).resolve().parent
    for key in ("pool", "test"):
        if key in cfg.data and not Path(cfg.data[key]).is_absolute():
            cfg.data[key] = str(base / cfg.data[key])
    return cfg
