"""Declarative run configuration: one JSON file covering every module.

Unknown keys are rejected so typos fail fast; defaults match the reference
coefficients (0.8 / 0.2 / 1.0 reward weights, lam=-0.05, 5 turns, groups
of 8, KL coefficient 0).
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .dataset import BalanceFilterConfig
from .episode import EpisodeConfig
from .errors import ConfigError
from .grpo import GrpoConfig
from .rewards import RewardConfig


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    tcp_port: int = 7401
    http_port: int = 7402
    corpus_dir: Optional[str] = None
    ttl_seconds: float = 3600.0
    max_episodes: int = 1024
    step_delay_ms: int = 0
    default_T: int = 5

    def __post_init__(self):
        if self.ttl_seconds <= 0:
            raise ConfigError("ttl_seconds must be > 0")
        if self.max_episodes < 1:
            raise ConfigError("max_episodes must be >= 1")
        if self.step_delay_ms < 0:
            raise ConfigError("step_delay_ms must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    reward: RewardConfig = field(default_factory=RewardConfig)
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    balance_filter: BalanceFilterConfig = field(default_factory=BalanceFilterConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    T: int = 5


_SECTIONS = {
    "reward": RewardConfig,
    "grpo": GrpoConfig,
    "balance_filter": BalanceFilterConfig,
    "episode": EpisodeConfig,
    "server": ServerConfig,
}


def _build_section(cls, doc: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigError(f"bad values in {where}: {exc}") from exc


def load_run_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    allowed = set(_SECTIONS) | {"seed", "T"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {}
    for key, cls in _SECTIONS.items():
        if key in doc:
            if not isinstance(doc[key], dict):
                raise ConfigError(f"section {key!r} must be an object")
            kwargs[key] = _build_section(cls, doc[key], key)
    if "seed" in doc:
        kwargs["seed"] = int(doc["seed"])
    if "T" in doc:
        kwargs["T"] = int(doc["T"])
    return RunConfig(**kwargs)


def config_hash(cfg: RunConfig) -> str:
    text = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
