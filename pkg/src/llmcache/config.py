"""JSON run configuration.

Top-level keys: ``model``, ``fingerprint``, ``cache``, ``compression``,
``workload``, ``tau`` or ``tau_schedule``, and ``bench``. Every key is
optional; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from llmcache.cachebank import EvictionPolicy, PolicyKind
from llmcache.errors import ConfigError
from llmcache.fingerprint import FingerprintConfig
from llmcache.transformer.manager import DEFAULT_TAU
from llmcache.transformer.model import ModelConfig
from llmcache.workload import WorkloadSpec

# Published optimal threshold band for this kind of cache; the default must sit inside it.
TAU_OPTIMAL_BAND = (0.82, 0.88)


@dataclass(frozen=True)
class CacheConfig:
    capacity: int | tuple[int, ...] = 1024
    policy: PolicyKind = PolicyKind.LRU
    decay_half_life: int = 256
    staleness_floor: float = 0.05
    divergence_epsilon: float = 1e-3
    validation_rate: float = 0.05
    sweep_interval: int = 64
    lsh_bands: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.capacity, list):
            object.__setattr__(self, "capacity", tuple(self.capacity))
        caps = self.capacity if isinstance(self.capacity, tuple) else (self.capacity,)
        if any(not isinstance(c, int) or c < 1 for c in caps):
            raise ValueError("cache.capacity must be a positive integer or a list of them")
        if self.sweep_interval < 0:
            raise ValueError("cache.sweep_interval must be >= 0")
        # Builds the policy once so its own range checks run at load time.
        self.eviction_policy()

    def eviction_policy(self) -> EvictionPolicy:
        return EvictionPolicy(
            kind=PolicyKind(self.policy),
            decay_half_life=self.decay_half_life,
            staleness_floor=self.staleness_floor,
            divergence_epsilon=self.divergence_epsilon,
            validation_rate=self.validation_rate,
        )

    def capacities(self, num_layers: int) -> list[int]:
        if isinstance(self.capacity, int):
            return [self.capacity] * num_layers
        if len(self.capacity) != num_layers:
            raise ValueError(f"cache.capacity lists {len(self.capacity)} layers, model has {num_layers}")
        return list(self.capacity)


@dataclass(frozen=True)
class CompressionConfig:
    enabled: bool = False
    components: int = 64
    warmup_samples: int = 64

    def __post_init__(self) -> None:
        if self.components < 1 or self.warmup_samples < 1:
            raise ValueError("compression.components and compression.warmup_samples must be positive")


@dataclass(frozen=True)
class BenchConfig:
    iterations: int = 1
    warmup: int = 3
    workers: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.warmup < 0 or self.workers < 1:
            raise ValueError("bench.iterations >= 1, bench.warmup >= 0, bench.workers >= 1 required")


@dataclass(frozen=True)
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    fingerprint: FingerprintConfig = field(default_factory=FingerprintConfig)
    cache: CacheConfig = field(default_factory=CacheConfig)
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    tau: float | tuple[float, ...] = DEFAULT_TAU
    bench: BenchConfig = field(default_factory=BenchConfig)

    def __post_init__(self) -> None:
        if isinstance(self.tau, list):
            object.__setattr__(self, "tau", tuple(float(t) for t in self.tau))
        if isinstance(self.tau, tuple) and len(self.tau) != self.model.layers:
            raise ConfigError(f"tau_schedule needs {self.model.layers} entries, got {len(self.tau)}")
        if self.workload.vocab > self.model.vocab:
            raise ConfigError("workload.vocab exceeds model.vocab")
        try:
            self.fingerprint.check_model_dim(self.model.dim)
            self.cache.capacities(self.model.layers)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def tau_schedule(self) -> list[float]:
        if isinstance(self.tau, tuple):
            return list(self.tau)
        return [float(self.tau)] * self.model.layers

    def replace(self, **sections: Any) -> "Config":
        """Copy with whole sections swapped, or nested fields via ``section__field``."""
        direct = {k: v for k, v in sections.items() if "__" not in k}
        for key, value in sections.items():
            if "__" in key:
                section, name = key.split("__", 1)
                base = direct.get(section, getattr(self, section))
                direct[section] = dataclasses.replace(base, **{name: value})
        return dataclasses.replace(self, **direct)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "Config":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        raw = dict(raw)
        if "tau" in raw and "tau_schedule" in raw:
            raise ConfigError("give either tau or tau_schedule, not both")
        allowed = {"model", "fingerprint", "cache", "compression", "workload", "tau", "tau_schedule", "bench"}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            model = _section(ModelConfig, raw.get("model"), "model")
            workload_raw = dict(raw.get("workload") or {})
            workload_raw.setdefault("vocab", model.vocab)
            kwargs = dict(
                model=model,
                fingerprint=_section(FingerprintConfig, raw.get("fingerprint"), "fingerprint"),
                cache=_section(CacheConfig, raw.get("cache"), "cache"),
                compression=_section(CompressionConfig, raw.get("compression"), "compression"),
                workload=_section(WorkloadSpec, workload_raw, "workload"),
                bench=_section(BenchConfig, raw.get("bench"), "bench"),
            )
            if "tau_schedule" in raw:
                kwargs["tau"] = tuple(_real(t, "tau_schedule") for t in raw["tau_schedule"])
            elif "tau" in raw:
                kwargs["tau"] = _real(raw["tau"], "tau")
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        out = {
            name: _plain(dataclasses.asdict(getattr(self, name)))
            for name in ("model", "fingerprint", "cache", "compression", "workload", "bench")
        }
        if isinstance(self.tau, tuple):
            out["tau_schedule"] = list(self.tau)
        else:
            out["tau"] = self.tau
        return out


def _real(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


def _section(kind: type, raw: Any, name: str) -> Any:
    if raw is None:
        return kind()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be a JSON object")
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    for fld in dataclasses.fields(kind):
        if fld.name in raw and isinstance(raw[fld.name], bool) and fld.type not in ("bool",):
            raise ConfigError(f"{name}.{fld.name} must not be a boolean")
    return kind(**raw)


def _plain(obj: Any) -> Any:
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj
