"""Layer execution manager: per-layer choice between cached reuse and recompute."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from llmcache.cachebank import CacheBank, EvictionPolicy, Validation, make_banks
from llmcache.compression import PcaModel
from llmcache.fingerprint import Fingerprint, FingerprintConfig, fingerprint
from llmcache.transformer.model import HiddenState, ModelWeights, embed, layer_forward

DEFAULT_TAU = 0.85


class LayerDecision(str, enum.Enum):
    HIT = "Hit"
    MISS = "Miss"


@dataclass
class LayerRecord:
    decision: LayerDecision
    similarity: float | None = None
    wall_ns: int = 0
    validated: bool = False
    invalidated: bool = False


@dataclass
class InferenceTrace:
    fingerprint: Fingerprint
    layers: list[LayerRecord] = field(default_factory=list)
    layer_forward_calls: int = 0
    validation_recomputes: int = 0

    @property
    def decisions(self) -> list[LayerDecision]:
        return [r.decision for r in self.layers]

    @property
    def hits(self) -> int:
        return sum(r.decision is LayerDecision.HIT for r in self.layers)

    def pattern(self) -> str:
        """Compact ``H``/``M`` string, one character per layer."""
        return "".join("H" if r.decision is LayerDecision.HIT else "M" for r in self.layers)


def llmcache_infer(
    tokens: Sequence[int] | np.ndarray,
    weights: ModelWeights,
    banks: Sequence[CacheBank],
    fp_cfg: FingerprintConfig,
    tau_schedule: Sequence[float],
    step: int,
    projection: np.ndarray | None = None,
) -> tuple[HiddenState, InferenceTrace]:
    """Run one request through the model, reusing cached layer outputs where allowed.

    The fingerprint is computed once per request. At each layer a hit returns
    the stored activation without touching the previous layer's output; a miss
    computes the layer and stores the result under this request's key. Hits
    picked for validation are recomputed and, if they drifted past the bank's
    epsilon, replaced by the fresh value.
    """
    L = weights.num_layers
    if len(banks) != L or len(tau_schedule) != L:
        raise ValueError(f"need {L} banks and {L} thresholds, got {len(banks)} and {len(tau_schedule)}")

    f = fingerprint(tokens, weights, fp_cfg, projection)
    h = embed(tokens, weights)
    n = h.seq_len
    trace = InferenceTrace(f)
    clock = time.perf_counter_ns

    for l in range(1, L + 1):
        t0 = clock()
        bank = banks[l - 1]
        result = bank.lookup(f, n, tau_schedule[l - 1], step)
        if result.hit:
            record = LayerRecord(LayerDecision.HIT, result.similarity)
            cached = HiddenState(bank.activation(result.entry), l)
            if bank.should_validate():
                fresh = layer_forward(l, h, weights)
                trace.validation_recomputes += 1
                record.validated = True
                if bank.validate_entry(result.entry, fresh.values) is Validation.INVALIDATED:
                    record.invalidated = True
                    bank.insert(f, fresh.values, n, step)
                    cached = fresh
            h = cached
        else:
            record = LayerRecord(LayerDecision.MISS)
            assert h.layer_index == l - 1, "miss without the previous layer's output"
            h = layer_forward(l, h, weights)
            trace.layer_forward_calls += 1
            bank.insert(f, h.values, n, step)
        record.wall_ns = clock() - t0
        trace.layers.append(record)
    return h, trace


def expand_tau(tau: float | Sequence[float], num_layers: int) -> list[float]:
    if isinstance(tau, (int, float)):
        return [float(tau)] * num_layers
    schedule = [float(t) for t in tau]
    if len(schedule) != num_layers:
        raise ValueError(f"tau_schedule needs {num_layers} entries, got {len(schedule)}")
    return schedule


class LLMCache:
    """Cached inference engine owning one bank per layer and a logical step counter.

    Every ``sweep_interval`` requests all banks run a decay sweep; because the
    decay law is multiplicative, sweeping less often changes only when stale
    entries are noticed, not their rates.
    """

    def __init__(
        self,
        weights: ModelWeights,
        fp_cfg: FingerprintConfig | None = None,
        tau: float | Sequence[float] = DEFAULT_TAU,
        capacity: int | list[int] = 1024,
        policy: EvictionPolicy | None = None,
        compressors: list[PcaModel | None] | None = None,
        seed: int = 0,
        lsh_bands: int | None = None,
        sweep_interval: int = 64,
        projection: np.ndarray | None = None,
    ) -> None:
        self.weights = weights
        self.fp_cfg = fp_cfg or FingerprintConfig()
        self.tau_schedule = expand_tau(tau, weights.num_layers)
        self.sweep_interval = sweep_interval
        self.projection = projection
        self.banks = make_banks(
            weights.num_layers,
            self.fp_cfg.key_kind,
            capacity,
            policy,
            compressors,
            seed,
            lsh_bands,
        )
        self.step = 0

    def adopt_banks(self, banks: Sequence[CacheBank]) -> None:
        """Replace the engine's banks, e.g. with ones restored from a snapshot."""
        if len(banks) != self.weights.num_layers:
            raise ValueError(f"need {self.weights.num_layers} banks, got {len(banks)}")
        for bank in banks:
            if bank.key_kind not in (None, self.fp_cfg.key_kind):
                raise ValueError(f"bank {bank.layer_index} holds keys of the wrong kind")
        self.banks = list(banks)
        steps = [e.last_hit_step for b in self.banks for e in b.entries()]
        self.step = max(steps, default=-1) + 1

    def infer(self, tokens: Sequence[int] | np.ndarray) -> tuple[HiddenState, InferenceTrace]:
        out = llmcache_infer(
            tokens, self.weights, self.banks, self.fp_cfg, self.tau_schedule, self.step, self.projection
        )
        self.step += 1
        if self.sweep_interval and self.step % self.sweep_interval == 0:
            for bank in self.banks:
                bank.decay_sweep(self.step)
        return out
