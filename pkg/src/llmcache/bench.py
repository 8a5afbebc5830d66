"""Benchmark harness: NoCache baseline vs layer-wise cached inference.

Every run passes the workload through the uncached model first. Those outputs
are both the latency baseline and the ground truth for fidelity. The cached
engine then replays the same workload from empty banks. Only the inference
call itself is timed.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from llmcache.cachebank import CacheBank
from llmcache.compression import PcaModel, pca_fit
from llmcache.config import Config
from llmcache.errors import LLMCacheError
from llmcache.transformer.manager import InferenceTrace, LayerDecision, LLMCache
from llmcache.transformer.model import ModelWeights, forward_nocache
from llmcache.workload import WorkloadItem, generate_workload

logger = logging.getLogger(__name__)

CSV_HEADER = "layer,hits,misses,rate"


class BenchmarkError(LLMCacheError, RuntimeError):
    """A request failed mid-run; carries the request index."""

    def __init__(self, index: int, cause: Exception) -> None:
        super().__init__(f"request {index}: {cause}")
        self.index = index


@dataclass
class RequestMetrics:
    index: int
    base_id: int
    seq_len: int
    nocache_ns: float
    llmcache_ns: float
    decisions: str
    hits: int
    rel_l2_error: float
    cosine: float
    layer_forward_calls: int
    validation_recomputes: int


@dataclass
class LayerMetrics:
    layer: int
    hits: int
    misses: int
    rate: float


@dataclass
class LatencySummary:
    mean_ns: float
    median_ns: float

    @classmethod
    def of(cls, samples: Sequence[float]) -> "LatencySummary":
        return cls(float(statistics.fmean(samples)), float(statistics.median(samples)))


@dataclass
class MetricsReport:
    requests: list[RequestMetrics]
    layers: list[LayerMetrics]
    nocache_latency: LatencySummary
    llmcache_latency: LatencySummary
    speedup: float
    hit_rate: float
    nocache_rel_l2_error: float
    mean_rel_l2_error: float
    max_rel_l2_error: float
    mean_cosine: float
    memory_bytes: int
    inserts: int
    evictions: int
    invalidations: int
    flushed: int
    layer_forward_calls: int
    validation_recomputes: int
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "MetricsReport":
        raw = dict(raw)
        raw["requests"] = [RequestMetrics(**r) for r in raw["requests"]]
        raw["layers"] = [LayerMetrics(**r) for r in raw["layers"]]
        raw["nocache_latency"] = LatencySummary(**raw["nocache_latency"])
        raw["llmcache_latency"] = LatencySummary(**raw["llmcache_latency"])
        return cls(**raw)

    def deterministic_view(self) -> dict[str, Any]:
        """Every field except timings and the timestamp."""
        d = self.to_dict()
        for key in ("nocache_latency", "llmcache_latency", "speedup"):
            d.pop(key)
        for r in d["requests"]:
            r.pop("nocache_ns")
            r.pop("llmcache_ns")
        d["metadata"] = {k: v for k, v in d["metadata"].items() if k != "timestamp"}
        return d


@dataclass
class OracleRun:
    """Uncached outputs and timings for one workload; shared across sweep points."""

    weights: ModelWeights
    items: list[WorkloadItem]
    finals: list[np.ndarray]
    latencies_ns: list[float]
    warmup_states: list[list[np.ndarray]]


def _time_ns(fn, *args):
    t0 = time.perf_counter_ns()
    out = fn(*args)
    return out, time.perf_counter_ns() - t0


def run_oracle(config: Config, items: list[WorkloadItem] | None = None) -> OracleRun:
    weights = ModelWeights.init(config.model)
    if items is None:
        items = generate_workload(config.workload)
    if not items:
        raise ValueError("workload is empty")
    for _ in range(config.bench.warmup):
        forward_nocache(items[0].tokens, weights)

    keep = config.compression.warmup_samples if config.compression.enabled else 0
    finals: list[np.ndarray] = []
    warmup_states: list[list[np.ndarray]] = []
    totals = [0.0] * len(items)
    for it in range(config.bench.iterations):
        for i, item in enumerate(items):
            try:
                (final, states), dt = _time_ns(forward_nocache, item.tokens, weights)
            except LLMCacheError as exc:
                raise BenchmarkError(i, exc) from exc
            totals[i] += dt
            if it == 0:
                finals.append(final.values)
                if i < keep:
                    warmup_states.append([s.values for s in states])
    latencies = [t / config.bench.iterations for t in totals]
    return OracleRun(weights, items, finals, latencies, warmup_states)


def fit_compressors(config: Config, oracle: OracleRun) -> list[PcaModel | None] | None:
    """Per-layer PCA fit on the warmup window's uncached layer outputs (rows as samples)."""
    if not config.compression.enabled:
        return None
    models = []
    for l in range(config.model.layers):
        samples = np.concatenate([states[l] for states in oracle.warmup_states], axis=0)
        c = min(config.compression.components, *samples.shape)
        models.append(pca_fit(samples, c))
    return models


def build_engine(config: Config, weights: ModelWeights, compressors) -> LLMCache:
    return LLMCache(
        weights,
        config.fingerprint,
        tau=config.tau_schedule,
        capacity=config.cache.capacities(config.model.layers),
        policy=config.cache.eviction_policy(),
        compressors=compressors,
        seed=config.cache.seed,
        lsh_bands=config.cache.lsh_bands,
        sweep_interval=config.cache.sweep_interval,
    )


def _replay(engine: LLMCache, items: list[WorkloadItem], indices: Sequence[int]):
    outs = {}
    for i in indices:
        try:
            (h, trace), dt = _time_ns(engine.infer, items[i].tokens)
        except LLMCacheError as exc:
            raise BenchmarkError(i, exc) from exc
        outs[i] = (h.values, trace, dt)
    return outs


def _cached_pass(config: Config, oracle: OracleRun, compressors, workers: int, warm_banks):
    n = len(oracle.items)
    shards = [list(range(w, n, workers)) for w in range(workers)]
    engines = [build_engine(config, oracle.weights, compressors) for _ in shards]
    if warm_banks is not None:
        for engine in engines:
            engine.adopt_banks(copy.deepcopy(warm_banks))
    if workers == 1:
        results = [_replay(engines[0], oracle.items, shards[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replay, engines, [oracle.items] * workers, shards))
    merged = {}
    for r in results:
        merged.update(r)
    return [merged[i] for i in range(n)], engines


def _fidelity(out: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    ref_norm = float(np.linalg.norm(ref))
    rel = float(np.linalg.norm(out - ref)) / max(ref_norm, 1e-12)
    denom = float(np.linalg.norm(out)) * ref_norm
    cos = float(np.clip(np.vdot(out, ref) / denom, -1.0, 1.0)) if denom else 0.0
    return rel, cos


def run_benchmark(
    config: Config,
    oracle: OracleRun | None = None,
    items: list[WorkloadItem] | None = None,
    warm_banks: Sequence[CacheBank] | None = None,
) -> MetricsReport:
    """Run the workload uncached and cached and collect the metric suite.

    Pass a precomputed ``oracle`` to reuse one uncached pass across several
    cache configurations with the same model and workload. ``warm_banks``
    (e.g. from a snapshot) seed every cached pass with a copy of their contents.
    """
    if oracle is None:
        oracle = run_oracle(config, items)
    compressors = fit_compressors(config, oracle)
    workers = config.bench.workers
    L = config.model.layers

    n = len(oracle.items)
    totals = [0.0] * n
    first = None
    engines: list[LLMCache] = []
    for it in range(config.bench.iterations):
        results, run_engines = _cached_pass(config, oracle, compressors, workers, warm_banks)
        for i, (_, _, dt) in enumerate(results):
            totals[i] += dt
        if it == 0:
            first, engines = results, run_engines
    cached_ns = [t / config.bench.iterations for t in totals]

    requests = []
    traces: list[InferenceTrace] = []
    for i, (out, trace, _) in enumerate(first):
        item = oracle.items[i]
        rel, cos = _fidelity(out, oracle.finals[i])
        traces.append(trace)
        requests.append(
            RequestMetrics(
                index=i,
                base_id=item.base_id,
                seq_len=item.seq_len,
                nocache_ns=oracle.latencies_ns[i],
                llmcache_ns=cached_ns[i],
                decisions=trace.pattern(),
                hits=trace.hits,
                rel_l2_error=rel,
                cosine=cos,
                layer_forward_calls=trace.layer_forward_calls,
                validation_recomputes=trace.validation_recomputes,
            )
        )

    layers = []
    for l in range(L):
        hits = sum(t.layers[l].decision is LayerDecision.HIT for t in traces)
        layers.append(LayerMetrics(l + 1, hits, n - hits, 100.0 * hits / n))

    stats = [b.stats() for e in engines for b in e.banks]
    errors = [r.rel_l2_error for r in requests]
    no_lat = LatencySummary.of(oracle.latencies_ns)
    cache_lat = LatencySummary.of(cached_ns)
    return MetricsReport(
        requests=requests,
        layers=layers,
        nocache_latency=no_lat,
        llmcache_latency=cache_lat,
        speedup=no_lat.mean_ns / cache_lat.mean_ns,
        hit_rate=100.0 * sum(lm.hits for lm in layers) / (n * L),
        nocache_rel_l2_error=0.0,
        mean_rel_l2_error=float(statistics.fmean(errors)),
        max_rel_l2_error=max(errors),
        mean_cosine=float(statistics.fmean(r.cosine for r in requests)),
        memory_bytes=sum(s.estimated_bytes for s in stats),
        inserts=sum(s.inserts for s in stats),
        evictions=sum(s.evictions for s in stats),
        invalidations=sum(s.invalidations for s in stats),
        flushed=sum(s.flushed for s in stats),
        layer_forward_calls=sum(r.layer_forward_calls for r in requests),
        validation_recomputes=sum(r.validation_recomputes for r in requests),
        metadata={
            "config": config.to_dict(),
            "seeds": {
                "model": config.model.seed,
                "fingerprint": config.fingerprint.seed,
                "workload": config.workload.seed,
                "cache": config.cache.seed,
            },
            "num_requests": n,
            "parallel": workers > 1,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        },
    )


def sweep_tau(
    config: Config, tau_values: Sequence[float], oracle: OracleRun | None = None
) -> list[tuple[float, MetricsReport]]:
    """One report per threshold, each from empty banks, sharing one uncached pass."""
    oracle = oracle or run_oracle(config)
    return [(float(t), run_benchmark(config.replace(tau=float(t)), oracle)) for t in tau_values]


def sweep_capacity(
    config: Config, capacities: Sequence[int], oracle: OracleRun | None = None
) -> list[tuple[int, MetricsReport]]:
    oracle = oracle or run_oracle(config)
    return [(int(c), run_benchmark(config.replace(cache__capacity=int(c)), oracle)) for c in capacities]


def report_emit(report: MetricsReport, format: str, path: str | Path) -> None:
    """Write ``report`` as a full JSON tree or as the per-layer hit-rate CSV.

    CSV columns are ``layer,hits,misses,rate`` with ``rate`` in percent,
    one row per layer in layer order.
    """
    path = Path(path)
    if format == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    elif format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER.split(","))
            for lm in report.layers:
                writer.writerow([lm.layer, lm.hits, lm.misses, f"{lm.rate:.4f}"])
    else:
        raise ValueError(f"unknown report format {format!r}")


def load_report(path: str | Path) -> MetricsReport:
    with open(path, encoding="utf-8") as fh:
        return MetricsReport.from_dict(json.load(fh))
