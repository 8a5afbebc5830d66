"""Command-line entry point: ``llmcache run|sweep-tau|sweep-capacity|snapshot``.

Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from llmcache.bench import (
    MetricsReport,
    build_engine,
    fit_compressors,
    report_emit,
    run_benchmark,
    run_oracle,
    sweep_capacity,
    sweep_tau,
)
from llmcache.config import Config
from llmcache.errors import ConfigError, LLMCacheError
from llmcache.snapshot import load_banks, save_banks
from llmcache.transformer.manager import DEFAULT_TAU
from llmcache.transformer.model import ModelWeights
from llmcache.workload import corpus_workload, generate_workload, load_corpus

logger = logging.getLogger("llmcache")

DEFAULTS_HELP = f"""\
config defaults (every key optional):
  model:        vocab=1024 dim=256 layers=12 ffn_dim=4*dim seed=0
  fingerprint:  scheme=DenseMean dense_dim=64 signature_bits=128 prefix_len=16 seed=0
  cache:        capacity=1024 policy=LRU decay_half_life=256 staleness_floor=0.05
                divergence_epsilon=1e-3 validation_rate=0.05 sweep_interval=64
                lsh_bands=null seed=0
  compression:  enabled=false components=64 warmup_samples=64
  workload:     num_bases=8 variants_per_base=4 perturbation_rate=0.05 seq_len=128
                vocab=model.vocab seed=0 order=Shuffled repeat=1
  tau:          {DEFAULT_TAU} (or tau_schedule: one value per layer)
  bench:        iterations=1 warmup=3 workers=1
"""


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llmcache",
        description="Layer-wise semantic activation cache benchmark harness.",
        epilog=DEFAULTS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="JSON config file (defaults used when omitted)")
        p.add_argument("--corpus", type=Path, help="plain-text corpus, one document per line")

    run = sub.add_parser("run", help="NoCache vs LLMCache on one configuration",
                         epilog=DEFAULTS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(run)
    run.add_argument("--out", type=Path, help="report path (summary printed to stdout either way)")
    run.add_argument("--format", choices=("json", "csv"), default="json")
    run.add_argument("--warm-start", type=Path, help="bank snapshot to start from")

    st = sub.add_parser("sweep-tau", help="one run per similarity threshold")
    common(st)
    st.add_argument("--taus", type=_floats, required=True, help="comma-separated thresholds")
    st.add_argument("--out", type=Path, help="JSON file with all sweep points")

    sc = sub.add_parser("sweep-capacity", help="one run per bank capacity")
    common(sc)
    sc.add_argument("--capacities", type=_ints, required=True, help="comma-separated capacities")
    sc.add_argument("--out", type=Path, help="JSON file with all sweep points")

    snap = sub.add_parser("snapshot", help="fill banks with the workload and save them")
    common(snap)
    snap.add_argument("--out", type=Path, required=True)
    return parser


def _summary(report: MetricsReport) -> str:
    return (
        f"requests={report.metadata['num_requests']} hit_rate={report.hit_rate:.2f}% "
        f"speedup={report.speedup:.2f}x "
        f"nocache_mean={report.nocache_latency.mean_ns / 1e6:.2f}ms "
        f"llmcache_mean={report.llmcache_latency.mean_ns / 1e6:.2f}ms "
        f"mean_rel_l2={report.mean_rel_l2_error:.3e} memory={report.memory_bytes / 2**20:.2f}MB"
    )


def _items(config: Config, corpus: Path | None):
    if corpus is None:
        return None
    return corpus_workload(load_corpus(corpus), config.workload.vocab, config.workload.seq_len)


def _write_sweep(points, key: str, path: Path | None) -> None:
    for value, report in points:
        print(f"{key}={value}: {_summary(report)}")
    if path is not None:
        payload = [{key: value, "report": report.to_dict()} for value, report in points]
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = Config.load(args.config) if args.config else Config()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        items = _items(config, args.corpus)
        if args.command == "run":
            warm = load_banks(args.warm_start) if args.warm_start else None
            report = run_benchmark(config, items=items, warm_banks=warm)
            print(_summary(report))
            if args.out:
                report_emit(report, args.format, args.out)
        elif args.command == "sweep-tau":
            _write_sweep(sweep_tau(config, args.taus, run_oracle(config, items)), "tau", args.out)
        elif args.command == "sweep-capacity":
            oracle = run_oracle(config, items)
            _write_sweep(sweep_capacity(config, args.capacities, oracle), "capacity", args.out)
        elif args.command == "snapshot":
            weights = ModelWeights.init(config.model)
            compressors = None
            if config.compression.enabled:
                compressors = fit_compressors(config, run_oracle(config, items))
            engine = build_engine(config, weights, compressors)
            for item in items if items is not None else generate_workload(config.workload):
                engine.infer(item.tokens)
            save_banks(engine.banks, args.out)
            print(f"saved {sum(len(b) for b in engine.banks)} entries across {len(engine.banks)} banks to {args.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (LLMCacheError, OSError, ValueError) as exc:
        logger.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
