"""Synthetic request streams with controlled token overlap, plus corpus ingestion."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from llmcache.errors import EmptySequence

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class Order(str, enum.Enum):
    GROUPED = "Grouped"
    SHUFFLED = "Shuffled"


@dataclass(frozen=True)
class WorkloadSpec:
    """Parameters of a synthetic workload.

    ``repeat`` emits every item that many times back to back, which gives the
    exact-replay workloads used to measure the all-hit path.
    """

    num_bases: int = 8
    variants_per_base: int = 4
    perturbation_rate: float = 0.05
    seq_len: int = 128
    vocab: int = 1024
    seed: int = 0
    order: Order = Order.SHUFFLED
    repeat: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "order", Order(self.order))
        if not 0.0 <= self.perturbation_rate <= 1.0:
            raise ValueError("perturbation_rate must lie in [0, 1]")
        for name in ("num_bases", "variants_per_base", "seq_len", "vocab", "repeat"):
            if getattr(self, name) < 1:
                raise ValueError(f"workload.{name} must be positive")

    @property
    def perturbed_positions(self) -> int:
        # The epsilon keeps e.g. 0.07 * 100 from rounding up to 8.
        return min(self.seq_len, math.ceil(self.perturbation_rate * self.seq_len - 1e-9))

    @property
    def size(self) -> int:
        return self.num_bases * self.variants_per_base * self.repeat


@dataclass(frozen=True, eq=False)
class WorkloadItem:
    tokens: np.ndarray
    base_id: int
    rho_applied: float

    def __post_init__(self) -> None:
        t = np.array(self.tokens, dtype=np.int64, copy=True)
        t.setflags(write=False)
        object.__setattr__(self, "tokens", t)

    @property
    def seq_len(self) -> int:
        return int(self.tokens.shape[0])


def generate_workload(spec: WorkloadSpec) -> list[WorkloadItem]:
    rng = np.random.default_rng(spec.seed)
    n, k = spec.seq_len, spec.perturbed_positions
    bases = rng.integers(0, spec.vocab, size=(spec.num_bases, n))
    groups = []
    for base_id, base in enumerate(bases):
        variants = []
        for _ in range(spec.variants_per_base):
            tokens = base.copy()
            positions = rng.choice(n, size=k, replace=False)
            tokens[positions] = rng.integers(0, spec.vocab, size=k)
            variants.append(WorkloadItem(tokens, base_id, spec.perturbation_rate))
        groups.extend(variants)
    if spec.order is Order.SHUFFLED:
        groups = [groups[i] for i in rng.permutation(len(groups))]
    return [item for item in groups for _ in range(spec.repeat)]


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & _MASK64
    return h


def hashing_tokenizer(text: str | bytes, vocab: int) -> np.ndarray:
    """Map whitespace-separated words to ``fnv1a_64(utf8(word)) % vocab``."""
    if vocab < 2:
        raise ValueError("vocab must be at least 2")
    raw = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    words = raw.split()
    if not words:
        raise EmptySequence("no words to tokenize")
    return np.array([fnv1a_64(w) % vocab for w in words], dtype=np.int64)


def load_corpus(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\r\n") for line in fh if line.strip()]


def corpus_workload(texts: list[str], vocab: int, max_len: int | None = None) -> list[WorkloadItem]:
    """One item per document, truncated to ``max_len`` tokens."""
    items = []
    for i, text in enumerate(texts):
        tokens = hashing_tokenizer(text, vocab)
        if max_len is not None:
            tokens = tokens[:max_len]
        items.append(WorkloadItem(tokens, i, 0.0))
    return items
