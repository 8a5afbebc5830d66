"""Per-layer cache banks mapping fingerprints to stored activations.

Entries are partitioned by sequence length, since a cached ``n x d``
activation can only stand in for an input of the same length. Lookup is an
exact scan over one partition; for signature keys an optional band index
narrows the scan without changing its answer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from llmcache.compression import PcaModel
from llmcache.errors import EmptyBank, KeyKindError, ShapeError
from llmcache.fingerprint import BitSignature, DenseFingerprint, Fingerprint


class PolicyKind(str, enum.Enum):
    LRU = "LRU"
    FREQUENCY = "Frequency"
    STALENESS = "Staleness"
    DIVERGENCE_AWARE = "DivergenceAware"


@dataclass(frozen=True)
class EvictionPolicy:
    kind: PolicyKind = PolicyKind.LRU
    decay_half_life: int = 256
    staleness_floor: float = 0.05
    divergence_epsilon: float = 1e-3
    validation_rate: float = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.decay_half_life < 1:
            raise ValueError("decay_half_life must be >= 1")
        if not 0.0 <= self.validation_rate <= 1.0:
            raise ValueError("validation_rate must lie in [0, 1]")
        if self.divergence_epsilon < 0:
            raise ValueError("divergence_epsilon must be >= 0")
        if self.staleness_floor < 0:
            raise ValueError("staleness_floor must be >= 0")


class Validation(str, enum.Enum):
    KEPT = "Kept"
    INVALIDATED = "Invalidated"


@dataclass(frozen=True, eq=False)
class StoredActivation:
    """Cached layer output, raw (``n x d``) or PCA-projected (``n x c``)."""

    data: np.ndarray
    seq_len: int
    compressed: bool = False

    def __post_init__(self) -> None:
        a = np.array(self.data, dtype=np.float64, copy=True)
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def nbytes(self) -> int:
        return int(self.data.nbytes)


@dataclass(eq=False)
class CacheEntry:
    key: Fingerprint
    activation: StoredActivation
    insert_step: int
    last_hit_step: int
    hit_count: int = 0
    decayed_match_rate: float = 1.0
    divergence_estimate: float = 0.0
    last_sweep_step: int = -1
    entry_id: int = 0

    def __post_init__(self) -> None:
        if self.last_sweep_step < 0:
            self.last_sweep_step = self.insert_step

    @property
    def seq_len(self) -> int:
        return self.activation.seq_len

    @property
    def nbytes(self) -> int:
        return self.activation.nbytes + self.key.nbytes


@dataclass(frozen=True)
class LookupResult:
    entry: CacheEntry | None = None
    similarity: float | None = None

    @property
    def hit(self) -> bool:
        return self.entry is not None


MISS = LookupResult()


@dataclass(frozen=True)
class BankStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    invalidations: int = 0
    flushed: int = 0
    inserts: int = 0
    occupancy: int = 0
    estimated_bytes: int = 0


def _band_slices(width: int, bands: int) -> list[slice]:
    edges = np.linspace(0, width, bands + 1).round().astype(int)
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def max_hamming_for(tau: float, width: int) -> int:
    """Largest Hamming distance ``h`` with ``1 - h/width >= tau`` (``-1`` if none)."""
    if tau <= 0.0:
        return width
    k = min(width, max(-1, math.floor((1.0 - tau) * width)))
    while k + 1 <= width and 1.0 - (k + 1) / width >= tau:
        k += 1
    while k >= 0 and 1.0 - k / width < tau:
        k -= 1
    return k


class _Partition:
    """Entries of one sequence length plus a lazily rebuilt key matrix."""

    def __init__(self, bands: int | None) -> None:
        self.entries: dict[int, CacheEntry] = {}
        self.by_key: dict[Fingerprint, int] = {}
        self.bands = bands
        self.buckets: dict[tuple[int, bytes], set[int]] = {}
        self._ids: list[int] | None = None
        self._matrix: np.ndarray | None = None

    def _band_keys(self, key: BitSignature) -> Iterator[tuple[int, bytes]]:
        bits = key.bits
        for i, sl in enumerate(_band_slices(key.width, self.bands)):
            yield i, bits[sl].tobytes()

    def add(self, entry: CacheEntry) -> None:
        self.entries[entry.entry_id] = entry
        self.by_key[entry.key] = entry.entry_id
        if self.bands and isinstance(entry.key, BitSignature):
            for bk in self._band_keys(entry.key):
                self.buckets.setdefault(bk, set()).add(entry.entry_id)
        self._ids = None

    def remove(self, entry_id: int) -> CacheEntry:
        entry = self.entries.pop(entry_id)
        del self.by_key[entry.key]
        if self.bands and isinstance(entry.key, BitSignature):
            for bk in self._band_keys(entry.key):
                bucket = self.buckets[bk]
                bucket.discard(entry_id)
                if not bucket:
                    del self.buckets[bk]
        self._ids = None
        return entry

    def key_matrix(self) -> tuple[list[int], np.ndarray]:
        if self._ids is None:
            self._ids = list(self.entries)
            keys = [self.entries[i].key for i in self._ids]
            if keys and isinstance(keys[0], BitSignature):
                self._matrix = np.stack([k.packed for k in keys])
            else:
                self._matrix = np.stack([k.values for k in keys])
        return self._ids, self._matrix

    def candidates(self, key: BitSignature, max_distance: int) -> list[int] | None:
        """Entry ids that can lie within ``max_distance`` bits, or None to force a scan.

        If fewer than ``bands`` bits differ, some band matches exactly.
        """
        if not self.bands or max_distance >= self.bands:
            return None
        found: set[int] = set()
        for bk in self._band_keys(key):
            found |= self.buckets.get(bk, set())
        return sorted(found)


class CacheBank:
    """Similarity-keyed store of one layer's activations.

    Args:
        layer_index: 1-based layer this bank serves.
        key_kind: ``DenseFingerprint`` or ``BitSignature``; inferred from the
            first insert or lookup when None.
        capacity: Maximum number of entries across all length partitions.
        policy: Eviction and refresh parameters.
        compressor: Frozen PCA model; when set, activations are stored projected.
        seed: Seeds the generator deciding which hits get revalidated.
        lsh_bands: Enables the exact band index for signature keys.
    """

    def __init__(
        self,
        layer_index: int,
        key_kind: type | None = None,
        capacity: int = 1024,
        policy: EvictionPolicy | None = None,
        compressor: PcaModel | None = None,
        seed: int = 0,
        lsh_bands: int | None = None,
    ) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if key_kind not in (None, DenseFingerprint, BitSignature):
            raise KeyKindError(f"unsupported key kind {key_kind!r}")
        self.layer_index = layer_index
        self.key_kind = key_kind
        self.capacity = capacity
        self.policy = policy or EvictionPolicy()
        self.compressor = compressor
        self.seed = seed
        self.lsh_bands = lsh_bands
        self._partitions: dict[int, _Partition] = {}
        self._size = 0
        self._next_id = 0
        self._rng = np.random.default_rng([seed, layer_index])
        self.hits = self.misses = self.evictions = 0
        self.invalidations = self.flushed = self.inserts = 0

    def __len__(self) -> int:
        return self._size

    def entries(self) -> Iterator[CacheEntry]:
        for part in self._partitions.values():
            yield from part.entries.values()

    def keys(self) -> list[Fingerprint]:
        return [e.key for e in self.entries()]

    def _check_kind(self, f: Fingerprint) -> None:
        if not isinstance(f, (DenseFingerprint, BitSignature)):
            raise KeyKindError(f"not a fingerprint: {type(f).__name__}")
        if self.key_kind is None:
            self.key_kind = type(f)
        elif not isinstance(f, self.key_kind):
            raise KeyKindError(
                f"bank {self.layer_index} holds {self.key_kind.__name__} keys, got {type(f).__name__}"
            )

    def _similarities(self, part: _Partition, f: Fingerprint, ids: list[int], keys: np.ndarray) -> np.ndarray:
        if isinstance(f, BitSignature):
            if keys.shape[1] != f.packed.shape[0]:
                raise ShapeError(f"signature width {f.width} does not match bank keys")
            differing = np.unpackbits(np.bitwise_xor(keys, f.packed), axis=1).sum(axis=1)
            return 1.0 - differing / f.width
        if keys.shape[1] != f.dim:
            raise ShapeError(f"fingerprint dim {f.dim} does not match bank keys ({keys.shape[1]})")
        norms = np.sqrt(np.einsum("ij,ij->i", keys, keys) * np.dot(f.values, f.values))
        sims = np.clip((keys @ f.values) / norms, -1.0, 1.0)
        # An identical key is a perfect match even when rounding says 0.9999999999999998.
        exact = part.by_key.get(f)
        if exact is not None:
            sims[ids.index(exact)] = 1.0
        return sims

    def lookup(self, f: Fingerprint, n: int, tau: float, step: int) -> LookupResult:
        """Best entry of length ``n`` with similarity >= ``tau``; updates hit metadata."""
        self._check_kind(f)
        if math.isnan(tau):
            raise ValueError("tau must not be NaN")
        part = self._partitions.get(n)
        if part is None or not part.entries:
            self.misses += 1
            return MISS

        ids, keys = part.key_matrix()
        if isinstance(f, BitSignature):
            subset = part.candidates(f, max_hamming_for(tau, f.width))
            if subset is not None:
                if not subset:
                    self.misses += 1
                    return MISS
                pos = {i: r for r, i in enumerate(ids)}
                rows = [pos[i] for i in subset]
                ids, keys = subset, keys[rows]
        sims = self._similarities(part, f, ids, keys)

        best = float(sims.max())
        if best < tau:
            self.misses += 1
            return MISS
        tied = [part.entries[ids[i]] for i in np.flatnonzero(sims == best)]
        entry = max(tied, key=lambda e: (e.insert_step, e.entry_id))
        entry.last_hit_step = step
        entry.hit_count += 1
        entry.decayed_match_rate += 1.0
        self.hits += 1
        return LookupResult(entry, best)

    def _store(self, activation: np.ndarray, n: int) -> StoredActivation:
        h = np.asarray(activation, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] != n:
            raise ShapeError(f"activation shape {h.shape} inconsistent with sequence length {n}")
        if not np.all(np.isfinite(h)):
            raise ValueError("activation contains non-finite values")
        if self.compressor is not None:
            return StoredActivation(self.compressor.project(h), n, compressed=True)
        return StoredActivation(h, n)

    def insert(self, f: Fingerprint, activation: np.ndarray, n: int, step: int) -> Fingerprint | None:
        """Store ``activation`` under ``f``; returns the evicted key, if any.

        Inserting a key already present for length ``n`` overwrites that entry
        in place and evicts nothing.
        """
        self._check_kind(f)
        stored = self._store(activation, n)
        part = self._partitions.get(n)
        evicted = None
        if part is not None and f in part.by_key:
            part.remove(part.by_key[f])
            self._size -= 1
        elif self._size >= self.capacity:
            evicted = self.evict_one(step)
            part = self._partitions.get(n)
        if part is None:
            part = self._partitions[n] = _Partition(self.lsh_bands)
        entry = CacheEntry(f, stored, insert_step=step, last_hit_step=step, entry_id=self._next_id)
        self._next_id += 1
        part.add(entry)
        self._size += 1
        self.inserts += 1
        return evicted

    def _holds(self, entry: CacheEntry) -> bool:
        part = self._partitions.get(entry.seq_len)
        return part is not None and part.entries.get(entry.entry_id) is entry

    def _remove(self, entry: CacheEntry) -> None:
        part = self._partitions[entry.seq_len]
        part.remove(entry.entry_id)
        if not part.entries:
            del self._partitions[entry.seq_len]
        self._size -= 1

    def victim(self) -> CacheEntry:
        """Entry the policy would evict next; ties go to the oldest insert."""
        if not self._size:
            raise EmptyBank(f"bank {self.layer_index} is empty")
        kind = self.policy.kind
        if kind is PolicyKind.LRU:
            score = lambda e: e.last_hit_step
        elif kind is PolicyKind.FREQUENCY:
            score = lambda e: e.hit_count
        elif kind is PolicyKind.STALENESS:
            score = lambda e: e.decayed_match_rate
        else:
            score = lambda e: -e.divergence_estimate
        return min(self.entries(), key=lambda e: (score(e), e.insert_step, e.entry_id))

    def evict_one(self, step: int) -> Fingerprint:
        entry = self.victim()
        self._remove(entry)
        self.evictions += 1
        return entry.key

    def decay_sweep(self, step: int) -> int:
        """Decay every match rate to ``step`` and flush entries under the floor."""
        half_life = self.policy.decay_half_life
        doomed = []
        for e in self.entries():
            delta = step - e.last_sweep_step
            if delta > 0:
                e.decayed_match_rate *= 2.0 ** (-delta / half_life)
                e.last_sweep_step = step
            if e.decayed_match_rate < self.policy.staleness_floor:
                doomed.append(e)
        for e in doomed:
            self._remove(e)
        self.flushed += len(doomed)
        return len(doomed)

    def activation(self, entry: CacheEntry) -> np.ndarray:
        """Stored activation as ``n x d``; expanded through PCA when compressed."""
        if entry.activation.compressed:
            if self.compressor is None:
                raise ShapeError("entry is compressed but the bank has no PCA model")
            return self.compressor.reconstruct(entry.activation.data)
        return entry.activation.data

    def should_validate(self) -> bool:
        rate = self.policy.validation_rate
        if rate <= 0.0:
            return False
        if rate >= 1.0:
            return True
        return bool(self._rng.random() < rate)

    def validate_entry(self, entry: CacheEntry, recomputed: np.ndarray) -> Validation:
        """Compare a cached activation against a fresh recompute; drop it if it drifted."""
        cached = self.activation(entry)
        recomputed = np.asarray(recomputed, dtype=np.float64)
        if recomputed.shape != cached.shape:
            raise ShapeError(f"recomputed shape {recomputed.shape} != cached {cached.shape}")
        divergence = float(
            np.linalg.norm(cached - recomputed) / max(float(np.linalg.norm(recomputed)), 1e-12)
        )
        entry.divergence_estimate = divergence
        if divergence > self.policy.divergence_epsilon:
            if self._holds(entry):
                self._remove(entry)
            self.invalidations += 1
            return Validation.INVALIDATED
        return Validation.KEPT

    def stats(self) -> BankStats:
        return BankStats(
            hits=self.hits,
            misses=self.misses,
            evictions=self.evictions,
            invalidations=self.invalidations,
            flushed=self.flushed,
            inserts=self.inserts,
            occupancy=self._size,
            estimated_bytes=sum(e.nbytes for e in self.entries()),
        )

    def restore_entry(self, entry: CacheEntry) -> None:
        """Re-attach a deserialized entry verbatim (snapshot loading)."""
        self._check_kind(entry.key)
        if self._size >= self.capacity:
            raise ValueError(f"bank {self.layer_index} is full")
        part = self._partitions.setdefault(entry.seq_len, _Partition(self.lsh_bands))
        part.add(entry)
        self._size += 1
        self._next_id = max(self._next_id, entry.entry_id + 1)


def make_banks(
    num_layers: int,
    key_kind: type | None = None,
    capacity: int | list[int] = 1024,
    policy: EvictionPolicy | None = None,
    compressors: list[PcaModel | None] | None = None,
    seed: int = 0,
    lsh_bands: int | None = None,
) -> list[CacheBank]:
    """One empty bank per layer; ``capacity`` may be given per layer."""
    caps = [capacity] * num_layers if isinstance(capacity, int) else list(capacity)
    if len(caps) != num_layers:
        raise ValueError(f"need {num_layers} capacities, got {len(caps)}")
    comps = compressors or [None] * num_layers
    return [
        CacheBank(l, key_kind, caps[l - 1], policy, comps[l - 1], seed, lsh_bands)
        for l in range(1, num_layers + 1)
    ]
