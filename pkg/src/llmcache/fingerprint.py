"""Semantic fingerprints used as cache keys.

Two key kinds exist: a dense unit vector compared by cosine similarity, and a
fixed-width SimHash bit signature compared by Hamming agreement. Both are
immutable value objects that hash and compare by content, so they can sit in
sets and dict keys.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Sequence, Union

import numpy as np

from llmcache.errors import DegenerateFingerprint, EmptySequence, KeyKindError, ShapeError

if TYPE_CHECKING:
    from llmcache.transformer.model import ModelWeights

_NORM_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DenseFingerprint:
    values: np.ndarray
    normalized: bool = True

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 1 or v.size == 0:
            raise ShapeError(f"dense fingerprint must be a nonempty vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DegenerateFingerprint("fingerprint has non-finite components")
        if self.normalized and abs(float(np.linalg.norm(v)) - 1.0) > _NORM_TOL:
            raise ValueError("normalized flag set but vector is not unit length")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def nbytes(self) -> int:
        return int(self.values.nbytes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenseFingerprint):
            return NotImplemented
        return self.normalized == other.normalized and self.values.tobytes() == other.values.tobytes()

    def __hash__(self) -> int:
        return hash((b"d", self.values.tobytes()))


@dataclass(frozen=True, eq=False)
class BitSignature:
    """SimHash signature of ``width`` bits, packed big-endian into uint8.

    Padding bits in the last byte (when ``width`` is not a multiple of 8) are
    always zero.
    """

    packed: np.ndarray
    width: int

    def __post_init__(self) -> None:
        p = np.array(self.packed, dtype=np.uint8, copy=True).ravel()
        if self.width < 1:
            raise ShapeError(f"signature width must be positive, got {self.width}")
        if p.size != -(-self.width // 8):
            raise ShapeError(f"{p.size} packed bytes do not hold exactly {self.width} bits")
        pad = 8 * p.size - self.width
        if pad and p[-1] & ((1 << pad) - 1):
            raise ShapeError("padding bits must be zero")
        object.__setattr__(self, "packed", _frozen(p))

    @classmethod
    def from_bits(cls, bits: Sequence[bool] | np.ndarray) -> "BitSignature":
        b = np.asarray(bits, dtype=bool).ravel()
        return cls(np.packbits(b), int(b.size))

    @property
    def bits(self) -> np.ndarray:
        return np.unpackbits(self.packed)[: self.width].astype(bool)

    def complement(self) -> "BitSignature":
        return BitSignature.from_bits(~self.bits)

    @property
    def nbytes(self) -> int:
        return int(self.packed.nbytes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitSignature):
            return NotImplemented
        return self.width == other.width and self.packed.tobytes() == other.packed.tobytes()

    def __hash__(self) -> int:
        return hash((b"s", self.width, self.packed.tobytes()))


Fingerprint = Union[DenseFingerprint, BitSignature]


@dataclass(frozen=True, eq=False)
class HyperplaneSet:
    normals: np.ndarray
    seed: int

    @classmethod
    def generate(cls, bits: int, dim: int, seed: int) -> "HyperplaneSet":
        return cls(_hyperplanes(bits, dim, seed), seed)

    @property
    def bits(self) -> int:
        return int(self.normals.shape[0])

    @property
    def dim(self) -> int:
        return int(self.normals.shape[1])


class Scheme(str, enum.Enum):
    DENSE_MEAN = "DenseMean"
    DENSE_PREFIX_ATTENTION = "DensePrefixAttention"
    SIMHASH_OF_MEAN = "SimHashOfMean"


@dataclass(frozen=True)
class FingerprintConfig:
    scheme: Scheme = Scheme.DENSE_MEAN
    dense_dim: int = 64
    signature_bits: int = 128
    prefix_len: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.dense_dim < 1 or self.prefix_len < 1:
            raise ValueError("dense_dim and prefix_len must be positive")
        if self.signature_bits < 8 or self.signature_bits % 8:
            raise ValueError("signature_bits must be a multiple of 8 and at least 8")

    @property
    def key_kind(self) -> type:
        return BitSignature if self.scheme is Scheme.SIMHASH_OF_MEAN else DenseFingerprint

    def check_model_dim(self, d: int) -> None:
        if self.dense_dim > d:
            raise ValueError(f"dense_dim {self.dense_dim} exceeds model dimension {d}")


@lru_cache(maxsize=32)
def _hyperplanes(bits: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal((bits, dim))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return _frozen(normals)


@lru_cache(maxsize=32)
def gaussian_projection(out_dim: int, in_dim: int, seed: int) -> np.ndarray:
    """Seeded random Gaussian ``out_dim x in_dim`` matrix with unit-norm rows."""
    # Offset the seed stream so projection rows never coincide with hyperplanes.
    rng = np.random.default_rng([seed, 0x5EED])
    proj = rng.standard_normal((out_dim, in_dim))
    proj /= np.linalg.norm(proj, axis=1, keepdims=True)
    return _frozen(proj)


def _as_matrix(x: np.ndarray) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected an n x d matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        raise EmptySequence("cannot pool an empty sequence")
    return m


def mean_pool(embeddings: np.ndarray) -> np.ndarray:
    m = _as_matrix(embeddings)
    if not np.all(np.isfinite(m)):
        raise ValueError("embeddings contain non-finite values")
    return m.mean(axis=0)


def prefix_attention_stats(attention_outputs: np.ndarray, k: int) -> np.ndarray:
    """Mean over the first ``min(k, n)`` rows of the layer-1 attention output."""
    if k < 1:
        raise ValueError("prefix length must be positive")
    m = _as_matrix(attention_outputs)
    return m[:k].mean(axis=0)


def reduce_dense(v: np.ndarray, projection: np.ndarray) -> DenseFingerprint:
    v = np.asarray(v, dtype=np.float64)
    projection = np.asarray(projection, dtype=np.float64)
    if v.ndim != 1 or projection.ndim != 2 or projection.shape[1] != v.shape[0]:
        raise ShapeError(f"projection {projection.shape} does not match vector {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite values")
    y = projection @ v
    norm = np.linalg.norm(y)
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateFingerprint("projected vector has zero norm")
    return DenseFingerprint(y / norm, normalized=True)


def simhash(v: np.ndarray, planes: HyperplaneSet) -> BitSignature:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != planes.dim:
        raise ShapeError(f"vector of shape {v.shape} vs hyperplanes of dim {planes.dim}")
    if not np.any(v):
        raise DegenerateFingerprint("cannot sign-hash the zero vector")
    return BitSignature.from_bits(planes.normals @ v >= 0.0)


def cosine_similarity(a: np.ndarray | DenseFingerprint, b: np.ndarray | DenseFingerprint) -> float:
    a = a.values if isinstance(a, DenseFingerprint) else np.asarray(a, dtype=np.float64)
    b = b.values if isinstance(b, DenseFingerprint) else np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sa, sb = np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0)
    if sa == 0.0 or sb == 0.0:
        raise DegenerateFingerprint("cosine similarity of a zero vector is undefined")
    a, b = a / sa, b / sb
    # sqrt(aa * bb) rather than |a||b|: exact 1.0 when a == b.
    return float(np.clip(np.dot(a, b) / np.sqrt(np.dot(a, a) * np.dot(b, b)), -1.0, 1.0))


def signature_similarity(a: BitSignature, b: BitSignature) -> float:
    if a.width != b.width:
        raise ShapeError(f"signature widths differ: {a.width} vs {b.width}")
    differing = int(np.unpackbits(np.bitwise_xor(a.packed, b.packed)).sum())
    return 1.0 - differing / a.width


def similarity(a: Fingerprint, b: Fingerprint) -> float:
    if isinstance(a, BitSignature) and isinstance(b, BitSignature):
        return signature_similarity(a, b)
    if isinstance(a, DenseFingerprint) and isinstance(b, DenseFingerprint):
        return cosine_similarity(a, b)
    raise KeyKindError(f"cannot compare {type(a).__name__} with {type(b).__name__}")


def fingerprint(
    tokens: Sequence[int] | np.ndarray,
    model: ModelWeights,
    cfg: FingerprintConfig,
    projection: np.ndarray | None = None,
) -> Fingerprint:
    """Fingerprint a token sequence under ``cfg.scheme``.

    ``projection`` overrides the seeded Gaussian reduction for the dense
    schemes, e.g. with the components of a fitted PCA model.
    """
    from llmcache.transformer.model import attention, embed

    h0 = embed(tokens, model)
    d = model.config.dim
    if cfg.scheme is Scheme.SIMHASH_OF_MEAN:
        planes = HyperplaneSet.generate(cfg.signature_bits, d, cfg.seed)
        return simhash(mean_pool(h0.values), planes)

    cfg.check_model_dim(d)
    if projection is None:
        projection = gaussian_projection(cfg.dense_dim, d, cfg.seed)
    if cfg.scheme is Scheme.DENSE_MEAN:
        pooled = mean_pool(h0.values)
    else:
        # Only the first k rows are pooled, so only their queries are needed.
        attn = attention(h0.values, model.layers[0], query_rows=cfg.prefix_len)
        pooled = prefix_attention_stats(attn, cfg.prefix_len)
    return reduce_dense(pooled, projection)
