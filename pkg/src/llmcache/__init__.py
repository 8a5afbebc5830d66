"""Layer-wise reuse of transformer activations keyed by semantic fingerprints."""

from llmcache.cachebank import (
    BankStats,
    CacheBank,
    CacheEntry,
    EvictionPolicy,
    LookupResult,
    PolicyKind,
    Validation,
    make_banks,
)
from llmcache.compression import PcaModel, pca_fit, pca_project, pca_reconstruct
from llmcache.config import Config
from llmcache.errors import (
    ConfigError,
    DegenerateFingerprint,
    EmptyBank,
    EmptySequence,
    KeyKindError,
    LLMCacheError,
    NumericsError,
    ShapeError,
    SnapshotError,
    VocabError,
)
from llmcache.fingerprint import (
    BitSignature,
    DenseFingerprint,
    FingerprintConfig,
    HyperplaneSet,
    Scheme,
    cosine_similarity,
    fingerprint,
    mean_pool,
    prefix_attention_stats,
    reduce_dense,
    signature_similarity,
    simhash,
)
from llmcache.transformer import (
    HiddenState,
    InferenceTrace,
    LLMCache,
    ModelConfig,
    ModelWeights,
    embed,
    forward_nocache,
    layer_forward,
    llmcache_infer,
)
from llmcache.workload import WorkloadItem, WorkloadSpec, generate_workload, hashing_tokenizer, load_corpus

__version__ = "0.1.0"

__all__ = [
    "BankStats",
    "BitSignature",
    "CacheBank",
    "CacheEntry",
    "Config",
    "ConfigError",
    "DegenerateFingerprint",
    "DenseFingerprint",
    "EmptyBank",
    "EmptySequence",
    "EvictionPolicy",
    "FingerprintConfig",
    "HiddenState",
    "HyperplaneSet",
    "InferenceTrace",
    "KeyKindError",
    "LLMCache",
    "LLMCacheError",
    "LookupResult",
    "ModelConfig",
    "ModelWeights",
    "NumericsError",
    "PcaModel",
    "PolicyKind",
    "Scheme",
    "ShapeError",
    "SnapshotError",
    "Validation",
    "VocabError",
    "WorkloadItem",
    "WorkloadSpec",
    "cosine_similarity",
    "embed",
    "fingerprint",
    "forward_nocache",
    "generate_workload",
    "hashing_tokenizer",
    "layer_forward",
    "llmcache_infer",
    "load_corpus",
    "make_banks",
    "mean_pool",
    "pca_fit",
    "pca_project",
    "pca_reconstruct",
    "prefix_attention_stats",
    "reduce_dense",
    "signature_similarity",
    "simhash",
]
