"""Exception hierarchy shared across the package."""


class LLMCacheError(Exception):
    """Base class for all errors raised by llmcache."""


class EmptySequence(LLMCacheError, ValueError):
    pass


class DegenerateFingerprint(LLMCacheError, ValueError):
    """A fingerprint would be built from a zero vector and could match anything."""


class ShapeError(LLMCacheError, ValueError):
    pass


class KeyKindError(LLMCacheError, TypeError):
    """Dense key used against a signature bank, or the other way round."""


class EmptyBank(LLMCacheError, LookupError):
    pass


class VocabError(LLMCacheError, IndexError):
    pass


class NumericsError(LLMCacheError, FloatingPointError):
    pass


class ConfigError(LLMCacheError, ValueError):
    pass


class SnapshotError(LLMCacheError, ValueError):
    pass
