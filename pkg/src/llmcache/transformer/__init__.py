from llmcache.transformer.model import (
    HiddenState,
    LayerWeights,
    ModelConfig,
    ModelWeights,
    attention,
    embed,
    forward_nocache,
    layer_forward,
)
from llmcache.transformer.manager import InferenceTrace, LayerDecision, LLMCache, llmcache_infer

__all__ = [
    "HiddenState",
    "InferenceTrace",
    "LLMCache",
    "LayerDecision",
    "LayerWeights",
    "ModelConfig",
    "ModelWeights",
    "attention",
    "embed",
    "forward_nocache",
    "layer_forward",
    "llmcache_infer",
]
