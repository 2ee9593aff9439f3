# Model blocks
from app.nn.attention import (
    CrossSpatioTemporalAttention,
    DST2Former,
    EncoderLayer,
    MultiHeadAttention,
    SpatialEncoder,
    TemporalEncoder,
)
from app.nn.dtrformer import DTRformer, build_model
from app.nn.embedding import EmbeddingLayer
from app.nn.graph_fusion import ARMSA, ARMSALayer, DynamicStaticFusion, GraphProjection, MultiViewGraphFusion
from app.nn.head import PredictionHead
from app.nn.module import FeedForward, LayerNorm, Linear, Module

__all__ = [
    "CrossSpatioTemporalAttention",
    "DST2Former",
    "EncoderLayer",
    "MultiHeadAttention",
    "SpatialEncoder",
    "TemporalEncoder",
    "DTRformer",
    "build_model",
    "EmbeddingLayer",
    "ARMSA",
    "ARMSALayer",
    "DynamicStaticFusion",
    "GraphProjection",
    "MultiViewGraphFusion",
    "PredictionHead",
    "FeedForward",
    "LayerNorm",
    "Linear",
    "Module",
]
