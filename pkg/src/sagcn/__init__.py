"""Distance-adaptive multi-layer graph convolution for implicit-feedback top-N recommendation."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, build_run_config
from .datasets import (
    SplitDataset,
    SplitSpec,
    ingest,
    ingest_and_split,
    split,
    synthetic_two_block,
)
from .distances import (
    DistanceKind,
    cosine_distance,
    distance,
    euclidean_distance,
    kl_distance,
)
from .errors import ConfigError, DataError, NumericError, SagcnError
from .evaluation import (
    MetricsReport,
    evaluate,
    ndcg_at_k,
    predict_scores,
    recall_at_k,
    topk_ranked,
)
from .graph import InteractionGraph, NormalizedAdjacency, build_graph, normalize_adjacency
from .propagation import (
    Aggregator,
    EmbeddingTable,
    FusionConfig,
    FusionWeights,
    aggregate_neighbors,
    forward,
    fuse_layer,
    fusion_weights,
)
from .training import (
    BprTriple,
    OptimizerState,
    TrainConfig,
    TrainResult,
    adam_step,
    bpr_loss,
    loss_gradient,
    sample_batch,
    train,
    xavier_init,
)

__version__ = "0.1.0"

__all__ = [
    "Aggregator",
    "BprTriple",
    "ConfigError",
    "DataError",
    "DistanceKind",
    "EmbeddingTable",
    "FusionConfig",
    "FusionWeights",
    "InteractionGraph",
    "MetricsReport",
    "NormalizedAdjacency",
    "NumericError",
    "OptimizerState",
    "RunConfig",
    "SagcnError",
    "SplitDataset",
    "SplitSpec",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "aggregate_neighbors",
    "bpr_loss",
    "build_graph",
    "build_run_config",
    "cosine_distance",
    "distance",
    "euclidean_distance",
    "evaluate",
    "forward",
    "fuse_layer",
    "fusion_weights",
    "ingest",
    "ingest_and_split",
    "kl_distance",
    "load_checkpoint",
    "loss_gradient",
    "ndcg_at_k",
    "normalize_adjacency",
    "predict_scores",
    "recall_at_k",
    "sample_batch",
    "save_checkpoint",
    "split",
    "synthetic_two_block",
    "topk_ranked",
    "train",
    "xavier_init",
]
