"""Semi-supervised node classification with an MC-dropout GCN ensemble over
a graph learned jointly from the observed topology, node features and the
training labels."""

from .data import (LabelInfo, NodeFeatures, NormalizedAdjacency, SparseGraph,
                   load_bundle, neighborhoods, normalize_adjacency,
                   subset_train_labels)
from .gcn import GcnParams, TrainConfig, mc_dropout_predict, predict_labels, train_gcn
from .gvae import GvaeConfig, GvaeParams, node_embeddings, train_gvae
from .learner import (GraphLearnConfig, LearnedGraph, calibrate_sparsity,
                      learn_graph, learn_graph_restricted, objective,
                      reduce_to_one_param)
from .pipeline import (PipelineConfig, PipelineResult, PredictiveDistribution,
                       predict, run_algorithm1)

__all__ = [
    "SparseGraph", "NodeFeatures", "LabelInfo", "NormalizedAdjacency",
    "load_bundle", "normalize_adjacency", "neighborhoods", "subset_train_labels",
    "TrainConfig", "GcnParams", "train_gcn", "predict_labels", "mc_dropout_predict",
    "GvaeConfig", "GvaeParams", "train_gvae", "node_embeddings",
    "GraphLearnConfig", "LearnedGraph", "learn_graph", "learn_graph_restricted",
    "objective", "reduce_to_one_param", "calibrate_sparsity",
    "PipelineConfig", "PipelineResult", "PredictiveDistribution",
    "run_algorithm1", "predict",
]
