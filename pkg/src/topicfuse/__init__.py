"""Complementary fine-tuning of a topic model and a compact transformer encoder."""

from .costing import estimate_co2, pareto_frontier, predict_ops_batch, predict_ops_epoch
from .estimators import MeanPooledClassifier, NvdmTransformer, TopicFusedClassifier
from .trainer import TrainConfig, evaluate, finetune_joint, prepare_corpus, pretrain_nvdm, run_baseline

__all__ = [
    "MeanPooledClassifier",
    "NvdmTransformer",
    "TopicFusedClassifier",
    "TrainConfig",
    "estimate_co2",
    "evaluate",
    "finetune_joint",
    "pareto_frontier",
    "predict_ops_batch",
    "predict_ops_epoch",
    "prepare_corpus",
    "pretrain_nvdm",
    "run_baseline",
]

__version__ = "0.1.0"
