"""Desk-scale universal incremental learning on frozen features.

Scenario generation, synthetic or ingested embeddings, a linear head trained
with cross-entropy plus entropy minimization under per-class gradient
recalibration, and the evaluation/analysis metrics around it.
"""

from .dataset import (LabeledSample, Profile, SampleSet, SyntheticConfig, TaskDataset, class_histogram,
                      ingest_embeddings, parse_profile, synthesize)
from .experiment import ExperimentPlan, ablation_methods, gamma_sweep_methods, load_plan, parse_plan, run_plan
from .metrics import (AccuracyMatrix, avg_acc, class_gradient_profile, entropy_profile, forgetting,
                      per_class_accuracy, weighted_acc)
from .model import (ClassifierState, entropy, expand_head, forward, grads, loss_ce, loss_em, numerical_grads,
                    pde, predict)
from .recalibration import (RecalConfig, combine, direction_recalibrate, gcs, magnitude_recalibrate,
                            recalibrate, worst_case_alignment)
from .scenario import (GridSpec, Regime, ScenarioSpec, degenerate_to_vil, generate_scenario, parse_scenario,
                       serialize_scenario)
from .trainer import RunRecord, TrainConfig, ablation, accuracy_matrix, evaluate_all, train_stream

__all__ = [
    "LabeledSample",
    "Profile",
    "SampleSet",
    "SyntheticConfig",
    "TaskDataset",
    "class_histogram",
    "ingest_embeddings",
    "parse_profile",
    "synthesize",
    "ExperimentPlan",
    "ablation_methods",
    "gamma_sweep_methods",
    "load_plan",
    "parse_plan",
    "run_plan",
    "AccuracyMatrix",
    "avg_acc",
    "class_gradient_profile",
    "entropy_profile",
    "forgetting",
    "per_class_accuracy",
    "weighted_acc",
    "ClassifierState",
    "entropy",
    "expand_head",
    "forward",
    "grads",
    "loss_ce",
    "loss_em",
    "numerical_grads",
    "pde",
    "predict",
    "RecalConfig",
    "combine",
    "direction_recalibrate",
    "gcs",
    "magnitude_recalibrate",
    "recalibrate",
    "worst_case_alignment",
    "GridSpec",
    "Regime",
    "ScenarioSpec",
    "degenerate_to_vil",
    "generate_scenario",
    "parse_scenario",
    "serialize_scenario",
    "RunRecord",
    "TrainConfig",
    "ablation",
    "accuracy_matrix",
    "evaluate_all",
    "train_stream",
]

__version__ = "0.1.0"
