"""Error-aligned uncertainty calibration for trajectory and regression models.

The package trains probabilistic predictors whose confidence tracks their
error: a sampling trajectory decoder and an MC-dropout regressor, both
optimized with a differentiable alignment loss on top of the usual
likelihood objective.  Submodules:

- autodiff: reverse-mode tape over float64 numpy arrays
- kernels: compiled elementwise core with a pure-Python fallback
- eau: alignment categories, soft counts, calibration loss
- trajectory / bnn: the two model families
- datasets: synthetic scene generator and CSV regression ingestion
- metrics / evaluation: error, correlation, retention analyses
- training / optim / config / checkpoint / cli: experiment plumbing
"""

from . import (autodiff, bnn, checkpoint, config, datasets, eau, evaluation,
               kernels, metrics, optim, trajectory, training)
from .eau import EaucConfig, SoftCounts, eau_measure, eauc_loss, soft_counts, total_loss
from .metrics import (EvalConfig, EvaluationRecord, RetentionCurve, ade, auroc,
                      error_retention_curve, evaluation_report, f1_retention_curve,
                      pearson_r, weighted_ade)

__version__ = "0.1.0"

__all__ = [
    "autodiff", "bnn", "checkpoint", "config", "datasets", "eau", "evaluation",
    "kernels", "metrics", "optim", "trajectory", "training",
    "EaucConfig", "SoftCounts", "eau_measure", "eauc_loss", "soft_counts", "total_loss",
    "EvalConfig", "EvaluationRecord", "RetentionCurve", "ade", "auroc",
    "error_retention_curve", "evaluation_report", "f1_retention_curve",
    "pearson_r", "weighted_ade",
    "__version__",
]
