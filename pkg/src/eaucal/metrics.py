"""Robustness and joint uncertainty-quality metrics.

Everything here is plain numpy over finished predictions: displacement
errors, likelihood-weighted errors, uncertainty/error correlation, AUROC
for accuracy detection, and retention curves (error and F1) with their
trapezoidal areas.  Retention semantics: samples are ranked by the
per-prediction uncertainty U, most certain first; at fraction f the
ceil(f*N) most certain samples are retained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

DEFAULT_GRID = 101


@dataclass(frozen=True)
class EvaluationRecord:
    """Per-scene prediction summary consumed by the report builder."""

    scene_id: str
    plan_ades: np.ndarray          # (D,) meters
    plan_certainties: np.ndarray   # (D,) raw log-likelihood scores
    uncertainty: float             # U, higher = less certain
    weighted_ade: float            # meters
    accurate: bool                 # raw weighted_ade <= accuracy threshold
    shifted: Optional[bool] = None

    def __post_init__(self):
        if len(self.plan_ades) != len(self.plan_certainties):
            raise ValueError("plan ADE and certainty counts differ")
        if self.weighted_ade < 0:
            raise ValueError("weighted_ade must be non-negative")


@dataclass(frozen=True)
class RetentionCurve:
    fractions: np.ndarray
    values: np.ndarray
    auc: float


def ade(pred, gt):
    """Mean per-step Euclidean distance between two (T, 2) trajectories."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"ade: trajectory shapes differ ({p.shape} vs {g.shape})")
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValueError(f"ade: expected (T, 2) trajectories, got {p.shape}")
    return float(np.mean(np.linalg.norm(p - g, axis=1)))


def softmax_weights(scores):
    s = np.asarray(scores, dtype=np.float64)
    e = np.exp(s - s.max())
    return e / e.sum()


def weighted_ade_from_parts(plan_ades, plan_certainties):
    """Softmax the raw log-likelihood scores and average the plan ADEs."""
    ades = np.asarray(plan_ades, dtype=np.float64)
    if ades.size == 0:
        raise ValueError("weighted_ade: no plans")
    return float(np.dot(softmax_weights(plan_certainties), ades))


def weighted_ade(plan_set, gt):
    """Certainty-weighted ADE of a plan set against the ground truth.

    `plan_set` needs `.plans` (D trajectories, each (T, 2)) and
    `.certainties` (D,) raw log-likelihood scores, as produced by the
    trajectory model's ranker.
    """
    ades = [ade(traj, gt) for traj in plan_set.plans]
    return weighted_ade_from_parts(ades, plan_set.certainties)


def pearson_r(a, b):
    """Sample Pearson correlation; zero variance in either input is an error."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson_r: inputs must be equal-length vectors")
    if x.size < 2:
        raise ValueError("pearson_r: need at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = np.dot(xc, xc)
    vy = np.dot(yc, yc)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("pearson_r: zero variance")
    return float(np.dot(xc, yc) / math.sqrt(vx * vy))


def auroc(scores, labels):
    """Probability a random accurate sample outranks a random inaccurate one.

    Rank-based with ties counted half; both classes must be present.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("auroc: inputs must be equal-length vectors")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc: need both accurate and inaccurate samples")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    ranks[order] = np.arange(1, s.size + 1)
    # average ranks within tie groups
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    pos_rank_sum = float(ranks[y].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _retention_order(uncertainties):
    # ascending U = most certain first; ties broken by sample index
    return np.argsort(np.asarray(uncertainties, dtype=np.float64), kind="stable")


def _grid(count):
    if count < 2:
        raise ValueError("retention grid needs at least 2 points")
    return np.linspace(0.0, 1.0, count)


def _keep_counts(sample_count, grid):
    # integer-exact ceil(i*N/(grid-1)); the float grid point can sit one ulp
    # above i/(grid-1) and tip a float ceil one sample too high
    idx = np.arange(grid, dtype=np.int64)
    return (-(-(idx * sample_count) // (grid - 1))).astype(int)


def error_retention_curve(errors, uncertainties, grid=DEFAULT_GRID):
    """Mean error over all N samples with the least certain rejected (error 0).

    At fraction f the ceil(f*N) most certain samples keep their error.
    """
    e = np.asarray(errors, dtype=np.float64)
    u = np.asarray(uncertainties, dtype=np.float64)
    if e.size == 0:
        raise ValueError("error_retention_curve: empty input")
    if e.shape != u.shape or e.ndim != 1:
        raise ValueError("error_retention_curve: inputs must be equal-length vectors")
    order = _retention_order(u)
    prefix = np.concatenate(([0.0], np.cumsum(e[order])))
    fractions = _grid(grid)
    keep = _keep_counts(e.size, grid)
    values = prefix[keep] / e.size
    auc = float(np.trapezoid(values, fractions))
    return RetentionCurve(fractions, values, auc)


def f1_retention_curve(errors, uncertainties, accuracy_threshold, grid=DEFAULT_GRID):
    """F1 of accuracy detection as retention grows; returns (curve, auc, f1@95).

    Retained samples are predicted accurate: TP = retained and accurate,
    FP = retained and inaccurate, FN = rejected and accurate.  F1 is 0
    when its denominator is 0.  f1@95 reads the grid point nearest 0.95
    from below.
    """
    e = np.asarray(errors, dtype=np.float64)
    u = np.asarray(uncertainties, dtype=np.float64)
    if e.size == 0:
        raise ValueError("f1_retention_curve: empty input")
    if e.shape != u.shape or e.ndim != 1:
        raise ValueError("f1_retention_curve: inputs must be equal-length vectors")
    accurate = e <= accuracy_threshold
    order = _retention_order(u)
    acc_prefix = np.concatenate(([0.0], np.cumsum(accurate[order].astype(np.float64))))
    total_accurate = float(accurate.sum())
    fractions = _grid(grid)
    keep = _keep_counts(e.size, grid)
    tp = acc_prefix[keep]
    fp = keep - tp
    fn = total_accurate - tp
    denom = 2.0 * tp + fp + fn
    values = np.where(denom > 0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    auc = float(np.trapezoid(values, fractions))
    at95 = float(values[np.searchsorted(fractions, 0.95 + 1e-12) - 1])
    return RetentionCurve(fractions, values, auc), auc, at95


@dataclass(frozen=True)
class EvalConfig:
    accuracy_threshold: float = 1.6
    retention_grid: int = DEFAULT_GRID


def _bundle(records: Sequence[EvaluationRecord], config: EvalConfig):
    wade = np.array([r.weighted_ade for r in records], dtype=np.float64)
    unc = np.array([r.uncertainty for r in records], dtype=np.float64)
    flags = np.array([r.accurate for r in records], dtype=bool)
    out = {"count": len(records), "weighted_ade": float(wade.mean())}
    err_curve = error_retention_curve(wade, unc, config.retention_grid)
    _, f1_auc, f1_95 = f1_retention_curve(wade, unc, config.accuracy_threshold,
                                          config.retention_grid)
    out["r_auc"] = err_curve.auc
    out["f1_auc"] = f1_auc
    out["f1_at_95"] = f1_95
    # degenerate partitions (constant errors, single class) report nan
    try:
        out["pearson_r"] = pearson_r(unc, wade)
    except ValueError:
        out["pearson_r"] = float("nan")
    try:
        out["auroc"] = auroc(-unc, flags)
    except ValueError:
        out["auroc"] = float("nan")
    out["accurate_fraction"] = float(flags.mean())
    return out


def evaluation_report(records: Sequence[EvaluationRecord], config: EvalConfig = EvalConfig()):
    """Metric bundle on the full set, plus in/shifted partitions when flagged."""
    records = list(records)
    if not records:
        raise ValueError("evaluation_report: no records")
    report = {"full": _bundle(records, config)}
    if any(r.shifted is not None for r in records):
        in_part = [r for r in records if not r.shifted]
        sh_part = [r for r in records if r.shifted]
        if in_part:
            report["in_domain"] = _bundle(in_part, config)
        if sh_part:
            report["shifted"] = _bundle(sh_part, config)
    return report
