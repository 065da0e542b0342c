"""Held-out evaluation: build per-scene records, render the metric report,
and persist records and retention curves as deterministic text.

Trajectory scenes are scored with sample-then-rank: each ensemble member
draws G rollouts, every member rescores the pooled K*G candidates, and the
top D by mean score form the plan set.  Regression rows are scored with
MC-dropout moments mapped back to original target units.

Sampling randomness is keyed (seed, 10, member, scene_index), so records
are reproducible and independent of evaluation order.
"""

from __future__ import annotations

import math

import numpy as np

from . import metrics
from .bnn import BnnConfig, BnnModel
from .metrics import EvaluationRecord
from .trajectory import TrajectoryModel, TrajModelConfig, ensemble_aggregate
from .training import stream


def evaluate_trajectory(config, member_params, scenes):
    """EvaluationRecords for `scenes` under a K-member ensemble.

    `member_params` is a list of parameter dicts; a single-model run is the
    K=1 special case and uses the identical code path.
    """
    if not member_params:
        raise ValueError("evaluate_trajectory: need at least one parameter set")
    if not scenes:
        raise ValueError("evaluate_trajectory: no scenes")
    ecfg = config.evaluation
    seed = config.experiment.seed
    model = TrajectoryModel(TrajModelConfig(
        context_dim=scenes[0].context.shape[0],
        horizon=scenes[0].target.horizon,
        hidden=config.model.hidden,
        timestep=scenes[0].target.timestep))
    records = []
    for idx, scene in enumerate(scenes):
        pooled = np.concatenate([
            model.sample_plans(p, scene.context, ecfg.samples_g, stream(seed, 10, m, idx))[0]
            for m, p in enumerate(member_params)])
        member_scores = np.stack([
            model.score_trajectories(p, scene.context, pooled) for p in member_params])
        plan_set = ensemble_aggregate(pooled, member_scores, ecfg.top_d)
        plan_ades = np.array([metrics.ade(pl, scene.target.states) for pl in plan_set.plans])
        wade = metrics.weighted_ade_from_parts(plan_ades, plan_set.certainties)
        records.append(EvaluationRecord(
            scene_id=scene.scene_id,
            plan_ades=plan_ades,
            plan_certainties=plan_set.certainties,
            uncertainty=plan_set.uncertainty,
            weighted_ade=wade,
            accurate=bool(wade <= ecfg.accuracy_threshold),
            shifted=scene.shifted))
    return records


def evaluate_regression(config, params, table, split="test"):
    """(records, summary) for one split; errors are in original target units.

    summary carries the Gaussian NLL and RMSE in original units, the pair
    used to compare regression runs.
    """
    x_std, _ = table.standardized(split)
    _, y_raw = table.split(split)
    if x_std.shape[0] == 0:
        raise ValueError(f"evaluate_regression: split '{split}' is empty")
    ecfg = config.evaluation
    model = BnnModel(BnnConfig(in_dim=x_std.shape[1], hidden=config.model.hidden,
                               dropout=config.model.dropout))
    mean_std, var_std = model.mc_predict_batch(params, x_std, ecfg.mc_eval_samples,
                                               stream(config.experiment.seed, 10))
    mean, var = table.destandardize_prediction(mean_std, var_std)
    err = np.abs(mean - y_raw)
    idx = {"train": table.train_idx, "val": table.val_idx, "test": table.test_idx}[split]
    records = [EvaluationRecord(
        scene_id=f"row-{int(row):06d}",
        plan_ades=np.array([err[i]]),
        plan_certainties=np.array([-var[i]]),
        uncertainty=float(var[i]),
        weighted_ade=float(err[i]),
        accurate=bool(err[i] <= ecfg.accuracy_threshold),
        shifted=None) for i, row in enumerate(idx)]
    nll = float(np.mean(0.5 * (math.log(2 * math.pi) + np.log(var))
                        + (y_raw - mean) ** 2 / (2 * var)))
    rmse = float(np.sqrt(np.mean((y_raw - mean) ** 2)))
    return records, {"nll": nll, "rmse": rmse}


_BUNDLE_KEYS = ("count", "weighted_ade", "pearson_r", "r_auc", "f1_auc",
                "f1_at_95", "auroc", "accurate_fraction")
_SECTION_ORDER = ("full", "in_domain", "shifted")


def render_report(report, extras=None):
    """Deterministic text rendering of an evaluation_report dict."""
    lines = ["# evaluation report v1"]
    for section in _SECTION_ORDER:
        if section not in report:
            continue
        lines.append(f"[{section}]")
        bundle = report[section]
        for key in _BUNDLE_KEYS:
            v = bundle[key]
            lines.append(f"{key} = {v if isinstance(v, int) else repr(float(v))}")
    if extras:
        lines.append("[summary]")
        lines += [f"{k} = {float(v)!r}" for k, v in sorted(extras.items())]
    return "\n".join(lines) + "\n"


def write_curve(path, curve):
    with open(path, "w") as fh:
        fh.write("# retention curve v1\nfraction,value\n")
        for f, v in zip(curve.fractions, curve.values):
            fh.write(f"{float(f)!r},{float(v)!r}\n")


def read_curve(path):
    fractions, values = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("fraction,"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
            fractions.append(float(parts[0]))
            values.append(float(parts[1]))
    f = np.array(fractions)
    v = np.array(values)
    return metrics.RetentionCurve(f, v, float(np.trapezoid(v, f)))


def build_curves(records, eval_config):
    """Error and F1 retention curves over the full record set."""
    wade = np.array([r.weighted_ade for r in records])
    unc = np.array([r.uncertainty for r in records])
    err_curve = metrics.error_retention_curve(wade, unc, eval_config.retention_grid)
    f1_curve, _, _ = metrics.f1_retention_curve(wade, unc, eval_config.accuracy_threshold,
                                                eval_config.retention_grid)
    return {"error_retention": err_curve, "f1_retention": f1_curve}


# --- record persistence ---------------------------------------------------------

_RECORDS_MAGIC = "# evaluation records v1"


def save_records(path, records):
    """One line per scene; plan lists are ';'-joined repr floats so a
    load/save cycle is byte-identical."""
    with open(path, "w") as fh:
        fh.write(_RECORDS_MAGIC + "\n")
        fh.write("scene_id,shifted,uncertainty,weighted_ade,accurate,plan_ades,plan_certainties\n")
        for r in records:
            shifted = "-" if r.shifted is None else str(int(r.shifted))
            ades = ";".join(repr(float(a)) for a in r.plan_ades)
            certs = ";".join(repr(float(c)) for c in r.plan_certainties)
            fh.write(f"{r.scene_id},{shifted},{float(r.uncertainty)!r},"
                     f"{float(r.weighted_ade)!r},{int(r.accurate)},{ades},{certs}\n")


def load_records(path):
    records = []
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != _RECORDS_MAGIC:
            raise ValueError(f"{path}:1: not an evaluation records file")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line or line.startswith("scene_id,"):
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise ValueError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
            sid, shifted, unc, wade, acc, ades, certs = parts
            try:
                records.append(EvaluationRecord(
                    scene_id=sid,
                    plan_ades=np.array([float(a) for a in ades.split(";")]),
                    plan_certainties=np.array([float(c) for c in certs.split(";")]),
                    uncertainty=float(unc),
                    weighted_ade=float(wade),
                    accurate=bool(int(acc)),
                    shifted=None if shifted == "-" else bool(int(shifted))))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise ValueError(f"{path}: no records")
    return records
