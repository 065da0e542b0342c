"""Training loops for both tasks, plus the warmup scan and grid search.

Per batch: forward (teacher-forced likelihood for trajectory, MC-dropout
Gaussian NLL for regression), per-sample error and certainty, soft counts,
calibration loss, total loss, backward, global-norm clip, optimizer step
under the learning-rate schedule.  With beta = 0 (or before the configured
start epoch) the calibration graph is never built, so the baseline run is
bit-identical to a calibration-free build; the calibration diagnostics are
still logged from plain numpy values.

Randomness is split into independent streams keyed off the experiment
seed (init / batch order / dropout), so enabling the calibration loss
cannot perturb batch order or mask draws.
"""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import eau
from .bnn import BnnConfig, BnnModel, bnn_error_and_certainty_node, gaussian_nll_node
from .optim import SCHEDULES, clip_global_norm, make_optimizer
from .trajectory import TrajectoryModel, TrajModelConfig, init_params


def stream(*key):
    """Independent deterministic generator for a structured key."""
    return np.random.default_rng(np.random.SeedSequence(list(key)))


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    primary_loss: float
    eauc_loss: float
    total_loss: float
    eau_measure: float
    val_loss: float
    wall_clock: float  # seconds; never persisted (see TrainingLog.save)


@dataclass
class TrainingLog:
    entries: list

    HEADER = "epoch,primary_loss,eauc_loss,total_loss,eau_measure,val_loss"

    def save(self, path):
        """Deterministic CSV; wall-clock is excluded on purpose (it would
        break the byte-identical-rerun contract) and goes to a sidecar."""
        with open(path, "w") as fh:
            fh.write("# training log v1\n")
            fh.write(self.HEADER + "\n")
            for e in self.entries:
                fh.write(f"{e.epoch},{e.primary_loss!r},{e.eauc_loss!r},"
                         f"{e.total_loss!r},{e.eau_measure!r},{e.val_loss!r}\n")

    def save_timing(self, path):
        with open(path, "w") as fh:
            fh.write("# wall-clock sidecar (not covered by determinism contract)\n")
            for e in self.entries:
                fh.write(f"{e.epoch},{e.wall_clock:.3f}\n")

    @staticmethod
    def load(path):
        entries = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("epoch,"):
                    continue
                parts = line.split(",")
                if len(parts) != 6:
                    raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
                entries.append(EpochStats(int(parts[0]), *(float(p) for p in parts[1:]),
                                          wall_clock=0.0))
        return TrainingLog(entries)


@dataclass
class TrainResult:
    best_params: dict
    final_params: dict
    log: TrainingLog
    model_meta: dict  # shapes and task info for the checkpoint header


def split_scenes(scenes, data_cfg):
    """In-distribution scenes split by seeded permutation; every shifted
    scene goes to the test partition."""
    in_dist = [s for s in scenes if not s.shifted]
    shifted = [s for s in scenes if s.shifted]
    n = len(in_dist)
    perm = np.random.default_rng(data_cfg.split_seed).permutation(n)
    n_train = int(round(data_cfg.train_ratio * n))
    n_val = int(round(data_cfg.val_ratio * n))
    pick = lambda idx: [in_dist[i] for i in np.sort(idx)]
    train = pick(perm[:n_train])
    val = pick(perm[n_train:n_train + n_val])
    test = pick(perm[n_train + n_val:]) + shifted
    return train, val, test


def _scene_arrays(scenes):
    return (np.stack([s.context for s in scenes]),
            np.stack([s.target.states for s in scenes]))


def _check_finite(value, what, epoch, batch):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite {what} at epoch {epoch}, batch {batch}")


def train_trajectory(config, scenes):
    """Teacher-forced likelihood training with optional calibration loss."""
    train, val, _ = split_scenes(scenes, config.data)
    if not train or not val:
        raise ValueError("train/validation splits are empty; check data ratios")
    x_train, y_train = _scene_arrays(train)
    x_val, y_val = _scene_arrays(val)
    model_cfg = TrajModelConfig(context_dim=x_train.shape[1], horizon=y_train.shape[1],
                                hidden=config.model.hidden,
                                timestep=train[0].target.timestep)
    model = TrajectoryModel(model_cfg)
    seed = config.experiment.seed
    params = init_params(model_cfg, stream(seed, 0))
    batch_rng = stream(seed, 1)

    opt_cfg = config.optimizer
    ecfg = config.calibration.eauc_config()
    optimizer = make_optimizer(opt_cfg.algorithm, params, opt_cfg.weight_decay)
    schedule = SCHEDULES[opt_cfg.schedule]
    n = x_train.shape[0]
    steps_per_epoch = math.ceil(n / opt_cfg.batch_size)
    total_steps = opt_cfg.epochs * steps_per_epoch
    warmup_steps = opt_cfg.warmup_epochs * steps_per_epoch

    log = TrainingLog([])
    best_val = math.inf
    best_params = copy.deepcopy(params)
    global_step = 0
    for epoch in range(opt_cfg.epochs):
        t0 = time.perf_counter()
        order = batch_rng.permutation(n)
        active = ecfg.beta > 0 and epoch >= config.calibration.start_epoch
        sums = np.zeros(4)  # primary, eauc, total, measure (sample-weighted)
        for b, start in enumerate(range(0, n, opt_cfg.batch_size)):
            idx = order[start:start + opt_cfg.batch_size]
            tape = ad.Tape()
            pn = {k: tape.leaf(v) for k, v in params.items()}
            loglik, raw_ade, _ = model.forward_batch(tape, pn, x_train[idx], y_train[idx])
            primary = ad.negate(ad.reduce_mean(loglik))
            _check_finite(primary.value, "primary loss", epoch, b)

            err_values = eau.scale_ade(raw_ade.value, ecfg)
            cert_values = eau.postprocess_certainty(loglik.value, ecfg)
            measure = eau.eau_measure(eau.hard_counts(err_values, cert_values, ecfg))
            if active:
                err = eau.scale_ade_node(tape, raw_ade, ecfg)
                cert = eau.postprocess_certainty_node(tape, loglik, ecfg)
                counts = eau.soft_counts_node(tape, err, cert, ecfg)
                eauc_node = eau.eauc_loss_node(tape, counts, ecfg)
                total = eau.total_loss_node(tape, primary, eauc_node, ecfg)
                eauc_value = float(eauc_node.value)
            else:
                total = primary
                eauc_value = eau.eauc_loss(eau.soft_counts(err_values, cert_values, ecfg), ecfg)
            _check_finite(total.value, "total loss", epoch, b)

            grads = tape.backward(total)
            grad_dict = {name: grads[pn[name].idx] for name in params}
            grad_dict, _ = clip_global_norm(grad_dict, opt_cfg.clip_norm)
            lr = schedule(global_step, total_steps, warmup_steps, opt_cfg.lr)
            optimizer.step(params, grad_dict, lr)
            global_step += 1
            w = len(idx)
            sums += w * np.array([float(primary.value), eauc_value, float(total.value), measure])

        val_ll, _ = model.loglik_batch(params, x_val, y_val)
        val_loss = float(-val_ll.mean())
        stats = EpochStats(epoch, *(float(v) for v in sums / n), val_loss=val_loss,
                           wall_clock=time.perf_counter() - t0)
        log.entries.append(stats)
        if val_loss < best_val:
            best_val = val_loss
            best_params = copy.deepcopy(params)
    meta = {"task": "trajectory", "context_dim": model_cfg.context_dim,
            "horizon": model_cfg.horizon, "hidden": model_cfg.hidden,
            "timestep": model_cfg.timestep}
    return TrainResult(best_params, params, log, meta)


def train_regression(config, table):
    """MC-dropout Gaussian NLL training with optional calibration loss.

    Runs in standardized feature/target space; calibration thresholds and
    variance bounds therefore apply to standardized quantities.
    """
    x_train, y_train = table.standardized("train")
    x_val, y_val = table.standardized("val")
    if x_train.size == 0 or x_val.size == 0:
        raise ValueError("train/validation splits are empty; check data ratios")
    model = BnnModel(BnnConfig(in_dim=x_train.shape[1], hidden=config.model.hidden,
                               dropout=config.model.dropout))
    seed = config.experiment.seed
    params = model.init_params(stream(seed, 0))
    batch_rng = stream(seed, 1)
    dropout_rng = stream(seed, 2)

    opt_cfg = config.optimizer
    ecfg = config.calibration.eauc_config()
    optimizer = make_optimizer(opt_cfg.algorithm, params, opt_cfg.weight_decay)
    schedule = SCHEDULES[opt_cfg.schedule]
    n = x_train.shape[0]
    steps_per_epoch = math.ceil(n / opt_cfg.batch_size)
    total_steps = opt_cfg.epochs * steps_per_epoch
    warmup_steps = opt_cfg.warmup_epochs * steps_per_epoch
    s_train = config.model.mc_train_samples

    log = TrainingLog([])
    best_val = math.inf
    best_params = copy.deepcopy(params)
    global_step = 0
    for epoch in range(opt_cfg.epochs):
        t0 = time.perf_counter()
        order = batch_rng.permutation(n)
        active = ecfg.beta > 0 and epoch >= config.calibration.start_epoch
        sums = np.zeros(4)
        for b, start in enumerate(range(0, n, opt_cfg.batch_size)):
            idx = order[start:start + opt_cfg.batch_size]
            tape = ad.Tape()
            pn = {k: tape.leaf(v) for k, v in params.items()}
            mean, var = model.mc_forward_node(tape, pn, x_train[idx], s_train, dropout_rng)
            nll = gaussian_nll_node(tape, mean, var, y_train[idx])
            primary = ad.reduce_mean(nll)
            _check_finite(primary.value, "primary loss", epoch, b)

            err_node, cert_node = bnn_error_and_certainty_node(tape, mean, var,
                                                               y_train[idx], ecfg)
            measure = eau.eau_measure(eau.hard_counts(err_node.value, cert_node.value, ecfg))
            if active:
                counts = eau.soft_counts_node(tape, err_node, cert_node, ecfg)
                eauc_node = eau.eauc_loss_node(tape, counts, ecfg)
                total = eau.total_loss_node(tape, primary, eauc_node, ecfg)
                eauc_value = float(eauc_node.value)
            else:
                total = primary
                eauc_value = eau.eauc_loss(
                    eau.soft_counts(err_node.value, cert_node.value, ecfg), ecfg)
            _check_finite(total.value, "total loss", epoch, b)

            grads = tape.backward(total)
            grad_dict = {name: grads[pn[name].idx] for name in params}
            grad_dict, _ = clip_global_norm(grad_dict, opt_cfg.clip_norm)
            lr = schedule(global_step, total_steps, warmup_steps, opt_cfg.lr)
            optimizer.step(params, grad_dict, lr)
            global_step += 1
            w = len(idx)
            sums += w * np.array([float(primary.value), eauc_value, float(total.value), measure])

        vm, vv = model.mc_predict_batch(params, x_val, config.evaluation.mc_eval_samples,
                                        stream(seed, 3, epoch))
        val_loss = float(np.mean(0.5 * (math.log(2 * math.pi) + np.log(vv))
                                 + (y_val - vm) ** 2 / (2 * vv)))
        stats = EpochStats(epoch, *(float(v) for v in sums / n), val_loss=val_loss,
                           wall_clock=time.perf_counter() - t0)
        log.entries.append(stats)
        if val_loss < best_val:
            best_val = val_loss
            best_params = copy.deepcopy(params)
    meta = {"task": "regression", "in_dim": model.config.in_dim,
            "hidden": model.config.hidden, "dropout": model.config.dropout}
    return TrainResult(best_params, params, log, meta)


PERCENTILES = (0, 5, 25, 50, 75, 95, 100)


def warmup_threshold_scan(config, dataset, warmup_epochs, ade_percentile=50.0,
                          cert_percentile=50.0):
    """Short beta=0 training, then distribution summaries of per-sample
    error and certainty inputs, with threshold suggestions.

    Suggestions are advisory; nothing is written back into the config.
    Clip-bound suggestions round the observed extremes outward to integers.
    """
    if warmup_epochs < 1:
        raise ValueError("warmup_epochs must be >= 1")
    warm = replace(config,
                   optimizer=replace(config.optimizer, epochs=warmup_epochs),
                   calibration=replace(config.calibration, beta=0.0))
    out = {"warmup_epochs": warmup_epochs, "task": config.experiment.task}
    if config.experiment.task == "trajectory":
        result = train_trajectory(warm, dataset)
        train, _, _ = split_scenes(dataset, config.data)
        x, y = _scene_arrays(train)
        model = TrajectoryModel(TrajModelConfig(
            context_dim=x.shape[1], horizon=y.shape[1], hidden=config.model.hidden,
            timestep=train[0].target.timestep))
        loglik, raw_ade = model.loglik_batch(result.final_params, x, y)
        scaled = eau.scale_ade(raw_ade, config.calibration.eauc_config())
        clip_lo = math.floor(loglik.min())
        clip_hi = math.ceil(loglik.max())
        if clip_hi <= clip_lo:
            clip_hi = clip_lo + 1
        cert = np.clip((loglik - clip_lo) / (clip_hi - clip_lo), 0.0, 1.0)
        out["scaled_ade_percentiles"] = _pct_table(scaled)
        out["loglik_percentiles"] = _pct_table(loglik)
        out["suggested"] = {
            "ade_th": float(np.percentile(scaled, ade_percentile)),
            "c_th": float(np.percentile(cert, cert_percentile)),
            "c_clip_lo": float(clip_lo),
            "c_clip_hi": float(clip_hi),
        }
    else:
        result = train_regression(warm, dataset)
        x, y = dataset.standardized("train")
        model = BnnModel(BnnConfig(in_dim=x.shape[1], hidden=config.model.hidden,
                                   dropout=config.model.dropout))
        mean, var = model.mc_predict_batch(result.final_params, x,
                                           config.evaluation.mc_eval_samples,
                                           stream(config.experiment.seed, 4))
        err = config.calibration.ade_scale * np.abs(mean - y)
        var_lo = float(np.percentile(var, 5.0))
        var_hi = float(np.percentile(var, 95.0))
        if var_hi <= var_lo:
            var_hi = var_lo + 1e-6
        cert = 1.0 - (np.clip(var, var_lo, var_hi) - var_lo) / (var_hi - var_lo)
        out["scaled_error_percentiles"] = _pct_table(err)
        out["variance_percentiles"] = _pct_table(var)
        out["suggested"] = {
            "ade_th": float(np.percentile(err, ade_percentile)),
            "c_th": float(np.percentile(cert, cert_percentile)),
            "var_clip_lo": var_lo,
            "var_clip_hi": var_hi,
        }
    return out


def _pct_table(values):
    return {p: float(np.percentile(values, p)) for p in PERCENTILES}


def render_scan(scan):
    """Deterministic text rendering of a warmup_threshold_scan result."""
    lines = [f"# warmup scan v1 task={scan['task']} epochs={scan['warmup_epochs']}"]
    for name, table in scan.items():
        if not isinstance(table, dict) or name == "suggested":
            continue
        lines.append(f"[{name}]")
        lines += [f"p{p} = {v!r}" for p, v in table.items()]
    lines.append("[suggested]")
    lines += [f"{k} = {v!r}" for k, v in scan["suggested"].items()]
    return "\n".join(lines) + "\n"


def grid_search(config, dataset, ade_grid, c_grid, beta_grid, evaluate_fn):
    """One short training run per (ade_th, c_th, beta) cell, ranked by
    validation error-retention AUC; ties break lexicographically.

    `evaluate_fn(config, dataset, params) -> dict` must return at least
    r_auc and the task's headline error metric on the validation split.
    """
    if not (len(ade_grid) and len(c_grid) and len(beta_grid)):
        raise ValueError("grid_search: all grids must be non-empty")
    rows = []
    trainer = train_trajectory if config.experiment.task == "trajectory" else train_regression
    for ade_th in ade_grid:
        for c_th in c_grid:
            for beta in beta_grid:
                cell = replace(config, calibration=replace(
                    config.calibration, ade_th=ade_th, c_th=c_th, beta=beta))
                result = trainer(cell, dataset)
                scores = evaluate_fn(cell, dataset, result.best_params)
                rows.append({"ade_th": ade_th, "c_th": c_th, "beta": beta, **scores})
    rows.sort(key=lambda r: (r["r_auc"], r["ade_th"], r["c_th"], r["beta"]))
    return rows
