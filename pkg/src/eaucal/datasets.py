"""Synthetic trajectory scenes and delimited-text regression tables.

Scene generation builds kinematically consistent displacement sequences
(constant velocity, constant-yaw-rate turn, braking-to-stop maneuvers)
with Gaussian positional noise, then splits them into context features and
a future target.  A second partition is drawn from a shift profile (its
own maneuver mix and noise scale) and flagged, giving a controllable
in-distribution / shifted split.

Maneuvers are not equally noisy: turn and stop scenes get 2x and 3x the
configured noise scale.  That heterogeneity is what makes uncertainty
calibration measurable on this data.

Regression ingestion parses comma-separated numeric tables with a header
row, errors loudly on anything non-numeric, splits rows with a seeded
permutation, and standardizes features and target with train-split
statistics only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trajectory import SceneSample, Trajectory

CONTEXT_FEATURES_PER_STEP = 5  # dx, dy, speed, cos(heading), sin(heading)
MANEUVERS = ("cv", "turn", "stop")
_MANEUVER_NOISE_FACTOR = {"cv": 1.0, "turn": 2.0, "stop": 3.0}


@dataclass(frozen=True)
class SynthConfig:
    n_scenes: int = 2000
    n_shifted: int = 400
    context_steps: int = 5
    horizon_steps: int = 25
    timestep: float = 0.2
    p_cv: float = 0.6
    p_turn: float = 0.25
    p_stop: float = 0.15
    noise_scale: float = 0.05
    shift_p_cv: float = 0.2
    shift_p_turn: float = 0.4
    shift_p_stop: float = 0.4
    shift_noise_scale: float = 0.15
    seed: int = 0

    def __post_init__(self):
        for name, mix in (("maneuver mix", (self.p_cv, self.p_turn, self.p_stop)),
                          ("shift maneuver mix",
                           (self.shift_p_cv, self.shift_p_turn, self.shift_p_stop))):
            if any(p < 0 for p in mix) or not math.isclose(sum(mix), 1.0, abs_tol=1e-9):
                raise ValueError(f"{name} must be non-negative and sum to 1")
        if self.context_steps < 1 or self.horizon_steps < 1:
            raise ValueError("context_steps and horizon_steps must be >= 1")
        if self.noise_scale < 0 or self.shift_noise_scale < 0:
            raise ValueError("noise scales must be non-negative")

    @property
    def context_dim(self):
        return self.context_steps * CONTEXT_FEATURES_PER_STEP


def _displacements(maneuver, steps, dt, rng):
    """Noise-free displacement sequence for one maneuver."""
    speed = rng.uniform(2.0, 12.0)
    heading = rng.uniform(-math.pi, math.pi)
    if maneuver == "cv":
        yaw_rate = 0.0
        decel = 0.0
    elif maneuver == "turn":
        yaw_rate = rng.uniform(0.15, 0.6) * (1.0 if rng.uniform() < 0.5 else -1.0)
        decel = 0.0
    else:  # stop
        yaw_rate = 0.0
        decel = rng.uniform(1.0, 4.0)
    out = np.empty((steps, 2))
    v = speed
    th = heading
    for t in range(steps):
        out[t, 0] = v * dt * math.cos(th)
        out[t, 1] = v * dt * math.sin(th)
        th += yaw_rate * dt
        v = max(0.0, v - decel * dt)
    return out


def _context_features(context_disp, dt):
    """Per-step (dx, dy, speed, cos heading, sin heading), flattened."""
    k = context_disp.shape[0]
    feats = np.empty((k, CONTEXT_FEATURES_PER_STEP))
    feats[:, 0:2] = context_disp
    norms = np.linalg.norm(context_disp, axis=1)
    feats[:, 2] = norms / dt
    safe = np.where(norms > 0, norms, 1.0)
    feats[:, 3] = np.where(norms > 0, context_disp[:, 0] / safe, 1.0)
    feats[:, 4] = np.where(norms > 0, context_disp[:, 1] / safe, 0.0)
    return feats.ravel()


def _make_scene(scene_id, shifted, mix, noise_scale, config, rng):
    maneuver = MANEUVERS[rng.choice(3, p=mix)]
    steps = config.context_steps + config.horizon_steps
    disp = _displacements(maneuver, steps, config.timestep, rng)
    sigma = noise_scale * _MANEUVER_NOISE_FACTOR[maneuver]
    if sigma > 0:
        disp = disp + sigma * rng.standard_normal(disp.shape)
    context = _context_features(disp[:config.context_steps], config.timestep)
    target = Trajectory(disp[config.context_steps:], config.timestep)
    return SceneSample(scene_id, context, target, shifted)


def generate_scenes(config: SynthConfig):
    """Deterministic scene list: in-distribution first, then the shifted set."""
    seq = np.random.SeedSequence(config.seed)
    rng_in, rng_shift = (np.random.default_rng(s) for s in seq.spawn(2))
    mix = np.array([config.p_cv, config.p_turn, config.p_stop])
    shift_mix = np.array([config.shift_p_cv, config.shift_p_turn, config.shift_p_stop])
    scenes = [
        _make_scene(f"scene-{i:06d}", False, mix, config.noise_scale, config, rng_in)
        for i in range(config.n_scenes)
    ]
    scenes += [
        _make_scene(f"shift-{i:06d}", True, shift_mix, config.shift_noise_scale, config, rng_shift)
        for i in range(config.n_shifted)
    ]
    return scenes


def save_scenes(path, scenes, config):
    """One row per scene: id, shifted flag, context values, target values.

    The first line is a metadata comment fixing the geometry; loaders
    validate row lengths against it.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"#meta timestep={config.timestep!r} context_steps={config.context_steps} "
                 f"horizon_steps={config.horizon_steps}\n")
        writer = csv.writer(fh)
        ctx_cols = [f"ctx_{i}" for i in range(scenes[0].context.size)]
        tgt_cols = [f"tgt_{i}" for i in range(scenes[0].target.states.size)]
        writer.writerow(["scene_id", "shifted"] + ctx_cols + tgt_cols)
        for s in scenes:
            row = [s.scene_id, int(s.shifted)]
            row += [repr(float(v)) for v in s.context]
            row += [repr(float(v)) for v in s.target.states.ravel()]
            writer.writerow(row)


def load_scenes(path):
    """Inverse of save_scenes; returns (scenes, metadata dict)."""
    path = Path(path)
    with path.open() as fh:
        meta_line = fh.readline().strip()
        if not meta_line.startswith("#meta "):
            raise ValueError(f"{path}: missing #meta header line")
        meta = {}
        for item in meta_line[len("#meta "):].split():
            key, _, value = item.partition("=")
            meta[key] = float(value) if key == "timestep" else int(value)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty scene file")
        n_ctx = sum(1 for c in header if c.startswith("ctx_"))
        scenes = []
        for lineno, row in enumerate(reader, start=3):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                values = np.array([float(v) for v in row[2:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value ({exc})") from None
            target = values[n_ctx:].reshape(meta["horizon_steps"], 2)
            scenes.append(SceneSample(row[0], values[:n_ctx],
                                      Trajectory(target, meta["timestep"]),
                                      bool(int(row[1]))))
    return scenes, meta


# --- regression tables --------------------------------------------------------


@dataclass(frozen=True)
class RegressionTable:
    """Numeric table with a seeded split and train-statistic standardization."""

    features: np.ndarray       # (N, F) raw
    targets: np.ndarray        # (N,) raw
    feature_names: tuple
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float
    target_std: float

    def split(self, name):
        idx = {"train": self.train_idx, "val": self.val_idx, "test": self.test_idx}[name]
        return self.features[idx], self.targets[idx]

    def standardized(self, name):
        """(X, y) standardized with train statistics."""
        x, y = self.split(name)
        return ((x - self.feature_mean) / self.feature_std,
                (y - self.target_mean) / self.target_std)

    def destandardize_prediction(self, mean_std, var_std):
        """Map a standardized-space Gaussian back to target units."""
        return (mean_std * self.target_std + self.target_mean,
                var_std * self.target_std ** 2)


def load_regression_table(path, target_column, split_seed=0, ratios=(0.8, 0.1, 0.1)):
    """Parse a comma-separated numeric table and prepare splits.

    Errors on a missing target column, any non-numeric cell (naming row and
    column), an empty file, or a zero-variance feature column on the train
    split (standardization would divide by zero).
    """
    path = Path(path)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0,
                                                                          abs_tol=1e-9):
        raise ValueError("ratios must be three non-negative values summing to 1")
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if target_column not in header:
            raise ValueError(f"{path}: target column {target_column!r} not in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            parsed = []
            for col, cell in zip(header, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {col!r}") from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite values after parsing")
    t_col = header.index(target_column)
    feat_cols = [i for i in range(len(header)) if i != t_col]
    features = data[:, feat_cols]
    targets = data[:, t_col]
    feature_names = tuple(header[i] for i in feat_cols)

    n = data.shape[0]
    perm = np.random.default_rng(split_seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train:n_train + n_val])
    test_idx = np.sort(perm[n_train + n_val:])

    x_train = features[train_idx]
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    flat = np.flatnonzero(std == 0.0)
    if flat.size:
        raise ValueError(f"{path}: zero-variance feature column {feature_names[flat[0]]!r} "
                         "on the train split")
    y_train = targets[train_idx]
    y_std = float(y_train.std())
    if y_std == 0.0:
        raise ValueError(f"{path}: zero-variance target column {target_column!r}")
    return RegressionTable(features, targets, feature_names,
                           train_idx, val_idx, test_idx,
                           mean, std, float(y_train.mean()), y_std)
