"""Monte-Carlo-dropout network for scalar regression.

Two ReLU hidden layers with dropout kept active at prediction time; the
predictive distribution of an input is the Gaussian whose mean and spread
come from S stochastic forward passes, plus a trainable homoscedastic
observation noise.  The spread uses the population convention (divide by
S), so a single pass contributes zero and the observation noise keeps the
variance positive.

Dropout is inverted (masks scaled by 1/keep at draw time), so the same
forward code serves training and prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianPrediction:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("GaussianPrediction variance must be positive")


@dataclass(frozen=True)
class BnnConfig:
    in_dim: int
    hidden: int = 100
    dropout: float = 0.5

    def __post_init__(self):
        if self.in_dim < 1 or self.hidden < 1:
            raise ValueError("in_dim and hidden must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


class BnnModel:
    """Stateless forward logic over a parameter dict."""

    def __init__(self, config: BnnConfig):
        self.config = config

    def init_params(self, rng):
        """Weights scaled by sqrt(2/fan_in) (ReLU gain); log-noise starts at 0."""
        f, h = self.config.in_dim, self.config.hidden
        return {
            "w1": rng.standard_normal((f, h)) * math.sqrt(2.0 / f),
            "b1": np.zeros((1, h)),
            "w2": rng.standard_normal((h, h)) * math.sqrt(2.0 / h),
            "b2": np.zeros((1, h)),
            "w3": rng.standard_normal(h) * math.sqrt(2.0 / h),
            "b3": np.zeros(()),
            "log_noise": np.zeros(()),
        }

    def draw_masks(self, batch, rng):
        """One pair of inverted-dropout masks, shape (batch, hidden) each."""
        keep = 1.0 - self.config.dropout
        if keep >= 1.0:
            ones = np.ones((batch, self.config.hidden))
            return ones, ones.copy()
        m1 = (rng.uniform(size=(batch, self.config.hidden)) < keep) / keep
        m2 = (rng.uniform(size=(batch, self.config.hidden)) < keep) / keep
        return m1, m2

    def forward(self, params, x, masks=None):
        """One pass over (N, in_dim) features; masks=None disables dropout."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.config.in_dim:
            raise ValueError(f"feature length {x.shape[1]} != configured {self.config.in_dim}")
        h1 = np.maximum(x @ params["w1"] + params["b1"], 0.0)
        if masks is not None:
            h1 = h1 * masks[0]
        h2 = np.maximum(h1 @ params["w2"] + params["b2"], 0.0)
        if masks is not None:
            h2 = h2 * masks[1]
        return h2 @ params["w3"] + params["b3"]

    def mc_predict_batch(self, params, x, samples, rng):
        """(means, variances) over (N, in_dim) from S dropout passes."""
        if samples < 1:
            raise ValueError("mc_predict: samples must be >= 1")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(int(rng))
        passes = np.stack([self.forward(params, x, self.draw_masks(x.shape[0], rng))
                           for _ in range(samples)])
        mean = passes.mean(axis=0)
        spread = np.mean((passes - mean) ** 2, axis=0)  # population convention
        noise_var = math.exp(2.0 * float(params["log_noise"]))
        return mean, spread + noise_var

    def mc_predict(self, params, x, samples, rng):
        mean, var = self.mc_predict_batch(params, np.asarray(x)[None, :], samples, rng)
        return GaussianPrediction(float(mean[0]), float(var[0]))

    # -- tape path -----------------------------------------------------------

    def forward_node(self, tape, param_nodes, x_node, masks, ones_col):
        h1 = ad.relu(ad.add(ad.matmul(x_node, param_nodes["w1"]),
                            ad.matmul(ones_col, param_nodes["b1"])))
        h1 = ad.multiply(h1, tape.constant(masks[0]))
        h2 = ad.relu(ad.add(ad.matmul(h1, param_nodes["w2"]),
                            ad.matmul(ones_col, param_nodes["b2"])))
        h2 = ad.multiply(h2, tape.constant(masks[1]))
        return ad.add(ad.matmul(h2, param_nodes["w3"]), param_nodes["b3"])  # (B,)

    def mc_forward_node(self, tape, param_nodes, x, samples, rng):
        """Differentiable MC prediction: returns ((B,) mean, (B,) variance).

        The MC spread is a mean of squared deviations, so it cannot go
        negative; adding exp(2 log_noise) keeps the total strictly positive.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        batch = x.shape[0]
        x_node = tape.constant(x)
        ones_col = tape.constant(np.ones((batch, 1)))
        passes = [self.forward_node(tape, param_nodes, x_node, self.draw_masks(batch, rng),
                                    ones_col)
                  for _ in range(samples)]
        total = passes[0]
        for p in passes[1:]:
            total = ad.add(total, p)
        mean = ad.scalar_multiply(total, 1.0 / samples)
        dev_sq = None
        for p in passes:
            dev = ad.subtract(p, mean)
            sq = ad.multiply(dev, dev)
            dev_sq = sq if dev_sq is None else ad.add(dev_sq, sq)
        spread = ad.scalar_multiply(dev_sq, 1.0 / samples)
        noise_var = ad.exp(ad.scalar_multiply(param_nodes["log_noise"], 2.0))
        return mean, ad.add(spread, noise_var)


def gaussian_nll(pred, target):
    """0.5 log(2 pi var) + (target - mean)^2 / (2 var) for one prediction."""
    if not pred.variance > 0:
        raise ValueError("gaussian_nll: variance must be positive")
    resid = float(target) - pred.mean
    return 0.5 * (LOG_2PI + math.log(pred.variance)) + resid * resid / (2.0 * pred.variance)


def gaussian_nll_node(tape, mean_node, var_node, targets):
    """Per-sample NLL vector node for (B,) mean/variance nodes."""
    if np.any(var_node.value <= 0):
        raise ValueError("gaussian_nll: variance must be positive")
    y = tape.constant(np.asarray(targets, dtype=np.float64))
    diff = ad.subtract(y, mean_node)
    log_var = ad.log(var_node)
    quad = ad.multiply(ad.multiply(diff, diff), ad.exp(ad.negate(log_var)))
    return ad.scalar_multiply(ad.add(ad.add(tape.constant(LOG_2PI), log_var), quad), 0.5)


def bnn_error_and_certainty(pred, target, config):
    """Scaled absolute error and variance-based certainty for one prediction.

    Certainty is 1 minus the min-max-normalized clamp of the predictive
    variance to [var_clip_lo, var_clip_hi].
    """
    err = config.ade_scale * abs(pred.mean - float(target))
    span = config.var_clip_hi - config.var_clip_lo
    clipped = min(max(pred.variance, config.var_clip_lo), config.var_clip_hi)
    return err, 1.0 - (clipped - config.var_clip_lo) / span


def bnn_error_and_certainty_node(tape, mean_node, var_node, targets, config):
    """Tape version over (B,) nodes; |.| built from two relu branches."""
    y = tape.constant(np.asarray(targets, dtype=np.float64))
    diff = ad.subtract(mean_node, y)
    abs_err = ad.add(ad.relu(diff), ad.relu(ad.negate(diff)))
    err = ad.scalar_multiply(abs_err, config.ade_scale)
    span = config.var_clip_hi - config.var_clip_lo
    clipped = ad.clamp(var_node, config.var_clip_lo, config.var_clip_hi)
    norm = ad.scalar_multiply(ad.subtract(clipped, tape.constant(config.var_clip_lo)), 1.0 / span)
    cert = ad.subtract(tape.constant(1.0), norm)
    return err, cert
