"""Gaussian encoder-decoder trajectory predictor.

The model encodes a flat context feature vector with a two-layer tanh MLP
into the initial hidden state of a GRU decoder.  Each decoder step emits a
diagonal Gaussian over the next planar displacement.  Training uses the
teacher-forced log-likelihood (decoder consumes ground-truth previous
states); inference draws G reparameterized rollouts and keeps the D
best-scored ones.

Two execution paths exist on purpose: tape-based forwards (differentiable,
for training and gradient tests) and plain numpy forwards (fast, for
sampling and scoring).  Both share the same parameter dict; biases are
stored as (1, n) rows so the tape can tile them with a ones-column matmul
while numpy broadcasts them directly.

The decoder's first input is a zero displacement (start token); the
encoder latent carries the context, so nothing is lost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Trajectory:
    """T planar displacement states (dx, dy) at a fixed timestep."""

    states: np.ndarray  # (T, 2) meters
    timestep: float

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 2 or states.shape[1] != 2 or states.shape[0] < 1:
            raise ValueError(f"Trajectory states must be (T, 2) with T >= 1, got {states.shape}")
        if not np.all(np.isfinite(states)):
            raise ValueError("Trajectory states must be finite")
        object.__setattr__(self, "states", states)

    @property
    def horizon(self):
        return self.states.shape[0]


@dataclass(frozen=True)
class SceneSample:
    """One prediction task: context features plus the future to predict."""

    scene_id: str
    context: np.ndarray  # flat feature vector
    target: Trajectory
    shifted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "context", np.asarray(self.context, dtype=np.float64))


@dataclass(frozen=True)
class GaussianStep:
    mu: np.ndarray     # (2,)
    sigma: np.ndarray  # (2,) positive

    def __post_init__(self):
        if np.any(np.asarray(self.sigma) <= 0):
            raise ValueError("GaussianStep sigma must be positive")


@dataclass(frozen=True)
class PlanSet:
    """Top-D plans sorted by descending certainty; U = -mean(certainties)."""

    plans: np.ndarray        # (D, T, 2)
    certainties: np.ndarray  # (D,) raw log-likelihood scores
    uncertainty: float

    def __post_init__(self):
        c = np.asarray(self.certainties, dtype=np.float64)
        if np.any(np.diff(c) > 0):
            raise ValueError("PlanSet certainties must be non-increasing")
        if not math.isclose(self.uncertainty, -float(c.mean()), rel_tol=0, abs_tol=1e-9):
            raise ValueError("PlanSet uncertainty must equal -mean(certainties)")


@dataclass(frozen=True)
class TrajModelConfig:
    context_dim: int
    horizon: int
    hidden: int = 64
    timestep: float = 0.2

    def __post_init__(self):
        if self.context_dim < 1 or self.horizon < 1 or self.hidden < 1:
            raise ValueError("context_dim, horizon and hidden must be >= 1")


def init_params(config, rng):
    """Fresh parameter dict; weights scaled by 1/sqrt(fan_in), biases zero.

    The log-sigma head starts at zero bias so initial step noise is sigma=1.
    """
    h = config.hidden

    def dense(n_in, n_out):
        return rng.standard_normal((n_in, n_out)) / math.sqrt(n_in)

    params = {
        "enc_w1": dense(config.context_dim, h),
        "enc_b1": np.zeros((1, h)),
        "enc_w2": dense(h, h),
        "enc_b2": np.zeros((1, h)),
    }
    for gate in ("r", "u", "n"):
        params[f"gru_wx{gate}"] = dense(2, h)
        params[f"gru_wh{gate}"] = dense(h, h)
        params[f"gru_b{gate}"] = np.zeros((1, h))
    params["gru_bnh"] = np.zeros((1, h))  # bias inside the reset-gated term
    params["head_wmu"] = dense(h, 2)
    params["head_bmu"] = np.zeros((1, 2))
    params["head_wsig"] = dense(h, 2)
    params["head_bsig"] = np.zeros((1, 2))
    return params


PARAM_NAMES = tuple(init_params(TrajModelConfig(context_dim=1, horizon=1, hidden=1),
                                np.random.default_rng(0)).keys())


class TrajectoryModel:
    """Stateless forward logic over a parameter dict (see init_params)."""

    def __init__(self, config: TrajModelConfig):
        self.config = config

    # -- numpy path ----------------------------------------------------------

    def _check_context(self, context):
        context = np.asarray(context, dtype=np.float64)
        if context.shape[-1] != self.config.context_dim:
            raise ValueError(
                f"context length {context.shape[-1]} != configured {self.config.context_dim}")
        return context

    def encode(self, params, context):
        """Latent vector (hidden,) for one flat context vector."""
        x = self._check_context(context)
        h1 = np.tanh(x @ params["enc_w1"] + params["enc_b1"][0])
        return np.tanh(h1 @ params["enc_w2"] + params["enc_b2"][0])

    def _gru_step(self, params, x, h):
        # x (B, 2), h (B, hidden)
        r = _np_sigmoid(x @ params["gru_wxr"] + h @ params["gru_whr"] + params["gru_br"])
        u = _np_sigmoid(x @ params["gru_wxu"] + h @ params["gru_whu"] + params["gru_bu"])
        n = np.tanh(x @ params["gru_wxn"] + params["gru_bn"]
                    + r * (h @ params["gru_whn"] + params["gru_bnh"]))
        return (1.0 - u) * n + u * h

    def _heads(self, params, h):
        mu = h @ params["head_wmu"] + params["head_bmu"]
        logsig = h @ params["head_wsig"] + params["head_bsig"]
        return mu, logsig

    def sample_plans(self, params, context, count, rng):
        """Draw `count` reparameterized rollouts; returns ((G, T, 2), (G,) scores).

        Each rollout feeds its own sampled state back in; its score is its
        log-density under the model, accumulated along the way.
        """
        if count < 1:
            raise ValueError("sample_plans: count must be >= 1")
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(int(rng))
        z = self.encode(params, context)
        T = self.config.horizon
        h = np.tile(z, (count, 1))
        prev = np.zeros((count, 2))
        states = np.empty((count, T, 2))
        loglik = np.zeros(count)
        for t in range(T):
            h = self._gru_step(params, prev, h)
            mu, logsig = self._heads(params, h)
            eps = rng.standard_normal((count, 2))
            step = mu + np.exp(logsig) * eps
            # log N(step | mu, diag(exp(logsig)^2)); (step-mu)/sigma == eps
            loglik += -LOG_2PI - logsig.sum(axis=1) - 0.5 * np.sum(eps * eps, axis=1)
            states[:, t] = step
            prev = step
        return states, loglik

    def loglik_batch(self, params, contexts, targets):
        """Teacher-forced per-scene log-likelihood and mean-decode ADE (numpy).

        contexts (B, context_dim), targets (B, T, 2).  The likelihood matches
        the tape path; this one is for validation and evaluation, where no
        gradient is needed.
        """
        ctx = self._check_context(np.atleast_2d(contexts))
        targets = np.asarray(targets, dtype=np.float64)
        n, T = targets.shape[0], targets.shape[1]
        if T != self.config.horizon:
            raise ValueError(f"horizon {T} != configured {self.config.horizon}")
        h = self.encode(params, ctx)
        prev = np.zeros((n, 2))
        loglik = np.zeros(n)
        dist = np.zeros(n)
        for t in range(T):
            h = self._gru_step(params, prev, h)
            mu, logsig = self._heads(params, h)
            diff = targets[:, t] - mu
            zscore = diff * np.exp(-logsig)
            loglik += -LOG_2PI - logsig.sum(axis=1) - 0.5 * np.sum(zscore * zscore, axis=1)
            dist += np.sqrt(np.sum(diff * diff, axis=1) + 1e-12)
            prev = targets[:, t]
        return loglik, dist / T

    def score_trajectories(self, params, context, trajectories):
        """Log-likelihood of given (N, T, 2) trajectories under one context,
        decoder conditioned on each trajectory's own previous states."""
        trajs = np.asarray(trajectories, dtype=np.float64)
        if trajs.ndim == 2:
            trajs = trajs[None]
        ctx = np.tile(np.asarray(context, dtype=np.float64), (trajs.shape[0], 1))
        return self.loglik_batch(params, ctx, trajs)[0]

    # -- tape path -----------------------------------------------------------

    def forward_batch(self, tape, param_nodes, contexts, targets):
        """Teacher-forced batch forward on a tape.

        contexts (B, context_dim), targets (B, T, 2) as plain arrays.
        Returns (loglik (B,) node, ade (B,) node, per-step (mu, logsig) nodes).
        Raises on a non-finite step likelihood, naming the step.
        """
        contexts = self._check_context(np.atleast_2d(contexts))
        targets = np.asarray(targets, dtype=np.float64)
        batch = contexts.shape[0]
        T = targets.shape[1]
        if T != self.config.horizon:
            raise ValueError(f"target horizon {T} != configured {self.config.horizon}")

        p = param_nodes
        ones_col = tape.constant(np.ones((batch, 1)))

        def row(bias_node):  # (1, n) bias -> (B, n)
            return ad.matmul(ones_col, bias_node)

        x = tape.constant(contexts)
        h1 = ad.tanh(ad.add(ad.matmul(x, p["enc_w1"]), row(p["enc_b1"])))
        h = ad.tanh(ad.add(ad.matmul(h1, p["enc_w2"]), row(p["enc_b2"])))

        one = tape.constant(1.0)
        loglik = tape.constant(np.zeros(batch))
        dist_sum = tape.constant(np.zeros(batch))
        steps = []
        prev = tape.constant(np.zeros((batch, 2)))
        for t in range(T):
            r = ad.sigmoid(ad.add(ad.add(ad.matmul(prev, p["gru_wxr"]),
                                         ad.matmul(h, p["gru_whr"])), row(p["gru_br"])))
            u = ad.sigmoid(ad.add(ad.add(ad.matmul(prev, p["gru_wxu"]),
                                         ad.matmul(h, p["gru_whu"])), row(p["gru_bu"])))
            inner = ad.add(ad.matmul(h, p["gru_whn"]), row(p["gru_bnh"]))
            n = ad.tanh(ad.add(ad.add(ad.matmul(prev, p["gru_wxn"]), row(p["gru_bn"])),
                               ad.multiply(r, inner)))
            h = ad.add(ad.multiply(ad.subtract(one, u), n), ad.multiply(u, h))

            mu = ad.add(ad.matmul(h, p["head_wmu"]), row(p["head_bmu"]))
            logsig = ad.add(ad.matmul(h, p["head_wsig"]), row(p["head_bsig"]))
            steps.append((mu, logsig))

            target_t = tape.constant(targets[:, t])
            diff = ad.subtract(mu, target_t)
            zscore = ad.multiply(diff, ad.exp(ad.negate(logsig)))
            quad = ad.sumsq(zscore, axis=1)                      # (B,)
            logdet = ad.reduce_sum(logsig, axis=1)               # (B,)
            penalty = ad.add(logdet, ad.scalar_multiply(quad, 0.5))
            step_ll = ad.subtract(tape.constant(-LOG_2PI), penalty)
            if not np.all(np.isfinite(step_ll.value)):
                raise FloatingPointError(f"non-finite step likelihood at step {t}")
            loglik = ad.add(loglik, step_ll)

            # differentiable per-sample displacement error of the mean decode
            sq = ad.sumsq(diff, axis=1)
            dist = ad.sqrt(ad.add(sq, tape.constant(1e-12)))
            dist_sum = ad.add(dist_sum, dist)

            prev = target_t  # teacher forcing
        ade_node = ad.scalar_multiply(dist_sum, 1.0 / T)
        return loglik, ade_node, steps

    def teacher_forced_loglik(self, params, context, target):
        """Single-scene teacher-forced likelihood on a fresh tape.

        Returns (per-step GaussianStep list, float log-likelihood,
        (tape, param node dict, loglik node, ade node)).
        """
        if target.horizon != self.config.horizon:
            raise ValueError(f"target horizon {target.horizon} != configured {self.config.horizon}")
        tape = ad.Tape()
        param_nodes = {k: tape.leaf(v) for k, v in params.items()}
        loglik, ade_node, steps = self.forward_batch(
            tape, param_nodes, context[None, :], target.states[None])
        gauss = [GaussianStep(mu.value[0].copy(), np.exp(logsig.value[0]))
                 for mu, logsig in steps]
        c = float(ad.reduce_sum(loglik).value)
        return gauss, c, (tape, param_nodes, loglik, ade_node)


def _np_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def top_d_plans(samples, scores, d):
    """Keep the d best-scored trajectories, descending; ties by sample index."""
    samples = np.asarray(samples, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if d < 1 or d > scores.size:
        raise ValueError(f"top_d_plans: d={d} out of range for {scores.size} samples")
    order = np.argsort(-scores, kind="stable")[:d]
    kept = scores[order]
    return PlanSet(samples[order].copy(), kept, -float(kept.mean()))


def ensemble_aggregate(pooled_samples, member_scores, d):
    """Rank pooled samples by their mean score across ensemble members.

    `member_scores` is (K, N): each member's log-likelihood for each of the
    N pooled trajectories (members must rescore every pooled sample).
    """
    scores = np.asarray(member_scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("ensemble_aggregate: member_scores must be (K, N)")
    pooled = np.asarray(pooled_samples, dtype=np.float64)
    if pooled.shape[0] != scores.shape[1]:
        raise ValueError("ensemble_aggregate: sample/score count mismatch")
    return top_d_plans(pooled, scores.mean(axis=0), d)
