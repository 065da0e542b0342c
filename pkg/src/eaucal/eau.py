"""Error-aligned uncertainty: categorization, measure and calibration loss.

Each sample carries a scaled error `ade` and a certainty `c` in [0, 1].
Thresholds split a batch into four categories:

    LC  ade <= ade_th and c >  c_th   accurate and certain      (aligned)
    LU  ade <= ade_th and c <= c_th   accurate but uncertain    (misaligned)
    HC  ade >  ade_th and c >  c_th   inaccurate but certain    (misaligned)
    HU  ade >  ade_th and c <= c_th   inaccurate and uncertain  (aligned)

The alignment measure is the aligned fraction (n_LC + n_HU) / N.  The
training loss replaces hard counts with differentiable masses built from
tanh(ade) and c; category membership itself stays hard and carries no
gradient.  Functions ending in `_node` build tape graphs for training;
their plain counterparts are numpy and serve evaluation and logging.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import autodiff as ad

LU, LC, HC, HU = 0, 1, 2, 3
CATEGORY_NAMES = ("LU", "LC", "HC", "HU")


@dataclass(frozen=True)
class EaucConfig:
    """Thresholds and weights for the calibration loss.

    `ade_scale` maps raw errors to the range the soft counts expect, so
    `ade_th` applies to scaled errors.  Certainties come from clipping
    log-likelihoods to [c_clip_lo, c_clip_hi] and normalizing to [0, 1].
    """

    ade_th: float = 0.8
    c_th: float = 0.6
    beta: float = 200.0
    gamma: float = 3.0
    epsilon: float = 1e-8
    ade_scale: float = 0.5
    c_clip_lo: float = 0.0
    c_clip_hi: float = 100.0
    # regression only: predictive-variance bounds for the certainty mapping
    var_clip_lo: float = 0.0
    var_clip_hi: float = 1.0

    def __post_init__(self):
        if not self.ade_th > 0:
            raise ValueError("ade_th must be positive")
        if not 0.0 < self.c_th < 1.0:
            raise ValueError("c_th must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.gamma < 1.0:
            raise ValueError("gamma must be >= 1")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if not self.c_clip_lo < self.c_clip_hi:
            raise ValueError("c_clip_lo must be < c_clip_hi")
        if not self.var_clip_lo < self.var_clip_hi:
            raise ValueError("var_clip_lo must be < var_clip_hi")


@dataclass(frozen=True)
class SampleAssessment:
    """One sample's scaled error, certainty and hard category."""

    ade: float
    certainty: float
    category: str


@dataclass(frozen=True)
class SoftCounts:
    """Differentiable category masses; fields are floats or tape nodes."""

    n_lc: Any
    n_lu: Any
    n_hc: Any
    n_hu: Any


def postprocess_certainty(loglik, config):
    """Clip raw log-likelihoods to [c_clip_lo, c_clip_hi] and min-max normalize."""
    ll = np.asarray(loglik, dtype=np.float64)
    clipped = np.clip(ll, config.c_clip_lo, config.c_clip_hi)
    return (clipped - config.c_clip_lo) / (config.c_clip_hi - config.c_clip_lo)


def scale_ade(raw_ade, config):
    """Scaled error used by categorization and the soft counts."""
    return config.ade_scale * np.asarray(raw_ade, dtype=np.float64)


def categorize(ade, certainty, config):
    """Hard category codes per sample; both boundaries fall on the <= side.

    Codes index into CATEGORY_NAMES; inputs must share a shape.
    """
    e = np.asarray(ade, dtype=np.float64)
    c = np.asarray(certainty, dtype=np.float64)
    if e.shape != c.shape:
        raise ValueError(f"categorize: ade shape {e.shape} != certainty shape {c.shape}")
    low = e <= config.ade_th
    certain = c > config.c_th
    cats = np.empty(e.shape, dtype=np.int64)
    cats[low & ~certain] = LU
    cats[low & certain] = LC
    cats[~low & certain] = HC
    cats[~low & ~certain] = HU
    return cats


def assess(ade, certainty, config):
    return SampleAssessment(float(ade), float(certainty),
                            CATEGORY_NAMES[int(categorize(ade, certainty, config))])


def hard_counts(ade, certainty, config):
    """Category sizes as (n_lc, n_lu, n_hc, n_hu) ints, the eau_measure order."""
    binned = np.bincount(categorize(ade, certainty, config).ravel(), minlength=4)
    return int(binned[LC]), int(binned[LU]), int(binned[HC]), int(binned[HU])


def eau_measure(counts):
    """Aligned fraction (n_LC + n_HU) / N from (n_lc, n_lu, n_hc, n_hu) counts."""
    n_lc, n_lu, n_hc, n_hu = counts
    total = n_lc + n_lu + n_hc + n_hu
    if total <= 0:
        raise ValueError("eau_measure: empty batch")
    return (n_lc + n_hu) / total


def soft_counts(ade, certainty, config):
    """Differentiable category masses (numpy version, for logging).

    Accurate categories weight by 1 - tanh(ade), inaccurate by tanh(ade);
    certain categories weight by c, uncertain by 1 - c.  Each sum runs over
    the hard members of its category only.
    """
    e = np.asarray(ade, dtype=np.float64)
    c = np.asarray(certainty, dtype=np.float64)
    if e.size == 0:
        raise ValueError("soft_counts: empty batch")
    cats = categorize(e, c, config)
    t = np.tanh(e)
    n_lc = float(np.sum((1.0 - t) * c, where=cats == LC))
    n_lu = float(np.sum((1.0 - t) * (1.0 - c), where=cats == LU))
    n_hc = float(np.sum(t * c, where=cats == HC))
    n_hu = float(np.sum(t * (1.0 - c), where=cats == HU))
    return SoftCounts(n_lc, n_lu, n_hc, n_hu)


def eauc_loss(counts, config):
    """-log of the gamma-weighted aligned mass fraction.

    Computed as log(den) - log(num) so perfect alignment gives exactly 0;
    epsilon is added to both sides to keep empty categories finite.
    """
    num = config.gamma * counts.n_lc + counts.n_hu + config.epsilon
    den = config.gamma * counts.n_lc + counts.n_lu + counts.n_hc + counts.n_hu + config.epsilon
    return float(np.log(den) - np.log(num))


def total_loss(primary, eauc, config):
    """Primary likelihood term plus beta-weighted calibration term."""
    return float(primary) + config.beta * float(eauc)


# --- tape variants, used inside training steps --------------------------------


def postprocess_certainty_node(tape, loglik_node, config):
    clamped = ad.clamp(loglik_node, config.c_clip_lo, config.c_clip_hi)
    shifted = ad.subtract(clamped, tape.constant(config.c_clip_lo))
    return ad.scalar_multiply(shifted, 1.0 / (config.c_clip_hi - config.c_clip_lo))


def scale_ade_node(tape, raw_ade_node, config):
    return ad.scalar_multiply(raw_ade_node, config.ade_scale)


def soft_counts_node(tape, ade_node, certainty_node, config):
    """Tape version of soft_counts over vector nodes.

    Category masks come from current values and enter as constants, so
    gradients flow only through the tanh(ade) and certainty factors.
    """
    if ade_node.value.size == 0:
        raise ValueError("soft_counts: empty batch")
    cats = categorize(ade_node.value, certainty_node.value, config)
    t = ad.tanh(ade_node)
    one = tape.constant(1.0)
    anti_t = ad.subtract(one, t)
    anti_c = ad.subtract(one, certainty_node)

    def gated(code, error_factor, cert_factor):
        mask = tape.constant((cats == code).astype(np.float64))
        return ad.reduce_sum(ad.multiply(mask, ad.multiply(error_factor, cert_factor)))

    return SoftCounts(
        n_lc=gated(LC, anti_t, certainty_node),
        n_lu=gated(LU, anti_t, anti_c),
        n_hc=gated(HC, t, certainty_node),
        n_hu=gated(HU, t, anti_c),
    )


def eauc_loss_node(tape, counts, config):
    weighted_lc = ad.scalar_multiply(counts.n_lc, config.gamma)
    eps = tape.constant(config.epsilon)
    num = ad.add(ad.add(weighted_lc, counts.n_hu), eps)
    den = ad.add(ad.add(weighted_lc, counts.n_lu), ad.add(ad.add(counts.n_hc, counts.n_hu), eps))
    return ad.subtract(ad.log(den), ad.log(num))


def total_loss_node(tape, primary_node, eauc_node, config):
    return ad.add(primary_node, ad.scalar_multiply(eauc_node, config.beta))
