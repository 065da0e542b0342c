"""Optimizers, learning-rate schedule and gradient clipping.

Parameters and gradients travel as name->array dicts; update order follows
dict insertion order, which is fixed by the model's init function, so runs
are bit-reproducible.
"""

from __future__ import annotations

import math

import numpy as np


def cosine_warmup_lr(step, total_steps, warmup_steps, lr_max):
    """Linear warmup then cosine decay to zero; `step` is 0-based.

    lr((step+1)/warmup scaled) during warmup, then
    lr_max * 0.5 * (1 + cos(pi * progress)) over the remaining steps.
    With warmup_steps=0 the first step already runs at full rate.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if step < warmup_steps:
        return lr_max * (step + 1) / warmup_steps
    remaining = max(total_steps - warmup_steps, 1)
    progress = (step - warmup_steps) / remaining
    return lr_max * 0.5 * (1.0 + math.cos(math.pi * progress))


def constant_lr(step, total_steps, warmup_steps, lr_max):
    if warmup_steps > 0 and step < warmup_steps:
        return lr_max * (step + 1) / warmup_steps
    return lr_max


SCHEDULES = {"cosine": cosine_warmup_lr, "constant": constant_lr}


def global_grad_norm(grads):
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return math.sqrt(total)


def clip_global_norm(grads, max_norm):
    """Scale all gradients so the global L2 norm is at most max_norm."""
    norm = global_grad_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
        assert global_grad_norm(grads) <= max_norm * (1.0 + 1e-9)
    return grads, norm


class Sgd:
    """Plain stochastic gradient descent."""

    def __init__(self, params):
        del params  # stateless; signature matches AdamW

    def step(self, params, grads, lr):
        for name, g in grads.items():
            params[name] -= lr * g


class AdamW:
    """Adam with decoupled weight decay.

    Weight decay is skipped for parameters whose name contains a bias or
    scalar-noise marker, the usual convention.
    """

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    @staticmethod
    def _decayed(name):
        return not ("_b" in name or name.startswith("b") or "noise" in name)

    def step(self, params, grads, lr):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and self._decayed(name):
                update = update + self.weight_decay * params[name]
            params[name] -= lr * update


OPTIMIZERS = {"sgd": Sgd, "adamw": AdamW}


def make_optimizer(name, params, weight_decay=0.01):
    if name == "sgd":
        return Sgd(params)
    if name == "adamw":
        return AdamW(params, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {name!r} (choose from {sorted(OPTIMIZERS)})")
