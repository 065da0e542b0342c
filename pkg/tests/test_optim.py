"""Schedule shape, global-norm clipping and optimizer update rules."""

import math

import numpy as np
import pytest

from eaucal.optim import (AdamW, Sgd, clip_global_norm, constant_lr,
                          cosine_warmup_lr, global_grad_norm, make_optimizer)


class TestSchedule:
    def test_warmup_is_linear_and_one_based(self):
        # first step is already lr/warmup, last warmup step hits lr_max
        assert cosine_warmup_lr(0, 100, 4, 0.4) == pytest.approx(0.1)
        assert cosine_warmup_lr(1, 100, 4, 0.4) == pytest.approx(0.2)
        assert cosine_warmup_lr(3, 100, 4, 0.4) == pytest.approx(0.4)

    def test_cosine_phase_values(self):
        # halfway through decay: lr/2; final step approaches 0
        assert cosine_warmup_lr(4, 8, 0, 1.0) == pytest.approx(0.5)
        assert cosine_warmup_lr(8, 8, 0, 1.0) == pytest.approx(0.0, abs=1e-12)
        mid = cosine_warmup_lr(6, 8, 4, 1.0)
        assert mid == pytest.approx(0.5)

    def test_zero_warmup_starts_at_full_rate(self):
        assert cosine_warmup_lr(0, 10, 0, 0.3) == pytest.approx(0.3)

    def test_monotone_decay_after_warmup(self):
        values = [cosine_warmup_lr(s, 50, 5, 1.0) for s in range(5, 50)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_constant_schedule(self):
        assert constant_lr(0, 100, 4, 0.4) == pytest.approx(0.1)
        assert constant_lr(50, 100, 4, 0.4) == 0.4
        assert constant_lr(0, 100, 0, 0.4) == 0.4

    def test_total_steps_validated(self):
        with pytest.raises(ValueError):
            cosine_warmup_lr(0, 0, 0, 1.0)


class TestClipping:
    def test_norm_and_noop_below_threshold(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        clipped, norm = clip_global_norm(grads, 10.0)
        assert norm == pytest.approx(5.0)
        assert clipped is grads  # untouched when under the budget

    def test_scales_to_max_norm(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        clipped, norm = clip_global_norm(grads, 1.0)
        assert norm == pytest.approx(5.0)  # pre-clip norm is reported
        assert global_grad_norm(clipped) == pytest.approx(1.0)
        # direction preserved
        assert clipped["a"][0] / clipped["b"][0] == pytest.approx(0.75)

    def test_disabled_with_nonpositive_max(self):
        grads = {"a": np.array([30.0])}
        clipped, _ = clip_global_norm(grads, 0.0)
        assert clipped is grads


class TestSgd:
    def test_update_rule(self):
        params = {"w": np.array([1.0, 2.0])}
        Sgd(params).step(params, {"w": np.array([0.5, -1.0])}, lr=0.1)
        assert np.allclose(params["w"], [0.95, 2.1])


class TestAdamW:
    def test_first_step_is_signed_lr(self):
        # with bias correction, step 1 moves by ~lr * sign(g) when eps ~ 0
        params = {"w": np.array([0.0])}
        opt = AdamW(params, weight_decay=0.0, eps=1e-12)
        opt.step(params, {"w": np.array([2.0])}, lr=0.01)
        assert params["w"][0] == pytest.approx(-0.01, rel=1e-6)

    def test_decay_applies_only_to_weights(self):
        params = {"w1": np.full(1, 10.0), "b1": np.full(1, 10.0),
                  "enc_b2": np.full(1, 10.0), "log_noise": np.full(1, 10.0)}
        opt = AdamW(params, weight_decay=0.1)
        zero = {k: np.zeros(1) for k in params}
        opt.step(params, zero, lr=0.01)
        assert params["w1"][0] < 10.0
        for name in ("b1", "enc_b2", "log_noise"):
            assert params[name][0] == 10.0, name

    def test_zero_decay_matches_adam(self):
        p1 = {"w": np.array([1.0])}
        p2 = {"w": np.array([1.0])}
        a = AdamW(p1, weight_decay=0.0)
        b = AdamW(p2, weight_decay=0.0)
        g = {"w": np.array([0.3])}
        for _ in range(5):
            a.step(p1, g, 0.01)
            b.step(p2, g, 0.01)
        assert p1["w"][0] == p2["w"][0]

    def test_state_tracks_param_shapes(self):
        params = {"w": np.zeros((2, 3))}
        opt = AdamW(params)
        assert opt.m["w"].shape == (2, 3)
        assert opt.v["w"].shape == (2, 3)


def test_make_optimizer_dispatch():
    params = {"w": np.zeros(1)}
    assert isinstance(make_optimizer("sgd", params), Sgd)
    assert isinstance(make_optimizer("adamw", params, weight_decay=0.3), AdamW)
    with pytest.raises(ValueError, match="unknown optimizer 'rmsprop'"):
        make_optimizer("rmsprop", params)


def test_sequence_decreases_quadratic_loss():
    # sanity: both optimizers shrink 0.5 ||w||^2 from the analytic gradient
    for name in ("sgd", "adamw"):
        params = {"w": np.array([5.0, -3.0])}
        opt = make_optimizer(name, params, weight_decay=0.0)
        start = float(np.sum(params["w"] ** 2))
        for _ in range(200):
            opt.step(params, {"w": params["w"].copy()}, lr=0.05)
        assert float(np.sum(params["w"] ** 2)) < start * 1e-3, name
