"""Optimizer and schedule contracts, checked against an independent oracle."""

import math

import numpy as np
import pytest

from tglink import autodiff as ad
from tglink.autodiff import NonFiniteError
from tglink.optim import OptimizerState, cosine_lr, radam_step


def radam_oracle(p0, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Straight-line scalar transcription of the published update rule."""
    m = v = 0.0
    p = p0
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        rho = rho_inf - 2 * t * (b2 ** t) / (1 - b2 ** t)
        if rho > 4.0:
            rect = math.sqrt(((rho - 4) * (rho - 2) * rho_inf)
                             / ((rho_inf - 4) * (rho_inf - 2) * rho))
            p = p - lr * rect * m_hat / (math.sqrt(v / (1 - b2 ** t)) + eps)
        else:
            p = p - lr * m_hat
    return p


def _single_param(value=1.0):
    p = ad.parameter(np.array([value]))
    named = [("w", p)]
    return p, named, OptimizerState(named)


class TestRadam:
    def test_matches_oracle_over_ten_steps(self):
        rng = np.random.default_rng(11)
        grads = rng.standard_normal(10)
        p, named, state = _single_param(0.5)
        for g in grads:
            p.grad = np.array([g])
            radam_step(state, named, lr=1e-2)
        expected = radam_oracle(0.5, grads, lr=1e-2)
        assert p.data[0] == pytest.approx(expected, abs=1e-12)

    def test_zero_gradient_leaves_params(self):
        p, named, state = _single_param(2.0)
        for _ in range(5):
            p.grad = np.zeros(1)
            radam_step(state, named, lr=1e-2)
        assert p.data[0] == 2.0

    def test_constant_gradient_descends_monotonically(self):
        p, named, state = _single_param(0.0)
        values = []
        for _ in range(20):
            p.grad = np.array([1.0])
            radam_step(state, named, lr=1e-2)
            values.append(p.data[0])
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_lr_zero_is_identity(self):
        p, named, state = _single_param(1.5)
        p.grad = np.array([3.0])
        radam_step(state, named, lr=0.0)
        assert p.data[0] == 1.5

    def test_missing_gradient_skipped(self):
        p, named, state = _single_param(1.0)
        radam_step(state, named, lr=1e-2)
        assert p.data[0] == 1.0

    def test_non_finite_gradient_names_parameter(self):
        p, named, state = _single_param()
        p.grad = np.array([np.nan])
        with pytest.raises(NonFiniteError, match="'w'"):
            radam_step(state, named, lr=1e-2)

    def test_early_steps_are_momentum_sgd(self):
        # With beta2=0.999 the rectification only activates at step 5.
        p, named, state = _single_param(0.0)
        p.grad = np.array([2.0])
        radam_step(state, named, lr=1e-2)
        assert p.data[0] == pytest.approx(-1e-2 * 2.0, abs=1e-15)


class TestCosine:
    def test_endpoints_exact(self):
        assert cosine_lr(0, 100, 3e-4) == 3e-4
        assert cosine_lr(100, 100, 3e-4) == 0.0

    def test_midpoint_half(self):
        assert cosine_lr(50, 100, 2e-3) == pytest.approx(1e-3, rel=1e-12)

    def test_clamps_past_horizon(self):
        assert cosine_lr(150, 100, 1e-3) == 0.0

    def test_monotone_decay(self):
        lrs = [cosine_lr(s, 50, 1.0) for s in range(51)]
        assert all(b <= a for a, b in zip(lrs, lrs[1:]))

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            cosine_lr(0, 0, 1.0)
        with pytest.raises(ValueError):
            cosine_lr(-1, 10, 1.0)
