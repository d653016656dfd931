"""RAdam optimizer and the cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import NonFiniteError, Tensor


class OptimizerState:
    """Per-parameter first/second moment buffers plus a shared step counter."""

    def __init__(self, named_params: list[tuple[str, Tensor]],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in named_params}


def radam_step(state: OptimizerState, named_params: list[tuple[str, Tensor]],
               lr: float) -> None:
    """One rectified-Adam update over all parameters.

    While the variance-rectification term is intractable (early steps) the
    update falls back to the bias-corrected first moment alone.  Parameters
    with no gradient buffer are skipped (no path to the loss this step).
    """
    state.step_count += 1
    t = state.step_count
    b1, b2, eps = state.beta1, state.beta2, state.eps
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    b2_t = b2 ** t
    rho = rho_inf - 2.0 * t * b2_t / (1.0 - b2_t)
    bias1 = 1.0 - b1 ** t
    rectified = rho > 4.0
    if rectified:
        rect = math.sqrt(
            ((rho - 4.0) * (rho - 2.0) * rho_inf)
            / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho)
        )
    for name, p in named_params:
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bias1
        if rectified:
            denom = np.sqrt(v / (1.0 - b2_t)) + eps
            p.data -= (lr * rect) * m_hat / denom
        else:
            p.data -= lr * m_hat


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Cosine decay from base_lr to 0 over total_steps, no warmup.

    Endpoints are exact; steps past the horizon clamp to the final value.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if step < 0:
        raise ValueError("step must be >= 0")
    if step == 0:
        return base_lr
    if step >= total_steps:
        return 0.0
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
