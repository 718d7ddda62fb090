"""Rectified Adam and a per-epoch exponential learning-rate decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor
from .errors import NumericalError


@dataclass
class OptimizerState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    exp_avg: list[np.ndarray] = field(default_factory=list)
    exp_avg_sq: list[np.ndarray] = field(default_factory=list)

    @property
    def rho_inf(self) -> float:
        return 2.0 / (1.0 - self.beta2) - 1.0

    def rho(self, t: int) -> float:
        b2t = self.beta2**t
        return self.rho_inf - 2.0 * t * b2t / (1.0 - b2t)


def rectification(state: OptimizerState, t: int) -> float | None:
    """Variance rectification factor r_t, or None while rho_t <= 4."""
    rho_t, rho_inf = state.rho(t), state.rho_inf
    if rho_t <= 4.0:
        return None
    return math.sqrt((rho_t - 4) * (rho_t - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho_t))


def radam_step(
    params: Sequence[Tensor], grads: Sequence[np.ndarray], state: OptimizerState, names: Sequence[str] | None = None
) -> None:
    """Apply one RAdam update in place.

    While the approximated SMA length rho_t is at most 4 the update is plain
    bias-corrected momentum, ``p -= lr * m_hat``; afterwards it is the
    rectified adaptive step ``p -= lr * r_t * m_hat / (sqrt(v_hat) + eps)``.
    """
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            name = names[i] if names is not None else f"#{i}"
            raise NumericalError(f"non-finite gradient for parameter {name}")
    if not state.exp_avg:
        state.exp_avg = [np.zeros_like(p.data) for p in params]
        state.exp_avg_sq = [np.zeros_like(p.data) for p in params]
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    r = rectification(state, t)
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.exp_avg, state.exp_avg_sq):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bc1
        if r is None:
            p.data -= state.lr * m_hat
        else:
            p.data -= state.lr * r * m_hat / (np.sqrt(v / bc2) + state.eps)


class RAdam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8, names=None):
        self.params = list(params)
        self.names = names
        self.state = OptimizerState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        radam_step(self.params, grads, self.state, self.names)


def decayed_lr(initial: float, epoch: int, decay: float = 0.95) -> float:
    """Learning rate used during zero-based ``epoch``."""
    return initial * decay**epoch
