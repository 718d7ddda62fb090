"""Wavelet-regularized least squares solved by ISTA / FISTA.

Minimizes ``||A x - b||^2 + lam * ||W x||_1`` where ``W`` is the orthonormal
Haar transform applied separately to the real and imaginary parts of ``x``.

The smooth term has gradient ``2 A^H (A x - b)`` with Lipschitz constant 2,
so a gradient step ``x - s * A^H (A x - b)`` corresponds to a step length of
``s / 2`` on the objective and is paired with a shrinkage of ``s * lam / 2``.
For ``s <= 1`` every plain ISTA step decreases the objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mri_model
from .errors import NumericalError, ParameterError
from .mri_model import KSpaceData
from .transforms import dwt2, idwt2

LAMBDA_GRID = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2)


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1e-3
    max_iters: int = 200
    step_size: float = 1.0
    tol: float = 0.0
    wavelet_levels: int = 3
    accelerated: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError("lambda must be non-negative")
        if not 0 < self.step_size <= 1:
            raise ParameterError("step_size must lie in (0, 1] (the operator Lipschitz constant is 1)")
        if self.max_iters < 0 or self.tol < 0:
            raise ParameterError("max_iters and tol must be non-negative")


def wavelet_l1(x: np.ndarray, levels: int) -> float:
    return dwt2(x.real, levels).l1() + dwt2(x.imag, levels).l1()


def objective(x: np.ndarray, b: KSpaceData, cfg: SolverConfig) -> float:
    r = mri_model.forward(x, b.mask).measurements - b.measurements
    fidelity = float(np.sum(r.real**2 + r.imag**2))
    if cfg.lam == 0:
        return fidelity
    return fidelity + cfg.lam * wavelet_l1(x, cfg.wavelet_levels)


def _shrink(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def wavelet_prox(z: np.ndarray, threshold: float, levels: int) -> np.ndarray:
    """Proximal map of ``threshold * ||W z||_1`` for complex ``z``."""
    if threshold == 0:
        return z.copy()

    def channel(v):
        return idwt2(dwt2(v, levels).map(lambda c: _shrink(c, threshold)))

    return channel(z.real) + 1j * channel(z.imag)


def ista_step(x: np.ndarray, b: KSpaceData, cfg: SolverConfig) -> np.ndarray:
    grad = mri_model.normal(x, b.mask) - mri_model.adjoint(b)
    return wavelet_prox(x - cfg.step_size * grad, cfg.step_size * cfg.lam / 2, cfg.wavelet_levels)


def ista_solve(
    b: KSpaceData, cfg: SolverConfig, x0: np.ndarray | None = None
) -> tuple[np.ndarray, list[float]]:
    """Run ISTA (or FISTA when ``cfg.accelerated``).

    Returns the final iterate and the objective trace; ``trace[0]`` is the
    objective at the starting point (zero-filled unless ``x0`` is given) and
    ``trace[k]`` the value after ``k`` iterations.
    """
    x = mri_model.zero_filled(b) if x0 is None else np.asarray(x0, dtype=np.complex128).copy()
    trace = [objective(x, b, cfg)]
    # rises below this are roundoff, e.g. once the data term reaches ~1e-28
    noise_floor = 1e-12 * float(np.sum(np.abs(b.measurements) ** 2))
    y = x
    t = 1.0
    for it in range(1, cfg.max_iters + 1):
        x_new = ista_step(y if cfg.accelerated else x, b, cfg)
        if cfg.accelerated:
            t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
            y = x_new + ((t - 1) / t_new) * (x_new - x)
            t = t_new
        x = x_new
        f = objective(x, b, cfg)
        if not math.isfinite(f):
            raise NumericalError(f"objective became non-finite at iteration {it}")
        prev = trace[-1]
        if not cfg.accelerated and f - prev > 1e-6 * abs(prev) + noise_floor:
            raise NumericalError(
                f"ISTA objective increased from {prev:.6e} to {f:.6e} at iteration {it}"
            )
        trace.append(f)
        if cfg.tol > 0 and abs(prev - f) <= cfg.tol * max(abs(prev), 1e-300):
            break
    return x, trace


def write_trace_csv(path, trace: list[float]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("iteration,objective\n")
        for i, f in enumerate(trace):
            fh.write(f"{i},{f!r}\n")
