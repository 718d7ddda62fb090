"""Domain-knowledge channels fed to every reconstruction block.

* soft data consistency: the data-fidelity gradient ``A^H (A x - b)``
* spin-echo phase prior: ``x`` with the measured smooth phase removed
* background prior: a soft mask that is 1 in dark background, 0 in tissue

The phase map and the background mask depend only on the measurements;
the data-consistency term is recomputed from the current estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mri_model
from .mri_model import KSpaceData

DEFAULT_BG_THETA = 0.1
_GRID = float(2**20)


@dataclass
class PriorChannels:
    e_b: np.ndarray
    e_phi: np.ndarray
    e_bg: np.ndarray


def data_consistency(x: np.ndarray, b: KSpaceData) -> np.ndarray:
    return mri_model.normal(x, b.mask) - mri_model.adjoint(b)


def phase_map(b: KSpaceData) -> np.ndarray:
    """Angle of the low-frequency image, zeroed where it has no signal."""
    lf = mri_model.low_freq_recon(b)
    mag = np.abs(lf)
    peak = mag.max(axis=(-2, -1), keepdims=True)
    return np.where(mag > 1e-12 * peak, np.angle(lf), 0.0)


def phase_prior(x: np.ndarray, b: KSpaceData) -> np.ndarray:
    return x * np.exp(-1j * phase_map(b))


def background_mask(b: KSpaceData, theta: float = DEFAULT_BG_THETA) -> np.ndarray:
    """``1 - clamp(|lf| / (theta * max|lf|), 0, 1)`` for the low-frequency image ``lf``.

    The ratio is snapped to a 2**-20 grid so that rescaling ``b`` (which
    perturbs the FFT output by a few ulps) yields a bit-identical mask.
    """
    mag = np.abs(mri_model.low_freq_recon(b))
    peak = mag.max(axis=(-2, -1), keepdims=True)
    safe = np.where(peak > 0, theta * peak, 1.0)
    ratio = np.where(peak > 0, mag / safe, 0.0)
    ratio = np.round(ratio * _GRID) / _GRID
    return 1.0 - np.clip(ratio, 0.0, 1.0)


def compute_priors(x: np.ndarray, b: KSpaceData, theta: float = DEFAULT_BG_THETA) -> PriorChannels:
    return PriorChannels(
        e_b=data_consistency(x, b),
        e_phi=phase_prior(x, b),
        e_bg=background_mask(b, theta),
    )
