"""Single-coil Cartesian measurement model: masks, A = M F and its adjoint."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, PreconditionError
from .prng import Stream
from .transforms import fft2c, ifft2c


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def default_center_fraction(acceleration: float) -> float:
    """0.08 at 4x, 0.04 at 8x, i.e. 0.32 / R, capped at 1."""
    return min(1.0, 0.32 / acceleration)


@dataclass(frozen=True)
class SamplingMask:
    """Per-column Cartesian mask with a fully sampled center band."""

    sampled: np.ndarray  # bool, shape (width,)
    acceleration: float
    center_fraction: float
    center_start: int
    center_count: int

    @property
    def width(self) -> int:
        return int(self.sampled.shape[0])

    @property
    def num_sampled(self) -> int:
        return int(self.sampled.sum())

    @property
    def center_band(self) -> np.ndarray:
        band = np.zeros(self.width, dtype=bool)
        band[self.center_start : self.center_start + self.center_count] = True
        return band


@dataclass(frozen=True)
class KSpaceData:
    """Masked k-space. ``measurements`` may carry leading batch axes."""

    measurements: np.ndarray
    mask: SamplingMask

    @property
    def shape(self) -> tuple[int, int]:
        return self.measurements.shape[-2:]


def center_band_size(width: int, center_fraction: float) -> int:
    return _round_half_up(center_fraction * width)


def make_mask(width: int, acceleration: float, center_fraction: float | None = None, seed: int = 0) -> SamplingMask:
    """Sample exactly round(width / acceleration) columns.

    The center band of round(center_fraction * width) columns is always on;
    the remaining budget is drawn without replacement from the other columns
    by a seeded Fisher-Yates shuffle.
    """
    if center_fraction is None:
        center_fraction = default_center_fraction(acceleration)
    if width < 8:
        raise ParameterError(f"mask width must be >= 8, got {width}")
    if not 1 <= acceleration <= width:
        raise ParameterError(f"acceleration must lie in [1, {width}], got {acceleration}")
    if not 0 < center_fraction <= 1:
        raise ParameterError(f"center_fraction must lie in (0, 1], got {center_fraction}")
    budget = _round_half_up(width / acceleration)
    n_center = center_band_size(width, center_fraction)
    if budget < n_center:
        raise ParameterError(
            f"sampling budget {budget} is smaller than the center band of {n_center} columns"
        )
    start = (width - n_center + 1) // 2
    sampled = np.zeros(width, dtype=bool)
    sampled[start : start + n_center] = True
    others = np.flatnonzero(~sampled)
    perm = Stream(seed, 0x4D41534B).permutation(others.size)
    sampled[others[perm[: budget - n_center]]] = True
    return SamplingMask(
        sampled=sampled,
        acceleration=float(acceleration),
        center_fraction=float(center_fraction),
        center_start=start,
        center_count=n_center,
    )


def full_mask(width: int) -> SamplingMask:
    return make_mask(width, 1.0, 1.0)


def _check(image_shape, mask: SamplingMask) -> None:
    if image_shape[-1] != mask.width:
        raise PreconditionError(f"image width {image_shape[-1]} does not match mask width {mask.width}")


def forward(x: np.ndarray, mask: SamplingMask) -> KSpaceData:
    """A x: centered FFT followed by zeroing of unsampled columns."""
    _check(x.shape, mask)
    return KSpaceData(fft2c(x) * mask.sampled, mask)


def adjoint(b: KSpaceData) -> np.ndarray:
    _check(b.measurements.shape, b.mask)
    return ifft2c(b.measurements * b.mask.sampled)


def normal(x: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """A^H A x."""
    return ifft2c(fft2c(x) * mask.sampled)


def measure(image: np.ndarray, mask: SamplingMask) -> KSpaceData:
    """Simulate an acquisition of a ground-truth complex image."""
    return forward(np.asarray(image, dtype=np.complex128), mask)


def zero_filled(b: KSpaceData) -> np.ndarray:
    return adjoint(b)


def low_freq_recon(b: KSpaceData) -> np.ndarray:
    """Inverse transform of the fully sampled center band only."""
    return ifft2c(b.measurements * b.mask.center_band)
