"""Centered orthonormal FFT and multi-level orthonormal Haar wavelets.

Complex images are plain ``complex128`` numpy arrays of shape (H, W); the
FFT helpers also accept leading batch axes and act on the last two.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError

_AXES = (-2, -1)


def fft2c(image: np.ndarray) -> np.ndarray:
    """Centered unitary 2-D DFT; DC lands at (H // 2, W // 2)."""
    shifted = np.fft.ifftshift(image, axes=_AXES)
    return np.fft.fftshift(np.fft.fft2(shifted, axes=_AXES, norm="ortho"), axes=_AXES)


def ifft2c(kspace: np.ndarray) -> np.ndarray:
    shifted = np.fft.ifftshift(kspace, axes=_AXES)
    return np.fft.fftshift(np.fft.ifft2(shifted, axes=_AXES, norm="ortho"), axes=_AXES)


@dataclass
class WaveletCoeffs:
    """Haar analysis result.

    ``details[0]`` holds the finest level as a ``(LH, HL, HH)`` triple;
    ``approx`` is the final low-pass band.
    """

    approx: np.ndarray
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=list)
    shape: tuple[int, int] = (0, 0)

    @property
    def levels(self) -> int:
        return len(self.details)

    def arrays(self) -> list[np.ndarray]:
        out = [self.approx]
        for d in self.details:
            out.extend(d)
        return out

    def map(self, fn) -> "WaveletCoeffs":
        return WaveletCoeffs(
            approx=fn(self.approx),
            details=[tuple(fn(b) for b in d) for d in self.details],
            shape=self.shape,
        )

    def l1(self) -> float:
        return float(sum(np.abs(a).sum() for a in self.arrays()))

    def norm(self) -> float:
        return float(np.sqrt(sum((a * a).sum() for a in self.arrays())))

    def max_abs(self) -> float:
        return float(max(np.abs(a).max() for a in self.arrays()))


def dwt2(image: np.ndarray, levels: int) -> WaveletCoeffs:
    """Orthonormal 2-D Haar analysis over ``levels`` dyadic levels.

    For a 2x2 block [[a, b], [c, d]]: LL=(a+b+c+d)/2, LH=(a+b-c-d)/2,
    HL=(a-b+c-d)/2, HH=(a-b-c+d)/2.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise PreconditionError("dwt2 expects a 2-D real array")
    if levels < 1:
        raise PreconditionError("dwt2 needs at least one level")
    h, w = image.shape
    step = 1 << levels
    if h % step or w % step:
        raise PreconditionError(f"dwt2: shape {h}x{w} not divisible by 2**{levels}")
    details = []
    ll = image
    for _ in range(levels):
        a = ll[0::2, 0::2]
        b = ll[0::2, 1::2]
        c = ll[1::2, 0::2]
        d = ll[1::2, 1::2]
        details.append(((a + b - c - d) / 2, (a - b + c - d) / 2, (a - b - c + d) / 2))
        ll = (a + b + c + d) / 2
    return WaveletCoeffs(approx=ll, details=details, shape=(h, w))


def idwt2(coeffs: WaveletCoeffs) -> np.ndarray:
    ll = coeffs.approx
    for lh, hl, hh in reversed(coeffs.details):
        h, w = ll.shape
        out = np.empty((2 * h, 2 * w))
        out[0::2, 0::2] = (ll + lh + hl + hh) / 2
        out[0::2, 1::2] = (ll + lh - hl - hh) / 2
        out[1::2, 0::2] = (ll - lh + hl - hh) / 2
        out[1::2, 1::2] = (ll - lh - hl + hh) / 2
        ll = out
    return ll
