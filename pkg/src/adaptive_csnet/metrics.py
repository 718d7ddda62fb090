"""SSIM, MS-SSIM and reconstruction error metrics.

The structural metrics are written against :mod:`autodiff` tensors so the
same code serves as a training loss and as an evaluation metric. They work on
batches of 2-D images shaped (N, H, W) and return one value per image.

Windowed statistics use a normalized Gaussian window in "valid" mode; the
dynamic range L comes from the reference image (or from the union of both
images when ``data_range="union"``), with C1 = (k1 L)^2 and C2 = (k2 L)^2.
MS-SSIM multiplies the mean contrast-structure term of every scale but the
coarsest, each raised to its weight, with the mean full SSIM of the coarsest
scale; scales are separated by 2x2 mean pooling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ParameterError, PreconditionError

STANDARD_MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def renormalized_weights(scales: int) -> tuple[float, ...]:
    w = np.asarray(STANDARD_MSSSIM_WEIGHTS[:scales])
    return tuple(float(v) for v in w / w.sum())


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.84
    msssim_scales: int = 3
    window: int = 11
    gaussian_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    scale_weights: tuple[float, ...] = field(default=())
    data_range: str = "target"

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ParameterError("alpha must lie in [0, 1]")
        if self.window % 2 == 0 or self.window < 1:
            raise ParameterError("window must be a positive odd integer")
        if self.msssim_scales < 1:
            raise ParameterError("msssim_scales must be >= 1")
        if self.data_range not in ("target", "union"):
            raise ParameterError("data_range must be 'target' or 'union'")
        if not self.scale_weights:
            object.__setattr__(self, "scale_weights", renormalized_weights(self.msssim_scales))
        if len(self.scale_weights) != self.msssim_scales:
            raise ParameterError("need one scale weight per MS-SSIM scale")
        if abs(sum(self.scale_weights) - 1.0) > 1e-9:
            raise ParameterError("scale weights must sum to 1")


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - size // 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _filter(maps: Tensor, g: np.ndarray) -> Tensor:
    """Separable valid Gaussian filtering of (M, H, W) maps."""
    m, h, w = maps.shape
    x = maps.reshape(m, 1, h, w)
    x = ad.conv2d(x, Tensor(g.reshape(1, 1, -1, 1)))
    x = ad.conv2d(x, Tensor(g.reshape(1, 1, 1, -1)))
    return x.reshape(m, x.shape[2], x.shape[3])


def dynamic_range(t: np.ndarray, y: np.ndarray | None = None, mode: str = "target") -> np.ndarray:
    """Per-image L = max - min, floored at 1e-12."""
    if mode == "union" and y is not None:
        hi = np.maximum(t.max(axis=(-2, -1)), y.max(axis=(-2, -1)))
        lo = np.minimum(t.min(axis=(-2, -1)), y.min(axis=(-2, -1)))
    else:
        hi, lo = t.max(axis=(-2, -1)), t.min(axis=(-2, -1))
    return np.maximum(hi - lo, 1e-12)


def _ssim_maps(t: Tensor, y: Tensor, L: np.ndarray, cfg: LossConfig) -> tuple[Tensor, Tensor]:
    """Luminance*contrast-structure map and contrast-structure map."""
    n, h, w = t.shape
    if h < cfg.window or w < cfg.window:
        raise PreconditionError(f"image {h}x{w} smaller than the {cfg.window}-pixel window")
    g = gaussian_window(cfg.window, cfg.gaussian_sigma)
    # (co)variances are shift invariant; centring each image on its global
    # mean first keeps them exact for flat images and limits cancellation
    tc = t - t.mean(axis=(1, 2), keepdims=True)
    yc = y - y.mean(axis=(1, 2), keepdims=True)
    stats = _filter(ad.concat([t, y, tc, yc, tc * tc, yc * yc, tc * yc], axis=0), g)
    mu_t, mu_y = stats[0:n], stats[n : 2 * n]
    m_t, m_y = stats[2 * n : 3 * n], stats[3 * n : 4 * n]
    e_tt, e_yy, e_ty = stats[4 * n : 5 * n], stats[5 * n : 6 * n], stats[6 * n : 7 * n]
    c1 = ((cfg.k1 * L) ** 2).reshape(n, 1, 1)
    c2 = ((cfg.k2 * L) ** 2).reshape(n, 1, 1)
    mu_tt, mu_yy, mu_ty = mu_t * mu_t, mu_y * mu_y, mu_t * mu_y
    var_t, var_y, cov = e_tt - m_t * m_t, e_yy - m_y * m_y, e_ty - m_t * m_y
    lum = (2.0 * mu_ty + c1) / (mu_tt + mu_yy + c1)
    cs = (2.0 * cov + c2) / (var_t + var_y + c2)
    return lum * cs, cs


def _as_batch(a) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    return a.reshape(1, *a.shape) if a.ndim == 2 else a


def ssim_tensor(t, y, cfg: LossConfig = LossConfig()) -> Tensor:
    t, y = _as_batch(t), _as_batch(y)
    if t.shape != y.shape:
        raise PreconditionError(f"ssim: shapes {t.shape} and {y.shape} differ")
    L = dynamic_range(t.data, y.data, cfg.data_range)
    s, _ = _ssim_maps(t, y, L, cfg)
    return s.mean(axis=(1, 2))


def ms_ssim_tensor(t, y, cfg: LossConfig = LossConfig()) -> Tensor:
    t, y = _as_batch(t), _as_batch(y)
    if t.shape != y.shape:
        raise PreconditionError(f"ms_ssim: shapes {t.shape} and {y.shape} differ")
    scales = cfg.msssim_scales
    need = cfg.window * 2 ** (scales - 1)
    if min(t.shape[1:]) < need:
        raise PreconditionError(
            f"ms_ssim: {scales} scales with a {cfg.window}-pixel window need images of at least {need} pixels"
        )
    if any(d % 2 ** (scales - 1) for d in t.shape[1:]):
        raise PreconditionError(f"ms_ssim: image size must be divisible by {2 ** (scales - 1)}")
    L = dynamic_range(t.data, y.data, cfg.data_range)
    result = None
    for j, wj in enumerate(cfg.scale_weights):
        full, cs = _ssim_maps(t, y, L, cfg)
        term = (full if j == scales - 1 else cs).mean(axis=(1, 2))
        # negative similarities have no real fractional power
        term = ad.clamp_min(term, 1e-8) ** wj
        result = term if result is None else result * term
        if j < scales - 1:
            t, y = ad.downsample2(t), ad.downsample2(y)
    return result


def ssim(t: np.ndarray, y: np.ndarray, cfg: LossConfig = LossConfig()) -> float | np.ndarray:
    """SSIM of ``y`` against reference ``t``; a float for 2-D inputs."""
    with ad.no_grad():
        v = ssim_tensor(np.asarray(t, float), np.asarray(y, float), cfg).data
    return float(v[0]) if np.ndim(t) == 2 else v


def ms_ssim(t: np.ndarray, y: np.ndarray, cfg: LossConfig = LossConfig()) -> float | np.ndarray:
    with ad.no_grad():
        v = ms_ssim_tensor(np.asarray(t, float), np.asarray(y, float), cfg).data
    return float(v[0]) if np.ndim(t) == 2 else v


def nmse(t: np.ndarray, y: np.ndarray) -> float:
    t, y = np.asarray(t), np.asarray(y)
    return float(np.sum(np.abs(t - y) ** 2) / np.sum(np.abs(t) ** 2))


def psnr(t: np.ndarray, y: np.ndarray) -> float:
    mse = float(np.mean(np.abs(np.asarray(t) - np.asarray(y)) ** 2))
    if mse == 0:
        return float("inf")
    return float(20 * np.log10(np.max(np.abs(t))) - 10 * np.log10(mse))


def reconstruction_loss(t, x_re: Tensor, x_im: Tensor, cfg: LossConfig = LossConfig()) -> Tensor:
    """``alpha * (1 - MS-SSIM(t, |x|)) + (1 - alpha) * mean|t - |x||`` averaged over the batch.

    ``t`` holds target magnitudes (N, H, W); ``x_re``/``x_im`` are the real and
    imaginary parts of the reconstructed center slices.
    """
    t = _as_batch(t)
    mag = ad.magnitude(_as_batch(x_re), _as_batch(x_im))
    l1 = ad.tabs(t - mag).mean()
    if cfg.alpha == 0:
        return l1
    dissim = (1.0 - ms_ssim_tensor(t, mag, cfg)).mean()
    return cfg.alpha * dissim + (1.0 - cfg.alpha) * l1
