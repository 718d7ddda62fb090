"""Independent reference computations used by the tests.

Nothing here calls into the code under test except where a callable is passed
in explicitly (the finite-difference helpers).
"""

from __future__ import annotations

import numpy as np


def conv2d_loop(x, k, b, stride=1, padding=0):
    """Scalar direct cross-correlation."""
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + w] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for ni in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = b[oi]
                    for ci in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += xp[ni, ci, i * stride + di, j * stride + dj] * k[oi, ci, di, dj]
                    out[ni, oi, i, j] = acc
    return out


def central_difference(f, arr, indices, step=1e-6):
    """d f / d arr[idx] for each flat index; ``arr`` is perturbed in place and restored."""
    flat = arr.reshape(-1)
    out = np.empty(len(indices))
    for n, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        out[n] = (fp - fm) / (2 * step)
    return out


def rel_error(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def gaussian(size, sigma):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (r / sigma) ** 2)
    return g / g.sum()


def filter_valid(img, size, sigma):
    """Valid-mode 2-D Gaussian filtering by summing shifted slices."""
    g = gaussian(size, sigma)
    h, w = img.shape
    out = np.zeros((h - size + 1, w - size + 1))
    for i in range(size):
        for j in range(size):
            out += g[i] * g[j] * img[i : i + h - size + 1, j : j + w - size + 1]
    return out


def ssim_parts(t, y, L, size=11, sigma=1.5, k1=0.01, k2=0.03):
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    mt, my = filter_valid(t, size, sigma), filter_valid(y, size, sigma)
    # local second moments about the global means (same variances, less cancellation)
    tc, yc = t - t.mean(), y - y.mean()
    at, ay = filter_valid(tc, size, sigma), filter_valid(yc, size, sigma)
    vt = filter_valid(tc * tc, size, sigma) - at**2
    vy = filter_valid(yc * yc, size, sigma) - ay**2
    cv = filter_valid(tc * yc, size, sigma) - at * ay
    lum = (2 * mt * my + c1) / (mt**2 + my**2 + c1)
    cs = (2 * cv + c2) / (vt + vy + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ssim_oracle(t, y, **kw):
    L = max(t.max() - t.min(), 1e-12)
    return ssim_parts(t, y, L, **kw)[0]


def ms_ssim_oracle(t, y, weights=(0.0448, 0.2856, 0.3001), **kw):
    w = np.asarray(weights) / np.sum(weights)
    L = max(t.max() - t.min(), 1e-12)
    val = 1.0
    for j, wj in enumerate(w):
        full, cs = ssim_parts(t, y, L, **kw)
        term = full if j == len(w) - 1 else cs
        val *= max(term, 1e-8) ** wj
        h, ww = t.shape
        t = t.reshape(h // 2, 2, ww // 2, 2).mean(axis=(1, 3))
        y = y.reshape(h // 2, 2, ww // 2, 2).mean(axis=(1, 3))
    return val


def dft_matrix(n):
    """Centered unitary DFT matrix built from the definition."""
    k = np.arange(n) - n // 2
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def disk_image(n, radius):
    y, x = np.mgrid[0:n, 0:n] + 0.5
    return ((x - n / 2) ** 2 + (y - n / 2) ** 2 <= radius**2).astype(float)
