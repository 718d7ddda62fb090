"""Synthetic multi-slice phantoms and the binary dataset format.

A volume is a stack of magnitude slices built from antialiased ellipses whose
geometry and intensity drift linearly through the stack, so neighbouring
slices are strongly correlated. Each slice also carries a smooth polynomial
phase map bounded by pi/4.

Dataset file layout (all integers little-endian)::

    b"ACSND\\0"  u16 version  u32 volume_count
    per volume: u64 seed  u32 size  u32 num_slices
                f64[num_slices*size*size] magnitudes
                f64[num_slices*size*size] phases
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, ParameterError, UnsupportedVersionError
from .prng import Stream

SUPPORTED_SIZES = (64, 128)
MAX_PHASE = np.pi / 4
DATASET_MAGIC = b"ACSND\x00"
DATASET_VERSION = 1

_ELLIPSE_PARAMS = 6  # cx, cy, a, b, angle, intensity


@dataclass
class PhantomVolume:
    slices: np.ndarray  # (S, H, W) magnitudes in [0, 1]
    phase_maps: np.ndarray  # (S, H, W) radians
    seed: int
    size: int

    @property
    def num_slices(self) -> int:
        return int(self.slices.shape[0])

    def complex_slices(self) -> np.ndarray:
        return self.slices * np.exp(1j * self.phase_maps)


def _ellipse_endpoints(stream: Stream, num_ellipses: int) -> np.ndarray:
    """Parameters at the first and last slice, shape (2, E, 6)."""
    out = np.empty((2, num_ellipses, _ELLIPSE_PARAMS))
    for end in range(2):
        for e in range(num_ellipses):
            u = stream.uniform(_ELLIPSE_PARAMS)
            if e == 0:
                # body outline: large, centred, bright
                out[end, e] = [
                    -0.05 + 0.1 * u[0],
                    -0.05 + 0.1 * u[1],
                    0.65 + 0.2 * u[2],
                    0.75 + 0.15 * u[3],
                    -0.3 + 0.6 * u[4],
                    0.6 + 0.3 * u[5],
                ]
            else:
                out[end, e] = [
                    -0.4 + 0.8 * u[0],
                    -0.4 + 0.8 * u[1],
                    0.08 + 0.25 * u[2],
                    0.08 + 0.25 * u[3],
                    np.pi * u[4],
                    -0.5 + 0.9 * u[5],
                ]
    return out


def _render_ellipse(coords: tuple[np.ndarray, np.ndarray], params: np.ndarray, pixel: float) -> np.ndarray:
    cx, cy, a, b, angle, intensity = params
    x, y = coords
    c, s = np.cos(angle), np.sin(angle)
    xr = (x - cx) * c + (y - cy) * s
    yr = -(x - cx) * s + (y - cy) * c
    r = np.sqrt((xr / a) ** 2 + (yr / b) ** 2)
    # signed distance to the boundary in pixels, approximately
    dist = (r - 1.0) * min(a, b) / pixel
    return intensity * np.clip(0.5 - dist, 0.0, 1.0)


def _phase_endpoints(stream: Stream) -> np.ndarray:
    return stream.uniform(12, -1.0, 1.0).reshape(2, 6)


def _phase_poly(coeffs: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    basis = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y])
    return np.tensordot(coeffs, basis, axes=1)


def generate_phantom(seed: int, size: int = 64, num_slices: int = 8, num_ellipses: int = 6) -> PhantomVolume:
    """Deterministic phantom volume; pure in its arguments."""
    if size not in SUPPORTED_SIZES:
        raise ParameterError(f"unsupported phantom size {size}; supported sizes are {SUPPORTED_SIZES}")
    if num_slices < 1:
        raise ParameterError("num_slices must be >= 1")
    if num_ellipses < 0:
        raise ParameterError("num_ellipses must be >= 0")

    stream = Stream(seed, 0x5048414E)
    ends = _ellipse_endpoints(stream, num_ellipses)
    phase_ends = _phase_endpoints(stream)
    phase_amp = stream.uniform(1, 0.5, 1.0)[0] * MAX_PHASE

    grid = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    y, x = np.meshgrid(grid, grid, indexing="ij")
    pixel = 2.0 / size

    mags = np.zeros((num_slices, size, size))
    phases = np.zeros((num_slices, size, size))
    for s in range(num_slices):
        w = s / (num_slices - 1) if num_slices > 1 else 0.0
        params = (1 - w) * ends[0] + w * ends[1]
        for e in range(num_ellipses):
            mags[s] += _render_ellipse((x, y), params[e], pixel)
        coeffs = (1 - w) * phase_ends[0] + w * phase_ends[1]
        poly = _phase_poly(coeffs, x, y)
        peak = np.abs(poly).max()
        phases[s] = poly * (phase_amp / peak) if peak > 0 else poly
    np.clip(mags, 0.0, 1.0, out=mags)
    np.clip(phases, -MAX_PHASE, MAX_PHASE, out=phases)
    return PhantomVolume(slices=mags, phase_maps=phases, seed=int(seed), size=int(size))


def generate_volumes(count: int, num_slices: int, size: int, seed: int) -> list[PhantomVolume]:
    return [generate_phantom(seed + i, size, num_slices) for i in range(count)]


# serialization -------------------------------------------------------------


def save_dataset(path, volumes: Sequence[PhantomVolume]) -> None:
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<HI", DATASET_VERSION, len(volumes)))
        for v in volumes:
            fh.write(struct.pack("<QII", v.seed & (2**64 - 1), v.size, v.num_slices))
            fh.write(np.ascontiguousarray(v.slices, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(v.phase_maps, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated file while reading {what}", self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_dataset(path) -> list[PhantomVolume]:
    r = _Reader(Path(path).read_bytes())
    if r.take(len(DATASET_MAGIC), "magic") != DATASET_MAGIC:
        raise FormatError("bad magic, not a phantom dataset", 0)
    (version,) = r.unpack("<H", "version")
    if version != DATASET_VERSION:
        raise UnsupportedVersionError(f"unsupported dataset version {version}", r.pos - 2)
    (count,) = r.unpack("<I", "volume count")
    volumes = []
    for i in range(count):
        seed, size, n = r.unpack("<QII", f"header of volume {i}")
        nbytes = 8 * n * size * size
        mags = np.frombuffer(r.take(nbytes, f"magnitudes of volume {i}"), dtype="<f8")
        phases = np.frombuffer(r.take(nbytes, f"phases of volume {i}"), dtype="<f8")
        volumes.append(
            PhantomVolume(
                slices=mags.reshape(n, size, size).astype(np.float64),
                phase_maps=phases.reshape(n, size, size).astype(np.float64),
                seed=int(seed),
                size=int(size),
            )
        )
    if r.pos != len(r.buf):
        raise FormatError("trailing bytes after last volume", r.pos)
    return volumes
