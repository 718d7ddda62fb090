"""Unrolled reconstruction network with prior channels and 2.5D slice stacks.

Each block updates the current estimate residually::

    x_{k+1} = x_k + decoder_k(threshold_k(encoder_k(x_k, e_b, e_phi, e_bg)))

where the encoder/decoder pair is a small UNet and the learnable soft
threshold acts on every encoder feature map routed to the decoder.

Tensors inside the network use NCHW layout. A stack of S complex slices is
carried as 2S real channels ``[re_0, im_0, re_1, im_1, ...]``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import FormatError, ParameterError, PreconditionError, UnsupportedVersionError
from .mri_model import KSpaceData, SamplingMask
from .priors import DEFAULT_BG_THETA, background_mask, phase_map
from .prng import Stream
from .transforms import fft2c, ifft2c

CHANNELS_PER_SLICE = 7
INIT_THRESHOLD = 0.01
CHECKPOINT_MAGIC = b"ACSNW\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_blocks: int = 5
    base_channels: int = 16
    scales: int = 2
    slice_neighbors: int = 1
    leaky_slope: float = 0.1
    seed: int = 0
    bg_theta: float = DEFAULT_BG_THETA

    def __post_init__(self):
        if self.num_blocks < 1 or self.scales < 1 or self.base_channels < 1:
            raise ParameterError("num_blocks, scales and base_channels must be >= 1")
        if self.slice_neighbors < 0:
            raise ParameterError("slice_neighbors must be >= 0")
        if not 0 < self.leaky_slope < 1:
            raise ParameterError("leaky_slope must lie in (0, 1)")

    @property
    def stack_size(self) -> int:
        return 2 * self.slice_neighbors + 1

    def widths(self) -> list[int]:
        return [self.base_channels * 2**s for s in range(self.scales)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


# parameter layout ----------------------------------------------------------


def block_layout(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) list of one block's trainable tensors."""
    widths = cfg.widths()
    s_in = CHANNELS_PER_SLICE * cfg.stack_size
    out: list[tuple[str, tuple[int, ...]]] = []

    def conv(name, c_in, c_out, k=3):
        out.append((f"{name}.weight", (c_out, c_in, k, k)))
        out.append((f"{name}.bias", (c_out,)))

    c_prev = s_in
    for s, c in enumerate(widths):
        conv(f"enc{s}.conv1", c_prev, c)
        conv(f"enc{s}.conv2", c, c)
        out.append((f"enc{s}.threshold", (c,)))
        c_prev = c
    out.append(("bottom.threshold", (widths[-1],)))
    below = widths[-1]
    for s in reversed(range(cfg.scales)):
        c = widths[s]
        conv(f"dec{s}.conv1", below + c, c)
        conv(f"dec{s}.conv2", c, c)
        below = c
    conv("final", widths[0], 2 * cfg.stack_size, k=1)
    return out


def param_count(cfg: ModelConfig) -> int:
    """Closed-form trainable parameter count.

    With widths c_s = base * 2**s, input channels c_in = 7 * (2n + 1) and
    output channels c_out = 2 * (2n + 1), one block holds

        sum_s [9 c_{s-1} c_s + 9 c_s^2 + 2 c_s]   (encoder, c_{-1} = c_in)
      + sum_s c_s + c_{S-1}                       (thresholds)
      + sum_s [9 (u_s + c_s) c_s + 9 c_s^2 + 2 c_s] (decoder, u_s = c_{s+1} or c_{S-1})
      + c_0 c_out + c_out                         (final 1x1 conv)
    """
    c = cfg.widths()
    S = cfg.scales
    c_in = CHANNELS_PER_SLICE * cfg.stack_size
    c_out = 2 * cfg.stack_size
    enc = sum(9 * (c_in if s == 0 else c[s - 1]) * c[s] + 9 * c[s] ** 2 + 2 * c[s] for s in range(S))
    thr = sum(c) + c[-1]
    dec = sum(9 * ((c[s + 1] if s + 1 < S else c[-1]) + c[s]) * c[s] + 9 * c[s] ** 2 + 2 * c[s] for s in range(S))
    final = c[0] * c_out + c_out
    return cfg.num_blocks * (enc + thr + dec + final)


def large_scale_config(target: int = 33_000_000, num_blocks: int = 25, scales: int = 4) -> tuple[ModelConfig, int]:
    """Smallest-error base width for a 25-block network of about 33M parameters."""
    best = None
    for base in range(1, 257):
        cfg = ModelConfig(num_blocks=num_blocks, base_channels=base, scales=scales)
        n = param_count(cfg)
        if best is None or abs(n - target) < abs(best[1] - target):
            best = (cfg, n)
    return best


class BlockWeights:
    """Trainable tensors of one block, keyed by layout name."""

    def __init__(self, params: dict[str, Tensor]):
        self.params = params

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def tensors(self) -> list[Tensor]:
        return list(self.params.values())

    @classmethod
    def initialize(cls, cfg: ModelConfig, block: int) -> "BlockWeights":
        raw_thr = math.log(math.expm1(INIT_THRESHOLD))
        params = {}
        for i, (name, shape) in enumerate(block_layout(cfg)):
            if name.endswith(".weight"):
                fan_in = int(np.prod(shape[1:]))
                bound = math.sqrt(1.0 / fan_in)
                data = Stream(cfg.seed, block, i).uniform(int(np.prod(shape)), -bound, bound).reshape(shape)
            elif name.endswith(".bias"):
                data = np.zeros(shape)
            else:
                data = np.full(shape, raw_thr)
            params[name] = Tensor(data, requires_grad=True, name=name)
        return cls(params)


def init_weights(cfg: ModelConfig) -> list[BlockWeights]:
    return [BlockWeights.initialize(cfg, k) for k in range(cfg.num_blocks)]


def all_parameters(weights: Sequence[BlockWeights]) -> list[tuple[str, Tensor]]:
    return [(f"block{k}.{n}", t) for k, w in enumerate(weights) for n, t in w.params.items()]


# slice stacks --------------------------------------------------------------


def stack_indices(num_slices: int, center: int, neighbors: int) -> list[int]:
    if num_slices < 1:
        raise PreconditionError("cannot stack slices of an empty volume")
    if not 0 <= center < num_slices:
        raise PreconditionError(f"center {center} outside volume of {num_slices} slices")
    return [min(max(i, 0), num_slices - 1) for i in range(center - neighbors, center + neighbors + 1)]


def stack_slices(volume: Sequence[np.ndarray], center: int, neighbors: int) -> list[np.ndarray]:
    """Slices ``center-neighbors .. center+neighbors`` with edge replication."""
    return [volume[i] for i in stack_indices(len(volume), center, neighbors)]


def complex_to_channels(z: np.ndarray) -> np.ndarray:
    """(N, S, H, W) complex -> (N, 2S, H, W) real, re/im interleaved."""
    n, s, h, w = z.shape
    return np.stack([z.real, z.imag], axis=2).reshape(n, 2 * s, h, w)


def channels_to_complex(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    r = x.reshape(n, c // 2, 2, h, w)
    return r[:, :, 0] + 1j * r[:, :, 1]


@dataclass
class StackBatch:
    """Measurements for a batch of slice stacks.

    ``kspace`` is (N, S, H, W) complex, zero on unsampled columns;
    ``sampled`` and ``center`` are (N, W) column masks.
    """

    kspace: np.ndarray
    sampled: np.ndarray
    center: np.ndarray

    @classmethod
    def from_kspace(cls, items: Sequence[tuple[np.ndarray, SamplingMask]]) -> "StackBatch":
        return cls(
            kspace=np.stack([k for k, _ in items]),
            sampled=np.stack([m.sampled for _, m in items]),
            center=np.stack([m.center_band for _, m in items]),
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.kspace.shape

    def _cols(self, m: np.ndarray) -> np.ndarray:
        return m[:, None, None, :]

    def zero_filled(self) -> np.ndarray:
        return ifft2c(self.kspace * self._cols(self.sampled))

    def normal(self, z: np.ndarray) -> np.ndarray:
        return ifft2c(fft2c(z) * self._cols(self.sampled))

    def slice_data(self, i: int, j: int, mask: SamplingMask | None = None) -> KSpaceData:
        if mask is None:
            mask = _mask_from_columns(self.sampled[i], self.center[i])
        return KSpaceData(self.kspace[i, j], mask)


def _mask_from_columns(sampled: np.ndarray, center: np.ndarray) -> SamplingMask:
    idx = np.flatnonzero(center)
    w = sampled.shape[0]
    return SamplingMask(
        sampled=sampled.copy(),
        acceleration=w / max(int(sampled.sum()), 1),
        center_fraction=idx.size / w,
        center_start=int(idx[0]) if idx.size else w // 2,
        center_count=int(idx.size),
    )


@dataclass
class StaticPriors:
    """Measurement-derived priors shared by all blocks."""

    aty: np.ndarray  # A^H b, (N, 2S, H, W) real channels
    phase_rot: np.ndarray  # exp(-i phi), (N, S, H, W) complex
    e_bg: np.ndarray  # (N, S, H, W) real


def static_priors(batch: StackBatch, theta: float) -> StaticPriors:
    n, s = batch.shape[:2]
    phi = np.empty(batch.shape)
    bg = np.empty(batch.shape)
    for i in range(n):
        mask = _mask_from_columns(batch.sampled[i], batch.center[i])
        data = KSpaceData(batch.kspace[i], mask)
        phi[i] = phase_map(data)
        bg[i] = background_mask(data, theta)
    return StaticPriors(
        aty=complex_to_channels(batch.zero_filled()),
        phase_rot=np.exp(-1j * phi),
        e_bg=bg,
    )


def data_consistency_op(x: Tensor, batch: StackBatch, pri: StaticPriors) -> Tensor:
    """e_b = A^H (A x - b); A^H A is self-adjoint so its own adjoint in backward."""

    def apply(v):
        return complex_to_channels(batch.normal(channels_to_complex(v)))

    return ad.linear_map(x, apply, apply) - pri.aty


def phase_op(x: Tensor, pri: StaticPriors) -> Tensor:
    rot = pri.phase_rot

    def fwd(v):
        return complex_to_channels(channels_to_complex(v) * rot)

    def adj(g):
        return complex_to_channels(channels_to_complex(g) * np.conj(rot))

    return ad.linear_map(x, fwd, adj)


# forward -------------------------------------------------------------------


def assemble_input(x: Tensor, e_b: Tensor, e_phi: Tensor, e_bg: np.ndarray) -> Tensor:
    """Per slice: [Re x, Im x, Re e_b, Im e_b, Re e_phi, Im e_phi, e_bg]."""
    n, c, h, w = x.shape
    s = c // 2
    if e_b.shape != x.shape or e_phi.shape != x.shape or e_bg.shape != (n, s, h, w):
        raise PreconditionError("prior channels do not match the slice stack")
    parts = [
        x.reshape(n, s, 2, h, w),
        e_b.reshape(n, s, 2, h, w),
        e_phi.reshape(n, s, 2, h, w),
        Tensor(e_bg.reshape(n, s, 1, h, w)),
    ]
    return ad.concat(parts, axis=2).reshape(n, CHANNELS_PER_SLICE * s, h, w)


def _conv(w: BlockWeights, name: str, x: Tensor, padding: int = 1) -> Tensor:
    return ad.conv2d(x, w[f"{name}.weight"], w[f"{name}.bias"], padding=padding)


def thresholds(w: BlockWeights, name: str) -> Tensor:
    return ad.softplus(w[f"{name}.threshold"])


def block_forward(
    x: Tensor, e_b: Tensor, e_phi: Tensor, e_bg: np.ndarray, w: BlockWeights, cfg: ModelConfig
) -> Tensor:
    """One residual block: ``x + decoder(threshold(encoder(x, priors)))``."""
    n, c, h, wd = x.shape
    features = assemble_input(x, e_b, e_phi, e_bg)
    if h % 2**cfg.scales or wd % 2**cfg.scales:
        raise PreconditionError(f"image size {h}x{wd} not divisible by 2**{cfg.scales}")
    slope = cfg.leaky_slope
    skips = []
    f = features
    for s in range(cfg.scales):
        f = ad.leaky_relu(_conv(w, f"enc{s}.conv1", f), slope)
        f = ad.leaky_relu(_conv(w, f"enc{s}.conv2", f), slope)
        skips.append(ad.soft_threshold(f, thresholds(w, f"enc{s}")))
        f = ad.downsample2(f)
    d = ad.soft_threshold(f, thresholds(w, "bottom"))
    for s in reversed(range(cfg.scales)):
        d = ad.concat([ad.upsample2(d), skips[s]], axis=1)
        d = ad.leaky_relu(_conv(w, f"dec{s}.conv1", d), slope)
        d = ad.leaky_relu(_conv(w, f"dec{s}.conv2", d), slope)
    residual = _conv(w, "final", d, padding=0)
    return x + residual


def model_forward(
    batch: StackBatch, cfg: ModelConfig, weights: Sequence[BlockWeights], return_all: bool = False
):
    """Run all blocks from the zero-filled start; returns (N, 2S, H, W) channels."""
    if len(weights) != cfg.num_blocks:
        raise PreconditionError(f"expected {cfg.num_blocks} blocks of weights, got {len(weights)}")
    if batch.shape[1] != cfg.stack_size:
        raise PreconditionError(f"batch carries {batch.shape[1]} slices, model expects {cfg.stack_size}")
    pri = static_priors(batch, cfg.bg_theta)
    x = Tensor(pri.aty)
    states = [x]
    for w in weights:
        e_b = data_consistency_op(x, batch, pri)
        e_phi = phase_op(x, pri)
        x = block_forward(x, e_b, e_phi, pri.e_bg, w, cfg)
        states.append(x)
    return states if return_all else x


def center_slice(out: Tensor, cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    """Real and imaginary parts (N, H, W) of the center slice."""
    c = 2 * cfg.slice_neighbors
    return out[:, c], out[:, c + 1]


def reconstruct(batch: StackBatch, cfg: ModelConfig, weights: Sequence[BlockWeights]) -> np.ndarray:
    """Complex center-slice reconstructions (N, H, W) without recording a graph."""
    with ad.no_grad():
        out = model_forward(batch, cfg, weights)
    return channels_to_complex(out.data)[:, cfg.slice_neighbors]


# checkpoints ---------------------------------------------------------------


class CheckpointError(ValueError):
    """A checkpoint is readable but inconsistent with its configuration."""


def save_checkpoint(path, cfg: ModelConfig, weights: Sequence[BlockWeights]) -> None:
    cfg_bytes = cfg.to_json().encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        for name, t in all_parameters(weights):
            nb = name.encode()
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelConfig, list[BlockWeights]]:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"truncated checkpoint while reading {what}", pos)
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(len(CHECKPOINT_MAGIC), "magic") != CHECKPOINT_MAGIC:
        raise FormatError("bad magic, not a weight checkpoint", 0)
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != CHECKPOINT_VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version}", pos - 2)
    (cfg_len,) = struct.unpack("<I", take(4, "config length"))
    try:
        cfg = ModelConfig.from_json(take(cfg_len, "config").decode())
    except (ValueError, TypeError) as exc:
        raise CheckpointError(f"invalid model configuration: {exc}") from exc
    tensors: dict[str, np.ndarray] = {}
    while pos < len(buf):
        (nlen,) = struct.unpack("<I", take(4, "tensor name length"))
        name = take(nlen, "tensor name").decode()
        (rank,) = struct.unpack("<I", take(4, f"rank of {name}"))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, f"dims of {name}"))
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(8 * count, f"data of {name}"), dtype="<f8")
        tensors[name] = data.reshape(dims).astype(np.float64)

    layout = block_layout(cfg)
    weights = []
    for k in range(cfg.num_blocks):
        params = {}
        for name, shape in layout:
            full = f"block{k}.{name}"
            if full not in tensors:
                raise CheckpointError(f"checkpoint is missing tensor {full}")
            arr = tensors.pop(full)
            if arr.shape != shape:
                raise CheckpointError(f"tensor {full} has shape {arr.shape}, config implies {shape}")
            params[name] = Tensor(arr, requires_grad=True, name=name)
        weights.append(BlockWeights(params))
    if tensors:
        raise CheckpointError(f"checkpoint has unexpected tensors: {sorted(tensors)[:3]}")
    return cfg, weights
