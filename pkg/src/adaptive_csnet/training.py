"""Two-phase training of the unrolled network on phantom volumes.

Phase 1 draws a fresh acceleration from {2, ..., 10} for every example;
phase 2 fine-tunes with accelerations {4, 8} only. The learning rate decays
by a constant factor per epoch across both phases. Supervision uses only the
center slice of each stack.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import adaptive_cs_net as net
from . import metrics
from .adaptive_cs_net import BlockWeights, ModelConfig, StackBatch
from .classical_cs import LAMBDA_GRID, SolverConfig, ista_solve
from .data import PhantomVolume
from .errors import NumericalError, PreconditionError
from .metrics import LossConfig
from .mri_model import make_mask, measure
from .optim import RAdam, decayed_lr
from .prng import Stream, derive_key
from .transforms import fft2c

logger = logging.getLogger(__name__)

PHASE1_ACCELERATIONS = tuple(range(2, 11))
PHASE2_ACCELERATIONS = (4, 8)
METRICS_HEADER = ("epoch", "phase", "train_loss", "val_ssim", "val_nmse", "lr")


@dataclass(frozen=True)
class Example:
    volume: int
    center: int


@dataclass
class Batch:
    measurements: StackBatch
    targets: np.ndarray  # (N, S, H, W) magnitudes of every slice in the stack


def enumerate_examples(volumes: Sequence[PhantomVolume]) -> list[Example]:
    return [Example(v, c) for v, vol in enumerate(volumes) for c in range(vol.num_slices)]


def make_batch(
    volumes: Sequence[PhantomVolume],
    examples: Sequence[Example],
    accelerations: Sequence[float],
    mask_seeds: Sequence[int],
    neighbors: int,
    center_fraction: float | None = None,
) -> Batch:
    items, targets = [], []
    for ex, acc, ms in zip(examples, accelerations, mask_seeds):
        vol = volumes[ex.volume]
        idx = net.stack_indices(vol.num_slices, ex.center, neighbors)
        gt = vol.complex_slices()[idx]
        mask = make_mask(vol.size, acc, center_fraction, seed=ms)
        items.append((fft2c(gt) * mask.sampled, mask))
        targets.append(vol.slices[idx])
    return Batch(StackBatch.from_kspace(items), np.stack(targets))


def batch_loss(batch: Batch, cfg: ModelConfig, weights: Sequence[BlockWeights], loss_cfg: LossConfig):
    """Loss of the model output against the center-slice targets only."""
    out = net.model_forward(batch.measurements, cfg, weights)
    re, im = net.center_slice(out, cfg)
    return metrics.reconstruction_loss(batch.targets[:, cfg.slice_neighbors], re, im, loss_cfg)


def epoch_plan(num_examples: int, seed: int, epoch: int, accelerations: Sequence[int]):
    """Shuffled example order with per-example acceleration and mask seed."""
    stream = Stream(seed, 0x45504F43, epoch)
    order = stream.permutation(num_examples)
    accs = [accelerations[i] for i in stream.integers(num_examples, len(accelerations))]
    mask_seeds = [derive_key(seed, 0x4D534B, epoch, int(i)) for i in range(num_examples)]
    return order, accs, mask_seeds


def evaluate(
    volumes: Sequence[PhantomVolume],
    cfg: ModelConfig,
    weights: Sequence[BlockWeights] | None,
    acceleration: float,
    seed: int = 0,
    chunk: int = 6,
) -> dict[str, np.ndarray]:
    """Per-slice SSIM/NMSE of the network (and zero-filled) reconstructions.

    Masks are deterministic per (seed, example index). With ``weights=None``
    only the zero-filled baseline is computed.
    """
    examples = enumerate_examples(volumes)
    seeds = [derive_key(seed, 0x56414C, i) for i in range(len(examples))]
    out = {"ssim": [], "nmse": [], "zf_ssim": [], "zf_nmse": []}
    for start in range(0, len(examples), chunk):
        exs = examples[start : start + chunk]
        batch = make_batch(volumes, exs, [acceleration] * len(exs), seeds[start : start + chunk], cfg.slice_neighbors)
        t = batch.targets[:, cfg.slice_neighbors]
        zf = np.abs(batch.measurements.zero_filled()[:, cfg.slice_neighbors])
        rec = np.abs(net.reconstruct(batch.measurements, cfg, weights)) if weights is not None else None
        for i in range(len(exs)):
            out["zf_ssim"].append(metrics.ssim(t[i], zf[i]))
            out["zf_nmse"].append(metrics.nmse(t[i], zf[i]))
            if rec is not None:
                out["ssim"].append(metrics.ssim(t[i], rec[i]))
                out["nmse"].append(metrics.nmse(t[i], rec[i]))
    return {k: np.asarray(v) for k, v in out.items()}


def evaluation_masks(volumes: Sequence[PhantomVolume], acceleration: float, seed: int = 0):
    """The mask ``evaluate`` uses for every example, in example order."""
    examples = enumerate_examples(volumes)
    return [make_mask(volumes[ex.volume].size, acceleration, seed=derive_key(seed, 0x56414C, i)) for i, ex in enumerate(examples)]


def evaluate_ista(
    volumes: Sequence[PhantomVolume], solver: SolverConfig, acceleration: float, seed: int = 0
) -> dict[str, np.ndarray]:
    """Per-slice SSIM/NMSE of the wavelet ISTA baseline on the evaluation masks."""
    masks = evaluation_masks(volumes, acceleration, seed)
    out = {"ssim": [], "nmse": []}
    for ex, mask in zip(enumerate_examples(volumes), masks):
        vol = volumes[ex.volume]
        rec, _ = ista_solve(measure(vol.complex_slices()[ex.center], mask), solver)
        out["ssim"].append(metrics.ssim(vol.slices[ex.center], np.abs(rec)))
        out["nmse"].append(metrics.nmse(vol.slices[ex.center], np.abs(rec)))
    return {k: np.asarray(v) for k, v in out.items()}


def tune_lambda(
    volumes: Sequence[PhantomVolume],
    acceleration: float,
    seed: int = 0,
    max_iters: int = 200,
    grid: Sequence[float] = LAMBDA_GRID,
) -> tuple[float, dict[float, float]]:
    """Grid-search lambda for the best mean SSIM; returns the winner and all scores."""
    scores = {}
    for lam in grid:
        scores[lam] = float(evaluate_ista(volumes, SolverConfig(lam=lam, max_iters=max_iters), acceleration, seed)["ssim"].mean())
    return max(grid, key=lambda lam: scores[lam]), scores


def train(
    train_volumes: Sequence[PhantomVolume],
    val_volumes: Sequence[PhantomVolume],
    model_cfg: ModelConfig,
    loss_cfg: LossConfig = LossConfig(),
    epochs: int = 4,
    fine_tune_epochs: int = 2,
    batch_size: int = 6,
    lr: float = 1e-4,
    lr_decay: float = 0.95,
    seed: int = 0,
    val_acceleration: float = 4.0,
    weights: list[BlockWeights] | None = None,
) -> tuple[list[BlockWeights], list[dict]]:
    """Train from ``model_cfg.seed`` initialization (or ``weights``).

    Returns the trained weights and one log row per epoch.
    """
    if not train_volumes:
        raise PreconditionError("training set is empty")
    if weights is None:
        weights = net.init_weights(model_cfg)
    named = net.all_parameters(weights)
    opt = RAdam([t for _, t in named], lr=lr, names=[n for n, _ in named])
    examples = enumerate_examples(train_volumes)
    log: list[dict] = []
    schedule = [(1, PHASE1_ACCELERATIONS)] * epochs + [(2, PHASE2_ACCELERATIONS)] * fine_tune_epochs
    step = 0
    for epoch, (phase, accs_allowed) in enumerate(schedule):
        opt.lr = decayed_lr(lr, epoch, lr_decay)
        order, accs, mseeds = epoch_plan(len(examples), seed, epoch, accs_allowed)
        losses = []
        for b, start in enumerate(range(0, len(order), batch_size)):
            idx = order[start : start + batch_size]
            batch = make_batch(
                train_volumes,
                [examples[i] for i in idx],
                [accs[j] for j in range(start, start + len(idx))],
                [mseeds[j] for j in range(start, start + len(idx))],
                model_cfg.slice_neighbors,
            )
            loss = batch_loss(batch, model_cfg, weights, loss_cfg)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError(f"non-finite loss at epoch {epoch + 1}, batch {b}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            losses.append(value)
        ev = evaluate(val_volumes, model_cfg, weights, val_acceleration, seed) if val_volumes else None
        row = {
            "epoch": epoch + 1,
            "phase": phase,
            "train_loss": float(np.mean(losses)),
            "val_ssim": float(ev["ssim"].mean()) if ev else float("nan"),
            "val_nmse": float(ev["nmse"].mean()) if ev else float("nan"),
            "lr": opt.lr,
        }
        logger.info("epoch %d phase %d loss %.5f val_ssim %.4f", row["epoch"], phase, row["train_loss"], row["val_ssim"])
        log.append(row)
    return weights, log


def write_metrics_csv(path, log: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for row in log:
            w.writerow([row["epoch"], row["phase"]] + [repr(float(row[k])) for k in METRICS_HEADER[2:]])
