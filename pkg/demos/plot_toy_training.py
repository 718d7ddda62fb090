"""
Training a small unrolled network
=================================

A deliberately small model (2 blocks, 8 base channels) trained for a few
epochs on phantom stacks of 3 slices. This takes about a minute on one
core; the full toy configuration lives in the acceptance tests.
"""

import logging
from pathlib import Path

import numpy as np

from adaptive_csnet import adaptive_cs_net as net
from adaptive_csnet import training
from adaptive_csnet.data import generate_volumes

logging.basicConfig(level=logging.INFO, format="%(message)s")
out = Path(__file__).with_name("_output")
out.mkdir(exist_ok=True)

train_vols = generate_volumes(20, 6, 64, seed=100)
val_vols = generate_volumes(2, 6, 64, seed=900)

cfg = net.ModelConfig(num_blocks=2, base_channels=8, seed=1)
print("trainable parameters:", net.param_count(cfg))
big, n_big = net.large_scale_config()
print(f"25 blocks, base width {big.base_channels}, {big.scales} scales: {n_big:,} parameters")

# %%
# Phase 1 draws R from 2..10 per example, phase 2 only uses 4 and 8. A higher
# learning rate than the default makes progress visible in so few steps.
weights, log = training.train(train_vols, val_vols, cfg, epochs=3, fine_tune_epochs=1, lr=2e-3)
training.write_metrics_csv(out / "toy_metrics.csv", log)

# %%
for accel in (4, 8):
    ev = training.evaluate(val_vols, cfg, weights, accel)
    print(
        f"R={accel}: network SSIM {ev['ssim'].mean():.3f} NMSE {ev['nmse'].mean():.4f} | "
        f"zero-filled SSIM {ev['zf_ssim'].mean():.3f} NMSE {ev['zf_nmse'].mean():.4f}"
    )

# %%
# Checkpoints store the config as JSON followed by raw float64 tensors.
net.save_checkpoint(out / "toy.acsnw", cfg, weights)
cfg2, weights2 = net.load_checkpoint(out / "toy.acsnw")
same = all(np.array_equal(a.data, b.data) for (_, a), (_, b) in zip(net.all_parameters(weights), net.all_parameters(weights2)))
print("checkpoint round trip exact:", cfg2 == cfg and same)
