"""
Undersampling and the zero-filled image
=======================================

A phantom slice is measured on a column mask and reconstructed by simply
inverting the FFT with the missing columns left at zero.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from adaptive_csnet import mri_model as mm
from adaptive_csnet.cli import normalize_to_uint8
from adaptive_csnet.data import generate_phantom
from adaptive_csnet.metrics import nmse, ssim

out = Path(__file__).with_name("_output")
out.mkdir(exist_ok=True)

# %%
# One 64x64 complex slice: magnitude plus a smooth phase.
vol = generate_phantom(seed=3, size=64, num_slices=1)
x = vol.complex_slices()[0]
print("magnitude range", np.abs(x).min().round(3), np.abs(x).max().round(3))

# %%
# Masks keep a fully sampled band of low frequencies and a random subset of
# the remaining columns. The number of columns is exactly round(W / R).
for accel in (2, 4, 8):
    m = mm.make_mask(64, accel, seed=0)
    print(f"R={accel}: {m.num_sampled} columns, {m.center_count} of them in the center band")

# %%
# Zero-filled reconstructions get worse quickly as R grows.
row = [np.abs(x)]
for accel in (2, 4, 8):
    b = mm.measure(x, mm.make_mask(64, accel, seed=0))
    zf = np.abs(mm.zero_filled(b))
    print(f"R={accel}: SSIM {ssim(vol.slices[0], zf):.3f}  NMSE {nmse(vol.slices[0], zf):.4f}")
    row.append(zf)

Image.fromarray(np.hstack([normalize_to_uint8(r) for r in row])).save(out / "undersampling.png")
