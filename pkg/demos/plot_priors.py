"""
Prior channels fed to every block
=================================

Besides the current estimate, each network block sees three images derived
from the measurements: the data-fidelity gradient, the estimate with the
low-resolution phase removed, and a soft background mask.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from adaptive_csnet import mri_model as mm
from adaptive_csnet import priors
from adaptive_csnet.cli import normalize_to_uint8
from adaptive_csnet.data import generate_phantom

out = Path(__file__).with_name("_output")
out.mkdir(exist_ok=True)

vol = generate_phantom(seed=5, size=64, num_slices=1)
x = vol.complex_slices()[0]
b = mm.measure(x, mm.make_mask(64, 4, seed=2))
x0 = mm.zero_filled(b)

# %%
# The zero-filled image already agrees with every measured sample, so its
# data-consistency term vanishes. The true image does too.
print("|e_b(x0)|max", np.abs(priors.data_consistency(x0, b)).max())
print("|e_b(x)|max ", np.abs(priors.data_consistency(x, b)).max())

# %%
# Removing the low-frequency phase leaves an almost real image.
p = priors.compute_priors(x0, b)
print("imag/real energy before", np.sum(x0.imag**2) / np.sum(x0.real**2))
print("imag/real energy after ", np.sum(p.e_phi.imag**2) / np.sum(p.e_phi.real**2))

# %%
# The background mask comes from the low-resolution magnitude and does not
# change when the scanner gain changes.
louder = mm.KSpaceData(b.measurements * 1000, b.mask)
print("mask unchanged by gain:", np.array_equal(p.e_bg, priors.background_mask(louder)))
print("background fraction", round(float(np.mean(p.e_bg < 0.5)), 3))

tiles = [np.abs(x0), np.abs(p.e_phi.imag), p.e_bg]
Image.fromarray(np.hstack([normalize_to_uint8(t) for t in tiles])).save(out / "priors.png")
