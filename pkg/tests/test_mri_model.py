import numpy as np
import pytest

from adaptive_csnet import mri_model as mm
from adaptive_csnet.data import generate_phantom
from adaptive_csnet.errors import ParameterError, PreconditionError
from adaptive_csnet.metrics import nmse


def rand_complex(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def inner(a, b):
    return np.vdot(b, a)


class TestMask:
    def test_full_sampling(self):
        m = mm.make_mask(64, 1, 1.0, seed=3)
        assert m.sampled.all()

    def test_exact_count_and_center(self):
        m = mm.make_mask(64, 4, 0.08, seed=11)
        assert m.num_sampled == 16
        assert m.center_count == 5
        assert m.sampled[30:35].all()
        assert m.center_band[32]

    def test_deterministic(self):
        a = mm.make_mask(96, 8, 0.04, seed=5)
        b = mm.make_mask(96, 8, 0.04, seed=5)
        np.testing.assert_array_equal(a.sampled, b.sampled)

    def test_seed_changes_mask(self):
        a = mm.make_mask(64, 4, 0.08, seed=1)
        b = mm.make_mask(64, 4, 0.08, seed=2)
        assert not np.array_equal(a.sampled, b.sampled)

    @pytest.mark.parametrize("acc", [2, 3, 4, 5.5, 8, 10])
    def test_counts_over_seeds(self, acc):
        for seed in range(30):
            m = mm.make_mask(64, acc, seed=seed)
            assert m.num_sampled == int(np.floor(64 / acc + 0.5))
            assert m.sampled[m.center_band].all()

    def test_budget_below_center_band(self):
        with pytest.raises(ParameterError):
            mm.make_mask(64, 10, 0.5, seed=0)

    @pytest.mark.parametrize("kw", [dict(width=4, acceleration=2), dict(width=64, acceleration=0.5), dict(width=64, acceleration=65)])
    def test_bad_parameters(self, kw):
        with pytest.raises(ParameterError):
            mm.make_mask(center_fraction=0.1, seed=0, **kw)

    def test_default_center_fraction(self):
        assert mm.default_center_fraction(4) == pytest.approx(0.08)
        assert mm.default_center_fraction(8) == pytest.approx(0.04)


class TestOperator:
    def test_full_mask_round_trip(self):
        x = rand_complex(np.random.default_rng(0), (32, 32))
        b = mm.forward(x, mm.full_mask(32))
        assert np.max(np.abs(mm.adjoint(b) - x)) < 1e-12

    def test_zero_in_zero_out(self):
        m = mm.make_mask(32, 4, seed=0)
        assert np.all(mm.forward(np.zeros((32, 32), complex), m).measurements == 0)
        assert np.all(mm.adjoint(mm.KSpaceData(np.zeros((32, 32), complex), m)) == 0)

    def test_unsampled_columns_are_zero(self):
        m = mm.make_mask(32, 4, seed=0)
        b = mm.forward(rand_complex(np.random.default_rng(1), (32, 32)), m)
        assert np.all(b.measurements[:, ~m.sampled] == 0)

    def test_adjoint_dot_product(self):
        rng = np.random.default_rng(2)
        for seed in range(10):
            m = mm.make_mask(32, 4, seed=seed)
            x, y = rand_complex(rng, (32, 32)), rand_complex(rng, (32, 32))
            ax = mm.forward(x, m).measurements
            lhs = inner(ax, y * m.sampled)
            rhs = inner(x, mm.adjoint(mm.KSpaceData(y * m.sampled, m)))
            assert abs(lhs - rhs) / (np.linalg.norm(ax) * np.linalg.norm(y)) < 1e-12

    def test_non_expansive_and_projection(self):
        rng = np.random.default_rng(3)
        m = mm.make_mask(32, 3, seed=4)
        x = rand_complex(rng, (32, 32))
        assert np.linalg.norm(mm.forward(x, m).measurements) <= np.linalg.norm(x) + 1e-12
        b = mm.KSpaceData(rand_complex(rng, (32, 32)) * m.sampled, m)
        aahb = mm.forward(mm.adjoint(b), m).measurements
        np.testing.assert_allclose(aahb, b.measurements, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(PreconditionError):
            mm.forward(np.zeros((32, 16), complex), mm.make_mask(32, 2, seed=0))


class TestSimpleRecons:
    def test_zero_filled_full_mask(self):
        x = generate_phantom(1, 64, 1).complex_slices()[0]
        b = mm.measure(x, mm.full_mask(64))
        assert np.max(np.abs(mm.zero_filled(b) - x)) < 1e-12

    def test_low_freq_ignores_outer_columns(self):
        rng = np.random.default_rng(5)
        m = mm.make_mask(64, 4, seed=7)
        b = mm.forward(rand_complex(rng, (64, 64)), m)
        pert = b.measurements.copy()
        outer = np.flatnonzero(m.sampled & ~m.center_band)
        pert[:, outer] += 10 * rand_complex(rng, (64, outer.size))
        np.testing.assert_array_equal(mm.low_freq_recon(b), mm.low_freq_recon(mm.KSpaceData(pert, m)))

    def test_zero_filled_error_grows_with_acceleration(self):
        errs = {2: [], 4: []}
        for seed in range(20):
            x = generate_phantom(seed, 64, 1).complex_slices()[0]
            for acc in errs:
                b = mm.measure(x, mm.make_mask(64, acc, seed=seed))
                errs[acc].append(nmse(x, mm.zero_filled(b)))
        assert np.mean(errs[4]) > np.mean(errs[2])
