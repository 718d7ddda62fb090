import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_csnet.errors import PreconditionError
from adaptive_csnet.transforms import dwt2, fft2c, idwt2, ifft2c

from _oracles import dft_matrix


def rand_complex(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


class TestFFT:
    def test_center_impulse_gives_constant(self):
        n = 16
        x = np.zeros((n, n), complex)
        x[n // 2, n // 2] = 1.0
        np.testing.assert_allclose(fft2c(x), np.full((n, n), 1.0 / n), atol=1e-15)

    def test_constant_gives_center_spike(self):
        n, c = 8, 2.5
        k = fft2c(np.full((n, n), c, complex))
        expected = np.zeros((n, n), complex)
        expected[n // 2, n // 2] = c * n
        np.testing.assert_allclose(k, expected, atol=1e-13)

    def test_matches_definition(self):
        rng = np.random.default_rng(0)
        x = rand_complex(rng, (6, 10))
        ref = dft_matrix(6) @ x @ dft_matrix(10).T
        np.testing.assert_allclose(fft2c(x), ref, atol=1e-12)

    def test_parseval_and_inverse(self):
        rng = np.random.default_rng(1)
        x = rand_complex(rng, (16, 16))
        assert abs(np.linalg.norm(fft2c(x)) - np.linalg.norm(x)) < 1e-12
        assert np.max(np.abs(ifft2c(fft2c(x)) - x)) < 1e-12
        assert np.max(np.abs(fft2c(ifft2c(x)) - x)) < 1e-12

    def test_odd_sizes(self):
        rng = np.random.default_rng(2)
        x = rand_complex(rng, (5, 7))
        assert np.max(np.abs(ifft2c(fft2c(x)) - x)) < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rand_complex(rng, (8, 8)), rand_complex(rng, (8, 8))
        np.testing.assert_allclose(fft2c(a * x + b * y), a * fft2c(x) + b * fft2c(y), atol=1e-12)


class TestHaar:
    def test_hand_computed_butterfly(self):
        a, b, c, d = 1.0, 4.0, -2.0, 7.0
        co = dwt2(np.array([[a, b], [c, d]]), 1)
        lh, hl, hh = co.details[0]
        assert co.approx[0, 0] == (a + b + c + d) / 2
        assert lh[0, 0] == (a + b - c - d) / 2
        assert hl[0, 0] == (a - b + c - d) / 2
        assert hh[0, 0] == (a - b - c + d) / 2

    def test_constant_has_no_detail(self):
        co = dwt2(np.full((16, 16), 0.7), 3)
        for band in co.details:
            for arr in band:
                assert np.all(arr == 0)

    def test_round_trip_and_energy(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(32, 32))
        co = dwt2(x, 4)
        assert np.max(np.abs(idwt2(co) - x)) < 1e-12
        assert abs(co.norm() - np.linalg.norm(x)) < 1e-12
        assert sum(a.size for a in co.arrays()) == x.size

    def test_indivisible_rejected(self):
        with pytest.raises(PreconditionError):
            dwt2(np.zeros((12, 16)), 3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 3), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, levels, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(16, 8)), rng.normal(size=(16, 8))
        lhs = dwt2(a * x + b * y, levels).arrays()
        rx, ry = dwt2(x, levels).arrays(), dwt2(y, levels).arrays()
        for l, u, v in zip(lhs, rx, ry):
            np.testing.assert_allclose(l, a * u + b * v, atol=1e-12)
