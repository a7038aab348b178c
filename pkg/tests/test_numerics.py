"""Tests for the shared linear-algebra helpers."""

import numpy as np
import pytest

from fameeq.errors import NotPositiveDefinite
from fameeq.numerics import gram, hpd_solve, spectral_norm_sq_estimate


def _gram_oracle(h):
    """Entry-by-entry H^H H, written independently of the implementation."""
    b, u = h.shape
    g = np.zeros((u, u), dtype=complex)
    for i in range(u):
        for j in range(u):
            acc = 0.0 + 0.0j
            for k in range(b):
                acc += np.conj(h[k, i]) * h[k, j]
            g[i, j] = acc
    return g


def _rand_h(rng, b, u):
    return (rng.standard_normal((b, u)) + 1j * rng.standard_normal((b, u))) / np.sqrt(2)


class TestGram:
    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            h = _rand_h(rng, rng.integers(2, 24), rng.integers(1, 8))
            g = gram(h)
            np.testing.assert_allclose(g, _gram_oracle(h), rtol=0, atol=1e-12)

    def test_exactly_hermitian(self):
        # gram must return a matrix equal to its own conjugate transpose bit-for-bit
        rng = np.random.default_rng(12)
        h = _rand_h(rng, 32, 6)
        g = gram(h)
        assert np.array_equal(g, g.conj().T)

    def test_identity_columns(self):
        h = np.eye(4, 2, dtype=complex)
        np.testing.assert_allclose(gram(h), np.eye(2), atol=0)


class TestHpdSolve:
    def test_matches_generic_solver(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            u = int(rng.integers(1, 10))
            h = _rand_h(rng, u + 4, u)
            a = gram(h) + 0.5 * np.eye(u)
            rhs = _rand_h(rng, u, 3)
            x = hpd_solve(a, rhs)
            np.testing.assert_allclose(x, np.linalg.solve(a, rhs), rtol=1e-10, atol=1e-12)

    def test_rejects_indefinite(self):
        a = np.diag([1.0, -1.0]).astype(complex)
        with pytest.raises(NotPositiveDefinite):
            hpd_solve(a, np.ones((2, 1), dtype=complex))

    def test_rejects_singular(self):
        a = np.zeros((3, 3), dtype=complex)
        with pytest.raises(NotPositiveDefinite):
            hpd_solve(a, np.ones((3, 1), dtype=complex))


class TestSpectralNormSqEstimate:
    def test_never_exceeds_true_largest_eigenvalue(self):
        # the estimate is a Rayleigh quotient, so it lower-bounds the top eigenvalue
        rng = np.random.default_rng(14)
        for _ in range(20):
            h = _rand_h(rng, int(rng.integers(4, 40)), int(rng.integers(2, 12)))
            true_top = float(np.linalg.eigvalsh(gram(h))[-1])
            est = spectral_norm_sq_estimate(h, 30)
            assert est <= true_top * (1 + 1e-9)
            assert est >= 0.5 * true_top

    def test_tight_on_well_separated_spectrum(self):
        # diagonal channel: dominant singular value with a big gap converges fast
        h = np.diag([3.0, 1.0, 0.5]).astype(complex)
        est = spectral_norm_sq_estimate(h, 30)
        assert abs(est - 9.0) < 1e-9

    def test_rank_one(self):
        h = np.ones((8, 1), dtype=complex)
        assert abs(spectral_norm_sq_estimate(h, 5) - 8.0) < 1e-12
