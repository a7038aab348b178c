"""Minimal complex dense linear algebra used by the equalizer modules.

Conventions: channel matrices are numpy complex128 arrays of shape (B, U)
with B receive antennas as rows and U users as columns.  All functions are
pure and deterministic; the design envelope is dense matrices with
B <= 1024, U <= 64.
"""

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite


def gram(H):
    """Return G = H^H H as an exactly Hermitian (U, U) matrix.

    The upper triangle is computed once and mirrored, so G[i, j] equals
    conj(G[j, i]) bit-exactly and the diagonal is exactly real.
    """
    H = np.asarray(H, dtype=np.complex128)
    G = H.conj().T @ H
    iu = np.triu_indices(G.shape[0], k=1)
    G[iu[1], iu[0]] = G[iu].conj()
    np.fill_diagonal(G, G.diagonal().real)
    return G


def hpd_solve(A, B):
    """Solve A X = B for Hermitian positive-definite A via Cholesky.

    Raises NotPositiveDefinite if the factorization hits a nonpositive
    pivot (e.g. ridge parameter <= 0 with a rank-deficient channel).
    """
    A = np.asarray(A, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    try:
        c, low = scipy.linalg.cho_factor(A, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return scipy.linalg.cho_solve((c, low), B, check_finite=False)


def spectral_norm_sq_estimate(H, iters=30):
    """Estimate the largest eigenvalue of H^H H by power iteration.

    Uses a fixed all-ones start vector, so the result is deterministic.
    For random matrices ~30 iterations land within a few percent of the
    true value; the estimate is a Rayleigh quotient, hence always a lower
    bound up to roundoff.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    H = np.asarray(H, dtype=np.complex128)
    G = gram(H)
    u = G.shape[0]
    v = np.full(u, 1.0 / np.sqrt(u), dtype=np.complex128)
    for _ in range(iters):
        w = G @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(np.real(np.vdot(v, G @ v)))
