"""Constellations, Gray bit mapping, and hard/soft demapping.

Bit labeling contract
---------------------
Square QAM labels split the bit pattern into a real-axis half followed by
an imaginary-axis half, each half Gray-mapped onto the amplitude levels.
For 16-QAM (2 bits per axis, levels in units of sqrt(Es/10)):

    axis bits   level
    00          -3
    01          -1
    11          +1
    10          +3

A 4-bit label (b0 b1 b2 b3) maps b0 b1 to the real axis and b2 b3 to the
imaginary axis, e.g. 0000 -> (-3 - 3j) * sqrt(Es/10) and
1110 -> (+1 + 3j) * sqrt(Es/10).  The first bit of each axis pair is the
sign bit (0 negative, 1 positive), the second selects the inner (+-1)
versus outer (+-3) level.  QPSK uses one sign bit per axis with levels
+-sqrt(Es/2).  Regression fixtures depend on this table; treat it as a
bit-exact external contract.

LLR sign convention: positive LLR means bit 1 is more likely.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import LengthMismatch, NonpositiveVariance

# Clamp for LLR magnitudes (natural-log units).  Large enough to never
# change a Viterbi path decision, small enough that exp-based metrics
# downstream cannot overflow.
LLR_CLAMP = 80.0

_GRAY2 = {(0, 0): -3, (0, 1): -1, (1, 1): +1, (1, 0): +3}


@dataclass(frozen=True)
class Constellation:
    """Complex symbol set with per-point Gray bit labels.

    points[i] is labeled by labels[i] (a row of bits_per_symbol 0/1
    values).  subsets_one[q] / subsets_zero[q] hold the point indices
    whose qth bit is 1 / 0.
    """

    name: str
    points: np.ndarray
    bits_per_symbol: int
    labels: np.ndarray
    subsets_one: tuple = field(repr=False, default=())
    subsets_zero: tuple = field(repr=False, default=())
    _label_to_index: np.ndarray = field(repr=False, default=None)

    @property
    def es(self):
        """Average symbol energy, mean |s|^2 over the point set."""
        return float(np.mean(np.abs(self.points) ** 2))


def _build(name, points, labels):
    points = np.asarray(points, dtype=np.complex128)
    labels = np.asarray(labels, dtype=np.uint8)
    q = labels.shape[1]
    weights = 1 << np.arange(q - 1, -1, -1)
    codes = labels @ weights
    label_to_index = np.empty(1 << q, dtype=np.int64)
    label_to_index[codes] = np.arange(len(points))
    ones = tuple(np.flatnonzero(labels[:, b] == 1) for b in range(q))
    zeros = tuple(np.flatnonzero(labels[:, b] == 0) for b in range(q))
    return Constellation(name, points, q, labels, ones, zeros, label_to_index)


def make_qam16(es=1.0):
    """Gray-labeled 16-QAM with average energy exactly `es`.

    Per-axis levels are {+-1, +-3} * sqrt(es/10); the per-axis label
    table is documented in the module docstring.
    """
    if es <= 0:
        raise ValueError("es must be > 0")
    scale = np.sqrt(es / 10.0)
    points = []
    labels = []
    for b0 in (0, 1):
        for b1 in (0, 1):
            for b2 in (0, 1):
                for b3 in (0, 1):
                    re = _GRAY2[(b0, b1)]
                    im = _GRAY2[(b2, b3)]
                    points.append((re + 1j * im) * scale)
                    labels.append((b0, b1, b2, b3))
    return _build("qam16", points, labels)


def make_qpsk(es=1.0):
    """Gray-labeled QPSK with average energy exactly `es`."""
    if es <= 0:
        raise ValueError("es must be > 0")
    level = np.sqrt(es / 2.0)
    signs = {0: -1.0, 1: +1.0}
    points = []
    labels = []
    for b0 in (0, 1):
        for b1 in (0, 1):
            points.append((signs[b0] + 1j * signs[b1]) * level)
            labels.append((b0, b1))
    return _build("qpsk", points, labels)


def make_constellation(name, es=1.0):
    """Look up a constellation constructor by id ('qam16' or 'qpsk')."""
    try:
        ctor = {"qam16": make_qam16, "qpsk": make_qpsk}[name]
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}") from None
    return ctor(es)


def map_bits(c, bits):
    """Map a flat 0/1 sequence to symbols, bits_per_symbol bits per point."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    q = c.bits_per_symbol
    if bits.size % q != 0:
        raise LengthMismatch(
            f"bit count {bits.size} not divisible by {q} bits per symbol"
        )
    groups = bits.reshape(-1, q)
    weights = 1 << np.arange(q - 1, -1, -1)
    idx = c._label_to_index[groups @ weights]
    return c.points[idx]


def hard_demap(c, symbols):
    """Nearest-point decision; returns the flat label bit sequence."""
    symbols = np.atleast_1d(np.asarray(symbols, dtype=np.complex128))
    idx = np.argmin(np.abs(symbols[:, None] - c.points[None, :]), axis=1)
    return c.labels[idx].reshape(-1).astype(np.uint8)


def soft_demap(c, s_hat, nu_sq, max_log=False):
    """Per-bit LLRs for unbiased symbol estimates.

    Computes, for each bit position q,

        llr_q = log sum_{s in S_q^(1)} exp(-|s_hat - s|^2 / nu_sq)
              - log sum_{s in S_q^(0)} exp(-|s_hat - s|^2 / nu_sq)

    with a max-shifted log-sum-exp and final clamping to +-LLR_CLAMP.
    Positive means bit 1 is more likely.  `s_hat` may be a scalar or an
    array; `nu_sq` broadcasts against it (per-symbol variances allowed).
    With max_log=True the sums are replaced by their largest term.

    Returns an array of shape s_hat.shape + (bits_per_symbol,).
    """
    s_hat = np.asarray(s_hat, dtype=np.complex128)
    scalar_in = s_hat.ndim == 0
    s_flat = np.atleast_1d(s_hat).ravel()
    nu = np.broadcast_to(np.asarray(nu_sq, dtype=np.float64), s_hat.shape)
    nu_flat = np.atleast_1d(nu).ravel()
    if np.any(nu_flat <= 0.0) or not np.all(np.isfinite(nu_flat)):
        raise NonpositiveVariance("nu_sq must be finite and > 0")

    # (N, M) exponents -|s_hat - s|^2 / nu_sq
    d2 = np.abs(s_flat[:, None] - c.points[None, :]) ** 2
    metric = -d2 / nu_flat[:, None]

    q = c.bits_per_symbol
    llr = np.empty((s_flat.size, q))
    for b in range(q):
        m1 = metric[:, c.subsets_one[b]]
        m0 = metric[:, c.subsets_zero[b]]
        if max_log:
            llr[:, b] = m1.max(axis=1) - m0.max(axis=1)
        else:
            llr[:, b] = logsumexp(m1, axis=1) - logsumexp(m0, axis=1)
    np.clip(llr, -LLR_CLAMP, LLR_CLAMP, out=llr)
    if scalar_in:
        return llr[0]
    return llr.reshape(s_hat.shape + (q,))
