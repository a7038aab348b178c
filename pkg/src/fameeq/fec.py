"""Punctured convolutional coding with soft-input Viterbi decoding.

The default codec is the industry-standard constraint-length-7 code with
generators (133, 171) octal, punctured from rate 1/2 to rate 3/4 with the
classic pattern: over three consecutive encoder steps, keep both output
bits of the first step, only the first-generator bit of the second, and
only the second-generator bit of the third.  Frames are terminated with
constraint_length-1 zero tail bits so the trellis starts and ends in the
zero state.

LLR sign convention matches the demapper: positive means bit 1.  Punctured
positions enter the trellis as zero LLRs (erasures).
"""

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch


@dataclass(frozen=True)
class CodecSpec:
    """Mother code generators (octal-literal ints, MSB taps the current
    bit) plus the keep/drop puncturing cycle as (keep_a, keep_b) pairs."""

    constraint_length: int = 7
    gen_a: int = 0o133
    gen_b: int = 0o171
    puncture: tuple = ((1, 1), (1, 0), (0, 1))

    @property
    def n_tail(self):
        return self.constraint_length - 1


def default_codec():
    return CodecSpec()


@dataclass(frozen=True)
class Frame:
    """One user's codeword within a simulation frame."""

    user: int
    info_bits: np.ndarray
    coded_bits: np.ndarray


def _tap_offsets(gen, k):
    # bit p of gen (0 = LSB) taps the input k-1-p steps back
    return [k - 1 - p for p in range(k) if (gen >> p) & 1]


def _steps_of(spec, n_info):
    return n_info + spec.n_tail


def _keep_mask(spec, n_steps):
    pat = np.asarray(spec.puncture, dtype=bool)
    reps = -(-n_steps // pat.shape[0])
    return np.tile(pat, (reps, 1))[:n_steps]


def coded_length(spec, n_info):
    """Punctured codeword length for n_info information bits."""
    return int(_keep_mask(spec, _steps_of(spec, n_info)).sum())


def _steps_from_coded_len(spec, n_llrs):
    # coded_length is strictly increasing in the step count, so invert by
    # probing around the rate-3/4 estimate
    guess = (3 * n_llrs) // 4
    for steps in range(max(1, guess - 4), guess + 5):
        if int(_keep_mask(spec, steps).sum()) == n_llrs:
            return steps
    raise LengthMismatch(f"{n_llrs} LLRs do not form a punctured codeword")


def encode(spec, info):
    """Terminated, punctured encoding of a bit sequence."""
    info = np.asarray(info, dtype=np.uint8)
    if info.ndim != 1 or info.size == 0:
        raise ValueError("info must be a nonempty 1-D bit array")
    k = spec.constraint_length
    x = np.concatenate([np.zeros(k - 1, np.uint8), info, np.zeros(spec.n_tail, np.uint8)])
    idx = np.arange(info.size + spec.n_tail) + (k - 1)
    a = np.zeros(idx.size, np.uint8)
    b = np.zeros(idx.size, np.uint8)
    for off in _tap_offsets(spec.gen_a, k):
        a ^= x[idx - off]
    for off in _tap_offsets(spec.gen_b, k):
        b ^= x[idx - off]
    pairs = np.stack([a, b], axis=1)
    return pairs[_keep_mask(spec, idx.size)]


# ---------------------------------------------------------------------------
# trellis tables, cached per codec

_TABLES = {}


def _tables(spec):
    key = (spec.constraint_length, spec.gen_a, spec.gen_b)
    if key in _TABLES:
        return _TABLES[key]
    k = spec.constraint_length
    n_states = 1 << (k - 1)
    low_mask = (1 << (k - 2)) - 1

    def out(gen, state, bit):
        reg = (bit << (k - 1)) | state
        return bin(reg & gen).count("1") & 1

    # each state has exactly two predecessors; the arriving input bit is
    # the state's top bit, so only the path choice differs between them
    pred = np.empty((n_states, 2), dtype=np.int64)
    sign_a = np.empty((n_states, 2))
    sign_b = np.empty((n_states, 2))
    for s in range(n_states):
        bit = s >> (k - 2)
        low = s & low_mask
        for i, p in enumerate((2 * low, 2 * low + 1)):
            pred[s, i] = p
            sign_a[s, i] = 2 * out(spec.gen_a, p, bit) - 1
            sign_b[s, i] = 2 * out(spec.gen_b, p, bit) - 1
    _TABLES[key] = (pred, sign_a, sign_b)
    return _TABLES[key]


def _viterbi_pairs(spec, pairs):
    """Terminated max-metric decoding of depunctured LLR pairs.

    pairs has shape (n_codewords, n_steps, 2); returns decided step bits
    of shape (n_codewords, n_steps) including the tail.  Metric ties pick
    the lower-numbered predecessor state, making decisions deterministic.
    """
    pred, sign_a, sign_b = _tables(spec)
    n_cw, n_steps, _ = pairs.shape
    n_states = pred.shape[0]
    k = spec.constraint_length

    pm = np.full((n_cw, n_states), -np.inf)
    pm[:, 0] = 0.0
    choices = np.empty((n_steps, n_cw, n_states), dtype=np.uint8)
    half = 0.5 * pairs
    for t in range(n_steps):
        la = half[:, t, 0][:, None, None]
        lb = half[:, t, 1][:, None, None]
        cand = pm[:, pred] + la * sign_a + lb * sign_b    # (n_cw, n_states, 2)
        take_hi = cand[:, :, 1] > cand[:, :, 0]
        choices[t] = take_hi
        pm = np.where(take_hi, cand[:, :, 1], cand[:, :, 0])

    bits = np.empty((n_cw, n_steps), dtype=np.uint8)
    state = np.zeros(n_cw, dtype=np.int64)
    rows = np.arange(n_cw)
    for t in range(n_steps - 1, -1, -1):
        bits[:, t] = state >> (k - 2)
        state = pred[state, choices[t, rows, state]]
    return bits


def depuncture(spec, llrs, n_steps):
    """Spread punctured-codeword LLRs over the mother-code grid, zeros at
    the dropped positions."""
    keep = _keep_mask(spec, n_steps)
    llrs = np.asarray(llrs, dtype=float).ravel()
    if int(keep.sum()) != llrs.size:
        raise LengthMismatch(
            f"expected {int(keep.sum())} LLRs for {n_steps} steps, got {llrs.size}"
        )
    pairs = np.zeros((n_steps, 2))
    pairs[keep] = llrs
    return pairs


def viterbi_soft(spec, llrs):
    """Soft-input decoding of one punctured codeword; returns info bits."""
    llrs = np.asarray(llrs, dtype=float).ravel()
    n_steps = _steps_from_coded_len(spec, llrs.size)
    if n_steps <= spec.n_tail:
        raise LengthMismatch("codeword shorter than the termination tail")
    pairs = depuncture(spec, llrs, n_steps)
    bits = _viterbi_pairs(spec, pairs[None])
    return bits[0, : n_steps - spec.n_tail]


def viterbi_soft_many(spec, llr_matrix):
    """Decode several equal-length punctured codewords in one pass.

    llr_matrix has shape (n_codewords, coded_length); returns an array of
    shape (n_codewords, n_info).  Decisions are identical to per-codeword
    viterbi_soft calls.
    """
    llr_matrix = np.asarray(llr_matrix, dtype=float)
    n_cw, n_coded = llr_matrix.shape
    n_steps = _steps_from_coded_len(spec, n_coded)
    if n_steps <= spec.n_tail:
        raise LengthMismatch("codeword shorter than the termination tail")
    pairs = np.stack([depuncture(spec, llr_matrix[i], n_steps) for i in range(n_cw)])
    bits = _viterbi_pairs(spec, pairs)
    return bits[:, : n_steps - spec.n_tail]
