"""Spatial equalizer design for the massive MU-MIMO uplink.

Covers the infinite-precision linear MMSE equalizer and three ways of
building low-resolution equalization rows whose real and imaginary parts
live in the odd-integer alphabet A_b = {+-1, +-3, ..., +-(2^b - 1)}:
quantizing the MMSE rows (flmmse), a forward-backward splitting heuristic
(fame_fbs), and exhaustive search (fame_bruteforce).

Conventions, shared with channel and simkit:
  * H has shape (B, U): receive antennas by users; column u is h_u.
  * rho = n0/es is the regularizer; all designs require rho > 0.
  * A "row" is stored as the column vector x_u; the matrix row applied to
    the receive vector y is its conjugate transpose.
  * Stored NPI variances are for unit symbol energy; npi_variance takes
    an explicit es for anything else.

The quality measure throughout is the ratio
    (||H^H x||^2 + rho ||x||^2) / |h_u^H x|^2,
which is invariant under any nonzero complex scaling of x.  Smaller is
better; its minimizer over all of C^B is the MMSE row direction.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    BudgetExceeded,
    DegenerateDirection,
    InvalidBias,
    ZeroVector,
)
from .numerics import gram, hpd_solve, spectral_norm_sq_estimate

# a candidate x with |h_u^H x|^2 below this relative floor cannot
# equalize user u at all
DEN_GUARD = 1e-18

# enumeration cap for fame_bruteforce, counted before symmetry pruning
BRUTEFORCE_BUDGET = 2 ** 24

_CHUNK = 1 << 15


@dataclass(frozen=True)
class LmmseEqualizer:
    """Infinite-precision linear MMSE equalizer.

    Wh has shape (U, B); row u applied to y gives the biased estimate of
    user u's symbol.
    """

    Wh: np.ndarray
    rho: float

    @property
    def n_users(self):
        return self.Wh.shape[0]

    def row(self, u):
        """Column-vector form of row u (the vector whose conjugate
        transpose is applied to y)."""
        return np.conj(self.Wh[u])


@dataclass(frozen=True)
class FiniteAlphabetRow:
    """One user's low-resolution equalization row plus its derived scalars.

    x holds odd integers (real and imaginary parts) bounded by 2^bits - 1.
    beta is the MSE-optimal output scaling, bias_factor = beta * (h_u^H x)
    is the real contraction of the biased estimate toward zero, and nu_sq
    is the unit-energy noise-plus-interference variance of the unbiased
    estimate.  degenerate marks rows whose inner product with h_u is too
    small to equalize; such rows carry beta=0, bias_factor=0, nu_sq=inf.
    """

    x: np.ndarray
    bits: int
    beta: complex
    bias_factor: float
    nu_sq: float
    degenerate: bool = False


@dataclass(frozen=True)
class FiniteAlphabetEqualizer:
    """All U low-resolution rows for one channel matrix."""

    rows: tuple
    bits: int

    @property
    def n_users(self):
        return len(self.rows)

    def x_matrix(self):
        """Rows stacked as columns, shape (B, U)."""
        return np.stack([r.x for r in self.rows], axis=1)


@dataclass(frozen=True)
class FbsSchedule:
    """Per-iteration parameters of the forward-backward splitting solver.

    tau, eta, gamma are sequences of length >= t_max, or length 1 to
    broadcast; tau may be None to use 1/estimated squared spectral norm
    of the channel at hand.  eta scales the shrinkage prox (larger pushes
    iterates harder against the unit box).  init selects the starting
    point: 'mrc' starts from the matched filter h_u, 'flmmse' from the
    quantized MMSE row.
    """

    tau: tuple | None
    eta: tuple
    gamma: tuple
    t_max: int
    init: str = "mrc"

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.init not in ("mrc", "flmmse"):
            raise ValueError(f"unknown init {self.init!r}")
        for name, seq in (("tau", self.tau), ("eta", self.eta), ("gamma", self.gamma)):
            if name == "tau" and seq is None:
                continue
            n = len(seq)
            if n != 1 and n < self.t_max:
                raise ValueError(f"{name} needs 1 or >= t_max entries, got {n}")


def default_fbs_schedule(bits, t_max=5, init="mrc", gamma=2.0):
    """Schedule used when an experiment does not pin its own parameters.

    Step size adapts to the channel (tau=None); gamma is constant; eta
    grows geometrically from 1 to 2^bits across the iterations so early
    steps barely shrink and the last one presses candidates against the
    quantizer's full range.
    """
    if t_max == 1:
        eta = (float(2 ** bits),)
    else:
        eta = tuple(2.0 ** (bits * t / (t_max - 1)) for t in range(t_max))
    return FbsSchedule(tau=None, eta=eta, gamma=(float(gamma),), t_max=t_max, init=init)


def _sched_seq(vals, t_max):
    arr = np.asarray(vals, dtype=float).ravel()
    if arr.size == 1:
        return np.full(t_max, arr[0])
    return arr[:t_max].copy()


# ---------------------------------------------------------------------------
# scalar building blocks


def _quad_parts(H, rho, u, x):
    """(num, den, hx) with num = ||H^H x||^2 + rho||x||^2, den = |h_u^H x|^2,
    hx = h_u^H x."""
    hhx = H.conj().T @ x
    num = float(np.real(np.vdot(hhx, hhx))) + rho * float(np.real(np.vdot(x, x)))
    hx = hhx[u]
    return num, float(abs(hx) ** 2), hx


def _den_floor(H, u, x):
    xsq = float(np.real(np.vdot(x, x)))
    hsq = float(np.real(np.vdot(H[:, u], H[:, u])))
    return DEN_GUARD * xsq * hsq


def fame_objective(H, rho, u, x):
    """Interference-plus-noise power of row direction x for user u,
    normalized by its response to the user itself.  Scale invariant."""
    H = np.asarray(H)
    x = np.asarray(x)
    if not np.any(x):
        raise ZeroVector("candidate row is identically zero")
    num, den, _ = _quad_parts(H, rho, u, x)
    if den <= _den_floor(H, u, x):
        raise DegenerateDirection(f"row direction nearly orthogonal to user {u}")
    return num / den


def beta_of(H, rho, u, x):
    """MSE-optimal complex scaling for the row direction x of user u."""
    H = np.asarray(H)
    x = np.asarray(x)
    if not np.any(x):
        raise ZeroVector("candidate row is identically zero")
    num, den, hx = _quad_parts(H, rho, u, x)
    if den <= _den_floor(H, u, x):
        raise DegenerateDirection(f"row direction nearly orthogonal to user {u}")
    return complex(np.conj(hx) / num)


def npi_variance(es, bias_factor):
    """Noise-plus-interference variance of the unbiased symbol estimate,
    from the bias factor of the optimally scaled row: es*(1/bias - 1)."""
    if not np.isfinite(bias_factor) or bias_factor <= 0.0 or bias_factor > 1.0 + 1e-12:
        raise InvalidBias(f"bias_factor {bias_factor!r} outside (0, 1]")
    b = min(float(bias_factor), 1.0)
    return es * (1.0 / b - 1.0)


def equalize_unbiased(H, x, u, y):
    """Unbiased symbol estimate (x^H y)/(x^H h_u): any nonzero scaling of
    x cancels."""
    H = np.asarray(H)
    x = np.asarray(x)
    xh = np.vdot(x, H[:, u])
    if abs(xh) ** 2 <= _den_floor(H, u, x):
        raise DegenerateDirection(f"row direction nearly orthogonal to user {u}")
    return complex(np.vdot(x, y) / xh)


def equalize_biased(W_row, y):
    """Plain inner product w^H y."""
    return complex(np.vdot(W_row, y))


# ---------------------------------------------------------------------------
# quantization


def _quantize_vals(vals, w_max, bits):
    # bins of width 2*w_max/2^bits over [-w_max, w_max]; centroid of bin q
    # scaled to the odd integer 2q+1-2^bits; edge ties go up, out-of-range
    # values land in the outermost bins
    half = 1 << (bits - 1)
    q = np.floor((vals / w_max + 1.0) * half)
    np.clip(q, 0, 2 * half - 1, out=q)
    return 2.0 * q + 1.0 - 2 * half


def quantize_row(w, bits, w_max_override=None):
    """Quantize the real and imaginary parts of a row vector onto the
    odd-integer alphabet of the given bit width.

    The full-scale range is the largest magnitude over all real and
    imaginary parts, unless w_max_override pins it.  sign(0) counts as
    positive, so exact zeros map to +1.
    """
    if not 1 <= bits <= 8:
        raise ValueError(f"bits must be in 1..8, got {bits}")
    w = np.asarray(w, dtype=np.complex128)
    if w_max_override is None:
        w_max = max(np.max(np.abs(w.real)), np.max(np.abs(w.imag)))
        if w_max == 0.0:
            raise ZeroVector("cannot infer a quantization range from a zero row")
    else:
        w_max = float(w_max_override)
        if w_max <= 0.0:
            raise ValueError("w_max_override must be > 0")
    return _quantize_vals(w.real, w_max, bits) + 1j * _quantize_vals(w.imag, w_max, bits)


def _quantize_cols(X, bits, w_max=None):
    # per-column quantization of (..., B, U) stacks; w_max=None derives the
    # range per column, a scalar pins it globally
    if w_max is None:
        m = np.maximum(
            np.max(np.abs(X.real), axis=-2, keepdims=True),
            np.max(np.abs(X.imag), axis=-2, keepdims=True),
        )
        m[m == 0.0] = 1.0
    else:
        m = float(w_max)
    return _quantize_vals(X.real, m, bits) + 1j * _quantize_vals(X.imag, m, bits)


# ---------------------------------------------------------------------------
# batched design kernels (leading axis = independent channel matrices)


def _eval_cols(h_all, hh_all, rho, X):
    """Quality pieces for every column of X against its channel.

    h_all: (W, B, U); X: (W, B, U).  Returns (num, den, hx, obj), each
    (W, U), with obj = +inf where the row cannot equalize its user.
    """
    M = hh_all @ X                                    # (W, U, U), M[w,i,u] = h_i^H x_u
    xsq = np.sum(X.real ** 2 + X.imag ** 2, axis=1)   # (W, U)
    num = np.sum(M.real ** 2 + M.imag ** 2, axis=1) + rho * xsq
    iu = np.arange(h_all.shape[2])
    hx = M[:, iu, iu]
    den = np.abs(hx) ** 2
    hsq = np.sum(h_all.real ** 2 + h_all.imag ** 2, axis=1)
    bad = den < DEN_GUARD * xsq * hsq
    with np.errstate(divide="ignore", invalid="ignore"):
        obj = np.where(bad, np.inf, num / np.where(bad, 1.0, den))
    return num, den, hx, obj


def _scalars_from(num, den, hx):
    # beta, bias, nu_sq arrays from the quality pieces; degenerate rows
    # (den ~ 0 handled by caller via obj) still get finite placeholders
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.conj(hx) / num
        bias = den / num
        nu = 1.0 / bias - 1.0
    return beta, bias, nu


def _lmmse_wh_batch(h_all, rho):
    hh_all = np.conj(np.transpose(h_all, (0, 2, 1)))
    G = hh_all @ h_all
    A = G + rho * np.eye(h_all.shape[2])
    return np.linalg.solve(A, hh_all)                 # (W, U, B)


def _flmmse_design(h_all, rho, bits):
    """Quantized-MMSE rows for a stack of channels.

    Returns (X, beta, bias, nu, obj, degenerate): X is (W, B, U) with
    integer-valued parts, the rest are (W, U).
    """
    hh_all = np.conj(np.transpose(h_all, (0, 2, 1)))
    Wh = _lmmse_wh_batch(h_all, rho)
    V = np.conj(np.transpose(Wh, (0, 2, 1)))          # columns are the row vectors w_u
    X = _quantize_cols(V, bits)
    num, den, hx, obj = _eval_cols(h_all, hh_all, rho, X)
    beta, bias, nu = _scalars_from(num, den, hx)
    deg = ~np.isfinite(obj)
    return X, beta, bias, nu, obj, deg


def _default_tau_batch(h_all, iters=30):
    # batched mirror of numerics.spectral_norm_sq_estimate
    hh_all = np.conj(np.transpose(h_all, (0, 2, 1)))
    G = hh_all @ h_all
    n_mat, u = G.shape[0], G.shape[1]
    v = np.full((n_mat, u, 1), 1.0 / np.sqrt(u), dtype=np.complex128)
    for _ in range(iters):
        w = G @ v
        nrm = np.linalg.norm(w, axis=(1, 2), keepdims=True)
        nrm[nrm == 0.0] = 1.0
        v = w / nrm
    ray = np.real(np.sum(np.conj(v) * (G @ v), axis=(1, 2)))
    ray[ray <= 0.0] = 1.0
    return 1.0 / ray


def _fbs_design(h_all, rho, bits, sched):
    """Forward-backward splitting rows for a stack of channels, all users
    at once.  Same return layout as _flmmse_design.

    Tracks the best quantized candidate seen: the initializer's own
    quantization plus one candidate per iteration (iterates are boxed in
    [-1, 1] by the prox, so those quantize against full scale 1).  Ties
    keep the earliest candidate, which makes the result deterministic.
    """
    h_all = np.ascontiguousarray(h_all, dtype=np.complex128)
    hh_all = np.conj(np.transpose(h_all, (0, 2, 1)))
    n_mat, n_ant, n_users = h_all.shape
    t_max = sched.t_max

    if sched.tau is None:
        tau = np.broadcast_to(_default_tau_batch(h_all), (t_max, n_mat))
    else:
        tau = np.broadcast_to(_sched_seq(sched.tau, t_max)[:, None], (t_max, n_mat))
    eta = _sched_seq(sched.eta, t_max)
    gamma = _sched_seq(sched.gamma, t_max)

    if sched.init == "mrc":
        Xt = h_all.copy()
    else:
        Xt = _flmmse_design(h_all, rho, bits)[0]

    X_best = _quantize_cols(Xt, bits)
    obj_best = _eval_cols(h_all, hh_all, rho, X_best)[3]

    iu = np.arange(n_users)
    for t in range(t_max):
        M = hh_all @ Xt
        M[:, iu, iu] *= 1.0 - gamma[t]
        Z = Xt - tau[t][:, None, None] * (h_all @ M)
        Xt = np.clip(eta[t] * Z.real, -1.0, 1.0) + 1j * np.clip(
            eta[t] * Z.imag, -1.0, 1.0
        )
        Xq = _quantize_cols(Xt, bits, w_max=1.0)
        obj = _eval_cols(h_all, hh_all, rho, Xq)[3]
        better = obj < obj_best
        np.copyto(X_best, Xq, where=better[:, None, :])
        np.minimum(obj_best, obj, out=obj_best)

    num, den, hx, obj = _eval_cols(h_all, hh_all, rho, X_best)
    beta, bias, nu = _scalars_from(num, den, hx)
    deg = ~np.isfinite(obj_best)
    return X_best, beta, bias, nu, obj_best, deg


def _rows_from_design(design, bits):
    X, beta, bias, nu, _, deg = design
    rows = []
    for u in range(X.shape[2]):
        if deg[0, u]:
            rows.append(
                FiniteAlphabetRow(
                    x=X[0, :, u].copy(), bits=bits, beta=0j,
                    bias_factor=0.0, nu_sq=np.inf, degenerate=True,
                )
            )
        else:
            rows.append(
                FiniteAlphabetRow(
                    x=X[0, :, u].copy(), bits=bits, beta=complex(beta[0, u]),
                    bias_factor=float(bias[0, u]), nu_sq=float(nu[0, u]),
                )
            )
    return tuple(rows)


# ---------------------------------------------------------------------------
# public designers


def lmmse(H, rho):
    """Regularized linear MMSE equalization matrix for one channel."""
    if rho <= 0:
        raise ValueError("rho must be > 0")
    H = np.asarray(H, dtype=np.complex128)
    G = gram(H)
    A = G + rho * np.eye(H.shape[1])
    Wh = hpd_solve(A, H.conj().T)
    return LmmseEqualizer(Wh=Wh, rho=float(rho))


def flmmse(H, rho, bits):
    """Low-resolution equalizer from quantizing each MMSE row against its
    own full-scale range.  Rows that end up unable to equalize their user
    are returned with the degenerate flag set rather than raising."""
    if rho <= 0:
        raise ValueError("rho must be > 0")
    H = np.asarray(H, dtype=np.complex128)
    design = _flmmse_design(H[None], rho, bits)
    return FiniteAlphabetEqualizer(rows=_rows_from_design(design, bits), bits=bits)


def fame_fbs(H, rho, u, bits, sched):
    """Low-resolution row for user u via forward-backward splitting.

    Never returns a candidate worse than the quantized initializer; the
    objective of every quantized iterate is checked and the best kept.
    """
    if rho <= 0:
        raise ValueError("rho must be > 0")
    H = np.asarray(H, dtype=np.complex128)
    design = _fbs_design(H[None], rho, bits, sched)
    row = _rows_from_design(design, bits)[u]
    if row.degenerate:
        raise DegenerateDirection(f"no candidate with usable response to user {u}")
    return row


def fame_bruteforce(H, rho, u, bits):
    """Globally optimal low-resolution row for user u by exhaustive
    enumeration.

    Candidates x and -x score identically, so the search fixes the first
    real part to the positive half of the alphabet; the returned row is the
    enumeration-order-first optimum of that half space.  Enumeration order
    is big-endian over the concatenated (real parts, imaginary parts)
    digit string, each digit ascending through the alphabet.
    """
    if rho <= 0:
        raise ValueError("rho must be > 0")
    H = np.asarray(H, dtype=np.complex128)
    n_ant, n_users = H.shape
    radix = 1 << bits
    n_dims = 2 * n_ant
    total = radix ** n_dims
    if total > BRUTEFORCE_BUDGET:
        raise BudgetExceeded(
            f"{total} candidates for B={n_ant}, bits={bits} exceeds {BRUTEFORCE_BUDGET}"
        )
    dims = (radix // 2,) + (radix,) * (n_dims - 1)
    count = total // 2
    Hc = H.conj()
    hsq = float(np.real(np.vdot(H[:, u], H[:, u])))

    best_obj = np.inf
    best_idx = -1
    for start in range(0, count, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, count))
        digits = np.unravel_index(idx, dims)
        vals = np.empty((idx.size, n_dims))
        vals[:, 0] = 2.0 * digits[0] + 1.0          # positive half
        for d in range(1, n_dims):
            vals[:, d] = 2.0 * digits[d] + 1.0 - radix
        Xc = vals[:, :n_ant] + 1j * vals[:, n_ant:]
        M = Xc @ Hc                                  # rows are (H^H x)^T
        xsq = np.sum(vals ** 2, axis=1)
        num = np.sum(M.real ** 2 + M.imag ** 2, axis=1) + rho * xsq
        den = np.abs(M[:, u]) ** 2
        bad = den < DEN_GUARD * xsq * hsq
        with np.errstate(divide="ignore", invalid="ignore"):
            obj = np.where(bad, np.inf, num / np.where(bad, 1.0, den))
        k = int(np.argmin(obj))
        if obj[k] < best_obj:
            best_obj = float(obj[k])
            best_idx = start + k
    if not np.isfinite(best_obj):
        raise DegenerateDirection(f"every candidate is orthogonal to user {u}")

    digits = np.unravel_index(best_idx, dims)
    vals = np.array(
        [2.0 * digits[0] + 1.0]
        + [2.0 * digits[d] + 1.0 - radix for d in range(1, n_dims)]
    )
    x = vals[:n_ant] + 1j * vals[n_ant:]
    num, den, hx = _quad_parts(H, rho, u, x)
    bias = den / num
    return FiniteAlphabetRow(
        x=x, bits=bits, beta=complex(np.conj(hx) / num),
        bias_factor=float(bias), nu_sq=npi_variance(1.0, bias),
    )


# ---------------------------------------------------------------------------
# fixture serialization

_EQ_MAGIC = b"FQEQ"


def save_equalizer(eq, path):
    """Binary fixture dump: u32 header (version, B, U, bits), int16 real and
    imaginary parts of the stacked rows (U, B), beta as complex128 (U,),
    nu_sq as float64 (U,)."""
    rows = eq.rows
    n_users = len(rows)
    n_ant = rows[0].x.shape[0]
    xs = np.stack([r.x for r in rows])               # (U, B)
    beta = np.array([r.beta for r in rows], dtype=np.complex128)
    nu = np.array([r.nu_sq for r in rows])
    import struct

    with open(path, "wb") as f:
        f.write(_EQ_MAGIC)
        f.write(struct.pack("<IIII", 1, n_ant, n_users, eq.bits))
        f.write(xs.real.astype("<i2").tobytes())
        f.write(xs.imag.astype("<i2").tobytes())
        f.write(beta.astype("<c16").tobytes())
        f.write(nu.astype("<f8").tobytes())


def load_equalizer(path):
    """Inverse of save_equalizer.  bias_factor is reconstructed from nu_sq,
    so it agrees with the saved value to rounding, not bit-exactly."""
    import struct

    with open(path, "rb") as f:
        if f.read(4) != _EQ_MAGIC:
            raise ValueError(f"{path}: not an equalizer fixture")
        version, n_ant, n_users, bits = struct.unpack("<IIII", f.read(16))
        if version != 1:
            raise ValueError(f"{path}: unsupported version {version}")
        n = n_users * n_ant
        re = np.frombuffer(f.read(2 * n), dtype="<i2").reshape(n_users, n_ant)
        im = np.frombuffer(f.read(2 * n), dtype="<i2").reshape(n_users, n_ant)
        beta = np.frombuffer(f.read(16 * n_users), dtype="<c16")
        nu = np.frombuffer(f.read(8 * n_users), dtype="<f8")
    rows = []
    for u in range(n_users):
        x = re[u].astype(float) + 1j * im[u].astype(float)
        deg = not np.isfinite(nu[u])
        bias = 0.0 if deg else 1.0 / (1.0 + nu[u])
        rows.append(
            FiniteAlphabetRow(
                x=x, bits=bits, beta=complex(beta[u]),
                bias_factor=bias, nu_sq=float(nu[u]), degenerate=deg,
            )
        )
    return FiniteAlphabetEqualizer(rows=tuple(rows), bits=bits)
