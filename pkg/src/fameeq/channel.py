"""Per-subcarrier channel generation, power control, and noisy transmission.

A realization holds the stacked per-subcarrier channel matrices as one
complex128 array of shape (W, B, U): subcarrier, receive antenna, user.
Generators take an explicit numpy Generator so that (seed, params) fully
determine the output; callers derive distinct streams per trial.

The geometric model is a deliberately simple cluster/plane-wave stand-in
for a full mmWave ray tracer: per user, a handful of plane waves with
exponentially decaying powers, random phases, and per-cluster delays that
rotate across subcarriers.  It reproduces the qualitative LoS / non-LoS
distinction (one dominant path versus several comparable ones), nothing
more.
"""

import struct
from dataclasses import dataclass

import numpy as np

# Power carried by the direct path relative to all other clusters combined
# when line-of-sight is enabled.
LOS_POWER_RATIO = 10.0

_MAGIC = b"FQCH"


@dataclass(frozen=True)
class ChannelRealization:
    """Stacked per-subcarrier channel matrices, shape (W, B, U)."""

    h: np.ndarray

    @property
    def n_sc(self):
        return self.h.shape[0]

    @property
    def n_ant(self):
        return self.h.shape[1]

    @property
    def n_users(self):
        return self.h.shape[2]

    def per_sc(self, w):
        """The (B, U) channel matrix of subcarrier w."""
        return self.h[w]


@dataclass(frozen=True)
class GeometricChannelParams:
    """Knobs of the simplified cluster/plane-wave model.

    carrier_wavelength_ratio is the antenna spacing in wavelengths.
    delay_spread_cycles sets the per-cluster delay range in units of full
    phase rotations across the simulated band; its mapping to physical
    delay spread is an artifact choice, not calibrated against anything.
    """

    carrier_wavelength_ratio: float = 0.5
    num_clusters: int = 8
    los: bool = False
    per_cluster_power_decay_db: float = 3.0
    angle_spread_deg: float = 10.0
    delay_spread_cycles: float = 8.0

    def __post_init__(self):
        if self.num_clusters < 1:
            raise ValueError("num_clusters must be >= 1")
        if self.carrier_wavelength_ratio <= 0:
            raise ValueError("antenna spacing must be > 0")


@dataclass(frozen=True)
class LinkNoise:
    """Per-symbol transmit energy and per-antenna complex noise variance."""

    es: float
    n0: float

    def __post_init__(self):
        if self.es <= 0 or self.n0 <= 0:
            raise ValueError("es and n0 must be > 0")

    @property
    def rho(self):
        return self.n0 / self.es


def cluster_power_profile(params):
    """Normalized per-cluster powers (sum 1) implied by the params.

    Powers decay geometrically by per_cluster_power_decay_db per cluster;
    with los=True the first cluster is boosted to carry LOS_POWER_RATIO
    times the power of all remaining clusters combined.
    """
    c = params.num_clusters
    p = 10.0 ** (-params.per_cluster_power_decay_db * np.arange(c) / 10.0)
    if params.los and c > 1:
        rest = p[1:].sum()
        p[0] = LOS_POWER_RATIO * rest
    return p / p.sum()


def rayleigh_iid(n_ant, n_users, n_sc, rng):
    """I.i.d. Rayleigh fading: every entry CN(0, 1), independent across
    antennas, users, and subcarriers."""
    shape = (n_sc, n_ant, n_users)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    h *= np.sqrt(0.5)
    return ChannelRealization(h)


def geometric(n_ant, n_users, n_sc, params, rng):
    """Cluster-based plane-wave channel for a uniform linear array.

    Each user's channel is a sum of num_clusters plane waves
    a(theta)_b = exp(j * 2*pi * spacing * b * sin(theta)) with powers from
    cluster_power_profile, uniform random phases, and per-cluster delays
    that rotate the phase linearly across subcarriers.  Every (user,
    subcarrier) column is scaled to squared norm exactly B.
    """
    spacing = params.carrier_wavelength_ratio
    powers = cluster_power_profile(params)
    n_cl = params.num_clusters
    ant = np.arange(n_ant)

    h = np.empty((n_sc, n_ant, n_users), dtype=np.complex128)
    sc_frac = np.arange(n_sc) / max(n_sc, 1)
    for u in range(n_users):
        mean_angle = rng.uniform(-60.0, 60.0)
        angles = mean_angle + params.angle_spread_deg * rng.standard_normal(n_cl)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=n_cl)
        delays = rng.uniform(0.0, params.delay_spread_cycles, size=n_cl)
        if params.los:
            angles[0] = mean_angle
            delays[0] = 0.0
        # (B, C) array responses, one column per cluster
        steer = np.exp(
            1j * 2.0 * np.pi * spacing * np.outer(ant, np.sin(np.deg2rad(angles)))
        )
        gains = np.sqrt(powers) * np.exp(1j * phases)
        # (W, C) per-subcarrier rotation from the cluster delays
        rot = np.exp(-1j * 2.0 * np.pi * np.outer(sc_frac, delays))
        h[:, :, u] = (rot * gains) @ steer.T

    norms = np.linalg.norm(h, axis=1, keepdims=True)
    h *= np.sqrt(n_ant) / norms
    return ChannelRealization(h)


def apply_power_control(ch, range_db, rng):
    """Rescale each user so its average receive power is B * g_u with g_u
    drawn uniformly in dB over [-range_db, +range_db].

    The average is over subcarriers; the relative per-subcarrier structure
    of each user's channel is unchanged.  range_db=0 equalizes all users
    to average power exactly B.
    """
    if range_db < 0:
        raise ValueError("range_db must be >= 0")
    n_ant = ch.n_ant
    n_users = ch.n_users
    if range_db == 0.0:
        gains = np.ones(n_users)
    else:
        gains = 10.0 ** (rng.uniform(-range_db, range_db, size=n_users) / 10.0)
    mean_power = np.mean(np.sum(np.abs(ch.h) ** 2, axis=1), axis=0)
    scale = np.sqrt(n_ant * gains / mean_power)
    return ChannelRealization(ch.h * scale)


def transmit(H, s, noise, rng):
    """One channel use: y = H s + n with n i.i.d. CN(0, n0) per antenna."""
    H = np.asarray(H)
    s = np.asarray(s)
    if H.shape[-1] != s.shape[0]:
        raise ValueError(f"H has {H.shape[-1]} columns but s has {s.shape[0]} entries")
    n_shape = H.shape[:-1]
    n = rng.standard_normal(n_shape) + 1j * rng.standard_normal(n_shape)
    n *= np.sqrt(noise.n0 / 2.0)
    return H @ s + n


def save_realization(ch, path):
    """Dump a realization: 4-byte magic, u32 version/W/B/U header, then the
    (W, B, U) complex128 array as interleaved real/imag doubles."""
    h = np.ascontiguousarray(ch.h, dtype=np.complex128)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIII", 1, ch.n_sc, ch.n_ant, ch.n_users))
        f.write(h.tobytes())


def load_realization(path):
    """Inverse of save_realization."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a channel dump (bad magic {magic!r})")
        version, n_sc, n_ant, n_users = struct.unpack("<IIII", f.read(16))
        if version != 1:
            raise ValueError(f"{path}: unsupported version {version}")
        data = np.frombuffer(f.read(), dtype=np.complex128)
    return ChannelRealization(data.reshape(n_sc, n_ant, n_users).copy())
