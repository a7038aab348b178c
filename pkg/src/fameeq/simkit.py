"""Monte-Carlo link-level harness: coded OFDM uplink frames, SNR sweeps,
and BER/FER aggregation.

SNR axis convention, used everywhere: snr_db is the per-receive-antenna
signal-to-noise ratio under unit-average channel gain, so the complex
noise variance is No = U * Es / 10^(snr_db/10).  Absolute BER values
depend on this convention; comparisons between equalizers on the same
axis do not.

Reproducibility: every random draw derives from (master_seed, trial,
purpose), so a frame's outcome depends only on the config and its trial
index, never on execution order or worker count.  All equalizers and all
SNR points of one trial share the same channel, payload bits, and unit
noise (noise is scaled per SNR point), which sharpens equalizer-vs-
equalizer comparisons.

A sweep stops per SNR point once every equalizer has accumulated
min_errors bit errors, or at max_frames.  The stopping trial index is
computed from per-trial counts in trial order, so serial and parallel
runs aggregate exactly the same set of frames.
"""

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .channel import GeometricChannelParams, apply_power_control, geometric, rayleigh_iid
from .equalize import (
    FbsSchedule,
    _eval_cols,
    _fbs_design,
    _flmmse_design,
    _lmmse_wh_batch,
    _scalars_from,
    default_fbs_schedule,
)
from .errors import ConfigError
from .fec import coded_length, default_codec, encode, viterbi_soft_many
from .modem import make_constellation, map_bits, soft_demap

# purpose tags for per-trial random streams
_PURPOSE_CHANNEL = 1
_PURPOSE_POWERCTL = 2
_PURPOSE_BITS = 3
_PURPOSE_NOISE = 4

EQUALIZER_NAMES = ("lmmse_inf", "flmmse", "fame_fbs")
CHANNEL_KINDS = ("rayleigh", "geo_nlos", "geo_los")

CSV_HEADER = "snr_db,equalizer,bits,ber,fer,bit_errors,bits_counted,frames"


def snr_to_no(snr_db, es, n_users):
    """Noise variance for the documented per-antenna SNR convention."""
    if es <= 0:
        raise ValueError("es must be > 0")
    return n_users * es / 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True)
class EqualizerSpec:
    """One equalizer under test: 'lmmse_inf' (bits/schedule unused),
    'flmmse', or 'fame_fbs'."""

    name: str
    bits: int = 0
    schedule: FbsSchedule | None = None

    def __post_init__(self):
        if self.name not in EQUALIZER_NAMES:
            raise ConfigError(f"equalizer name must be one of {EQUALIZER_NAMES}, got {self.name!r}")
        if self.name != "lmmse_inf" and not 1 <= self.bits <= 8:
            raise ConfigError(f"equalizer {self.name!r} needs bits in 1..8, got {self.bits}")

    @property
    def label(self):
        return self.name


@dataclass(frozen=True)
class SimConfig:
    n_ant: int
    n_users: int
    n_sc: int
    equalizers: tuple
    snr_points_db: tuple
    modulation: str = "qam16"
    channel_kind: str = "rayleigh"
    power_control_db: float = 0.0
    geo: GeometricChannelParams = field(default_factory=GeometricChannelParams)
    min_errors: int = 500
    max_frames: int = 100
    master_seed: int = 1

    def __post_init__(self):
        if min(self.n_ant, self.n_users, self.n_sc) < 1:
            raise ConfigError("n_ant, n_users, n_sc must all be >= 1")
        if not self.snr_points_db:
            raise ConfigError("snr_points_db must be nonempty")
        if not self.equalizers:
            raise ConfigError("equalizers must be nonempty")
        if self.channel_kind not in CHANNEL_KINDS:
            raise ConfigError(f"channel_kind must be one of {CHANNEL_KINDS}, got {self.channel_kind!r}")
        if self.max_frames < 1:
            raise ConfigError("max_frames must be >= 1")
        if self.info_bits_per_user < 1:
            raise ConfigError(
                f"frame too small: {self.n_sc} subcarriers x {self.bits_per_symbol} "
                "bits leave no room for payload after code overhead"
            )

    @property
    def bits_per_symbol(self):
        return {"qam16": 4, "qpsk": 2}[self.modulation]

    @property
    def info_bits_per_user(self):
        # fill the frame at rate 3/4 and leave room for the code tail
        return 3 * (self.n_sc * self.bits_per_symbol) // 4 - 6


def _cfg_get(d, key, default=None, required=False):
    if key in d:
        return d[key]
    if required:
        raise ConfigError(f"missing required config key {key!r}")
    return default


def _parse_schedule(d, bits):
    if d is None:
        return default_fbs_schedule(bits)
    if not isinstance(d, dict):
        raise ConfigError("schedule must be an object")
    t_max = int(_cfg_get(d, "t_max", 5))
    init = _cfg_get(d, "init", "mrc")
    gamma = _cfg_get(d, "gamma", 2.0)
    tau = _cfg_get(d, "tau")
    eta = _cfg_get(d, "eta")
    try:
        if eta is None:
            base = default_fbs_schedule(bits, t_max=t_max, init=init,
                                        gamma=gamma if np.isscalar(gamma) else 2.0)
            eta_seq = base.eta
        else:
            eta_seq = tuple(float(v) for v in eta)
        gamma_seq = (float(gamma),) if np.isscalar(gamma) else tuple(float(v) for v in gamma)
        tau_seq = None if tau is None else (
            (float(tau),) if np.isscalar(tau) else tuple(float(v) for v in tau)
        )
        return FbsSchedule(tau=tau_seq, eta=eta_seq, gamma=gamma_seq, t_max=t_max, init=init)
    except ValueError as e:
        raise ConfigError(f"schedule: {e}") from e


def _parse_equalizer(d, idx):
    if not isinstance(d, dict) or "name" not in d:
        raise ConfigError(f"equalizers[{idx}] must be an object with a 'name'")
    name = d["name"]
    bits = int(_cfg_get(d, "bits", 0))
    sched = None
    if name == "fame_fbs":
        sched = _parse_schedule(_cfg_get(d, "schedule"), bits)
    return EqualizerSpec(name=name, bits=bits, schedule=sched)


def config_from_dict(d):
    """Build a SimConfig from parsed JSON, applying defaults and raising
    ConfigError naming the offending key."""
    if not isinstance(d, dict):
        raise ConfigError("config root must be an object")
    ch = _cfg_get(d, "channel", {})
    if not isinstance(ch, dict):
        raise ConfigError("channel must be an object")
    geo_d = _cfg_get(ch, "geo", {})
    try:
        geo = GeometricChannelParams(**geo_d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"channel.geo: {e}") from e
    eqs = _cfg_get(d, "equalizers", required=True)
    if not isinstance(eqs, list):
        raise ConfigError("equalizers must be a list")
    modulation = _cfg_get(d, "modulation", "qam16")
    if modulation not in ("qam16", "qpsk"):
        raise ConfigError(f"modulation must be 'qam16' or 'qpsk', got {modulation!r}")
    stop = _cfg_get(d, "stop", {})
    return SimConfig(
        n_ant=int(_cfg_get(d, "n_ant", required=True)),
        n_users=int(_cfg_get(d, "n_users", required=True)),
        n_sc=int(_cfg_get(d, "n_sc", required=True)),
        equalizers=tuple(_parse_equalizer(e, i) for i, e in enumerate(eqs)),
        snr_points_db=tuple(float(s) for s in _cfg_get(d, "snr_points_db", required=True)),
        modulation=modulation,
        channel_kind=_cfg_get(ch, "kind", "rayleigh"),
        power_control_db=float(_cfg_get(ch, "power_control_db", 0.0)),
        geo=geo,
        min_errors=int(_cfg_get(stop, "min_errors", 500)),
        max_frames=int(_cfg_get(stop, "max_frames", 100)),
        master_seed=int(_cfg_get(d, "master_seed", 1)),
    )


def config_to_dict(cfg):
    return {
        "n_ant": cfg.n_ant,
        "n_users": cfg.n_users,
        "n_sc": cfg.n_sc,
        "modulation": cfg.modulation,
        "channel": {
            "kind": cfg.channel_kind,
            "power_control_db": cfg.power_control_db,
            "geo": {
                "carrier_wavelength_ratio": cfg.geo.carrier_wavelength_ratio,
                "num_clusters": cfg.geo.num_clusters,
                "los": cfg.geo.los,
                "per_cluster_power_decay_db": cfg.geo.per_cluster_power_decay_db,
                "angle_spread_deg": cfg.geo.angle_spread_deg,
                "delay_spread_cycles": cfg.geo.delay_spread_cycles,
            },
        },
        "equalizers": [
            {
                "name": e.name,
                "bits": e.bits,
                "schedule": None
                if e.schedule is None
                else {
                    "tau": None if e.schedule.tau is None else list(e.schedule.tau),
                    "eta": list(e.schedule.eta),
                    "gamma": list(e.schedule.gamma),
                    "t_max": e.schedule.t_max,
                    "init": e.schedule.init,
                },
            }
            for e in cfg.equalizers
        ],
        "snr_points_db": list(cfg.snr_points_db),
        "stop": {"min_errors": cfg.min_errors, "max_frames": cfg.max_frames},
        "master_seed": cfg.master_seed,
    }


# ---------------------------------------------------------------------------
# per-frame pipeline


def _stream(master_seed, trial, purpose):
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial, purpose))
    return np.random.Generator(np.random.PCG64(ss))


def _gen_channel(cfg, trial):
    rng = _stream(cfg.master_seed, trial, _PURPOSE_CHANNEL)
    if cfg.channel_kind == "rayleigh":
        ch = rayleigh_iid(cfg.n_ant, cfg.n_users, cfg.n_sc, rng)
    else:
        params = cfg.geo
        want_los = cfg.channel_kind == "geo_los"
        if params.los != want_los:
            params = GeometricChannelParams(
                carrier_wavelength_ratio=params.carrier_wavelength_ratio,
                num_clusters=params.num_clusters,
                los=want_los,
                per_cluster_power_decay_db=params.per_cluster_power_decay_db,
                angle_spread_deg=params.angle_spread_deg,
                delay_spread_cycles=params.delay_spread_cycles,
            )
        ch = geometric(cfg.n_ant, cfg.n_users, cfg.n_sc, params, rng)
    if cfg.power_control_db > 0.0:
        rng_pc = _stream(cfg.master_seed, trial, _PURPOSE_POWERCTL)
        ch = apply_power_control(ch, cfg.power_control_db, rng_pc)
    return ch


def _design(eq, h_all, hh_all, rho):
    """(X, beta, bias, nu, degenerate) for one equalizer over all
    subcarriers; X columns are the row directions."""
    if eq.name == "lmmse_inf":
        Wh = _lmmse_wh_batch(h_all, rho)
        X = np.conj(np.transpose(Wh, (0, 2, 1)))
        num, den, hx, obj = _eval_cols(h_all, hh_all, rho, X)
        beta, bias, nu = _scalars_from(num, den, hx)
        return X, beta, bias, nu, ~np.isfinite(obj)
    if eq.name == "flmmse":
        X, beta, bias, nu, _, deg = _flmmse_design(h_all, rho, eq.bits)
        return X, beta, bias, nu, deg
    sched = eq.schedule if eq.schedule is not None else default_fbs_schedule(eq.bits)
    X, beta, bias, nu, _, deg = _fbs_design(h_all, rho, eq.bits, sched)
    return X, beta, bias, nu, deg


@dataclass(frozen=True)
class FrameOutcome:
    """Everything observable about one trial: the transmitted payload and,
    per (SNR point, equalizer), the decoded payloads and which users had a
    degenerate row somewhere in the frame."""

    trial: int
    point_idx: tuple
    info_bits: np.ndarray        # (U, n_info)
    decoded: np.ndarray          # (n_points, n_eq, U, n_info)
    degenerate: np.ndarray       # (n_points, n_eq, U)


def run_frame(cfg, trial, point_idx=None):
    """Simulate one OFDM frame for the requested SNR points (default all).

    One channel realization and one payload serve every SNR point and
    equalizer; unit-variance noise is drawn once and scaled per point.
    Users whose equalizer row cannot respond to them on some subcarrier
    are flagged degenerate and their payload is not decoded.
    """
    if point_idx is None:
        point_idx = tuple(range(len(cfg.snr_points_db)))
    const = make_constellation(cfg.modulation)
    q = const.bits_per_symbol
    codec = default_codec()
    n_users, n_sc = cfg.n_users, cfg.n_sc
    n_info = cfg.info_bits_per_user
    n_coded = coded_length(codec, n_info)

    ch = _gen_channel(cfg, trial)
    h_all = ch.h
    hh_all = np.conj(np.transpose(h_all, (0, 2, 1)))

    rng_bits = _stream(cfg.master_seed, trial, _PURPOSE_BITS)
    info = rng_bits.integers(0, 2, size=(n_users, n_info), dtype=np.uint8)
    txbits = np.zeros((n_users, n_sc * q), dtype=np.uint8)
    for u in range(n_users):
        txbits[u, :n_coded] = encode(codec, info[u])
    S = np.stack([map_bits(const, txbits[u]) for u in range(n_users)], axis=1)  # (W, U)

    rng_noise = _stream(cfg.master_seed, trial, _PURPOSE_NOISE)
    unit = rng_noise.standard_normal((n_sc, cfg.n_ant)) + 1j * rng_noise.standard_normal(
        (n_sc, cfg.n_ant)
    )
    unit *= np.sqrt(0.5)

    signal = np.einsum("wbu,wu->wb", h_all, S)
    n_eq = len(cfg.equalizers)
    decoded = np.zeros((len(point_idx), n_eq, n_users, n_info), dtype=np.uint8)
    degenerate = np.zeros((len(point_idx), n_eq, n_users), dtype=bool)

    for ip, p in enumerate(point_idx):
        no = snr_to_no(cfg.snr_points_db[p], 1.0, n_users)
        rho = no  # unit symbol energy
        Y = signal + np.sqrt(no) * unit
        for ie, eq in enumerate(cfg.equalizers):
            X, beta, bias, nu, deg = _design(eq, h_all, hh_all, rho)
            deg_user = deg.any(axis=0)
            degenerate[ip, ie] = deg_user
            ok = ~deg_user
            if not ok.any():
                continue
            xy = np.sum(np.conj(X[:, :, ok]) * Y[:, :, None], axis=1)    # (W, n_ok)
            s_hat = np.conj(beta[:, ok]) * xy / bias[:, ok]
            # bias can round to exactly 1 in pathological near-noiseless
            # setups; keep the demapper's variance strictly positive
            nu_ok = np.maximum(nu[:, ok], 1e-300)
            llr = soft_demap(const, s_hat.T.reshape(-1), nu_ok.T.reshape(-1))
            llr = llr.reshape(int(ok.sum()), n_sc * q)[:, :n_coded]
            decoded[ip, ie, ok] = viterbi_soft_many(codec, llr)
    return FrameOutcome(
        trial=trial, point_idx=tuple(point_idx), info_bits=info,
        decoded=decoded, degenerate=degenerate,
    )


def _frame_counts(cfg, trial, point_idx):
    """(bit_errors, codeword_errors, degenerate_users), each shaped
    (n_points, n_eq).  Degenerate users count as fully errored."""
    with threadpool_limits(limits=1):
        out = run_frame(cfg, trial, point_idx)
    diffs = out.decoded ^ out.info_bits[None, None]
    errs = diffs.sum(axis=3, dtype=np.int64)               # (n_pts, n_eq, U)
    n_info = cfg.info_bits_per_user
    errs[out.degenerate] = n_info
    cw_err = (errs > 0).sum(axis=2, dtype=np.int64)
    return errs.sum(axis=2), cw_err, out.degenerate.sum(axis=2, dtype=np.int64)


def _counts_task(args):
    cfg, trial, point_idx = args
    return trial, point_idx, _frame_counts(cfg, trial, point_idx)


@dataclass(frozen=True)
class BerReport:
    """Aggregated sweep result: one entry per (SNR point, equalizer)."""

    rows: tuple                 # dicts, ordered by (point, equalizer)
    config: dict
    master_seed: int
    wall_time_s: float

    def to_csv(self):
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r['snr_db']:g},{r['equalizer']},{r['bits']},{r['ber']:.12g},"
                f"{r['fer']:.12g},{r['bit_errors']},{r['bits_counted']},{r['frames']}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps(
            {
                "config": self.config,
                "master_seed": self.master_seed,
                "wall_time_s": self.wall_time_s,
                "results": list(self.rows),
            },
            indent=2,
            sort_keys=True,
        )


def _stop_index(per_trial_errs, min_errors, n_trials):
    """First trial index k such that every equalizer has >= min_errors
    cumulative bit errors over trials 0..k, or n_trials-1 if never."""
    cum = np.cumsum(per_trial_errs[:n_trials], axis=0)      # (n_trials, n_eq)
    done = (cum >= min_errors).all(axis=1)
    hits = np.flatnonzero(done)
    return int(hits[0]) if hits.size else n_trials - 1


def sweep(cfg, n_workers=1):
    """Run the Monte-Carlo sweep and aggregate a BerReport.

    The report is a pure function of the config: worker count only
    affects wall time.  Each SNR point stops at the earliest trial by
    which all equalizers have min_errors bit errors (or at max_frames),
    and only trials up to that index are aggregated.
    """
    t0 = time.monotonic()
    n_pts = len(cfg.snr_points_db)
    n_eq = len(cfg.equalizers)
    # per point: per-trial count arrays, filled in trial order
    errs = [np.zeros((cfg.max_frames, n_eq), dtype=np.int64) for _ in range(n_pts)]
    cw = [np.zeros((cfg.max_frames, n_eq), dtype=np.int64) for _ in range(n_pts)]
    deg = [np.zeros((cfg.max_frames, n_eq), dtype=np.int64) for _ in range(n_pts)]
    stop_at = [None] * n_pts

    active = tuple(range(n_pts))
    trial = 0
    chunk = 1 if n_workers <= 1 else 4 * n_workers
    pool = ProcessPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    try:
        while active and trial < cfg.max_frames:
            hi = min(trial + chunk, cfg.max_frames)
            tasks = [(cfg, t, active) for t in range(trial, hi)]
            if pool is None:
                results = map(_counts_task, tasks)
            else:
                results = pool.map(_counts_task, tasks)
            for t, pts, (e, c, d) in results:
                for i, p in enumerate(pts):
                    errs[p][t] = e[i]
                    cw[p][t] = c[i]
                    deg[p][t] = d[i]
            trial = hi
            still = []
            for p in active:
                k = _stop_index(errs[p], cfg.min_errors, trial)
                if (errs[p][: k + 1].sum(axis=0).min() >= cfg.min_errors) or trial >= cfg.max_frames:
                    stop_at[p] = k
                else:
                    still.append(p)
            active = tuple(still)
    finally:
        if pool is not None:
            pool.shutdown()

    n_info = cfg.info_bits_per_user
    rows = []
    for p in range(n_pts):
        k = stop_at[p] if stop_at[p] is not None else cfg.max_frames - 1
        frames = k + 1
        bits_counted = frames * cfg.n_users * n_info
        codewords = frames * cfg.n_users
        for ie, eq in enumerate(cfg.equalizers):
            be = int(errs[p][:frames, ie].sum())
            ce = int(cw[p][:frames, ie].sum())
            rows.append(
                {
                    "snr_db": cfg.snr_points_db[p],
                    "equalizer": eq.label,
                    "bits": eq.bits,
                    "frames": frames,
                    "bit_errors": be,
                    "bits_counted": bits_counted,
                    "ber": be / bits_counted,
                    "codeword_errors": ce,
                    "codewords": codewords,
                    "fer": ce / codewords,
                    "degenerate_user_frames": int(deg[p][:frames, ie].sum()),
                }
            )
    return BerReport(
        rows=tuple(rows),
        config=config_to_dict(cfg),
        master_seed=cfg.master_seed,
        wall_time_s=time.monotonic() - t0,
    )
