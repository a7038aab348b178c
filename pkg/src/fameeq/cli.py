"""Command-line front end: BER sweeps, variance-law spot checks, oracle
gap studies, and a quantizer demo.

Exit codes: 0 success, 1 runtime failure or check threshold breach,
2 unusable configuration (bad file, bad schema, impossible sizes).
Worker count for sweeps is capped by the FAMEEQ_THREADS environment
variable (default 1, serial).
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .equalize import (
    default_fbs_schedule,
    fame_bruteforce,
    fame_fbs,
    fame_objective,
    flmmse,
    npi_variance,
    quantize_row,
)
from .errors import BudgetExceeded, ConfigError, FameqError
from .simkit import config_from_dict, sweep


def _load_config(path, args):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}") from e
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(d, dict):
        raise ConfigError(f"{path}:1:1: config root must be an object")
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.snr is not None:
        try:
            d["snr_points_db"] = [float(s) for s in args.snr.split(",") if s]
        except ValueError as e:
            raise ConfigError(f"--snr: {e}") from e
    if args.frames is not None:
        d.setdefault("stop", {})["max_frames"] = args.frames
    if args.equalizer is not None:
        name, _, bits = args.equalizer.partition(",")
        spec = {"name": name.strip()}
        if bits.strip():
            try:
                spec["bits"] = int(bits)
            except ValueError as e:
                raise ConfigError(f"--equalizer: bits must be an integer, got {bits!r}") from e
        d["equalizers"] = [spec]
    return config_from_dict(d)


def _workers():
    try:
        return max(1, int(os.environ.get("FAMEEQ_THREADS", "1")))
    except ValueError:
        return 1


def cmd_ber_sweep(args):
    cfg = _load_config(args.config, args)
    report = sweep(cfg, n_workers=_workers())
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "ber.csv").write_text(report.to_csv())
    (outdir / "report.json").write_text(report.to_json() + "\n")
    for r in report.rows:
        print(
            f"snr={r['snr_db']:g} dB  {r['equalizer']}(b={r['bits']})  "
            f"ber={r['ber']:.3e}  fer={r['fer']:.3e}  frames={r['frames']}"
        )
    print(f"wrote {outdir / 'ber.csv'} and {outdir / 'report.json'}")
    return 0


def cmd_mse_check(args):
    rng = np.random.default_rng(args.seed if args.seed is not None else 1)
    n_ant, n_users = args.ants, args.users
    worst = 0.0
    lines = []
    for i in range(args.instances):
        if i == 0:
            # near-noiseless single-user corner: variance should vanish
            H = (rng.standard_normal((n_ant, 1)) + 1j * rng.standard_normal((n_ant, 1))) / np.sqrt(2)
            rho, u, bits = 1e-9, 0, 2
        else:
            H = (rng.standard_normal((n_ant, n_users)) + 1j * rng.standard_normal((n_ant, n_users))) / np.sqrt(2)
            rho = 10.0 ** rng.uniform(-1.5, 0.5)
            u = int(rng.integers(n_users))
            bits = int(rng.integers(1, 4))
        w = rng.standard_normal(n_ant) + 1j * rng.standard_normal(n_ant)
        x = quantize_row(w + H[:, u], bits)
        hhx = H.conj().T @ x
        num = float(np.real(np.vdot(hhx, hhx))) + rho * float(np.real(np.vdot(x, x)))
        bias = float(abs(hhx[u]) ** 2 / num)
        analytic = npi_variance(1.0, bias)

        n_draws = args.draws
        s = (rng.standard_normal((n_draws, H.shape[1])) + 1j * rng.standard_normal((n_draws, H.shape[1]))) * np.sqrt(0.5)
        n = (rng.standard_normal((n_draws, n_ant)) + 1j * rng.standard_normal((n_draws, n_ant))) * np.sqrt(0.5 * rho)
        y = s @ H.T + n
        s_hat = (y @ np.conj(x)) / np.vdot(x, H[:, u])
        mse = float(np.mean(np.abs(s_hat - s[:, u]) ** 2))
        dev = abs(mse - analytic) / analytic if analytic > 0 else abs(mse - analytic)
        worst = max(worst, dev)
        lines.append(
            f"instance {i:2d}: analytic={analytic:.6e}  monte-carlo={mse:.6e}  rel-dev={dev:.4f}"
        )
    for ln in lines:
        print(ln)
    ok = worst <= 0.03
    print(f"{'PASS' if ok else 'FAIL'}: max relative deviation {worst:.4f} (threshold 0.03)")
    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "mse_check.json").write_text(
            json.dumps({"max_rel_dev": worst, "pass": ok, "instances": args.instances}, indent=2) + "\n"
        )
    return 0 if ok else 1


def cmd_oracle_gap(args):
    rng = np.random.default_rng(args.seed if args.seed is not None else 1)
    rows = []
    sched = default_fbs_schedule(args.bits)
    for i in range(args.instances):
        H = (rng.standard_normal((args.ants, args.users)) + 1j * rng.standard_normal((args.ants, args.users))) / np.sqrt(2)
        rho = 10.0 ** rng.uniform(-1.5, 0.5)
        best = fame_bruteforce(H, rho, 0, args.bits)
        obj_best = fame_objective(H, rho, 0, best.x)
        fl = flmmse(H, rho, args.bits).rows[0]
        obj_fl = fame_objective(H, rho, 0, fl.x)
        fbs = fame_fbs(H, rho, 0, args.bits, sched)
        obj_fbs = fame_objective(H, rho, 0, fbs.x)
        rows.append((i, obj_best, obj_fl, obj_fbs, obj_fl / obj_best, obj_fbs / obj_best))

    csv_lines = ["instance,brute_objective,flmmse_objective,fame_fbs_objective,flmmse_ratio,fame_fbs_ratio"]
    for r in rows:
        csv_lines.append(f"{r[0]},{r[1]:.12g},{r[2]:.12g},{r[3]:.12g},{r[4]:.12g},{r[5]:.12g}")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "oracle_gap.csv").write_text("\n".join(csv_lines) + "\n")

    fl_r = np.array([r[4] for r in rows])
    fbs_r = np.array([r[5] for r in rows])
    for name, arr in (("flmmse", fl_r), ("fame_fbs", fbs_r)):
        q = np.quantile(arr, [0.0, 0.5, 0.9, 1.0])
        print(f"{name} objective / oracle optimum: min={q[0]:.3f} median={q[1]:.3f} p90={q[2]:.3f} max={q[3]:.3f}")
    print(f"wrote {outdir / 'oracle_gap.csv'}")
    return 0


def cmd_quantize_demo(args):
    try:
        vals = np.array([complex(tok) for tok in args.values.split(",") if tok])
    except ValueError as e:
        raise ConfigError(f"--values: {e}") from e
    if vals.size == 0:
        raise ConfigError("--values: need at least one entry")
    out = quantize_row(vals, args.bits, w_max_override=args.w_max)
    if args.w_max is not None:
        w_max = args.w_max
    else:
        w_max = max(np.max(np.abs(vals.real)), np.max(np.abs(vals.imag)))
    n_bins = 1 << args.bits
    print(f"bits={args.bits}  w_max={w_max:g}  bins={n_bins}  bin-width={2 * w_max / n_bins:g}")
    print(f"alphabet: {{+-1, ..., +-{n_bins - 1}}} (odd integers, scaled centroids)")
    for v, o in zip(vals, out):
        print(f"  {v:+.6g}  ->  {int(o.real):+d}{int(o.imag):+d}j")
    if args.out is not None:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        payload = {
            "bits": args.bits,
            "w_max": float(w_max),
            "input": [[float(v.real), float(v.imag)] for v in vals],
            "quantized": [[int(o.real), int(o.imag)] for o in out],
        }
        (outdir / "quantize_demo.json").write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def _build_parser():
    p = argparse.ArgumentParser(prog="fameeq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    sweep_p = sub.add_parser("ber-sweep", help="run a Monte-Carlo BER sweep from a config file")
    sweep_p.add_argument("--config", required=True, help="JSON config path")
    sweep_p.add_argument("--seed", type=int, help="override master_seed")
    sweep_p.add_argument("--out", default=".", help="output directory for ber.csv / report.json")
    sweep_p.add_argument("--snr", help="comma list of SNR points (dB), overrides config")
    sweep_p.add_argument("--equalizer", help="run a single equalizer, as name[,bits]")
    sweep_p.add_argument("--frames", type=int, help="override stop.max_frames")
    sweep_p.set_defaults(fn=cmd_ber_sweep)

    mse_p = sub.add_parser("mse-check", help="analytic NPI variance vs Monte-Carlo MSE")
    mse_p.add_argument("--seed", type=int)
    mse_p.add_argument("--instances", type=int, default=20)
    mse_p.add_argument("--draws", type=int, default=100000)
    mse_p.add_argument("--ants", type=int, default=32)
    mse_p.add_argument("--users", type=int, default=8)
    mse_p.add_argument("--out", help="also write mse_check.json here")
    mse_p.set_defaults(fn=cmd_mse_check)

    gap_p = sub.add_parser("oracle-gap", help="heuristics vs exhaustive-search optimum")
    gap_p.add_argument("--seed", type=int)
    gap_p.add_argument("--instances", type=int, default=50)
    gap_p.add_argument("--ants", type=int, default=4)
    gap_p.add_argument("--users", type=int, default=2)
    gap_p.add_argument("--bits", type=int, default=1)
    gap_p.add_argument("--out", default=".", help="output directory for oracle_gap.csv")
    gap_p.set_defaults(fn=cmd_oracle_gap)

    q_p = sub.add_parser("quantize-demo", help="show the binning for a vector")
    q_p.add_argument("--bits", type=int, default=2)
    q_p.add_argument("--values", required=True, help="comma list of complex entries")
    q_p.add_argument("--w-max", type=float, default=None, help="pin the full-scale range")
    q_p.add_argument("--out", help="also write quantize_demo.json here")
    q_p.set_defaults(fn=cmd_quantize_demo)
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, BudgetExceeded) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FameqError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
