"""Command-line interface exposing every experiment with stable schemas.

One executable, twelve subcommands.  Each run writes exactly one CSV whose
header is a versioned constant (see ``SCHEMAS``) plus a JSON manifest
recording the resolved parameters, the seed, the tool version and a
timestamp, so any output can be regenerated bit-identically (timestamps
aside) from its manifest.  Exit codes: 0 success, 2 parameter validation,
3 exact-enumeration refusal.

Figures are deliberately out of scope; a separate package renders them
from these CSVs.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from datetime import datetime, timezone
from importlib import metadata

import numpy as np

from .core import EnumerationRefused, SpreadingDistribution, SystemParams
from .interpolation import (
    free_energy_terms,
    nishimori_check,
    sum_rule_check,
)
from .montecarlo import (
    DEFAULT_UNIVERSALITY_DISTS,
    ExperimentConfig,
    concentration_experiment,
    estimate_capacity,
    limit_trend,
    resolve_system,
    universality_experiment,
)
from .replica import (
    NoiseSpectrum,
    PowerProfile,
    capacity_bound,
    colored_noise_bound,
    gaussian_closed_form,
    gaussian_replica,
    phase_scan,
    solve_fixed_points,
    unequal_power_bound,
)

LN2 = math.log(2.0)

try:
    __version__ = metadata.version("cdma-lab")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

# Pinned output schemas.  These headers are part of the package's public
# interface; golden tests assert them verbatim and downstream figure
# scripts refuse files that do not match.  The bits flag only ever appends
# columns after the pinned ones.
SCHEMAS = {
    "replica": "beta,sigma2,m_star,lambda_star,c_rs_nats,c_rs_bits,n_fixed_points",
    "phase": "beta,sigma2,m_star,lambda_star,c_rs_nats,c_rs_bits,n_fixed_points,root_count",
    "simulate": "K,N,beta_actual,sigma2,dist,n_matrices,n_noise,"
                "mi_nats_mean,mi_nats_se,ber_mean,ber_se,bound_nats",
    "concentrate": "K,var_mi,var_f,tail_freq_mi,tail_freq_f,epsilon",
    "universality": "K,dist,mi_nats_mean,mi_nats_se",
    "trend": "K,N,beta_actual,mi_nats_mean,mi_nats_se",
    "interpolate": "t,u,f_mean,f_se,dfdt_fd,T1_raw,T2_raw,"
                   "T1_reduced,T2_reduced,R,R_se",
    "nishimori": "t,u,res_mq,res_mq_se,res_X11,res_X11_se,res_X12,res_X12_se",
    "sumrule": "m,u,lhs,rhs,residual,budget",
    "gaussian": "beta,sigma2,m_saddle,c_replica_nats,c_closed_nats,abs_diff",
    "colored": "beta,sigma2,model,rho,n_omega,m_star,c_nats",
    "powers": "beta,sigma2,levels,pbar,m_star,c_nats",
}


class CLIError(Exception):
    """Parameter problem reported to the user without a stack trace."""


def _parse_floats(flag: str, spec: str, *, positive: bool = False) -> list:
    """Comma list or ``lo:hi:n[:log]`` range of floats from a flag value."""
    try:
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) not in (3, 4):
                raise ValueError("range needs lo:hi:count[:log|lin]")
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
            scale = parts[3] if len(parts) == 4 else "lin"
            if count < 1:
                raise ValueError("range count must be at least 1")
            if scale == "log":
                if lo <= 0 or hi <= 0:
                    raise ValueError("log range needs positive endpoints")
                vals = np.geomspace(lo, hi, count)
            elif scale == "lin":
                vals = np.linspace(lo, hi, count)
            else:
                raise ValueError(f"unknown range scale '{scale}'")
            out = [float(v) for v in vals]
        else:
            out = [float(tok) for tok in spec.split(",") if tok.strip() != ""]
        if not out:
            raise ValueError("no values given")
    except ValueError as exc:
        raise CLIError(f"{flag}: {exc}") from None
    if positive and any(not (v > 0) or math.isinf(v) for v in out):
        raise CLIError(f"{flag} values must be positive and finite")
    return out


def _parse_ints(flag: str, spec: str, *, minimum: int = 1) -> list:
    try:
        out = [int(tok) for tok in spec.split(",") if tok.strip() != ""]
        if not out:
            raise ValueError("no values given")
    except ValueError as exc:
        raise CLIError(f"{flag}: {exc}") from None
    if any(v < minimum for v in out):
        raise CLIError(f"{flag} values must be at least {minimum}")
    return out


def _check_positive_int(flag: str, value: int) -> int:
    if value < 1:
        raise CLIError(f"{flag} must be at least 1")
    return value


def _check_unit_interval(flag: str, value: float) -> float:
    if not (0.0 <= value <= 1.0):
        raise CLIError(f"{flag} must lie in [0, 1]")
    return value


def _resolve_threads(args) -> int:
    threads = args.threads
    if threads is None:
        env = os.environ.get("CDMA_LAB_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise CLIError(
                    f"CDMA_LAB_THREADS is '{env}', expected an integer"
                ) from None
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise CLIError("--threads must be at least 1")
    return threads


def _fmt_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path: str, header: list, rows: list) -> None:
    for row in rows:
        for name, value in zip(header, row):
            if isinstance(value, (float, np.floating)) and not math.isfinite(value):
                raise CLIError(
                    f"refusing to write non-finite value in column '{name}'"
                )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])


def _write_manifest(path: str, subcommand: str, args, header: list,
                    outputs: list) -> None:
    import json

    params = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "out"):
            continue
        if isinstance(value, (str, int, float, bool)) or value is None:
            params[key] = value
        else:
            params[key] = str(value)
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "params": params,
        "columns": header,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": outputs,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(args, subcommand: str, extra_cols: list, rows: list) -> None:
    header = SCHEMAS[subcommand].split(",") + extra_cols
    _write_csv(args.out, header, rows)
    _write_manifest(args.out + ".manifest.json", subcommand, args, header,
                    [args.out])


def _bits_requested(args) -> bool:
    return bool(getattr(args, "bits", False))


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_replica(args) -> None:
    betas = _parse_floats("--beta", args.beta, positive=True)
    sigma2s = _parse_floats("--sigma2", args.sigma2, positive=True)
    shift = -LN2 if args.as_printed else 0.0
    rows = []
    for beta in betas:
        for sigma2 in sigma2s:
            params = SystemParams(beta=beta, sigma2=sigma2)
            c_upper, best = capacity_bound(params, grid_size=args.grid_size)
            n_roots = len(solve_fixed_points(params, grid_size=args.grid_size))
            c = c_upper + shift
            rows.append((beta, sigma2, best.m, best.lam, c, c / LN2, n_roots))
    _emit(args, "replica", [], rows)


def _cmd_phase(args) -> None:
    betas = _parse_floats("--beta", args.beta, positive=True)
    sigma2s = _parse_floats("--sigma2", args.sigma2, positive=True)
    shift = -LN2 if args.as_printed else 0.0
    cells = phase_scan(betas, sigma2s, grid_size=args.grid_size)
    rows = [
        (c.beta, c.sigma2, c.m_star, c.lambda_star, c.c_rs + shift,
         (c.c_rs + shift) / LN2, c.n_fixed_points, c.n_fixed_points)
        for c in cells
    ]
    _emit(args, "phase", [], rows)


def _make_dist(flag: str, name: str) -> SpreadingDistribution:
    try:
        return SpreadingDistribution.from_name(name)
    except ValueError as exc:
        raise CLIError(f"{flag}: {exc}") from None


def _cmd_simulate(args) -> None:
    Ks = _parse_ints("--K", args.K)
    sigma2s = _parse_floats("--sigma2", args.sigma2, positive=True)
    if not (args.beta > 0):
        raise CLIError("--beta must be positive")
    _check_positive_int("--n-matrices", args.n_matrices)
    _check_positive_int("--n-noise", args.n_noise)
    dist = _make_dist("--dist", args.dist)
    threads = _resolve_threads(args)
    bits = _bits_requested(args)
    rows = []
    for K in Ks:
        for sigma2 in sigma2s:
            params = resolve_system(K, args.beta, sigma2)
            cfg = ExperimentConfig(params=params, dist=dist,
                                   n_matrices=args.n_matrices,
                                   n_noise=args.n_noise, seed=args.seed)
            rec = estimate_capacity(cfg, threads=threads)
            bound, _ = capacity_bound(
                SystemParams(beta=params.beta, sigma2=sigma2))
            row = (K, params.N, params.beta, sigma2, dist.kind,
                   args.n_matrices, args.n_noise, rec.capacity_mean,
                   rec.capacity_se, rec.ber_mean, rec.ber_se, bound)
            if bits:
                row = row + (rec.capacity_mean / LN2, rec.capacity_se / LN2)
            rows.append(row)
    extra = ["mi_bits_mean", "mi_bits_se"] if bits else []
    _emit(args, "simulate", extra, rows)


def _cmd_concentrate(args) -> None:
    Ks = _parse_ints("--K", args.K)
    if not (args.beta > 0):
        raise CLIError("--beta must be positive")
    if not (args.sigma2 > 0):
        raise CLIError("--sigma2 must be positive")
    epsilons = _parse_floats("--epsilons", args.epsilons, positive=True)
    _check_positive_int("--n-matrices", args.n_matrices)
    _check_positive_int("--n-noise", args.n_noise)
    dist = _make_dist("--dist", args.dist)
    threads = _resolve_threads(args)
    cfg = ExperimentConfig(
        params=SystemParams(beta=args.beta, sigma2=args.sigma2), dist=dist,
        n_matrices=args.n_matrices, n_noise=args.n_noise, seed=args.seed,
        epsilons=tuple(epsilons),
    )
    rows = [
        (r.K, r.var_mi, r.var_f, r.tail_freq_mi, r.tail_freq_f, r.epsilon)
        for r in concentration_experiment(cfg, Ks, threads=threads)
    ]
    _emit(args, "concentrate", [], rows)


def _cmd_universality(args) -> None:
    Ks = _parse_ints("--K", args.K)
    if not (args.beta > 0):
        raise CLIError("--beta must be positive")
    if not (args.sigma2 > 0):
        raise CLIError("--sigma2 must be positive")
    _check_positive_int("--n-matrices", args.n_matrices)
    _check_positive_int("--n-noise", args.n_noise)
    names = [tok for tok in args.dists.split(",") if tok.strip()]
    if not names:
        raise CLIError("--dists needs at least one name")
    for name in names:
        _make_dist("--dists", name)
    threads = _resolve_threads(args)
    bits = _bits_requested(args)
    cfg = ExperimentConfig(
        params=SystemParams(beta=args.beta, sigma2=args.sigma2),
        dist=SpreadingDistribution.from_name(names[0]),
        n_matrices=args.n_matrices, n_noise=args.n_noise, seed=args.seed,
    )
    rows = []
    for r in universality_experiment(cfg, Ks, names, threads=threads):
        row = (r.K, r.dist, r.capacity_mean, r.capacity_se)
        if bits:
            row = row + (r.capacity_mean / LN2, r.capacity_se / LN2)
        rows.append(row)
    extra = ["mi_bits_mean", "mi_bits_se"] if bits else []
    _emit(args, "universality", extra, rows)


def _cmd_trend(args) -> None:
    Ks = _parse_ints("--K", args.K)
    if not (args.beta > 0):
        raise CLIError("--beta must be positive")
    if not (args.sigma2 > 0):
        raise CLIError("--sigma2 must be positive")
    _check_positive_int("--n-matrices", args.n_matrices)
    _check_positive_int("--n-noise", args.n_noise)
    dist = _make_dist("--dist", args.dist)
    threads = _resolve_threads(args)
    bits = _bits_requested(args)
    cfg = ExperimentConfig(
        params=SystemParams(beta=args.beta, sigma2=args.sigma2), dist=dist,
        n_matrices=args.n_matrices, n_noise=args.n_noise, seed=args.seed,
    )
    rows = []
    for r in limit_trend(cfg, Ks, threads=threads):
        row = (r.K, r.N, r.beta_actual, r.capacity_mean, r.capacity_se)
        if bits:
            row = row + (r.capacity_mean / LN2, r.capacity_se / LN2)
        rows.append(row)
    extra = ["mi_bits_mean", "mi_bits_se"] if bits else []
    _emit(args, "trend", extra, rows)


def _interp_system(args):
    """(params, m) shared by the interpolation-family subcommands."""
    K = _check_positive_int("--K", args.K)
    if not (args.beta > 0):
        raise CLIError("--beta must be positive")
    if not (args.sigma2 > 0):
        raise CLIError("--sigma2 must be positive")
    params = resolve_system(K, args.beta, args.sigma2)
    if args.m == "auto":
        _, best = capacity_bound(
            SystemParams(beta=params.beta, sigma2=args.sigma2))
        m = best.m
    else:
        try:
            m = float(args.m)
        except ValueError:
            raise CLIError("--m must be a float or 'auto'") from None
        _check_unit_interval("--m", m)
    return params, m


def _cmd_interpolate(args) -> None:
    params, m = _interp_system(args)
    ts = _parse_floats("--t", args.t)
    us = _parse_floats("--u", args.u)
    for t in ts:
        _check_unit_interval("--t", t)
    if any(u < 0 for u in us):
        raise CLIError("--u values cannot be negative")
    _check_positive_int("--n-samples", args.n_samples)
    if not (0 < args.delta <= 0.5):
        raise CLIError("--delta must lie in (0, 0.5]")
    threads = _resolve_threads(args)
    rows = []
    for u in us:
        for t in ts:
            tb = free_energy_terms(t, u, m, params, args.n_samples,
                                   args.seed, delta=args.delta,
                                   threads=threads)
            rows.append((tb.t, tb.u, tb.f_mean, tb.f_se, tb.dfdt_fd,
                         tb.T1_raw, tb.T2_raw, tb.T1_reduced, tb.T2_reduced,
                         tb.R, tb.R_se))
    _emit(args, "interpolate", [], rows)


def _cmd_nishimori(args) -> None:
    params, m = _interp_system(args)
    ts = _parse_floats("--t", args.t)
    us = _parse_floats("--u", args.u)
    for t in ts:
        _check_unit_interval("--t", t)
    if any(u < 0 for u in us):
        raise CLIError("--u values cannot be negative")
    _check_positive_int("--n-samples", args.n_samples)
    threads = _resolve_threads(args)
    rows = []
    for u in us:
        for t in ts:
            rep = nishimori_check(t, u, m, params, args.n_samples, args.seed,
                                  threads=threads)
            rows.append((rep.t, rep.u, rep.res_mq, rep.res_mq_se,
                         rep.res_X11, rep.res_X11_se, rep.res_X12,
                         rep.res_X12_se))
    _emit(args, "nishimori", [], rows)


def _cmd_sumrule(args) -> None:
    K = _check_positive_int("--K", args.K)
    if not (args.beta > 0):
        raise CLIError("--beta must be positive")
    if not (args.sigma2 > 0):
        raise CLIError("--sigma2 must be positive")
    params = resolve_system(K, args.beta, args.sigma2)
    if args.m == "auto":
        _, best = capacity_bound(
            SystemParams(beta=params.beta, sigma2=args.sigma2))
        ms = [best.m]
    else:
        ms = _parse_floats("--m", args.m)
        for m in ms:
            _check_unit_interval("--m", m)
    us = _parse_floats("--u", args.u, positive=True)
    _check_positive_int("--n-samples", args.n_samples)
    _check_positive_int("--n-t", args.n_t)
    threads = _resolve_threads(args)
    rows = []
    for m in ms:
        for u in us:
            sr = sum_rule_check(m, params, args.n_samples, u, args.seed,
                                n_t=args.n_t, refine=args.refine,
                                threads=threads)
            rows.append((sr.m, sr.u, sr.lhs, sr.rhs, sr.residual, sr.budget))
    _emit(args, "sumrule", [], rows)


def _cmd_gaussian(args) -> None:
    betas = _parse_floats("--beta", args.beta, positive=True)
    sigma2s = _parse_floats("--sigma2", args.sigma2, positive=True)
    bits = _bits_requested(args)
    rows = []
    for beta in betas:
        for sigma2 in sigma2s:
            c_replica, m_saddle, _ = gaussian_replica(beta, sigma2)
            c_closed = gaussian_closed_form(beta, sigma2)
            row = (beta, sigma2, m_saddle, c_replica, c_closed,
                   abs(c_replica - c_closed))
            if bits:
                row = row + (c_replica / LN2, c_closed / LN2)
            rows.append(row)
    extra = ["c_replica_bits", "c_closed_bits"] if bits else []
    _emit(args, "gaussian", extra, rows)


def _cmd_colored(args) -> None:
    betas = _parse_floats("--beta", args.beta, positive=True)
    bits = _bits_requested(args)
    _check_positive_int("--n-omega", args.n_omega)
    if args.model == "table":
        if not args.table:
            raise CLIError("--table is required when --model table")
        values = _parse_floats("--table", args.table, positive=True)
        spectrum = NoiseSpectrum.from_table(values)
        sigma2 = float(np.mean(values))  # total noise power of the table
        rho = 0.0
        n_omega = len(values)
    else:
        if not (args.sigma2_total > 0) or math.isinf(args.sigma2_total):
            raise CLIError("--sigma2-total must be positive and finite")
        n_omega = args.n_omega
        sigma2 = args.sigma2_total
        if args.model == "white":
            spectrum = NoiseSpectrum.white(sigma2)
            rho = 0.0
        else:
            if not (-1.0 < args.rho < 1.0):
                raise CLIError("--rho must lie in (-1, 1)")
            rho = args.rho
            spectrum = NoiseSpectrum.ar1(rho, sigma2)
    rows = []
    for beta in betas:
        params = SystemParams(beta=beta, sigma2=sigma2)
        c, m_arg = colored_noise_bound(params, spectrum, n_omega=n_omega)
        row = (beta, sigma2, args.model, rho, n_omega, m_arg, c)
        if bits:
            row = row + (c / LN2,)
        rows.append(row)
    extra = ["c_bits"] if bits else []
    _emit(args, "colored", extra, rows)


def _parse_levels(flag: str, spec: str) -> PowerProfile:
    pairs = []
    for tok in spec.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        parts = tok.split(":")
        if len(parts) != 2:
            raise CLIError(f"{flag}: level '{tok}' is not power:probability")
        try:
            pairs.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise CLIError(f"{flag}: level '{tok}' is not numeric") from None
    if not pairs:
        raise CLIError(f"{flag}: no levels given")
    try:
        return PowerProfile.from_pairs(pairs)
    except ValueError as exc:
        raise CLIError(f"{flag}: {exc}") from None


def _cmd_powers(args) -> None:
    betas = _parse_floats("--beta", args.beta, positive=True)
    sigma2s = _parse_floats("--sigma2", args.sigma2, positive=True)
    profile = _parse_levels("--levels", args.levels)
    bits = _bits_requested(args)
    levels_text = ";".join(
        f"{_fmt_cell(p)}:{_fmt_cell(q)}" for p, q in profile.levels)
    rows = []
    for beta in betas:
        for sigma2 in sigma2s:
            params = SystemParams(beta=beta, sigma2=sigma2)
            try:
                c, m_arg = unequal_power_bound(params, profile)
            except ValueError as exc:
                raise CLIError(f"--levels: {exc}") from None
            row = (beta, sigma2, levels_text, profile.mean_power, m_arg, c)
            if bits:
                row = row + (c / LN2,)
            rows.append(row)
    extra = ["c_bits"] if bits else []
    _emit(args, "powers", extra, rows)


# ---------------------------------------------------------------------------
# parser assembly


def _add_common(sub, *, seeded: bool = True) -> None:
    sub.add_argument("--out", required=True, help="output CSV path")
    sub.add_argument("--config", default=None,
                     help="key = value file supplying flag defaults")
    if seeded:
        sub.add_argument("--seed", type=int, default=0,
                         help="master seed for all randomness")
        sub.add_argument("--threads", type=int, default=None,
                         help="worker threads (default: CDMA_LAB_THREADS "
                              "or machine parallelism)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdma-lab",
        description="Numerical laboratory for the replica description of "
                    "randomly spread binary-input CDMA.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("replica", help="fixed points and capacity bound")
    p.add_argument("--beta", required=True, help="loads (list or lo:hi:n[:log])")
    p.add_argument("--sigma2", required=True, help="noise powers (list or range)")
    p.add_argument("--grid-size", type=int, default=512)
    p.add_argument("--as-printed", action="store_true",
                   help="shift the functional by -ln 2 (printed convention)")
    p.add_argument("--bits", action="store_true",
                   help="no-op; the bits column is always present here")
    _add_common(p, seeded=False)
    p.set_defaults(func=_cmd_replica)

    p = subs.add_parser("phase", help="fixed-point census over a grid")
    p.add_argument("--beta", required=True)
    p.add_argument("--sigma2", required=True)
    p.add_argument("--grid-size", type=int, default=512)
    p.add_argument("--as-printed", action="store_true")
    p.add_argument("--bits", action="store_true")
    _add_common(p, seeded=False)
    p.set_defaults(func=_cmd_phase)

    p = subs.add_parser("simulate", help="Monte Carlo capacity estimate")
    p.add_argument("--K", required=True, help="user counts (comma list)")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--sigma2", required=True)
    p.add_argument("--dist", default="gaussian-unit")
    p.add_argument("--n-matrices", type=int, default=100)
    p.add_argument("--n-noise", type=int, default=10)
    p.add_argument("--bits", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = subs.add_parser("concentrate", help="fluctuation statistics vs K")
    p.add_argument("--K", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--dist", default="gaussian-unit")
    p.add_argument("--epsilons", default="0.05,0.1")
    p.add_argument("--n-matrices", type=int, default=200)
    p.add_argument("--n-noise", type=int, default=10)
    _add_common(p)
    p.set_defaults(func=_cmd_concentrate)

    p = subs.add_parser("universality", help="capacity across chip laws")
    p.add_argument("--K", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--dists", default=",".join(DEFAULT_UNIVERSALITY_DISTS))
    p.add_argument("--n-matrices", type=int, default=200)
    p.add_argument("--n-noise", type=int, default=10)
    p.add_argument("--bits", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_universality)

    p = subs.add_parser("trend", help="capacity estimate vs K")
    p.add_argument("--K", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--dist", default="gaussian-unit")
    p.add_argument("--n-matrices", type=int, default=100)
    p.add_argument("--n-noise", type=int, default=10)
    p.add_argument("--bits", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_trend)

    p = subs.add_parser("interpolate", help="free-energy derivative terms")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--t", default="0:1:11", help="path times (list or range)")
    p.add_argument("--u", default="0.1", help="perturbation strengths")
    p.add_argument("--m", default="auto",
                   help="anchor overlap, or 'auto' for the bound argmin")
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--delta", type=float, default=1e-3,
                   help="finite-difference half step in t")
    _add_common(p)
    p.set_defaults(func=_cmd_interpolate)

    p = subs.add_parser("nishimori", help="gauge-identity residuals")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--t", default="0.7")
    p.add_argument("--u", default="0.05")
    p.add_argument("--m", default="auto")
    p.add_argument("--n-samples", type=int, default=1000)
    _add_common(p)
    p.set_defaults(func=_cmd_nishimori)

    p = subs.add_parser("sumrule", help="interpolation sum-rule residual")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--m", default="auto",
                   help="anchor overlaps (list), or 'auto'")
    p.add_argument("--u", default="0.05", help="perturbation strengths")
    p.add_argument("--n-samples", type=int, default=500)
    p.add_argument("--n-t", type=int, default=21)
    p.add_argument("--refine", action="store_true",
                   help="double the t grid")
    _add_common(p)
    p.set_defaults(func=_cmd_sumrule)

    p = subs.add_parser("gaussian", help="Gaussian-input closed form vs saddle")
    p.add_argument("--beta", required=True)
    p.add_argument("--sigma2", required=True)
    p.add_argument("--bits", action="store_true")
    _add_common(p, seeded=False)
    p.set_defaults(func=_cmd_gaussian)

    p = subs.add_parser("colored", help="capacity bound under colored noise")
    p.add_argument("--beta", required=True)
    p.add_argument("--model", choices=("white", "ar1", "table"),
                   default="ar1")
    p.add_argument("--sigma2-total", type=float, default=1.0,
                   help="total noise power for white/ar1 spectra")
    p.add_argument("--rho", type=float, default=0.5,
                   help="lag-one correlation of the ar1 spectrum")
    p.add_argument("--table", default=None,
                   help="comma list of spectrum values on the midpoint grid")
    p.add_argument("--n-omega", type=int, default=1024)
    p.add_argument("--bits", action="store_true")
    _add_common(p, seeded=False)
    p.set_defaults(func=_cmd_colored)

    p = subs.add_parser("powers", help="capacity bound under unequal powers")
    p.add_argument("--beta", required=True)
    p.add_argument("--sigma2", required=True)
    p.add_argument("--levels", required=True,
                   help="power:probability pairs joined by ';', "
                        "e.g. '0.5:0.5;1.5:0.5'")
    p.add_argument("--bits", action="store_true")
    _add_common(p, seeded=False)
    p.set_defaults(func=_cmd_powers)

    return parser


def _config_flag_args(parser: argparse.ArgumentParser, path: str) -> list:
    """Turn a ``key = value`` file into flag tokens for parsing.

    Tokens are injected before the command-line flags, so explicit flags
    take precedence; required flags may be satisfied from the file.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CLIError(f"--config: {exc}") from None
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CLIError(f"--config: line {lineno} is not 'key = value'")
        key, value = stripped.split("=", 1)
        flag = "--" + key.strip().replace("_", "-")
        value = value.strip()
        if flag == "--config":
            raise CLIError("--config: nested config keys are not allowed")
        action = parser._option_string_actions.get(flag)
        if action is None:
            raise CLIError(f"--config: unknown key '{key.strip()}'")
        if isinstance(action, argparse._StoreTrueAction):
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                out.append(flag)
            elif low not in ("0", "false", "no", "off"):
                raise CLIError(
                    f"--config: key '{key.strip()}' expects a boolean")
        else:
            out.extend([flag, value])
    return out


def _extract_config_path(argv: list) -> str:
    """Last --config value in raw argv, without full parsing."""
    path = None
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
            i += 2
            continue
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
        i += 1
    return path


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        work = argv
        if argv and argv[0] in SCHEMAS:
            cfg_path = _extract_config_path(argv[1:])
            if cfg_path:
                sub_parser = None
                for action in parser._actions:
                    if isinstance(action, argparse._SubParsersAction):
                        sub_parser = action.choices[argv[0]]
                injected = _config_flag_args(sub_parser, cfg_path)
                work = [argv[0]] + injected + argv[1:]
        try:
            args = parser.parse_args(work)
        except SystemExit as exc:
            return int(exc.code or 0)
        args.func(args)
        return 0
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EnumerationRefused as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
