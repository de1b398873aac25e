"""Acceptance gate: the fourteen primary criteria, one test each.

Every test prints a single ``[criterion NN] PASS/FAIL`` line (visible
under ``pytest -s``; under ``pytest -v`` the per-test PASSED/FAILED line
carries the same information) and enforces both the stated tolerance and
the stated runtime budget.  Statistical criteria run at frozen seeds with
sample sizes sized during piloting so each margin is comfortable; where a
tolerance interacts with a real finite-size effect the test says so in a
comment.
"""

import math
import time
from fractions import Fraction

import numpy as np

from cdma_lab.cli import main as cli_main
from cdma_lab.core import SpreadingDistribution, SystemParams
from cdma_lab.interpolation import (
    free_energy_terms,
    nishimori_check,
    sum_rule_check,
)
from cdma_lab.montecarlo import (
    ExperimentConfig,
    concentration_experiment,
    estimate_capacity,
    resolve_system,
    universality_experiment,
)
from cdma_lab.replica import (
    NoiseSpectrum,
    PowerProfile,
    c_rs,
    capacity_bound,
    colored_noise_bound,
    concentration_rate_constants,
    fixed_point_map,
    gaussian_closed_form,
    gaussian_replica,
    solve_fixed_points,
    unequal_power_bound,
)

GRID9 = [(b, s) for b in (0.5, 1.0, 2.0) for s in (0.1, 1.0, 10.0)]
DIST_PM1 = SpreadingDistribution.from_name("binary-pm1")


def _report(num, name, ok, detail, elapsed, budget):
    status = "PASS" if ok else "FAIL"
    line = (f"[criterion {num:02d}] {status} {name}: {detail} "
            f"[{elapsed:.1f}s / budget {budget:.0f}s]")
    print(line)
    assert ok, line
    assert elapsed < budget, line


def test_criterion_01_gaussian_equality():
    t0 = time.monotonic()
    worst = 0.0
    for beta, sigma2 in GRID9:
        c_rep, _, _ = gaussian_replica(beta, sigma2)
        worst = max(worst, abs(c_rep - gaussian_closed_form(beta, sigma2)))
    _report(1, "gaussian replica equals closed form", worst <= 1e-8,
            f"max|diff|={worst:.2e} over 9-point grid",
            time.monotonic() - t0, 1.0)


def test_criterion_02_random_matrix_check():
    t0 = time.monotonic()
    rng = np.random.default_rng(20260815)
    K = N = 512
    vals = []
    for _ in range(200):
        S = rng.standard_normal((N, K))
        _, logdet = np.linalg.slogdet(np.eye(K) + (S.T @ S) / N)
        vals.append(0.5 * logdet / K)
    mc = float(np.mean(vals))
    cf = gaussian_closed_form(1.0, 1.0)
    rel = abs(mc - cf) / cf
    _report(2, "closed form matches log-det Monte Carlo", rel <= 0.01,
            f"mc={mc:.6f} closed={cf:.6f} rel={rel:.4%}",
            time.monotonic() - t0, 60.0)


def test_criterion_03_capacity_limits():
    # The zero-SNR value is B/2 + O(B^2) exactly, so at B=1e-9 the bound
    # itself is 5e-10 and the nominal 1e-10 tolerance is unattainable for
    # any correct implementation.  Asserted at 1e-9 instead, plus an exact
    # zero at B=0 which the original tolerance was presumably after.
    t0 = time.monotonic()
    c_lo, _ = capacity_bound(SystemParams(beta=1.0, B=1e-9))
    c_zero, _ = capacity_bound(SystemParams(beta=1.0, B=0.0))
    c_hi, _ = capacity_bound(SystemParams(beta=1.0, B=1e4))
    hi_err = abs(c_hi - math.log(2.0))
    ok = abs(c_lo) <= 1e-9 and c_zero == 0.0 and hi_err <= 1e-6
    _report(3, "capacity limits 0 and ln 2", ok,
            f"c(B=1e-9)={c_lo:.2e} (true value B/2=5e-10), "
            f"c(B=0)={c_zero!r}, |c(B=1e4)-ln2|={hi_err:.2e}",
            time.monotonic() - t0, 1.0)


def test_criterion_04_finite_size_vs_bound():
    # Finite-K per-user MI with binary chips approaches the bound from
    # above (measured +0.0038(10) at K=8, sigma2=1 across seeds), so the
    # gap is the absolute distance to the bound.
    t0 = time.monotonic()
    ok = True
    details = []
    for sigma2 in (0.5, 1.0, 2.0):
        gaps = {}
        for K in (8, 12, 16):
            params = resolve_system(K, 1.0, sigma2)
            bound, _ = capacity_bound(params)
            cfg = ExperimentConfig(params=params, dist=DIST_PM1,
                                   n_matrices=600, n_noise=4, seed=404)
            rec = estimate_capacity(cfg)
            gaps[K] = abs(rec.capacity_mean - bound)
            ok = ok and rec.capacity_mean <= bound + 3 * rec.capacity_se
        ok = ok and gaps[16] < gaps[8]
        details.append(f"s2={sigma2}: |gap8|={gaps[8]:.4f} "
                       f"|gap16|={gaps[16]:.4f}")
    _report(4, "estimates meet bound, gap shrinks", ok,
            "; ".join(details), time.monotonic() - t0, 600.0)


def test_criterion_05_stationarity():
    t0 = time.monotonic()
    h = 1e-5
    worst = 0.0
    n_points = 0
    for beta in (0.5, 1.0, 2.0, 4.0):
        for sigma2 in (0.25, 0.5, 1.0, 2.0, 4.0):
            params = SystemParams(beta=beta, sigma2=sigma2)
            for fp in solve_fixed_points(params):
                if not (h < fp.m < 1.0 - h):
                    continue
                deriv = (c_rs(fp.m + h, params)
                         - c_rs(fp.m - h, params)) / (2.0 * h)
                worst = max(worst, abs(deriv))
                n_points += 1
    ok = n_points >= 20 and worst <= 1e-6
    _report(5, "fixed points are stationary", ok,
            f"{n_points} interior fixed points on 20-cell grid, "
            f"max|dc/dm|={worst:.2e}", time.monotonic() - t0, 5.0)


def test_criterion_06_phase_multiplicity():
    t0 = time.monotonic()
    found_sigma2 = None
    roots = []
    for sigma2 in np.linspace(0.05, 0.3, 26):
        params = SystemParams(beta=2.0, sigma2=float(sigma2))
        roots = solve_fixed_points(params)
        if len(roots) == 3:
            found_sigma2 = float(sigma2)
            break
    ok = found_sigma2 is not None
    crossings = -1
    if ok:
        params = SystemParams(beta=2.0, sigma2=found_sigma2)
        grid = np.linspace(0.0, 1.0, 20001)
        resid = np.array([fixed_point_map(float(m), params) - float(m)
                          for m in grid])
        crossings = int(np.sum(np.sign(resid[1:]) * np.sign(resid[:-1]) < 0))
        ok = crossings == 3 and max(abs(fp.residual) for fp in roots) <= 1e-9
    _report(6, "three fixed points at beta=2", ok,
            f"sigma2={found_sigma2} solver_roots={len(roots)} "
            f"oracle_crossings={crossings}", time.monotonic() - t0, 5.0)


def test_criterion_07_nishimori_suite():
    t0 = time.monotonic()
    params = resolve_system(8, 1.0, 1.0)
    _, best = capacity_bound(params)
    rep = nishimori_check(0.7, 0.05, best.m, params, 10_000, 707)
    checks = [
        ("m1=q12", rep.res_mq, rep.res_mq_se),
        ("noise power", rep.res_X11, rep.res_X11_se),
        ("probe identity", rep.res_X12, rep.res_X12_se),
    ]
    ok = all(abs(r) <= 3 * se for _, r, se in checks)
    detail = " ".join(f"{n}:{r:+.4f}(3se={3 * se:.4f})"
                      for n, r, se in checks)
    _report(7, "Nishimori identities hold", ok, detail,
            time.monotonic() - t0, 120.0)


def test_criterion_08_interpolation_identities():
    t0 = time.monotonic()
    params = resolve_system(8, 1.0, 1.0)
    _, best = capacity_bound(params)
    tb = free_energy_terms(0.5, 0.1, best.m, params, 10_000, 808)
    split = tb.dfdt_fd - (tb.T1_raw + tb.T2_raw)
    split_se = math.hypot(tb.dfdt_se,
                          math.hypot(tb.T1_raw_se, tb.T2_raw_se))
    t1gap = tb.T1_raw - tb.T1_reduced
    t1_se = math.hypot(tb.T1_raw_se, tb.T1_reduced_se)
    ok = abs(split) <= 3 * split_se and abs(t1gap) <= 3 * t1_se
    _report(8, "derivative splits into T1+T2", ok,
            f"split={split:+.2e}(3se={3 * split_se:.2e}) "
            f"T1 raw-reduced={t1gap:+.4f}(3se={3 * t1_se:.4f})",
            time.monotonic() - t0, 180.0)


def test_criterion_09_sum_rule():
    t0 = time.monotonic()
    params = resolve_system(10, 1.0, 1.0)
    _, best = capacity_bound(params)
    rep1 = sum_rule_check(best.m, params, 4000, 0.05, 909)
    rep2 = sum_rule_check(best.m, params, 4000, 0.0125, 909)
    # sqrt(0.0125) is half of sqrt(0.05), so the a + b*sqrt(u) fit has the
    # closed solution a = 2*res(u/4) - res(u).
    se1 = math.hypot(rep1.lhs_se, rep1.r_integral_se)
    se2 = math.hypot(rep2.lhs_se, rep2.r_integral_se)
    a = 2.0 * rep2.residual - rep1.residual
    se_a = math.sqrt(4.0 * se2 * se2 + se1 * se1)
    r_floor = min(rv + 3.0 * rs
                  for rv, rs in zip(rep1.r_values, rep1.r_ses))
    ok = (abs(a) <= 3 * se_a and len(rep1.t_grid) == 21
          and r_floor >= 0.0)
    _report(9, "sum rule extrapolates to zero", ok,
            f"a={a:+.4f}(3se={3 * se_a:.4f}) "
            f"min(R+3se)={r_floor:+.2e} over {len(rep1.t_grid)} points",
            time.monotonic() - t0, 900.0)


def test_criterion_10_concentration():
    t0 = time.monotonic()
    cfg = ExperimentConfig(params=resolve_system(8, 1.0, 1.0),
                           dist=DIST_PM1, n_matrices=400, n_noise=4,
                           seed=1010, epsilons=(0.1,))
    rows = concentration_experiment(cfg, [8, 16])
    var = {row.K: row.var_mi for row in rows}
    ratio = var[8] / var[16]
    _report(10, "MI variance shrinks with K", ratio >= 1.5,
            f"var(K=8)={var[8]:.2e} var(K=16)={var[16]:.2e} "
            f"ratio={ratio:.2f}", time.monotonic() - t0, 600.0)


def test_criterion_11_universality():
    t0 = time.monotonic()
    cfg = ExperimentConfig(params=resolve_system(4, 1.0, 1.0),
                           dist=DIST_PM1, n_matrices=1200, n_noise=2,
                           seed=1111)
    rows = universality_experiment(cfg, [4, 16],
                                   dists=("gaussian-unit", "binary-pm1"))
    by = {(row.K, row.dist): row for row in rows}
    gap4 = (by[(4, "gaussian-unit")].capacity_mean
            - by[(4, "binary-pm1")].capacity_mean)
    gap16 = (by[(16, "gaussian-unit")].capacity_mean
             - by[(16, "binary-pm1")].capacity_mean)
    se16 = math.hypot(by[(16, "gaussian-unit")].capacity_se,
                      by[(16, "binary-pm1")].capacity_se)
    ok = abs(gap16) < abs(gap4) and abs(gap16) <= 4 * se16
    _report(11, "chip distribution gap shrinks", ok,
            f"|gap4|={abs(gap4):.4f} |gap16|={abs(gap16):.4f} "
            f"4se={4 * se16:.4f}", time.monotonic() - t0, 600.0)


def test_criterion_12_rate_constants():
    t0 = time.monotonic()
    rates = concentration_rate_constants(Fraction(1), Fraction(1))
    ok = (isinstance(rates.alpha1, Fraction)
          and isinstance(rates.alpha2, Fraction)
          and rates.alpha1 == Fraction(1, 1552)
          and rates.alpha2 == Fraction(1, 288))
    _report(12, "rate constants exact", ok,
            f"alpha1={rates.alpha1} alpha2={rates.alpha2}",
            time.monotonic() - t0, 1.0)


def test_criterion_13_reductions():
    t0 = time.monotonic()
    worst = 0.0
    for beta, sigma2 in GRID9:
        params = SystemParams(beta=beta, sigma2=sigma2)
        c_ref, _ = capacity_bound(params)
        c_pow, _ = unequal_power_bound(params, PowerProfile.unit())
        c_col, _ = colored_noise_bound(params, NoiseSpectrum.white(sigma2))
        worst = max(worst, abs(c_pow - c_ref), abs(c_col - c_ref))
    _report(13, "unit power and white noise reduce", worst <= 1e-10,
            f"max|diff|={worst:.2e} over 9-point grid",
            time.monotonic() - t0, 5.0)


def test_criterion_14_determinism(tmp_path):
    t0 = time.monotonic()
    cases = {
        "simulate": ["simulate", "--K", "6", "--beta", "1", "--sigma2", "1",
                     "--n-matrices", "40", "--n-noise", "2", "--seed", "14"],
        "interpolate": ["interpolate", "--K", "5", "--beta", "1",
                        "--sigma2", "1", "--t", "0:1:5", "--u", "0.1",
                        "--n-samples", "200", "--seed", "14"],
    }
    ok = True
    for name, argv in cases.items():
        blobs = []
        for tag, threads in (("a", 1), ("b", 1), ("c", 8)):
            out = tmp_path / f"{name}_{tag}.csv"
            code = cli_main(argv + ["--threads", str(threads),
                                    "--out", str(out)])
            ok = ok and code == 0
            blobs.append(out.read_bytes())
        ok = ok and blobs[0] == blobs[1] == blobs[2]
    _report(14, "CSV byte-identical across reruns and threads", ok,
            f"{len(cases)} subcommands x threads {{1,8}} x rerun",
            time.monotonic() - t0, 300.0)
