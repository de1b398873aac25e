"""Finite-size interpolation between the spread channel and decoupled ones.

A one-parameter family of Gibbs measures connects the full random-spreading
posterior (t = 1) to K independent single-user Gaussian channels (t = 0)
while keeping the total effective SNR fixed: the channel strength ramps up
as B(t) = t B while a per-user Gaussian side channel of strength lambda(t)
ramps down.  A small sign-book perturbation of strength u makes the overlap
concentrate.  The t-derivative of the average free energy splits exactly
into two terms (T1 from the side channel, T2 from the spread channel); after
Gaussian integrations by parts and the Nishimori identities each collapses
to a function of E<1 - m1> plus a non-negative remainder R(t), and
integrating over t yields the sum rule that bounds the capacity by the
replica functional.

Everything here works at finite K via exact enumeration of the perturbed
measure; the identities that are exact at finite size are tested to Monte
Carlo accuracy and the asymptotic ones to their stated budgets.

Convention: the perturbed partition sum carries no 2^-K prior factor, so at
(t, u) = (1, 0) it differs from the channel free energy by exactly
log 2 - ||w||^2 / (2K) per instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_K_MAX,
    SpreadingDistribution,
    SystemParams,
    gibbs_enumerate,
    sample_spreading,
)
from .montecarlo import RunningStats, _ordered_map, resolve_system
from .replica import lncosh_integral
from .rng import stream_rng, substream_seed

__all__ = [
    "path_eval",
    "path_derivatives",
    "PerturbedInstance",
    "sample_perturbed",
    "PerturbedStats",
    "perturbed_free_energy",
    "TermBreakdown",
    "free_energy_terms",
    "NishimoriReport",
    "nishimori_check",
    "SumRuleReport",
    "sum_rule_check",
    "MagnetizationRow",
    "magnetization_concentration",
]

LN2 = math.log(2.0)

# Stream-address purposes for the perturbed system's randomness.
_S_STREAM, _N_STREAM, _W_STREAM, _H_STREAM = 1, 2, 4, 5


def path_eval(t: float, m: float, params: SystemParams):
    """Channel and side-channel SNRs ``(B_t, lambda_t)`` along the path.

    ``B(t) = t B`` ramps up; ``lambda(t)`` is fixed by requiring the total
    decoupled SNR ``B(t)/(1 + beta B(t)(1-m)) + lambda(t)`` to stay at its
    t = 0 value, so the identity holds exactly by construction.
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError("t must lie in [0, 1]")
    if not (0.0 <= m <= 1.0):
        raise ValueError("m must lie in [0, 1]")
    beta, B = params.beta, params.B
    lam_total = B / (1.0 + beta * B * (1.0 - m))
    B_t = t * B
    lam_t = lam_total - B_t / (1.0 + beta * B_t * (1.0 - m))
    return B_t, max(lam_t, 0.0)


def path_derivatives(t: float, m: float, params: SystemParams):
    """``(B'(t), lambda'(t))`` for the linear ramp ``B(t) = t B``."""
    beta, B = params.beta, params.B
    lam_prime = -B / (1.0 + beta * t * B * (1.0 - m)) ** 2
    return B, lam_prime


@dataclass(frozen=True)
class PerturbedInstance:
    """One draw of the interpolating system's quenched randomness.

    The transmitted word is all-ones (gauge-fixed); ``n`` is the chip noise,
    ``w`` the side-channel noise, ``h`` the perturbation field, ``u`` the
    perturbation strength.
    """

    S: np.ndarray
    n: np.ndarray
    w: np.ndarray
    h: np.ndarray
    u: float

    def __post_init__(self):
        N, K = self.S.shape
        if self.n.shape != (N,) or self.w.shape != (K,) or self.h.shape != (K,):
            raise ValueError("noise vector shapes must match the S matrix")
        if self.u < 0:
            raise ValueError("perturbation strength u cannot be negative")

    @property
    def K(self) -> int:
        return self.S.shape[1]

    @property
    def N(self) -> int:
        return self.S.shape[0]


def sample_perturbed(
    dist: SpreadingDistribution, K: int, N: int, u: float, seed: int, *path
) -> PerturbedInstance:
    """Draw a PerturbedInstance from counter-addressed streams."""
    S = sample_spreading(dist, K, N, substream_seed(seed, _S_STREAM, *path))
    n = stream_rng(seed, _N_STREAM, *path).standard_normal(N)
    w = stream_rng(seed, _W_STREAM, *path).standard_normal(K)
    h = stream_rng(seed, _H_STREAM, *path).standard_normal(K)
    return PerturbedInstance(S=S, n=n, w=w, h=h, u=u)


@dataclass
class PerturbedStats:
    """Exact observables of one perturbed measure enumeration."""

    f: float
    bit_means: np.ndarray
    m1: float
    q12: float
    energy_mean: Optional[float] = None
    noise_dot_res_mean: Optional[float] = None
    noise_dot_res_bit_means: Optional[np.ndarray] = None
    plus_count_pmf: Optional[np.ndarray] = None


def perturbed_free_energy(
    pi: PerturbedInstance,
    t: float,
    params: SystemParams,
    m: float,
    *,
    need_energy: bool = False,
    probe_noise: bool = False,
    need_plus_pmf: bool = False,
    k_max: int = DEFAULT_K_MAX,
) -> PerturbedStats:
    """Free energy and observables of the perturbed measure, exactly.

    The measure's exponent is
    ``-0.5 ||n + sqrt(B(t)/N) S z||^2 - 0.5 ||w + sqrt(lam(t)) z||^2 + h_u(x)``
    with ``z = 1 - x`` and the perturbation
    ``h_u(x) = sqrt(u) h.x + u sum(x) - sqrt(u) sum|h|``.  Expanding around
    the sign variables turns this into the standard Gaussian-kernel form
    handled by the exact enumerator; ``f`` is ``(1/K) log`` of the sum over
    sign vectors with no prior weight.
    """
    K, N = pi.K, pi.N
    B_t, lam_t = path_eval(t, m, params)
    u = pi.u
    sqlam, squ = math.sqrt(lam_t), math.sqrt(u)
    M = math.sqrt(B_t / N) * pi.S
    v = pi.n + M @ np.ones(K)
    field = sqlam * pi.w + lam_t + squ * pi.h + u
    c0 = (
        -0.5 * float(pi.w @ pi.w)
        - sqlam * float(pi.w.sum())
        - lam_t * K
        - squ * float(np.abs(pi.h).sum())
    )
    stats = gibbs_enumerate(
        M, v, field,
        need_energy=need_energy,
        probe=pi.n if probe_noise else None,
        need_plus_pmf=need_plus_pmf,
        k_max=k_max,
    )
    mu = stats.bit_means
    return PerturbedStats(
        f=(stats.log_sum + c0) / K,
        bit_means=mu,
        m1=float(mu.mean()),
        q12=float(mu @ mu) / K,
        energy_mean=stats.mean_energy,
        noise_dot_res_mean=stats.probe_mean,
        noise_dot_res_bit_means=stats.probe_bit_means,
        plus_count_pmf=stats.plus_count_pmf,
    )


def _t1_raw_sample(stats: PerturbedStats, w: np.ndarray, t: float, m: float,
                   params: SystemParams) -> float:
    """Per-sample side-channel derivative term.

    For ``lam(t) > 0`` this is the direct form
    ``-(lam'/(2 sqrt(lam) K)) <w.z> - (lam'/(2K)) <z.z>``; at ``lam(t) = 0``
    (the t = 1 endpoint) the ``w`` piece is replaced by its Gaussian
    integration-by-parts image, giving ``-(lam'/2)(1 - 2 m1 + q12)``.
    """
    _, lam_prime = path_derivatives(t, m, params)
    _, lam_t = path_eval(t, m, params)
    K = stats.bit_means.size
    z_mean = 1.0 - stats.bit_means
    if lam_t > 0.0:
        w_dot_z = float(w @ z_mean)
        zz = 2.0 * K * (1.0 - stats.m1)
        return -lam_prime / (2.0 * math.sqrt(lam_t) * K) * w_dot_z \
            - lam_prime / (2.0 * K) * zz
    return -0.5 * lam_prime * (1.0 - 2.0 * stats.m1 + stats.q12)


def _t2_raw_sample(stats: PerturbedStats, pi: PerturbedInstance, t: float,
                   params: SystemParams) -> float:
    """Per-sample spread-channel derivative term.

    For ``t > 0`` the linear ramp gives ``B'(t)/B(t) = 1/t`` and the term
    is ``-(1/(2 t K)) (2<E1> - <n.(v - M x)>)`` with
    ``E1 = 0.5 ||n + sqrt(B(t)/N) S z||^2``.  At ``t = 0`` the sample path
    has a sqrt(t) cusp and only the disorder average of the derivative
    exists; expanding the Gibbs measure to first order in the coupling
    yields the unbiased estimator
    ``(B'/(2KN)) [sum_k c_k^2 var(z_k) - ||S<z>||^2 - sum_k G_kk var(z_k)]``
    with ``c = S^T n``, ``G = S^T S`` and ``var(z_k) = 1 - <x_k>^2``,
    which uses the factorization of the uncoupled measure.
    """
    K, N = pi.K, pi.N
    if t > 0.0:
        return -(2.0 * stats.energy_mean - stats.noise_dot_res_mean) / (2.0 * t * K)
    B_prime = params.B
    mu = stats.bit_means
    var_z = 1.0 - mu * mu
    c = pi.S.T @ pi.n
    s_zmean = pi.S @ (1.0 - mu)
    g_diag = np.einsum("ij,ij->j", pi.S, pi.S)
    bracket = float(c * c @ var_z) - float(s_zmean @ s_zmean) \
        - float(g_diag @ var_z)
    return B_prime * bracket / (2.0 * K * N)


@dataclass(frozen=True)
class TermBreakdown:
    """Monte Carlo decomposition of d/dt E[f] at one (t, u) point."""

    t: float
    u: float
    n_samples: int
    f_mean: float
    f_se: float
    dfdt_fd: float
    dfdt_se: float
    T1_raw: float
    T1_raw_se: float
    T2_raw: float
    T2_raw_se: float
    T1_reduced: float
    T1_reduced_se: float
    T2_reduced: float
    T2_reduced_se: float
    R: float
    R_se: float
    m1_mean: float
    m1_se: float
    q12_mean: float
    q12_se: float
    Znorm: float
    Znorm_se: float


def _reduced_terms(m1_mean: float, m1_se: float, t: float, m: float,
                   params: SystemParams):
    """Eq.-style closed forms of T1, T2 and the remainder from E<m1>.

    Standard errors propagate linearly (delta method) from the error of
    the measured mean magnetization.
    """
    beta = params.beta
    B_t, _ = path_eval(t, m, params)
    B_prime, _ = path_derivatives(t, m, params)
    one_minus = 1.0 - m1_mean

    denom1 = (1.0 + beta * (1.0 - m) * B_t) ** 2
    t1 = B_prime / (2.0 * denom1) * one_minus
    t1_se = abs(B_prime / (2.0 * denom1)) * m1_se

    denom2 = 1.0 + beta * B_t * one_minus
    t2 = -B_prime * one_minus / (2.0 * denom2)
    dt2 = -B_prime * (-1.0 / (2.0 * denom2)
                      + one_minus * beta * B_t / (2.0 * denom2 ** 2))
    t2_se = abs(dt2) * m1_se

    gap = m1_mean - m
    r_denom = 2.0 * denom1 * denom2
    r = beta * B_prime * B_t * gap * gap / r_denom
    dr = beta * B_prime * B_t * (
        2.0 * gap / r_denom
        + gap * gap * beta * B_t / (2.0 * denom1 * denom2 ** 2)
    )
    r_se = abs(dr) * m1_se
    return t1, t1_se, t2, t2_se, r, r_se


def free_energy_terms(
    t: float,
    u: float,
    m: float,
    params: SystemParams,
    n_samples: int,
    seed: int,
    *,
    dist: Optional[SpreadingDistribution] = None,
    delta: float = 1e-3,
    threads: int = 1,
    k_max: int = DEFAULT_K_MAX,
) -> TermBreakdown:
    """Estimate every piece of the free-energy t-derivative at one point.

    The finite difference uses common random numbers at the stencil points,
    so per-sample ``dfdt - (T1_raw + T2_raw)`` is zero up to O(delta^2) and
    the identity test has essentially no Monte Carlo variance.  The clipped
    stencil keeps t within [0, 1] near the endpoints.
    """
    if params.K is None:
        raise ValueError("params must carry explicit K and N for enumeration")
    dist = dist or SpreadingDistribution.gaussian_unit()
    K, N = params.K, params.N
    lo, hi = max(0.0, t - delta), min(1.0, t + delta)

    def task(j: int):
        pi = sample_perturbed(dist, K, N, u, seed, j)
        stats = perturbed_free_energy(
            pi, t, params, m, need_energy=True, probe_noise=True, k_max=k_max)
        f_lo = perturbed_free_energy(pi, lo, params, m, k_max=k_max).f
        f_hi = perturbed_free_energy(pi, hi, params, m, k_max=k_max).f
        return (
            stats.f,
            (f_hi - f_lo) / (hi - lo),
            _t1_raw_sample(stats, pi.w, t, m, params),
            _t2_raw_sample(stats, pi, t, params),
            stats.m1,
            stats.q12,
            2.0 * stats.energy_mean / N,
        )

    rows = _ordered_map(task, range(n_samples), threads)
    cols = [RunningStats.from_values(col) for col in zip(*rows)]
    f_s, dfdt_s, t1_s, t2_s, m1_s, q12_s, zn_s = cols
    t1_red, t1_red_se, t2_red, t2_red_se, r, r_se = _reduced_terms(
        m1_s.mean, m1_s.se, t, m, params)
    return TermBreakdown(
        t=t, u=u, n_samples=n_samples,
        f_mean=f_s.mean, f_se=f_s.se,
        dfdt_fd=dfdt_s.mean, dfdt_se=dfdt_s.se,
        T1_raw=t1_s.mean, T1_raw_se=t1_s.se,
        T2_raw=t2_s.mean, T2_raw_se=t2_s.se,
        T1_reduced=t1_red, T1_reduced_se=t1_red_se,
        T2_reduced=t2_red, T2_reduced_se=t2_red_se,
        R=r, R_se=r_se,
        m1_mean=m1_s.mean, m1_se=m1_s.se,
        q12_mean=q12_s.mean, q12_se=q12_s.se,
        Znorm=zn_s.mean, Znorm_se=zn_s.se,
    )


@dataclass(frozen=True)
class NishimoriReport:
    """Measured residuals of the exact gauge-symmetry identities."""

    t: float
    u: float
    n_samples: int
    res_mq: float
    res_mq_se: float
    res_X11: float
    res_X11_se: float
    res_X12: float
    res_X12_se: float


def nishimori_check(
    t: float,
    u: float,
    m: float,
    params: SystemParams,
    n_samples: int,
    seed: int,
    *,
    dist: Optional[SpreadingDistribution] = None,
    threads: int = 1,
    k_max: int = DEFAULT_K_MAX,
) -> NishimoriReport:
    """Residuals of the three Nishimori identities at one (t, u) point.

    ``res_mq`` estimates ``E<m1> - E<q12>`` (overlap identity); ``res_X11``
    estimates ``(1/N) E<||Z||^2> - 1`` for the channel residual
    ``Z = n + sqrt(B(t)/N) S z``; ``res_X12`` estimates the two-replica
    identity, per user: ``(1/K) E[sum_k (<z_k> <z_k (n.Z)> - <z_k (n.Z)>)]``
    where the replica product factorizes because replicas are independent
    given the disorder.  All three vanish in expectation at any finite size.
    """
    if params.K is None:
        raise ValueError("params must carry explicit K and N for enumeration")
    dist = dist or SpreadingDistribution.gaussian_unit()
    K, N = params.K, params.N

    def task(j: int):
        pi = sample_perturbed(dist, K, N, u, seed, j)
        stats = perturbed_free_energy(
            pi, t, params, m, need_energy=True, probe_noise=True, k_max=k_max)
        z_mean = 1.0 - stats.bit_means
        # <z_k (n.Z)> = <n.Z> - <x_k (n.Z)>, from the probe's bit products.
        z_probe = stats.noise_dot_res_mean - stats.noise_dot_res_bit_means
        lhs = float(z_mean @ z_probe)
        rhs = float(z_probe.sum())
        return (
            stats.m1 - stats.q12,
            2.0 * stats.energy_mean / N - 1.0,
            (lhs - rhs) / K,
        )

    rows = _ordered_map(task, range(n_samples), threads)
    mq, x11, x12 = [RunningStats.from_values(col) for col in zip(*rows)]
    return NishimoriReport(
        t=t, u=u, n_samples=n_samples,
        res_mq=mq.mean, res_mq_se=mq.se,
        res_X11=x11.mean, res_X11_se=x11.se,
        res_X12=x12.mean, res_X12_se=x12.se,
    )


@dataclass(frozen=True)
class SumRuleReport:
    """One evaluation of the interpolation sum rule at fixed (m, u)."""

    m: float
    u: float
    K: int
    N: int
    n_samples: int
    lhs: float
    lhs_se: float
    rhs: float
    rhs_closed: float
    r_integral: float
    r_integral_se: float
    residual: float
    budget: float
    t_grid: tuple
    r_values: tuple
    r_ses: tuple


def _r_profile(
    m: float,
    u: float,
    params: SystemParams,
    n_samples: int,
    seed: int,
    n_t: int,
    dist: SpreadingDistribution,
    threads: int,
    k_max: int,
):
    """Remainder R(t) on a uniform t grid from measured magnetizations.

    R(0) = 0 identically (the channel is off), so only interior and final
    grid points are sampled.
    """
    K, N = params.K, params.N
    ts = np.linspace(0.0, 1.0, n_t)
    r_vals, r_ses = [0.0], [0.0]
    for idx in range(1, n_t):
        t = float(ts[idx])

        def task(j: int, t=t, idx=idx):
            pi = sample_perturbed(dist, K, N, u, seed, idx, j)
            return perturbed_free_energy(pi, t, params, m, k_max=k_max).m1

        m1_stats = RunningStats.from_values(
            _ordered_map(task, range(n_samples), threads))
        _, _, _, _, r, r_se = _reduced_terms(m1_stats.mean, m1_stats.se, t, m, params)
        r_vals.append(r)
        r_ses.append(r_se)
    return ts, np.array(r_vals), np.array(r_ses)


def sum_rule_check(
    m: float,
    params: SystemParams,
    n_samples: int,
    u: float,
    seed: int,
    *,
    n_t: int = 21,
    refine: bool = False,
    dist: Optional[SpreadingDistribution] = None,
    threads: int = 1,
    k_max: int = DEFAULT_K_MAX,
) -> SumRuleReport:
    """Verify the free-energy sum rule at finite size.

    Left side: ``1/2 + E[f_{1,u}]`` by direct enumeration at t = 1.  Right
    side: the closed decoupled-channel terms at the chosen overlap ``m``
    plus the trapezoid integral of the measured remainder R(t).  The
    residual should vanish within the reported budget, which combines three
    standard errors with the O(sqrt u) perturbation allowance
    ``2 sqrt(2/pi) sqrt(u) + u`` (mean absolute perturbation energy).

    The underlying vanishing-perturbation statement holds for almost every
    u > 0; sampling finitely many u cannot rule out exceptional values, so
    callers should extrapolate across a pair of u values (halving u and
    fitting a + b*sqrt(u)) rather than trust any single one.
    """
    if params.K is None:
        raise ValueError("params must carry explicit K and N for enumeration")
    dist = dist or SpreadingDistribution.gaussian_unit()
    K, N = params.K, params.N
    if refine:
        n_t = 2 * n_t - 1

    def lhs_task(j: int):
        pi = sample_perturbed(dist, K, N, u, seed, 0, j)
        return perturbed_free_energy(pi, 1.0, params, m, k_max=k_max).f

    lhs_stats = RunningStats.from_values(
        _ordered_map(lhs_task, range(n_samples), threads))
    lhs = 0.5 + lhs_stats.mean

    beta, B = params.beta, params.B
    lam = B / (1.0 + beta * B * (1.0 - m))
    closed = (
        lncosh_integral(lam) + LN2
        - 1.0 / (2.0 * beta)
        - math.log1p(beta * B * (1.0 - m)) / (2.0 * beta)
        - 0.5 * lam * (1.0 + m)
    )
    ts, r_vals, r_ses = _r_profile(
        m, u, params, n_samples, seed, n_t, dist, threads, k_max)
    r_integral = float(np.trapezoid(r_vals, ts))
    step = ts[1] - ts[0]
    trapz_w = np.full(n_t, step)
    trapz_w[0] = trapz_w[-1] = step / 2.0
    r_integral_se = float(np.sqrt(np.sum((trapz_w * r_ses) ** 2)))

    rhs = closed + r_integral
    residual = lhs - rhs
    combined_se = math.hypot(lhs_stats.se, r_integral_se)
    budget = 3.0 * combined_se + 2.0 * math.sqrt(2.0 / math.pi) * math.sqrt(u) + u
    return SumRuleReport(
        m=m, u=u, K=K, N=N, n_samples=n_samples,
        lhs=lhs, lhs_se=lhs_stats.se,
        rhs=rhs, rhs_closed=closed,
        r_integral=r_integral, r_integral_se=r_integral_se,
        residual=residual, budget=budget,
        t_grid=tuple(float(t) for t in ts),
        r_values=tuple(float(r) for r in r_vals),
        r_ses=tuple(float(s) for s in r_ses),
    )


@dataclass(frozen=True)
class MagnetizationRow:
    K: int
    N: int
    integrated_deviation: float
    integrated_deviation_se: float


def magnetization_concentration(
    u: float,
    m: float,
    params: SystemParams,
    K_list: Sequence[int],
    n_samples: int,
    seed: int,
    *,
    n_t: int = 11,
    dist: Optional[SpreadingDistribution] = None,
    threads: int = 1,
    k_max: int = DEFAULT_K_MAX,
) -> list:
    """t-integrated mean absolute fluctuation of the magnetization per K.

    Estimates ``integral dt E<|m1 - E<m1>|>`` with the centering constant
    taken as the measured disorder mean at each t (plug-in).  The thermal
    part uses the exact posterior distribution of m1, read off the
    enumerated distribution of the number of +1 signs.  Refuses u = 0: the
    concentration statement needs the perturbation switched on.
    """
    if u <= 0.0:
        raise ValueError(
            "magnetization concentration requires u > 0; the statement "
            "fails on a measure-zero set that includes the unperturbed "
            "system"
        )
    dist = dist or SpreadingDistribution.gaussian_unit()
    rows = []
    for K in K_list:
        sys_params = resolve_system(K, params.beta, params.sigma2)
        N = sys_params.N
        ts = np.linspace(0.0, 1.0, n_t)
        dev_means = np.empty(n_t)
        dev_ses = np.empty(n_t)
        levels = (2.0 * np.arange(K + 1) - K) / K  # possible m1 values
        for idx, t in enumerate(ts):

            def task(j: int, t=float(t), idx=idx):
                pi = sample_perturbed(dist, K, N, u, seed, K, idx, j)
                stats = perturbed_free_energy(
                    pi, t, sys_params, m, need_plus_pmf=True, k_max=k_max)
                return stats.plus_count_pmf

            pmfs = _ordered_map(task, range(n_samples), threads)
            center = float(np.mean([pmf @ levels for pmf in pmfs]))
            devs = [float(pmf @ np.abs(levels - center)) for pmf in pmfs]
            stats_t = RunningStats.from_values(devs)
            dev_means[idx] = stats_t.mean
            dev_ses[idx] = stats_t.se
        integrated = float(np.trapezoid(dev_means, ts))
        step = ts[1] - ts[0]
        w = np.full(n_t, step)
        w[0] = w[-1] = step / 2.0
        rows.append(
            MagnetizationRow(
                K=K, N=N,
                integrated_deviation=integrated,
                integrated_deviation_se=float(np.sqrt(np.sum((w * dev_ses) ** 2))),
            )
        )
    return rows
