"""Replica-symmetric capacity formulas and their fixed-point structure.

The central object is the large-system functional

    c_rs(m) = (lam/2) (1 + m) - 1/(2 beta) log(lam sigma2)
              - Integral Dz log cosh(sqrt(lam) z + lam),

with ``lam = B / (1 + beta B (1 - m))``, whose minimum over m in [0, 1]
upper-bounds the per-user capacity of the binary-input random-spreading
channel and saturates both extreme-noise limits: it vanishes identically at
B = 0 and tends to log 2 as sigma2 -> 0.  The historical form of the
functional carries ``log 2 cosh`` instead of ``log cosh``; it differs by
exactly log 2, misses both limits, and is available via ``as_printed=True``.

Stationary points of c_rs solve the scalar fixed-point equation
``m = Integral Dz tanh(sqrt(lam) z + lam)``; coexistence of several roots
marks the phase-transition region of the load/noise plane.

Gaussian integrals use Gauss-Hermite quadrature rescaled to the standard
normal weight.  Everything here is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import SystemParams

__all__ = [
    "ASYMPTOTIC_LAM",
    "QuadratureRule",
    "gauss_hermite",
    "default_rule",
    "lncosh",
    "lncosh_integral",
    "tanh_integral",
    "effective_snr",
    "c_rs",
    "fixed_point_map",
    "FixedPoint",
    "solve_fixed_points",
    "capacity_bound",
    "PhaseCell",
    "phase_scan",
    "uniqueness_boundary",
    "gaussian_closed_form",
    "gaussian_replica",
    "PowerProfile",
    "unequal_power_bound",
    "NoiseSpectrum",
    "colored_noise_bound",
    "RateConstants",
    "concentration_rate_constants",
]

LN2 = math.log(2.0)
ASYMPTOTIC_LAM = 1e4
MAX_QUADRATURE_NODES = 500


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights integrating against the standard normal density."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise ValueError("nodes and weights must be matching 1-D arrays")


@lru_cache(maxsize=32)
def _gauss_hermite_cached(n: int):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        x, w = np.polynomial.hermite.hermgauss(n)
    if not (np.all(np.isfinite(w)) and np.all(w > 0)):
        raise ValueError(
            f"n={n} quadrature nodes refused: Hermite weights underflow at this "
            f"order (the largest reliable rule is around n=350)"
        )
    nodes = x * math.sqrt(2.0)
    weights = w / math.sqrt(math.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_hermite(n: int) -> QuadratureRule:
    """Gauss-Hermite rule with ``n`` nodes, rescaled to the N(0,1) weight.

    Orders past :data:`MAX_QUADRATURE_NODES` are refused outright; below
    that, computed weights are still checked for underflow (the double
    precision recurrence degrades somewhere around 380 nodes).
    """
    if n < 1:
        raise ValueError("need at least one quadrature node")
    if n > MAX_QUADRATURE_NODES:
        raise ValueError(
            f"n={n} quadrature nodes refused: Hermite weights underflow beyond "
            f"{MAX_QUADRATURE_NODES} nodes"
        )
    nodes, weights = _gauss_hermite_cached(int(n))
    return QuadratureRule(nodes=nodes, weights=weights)


DEFAULT_NODES = 61


def default_rule() -> QuadratureRule:
    return gauss_hermite(DEFAULT_NODES)


def lncosh(x: np.ndarray) -> np.ndarray:
    """log cosh(x), stable for arguments of any magnitude."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LN2


def _as_float_or_array(x, scalar_in):
    return float(x) if scalar_in else x


def lncosh_integral(lam, rule: Optional[QuadratureRule] = None):
    """``Integral Dz log cosh(sqrt(lam) z + lam)`` for ``lam >= 0``.

    Beyond ``ASYMPTOTIC_LAM`` the integral equals ``lam - log 2`` up to
    terms exponentially small in ``lam`` and is returned in closed form.
    """
    rule = rule or default_rule()
    scalar_in = np.ndim(lam) == 0
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam_arr < 0):
        raise ValueError("lam must be non-negative")
    arg = np.sqrt(lam_arr)[..., None] * rule.nodes + lam_arr[..., None]
    val = lncosh(arg) @ rule.weights
    out = np.where(lam_arr > ASYMPTOTIC_LAM, lam_arr - LN2, val)
    return _as_float_or_array(out[0] if scalar_in else out, scalar_in)


def tanh_integral(lam, rule: Optional[QuadratureRule] = None):
    """``Integral Dz tanh(sqrt(lam) z + lam)`` for ``lam >= 0``."""
    rule = rule or default_rule()
    scalar_in = np.ndim(lam) == 0
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam_arr < 0):
        raise ValueError("lam must be non-negative")
    arg = np.sqrt(lam_arr)[..., None] * rule.nodes + lam_arr[..., None]
    out = np.tanh(arg) @ rule.weights
    return _as_float_or_array(out[0] if scalar_in else out, scalar_in)


def effective_snr(m, params: SystemParams):
    """Effective single-user SNR ``lam = B / (1 + beta B (1 - m))``."""
    m_arr = np.asarray(m, dtype=float)
    return params.B / (1.0 + params.beta * params.B * (1.0 - m_arr))


def c_rs(m, params: SystemParams, rule: Optional[QuadratureRule] = None,
         *, as_printed: bool = False):
    """Replica-symmetric capacity functional at overlap ``m`` (nats).

    The ``log(lam sigma2)`` term is evaluated as ``-log1p(beta B (1 - m))``
    so the zero-SNR endpoint ``B = 0`` needs no special casing.  With
    ``as_printed=True`` the historical ``log 2 cosh`` variant is returned,
    which is smaller by exactly ``log 2``.
    """
    scalar_in = np.ndim(m) == 0
    m_arr = np.atleast_1d(np.asarray(m, dtype=float))
    if np.any((m_arr < 0) | (m_arr > 1)):
        raise ValueError("m must lie in [0, 1]")
    beta, B = params.beta, params.B
    lam = effective_snr(m_arr, params)
    out = (
        0.5 * lam * (1.0 + m_arr)
        + np.log1p(beta * B * (1.0 - m_arr)) / (2.0 * beta)
        - lncosh_integral(lam, rule)
    )
    if as_printed:
        out = out - LN2
    return _as_float_or_array(out[0] if scalar_in else out, scalar_in)


def fixed_point_map(m, params: SystemParams, rule: Optional[QuadratureRule] = None):
    """One application of the self-consistency map ``m -> E tanh(...)``."""
    scalar_in = np.ndim(m) == 0
    m_arr = np.atleast_1d(np.asarray(m, dtype=float))
    if np.any((m_arr < 0) | (m_arr > 1)):
        raise ValueError("m must lie in [0, 1]")
    out = tanh_integral(effective_snr(m_arr, params), rule)
    return _as_float_or_array(out[0] if scalar_in else out, scalar_in)


@dataclass(frozen=True)
class FixedPoint:
    """A candidate overlap: location, SNR, functional value, stability."""

    m: float
    lam: float
    c_rs: float
    stable: bool
    residual: float


def _map_derivative(m: float, params: SystemParams, rule: QuadratureRule) -> float:
    h = 1e-6
    lo, hi = max(0.0, m - h), min(1.0, m + h)
    if hi <= lo:
        return 0.0
    return (fixed_point_map(hi, params, rule) - fixed_point_map(lo, params, rule)) / (hi - lo)


def _make_candidate(m: float, params: SystemParams, rule: QuadratureRule) -> FixedPoint:
    lam = float(effective_snr(m, params))
    return FixedPoint(
        m=float(m),
        lam=lam,
        c_rs=float(c_rs(m, params, rule)),
        stable=abs(_map_derivative(m, params, rule)) < 1.0,
        residual=abs(float(fixed_point_map(m, params, rule)) - m),
    )


def solve_fixed_points(
    params: SystemParams,
    rule: Optional[QuadratureRule] = None,
    *,
    grid_size: int = 512,
    tol: float = 1e-12,
) -> list:
    """All roots of ``fixed_point_map(m) = m`` on [0, 1].

    Brackets sign changes of the residual on a uniform grid and refines each
    bracket by bisection until the residual drops below ``tol``.  Bisection
    rather than accelerated iteration is used so that unstable middle roots
    in the coexistence region are found as reliably as the stable ones.
    At least one root always exists because the residual is non-negative at
    m = 0 and negative at m = 1.
    """
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    rule = rule or default_rule()
    ms = np.linspace(0.0, 1.0, grid_size + 1)
    res = fixed_point_map(ms, params, rule) - ms

    def g(m: float) -> float:
        return float(fixed_point_map(m, params, rule)) - m

    roots = []
    for i in range(grid_size + 1):
        if res[i] == 0.0:
            roots.append(ms[i])
        elif i < grid_size and res[i] * res[i + 1] < 0.0:
            a, b, ga = ms[i], ms[i + 1], res[i]
            mid = 0.5 * (a + b)
            for _ in range(200):
                mid = 0.5 * (a + b)
                gm = g(mid)
                if abs(gm) <= tol or (b - a) < 4e-16:
                    break
                if (gm > 0) == (ga > 0):
                    a, ga = mid, gm
                else:
                    b = mid
            roots.append(mid)
    deduped = []
    for r in sorted(roots):
        if not deduped or r - deduped[-1] > 1e-9:
            deduped.append(r)
    return [_make_candidate(r, params, rule) for r in deduped]


def capacity_bound(
    params: SystemParams,
    rule: Optional[QuadratureRule] = None,
    *,
    grid_size: int = 512,
):
    """Minimum of ``c_rs`` over all fixed points and the interval endpoints.

    Returns ``(c_upper, argmin)`` where ``argmin`` is a :class:`FixedPoint`
    record (endpoints are reported in the same shape even when they are not
    roots of the map).  Ties resolve to the smallest overlap.
    """
    rule = rule or default_rule()
    candidates = solve_fixed_points(params, rule, grid_size=grid_size)
    for endpoint in (0.0, 1.0):
        if not any(abs(fp.m - endpoint) <= 1e-12 for fp in candidates):
            candidates.append(_make_candidate(endpoint, params, rule))
    best = min(candidates, key=lambda fp: (fp.c_rs, fp.m))
    return best.c_rs, best


@dataclass(frozen=True)
class PhaseCell:
    beta: float
    sigma2: float
    m_star: float
    lambda_star: float
    c_rs: float
    n_fixed_points: int


def phase_scan(
    betas: Sequence[float],
    sigma2s: Sequence[float],
    rule: Optional[QuadratureRule] = None,
    *,
    grid_size: int = 512,
) -> list:
    """Fixed-point census over a (beta, sigma2) grid, row-major in beta."""
    rule = rule or default_rule()
    cells = []
    for beta in betas:
        for sigma2 in sigma2s:
            params = SystemParams(beta=float(beta), sigma2=float(sigma2))
            fps = solve_fixed_points(params, rule, grid_size=grid_size)
            c_upper, best = capacity_bound(params, rule, grid_size=grid_size)
            cells.append(
                PhaseCell(
                    beta=float(beta),
                    sigma2=float(sigma2),
                    m_star=best.m,
                    lambda_star=best.lam,
                    c_rs=c_upper,
                    n_fixed_points=len(fps),
                )
            )
    return cells


def uniqueness_boundary(cells: Sequence[PhaseCell]) -> list:
    """Coexistence windows per load: (beta, sigma2_low, sigma2_high) spans.

    For each beta the returned span brackets the scanned noise levels whose
    cells carry more than one fixed point; loads with a unique root
    everywhere contribute nothing.
    """
    spans = []
    betas = sorted({c.beta for c in cells})
    for beta in betas:
        multi = sorted(c.sigma2 for c in cells if c.beta == beta and c.n_fixed_points > 1)
        if multi:
            spans.append((beta, multi[0], multi[-1]))
    return spans


def gaussian_closed_form(beta: float, sigma2: float) -> float:
    """Per-user Gaussian-input capacity of the random-spreading channel (nats).

    Closed form in the load ``beta`` and SNR ``1/sigma2``; exact in the
    large-system limit and independently checkable against the average
    log-determinant of ``I + SNR * S S^T / N``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not (sigma2 > 0):
        raise ValueError("sigma2 must be positive")
    if math.isinf(sigma2):
        return 0.0
    x = 1.0 / sigma2
    sz = math.sqrt(beta)
    q = (math.sqrt(x * (1.0 + sz) ** 2 + 1.0) - math.sqrt(x * (1.0 - sz) ** 2 + 1.0)) ** 2
    return (
        0.5 * math.log1p(x - q / 4.0)
        + math.log1p(x * beta - q / 4.0) / (2.0 * beta)
        - q / (8.0 * beta * x)
    )


def gaussian_replica(beta: float, sigma2: float, *, tol: float = 1e-13,
                     max_iter: int = 10000):
    """Gaussian-input replica functional at its saddle point.

    Solves ``m = lam / (1 + lam)`` with ``lam = B / (1 + beta B (1 - m))``
    by damped iteration, then evaluates the functional.  Returns
    ``(c, m_star, lam_star)`` in nats.
    """
    params = SystemParams(beta=beta, sigma2=sigma2)
    B = params.B
    m = 0.5
    for _ in range(max_iter):
        lam = float(effective_snr(m, params))
        target = lam / (1.0 + lam)
        if abs(target - m) <= tol:
            m = target
            break
        m += 0.5 * (target - m)
    lam = float(effective_snr(m, params))
    c = (
        0.5 * math.log1p(lam)
        + math.log1p(beta * B * (1.0 - m)) / (2.0 * beta)
        - 0.5 * lam * (1.0 - m)
    )
    return c, m, lam


@dataclass(frozen=True)
class PowerProfile:
    """Discrete distribution of per-user transmit powers.

    Profiles are conventionally normalized to unit mean power; the all-zero
    profile (silent users) is the one admitted degenerate exception.
    """

    levels: tuple

    def __post_init__(self):
        if not self.levels:
            raise ValueError("profile needs at least one level")
        total = 0.0
        for power, prob in self.levels:
            if power < 0:
                raise ValueError("negative power level rejected")
            if prob < 0:
                raise ValueError("negative probability rejected")
            total += prob
        if abs(total - 1.0) > 1e-12:
            raise ValueError("level probabilities must sum to 1")

    @classmethod
    def from_pairs(cls, pairs) -> "PowerProfile":
        return cls(tuple((float(p), float(q)) for p, q in pairs))

    @classmethod
    def unit(cls) -> "PowerProfile":
        return cls(((1.0, 1.0),))

    @property
    def mean_power(self) -> float:
        return float(sum(p * q for p, q in self.levels))

    @property
    def is_normalized(self) -> bool:
        return abs(self.mean_power - 1.0) <= 1e-12


def _minimize_on_grid(f: Callable, lo: float, hi: float, grid_size: int,
                      tol: float = 1e-10):
    """Global scalar minimization: coarse grid, then golden-section refine.

    Every local minimum bracket found on the grid is refined so that
    coexisting minima in the phase-transition region cannot be missed.
    Returns ``(f_min, argmin)`` with ties resolved to the smaller argument.
    """
    if hi <= lo:
        return float(f(lo)), lo
    xs = np.linspace(lo, hi, grid_size + 1)
    fs = np.array([f(x) for x in xs])
    brackets = []
    for i in range(len(xs)):
        left = fs[i - 1] if i > 0 else math.inf
        right = fs[i + 1] if i < len(xs) - 1 else math.inf
        if fs[i] <= left and fs[i] <= right:
            brackets.append((xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]))
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    best = (math.inf, lo)
    for a, b in brackets:
        c, d = b - phi * (b - a), a + phi * (b - a)
        fc, fd = f(c), f(d)
        while b - a > tol:
            if fc <= fd:
                b, d, fd = d, c, fc
                c = b - phi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + phi * (b - a)
                fd = f(d)
        x = 0.5 * (a + b)
        fx = float(f(x))
        if (fx, x) < best:
            best = (fx, x)
    return best


def unequal_power_bound(
    params: SystemParams,
    profile: PowerProfile,
    rule: Optional[QuadratureRule] = None,
    *,
    grid_size: int = 512,
):
    """Capacity upper bound for users transmitting at unequal powers.

    Minimizes over the power-weighted overlap ``m`` in ``[0, pbar]``:

        (lam/2)(pbar + m) - 1/(2 beta) log(lam sigma2)
            - E_P Integral Dz log cosh(sqrt(P lam) z + P lam),

    with ``lam = B / (1 + beta B (pbar - m))`` and ``pbar`` the mean power.
    For the unit profile this is exactly the equal-power functional; the
    degenerate all-zero profile pins m = 0 and yields zero.  Only unit-mean
    and all-zero profiles are accepted.  Returns ``(c_upper, m_argmin)``.
    """
    rule = rule or default_rule()
    pbar = profile.mean_power
    if not (profile.is_normalized or pbar == 0.0):
        raise ValueError("profile must have unit mean power (or be all-zero)")
    beta, B = params.beta, params.B
    powers = np.array([p for p, _ in profile.levels])
    probs = np.array([q for _, q in profile.levels])

    def functional(m: float) -> float:
        lam = B / (1.0 + beta * B * (pbar - m))
        levels = lncosh_integral(powers * lam, rule) if powers.size else 0.0
        return (
            0.5 * lam * (pbar + m)
            + math.log1p(beta * B * (pbar - m)) / (2.0 * beta)
            - float(probs @ np.atleast_1d(levels))
        )

    if pbar == 0.0:
        return functional(0.0), 0.0
    value, argmin = _minimize_on_grid(functional, 0.0, pbar, grid_size)
    return value, argmin


@dataclass(frozen=True)
class NoiseSpectrum:
    """Power spectral density of the chip noise on [0, 2 pi).

    The white spectrum is the constant ``sigma2``; the first-order
    autoregressive family keeps total noise power ``sigma2`` while shaping
    it with correlation ``rho``.  Tabulated spectra are taken on a uniform
    midpoint grid over [0, 2 pi).
    """

    kind: str
    sigma2: Optional[float] = None
    rho: Optional[float] = None
    table: Optional[tuple] = None

    @classmethod
    def white(cls, sigma2: float) -> "NoiseSpectrum":
        if not (sigma2 > 0):
            raise ValueError("sigma2 must be positive")
        return cls("white", sigma2=float(sigma2))

    @classmethod
    def ar1(cls, rho: float, sigma2: float) -> "NoiseSpectrum":
        if not (sigma2 > 0):
            raise ValueError("sigma2 must be positive")
        if not (-1.0 < rho < 1.0):
            raise ValueError("rho must lie in (-1, 1)")
        return cls("ar1", sigma2=float(sigma2), rho=float(rho))

    @classmethod
    def from_table(cls, values) -> "NoiseSpectrum":
        v = tuple(float(x) for x in values)
        if not v or any(x <= 0 for x in v):
            raise ValueError("tabulated spectrum must be positive")
        return cls("table", table=v)

    def values(self, omegas: np.ndarray) -> np.ndarray:
        if self.kind == "white":
            return np.full_like(omegas, self.sigma2)
        if self.kind == "ar1":
            r = self.rho
            return self.sigma2 * (1.0 - r * r) / (1.0 - 2.0 * r * np.cos(omegas) + r * r)
        table = np.asarray(self.table)
        if omegas.size != table.size:
            raise ValueError("tabulated spectrum size must match the frequency grid")
        return table


def colored_noise_bound(
    params: SystemParams,
    spectrum: NoiseSpectrum,
    rule: Optional[QuadratureRule] = None,
    *,
    n_omega: int = 1024,
    grid_size: int = 512,
):
    """Capacity upper bound under stationary colored chip noise.

    The effective SNR becomes a spectral average,

        lam(m) = Integral domega/2pi  1 / (C(omega) + beta (1 - m)),

    and the noise-entropy term of the functional becomes
    ``1/(2 beta) Integral domega/2pi log(1 + beta (1 - m) / C(omega))``;
    both reduce exactly to the white-noise expressions when C == sigma2.
    Returns ``(c_upper, m_argmin)``.
    """
    rule = rule or default_rule()
    if spectrum.kind == "table":
        n_omega = len(spectrum.table)
    omegas = (np.arange(n_omega) + 0.5) * (2.0 * math.pi / n_omega)
    chat = spectrum.values(omegas)
    if np.any(chat <= 0):
        raise ValueError("noise spectrum must be positive")
    beta = params.beta

    def functional(m: float) -> float:
        denom = chat + beta * (1.0 - m)
        lam = float(np.mean(1.0 / denom))
        spectral = float(np.mean(np.log1p(beta * (1.0 - m) / chat))) / (2.0 * beta)
        return 0.5 * lam * (1.0 + m) + spectral - float(lncosh_integral(lam, rule))

    return _minimize_on_grid(functional, 0.0, 1.0, grid_size)


@dataclass(frozen=True)
class RateConstants:
    """Exponential rates in the concentration bounds for the conditional
    mutual information (``alpha1``) and the free energy (``alpha2``)."""

    alpha1: Union[float, Fraction]
    alpha2: Union[float, Fraction]


def _generic_sqrt(x):
    if isinstance(x, Fraction) or isinstance(x, int):
        frac = Fraction(x)
        rn, rd = math.isqrt(frac.numerator), math.isqrt(frac.denominator)
        if rn * rn == frac.numerator and rd * rd == frac.denominator:
            return Fraction(rn, rd)
        return math.sqrt(float(frac))
    return math.sqrt(x)


def concentration_rate_constants(beta, sigma2=None) -> RateConstants:
    """Deviation-probability rate constants at load ``beta``, noise ``sigma2``.

    ``alpha1 = sigma2^2 / (16 (64 beta + 32 + sigma2))`` governs tails of
    the spreading-conditional mutual information per user, and
    ``alpha2 = sigma2^2 beta^(3/2) / (32 (2 sqrt(beta) + sqrt(sigma2))^2)``
    governs tails of the free energy.  Exact-arithmetic inputs (ints or
    Fractions) are propagated exactly whenever the square roots are exact.
    """
    if isinstance(beta, SystemParams):
        if sigma2 is not None:
            raise ValueError("pass either params or (beta, sigma2)")
        beta, sigma2 = beta.beta, beta.sigma2
    if sigma2 is None:
        raise ValueError("sigma2 is required")
    alpha1 = sigma2 * sigma2 / (16 * (64 * beta + 32 + sigma2))
    sqb = _generic_sqrt(beta)
    sqs = _generic_sqrt(sigma2)
    alpha2 = sigma2 * sigma2 * beta * sqb / (32 * (2 * sqb + sqs) ** 2)
    return RateConstants(alpha1=alpha1, alpha2=alpha2)
