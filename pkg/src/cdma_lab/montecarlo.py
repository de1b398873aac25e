"""Monte Carlo experiments over random spreading instances.

Estimates finite-size capacities, bit error rates, and fluctuation
statistics by averaging exact posterior enumerations over random draws of
the spreading matrix, noise, and (optionally) inputs.  Three experiment
drivers build on the same estimator: concentration (variances and deviation
tails versus user count), universality (capacity gaps between spreading
distributions under common random numbers), and the limit trend (the
capacity sequence as the system grows at fixed load).

Determinism contract: every random draw comes from a counter-addressed
stream keyed by (seed, purpose, matrix index, noise index), and reductions
run in matrix-index order, so results are bit-identical for any worker
count.  The noise and input streams deliberately omit the spreading
distribution from their address so that different distributions face
identical noise — that is what gives the universality comparison its power.

Bit error rates are reported as empirical summaries only; unlike the
capacity and free-energy statistics, no concentration behaviour is claimed
for them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_K_MAX,
    Instance,
    SpreadingDistribution,
    SystemParams,
    enumerate_posterior,
    mutual_info_sample,
    sample_spreading,
)
from .rng import stream_rng, substream_seed

__all__ = [
    "RunningStats",
    "ExperimentConfig",
    "EstimateRecord",
    "estimate_capacity",
    "ConcentrationRow",
    "concentration_experiment",
    "UniversalityRow",
    "universality_experiment",
    "universality_gaps",
    "TrendRow",
    "limit_trend",
    "resolve_system",
]

# Stream-address purposes; part of the determinism contract.
_MATRIX, _NOISE, _INPUT = 1, 2, 3


@dataclass
class RunningStats:
    """Streaming mean and variance (Welford), mergeable across workers."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n
        return self

    @classmethod
    def from_values(cls, values) -> "RunningStats":
        stats = cls()
        for x in values:
            stats.push(float(x))
        return stats

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return max(self.m2 / (self.count - 1), 0.0)

    @property
    def se(self) -> float:
        if self.count < 1:
            return 0.0
        return math.sqrt(self.variance / self.count)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a Monte Carlo run needs to be reproducible."""

    params: SystemParams
    dist: SpreadingDistribution
    n_matrices: int
    n_noise: int
    seed: int
    epsilons: tuple = (0.05, 0.1)

    def __post_init__(self):
        if self.n_matrices < 1 or self.n_noise < 1:
            raise ValueError("n_matrices and n_noise must be at least 1")
        if any(eps <= 0 for eps in self.epsilons):
            raise ValueError("deviation thresholds must be positive")


@dataclass(frozen=True)
class EstimateRecord:
    """Capacity estimate with the raw per-matrix and per-instance detail."""

    capacity_mean: float
    capacity_se: float
    matrix_means: np.ndarray
    instance_fs: np.ndarray
    ber_mean: float
    ber_se: float

    def __post_init__(self):
        if self.capacity_se < 0 or self.ber_se < 0:
            raise ValueError("standard errors cannot be negative")
        if not (0.0 <= self.ber_mean <= 1.0):
            raise ValueError("ber_mean must lie in [0, 1]")


def resolve_system(K: int, beta: float, sigma2: float) -> SystemParams:
    """System of ``K`` users at the nearest integer chip count to ``K/beta``.

    The realized load ``K/N`` generally differs from the requested one and
    is what the returned params carry.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    N = max(1, round(K / beta))
    return SystemParams(K=K, N=N, sigma2=sigma2)


def _ordered_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Map preserving item order; thread count never affects results."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _matrix_task(cfg: ExperimentConfig, j: int, k_max: int, sample_inputs: bool):
    """All draws for matrix ``j``: per-matrix MI/BER means and raw f values."""
    params = cfg.params
    K, N = params.K, params.N
    sigma = math.sqrt(params.sigma2)
    S = sample_spreading(cfg.dist, K, N, substream_seed(cfg.seed, _MATRIX, j))
    mi_acc, ber_acc, fs = 0.0, 0.0, np.empty(cfg.n_noise)
    for i in range(cfg.n_noise):
        noise = stream_rng(cfg.seed, _NOISE, j, i).standard_normal(N)
        if sample_inputs:
            bits = stream_rng(cfg.seed, _INPUT, j, i).integers(0, 2, size=K)
            x0 = bits.astype(np.float64) * 2.0 - 1.0
        else:
            x0 = np.ones(K)
        y = S @ x0 / math.sqrt(N) + sigma * noise
        inst = Instance(S=S, x0=x0, n=noise, y=y)
        stats = enumerate_posterior(inst, params.sigma2, k_max=k_max)
        mi_acc += mutual_info_sample(stats, params)
        ber_acc += stats.ber
        fs[i] = stats.f
    return mi_acc / cfg.n_noise, ber_acc / cfg.n_noise, fs


def estimate_capacity(
    cfg: ExperimentConfig,
    *,
    threads: int = 1,
    k_max: int = DEFAULT_K_MAX,
    sample_inputs: bool = False,
) -> EstimateRecord:
    """Monte Carlo estimate of the per-user mutual information (nats).

    Averages ``-1/(2 beta) - f`` over ``n_noise`` fresh noise draws for each
    of ``n_matrices`` spreading draws.  Standard errors come from the
    between-matrix spread of the per-matrix means, matching the quantity
    whose concentration the variance experiments measure.  ``sample_inputs``
    draws the transmitted word uniformly instead of fixing all-ones; by
    gauge symmetry the two modes are statistically identical.
    """
    rows = _ordered_map(
        lambda j: _matrix_task(cfg, j, k_max, sample_inputs),
        range(cfg.n_matrices),
        threads,
    )
    matrix_means = np.array([r[0] for r in rows])
    ber_means = np.array([r[1] for r in rows])
    instance_fs = np.concatenate([r[2] for r in rows])
    M = cfg.n_matrices
    cap_se = float(matrix_means.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    ber_se = float(ber_means.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return EstimateRecord(
        capacity_mean=float(matrix_means.mean()),
        capacity_se=cap_se,
        matrix_means=matrix_means,
        instance_fs=instance_fs,
        ber_mean=float(min(max(ber_means.mean(), 0.0), 1.0)),
        ber_se=ber_se,
    )


@dataclass(frozen=True)
class ConcentrationRow:
    K: int
    epsilon: float
    var_mi: float
    var_f: float
    tail_freq_mi: float
    tail_freq_f: float


def concentration_experiment(
    cfg: ExperimentConfig,
    K_list: Sequence[int],
    *,
    threads: int = 1,
    k_max: int = DEFAULT_K_MAX,
) -> list:
    """Fluctuation statistics of per-user MI and free energy versus K.

    For each user count: the sample variance across spreading matrices of
    the conditional per-user mutual information, the sample variance across
    instances of the free energy, and for each threshold the empirical
    frequency of deviations from the mean at least that large.  One row per
    (K, epsilon) pair.
    """
    rows = []
    for K in K_list:
        params = resolve_system(K, cfg.params.beta, cfg.params.sigma2)
        sub = ExperimentConfig(
            params=params, dist=cfg.dist, n_matrices=cfg.n_matrices,
            n_noise=cfg.n_noise, seed=cfg.seed, epsilons=cfg.epsilons,
        )
        record = estimate_capacity(sub, threads=threads, k_max=k_max)
        mi_dev = np.abs(record.matrix_means - record.matrix_means.mean())
        f_dev = np.abs(record.instance_fs - record.instance_fs.mean())
        var_mi = float(record.matrix_means.var(ddof=1)) if cfg.n_matrices > 1 else 0.0
        var_f = float(record.instance_fs.var(ddof=1)) if record.instance_fs.size > 1 else 0.0
        for eps in cfg.epsilons:
            rows.append(
                ConcentrationRow(
                    K=K,
                    epsilon=float(eps),
                    var_mi=var_mi,
                    var_f=var_f,
                    tail_freq_mi=float(np.mean(mi_dev >= eps)),
                    tail_freq_f=float(np.mean(f_dev >= eps)),
                )
            )
    return rows


@dataclass(frozen=True)
class UniversalityRow:
    K: int
    dist: str
    capacity_mean: float
    capacity_se: float


DEFAULT_UNIVERSALITY_DISTS = ("gaussian-unit", "binary-pm1", "uniform-symmetric")


def universality_experiment(
    cfg: ExperimentConfig,
    K_list: Sequence[int],
    dists: Optional[Sequence[str]] = None,
    *,
    threads: int = 1,
    k_max: int = DEFAULT_K_MAX,
) -> list:
    """Capacity estimates per spreading distribution under shared noise.

    Noise and input streams are addressed without reference to the
    distribution, so every distribution is measured against identical
    channel randomness and the estimated gaps are differences of strongly
    correlated estimators.
    """
    names = tuple(dists) if dists is not None else DEFAULT_UNIVERSALITY_DISTS
    rows = []
    for K in K_list:
        params = resolve_system(K, cfg.params.beta, cfg.params.sigma2)
        for name in names:
            sub = ExperimentConfig(
                params=params, dist=SpreadingDistribution.from_name(name),
                n_matrices=cfg.n_matrices, n_noise=cfg.n_noise,
                seed=cfg.seed, epsilons=cfg.epsilons,
            )
            record = estimate_capacity(sub, threads=threads, k_max=k_max)
            rows.append(
                UniversalityRow(
                    K=K, dist=name,
                    capacity_mean=record.capacity_mean,
                    capacity_se=record.capacity_se,
                )
            )
    return rows


def universality_gaps(rows: Sequence[UniversalityRow]) -> list:
    """Pairwise capacity gaps per K: (K, dist_a, dist_b, gap, combined_se)."""
    out = []
    by_K = {}
    for row in rows:
        by_K.setdefault(row.K, []).append(row)
    for K in sorted(by_K):
        group = by_K[K]
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                a, b = group[i], group[j]
                out.append(
                    (K, a.dist, b.dist,
                     a.capacity_mean - b.capacity_mean,
                     math.hypot(a.capacity_se, b.capacity_se))
                )
    return out


@dataclass(frozen=True)
class TrendRow:
    K: int
    N: int
    beta_actual: float
    capacity_mean: float
    capacity_se: float


def limit_trend(
    cfg: ExperimentConfig,
    K_list: Sequence[int],
    *,
    threads: int = 1,
    k_max: int = DEFAULT_K_MAX,
) -> list:
    """The finite-size capacity sequence C_K at (nearly) fixed load."""
    rows = []
    for K in K_list:
        params = resolve_system(K, cfg.params.beta, cfg.params.sigma2)
        sub = ExperimentConfig(
            params=params, dist=cfg.dist, n_matrices=cfg.n_matrices,
            n_noise=cfg.n_noise, seed=cfg.seed, epsilons=cfg.epsilons,
        )
        record = estimate_capacity(sub, threads=threads, k_max=k_max)
        rows.append(
            TrendRow(
                K=K, N=params.N, beta_actual=params.beta,
                capacity_mean=record.capacity_mean,
                capacity_se=record.capacity_se,
            )
        )
    return rows
