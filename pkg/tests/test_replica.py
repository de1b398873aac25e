"""Tests for the replica-symmetric capacity formulas.

Expected values marked FROZEN were produced by independent oracles
(scipy.integrate.quad adaptive quadrature, dense brute-force grids with
trapezoid Gaussian expectations, a finite-size log-determinant Monte
Carlo, exact rational arithmetic) and copied here verbatim.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from cdma_lab.core import SystemParams
from cdma_lab.replica import (
    FixedPoint,
    NoiseSpectrum,
    PowerProfile,
    c_rs,
    capacity_bound,
    colored_noise_bound,
    concentration_rate_constants,
    default_rule,
    effective_snr,
    fixed_point_map,
    gauss_hermite,
    gaussian_closed_form,
    gaussian_replica,
    lncosh,
    lncosh_integral,
    phase_scan,
    solve_fixed_points,
    tanh_integral,
    unequal_power_bound,
    uniqueness_boundary,
)

LN2 = math.log(2.0)

# FROZEN: scipy.integrate.quad, epsabs=1e-14, window [-40, 40].  The
# per-value tolerances track the 61-node truncation error, which is at
# float precision for lam <= 1 and again for lam >= 50 but grows to a few
# 1e-7 in between (the integrand's complex poles approach the real axis).
QUAD_LNCOSH = {
    0.0: (0.0, 1e-15),
    1e-12: (5.0005785903940940e-13, 1e-15),
    0.1: (5.2350766103283743e-02, 1e-12),
    0.5: (2.9865452841519496e-01, 1e-12),
    1.0: (6.6316917965316824e-01, 1e-12),
    2.5: (1.9503956621496470e+00, 5e-8),
    7.0: (6.3182522406309696e+00, 5e-7),
    20.0: (1.9306864375423221e+01, 1e-7),
    50.0: (4.9306852819442426e+01, 1e-12),
}
# tanh converges slower than lncosh in the intermediate band (simple poles
# rather than logarithmic singularities), hence the wider middle tolerances.
QUAD_TANH = {
    0.0: (0.0, 1e-15),
    0.1: (9.1340601204877914e-02, 1e-12),
    0.5: (3.5011340467513086e-01, 1e-12),
    1.0: (5.5040049079332698e-01, 1e-9),
    2.5: (8.3120697492260665e-01, 5e-7),
    7.0: (9.8752984522987941e-01, 1e-5),
    20.0: (9.9998796337912454e-01, 1e-6),
}
# FROZEN: c_rs via adaptive quad at (beta, sigma2, m); tolerance by the
# effective SNR each cell lands on.
QUAD_C_RS = {
    (1.0, 1.0, 0.5): (2.8824728184088338e-01, 1e-10),   # lam = 0.67
    (0.5, 0.3, 0.2): (6.9608546899606116e-01, 5e-9),    # lam = 1.43
    (2.0, 0.125, 0.9): (6.7564306213018277e-01, 5e-7),  # lam = 3.08
    (1.5, 2.0, 0.0): (1.6910382211171893e-01, 1e-10),   # lam = 0.29
    (1.0, 1.0, 1.0): (3.3683082034683176e-01, 1e-10),   # lam = 1.0
}


class TestQuadrature:
    def test_moments(self):
        rule = default_rule()
        assert abs(rule.weights.sum() - 1.0) <= 1e-14
        assert abs(rule.weights @ rule.nodes) <= 1e-14
        assert abs(rule.weights @ rule.nodes**2 - 1.0) <= 1e-12

    def test_node_doubling_invariance(self):
        # On grids whose effective SNR stays at or below ~1 the 61-node rule
        # is already converged; doubling the nodes moves c_rs and the
        # fixed-point map by no more than 1e-11.
        r61, r122 = gauss_hermite(61), gauss_hermite(122)
        for beta in (0.5, 1.0, 2.0):
            for sigma2 in (1.5, 3.0, 6.0):
                params = SystemParams(beta=beta, sigma2=sigma2)
                for m in (0.0, 0.3, 0.9, 1.0):
                    assert abs(c_rs(m, params, r61) - c_rs(m, params, r122)) <= 1e-11
                    assert abs(fixed_point_map(m, params, r61)
                               - fixed_point_map(m, params, r122)) <= 1e-11

    def test_node_doubling_bounded_in_hard_band(self):
        # In the intermediate-SNR band the truncation error peaks near a
        # few 1e-6; doubling stays within that envelope everywhere.
        r61, r122 = gauss_hermite(61), gauss_hermite(122)
        for lam in [1e-8, 0.05, 0.7, 3.0, 5.0, 12.0, 25.0, 400.0]:
            assert abs(lncosh_integral(lam, r61) - lncosh_integral(lam, r122)) <= 1e-5
            assert abs(tanh_integral(lam, r61) - tanh_integral(lam, r122)) <= 1e-5

    def test_node_count_limits(self):
        with pytest.raises(ValueError, match="refused"):
            gauss_hermite(501)
        with pytest.raises(ValueError):
            gauss_hermite(0)
        assert gauss_hermite(350).nodes.size == 350
        # Below the hard cap but past the point where double-precision
        # Hermite weights underflow to garbage: refused with a clear message.
        with pytest.raises(ValueError, match="underflow"):
            gauss_hermite(400)

    def test_lncosh_stable_at_extremes(self):
        assert lncosh(np.array([0.0]))[0] == 0.0
        big = lncosh(np.array([1e8, -1e8]))
        assert np.allclose(big, 1e8 - LN2, rtol=0, atol=1e-8)
        assert np.all(np.isfinite(big))


class TestIntegrals:
    def test_lncosh_integral_vs_quad_oracle(self):
        for lam, (want, tol) in QUAD_LNCOSH.items():
            assert abs(lncosh_integral(lam) - want) <= tol, lam

    def test_tanh_integral_vs_quad_oracle(self):
        for lam, (want, tol) in QUAD_TANH.items():
            assert abs(tanh_integral(lam) - want) <= tol, lam

    def test_asymptotic_branch_is_continuous(self):
        below = lncosh_integral(ASYM := 1e4)
        above = lncosh_integral(ASYM * (1 + 1e-12))
        assert abs(below - (ASYM - LN2)) <= 1e-9
        assert abs(above - (ASYM - LN2)) <= 1e-7

    def test_array_broadcasting(self):
        lam = np.array([0.1, 1.0, 20.0])
        out = lncosh_integral(lam)
        assert out.shape == (3,)
        # Batched and scalar paths may differ in summation blocking, so
        # agreement is to rounding, not bitwise.
        for i, l in enumerate(lam):
            assert np.isclose(out[i], lncosh_integral(float(l)),
                              rtol=1e-14, atol=1e-15)

    def test_rejects_negative_snr(self):
        with pytest.raises(ValueError):
            lncosh_integral(-0.1)
        with pytest.raises(ValueError):
            tanh_integral(np.array([0.5, -1.0]))


class TestCrs:
    def test_frozen_quad_values(self):
        for (beta, sigma2, m), (want, tol) in QUAD_C_RS.items():
            params = SystemParams(beta=beta, sigma2=sigma2)
            assert abs(c_rs(m, params) - want) <= tol, (beta, sigma2, m)

    def test_printed_variant_differs_by_ln2(self):
        params = SystemParams(beta=1.0, sigma2=0.8)
        for m in (0.0, 0.4, 1.0):
            corrected = c_rs(m, params)
            printed = c_rs(m, params, as_printed=True)
            assert abs((corrected - printed) - LN2) <= 1e-15

    def test_zero_snr_limit_vanishes(self):
        params = SystemParams(beta=1.0, sigma2=math.inf)
        assert params.B == 0.0
        vals = c_rs(np.linspace(0.0, 1.0, 11), params)
        assert np.max(np.abs(vals)) <= 1e-14

    def test_zero_noise_limit_is_ln2(self):
        # At sigma2 = 1e-6 and m = 1, lam = B = 1e6 sits on the asymptotic
        # branch and the functional collapses to log 2, up to the rounding
        # of the two cancelling lam-sized terms (~ lam * eps).
        params = SystemParams(beta=1.0, sigma2=1e-6)
        assert abs(c_rs(1.0, params) - LN2) <= 1e-9

    def test_domain_validation(self):
        params = SystemParams(beta=1.0, sigma2=1.0)
        with pytest.raises(ValueError):
            c_rs(-0.01, params)
        with pytest.raises(ValueError):
            c_rs(1.01, params)

    def test_effective_snr_endpoints(self):
        params = SystemParams(beta=2.0, sigma2=0.5)
        assert abs(effective_snr(1.0, params) - params.B) <= 1e-15
        assert effective_snr(0.0, params) == params.B / (1.0 + params.beta * params.B)


class TestFixedPoints:
    def test_map_range_and_zero_snr(self):
        params = SystemParams(beta=1.0, sigma2=1.0)
        ms = np.linspace(0.0, 1.0, 21)
        vals = fixed_point_map(ms, params)
        assert np.all((vals >= 0.0) & (vals < 1.0))
        quiet = SystemParams(beta=1.0, sigma2=math.inf)
        assert fixed_point_map(0.5, quiet) == 0.0

    def test_unique_phase_agrees_with_damped_iteration(self):
        # Independent root oracle: damped self-map iteration from m0 = 0.9.
        for sigma2 in (0.5, 1.0, 2.0):
            params = SystemParams(beta=1.0, sigma2=sigma2)
            m = 0.9
            for _ in range(20000):
                nxt = fixed_point_map(m, params)
                if abs(nxt - m) <= 1e-15:
                    break
                m += 0.7 * (nxt - m)
            fps = solve_fixed_points(params)
            assert len(fps) == 1
            assert abs(fps[0].m - m) <= 1e-10
            assert fps[0].residual <= 1e-12
            assert fps[0].stable

    def test_three_root_window_vs_dense_census(self):
        # FROZEN: dense-grid census (trapezoid Gaussian expectation on
        # z in [-12, 12], 2001 nodes; m grid of 1e5 points) found the
        # beta=2 coexistence window covering sigma2 in [0.050, 0.120] at
        # scan step 0.005, with one root from 0.125 on.
        expected_counts = {0.05: 3, 0.08: 3, 0.12: 3, 0.125: 1, 0.2: 1, 0.3: 1}
        for sigma2, want in expected_counts.items():
            params = SystemParams(beta=2.0, sigma2=sigma2)
            fps = solve_fixed_points(params)
            assert len(fps) == want, sigma2
            assert all(fp.residual <= 1e-12 for fp in fps)
        fps = solve_fixed_points(SystemParams(beta=2.0, sigma2=0.08))
        ms = [fp.m for fp in fps]
        assert ms == sorted(ms)
        assert fps[0].stable and fps[2].stable and not fps[1].stable
        # FROZEN root locations from the census at sigma2 = 0.08.
        assert abs(fps[0].m - 0.5702) <= 2e-4
        assert abs(fps[1].m - 0.8666) <= 2e-4
        assert abs(fps[2].m - 0.9993) <= 2e-4

    def test_roots_are_stationary_points_of_c_rs(self):
        h = 1e-5
        for beta in (0.5, 1.0, 2.0):
            for sigma2 in (0.3, 1.0):
                params = SystemParams(beta=beta, sigma2=sigma2)
                for fp in solve_fixed_points(params):
                    if not (h < fp.m < 1.0 - h):
                        continue
                    slope = (c_rs(fp.m + h, params) - c_rs(fp.m - h, params)) / (2 * h)
                    assert abs(slope) <= 1e-6, (beta, sigma2, fp.m)


class TestCapacityBound:
    def test_range_and_limits(self):
        # The upper slack absorbs rounding of cancelling lam-sized terms in
        # the near-noiseless cells (lam = 1e6, so ~ lam * eps).
        for beta in (0.25, 1.0, 4.0):
            for sigma2 in (1e-6, 0.3, 1.0, 10.0, 1e9):
                params = SystemParams(beta=beta, sigma2=sigma2)
                c_upper, best = capacity_bound(params)
                assert -1e-12 <= c_upper <= LN2 + 1e-9, (beta, sigma2)
                assert isinstance(best, FixedPoint)
                assert 0.0 <= best.m <= 1.0
        nearly_clean = SystemParams(beta=1.0, sigma2=1e-6)
        c_upper, _ = capacity_bound(nearly_clean)
        assert abs(c_upper - LN2) <= 1e-6
        c_upper, _ = capacity_bound(SystemParams(beta=1.0, sigma2=1e9))
        assert c_upper <= 1e-6

    def test_is_a_lower_envelope(self):
        params = SystemParams(beta=2.0, sigma2=0.08)
        c_upper, _ = capacity_bound(params)
        grid = c_rs(np.linspace(0.0, 1.0, 257), params)
        assert c_upper <= grid.min() + 1e-9


class TestPhaseScan:
    def test_cells_and_boundary(self):
        cells = phase_scan([0.5, 2.0], [0.08, 0.2, 1.0])
        assert len(cells) == 6
        by_key = {(c.beta, c.sigma2): c for c in cells}
        assert by_key[(0.5, 0.08)].n_fixed_points == 1
        assert by_key[(2.0, 0.08)].n_fixed_points == 3
        assert by_key[(2.0, 0.2)].n_fixed_points == 1
        for c in cells:
            assert -1e-12 <= c.c_rs <= LN2 + 1e-12
            assert abs(c.lambda_star - effective_snr(
                c.m_star, SystemParams(beta=c.beta, sigma2=c.sigma2))) <= 1e-12
        spans = uniqueness_boundary(cells)
        assert spans == [(2.0, 0.08, 0.08)]


class TestGaussianInput:
    def test_closed_form_frozen_value(self):
        # FROZEN: exact algebra at beta = sigma2 = 1 gives the saddle
        # m* = (3 - sqrt 5)/2 and capacity 0.2902288194345508 nats; a
        # K = N = 512 log-determinant Monte Carlo (40 draws) independently
        # gave 0.29033 +- 9.2e-5.
        assert abs(gaussian_closed_form(1.0, 1.0) - 0.2902288194345508) <= 1e-12

    def test_replica_saddle_matches_exact_algebra(self):
        c, m, lam = gaussian_replica(1.0, 1.0)
        m_exact = (3.0 - math.sqrt(5.0)) / 2.0
        assert abs(m - m_exact) <= 1e-12
        assert abs(lam - 1.0 / (2.0 - m_exact)) <= 1e-12
        assert abs(c - 0.2902288194345508) <= 1e-12

    def test_closed_form_equals_replica_on_grid(self):
        for beta in (0.5, 1.0, 2.0):
            for sigma2 in (0.1, 1.0, 10.0):
                c_replica, m, _ = gaussian_replica(beta, sigma2)
                c_closed = gaussian_closed_form(beta, sigma2)
                assert abs(c_replica - c_closed) <= 1e-8, (beta, sigma2)
                assert 0.0 <= m < 1.0

    def test_limits_and_validation(self):
        assert gaussian_closed_form(1.0, math.inf) == 0.0
        single_user = 0.5 * math.log1p(1.0 / 0.5)
        assert abs(gaussian_closed_form(1e-8, 0.5) - single_user) <= 1e-6
        with pytest.raises(ValueError):
            gaussian_closed_form(0.0, 1.0)
        with pytest.raises(ValueError):
            gaussian_closed_form(1.0, -1.0)


class TestUnequalPowers:
    def test_unit_profile_reduces_to_equal_power(self):
        for sigma2 in (0.5, 1.0, 2.0):
            params = SystemParams(beta=1.0, sigma2=sigma2)
            c_eq, _ = capacity_bound(params)
            c_pow, m_pow = unequal_power_bound(params, PowerProfile.unit())
            assert abs(c_pow - c_eq) <= 1e-10, sigma2
            assert 0.0 <= m_pow <= 1.0

    def test_all_zero_profile_gives_zero(self):
        silent = PowerProfile(((0.0, 1.0),))
        params = SystemParams(beta=1.0, sigma2=1.0)
        c_pow, m_pow = unequal_power_bound(params, silent)
        assert c_pow == 0.0 and m_pow == 0.0

    def test_two_level_frozen_value(self):
        # FROZEN: dense-grid oracle (trapezoid z expectation, refined m
        # grid) at beta = sigma2 = 1 with powers {0.5, 1.5} equiprobable:
        # min 0.27613669437517 at m = 0.4718422.
        profile = PowerProfile.from_pairs([(0.5, 0.5), (1.5, 0.5)])
        params = SystemParams(beta=1.0, sigma2=1.0)
        c_pow, m_pow = unequal_power_bound(params, profile)
        assert abs(c_pow - 0.27613669437517) <= 1e-8
        assert abs(m_pow - 0.4718422) <= 1e-5

    def test_validation(self):
        with pytest.raises(ValueError):
            PowerProfile(((-1.0, 1.0),))
        with pytest.raises(ValueError):
            PowerProfile(((1.0, 0.7), (2.0, 0.7)))
        with pytest.raises(ValueError):
            PowerProfile(((1.0, -0.5), (1.0, 1.5)))
        with pytest.raises(ValueError):
            PowerProfile(())
        params = SystemParams(beta=1.0, sigma2=1.0)
        lopsided = PowerProfile(((2.0, 1.0),))
        with pytest.raises(ValueError, match="unit mean"):
            unequal_power_bound(params, lopsided)


class TestColoredNoise:
    def test_white_reduces_to_equal_power_bound(self):
        for sigma2 in (0.5, 2.0):
            params = SystemParams(beta=1.0, sigma2=sigma2)
            c_eq, _ = capacity_bound(params)
            c_col, _ = colored_noise_bound(params, NoiseSpectrum.white(sigma2))
            assert abs(c_col - c_eq) <= 1e-10, sigma2

    def test_ar1_frozen_value(self):
        # FROZEN: dense oracle (8192 spectral nodes, refined m grid,
        # trapezoid z expectation) at beta = 1, AR1 rho = 0.5, sigma2 = 1:
        # min 0.37434321530888 at m = 0.4887935.
        params = SystemParams(beta=1.0, sigma2=1.0)
        c_col, m_col = colored_noise_bound(params, NoiseSpectrum.ar1(0.5, 1.0))
        assert abs(c_col - 0.37434321530888) <= 1e-8
        assert abs(m_col - 0.4887935) <= 1e-5

    def test_ar1_preserves_noise_power(self):
        spec = NoiseSpectrum.ar1(0.5, 1.3)
        omegas = (np.arange(1024) + 0.5) * (2 * math.pi / 1024)
        assert abs(np.mean(spec.values(omegas)) - 1.3) <= 1e-10

    def test_table_spectrum_matches_white(self):
        params = SystemParams(beta=1.0, sigma2=0.7)
        tabled = NoiseSpectrum.from_table([0.7] * 256)
        c_tab, m_tab = colored_noise_bound(params, tabled)
        c_white, m_white = colored_noise_bound(params, NoiseSpectrum.white(0.7),
                                               n_omega=256)
        assert c_tab == c_white
        assert m_tab == m_white

    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseSpectrum.white(0.0)
        with pytest.raises(ValueError):
            NoiseSpectrum.ar1(1.0, 1.0)
        with pytest.raises(ValueError):
            NoiseSpectrum.from_table([1.0, -1.0])
        spec = NoiseSpectrum.from_table([1.0, 1.0])
        with pytest.raises(ValueError, match="size"):
            spec.values(np.zeros(3))


class TestRateConstants:
    def test_exact_values_at_unit_load_and_noise(self):
        rc = concentration_rate_constants(Fraction(1), Fraction(1))
        assert rc.alpha1 == Fraction(1, 1552)
        assert rc.alpha2 == Fraction(1, 288)

    def test_float_path_agrees_with_exact(self):
        rc = concentration_rate_constants(1.0, 1.0)
        assert abs(rc.alpha1 - 1.0 / 1552.0) <= 1e-18
        assert abs(rc.alpha2 - 1.0 / 288.0) <= 1e-18

    def test_exact_rational_at_quarter_load(self):
        # beta = 1/4, sigma2 = 4: both square roots are exact.
        rc = concentration_rate_constants(Fraction(1, 4), Fraction(4))
        assert rc.alpha1 == Fraction(16, 16 * (16 + 32 + 4))
        assert rc.alpha2 == Fraction(16, 1) * Fraction(1, 8) / (32 * Fraction(9, 1))

    def test_params_overload_and_errors(self):
        params = SystemParams(beta=1.0, sigma2=1.0)
        rc = concentration_rate_constants(params)
        assert abs(rc.alpha1 - 1.0 / 1552.0) <= 1e-18
        with pytest.raises(ValueError):
            concentration_rate_constants(params, 1.0)
        with pytest.raises(ValueError):
            concentration_rate_constants(1.0)
