import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stovex.solver import (
    FluxParams,
    PiecewiseDensity,
    asep_limit_residual,
    asymptotic_shock_slope,
    burgers_transform,
    example1,
    example2,
    example3,
    example3_solution,
    fan_value,
    flux,
    flux_at_speed,
    godunov,
    height_from_density,
    loop_integral,
    rh_speed,
    rh_speed_or_tangent,
    riemann,
    slope_pair,
    speed,
    speed_inverse,
    speed_range,
)

FP = FluxParams(0.4)
rho_st = st.floats(min_value=-1.0, max_value=1.0)
v_st = st.floats(min_value=0.05, max_value=0.95)


class TestFlux:
    def test_frozen_endpoints(self):
        v = FP.v
        assert flux(1.0, FP) == pytest.approx(1 / v - 1, abs=1e-14)
        assert flux(-1.0, FP) == pytest.approx(1 / v + 1, abs=1e-14)

    @given(a=rho_st, b=rho_st, v=v_st)
    def test_decreasing_and_convex(self, a, b, v):
        fp = FluxParams(v)
        if a < b:
            assert flux(a, fp) > flux(b, fp)
        mid = flux(0.5 * (a + b), fp)
        assert mid <= 0.5 * (flux(a, fp) + flux(b, fp)) + 1e-12

    def test_speed_endpoints(self):
        v = FP.v
        assert speed(-1.0, FP) == pytest.approx((v + 1) / (v - 1), abs=1e-14)
        assert speed(1.0, FP) == pytest.approx((v - 1) / (v + 1), abs=1e-14)
        assert speed(0.0, FP) == pytest.approx(-(1 - v * v), abs=1e-15)

    @given(r=rho_st, v=v_st)
    def test_speed_negative_increasing(self, r, v):
        fp = FluxParams(v)
        assert speed(r, fp) < 0
        if r < 0.999:
            assert speed(r + 1e-3, fp) > speed(r, fp)

    def test_speed_inverse_roundtrip(self):
        grid = np.linspace(-1 + 1e-6, 1 - 1e-6, 101)
        back = speed_inverse(speed(grid, FP), FP)
        assert np.abs(back - grid).max() < 1e-12

    def test_speed_inverse_domain(self):
        lo, hi = speed_range(FP)
        with pytest.raises(ValueError):
            speed_inverse(hi + 1e-6, FP)
        with pytest.raises(ValueError):
            speed_inverse(lo - 1e-6, FP)
        assert speed_inverse(speed(0.0, FP), FP) == pytest.approx(0.0, abs=1e-14)

    @given(v=v_st)
    def test_flux_at_speed_closed_form(self, v):
        # F(f^{-1}(x)) computed two ways; the root carries (1 - v^2), not (1 - 1/v^2)
        fp = FluxParams(v)
        xs = np.linspace(*speed_range(fp), 41)
        direct = flux(speed_inverse(xs, fp), fp)
        assert np.abs(direct - flux_at_speed(xs, fp)).max() < 1e-10 * np.abs(direct).max()

    def test_flux_params_validation(self):
        for bad in (0.0, 1.0, -0.3, 1.5):
            with pytest.raises(ValueError):
                FluxParams(bad)


class TestRiemann:
    def test_domain_wall_shock_speed(self):
        assert rh_speed(1.0, -1.0, FP) == pytest.approx(-1.0, abs=1e-14)

    @given(a=rho_st, b=rho_st, v=v_st)
    def test_rh_symmetric(self, a, b, v):
        if a == b:
            return
        fp = FluxParams(v)
        assert rh_speed(a, b, fp) == pytest.approx(rh_speed(b, a, fp), rel=1e-12)

    def test_secant_to_tangent(self):
        r = 0.3
        s = rh_speed(r + 1e-4, r - 1e-4, FP)
        assert s == pytest.approx(speed(r, FP), abs=1e-6)
        assert rh_speed_or_tangent(r, r, FP) == pytest.approx(speed(r, FP))

    def test_classification(self):
        w = riemann(1.0, -1.0, FP)
        assert w.kind == "shock" and w.speed == pytest.approx(-1.0)
        w = riemann(-1.0, 1.0, FP)
        assert w.kind == "fan"
        v = FP.v
        assert w.span[0] == pytest.approx(-(1 + v) / (1 - v), abs=1e-12)
        assert w.span[1] == pytest.approx(-(1 - v) / (1 + v), abs=1e-12)
        assert riemann(0.2, 0.2, FP).kind == "constant"

    def test_fan_value(self):
        lo, hi = speed_range(FP)
        assert fan_value(lo * 2.0, 2.0, (0.0, 0.0), FP) == pytest.approx(-1.0, abs=1e-12)
        assert fan_value(hi * 2.0, 2.0, (0.0, 0.0), FP) == pytest.approx(1.0, abs=1e-12)
        assert fan_value(speed(0.0, FP) * 3.0, 3.0, (0.0, 0.0), FP) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(ValueError):
            fan_value(0.0, -1.0, (0.0, 0.0), FP)


class TestExamples:
    def test_example1_region(self):
        v0 = rh_speed(1.0, -1.0, FP)
        y = 0.8
        assert example1(1.0, -1.0, v0 * y + 1e-9, y, FP) == -1.0
        assert example1(1.0, -1.0, v0 * y - 1e-9, y, FP) == 1.0
        with pytest.raises(ValueError):
            example1(-1.0, 1.0, 0.0, 1.0, FP)

    def test_example2_profile(self):
        lo, hi = speed_range(FP)
        y = 1.7
        for xi in np.linspace(lo + 1e-9, hi - 1e-9, 25):
            assert example2(xi * y, y, FP) == pytest.approx(
                float(speed_inverse(xi, FP)), abs=1e-12
            )
        assert example2((lo - 0.1) * y, y, FP) == -1.0
        assert example2((hi + 0.1) * y, y, FP) == 1.0

    def test_example2_self_similar(self):
        for lam in (0.5, 2.0, 7.0):
            assert example2(-0.8 * lam, 1.0 * lam, FP) == pytest.approx(
                example2(-0.8, 1.0, FP), abs=1e-13
            )

    def test_example3_early_time_superposition(self):
        # before any interaction: a straight shock from x1 plus a seam fan
        L, x1, y = 1.0, 0.6, 0.05
        lo, hi = speed_range(FP)
        for x in np.linspace(0.0, L, 41, endpoint=False):
            got = example3(L, x1, x, y, FP)
            xs = x - L if x > 0.5 * L else x   # seam-centered coordinate
            if lo * y < xs < hi * y:
                want = float(speed_inverse(xs / y, FP))
            elif xs < lo * y or x > x1 - y:
                want = -1.0 if x < L + lo * y and x > x1 - y else 1.0
                want = -1.0 if (x1 - y) < x < (L + lo * y) else 1.0
            else:
                want = 1.0
            assert got == pytest.approx(want, abs=1e-10)

    def test_example3_precondition(self):
        with pytest.raises(ValueError):
            example3_solution(1.0, 0.2, FP, 1.0)   # x1 < L(1-v)/2 not covered

    def test_asymptotic_slope_values(self):
        v = FP.v
        assert asymptotic_shock_slope(0.0, FP) == pytest.approx(-(1 - v * v))
        assert asymptotic_shock_slope(0.998, FP) == pytest.approx(
            float(speed(1.0, FP)), rel=2e-3
        )
        with pytest.raises(ValueError):
            asymptotic_shock_slope(1.0, FP)


class TestGodunov:
    def test_constant_stays_constant(self):
        rho0 = PiecewiseDensity(1.0, np.array([0.0]), np.array([0.3]))
        g = godunov(rho0, 64, 2.0, FP)
        assert np.abs(g.averages - 0.3).max() < 1e-14

    def test_mass_conservation(self):
        rho0 = PiecewiseDensity(1.0, np.array([0.0, 0.37]), np.array([0.9, -0.6]))
        g0 = rho0.total_mass()
        g = godunov(rho0, 128, 4.0, FP)   # a few thousand steps
        assert abs(g.averages.sum() * g.dx - g0) < 1e-12

    def test_range_preserved(self):
        rho0 = PiecewiseDensity(1.0, np.array([0.0, 0.5]), np.array([1.0, -1.0]))
        g = godunov(rho0, 256, 1.0, FP)
        assert g.averages.max() <= 1 + 1e-12 and g.averages.min() >= -1 - 1e-12

    def test_guards(self):
        rho0 = PiecewiseDensity(1.0, np.array([0.0]), np.array([0.0]))
        with pytest.raises(ValueError):
            godunov(rho0, 4, 1.0, FP)
        with pytest.raises(ValueError):
            godunov(rho0, 64, 1.0, FP, cfl=1.5)


class TestBurgersTransform:
    def test_constant_maps_to_constant(self):
        assert burgers_transform(0.4, FP) == speed(0.4, FP)

    def test_chain_rule_numerically(self):
        x = np.linspace(0, 1, 512, endpoint=False)
        rho = 0.5 * np.sin(2 * np.pi * x)
        dx = x[1] - x[0]
        ddx = lambda f: (np.roll(f, -1) - np.roll(f, 1)) / (2 * dx)   # periodic stencil
        u = burgers_transform(rho, FP)
        v = FP.v
        fprime = 2 * v * (1 - v * v) / (1 + v * rho) ** 3
        assert np.abs(ddx(u) - fprime * ddx(rho)).max() < 5e-3

    def test_residual_identity_on_evolved_data(self):
        # u-residual equals f'(rho) times the rho-residual to discretization order
        def residuals(n_x):
            L = 1.0
            xs = (np.arange(n_x) + 0.5) * (L / n_x)
            rho0 = PiecewiseDensity(L, xs - 0.5 / n_x, np.clip(0.4 * np.sin(2 * np.pi * xs), -1, 1))
            dy = 0.2 * (L / n_x)
            g0 = godunov(rho0, n_x, 5 * dy, FP, cfl=0.2)
            g1 = godunov(rho0, n_x, 6 * dy, FP, cfl=0.2)
            dxg = L / n_x
            rho_m = 0.5 * (g0.averages + g1.averages)
            rho_y = (g1.averages - g0.averages) / (g1.y - g0.y)
            rho_x = (np.roll(rho_m, -1) - np.roll(rho_m, 1)) / (2 * dxg)
            Fx = (np.roll(flux(rho_m, FP), -1) - np.roll(flux(rho_m, FP), 1)) / (2 * dxg)
            u = burgers_transform(rho_m, FP)
            u_y = (burgers_transform(g1.averages, FP) - burgers_transform(g0.averages, FP)) / (g1.y - g0.y)
            u_x = (np.roll(u, -1) - np.roll(u, 1)) / (2 * dxg)
            v = FP.v
            fprime = 2 * v * (1 - v * v) / (1 + v * rho_m) ** 3
            r_rho = rho_y + Fx
            r_u = u_y + u * u_x
            return float(np.abs(r_u - fprime * r_rho).max()), float(np.abs(r_u).max())

        mismatch_256, ru_256 = residuals(256)
        mismatch_512, ru_512 = residuals(512)
        assert mismatch_256 < 0.2 * ru_256     # identity holds to higher order
        assert 1.4 < ru_256 / ru_512 < 3.0     # residual itself is O(dx)


class TestSlowDriftLimit:
    def test_ratio_is_second_order(self):
        res = asep_limit_residual(3.0, 1.0, [0.04, 0.02, 0.01])
        ratios = res[:-1] / res[1:]
        assert np.all(ratios > 3.5) and np.all(ratios < 4.5)

    def test_symmetric_rates_vanish(self):
        res = asep_limit_residual(2.0, 2.0, [0.04, 0.02])
        assert np.all(res == 0.0)

    def test_first_order_coefficient(self):
        # after removing the transport term, the nonlinear term carries
        # coefficient eps (p - q) with measured prefactor 1
        p, q, eps = 3.0, 1.0, 1e-4
        x = np.linspace(0, 1, 2048, endpoint=False)
        rho = 0.45 * np.sin(2 * np.pi * x) + 0.2 * np.cos(4 * np.pi * x)
        rho_x = np.gradient(rho, x[1] - x[0])
        v = eps * (p - q) / (2 - eps * (p + q))
        exact = (1 - v * v) / (1 + v * rho) ** 2 * rho_x
        coeff = np.abs(exact - rho_x).max() / (eps * (p - q) * np.abs(rho * rho_x).max())
        assert coeff == pytest.approx(1.0, rel=2e-2)

    def test_eps_guard(self):
        with pytest.raises(ValueError):
            asep_limit_residual(30.0, 1.0, [0.05])


class TestHeightFromDensity:
    def test_constant_density_is_affine(self):
        rho_c = 0.25
        phi = height_from_density(lambda x, y: rho_c, 0.0, FP)
        v = FP.v
        assert phi(0.8, 0.0) == pytest.approx(0.8 * rho_c, abs=1e-10)
        assert phi(0.0, 0.6) == pytest.approx(0.6 * (rho_c + v) / (1 + v * rho_c), abs=1e-10)
        assert phi(0.5, 0.5) == pytest.approx(
            0.5 * rho_c + 0.5 * (rho_c + v) / (1 + v * rho_c), abs=1e-9
        )

    def test_slope_pair_derivative_relation(self):
        # d(slope_pair)/drho = -f(rho), the exactness condition for the loop integral
        r = np.linspace(-0.95, 0.95, 41)
        h = 1e-6
        deriv = (slope_pair(r + h, FP) - slope_pair(r - h, FP)) / (2 * h)
        assert np.abs(deriv + speed(r, FP)).max() < 1e-7

    def test_loop_integral_vanishes_on_fan_solution(self):
        lo, hi = speed_range(FP)
        rho = lambda x, y: example2(x, y, FP)
        pts = lambda y: (lo * y, hi * y)
        val = loop_integral(rho, FP, -1.5, 0.5, 0.5, 1.4, points_x=pts)
        assert abs(val) < 1e-8


class TestPiecewiseDensity:
    def test_circle_evaluation_and_wrap(self):
        pd = PiecewiseDensity(2.0, np.array([0.5, 1.5]), np.array([0.8, -0.4]))
        assert pd(0.7) == 0.8
        assert pd(1.7) == -0.4
        assert pd(0.1) == -0.4    # wrap arc
        assert pd(2.6) == 0.8     # periodic

    def test_primitive_and_cell_averages(self):
        pd = PiecewiseDensity(1.0, np.array([0.0, 0.25]), np.array([1.0, -0.5]))
        assert pd.primitive(0.25) == pytest.approx(0.25)
        assert pd.primitive(1.0) == pytest.approx(0.25 - 0.375)
        avg = pd.cell_averages(4)
        assert avg[0] == pytest.approx(1.0)
        assert np.all(avg[1:] == pytest.approx(-0.5))

    def test_mirror_is_involution_and_pointwise(self):
        pd = PiecewiseDensity(1.0, np.array([0.1, 0.4, 0.75]), np.array([0.5, -0.9, 0.2]))
        m = pd.mirrored()
        for x in np.linspace(0.01, 0.99, 37):
            assert m(x) == pytest.approx(pd((1.0 - x) % 1.0))
        mm = m.mirrored()
        for x in np.linspace(0.01, 0.99, 37):
            assert mm(x) == pytest.approx(pd(x))

    def test_line_mode(self):
        pd = PiecewiseDensity(math.inf, np.array([0.0]), np.array([-1.0, 1.0]))
        assert pd.line_mode
        assert pd(-5.0) == -1.0 and pd(5.0) == 1.0
        with pytest.raises(ValueError):
            PiecewiseDensity(math.inf, np.array([0.0]), np.array([1.0]))

    def test_validation(self):
        with pytest.raises(ValueError):
            PiecewiseDensity(1.0, np.array([0.3, 0.2]), np.array([0.1, 0.2]))
        with pytest.raises(ValueError):
            PiecewiseDensity(1.0, np.array([0.0]), np.array([1.5]))
