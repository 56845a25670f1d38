import math

import numpy as np
import pytest

from sdelab.expr import Side, evaluate
from sdelab.model import CheckGrid, make_problem, validate
from sdelab.transform import (
    SigmaVanishesAtBreakpoint,
    build_transform,
    g,
    g_inverse,
    g_prime,
    g_second,
    transformed_coeffs,
    transformed_pair,
)


@pytest.fixture(scope="module")
def benchmark():
    problem = make_problem("ind(1,inf) - x^5", "x", ell=4.0, x0=1.0)
    return problem, build_transform(problem)


class TestBuild:
    def test_benchmark_alpha_exact(self, benchmark):
        # mu(1-) = -1, mu(1+) = 0 and sigma(1) = 1, so alpha = -1/2 exactly.
        _, transform = benchmark
        (bump,) = transform.bumps
        assert bump.alpha == -0.5
        assert bump.xi == 1.0
        assert 0.0 < bump.nu <= 1.0 / 3.0
        assert transform.rho <= 0.5

    def test_sigma_vanishing_rejected(self):
        prob = make_problem("sign(x)", "x", ell=1.0, x0=1.0)
        with pytest.raises(SigmaVanishesAtBreakpoint):
            build_transform(prob)

    def test_no_breakpoints_gives_identity(self):
        prob = make_problem("-x^3", "1", ell=2.0, x0=0.0)
        transform = build_transform(prob)
        assert transform.bumps == ()
        for x in (-2.0, 0.0, 1.3, 10.0):
            assert g(transform, x) == x
            assert g_prime(transform, x) == 1.0
            assert g_second(transform, x) == 0.0
            assert g_inverse(transform, x) == x

    def test_disjoint_neighborhoods(self):
        prob = make_problem("ind(0,1) + ind(1,2) - x^3", "1 + x^2", ell=2.0, x0=0.5)
        transform = build_transform(prob)
        for a, b in zip(transform.bumps, transform.bumps[1:]):
            assert a.xi + a.nu <= b.xi - b.nu + 1e-15


class TestPointwise:
    def test_fixed_point_at_breakpoint(self, benchmark):
        _, transform = benchmark
        assert g(transform, 1.0) == 1.0
        assert g_prime(transform, 1.0) == 1.0

    def test_identity_outside_support(self, benchmark):
        _, transform = benchmark
        (bump,) = transform.bumps
        for x in (bump.xi - bump.nu, bump.xi + bump.nu, -5.0, 0.2, 3.0):
            assert g(transform, x) == x
            assert g_prime(transform, x) == 1.0

    def test_second_derivative_jump(self, benchmark):
        # G''(xi+-) = +-2 alpha, so the one-sided gap is 4 alpha = -2.
        _, transform = benchmark
        jump = g_second(transform, 1.0, Side.RIGHT) - g_second(transform, 1.0, Side.LEFT)
        assert jump == pytest.approx(-2.0, abs=1e-14)
        assert g_second(transform, 1.0, Side.RIGHT) == pytest.approx(-1.0, abs=1e-14)
        assert g_second(transform, 1.0, Side.EXACT) == g_second(transform, 1.0, Side.RIGHT)

    def test_derivative_bounds_on_grid(self, benchmark):
        _, transform = benchmark
        grid = np.linspace(-1.0, 3.0, 100_000)
        gp = np.array([g_prime(transform, float(x)) for x in grid])
        assert gp.min() >= 0.5
        assert gp.max() <= 1.5

    def test_monotone_on_grid(self, benchmark):
        _, transform = benchmark
        grid = np.linspace(-1.0, 3.0, 100_000)
        gv = np.array([g(transform, float(x)) for x in grid])
        assert np.all(np.diff(gv) > 0.0)

    def test_gprime_matches_central_differences(self, benchmark):
        _, transform = benchmark
        h = 1e-5
        for x in np.linspace(0.68, 1.32, 41):
            x = float(x)
            if abs(x - 1.0) < 2 * h:
                continue
            fd = (g(transform, x + h) - g(transform, x - h)) / (2 * h)
            assert abs(fd - g_prime(transform, x)) < 1e-6

    def test_gsecond_matches_central_differences(self, benchmark):
        _, transform = benchmark
        h = 1e-5
        for x in np.linspace(0.68, 1.32, 41):
            x = float(x)
            if abs(x - 1.0) < 2 * h:
                continue
            fd = (g_prime(transform, x + h) - g_prime(transform, x - h)) / (2 * h)
            assert abs(fd - g_second(transform, x)) < 1e-6


class TestInverse:
    def test_round_trip(self, benchmark):
        _, transform = benchmark
        rng = np.random.default_rng(123)
        xs = rng.uniform(-5.0, 5.0, 1000)
        worst = max(abs(g_inverse(transform, g(transform, float(x))) - float(x)) for x in xs)
        assert worst <= 1e-10

    def test_residual_tolerance(self, benchmark):
        _, transform = benchmark
        rng = np.random.default_rng(5)
        for y in rng.uniform(0.6, 1.4, 200):
            y = float(y)
            x = g_inverse(transform, y)
            assert abs(g(transform, x) - y) <= 1e-12 * max(1.0, abs(y))

    def test_strictly_increasing(self, benchmark):
        _, transform = benchmark
        ys = np.linspace(0.5, 1.5, 5000)
        xs = [g_inverse(transform, float(y)) for y in ys]
        assert all(a < b for a, b in zip(xs, xs[1:]))


class TestTransformedCoeffs:
    def test_equals_raw_outside_neighborhoods(self, benchmark):
        problem, transform = benchmark
        mu_tilde, sigma_tilde = transformed_coeffs(transform, problem)
        for z in (-2.0, 0.3, 2.5, 4.0):
            assert mu_tilde(z) == evaluate(problem.drift, z, Side.RIGHT)
            assert sigma_tilde(z) == z

    def test_continuity_across_breakpoint(self, benchmark):
        # The raw drift jumps by exactly 1 at xi = 1; the transformed drift's
        # one-sided gap must vanish at least linearly in the offset.
        problem, transform = benchmark
        mu_tilde, _ = transformed_coeffs(transform, problem)
        gaps = {}
        for offset in (1e-4, 1e-6, 1e-8):
            gaps[offset] = abs(mu_tilde(1.0 + offset) - mu_tilde(1.0 - offset))
        assert gaps[1e-6] <= 1e-4
        assert gaps[1e-8] <= 1e-6
        assert gaps[1e-6] <= gaps[1e-4] * 1e-2 * 10
        assert gaps[1e-8] <= gaps[1e-6] * 1e-2 * 10

    def test_sigma_tilde_fixed_at_breakpoint(self, benchmark):
        problem, transform = benchmark
        _, sigma_tilde = transformed_coeffs(transform, problem)
        assert sigma_tilde(1.0) == 1.0

    def test_pair_matches_separate_callables(self, benchmark):
        problem, transform = benchmark
        mu_tilde, sigma_tilde = transformed_coeffs(transform, problem)
        pair = transformed_pair(transform, problem)
        rng = np.random.default_rng(0)
        for z in rng.uniform(-3.0, 3.0, 300):
            z = float(z)
            m, s = pair(z)
            assert m == mu_tilde(z)
            assert s == sigma_tilde(z)

    def test_onesided_lipschitz_preserved(self, benchmark):
        # mu_tilde may pick up slope from the G'' term, but only on the bump
        # scale: |mu_tilde'| gains at most ~|alpha| sup(sigma^2) / nu there.
        problem, transform = benchmark
        report = validate(problem, CheckGrid(lo=-3.0, hi=3.0, count=2000, pair_count=2000, seed=7))
        (bump,) = transform.bumps
        sigma_sq_sup = (1.0 + bump.nu) ** 2
        bound = max(0.0, report.onesided_c_hat) + 10.0 * abs(bump.alpha) * sigma_sq_sup / bump.nu
        mu_tilde, _ = transformed_coeffs(transform, problem)
        rng = np.random.default_rng(7)
        xs = rng.uniform(-3.0, 3.0, 4000)
        ys = rng.uniform(-3.0, 3.0, 4000)
        sup = -math.inf
        for x, y in zip(xs, ys):
            x, y = float(x), float(y)
            if x == y:
                continue
            sup = max(sup, (x - y) * (mu_tilde(x) - mu_tilde(y)) / (x - y) ** 2)
        assert math.isfinite(sup)
        assert sup <= bound
