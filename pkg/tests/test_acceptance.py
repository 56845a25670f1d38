"""Acceptance suite: every criterion at its stated tolerance, one line each.

The heavyweight runs share module-scoped fixtures; everything is seeded, so
reruns are bit-identical.  Run with `pytest tests/test_acceptance.py -v -s`
to watch the per-criterion lines.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from sdelab.brownian import coarsen, sample
from sdelab.convergence import ConvergenceConfig, estimate_strong_error, fit_rate, moment_estimate, sign_change_statistic
from sdelab.expr import Side, evaluate
from sdelab.model import make_problem
from sdelab.schemes import SchemeKind, simulate_path, tame, taming_growth_check
from sdelab.transform import build_transform, g, g_inverse, g_prime, transformed_coeffs

MASTER_SEED = 1
N_LIST = (16, 32, 64, 128, 256, 512)
N_REF = 2**13
M_PATHS = 2000


def report(name: str, ok: bool, detail: str) -> bool:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    return ok


@pytest.fixture(scope="module")
def benchmark():
    problem = make_problem("ind(1,inf) - x^5", "x", ell=4.0, x0=1.0)
    return problem, build_transform(problem)


@pytest.fixture(scope="module")
def tamed_run(benchmark):
    problem, _ = benchmark
    config = ConvergenceConfig(
        n_list=N_LIST, n_ref=N_REF, m_paths=M_PATHS, p_list=(2.0,),
        master_seed=MASTER_SEED, scheme=SchemeKind.TAMED_EULER,
    )
    start = time.monotonic()
    rep = estimate_strong_error(problem, config)
    return rep, time.monotonic() - start


@pytest.fixture(scope="module")
def transformed_run(benchmark):
    problem, transform = benchmark
    config = ConvergenceConfig(
        n_list=N_LIST, n_ref=N_REF, m_paths=M_PATHS, p_list=(2.0,),
        master_seed=MASTER_SEED, scheme=SchemeKind.TRANSFORMED_TAMED_EULER,
    )
    return estimate_strong_error(problem, config, transform)


def test_benchmark_tamed_rate(tamed_run):
    rep, elapsed = tamed_run
    fit = rep.fits[2.0]
    errors = [row.estimate for row in rep.rows]
    cis = [row.ci_halfwidth for row in rep.rows]
    inversions = [
        i for i in range(len(errors) - 1)
        if not errors[i] > errors[i + 1]
        and not (abs(errors[i] - errors[i + 1]) <= cis[i] + cis[i + 1])
    ]
    ok = (
        0.35 <= fit.slope <= 0.65
        and fit.r2 >= 0.95
        and elapsed <= 300.0
        and rep.overflow_counts == {}
        and not inversions
    )
    assert report(
        "benchmark-tamed-rate",
        ok,
        f"slope={fit.slope:.4f} r2={fit.r2:.4f} runtime={elapsed:.0f}s rows strictly decreasing",
    )


def test_transformed_scheme_parity(tamed_run, transformed_run):
    tamed_fit = tamed_run[0].fits[2.0]
    fit = transformed_run.fits[2.0]
    diff = abs(tamed_fit.slope - fit.slope)
    ok = 0.35 <= fit.slope <= 0.65 and diff <= 0.15
    assert report(
        "transformed-parity",
        ok,
        f"slope={fit.slope:.4f} |slope_tamed - slope_transformed|={diff:.4f}",
    )


def test_sign_change_decay(benchmark):
    problem, _ = benchmark
    rep = sign_change_statistic(
        problem, SchemeKind.TAMED_EULER, n_list=N_LIST, refine=16, xi=1.0,
        m_paths=M_PATHS, p_list=(1.0, 2.0), master_seed=MASTER_SEED,
    )
    ok = True
    details = []
    for p in (1.0, 2.0):
        ests = [row.estimate for row in rep.rows if row.p == p]
        slope_vs_n = -rep.fits[p].slope
        ok &= all(e > 0.0 for e in ests)
        ok &= all(a > b for a, b in zip(ests, ests[1:]))
        ok &= -0.7 <= slope_vs_n <= -0.3
        details.append(f"p={p:g}: slope_vs_n={slope_vs_n:.4f}")
    assert report("sign-change-decay", ok, "; ".join(details))


def test_transform_certification(benchmark):
    problem, transform = benchmark
    (bump,) = transform.bumps
    grid = np.linspace(-1.0, 3.0, 100_000)
    gp = np.array([g_prime(transform, float(x)) for x in grid])
    rng = np.random.default_rng(123)
    xs = rng.uniform(-5.0, 5.0, 1000)
    roundtrip = max(abs(g_inverse(transform, g(transform, float(x))) - float(x)) for x in xs)
    mu_tilde, _ = transformed_coeffs(transform, problem)
    gap = abs(mu_tilde(1.0 + 1e-6) - mu_tilde(1.0 - 1e-6))
    drift_jump = abs(
        evaluate(problem.drift, 1.0, Side.RIGHT) - evaluate(problem.drift, 1.0, Side.LEFT)
    )
    ok = (
        bump.alpha == -0.5
        and gp.min() >= 0.5
        and gp.max() <= 1.5
        and roundtrip <= 1e-10
        and gap <= 1e-4
        and drift_jump == 1.0
    )
    assert report(
        "transform-certification",
        ok,
        f"alpha={bump.alpha} gprime=[{gp.min():.4f},{gp.max():.4f}] "
        f"roundtrip={roundtrip:.2e} mu_tilde_gap@1e-6={gap:.2e} raw jump={drift_jump}",
    )


def test_taming_map_unit_properties():
    # Magnitudes are kept above n * 2^-26 so the strict float inequalities
    # carry the mathematical ones; see the schemes unit tests.
    rng = np.random.default_rng(2718)
    mus = np.exp(rng.uniform(math.log(1e-3), math.log(1e8), 100_000))
    mus *= np.where(rng.uniform(size=100_000) < 0.5, -1.0, 1.0)
    ns = rng.integers(1, 4097, size=100_000)
    violations = 0
    for mu, n in zip(mus.tolist(), ns.tolist()):
        t = tame(mu, n)
        if not (
            abs(t) < n
            and abs(t) <= abs(mu)
            and math.copysign(1.0, t) == math.copysign(1.0, mu)
            and abs(t - mu) <= mu * mu / n
        ):
            violations += 1
    assert report("taming-unit-properties", violations == 0, f"violations={violations} of 100000")


def test_taming_growth_bound(benchmark):
    problem, _ = benchmark
    grid = np.arange(-10.0, 10.0 + 1e-9, 0.01)
    rep = taming_growth_check(problem, [2**k for k in range(4, 13)], grid)
    sups = list(rep.per_n.values())
    ratio = max(sups) / min(sups)
    ok = rep.gamma == 0.2 and all(math.isfinite(v) for v in sups) and ratio <= 2.0
    assert report(
        "taming-growth-bound",
        ok,
        f"gamma={rep.gamma} sup range=[{min(sups):.4f},{max(sups):.4f}] ratio={ratio:.3f}",
    )


def test_moment_boundedness(benchmark):
    problem, transform = benchmark
    n_list = tuple(2**k for k in range(4, 11))
    rows, overflow_tamed = moment_estimate(
        problem, SchemeKind.TAMED_EULER, n_list=n_list, m_paths=M_PATHS, p=4.0, master_seed=MASTER_SEED,
    )
    ests = [row.estimate for row in rows]
    ratio = max(ests) / min(ests)
    _, overflow_transformed = moment_estimate(
        problem, SchemeKind.TRANSFORMED_TAMED_EULER, n_list=n_list, m_paths=M_PATHS,
        p=4.0, master_seed=MASTER_SEED, transform=transform,
    )
    ok = ratio <= 2.0 and overflow_tamed == {} and overflow_transformed == {}
    assert report(
        "moment-boundedness",
        ok,
        f"max/min={ratio:.4f} overflow tamed={overflow_tamed} transformed={overflow_transformed}",
    )


def test_em_divergence_contrast():
    problem = make_problem("ind(1,inf) - x^5", "x", ell=4.0, x0=3.0)
    em_explosions = 0
    tamed_explosions = 0
    for pid in range(1000):
        lattice = sample(MASTER_SEED, pid, 8)
        em = simulate_path(problem, SchemeKind.EULER_MARUYAMA, 8, lattice.increments)
        te = simulate_path(problem, SchemeKind.TAMED_EULER, 8, lattice.increments)
        if em.overflow or np.nanmax(np.abs(em.values)) > 1e100:
            em_explosions += 1
        if te.overflow or np.nanmax(np.abs(te.values)) > 1e100:
            tamed_explosions += 1
    ok = em_explosions >= 1 and tamed_explosions == 0
    assert report(
        "em-divergence-contrast",
        ok,
        f"EM astronomical paths={em_explosions}/1000, tamed={tamed_explosions}/1000",
    )


def test_exactness_oracle():
    problem = make_problem("0", "1", ell=1.0, x0=0.0)
    config = ConvergenceConfig(
        n_list=(4, 8, 16, 32), n_ref=512, m_paths=200, p_list=(1.0, 2.0),
        master_seed=MASTER_SEED, scheme=SchemeKind.TAMED_EULER,
    )
    rep = estimate_strong_error(problem, config)
    worst = max(row.estimate for row in rep.rows)
    assert report("exactness-oracle", worst <= 1e-12, f"worst coupled error={worst:.2e}")


def test_rate_fitter_oracle():
    half = fit_rate([(n, 2.0 * n**-0.5) for n in (16, 64, 256, 1024)])
    one = fit_rate([(n, 0.3 / n) for n in (16, 64, 256, 1024)])
    ok = abs(half.slope - 0.5) <= 1e-12 and abs(one.slope - 1.0) <= 1e-12
    assert report(
        "rate-fitter-oracle",
        ok,
        f"half-order slope err={abs(half.slope - 0.5):.2e}, first-order={abs(one.slope - 1.0):.2e}",
    )


def test_brownian_lattice_criteria():
    worst_sum = 0.0
    for pid in range(20):
        lattice = sample(MASTER_SEED, pid, 4096)
        for factor in (2, 16, 256):
            worst_sum = max(worst_sum, abs(coarsen(lattice, factor).sum() - lattice.increments.sum()))
    critical = 1.6276 / math.sqrt(10_000)
    passes = sum(
        1
        for seed in range(100)
        if stats.kstest(sample(seed, 0, 10_000).increments * 100.0, "norm").statistic < critical
    )
    ok = worst_sum <= 1e-12 and passes >= 95
    assert report(
        "brownian-lattice",
        ok,
        f"coarsen sum residual={worst_sum:.2e}, KS passes={passes}/100",
    )
