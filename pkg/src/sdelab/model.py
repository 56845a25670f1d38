"""SDE problem description and numerical spot-checks of the standing assumptions.

The validator is a falsifier, not a prover: the assumptions quantify over all
reals, which is undecidable for black-box expressions, so `validate` samples
points and pairs inside each continuity piece and reports the empirical
constants (one-sided Lipschitz, growth-Lipschitz, diffusion Lipschitz, lambda)
that downstream property tests rely on.  It can only ever reject.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import ExprAst, Side, compile_fn, extract_breakpoints, parse


class ModelError(Exception):
    pass


class EmptyPieceError(ModelError):
    """A continuity piece intersected with the check range holds no points."""


SIGMA_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class SdeProblem:
    """Scalar SDE dX = mu(X) dt + sigma(X) dW on [0, 1] with X_0 = x0.

    `breakpoints` are the candidate discontinuity points of the drift, the
    union of syntactically extracted indicator boundaries and user-declared
    points; extra points where the drift is in fact continuous are harmless.
    `ell` bounds the polynomial growth of the drift's piecewise Lipschitz
    constant.
    """

    drift: ExprAst
    diffusion: ExprAst
    breakpoints: tuple[float, ...]
    ell: float
    x0: float
    horizon: float = 1.0

    def __post_init__(self):
        if self.horizon != 1.0:
            raise ModelError("horizon is fixed at 1")
        if not (self.ell > 0.0 and math.isfinite(self.ell)):
            raise ModelError(f"ell must be a finite positive real, got {self.ell}")
        if not math.isfinite(self.x0):
            raise ModelError(f"x0 must be finite, got {self.x0}")
        for a, b in zip(self.breakpoints, self.breakpoints[1:]):
            if not a < b:
                raise ModelError(f"breakpoints must be strictly increasing, got {self.breakpoints}")
        if any(not math.isfinite(b) for b in self.breakpoints):
            raise ModelError("breakpoints must be finite")

    @property
    def gamma(self) -> float:
        """Taming exponent: min(1/(1+ell), 1/2)."""
        return min(1.0 / (1.0 + self.ell), 0.5)


def make_problem(
    drift: str,
    diffusion: str,
    ell: float,
    x0: float,
    declared_breakpoints: tuple[float, ...] = (),
) -> SdeProblem:
    """Parse coefficient sources and merge declared with extracted breakpoints."""
    mu = parse(drift)
    sigma = parse(diffusion)
    points = sorted(set(extract_breakpoints(mu)) | set(float(b) for b in declared_breakpoints))
    return SdeProblem(drift=mu, diffusion=sigma, breakpoints=tuple(points), ell=float(ell), x0=float(x0))


@dataclass(frozen=True)
class CheckGrid:
    """Sampling plan for `validate`; caps are optional rejection thresholds."""

    lo: float
    hi: float
    count: int
    pair_count: int
    seed: int
    onesided_cap: float | None = None
    growth_cap: float | None = None
    sigma_lip_cap: float | None = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ModelError(f"check range needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.count < 2:
            raise ModelError("count must be >= 2")
        if self.pair_count < 1:
            raise ModelError("pair_count must be >= 1")


@dataclass
class ValidationReport:
    ok: bool
    violations: list[tuple[str, object, float]] = field(default_factory=list)
    lambda_hat: float = 4.0
    gamma: float = 0.5
    onesided_c_hat: float = -math.inf
    growth_c_hat: float = 0.0
    sigma_lip_hat: float = 0.0


def _pieces(problem: SdeProblem, lo: float, hi: float) -> list[tuple[float, float]]:
    edges = [-math.inf, *problem.breakpoints, math.inf]
    pieces = []
    for a, b in zip(edges, edges[1:]):
        pa, pb = max(a, lo), min(b, hi)
        if not pa < pb:
            raise EmptyPieceError(
                f"continuity piece ({a}, {b}) has no interior points inside [{lo}, {hi}]"
            )
        pieces.append((pa, pb))
    return pieces


def validate(problem: SdeProblem, grid: CheckGrid) -> ValidationReport:
    """Spot-check (B1)-(B3) style conditions by sampling, never straddling a breakpoint.

    Deterministic given (problem, grid) including the seed.  All reductions
    are order-independent maxima.
    """
    mu = compile_fn(problem.drift, Side.EXACT)
    sigma = compile_fn(problem.diffusion, Side.EXACT)
    rng = np.random.default_rng(grid.seed)
    pieces = _pieces(problem, grid.lo, grid.hi)
    report = ValidationReport(ok=True, gamma=problem.gamma)

    n_points = max(2, grid.count // len(pieces))
    n_pairs = max(1, grid.pair_count // len(pieces))

    all_points: list[float] = []
    onesided = -math.inf
    growth = 0.0
    for a, b in pieces:
        pts = rng.uniform(a, b, size=n_points)
        pts = pts[(pts > a) & (pts < b)]
        if pts.size == 0:
            raise EmptyPieceError(f"no interior samples landed in piece ({a}, {b})")
        all_points.extend(float(p) for p in pts)
        xs = rng.uniform(a, b, size=n_pairs)
        ys = rng.uniform(a, b, size=n_pairs)
        for x, y in zip(xs, ys):
            x, y = float(x), float(y)
            if x == y or not (a < x < b and a < y < b):
                continue
            dmu = mu(x) - mu(y)
            dx = x - y
            onesided = max(onesided, dx * dmu / (dx * dx))
            growth = max(growth, abs(dmu) / ((1.0 + abs(x) ** problem.ell + abs(y) ** problem.ell) * abs(dx)))
    report.onesided_c_hat = onesided
    report.growth_c_hat = growth

    # sigma is required to be globally Lipschitz, so its pairs may straddle.
    sig_lip = 0.0
    xs = rng.uniform(grid.lo, grid.hi, size=grid.pair_count)
    ys = rng.uniform(grid.lo, grid.hi, size=grid.pair_count)
    for x, y in zip(xs, ys):
        x, y = float(x), float(y)
        if x == y:
            continue
        sig_lip = max(sig_lip, abs(sigma(x) - sigma(y)) / abs(x - y))
    report.sigma_lip_hat = sig_lip

    # Empirical lambda: unit-ball coefficient bound, relative diffusion and
    # drift-radial bounds outside the unit ball, floored at 4.
    lam = 4.0
    sup_radial = -math.inf
    for x in all_points:
        ax = abs(x)
        if ax <= 1.0:
            lam = max(lam, 1.0 + abs(mu(x)) + abs(sigma(x)))
        if ax >= 1.0:
            lam = max(lam, sigma(x) ** 2 / (x * x))
            sup_radial = max(sup_radial, x * mu(x) / (x * x))
    if sup_radial > 0.0:
        lam = max(lam, sup_radial**2)
    report.lambda_hat = lam

    for xi in problem.breakpoints:
        s = sigma(xi)
        if abs(s) <= SIGMA_ZERO_TOL:
            report.violations.append(("B2", xi, s))
    if grid.onesided_cap is not None and onesided > grid.onesided_cap:
        report.violations.append(("B3-onesided", None, onesided))
    if grid.growth_cap is not None and growth > grid.growth_cap:
        report.violations.append(("B3-growth", None, growth))
    if grid.sigma_lip_cap is not None and sig_lip > grid.sigma_lip_cap:
        report.violations.append(("B2-lipschitz", None, sig_lip))

    report.ok = not report.violations
    return report


def grid_point(t: float, n: int) -> float:
    """Largest grid point floor(n*t)/n not exceeding t, for t in [0, 1].

    Idempotent: applying it to its own output returns the same value.
    """
    if not 0.0 <= t <= 1.0:
        raise ModelError(f"t must lie in [0, 1], got {t}")
    if n < 1:
        raise ModelError(f"n must be >= 1, got {n}")
    m = math.floor(n * t)
    # Correct for rounding in n*t so that m/n <= t < (m+1)/n holds exactly
    # in float comparisons.
    while m > 0 and m / n > t:
        m -= 1
    while (m + 1) / n <= t:
        m += 1
    return m / n
