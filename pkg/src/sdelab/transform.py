"""Monotone change of coordinates removing drift discontinuities.

Around every breakpoint xi the map adds a localized quadratic kink,

    G(x) = x + alpha * phi((x - xi)/nu) * (x - xi)|x - xi|,

with bump phi(u) = (1 - u^2)^3 on [-1, 1] and zero outside, and

    alpha = (mu(xi-) - mu(xi+)) / (2 sigma(xi)^2).

G equals the identity outside the (pairwise disjoint) neighborhoods
[xi - nu, xi + nu].  G'(xi) = 1 and G''(xi+-) = +-2 alpha, which is exactly
the jump needed for the transformed drift

    mu_tilde = (G' mu + 1/2 G'' sigma^2) o G^{-1}

to be continuous across each breakpoint, while sigma_tilde = (G' sigma) o G^{-1}
stays continuous trivially.  The widths nu are shrunk so that
sup |G' - 1| <= 1/2, hence 1/2 <= G' <= 3/2 and G is strictly increasing
with a globally defined inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .expr import Side, compile_fn, evaluate
from .model import SIGMA_ZERO_TOL, SdeProblem


class TransformError(Exception):
    pass


class SigmaVanishesAtBreakpoint(TransformError):
    pass


@dataclass(frozen=True)
class BumpRecord:
    xi: float
    alpha: float
    nu: float


@dataclass(frozen=True)
class Transform:
    bumps: tuple[BumpRecord, ...]
    rho: float  # certified bound on sup |G' - 1|, always <= 1/2


def build_transform(problem: SdeProblem) -> Transform:
    """Construct the transform for a problem's breakpoints.

    nu_i = min(half the gap to adjacent breakpoints, 1, 1/(6|alpha_i| + eps));
    the last term certifies sup|G' - 1| <= 3|alpha_i| nu_i <= 1/2.
    """
    bumps = []
    xs = problem.breakpoints
    for i, xi in enumerate(xs):
        s = evaluate(problem.diffusion, xi, Side.EXACT)
        if abs(s) <= SIGMA_ZERO_TOL:
            raise SigmaVanishesAtBreakpoint(f"sigma({xi}) = {s}")
        mu_left = evaluate(problem.drift, xi, Side.LEFT)
        mu_right = evaluate(problem.drift, xi, Side.RIGHT)
        alpha = (mu_left - mu_right) / (2.0 * s * s)
        gap_left = xi - xs[i - 1] if i > 0 else math.inf
        gap_right = xs[i + 1] - xi if i + 1 < len(xs) else math.inf
        nu = min(0.5 * min(gap_left, gap_right), 1.0, 1.0 / (6.0 * abs(alpha) + 1e-12))
        bumps.append(BumpRecord(xi=xi, alpha=alpha, nu=nu))
    for a, b in zip(bumps, bumps[1:]):
        # Disjoint by the half-gap rule; anything else is a construction bug.
        assert a.xi + a.nu <= b.xi - b.nu + 1e-15, "overlapping transform neighborhoods"
    rho = min(0.5, max((3.0 * abs(b.alpha) * b.nu for b in bumps), default=0.0))
    return Transform(bumps=tuple(bumps), rho=rho)


def _find_bump(transform: Transform, x: float) -> BumpRecord | None:
    # Breakpoint counts are tiny in practice; a linear scan beats building
    # search structures in this hot path.
    for b in transform.bumps:
        if abs(x - b.xi) < b.nu:
            return b
    return None


def _bump_g(b: BumpRecord, x: float) -> float:
    d = x - b.xi
    u = d / b.nu
    w = 1.0 - u * u
    return x + b.alpha * (w * w * w) * d * abs(d)


def _bump_gp(b: BumpRecord, x: float) -> float:
    u = (x - b.xi) / b.nu
    w = 1.0 - u * u
    phi = w * w * w
    dphi = -6.0 * u * w * w
    return 1.0 + b.alpha * b.nu * (dphi * u * abs(u) + 2.0 * phi * abs(u))


def _bump_gp_gs(b: BumpRecord, x: float, side: Side) -> tuple[float, float]:
    """(G', G'') contributions of one bump; G'' is one-sided at the center."""
    u = (x - b.xi) / b.nu
    w = 1.0 - u * u
    phi = w * w * w
    dphi = -6.0 * u * w * w
    ddphi = 6.0 * w * (5.0 * u * u - 1.0)
    gp = 1.0 + b.alpha * b.nu * (dphi * u * abs(u) + 2.0 * phi * abs(u))
    if u > 0.0:
        sgn = 1.0
    elif u < 0.0:
        sgn = -1.0
    else:
        sgn = -1.0 if side is Side.LEFT else 1.0
    gs = b.alpha * (ddphi * u * abs(u) + 4.0 * dphi * abs(u) + 2.0 * phi * sgn)
    return gp, gs


def g(transform: Transform, x: float) -> float:
    b = _find_bump(transform, x)
    return x if b is None else _bump_g(b, x)


def g_prime(transform: Transform, x: float) -> float:
    b = _find_bump(transform, x)
    return 1.0 if b is None else _bump_gp(b, x)


def g_second(transform: Transform, x: float, side: Side = Side.RIGHT) -> float:
    """Second derivative; one-sided at each breakpoint where it jumps by 4*alpha.

    Side.EXACT at a breakpoint resolves as the right-sided value.
    """
    b = _find_bump(transform, x)
    if b is None:
        return 0.0
    return _bump_gp_gs(b, x, side)[1]


def g_inverse(transform: Transform, y: float) -> float:
    """Solve g(x) = y to |g(x) - y| <= 1e-12 * max(1, |y|).

    G maps each bump neighborhood onto itself and is the identity elsewhere,
    so y outside every neighborhood returns unchanged; inside one, the root is
    bracketed by the neighborhood and found by Newton steps safeguarded with
    bisection (G' >= 1/2 keeps the steps bounded).
    """
    b = _find_bump(transform, y)
    if b is None:
        return y
    tol = 1e-12 * max(1.0, abs(y))
    xi, alpha, nu = b.xi, b.alpha, b.nu
    lo, hi = xi - nu, xi + nu
    x = y
    for _ in range(200):
        d = x - xi
        u = d / nu
        w = 1.0 - u * u
        phi = w * w * w
        fx = x + alpha * phi * d * abs(d) - y
        if abs(fx) <= tol:
            return x
        if fx > 0.0:
            hi = x
        else:
            lo = x
        gp = 1.0 + alpha * nu * (-6.0 * u * w * w * u * abs(u) + 2.0 * phi * abs(u))
        xn = x - fx / gp
        if not lo < xn < hi:
            xn = 0.5 * (lo + hi)
        if xn == x:
            return x
        x = xn
    return x


def transformed_coeffs(
    transform: Transform, problem: SdeProblem
) -> tuple[Callable[[float], float], Callable[[float], float]]:
    """Continuous coefficients of the transformed SDE in Z = G(X) coordinates.

    mu_tilde(z) = G'(x) mu(x) + 1/2 G''(x) sigma(x)^2 and
    sigma_tilde(z) = G'(x) sigma(x) with x = G^{-1}(z).  Exactly at a former
    breakpoint the right-sided branch is used; the two one-sided values agree
    there by the alpha cancellation, so the choice is Lebesgue-null.
    """
    pair = transformed_pair(transform, problem)

    def mu_tilde(z: float) -> float:
        return pair(z)[0]

    def sigma_tilde(z: float) -> float:
        return pair(z)[1]

    return mu_tilde, sigma_tilde


def transform_coeffs_at_x(
    transform: Transform, problem: SdeProblem
) -> Callable[[float], tuple[float, float]]:
    """(mu_tilde, sigma_tilde) evaluated at a pre-inverted point x = G^{-1}(z).

    The stepping loop already tracks x alongside the native state, so this
    skips the per-call inversion and shares one bump lookup between both
    coefficients.
    """
    mu = compile_fn(problem.drift, Side.RIGHT)
    sigma = compile_fn(problem.diffusion, Side.RIGHT)

    def at(x: float) -> tuple[float, float]:
        b = _find_bump(transform, x)
        if b is None:
            gp, gs = 1.0, 0.0
        else:
            gp, gs = _bump_gp_gs(b, x, Side.RIGHT)
        s = sigma(x)
        return gp * mu(x) + 0.5 * gs * s * s, gp * s

    return at


def transformed_pair(
    transform: Transform, problem: SdeProblem
) -> Callable[[float], tuple[float, float]]:
    """(mu_tilde(z), sigma_tilde(z)) with a single inversion and bump lookup."""
    at = transform_coeffs_at_x(transform, problem)

    def pair(z: float) -> tuple[float, float]:
        return at(g_inverse(transform, z))

    return pair
