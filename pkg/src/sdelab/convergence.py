"""Coupled Monte Carlo estimation of strong errors, rates and sign-change statistics.

The reference solution is the same scheme run at the fine resolution n_ref on
the same Brownian lattice; coarse runs consume coarsened increments of that
lattice, so all error estimates are path-coupled.  Everything is keyed by
(master_seed, path_id), and per-path results are combined in fixed path order,
so reports are bit-identical across repeated runs and worker counts.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import partial

import numpy as np

from .brownian import coarsen, sample
from .expr import Side, evaluate
from .model import SdeProblem
from .schemes import SchemeKind, interpolate_on_fine_grid, simulate_path
from .transform import Transform


class ConvergenceError(Exception):
    pass


class ConfigInvalid(ConvergenceError):
    pass


class OverflowInEstimate(ConvergenceError):
    """A flagged path reached an estimate under a scheme that must not overflow."""


class TooFewRows(ConvergenceError):
    pass


class ZeroErrorRow(ConvergenceError):
    """A zero error row means the scheme is exact there; no rate to fit."""


class ErrorNorm(Enum):
    ENDPOINT = "endpoint"
    SUP_ON_COARSE_GRID = "sup-on-coarse-grid"

    @classmethod
    def parse(cls, name: str) -> "ErrorNorm":
        key = name.strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise ConfigInvalid(f"unknown error norm {name!r}")


@dataclass(frozen=True)
class ConvergenceConfig:
    n_list: tuple[int, ...]
    n_ref: int
    m_paths: int
    p_list: tuple[float, ...]
    master_seed: int
    scheme: SchemeKind
    error_norm: ErrorNorm = ErrorNorm.ENDPOINT
    workers: int = 1

    def __post_init__(self):
        if not self.n_list:
            raise ConfigInvalid("n_list must not be empty")
        if any(n < 1 for n in self.n_list):
            raise ConfigInvalid("step counts must be >= 1")
        if list(self.n_list) != sorted(set(self.n_list)):
            raise ConfigInvalid("n_list must be strictly increasing")
        for n in self.n_list:
            if self.n_ref % n != 0:
                raise ConfigInvalid(f"n = {n} does not divide n_ref = {self.n_ref}")
        if self.n_ref // max(self.n_list) < 4:
            raise ConfigInvalid("n_ref must be at least 4x finer than max(n_list)")
        if self.m_paths < 1:
            raise ConfigInvalid("m_paths must be >= 1")
        if not self.p_list or any(p < 1.0 for p in self.p_list):
            raise ConfigInvalid("p_list must be non-empty with every p >= 1")
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")


@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float


@dataclass
class EstimateRow:
    n: int
    p: float
    estimate: float
    ci_halfwidth: float


@dataclass
class ConvergenceReport:
    rows: list[EstimateRow]
    fits: dict[float, RateFit]
    overflow_counts: dict = field(default_factory=dict)


SignChangeReport = ConvergenceReport


def _lp_with_ci(values: np.ndarray, p: float) -> tuple[float, float]:
    """(mean of values^p)^{1/p} with a delta-method normal CI halfwidth."""
    powers = values**p
    mean = float(powers.mean())
    est = mean ** (1.0 / p)
    if values.size < 2 or mean == 0.0:
        return est, 0.0
    sd = float(powers.std(ddof=1))
    hw_mean = 1.96 * sd / math.sqrt(values.size)
    return est, hw_mean / p * mean ** (1.0 / p - 1.0)


def fit_rate(rows: list[tuple[int, float]]) -> RateFit:
    """Least squares of log2(error) on log2(1/n); the slope is the empirical order."""
    if len(rows) < 3:
        raise TooFewRows(f"need >= 3 rows to fit a rate, got {len(rows)}")
    if any(err <= 0.0 for _, err in rows):
        raise ZeroErrorRow("cannot fit a rate through zero or negative errors")
    xs = np.array([-math.log2(n) for n, _ in rows])
    ys = np.array([math.log2(err) for _, err in rows])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 and ss_res == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(slope=float(slope), intercept=float(intercept), r2=r2)


def _chunks(m_paths: int, workers: int) -> list[range]:
    bounds = np.linspace(0, m_paths, num=min(workers, m_paths) + 1, dtype=int)
    return [range(a, b) for a, b in zip(bounds, bounds[1:]) if a < b]


def _map_chunks(worker, m_paths: int, workers: int) -> list:
    chunks = _chunks(m_paths, workers)
    if workers <= 1 or len(chunks) <= 1:
        return [worker(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(worker, chunks))


def _must_not_overflow(scheme: SchemeKind) -> bool:
    return scheme in (SchemeKind.TAMED_EULER, SchemeKind.TRANSFORMED_TAMED_EULER)


def _error_worker(
    pids: range,
    problem: SdeProblem,
    config: ConvergenceConfig,
    transform: Transform | None,
):
    n_list = config.n_list
    errs = np.zeros((len(pids), len(n_list)))
    valid = np.ones((len(pids), len(n_list)), dtype=bool)
    ref_overflow = np.zeros(len(pids), dtype=bool)
    for k, pid in enumerate(pids):
        lattice = sample(config.master_seed, pid, config.n_ref)
        ref = simulate_path(problem, config.scheme, config.n_ref, lattice.increments, transform)
        if ref.overflow:
            if _must_not_overflow(config.scheme):
                raise OverflowInEstimate(f"reference path {pid} overflowed under {config.scheme.value}")
            ref_overflow[k] = True
            valid[k, :] = False
            continue
        for j, n in enumerate(n_list):
            inc = coarsen(lattice, config.n_ref // n)
            pr = simulate_path(problem, config.scheme, n, inc, transform)
            if pr.overflow:
                if _must_not_overflow(config.scheme):
                    raise OverflowInEstimate(f"path {pid} at n={n} overflowed under {config.scheme.value}")
                valid[k, j] = False
                continue
            if config.error_norm is ErrorNorm.ENDPOINT:
                errs[k, j] = abs(ref.values[-1] - pr.values[-1])
            else:
                stride = config.n_ref // n
                errs[k, j] = float(np.max(np.abs(ref.values[::stride] - pr.values)))
    return errs, valid, ref_overflow


def estimate_strong_error(
    problem: SdeProblem,
    config: ConvergenceConfig,
    transform: Transform | None = None,
) -> ConvergenceReport:
    """Coupled L_p error table against the fine-grid reference, with rate fits."""
    if config.scheme is SchemeKind.TRANSFORMED_TAMED_EULER and transform is None:
        raise ConfigInvalid("transformed scheme requires a transform")
    worker = partial(_error_worker, problem=problem, config=config, transform=transform)
    parts = _map_chunks(worker, config.m_paths, config.workers)
    errs = np.vstack([p[0] for p in parts])
    valid = np.vstack([p[1] for p in parts])
    ref_overflow = np.concatenate([p[2] for p in parts])

    overflow_counts: dict = {}
    if int(ref_overflow.sum()):
        overflow_counts["ref"] = int(ref_overflow.sum())
    rows = []
    fit_inputs: dict[float, list[tuple[int, float]]] = {p: [] for p in config.p_list}
    for j, n in enumerate(config.n_list):
        col_valid = valid[:, j]
        dropped = int((~col_valid).sum())
        if dropped:
            overflow_counts[n] = dropped
        col = errs[col_valid, j]
        if col.size == 0:
            raise ConvergenceError(f"no non-overflowed paths left at n={n}")
        for p in config.p_list:
            est, hw = _lp_with_ci(col, p)
            rows.append(EstimateRow(n=n, p=p, estimate=est, ci_halfwidth=hw))
            fit_inputs[p].append((n, est))
    fits = {}
    for p, pairs in fit_inputs.items():
        try:
            fits[p] = fit_rate(pairs)
        except (TooFewRows, ZeroErrorRow):
            pass
    return ConvergenceReport(rows=rows, fits=fits, overflow_counts=overflow_counts)


def _sign_change_worker(
    pids: range,
    problem: SdeProblem,
    scheme: SchemeKind,
    n_list: tuple[int, ...],
    refine: int,
    xi: float,
    master_seed: int,
    transform: Transform | None,
):
    stats = np.zeros((len(pids), len(n_list)))
    valid = np.ones((len(pids), len(n_list)), dtype=bool)
    for k, pid in enumerate(pids):
        for j, n in enumerate(n_list):
            lattice = sample(master_seed, pid, n * refine)
            pr = interpolate_on_fine_grid(problem, scheme, n, lattice, refine, transform)
            if pr.overflow:
                if _must_not_overflow(scheme):
                    raise OverflowInEstimate(f"path {pid} at n={n} overflowed under {scheme.value}")
                valid[k, j] = False
                continue
            fine = pr.fine_values
            n_fine = n * refine
            coarse_idx = np.arange(n_fine) // refine
            straddle = (fine[:-1] - xi) * (pr.values[coarse_idx] - xi) <= 0.0
            stats[k, j] = float(straddle.mean())
    return stats, valid


def sign_change_statistic(
    problem: SdeProblem,
    scheme: SchemeKind,
    n_list: tuple[int, ...],
    refine: int,
    xi: float,
    m_paths: int,
    p_list: tuple[float, ...],
    master_seed: int,
    transform: Transform | None = None,
    workers: int = 1,
) -> SignChangeReport:
    """Time measure of sign straddles of the level xi between grid points.

    Per path the integral over [0, 1] of 1{(X_t - xi)(X_{floor} - xi) <= 0}
    is approximated by the fraction of refinement-grid points satisfying the
    straddle condition; the statistic always lies in [0, 1].
    """
    if refine < 8:
        raise ConfigInvalid(f"refine must be >= 8, got {refine}")
    if not n_list or list(n_list) != sorted(set(n_list)):
        raise ConfigInvalid("n_list must be non-empty and strictly increasing")
    if m_paths < 1:
        raise ConfigInvalid("m_paths must be >= 1")
    if not p_list or any(p < 1.0 for p in p_list):
        raise ConfigInvalid("p_list must be non-empty with every p >= 1")
    sigma_at_xi = evaluate(problem.diffusion, xi, Side.EXACT)
    if abs(sigma_at_xi) <= 1e-12:
        warnings.warn(f"sigma({xi}) = {sigma_at_xi}; the decay guarantee needs sigma(xi) != 0")
    worker = partial(
        _sign_change_worker,
        problem=problem,
        scheme=scheme,
        n_list=tuple(n_list),
        refine=refine,
        xi=xi,
        master_seed=master_seed,
        transform=transform,
    )
    parts = _map_chunks(worker, m_paths, workers)
    stats = np.vstack([p[0] for p in parts])
    valid = np.vstack([p[1] for p in parts])

    overflow_counts: dict = {}
    rows = []
    fit_inputs: dict[float, list[tuple[int, float]]] = {p: [] for p in p_list}
    for j, n in enumerate(n_list):
        dropped = int((~valid[:, j]).sum())
        if dropped:
            overflow_counts[n] = dropped
        col = stats[valid[:, j], j]
        if col.size == 0:
            raise ConvergenceError(f"no non-overflowed paths left at n={n}")
        for p in p_list:
            est, hw = _lp_with_ci(col, p)
            rows.append(EstimateRow(n=n, p=p, estimate=est, ci_halfwidth=hw))
            fit_inputs[p].append((n, est))
    fits = {}
    for p, pairs in fit_inputs.items():
        try:
            fits[p] = fit_rate(pairs)
        except (TooFewRows, ZeroErrorRow):
            pass
    return ConvergenceReport(rows=rows, fits=fits, overflow_counts=overflow_counts)


@dataclass
class MomentRow:
    n: int
    estimate: float


def _moment_worker(
    pids: range,
    problem: SdeProblem,
    scheme: SchemeKind,
    n_list: tuple[int, ...],
    p: float,
    master_seed: int,
    transform: Transform | None,
):
    sups = np.zeros((len(pids), len(n_list)))
    valid = np.ones((len(pids), len(n_list)), dtype=bool)
    for k, pid in enumerate(pids):
        for j, n in enumerate(n_list):
            lattice = sample(master_seed, pid, n)
            pr = simulate_path(problem, scheme, n, lattice.increments, transform)
            if pr.overflow:
                if _must_not_overflow(scheme):
                    raise OverflowInEstimate(f"path {pid} at n={n} overflowed under {scheme.value}")
                valid[k, j] = False
                continue
            sups[k, j] = float(np.max(np.abs(pr.values)))
    return sups, valid


def moment_estimate(
    problem: SdeProblem,
    scheme: SchemeKind,
    n_list: tuple[int, ...],
    m_paths: int,
    p: float,
    master_seed: int,
    transform: Transform | None = None,
    workers: int = 1,
) -> tuple[list[MomentRow], dict]:
    """Monte Carlo estimate of E[(sup-grid |X|)^p]^{1/p} per step count.

    Used to check boundedness of the grid-sup moments uniformly in n.
    """
    if m_paths < 1 or not n_list:
        raise ConfigInvalid("need m_paths >= 1 and a non-empty n_list")
    if p < 1.0:
        raise ConfigInvalid("p must be >= 1")
    worker = partial(
        _moment_worker,
        problem=problem,
        scheme=scheme,
        n_list=tuple(n_list),
        p=p,
        master_seed=master_seed,
        transform=transform,
    )
    parts = _map_chunks(worker, m_paths, workers)
    sups = np.vstack([q[0] for q in parts])
    valid = np.vstack([q[1] for q in parts])
    overflow_counts: dict = {}
    rows = []
    for j, n in enumerate(n_list):
        dropped = int((~valid[:, j]).sum())
        if dropped:
            overflow_counts[n] = dropped
        col = sups[valid[:, j], j]
        if col.size == 0:
            raise ConvergenceError(f"no non-overflowed paths left at n={n}")
        est, _ = _lp_with_ci(col, p)
        rows.append(MomentRow(n=n, estimate=est))
    return rows, overflow_counts
