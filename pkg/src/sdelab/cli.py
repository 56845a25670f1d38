"""Command line surface: JSON config ingestion, dispatch and CSV emission.

Usage::

    sdelab <validate|simulate|converge|signchange|transform-check>
           --config <path> [--seed <u64>]

Problems carry expressions with shell-hostile characters, so everything but
the subcommand, the config path and an optional seed override lives in a JSON
document.  Unknown keys anywhere in the document are an error, which guards
against typos silently changing experiments.  Exit codes: 0 success, 1 domain
failure (validation failed, overflow, tolerance breach), 2 usage or config
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from .brownian import sample
from .convergence import (
    ConfigInvalid,
    ConvergenceConfig,
    ConvergenceError,
    ErrorNorm,
    OverflowInEstimate,
    estimate_strong_error,
    sign_change_statistic,
)
from .expr import EvaluationError, ExprError, ExprSyntaxError
from .model import CheckGrid, ModelError, SdeProblem, make_problem, validate
from .schemes import SchemeKind, SchemesError, simulate_path
from .transform import TransformError, build_transform, g, g_inverse, g_prime, transformed_coeffs

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_CONFIG = 2

MU_TILDE_GAP_OFFSETS = (1e-4, 1e-6, 1e-8)
MU_TILDE_GAP_TOL = 1e-4  # at offset 1e-6
GPRIME_BOUNDS = (0.5, 1.5)
INVERSE_ROUNDTRIP_TOL = 1e-10


class ConfigError(Exception):
    pass


def _check_keys(block: dict, allowed: dict[str, bool], context: str) -> None:
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {context}")
    missing = [k for k, required in allowed.items() if required and k not in block]
    if missing:
        raise ConfigError(f"missing required key(s) {missing} in {context}")


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(
        doc,
        {
            "problem": True,
            "output": False,
            "validate": False,
            "converge": False,
            "signchange": False,
            "simulate": False,
            "transform_check": False,
        },
        "config root",
    )
    return doc


def _problem_from_config(doc: dict) -> SdeProblem:
    block = doc["problem"]
    _check_keys(
        block,
        {"drift": True, "diffusion": True, "breakpoints": False, "ell": True, "x0": True},
        "problem block",
    )
    return make_problem(
        drift=block["drift"],
        diffusion=block["diffusion"],
        ell=block["ell"],
        x0=block["x0"],
        declared_breakpoints=tuple(block.get("breakpoints", ())),
    )


def _command_block(doc: dict, name: str) -> dict:
    if name not in doc:
        raise ConfigError(f"config is missing the {name!r} block")
    return doc[name]


def _output_config(doc: dict) -> tuple[str, int]:
    block = _command_block(doc, "output")
    _check_keys(block, {"csv_path": True, "precision": False}, "output block")
    precision = int(block.get("precision", 17))
    if not 1 <= precision <= 17:
        raise ConfigError("output.precision must be in [1, 17]")
    return block["csv_path"], precision


def _fmt(value: float, precision: int = 17) -> str:
    return f"{float(value):.{precision}g}"


def cmd_validate(doc: dict, seed_override: int | None) -> int:
    problem = _problem_from_config(doc)
    block = _command_block(doc, "validate")
    _check_keys(
        block,
        {
            "range": True,
            "count": True,
            "pair_count": True,
            "seed": True,
            "onesided_cap": False,
            "growth_cap": False,
            "sigma_lip_cap": False,
        },
        "validate block",
    )
    lo, hi = block["range"]
    grid = CheckGrid(
        lo=float(lo),
        hi=float(hi),
        count=int(block["count"]),
        pair_count=int(block["pair_count"]),
        seed=int(block["seed"]) if seed_override is None else seed_override,
        onesided_cap=block.get("onesided_cap"),
        growth_cap=block.get("growth_cap"),
        sigma_lip_cap=block.get("sigma_lip_cap"),
    )
    report = validate(problem, grid)
    for condition, witness, value in report.violations:
        print(f"{condition}\t{witness}\t{_fmt(value)}")
    print(f"gamma\t{_fmt(report.gamma)}")
    print(f"lambda_hat\t{_fmt(report.lambda_hat)}")
    print(f"onesided_c_hat\t{_fmt(report.onesided_c_hat)}")
    print(f"growth_c_hat\t{_fmt(report.growth_c_hat)}")
    print(f"sigma_lip_hat\t{_fmt(report.sigma_lip_hat)}")
    print(f"ok\t{str(report.ok).lower()}")
    return EXIT_OK if report.ok else EXIT_DOMAIN


def _scheme_and_transform(problem: SdeProblem, name: str):
    scheme = SchemeKind.parse(name)
    transform = build_transform(problem) if scheme is SchemeKind.TRANSFORMED_TAMED_EULER else None
    return scheme, transform


def cmd_converge(doc: dict, seed_override: int | None) -> int:
    problem = _problem_from_config(doc)
    block = _command_block(doc, "converge")
    _check_keys(
        block,
        {
            "scheme": True,
            "n_list": True,
            "n_ref": True,
            "m_paths": True,
            "p_list": True,
            "master_seed": True,
            "error_norm": False,
            "workers": False,
        },
        "converge block",
    )
    scheme, transform = _scheme_and_transform(problem, block["scheme"])
    config = ConvergenceConfig(
        n_list=tuple(int(n) for n in block["n_list"]),
        n_ref=int(block["n_ref"]),
        m_paths=int(block["m_paths"]),
        p_list=tuple(float(p) for p in block["p_list"]),
        master_seed=int(block["master_seed"]) if seed_override is None else seed_override,
        scheme=scheme,
        error_norm=ErrorNorm.parse(block.get("error_norm", "endpoint")),
        workers=int(block.get("workers", 1)),
    )
    csv_path, precision = _output_config(doc)
    report = estimate_strong_error(problem, config, transform)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "h", "p", "error", "ci_halfwidth"])
        for row in report.rows:
            writer.writerow(
                [row.n, _fmt(1.0 / row.n, precision), _fmt(row.p, precision),
                 _fmt(row.estimate, precision), _fmt(row.ci_halfwidth, precision)]
            )
        for p in config.p_list:
            if p in report.fits:
                writer.writerow(["# slope", _fmt(p, precision), _fmt(report.fits[p].slope, precision)])
    return EXIT_OK


def cmd_signchange(doc: dict, seed_override: int | None) -> int:
    problem = _problem_from_config(doc)
    block = _command_block(doc, "signchange")
    _check_keys(
        block,
        {
            "scheme": True,
            "n_list": True,
            "refine": True,
            "xi": True,
            "m_paths": True,
            "p_list": True,
            "master_seed": True,
            "workers": False,
        },
        "signchange block",
    )
    scheme, transform = _scheme_and_transform(problem, block["scheme"])
    csv_path, precision = _output_config(doc)
    report = sign_change_statistic(
        problem,
        scheme,
        n_list=tuple(int(n) for n in block["n_list"]),
        refine=int(block["refine"]),
        xi=float(block["xi"]),
        m_paths=int(block["m_paths"]),
        p_list=tuple(float(p) for p in block["p_list"]),
        master_seed=int(block["master_seed"]) if seed_override is None else seed_override,
        transform=transform,
        workers=int(block.get("workers", 1)),
    )
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "h", "p", "statistic", "ci_halfwidth"])
        for row in report.rows:
            writer.writerow(
                [row.n, _fmt(1.0 / row.n, precision), _fmt(row.p, precision),
                 _fmt(row.estimate, precision), _fmt(row.ci_halfwidth, precision)]
            )
        for p, fit in report.fits.items():
            writer.writerow(["# slope", _fmt(p, precision), _fmt(fit.slope, precision)])
    return EXIT_OK


def cmd_simulate(doc: dict, seed_override: int | None) -> int:
    problem = _problem_from_config(doc)
    block = _command_block(doc, "simulate")
    _check_keys(
        block,
        {"scheme": True, "n": True, "master_seed": True, "path_id": False},
        "simulate block",
    )
    scheme, transform = _scheme_and_transform(problem, block["scheme"])
    n = int(block["n"])
    if n < 1:
        raise ConfigError("simulate.n must be >= 1")
    master_seed = int(block["master_seed"]) if seed_override is None else seed_override
    lattice = sample(master_seed, int(block.get("path_id", 0)), n)
    result = simulate_path(problem, scheme, n, lattice.increments, transform)
    csv_path, precision = _output_config(doc)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "value"])
        for j, value in enumerate(result.values):
            writer.writerow([_fmt(j / n, precision), _fmt(value, precision)])
    return EXIT_OK


def cmd_transform_check(doc: dict, seed_override: int | None) -> int:
    problem = _problem_from_config(doc)
    block = doc.get("transform_check", {})
    _check_keys(
        block,
        {"grid_range": False, "grid_points": False, "inverse_range": False,
         "inverse_points": False, "seed": False},
        "transform_check block",
    )
    transform = build_transform(problem)
    if problem.breakpoints:
        default_range = [min(problem.breakpoints) - 2.0, max(problem.breakpoints) + 2.0]
    else:
        default_range = [-2.0, 2.0]
    lo, hi = block.get("grid_range", default_range)
    grid_points = int(block.get("grid_points", 100_000))
    inv_lo, inv_hi = block.get("inverse_range", [-5.0, 5.0])
    inverse_points = int(block.get("inverse_points", 1000))
    seed = int(block.get("seed", 0)) if seed_override is None else seed_override

    checks: list[tuple[str, float, bool]] = []
    grid = np.linspace(lo, hi, grid_points)
    gp = np.array([g_prime(transform, float(x)) for x in grid])
    checks.append(("gprime_min", float(gp.min()), float(gp.min()) >= GPRIME_BOUNDS[0]))
    checks.append(("gprime_max", float(gp.max()), float(gp.max()) <= GPRIME_BOUNDS[1]))

    rng = np.random.default_rng(seed)
    xs = rng.uniform(inv_lo, inv_hi, size=inverse_points)
    resid = max(abs(g_inverse(transform, g(transform, float(x))) - float(x)) for x in xs)
    checks.append(("inverse_roundtrip_max_residual", resid, resid <= INVERSE_ROUNDTRIP_TOL))

    mu_tilde, _ = transformed_coeffs(transform, problem)
    for xi in problem.breakpoints:
        for offset in MU_TILDE_GAP_OFFSETS:
            gap = abs(mu_tilde(xi + offset) - mu_tilde(xi - offset))
            name = f"mu_tilde_gap_at_{_fmt(xi)}_offset_{offset:g}"
            ok = gap <= MU_TILDE_GAP_TOL if offset == 1e-6 else True
            checks.append((name, gap, ok))

    all_ok = all(ok for _, _, ok in checks)
    for name, value, ok in checks:
        print(f"{name}\t{_fmt(value)}\t{'PASS' if ok else 'FAIL'}")
    print(f"ok\t{str(all_ok).lower()}")
    return EXIT_OK if all_ok else EXIT_DOMAIN


_COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "signchange": cmd_signchange,
    "transform-check": cmd_transform_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sdelab", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the command's seed")
    args = parser.parse_args(argv)
    try:
        doc = _load_config(args.config)
        return _COMMANDS[args.command](doc, args.seed)
    except (ConfigError, ConfigInvalid, ExprSyntaxError, ModelError, SchemesError,
            ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OverflowInEstimate, TransformError, EvaluationError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
