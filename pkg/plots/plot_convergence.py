#!/usr/bin/env python3
"""Render log-log convergence figures from sdelab CSV tables.

Reads one or more `n,h,p,error,ci_halfwidth` (or `...,statistic,...`) tables,
draws one series per p value on log-log axes with dashed reference-slope
lines anchored at the largest-h point, and writes a PNG or SVG.

The slope is recomputed from the rows rather than trusted from the
`# slope,p,<value>` footer; a mismatch beyond 1e-6 prints a warning, which is
a cheap cross-check of the producer's rate fit.

Usage:
    plot_convergence.py --csv <path>... --out <path> [--slopes 0.5,1.0]

Exit codes: 0 success, 1 nonpositive values (nothing to draw on log axes),
2 schema or usage errors.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.fonttype"] = "none"  # keep SVG text editable
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

EXPECTED_COLUMNS = 5
VALUE_COLUMNS = ("error", "statistic")
FOOTER_PREFIX = "# slope"
SLOPE_WARN_TOL = 1e-6


class SchemaError(Exception):
    pass


class NonPositiveValue(Exception):
    pass


@dataclass
class Series:
    label: str
    h: list[float] = field(default_factory=list)
    value: list[float] = field(default_factory=list)


@dataclass
class Table:
    path: Path
    value_name: str
    series: dict[float, Series]
    footer_slopes: dict[float, float]


def read_table(path: Path) -> Table:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = rows[0]
    if len(header) != EXPECTED_COLUMNS or header[:3] != ["n", "h", "p"] or header[4] != "ci_halfwidth":
        raise SchemaError(f"{path}: unexpected header {header!r}")
    value_name = header[3]
    if value_name not in VALUE_COLUMNS:
        raise SchemaError(f"{path}: value column must be one of {VALUE_COLUMNS}, got {value_name!r}")

    series: dict[float, Series] = {}
    footer: dict[float, float] = {}
    for row in rows[1:]:
        if not row:
            continue
        if row[0].startswith(FOOTER_PREFIX):
            if len(row) != 3:
                raise SchemaError(f"{path}: malformed footer row {row!r}")
            footer[float(row[1])] = float(row[2])
            continue
        if len(row) != EXPECTED_COLUMNS:
            raise SchemaError(f"{path}: malformed data row {row!r}")
        _, h_text, p_text, value_text, _ = row
        h, p, value = float(h_text), float(p_text), float(value_text)
        if value <= 0.0:
            raise NonPositiveValue(f"{path}: nonpositive {value_name} {value} at h={h}")
        series.setdefault(p, Series(label=f"{path.stem} p={p:g}"))
        series[p].h.append(h)
        series[p].value.append(value)
    if not series:
        raise SchemaError(f"{path}: no data rows")
    return Table(path=path, value_name=value_name, series=series, footer_slopes=footer)


def fit_slope(h: list[float], value: list[float]) -> float:
    """Least squares slope of log2(value) against log2(h)."""
    if len(h) < 2:
        raise SchemaError("need at least two rows per series to fit a slope")
    xs = [math.log2(v) for v in h]
    ys = [math.log2(v) for v in value]
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    return sxy / sxx


def cross_check_footer(table: Table) -> None:
    for p, footer_slope in table.footer_slopes.items():
        if p not in table.series:
            continue
        recomputed = fit_slope(table.series[p].h, table.series[p].value)
        if abs(recomputed - footer_slope) > SLOPE_WARN_TOL:
            print(
                f"warning: {table.path} p={p:g}: footer slope {footer_slope:.12g} "
                f"!= recomputed {recomputed:.12g}",
                file=sys.stderr,
            )


def render(tables: list[Table], out: Path, reference_slopes: list[float], title: str | None) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    anchor_h = None
    anchor_v = None
    for table in tables:
        for p in sorted(table.series):
            s = table.series[p]
            order = sorted(range(len(s.h)), key=lambda i: s.h[i])
            hs = [s.h[i] for i in order]
            vs = [s.value[i] for i in order]
            ax.loglog(hs, vs, marker="o", label=s.label)
            if anchor_h is None:
                anchor_h, anchor_v = hs[-1], vs[-1]

    h_all = sorted({h for t in tables for s in t.series.values() for h in s.h})
    for slope in reference_slopes:
        ref = [anchor_v * (h / anchor_h) ** slope for h in h_all]
        ax.loglog(h_all, ref, linestyle="--", color="gray", label=f"slope {slope:g}")

    ax.set_xlabel("step size h")
    ax.set_ylabel(tables[0].value_name)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--csv", nargs="+", required=True, help="input CSV table(s)")
    parser.add_argument("--out", required=True, help="output image path (.png or .svg)")
    parser.add_argument(
        "--slopes",
        default="0.5,1.0",
        help="comma-separated reference slopes to draw (default 0.5,1.0)",
    )
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    try:
        reference_slopes = [float(s) for s in args.slopes.split(",") if s]
    except ValueError:
        print(f"error: bad --slopes value {args.slopes!r}", file=sys.stderr)
        return 2
    try:
        tables = [read_table(Path(p)) for p in args.csv]
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonPositiveValue as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for table in tables:
        cross_check_footer(table)
    render(tables, Path(args.out), reference_slopes, args.title)
    return 0


if __name__ == "__main__":
    sys.exit(main())
