"""Reproducible Brownian increments on a fine lattice, coarsenable on demand.

Increments come from a counter-based Philox generator keyed by
(master_seed, path_id), turned into normals by the inverse CDF applied to
uniforms built from raw 53-bit integers.  This has no sequential state, so
the same (seed, path, resolution) triple yields bit-identical arrays under
any parallel schedule, which is what lets the convergence harness couple
schemes across step sizes on one underlying path.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_BRIDGE_TAG = 0xB51D6E


class BrownianError(Exception):
    pass


class FactorDoesNotDivide(BrownianError):
    pass


@dataclass(frozen=True, eq=False)
class BrownianLattice:
    """Increments of one Brownian path over [0, 1] at the finest resolution.

    increments[i] = W_{(i+1)/n_fine} - W_{i/n_fine} ~ N(0, 1/n_fine), fully
    determined by (master_seed, path_id, n_fine).
    """

    master_seed: int
    path_id: int
    n_fine: int
    increments: np.ndarray


def _uniforms_to_normals(raw: np.ndarray) -> np.ndarray:
    # (k + 0.5) / 2^53 lands strictly inside (0, 1), keeping ndtri finite.
    u = (raw.astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def sample(master_seed: int, path_id: int, n_fine: int) -> BrownianLattice:
    """Deterministically sample a path's increments at resolution 1/n_fine."""
    if n_fine < 1:
        raise BrownianError(f"n_fine must be >= 1, got {n_fine}")
    key = np.array([master_seed & _MASK64, path_id & _MASK64], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    raw = gen.integers(0, 1 << 53, size=n_fine, dtype=np.uint64)
    increments = _uniforms_to_normals(raw) / math.sqrt(n_fine)
    increments.flags.writeable = False
    return BrownianLattice(master_seed=master_seed, path_id=path_id, n_fine=n_fine, increments=increments)


def coarsen(lattice: BrownianLattice, factor: int) -> np.ndarray:
    """Sum consecutive groups of `factor` increments, left to right.

    coarse[j] is the increment of the same Brownian path over the j-th cell
    of the grid with n_fine/factor steps.
    """
    if factor < 1 or lattice.n_fine % factor != 0:
        raise FactorDoesNotDivide(f"factor {factor} does not divide n_fine {lattice.n_fine}")
    groups = lattice.increments.reshape(-1, factor)
    # cumsum accumulates strictly left to right, matching the within-cell
    # prefix sums used by the fine-grid interpolator bit for bit.
    return np.cumsum(groups, axis=1)[:, -1].copy()


def prefix_values(lattice: BrownianLattice) -> np.ndarray:
    """W at the fine grid points: [0, W_{1/n}, ..., W_1] by prefix sums."""
    out = np.empty(lattice.n_fine + 1)
    out[0] = 0.0
    np.cumsum(lattice.increments, out=out[1:])
    return out


def bridge_value(lattice: BrownianLattice, t: float) -> float:
    """W_t for any t in [0, 1], deterministic per query point.

    On fine grid points this is the prefix sum.  Strictly inside a cell it is
    a Brownian-bridge conditional draw from an auxiliary Philox stream keyed
    by (master_seed, path_id, cell, bit pattern of t); distinct query points
    draw independently, so this is a diagnostic sampler rather than a
    consistent refinement of the path.
    """
    if not 0.0 <= t <= 1.0:
        raise BrownianError(f"t must lie in [0, 1], got {t}")
    n = lattice.n_fine
    prefix = prefix_values(lattice)
    cell = math.floor(n * t)
    while cell > 0 and cell / n > t:
        cell -= 1
    while (cell + 1) / n <= t:
        cell += 1
    if cell / n == t:
        return float(prefix[cell])
    left = cell / n
    right = (cell + 1) / n
    w_left = float(prefix[cell])
    w_right = float(prefix[cell + 1])
    theta = (t - left) / (right - left)
    mean = w_left + theta * (w_right - w_left)
    var = (t - left) * (right - t) / (right - left)
    t_bits = struct.unpack("<Q", struct.pack("<d", t))[0]
    key = np.array([lattice.master_seed & _MASK64, lattice.path_id & _MASK64], dtype=np.uint64)
    counter = np.array([0, cell, t_bits, _BRIDGE_TAG], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
    raw = gen.integers(0, 1 << 53, size=1, dtype=np.uint64)
    z = float(_uniforms_to_normals(raw)[0])
    return mean + math.sqrt(var) * z
