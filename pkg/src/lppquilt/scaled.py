"""Scaled coordinates: the map R_n, zigzag weights and polymers.

An unscaled point (v1, v2), with v2 a line index, maps to
((v1 - v2) / (2 n^{2/3}), v2 / n).  Scaled endpoints are snapped to the
nearest grid point of the field and the snap distance is reported.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import lpp
from .env import BrownianField, GridSpec
from .lpp import Staircase


class NoZigzagError(ValueError):
    """The endpoints admit no zigzag (end too far left of start)."""


class MeshWarning(UserWarning):
    pass


def n23(n) -> float:
    return float(np.cbrt(n) ** 2)


def n13(n) -> float:
    return float(np.cbrt(n))


def scale_point(n, v):
    v1, v2 = v
    return ((v1 - v2) / (2.0 * n23(n)), v2 / n)


def unscale_point(n, p):
    x, t = p
    return (2.0 * n23(n) * x + n * t, n * t)


def mesh_line(n, t, what="time") -> int:
    """n t rounded to an integer line; warns when the rounding is not negligible."""
    k = round(n * t)
    if abs(n * t - k) > 1e-9:
        warnings.warn(f"{what} {t} is off the 1/{n} mesh; rounded to line {k}", MeshWarning,
                      stacklevel=2)
    return int(k)


@dataclass(frozen=True)
class ScaledPoint:
    x: float
    t: float


def snap(grid: GridSpec, n, x, t):
    """Grid index and line of the scaled point (x, t), plus the scaled snap distance."""
    k = mesh_line(n, t)
    pos = 2.0 * n23(n) * x + k
    if not grid.contains(pos):
        raise ValueError(f"scaled point ({x}, {t}) lies outside the grid window")
    idx = grid.nearest_index(pos)
    dist = abs(grid.position(idx) - pos) / (2.0 * n23(n))
    return int(idx), k, float(dist)


def scaled_x(grid: GridSpec, n, index, line):
    """Scaled spatial coordinate of grid index(es) on a line."""
    return (grid.position(index) - line) / (2.0 * n23(n))


def interval_indices(grid: GridSpec, n, interval, t, points=None) -> np.ndarray:
    """Grid indices on line n t whose scaled coordinate lies in the closed interval."""
    a, b = interval
    if b < a:
        raise ValueError("empty interval")
    k = mesh_line(n, t)
    lo = 2.0 * n23(n) * a + k
    hi = 2.0 * n23(n) * b + k
    if not (grid.contains(lo) and grid.contains(hi)):
        raise ValueError(f"interval {interval} lies outside the grid window")
    i0 = math.ceil((lo - grid.origin) / grid.spacing - 1e-9)
    i1 = math.floor((hi - grid.origin) / grid.spacing + 1e-9)
    if i1 < i0:
        idx = np.array([grid.nearest_index(0.5 * (lo + hi))])
    else:
        idx = np.arange(i0, i1 + 1)
    if points is not None and len(idx) > points:
        idx = np.unique(idx[np.rint(np.linspace(0, len(idx) - 1, points)).astype(int)])
    return idx.astype(np.int64)


def zigzag_exists(n, x, t1, y, t2) -> bool:
    return y >= x - 0.5 * n13(n) * (t2 - t1) - 1e-12


def weight_from_energy(grid: GridSpec, n, energy, start, end):
    """Scaled weight of an energy between grid points start = (idx, i) and end = (idx, j)."""
    (a, i), (b, j) = start, end
    pa, pb = grid.position(a), grid.position(b)
    # 2 n^{2/3} (y - x) equals (pb - j) - (pa - i) for the snapped scaled coordinates
    return (np.asarray(energy) - 2.0 * (j - i) - ((pb - j) - (pa - i))) / (math.sqrt(2.0) * n13(n))


def _endpoints(field, n, from_, to):
    if not to.t > from_.t:
        raise ValueError("polymer lifetime must be positive")
    if not zigzag_exists(n, from_.x, from_.t, to.x, to.t):
        raise NoZigzagError(f"no zigzag from {from_} to {to}")
    a, i, da = snap(field.grid, n, from_.x, from_.t)
    b, j, db = snap(field.grid, n, to.x, to.t)
    if b < a:
        raise NoZigzagError("snapped endpoints admit no staircase")
    return (a, i), (b, j), max(da, db)


def weight(field: BrownianField, n, from_: ScaledPoint, to: ScaledPoint) -> float:
    start, end, _ = _endpoints(field, n, from_, to)
    e = lpp.last_passage_value(field, start, end)
    return float(weight_from_energy(field.grid, n, e, start, end))


@dataclass(frozen=True, eq=False)
class Polymer:
    n: int
    from_: ScaledPoint
    to: ScaledPoint
    staircase: Staircase
    weight: float
    grid: GridSpec
    snap_distance: float = 0.0

    @property
    def lifetime(self) -> float:
        return self.to.t - self.from_.t

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "from": [self.from_.x, self.from_.t],
                           "to": [self.to.x, self.to.t], "weight": self.weight,
                           "jumps": self.staircase.jumps.tolist()})


def polymer_from_staircase(field, n, s: Staircase, energy=None, snap_distance=0.0) -> Polymer:
    g = field.grid
    (a, i), (b, j) = s.start, s.end
    e = lpp.staircase_energy(field, s) if energy is None else energy
    w = float(weight_from_energy(g, n, e, s.start, s.end))
    fr = ScaledPoint(float(scaled_x(g, n, a, i)), i / n)
    to = ScaledPoint(float(scaled_x(g, n, b, j)), j / n)
    return Polymer(n, fr, to, s, w, g, snap_distance)


def polymer(field: BrownianField, n, from_: ScaledPoint, to: ScaledPoint) -> Polymer:
    """The leftmost-tie polymer between the snapped endpoints."""
    start, end, dist = _endpoints(field, n, from_, to)
    s = lpp.geodesic(field, start, end)
    return polymer_from_staircase(field, n, s, snap_distance=dist)


def interpolant(p: Polymer, t) -> float:
    """The planar segment joining the polymer's endpoints, evaluated at time t."""
    t1, t2 = p.from_.t, p.to.t
    return ((t2 - t) * p.from_.x + (t - t1) * p.to.x) / (t2 - t1)


def _extremal(candidates, ell):
    candidates = np.asarray(candidates, dtype=float)
    d = np.abs(candidates - ell)
    far = candidates[d >= d.max() - 1e-12]
    above = far[far >= ell - 1e-12]
    return float(above.max() if len(above) else far.min())


def _check_time(p: Polymer, t) -> int:
    if not p.from_.t - 1e-12 <= t <= p.to.t + 1e-12:
        raise ValueError(f"time {t} outside the polymer lifetime")
    k = round(p.n * t)
    if abs(p.n * t - k) > 1e-9:
        raise ValueError(f"time {t} is not on the 1/{p.n} mesh")
    return int(k)


def polymer_position(p: Polymer, t) -> float:
    """Point of the horizontal segment at height t farthest from the interpolant.

    Ties go to the point right of the interpolant.  At the lifetime ends the
    polymer's endpoints are returned.
    """
    k = _check_time(p, t)
    if k == p.staircase.start[1]:
        return p.from_.x
    if k == p.staircase.end[1]:
        return p.to.x
    lo, hi = p.staircase.segment(k)
    ends = scaled_x(p.grid, p.n, np.array([lo, hi]), k)
    return _extremal(ends, interpolant(p, k / p.n))


def polymer_position_union(polys, t) -> float:
    """Position convention for a set of tied polymers: extremal point of the union."""
    p0 = polys[0]
    k = _check_time(p0, t)
    if k == p0.staircase.start[1]:
        return p0.from_.x
    if k == p0.staircase.end[1]:
        return p0.to.x
    pts = []
    for p in polys:
        lo, hi = p.staircase.segment(k)
        pts.extend(scaled_x(p.grid, p.n, np.array([lo, hi]), k))
    return _extremal(pts, interpolant(p0, k / p0.n))


def poly_dev_reg_event(p: Polymer, a, r) -> bool:
    """|rho(t) - l(t)| <= r t12^{2/3} min(a, 1-a)^{2/3} at t = (1-a) t1 + a t2."""
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    t12 = p.lifetime
    steps = a * t12 * p.n
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError("a t12 n must be an integer")
    t = p.from_.t + round(steps) / p.n
    dev = abs(polymer_position(p, t) - interpolant(p, t))
    return bool(dev <= r * t12 ** (2 / 3) * min(a, 1 - a) ** (2 / 3))
