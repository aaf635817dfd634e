"""f-rewarded polymer forests: coalescence, canopies and the coalescence events.

On the grid every path is a jump table Z with Z[k] the entry into line k
(Z[0] the start) and Z[n + 1] the end, so Z[k + 1] is the exit of line k.

* Forward coalescence of two polymers to a common end happens on the lowest
  line k from which all exits agree.
* Backward coalescence of two f-rewarded polymers happens on the highest line
  whose entries agree.  Polymers from different roots share no point; their
  backward time is taken as 0, the bottom of the range [0, 1].

Mesh points i * eps are always snapped to line-0 grid points through
:func:`mesh_start`, so the late coalescence scan, the special points and the
quilt fabrics agree on which grid point represents a mesh point.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dfield

import numpy as np

from . import lpp
from .env import BrownianField
from .profiles import (InitialCondition, default_y_grid, narrow_wedge, profile_from_sweep,
                       rewarded_sweep, y_indices)
from .scaled import n23, polymer_from_staircase, scaled_x, snap

MESH_TOL = 1e-9


class UntrustedWindowError(RuntimeError):
    """A polymer root lies too close to the grid edge for the window to decide."""


def _as_condition(start):
    return start if isinstance(start, InitialCondition) else narrow_wedge(float(start))


def forward_lines(Za, Zb) -> np.ndarray:
    """Lowest line from which all exits agree, per column."""
    eq = Za[1:] == Zb[1:]
    tail = np.cumprod(eq[::-1], axis=0).sum(axis=0)
    return Za.shape[0] - 1 - tail


def backward_lines(Z, c1, c2) -> int:
    """Highest line whose entries agree for columns c1, c2 of an f-rewarded jump table; -1 if none."""
    eq = np.flatnonzero(Z[:-1, c1] == Z[:-1, c2])
    return int(eq.max()) if len(eq) and Z[0, c1] == Z[0, c2] else -1


def mesh_start(grid, n, eps, i) -> int:
    """Line-0 grid index representing the mesh point i * eps."""
    pos = 2.0 * n23(n) * i * eps
    if not grid.contains(pos):
        raise ValueError(f"mesh point {i} * {eps} lies outside the grid window")
    return int(grid.nearest_index(pos))


def mesh_neighbours(r, eps):
    """(floor, ceil) of r / eps, treating r within MESH_TOL of the mesh as on it."""
    q = r / eps
    return int(math.floor(q + MESH_TOL)), int(math.ceil(q - MESH_TOL))


def level_line(n, s) -> int:
    if not 0 <= s < 1:
        raise ValueError("level must lie in [0, 1)")
    return int(round(n * s))


def threshold_line(n, eps) -> int:
    """Line of the height 1 - eps^{3/2}, or -1 when that height is not positive."""
    h = 1.0 - eps ** 1.5
    if h <= 0:
        return -1
    return int(round(n * h))


class Forest:
    """Per-trial cache: the f-rewarded sweep, its jump table over the y-grid and point-to-point paths."""

    def __init__(self, field: BrownianField, n, f: InitialCondition, y_grid=None):
        self.field = field
        self.grid = field.grid
        self.n = int(n)
        self.f = f
        self.y_grid = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
        self.yi = y_indices(field, n, self.y_grid)
        self.sweep = rewarded_sweep(field, n, f)
        self.Z = lpp.trace(self.sweep.backpointers, self.yi)
        self.roots = self.Z[0]
        self.j_hi = int(self.yi.max()) + 1
        self._paths = {}

    @property
    def profile_values(self) -> np.ndarray:
        return profile_from_sweep(self.field, self.n, self.sweep, self.y_grid, self.yi)

    def x_of(self, index) -> float:
        return float(scaled_x(self.grid, self.n, index, 0))

    def point_paths(self, a, cache=True):
        """(Z, exists) for geodesics from line-0 grid index a to every y-grid point."""
        hit = self._paths.get(a)
        if hit is not None:
            return hit
        a = int(a)
        if a >= self.j_hi:
            Z = np.full((self.n + 2, len(self.yi)), -1, dtype=np.int64)
            out = (Z, np.zeros(len(self.yi), dtype=bool))
        else:
            row, bp = lpp.sweep(self.field, lpp.point_init(self.field, a), 0, self.n, a, self.j_hi)
            Z = lpp.trace(bp, self.yi)
            out = (Z, (self.yi >= a) & np.isfinite(row[self.yi]))
        if cache:
            self._paths[a] = out
        return out


# ---------------------------------------------------------------- polymers

def f_rewarded_polymer(field, n, f, y, forest=None):
    """(Polymer, root) of the f-rewarded polymer ending at (y, 1); leftmost root on ties."""
    fo = forest or Forest(field, n, f, [y])
    c = int(np.argmin(np.abs(fo.y_grid - y))) if forest is not None else 0
    z = fo.Z[:, c]
    s = lpp.Staircase((int(z[0]), 0), (int(z[-1]), fo.n), z[1:-1])
    p = polymer_from_staircase(field, fo.n, s)
    return p, fo.x_of(z[0])


def forward_coalescence_time(field, n, x1, x2, y) -> float:
    """Lowest height at which the polymers from (x1, 0) and (x2, 0) to (y, 1) share a point."""
    if x2 < x1:
        raise ValueError("need x1 <= x2")
    a, _, _ = snap(field.grid, n, x1, 0.0)
    b, _, _ = snap(field.grid, n, x2, 0.0)
    fo = Forest(field, n, narrow_wedge(x1), [y])
    Za, ea = fo.point_paths(a)
    Zb, eb = fo.point_paths(b)
    if not (ea[0] and eb[0]):
        raise ValueError("one of the polymers does not exist")
    return float(forward_lines(Za, Zb)[0]) / n


def backward_coalescence_time(field, n, start, y1, y2) -> float:
    """Highest height at which the polymers from ``start`` (x or f) to y1 and y2 share a point.

    Polymers with different roots share nothing; the time is then 0.
    """
    if y2 < y1:
        raise ValueError("need y1 <= y2")
    fo = Forest(field, n, _as_condition(start), [y1, y2] if y2 > y1 else [y1])
    k = backward_lines(fo.Z, 0, len(fo.y_grid) - 1)
    return max(k, 0) / n


# ---------------------------------------------------------------- canopies

@dataclass
class SplitPiece:
    first: int  # y-grid indices, inclusive
    last: int
    interval: tuple
    rni: int
    mesh_index: int  # line-0 grid index of rni * eps


@dataclass
class Canopy:
    first: int
    last: int
    interval: tuple
    root: float
    root_index: int
    level: float
    level_line: int
    special_point: float | None = None
    special_index: int | None = None
    pieces: list = dfield(default_factory=list)


@dataclass
class CanopyDecomposition:
    level: float
    level_line: int
    y_grid: np.ndarray
    canopies: list
    boundaries: np.ndarray
    split_pieces: list
    eps: float | None = None

    @property
    def count(self) -> int:
        return len(self.canopies)

    def to_json(self) -> str:
        return json.dumps({
            "level": self.level, "level_line": self.level_line, "eps": self.eps,
            "canopy_count": self.count,
            "boundaries": [float(b) for b in self.boundaries],
            "roots": [c.root for c in self.canopies],
            "special_points": [c.special_point for c in self.canopies],
            "rnis": [p.rni for p in self.split_pieces],
        })


def canopy_classes(Z, k) -> list:
    """Contiguous runs of y-grid columns whose entries into line k agree (k = 0: one class)."""
    Y = Z.shape[1]
    if k <= 0:
        return [(0, Y - 1)]
    e = Z[k]
    cuts = np.flatnonzero(e[1:] != e[:-1]) + 1
    bounds = np.concatenate(([0], cuts, [Y]))
    return [(int(bounds[i]), int(bounds[i + 1] - 1)) for i in range(len(bounds) - 1)]


def canopy_count(forest: Forest, k) -> int:
    return len(canopy_classes(forest.Z, k))


def special_point_and_split(field, n, f, canopy: Canopy, eps, forest=None):
    """Special point of a canopy and its split pieces with root neighbour indices.

    spec is the first canopy grid point y at which the polymers from r_- and r
    to y have met by the canopy level; [first, spec) takes rni = ceil(r / eps)
    and [spec, last] takes rni = floor(r / eps).
    """
    fo = forest or Forest(field, n, f)
    g = fo.grid
    k = canopy.level_line
    i_lo, i_hi = mesh_neighbours(canopy.root, eps)
    lo_idx = mesh_start(g, n, eps, i_lo)
    r_idx = canopy.root_index
    cols = np.arange(canopy.first, canopy.last + 1)
    if lo_idx == r_idx:
        met = np.ones(len(cols), dtype=bool)
    else:
        Zl, el = fo.point_paths(lo_idx)
        Zr, er = fo.point_paths(r_idx)
        met = (forward_lines(Zl[:, cols], Zr[:, cols]) <= k) & el[cols] & er[cols]
    hits = np.flatnonzero(met)
    pieces = []
    y = fo.y_grid
    if len(hits):
        spec = int(cols[hits[0]])
        special = float(y[spec])
    else:
        spec = canopy.last + 1
        special = float(y[canopy.last])
    if spec > canopy.first:
        pieces.append(SplitPiece(canopy.first, spec - 1, (float(y[canopy.first]), float(y[spec - 1])),
                                 i_hi, mesh_start(g, n, eps, i_hi)))
    if spec <= canopy.last:
        pieces.append(SplitPiece(spec, canopy.last, (float(y[spec]), float(y[canopy.last])),
                                 i_lo, lo_idx))
    return special, pieces


def canopy_decomposition(field, n, f, s, y_grid=None, eps=None, forest=None) -> CanopyDecomposition:
    """Canopies at level s (rounded to a line); with ``eps`` also special points and split pieces."""
    if not 0 < s < 1:
        raise ValueError("level must lie in (0, 1)")
    return _decompose(forest or Forest(field, n, f, y_grid), level_line(n, s), s, eps)


def _decompose(fo: Forest, k, s, eps=None) -> CanopyDecomposition:
    y = fo.y_grid
    canopies = []
    for a, b in canopy_classes(fo.Z, k):
        r_idx = int(fo.roots[a])
        canopies.append(Canopy(a, b, (float(y[a]), float(y[b])), fo.x_of(r_idx), r_idx, s, k))
    pieces = []
    if eps is not None:
        for c in canopies:
            c.special_point, c.pieces = special_point_and_split(fo.field, fo.n, fo.f, c, eps, fo)
            c.special_index = next((p.first for p in c.pieces if p.rni == mesh_neighbours(c.root, eps)[0]),
                                   c.last)
            pieces.extend(c.pieces)
        starts = [p.first for p in pieces]
    else:
        starts = [c.first for c in canopies]
    # interior boundaries sit midway between neighbouring grid-resolved pieces
    bounds = np.array([y[0]] + [0.5 * (y[i - 1] + y[i]) for i in starts[1:]] + [y[-1]])
    return CanopyDecomposition(s, k, y, canopies, bounds, pieces, eps)


# ---------------------------------------------------------------- events

def _x_indices(grid, n, K):
    lo = 2.0 * n23(n) * -K
    hi = 2.0 * n23(n) * K
    i0 = max(0, math.ceil((lo - grid.origin) / grid.spacing - 1e-9))
    i1 = min(grid.num_points - 1, math.floor((hi - grid.origin) / grid.spacing + 1e-9))
    return np.arange(i0, i1 + 1)


def late_coal_event(field, n, K, eps, x_grid=None, y_grid=None, forest=None, stop_at_first=False):
    """(occurred, witnesses): some x in [-K, K] and y whose polymers from floor/ceil mesh
    neighbours and x pairwise meet only above height 1 - eps^{3/2}.

    ``x_grid`` defaults to every line-0 grid point in [-K, K]; witnesses are
    (x, y) pairs in scaled units.
    """
    k = threshold_line(n, eps)
    if k < 0:
        return False, []
    fo = forest or Forest(field, n, narrow_wedge(0.0), y_grid)
    g = fo.grid
    if x_grid is None:
        xs = _x_indices(g, n, K)
    else:
        xs = np.unique([snap(g, n, x, 0.0)[0] for x in np.atleast_1d(x_grid)])
    xval = scaled_x(g, n, xs, 0)
    cells = np.floor(xval / eps + MESH_TOL).astype(np.int64)
    witnesses = []
    for i in np.unique(cells):
        a = mesh_start(g, n, eps, int(i))
        b = mesh_start(g, n, eps, int(i) + 1)
        Za, ea = fo.point_paths(a)
        Zb, eb = fo.point_paths(b)
        late_ab = (forward_lines(Za, Zb) > k) & ea & eb
        if not late_ab.any():
            continue
        for x in xs[cells == i]:
            if x == a or x == b:
                continue
            Zx, ex = fo.point_paths(int(x), cache=False)
            w = late_ab & ex & (forward_lines(Za, Zx) > k) & (forward_lines(Zx, Zb) > k)
            for c in np.flatnonzero(w):
                witnesses.append((fo.x_of(x), float(fo.y_grid[c])))
                if stop_at_first:
                    return True, witnesses
    return bool(witnesses), witnesses


def _edge(fo, idx, margin):
    return idx < margin or idx >= fo.grid.num_points - margin


def reg_fluc_event(field, n, f, R, forest=None, edge_margin=2, strict=True):
    """Roots of the polymers to y = -1 and y = 1 lie in [-(R + 1), R + 1] (one-sided each).

    Raises UntrustedWindowError (or, with ``strict=False``, returns None)
    when a root lies within ``edge_margin`` grid points of the grid edge.
    """
    fo = forest or Forest(field, n, f, [-1.0, 1.0])
    left, right = int(fo.roots[0]), int(fo.roots[-1])
    if _edge(fo, left, edge_margin) or _edge(fo, right, edge_margin):
        if strict:
            raise UntrustedWindowError("polymer root at the window edge")
        return None
    return bool(fo.x_of(left) >= -(R + 1) - 1e-12 and fo.x_of(right) <= R + 1 + 1e-12)


def scale_K(D, eps) -> float:
    return D * max(math.log(1.0 / eps), 0.0) ** (1 / 3)


def clamp_K(grid, n, K, eps, margin=2):
    """Largest usable K: mesh neighbours of [-K, K] and a margin must stay on the grid."""
    x_lo = -grid.origin / (2.0 * n23(n))
    x_hi = (grid.origin + (grid.num_points - 1) * grid.spacing) / (2.0 * n23(n))
    room = min(x_lo, x_hi) - eps - margin * grid.spacing / (2.0 * n23(n))
    return (K, False) if K <= room else (max(room, 0.0), True)


def normal_coal_event(field, n, f, D, eps, chi, forest=None, short_circuit=False):
    """NoLateCoal on [-K, K] and RegFluc(K - 1) and Canopy#(1 - eps^{3/2}) <= eps^{-1-chi},
    with K = D (log 1/eps)^{1/3} clamped to the window.

    Returns (occurred, report).  With ``short_circuit`` later sub-events are
    skipped (reported as None) once one fails.
    """
    if not (D > 0 and chi > 0 and 0 < eps <= 1):
        raise ValueError("need D > 0, chi > 0 and 0 < eps <= 1")
    fo = forest or Forest(field, n, f)
    K, clamped = clamp_K(fo.grid, n, scale_K(D, eps), eps)
    k = threshold_line(n, eps)
    count = canopy_count(fo, max(k, 0))
    bound = eps ** (-1 - chi)
    report = {"eps": eps, "K": K, "K_clamped": clamped, "level_line": max(k, 0),
              "canopy_count": count, "canopy_bound": bound, "canopy_ok": count <= bound + 1e-9,
              "reg_fluc": None, "untrusted": False, "late_coal": None}
    ok = report["canopy_ok"]
    if ok or not short_circuit:
        rf = reg_fluc_event(field, n, f, K - 1, forest=fo, strict=False)
        report["untrusted"] = rf is None
        report["reg_fluc"] = bool(rf)
        ok = ok and bool(rf)
    if ok or not short_circuit:
        late, _ = late_coal_event(field, n, K, eps, forest=fo, stop_at_first=True)
        report["late_coal"] = late
        ok = ok and not late
    return bool(ok), report


def dyadic_eps(n, j):
    """(eps, m) for the mesh-adjusted scale: the smallest u >= 2^j with n u^{-3/2} an integer m.

    Returns None when no such u exists (2^{3j/2} > n).
    """
    m = math.floor(n * 2.0 ** (-1.5 * j) + 1e-9)
    if m < 1:
        return None
    return (m / n) ** (2 / 3), m


def default_j_max(n) -> int:
    j = 0
    while dyadic_eps(n, j + 1) is not None:
        j += 1
    return j


@dataclass
class ScaleSearch:
    gamma: float | None
    eps: float | None
    j: int | None
    error_flag: bool
    reports: list


def dyadic_scale_search(field, n, f, D=2.5, chi=0.5, j_max=None, forest=None) -> ScaleSearch:
    """First j in 0..j_max at which NormalCoal holds at the mesh-adjusted scale; else the error flag."""
    fo = forest or Forest(field, n, f)
    j_max = default_j_max(n) if j_max is None else j_max
    reports = []
    for j in range(j_max + 1):
        de = dyadic_eps(n, j)
        if de is None:
            break
        eps, m = de
        ok, rep = normal_coal_event(field, n, f, D, eps, chi, forest=fo, short_circuit=True)
        rep["j"] = j
        rep["m"] = m
        reports.append(rep)
        if ok:
            return ScaleSearch(1.0 / eps, eps, j, False, reports)
    return ScaleSearch(None, None, None, True, reports)
