"""Unscaled Brownian last passage percolation on a grid.

A staircase from (x, i) to (y, j) is described by its jump indices
z_{i+1} <= ... <= z_j, with z_i = x and z_{j+1} = y, so that line k carries
the horizontal segment [z_k, z_{k+1}].  Its energy is
sum_k B(k, z_{k+1}) - B(k, z_k).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .env import BrownianField, OutOfBandError

BRUTE_FORCE_LIMIT = 10**7


class RefusalError(ValueError):
    """Instance too large for exhaustive enumeration."""


class NoStaircaseError(ValueError):
    """No staircase joins the requested endpoints."""


@dataclass(frozen=True, eq=False)
class Staircase:
    start: tuple[int, int]  # (grid index, line)
    end: tuple[int, int]
    jumps: np.ndarray

    def __post_init__(self):
        jumps = np.asarray(self.jumps, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "jumps", jumps)
        (x, i), (y, j) = self.start, self.end
        if j < i or y < x:
            raise NoStaircaseError("end must be weakly up-right of start")
        if len(jumps) != j - i:
            raise ValueError(f"expected {j - i} jumps, got {len(jumps)}")
        z = self.points
        if np.any(np.diff(z) < 0):
            raise ValueError("jump indices must be non-decreasing within [start, end]")

    @property
    def lines(self) -> np.ndarray:
        return np.arange(self.start[1], self.end[1] + 1)

    @property
    def points(self) -> np.ndarray:
        """z_i, ..., z_{j+1}: segment on line i + r is [points[r], points[r + 1]]."""
        return np.concatenate(([self.start[0]], self.jumps, [self.end[0]])).astype(np.int64)

    def segment(self, line) -> tuple[int, int]:
        r = line - self.start[1]
        if not 0 <= r <= self.end[1] - self.start[1]:
            raise ValueError(f"line {line} outside staircase")
        z = self.points
        return int(z[r]), int(z[r + 1])

    def __eq__(self, other):
        if not isinstance(other, Staircase):
            return NotImplemented
        return (tuple(self.start) == tuple(other.start) and tuple(self.end) == tuple(other.end)
                and np.array_equal(self.jumps, other.jumps))

    def __hash__(self):
        return hash((tuple(self.start), tuple(self.end), self.jumps.tobytes()))

    def to_json(self) -> str:
        return json.dumps({"start": list(self.start), "end": list(self.end),
                           "jumps": self.jumps.tolist()})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(tuple(d["start"]), tuple(d["end"]), np.array(d["jumps"], dtype=np.int64))


@dataclass(frozen=True)
class DisjointFamily:
    members: tuple
    starts: tuple = ()
    ends: tuple = ()

    def __len__(self):
        return len(self.members)


class ProfileResult(NamedTuple):
    values: np.ndarray
    backpointers: np.ndarray


def precedes(a: Staircase, b: Staircase) -> bool:
    """a is weakly left of b: per-line jump-index comparison (including endpoints)."""
    return bool(np.all(a.points <= b.points))


def horizontally_separate(a: Staircase, b: Staircase) -> bool:
    """No line on which the two horizontal segments share more than one grid point."""
    lo = max(a.start[1], b.start[1])
    hi = min(a.end[1], b.end[1])
    za, zb = a.points, b.points
    for k in range(lo, hi + 1):
        ra, rb = k - a.start[1], k - b.start[1]
        left = max(za[ra], zb[rb])
        right = min(za[ra + 1], zb[rb + 1])
        if right - left >= 1:
            return False
    return True


def _check_point(field, idx, line):
    g = field.grid
    if not 0 <= idx < g.num_points:
        raise ValueError(f"grid index {idx} outside grid")
    if not 0 <= line < g.num_lines:
        raise ValueError(f"line {line} outside field")


def point_init(field: BrownianField, x: int) -> np.ndarray:
    init = np.full(field.grid.num_points, -np.inf)
    init[x] = 0.0
    return init


def sweep(field: BrownianField, init, line_lo, line_hi, j_lo=0, j_hi=None):
    """Maximum over staircases entering line ``line_lo`` at w with reward init[w].

    Returns (final row, backpointers) where backpointers[r, y] is the leftmost
    optimal entry into line line_lo + r for a segment ending at y.
    """
    j_hi = field.grid.num_points if j_hi is None else j_hi
    return K.sweep(field.values, field.offsets, field.widths, np.asarray(init, dtype=float),
                   int(line_lo), int(line_hi), int(j_lo), int(j_hi))


def trace(backpointers, ends) -> np.ndarray:
    """Jump table Z (lines + 1, len(ends)); column c lists z_i..z_{j+1} of the path to ends[c]."""
    return K.backtrack_many(backpointers, np.asarray(ends, dtype=np.int64).reshape(-1))


def staircase_energy(field: BrownianField, s: Staircase) -> float:
    z = s.points
    total = 0.0
    for r, k in enumerate(s.lines):
        total += field.value(int(k), int(z[r + 1])) - field.value(int(k), int(z[r]))
    return float(total)


def last_passage_profile(field, start, target_line, low_memory=False, checkpoint=None):
    """Maximum energies from ``start`` = (x, i) to every (y, target_line).

    ``values[y]`` is -inf for y < x or where the band cuts every path.  With
    ``low_memory`` only value rows at checkpoints are stored and backpointers
    are returned as ``None``; use :func:`geodesic` with ``low_memory`` to
    reconstruct paths in that mode.
    """
    x, i = start
    _check_point(field, x, i)
    if target_line < i or target_line >= field.grid.num_lines:
        raise ValueError("target line must satisfy i <= j <= n")
    init = point_init(field, x)
    if low_memory:
        row = _checkpoint_rows(field, init, i, target_line, x, checkpoint)[1]
        return ProfileResult(row, None)
    row, bp = sweep(field, init, i, target_line, x)
    return ProfileResult(row, bp)


def last_passage_value(field, start, end) -> float:
    (x, i), (y, j) = start, end
    if y < x or j < i:
        raise NoStaircaseError("end must be weakly up-right of start")
    _check_point(field, y, j)
    val = last_passage_profile(field, start, j).values[y]
    if not np.isfinite(val):
        raise OutOfBandError("every staircase leaves the stored band")
    return float(val)


def _checkpoint_rows(field, init, line_lo, line_hi, j_lo, c):
    """Rows entering each checkpoint line (every ``c`` lines) and the final row."""
    nl = line_hi - line_lo + 1
    c = c or max(1, int(math.isqrt(nl)))
    saved = {}
    prev = np.asarray(init, dtype=float)
    for lo in range(line_lo, line_hi + 1, c):
        saved[lo] = prev
        hi = min(lo + c - 1, line_hi)
        prev = K.sweep_final(field.values, field.offsets, field.widths, prev,
                             int(lo), int(hi), int(j_lo), field.grid.num_points)
    return saved, prev


def geodesic(field, start, end, low_memory=False, checkpoint=None) -> Staircase:
    """Leftmost-tie geodesic from start = (x, i) to end = (y, j)."""
    (x, i), (y, j) = start, end
    if y < x or j < i:
        raise NoStaircaseError("end must be weakly up-right of start")
    _check_point(field, x, i)
    _check_point(field, y, j)
    init = point_init(field, x)
    if not low_memory:
        row, bp = sweep(field, init, i, j, x)
        if not np.isfinite(row[y]):
            raise OutOfBandError("every staircase leaves the stored band")
        z = trace(bp, [y])[:, 0]
        return Staircase((x, i), (y, j), z[1:-1])
    saved, row = _checkpoint_rows(field, init, i, j, x, checkpoint)
    if not np.isfinite(row[y]):
        raise OutOfBandError("every staircase leaves the stored band")
    pos = y
    pieces = []
    for lo in sorted(saved, reverse=True):
        hi = min(lo + (checkpoint or max(1, int(math.isqrt(j - i + 1)))) - 1, j)
        _, bp = sweep(field, saved[lo], lo, hi, x)
        z = trace(bp, [pos])[:, 0]
        pieces.append(z[:-1])
        pos = int(z[0])
    z = np.concatenate(pieces[::-1] + [[y]])
    return Staircase((x, i), (y, j), z[1:-1])


def _staircase_count(lines, width):
    return math.comb(width + lines - 1, lines)


def enumerate_staircases(start, end):
    """All jump lists from (x, i) to (y, j) as an int array (count, j - i)."""
    (x, i), (y, j) = start, end
    L = j - i
    combos = list(itertools.combinations_with_replacement(range(x, y + 1), L))
    return np.array(combos, dtype=np.int64).reshape(len(combos), L)


def brute_force_last_passage(field, start, end, limit=BRUTE_FORCE_LIMIT, rtol=0.0):
    """Exhaustive maximum energy and every maximizing staircase.

    Maximizers are those within ``rtol`` (absolute) of the maximum; the
    default 0 keeps exact float ties only.
    """
    (x, i), (y, j) = start, end
    if y < x or j < i:
        raise NoStaircaseError("end must be weakly up-right of start")
    count = _staircase_count(j - i, y - x + 1)
    if count > limit:
        raise RefusalError(f"{count} staircases exceeds the enumeration limit {limit}")
    jumps = enumerate_staircases(start, end)
    z = np.hstack([np.full((len(jumps), 1), x), jumps, np.full((len(jumps), 1), y)])
    energy = np.zeros(len(jumps))
    for r in range(j - i + 1):
        k = i + r
        energy += field.value(k, z[:, r + 1]) - field.value(k, z[:, r])
    best = energy.max()
    winners = np.flatnonzero(energy >= best - rtol)
    return float(best), [Staircase((x, i), (y, j), jumps[w]) for w in winners]


def _paths_table(field, starts, ends, line_i, line_j):
    """Z[a] is the jump table (lines + 1, len(ends)) of geodesics from starts[a]."""
    out = []
    for x in starts:
        row, bp = sweep(field, point_init(field, x), line_i, line_j, x)
        z = trace(bp, ends)
        ok = (np.asarray(ends) >= x) & np.isfinite(row[ends])
        out.append((z, ok))
    return out


def max_disjoint_polymers_indices(field, starts, ends, line_i, line_j):
    """Maximum number of pairwise horizontally separate geodesics.

    Endpoints are grid indices: starts on line ``line_i``, ends on line
    ``line_j``.  Geodesic b lies right-separate of a when every entry of b is
    at or right of the matching exit of a; this relation is transitive, so
    the answer is a longest chain, found by a sweep over endpoint pairs in
    lexicographic order (a topological order for the relation).
    """
    starts = np.unique(np.asarray(starts, dtype=np.int64))
    ends = np.unique(np.asarray(ends, dtype=np.int64))
    if len(starts) == 0 or len(ends) == 0:
        raise ValueError("empty endpoint set")
    pairs, paths = [], []
    for x, (z, ok) in zip(starts, _paths_table(field, starts, ends, line_i, line_j)):
        for b in np.flatnonzero(ok):
            pairs.append((int(x), int(ends[b])))
            paths.append(z[:, b])
    if not paths:
        raise NoStaircaseError("no admissible endpoint pair")
    Z = np.array(paths)  # (P, lines + 1), already in lexicographic endpoint order
    P = len(Z)
    # right[a, b]: b is right-separate of a
    right = np.all(Z[None, :, :-1] >= Z[:, None, 1:], axis=2)
    np.fill_diagonal(right, False)
    best = np.ones(P, dtype=np.int64)
    prev = np.full(P, -1)
    for b in range(P):
        cand = np.flatnonzero(right[:b, b])
        if len(cand):
            a = cand[np.argmax(best[cand])]
            best[b] = best[a] + 1
            prev[b] = a
    chain = [int(np.argmax(best))]
    while prev[chain[-1]] >= 0:
        chain.append(int(prev[chain[-1]]))
    chain.reverse()
    members = tuple(Staircase((pairs[c][0], line_i), (pairs[c][1], line_j), Z[c, 1:-1])
                    for c in chain)
    return len(members), DisjointFamily(members, tuple(pairs[c][0] for c in chain),
                                        tuple(pairs[c][1] for c in chain))


def brute_force_max_disjoint(field, starts, ends, line_i, line_j, l_max=4,
                             limit=BRUTE_FORCE_LIMIT) -> int:
    """Exact largest l <= l_max of pairwise horizontally separate maximizers."""
    if l_max > 4:
        raise RefusalError("l_max must be at most 4")
    starts = sorted(set(int(s) for s in starts))
    ends = sorted(set(int(e) for e in ends))
    if not starts or not ends:
        raise ValueError("empty endpoint set")
    polys = set()
    for x in starts:
        for y in ends:
            if y < x:
                continue
            _, winners = brute_force_last_passage(field, (x, line_i), (y, line_j), limit)
            polys.update(winners)
    polys = list(polys)
    if not polys:
        raise NoStaircaseError("no admissible endpoint pair")
    m = len(polys)
    sep = np.zeros((m, m), dtype=bool)
    for a in range(m):
        for b in range(a + 1, m):
            sep[a, b] = sep[b, a] = horizontally_separate(polys[a], polys[b])
    best = 1
    for size in range(2, min(l_max, m) + 1):
        found = False
        for combo in itertools.combinations(range(m), size):
            if all(sep[a, b] for a, b in itertools.combinations(combo, 2)):
                found = True
                break
        if not found:
            break
        best = size
    return best


def max_disjoint_polymers(field, n, I, t1, J, t2, points=None):
    """Scaled wrapper: endpoints are the grid points whose scaled positions lie in I and J.

    ``points`` restricts to at most that many evenly spaced grid points per
    interval (default: all).
    """
    from .scaled import interval_indices, mesh_line

    i, j = mesh_line(n, t1), mesh_line(n, t2)
    starts = interval_indices(field.grid, n, I, t1, points)
    ends = interval_indices(field.grid, n, J, t2, points)
    return max_disjoint_polymers_indices(field, starts, ends, i, j)
