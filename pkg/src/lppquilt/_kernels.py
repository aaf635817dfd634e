"""Numba kernels for the last passage sweep.

All kernels address grid points by global index and read the field through
``(values, offsets, widths)`` so full and banded storage share one code path.
Unreachable or out-of-band cells carry ``-inf``.
"""
import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def _step(values, offsets, widths, line, prev, j_lo, j_hi, out, bp):
    """out[y] = B(line, y) + max_{w <= y} (prev[w] - B(line, w)), leftmost argmax into bp."""
    off = offsets[line]
    end = off + widths[line]
    best = NEG_INF
    arg = -1
    for y in range(j_lo, j_hi):
        if y < off or y >= end:
            out[y] = NEG_INF
            if bp is not None:
                bp[y] = -1
            # a staircase cannot cross an out-of-band point on this line
            best = NEG_INF
            arg = -1
            continue
        b = values[line, y - off]
        p = prev[y]
        if p > NEG_INF:
            cand = p - b
            if cand > best:
                best = cand
                arg = y
        if arg >= 0:
            out[y] = b + best
        else:
            out[y] = NEG_INF
        if bp is not None:
            bp[y] = arg


@njit(cache=True)
def sweep(values, offsets, widths, init, line_lo, line_hi, j_lo, j_hi):
    """Run the recursion from ``line_lo`` to ``line_hi`` inclusive.

    ``init`` plays the role of the line-``line_lo`` start rewards.  Returns the
    final row and the backpointer table (one row per line).
    """
    m = init.shape[0]
    nl = line_hi - line_lo + 1
    bp = np.full((nl, m), -1, dtype=np.int32)
    prev = init.copy()
    cur = np.full(m, NEG_INF)
    for r in range(nl):
        _step(values, offsets, widths, line_lo + r, prev, j_lo, j_hi, cur, bp[r])
        prev, cur = cur, prev
    return prev, bp


@njit(cache=True)
def sweep_rows(values, offsets, widths, init, line_lo, line_hi, j_lo, j_hi):
    """Like ``sweep`` but returns every row of values and no backpointers."""
    m = init.shape[0]
    nl = line_hi - line_lo + 1
    rows = np.full((nl, m), NEG_INF)
    prev = init.copy()
    for r in range(nl):
        _step(values, offsets, widths, line_lo + r, prev, j_lo, j_hi, rows[r], None)
        prev = rows[r]
    return rows


@njit(cache=True)
def argmax_entry(values, offsets, widths, line, prev, j_lo, exit_idx):
    """Leftmost w in [j_lo, exit_idx] maximizing prev[w] - B(line, w)."""
    off = offsets[line]
    best = NEG_INF
    arg = -1
    for w in range(j_lo, exit_idx + 1):
        if w < off or w >= off + widths[line]:
            best = NEG_INF
            arg = -1
            continue
        p = prev[w]
        if p > NEG_INF:
            cand = p - values[line, w - off]
            if cand > best:
                best = cand
                arg = w
    return arg


@njit(cache=True)
def backtrack_many(bp, ends):
    """Jump table for many end indices.

    Returns ``Z`` of shape (lines + 1, len(ends)): ``Z[r]`` is the entry index
    into relative line r (``Z[0]`` the start) and ``Z[lines]`` the end.
    """
    nl = bp.shape[0]
    k = ends.shape[0]
    z = np.empty((nl + 1, k), dtype=np.int64)
    for c in range(k):
        pos = ends[c]
        z[nl, c] = pos
        for r in range(nl - 1, -1, -1):
            if pos >= 0:
                pos = bp[r, pos]
            z[r, c] = pos
    return z


@njit(cache=True)
def sweep_final(values, offsets, widths, init, line_lo, line_hi, j_lo, j_hi):
    """Final row only; memory O(M)."""
    m = init.shape[0]
    prev = init.copy()
    cur = np.full(m, NEG_INF)
    for line in range(line_lo, line_hi + 1):
        _step(values, offsets, widths, line, prev, j_lo, j_hi, cur, None)
        prev, cur = cur, prev
    return prev
