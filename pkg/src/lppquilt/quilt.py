"""Patchwork quilts: sewing fabrics and decomposing f-rewarded profiles.

A stitch point is the first y-grid point of the patch to its right.  Shifts
are chosen left to right so that the two neighbouring fabrics agree at the
stitch point.  On a grid this sewing cannot reproduce a profile exactly (the
left fabric is evaluated one grid step outside its patch), so reports carry
both the sup-deviation of the sewn quilt and the fabric fidelity: the range
over each patch of profile - fabric, which vanishes when the profile equals
the fabric up to a constant there.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dfield
from pathlib import Path

import numpy as np

from .forest import Forest, _decompose, dyadic_scale_search, threshold_line
from .profiles import InitialCondition, narrow_wedge_profile

STITCH_TOL = 1e-12


@dataclass
class QuiltSpec:
    interval: tuple
    y_grid: np.ndarray
    fabrics: list  # arrays on y_grid
    stitch_points: list
    shifts: np.ndarray
    patch_starts: np.ndarray  # y-grid index where each patch begins
    rnis: list = dfield(default_factory=list)

    @property
    def num_patches(self) -> int:
        return len(self.patch_starts)

    def patches(self):
        ends = list(self.patch_starts[1:]) + [len(self.y_grid)]
        return [(int(a), int(b)) for a, b in zip(self.patch_starts, ends)]

    def sewn(self) -> np.ndarray:
        q = np.empty(len(self.y_grid))
        for i, (a, b) in enumerate(self.patches()):
            q[a:b] = self.fabrics[i][a:b] + self.shifts[i]
        return q

    def to_json(self) -> str:
        return json.dumps({"interval": list(self.interval), "stitch_points": list(self.stitch_points),
                           "shifts": self.shifts.tolist(), "rnis": list(self.rnis),
                           "num_patches": self.num_patches})


@dataclass
class QuiltReport:
    deviations: np.ndarray  # sup |profile - sewn quilt| per patch
    fidelity: np.ndarray  # range of profile - fabric per patch
    error_flag: bool
    stitch_count: int
    gamma: float | None
    tol: float | None = None
    passed: bool | None = None
    rnis: list = dfield(default_factory=list)
    bounds: list = dfield(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"deviations": [float(d) for d in self.deviations],
                           "fidelity": [float(d) for d in self.fidelity],
                           "error_flag": self.error_flag, "stitch_count": self.stitch_count,
                           "gamma": self.gamma, "tol": self.tol, "passed": self.passed})

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["patch", "left", "right", "rni", "deviation", "fidelity"])
            for i, (lo, hi) in enumerate(self.bounds):
                rni = self.rnis[i] if i < len(self.rnis) else ""
                w.writerow([i, f"{lo:.12g}", f"{hi:.12g}", rni, f"{self.deviations[i]:.6e}",
                            f"{self.fidelity[i]:.6e}"])


def _stitch_indices(y_grid, stitch_points):
    idx = []
    for s in stitch_points:
        j = int(np.argmin(np.abs(y_grid - s)))
        if abs(y_grid[j] - s) > STITCH_TOL * max(1.0, abs(s)):
            raise ValueError(f"stitch point {s} is not a grid point")
        idx.append(j)
    if np.any(np.diff(idx) <= 0):
        raise ValueError("stitch points must be strictly increasing")
    return np.array(idx, dtype=np.int64)


def sew_quilt(fabrics, stitch_points, y_grid, interval=None) -> QuiltSpec:
    """Shift fabric i by v_i (v_1 = 0) so neighbouring fabrics agree at each stitch."""
    y_grid = np.asarray(y_grid, dtype=float)
    fabrics = [np.asarray(f, dtype=float) for f in fabrics]
    stitch_points = list(stitch_points)
    if len(fabrics) < len(stitch_points) + 1:
        raise ValueError("need at least one more fabric than stitch points")
    if any(len(f) != len(y_grid) for f in fabrics):
        raise ValueError("fabrics must live on the y-grid")
    si = _stitch_indices(y_grid, stitch_points)
    if len(si) and (si[0] < 0 or si[-1] >= len(y_grid)):
        raise ValueError("stitch outside the interval")
    k = len(si) + 1
    fabrics = fabrics[:k]
    shifts = np.zeros(k)
    for i, s in enumerate(si):
        shifts[i + 1] = shifts[i] + fabrics[i][s] - fabrics[i + 1][s]
    interval = interval or (float(y_grid[0]), float(y_grid[-1]))
    return QuiltSpec(tuple(interval), y_grid, fabrics, stitch_points, shifts,
                     np.concatenate(([0], si)).astype(np.int64))


def verify_reconstruction(profile, quilt: QuiltSpec, tol=None, gamma=None) -> QuiltReport:
    """Per-patch deviations of the profile from the sewn quilt and from its own fabric."""
    values = np.asarray(getattr(profile, "values", profile), dtype=float)
    if len(values) != len(quilt.y_grid):
        raise ValueError("profile and quilt grids differ")
    q = quilt.sewn()
    dev, fid, bounds = [], [], []
    for i, (a, b) in enumerate(quilt.patches()):
        dev.append(float(np.max(np.abs(values[a:b] - q[a:b]))))
        d = values[a:b] - quilt.fabrics[i][a:b]
        fid.append(float(np.ptp(d)) if np.all(np.isfinite(d)) else float("inf"))
        bounds.append((float(quilt.y_grid[a]), float(quilt.y_grid[b - 1])))
    tol = default_tol(values) if tol is None else tol
    fid = np.array(fid)
    return QuiltReport(np.array(dev), fid, False, len(quilt.stitch_points), gamma, tol,
                       bool(np.all(fid <= tol)), list(quilt.rnis), bounds)


def default_tol(values, rel=1e-9):
    v = np.asarray(values, dtype=float)
    return rel * max(1.0, float(np.max(np.abs(v[np.isfinite(v)]))) if np.isfinite(v).any() else 1.0)


def decompose_profile(field, n, f: InitialCondition, D=2.5, chi=0.5, j_max=None, y_grid=None,
                      tol=None, forest=None):
    """(QuiltSpec or None, QuiltReport, decomposition) for the f-rewarded profile.

    Stitches are the interior split-canopy boundaries at level 1 - Gamma^{-3/2};
    patch i's fabric is the narrow-wedge profile from RNI_i / Gamma.
    """
    fo = forest or Forest(field, n, f, y_grid)
    values = fo.profile_values
    search = dyadic_scale_search(field, n, f, D, chi, j_max, forest=fo)
    if search.error_flag:
        rep = QuiltReport(np.array([]), np.array([]), True, 0, None,
                          default_tol(values) if tol is None else tol, None)
        return None, rep, None
    eps = search.eps
    k = max(threshold_line(n, eps), 0)
    dec = _decompose(fo, k, k / n, eps)
    fabrics, cache = [], {}
    for p in dec.split_pieces:
        if p.mesh_index not in cache:
            x0 = fo.x_of(p.mesh_index)
            cache[p.mesh_index] = narrow_wedge_profile(field, n, x0, fo.y_grid).values
        fabrics.append(cache[p.mesh_index])
    stitches = [float(fo.y_grid[p.first]) for p in dec.split_pieces[1:]]
    quilt = sew_quilt(fabrics, stitches, fo.y_grid)
    quilt.rnis = [p.rni for p in dec.split_pieces]
    rep = verify_reconstruction(values, quilt, tol, search.gamma)
    return quilt, rep, dec
