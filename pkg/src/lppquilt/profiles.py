"""Weight profiles over a scaled y-grid and the initial-condition class.

An initial condition is a sampled function f on a uniform scaled grid with
some samples equal to MINUS_INFINITY.  The f-rewarded profile is computed
by one sweep whose line-0 reward at unscaled position u is
u + 2^{1/2} n^{1/3} f(u / (2 n^{2/3})); the u term converts the start-point
dependence of the centering into a reward.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dfield
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import lpp
from .env import BrownianField
from .scaled import n13, n23, scaled_x, snap, weight_from_energy


class _MinusInfinity:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "MINUS_INFINITY"

    def __reduce__(self):
        return (_MinusInfinity, ())


MINUS_INFINITY = _MinusInfinity()


class NoAdmissibleStartError(ValueError):
    pass


def default_y_grid(num=201, lo=-1.0, hi=1.0):
    return np.linspace(lo, hi, num)


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """Samples of f on a uniform scaled grid; ``finite`` masks out MINUS_INFINITY."""

    x: np.ndarray
    values: np.ndarray
    finite: np.ndarray
    psi: tuple = (1.0, 1.0, 1.0)
    name: str = "custom"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        fin = np.asarray(self.finite, dtype=bool).reshape(-1)
        if not (len(x) == len(v) == len(fin)):
            raise ValueError("x, values and finite must have equal length")
        if len(x) > 1:
            d = np.diff(x)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * max(1.0, abs(d[0])):
                raise ValueError("samples must lie on a uniform increasing grid")
        v = np.where(fin, v, 0.0)
        if np.any(~np.isfinite(v)):
            raise ValueError("finite samples must be finite floats")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "finite", fin)
        object.__setattr__(self, "psi", tuple(float(p) for p in self.psi))

    @classmethod
    def from_samples(cls, samples, psi=(1.0, 1.0, 1.0), name="custom"):
        xs, vals, fin = [], [], []
        for x, v in samples:
            xs.append(float(x))
            ok = v is not MINUS_INFINITY and not (isinstance(v, float) and v == -math.inf)
            fin.append(ok)
            vals.append(float(v) if ok else 0.0)
        return cls(np.array(xs), np.array(vals), np.array(fin), psi, name)

    def sample(self, i):
        return float(self.values[i]) if self.finite[i] else MINUS_INFINITY

    def samples(self):
        return [(float(x), self.sample(i)) for i, x in enumerate(self.x)]

    @property
    def support(self):
        xs = self.x[self.finite]
        return (float(xs.min()), float(xs.max())) if len(xs) else None

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for x, v in self.samples():
                w.writerow([repr(x), "-inf" if v is MINUS_INFINITY else repr(v)])


def narrow_wedge(x0=0.0, psi=(1.0, 1.0, 1.0)):
    return InitialCondition([x0], [0.0], [True], psi, f"narrow-wedge({x0})")


def flat(L=4.0, num=None, psi=(1.0, 1.0, 1.0)):
    num = num or int(round(100 * L)) + 1
    return InitialCondition(np.linspace(-L, L, num), np.zeros(num), np.ones(num, bool), psi, "flat")


def slope(a, L=4.0, num=None, psi=None):
    num = num or int(round(100 * L)) + 1
    x = np.linspace(-L, L, num)
    psi = psi or (max(1.0, abs(a)), 1.0, 1.0)
    return InitialCondition(x, a * x, np.ones(num, bool), psi, f"slope({a})")


def random_brownian(sigma=1.0, seed=0, L=4.0, num=None, psi=None):
    """sigma times a two-sided Brownian motion pinned to 0 at x = 0."""
    num = num or 2 * int(round(100 * L)) + 1
    if num % 2 == 0:
        num += 1
    x = np.linspace(-L, L, num)
    h = x[1] - x[0]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xB0])))
    inc = rng.standard_normal(num - 1) * math.sqrt(h) * sigma
    mid = num // 2
    w = np.zeros(num)
    w[mid + 1:] = np.cumsum(inc[mid:])
    w[:mid] = -np.cumsum(inc[:mid][::-1])[::-1]
    psi = psi or (max(1.0, float(np.max(w / (1 + np.abs(x))))), 1.0, 1.0)
    return InitialCondition(x, w, np.ones(num, bool), psi, f"random-brownian({sigma},{seed})")


def load_initial_condition(path, psi=(1.0, 1.0, 1.0)):
    """CSV with columns x, value; value may be "-inf"."""
    samples = []
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    for row in rows:
        if not row or row[0].strip().lower() == "x":
            continue
        v = row[1].strip().lower()
        samples.append((float(row[0]), MINUS_INFINITY if v in ("-inf", "minus_infinity") else float(v)))
    return InitialCondition.from_samples(samples, psi, Path(path).stem)


def validate_initial_condition(f: InitialCondition):
    """(ok, report): growth bound f <= psi1 (1 + |x|) and max on [-psi2, psi2] > -psi3."""
    if len(f.x) == 0:
        raise ValueError("empty sample set")
    p1, p2, p3 = f.psi
    fin = f.finite
    bound = p1 * (1 + np.abs(f.x))
    viol = np.flatnonzero(fin & (f.values > bound))
    inner = fin & (np.abs(f.x) <= p2)
    top = float(f.values[inner].max()) if inner.any() else -math.inf
    report = {
        "growth_violations": [(float(f.x[i]), float(f.values[i])) for i in viol],
        "max_on_core": top,
        "nondegenerate": top > -p3,
    }
    return bool(len(viol) == 0 and top > -p3), report


def reward_on_grid(field: BrownianField, n, f: InitialCondition) -> np.ndarray:
    """f mapped to line-0 grid points (scaled values; -inf where f is MINUS_INFINITY).

    Linear interpolation between consecutive finite samples; each finite
    sample also claims its nearest grid point (the larger value wins).
    """
    g = field.grid
    xg = scaled_x(g, n, np.arange(g.num_points), 0)
    out = np.full(g.num_points, -np.inf)
    fin = f.finite
    if len(f.x) > 1:
        both = fin[:-1] & fin[1:]
        for s in np.flatnonzero(both):
            a, b = f.x[s], f.x[s + 1]
            lo = np.searchsorted(xg, a - 1e-12, "left")
            hi = np.searchsorted(xg, b + 1e-12, "right")
            if hi > lo:
                w = (xg[lo:hi] - a) / (b - a)
                val = (1 - w) * f.values[s] + w * f.values[s + 1]
                out[lo:hi] = np.maximum(out[lo:hi], val)
    for s in np.flatnonzero(fin):
        pos = 2.0 * n23(n) * f.x[s]
        if g.contains(pos):
            i = g.nearest_index(pos)
            out[i] = max(out[i], f.values[s])
    return out


class RewardedSweep(NamedTuple):
    row: np.ndarray  # energies plus line-0 rewards at line n
    backpointers: np.ndarray
    init: np.ndarray
    reward: np.ndarray  # f on the grid (scaled units)


def rewarded_sweep(field: BrownianField, n, f: InitialCondition) -> RewardedSweep:
    g = field.grid
    reward = reward_on_grid(field, n, f)
    ok = np.isfinite(reward)
    if not ok.any():
        raise NoAdmissibleStartError("f is MINUS_INFINITY on the whole window")
    init = np.full(g.num_points, -np.inf)
    init[ok] = g.position(np.flatnonzero(ok)) + math.sqrt(2.0) * n13(n) * reward[ok]
    j_lo = int(np.flatnonzero(ok)[0])
    row, bp = lpp.sweep(field, init, 0, n, j_lo)
    return RewardedSweep(row, bp, init, reward)


@dataclass(eq=False)
class WeightProfile:
    n: int
    kind: str
    y_grid: np.ndarray
    values: np.ndarray
    y_index: np.ndarray
    seed: int = 0
    x0: float | None = None
    roots: np.ndarray | None = None  # line-0 grid index of each y's polymer start
    untrusted: bool = False
    meta: dict = dfield(default_factory=dict)

    def to_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "value", "kind", "n", "seed"])
            for y, v in zip(self.y_grid, self.values):
                w.writerow([f"{y:.12g}", f"{v:.17g}", self.kind, self.n, self.seed])


def y_indices(field, n, y_grid):
    y_grid = np.asarray(y_grid, dtype=float).reshape(-1)
    if len(y_grid) > 1 and np.any(np.diff(y_grid) <= 0):
        raise ValueError("y grid must be strictly increasing")
    return np.array([snap(field.grid, n, y, 1.0)[0] for y in y_grid], dtype=np.int64)


def narrow_wedge_profile(field: BrownianField, n, x0, y_grid=None) -> WeightProfile:
    """values[y] = weight from (x0, 0) to (y, 1) for every y, from one sweep."""
    y_grid = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    a, _, _ = snap(field.grid, n, x0, 0.0)
    yi = y_indices(field, n, y_grid)
    row, _ = lpp.sweep(field, lpp.point_init(field, a), 0, n, a)
    vals = weight_from_energy(field.grid, n, row[yi], (a, 0), (yi, n))
    return WeightProfile(n, f"narrow-wedge({x0})", y_grid, np.asarray(vals, dtype=float), yi,
                         field.seed, x0=float(x0), roots=np.full(len(yi), a))


def profile_from_sweep(field, n, sw: RewardedSweep, y_grid, yi):
    # row = E + pos(root) + 2^{1/2} n^{1/3} f(root); the centering then only needs the end
    pos_y = field.grid.position(yi)
    return (sw.row[yi] - 2.0 * n - (pos_y - n)) / (math.sqrt(2.0) * n13(n))


def f_rewarded_profile(field: BrownianField, n, f: InitialCondition, y_grid=None,
                       edge_margin=2) -> WeightProfile:
    """values[y] = max over admissible grid x of weight(x -> y) + f(x), from one sweep.

    ``untrusted`` is set when some maximizing start lies within ``edge_margin``
    grid points of the grid edge, where the window truncation may bind.
    """
    y_grid = default_y_grid() if y_grid is None else np.asarray(y_grid, dtype=float)
    yi = y_indices(field, n, y_grid)
    sw = rewarded_sweep(field, n, f)
    vals = profile_from_sweep(field, n, sw, y_grid, yi)
    roots = lpp.trace(sw.backpointers, yi)[0]
    M = field.grid.num_points
    untrusted = bool(np.any((roots < edge_margin) | (roots >= M - edge_margin)))
    return WeightProfile(n, f"f-rewarded({f.name})", y_grid, np.asarray(vals, dtype=float), yi,
                         field.seed, roots=roots, untrusted=untrusted)


def bridge_project(values, y=None):
    """Subtract the affine interpolant of the endpoint values."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) < 2:
        raise ValueError("need at least two grid points")
    y = np.linspace(0.0, 1.0, len(values)) if y is None else np.asarray(y, dtype=float)
    a, b = y[0], y[-1]
    if not b > a:
        raise ValueError("degenerate interval")
    return values - ((b - y) * values[0] + (y - a) * values[-1]) / (b - a)
