"""Discretized Brownian environment B(k, .) on a uniform spatial grid.

Each line k holds the values of an independent Brownian motion at the grid
positions ``origin + j * spacing``.  In banded mode a line only stores the
grid indices whose positions fall in ``[k - w, k + w]``; the remaining
indices are out of band.

Increments are drawn in fixed-size chunks, each chunk seeded from
``(seed, line, chunk)``.  A banded field therefore has exactly the same
increments as the full field it truncates, which keeps the full grid usable
as a validation reference.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHUNK = 4096
MAGIC = b"LPPFIELD"
FORMAT_VERSION = 1


class OutOfBandError(ValueError):
    """Raised when a grid index is not stored for the requested line."""


@dataclass(frozen=True)
class GridSpec:
    origin: float
    spacing: float
    num_points: int
    num_lines: int
    band_half_width: float | None = None

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if self.num_points < 2:
            raise ValueError("need at least two grid points")
        if self.num_lines < 1:
            raise ValueError("need at least one line")
        if self.band_half_width is not None and self.band_half_width <= 0:
            raise ValueError("band half width must be positive")

    @property
    def banded(self) -> bool:
        return self.band_half_width is not None

    @property
    def positions(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.num_points)

    def position(self, index):
        return self.origin + self.spacing * np.asarray(index)

    def nearest_index(self, position):
        """Nearest grid index to an unscaled position (clipped to the grid)."""
        idx = np.rint((np.asarray(position, dtype=float) - self.origin) / self.spacing)
        idx = np.clip(idx, 0, self.num_points - 1).astype(np.int64)
        return idx if idx.ndim else int(idx)

    def contains(self, position) -> bool:
        lo = self.origin - 0.5 * self.spacing
        hi = self.origin + (self.num_points - 0.5) * self.spacing
        return bool(lo <= position <= hi)

    def band(self, line: int) -> tuple[int, int]:
        """Half-open range [lo, hi) of grid indices stored for ``line``."""
        if not self.banded:
            return 0, self.num_points
        w = self.band_half_width
        lo = math.ceil((line - w - self.origin) / self.spacing - 1e-9)
        hi = math.floor((line + w - self.origin) / self.spacing + 1e-9) + 1
        lo = max(lo, 0)
        hi = min(hi, self.num_points)
        if hi - lo < 1:
            raise ValueError(f"band for line {line} misses the grid")
        return lo, hi


def build_grid(n, scaled_half_window, points_per_unit, banded=False, band_half_width=None):
    """Grid covering the unscaled window [-2 n^{2/3} X, n + 2 n^{2/3} X].

    Grid positions are multiples of ``1/points_per_unit``, so unscaled 0 is
    always a grid point.  With ``banded`` the default half width is
    ``4 n^{2/3} X``.
    """
    if n < 1 or scaled_half_window <= 0 or points_per_unit <= 0:
        raise ValueError("n, scaled_half_window and points_per_unit must be positive")
    n23 = np.cbrt(n) ** 2
    reach = 2.0 * n23 * scaled_half_window
    spacing = 1.0 / points_per_unit
    lo = math.floor(-reach * points_per_unit + 1e-9)
    hi = math.ceil((n + reach) * points_per_unit - 1e-9)
    w = None
    if banded:
        w = band_half_width if band_half_width is not None else 4.0 * n23 * scaled_half_window
    return GridSpec(origin=lo * spacing, spacing=spacing, num_points=hi - lo + 1,
                    num_lines=n + 1, band_half_width=w)


@dataclass(frozen=True, eq=False)
class BrownianField:
    """Sampled environment.

    ``values[k, c]`` is B(k, p_j) for grid index ``j = offsets[k] + c``;
    columns past ``widths[k]`` are padding (NaN).
    """

    grid: GridSpec
    values: np.ndarray
    offsets: np.ndarray
    widths: np.ndarray
    seed: int

    @property
    def num_lines(self) -> int:
        return self.grid.num_lines

    def band(self, line):
        return int(self.offsets[line]), int(self.offsets[line] + self.widths[line])

    def value(self, line, index):
        lo, hi = self.band(line)
        index = np.asarray(index)
        if np.any(index < lo) or np.any(index >= hi):
            raise OutOfBandError(f"index outside stored band [{lo}, {hi}) of line {line}")
        out = self.values[line, index - lo]
        return out if out.ndim else float(out)

    def line(self, k) -> np.ndarray:
        """Full-length row for line k with NaN outside the band."""
        row = np.full(self.grid.num_points, np.nan)
        lo, hi = self.band(k)
        row[lo:hi] = self.values[k, : hi - lo]
        return row

    def dense(self) -> np.ndarray:
        return np.vstack([self.line(k) for k in range(self.num_lines)])

    def __eq__(self, other):
        if not isinstance(other, BrownianField):
            return NotImplemented
        return (self.grid == other.grid and self.seed == other.seed
                and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.values, other.values, equal_nan=True))


def _line_increments(seed, line, lo, hi):
    """Standard normal increments with global indices lo..hi-1 on ``line``."""
    out = np.empty(max(hi - lo, 0))
    if hi <= lo:
        return out
    pos = 0
    for c in range(lo // CHUNK, (hi - 1) // CHUNK + 1):
        ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, line, c])
        draws = np.random.Generator(np.random.Philox(ss)).standard_normal(CHUNK)
        a = max(lo, c * CHUNK) - c * CHUNK
        b = min(hi, (c + 1) * CHUNK) - c * CHUNK
        out[pos:pos + b - a] = draws[a:b]
        pos += b - a
    return out


def sample_field(grid: GridSpec, seed: int) -> BrownianField:
    """Sample every line independently; each line is anchored at 0 on its first stored index."""
    bands = [grid.band(k) for k in range(grid.num_lines)]
    offsets = np.array([b[0] for b in bands], dtype=np.int64)
    widths = np.array([b[1] - b[0] for b in bands], dtype=np.int64)
    values = np.full((grid.num_lines, int(widths.max())), np.nan)
    scale = math.sqrt(grid.spacing)
    for k, (lo, hi) in enumerate(bands):
        inc = _line_increments(seed, k, lo, hi - 1) * scale
        values[k, 0] = 0.0
        np.cumsum(inc, out=values[k, 1:hi - lo])
    values.setflags(write=False)
    return BrownianField(grid, values, offsets, widths, int(seed))


def zero_field(grid: GridSpec) -> BrownianField:
    """All-zero environment (test double)."""
    return field_from_values(grid, np.zeros((grid.num_lines, grid.num_points)))


def field_from_values(grid: GridSpec, values, seed=0) -> BrownianField:
    """Wrap an explicit dense (num_lines, num_points) array as a full-grid field."""
    values = np.array(values, dtype=float)
    if values.shape != (grid.num_lines, grid.num_points):
        raise ValueError("values shape does not match grid")
    values.setflags(write=False)
    offsets = np.zeros(grid.num_lines, dtype=np.int64)
    widths = np.full(grid.num_lines, grid.num_points, dtype=np.int64)
    return BrownianField(grid, values, offsets, widths, int(seed))


# Binary dump format (little endian):
#   8s magic "LPPFIELD" | u32 version | d origin | d spacing | q num_points
#   | q num_lines | u8 banded | d band_half_width | Q seed
#   then per line: q offset | q width | width * d values
_HEADER = struct.Struct("<8sIddqqBdQ")
_LINE = struct.Struct("<qq")


def dump_field(field: BrownianField, path) -> None:
    g = field.grid
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, g.origin, g.spacing, g.num_points,
                              g.num_lines, int(g.banded), g.band_half_width or 0.0,
                              field.seed & 0xFFFFFFFFFFFFFFFF))
        for k in range(g.num_lines):
            w = int(field.widths[k])
            fh.write(_LINE.pack(int(field.offsets[k]), w))
            fh.write(np.ascontiguousarray(field.values[k, :w], dtype="<f8").tobytes())


def load_field(path) -> BrownianField:
    with open(Path(path), "rb") as fh:
        data = fh.read()
    magic, version, origin, spacing, m, lines, banded, w, seed = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError("not a field dump")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported field dump version {version}")
    grid = GridSpec(origin, spacing, m, lines, w if banded else None)
    pos = _HEADER.size
    rows = []
    for _ in range(lines):
        off, width = _LINE.unpack_from(data, pos)
        pos += _LINE.size
        rows.append((off, np.frombuffer(data, dtype="<f8", count=width, offset=pos).copy()))
        pos += 8 * width
    offsets = np.array([r[0] for r in rows], dtype=np.int64)
    widths = np.array([len(r[1]) for r in rows], dtype=np.int64)
    values = np.full((lines, int(widths.max())), np.nan)
    for k, (_, row) in enumerate(rows):
        values[k, : len(row)] = row
    values.setflags(write=False)
    return BrownianField(grid, values, offsets, widths, int(seed))
