"""Recenterable Cartesian grid of per-cell low-pass intensity filters.

Cells hold an exponentially weighted moving average of the intensities
splatted into them, plus a confidence weight in [0, 1].  Sampling is
bilinear over cell centers; a sample whose four neighboring cells include
an unobserved one (weight 0) reads as the out-of-map value 0, as do
points outside the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .radar import CartesianPoints


@dataclass
class LocalMap:
    """values/weights are (nx, ny); origin is the world position of cell (0, 0)."""

    values: np.ndarray
    weights: np.ndarray
    origin: np.ndarray
    cell_size: float
    decay: float = 0.9
    _masked: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)
        if self.values.shape != self.weights.shape:
            raise ValueError("values and weights must have identical shape")
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must lie in (0, 1], got {self.decay}")

    @classmethod
    def create(
        cls, center: np.ndarray, extent: float, cell_size: float, decay: float = 0.9
    ) -> "LocalMap":
        """Empty square map of the given side length centered on ``center``."""
        n = max(2, int(round(extent / cell_size)))
        origin = np.asarray(center, dtype=float) - cell_size * (n - 1) / 2.0
        return cls(np.zeros((n, n)), np.zeros((n, n)), origin, cell_size, decay)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def center(self) -> np.ndarray:
        nx, ny = self.values.shape
        return self.origin + self.cell_size * np.array([(nx - 1) / 2.0, (ny - 1) / 2.0])

    def grid_coords(self, points: np.ndarray) -> np.ndarray:
        """Continuous grid coordinates (cell centers at integers)."""
        return (np.asarray(points, dtype=float) - self.origin) / self.cell_size

    def masked_values(self) -> np.ndarray:
        """values with NaN in unobserved cells; NaN poisons any bilinear
        sample touching such a cell, which is then mapped to 0."""
        if self._masked is None:
            m = self.values.copy()
            m[self.weights <= 0.0] = np.nan
            self._masked = m
        return self._masked


def sample(grid: LocalMap, points: np.ndarray) -> np.ndarray | float:
    """Bilinear interpolation of the map at world points (..., 2)."""
    vals, _ = _bilinear(grid, points, want_gradient=False)
    return vals


def sample_gradient(grid: LocalMap, points: np.ndarray) -> np.ndarray:
    """Spatial gradient of the bilinear surface, per meter; zero out of map.

    On cell boundaries the gradient of the cell containing the point under
    half-open intervals is returned.
    """
    _, grad = _bilinear(grid, points, want_gradient=True)
    return grad


def sample_with_gradient(grid: LocalMap, points: np.ndarray):
    """Fused sample + gradient (single corner-gather pass)."""
    return _bilinear(grid, points, want_gradient=True)


def _bilinear(grid: LocalMap, points: np.ndarray, want_gradient: bool):
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1
    g = grid.grid_coords(pts).reshape(-1, 2)
    nx, ny = grid.values.shape
    i0 = np.floor(g[:, 0]).astype(np.int64)
    j0 = np.floor(g[:, 1]).astype(np.int64)
    fx = g[:, 0] - i0
    fy = g[:, 1] - j0
    inside = (i0 >= 0) & (i0 + 1 <= nx - 1) & (j0 >= 0) & (j0 + 1 <= ny - 1)
    i0c = np.clip(i0, 0, nx - 2)
    j0c = np.clip(j0, 0, ny - 2)
    m = grid.masked_values()
    v00 = m[i0c, j0c]
    v10 = m[i0c + 1, j0c]
    v01 = m[i0c, j0c + 1]
    v11 = m[i0c + 1, j0c + 1]
    vals = (
        v00 * (1 - fx) * (1 - fy)
        + v10 * fx * (1 - fy)
        + v01 * (1 - fx) * fy
        + v11 * fx * fy
    )
    vals = np.where(inside & np.isfinite(vals), vals, 0.0)
    grads = None
    if want_gradient:
        gx = ((v10 - v00) * (1 - fy) + (v11 - v01) * fy) / grid.cell_size
        gy = ((v01 - v00) * (1 - fx) + (v11 - v10) * fx) / grid.cell_size
        ok = inside & np.isfinite(gx) & np.isfinite(gy)
        grads = np.stack([np.where(ok, gx, 0.0), np.where(ok, gy, 0.0)], axis=1)
        if scalar:
            grads = grads[0]
    if scalar:
        return float(vals[0]), grads
    return vals.reshape(pts.shape[:-1]), grads


@njit(cache=True)
def _splat(values, weights, gx, gy, intensities, decay):  # pragma: no cover
    nx, ny = values.shape
    for k in range(gx.shape[0]):
        i0 = int(np.floor(gx[k]))
        j0 = int(np.floor(gy[k]))
        fx = gx[k] - i0
        fy = gy[k] - j0
        ival = intensities[k]
        for di in range(2):
            wi = fx if di == 1 else 1.0 - fx
            i = i0 + di
            if wi <= 0.0 or i < 0 or i >= nx:
                continue
            for dj in range(2):
                wj = fy if dj == 1 else 1.0 - fy
                j = j0 + dj
                if wj <= 0.0 or j < 0 or j >= ny:
                    continue
                aw = decay * wi * wj
                values[i, j] = (1.0 - aw) * values[i, j] + aw * ival
                w = weights[i, j] + aw
                weights[i, j] = 1.0 if w > 1.0 else w


def update(grid: LocalMap, points: CartesianPoints) -> LocalMap:
    """Deposit points into the map's per-cell low-pass filters.

    Each point updates its four neighboring cells in input order with
    bilinear splat weights w: value <- (1 - a*w)*value + a*w*intensity and
    weight <- min(1, weight + a*w).
    """
    values = grid.values.copy()
    weights = grid.weights.copy()
    if len(points) > 0:
        g = grid.grid_coords(points.coordinates)
        _splat(
            values,
            weights,
            np.ascontiguousarray(g[:, 0]),
            np.ascontiguousarray(g[:, 1]),
            np.ascontiguousarray(points.intensities),
            grid.decay,
        )
    return LocalMap(values, weights, grid.origin.copy(), grid.cell_size, grid.decay)


def recenter(grid: LocalMap, new_center: np.ndarray) -> LocalMap:
    """Translate the grid by whole cells so its center tracks ``new_center``.

    Content shifts without resampling; cells entering from outside are
    zeroed.  A requested move of half a cell or less is a no-op.
    """
    shift = np.rint((np.asarray(new_center, dtype=float) - grid.center) / grid.cell_size)
    sx, sy = int(shift[0]), int(shift[1])
    if sx == 0 and sy == 0:
        return grid
    nx, ny = grid.values.shape
    values = np.zeros_like(grid.values)
    weights = np.zeros_like(grid.weights)
    src_x = slice(max(0, sx), min(nx, nx + sx))
    dst_x = slice(max(0, -sx), min(nx, nx - sx))
    src_y = slice(max(0, sy), min(ny, ny + sy))
    dst_y = slice(max(0, -sy), min(ny, ny - sy))
    if src_x.start < src_x.stop and src_y.start < src_y.stop:
        values[dst_x, dst_y] = grid.values[src_x, src_y]
        weights[dst_x, dst_y] = grid.weights[src_x, src_y]
    origin = grid.origin + grid.cell_size * np.array([sx, sy], dtype=float)
    return LocalMap(values, weights, origin, grid.cell_size, grid.decay)


def downsample(grid: LocalMap, factor: int) -> LocalMap:
    """Coarsen the grid by an integer factor (confidence-weighted block mean)."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return grid
    nx, ny = grid.values.shape
    cx, cy = (nx // factor) * factor, (ny // factor) * factor
    v = grid.values[:cx, :cy].reshape(cx // factor, factor, cy // factor, factor)
    w = grid.weights[:cx, :cy].reshape(cx // factor, factor, cy // factor, factor)
    wsum = w.sum(axis=(1, 3))
    with np.errstate(invalid="ignore"):
        values = np.where(wsum > 0, (v * w).sum(axis=(1, 3)) / np.where(wsum > 0, wsum, 1.0), 0.0)
    weights = w.mean(axis=(1, 3))
    origin = grid.origin + grid.cell_size * (factor - 1) / 2.0
    return LocalMap(values, weights, origin, grid.cell_size * factor, grid.decay)
