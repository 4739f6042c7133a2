"""Probability measure representations: weighted particle ensembles, 1D grid
densities and Dirac states, with moments, sampling, histograms and CSV I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .errors import InvalidArgumentError

WEIGHT_TOL = 1e-12
MASS_TOL = 1e-10


def _frozen_array(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Weighted point cloud in R^d.

    Zero-weight particles are dropped on construction. Weights must already sum
    to one; use :meth:`uniform` for equal weights.
    """

    points: np.ndarray  #: shape (N, d)
    weights: np.ndarray  #: shape (N,), strictly positive, sums to 1

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise InvalidArgumentError("points must have shape (N, d) with d >= 1")
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise InvalidArgumentError("points and weights differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("weights must be finite and nonnegative")
        keep = w > 0
        pts, w = pts[keep], w[keep]
        if pts.shape[0] == 0:
            raise InvalidArgumentError("ensemble has no particle with positive weight")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidArgumentError(f"weights sum to {w.sum():.16g}, not 1")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("points must be finite")
        object.__setattr__(self, "points", _frozen_array(pts))
        object.__setattr__(self, "weights", _frozen_array(w))

    @classmethod
    def uniform(cls, points) -> "ParticleEnsemble":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        n = pts.shape[0]
        if n == 0:
            raise InvalidArgumentError("empty ensemble")
        return cls(pts, np.full(n, 1.0 / n))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def is_equal_weight(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def with_points(self, points) -> "ParticleEnsemble":
        return ParticleEnsemble(points, self.weights)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Cell-averaged density on a uniform grid of ``[lo, hi]``.

    Values are renormalized on construction so that ``h * sum(values) == 1``.
    """

    lo: float
    hi: float
    values: np.ndarray  #: shape (cells,), cell averages

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise InvalidArgumentError("grid needs finite lo < hi")
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size < 1:
            raise InvalidArgumentError("grid needs at least one cell")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidArgumentError("grid values must be finite and nonnegative")
        h = (hi - lo) / v.size
        mass = h * v.sum()
        if mass <= 0:
            raise InvalidArgumentError("grid density has zero mass")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "values", _frozen_array(v / mass))

    @property
    def cells(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.cells

    @property
    def dim(self) -> int:
        return 1

    @property
    def centers(self) -> np.ndarray:
        return grid_centers(self.lo, self.hi, self.cells)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.cells + 1)

    @property
    def masses(self) -> np.ndarray:
        return self.h * self.values

    def mean(self) -> np.ndarray:
        return np.array([self.masses @ self.centers])

    def with_values(self, values) -> "GridDensity":
        return GridDensity(self.lo, self.hi, values)

    @classmethod
    def from_pdf(cls, pdf: Callable, lo: float, hi: float, cells: int) -> "GridDensity":
        """Sample ``pdf`` at cell centers and normalize."""
        c = grid_centers(lo, hi, cells)
        return cls(lo, hi, np.asarray(pdf(c), dtype=float))

    @classmethod
    def from_cdf(cls, cdf: Callable, lo: float, hi: float, cells: int) -> "GridDensity":
        """Exact cell averages from a cumulative distribution function."""
        e = np.linspace(lo, hi, cells + 1)
        h = (hi - lo) / cells
        return cls(lo, hi, np.clip(np.diff(cdf(e)), 0.0, None) / h)

    @classmethod
    def uniform(cls, lo: float, hi: float, cells: int) -> "GridDensity":
        return cls(lo, hi, np.ones(cells))


@dataclass(frozen=True, eq=False)
class DiracState:
    """Point mass at ``point``."""

    point: np.ndarray  #: shape (d,)

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.point, dtype=float)).reshape(-1)
        if not np.all(np.isfinite(p)):
            raise InvalidArgumentError("Dirac location must be finite")
        object.__setattr__(self, "point", _frozen_array(p))

    @property
    def dim(self) -> int:
        return self.point.size

    def mean(self) -> np.ndarray:
        return self.point.copy()


Measure = Union[ParticleEnsemble, GridDensity, DiracState]


def grid_centers(lo: float, hi: float, cells: int) -> np.ndarray:
    h = (hi - lo) / cells
    return lo + h * (np.arange(cells) + 0.5)


def nodes(m: Measure):
    """Quadrature nodes ``(points (K, d), weights (K,))`` for any measure."""
    if isinstance(m, ParticleEnsemble):
        return m.points, m.weights
    if isinstance(m, GridDensity):
        return m.centers[:, None], m.masses
    if isinstance(m, DiracState):
        return m.point[None, :], np.ones(1)
    raise InvalidArgumentError(f"not a measure: {type(m).__name__}")


def moment2(m: Measure) -> float:
    """Second moment ``∫‖z‖² dm``."""
    pts, w = nodes(m)
    return float(w @ np.sum(pts**2, axis=1))


def mean(m: Measure) -> np.ndarray:
    return m.mean()


def sample_gaussian(mean, cov_diag, n: int, seed: int) -> ParticleEnsemble:
    """``n`` equal-weight samples of a diagonal Gaussian."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_1d(np.asarray(cov_diag, dtype=float))
    if n < 1:
        raise InvalidArgumentError("n must be at least 1")
    if cov.shape != mean.shape or np.any(cov <= 0):
        raise InvalidArgumentError("cov_diag must be positive and match mean")
    rng = np.random.default_rng(seed)
    pts = mean + np.sqrt(cov) * rng.standard_normal((n, mean.size))
    return ParticleEnsemble.uniform(pts)


def histogram(m: ParticleEnsemble, lo: float, hi: float, cells: int) -> GridDensity:
    """Bin a 1D ensemble onto a grid.

    Points on a cell boundary go to the lower-index cell; mass outside
    ``[lo, hi]`` is clipped into the boundary cells.
    """
    if not isinstance(m, ParticleEnsemble) or m.size == 0:
        raise InvalidArgumentError("histogram needs a nonempty ParticleEnsemble")
    if m.dim != 1:
        raise InvalidArgumentError("histogram is 1D; use histogram2d for planar ensembles")
    if not hi > lo or cells < 2:
        raise InvalidArgumentError("need lo < hi and cells >= 2")
    edges = np.linspace(lo, hi, cells + 1)
    idx = np.searchsorted(edges, m.points[:, 0], side="left") - 1
    idx = np.clip(idx, 0, cells - 1)
    mass = np.bincount(idx, weights=m.weights, minlength=cells)
    return GridDensity(lo, hi, mass / ((hi - lo) / cells))


def histogram2d(m: ParticleEnsemble, bounds, cells: int):
    """Planar histogram density, used only for plotting.

    Returns ``(values (cells, cells), xedges, yedges)``.
    """
    if m.dim != 2:
        raise InvalidArgumentError("histogram2d needs a 2D ensemble")
    (x0, x1), (y0, y1) = bounds
    pts = np.column_stack(
        [np.clip(m.points[:, 0], x0, x1), np.clip(m.points[:, 1], y0, y1)]
    )
    vals, xe, ye = np.histogram2d(
        pts[:, 0], pts[:, 1], bins=cells, range=[[x0, x1], [y0, y1]], weights=m.weights
    )
    area = (xe[1] - xe[0]) * (ye[1] - ye[0])
    return vals / area, xe, ye


# CSV I/O. repr() of a float is the shortest string that round-trips exactly.

def save_ensemble_csv(m: Measure, path) -> Path:
    path = Path(path)
    if isinstance(m, GridDensity):
        raise InvalidArgumentError("use save_grid_csv for grid densities")
    pts, w = nodes(m)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{k}" for k in range(pts.shape[1])] + ["weight"])
        for row, wi in zip(pts, w):
            wr.writerow([repr(float(v)) for v in row] + [repr(float(wi))])
    return path


def load_ensemble_csv(path) -> ParticleEnsemble:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ParticleEnsemble(data[:, :-1], data[:, -1])


def save_grid_csv(g: GridDensity, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([repr(g.lo), repr(g.hi), str(g.cells)])
        for v in g.values:
            wr.writerow([repr(float(v))])
    return path


def load_grid_csv(path) -> GridDensity:
    with Path(path).open() as fh:
        rd = csv.reader(fh)
        lo, hi, cells = next(rd)
        vals = np.array([float(r[0]) for r in rd])
    if vals.size != int(cells):
        raise InvalidArgumentError(f"{path}: header says {cells} cells, found {vals.size}")
    lo, hi = float(lo), float(hi)
    if hi <= lo or np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise InvalidArgumentError(f"{path}: invalid grid density")
    if abs((hi - lo) / vals.size * vals.sum() - 1.0) > MASS_TOL:
        raise InvalidArgumentError(f"{path}: grid density is not normalized")
    g = GridDensity.__new__(GridDensity)
    # Bypass renormalization so stored bits come back unchanged.
    object.__setattr__(g, "lo", lo)
    object.__setattr__(g, "hi", hi)
    object.__setattr__(g, "values", _frozen_array(vals))
    return g


def save_measure_csv(m: Measure, path) -> Path:
    if isinstance(m, GridDensity):
        return save_grid_csv(m, path)
    return save_ensemble_csv(m, path)
