"""Uniform-grid densities: moments, CDF/quantile machinery, Holder seminorm,
tail checks, and the seeded random-density generator used by the fuzz suites.

All quadrature in the package is the midpoint rule on cell centers; masses and
moments computed here are the single source of truth for that convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NotNormalized, ZeroMass

NORMALIZED_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform 1D grid of n cells on [x_min, x_max], data at cell centers."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs n >= 2 cells, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("grid needs x_max > x_min")

    @classmethod
    def symmetric(cls, half_width: float, n: int) -> "Grid":
        return cls(-half_width, half_width, n)

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @cached_property
    def centers(self) -> np.ndarray:
        h = self.h
        x = self.x_min + (np.arange(self.n) + 0.5) * h
        x.setflags(write=False)
        return x

    @cached_property
    def edges(self) -> np.ndarray:
        e = self.x_min + np.arange(self.n + 1) * self.h
        e.setflags(write=False)
        return e


class GridDensity:
    """Nonnegative density (per unit length) at the cell centers of a Grid.

    Values are frozen after construction; the cached mass is exactly
    h * sum(values) under numpy's fixed summation order.
    """

    __slots__ = ("grid", "values", "mass")

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n,):
            raise ValueError(f"expected {grid.n} values, got shape {values.shape}")
        if np.any(values < 0.0):
            raise ValueError("density values must be nonnegative")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mass", grid.h * float(np.sum(values)))

    def __setattr__(self, name, value):
        raise AttributeError("GridDensity is immutable")

    @property
    def x(self) -> np.ndarray:
        return self.grid.centers

    def is_normalized(self, tol: float = NORMALIZED_TOL) -> bool:
        return abs(self.mass - 1.0) <= tol


def require_normalized(rho: GridDensity, what: str = "density") -> None:
    if not rho.is_normalized():
        raise NotNormalized(f"{what} has mass {rho.mass!r}, expected 1 within {NORMALIZED_TOL}")


def normalize(rho: GridDensity) -> GridDensity:
    """Rescale to unit mass under the midpoint rule.

    A single positive factor is applied; it is refined until the recomputed
    mass sits within a few ulp of 1 (the fixed point of the rounding map), so
    normalize(normalize(rho)) == normalize(rho) exactly.
    """
    if rho.mass == 0.0:
        raise ZeroMass("cannot normalize a density with zero mass")
    tol = 8 * np.finfo(float).eps
    if abs(rho.mass - 1.0) <= tol:
        return rho
    h = rho.grid.h
    factor = 1.0 / rho.mass
    out = GridDensity(rho.grid, rho.values * factor)
    for _ in range(3):
        if abs(out.mass - 1.0) <= tol:
            break
        factor /= out.mass
        out = GridDensity(rho.grid, rho.values * factor)
    return out


def moment(rho: GridDensity, k: int) -> float:
    """Midpoint-rule value of the k-th moment, k in {0, 1, 2}."""
    if k not in (0, 1, 2):
        raise ValueError(f"moment order must be 0, 1 or 2, got {k}")
    if k == 0:
        return rho.grid.h * float(np.sum(rho.values))
    return rho.grid.h * float(np.sum(rho.x**k * rho.values))


class QuantileFn:
    """Piecewise-linear CDF of a unit-mass GridDensity and its inverse.

    The CDF is linear within each cell (slope = cell density); inversion maps
    flat segments to their left endpoint, giving the lower quantile that
    realizes the nondecreasing optimal transport map.
    """

    def __init__(self, rho: GridDensity):
        require_normalized(rho)
        grid = rho.grid
        self.edges = grid.edges
        cum = np.empty(grid.n + 1)
        cum[0] = 0.0
        np.cumsum(grid.h * rho.values, out=cum[1:])
        self.cum = cum
        self.density = rho.values
        self._n = grid.n

    def cdf(self, x):
        return np.interp(x, self.edges, self.cum)

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        idx = np.searchsorted(self.cum, q, side="left")
        idx = np.clip(idx, 1, self._n)
        cell = idx - 1
        dens = self.density[cell]
        offs = np.where(dens > 0.0, (q - self.cum[cell]) / np.where(dens > 0.0, dens, 1.0), 0.0)
        x = self.edges[cell] + offs
        return np.clip(x, self.edges[0], self.edges[-1])


def cdf_quantile(rho: GridDensity) -> QuantileFn:
    """CDF/quantile pair for a unit-mass density (raises NotNormalized else)."""
    return QuantileFn(rho)


def holder_seminorm(u: np.ndarray, grid: Grid, alpha: float) -> float:
    """Discrete Holder seminorm max_{i!=j} |u_i - u_j| / |x_i - x_j|^alpha.

    Exact over all pairs for n <= 4096; strided subsample above that.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    u = np.asarray(u, dtype=float)
    n = u.size
    stride = 1 if n <= 4096 else int(np.ceil(n / 4096))
    us = u[::stride]
    step = grid.h * stride
    best = 0.0
    for m in range(1, us.size):
        num = float(np.max(np.abs(us[m:] - us[:-m])))
        best = max(best, num / (m * step) ** alpha)
    return best


@dataclass(frozen=True)
class TailReport:
    """Outcome of checking rho(x) <= A * exp(-a|x|) on the grid."""

    a: float
    A: float
    satisfied: bool
    violating_cell: int | None = None


def tail_check(rho: GridDensity, a: float, A: float) -> TailReport:
    """Verify the exponential envelope cell by cell."""
    if a <= 0 or A <= 0:
        raise ValueError("tail check needs a > 0 and A > 0")
    bound = A * np.exp(-a * np.abs(rho.x))
    excess = rho.values - bound
    worst = int(np.argmax(excess))
    ok = excess[worst] <= 0.0
    return TailReport(a=a, A=A, satisfied=bool(ok), violating_cell=None if ok else worst)


@dataclass(frozen=True)
class DensitySpec:
    """Recipe for one seeded fuzz density: smooth bumps under an exponential
    envelope, so every sample is tail-checked with rate >= 1 by construction."""

    seed: int
    n_bumps: int = 3
    alpha: float = 0.75
    support_scale: float = 1.5

    def __post_init__(self):
        if not 1 <= self.n_bumps <= 8:
            raise ValueError(f"n_bumps must be in 1..8, got {self.n_bumps}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.support_scale <= 0:
            raise ValueError("support_scale must be positive")


ENVELOPE_RATE = 2.0


def random_density(spec: DensitySpec, grid: Grid | None = None) -> GridDensity:
    """Deterministic unit-mass density for a spec: Gaussian bumps times
    exp(-2|x|). The first bump is centered, so single-bump specs are even.
    """
    if grid is None:
        grid = Grid.symmetric(4.0, 1024)
    rng = np.random.default_rng(spec.seed)
    x = grid.centers
    scale = spec.support_scale
    w_lo = (0.15 + 0.25 * spec.alpha) * scale
    w_hi = (0.45 + 0.45 * spec.alpha) * scale
    total = np.zeros_like(x)
    for k in range(spec.n_bumps):
        center = 0.0 if k == 0 else rng.uniform(-scale, scale)
        width = rng.uniform(w_lo, w_hi)
        amp = rng.uniform(0.3, 1.0)
        total += amp * np.exp(-(((x - center) / width) ** 2))
    total *= np.exp(-ENVELOPE_RATE * np.abs(x))
    return normalize(GridDensity(grid, total))


def save_density_csv(path, rho: GridDensity) -> None:
    """Write `x,rho` rows (UTF-8, '.' decimal, round-trip precision)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("x,rho\n")
        for xi, vi in zip(rho.x, rho.values):
            f.write(f"{xi:.17g},{vi:.17g}\n")


def load_density_csv(path) -> GridDensity:
    """Read a `x,rho` file back onto the uniform grid it was written from."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns x,rho")
    x, v = data[:, 0], data[:, 1]
    n = x.size
    if n < 2:
        raise ValueError(f"{path}: need at least two rows")
    h = (x[-1] - x[0]) / (n - 1)
    if h <= 0 or np.max(np.abs(np.diff(x) - h)) > 1e-9 * abs(h):
        raise ValueError(f"{path}: grid is not uniform")
    grid = Grid(float(x[0] - h / 2), float(x[-1] + h / 2), n)
    return GridDensity(grid, v)
