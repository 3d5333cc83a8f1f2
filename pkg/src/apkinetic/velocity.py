"""Uniform 2D velocity grids, distribution functions and their moments."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateStateError, GridError, InvalidMomentsError, NegativeDensityError

#: densities at or below this are treated as vacuum
RHO_FLOOR = 1e-14


@dataclass(frozen=True)
class VelocityGrid2D:
    """Periodic grid on [-v_max, v_max)^2 with ``n_v`` nodes per direction."""

    n_v: int
    v_max: float

    def __post_init__(self):
        if self.n_v < 8 or self.n_v % 2:
            raise GridError(f"n_v must be even and >= 8, got {self.n_v}")
        if not self.v_max > 0:
            raise GridError(f"v_max must be positive, got {self.v_max}")

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @property
    def weight(self) -> float:
        """Quadrature weight of every node."""
        return self.dv**2

    @property
    def nodes(self) -> np.ndarray:
        return -self.v_max + self.dv * np.arange(self.n_v)

    @property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.nodes
        return np.meshgrid(v, v, indexing="ij")

    @property
    def speed2(self) -> np.ndarray:
        vx, vy = self.mesh
        return vx**2 + vy**2

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros((self.n_v, self.n_v)))


@dataclass(frozen=True)
class GridFunction:
    """A distribution sampled on a :class:`VelocityGrid2D`.

    Values may go slightly negative (spectral collision evaluations do that);
    they are reported by diagnostics, never clipped.
    """

    grid: VelocityGrid2D
    values: np.ndarray

    def __post_init__(self):
        shape = (self.grid.n_v, self.grid.n_v)
        if self.values.shape != shape:
            raise GridError(f"values have shape {self.values.shape}, expected {shape}")

    def _check(self, other: "GridFunction"):
        if other.grid != self.grid:
            raise GridError("grid functions live on different grids")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, self.values - other.values)
        return NotImplemented

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    @property
    def min(self) -> float:
        return float(self.values.min())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True)
class Moments:
    """Hydrodynamic fields: density, mean velocity, total energy, temperature."""

    rho: float
    w: tuple[float, float]
    E: float
    T: float

    @classmethod
    def from_primitive(cls, rho: float, w=(0.0, 0.0), T: float = 1.0) -> "Moments":
        w = (float(w[0]), float(w[1]))
        E = 0.5 * rho * (w[0] ** 2 + w[1] ** 2) + rho * T
        return cls(float(rho), w, float(E), float(T))

    @classmethod
    def from_conserved(cls, rho: float, mom, E: float) -> "Moments":
        if not rho > RHO_FLOOR:
            raise DegenerateStateError(f"density {rho:g} too small to define a temperature")
        w = (float(mom[0]) / rho, float(mom[1]) / rho)
        T = (2.0 * E - rho * (w[0] ** 2 + w[1] ** 2)) / (2.0 * rho)
        return cls(float(rho), w, float(E), float(T))

    @property
    def conserved(self) -> np.ndarray:
        """(rho, rho w_x, rho w_y, E)."""
        return np.array([self.rho, self.rho * self.w[0], self.rho * self.w[1], self.E])


def conserved_moments(f: GridFunction) -> np.ndarray:
    """Quadrature of f against the collision invariants (1, v_x, v_y, |v|^2/2)."""
    grid = f.grid
    vx, vy = grid.mesh
    vals = f.values
    return grid.weight * np.array([
        vals.sum(),
        (vals * vx).sum(),
        (vals * vy).sum(),
        0.5 * (vals * (vx**2 + vy**2)).sum(),
    ])


def moments(f: GridFunction) -> Moments:
    rho, mx, my, E = conserved_moments(f)
    return Moments.from_conserved(rho, (mx, my), E)


def maxwellian(m: Moments, grid: VelocityGrid2D) -> GridFunction:
    """Local Maxwellian rho/(2 pi T) exp(-|v-w|^2 / 2T) sampled on the grid nodes."""
    if not (m.rho > 0 and m.T > 0):
        raise InvalidMomentsError(f"need rho > 0 and T > 0, got rho={m.rho:g}, T={m.T:g}")
    vx, vy = grid.mesh
    c2 = (vx - m.w[0]) ** 2 + (vy - m.w[1]) ** 2
    return GridFunction(grid, m.rho / (2.0 * np.pi * m.T) * np.exp(-c2 / (2.0 * m.T)))


def l1_distance(f: GridFunction, g: GridFunction) -> float:
    if f.grid != g.grid:
        raise GridError("grid functions live on different grids")
    return float(f.grid.weight * np.abs(f.values - g.values).sum())


def l1_norm(f: GridFunction) -> float:
    return float(f.grid.weight * np.abs(f.values).sum())


def entropy(f: GridFunction) -> float:
    """Boltzmann H functional, with 0 log 0 = 0."""
    vals = f.values
    if vals.min() < -1e-12:
        raise NegativeDensityError(f"entropy of a density with min value {vals.min():g}")
    pos = vals[vals > 0]
    return float(f.grid.weight * (pos * np.log(pos)).sum())


# -- snapshots ---------------------------------------------------------------

def save_snapshot(f: GridFunction, path) -> None:
    """Write f as CSV: a ``# n_v,v_max`` header line then n_v rows."""
    path = Path(path)
    header = f"{f.grid.n_v},{f.grid.v_max!r}"
    np.savetxt(path, f.values, delimiter=",", header=header, fmt="%.17g")


def load_snapshot(path) -> GridFunction:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().lstrip("#").strip()
    n_v, v_max = header.split(",")
    grid = VelocityGrid2D(int(n_v), float(v_max))
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    return GridFunction(grid, values)
