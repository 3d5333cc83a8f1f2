"""Reference solutions: the BKW relaxation profile and the fluid-limit solver.

The Euler solver evolves (rho, rho w_x, rho w_y, E) per cell with a kinetic
flux-splitting flux evaluated on the same velocity grid and quadrature as the
kinetic solver, so that in the eps -> 0 limit the two agree up to the
collision stiffness alone.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateStateError, InvalidMomentsError
from .tableaux import ButcherTableau
from .velocity import RHO_FLOOR, GridFunction, VelocityGrid2D


@dataclass(frozen=True)
class BKWParams:
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def bkw_S(t: float, sigma: float = 1.0) -> float:
    return 1.0 - 0.5 * np.exp(-sigma**2 * t / 8.0)


def _bkw_values(grid: VelocityGrid2D, S: float, sigma: float) -> np.ndarray:
    x = grid.speed2 / sigma**2
    return (2.0 * S - 1.0 + (1.0 - S) / (2.0 * S) * x) * np.exp(-x / (2.0 * S)) / (2.0 * np.pi * S**2 * sigma**2)


def bkw(grid: VelocityGrid2D, t: float, params: BKWParams = BKWParams()) -> GridFunction:
    """Exact space-homogeneous solution for 2D Maxwell molecules."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return GridFunction(grid, _bkw_values(grid, bkw_S(t, params.sigma), params.sigma))


def bkw_dt(grid: VelocityGrid2D, t: float, params: BKWParams = BKWParams()) -> GridFunction:
    """Analytic time derivative of :func:`bkw`."""
    sigma = params.sigma
    S = bkw_S(t, sigma)
    dS = sigma**2 / 8.0 * (1.0 - S)
    x = grid.speed2 / sigma**2
    A = 1.0 / (2.0 * np.pi * S**2 * sigma**2)
    P = 2.0 * S - 1.0 + (1.0 - S) / (2.0 * S) * x
    dP = 2.0 - x / (2.0 * S**2)
    e = np.exp(-x / (2.0 * S))
    dfdS = A * e * (-2.0 / S * P + dP + P * x / (2.0 * S**2))
    return GridFunction(grid, dfdS * dS)


# -- fluid limit -------------------------------------------------------------

@dataclass(frozen=True)
class Mesh1D:
    n_x: int
    x_max: float = 1.0
    bc: str = "free"  # "periodic" | "free"

    def __post_init__(self):
        if self.bc not in ("periodic", "free"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.n_x < 2:
            raise ValueError("need at least two cells")

    @property
    def dx(self) -> float:
        return self.x_max / self.n_x

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_x) + 0.5) * self.dx

    def pad(self, a: np.ndarray) -> np.ndarray:
        """One ghost cell on each side along axis 0."""
        if self.bc == "periodic":
            return np.concatenate([a[-1:], a, a[:1]])
        return np.concatenate([a[:1], a, a[-1:]])


def maxwellian_values(U: np.ndarray, grid: VelocityGrid2D) -> np.ndarray:
    """Maxwellians for conserved rows (rho, rho w_x, rho w_y, E); shape (..., n_v, n_v)."""
    U = np.asarray(U, dtype=float)
    rho = U[..., 0]
    if np.any(~(rho > RHO_FLOOR)):
        raise DegenerateStateError(f"density {np.min(rho):g} too small for a Maxwellian")
    wx, wy = U[..., 1] / rho, U[..., 2] / rho
    T = (2.0 * U[..., 3] - rho * (wx**2 + wy**2)) / (2.0 * rho)
    if np.any(~(T > 0)):
        raise InvalidMomentsError(f"non-positive temperature {np.min(T):g}")
    vx, vy = grid.mesh
    ex = (..., None, None)
    c2 = (vx - wx[ex]) ** 2 + (vy - wy[ex]) ** 2
    return (rho / (2.0 * np.pi * T))[ex] * np.exp(-c2 / (2.0 * T[ex]))


def moment_values(values: np.ndarray, grid: VelocityGrid2D) -> np.ndarray:
    """Conserved moments of (..., n_v, n_v) arrays; shape (..., 4)."""
    vx, vy = grid.mesh
    phi = np.stack([np.ones_like(vx), vx, vy, 0.5 * (vx**2 + vy**2)])
    return grid.weight * np.einsum("...ij,pij->...p", values, phi)


def primitive(U: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rho, w_x, T) from conserved rows."""
    rho = U[..., 0]
    wx, wy = U[..., 1] / rho, U[..., 2] / rho
    T = (2.0 * U[..., 3] - rho * (wx**2 + wy**2)) / (2.0 * rho)
    return rho, wx, T


def conserved_from_primitive(rho, wx, T, wy=0.0) -> np.ndarray:
    rho, wx, T = np.broadcast_arrays(np.asarray(rho, float), np.asarray(wx, float), np.asarray(T, float))
    wy = np.broadcast_to(np.asarray(wy, float), rho.shape)
    E = 0.5 * rho * (wx**2 + wy**2) + rho * T
    return np.stack([rho, rho * wx, rho * wy, E], axis=-1)


@dataclass(frozen=True)
class EulerState1D:
    mesh: Mesh1D
    U: np.ndarray  # (n_x, 4)

    def __post_init__(self):
        if self.U.shape != (self.mesh.n_x, 4):
            raise ValueError(f"U has shape {self.U.shape}, expected {(self.mesh.n_x, 4)}")

    @property
    def rho(self) -> np.ndarray:
        return self.U[:, 0]


def half_space_fluxes(U: np.ndarray, grid: VelocityGrid2D) -> tuple[np.ndarray, np.ndarray]:
    """Right- and left-going parts of int v_x phi M[U] dv on the velocity grid."""
    M = maxwellian_values(U, grid)
    vx, _ = grid.mesh
    flux_v = M * vx
    plus = moment_values(np.where(vx > 0, flux_v, 0.0), grid)
    minus = moment_values(np.where(vx < 0, flux_v, 0.0), grid)
    return plus, minus


def kinetic_flux_1d(uL, uR, grid: VelocityGrid2D) -> np.ndarray:
    """Flux through an interface with states uL | uR (rows of conserved variables)."""
    uL, uR = np.asarray(uL, float), np.asarray(uR, float)
    plus, _ = half_space_fluxes(uL, grid)
    _, minus = half_space_fluxes(uR, grid)
    return plus + minus


def euler_divergence(U: np.ndarray, mesh: Mesh1D, grid: VelocityGrid2D) -> np.ndarray:
    """Finite-volume divergence of the kinetic flux, shape (n_x, 4)."""
    plus, minus = half_space_fluxes(mesh.pad(U), grid)
    F = plus[:-1] + minus[1:]  # interfaces i-1/2 for i = 0..n_x
    return (F[1:] - F[:-1]) / mesh.dx


def check_cfl(grid: VelocityGrid2D, mesh: Mesh1D, dt: float, limit: float = 0.9) -> float:
    from .errors import ConfigError

    cfl = grid.v_max * dt / mesh.dx
    if cfl > limit * (1.0 + 1e-12):
        raise ConfigError(f"CFL number {cfl:.3f} exceeds {limit} (v_max dt / dx)")
    return cfl


def explicit_rk_euler_step(state: EulerState1D, dt: float, explicit: ButcherTableau,
                           grid: VelocityGrid2D) -> EulerState1D:
    """One explicit RK step of the fluid limit system with matched kinetic fluxes."""
    check_cfl(grid, state.mesh, dt)
    A, w = explicit.A_array, explicit.w_array
    nu = explicit.stages
    Un = state.U
    D = [None] * nu
    for i in range(nu):
        Ui = Un.copy()
        for j in range(i):
            if A[i, j] != 0:
                Ui -= dt * A[i, j] * D[j]
        needed = w[i] != 0 or np.any(A[i + 1:, i] != 0)
        if needed:
            D[i] = euler_divergence(Ui, state.mesh, grid)
    U = Un.copy()
    for i in range(nu):
        if w[i] != 0:
            U -= dt * w[i] * D[i]
    rho, _, T = primitive(U)
    if np.any(rho <= 0) or np.any(T <= 0):
        raise InvalidMomentsError("Euler step produced a non-physical state")
    return replace(state, U=U)
