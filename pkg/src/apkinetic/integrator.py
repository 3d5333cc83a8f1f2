"""IMEX Runge-Kutta stepping for the penalized Boltzmann equation.

Each stage solves

    F_i = f^n + dt sum_{j<i} at_ij (mu/eps g(F_j) - v.grad F_j)
              + dt sum_{j<=i} a_ij mu/eps (M_j - F_j)

where M_i is built from moments obtained explicitly by integrating the stage
relation against the collision invariants. The implicit part is therefore a
pointwise division, never a nonlinear solve.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .collision import CollisionBackend
from .errors import BlowUpError, ConfigError
from .limits import Mesh1D, check_cfl, maxwellian_values, moment_values
from .tableaux import IMEXPair, is_globally_stiffly_accurate, positivity_conditions
from .velocity import RHO_FLOOR, GridFunction, VelocityGrid2D, entropy, l1_distance

log = logging.getLogger(__name__)

#: node magnitude treated as numerical blow-up
BLOWUP_THRESHOLD = 1e12


@dataclass(frozen=True, eq=False)
class StepperConfig:
    pair: IMEXPair
    dt: float
    eps: float
    backend: CollisionBackend
    enforce_positivity_report: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")

    @property
    def gsa(self) -> bool:
        return is_globally_stiffly_accurate(self.pair).satisfied

    def lam(self, mu: float) -> float:
        """Stiffness ratio eps / (mu dt)."""
        return math.inf if mu == 0 else self.eps / (mu * self.dt)


@dataclass
class StageWorkspace:
    F: list = field(default_factory=list)
    U: list = field(default_factory=list)  # stage conserved moments (..., 4)
    M: list = field(default_factory=list)
    g: list = field(default_factory=list)  # None where no explicit weight uses it
    final_quadrature: np.ndarray | None = None
    lam: np.ndarray | float | None = None


@dataclass(frozen=True)
class KineticState1D:
    mesh: Mesh1D
    grid: VelocityGrid2D
    values: np.ndarray  # (n_x, n_v, n_v)

    def __post_init__(self):
        shape = (self.mesh.n_x, self.grid.n_v, self.grid.n_v)
        if self.values.shape != shape:
            raise ValueError(f"values have shape {self.values.shape}, expected {shape}")

    @classmethod
    def maxwellian(cls, mesh: Mesh1D, grid: VelocityGrid2D, U: np.ndarray) -> "KineticState1D":
        return cls(mesh, grid, maxwellian_values(U, grid))

    @property
    def moments(self) -> np.ndarray:
        return moment_values(self.values, self.grid)

    def cfl(self, dt: float) -> float:
        return self.grid.v_max * dt / self.mesh.dx

    def cell(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.values[i])


def upwind_transport(values: np.ndarray, mesh: Mesh1D, grid: VelocityGrid2D) -> np.ndarray:
    """First-order upwind approximation of v_x d/dx per velocity node."""
    vx, _ = grid.mesh
    padded = mesh.pad(values)
    flux = np.maximum(vx, 0.0) * padded[:-1] + np.minimum(vx, 0.0) * padded[1:]
    return (flux[1:] - flux[:-1]) / mesh.dx


def stage_moments_explicit(Un: np.ndarray, explicit_A: np.ndarray, dt: float, i: int,
                           transport_moments: list) -> np.ndarray:
    """Moments of stage ``i`` from the explicit moment scheme.

    Collision terms drop out against the collision invariants, so only the
    transport contributions of earlier stages enter. ``transport_moments[j]``
    is None in space-homogeneous runs.
    """
    U = np.array(Un, dtype=float, copy=True)
    for j in range(i):
        a = explicit_A[i, j]
        if a != 0 and transport_moments[j] is not None:
            U -= dt * a * transport_moments[j]
    return U


def _check(values: np.ndarray, stage, lam):
    if not np.all(np.isfinite(values)) or np.abs(values).max() > BLOWUP_THRESHOLD:
        raise BlowUpError(f"stage {stage} blew up (lambda={np.min(lam):.3g})", stage=stage, lam=lam)


def _check_physical(values: np.ndarray, grid: VelocityGrid2D, lam):
    # an update with no Maxwellian (rho <= 0 or T <= 0) cannot be stepped again
    U = moment_values(values, grid)
    rho = U[..., 0]
    T = (2.0 * U[..., 3] * rho - U[..., 1] ** 2 - U[..., 2] ** 2) / (2.0 * rho**2)
    if np.any(~(rho > RHO_FLOOR)) or np.any(~(T > 0)):
        raise BlowUpError(f"update has non-physical moments (min rho={np.min(rho):.3g}, min T={np.min(T):.3g},"
                          f" lambda={np.min(lam):.3g})", stage="final", lam=lam)


def _imex_core(f: np.ndarray, grid: VelocityGrid2D, cfg: StepperConfig, transport=None):
    """One step on a stack of distributions f[..., n_v, n_v].

    ``transport`` maps a stack to its v.grad approximation, or is None.
    """
    pair, dt, eps, backend = cfg.pair, cfg.dt, cfg.eps, cfg.backend
    At, wt = pair.explicit.A_array, pair.explicit.w_array
    A, w = pair.implicit.A_array, pair.implicit.w_array
    nu = pair.stages

    Un = moment_values(f, grid)
    rho = Un[..., 0]
    if backend.kind == "none":
        mu = np.zeros_like(rho)
    else:
        mu = backend.mu_for_density(rho)
    ex = (..., None, None)
    k = (dt * mu / eps)[ex]  # dt mu / eps per leading index
    lam = np.where(mu > 0, eps / np.where(mu > 0, mu, 1.0) / dt, np.inf)

    # columns whose g / transport terms are ever used
    need_explicit = [wt[j] != 0 or np.any(At[j + 1:, j] != 0) for j in range(nu)]

    ws = StageWorkspace(lam=lam)
    T, Tm = [None] * nu, [None] * nu
    for i in range(nu):
        Ui = stage_moments_explicit(Un, At, dt, i, Tm)
        Mi = maxwellian_values(Ui, grid)
        rhs = f.copy()
        for j in range(i):
            if At[i, j] != 0:
                if backend.kind != "none":
                    rhs += At[i, j] * k * ws.g[j]
                if T[j] is not None:
                    rhs -= dt * At[i, j] * T[j]
            if A[i, j] != 0:
                rhs += A[i, j] * k * (ws.M[j] - ws.F[j])
        if A[i, i] != 0:
            Fi = (rhs + A[i, i] * k * Mi) / (1.0 + A[i, i] * k)
        else:
            Fi = rhs
        _check(Fi, i + 1, lam)
        gi = None
        if need_explicit[i]:
            if backend.kind != "none":
                gi = backend.deviation_values(Fi, Mi, Ui[..., 0], mu)
            if transport is not None:
                T[i] = transport(Fi)
                Tm[i] = moment_values(T[i], grid)
        ws.F.append(Fi)
        ws.U.append(Ui)
        ws.M.append(Mi)
        ws.g.append(gi)

    out = f.copy()
    for i in range(nu):
        if wt[i] != 0:
            if ws.g[i] is not None:
                out += wt[i] * k * ws.g[i]
            if T[i] is not None:
                out -= dt * wt[i] * T[i]
        if w[i] != 0:
            out += w[i] * k * (ws.M[i] - ws.F[i])
    ws.final_quadrature = out
    _check(out, "final", lam)
    # stiffly accurate pairs: the update is the last stage, exactly
    result = ws.F[-1].copy() if cfg.gsa else out
    _check_physical(result, grid, lam)
    return result, ws


def imex_step_homogeneous(f: GridFunction, cfg: StepperConfig, return_workspace: bool = False):
    new, ws = _imex_core(f.values, f.grid, cfg)
    out = GridFunction(f.grid, new)
    return (out, ws) if return_workspace else out


def imex_step_1d(state: KineticState1D, cfg: StepperConfig, return_workspace: bool = False):
    check_cfl(state.grid, state.mesh, cfg.dt)
    transport = lambda F: upwind_transport(F, state.mesh, state.grid)  # noqa: E731
    new, ws = _imex_core(state.values, state.grid, cfg, transport)
    out = replace(state, values=new)
    return (out, ws) if return_workspace else out


# -- relaxation runs ---------------------------------------------------------

@dataclass
class Trajectory:
    snapshots: list  # (t, GridFunction)
    diagnostics: list  # dicts, one per step plus t=0

    @property
    def final(self) -> GridFunction:
        return self.snapshots[-1][1]

    @property
    def times(self) -> list:
        return [d["t"] for d in self.diagnostics]


DIAGNOSTIC_COLUMNS = ("t", "lambda", "rho_drift", "w_drift", "E_drift", "entropy", "min_f", "l1_error")


def _diagnostics(t, f: GridFunction, U0, lam, oracle) -> dict:
    U = moment_values(f.values, f.grid)
    try:
        H = entropy(f)
    except ValueError:
        H = math.nan
    row = {
        "t": t,
        "lambda": lam,
        "rho_drift": float(U[0] - U0[0]),
        "w_drift": float(np.hypot(U[1] - U0[1], U[2] - U0[2])),
        "E_drift": float(U[3] - U0[3]),
        "entropy": H,
        "min_f": f.min,
        "l1_error": math.nan,
    }
    if oracle is not None:
        row["l1_error"] = l1_distance(f, oracle(t))
    return row


def step_schedule(t_end: float, dt: float) -> list[float]:
    """Step sizes summing to ``t_end``; only a genuine remainder shortens the last step."""
    if not t_end > 0:
        raise ConfigError(f"t_end must be positive, got {t_end}")
    n = max(1, int(math.ceil(t_end / dt - 1e-9)))
    steps = [dt] * n
    last = t_end - dt * (n - 1)
    if abs(last - dt) > 1e-12 * dt:  # a rounding-level remainder keeps the uniform step
        steps[-1] = last
    return steps


def run_relaxation(f0: GridFunction, cfg: StepperConfig, t_end: float, snapshot_every: int | None = None,
                   oracle=None, on_step=None) -> Trajectory:
    """Repeated homogeneous steps with per-step diagnostics.

    ``oracle(t)`` returning a GridFunction adds an L1 error column.
    ``on_step(n, t, f, workspace)`` is called after every step.
    """
    U0 = moment_values(f0.values, f0.grid)
    f, t = f0, 0.0
    snaps = [(0.0, f0)]
    diags = [_diagnostics(0.0, f0, U0, math.nan, oracle)]
    steps = step_schedule(t_end, cfg.dt)
    for n, h in enumerate(steps, start=1):
        step_cfg = cfg if h == cfg.dt else replace(cfg, dt=h)
        if cfg.enforce_positivity_report:
            lam_n = step_cfg.lam(float(cfg.backend.mu_for_density(U0[0])))
            rep = positivity_conditions(cfg.pair, lam_n)
            if not rep.satisfied:
                log.warning("positivity conditions violated at lambda=%.3g (worst %.3g)", lam_n, rep.worst_violation)
        f, ws = imex_step_homogeneous(f, step_cfg, return_workspace=True)
        t = n * cfg.dt if n < len(steps) else t_end
        diags.append(_diagnostics(t, f, U0, float(ws.lam), oracle))
        if on_step is not None:
            on_step(n, t, f, ws)
        if snapshot_every and n % snapshot_every == 0 and n < len(steps):
            snaps.append((t, f))
    snaps.append((t, f))
    return Trajectory(snaps, diags)
