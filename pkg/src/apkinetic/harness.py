"""Experiment orchestration and deterministic CSV output."""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .collision import DEFAULT_B0, CollisionBackend
from .errors import BlowUpError, ConfigError, DegenerateStateError, InvalidMomentsError, UnknownSchemeError
from .integrator import (DIAGNOSTIC_COLUMNS, KineticState1D, StepperConfig, imex_step_1d,
                         imex_step_homogeneous, run_relaxation, step_schedule)
from .limits import (BKWParams, EulerState1D, Mesh1D, bkw, conserved_from_primitive,
                     explicit_rk_euler_step, primitive)
from .tableaux import BUILTIN, IMEXPair, builtin_pair, condition_rows, load_pair
from .velocity import GridFunction, VelocityGrid2D, l1_distance, maxwellian, moments, save_snapshot

EXPERIMENTS = ("relaxation", "convergence", "ap-limit", "tableau-report")


@dataclass
class RunConfig:
    experiment: str = "relaxation"
    n_v: int = 32
    v_max: float = 3 * math.pi
    scheme: str = "IMEX-BE(2,2,4)"
    tableau_file: str | None = None
    backend: str = "boltzmann"
    kappa: float = 1.0
    b0: float = DEFAULT_B0
    eps: list = field(default_factory=lambda: [1.0])
    dt: list = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    t_end: float = 2.0
    sigma: float = 1.0
    out: str = "out"
    seed: int = 0
    # relaxation initial data: "bkw" or "perturbed" (random smooth perturbation of M(1,0,1))
    initial: str = "bkw"
    perturbation: float = 0.2
    snapshot_every: int = 0
    # ap-limit
    ap_variant: str = "homogeneous"  # "homogeneous" | "1d"
    n_x: int = 100
    x_max: float = 1.0
    bc: str = "free"
    cfl: float = 0.9
    steps: int = 100
    # tableau report
    lambdas: list = field(default_factory=lambda: [0.25, 0.5, 1.0])
    schemes: list = field(default_factory=list)
    # execution
    workers: int = 1
    timing: bool = False

    def validate(self) -> "RunConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for name in ("eps", "dt", "lambdas"):
            v = getattr(self, name)
            if not isinstance(v, list) or not v:
                raise ConfigError(f"{name} must be a nonempty list")
            if any(not (isinstance(x, (int, float)) and x > 0) for x in v):
                raise ConfigError(f"{name} entries must be positive numbers")
        if any(b >= a for a, b in zip(self.dt, self.dt[1:])):
            raise ConfigError("dt values must be strictly decreasing")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.backend not in ("boltzmann", "bgk"):
            raise ConfigError(f"backend must be 'boltzmann' or 'bgk', got {self.backend!r}")
        if self.kappa < 1:
            raise ConfigError("kappa must be >= 1")
        if self.initial not in ("bkw", "perturbed"):
            raise ConfigError(f"unknown initial data {self.initial!r}")
        if self.ap_variant not in ("homogeneous", "1d"):
            raise ConfigError(f"unknown ap_variant {self.ap_variant!r}")
        try:
            VelocityGrid2D(self.n_v, self.v_max)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.backend == "boltzmann" and self.n_v & (self.n_v - 1):
            raise ConfigError("the spectral backend needs a power-of-two n_v")
        self.pair()
        return self

    def pair(self) -> IMEXPair:
        if self.tableau_file:
            return load_pair(self.tableau_file)
        try:
            return builtin_pair(self.scheme)
        except UnknownSchemeError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def grid(self) -> VelocityGrid2D:
        return VelocityGrid2D(self.n_v, self.v_max)

    def make_backend(self) -> CollisionBackend:
        if self.backend == "bgk":
            return CollisionBackend.bgk(self.kappa)
        return CollisionBackend.boltzmann(self.grid, self.b0, self.kappa)


def load_config(path=None, **overrides) -> RunConfig:
    """JSON config file (optional) with keyword overrides; None overrides are ignored."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


# -- reports -----------------------------------------------------------------

@dataclass
class SweepCell:
    eps: float
    dt: float
    l1_error: float
    steps: int
    runtime_ns: int | None = None
    status: str = "ok"


@dataclass
class OrderFit:
    eps: float
    order: float
    stderr: float
    reliable: bool


@dataclass
class ConvergenceReport:
    scheme: str
    cells: list
    fits: list

    def order(self, eps: float) -> float:
        return next(f.order for f in self.fits if f.eps == eps)


@dataclass
class APLimitReport:
    scheme: str
    variant: str
    rows: list  # homogeneous: (eps, dt, distance); 1d: per-cell comparisons
    monotone: bool | None = None
    l1_rho: float | None = None
    euler_rows: list = field(default_factory=list)
    kinetic_rows: list = field(default_factory=list)


@dataclass
class RelaxationReport:
    scheme: str
    diagnostics: list
    final: GridFunction


@dataclass
class TableauReport:
    rows: list  # (scheme, ConditionReport)


def observed_order(dts, errors) -> OrderFit:
    """Least-squares slope of log(error) against log(dt) with its standard error."""
    dts, errors = np.asarray(dts, float), np.asarray(errors, float)
    ok = np.isfinite(errors) & (errors > 0)
    if ok.sum() < 2:
        return OrderFit(math.nan, math.nan, math.nan, False)
    x, y = np.log(dts[ok]), np.log(errors[ok])
    slope, icept = np.polyfit(x, y, 1)
    n = x.size
    if n > 2:
        resid = y - (slope * x + icept)
        stderr = math.sqrt(resid @ resid / (n - 2) / ((x - x.mean()) @ (x - x.mean())))
    else:
        stderr = math.nan  # two points: no residual to judge the fit by
    return OrderFit(math.nan, float(slope), float(stderr), bool(stderr <= 0.1))


def _initial(cfg: RunConfig, grid: VelocityGrid2D) -> GridFunction:
    if cfg.initial == "bkw":
        return bkw(grid, 0.0, BKWParams(cfg.sigma))
    rng = np.random.default_rng(cfg.seed)
    vx, vy = grid.mesh
    coef = rng.uniform(-1.0, 1.0, size=(3, 3))
    poly = sum(coef[i, j] * vx**i * vy**j for i in range(3) for j in range(3) if i + j > 0)
    base = maxwellian(moments(bkw(grid, 200.0, BKWParams(cfg.sigma))), grid).values
    vals = base * (1.0 + cfg.perturbation * np.tanh(poly))
    return GridFunction(grid, vals)


def _convergence_cell(args):
    cfg, eps, dt = args
    grid = cfg.grid
    backend = cfg.make_backend()
    params = BKWParams(cfg.sigma)
    f0 = bkw(grid, 0.0, params)
    stepper = StepperConfig(cfg.pair(), dt, eps, backend)
    steps = step_schedule(cfg.t_end, dt)
    t0 = time.perf_counter_ns()
    f = f0
    done = 0
    try:
        for h in steps:
            f = imex_step_homogeneous(f, stepper if h == dt else replace(stepper, dt=h))
            done += 1
    except (BlowUpError, InvalidMomentsError, DegenerateStateError):
        return SweepCell(eps, dt, math.nan, done, None, "blowup")
    elapsed = time.perf_counter_ns() - t0
    err = l1_distance(f, bkw(grid, cfg.t_end, params))
    runtime = elapsed // len(steps) if cfg.timing else None
    return SweepCell(eps, dt, err, len(steps), runtime)


def run_convergence(cfg: RunConfig) -> ConvergenceReport:
    """Evolve BKW(0) to t_end for every (eps, dt) and fit observed orders per eps."""
    jobs = [(cfg, eps, dt) for eps in cfg.eps for dt in cfg.dt]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            cells = list(pool.map(_convergence_cell, jobs))
    else:
        cells = [_convergence_cell(j) for j in jobs]
    fits = []
    for eps in cfg.eps:
        sub = [c for c in cells if c.eps == eps]
        fit = observed_order([c.dt for c in sub], [c.l1_error for c in sub])
        fits.append(replace(fit, eps=eps))
    return ConvergenceReport(cfg.pair().name, cells, fits)


def sod_state(mesh: Mesh1D) -> np.ndarray:
    x = mesh.centers
    left = x < 0.5 * mesh.x_max
    return conserved_from_primitive(np.where(left, 1.0, 0.125), 0.0, np.where(left, 1.0, 0.8))


def run_ap_limit(cfg: RunConfig) -> APLimitReport:
    pair = cfg.pair()
    grid = cfg.grid
    backend = cfg.make_backend()
    if cfg.ap_variant == "homogeneous":
        f0 = bkw(grid, 0.0, BKWParams(cfg.sigma))
        M0 = maxwellian(moments(f0), grid)
        dt = cfg.dt[0]
        rows = []
        for eps in cfg.eps:
            f1 = imex_step_homogeneous(f0, StepperConfig(pair, dt, eps, backend))
            rows.append((eps, dt, l1_distance(f1, M0)))
        order = sorted(rows, key=lambda r: -r[0])
        mono = all(b[2] <= a[2] for a, b in zip(order, order[1:]))
        return APLimitReport(pair.name, "homogeneous", rows, monotone=mono)

    mesh = Mesh1D(cfg.n_x, cfg.x_max, cfg.bc)
    dt = cfg.cfl * mesh.dx / grid.v_max
    U0 = sod_state(mesh)
    eps = cfg.eps[-1]
    kin = KineticState1D.maxwellian(mesh, grid, U0)
    eul = EulerState1D(mesh, U0.copy())
    stepper = StepperConfig(pair, dt, eps, backend)
    for _ in range(cfg.steps):
        kin = imex_step_1d(kin, stepper)
        eul = explicit_rk_euler_step(eul, dt, pair.explicit, grid)
    Uk = kin.moments
    l1_rho = float(np.abs(Uk[:, 0] - eul.U[:, 0]).sum() * mesh.dx)
    t = cfg.steps * dt
    rows, erows, krows = [], [], []
    for i, x in enumerate(mesh.centers):
        rk, wk, _ = primitive(Uk[i])
        re, we, _ = primitive(eul.U[i])
        rows.append((x, rk, re, rk - re))
        erows.append((t, x, re, we, eul.U[i, 3]))
        krows.append((t, x, rk, wk, Uk[i, 3]))
    return APLimitReport(pair.name, "1d", rows, l1_rho=l1_rho, euler_rows=erows, kinetic_rows=krows)


def run_relaxation_experiment(cfg: RunConfig) -> RelaxationReport:
    grid = cfg.grid
    f0 = _initial(cfg, grid)
    stepper = StepperConfig(cfg.pair(), cfg.dt[0], cfg.eps[0], cfg.make_backend())
    oracle = None
    if cfg.initial == "bkw":
        params = BKWParams(cfg.sigma)
        oracle = lambda t: bkw(grid, t, params)  # noqa: E731
    traj = run_relaxation(f0, stepper, cfg.t_end, oracle=oracle)
    return RelaxationReport(cfg.pair().name, traj.diagnostics, traj.final)


def run_tableau_report(cfg: RunConfig) -> TableauReport:
    if cfg.tableau_file:
        pairs = [load_pair(cfg.tableau_file)]
    elif cfg.schemes:
        pairs = [builtin_pair(s) for s in cfg.schemes]
    else:
        pairs = [BUILTIN[k] for k in sorted(BUILTIN)]
    rows = []
    for pair in pairs:
        for rep in condition_rows(pair, tuple(cfg.lambdas)):
            rows.append((pair.name, rep))
    return TableauReport(rows)


# -- output ------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows):
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_outputs(report, directory) -> list[Path]:
    """Write CSV files plus ``summary.txt``; returns the written paths."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    def csv_file(name, header, rows):
        p = out / name
        _write_csv(p, header, rows)
        written.append(p)

    lines = []
    if isinstance(report, ConvergenceReport):
        csv_file("convergence.csv", ("epsilon", "dt", "l1_error", "steps", "runtime_ns"),
                 [(c.eps, c.dt, c.l1_error, c.steps, c.runtime_ns) for c in report.cells])
        csv_file("orders.csv", ("epsilon", "order", "stderr", "reliable"),
                 [(f.eps, f.order, f.stderr, f.reliable) for f in report.fits])
        lines.append(f"convergence sweep for {report.scheme}")
        for f in report.fits:
            flag = "" if f.reliable else " (unreliable fit)"
            lines.append(f"  eps={_fmt(f.eps)}: observed order {f.order:.4f} +- {f.stderr:.4f}{flag}")
        for c in report.cells:
            if c.status != "ok":
                lines.append(f"  eps={_fmt(c.eps)} dt={_fmt(c.dt)}: {c.status} after {c.steps} steps")
    elif isinstance(report, APLimitReport) and report.variant == "homogeneous":
        csv_file("ap_limit.csv", ("epsilon", "dt", "l1_to_maxwellian"), report.rows)
        lines.append(f"AP limit (homogeneous) for {report.scheme}")
        lines.append(f"  distance nonincreasing in eps: {_fmt(report.monotone)}")
    elif isinstance(report, APLimitReport):
        csv_file("ap_limit_1d.csv", ("x", "rho_kinetic", "rho_euler", "difference"), report.rows)
        csv_file("euler_trajectory.csv", ("t", "x", "rho", "w_x", "E"), report.euler_rows)
        csv_file("kinetic_moments.csv", ("t", "x", "rho", "w_x", "E"), report.kinetic_rows)
        lines.append(f"AP limit (1d) for {report.scheme}")
        lines.append(f"  L1(rho) kinetic vs Euler: {_fmt(report.l1_rho)}")
    elif isinstance(report, RelaxationReport):
        csv_file("diagnostics.csv", DIAGNOSTIC_COLUMNS,
                 [tuple(d[k] for k in DIAGNOSTIC_COLUMNS) for d in report.diagnostics])
        snap = out / "final_snapshot.csv"
        save_snapshot(report.final, snap)
        written.append(snap)
        last = report.diagnostics[-1]
        lines.append(f"relaxation with {report.scheme} to t={_fmt(last['t'])}")
        for k in DIAGNOSTIC_COLUMNS[2:]:
            lines.append(f"  {k}: {_fmt(last[k])}")
    elif isinstance(report, TableauReport):
        csv_file("conditions.csv", ("scheme", "condition", "satisfied", "worst_violation", "checks"),
                 [(s, r.condition, r.satisfied, r.worst_violation, len(r.details)) for s, r in report.rows])
        for s, r in report.rows:
            lines.append(f"{s}: {r.condition}: {'ok' if r.satisfied else 'VIOLATED'}")
    else:
        raise TypeError(f"unsupported report type {type(report).__name__}")

    p = out / "summary.txt"
    p.write_text("\n".join(lines) + "\n")
    written.append(p)
    return written


def run_experiment(cfg: RunConfig):
    runner = {
        "relaxation": run_relaxation_experiment,
        "convergence": run_convergence,
        "ap-limit": run_ap_limit,
        "tableau-report": run_tableau_report,
    }[cfg.experiment]
    report = runner(cfg)
    emit_outputs(report, cfg.out)
    (Path(cfg.out) / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    return report
