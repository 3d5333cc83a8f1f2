"""Collision operators for 2D Maxwell molecules and the penalized split.

The Boltzmann operator uses the truncated/periodized spectral formulation:
with f(v) = sum_k fhat_k exp(i xi k.v), xi = pi / v_max,

    Qhat_k = sum_{l+m=k} fhat_l fhat_m [B(l, m) - (B(l, l) + B(m, m)) / 2]

    B(l, m) = b0 int_0^R r J(xi r |l+m| / 2) J(xi r |l-m| / 2) dr

where J(x) = int_{S^1} exp(-i x cos theta) d theta is evaluated by the
trapezoidal rule and the radial integral by Gauss-Legendre. The mode sum is
the direct O(N^4) convolution. Nyquist modes are dropped so the retained
mode set is symmetric and Q stays real and parity-preserving.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numba
import numpy as np

from .errors import GridError
from .velocity import GridFunction, VelocityGrid2D, maxwellian, moments

#: support radius of f relative to v_max for alias-free truncation
DEALIAS_RATIO = 2.0 / (3.0 + np.sqrt(2.0))

#: kernel constant reproducing S(t) = 1 - exp(-sigma^2 t / 8) / 2; frozen output of
#: :func:`calibrate_b0` on a 64^2 grid with v_max = 3 pi (agrees with 1 / (2 pi))
DEFAULT_B0 = 0.15915494309189535

CACHE_VERSION = 1
_CACHE_MAGIC = b"APKT"


def _angular_integral(x: np.ndarray, n_angle: int) -> np.ndarray:
    """Trapezoidal rule for int_0^{2 pi} cos(x cos theta) d theta (= 2 pi J0(x))."""
    theta = 2.0 * np.pi * np.arange(n_angle) / n_angle
    return (2.0 * np.pi / n_angle) * np.cos(np.multiply.outer(x, np.cos(theta))).sum(axis=-1)


@dataclass(eq=False)
class SpectralKernelTable:
    """Mode weights beta(l, m) = B(l, m) - (B(l, l) + B(m, m)) / 2 for a fixed grid and kernel.

    ``beta`` is indexed ``beta[l1, l2, m1, m2]`` with compact mode index
    ``l + h``, h = n_v/2 - 1.
    """

    grid: VelocityGrid2D
    b0: float
    n_angle: int
    n_radial: int
    beta: np.ndarray

    @property
    def support_radius(self) -> float:
        return DEALIAS_RATIO * self.grid.v_max

    @property
    def truncation_radius(self) -> float:
        return 2.0 * self.support_radius

    @property
    def b_tot(self) -> float:
        """Angular integral of the kernel, the loss frequency per unit density."""
        return 2.0 * np.pi * self.b0

    @property
    def half(self) -> int:
        return self.grid.n_v // 2 - 1

    def mode_index(self, k) -> tuple[int, int]:
        h = self.half
        i, j = int(k[0]) + h, int(k[1]) + h
        if not (0 <= i <= 2 * h and 0 <= j <= 2 * h):
            raise IndexError(f"mode {k} outside the retained range |k_i| <= {h}")
        return i, j

    def value(self, l, m) -> float:
        return float(self.beta[(*self.mode_index(l), *self.mode_index(m))])

    def cache_key(self) -> str:
        return _cache_key(self.grid, self.b0, self.n_angle, self.n_radial)

    @cached_property
    def weights(self) -> np.ndarray:
        """beta rearranged as W[k, l] = beta(l, k - l) for the convolution loop."""
        return _conv_weights(self.beta)


def _default_orders(n_v: int) -> tuple[int, int]:
    n = max(64, 4 * n_v)
    return n, n


def _cache_key(grid, b0, n_angle, n_radial) -> str:
    raw = json.dumps([CACHE_VERSION, grid.n_v, repr(float(grid.v_max)), repr(float(b0)),
                      n_angle, n_radial])
    return hashlib.sha256(raw.encode()).hexdigest()[:20]


def compute_beta(grid: VelocityGrid2D, b0: float, n_angle: int, n_radial: int) -> np.ndarray:
    """Symmetrized mode table B(l, m) - (B(l, l) + B(m, m)) / 2.

    Symmetrizing leaves the convolution unchanged (the sum runs over both
    (l, m) and (m, l)) and makes beta(l, m) = beta(m, l) hold exactly.
    """
    n_v = grid.n_v
    if n_v % 2:
        raise GridError(f"spectral kernel needs even n_v, got {n_v}")
    h = n_v // 2 - 1
    n = 2 * h + 1
    xi = np.pi / grid.v_max
    R = 2.0 * DEALIAS_RATIO * grid.v_max

    x, wq = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * R * (x + 1.0)
    wr = 0.5 * R * wq * r

    modes = np.arange(-h, h + 1)
    sq = modes**2
    # squared norms |l+m|^2, |l-m|^2 have components in [-2h, 2h]; |2m|^2 is among them
    comp = np.arange(0, 2 * h + 1) ** 2
    norms2 = np.unique(comp[:, None] + comp[None, :])
    lookup = np.full(norms2[-1] + 1, -1, dtype=np.int64)
    lookup[norms2] = np.arange(norms2.size)

    J = _angular_integral(0.5 * xi * np.multiply.outer(np.sqrt(norms2.astype(float)), r), n_angle)
    G = (J * wr) @ J.T
    G = b0 * 0.5 * (G + G.T)  # exact symmetry: IEEE addition commutes

    diag = G[lookup[4 * (sq[:, None] + sq[None, :])], lookup[0]]  # B(m, m), shape (n, n)
    d_idx = modes[:, None] - modes[None, :]  # l - m per component
    s_idx = modes[:, None] + modes[None, :]
    beta = np.empty((n, n, n, n))
    for i1 in range(n):
        a1, b1 = s_idx[i1] ** 2, d_idx[i1] ** 2  # over m1
        a2 = a1[None, :, None] + (s_idx**2)[:, None, :]  # [l2, m1, m2]
        b2 = b1[None, :, None] + (d_idx**2)[:, None, :]
        gain = G[lookup[a2], lookup[b2]]
        beta[i1] = gain - 0.5 * (diag[i1][:, None, None] + diag[None, :, :])
    return beta


def precompute_kernel(grid: VelocityGrid2D, b0: float = DEFAULT_B0, n_angle: int | None = None,
                      n_radial: int | None = None, cache_dir=None) -> SpectralKernelTable:
    """Build (or load from cache) the spectral mode table for ``grid``.

    ``cache_dir`` defaults to ``$APKINETIC_CACHE_DIR``; no caching when neither is set.
    """
    if grid.n_v & (grid.n_v - 1):
        raise GridError(f"spectral kernel needs a power-of-two n_v, got {grid.n_v}")
    da, dr = _default_orders(grid.n_v)
    n_angle = n_angle or da
    n_radial = n_radial or dr
    if cache_dir is None:
        cache_dir = os.environ.get("APKINETIC_CACHE_DIR")
    path = None
    if cache_dir:
        path = Path(cache_dir) / f"kernel_{_cache_key(grid, b0, n_angle, n_radial)}.bin"
        if path.exists():
            beta = _read_cache(path, grid, b0, n_angle, n_radial)
            if beta is not None:
                return SpectralKernelTable(grid, b0, n_angle, n_radial, beta)
    beta = compute_beta(grid, b0, n_angle, n_radial)
    if path is not None:
        _write_cache(path, grid, b0, n_angle, n_radial, beta)
    return SpectralKernelTable(grid, b0, n_angle, n_radial, beta)


def _header(grid, b0, n_angle, n_radial, shape) -> bytes:
    meta = {"version": CACHE_VERSION, "n_v": grid.n_v, "v_max": repr(float(grid.v_max)),
            "b0": repr(float(b0)), "n_angle": n_angle, "n_radial": n_radial,
            "shape": list(shape), "dtype": "<f8"}
    return json.dumps(meta, sort_keys=True).encode() + b"\n"


def _write_cache(path: Path, grid, b0, n_angle, n_radial, beta: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(_header(grid, b0, n_angle, n_radial, beta.shape))
        fh.write(np.ascontiguousarray(beta, dtype="<f8").tobytes())
    tmp.replace(path)


def _read_cache(path: Path, grid, b0, n_angle, n_radial):
    with path.open("rb") as fh:
        if fh.read(len(_CACHE_MAGIC)) != _CACHE_MAGIC:
            return None
        line = fh.readline()
        expected = _header(grid, b0, n_angle, n_radial, ())
        meta = json.loads(line)
        want = json.loads(expected)
        shape = tuple(meta.pop("shape"))
        want.pop("shape")
        if meta != want:
            return None
        data = fh.read()
    beta = np.frombuffer(data, dtype="<f8")
    if beta.size != int(np.prod(shape)):
        return None
    return beta.reshape(shape).copy()


# -- the mode convolution ----------------------------------------------------

@numba.njit(cache=True)
def _conv_weights(beta):
    # W[k1, k2, l1, l2] = beta(l, k - l), zero where k - l leaves the mode range
    n = beta.shape[0]
    h = (n - 1) // 2
    W = np.zeros_like(beta)
    for k1 in range(n):
        for k2 in range(n):
            for l1 in range(max(0, k1 - h), min(n - 1, k1 + h) + 1):
                for l2 in range(max(0, k2 - h), min(n - 1, k2 + h) + 1):
                    W[k1, k2, l1, l2] = beta[l1, l2, k1 - l1 + h, k2 - l2 + h]
    return W


@numba.njit(cache=True, fastmath=True)
def _convolve(fh, W, out):
    # fh: (batch, n, n) compact centred spectra of real functions; only half
    # the output modes are summed, the rest follow from Hermitian symmetry
    nb, n, _ = fh.shape
    h = (n - 1) // 2
    for b in range(nb):
        f = fh[b]
        for k1 in range(h, n):
            l1lo = k1 - h
            for k2 in range(n):
                if k1 == h and k2 < h:
                    continue
                l2lo = max(0, k2 - h)
                l2hi = min(n - 1, k2 + h)
                acc = 0j
                for l1 in range(l1lo, n):
                    m1 = k1 - l1 + h
                    for l2 in range(l2lo, l2hi + 1):
                        acc += W[k1, k2, l1, l2] * f[l1, l2] * f[m1, k2 - l2 + h]
                out[b, k1, k2] = acc
                out[b, 2 * h - k1, 2 * h - k2] = acc.conjugate()
        out[b, h, h] = out[b, h, h].real


def _to_compact(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    F = np.fft.fft2(values, axes=(-2, -1)) / (n * n)
    return np.ascontiguousarray(np.fft.fftshift(F, axes=(-2, -1))[..., 1:, 1:])


def _from_compact(C: np.ndarray) -> np.ndarray:
    n = C.shape[-1] + 1
    F = np.zeros(C.shape[:-2] + (n, n), dtype=complex)
    F[..., 1:, 1:] = C
    return np.fft.ifft2(np.fft.ifftshift(F, axes=(-2, -1)), axes=(-2, -1)).real * (n * n)


def q_boltzmann_values(values: np.ndarray, table: SpectralKernelTable) -> np.ndarray:
    """Q(f, f) for an array of shape (..., n_v, n_v)."""
    n = table.grid.n_v
    if values.shape[-2:] != (n, n):
        raise GridError(f"values of shape {values.shape} do not match n_v={n}")
    lead = values.shape[:-2]
    C = _to_compact(values.reshape((-1, n, n)))
    out = np.empty_like(C)
    _convolve(C, table.weights, out)
    return _from_compact(out).reshape(lead + (n, n))


def q_boltzmann(f: GridFunction, table: SpectralKernelTable) -> GridFunction:
    if f.grid != table.grid:
        raise GridError("distribution and kernel table use different grids")
    return GridFunction(f.grid, q_boltzmann_values(f.values, table))


def q_bgk(f: GridFunction, mu: float) -> GridFunction:
    """BGK surrogate mu (M[f] - f)."""
    M = maxwellian(moments(f), f.grid)
    return GridFunction(f.grid, mu * (M.values - f.values))


# -- backends and the penalized split -----------------------------------------

@dataclass(frozen=True)
class PenalizedSplit:
    """P = Q + mu f, the local Maxwellian M and the deviation g = P/mu - M."""

    P: GridFunction
    mu: float
    g: GridFunction
    M: GridFunction
    Q: GridFunction


@dataclass(frozen=True, eq=False)
class CollisionBackend:
    """Either the spectral Boltzmann operator (``table`` given) or BGK.

    The penalization constant is mu = kappa * b_tot * rho. For BGK the
    relaxation frequency is b_tot * rho, so kappa = 1 makes P/mu = M exactly.
    """

    kind: str = "boltzmann"
    table: SpectralKernelTable | None = None
    kappa: float = 1.0
    bgk_b_tot: float = 1.0

    def __post_init__(self):
        if self.kind not in ("boltzmann", "bgk", "none"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "boltzmann" and self.table is None:
            raise ValueError("boltzmann backend needs a kernel table")
        if not self.kappa >= 1.0:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")

    @classmethod
    def boltzmann(cls, grid: VelocityGrid2D, b0: float = DEFAULT_B0, kappa: float = 1.0, **kw):
        return cls("boltzmann", precompute_kernel(grid, b0, **kw), kappa)

    @classmethod
    def bgk(cls, kappa: float = 1.0, b_tot: float = 1.0):
        return cls("bgk", None, kappa, b_tot)

    @property
    def b_tot(self) -> float:
        return self.table.b_tot if self.kind == "boltzmann" else self.bgk_b_tot

    def mu_for_density(self, rho):
        return self.kappa * self.b_tot * rho

    def q_values(self, values: np.ndarray, maxwellians: np.ndarray | None = None,
                 rho=None) -> np.ndarray:
        """Collision operator on raw arrays (..., n_v, n_v).

        The BGK variant needs the matching Maxwellians and densities.
        """
        if self.kind == "boltzmann":
            return q_boltzmann_values(values, self.table)
        if self.kind == "none":
            return np.zeros_like(values)
        nu = self.b_tot * np.asarray(rho, dtype=float)[..., None, None]
        return nu * (maxwellians - values)

    def deviation_values(self, values, maxwellians, rho, mu) -> np.ndarray:
        """g = (Q + mu f)/mu - M on raw arrays, mu broadcast per leading index."""
        mu = np.asarray(mu, dtype=float)[..., None, None]
        if self.kind == "bgk":
            nu = self.b_tot * np.asarray(rho, dtype=float)[..., None, None]
            # P = nu M + (mu - nu) f, exact zero deviation when mu == nu
            return (1.0 - nu / mu) * (values - maxwellians)
        if self.kind == "none":
            return values - maxwellians
        Q = self.q_values(values)
        return (Q + mu * values) / mu - maxwellians

    def q(self, f: GridFunction) -> GridFunction:
        if self.kind == "bgk":
            m = moments(f)
            return q_bgk(f, self.b_tot * m.rho)
        if self.kind == "none":
            return f.grid.zeros()
        return q_boltzmann(f, self.table)


def choose_mu(f: GridFunction, backend: CollisionBackend) -> float:
    return float(backend.mu_for_density(moments(f).rho))


def penalized_split(f: GridFunction, backend: CollisionBackend, mu: float | None = None) -> PenalizedSplit:
    m = moments(f)
    if mu is None:
        mu = float(backend.mu_for_density(m.rho))
    M = maxwellian(m, f.grid)
    if backend.kind == "bgk":
        nu = backend.b_tot * m.rho
        Q = GridFunction(f.grid, nu * (M.values - f.values))
        P = GridFunction(f.grid, nu * M.values + (mu - nu) * f.values)
    else:
        Q = backend.q(f)
        P = GridFunction(f.grid, Q.values + mu * f.values)
    g = GridFunction(f.grid, P.values / mu - M.values)
    return PenalizedSplit(P, mu, g, M, Q)


# -- reference integration and kernel calibration ------------------------------

def rk4_collision(f: GridFunction, table: SpectralKernelTable, dt: float, n_steps: int, on_step=None) -> GridFunction:
    """Classical RK4 for d_t f = Q(f, f); ``on_step(n, values)`` after every step."""
    y = f.values.copy()
    for n in range(1, n_steps + 1):
        k1 = q_boltzmann_values(y, table)
        k2 = q_boltzmann_values(y + 0.5 * dt * k1, table)
        k3 = q_boltzmann_values(y + 0.5 * dt * k2, table)
        k4 = q_boltzmann_values(y + dt * k3, table)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if on_step is not None:
            on_step(n, y)
    return GridFunction(f.grid, y)


def fourth_moment(values: np.ndarray, grid: VelocityGrid2D) -> float:
    return float(grid.weight * np.sum(values * grid.speed2**2))


def calibrate_b0(grid: VelocityGrid2D, sigma: float = 1.0, b0_trial: float = 0.1, t_fit: float = 2.0,
                 dt: float = 0.01, **kernel_kw) -> float:
    """Rescale ``b0_trial`` so the fourth moment relaxes at the BKW rate.

    For the BKW profile 8 sigma^4 - m4(t) = 8 sigma^4 (1 - S)^2, so its log
    decays at rate sigma^2 / 4 (twice the sigma^2 / 8 rate of 1 - S). Q is
    linear in b0, hence the measured rate is too, and one rescaling is exact
    up to the time-integration error of the reference run.
    """
    from .limits import BKWParams, bkw  # local: limits imports this module's siblings

    table = precompute_kernel(grid, b0_trial, **kernel_kw)
    f0 = bkw(grid, 0.0, BKWParams(sigma))
    n_steps = int(round(t_fit / dt))
    ts, deficit = [0.0], [8.0 * sigma**4 - fourth_moment(f0.values, grid)]

    def record(n, y):
        ts.append(n * dt)
        deficit.append(8.0 * sigma**4 - fourth_moment(y, grid))

    rk4_collision(f0, table, dt, n_steps, record)
    d = np.asarray(deficit)
    if np.any(d <= 0):
        raise ValueError("fourth-moment deficit is not positive; grid too coarse to calibrate")
    rate = -np.polyfit(np.asarray(ts), np.log(d), 1)[0]
    return float(b0_trial * (sigma**2 / 4.0) / rate)
