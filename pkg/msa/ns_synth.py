"""
Synthetic Navier-Stokes data on the periodic square [0, 2pi)^2, embedded in T^3 as
fields that are constant along z (nz cells over a z-period of 2pi). Two sources: the
analytic Taylor-Green vortex and a pseudo-spectral vorticity solver with RK4 time
stepping and 2/3 dealiasing.

On top of a snapshot series this module builds the pivot quantities, their capped
scale fields, and the trace, level-set and blow-up norm comparisons as report rows.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas
import scipy.fft
from scipy.integrate import cumulative_trapezoid
from scipy.special import comb
from tqdm import tqdm

from msa.field_core import (
    GraphFamily,
    GridSpec,
    ScalarField,
    TimeSpec,
    VectorField,
    load_field,
    r_star_field,
    save_field,
)
from msa.lagrangian import AdmissibilityParams, CappedScaleField, capped_scale_op
from msa.multiscale import ScaleLadder, maximal_function
from msa.norms import (
    SUP,
    LorentzParams,
    MeasuredSample,
    graph_measure,
    graph_values,
    joint_norm,
    mixed_norm,
    strong_norm,
    weak_norm,
)
from msa.report import CHECK, INFO, RATIO, ReportRow
from msa.utils import ConfigurationError, DomainError, ParameterError, thread_limit

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_NZ = 4
CFL_LIMIT = 0.5
DIVERGENCE_TOL = 1e-8
ENERGY_TOL = 1e-6
RESIDUAL_TOL = 1e-6
PIVOTS = ("f1", "f2", "f3")


class SpectralOps:
    """Fourier differentiation on [0, 2pi)^2 over the last two array axes."""

    def __init__(self, n: int):
        if n < 4 or n % 2:
            raise ParameterError(f"Spectral grids need an even n >= 4, got {n}")
        self.n = n
        self.h = TWO_PI / n
        k = scipy.fft.fftfreq(n, d=1.0 / n)
        self.kx, self.ky = np.meshgrid(k, k, indexing="ij")
        self.k2 = self.kx ** 2 + self.ky ** 2
        self.k2_inv = np.zeros_like(self.k2)
        self.k2_inv[self.k2 > 0] = 1.0 / self.k2[self.k2 > 0]
        # 2/3 of the Nyquist wavenumber n/2
        self.cutoff = 2.0 / 3.0 * (n // 2)
        self.dealias = (np.abs(self.kx) < self.cutoff) & (np.abs(self.ky) < self.cutoff)
        self.workers = thread_limit()

    def forward(self, f: np.ndarray) -> np.ndarray:
        return scipy.fft.fft2(f, axes=(-2, -1), workers=self.workers)

    def inverse(self, f_hat: np.ndarray) -> np.ndarray:
        return np.real(scipy.fft.ifft2(f_hat, axes=(-2, -1), workers=self.workers))

    def derivative(self, f_hat: np.ndarray, ax: int = 0, ay: int = 0) -> np.ndarray:
        return (1j * self.kx) ** ax * (1j * self.ky) ** ay * f_hat

    def diff(self, f: np.ndarray, ax: int = 0, ay: int = 0) -> np.ndarray:
        return self.inverse(self.derivative(self.forward(f), ax, ay))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.inverse(-self.k2 * self.forward(f))

    def velocity_from_vorticity(self, omega_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """u = (psi_y, -psi_x) with -Delta psi = omega."""
        psi_hat = omega_hat * self.k2_inv
        return (
            self.inverse(1j * self.ky * psi_hat),
            self.inverse(-1j * self.kx * psi_hat),
        )

    def vorticity(self, ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
        return self.diff(uy, 1, 0) - self.diff(ux, 0, 1)

    def divergence(self, ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
        return self.diff(ux, 1, 0) + self.diff(uy, 0, 1)

    def pressure(self, ux: np.ndarray, uy: np.ndarray) -> np.ndarray:
        """-Delta P = d_i d_j (u_i u_j), zero spatial mean."""
        u = (ux, uy)
        k = (self.kx, self.ky)
        total = 0.0
        for i in range(2):
            for j in range(2):
                total = total + k[i] * k[j] * self.forward(u[i] * u[j])
        return self.inverse(-total * self.k2_inv)


def derivative_norm(ops: SpectralOps, f: np.ndarray, order: int) -> np.ndarray:
    """|grad^order f| as the Frobenius norm of the symmetric derivative tensor."""
    if order == 0:
        return np.abs(f)
    f_hat = ops.forward(f)
    total = np.zeros(f.shape)
    for a in range(order + 1):
        total += comb(order, a) * ops.inverse(ops.derivative(f_hat, a, order - a)) ** 2
    return np.sqrt(total)


def energy_ledger(
    ux: np.ndarray,
    uy: np.ndarray,
    grad_u: np.ndarray,
    time: TimeSpec,
    nu: float,
    dissipation: Optional[np.ndarray] = None,
) -> pandas.DataFrame:
    """
    ||u(t)||^2 and int_t0^t ||grad u||^2 per unit z. Without an exact dissipation
    integral the snapshots are integrated with the trapezoidal rule.
    """
    cell = (TWO_PI / ux.shape[-1]) ** 2
    energy = (ux ** 2 + uy ** 2).sum(axis=(-2, -1)) * cell
    enstrophy = (grad_u ** 2).sum(axis=(1, 2, 3, 4)) * cell
    if dissipation is None:
        dissipation = cumulative_trapezoid(enstrophy, time.times, initial=0.0)
    ledger = pandas.DataFrame(
        {
            "time": time.times,
            "energy": energy,
            "enstrophy": enstrophy,
            "dissipation": np.asarray(dissipation, dtype=float),
        }
    )
    ledger["balance"] = 0.5 * ledger["energy"] + nu * ledger["dissipation"]
    return ledger


@dataclass(frozen=True, eq=False)
class FlowSnapshotSeries:
    """
    Velocity, vorticity, pressure and their derivatives at every snapshot, all with
    shape (nt, n, n) on the planar grid; ``grad_u[:, i, j]`` is d_j u_i.
    """

    time: TimeSpec
    nu: float
    ux: np.ndarray
    uy: np.ndarray
    omega: np.ndarray
    pressure: np.ndarray
    grad_u: np.ndarray
    hess_p: np.ndarray
    energy: pandas.DataFrame
    nz: int = DEFAULT_NZ
    dudt: Optional[np.ndarray] = None

    @classmethod
    def from_velocity(
        cls,
        ux: np.ndarray,
        uy: np.ndarray,
        time: TimeSpec,
        nu: float,
        nz: int = DEFAULT_NZ,
        dissipation: Optional[np.ndarray] = None,
    ) -> "FlowSnapshotSeries":
        """Derives vorticity, pressure, grad u and grad^2 P spectrally."""
        ux = np.asarray(ux, dtype=float).reshape(time.nt, *np.shape(ux)[-2:])
        uy = np.asarray(uy, dtype=float).reshape(ux.shape)
        ops = SpectralOps(ux.shape[-1])
        hats = (ops.forward(ux), ops.forward(uy))
        grad_u = np.empty((time.nt, 2, 2) + ux.shape[1:])
        for i, u_hat in enumerate(hats):
            for j, order in enumerate(((1, 0), (0, 1))):
                grad_u[:, i, j] = ops.inverse(ops.derivative(u_hat, *order))
        omega = grad_u[:, 1, 0] - grad_u[:, 0, 1]
        pressure = ops.pressure(ux, uy)
        p_hat = ops.forward(pressure)
        k = (ops.kx, ops.ky)
        hess_p = np.empty_like(grad_u)
        for i in range(2):
            for j in range(2):
                hess_p[:, i, j] = ops.inverse(-k[i] * k[j] * p_hat)
        energy = energy_ledger(ux, uy, grad_u, time, nu, dissipation)
        return cls(time, nu, ux, uy, omega, pressure, grad_u, hess_p, energy, nz)

    @property
    def n(self) -> int:
        return self.ux.shape[-1]

    @property
    def nt(self) -> int:
        return self.time.nt

    @property
    def grid2(self) -> GridSpec:
        return GridSpec.torus(self.n, TWO_PI, rank=2)

    @property
    def grid(self) -> GridSpec:
        """The T^3 grid the series is embedded in."""
        h = TWO_PI / self.n
        return GridSpec((self.n, self.n, self.nz), (h, h, TWO_PI / self.nz), True, 0.0)

    def ops(self) -> SpectralOps:
        return SpectralOps(self.n)

    def embed(self, values: np.ndarray) -> ScalarField:
        """Repeat a (nt, n, n) array along z."""
        values = np.asarray(values, dtype=float)
        data = np.repeat(values[..., None], self.nz, axis=-1)
        return ScalarField(self.grid, data, self.time)

    def velocity(self) -> VectorField:
        zero = np.zeros(self.ux.shape)
        return VectorField(tuple(self.embed(c) for c in (self.ux, self.uy, zero)))

    def planar_velocity(self, k: int = 0) -> VectorField:
        grid = self.grid2
        return VectorField((ScalarField(grid, self.ux[k]), ScalarField(grid, self.uy[k])))

    def speed(self) -> np.ndarray:
        return np.sqrt(self.ux ** 2 + self.uy ** 2)

    def grad_u_norm(self) -> np.ndarray:
        return np.sqrt((self.grad_u ** 2).sum(axis=(1, 2)))

    def hess_p_norm(self) -> np.ndarray:
        return np.sqrt((self.hess_p ** 2).sum(axis=(1, 2)))

    def divergence(self) -> np.ndarray:
        return self.grad_u[:, 0, 0] + self.grad_u[:, 1, 1]

    def momentum_residual(self) -> float:
        """sup |d_t u + u . grad u + grad P - nu Delta u| with spectral space derivatives."""
        if self.dudt is None:
            raise ParameterError("The series carries no time derivative of u")
        ops = self.ops()
        residual = 0.0
        for i, u in enumerate((self.ux, self.uy)):
            advection = self.ux * self.grad_u[:, i, 0] + self.uy * self.grad_u[:, i, 1]
            grad_p = ops.diff(self.pressure, *((1, 0) if i == 0 else (0, 1)))
            value = self.dudt[:, i] + advection + grad_p - self.nu * ops.laplacian(u)
            residual = max(residual, float(np.max(np.abs(value))))
        return residual

    def energy_excess(self) -> float:
        """Largest growth of 1/2 ||u||^2 + nu int ||grad u||^2 over its initial value."""
        balance = self.energy["balance"].to_numpy()
        return float(np.max(balance - balance[0]))

    def energy_holds(self, tol: float = ENERGY_TOL) -> bool:
        balance0 = float(self.energy["balance"].iloc[0])
        return self.energy_excess() <= tol * max(balance0, 0.0)


def _check_nu(nu: float):
    if not nu >= 0:
        raise ParameterError(f"Viscosity must be non-negative, got {nu}")


def taylor_green_point(nu: float, t: float, x: Sequence[float]) -> Dict[str, np.ndarray]:
    """Closed-form velocity, vorticity and pressure at one point (x, y[, z])."""
    _check_nu(nu)
    x0, y0 = float(x[0]), float(x[1])
    decay = math.exp(-2.0 * nu * t)
    return {
        "u": np.array(
            [-math.cos(x0) * math.sin(y0) * decay, math.sin(x0) * math.cos(y0) * decay, 0.0]
        ),
        "omega": np.array([0.0, 0.0, 2.0 * math.cos(x0) * math.cos(y0) * decay]),
        "pressure": -0.25 * (math.cos(2 * x0) + math.cos(2 * y0)) * decay ** 2,
    }


def taylor_green(
    nu: float, time: TimeSpec, n: int, nz: int = DEFAULT_NZ
) -> FlowSnapshotSeries:
    """Analytic Taylor-Green vortex with every derivative and the energy ledger exact."""
    _check_nu(nu)
    grid = GridSpec.torus(n, TWO_PI, rank=2)
    x, y = np.meshgrid(*grid.axes(), indexing="ij")
    decay = np.exp(-2.0 * nu * time.times)[:, None, None]
    cx, sx, cy, sy = np.cos(x), np.sin(x), np.cos(y), np.sin(y)
    ux = -cx * sy * decay
    uy = sx * cy * decay
    omega = 2.0 * cx * cy * decay
    pressure = -0.25 * (np.cos(2 * x) + np.cos(2 * y)) * decay ** 2
    grad_u = np.empty((time.nt, 2, 2, n, n))
    grad_u[:, 0, 0] = sx * sy * decay
    grad_u[:, 0, 1] = -cx * cy * decay
    grad_u[:, 1, 0] = cx * cy * decay
    grad_u[:, 1, 1] = -sx * sy * decay
    hess_p = np.zeros((time.nt, 2, 2, n, n))
    hess_p[:, 0, 0] = np.cos(2 * x) * decay ** 2
    hess_p[:, 1, 1] = np.cos(2 * y) * decay ** 2
    if nu > 0:
        dissipation = math.pi ** 2 * (
            math.exp(-4.0 * nu * time.t0) - np.exp(-4.0 * nu * time.times)
        ) / nu
    else:
        dissipation = 4.0 * math.pi ** 2 * (time.times - time.t0)
    energy = energy_ledger(ux, uy, grad_u, time, nu, dissipation)
    dudt = -2.0 * nu * np.stack([ux, uy], axis=1)
    return FlowSnapshotSeries(
        time, nu, ux, uy, omega, pressure, grad_u, hess_p, energy, nz, dudt
    )


def random_solenoidal(
    n: int, seed: int = 0, modes: int = 4, amplitude: float = 1.0
) -> VectorField:
    """
    Divergence-free, mean-free velocity from a random stream function on the
    wavenumber shell 0 < |k| <= modes, scaled to max |u| = amplitude.
    """
    ops = SpectralOps(n)
    if modes < 1 or modes >= ops.cutoff:
        raise ParameterError(
            f"modes must lie in [1, {ops.cutoff:.2f}) to survive dealiasing, got {modes}"
        )
    rng = np.random.default_rng(seed)
    radius = np.sqrt(ops.k2)
    shell = (radius > 0) & (radius <= modes)
    count = int(shell.sum())
    psi_hat = np.zeros((n, n), dtype=complex)
    psi_hat[shell] = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / radius[
        shell
    ] ** 2
    psi_hat = ops.forward(ops.inverse(psi_hat))
    ux = ops.inverse(1j * ops.ky * psi_hat)
    uy = ops.inverse(-1j * ops.kx * psi_hat)
    peak = float(np.max(np.sqrt(ux ** 2 + uy ** 2)))
    if peak > 0:
        ux, uy = ux * amplitude / peak, uy * amplitude / peak
    grid = GridSpec.torus(n, TWO_PI, rank=2)
    return VectorField((ScalarField(grid, ux), ScalarField(grid, uy)))


def _check_planar(u0: VectorField) -> int:
    grid = u0.grid
    if u0.dim != 2 or grid.rank != 2 or u0.time is not None:
        raise ParameterError("Initial data must be a static planar vector field")
    if not grid.all_periodic or grid.n[0] != grid.n[1]:
        raise ParameterError("Initial data must live on a square periodic grid")
    if any(abs(e - TWO_PI) > 1e-9 for e in grid.extent):
        raise ParameterError(f"The periodic square must have side 2pi, got {grid.extent}")
    return grid.n[0]


def _check_cfl(ux: np.ndarray, uy: np.ndarray, dt: float, h: float, t: float):
    courant = float(np.max(np.sqrt(ux ** 2 + uy ** 2))) * dt / h
    if courant > CFL_LIMIT:
        raise ConfigurationError(
            f"CFL number {courant:.3f} exceeds {CFL_LIMIT} at t={t:g}, reduce dt"
        )


def spectral_solve(
    u0: VectorField,
    nu: float,
    t_max: float,
    dt: float,
    n_snapshots: int = 5,
    nz: int = DEFAULT_NZ,
) -> FlowSnapshotSeries:
    """
    Vorticity form d_t omega + u . grad omega = nu Delta omega, RK4 in time. The
    dissipation integral is carried in the RK4 state so the energy ledger is exact up
    to the time stepping error.
    """
    _check_nu(nu)
    n = _check_planar(u0)
    if n_snapshots < 2:
        raise ParameterError(f"Need at least two snapshots, got {n_snapshots}")
    if not (t_max > 0 and dt > 0):
        raise ParameterError(f"Need t_max > 0 and dt > 0, got {t_max}, {dt}")
    interval = t_max / (n_snapshots - 1)
    steps = interval / dt
    if abs(steps - round(steps)) > 1e-6 or round(steps) < 1:
        raise ConfigurationError(
            f"The snapshot interval {interval:g} is not a multiple of dt={dt:g}"
        )
    steps = int(round(steps))
    ops = SpectralOps(n)
    ux0, uy0 = (c.data for c in u0.components)
    scale = max(1.0, float(np.max(np.abs(u0.stack()))))
    if np.max(np.abs(ops.divergence(ux0, uy0))) > DIVERGENCE_TOL * scale:
        raise ParameterError("Initial velocity is not divergence-free")
    if abs(ux0.mean()) + abs(uy0.mean()) > 1e-12 * scale:
        raise ParameterError("Initial velocity must have zero mean")
    _check_cfl(ux0, uy0, dt, ops.h, 0.0)

    cell = ops.h ** 2

    def rhs(omega_hat):
        ux, uy = ops.velocity_from_vorticity(omega_hat)
        wx = ops.inverse(ops.derivative(omega_hat, 1, 0))
        wy = ops.inverse(ops.derivative(omega_hat, 0, 1))
        advection = ops.forward(ux * wx + uy * wy) * ops.dealias
        enstrophy = float(np.sum(ops.inverse(omega_hat) ** 2)) * cell
        return -advection - nu * ops.k2 * omega_hat, enstrophy

    omega_hat = ops.forward(ops.vorticity(ux0, uy0)) * ops.dealias
    dissipated = 0.0
    snapshots = [ops.velocity_from_vorticity(omega_hat)]
    dissipation = [0.0]
    logger.info(f"Spectral solve on {n}x{n}, nu={nu:g}, T={t_max:g}, dt={dt:g}")
    for snapshot in tqdm(range(1, n_snapshots), desc="spectral solve", disable=None):
        for _ in range(steps):
            k1, e1 = rhs(omega_hat)
            k2, e2 = rhs(omega_hat + 0.5 * dt * k1)
            k3, e3 = rhs(omega_hat + 0.5 * dt * k2)
            k4, e4 = rhs(omega_hat + dt * k3)
            omega_hat = omega_hat + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            dissipated += dt / 6.0 * (e1 + 2 * e2 + 2 * e3 + e4)
        ux, uy = ops.velocity_from_vorticity(omega_hat)
        _check_cfl(ux, uy, dt, ops.h, snapshot * interval)
        snapshots.append((ux, uy))
        dissipation.append(dissipated)
    time = TimeSpec(n_snapshots, interval, 0.0)
    series = FlowSnapshotSeries.from_velocity(
        np.stack([s[0] for s in snapshots]),
        np.stack([s[1] for s in snapshots]),
        time,
        nu,
        nz,
        np.array(dissipation),
    )
    if not series.energy_holds():
        logger.warning(f"Energy balance grows by {series.energy_excess():.3g}")
    return series


@dataclass(frozen=True)
class PivotConfig:
    """Regularity thresholds of the pivots and the admissibility constant for u."""

    eta: float = 1.0
    eta_bar: float = 1.0
    eps0: float = 1.0
    eta0: float = 1.0
    floor: bool = False
    roles: Tuple[str, ...] = PIVOTS

    def __post_init__(self):
        for name in ("eta", "eta_bar", "eps0", "eta0"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        unknown = set(self.roles) - set(PIVOTS)
        if unknown:
            raise ParameterError(f"Unknown pivot roles {sorted(unknown)}")

    def admissibility(self) -> AdmissibilityParams:
        return AdmissibilityParams(self.eta0)


@dataclass(frozen=True, eq=False)
class PivotFields:
    maximal: ScalarField
    fields: Dict[str, ScalarField]
    floored: Dict[str, float] = field(default_factory=dict)

    def __getitem__(self, role: str) -> ScalarField:
        return self.fields[role]


def pivot_fields(
    series: FlowSnapshotSeries,
    config: Optional[PivotConfig] = None,
    ladder: Optional[ScaleLadder] = None,
) -> PivotFields:
    """
    f1 = M(grad u)^2 / eta, f2 = (M(grad u)^2 + |grad^2 P|) / eta_bar and
    f3 = (|u|^3 + |P|^3/2) / eps0 on the T^3 grid, with M taken slice by slice.
    With ``config.floor`` the drifted pivots f1, f2 are lifted to (M(grad u) / eta0)^2
    where they fall below it; the lifted fraction per role lands in ``floored``.
    """
    config = config or PivotConfig()
    maximal = maximal_function(series.embed(series.grad_u_norm()), ladder)
    m2 = maximal.data ** 2
    floor = (maximal.data / config.eta0) ** 2
    fields, floored = {}, {}
    for role in config.roles:
        if role == "f1":
            data = m2 / config.eta
        elif role == "f2":
            data = (m2 + series.embed(series.hess_p_norm()).data) / config.eta_bar
        else:
            cubed = series.speed() ** 3 + np.abs(series.pressure) ** 1.5
            fields[role] = series.embed(cubed / config.eps0)
            continue
        if config.floor:
            lifted = floor > data
            floored[role] = float(lifted.mean())
            if floored[role] > 0:
                logger.info(f"{role} lifted to (M(grad u)/eta0)^2 on {floored[role]:.1%} of cells")
            data = np.maximum(data, floor)
        fields[role] = maximal.with_data(data)
    return PivotFields(maximal, fields, floored)


@dataclass(frozen=True, eq=False)
class PivotScales:
    """Capped scale fields s1, s2 (drift u, alpha 4) and s3 (no drift, alpha 3)."""

    scales: Dict[str, CappedScaleField]
    rstar: np.ndarray
    violations: Dict[str, int]
    checked: int
    ladder: ScaleLadder

    def __getitem__(self, name: str) -> CappedScaleField:
        return self.scales[name]

    def __contains__(self, name: str) -> bool:
        return name in self.scales


SCALE_OF_PIVOT = {"f1": ("s1", 4.0, True), "f2": ("s2", 4.0, True), "f3": ("s3", 3.0, False)}


def pointwise_bound(
    sf: CappedScaleField, rstar: np.ndarray, per_octave: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    s^-1 against A^<(f)^(1/alpha) v r_*^-1, the latter widened by two ladder steps.
    Returns both sides on the points with t > 0.
    """
    positive = rstar > 0
    with np.errstate(divide="ignore"):
        inverse = 1.0 / sf.s
        bound = np.maximum(sf.a_lt ** (1.0 / sf.alpha), 1.0 / rstar)
    bound = bound * 2.0 ** (2.0 / per_octave)
    return inverse[positive], bound[positive]


def scale_fields(
    series: FlowSnapshotSeries,
    pivots: PivotFields,
    ladder: Optional[ScaleLadder] = None,
    config: Optional[PivotConfig] = None,
    r0: float = 1.0,
) -> PivotScales:
    config = config or PivotConfig()
    ladder = ladder or ScaleLadder.for_grid(series.grid)
    params = config.admissibility()
    velocity = series.velocity()
    rstar = r_star_field(series.grid, series.time, 0.0, r0)
    scales, violations = {}, {}
    checked = 0
    for role, pivot in pivots.fields.items():
        name, alpha, drifted = SCALE_OF_PIVOT[role]
        logger.info(f"Computing {name} = S^_{alpha:g}({role})")
        sf = capped_scale_op(
            pivot,
            velocity if drifted else None,
            alpha,
            ladder,
            params,
            r0=r0,
            drift_max=pivots.maximal if drifted else None,
        )
        inverse, bound = pointwise_bound(sf, rstar, ladder.per_octave)
        violations[name] = int(np.sum(inverse > bound * (1 + 1e-12)))
        checked += inverse.size
        if violations[name]:
            logger.warning(f"{name}: pointwise bound fails at {violations[name]} points")
        scales[name] = sf
    return PivotScales(scales, rstar, violations, checked, ladder)


REGULARITY_TERMS = (
    ("omega", "s1", 2, 0),
    ("u", "s2", 1, 1),
    ("u", "s3", 1, 0),
)


def velocity_derivative(ops: SpectralOps, series: FlowSnapshotSeries, order: int):
    return np.sqrt(
        derivative_norm(ops, series.ux, order) ** 2 + derivative_norm(ops, series.uy, order) ** 2
    )


def fitted_regularity_constants(
    series: FlowSnapshotSeries, scales: PivotScales, n_max: int = 3
) -> pandas.DataFrame:
    """
    C_n = max |grad^n omega| s1^(n+2), |grad^n u| s2^(n+1) (n >= 1) and
    |grad^n u| s3^(n+1), over the points with t > 0 and a finite scale.
    """
    if not 0 <= n_max <= 3:
        raise ParameterError(f"n_max must lie in 0..3, got {n_max}")
    ops = series.ops()
    positive = (series.time.times > 0)[:, None, None]
    rows = []
    for quantity, name, shift, first in REGULARITY_TERMS:
        if name not in scales:
            continue
        s = scales[name].s[..., 0]
        use = positive & np.isfinite(s)
        for order in range(first, n_max + 1):
            if quantity == "omega":
                magnitude = derivative_norm(ops, series.omega, order)
            else:
                magnitude = velocity_derivative(ops, series, order)
            weighted = np.where(use, magnitude * np.where(use, s, 0.0) ** (order + shift), 0.0)
            rows.append(
                {
                    "quantity": quantity,
                    "scale": name,
                    "n": order,
                    "constant": float(weighted.max()) if use.any() else 0.0,
                    "points": int(use.sum()),
                }
            )
    return pandas.DataFrame(rows, columns=["quantity", "scale", "n", "constant", "points"])


def _plane(series: FlowSnapshotSeries) -> GraphFamily:
    """Gamma_t = {z = z_0}, z_0 the centre of the first z cell."""
    grid = series.grid
    return GraphFamily.hyperplane(grid, 2, 0.5 * grid.h[2], series.time)


def _fixed_time_norm(f: ScalarField, gamma: GraphFamily, k: int, q: float) -> float:
    sample = MeasuredSample(graph_values(f, gamma, k, True), graph_measure(gamma, k))
    return weak_norm(sample, q)


def _sample_slices(series: FlowSnapshotSeries, count: int) -> List[int]:
    positive = np.flatnonzero(series.time.times > 0)
    if positive.size <= count:
        return positive.tolist()
    picks = np.linspace(0, positive.size - 1, count).round().astype(int)
    return positive[picks].tolist()


def dissipation_norm(series: FlowSnapshotSeries) -> float:
    """||grad u||^2 in L^2((0, T) x T^3)."""
    return strong_norm(MeasuredSample.from_field(series.embed(series.grad_u_norm())), 2.0) ** 2


def pressure_hessian_norm(series: FlowSnapshotSeries) -> float:
    """||grad^2 P|| in L^1((0, T) x T^3)."""
    return strong_norm(MeasuredSample.from_field(series.embed(series.hess_p_norm())), 1.0)


def _trace_rows(
    series: FlowSnapshotSeries,
    indicator: ScalarField,
    label: str,
    rhs: float,
    anchor: str,
    times: int,
) -> List[ReportRow]:
    rows = []
    for d, gamma in ((3, GraphFamily.whole_domain(series.grid, series.time)), (2, _plane(series))):
        lhs = joint_norm(indicator, gamma, LorentzParams(d + 1), True) ** (d + 1)
        rows.append(
            ReportRow(
                f"{label} trace space-time d={d}",
                lhs,
                rhs,
                anchor,
                RATIO,
                series.n,
                params={"d": d},
            )
        )
        for k in _sample_slices(series, times):
            lhs = _fixed_time_norm(indicator, gamma, k, d - 1) ** (d - 1)
            rows.append(
                ReportRow(
                    f"{label} trace fixed-time d={d}",
                    lhs,
                    rhs,
                    anchor,
                    RATIO,
                    series.n,
                    params={"d": d, "t": float(series.time.times[k])},
                )
            )
    return rows


def _below_rstar(
    series: FlowSnapshotSeries, sf: CappedScaleField, rstar: np.ndarray
) -> ScalarField:
    with np.errstate(divide="ignore"):
        values = np.where(sf.s < rstar, 1.0 / sf.s, 0.0)
    return ScalarField(series.grid, values, series.time)


def _above(series: FlowSnapshotSeries, values: np.ndarray, rstar: np.ndarray, power: int, c: float):
    magnitude = series.embed(values).data
    with np.errstate(divide="ignore"):
        threshold = np.where(rstar > 0, c * rstar ** -float(power), np.inf)
    return ScalarField(series.grid, np.where(magnitude > threshold, magnitude, 0.0), series.time)


def anisotropic_rows(series: FlowSnapshotSeries, t0: Optional[float] = None) -> List[ReportRow]:
    """
    ||grad u|| on (t0, T) x T^3 in the three mixed norms with 1/p + 3/q = 2,
    1/p + 1/q = 1 and p = q = 2, against the energy bound with its t0 term.
    """
    times = series.time.times
    positive = np.flatnonzero(times > 0) if t0 is None else np.flatnonzero(times >= t0 - 1e-12)
    if positive.size == 0:
        return []
    first = int(positive[0])
    start = float(times[first])
    window = TimeSpec(series.nt - first, series.time.dt, start)
    gamma = GraphFamily.whole_domain(series.grid, window)
    gradient = series.embed(series.grad_u_norm())
    energy = math.sqrt(dissipation_norm(series))
    span = window.nt * window.dt
    factor = max(start ** -1.0, 1.0)
    anchor = "higher derivatives in mixed norms on T^3, n = 1"
    cases = (
        ("weak-weak", 1.0, 3.0, LorentzParams(1.0), LorentzParams(3.0), 1.0),
        (
            "weak-strong",
            4.0,
            4.0 / 3.0,
            LorentzParams(4.0),
            LorentzParams(4.0 / 3.0, 4.0 / 3.0),
            4.0 / 3.0,
        ),
    )
    rows = []
    for case, p, q, pt, px, power in cases:
        lhs = mixed_norm(gradient, gamma, pt, px, True)
        rhs = energy ** (2.0 / power) + span ** (1.0 / power) * factor
        rows.append(
            ReportRow(
                f"grad u mixed {case}",
                lhs,
                rhs,
                anchor,
                RATIO,
                series.n,
                params={"p": p, "q": q, "t0": start},
            )
        )
    lhs = joint_norm(gradient, gamma, LorentzParams(2.0), True)
    rhs = energy + span ** 0.5 * factor
    rows.append(
        ReportRow(
            "grad u isotropic weak",
            lhs,
            rhs,
            anchor,
            RATIO,
            series.n,
            params={"p": 2.0, "q": 2.0, "t0": start},
        )
    )
    return rows


def theorem_ratios(
    series: FlowSnapshotSeries,
    scales: PivotScales,
    times: int = 5,
    threshold: float = 1.0,
    t0: Optional[float] = None,
) -> List[ReportRow]:
    """
    Both sides of the trace bounds for s1 and s2, the thresholded vorticity bounds,
    the anisotropic estimates, the pressure bound and the pointwise scale bound.
    """
    rstar = scales.rstar
    dissipation = dissipation_norm(series)
    hessian = pressure_hessian_norm(series)
    grid = series.n
    rows = []
    if "s1" in scales:
        rows += _trace_rows(
            series,
            _below_rstar(series, scales["s1"], rstar),
            "s1",
            dissipation,
            "trace of the vorticity scale below r_*",
            times,
        )
    if "s2" in scales:
        rows += _trace_rows(
            series,
            _below_rstar(series, scales["s2"], rstar),
            "s2",
            dissipation + hessian,
            "trace of the velocity scale below r_*",
            times,
        )
    ops = series.ops()
    grad_omega = derivative_norm(ops, series.omega, 1)
    whole = GraphFamily.whole_domain(series.grid, series.time)
    above = _above(series, grad_omega, rstar, 3, threshold)
    lhs = joint_norm(above, whole, LorentzParams(4.0 / 3.0), True)
    rows.append(
        ReportRow(
            "grad omega above r_*^-3",
            lhs ** (4.0 / 3.0),
            dissipation,
            "vorticity gradient beyond the parabolic threshold",
            RATIO,
            grid,
            params={"threshold": threshold},
        )
    )
    above = _above(series, np.abs(series.omega), rstar, 2, threshold)
    lhs = joint_norm(above, _plane(series), LorentzParams(1.5), True)
    rows.append(
        ReportRow(
            "omega above r_*^-2 on plane",
            lhs ** 1.5,
            dissipation,
            "vorticity beyond the parabolic threshold on a plane",
            RATIO,
            grid,
            params={"threshold": threshold},
        )
    )
    rows += anisotropic_rows(series, t0)
    rows.append(
        ReportRow(
            "pressure hessian",
            hessian,
            dissipation,
            "L^1 pressure Hessian against the dissipation",
            RATIO,
            grid,
        )
    )
    for name, count in scales.violations.items():
        rows.append(
            ReportRow(
                f"{name} pointwise bound",
                count,
                0,
                "s^-1 <= A^<(f)^(1/alpha) v r_*^-1",
                CHECK,
                grid,
                params={"points": scales.checked},
            )
        )
    return rows


def regularity_rows(
    constants: pandas.DataFrame, grid: int, prefix: str = ""
) -> List[ReportRow]:
    return [
        ReportRow(
            f"{prefix}C_{row.n} {row.quantity}/{row.scale}",
            row.constant,
            1.0,
            "derivative bounds by powers of the scale",
            RATIO,
            grid,
            params={"points": row.points},
        )
        for row in constants.itertuples()
    ]


def flow_checks(series: FlowSnapshotSeries) -> List[ReportRow]:
    """Divergence, energy balance and (for analytic data) the momentum residual."""
    balance0 = float(series.energy["balance"].iloc[0])
    rows = [
        ReportRow(
            "divergence",
            float(np.max(np.abs(series.divergence()))),
            DIVERGENCE_TOL,
            "incompressibility",
            CHECK,
            series.n,
        ),
        ReportRow(
            "energy inequality",
            series.energy_excess(),
            ENERGY_TOL * max(balance0, 0.0),
            "energy dissipation bounded by the initial energy",
            CHECK,
            series.n,
        ),
    ]
    if series.dudt is not None:
        rows.append(
            ReportRow(
                "momentum residual",
                series.momentum_residual(),
                RESIDUAL_TOL,
                "momentum equation",
                CHECK,
                series.n,
            )
        )
    return rows


def _lebesgue(exponent: float) -> LorentzParams:
    return SUP if math.isinf(exponent) else LorentzParams(exponent, exponent)


def _critical(p: float, q: float) -> bool:
    return abs(2.0 / p + 3.0 / q - 1.0) <= 1e-9


@dataclass(frozen=True)
class BlowupComparison:
    p: float
    q: float
    p_prime: float
    q_prime: float
    t: float
    lhs: float
    rhs_u: float
    rhs_gradu: Optional[float]

    def rows(self, grid: int = 0) -> List[ReportRow]:
        params = {"p": self.p, "q": self.q, "p'": self.p_prime, "q'": self.q_prime, "t": self.t}
        rows = [
            ReportRow(
                "blow-up comparison via u",
                self.lhs,
                self.rhs_u,
                "late-time critical norms against L^p L^q of u",
                INFO,
                grid,
                params=params,
            )
        ]
        if self.rhs_gradu is not None:
            rows.append(
                ReportRow(
                    "blow-up comparison via grad u",
                    self.lhs,
                    self.rhs_gradu,
                    "late-time critical norms against L^p/2 L^q/2 of grad u",
                    INFO,
                    grid,
                    params=params,
                )
            )
        return rows


def gradu_range(p: float, q: float) -> bool:
    return (3 < q <= 3.75 and 10 <= p) or (4 < q <= p < 8)


def blowup_norm_comparison(
    series: FlowSnapshotSeries, p: float, q: float, p_prime: float, q_prime: float, t: float
) -> BlowupComparison:
    """
    ||u||_{L^p'(t,T;L^q')} + ||grad u||_{L^p'/2(t,T;L^q'/2)}^1/2 against ||u||_{L^p L^q}
    and, in its range and for mean-free data, ||grad u||_{L^p/2 L^q/2} over (0, T).
    Nothing is asserted: the constants involved are not computable.
    """
    if not (_critical(p, q) and _critical(p_prime, q_prime)):
        raise DomainError(
            "Exponents must satisfy 2/p + 3/q = 1, got "
            f"(p, q)=({p}, {q}), (p', q')=({p_prime}, {q_prime})"
        )
    if not (3 < q <= p < math.inf and 2 <= p_prime and 3 <= q_prime):
        raise DomainError(
            f"Need 3 < q <= p < inf, p' >= 2 and q' >= 3, got {p}, {q}, {p_prime}, {q_prime}"
        )
    times = series.time.times
    late = np.flatnonzero(times >= t - 1e-12)
    if late.size == 0:
        raise DomainError(f"No snapshot at or after t={t}")
    first = int(late[0])
    window = TimeSpec(series.nt - first, series.time.dt, float(times[first]))
    late_gamma = GraphFamily.whole_domain(series.grid, window)
    gamma = GraphFamily.whole_domain(series.grid, series.time)
    speed = series.embed(series.speed())
    gradient = series.embed(series.grad_u_norm())
    lhs = mixed_norm(speed, late_gamma, _lebesgue(p_prime), _lebesgue(q_prime), True)
    lhs += mixed_norm(
        gradient, late_gamma, _lebesgue(p_prime / 2), _lebesgue(q_prime / 2), True
    ) ** 0.5
    rhs_u = mixed_norm(speed, gamma, _lebesgue(p), _lebesgue(q), True)
    rhs_gradu = None
    scale = max(1.0, float(np.max(series.speed()[0])))
    mean_free = abs(series.ux[0].mean()) + abs(series.uy[0].mean()) <= 1e-12 * scale
    if gradu_range(p, q) and mean_free:
        rhs_gradu = mixed_norm(gradient, gamma, _lebesgue(p / 2), _lebesgue(q / 2), True)
    logger.info(f"Blow-up comparison at t={t:g}: {lhs:.4g} against {rhs_u:.4g}")
    return BlowupComparison(p, q, p_prime, q_prime, t, lhs, rhs_u, rhs_gradu)


def save_series(series: FlowSnapshotSeries, out_dir: Path):
    """MSF velocity, vorticity and pressure on the T^3 grid, plus energy.csv and series.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(exist_ok=True, parents=True)
    save_field(series.velocity(), out_dir / "velocity.msf", "velocity")
    save_field(series.embed(series.omega), out_dir / "vorticity.msf", "vorticity")
    save_field(series.embed(series.pressure), out_dir / "pressure.msf", "pressure")
    series.energy.to_csv(out_dir / "energy.csv", index=False)
    meta = {"nu": series.nu, "nz": series.nz, "n": series.n}
    out_dir.joinpath("series.json").write_text(json.dumps(meta, indent=4))


def load_series(directory: Path) -> FlowSnapshotSeries:
    directory = Path(directory)
    meta_path = directory / "series.json"
    if not meta_path.is_file():
        raise OSError(f"{meta_path} could not be found")
    meta = json.loads(meta_path.read_text())
    velocity = load_field(directory / "velocity.msf")
    if not isinstance(velocity, VectorField) or velocity.time is None:
        raise ParameterError(f"{directory} does not hold a velocity time series")
    ux = velocity.components[0].data[..., 0]
    uy = velocity.components[1].data[..., 0]
    dissipation = None
    ledger_path = directory / "energy.csv"
    if ledger_path.is_file():
        dissipation = pandas.read_csv(ledger_path)["dissipation"].to_numpy()
    return FlowSnapshotSeries.from_velocity(
        ux, uy, velocity.time, float(meta["nu"]), int(meta.get("nz", DEFAULT_NZ)), dissipation
    )
