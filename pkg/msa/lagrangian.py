"""
Skewed parabolic cylinders that follow the flow of a mollified drift.

The drift b is mollified per time slice with a smooth radial bump, sampled
multilinearly in space and linearly in time (zero outside the sampled range), and
integrated backwards with classical RK4. Cylinder averages reuse the Eulerian
ball sums: the ball mass of every slice is interpolated at the trajectory position
of that slice.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_function

from msa.field_core import (
    GridSpec,
    ScalarField,
    TimeSpec,
    VectorField,
    interpolate,
    r_star_values,
)
from msa.multiscale import (
    LATTICE,
    SPACETIME,
    EulerianAverager,
    LadderBracket,
    ScaleLadder,
    ball_offsets,
    bracket_to_scale,
    cyl_average,
    fft_convolve,
    ladder_search,
    maximal_function,
)
from msa.utils import ParameterError, thread_limit

logger = logging.getLogger(__name__)

MIN_SUBSTEPS = 16
PATH_STEPS = 64

SING_EQ = 0
SING_LT = 1
REG_EQ = 2
REG_LT = 3
LABEL_NAMES = {SING_EQ: "Sing=", SING_LT: "Sing<", REG_EQ: "Reg=", REG_LT: "Reg<"}


def sphere_area(rank: int) -> float:
    """Surface measure of the unit sphere S^{rank-1}; 2 for rank 1."""
    return 2 * math.pi ** (rank / 2) / float(gamma_function(rank / 2))


def bump(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    inside = r < 1
    values = np.zeros(r.shape)
    values[inside] = np.exp(1.0 / (r[inside] ** 2 - 1.0))
    return values


@dataclass(frozen=True)
class MollifierSpec:
    """Radial bump c exp(1/(|x|^2 - 1)) on the unit ball, normalised to unit mass."""

    rank: int
    constant: float = field(init=False)
    sup: float = field(init=False)

    def __post_init__(self):
        if not 1 <= self.rank <= 3:
            raise ParameterError(f"Mollifier rank must be 1, 2 or 3, got {self.rank}")
        radial, _ = integrate.quad(
            lambda r: math.exp(1.0 / (r * r - 1.0)) * r ** (self.rank - 1),
            0.0,
            1.0,
            epsabs=1e-14,
            epsrel=1e-13,
        )
        constant = 1.0 / (sphere_area(self.rank) * radial)
        object.__setattr__(self, "constant", constant)
        object.__setattr__(self, "sup", constant / math.e)

    def profile(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.constant * bump(np.linalg.norm(x, axis=-1))

    def fourier(self, xi: float) -> float:
        """Fourier multiplier of the 1-D profile at angular frequency xi."""
        if self.rank != 1:
            raise ParameterError("The Fourier multiplier is only tabulated in 1-D")
        value, _ = integrate.quad(
            lambda y: self.constant * math.exp(1.0 / (y * y - 1.0)) * math.cos(xi * y),
            -1.0,
            1.0,
            epsabs=1e-14,
            epsrel=1e-13,
            limit=200,
        )
        return value

    def kernel(self, grid: GridSpec, rho: float) -> Tuple[Tuple[np.ndarray, ...], np.ndarray]:
        """Lattice offsets inside B_rho and their weights phi(o h / rho), summing to 1."""
        offsets = ball_offsets(grid, rho)
        r = np.sqrt(sum((o * s) ** 2 for o, s in zip(offsets, grid.h))) / rho
        weights = bump(r)
        if weights.sum() == 0:
            weights = (r == 0).astype(float)
        return offsets, weights / weights.sum()


@dataclass(frozen=True)
class AdmissibilityParams:
    eta0: float

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ParameterError(f"eta0 must be positive, got {self.eta0}")

    @classmethod
    def default(cls, rank: int) -> "AdmissibilityParams":
        """0.9 log 2 / (|phi|_inf 4^D): separation constants (1, 2) are always admissible."""
        return cls(0.9 * math.log(2) / (MollifierSpec(rank).sup * 4 ** rank))


def mollify_drift(
    b: VectorField, rho: float, mollifier: Optional[MollifierSpec] = None
) -> VectorField:
    """Per-slice convolution of every drift component with phi_rho."""
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    grid = b.grid
    mollifier = mollifier or MollifierSpec(grid.rank)
    offsets, weights = mollifier.kernel(grid, rho)
    workers = thread_limit()
    components = []
    for component in b.components:
        smoothed = fft_convolve(component.slices(), grid, offsets, weights, workers)
        components.append(component.with_data(smoothed.reshape(component.data.shape)))
    return VectorField(tuple(components))


def gradient_norm(b: VectorField) -> ScalarField:
    """Frobenius norm of the finite-difference Jacobian, slice by slice."""
    grid = b.grid
    total = np.zeros(b.components[0].slices().shape)
    for component in b.components:
        data = component.slices()
        for axis in range(grid.rank):
            array_axis = axis + 1
            if grid.periodic[axis]:
                derivative = (
                    np.roll(data, -1, axis=array_axis) - np.roll(data, 1, axis=array_axis)
                ) / (2 * grid.h[axis])
            else:
                derivative = np.gradient(data, grid.h[axis], axis=array_axis)
            total += derivative ** 2
    return b.components[0].with_data(np.sqrt(total).reshape(b.components[0].data.shape))


def drift_maximal(b: VectorField, ladder: Optional[ScaleLadder] = None) -> ScalarField:
    """M(|grad b|) per slice."""
    return maximal_function(gradient_norm(b), ladder)


@dataclass(frozen=True, eq=False)
class Backbone:
    positions: np.ndarray  # (M + 1, P, D) at s = t - m dt
    end: np.ndarray  # (P, D) at s = t - rho^2
    min_boundary_distance: np.ndarray  # (P,)


class DriftFlow:
    """Backward characteristics of the mollified drift, for every radius on demand."""

    def __init__(
        self,
        b: VectorField,
        mollifier: Optional[MollifierSpec] = None,
        cache_size: int = 8,
    ):
        if b.dim != b.grid.rank:
            raise ParameterError(
                f"Drift has {b.dim} components on a rank {b.grid.rank} grid"
            )
        self.b = b
        self.grid = b.grid
        self.time = b.time
        self.mollifier = mollifier or MollifierSpec(b.grid.rank)
        self.cache_size = cache_size
        self._drifts = OrderedDict()

    def drift(self, rho: float) -> VectorField:
        if rho in self._drifts:
            self._drifts.move_to_end(rho)
            return self._drifts[rho]
        mollified = mollify_drift(self.b, rho, self.mollifier)
        self._drifts[rho] = mollified
        if len(self._drifts) > self.cache_size:
            self._drifts.popitem(last=False)
        return mollified

    def velocity(self, drift: VectorField, s: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.stack([c.sample(x, s) for c in drift.components], axis=-1)

    def _step(self, drift, s, x, h):
        k1 = self.velocity(drift, s, x)
        k2 = self.velocity(drift, s + h / 2, x + h / 2 * k1)
        k3 = self.velocity(drift, s + h / 2, x + h / 2 * k2)
        k4 = self.velocity(drift, s + h, x + h * k3)
        return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def integrate(
        self, rho: float, s: np.ndarray, x: np.ndarray, h: float, steps: int
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``steps`` RK4 steps of size h (negative runs backwards); returns s, x and the
        smallest boundary distance met on the way."""
        drift = self.drift(rho)
        s = np.array(s, dtype=float)
        x = np.array(x, dtype=float)
        closest = self.grid.dist_to_boundary(x)
        for _ in range(steps):
            x = self._step(drift, s, x, h)
            s = s + h
            closest = np.minimum(closest, self.grid.dist_to_boundary(x))
        return s, x, closest

    def trace(self, rho: float, t: np.ndarray, x: np.ndarray, dt: float) -> Backbone:
        """Positions at the slice times t - m dt inside (t - rho^2, t] and at t - rho^2."""
        window = max(int(math.ceil(rho * rho / dt)) - 1, 0)
        t = np.asarray(t, dtype=float)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        positions = [x]
        closest = self.grid.dist_to_boundary(x)
        substeps = max(int(math.ceil(MIN_SUBSTEPS * dt / (rho * rho))), 1)
        s = t
        for _ in range(window):
            s, x, near = self.integrate(rho, s, x, -dt / substeps, substeps)
            closest = np.minimum(closest, near)
            positions.append(x)
        remaining = rho * rho - window * dt
        steps = max(int(math.ceil(MIN_SUBSTEPS * remaining / (rho * rho))), 1)
        _, end, near = self.integrate(rho, s, x, -remaining / steps, steps)
        return Backbone(np.stack(positions), end, np.minimum(closest, near))

    def path(
        self, rho: float, t: float, x, steps: int = PATH_STEPS
    ) -> Tuple[np.ndarray, np.ndarray]:
        """The backbone on a uniform grid of ``steps`` substeps over [t - rho^2, t]."""
        h = rho * rho / steps
        drift = self.drift(rho)
        s = np.array([t], dtype=float)
        current = np.atleast_2d(np.asarray(x, dtype=float))
        times = [t]
        points = [current[0]]
        for _ in range(steps):
            current = self._step(drift, s, current, -h)
            s = s - h
            times.append(float(s[0]))
            points.append(current[0])
        return np.array(times), np.array(points)


def flow_map(b: Optional[VectorField], rho: float, t: float, x, s: float) -> np.ndarray:
    """X_rho(s; t, x) for s in [t - rho^2, t]."""
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    if not t - rho * rho - 1e-12 <= s <= t + 1e-12:
        raise ParameterError(f"s={s} lies outside [t - rho^2, t] = [{t - rho * rho}, {t}]")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if b is None or s == t:
        return x.copy()
    steps = max(MIN_SUBSTEPS, int(math.ceil(MIN_SUBSTEPS * (t - s) / (rho * rho))))
    _, end, _ = DriftFlow(b).integrate(rho, np.array([t]), x[None], (s - t) / steps, steps)
    return end[0]


def _is_zero(b: Optional[VectorField]) -> bool:
    return b is None or not np.any(b.stack())


class SkewedAverager:
    """
    Averages over skewed cylinders anchored at (slice k, point x). Without a drift the
    cylinders are straight and the Eulerian spacetime averages are used unchanged.
    """

    def __init__(
        self,
        f: ScalarField,
        flow: Optional[DriftFlow] = None,
        normalization: str = LATTICE,
        rho_max: Optional[float] = None,
        anchors: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    ):
        if f.time is None:
            raise ParameterError("Skewed cylinders need a field with a time axis")
        if flow is not None and (flow.grid != f.grid):
            raise ParameterError("Drift and field must share the grid")
        self.field = f
        self.grid = f.grid
        self.time: TimeSpec = f.time
        self.flow = flow
        self.eulerian = EulerianAverager(f, SPACETIME, normalization, rho_max)
        self.grid_anchors = anchors is None
        if anchors is None:
            size = self.grid.size
            k = np.repeat(np.arange(self.time.nt), size)
            x = np.tile(self.grid.points(), (self.time.nt, 1))
        else:
            k, x = anchors
        self.k = np.asarray(k, dtype=np.int64)
        self.x = np.atleast_2d(np.asarray(x, dtype=float))

    @property
    def n_points(self) -> int:
        return len(self.k)

    def times(self, idx: np.ndarray) -> np.ndarray:
        return self.time.times[self.k[idx]]

    def backbone(self, rho: float, idx: np.ndarray) -> Backbone:
        x = self.x[idx]
        if self.flow is None:
            window = self.time.window(rho)
            return Backbone(
                np.broadcast_to(x, (window + 1,) + x.shape),
                x,
                self.grid.dist_to_boundary(x),
            )
        return self.flow.trace(rho, self.times(idx), x, self.time.dt)

    def at(self, rho: float, idx: np.ndarray) -> np.ndarray:
        if self.flow is None and self.grid_anchors:
            return self.eulerian.at(rho, idx)
        masses = self.eulerian.sums(rho) * self.grid.cell_volume
        k = self.k[idx]
        backbone = self.backbone(rho, idx)
        total = np.zeros(len(idx))
        for m, positions in enumerate(backbone.positions):
            slice_index = k - m
            use = slice_index >= 0
            if use.any():
                total[use] += interpolate(masses, self.grid, positions[use], batch=slice_index[use])
        return total * self.time.dt / self.eulerian.volume(rho)

    def at_radii(self, radii: np.ndarray, idx: np.ndarray) -> np.ndarray:
        values = np.empty(len(idx))
        for rho in np.unique(radii):
            group = radii == rho
            values[group] = self.at(float(rho), idx[group])
        return values

    def exits(self, rho: float, idx: np.ndarray) -> np.ndarray:
        """Whether the cylinder leaves (0, T) x Omega."""
        leaves = self.times(idx) - rho * rho < 0
        if self.grid.all_periodic:
            return leaves
        return leaves | (self.backbone(rho, idx).min_boundary_distance < rho)


def _nearest_slice(time: TimeSpec, t: float) -> int:
    return int(np.clip(round((t - time.t0) / time.dt), 0, time.nt - 1))


def _point_averager(
    f: ScalarField, b: Optional[VectorField], t: float, x, normalization: str = LATTICE
) -> SkewedAverager:
    k = _nearest_slice(f.time, t)
    flow = None if _is_zero(b) else DriftFlow(b)
    anchors = (np.array([k]), np.atleast_2d(np.asarray(x, dtype=float)))
    return SkewedAverager(f, flow, normalization, anchors=anchors)


def skewed_cyl_average(
    f: ScalarField, b: Optional[VectorField], t: float, x, rho: float, normalization: str = LATTICE
) -> float:
    """Average of f over the skewed cylinder Q_rho(t, x); t is read at the nearest slice."""
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    if _is_zero(b):
        return cyl_average(f, t, x, rho, normalization)
    averager = _point_averager(f, b, t, x, normalization)
    return float(averager.at(rho, np.array([0]))[0])


def admissible(
    b: VectorField,
    t: float,
    x,
    rho: float,
    params: Optional[AdmissibilityParams] = None,
    drift_max: Optional[ScalarField] = None,
) -> Tuple[bool, float]:
    """Average of M(grad b) over Q_rho(t, x) against eta0 rho^-2; returns verdict and average."""
    params = params or AdmissibilityParams.default(b.grid.rank)
    drift_max = drift_max if drift_max is not None else drift_maximal(b)
    measured = skewed_cyl_average(drift_max, b, t, x, rho)
    return measured <= params.eta0 / (rho * rho), measured


@dataclass(frozen=True, eq=False)
class CutoffRadii:
    r_adm: np.ndarray
    r_int: np.ndarray
    r_bar: np.ndarray
    adm_bracket: LadderBracket
    int_bracket: LadderBracket


def _radius_value(bracket: LadderBracket) -> np.ndarray:
    """Largest radius verified good: lower bracket end, inf if the ladder never triggers."""
    value = bracket.lo.copy()
    value[bracket.rung < 0] = np.inf
    return value


def _cutoffs(
    averager: SkewedAverager,
    drift_max: Optional[ScalarField],
    ladder: ScaleLadder,
    params: AdmissibilityParams,
) -> CutoffRadii:
    n = averager.n_points
    int_bracket = ladder_search(averager.exits, ladder, n, "r_int")
    if drift_max is None or not np.any(drift_max.data):
        adm_bracket = LadderBracket(
            np.full(n, ladder.rungs()[-1]), np.full(n, np.inf), np.full(n, -1, dtype=np.int64)
        )
    else:
        pivot = SkewedAverager(
            drift_max.with_data(drift_max.data / params.eta0),
            averager.flow,
            averager.eulerian.normalization,
            2 * ladder.rho_max,
            None if averager.grid_anchors else (averager.k, averager.x),
        )
        adm_bracket = ladder_search(
            lambda rho, idx: pivot.at(rho, idx) > rho ** -2, ladder, n, "r_adm"
        )
    r_adm = _radius_value(adm_bracket)
    r_int = _radius_value(int_bracket)
    return CutoffRadii(r_adm, r_int, np.minimum(r_adm, r_int), adm_bracket, int_bracket)


def cutoff_radii(
    b: Optional[VectorField],
    grid: GridSpec,
    time: TimeSpec,
    t: float,
    x,
    params: Optional[AdmissibilityParams] = None,
    ladder: Optional[ScaleLadder] = None,
) -> CutoffRadii:
    """r_adm, r_int and their minimum at one point."""
    params = params or AdmissibilityParams.default(grid.rank)
    ladder = ladder or ScaleLadder.for_grid(grid)
    carrier = ScalarField(grid, np.zeros((time.nt,) + grid.shape), time)
    averager = _point_averager(carrier, b, t, x)
    drift_max = None if _is_zero(b) else drift_maximal(b)
    return _cutoffs(averager, drift_max, ladder, params)


@dataclass(frozen=True, eq=False)
class CappedScaleField:
    """
    S^_alpha = S_alpha ^ r_bar together with the split A^ = A^< + A^=.

    ``scale`` is the uncapped S_alpha(f) (skewed cylinders), ``s`` the capped value.
    ``a_measured`` is the cylinder average actually observed at radius s.
    """

    alpha: float
    s: np.ndarray
    scale: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    r_adm: np.ndarray
    r_int: np.ndarray
    r_bar: np.ndarray
    a_hat: np.ndarray
    a_lt: np.ndarray
    a_eq: np.ndarray
    a_measured: np.ndarray
    labels: np.ndarray
    grid: GridSpec
    time: TimeSpec
    rstar_violations: int = 0
    bound_violations: int = 0
    eta0: float = 0.0

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.s.shape

    @property
    def sing(self) -> np.ndarray:
        return self.labels <= SING_LT

    @property
    def equal(self) -> np.ndarray:
        return (self.labels == SING_EQ) | (self.labels == REG_EQ)

    def label_counts(self) -> Dict[str, int]:
        return {name: int((self.labels == code).sum()) for code, name in LABEL_NAMES.items()}


def capped_scale_op(
    f: ScalarField,
    b: Optional[VectorField],
    alpha: float,
    ladder: Optional[ScaleLadder] = None,
    params: Optional[AdmissibilityParams] = None,
    normalization: str = LATTICE,
    r0: float = 1.0,
    drift_max: Optional[ScalarField] = None,
) -> CappedScaleField:
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    grid = f.grid
    ladder = ladder or ScaleLadder.for_grid(grid)
    params = params or AdmissibilityParams.default(grid.rank)
    flow = None if _is_zero(b) else DriftFlow(b)
    averager = SkewedAverager(f, flow, normalization, 2 * ladder.rho_max)
    n = averager.n_points
    logger.info(f"Capped scale operator alpha={alpha:g} on {n} anchors")

    bracket = ladder_search(
        lambda rho, idx: averager.at(rho, idx) > rho ** -alpha, ladder, n, f"S^_{alpha:g}"
    )
    scale = bracket_to_scale(bracket, ladder)
    if flow is not None and drift_max is None:
        drift_max = drift_maximal(b, ladder)
    cutoffs = _cutoffs(averager, drift_max, ladder, params)
    r_bar = cutoffs.r_bar

    with np.errstate(invalid="ignore"):
        equal = scale >= r_bar * 2.0 ** (-1.0 / ladder.per_octave)
    sing = (bracket.rung == 0) | (r_bar == 0)
    s = np.minimum(scale, r_bar)
    s[sing] = ladder.rho_min

    with np.errstate(divide="ignore"):
        a_lt = np.where(~equal & np.isfinite(scale), scale ** -alpha, 0.0)
    a_eq = np.zeros(n)
    cap = np.maximum(r_bar, ladder.rho_min)
    use = np.flatnonzero(equal & np.isfinite(cap))
    if use.size:
        a_eq[use] = averager.at_radii(cap[use], use)
    a_measured = np.zeros(n)
    finite = np.flatnonzero(np.isfinite(s))
    if finite.size:
        a_measured[finite] = averager.at_radii(s[finite], finite)

    labels = np.where(sing, np.where(equal, SING_EQ, SING_LT), np.where(equal, REG_EQ, REG_LT))

    slack = 2.0 ** (2.0 / ladder.per_octave)
    reg_eq = (labels == REG_EQ) & np.isfinite(r_bar) & (r_bar > 0)
    with np.errstate(divide="ignore"):
        bound_violations = int(np.sum(a_eq[reg_eq] > slack * r_bar[reg_eq] ** -alpha))
    if bound_violations:
        logger.warning(f"{bound_violations} Reg= points exceed r_bar^-alpha by more than one step")

    rstar_violations = _rstar_violations(averager, cutoffs, r0)
    shape = f.data.shape
    return CappedScaleField(
        alpha,
        s.reshape(shape),
        scale.reshape(shape),
        bracket.lo.reshape(shape),
        bracket.hi.reshape(shape),
        cutoffs.r_adm.reshape(shape),
        cutoffs.r_int.reshape(shape),
        r_bar.reshape(shape),
        (a_lt + a_eq).reshape(shape),
        a_lt.reshape(shape),
        a_eq.reshape(shape),
        a_measured.reshape(shape),
        labels.reshape(shape),
        grid,
        f.time,
        rstar_violations,
        bound_violations,
        params.eta0,
    )


def _rstar_violations(averager: SkewedAverager, cutoffs: CutoffRadii, r0: float) -> int:
    """Anchors where r_int ^ r_adm < r_* ^ r_adm beyond the ladder bracket (boxes only)."""
    if averager.grid.all_periodic:
        return 0
    t = averager.times(np.arange(averager.n_points))
    positive = t > 0
    if not positive.any():
        return 0
    rstar = r_star_values(
        t[positive], averager.grid.dist_to_boundary(averager.x[positive]), 0.0, r0
    )
    r_int_hi = cutoffs.int_bracket.hi[positive]
    r_adm_hi = cutoffs.adm_bracket.hi[positive]
    r_adm_lo = _radius_value(cutoffs.adm_bracket)[positive]
    violated = np.minimum(r_int_hi, r_adm_hi) < np.minimum(rstar, r_adm_lo)
    count = int(violated.sum())
    if count:
        logger.warning(f"r_int ^ r_adm >= r_* ^ r_adm fails at {count} anchors")
    return count


@dataclass(frozen=True, eq=False)
class SkewedCylinder:
    t: float
    x: np.ndarray
    rho: float
    times: np.ndarray
    backbone: np.ndarray
    admissible: bool
    contained: bool
    measured: float = 0.0

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "x": [float(v) for v in self.x],
            "rho": self.rho,
            "admissible": self.admissible,
            "contained": self.contained,
            "measured": self.measured,
            "polyline": [
                [float(s)] + [float(v) for v in p] for s, p in zip(self.times, self.backbone)
            ],
        }


def make_cylinder(
    b: Optional[VectorField],
    grid: GridSpec,
    t: float,
    x,
    rho: float,
    params: Optional[AdmissibilityParams] = None,
    drift_max: Optional[ScalarField] = None,
    steps: int = PATH_STEPS,
) -> SkewedCylinder:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if _is_zero(b):
        times = t - np.arange(steps + 1) * rho * rho / steps
        backbone = np.tile(x, (steps + 1, 1))
        verdict, measured = True, 0.0
    else:
        times, backbone = DriftFlow(b).path(rho, t, x, steps)
        verdict, measured = admissible(b, t, x, rho, params, drift_max)
    contained = t - rho * rho >= 0 and bool(np.all(grid.dist_to_boundary(backbone) >= rho))
    return SkewedCylinder(t, x, rho, times, backbone, verdict, contained, measured)


def cylinder_polylines(cylinders: Sequence[SkewedCylinder]) -> List[dict]:
    return [c.to_json() for c in cylinders]


@dataclass(frozen=True)
class SeparationResult:
    max_ratio: float
    holds: bool
    trials: int


def trajectory_separation_check(
    b: Optional[VectorField],
    cylinder: SkewedCylinder,
    c1: float = 1.0,
    c2: float = 2.0,
    params: Optional[AdmissibilityParams] = None,
    trials: int = 10,
    seed: int = 0,
) -> SeparationResult:
    """
    Largest distance, in units of rho, between the cylinder backbone and trajectories
    started within c1 rho of it at a random time of the cylinder.
    """
    rank = len(cylinder.x)
    params = params or AdmissibilityParams.default(rank)
    if not 0 < c1 < c2:
        raise ParameterError(f"Need 0 < c1 < c2, got c1={c1}, c2={c2}")
    budget = MollifierSpec(rank).sup * (c2 + 2) ** rank * params.eta0
    if not budget < math.log(c2) - math.log(c1):
        raise ParameterError(
            f"|phi|_inf (c2 + 2)^D eta0 = {budget:.4g} "
            f"is not below log(c2/c1) = {math.log(c2 / c1):.4g}"
        )
    if not cylinder.admissible:
        raise ParameterError("The cylinder is not admissible")
    rho = cylinder.rho
    steps = len(cylinder.times) - 1
    h = rho * rho / steps
    rng = np.random.default_rng(seed)
    if _is_zero(b):
        flow = None
    else:
        flow = DriftFlow(b)
    worst = 0.0
    for _ in range(trials):
        start = int(rng.integers(0, steps + 1))
        direction = rng.normal(size=rank)
        direction /= np.linalg.norm(direction)
        offset = direction * c1 * rho * rng.uniform(0.0, 1.0) ** (1.0 / rank) * (1 - 1e-9)
        companion = np.empty_like(cylinder.backbone)
        companion[start] = cylinder.backbone[start] + offset
        if flow is None:
            companion[:] = companion[start]
        else:
            for j in range(start, steps):
                s = np.array([cylinder.times[j]])
                _, x, _ = flow.integrate(rho, s, companion[j][None], -h, 1)
                companion[j + 1] = x[0]
            for j in range(start, 0, -1):
                s = np.array([cylinder.times[j]])
                _, x, _ = flow.integrate(rho, s, companion[j][None], h, 1)
                companion[j - 1] = x[0]
        gap = np.linalg.norm(companion - cylinder.backbone, axis=-1).max() / rho
        worst = max(worst, float(gap))
    return SeparationResult(worst, worst < c2, trials)
