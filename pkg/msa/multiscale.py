"""
Eulerian ball and parabolic-cylinder averages, the scale operator S_alpha, the
averaging operator A_alpha = S_alpha^-alpha, the maximal function and graph
level-set measures.

Balls are lattice balls: a cell belongs to B_rho(x) when its centre is closer than
rho to x. Full-field ball sums go through FFT convolution with the ball indicator
(wrapping on periodic axes, zero padding otherwise) and through prefix sums in 1-D.
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy.special import gamma as gamma_function
from tqdm import tqdm

from msa.field_core import GraphFamily, GridSpec, ScalarField, TimeSpec
from msa.norms import graph_measure
from msa.utils import (
    DEFAULT_BISECTIONS,
    DEFAULT_RUNGS_PER_OCTAVE,
    DomainError,
    ParameterError,
    thread_limit,
)

logger = logging.getLogger(__name__)

LATTICE = "lattice"
CONTINUUM = "continuum"
NORMALIZATIONS = (LATTICE, CONTINUUM)

SPACE = "space"
SPACETIME = "spacetime"
MODES = (SPACE, SPACETIME)

CACHE_SIZE = 48
CACHE_BYTES = 2 ** 29


def _cache_entries(array: np.ndarray) -> int:
    return max(2, min(CACHE_SIZE, CACHE_BYTES // max(array.nbytes, 1)))


def unit_ball_volume(rank: int) -> float:
    return math.pi ** (rank / 2) / float(gamma_function(rank / 2 + 1))


@dataclass(frozen=True)
class ScaleLadder:
    rho_min: float
    rho_max: float
    per_octave: int = DEFAULT_RUNGS_PER_OCTAVE
    bisections: int = DEFAULT_BISECTIONS

    def __post_init__(self):
        if not self.rho_min > 0:
            raise ParameterError(f"rho_min must be positive, got {self.rho_min}")
        if not self.rho_max >= self.rho_min:
            raise ParameterError(
                f"rho_max {self.rho_max} is smaller than rho_min {self.rho_min}"
            )
        if self.per_octave < 1 or self.bisections < 0:
            raise ParameterError("Need per_octave >= 1 and bisections >= 0")

    @classmethod
    def for_grid(
        cls,
        grid: GridSpec,
        per_octave: int = DEFAULT_RUNGS_PER_OCTAVE,
        bisections: int = DEFAULT_BISECTIONS,
        rho_min: Optional[float] = None,
        rho_max: Optional[float] = None,
    ) -> "ScaleLadder":
        """Ladder from one grid spacing up to half the domain extent."""
        return cls(
            rho_min if rho_min is not None else min(grid.h),
            rho_max if rho_max is not None else 0.5 * min(grid.extent),
            per_octave,
            bisections,
        )

    @property
    def step(self) -> float:
        return 2.0 ** (1.0 / self.per_octave)

    def rungs(self) -> np.ndarray:
        count = int(math.floor(self.per_octave * math.log2(self.rho_max / self.rho_min) + 1e-9))
        return self.rho_min * 2.0 ** (np.arange(count + 1) / self.per_octave)


@dataclass(frozen=True, eq=False)
class ScaleField:
    """
    Per-point S_alpha values with their certified brackets [lo, hi].

    ``sing`` marks Sing-candidates (the smallest rung already triggers, s <= rho_min),
    ``truncated`` marks points where no rung triggers (s = inf, a = 0).
    """

    alpha: float
    s: np.ndarray
    a: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    sing: np.ndarray
    truncated: np.ndarray
    grid: GridSpec
    time: Optional[TimeSpec] = None
    residual: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.s.shape

    @property
    def reg(self) -> np.ndarray:
        return ~self.sing

    def as_field(self, values: np.ndarray) -> ScalarField:
        return ScalarField(self.grid, values, self.time)


def _lattice_distances(grid: GridSpec, reach: Sequence[int]) -> np.ndarray:
    offsets = np.meshgrid(*[np.arange(-r, r + 1) * s for r, s in zip(reach, grid.h)], indexing="ij")
    return sum(o ** 2 for o in offsets)


class LatticeShells:
    """
    Squared lengths of all lattice offsets of a grid up to a radius. The offset set
    of the ball B_rho only depends on how many distinct shells lie below rho^2,
    which serves as cache key.
    """

    def __init__(self, grid: GridSpec, rho_max: float):
        self.grid = grid
        self.rho_max = rho_max
        reach = [max(int(math.ceil(rho_max / s)), 1) for s in grid.h]
        squared = _lattice_distances(grid, reach).ravel()
        shells, counts = np.unique(squared[squared < rho_max ** 2], return_counts=True)
        self.shells = shells
        self.cumulative = np.cumsum(counts)

    def key(self, rho: float) -> int:
        if rho > self.rho_max:
            self._extend(rho)
        return int(np.searchsorted(self.shells, rho * rho, side="left"))

    def count(self, rho: float) -> int:
        """Number of lattice offsets with length < rho (at least the centre)."""
        return int(self.cumulative[max(self.key(rho) - 1, 0)])

    def _extend(self, rho: float):
        self.__init__(self.grid, 2 * rho)


def ball_offsets(grid: GridSpec, rho: float) -> Tuple[np.ndarray, ...]:
    """Integer offsets o with |o h| < rho, one array per axis."""
    reach = [max(int(math.ceil(rho / s)), 1) for s in grid.h]
    squared = _lattice_distances(grid, reach)
    inside = squared < rho * rho
    return tuple(idx - r for idx, r in zip(np.nonzero(inside), reach))


def padded_shape(grid: GridSpec) -> Tuple[int, ...]:
    """FFT shape: the grid itself on periodic axes, at least twice it on box axes."""
    return tuple(
        n if periodic else sp_fft.next_fast_len(2 * n, real=True)
        for n, periodic in zip(grid.n, grid.periodic)
    )


def kernel_spectrum(
    grid: GridSpec,
    offsets: Tuple[np.ndarray, ...],
    weights: Optional[np.ndarray] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    shape = padded_shape(grid)
    kernel = np.zeros(shape)
    if weights is None:
        weights = np.ones(len(offsets[0]))
    index = []
    keep = np.ones(len(offsets[0]), dtype=bool)
    for axis, o in enumerate(offsets):
        if not grid.periodic[axis]:
            keep &= np.abs(o) < grid.n[axis]
        index.append(o % shape[axis])
    # Offsets longer than a period wrap onto the same cell and accumulate
    np.add.at(kernel, tuple(i[keep] for i in index), weights[keep])
    return sp_fft.rfftn(kernel, workers=workers)


def data_spectrum(data: np.ndarray, grid: GridSpec, workers: Optional[int] = None) -> np.ndarray:
    axes = tuple(range(data.ndim - grid.rank, data.ndim))
    return sp_fft.rfftn(data, s=padded_shape(grid), axes=axes, workers=workers)


def _inverse(spectrum: np.ndarray, grid: GridSpec, workers: Optional[int]) -> np.ndarray:
    axes = tuple(range(spectrum.ndim - grid.rank, spectrum.ndim))
    result = sp_fft.irfftn(spectrum, s=padded_shape(grid), axes=axes, workers=workers)
    return result[(Ellipsis,) + tuple(slice(0, n) for n in grid.n)]


def fft_convolve(
    data: np.ndarray,
    grid: GridSpec,
    offsets: Tuple[np.ndarray, ...],
    weights: Optional[np.ndarray] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """
    sum_o w_o data[x - o] over the trailing grid axes of ``data``; periodic axes wrap,
    the other axes see zeros beyond the box.
    """
    spectrum = data_spectrum(data, grid, workers) * kernel_spectrum(grid, offsets, weights, workers)
    return _inverse(spectrum, grid, workers)


class BallSums:
    """Full-field lattice-ball sums of one array, cached per offset set."""

    def __init__(self, data: np.ndarray, grid: GridSpec, rho_max: float):
        self.data = data
        self.grid = grid
        self.shells = LatticeShells(grid, rho_max)
        self.workers = thread_limit()
        self._cache = OrderedDict()
        self._spectrum = None

    def __call__(self, rho: float) -> np.ndarray:
        key = self.shells.key(rho)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        if self.grid.rank == 1:
            sums = self._prefix_sums(rho)
        else:
            sums = self._fft_sums(rho)
        self._cache[key] = sums
        if len(self._cache) > _cache_entries(sums):
            self._cache.popitem(last=False)
        return sums

    def _prefix_sums(self, rho: float) -> np.ndarray:
        # Summed-area evaluation: the ball is an interval of 2m+1 cells
        n = self.grid.n[0]
        m = (self.shells.count(rho) - 1) // 2
        if self.grid.periodic[0]:
            reps = m // n + 1
            padded = np.concatenate(
                [self.data] * (2 * reps + 1), axis=-1
            )[..., reps * n - m : reps * n + n + m]
        else:
            pad = [(0, 0)] * (self.data.ndim - 1) + [(m, m)]
            padded = np.pad(self.data, pad)
        prefix = np.concatenate(
            [np.zeros(padded.shape[:-1] + (1,)), np.cumsum(padded, axis=-1)], axis=-1
        )
        return prefix[..., 2 * m + 1 :] - prefix[..., : -(2 * m + 1)]

    def _fft_sums(self, rho: float) -> np.ndarray:
        if self._spectrum is None:
            self._spectrum = data_spectrum(self.data, self.grid, self.workers)
        kernel = kernel_spectrum(self.grid, ball_offsets(self.grid, rho), None, self.workers)
        return _inverse(self._spectrum * kernel, self.grid, self.workers)

    def count(self, rho: float) -> int:
        return self.shells.count(rho)


class EulerianAverager:
    """
    Ball (space mode) or straight-cylinder (spacetime mode) averages of a field at
    every grid point. Static fields only support space mode; space mode on a
    spacetime field averages every slice separately.
    """

    def __init__(
        self,
        field: ScalarField,
        mode: str = SPACE,
        normalization: str = LATTICE,
        rho_max: Optional[float] = None,
    ):
        if mode not in MODES:
            raise ParameterError(f"Unknown mode {mode}")
        if normalization not in NORMALIZATIONS:
            raise ParameterError(f"Unknown normalization {normalization}")
        if mode == SPACETIME and field.time is None:
            raise ParameterError("Spacetime averages need a field with a time axis")
        self.field = field
        self.mode = mode
        self.normalization = normalization
        self.grid = field.grid
        rho_max = rho_max if rho_max is not None else max(field.grid.extent)
        self.sums = BallSums(field.slices(), field.grid, rho_max)
        self._windows = OrderedDict()

    @property
    def n_points(self) -> int:
        return self.field.data.size

    def volume(self, rho: float) -> float:
        grid = self.grid
        if self.normalization == LATTICE:
            space = self.sums.count(rho) * grid.cell_volume
        else:
            space = unit_ball_volume(grid.rank) * rho ** grid.rank
        if self.mode == SPACE:
            return space
        if self.normalization == LATTICE:
            return space * (self.field.time.window(rho) + 1) * self.field.time.dt
        return space * rho * rho

    def mass(self, rho: float) -> np.ndarray:
        """Integral of f over the ball or cylinder of every point, shape (nt, *n)."""
        sums = self.sums(rho) * self.grid.cell_volume
        if self.mode == SPACE:
            return sums
        window = self.field.time.window(rho)
        key = (self.sums.shells.key(rho), window)
        if key in self._windows:
            self._windows.move_to_end(key)
            return self._windows[key]
        prefix = np.concatenate([np.zeros((1,) + sums.shape[1:]), np.cumsum(sums, axis=0)])
        nt = sums.shape[0]
        upper = np.arange(1, nt + 1)
        lower = np.maximum(upper - window - 1, 0)
        mass = (prefix[upper] - prefix[lower]) * self.field.time.dt
        self._windows[key] = mass
        if len(self._windows) > _cache_entries(mass):
            self._windows.popitem(last=False)
        return mass

    def full(self, rho: float) -> np.ndarray:
        return (self.mass(rho) / self.volume(rho)).reshape(self.field.data.shape)

    def at(self, rho: float, idx: np.ndarray) -> np.ndarray:
        return self.mass(rho).ravel()[idx] / self.volume(rho)

    def at_radii(self, radii: np.ndarray, idx: np.ndarray) -> np.ndarray:
        values = np.empty(len(idx))
        for rho in np.unique(radii):
            group = radii == rho
            values[group] = self.at(float(rho), idx[group])
        return values


@dataclass(frozen=True, eq=False)
class LadderBracket:
    lo: np.ndarray
    hi: np.ndarray
    rung: np.ndarray


def ladder_search(
    trigger: Callable[[float, np.ndarray], np.ndarray],
    ladder: ScaleLadder,
    n_points: int,
    description: str = "ladder",
) -> LadderBracket:
    """
    Smallest radius at which ``trigger(rho, idx)`` holds, per point.

    Rungs are scanned upwards; points that trigger at rung j > 0 are refined by
    geometric bisection of [rung j-1, rung j]. Points triggering at the first rung get
    [0, rho_min], points never triggering get [rho_max, inf].
    """
    rungs = ladder.rungs()
    rung = np.full(n_points, -1, dtype=np.int64)
    pending = np.arange(n_points)
    for j, rho in enumerate(tqdm(rungs, desc=description, disable=None, leave=False)):
        if pending.size == 0:
            break
        hit = np.asarray(trigger(float(rho), pending), dtype=bool)
        rung[pending[hit]] = j
        pending = pending[~hit]

    found = rung >= 0
    hi = np.full(n_points, np.inf)
    lo = np.zeros(n_points)
    hi[found] = rungs[rung[found]]
    inner = rung > 0
    lo[inner] = rungs[rung[inner] - 1]
    lo[~found] = rungs[-1]

    idx = np.flatnonzero(inner)
    for _ in range(ladder.bisections):
        if idx.size == 0:
            break
        mid = np.sqrt(lo[idx] * hi[idx])
        hit = np.zeros(idx.size, dtype=bool)
        for value in np.unique(mid):
            group = mid == value
            hit[group] = trigger(float(value), idx[group])
        hi[idx[hit]] = mid[hit]
        lo[idx[~hit]] = mid[~hit]
    return LadderBracket(lo, hi, rung)


def bracket_to_scale(bracket: LadderBracket, ladder: ScaleLadder) -> np.ndarray:
    s = np.sqrt(bracket.lo * bracket.hi)
    s[bracket.rung == 0] = ladder.rho_min
    s[bracket.rung < 0] = np.inf
    return s


def _check_alpha(alpha: float):
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")


def scale_op(
    f: ScalarField,
    alpha: float,
    ladder: Optional[ScaleLadder] = None,
    mode: str = SPACE,
    normalization: str = LATTICE,
    certify: bool = True,
) -> ScaleField:
    """S_alpha(f) = inf {rho : f_rho > rho^-alpha} on every grid point."""
    _check_alpha(alpha)
    ladder = ladder or ScaleLadder.for_grid(f.grid)
    averager = EulerianAverager(f, mode, normalization, 2 * ladder.rho_max)

    def trigger(rho, idx):
        return averager.at(rho, idx) > rho ** -alpha

    bracket = ladder_search(trigger, ladder, averager.n_points, f"S_{alpha:g}")
    scale_field = _assemble(bracket, ladder, alpha, f)
    if certify:
        residual = average_identity_residual(averager, scale_field)
        scale_field = _with_residual(scale_field, residual)
    truncated = scale_field.truncated.mean()
    if truncated > 0.5:
        logger.warning(f"{truncated:.0%} of points never reach the threshold below rho_max")
    return scale_field


def _assemble(
    bracket: LadderBracket, ladder: ScaleLadder, alpha: float, f: ScalarField
) -> ScaleField:
    shape = f.data.shape
    s = bracket_to_scale(bracket, ladder)
    with np.errstate(divide="ignore"):
        a = np.where(np.isinf(s), 0.0, s ** -alpha)
    return ScaleField(
        alpha,
        s.reshape(shape),
        a.reshape(shape),
        bracket.lo.reshape(shape),
        bracket.hi.reshape(shape),
        (bracket.rung == 0).reshape(shape),
        (bracket.rung < 0).reshape(shape),
        f.grid,
        f.time,
    )


def _with_residual(scale_field: ScaleField, residual: np.ndarray) -> ScaleField:
    return ScaleField(
        scale_field.alpha,
        scale_field.s,
        scale_field.a,
        scale_field.lo,
        scale_field.hi,
        scale_field.sing,
        scale_field.truncated,
        scale_field.grid,
        scale_field.time,
        residual,
    )


def average_identity_residual(averager, scale_field: ScaleField) -> np.ndarray:
    """Relative residual |f_s - s^-alpha| / s^-alpha where rho_min < s < inf, NaN elsewhere."""
    s = scale_field.s.ravel()
    residual = np.full(s.size, np.nan)
    idx = np.flatnonzero(~scale_field.sing.ravel() & np.isfinite(s))
    if idx.size:
        target = s[idx] ** -scale_field.alpha
        residual[idx] = np.abs(averager.at_radii(s[idx], idx) - target) / target
    return residual.reshape(scale_field.shape)


def _coordinates(grid: GridSpec, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (grid.rank,):
        raise ParameterError(f"Point {x} does not have rank {grid.rank}")
    return x


def _point_ball(grid: GridSpec, x: np.ndarray, rho: float):
    """Indices (wrapped or clipped) and validity of every lattice cell centred in B_rho(x)."""
    ranges = []
    for axis in range(grid.rank):
        u = (x[axis] - grid.origin[axis]) / grid.h[axis] - 0.5
        reach = rho / grid.h[axis]
        ranges.append(np.arange(int(math.floor(u - reach)), int(math.ceil(u + reach)) + 1))
    mesh = np.meshgrid(*ranges, indexing="ij")
    squared = np.zeros(mesh[0].shape)
    for axis, m in enumerate(mesh):
        centre = grid.origin[axis] + (m + 0.5) * grid.h[axis]
        squared += (centre - x[axis]) ** 2
    inside = squared < rho * rho
    valid = np.ones(int(inside.sum()), dtype=bool)
    index = []
    for axis, m in enumerate(mesh):
        i = m[inside]
        if grid.periodic[axis]:
            i = i % grid.n[axis]
        else:
            valid &= (i >= 0) & (i < grid.n[axis])
            i = np.clip(i, 0, grid.n[axis] - 1)
        index.append(i)
    return tuple(index), valid


def average_field(
    f: ScalarField, rho: float, mode: str = SPACE, normalization: str = LATTICE
) -> ScalarField:
    """Ball or cylinder average of f at radius rho, at every grid point."""
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    averager = EulerianAverager(f, mode, normalization, 2 * rho)
    return f.with_data(averager.full(rho))


def _ball_sum(values: np.ndarray, grid: GridSpec, x: np.ndarray, rho: float):
    index, valid = _point_ball(grid, x, rho)
    if valid.size == 0:
        return None, 0
    return float(np.sum(np.where(valid, values[index], 0.0))), valid.size


def ball_average(
    f: ScalarField, x, rho: float, normalization: str = LATTICE
) -> float:
    """
    Average of a static field over B_rho(x) by direct summation. When no cell centre
    lies within rho of x the nearest cell value is returned.
    """
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    if f.time is not None:
        raise ParameterError("ball_average needs a static field, use cyl_average")
    x = _coordinates(f.grid, x)
    total, count = _ball_sum(f.data, f.grid, x, rho)
    if total is None:
        return _nearest_value(f.data, f.grid, x)
    if normalization == LATTICE:
        return total / count
    return total * f.grid.cell_volume / (unit_ball_volume(f.grid.rank) * rho ** f.grid.rank)


def _nearest_value(values: np.ndarray, grid: GridSpec, x: np.ndarray) -> float:
    flat, inside = grid.nearest_index(x[None])
    return float(values.ravel()[flat[0]]) if inside[0] else 0.0


def cyl_average(
    f: ScalarField, t: float, x, rho: float, normalization: str = LATTICE
) -> float:
    """
    Average over (t - rho^2, t] x B_rho(x) by direct summation over the slices in the
    window; slices outside the sampled range count as zero.
    """
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    if f.time is None:
        raise ParameterError("cyl_average needs a field with a time axis")
    x = _coordinates(f.grid, x)
    time = f.time
    k_hi = int(math.floor((t - time.t0) / time.dt + 1e-9))
    k_lo = int(math.floor((t - rho * rho - time.t0) / time.dt + 1e-9)) + 1
    slices = range(k_lo, k_hi + 1)
    if len(slices) == 0:
        return 0.0
    sampled = [k for k in slices if 0 <= k < time.nt]
    index, valid = _point_ball(f.grid, x, rho)
    if valid.size == 0:
        total = sum(_nearest_value(f.data[k], f.grid, x) for k in sampled)
        return total / len(slices)
    total = sum(float(np.sum(np.where(valid, f.data[k][index], 0.0))) for k in sampled)
    if normalization == LATTICE:
        return total / (valid.size * len(slices))
    volume = unit_ball_volume(f.grid.rank) * rho ** (f.grid.rank + 2)
    return total * f.grid.cell_volume * time.dt / volume


def maximal_function(
    f: ScalarField, ladder: Optional[ScaleLadder] = None, normalization: str = LATTICE
) -> ScalarField:
    """
    Hardy-Littlewood maximal function: sup of ball averages over the ladder and the
    cell value itself. Spacetime fields are treated slice by slice.
    """
    ladder = ladder or ScaleLadder.for_grid(f.grid)
    averager = EulerianAverager(f, SPACE, normalization, 2 * ladder.rho_max)
    result = np.abs(f.slices()).copy()
    for rho in tqdm(ladder.rungs(), desc="maximal function", disable=None, leave=False):
        np.maximum(result, averager.full(rho).reshape(result.shape), out=result)
    return f.with_data(result.reshape(f.data.shape))


def level_set_measure(
    sf: ScaleField,
    gamma: GraphFamily,
    rho: float,
    mode: str = SPACE,
    t_index: Optional[int] = None,
) -> float:
    """
    mu-measure of the graph points with rho <= S < 2 rho, read at the nearest cell.
    Spacetime mode integrates over all slices with their time weights unless a
    single slice is requested.
    """
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    s = sf.s if sf.time is not None else sf.s[None]
    slices = range(gamma.nt) if t_index is None else [t_index]
    total = 0.0
    for k in slices:
        flat, inside = sf.grid.nearest_index(gamma.points(k))
        slice_index = _slice_of(sf.time, float(gamma.times[k]))
        if slice_index is None:
            continue
        values = s.reshape(s.shape[0], -1)[slice_index, flat]
        hit = inside & (values >= rho) & (values < 2 * rho)
        weight = graph_measure(gamma, k)[hit].sum()
        if mode == SPACETIME and t_index is None:
            weight *= gamma.time_weights[k]
        total += weight
    return float(total)


def _slice_of(time: Optional[TimeSpec], t: float) -> Optional[int]:
    if time is None:
        return 0
    k = int(round((t - time.t0) / time.dt))
    return k if 0 <= k < time.nt else None


def zero_average_measure(sf: ScaleField, gamma: GraphFamily) -> float:
    """mu_T-measure of the graph points where A_alpha f vanishes."""
    a = sf.a if sf.time is not None else sf.a[None]
    total = 0.0
    for k in range(gamma.nt):
        slice_index = _slice_of(sf.time, float(gamma.times[k]))
        if slice_index is None:
            continue
        flat, inside = sf.grid.nearest_index(gamma.points(k))
        values = a.reshape(a.shape[0], -1)[slice_index, flat]
        total += graph_measure(gamma, k)[inside & (values == 0)].sum() * gamma.time_weights[k]
    return float(total)
