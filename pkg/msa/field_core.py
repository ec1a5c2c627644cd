"""
Grids, sampled fields, Lipschitz graph families and the MSF file format.

All grids are cell centred: sample i sits at origin + (i + 1/2) h on every axis.
Periodic axes wrap indices modulo n, the other axes read zero outside the box.
"""
import itertools
import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from msa.utils import DomainError, FormatError, ParameterError, TruncationError

logger = logging.getLogger(__name__)

MSF_MAGIC = b"MSF1"
MSF_VERSION = 1
MSF_MAX_RANK = 8
MSF_DTYPE_F64 = 0

ZERO_OUTSIDE = "zero-outside"
PERIODIC = "periodic"
EXTENSIONS = (ZERO_OUTSIDE, PERIODIC)


def _readonly(array, dtype=np.float64) -> np.ndarray:
    array = np.array(array, dtype=dtype)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class GridSpec:
    n: Tuple[int, ...]
    h: Tuple[float, ...]
    periodic: Tuple[bool, ...]
    origin: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        rank = len(n)
        h = tuple(float(v) for v in np.broadcast_to(np.atleast_1d(self.h), (rank,)))
        periodic = tuple(
            bool(v) for v in np.broadcast_to(np.atleast_1d(self.periodic), (rank,))
        )
        origin = self.origin if self.origin is not None else 0.0
        origin = tuple(
            float(v) for v in np.broadcast_to(np.atleast_1d(origin), (rank,))
        )
        if not 1 <= rank <= 3:
            raise ParameterError(f"Grid rank must be 1, 2 or 3, got {rank}")
        if any(v < 2 for v in n):
            raise ParameterError(f"Every axis needs at least 2 points, got {n}")
        if any(not (v > 0 and math.isfinite(v)) for v in h):
            raise ParameterError(f"Grid spacing must be positive, got {h}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "periodic", periodic)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def torus(cls, n: Union[int, Sequence[int]], extent: float = 1.0, rank: int = 1):
        n = tuple(np.broadcast_to(np.atleast_1d(n), (max(rank, np.size(n)),)))
        return cls(n, tuple(extent / v for v in n), True, 0.0)

    @classmethod
    def box(
        cls,
        n: Union[int, Sequence[int]],
        lower: Union[float, Sequence[float]] = 0.0,
        upper: Union[float, Sequence[float]] = 1.0,
        rank: int = 1,
    ):
        rank = max(rank, np.size(n), np.size(lower), np.size(upper))
        n = np.broadcast_to(np.atleast_1d(n), (rank,))
        lower = np.broadcast_to(np.atleast_1d(lower), (rank,)).astype(float)
        upper = np.broadcast_to(np.atleast_1d(upper), (rank,)).astype(float)
        return cls(tuple(n), tuple((upper - lower) / n), False, tuple(lower))

    @classmethod
    def centered(
        cls,
        n: Union[int, Sequence[int]],
        extent: float = 2.0,
        rank: int = 1,
        periodic: bool = False,
    ):
        """Grid whose cell n // 2 on every axis is centred on the origin."""
        n = tuple(int(v) for v in np.broadcast_to(np.atleast_1d(n), (rank,)))
        h = tuple(extent / v for v in n)
        origin = tuple(-(v // 2 + 0.5) * s for v, s in zip(n, h))
        return cls(n, h, periodic, origin)

    @property
    def rank(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def extent(self) -> Tuple[float, ...]:
        return tuple(v * s for v, s in zip(self.n, self.h))

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.origin) + np.array(self.extent)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def all_periodic(self) -> bool:
        return all(self.periodic)

    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            o + (np.arange(v) + 0.5) * s for v, s, o in zip(self.n, self.h, self.origin)
        )

    def points(self) -> np.ndarray:
        """All cell centres, row-major, shape (size, rank)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def edges(self, axis: int) -> np.ndarray:
        return self.origin[axis] + np.arange(self.n[axis] + 1) * self.h[axis]

    def wrap(self, delta: np.ndarray) -> np.ndarray:
        """Minimal-image coordinate differences on periodic axes."""
        delta = np.array(delta, dtype=float)
        for axis, periodic in enumerate(self.periodic):
            if periodic:
                period = self.extent[axis]
                delta[..., axis] -= period * np.round(delta[..., axis] / period)
        return delta

    def dist_to_boundary(self, x: np.ndarray) -> np.ndarray:
        """Distance to the box faces; +inf when every axis is periodic."""
        x = np.asarray(x, dtype=float)
        dist = np.full(x.shape[:-1], np.inf)
        for axis, periodic in enumerate(self.periodic):
            if periodic:
                continue
            dist = np.minimum(dist, x[..., axis] - self.origin[axis])
            dist = np.minimum(dist, self.origin[axis] + self.extent[axis] - x[..., axis])
        return dist

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for axis, periodic in enumerate(self.periodic):
            if periodic:
                continue
            inside &= x[..., axis] >= self.origin[axis] - tol
            inside &= x[..., axis] <= self.origin[axis] + self.extent[axis] + tol
        return inside

    def nearest_index(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Flat index of the nearest cell centre and a mask of points inside the grid."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = np.floor((x - self.lower) / np.array(self.h)).astype(np.int64)
        inside = np.ones(len(x), dtype=bool)
        for axis, periodic in enumerate(self.periodic):
            if periodic:
                idx[:, axis] %= self.n[axis]
            else:
                inside &= (idx[:, axis] >= 0) & (idx[:, axis] < self.n[axis])
                idx[:, axis] = np.clip(idx[:, axis], 0, self.n[axis] - 1)
        flat = np.ravel_multi_index(tuple(idx.T), self.n)
        return flat, inside


@dataclass(frozen=True)
class TimeSpec:
    nt: int
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "nt", int(self.nt))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))
        if self.nt < 1:
            raise ParameterError(f"Need at least one time slice, got nt={self.nt}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ParameterError(f"Timestep must be positive, got dt={self.dt}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.nt) * self.dt

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.nt, self.dt)

    @property
    def t_last(self) -> float:
        return self.t0 + (self.nt - 1) * self.dt

    def window(self, rho: float) -> int:
        """Number of earlier slices m >= 1 with m dt < rho^2."""
        return max(int(math.ceil(rho * rho / self.dt)) - 1, 0)


def interpolate(
    values: np.ndarray,
    grid: GridSpec,
    points: np.ndarray,
    batch: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Multilinear interpolation of cell-centre samples.

    ``values`` has the grid shape, or a leading batch axis in which case ``batch``
    selects one entry per point. Periodic axes wrap, the other axes read zero beyond
    the last cell centre.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = (points - grid.lower) / np.array(grid.h) - 0.5
    base = np.floor(u).astype(np.int64)
    frac = u - base
    result = np.zeros(len(points))
    for corner in itertools.product((0, 1), repeat=grid.rank):
        weight = np.ones(len(points))
        valid = np.ones(len(points), dtype=bool)
        index = []
        for axis, c in enumerate(corner):
            weight *= frac[:, axis] if c else 1.0 - frac[:, axis]
            i = base[:, axis] + c
            if grid.periodic[axis]:
                i = i % grid.n[axis]
            else:
                valid &= (i >= 0) & (i < grid.n[axis])
                i = np.clip(i, 0, grid.n[axis] - 1)
            index.append(i)
        if batch is not None:
            index.insert(0, batch)
        gathered = values[tuple(index)]
        use = valid & (weight > 0)
        result[use] += weight[use] * gathered[use]
    return result


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    data: np.ndarray
    time: Optional[TimeSpec] = None
    extension: Optional[str] = None

    def __post_init__(self):
        shape = self.grid.shape if self.time is None else (self.time.nt,) + self.grid.shape
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != shape:
            if data.size != int(np.prod(shape)):
                raise ParameterError(
                    f"Field data has {data.size} samples, grid and time need {int(np.prod(shape))}"
                )
            data = data.reshape(shape)
        if np.isnan(data).any() or (data == -np.inf).any():
            raise ParameterError("Field data must be finite or +inf")
        extension = self.extension
        if extension is None:
            extension = PERIODIC if self.grid.all_periodic else ZERO_OUTSIDE
        if extension not in EXTENSIONS:
            raise ParameterError(f"Unknown extension {extension}")
        if extension == PERIODIC and not self.grid.all_periodic:
            raise ParameterError("A periodic extension needs a periodic grid")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "extension", extension)

    @property
    def is_spacetime(self) -> bool:
        return self.time is not None

    @property
    def nt(self) -> int:
        return 1 if self.time is None else self.time.nt

    def slices(self) -> np.ndarray:
        """Data with a leading time axis, length 1 for static fields."""
        return self.data[None] if self.time is None else self.data

    def with_data(self, data: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, data, self.time, self.extension)

    def sample(self, points: np.ndarray, t=None) -> np.ndarray:
        """Multilinear in space, linear in time, zero outside the sampled time range."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.time is None:
            return interpolate(self.data, self.grid, points)
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(points),))
        u = (t - self.time.t0) / self.time.dt
        k0 = np.floor(u).astype(np.int64)
        frac = u - k0
        result = np.zeros(len(points))
        for k, weight in ((k0, 1.0 - frac), (k0 + 1, frac)):
            use = (k >= 0) & (k < self.time.nt) & (weight > 0)
            if use.any():
                result[use] += weight[use] * interpolate(
                    self.data, self.grid, points[use], batch=k[use]
                )
        return result


@dataclass(frozen=True, eq=False)
class VectorField:
    components: Tuple[ScalarField, ...]

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise ParameterError("A vector field needs at least one component")
        first = components[0]
        for component in components[1:]:
            if component.grid != first.grid or component.time != first.time:
                raise ParameterError("Vector components must share grid and time")
        object.__setattr__(self, "components", components)

    @classmethod
    def from_array(
        cls, grid: GridSpec, data: np.ndarray, time: Optional[TimeSpec] = None
    ) -> "VectorField":
        return cls(tuple(ScalarField(grid, component, time) for component in data))

    @property
    def grid(self) -> GridSpec:
        return self.components[0].grid

    @property
    def time(self) -> Optional[TimeSpec]:
        return self.components[0].time

    @property
    def dim(self) -> int:
        return len(self.components)

    def stack(self) -> np.ndarray:
        return np.stack([component.data for component in self.components])

    def magnitude(self) -> ScalarField:
        return self.components[0].with_data(np.sqrt((self.stack() ** 2).sum(axis=0)))


@dataclass(frozen=True, eq=False)
class GraphFamily:
    """
    Time-indexed Lipschitz graphs Gamma_t = {(y, g_t(y))} inside the grid domain.

    ``base_axes`` are the axes of the domain spanned by the base U_t, the heights give
    the remaining coordinates. Base cells may be non-uniform; each cell is represented
    by one sample point.
    """

    domain: GridSpec
    base_axes: Tuple[int, ...]
    base_edges: Tuple[np.ndarray, ...]
    heights: np.ndarray
    times: np.ndarray
    time_weights: np.ndarray
    lipschitz: float = 0.0
    base_points: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        base_axes = tuple(int(a) for a in self.base_axes)
        edges = tuple(np.array(e, dtype=float) for e in self.base_edges)
        if len(edges) != len(base_axes):
            raise ParameterError("One edge array per base axis is required")
        for e in edges:
            if len(e) < 2 or np.any(np.diff(e) <= 0):
                raise ParameterError("Base cell edges must be strictly increasing")
        if self.base_points is None:
            points = tuple(0.5 * (e[1:] + e[:-1]) for e in edges)
        else:
            points = tuple(np.array(p, dtype=float) for p in self.base_points)
        base_shape = tuple(len(e) - 1 for e in edges)
        if tuple(len(p) for p in points) != base_shape:
            raise ParameterError("Base sample points do not match the base cells")
        times = np.atleast_1d(np.array(self.times, dtype=float))
        codim = self.domain.rank - len(base_axes)
        heights = np.array(self.heights, dtype=float).reshape(
            (len(times),) + base_shape + (codim,)
        )
        weights = np.broadcast_to(
            np.array(self.time_weights, dtype=float), times.shape
        ).copy()
        if np.any(weights <= 0):
            raise ParameterError("Time weights must be positive")
        object.__setattr__(self, "base_axes", base_axes)
        object.__setattr__(self, "base_edges", edges)
        object.__setattr__(self, "base_points", points)
        object.__setattr__(self, "heights", _readonly(heights))
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "time_weights", _readonly(weights))
        self._check_lipschitz()
        self._check_inside()

    @classmethod
    def whole_domain(
        cls, grid: GridSpec, time: Optional[TimeSpec] = None
    ) -> "GraphFamily":
        """Gamma_t = Omega for every slice (d = D)."""
        times, weights = _time_axis(time)
        return cls(
            grid,
            tuple(range(grid.rank)),
            tuple(grid.edges(a) for a in range(grid.rank)),
            np.zeros((len(times),) + grid.shape + (0,)),
            times,
            weights,
            0.0,
        )

    @classmethod
    def hyperplane(
        cls,
        grid: GridSpec,
        axis: int,
        level: float,
        time: Optional[TimeSpec] = None,
        velocity: float = 0.0,
    ) -> "GraphFamily":
        """The plane {x_axis = level + velocity t} over the remaining axes."""
        times, weights = _time_axis(time)
        base_axes = tuple(a for a in range(grid.rank) if a != axis)
        base_shape = tuple(grid.n[a] for a in base_axes)
        heights = np.empty((len(times),) + base_shape + (1,))
        for k, t in enumerate(times):
            heights[k] = level + velocity * t
        return cls(
            grid,
            base_axes,
            tuple(grid.edges(a) for a in base_axes),
            heights,
            times,
            weights,
            0.0,
        )

    @property
    def d(self) -> int:
        return len(self.base_axes)

    @property
    def nt(self) -> int:
        return len(self.times)

    @property
    def normal_axes(self) -> Tuple[int, ...]:
        return tuple(a for a in range(self.domain.rank) if a not in self.base_axes)

    @property
    def base_shape(self) -> Tuple[int, ...]:
        return tuple(len(p) for p in self.base_points)

    def base_mesh(self) -> np.ndarray:
        if not self.base_points:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*self.base_points, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def points(self, t_index: int) -> np.ndarray:
        """Graph sample points of slice t_index in domain coordinates, shape (P, D)."""
        base = self.base_mesh()
        points = np.empty((len(base), self.domain.rank))
        points[:, list(self.base_axes)] = base
        points[:, list(self.normal_axes)] = self.heights[t_index].reshape(
            len(base), len(self.normal_axes)
        )
        return points

    def cell_volumes(self) -> np.ndarray:
        volume = np.ones(self.base_shape)
        for axis, e in enumerate(self.base_edges):
            shape = [1] * self.d
            shape[axis] = len(e) - 1
            volume = volume * np.diff(e).reshape(shape)
        return volume

    def slope_factor(self, t_index: int) -> np.ndarray:
        """sqrt(1 + |grad g_t|^2) per base cell from finite differences."""
        heights = self.heights[t_index]
        grad_sq = np.zeros(self.base_shape)
        for axis, coordinate in enumerate(self.base_points):
            if len(coordinate) < 2:
                continue
            grad_sq += (np.gradient(heights, coordinate, axis=axis) ** 2).sum(axis=-1)
        return np.sqrt(1.0 + grad_sq)

    def _check_lipschitz(self):
        if self.d == 0 or self.heights.shape[-1] == 0:
            return
        for axis, coordinate in enumerate(self.base_points):
            if len(coordinate) < 2:
                continue
            step = np.diff(coordinate)
            shape = [1] * (self.d + 1)
            shape[axis + 1] = len(step)
            jump = np.linalg.norm(np.diff(self.heights, axis=axis + 1), axis=-1)
            allowed = self.lipschitz * step.reshape(shape) * (1 + 1e-9) + 1e-12
            if np.any(jump > allowed):
                raise ParameterError(
                    f"Graph heights violate the Lipschitz bound L={self.lipschitz}"
                )

    def _check_inside(self):
        for k in range(self.nt):
            if not self.domain.contains(self.points(k)).all():
                raise ParameterError(f"Graph slice {k} leaves the domain")


def _time_axis(time: Optional[TimeSpec]) -> Tuple[np.ndarray, np.ndarray]:
    if time is None:
        return np.zeros(1), np.ones(1)
    return time.times, time.weights


def save_field(
    field: Union[ScalarField, VectorField], path: Path, role: str = "field"
) -> None:
    """Writes the MSF payload and its JSON sidecar next to it."""
    path = Path(path)
    if isinstance(field, VectorField):
        data = field.stack()
        components = field.dim
        reference = field.components[0]
    else:
        data = field.data
        components = None
        reference = field
    if data.ndim > MSF_MAX_RANK:
        raise FormatError(f"Rank {data.ndim} exceeds the MSF limit {MSF_MAX_RANK}")
    header = struct.pack("<4sII", MSF_MAGIC, MSF_VERSION, data.ndim)
    header += struct.pack(f"<{data.ndim}Q", *data.shape)
    header += struct.pack("<B", MSF_DTYPE_F64)
    path.parent.mkdir(exist_ok=True, parents=True)
    path.write_bytes(header + np.ascontiguousarray(data, dtype="<f8").tobytes())
    time = reference.time
    sidecar = {
        "spacing": list(reference.grid.h),
        "periodic": list(reference.grid.periodic),
        "origin": list(reference.grid.origin),
        "t0": None if time is None else time.t0,
        "dt": None if time is None else time.dt,
        "field_role": role,
        "components": components,
        "extension": reference.extension,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=4))


def load_field(path: Path) -> Union[ScalarField, VectorField]:
    path = Path(path)
    if not path.is_file():
        raise OSError(f"{path} could not be found")
    raw = path.read_bytes()
    if len(raw) < 12:
        raise TruncationError(f"{path} is too short for an MSF header")
    magic, version, rank = struct.unpack_from("<4sII", raw, 0)
    if magic != MSF_MAGIC:
        raise FormatError(f"{path} has magic {magic!r}, expected {MSF_MAGIC!r}")
    if version != MSF_VERSION:
        raise FormatError(f"{path} has unsupported MSF version {version}")
    if not 1 <= rank <= MSF_MAX_RANK:
        raise FormatError(f"{path} has invalid rank {rank}")
    offset = 12 + 8 * rank + 1
    if len(raw) < offset:
        raise TruncationError(f"{path} ends inside the MSF header")
    dims = struct.unpack_from(f"<{rank}Q", raw, 12)
    (dtype,) = struct.unpack_from("<B", raw, 12 + 8 * rank)
    if dtype != MSF_DTYPE_F64:
        raise FormatError(f"{path} has unsupported dtype code {dtype}")
    if any(d == 0 for d in dims):
        raise FormatError(f"{path} has an empty dimension in {dims}")
    expected = 8 * int(np.prod(dims))
    if len(raw) - offset != expected:
        raise TruncationError(
            f"{path} holds {len(raw) - offset} payload bytes, dims {dims} need {expected}"
        )
    data = np.frombuffer(raw, dtype="<f8", offset=offset).reshape(dims)

    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.is_file():
        raise FormatError(f"{path} has no sidecar {sidecar_path.name}")
    try:
        sidecar = json.loads(sidecar_path.read_text())
        spacing = sidecar["spacing"]
        periodic = sidecar["periodic"]
    except (ValueError, KeyError) as e:
        raise FormatError(f"{sidecar_path} is not a valid sidecar: {e}") from None
    components = sidecar.get("components")
    has_time = sidecar.get("dt") is not None
    leading = int(components is not None) + int(has_time)
    if rank != leading + len(spacing):
        raise FormatError(
            f"{path} has rank {rank} but the sidecar describes {leading + len(spacing)} axes"
        )
    spatial = dims[leading:]
    grid = GridSpec(spatial, spacing, periodic, sidecar.get("origin"))
    time = None
    if has_time:
        time = TimeSpec(dims[leading - 1], sidecar["dt"], sidecar.get("t0") or 0.0)
    extension = sidecar.get("extension")
    if components is not None:
        if dims[0] != components:
            raise FormatError(f"{path} stores {dims[0]} components, sidecar says {components}")
        return VectorField(
            tuple(ScalarField(grid, data[c], time, extension) for c in range(components))
        )
    return ScalarField(grid, data, time, extension)


def r_star(
    t: float, x: Sequence[float], omega: GridSpec, lipschitz: float = 0.0, r0: float = 1.0
) -> float:
    """min(sqrt t, dist(x, boundary), r0) / (L + 4)"""
    if not t > 0:
        raise DomainError(f"r_star needs t > 0, got t={t}")
    if not r0 > 0:
        raise ParameterError(f"r0 must be positive, got {r0}")
    dist = float(omega.dist_to_boundary(np.asarray(x, dtype=float)))
    return min(math.sqrt(t), dist, r0) / (lipschitz + 4.0)


def r_star_values(
    t: np.ndarray, dist: np.ndarray, lipschitz: float = 0.0, r0: float = 1.0
) -> np.ndarray:
    """Vectorised r_star from times and precomputed boundary distances."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("r_star needs t > 0 everywhere")
    return np.minimum(np.minimum(np.sqrt(t), dist), r0) / (lipschitz + 4.0)


def parabolic_distance(p1, p2, grid: Optional[GridSpec] = None) -> float:
    (t1, x1), (t2, x2) = p1, p2
    delta = np.atleast_1d(np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float))
    if grid is not None:
        delta = grid.wrap(delta[None])[0]
    return math.sqrt(abs(t1 - t2) + float(np.dot(delta, delta)))


def iter_slices(field: ScalarField) -> Iterator[Tuple[float, np.ndarray]]:
    times = np.zeros(1) if field.time is None else field.time.times
    for t, values in zip(times, field.slices()):
        yield float(t), values


def r_star_field(
    grid: GridSpec, time: TimeSpec, lipschitz: float = 0.0, r0: float = 1.0
) -> np.ndarray:
    """r_star at every (slice, cell centre), shape (nt, *n); zero on slices with t <= 0."""
    if not r0 > 0:
        raise ParameterError(f"r0 must be positive, got {r0}")
    dist = grid.dist_to_boundary(grid.points()).reshape(grid.shape)
    root = np.sqrt(np.clip(time.times, 0.0, None)).reshape((-1,) + (1,) * grid.rank)
    return np.minimum(np.minimum(root, dist), r0) / (lipschitz + 4.0)
