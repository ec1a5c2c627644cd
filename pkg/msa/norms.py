"""
Weak, strong, Lorentz, mixed and nested norms of sampled functions.

Every norm is computed from the exact distribution function of a finite sample:
values are sorted once, ties are grouped and cumulative weights give the measure
of each superlevel set.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np

from msa.field_core import GraphFamily, GridSpec, ScalarField, TimeSpec
from msa.utils import DomainError, ParameterError

logger = logging.getLogger(__name__)

SampledFunction = Union[ScalarField, Callable[[float, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class LorentzParams:
    q1: float
    q2: float = math.inf

    def __post_init__(self):
        q1, q2 = float(self.q1), float(self.q2)
        if not q1 > 0:
            raise ParameterError(f"Primary exponent must be positive, got {q1}")
        if not q2 > 0:
            raise ParameterError(f"Secondary exponent must be positive, got {q2}")
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "q2", q2)

    @property
    def kind(self) -> str:
        if math.isinf(self.q1):
            return "sup"
        if math.isinf(self.q2):
            return "weak"
        if self.q1 == self.q2:
            return "strong"
        return "lorentz"


WEAK_L1 = LorentzParams(1.0)
SUP = LorentzParams(math.inf)


@dataclass(frozen=True, eq=False)
class MeasuredSample:
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.abs(np.asarray(self.values, dtype=float).ravel())
        weights = np.broadcast_to(
            np.asarray(self.weights, dtype=float), np.shape(self.values)
        ).ravel()
        if np.isnan(values).any():
            raise ParameterError("Sample values must not be NaN")
        if weights.size and not (np.all(weights > 0) and np.all(np.isfinite(weights))):
            raise ParameterError("Sample weights must be positive and finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights.copy())

    @classmethod
    def from_field(cls, field: ScalarField) -> "MeasuredSample":
        weights = field.grid.cell_volume
        if field.time is not None:
            weights = weights * field.time.dt
        return cls(field.data, np.full(field.data.shape, weights))

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return self.values.size


def _distribution(sample: MeasuredSample) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct positive values in descending order and the measure of {|f| >= value}."""
    order = np.argsort(-sample.values, kind="stable")
    values = sample.values[order]
    cumulative = np.cumsum(sample.weights[order])
    last = np.r_[values[1:] != values[:-1], True]
    values, cumulative = values[last], cumulative[last]
    positive = values > 0
    return values[positive], cumulative[positive]


def weak_norm(sample: MeasuredSample, q1: float) -> float:
    """sup_v v * mu(|f| >= v)^(1/q1) over the sample values."""
    if not 0 < q1 < math.inf:
        raise ParameterError(f"Weak norm exponent must be finite and positive, got {q1}")
    if len(sample) == 0:
        return 0.0
    if np.isinf(sample.values).any():
        return math.inf
    values, measure = _distribution(sample)
    if values.size == 0:
        return 0.0
    return float(np.max(values * measure ** (1.0 / q1)))


def lorentz_norm(sample: MeasuredSample, params: LorentzParams) -> float:
    """
    (q1 * int_0^inf mu(|f| > l)^(q2/q1) l^(q2-1) dl)^(1/q2), integrated exactly:
    the distribution function is constant between consecutive sample values.
    """
    q1, q2 = params.q1, params.q2
    if math.isinf(q1) or math.isinf(q2):
        raise ParameterError("lorentz_norm needs finite exponents, use norm() instead")
    if len(sample) == 0:
        return 0.0
    if np.isinf(sample.values).any():
        return math.inf
    values, measure = _distribution(sample)
    if values.size == 0:
        return 0.0
    powered = values ** q2
    steps = powered - np.r_[powered[1:], 0.0]
    total = (q1 / q2) * np.sum(measure ** (q2 / q1) * steps)
    return float(total ** (1.0 / q2))


def strong_norm(sample: MeasuredSample, p: float) -> float:
    if not p > 0:
        raise ParameterError(f"Exponent must be positive, got {p}")
    if len(sample) == 0:
        return 0.0
    if math.isinf(p):
        return float(sample.values.max())
    if np.isinf(sample.values).any():
        return math.inf
    return float(np.sum(sample.weights * sample.values ** p) ** (1.0 / p))


def norm(sample: MeasuredSample, params: LorentzParams) -> float:
    kind = params.kind
    if kind == "sup":
        return strong_norm(sample, math.inf)
    if kind == "weak":
        return weak_norm(sample, params.q1)
    if kind == "strong":
        return strong_norm(sample, params.q1)
    return lorentz_norm(sample, params)


def graph_measure(gamma: GraphFamily, t_index: int) -> np.ndarray:
    """Surface weights of the graph cells of slice t_index, flattened row-major."""
    if not 0 <= t_index < gamma.nt:
        raise ParameterError(f"Time index {t_index} outside 0..{gamma.nt - 1}")
    return (gamma.cell_volumes() * gamma.slope_factor(t_index)).ravel()


def graph_values(
    f: SampledFunction, gamma: GraphFamily, t_index: int, nearest: bool = False
) -> np.ndarray:
    """
    Values of f on the graph points of one slice. ScalarFields are interpolated
    multilinearly (or read at the nearest cell with ``nearest``), callables get
    (t, points).
    """
    points = gamma.points(t_index)
    t = float(gamma.times[t_index])
    if callable(f) and not isinstance(f, ScalarField):
        return np.asarray(f(t, points), dtype=float).ravel()
    if nearest:
        flat, inside = f.grid.nearest_index(points)
        if f.time is None:
            values = f.data.ravel()[flat]
        else:
            k = int(round((t - f.time.t0) / f.time.dt))
            if not 0 <= k < f.time.nt:
                return np.zeros(len(points))
            values = f.data.reshape(f.time.nt, -1)[k, flat]
        return np.where(inside, values, 0.0)
    return f.sample(points, t)


def slice_norms(
    f: SampledFunction, gamma: GraphFamily, px: LorentzParams, nearest: bool = False
) -> np.ndarray:
    """Inner norm on (Gamma_t, mu_t) for every slice, in ascending time order."""
    return np.array(
        [
            norm(
                MeasuredSample(
                    graph_values(f, gamma, k, nearest), graph_measure(gamma, k)
                ),
                px,
            )
            for k in range(gamma.nt)
        ]
    )


def nested_norm(
    inner: np.ndarray, time_weights: np.ndarray, pt: LorentzParams
) -> float:
    """Outer norm in t of per-slice norms, read as a step function in t."""
    return norm(MeasuredSample(inner, time_weights), pt)


def mixed_norm(
    f: SampledFunction,
    gamma: GraphFamily,
    pt: LorentzParams,
    px: LorentzParams,
    nearest: bool = False,
) -> float:
    return nested_norm(slice_norms(f, gamma, px, nearest), gamma.time_weights, pt)


def joint_norm(
    f: SampledFunction, gamma: GraphFamily, params: LorentzParams, nearest: bool = False
) -> float:
    """Norm over mu_T = mu_t dt, treating (t, x) jointly."""
    values, weights = [], []
    for k in range(gamma.nt):
        values.append(graph_values(f, gamma, k, nearest))
        weights.append(graph_measure(gamma, k) * gamma.time_weights[k])
    return norm(MeasuredSample(np.concatenate(values), np.concatenate(weights)), params)


def interpolation_gap(
    sample: MeasuredSample, q0: float, q1: float, theta: float, weak: bool = True
) -> float:
    """
    Ratio ||f||_{q_theta} / (||f||_{q0}^(1-theta) ||f||_{q1}^theta) with
    1/q_theta = (1-theta)/q0 + theta/q1; never exceeds 1.
    """
    q_theta = 1.0 / ((1.0 - theta) / q0 + theta / q1)
    measure = weak_norm if weak else strong_norm
    rhs = measure(sample, q0) ** (1.0 - theta) * measure(sample, q1) ** theta
    lhs = measure(sample, q_theta)
    if rhs == 0:
        return 0.0
    return lhs / rhs


def concentrating_profile(epsilon: float) -> Callable[[float, np.ndarray], np.ndarray]:
    """u1(t, x) = exp(t/eps) on x <= exp(-t/eps), zero elsewhere."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")

    def u1(t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        x = x[..., 0] if x.ndim == 2 else x
        return np.where(x <= np.exp(-t / epsilon), np.exp(t / epsilon), 0.0)

    return u1


def hyperbolic_profile(t, x) -> np.ndarray:
    """u2(t, x) = 1 / (t x)"""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    x = x[..., 0] if x.ndim == 2 else x
    return 1.0 / (t * x)


def counterexample_pair(
    epsilon: float, resolution: Tuple[int, int] = (512, 512)
) -> Tuple[ScalarField, ScalarField]:
    """u1 and u2 sampled at the cell centres of a uniform grid on (0,1)_t x (0,1)_x."""
    nt, nx = resolution
    grid = GridSpec((nx,), (1.0 / nx,), (False,), (0.0,))
    time = TimeSpec(nt, 1.0 / nt, 0.5 / nt)
    t = time.times[:, None]
    x = grid.axes()[0][None, :]
    u1 = concentrating_profile(epsilon)(t, x)
    u2 = hyperbolic_profile(t, x)
    return ScalarField(grid, u1, time), ScalarField(grid, u2, time)


def graded_edges(
    smallest: float = 1e-6, ratio: float = 1.01, max_width: float = 1e-3
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cell edges on [0, 1] growing geometrically from ``smallest`` until the width
    reaches ``max_width``, uniform afterwards. Sample points are geometric cell
    midpoints, with the first cell read at edge_1 / sqrt(ratio).
    """
    if not (0 < smallest < max_width < 1 and ratio > 1):
        raise ParameterError("Need 0 < smallest < max_width < 1 and ratio > 1")
    edges = [0.0, smallest]
    while edges[-1] < 1.0:
        width = min((edges[-1] - edges[-2]) * ratio, max_width)
        if edges[-1] == smallest:
            width = smallest * (ratio - 1.0)
        edges.append(edges[-1] + width)
    edges = np.array(edges)
    edges[-1] = 1.0
    if edges[-1] - edges[-2] < 0.5 * max_width:
        edges = np.delete(edges, -2)
    points = np.sqrt(edges[1:] * np.maximum(edges[:-1], 1e-300))
    points[0] = edges[1] / math.sqrt(ratio)
    return edges, points


def graded_unit_graph(
    smallest: float = 1e-6, ratio: float = 1.01, max_width: float = 1e-3
) -> GraphFamily:
    """
    (0,1)_t x (0,1)_x with both axes graded towards 0, for profiles whose support
    or singularity concentrates at t = 0 or x = 0.
    """
    edges, points = graded_edges(smallest, ratio, max_width)
    domain = GridSpec.box(2, 0.0, 1.0)
    nx = len(points)
    return GraphFamily(
        domain,
        (0,),
        (edges,),
        np.zeros((nx, nx, 0)),
        points,
        np.diff(edges),
        0.0,
        base_points=(points,),
    )


@dataclass(frozen=True)
class InterpolationResult:
    p: float
    q: float
    measured: float
    bound: float

    @property
    def ratio(self) -> float:
        if self.bound == 0:
            return 0.0
        return self.measured / self.bound


def interpolate_nested(
    f: SampledFunction,
    gamma: GraphFamily,
    branch: str,
    exponent: float,
    target: float,
    nearest: bool = False,
) -> InterpolationResult:
    """
    Nested weak norm L^{p,inf}_t L^{q,inf}_x against its interpolation bound.

    Branch "a": exponent = q0, target = q with (1 - q0)/p + q0/q = 1, bounded by
    ||f||_{L^{1,inf}}^(1/p) ||f||_{L^inf_t L^{q0,inf}_x}^(1 - 1/p).
    Branch "b": exponent = p0, target = p with p0/p + (1 - p0)/q = 1, bounded by
    ||f||_{L^{1,inf}}^(1/q) ||f||_{L^{p0,inf}_t L^inf_x}^(1 - 1/q).
    """
    if branch == "a":
        q0, q = exponent, target
        if not 0 < q0 < q < 1:
            raise DomainError(f"Branch a needs 0 < q0 < q < 1, got q0={q0}, q={q}")
        p = (1.0 - q0) / (1.0 - q0 / q)
        if not 1 < p < math.inf:
            raise DomainError(f"Derived exponent p={p} outside (1, inf)")
        joint = joint_norm(f, gamma, WEAK_L1, nearest)
        endpoint = mixed_norm(f, gamma, SUP, LorentzParams(q0), nearest)
        bound = joint ** (1.0 / p) * endpoint ** (1.0 - 1.0 / p)
    elif branch == "b":
        p0, p = exponent, target
        if not 0 < p0 < p < 1:
            raise DomainError(f"Branch b needs 0 < p0 < p < 1, got p0={p0}, p={p}")
        q = (1.0 - p0) / (1.0 - p0 / p)
        if not 1 < q < math.inf:
            raise DomainError(f"Derived exponent q={q} outside (1, inf)")
        joint = joint_norm(f, gamma, WEAK_L1, nearest)
        endpoint = mixed_norm(f, gamma, LorentzParams(p0), SUP, nearest)
        bound = joint ** (1.0 / q) * endpoint ** (1.0 - 1.0 / q)
    else:
        raise DomainError(f"Unknown interpolation branch {branch!r}")
    measured = mixed_norm(f, gamma, LorentzParams(p), LorentzParams(q), nearest)
    logger.debug(f"Interpolation branch {branch}: p={p}, q={q}, {measured} <= {bound}")
    return InterpolationResult(p, q, measured, bound)
