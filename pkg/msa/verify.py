"""
Verification suites. Every suite draws its random fields from
``np.random.default_rng([seed, trial])``, evaluates both sides of the inequalities
it covers on every configured grid and collects the rows in a ReportSet.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas
from tqdm import tqdm

from msa.cantor import cantor_growth, cantor_lower_bound, growth_slope
from msa.field_core import GraphFamily, GridSpec, ScalarField, TimeSpec, VectorField
from msa.lagrangian import (
    REG_EQ,
    AdmissibilityParams,
    DriftFlow,
    SkewedAverager,
    capped_scale_op,
    drift_maximal,
    make_cylinder,
    trajectory_separation_check,
)
from msa.multiscale import (
    CONTINUUM,
    SPACE,
    SPACETIME,
    EulerianAverager,
    ScaleLadder,
    level_set_measure,
    maximal_function,
    scale_op,
    zero_average_measure,
)
from msa.norms import (
    SUP,
    WEAK_L1,
    LorentzParams,
    MeasuredSample,
    concentrating_profile,
    graded_unit_graph,
    graph_measure,
    graph_values,
    hyperbolic_profile,
    interpolate_nested,
    joint_norm,
    mixed_norm,
    norm,
    slice_norms,
    strong_norm,
    weak_norm,
)
from msa.ns_synth import (
    ENERGY_TOL,
    TWO_PI,
    FlowSnapshotSeries,
    PivotConfig,
    PivotFields,
    blowup_norm_comparison,
    dissipation_norm,
    fitted_regularity_constants,
    flow_checks,
    pivot_fields,
    pressure_hessian_norm,
    random_solenoidal,
    regularity_rows,
    scale_fields,
    spectral_solve,
    taylor_green,
    theorem_ratios,
    velocity_derivative,
)
from msa.report import CHECK, INFO, RATIO, ReportRow, ReportSet, ratio
from msa.utils import (
    DEFAULT_REFINEMENT_BAND,
    DEFAULT_SEED,
    MAX_SUITE_CELLS,
    ConfigurationError,
    ParameterError,
    ResourceError,
    UsageError,
    thread_limit,
)

logger = logging.getLogger(__name__)

SUITES = (
    "lemmas-space",
    "trace-space",
    "trace-spacetime",
    "anisotropic",
    "lagrangian",
    "cantor",
    "lorentz",
    "ns-theorems",
)

DEFAULT_GRIDS = {
    "lemmas-space": (32, 64),
    "trace-space": (32, 64, 128),
    "trace-spacetime": (32, 64),
    "anisotropic": (32, 64),
    "lagrangian": (32, 64),
    "cantor": (),
    "lorentz": (),
    "ns-theorems": (32, 64),
}
DEFAULT_TRIALS = {
    "lemmas-space": 30,
    "trace-space": 20,
    "trace-spacetime": 20,
    "anisotropic": 20,
    "lagrangian": 10,
    "cantor": 1,
    "lorentz": 1,
    "ns-theorems": 1,
}

# Typical trigger radius of the random fields; amplitudes scale like TYPICAL_SCALE^-alpha
TYPICAL_SCALE = 0.15
# Time span of the random spacetime fields and the slice spacing in units of h^2
SPACETIME_SPAN = 0.25
SLICES_PER_H2 = 0.5
FIXED_TIMES = 5
# Dyadic radii of the level-set rows
LEVEL_SET_RADII = (0.125, 0.25)
SEPARATION_CYLINDERS = 100
CAPPED_PAIRS = 2
LORENTZ_EPSILONS = (0.2, 0.1, 0.05)
LORENTZ_RATIOS = (1.02, 1.01)
NS_NU = 0.1
NS_TIMES = 8
NS_DT = 0.125
NS_PIVOTS = PivotConfig(eta=1e-3, eta_bar=1e-3, eps0=1e-3, eta0=1.0)
NS_RHO_MIN = 0.02
NS_RANDOM_RUNS = 20
NS_RANDOM_MODES = 3
NS_RANDOM_SPAN = 0.5


@dataclass(frozen=True)
class SuiteConfig:
    suite: str
    grids: Tuple[int, ...] = ()
    trials: Optional[int] = None
    seed: int = DEFAULT_SEED
    band: float = DEFAULT_REFINEMENT_BAND
    output: Optional[Path] = None
    depth: int = 8
    epsilon: float = 0.1

    def __post_init__(self):
        if self.suite not in SUITES:
            raise UsageError(f"Unknown suite {self.suite!r}, choose from {', '.join(SUITES)}")
        grids = tuple(sorted(set(int(g) for g in self.grids))) or DEFAULT_GRIDS[self.suite]
        if any(g < 4 or g % 2 for g in grids):
            raise ConfigurationError(f"Grid sizes must be even and at least 4, got {grids}")
        trials = DEFAULT_TRIALS[self.suite] if self.trials is None else int(self.trials)
        if trials < 1:
            raise ConfigurationError(f"Need at least one trial, got {trials}")
        if not 0 < self.band < 1:
            raise ConfigurationError(f"The refinement band must lie in (0, 1), got {self.band}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "trials", trials)
        if len(grids) == 1:
            logger.warning(f"{self.suite} runs on a single grid, refinement is not checked")

    def rng(self, trial: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, trial])


@dataclass(frozen=True)
class BumpFamily:
    """
    Sum of Gaussian bumps, optionally modulated by Gaussian pulses in time. The bumps
    are drawn once and can be sampled on any grid, so one trial is the same function
    at every refinement level.
    """

    centers: np.ndarray
    widths: np.ndarray
    amplitudes: np.ndarray
    pulse_centers: Optional[np.ndarray] = None
    pulse_widths: Optional[np.ndarray] = None

    @classmethod
    def draw(
        cls,
        rng: np.random.Generator,
        rank: int,
        count: int = 4,
        spacetime: bool = False,
        span: float = SPACETIME_SPAN,
    ) -> "BumpFamily":
        centers = rng.uniform(0.2, 0.8, size=(count, rank))
        widths = rng.uniform(0.05, 0.15, size=count)
        amplitudes = rng.uniform(1.0, 4.0, size=count)
        if not spacetime:
            return cls(centers, widths, amplitudes)
        pulse_centers = rng.uniform(0.3 * span, 0.9 * span, size=count)
        pulse_widths = rng.uniform(0.1 * span, 0.3 * span, size=count)
        return cls(centers, widths, amplitudes, pulse_centers, pulse_widths)

    @property
    def spacetime(self) -> bool:
        return self.pulse_centers is not None

    def sample(
        self, grid: GridSpec, time: Optional[TimeSpec] = None, level: float = 1.0
    ) -> ScalarField:
        points = grid.points()
        data = np.zeros(((time.nt,) if time is not None else ()) + (len(points),))
        for j, center in enumerate(self.centers):
            delta = grid.wrap(points - center)
            profile = self.amplitudes[j] * np.exp(
                -np.sum(delta ** 2, axis=-1) / (2 * self.widths[j] ** 2)
            )
            if time is None:
                data += profile
                continue
            if self.spacetime:
                pulse = np.exp(
                    -((time.times - self.pulse_centers[j]) ** 2) / (2 * self.pulse_widths[j] ** 2)
                )
            else:
                pulse = np.ones(time.nt)
            data += pulse[:, None] * profile[None]
        shape = ((time.nt,) if time is not None else ()) + grid.shape
        return ScalarField(grid, level * data.reshape(shape), time)


def _check_cells(grid: GridSpec, nt: int = 1):
    cells = grid.size * nt
    if cells > MAX_SUITE_CELLS:
        raise ResourceError(
            f"A field with {cells} cells exceeds the suite limit of {MAX_SUITE_CELLS}"
        )


def unit_torus(n: int, rank: int = 2) -> GridSpec:
    grid = GridSpec.torus(n, 1.0, rank=rank)
    _check_cells(grid)
    return grid


def spacetime_axis(n: int, span: float = SPACETIME_SPAN) -> TimeSpec:
    """Slices spaced SLICES_PER_H2 h^2 apart on (0, span], h = 1/n."""
    dt = SLICES_PER_H2 / (n * n)
    nt = max(int(round(span / dt)), 2)
    return TimeSpec(nt, span / nt, span / nt)


def _map_trials(function: Callable[[int], List[ReportRow]], trials: int, desc: str):
    """Rows of every trial, ordered by trial index whatever the thread count."""
    workers = thread_limit() or 1
    indices = range(trials)
    if workers == 1:
        results = [function(i) for i in tqdm(indices, desc=desc, disable=None)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            mapped = executor.map(function, indices)
            results = list(tqdm(mapped, total=trials, desc=desc, disable=None))
    return [row for rows in results for row in rows]


def _row(name, lhs, rhs, anchor, kind=RATIO, grid=0, trial=0, **params) -> ReportRow:
    return ReportRow(name, lhs, rhs, anchor, kind, grid, trial, params)


# lemmas-space


def _violation_count(values: np.ndarray) -> int:
    return int(np.count_nonzero(values))


def quasiconvexity_violations(
    f: ScalarField, g: ScalarField, theta: float, alpha: float, ladder: ScaleLadder
) -> int:
    """A((1 - theta) f + theta g) <= max(A f, A g) 2^(alpha/k) at every point."""
    mixed = f.with_data((1 - theta) * f.data + theta * g.data)
    a_f = scale_op(f, alpha, ladder, certify=False).a
    a_g = scale_op(g, alpha, ladder, certify=False).a
    a_h = scale_op(mixed, alpha, ladder, certify=False).a
    slack = 2.0 ** (alpha / ladder.per_octave) * (1 + 1e-12)
    return _violation_count(a_h > np.maximum(a_f, a_g) * slack)


def jensen_violations(f: ScalarField, p: float, alpha: float, ladder: ScaleLadder) -> int:
    """S_alpha(f) >= S_{p alpha}(f^p) 2^(-1/k) at every point."""
    s_f = scale_op(f, alpha, ladder, certify=False).s
    s_p = scale_op(f.with_data(f.data ** p), p * alpha, ladder, certify=False).s
    bad = np.isfinite(s_f) & ~np.isfinite(s_p)
    both = np.isfinite(s_f) & np.isfinite(s_p)
    bad[both] = s_f[both] < s_p[both] * 2.0 ** (-1.0 / ladder.per_octave) * (1 - 1e-12)
    return _violation_count(bad)


def monotonicity_violations(
    f: ScalarField, g: ScalarField, alpha: float, ladder: ScaleLadder
) -> int:
    """f <= g implies S(g) <= S(f) 2^(1/k)."""
    if np.any(g.data < f.data):
        raise ParameterError("Monotonicity needs f <= g pointwise")
    s_f = scale_op(f, alpha, ladder, certify=False).s
    s_g = scale_op(g, alpha, ladder, certify=False).s
    with np.errstate(invalid="ignore"):
        bad = s_g > s_f * 2.0 ** (1.0 / ladder.per_octave) * (1 + 1e-12)
    return _violation_count(bad)


def maximal_domination_violations(f: ScalarField, alpha: float, ladder: ScaleLadder) -> int:
    """
    A f <= M f with the per-point widening 2^(alpha/k) V(r_up) / V(hi), r_up the
    smallest rung at or above the trigger radius hi; Sing-candidates need no widening.
    """
    sf = scale_op(f, alpha, ladder, certify=False)
    maximal = maximal_function(f, ladder).data
    averager = EulerianAverager(f, SPACE, rho_max=2 * ladder.rho_max)
    rungs = ladder.rungs()
    hi = sf.hi.ravel()
    tolerance = np.ones(hi.size)
    regular = ~sf.sing.ravel() & ~sf.truncated.ravel()
    for value in np.unique(hi[regular]):
        up = rungs[min(np.searchsorted(rungs, value * (1 - 1e-12)), rungs.size - 1)]
        group = regular & (hi == value)
        tolerance[group] = (
            2.0 ** (alpha / ladder.per_octave) * averager.volume(up) / averager.volume(value)
        )
    bound = maximal.ravel() * tolerance * (1 + 1e-12)
    return _violation_count(sf.a.ravel() > bound)


def average_identity_violations(
    f: ScalarField, alpha: float, ladder: ScaleLadder
) -> Tuple[int, float]:
    """
    Points with rho_min < S < inf where |f_S - S^-alpha| > 2 (step - 1) S^-alpha,
    and the worst relative residual seen.
    """
    residual = scale_op(f, alpha, ladder).residual
    finite = residual[np.isfinite(residual)]
    worst = float(finite.max()) if finite.size else 0.0
    tolerance = 2 * (ladder.step - 1) * (1 + 1e-12)
    return _violation_count(finite > tolerance), worst


def constant_field_violations(grid: GridSpec, c: float, alpha: float, ladder: ScaleLadder) -> int:
    """f = c gives S = c^(-1/alpha) within one ladder step."""
    f = ScalarField(grid, np.full(grid.shape, c))
    s = scale_op(f, alpha, ladder, certify=False).s
    target = c ** (-1.0 / alpha)
    return _violation_count(np.abs(np.log(s / target)) > math.log(ladder.step) + 1e-12)


def dirac_field(n: int, rank: int = 2, extent: float = 2.5) -> ScalarField:
    """Mass |B_1| in the cell centred on the origin."""
    grid = GridSpec.centered(n, extent, rank)
    data = np.zeros(grid.shape)
    centre = tuple(v // 2 for v in grid.n)
    data[centre] = math.pi ** (rank / 2) / math.gamma(rank / 2 + 1) / grid.cell_volume
    return ScalarField(grid, data)


def dirac_violations(n: int, alpha: float = 1.0, rank: int = 2) -> Tuple[int, int]:
    """
    S(x) = |x| for the Dirac mass under the continuum normalisation, checked for
    0.1 <= |x| <= 0.9 within two ladder steps plus 2h. Returns violations and points.
    """
    f = dirac_field(n, rank)
    grid = f.grid
    ladder = ScaleLadder(min(grid.h), 1.2)
    s = scale_op(f, alpha, ladder, normalization=CONTINUUM, certify=False).s.ravel()
    radius = np.linalg.norm(grid.points(), axis=-1)
    use = (radius >= 0.1) & (radius <= 0.9)
    tolerance = 2 * (ladder.step - 1) * radius[use] + 2 * max(grid.h)
    return _violation_count(np.abs(s[use] - radius[use]) > tolerance), int(use.sum())


def lemmas_space(config: SuiteConfig) -> List[ReportRow]:
    anchor_q = "quasiconvexity of the averaging operator"
    anchor_j = "Jensen scaling of the scale operator"
    anchor_m = "monotonicity of the scale operator"
    anchor_d = "averaging operator dominated by the maximal function"
    anchor_a = "average over a ball at the critical scale"

    def trial(index: int) -> List[ReportRow]:
        rng = config.rng(index)
        f_bumps = BumpFamily.draw(rng, 2)
        g_bumps = BumpFamily.draw(rng, 2)
        extra = BumpFamily.draw(rng, 2, count=1)
        alpha = float(rng.uniform(0.5, 2.0))
        theta = float(rng.uniform(0.0, 1.0))
        p = float(rng.choice([1.5, 2.0, 3.0]))
        level = TYPICAL_SCALE ** -alpha
        rows = []
        for n in config.grids:
            grid = unit_torus(n)
            ladder = ScaleLadder.for_grid(grid)
            f = f_bumps.sample(grid, level=level)
            g = g_bumps.sample(grid, level=level)
            bumped = f.with_data(f.data + extra.sample(grid, level=level).data)
            params = {"alpha": alpha}
            rows.append(
                _row(
                    "quasiconvexity",
                    quasiconvexity_violations(f, g, theta, alpha, ladder),
                    0,
                    anchor_q,
                    CHECK,
                    n,
                    index,
                    theta=theta,
                    **params,
                )
            )
            rows.append(
                _row(
                    "jensen scaling",
                    jensen_violations(f, p, alpha, ladder),
                    0,
                    anchor_j,
                    CHECK,
                    n,
                    index,
                    p=p,
                    **params,
                )
            )
            rows.append(
                _row(
                    "monotonicity",
                    monotonicity_violations(f, bumped, alpha, ladder),
                    0,
                    anchor_m,
                    CHECK,
                    n,
                    index,
                    **params,
                )
            )
            rows.append(
                _row(
                    "maximal domination",
                    maximal_domination_violations(f, alpha, ladder),
                    0,
                    anchor_d,
                    CHECK,
                    n,
                    index,
                    **params,
                )
            )
            violations, worst = average_identity_violations(f, alpha, ladder)
            rows.append(
                _row(
                    "average identity",
                    violations,
                    0,
                    anchor_a,
                    CHECK,
                    n,
                    index,
                    worst=worst,
                    tolerance=2 * (ladder.step - 1),
                    **params,
                )
            )
        return rows

    rows = _map_trials(trial, config.trials, "lemmas-space")
    for n in config.grids:
        grid = unit_torus(n)
        ladder = ScaleLadder.for_grid(grid)
        rows.append(
            _row(
                "constant field",
                constant_field_violations(grid, 4.0, 1.0, ladder),
                0,
                "constant fields sit exactly at their threshold",
                CHECK,
                n,
            )
        )
        violations, points = dirac_violations(n)
        rows.append(
            _row(
                "dirac scale",
                violations,
                0,
                "the scale of a Dirac mass is the distance to it",
                CHECK,
                n,
                points=points,
            )
        )
    return rows


# trace-space and trace-spacetime


def _graphs(grid: GridSpec, time: Optional[TimeSpec] = None) -> Dict[int, GraphFamily]:
    """d = D (the whole torus) and d = D - 1 (the plane through the middle of axis 0)."""
    level = grid.origin[0] + 0.5 * grid.extent[0] + 0.25 * grid.h[0]
    return {
        grid.rank: GraphFamily.whole_domain(grid, time),
        grid.rank - 1: GraphFamily.hyperplane(grid, 0, level, time),
    }


def _graph_sample(values: ScalarField, gamma: GraphFamily, k: int, exponent: float):
    trace = graph_values(values, gamma, k, nearest=True) ** exponent
    return MeasuredSample(trace, graph_measure(gamma, k))


def trace_space(config: SuiteConfig) -> List[ReportRow]:
    """
    Weak type (p = 1) and strong type (p = 2) traces of A_alpha f on Gamma, plus the
    level sets {rho <= S < 2 rho} of the weak case against rho^(d - D + alpha) ||f||_1.
    """
    rank = 2
    cases = (("weak", 1.0, 2.0), ("strong", 2.0, 1.5))

    def trial(index: int) -> List[ReportRow]:
        bumps = BumpFamily.draw(config.rng(index), rank)
        rows = []
        for n in config.grids:
            grid = unit_torus(n, rank)
            ladder = ScaleLadder.for_grid(grid)
            graphs = _graphs(grid)
            for kind, p, alpha in cases:
                f = bumps.sample(grid, level=TYPICAL_SCALE ** -alpha)
                sf = scale_op(f, alpha, ladder, certify=False)
                rhs = strong_norm(MeasuredSample.from_field(f), p)
                for d, gamma in graphs.items():
                    exponent = 1 - (rank - d) / (p * alpha)
                    sample = _graph_sample(f.with_data(sf.a), gamma, 0, exponent)
                    lhs = weak_norm(sample, 1.0) if p == 1 else strong_norm(sample, p)
                    params = {"alpha": alpha, "p": p, "d": d}
                    rows.append(
                        _row(
                            f"space {kind} type d={d}",
                            lhs,
                            rhs,
                            f"{kind}-type trace of the averaging operator in space",
                            RATIO,
                            n,
                            index,
                            **params,
                        )
                    )
                    if p != 1:
                        continue
                    rows += _space_level_rows(sf, gamma, rhs, rank, d, n, index)
        return rows

    return _map_trials(trial, config.trials, "trace-space")


def _space_level_rows(sf, gamma, l1, rank, d, n, index) -> List[ReportRow]:
    anchor = "level sets of the scale function on Gamma"
    rows = []
    for rho in LEVEL_SET_RADII:
        rows.append(
            _row(
                f"space level set d={d}",
                level_set_measure(sf, gamma, rho),
                rho ** (d - rank + sf.alpha) * l1,
                anchor,
                RATIO,
                n,
                index,
                rho=rho,
                d=d,
            )
        )
    rows.append(
        _row(
            f"zero average measure d={d}",
            zero_average_measure(sf, gamma),
            graph_measure(gamma, 0).sum(),
            "A_alpha f vanishes only where S is infinite",
            INFO,
            n,
            index,
            d=d,
        )
    )
    return rows


def _interior_slices(time: TimeSpec, count: int = FIXED_TIMES) -> List[int]:
    return np.unique(np.linspace(time.nt // 4, time.nt - 1, count).round().astype(int)).tolist()


def trace_spacetime(config: SuiteConfig) -> List[ReportRow]:
    """
    Traces on Gamma_T (weak p = 1, strong p = 2) and on the fixed-time slices
    Gamma_t (weak p = 1 with alpha > D - d + 2, strong p = 2 with p alpha > D - d + 2).
    """
    rank = 2
    joint_cases = (("weak", 1.0, 2.0), ("strong", 2.0, 1.5))
    fixed_cases = (("weak", 1.0, 4.0), ("strong", 2.0, 2.0))

    def trial(index: int) -> List[ReportRow]:
        bumps = BumpFamily.draw(config.rng(index), rank, spacetime=True)
        rows = []
        for n in config.grids:
            grid = unit_torus(n, rank)
            time = spacetime_axis(n)
            _check_cells(grid, time.nt)
            ladder = ScaleLadder.for_grid(grid, rho_max=min(0.5, math.sqrt(time.t_last)))
            for d, gamma in _graphs(grid, time).items():
                for kind, p, alpha in joint_cases:
                    f = bumps.sample(grid, time, TYPICAL_SCALE ** -alpha)
                    a = f.with_data(scale_op(f, alpha, ladder, SPACETIME, certify=False).a)
                    exponent = 1 - (rank - d) / (p * alpha)
                    powered = a.with_data(a.data ** exponent)
                    params = LorentzParams(p) if p == 1 else LorentzParams(p, p)
                    rows.append(
                        _row(
                            f"spacetime {kind} type d={d}",
                            joint_norm(powered, gamma, params, nearest=True),
                            strong_norm(MeasuredSample.from_field(f), p),
                            f"{kind}-type trace of the averaging operator on Gamma_T",
                            RATIO,
                            n,
                            index,
                            alpha=alpha,
                            p=p,
                            d=d,
                        )
                    )
                for kind, p, alpha in fixed_cases:
                    f = bumps.sample(grid, time, TYPICAL_SCALE ** -alpha)
                    sf = scale_op(f, alpha, ladder, SPACETIME, certify=False)
                    a = f.with_data(sf.a)
                    if p == 1:
                        rows += _fixed_time_level_rows(f, sf, gamma, rank, d, n, index)
                    exponent = 1 - (rank - d + 2) / (p * alpha)
                    rhs = strong_norm(MeasuredSample.from_field(f), p)
                    for k in _interior_slices(time):
                        sample = _graph_sample(a, gamma, k, exponent)
                        lhs = weak_norm(sample, 1.0) if p == 1 else strong_norm(sample, p)
                        rows.append(
                            _row(
                                f"fixed-time {kind} type d={d}",
                                lhs,
                                rhs,
                                f"{kind}-type trace of the averaging operator on Gamma_t",
                                RATIO,
                                n,
                                index,
                                alpha=alpha,
                                p=p,
                                d=d,
                                t=float(time.times[k]),
                            )
                        )
        return rows

    return _map_trials(trial, config.trials, "trace-spacetime")


def _window_integral(f: ScalarField, p: float, k: int, span: float) -> float:
    """Integral of f^p over (t_k - span, t_k] x domain."""
    time = f.time
    use = (time.times > time.times[k] - span) & (np.arange(time.nt) <= k)
    return float(np.sum(f.data[use] ** p) * f.grid.cell_volume * time.dt)


def _fixed_time_level_rows(f, sf, gamma, rank, d, n, index) -> List[ReportRow]:
    """
    mu-measure of {rho <= S < 2 rho} on Gamma_t against
    rho^(d - D - 2 + alpha) times the integral of f over the window of length 4 rho^2.
    """
    rows = []
    for k in _interior_slices(f.time):
        for rho in LEVEL_SET_RADII:
            window = _window_integral(f, 1.0, k, 4 * rho * rho)
            rows.append(
                _row(
                    f"fixed-time level set d={d}",
                    level_set_measure(sf, gamma, rho, SPACETIME, t_index=k),
                    rho ** (d - rank - 2 + sf.alpha) * window,
                    "level sets of the scale function on Gamma_t",
                    RATIO,
                    n,
                    index,
                    rho=rho,
                    d=d,
                    t=float(f.time.times[k]),
                )
            )
    return rows


# anisotropic


def _exponent(value: float) -> LorentzParams:
    return SUP if math.isinf(value) else LorentzParams(value, value)


@dataclass(frozen=True)
class AnisotropicCase:
    """
    One parameter tuple of the mixed-norm trace bound: ||A f||^lambda in
    L^{p2}_t L^{q2}_x(Gamma_T) (weak where ``weak_t`` / ``weak_x``) against
    ||f||_{L^{p1}_t L^{q1}_x}.
    """

    label: str
    alpha: float
    p1: float
    q1: float
    p2: float
    q2: float
    weak_t: bool = False
    weak_x: bool = False
    joint: bool = False

    def lam(self, rank: int, d: int) -> float:
        inv_r1 = self.alpha - 2.0 / self.p1 - rank / self.q1
        inv_r2 = self.alpha - 2.0 / self.p2 - d / self.q2
        if inv_r1 == 0 or inv_r2 == 0:
            raise ParameterError(f"Case {self.label} has an infinite r")
        return inv_r1 / inv_r2

    def check(self, rank: int, d: int) -> float:
        lam = self.lam(rank, d)
        if not lam > 0:
            raise ParameterError(f"Case {self.label} has lambda = {lam}")
        tol = 1e-12
        if self.p2 < lam * self.p1 - tol or self.q2 < lam * self.q1 - tol:
            raise ParameterError(f"Case {self.label} violates p2 >= lambda p1, q2 >= lambda q1")
        if not 1 <= self.q1 <= self.p1:
            raise ParameterError(f"Case {self.label} violates 1 <= q1 <= p1")
        return lam

    def lhs(self, a: ScalarField, gamma: GraphFamily) -> float:
        if self.joint:
            return joint_norm(a, gamma, LorentzParams(self.p2), nearest=True)
        pt = LorentzParams(self.p2) if self.weak_t else _exponent(self.p2)
        px = LorentzParams(self.q2) if self.weak_x else _exponent(self.q2)
        return mixed_norm(a, gamma, pt, px, nearest=True)

    def rhs(self, f: ScalarField) -> float:
        whole = GraphFamily.whole_domain(f.grid, f.time)
        return mixed_norm(f, whole, _exponent(self.p1), _exponent(self.q1), nearest=True)


# D = 2 and d = 1; lambda follows from r2 = lambda r1
ANISOTROPIC_CASES = (
    AnisotropicCase("(A)(a)", 5.0, 1.0, 1.0, 0.8, 0.8, joint=True),
    AnisotropicCase("(A)(b)", 3.0, 2.0, 2.0, 5.0 / 3.0, 5.0 / 3.0),
    AnisotropicCase("(B)(b)", 4.0, 2.0, 1.0, 2.0, 2.0 / 3.0),
    AnisotropicCase("(C)", 3.0, 2.0, 2.0, math.inf, 1.0, weak_x=True),
)
DRIFT_CASES = ANISOTROPIC_CASES[0], ANISOTROPIC_CASES[2]


def anisotropic(config: SuiteConfig) -> List[ReportRow]:
    rank, d = 2, 1
    for case in ANISOTROPIC_CASES:
        case.check(rank, d)

    def trial(index: int) -> List[ReportRow]:
        bumps = BumpFamily.draw(config.rng(index), rank, spacetime=True)
        rows = []
        for n in config.grids:
            grid = unit_torus(n, rank)
            time = spacetime_axis(n)
            _check_cells(grid, time.nt)
            ladder = ScaleLadder.for_grid(grid, rho_max=min(0.5, math.sqrt(time.t_last)))
            gamma = _graphs(grid, time)[d]
            for case in ANISOTROPIC_CASES:
                lam = case.lam(rank, d)
                f = bumps.sample(grid, time, TYPICAL_SCALE ** -case.alpha)
                a = f.with_data(scale_op(f, case.alpha, ladder, SPACETIME, certify=False).a)
                rows.append(
                    _row(
                        f"mixed trace {case.label}",
                        case.lhs(a, gamma) ** lam,
                        case.rhs(f),
                        f"mixed-norm trace bound, case {case.label}",
                        RATIO,
                        n,
                        index,
                        alpha=case.alpha,
                        lam=lam,
                        p2=case.p2,
                        q2=case.q2,
                    )
                )
        return rows

    return _map_trials(trial, config.trials, "anisotropic")


# lagrangian


def shear_drift(grid: GridSpec, time: TimeSpec, amplitude: float = 0.05) -> VectorField:
    """b = (A sin(2 pi y) (1 + sin(2 pi t) / 2), 0)"""
    y = grid.points()[:, 1].reshape(grid.shape)
    modulation = 1 + 0.5 * np.sin(2 * math.pi * time.times)
    bx = amplitude * modulation[:, None, None] * np.sin(2 * math.pi * y)[None]
    return VectorField.from_array(grid, np.stack([bx, np.zeros_like(bx)]), time)


def zero_drift_gap(f: ScalarField, ladder: ScaleLadder, rng: np.random.Generator) -> float:
    """
    Largest gap between skewed averages with a zero drift and straight Eulerian
    cylinder averages over random anchors, relative to the largest average of the rung.
    """
    grid, time = f.grid, f.time
    zero = VectorField.from_array(grid, np.zeros((grid.rank,) + f.data.shape), time)
    count = min(64, f.data.size)
    flat = rng.choice(f.data.size, size=count, replace=False)
    k, cell = np.unravel_index(flat, (time.nt, grid.size))
    rho_max = 2 * ladder.rho_max
    anchors = (k, grid.points()[cell])
    skewed = SkewedAverager(f, DriftFlow(zero), rho_max=rho_max, anchors=anchors)
    eulerian = EulerianAverager(f, SPACETIME, rho_max=rho_max)
    worst = 0.0
    for rho in ladder.rungs():
        lhs = skewed.at(float(rho), np.arange(count))
        rhs = eulerian.at(float(rho), flat)
        scale = max(float(np.max(np.abs(eulerian.full(float(rho))))), 1e-300)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return worst


def capped_quasiconvexity_violations(
    f: ScalarField,
    g: ScalarField,
    theta: float,
    b: Optional[VectorField],
    alpha: float,
    ladder: ScaleLadder,
    drift_max: Optional[ScalarField] = None,
) -> int:
    """
    A^((1 - theta) f + theta g) <= max(A^ f, A^ g) 2^(2 (alpha + 1) / k) under one drift,
    away from the Sing points of f and g.
    """
    mixed = f.with_data((1 - theta) * f.data + theta * g.data)
    fields = [capped_scale_op(v, b, alpha, ladder, drift_max=drift_max) for v in (f, g, mixed)]
    sf, sg, sh = fields
    regular = (sf.labels >= REG_EQ) & (sg.labels >= REG_EQ)
    slack = 2.0 ** (2 * (alpha + 1) / ladder.per_octave) * (1 + 1e-12)
    bound = np.maximum(sf.a_hat, sg.a_hat) * slack
    return _violation_count(regular & (sh.a_hat > bound))


def lagrangian(config: SuiteConfig) -> List[ReportRow]:
    rank = 2
    anchor_r = "zero drift reduces to straight cylinders"

    def trial(index: int) -> List[ReportRow]:
        rng = config.rng(index)
        bumps = BumpFamily.draw(rng, rank, spacetime=True)
        pairs = [
            (BumpFamily.draw(rng, rank, spacetime=True), float(rng.uniform(0.0, 1.0)))
            for _ in range(CAPPED_PAIRS)
        ]
        rows = []
        for n in config.grids:
            grid = unit_torus(n, rank)
            time = spacetime_axis(n)
            _check_cells(grid, time.nt)
            ladder = ScaleLadder.for_grid(grid, rho_max=min(0.5, math.sqrt(time.t_last)))
            alpha = 2.0
            f = bumps.sample(grid, time, TYPICAL_SCALE ** -alpha)
            eulerian = scale_op(f, alpha, ladder, SPACETIME, certify=False).s
            capped = capped_scale_op(f, None, alpha, ladder)
            same = np.isinf(eulerian) == np.isinf(capped.scale)
            finite = np.isfinite(eulerian) & np.isfinite(capped.scale)
            gap = float(np.max(np.abs(eulerian[finite] - capped.scale[finite]), initial=0.0))
            rows.append(
                _row(
                    "zero drift scale",
                    gap if same.all() else math.inf,
                    1e-12,
                    anchor_r,
                    CHECK,
                    n,
                    index,
                )
            )
            rows.append(
                _row(
                    "zero drift average",
                    zero_drift_gap(f, ladder, rng),
                    1e-12,
                    anchor_r,
                    CHECK,
                    n,
                    index,
                )
            )
            b = shear_drift(grid, time)
            gamma = _graphs(grid, time)[rank - 1]
            drift_max = drift_maximal(b, ladder)
            for pair, (other, theta) in enumerate(pairs):
                g = other.sample(grid, time, TYPICAL_SCALE ** -alpha)
                rows.append(
                    _row(
                        "capped quasiconvexity",
                        capped_quasiconvexity_violations(f, g, theta, b, alpha, ladder, drift_max),
                        0,
                        "quasiconvexity of the capped averaging operator",
                        CHECK,
                        n,
                        index,
                        pair=pair,
                        theta=theta,
                    )
                )
            for case in DRIFT_CASES:
                lam = case.lam(rank, rank - 1)
                f = bumps.sample(grid, time, TYPICAL_SCALE ** -case.alpha)
                sf = capped_scale_op(f, b, case.alpha, ladder, drift_max=drift_max)
                a_lt = f.with_data(sf.a_lt)
                rows.append(
                    _row(
                        f"drift mixed trace {case.label}",
                        case.lhs(a_lt, gamma) ** lam,
                        case.rhs(f),
                        f"mixed-norm trace bound with drift, case {case.label}",
                        RATIO,
                        n,
                        index,
                        alpha=case.alpha,
                        lam=lam,
                    )
                )
                a_hat = MeasuredSample.from_field(f.with_data(sf.a_hat))
                sample = MeasuredSample.from_field(f)
                rows.append(
                    _row(
                        f"capped average weak {case.label}",
                        weak_norm(a_hat, 1.0),
                        strong_norm(sample, 1.0),
                        "weak type (1, 1) of the capped averaging operator",
                        RATIO,
                        n,
                        index,
                        alpha=case.alpha,
                    )
                )
                rows.append(
                    _row(
                        f"capped average strong {case.label}",
                        strong_norm(a_hat, 2.0),
                        strong_norm(sample, 2.0),
                        "strong type (2, 2) of the capped averaging operator",
                        RATIO,
                        n,
                        index,
                        alpha=case.alpha,
                        rstar_violations=sf.rstar_violations,
                    )
                )
                rows.append(
                    _row(
                        f"capped average bound {case.label}",
                        sf.bound_violations,
                        0,
                        "A^= stays below r_bar^-alpha on Reg=",
                        CHECK,
                        n,
                        index,
                        alpha=case.alpha,
                    )
                )
        return rows

    rows = _map_trials(trial, config.trials, "lagrangian")
    rows += separation_rows(config)
    return rows


def separation_rows(config: SuiteConfig, cylinders: int = SEPARATION_CYLINDERS) -> List[ReportRow]:
    """Trajectories started within rho of an admissible shear cylinder stay within 2 rho."""
    n = config.grids[0]
    grid = unit_torus(n)
    time = spacetime_axis(n)
    b = shear_drift(grid, time)
    ladder = ScaleLadder.for_grid(grid)
    drift_max = drift_maximal(b, ladder)
    params = AdmissibilityParams.default(grid.rank)
    rng = np.random.default_rng([config.seed, cylinders])
    worst, failures, skipped = 0.0, 0, 0
    for index in tqdm(range(cylinders), desc="separation", disable=None):
        t = float(rng.uniform(0.5, 1.0) * time.t_last)
        x = rng.uniform(0.0, 1.0, size=grid.rank)
        rho = float(rng.uniform(2 * min(grid.h), 0.2))
        cylinder = make_cylinder(b, grid, t, x, rho, params, drift_max)
        while not cylinder.admissible and rho > min(grid.h) / 4:
            rho /= 2
            cylinder = make_cylinder(b, grid, t, x, rho, params, drift_max)
        if not cylinder.admissible:
            skipped += 1
            continue
        result = trajectory_separation_check(
            b, cylinder, 1.0, 2.0, params, trials=4, seed=config.seed + index
        )
        worst = max(worst, result.max_ratio)
        failures += not result.holds
    anchor = "trajectories near an admissible cylinder stay close"
    return [
        _row("separation", failures, 0, anchor, CHECK, n, skipped=skipped),
        _row("separation ratio", worst, 2.0, anchor, INFO, n, cylinders=cylinders),
    ]


# cantor


def cantor_rows(config: SuiteConfig) -> List[ReportRow]:
    report = cantor_lower_bound(config.depth)
    anchor = "Cantor density escapes every L^{1,q}, q < inf"
    depth = config.depth
    rows = []
    for record in report.table.itertuples():
        rows.append(
            _row(
                "cantor level set",
                float(Fraction(record.bound)),
                float(Fraction(record.measure)),
                anchor,
                CHECK,
                depth,
                k=record.k,
                measure=record.measure,
                bound=record.bound,
            )
        )
    rows.append(
        _row("cantor L1 norm", abs(report.l1_norm - 2 ** 1.5), 1e-12, anchor, CHECK, depth)
    )
    inexact = int(not report.exact_measures)
    rows.append(_row("cantor exact measures", inexact, 0, anchor, CHECK, depth))
    rows.append(_row("cantor nesting", int(not report.nested), 0, anchor, CHECK, depth))
    if depth >= 3:
        growth = cantor_growth(range(2, depth + 1))
        for record in growth.to_dict(orient="records"):
            for column in ("L1,1", "L1,2", "L1,4", "weak L1"):
                rows.append(
                    _row(
                        f"cantor growth {column}",
                        record[column],
                        record["L1"],
                        anchor,
                        INFO,
                        int(record["depth"]),
                    )
                )
        rows.append(
            _row("cantor growth slope", growth_slope(growth), 0.0, anchor, INFO, depth)
        )
    return rows


# lorentz


def _resolution(epsilon: float) -> float:
    """Smallest graded cell, well below the support width exp(-1/eps) of u1 at t = 1."""
    return min(1e-6, 0.1 * math.exp(-1.0 / epsilon))


def lorentz_rows(config: SuiteConfig) -> List[ReportRow]:
    anchor = "nested and joint weak norms are not comparable"
    rows = []
    epsilons = sorted(set(LORENTZ_EPSILONS) | {config.epsilon}, reverse=True)
    for epsilon in epsilons:
        gamma = graded_unit_graph(_resolution(epsilon))
        u1 = concentrating_profile(epsilon)
        nested = mixed_norm(u1, gamma, WEAK_L1, WEAK_L1)
        joint = joint_norm(u1, gamma, WEAK_L1)
        params = {"epsilon": epsilon}
        if epsilon == config.epsilon:
            gap = abs(nested - 1.0)
            rows.append(_row("u1 nested weak norm", gap, 1e-2, anchor, CHECK, **params))
            rows.append(_row("u1 joint weak norm", joint, 1.05 * epsilon, anchor, CHECK, **params))
        rows.append(_row("u1 nested series", nested, 1.0, anchor, INFO, **params))
        rows.append(_row("u1 joint series", joint, epsilon, anchor, INFO, **params))

    gamma = graded_unit_graph()
    values = np.concatenate(
        [graph_values(hyperbolic_profile, gamma, k) for k in range(gamma.nt)]
    )
    weights = np.concatenate(
        [graph_measure(gamma, k) * gamma.time_weights[k] for k in range(gamma.nt)]
    )
    for power in (1, 2, 3):
        level = math.e ** power
        expected = (1 + power) / level
        measured = float(weights[values > level].sum())
        rows.append(
            _row(
                "u2 level set",
                abs(measured - expected),
                1e-2 * expected,
                anchor,
                CHECK,
                level=level,
                measured=measured,
            )
        )
    per_slice = slice_norms(hyperbolic_profile, gamma, WEAK_L1)
    for t in (0.1, 0.25, 0.5, 0.75, 0.9):
        k = int(np.argmin(np.abs(gamma.times - t)))
        expected = 1.0 / gamma.times[k]
        rows.append(
            _row(
                "u2 slice weak norm",
                abs(per_slice[k] - expected),
                2e-2 * expected,
                anchor,
                CHECK,
                t=float(gamma.times[k]),
            )
        )
    rows.append(
        _row(
            "u2 nested weak norm",
            norm(MeasuredSample(per_slice, gamma.time_weights), WEAK_L1),
            1.0,
            anchor,
            INFO,
        )
    )

    u1 = concentrating_profile(config.epsilon)
    for graded in LORENTZ_RATIOS:
        gamma = graded_unit_graph(_resolution(config.epsilon), graded)
        result = interpolate_nested(u1, gamma, "a", 0.5, 0.75)
        rows.append(
            _row(
                "u1 interpolation",
                result.measured,
                result.bound,
                "interpolation between joint and endpoint weak norms",
                RATIO,
                len(gamma.times),
                p=result.p,
                q=result.q,
            )
        )
    return rows


# ns-theorems


def ns_ladder(series: FlowSnapshotSeries) -> ScaleLadder:
    return ScaleLadder(NS_RHO_MIN, min(1.0, 0.5 * min(series.grid.extent)))


def ns_rows(config: SuiteConfig) -> List[ReportRow]:
    rows = []
    time = TimeSpec(NS_TIMES, NS_DT, 0.0)
    for n in tqdm(config.grids, desc="ns grids", disable=None):
        series = taylor_green(NS_NU, time, n)
        _check_cells(series.grid, time.nt)
        logger.info(f"Taylor-Green series on {n}^2 x {series.nz}, {time.nt} snapshots")
        rows += flow_checks(series)
        rows.append(solver_error_row(n))

        ladder = ns_ladder(series)
        pivots = pivot_fields(series, NS_PIVOTS, ladder)
        rows += pivot_floor_rows(pivots, n)
        scales = scale_fields(series, pivots, ladder, NS_PIVOTS)
        rows += theorem_ratios(series, scales)
        rows += regularity_rows(fitted_regularity_constants(series, scales), n)
        t = float(time.times[time.nt // 2])
        rows += blowup_norm_comparison(series, 5.0, 5.0, 5.0, 5.0, t).rows(n)

        u0 = taylor_green(NS_NU, TimeSpec(1, NS_DT), n).planar_velocity(0)
        solved = spectral_solve(u0, NS_NU, time.t_last, NS_DT / 8, n_snapshots=3)
        rows += [row for row in flow_checks(solved) if row.name == "energy inequality"]
        rows += lattice_rows(series, n)
        rows += random_solver_rows(config, n)
    return rows


def pivot_floor_rows(pivots: PivotFields, grid: int) -> List[ReportRow]:
    return [
        _row(
            f"pivot floor {role}",
            fraction,
            1.0,
            "fraction of cells lifted to (M(grad u) / eta0)^2",
            INFO,
            grid,
        )
        for role, fraction in pivots.floored.items()
    ]


def random_solver_rows(
    config: SuiteConfig, n: int, runs: int = NS_RANDOM_RUNS
) -> List[ReportRow]:
    """
    Spectral runs from random solenoidal data: ||grad^2 P||_1 against ||grad u||_2^2 and
    the energy per run, plus the C_1 regularity constants of the first run.
    """
    rows = []
    for run in tqdm(range(runs), desc=f"random flows {n}", disable=None):
        u0 = random_solenoidal(n, seed=config.seed + run, modes=NS_RANDOM_MODES)
        solved = spectral_solve(u0, NS_NU, NS_RANDOM_SPAN, NS_DT / 8, n_snapshots=5)
        rows.append(
            _row(
                "random pressure hessian",
                pressure_hessian_norm(solved),
                dissipation_norm(solved),
                "pressure Hessian bounded by the dissipation",
                RATIO,
                n,
                run,
                seed=config.seed + run,
            )
        )
        energy = solved.energy["energy"].to_numpy()
        rows.append(
            _row(
                "random energy monotone",
                float(np.max(np.diff(energy), initial=0.0)),
                ENERGY_TOL * float(energy[0]),
                "kinetic energy never grows",
                CHECK,
                n,
                run,
                seed=config.seed + run,
            )
        )
        if run:
            continue
        ladder = ns_ladder(solved)
        pivots = pivot_fields(solved, NS_PIVOTS, ladder)
        scales = scale_fields(solved, pivots, ladder, NS_PIVOTS)
        constants = fitted_regularity_constants(solved, scales, n_max=1)
        rows += regularity_rows(constants[constants["n"] == 1], n, prefix="solver ")
    return rows


def solver_error_row(n: int, t_max: float = 1.0, dt: float = 1e-3) -> ReportRow:
    """L^2 distance between the spectral solution and the analytic vortex at t_max."""
    u0 = taylor_green(NS_NU, TimeSpec(1, 1.0), n).planar_velocity(0)
    solved = spectral_solve(u0, NS_NU, t_max, dt, n_snapshots=2)
    exact = taylor_green(NS_NU, solved.time, n)
    cell = (TWO_PI / n) ** 2
    error = math.sqrt(
        float(np.sum((solved.ux[-1] - exact.ux[-1]) ** 2 + (solved.uy[-1] - exact.uy[-1]) ** 2))
        * cell
    )
    return _row(
        "solver error",
        error,
        1e-4,
        "spectral solution against the analytic vortex",
        CHECK,
        n,
        t=t_max,
    )


SUITE_RUNNERS = {
    "lemmas-space": lemmas_space,
    "trace-space": trace_space,
    "trace-spacetime": trace_spacetime,
    "anisotropic": anisotropic,
    "lagrangian": lagrangian,
    "cantor": cantor_rows,
    "lorentz": lorentz_rows,
    "ns-theorems": ns_rows,
}


def run_suite(config: SuiteConfig) -> ReportSet:
    """Runs one suite; failures inside it are recorded on the report set."""
    logger.info(
        f"Running suite {config.suite} on grids {list(config.grids)} "
        f"with {config.trials} trials, seed {config.seed}"
    )
    reports = ReportSet(config.suite, config.band)
    try:
        rows = SUITE_RUNNERS[config.suite](config)
    except (ResourceError, UsageError):
        raise
    except Exception as e:
        logger.exception(f"Suite {config.suite} failed")
        reports.record_error(f"{type(e).__name__}: {e}")
        return reports
    reports.extend(sorted(rows, key=lambda row: (row.trial, row.grid)))
    reports.log_verdicts()
    logger.info(f"Suite {config.suite} {'passed' if reports.passed else 'failed'}")
    return reports


# Lattice vertices as (1/p, 1/q); a solid segment is a strong mixed norm, a dashed one a
# weak norm (weak-weak for p < q, weak-strong for p > q, joint weak for p = q)
SOLID = "solid"
DASHED = "dashed"
# Largest N(mid) / sqrt(N(start) N(end)) accepted on a dashed segment
LATTICE_GAP = 1.05
LATTICE_COLUMNS = [
    "n",
    "segment",
    "vertex",
    "inv_p",
    "inv_q",
    "style",
    "norm",
    "value",
    "start",
    "end",
    "gap",
]
LATTICE_SEGMENTS = {
    0: ((SOLID, ((1, 0), (Fraction(1, 2), Fraction(1, 6)), (0, Fraction(1, 2)))),),
    1: ((SOLID, ((2, 0), (Fraction(1, 2), Fraction(1, 2)), (0, 1))),),
    2: (
        (SOLID, ((3, 0), (Fraction(3, 2), Fraction(1, 2)))),
        (
            DASHED,
            (
                (Fraction(3, 2), Fraction(1, 2)),
                (Fraction(3, 4), Fraction(3, 4)),
                (0, Fraction(3, 2)),
            ),
        ),
    ),
    3: (
        (SOLID, ((Fraction(7, 2), Fraction(1, 6)), (Fraction(5, 2), Fraction(1, 2)))),
        (
            DASHED,
            ((Fraction(5, 2), Fraction(1, 2)), (1, 1), (Fraction(1, 3), Fraction(5, 3))),
        ),
    ),
}


def _lattice_kind(style: str, inv_p: float, inv_q: float) -> str:
    if style == SOLID:
        return "strong"
    if inv_p == inv_q:
        return "joint weak"
    return "weak-weak" if inv_p > inv_q else "weak-strong"


def _lattice_params(
    kind: str, inv_p: float, inv_q: float
) -> Tuple[LorentzParams, LorentzParams]:
    p = math.inf if inv_p == 0 else 1.0 / inv_p
    q = math.inf if inv_q == 0 else 1.0 / inv_q
    weak_p = SUP if math.isinf(p) else LorentzParams(p)
    if kind == "strong":
        return _exponent(p), _exponent(q)
    if kind == "weak-strong":
        return weak_p, _exponent(q)
    return weak_p, SUP if math.isinf(q) else LorentzParams(q)


def _lattice_norm(
    f: ScalarField, gamma: GraphFamily, kind: str, inv_p: float, inv_q: float
) -> float:
    pt, px = _lattice_params(kind, inv_p, inv_q)
    if kind == "joint weak":
        return joint_norm(f, gamma, pt, nearest=True)
    return mixed_norm(f, gamma, pt, px, nearest=True)


def _lattice_record(order, index, vertex, inv_p, inv_q, style, kind, value, **extra):
    record = {
        "n": order,
        "segment": index,
        "vertex": vertex,
        "inv_p": float(inv_p),
        "inv_q": float(inv_q),
        "style": style,
        "norm": kind,
        "value": value,
        "start": math.nan,
        "end": math.nan,
        "gap": math.nan,
    }
    record.update(extra)
    return record


def mixed_norm_lattice(series: FlowSnapshotSeries) -> pandas.DataFrame:
    """
    ||grad^n u|| on the positive times at the vertices of the mixed-norm lattice,
    n = 0..3. Every half of a dashed segment also gets its midpoint and the
    log-convexity gap N(mid) / sqrt(N(start) N(end)), all three measured in the
    norm the midpoint calls for.
    """
    times = series.time.times
    positive = np.flatnonzero(times > 0)
    first = int(positive[0]) if positive.size else 0
    window = TimeSpec(series.nt - first, series.time.dt, float(times[first]))
    gamma = GraphFamily.whole_domain(series.grid, window)
    ops = series.ops()
    rows = []
    for order, segments in LATTICE_SEGMENTS.items():
        if order == 0:
            magnitude = series.speed()
        else:
            magnitude = velocity_derivative(ops, series, order)
        data = np.repeat(magnitude[first:, ..., None], series.nz, axis=-1)
        f = ScalarField(series.grid, data, window)
        for index, (style, vertices) in enumerate(segments):
            for role, (inv_p, inv_q) in enumerate(vertices):
                kind = _lattice_kind(style, inv_p, inv_q)
                value = _lattice_norm(f, gamma, kind, float(inv_p), float(inv_q))
                rows.append(_lattice_record(order, index, role, inv_p, inv_q, style, kind, value))
            if style != DASHED:
                continue
            for role, (start, end) in enumerate(zip(vertices, vertices[1:])):
                inv_p = float(start[0] + end[0]) / 2
                inv_q = float(start[1] + end[1]) / 2
                kind = _lattice_kind(style, inv_p, inv_q)
                value = _lattice_norm(f, gamma, kind, inv_p, inv_q)
                lo = _lattice_norm(f, gamma, kind, float(start[0]), float(start[1]))
                hi = _lattice_norm(f, gamma, kind, float(end[0]), float(end[1]))
                gap = ratio(value, math.sqrt(lo * hi))
                rows.append(
                    _lattice_record(
                        order,
                        index,
                        role + 0.5,
                        inv_p,
                        inv_q,
                        style,
                        kind,
                        value,
                        start=lo,
                        end=hi,
                        gap=gap,
                    )
                )
    return pandas.DataFrame(rows, columns=LATTICE_COLUMNS)


def lattice_rows(series: FlowSnapshotSeries, grid: int = 0) -> List[ReportRow]:
    """One CHECK per dashed midpoint: the log-convexity gap stays within LATTICE_GAP."""
    lattice = mixed_norm_lattice(series)
    midpoints = lattice[lattice["gap"].notna()]
    return [
        _row(
            "lattice log-convexity",
            record.gap,
            LATTICE_GAP,
            "mixed norms of grad^n u are log-convex along the dashed segments",
            CHECK,
            grid,
            n=record.n,
            segment=record.segment,
            vertex=record.vertex,
            norm=record.norm,
        )
        for record in midpoints.itertuples()
    ]
