"""
Cantor-type densities on [0, 1) whose averaging operator escapes every L^{1,q}, q < inf,
while staying bounded in weak L^1.

Level k keeps the base-4 intervals whose first k digits are 0 or 2. The density of
depth j is 2^{3/2} 2^j on the level-j set. Everything is laid out on the 4^-j grid so
all sets are unions of whole cells and all measures are exact dyadic fractions.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas
from tqdm import tqdm

from msa.field_core import GridSpec, ScalarField
from msa.multiscale import ScaleField, ScaleLadder, ball_average, scale_op
from msa.norms import LorentzParams, MeasuredSample, lorentz_norm, strong_norm, weak_norm
from msa.utils import MAX_CANTOR_DEPTH, ParameterError, ResourceError

logger = logging.getLogger(__name__)

AMPLITUDE = 2 ** 1.5
LORENTZ_SECONDARY = (1.0, 2.0, 4.0)


@dataclass(frozen=True, eq=False)
class CantorLevel:
    k: int
    endpoints: List[Fraction]
    cells: np.ndarray
    measure: Fraction
    amplitude: float

    @property
    def count(self) -> int:
        return len(self.endpoints)


@dataclass(frozen=True, eq=False)
class CantorConstruction:
    depth: int
    levels: List[CantorLevel]
    field: ScalarField

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    def l1_norm(self) -> float:
        level = self.levels[-1]
        return level.amplitude * float(level.measure)

    def nested(self) -> bool:
        """A_{k+1} inside A_k for every level."""
        for outer, inner in zip(self.levels, self.levels[1:]):
            if not np.isin(inner.cells, outer.cells).all():
                return False
        return True


def _check_depth(depth: int):
    if depth > MAX_CANTOR_DEPTH:
        raise ResourceError(
            f"Cantor depth {depth} needs 4^{depth} cells, the limit is depth {MAX_CANTOR_DEPTH}"
        )
    if depth < 1:
        raise ParameterError(f"Cantor depth must be at least 1, got {depth}")


def level_mask(depth: int, k: int) -> np.ndarray:
    """Cells of the 4^-depth grid inside A_k: their top k base-4 digits are 0 or 2."""
    index = np.arange(4 ** depth, dtype=np.int64)
    inside = np.ones(index.size, dtype=bool)
    for digit in range(1, k + 1):
        value = (index >> (2 * (depth - digit))) & 3
        inside &= (value == 0) | (value == 2)
    return inside


def left_endpoints(k: int) -> List[Fraction]:
    endpoints = [Fraction(0)]
    for digit in range(1, k + 1):
        step = Fraction(2, 4 ** digit)
        endpoints = [e + a for e in endpoints for a in (Fraction(0), step)]
    return sorted(endpoints)


def build_cantor(depth: int) -> CantorConstruction:
    _check_depth(depth)
    grid = GridSpec.box(4 ** depth, 0.0, 1.0)
    levels = []
    for k in range(depth + 1):
        cells = np.flatnonzero(level_mask(depth, k))
        levels.append(
            CantorLevel(
                k,
                left_endpoints(k),
                cells,
                Fraction(len(cells), 4 ** depth),
                AMPLITUDE * 2 ** k,
            )
        )
    data = np.zeros(grid.n[0])
    data[levels[-1].cells] = levels[-1].amplitude
    field = ScalarField(grid, data)
    logger.info(f"Built Cantor density of depth {depth} on {grid.n[0]} cells")
    return CantorConstruction(depth, levels, field)


def cantor_ladder(depth: int, per_octave: int = 8, bisections: int = 6) -> ScaleLadder:
    """Ladder from 2 * 4^-depth to 1/2 with every radius 2 * 4^-k on a rung."""
    if per_octave % 2:
        raise ParameterError("per_octave must be even so that 2 * 4^-k are rungs")
    return ScaleLadder(2.0 * 4.0 ** -depth, 0.5, per_octave, bisections)


@dataclass(frozen=True, eq=False)
class CantorReport:
    depth: int
    alpha: float
    table: pandas.DataFrame
    l1_norm: float
    exact_measures: bool
    nested: bool
    lorentz: Dict[float, float]
    weak: float

    @property
    def holds(self) -> bool:
        return bool(self.table["holds"].all()) and self.exact_measures and self.nested

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "alpha": self.alpha,
            "l1_norm": self.l1_norm,
            "exact_measures": self.exact_measures,
            "nested": self.nested,
            "lorentz": {str(q): v for q, v in self.lorentz.items()},
            "weak_l1": self.weak,
            "holds": self.holds,
            "levels": self.table.to_dict(orient="records"),
        }


def averaged_norms(sf: ScaleField, grid: GridSpec) -> Dict[str, float]:
    sample = MeasuredSample(sf.a, np.full(sf.a.shape, grid.cell_volume))
    norms = {f"L1,{q:g}": lorentz_norm(sample, LorentzParams(1.0, q)) for q in LORENTZ_SECONDARY}
    norms["weak L1"] = weak_norm(sample, 1.0)
    return norms


def cantor_lower_bound(
    depth: int, alpha: float = 0.5, ladder: Optional[ScaleLadder] = None
) -> CantorReport:
    """
    Checks |{A f_j >= 2^-1/2 2^k}| >= 2^-k for every k <= j, with measures counted as
    exact fractions of cells. A cell counts towards the level set when its certified
    trigger radius is at most 2 * 4^-k.
    """
    if alpha != 0.5:
        raise ParameterError(f"The Cantor bound is stated for alpha = 1/2, got {alpha}")
    construction = build_cantor(depth)
    grid = construction.grid
    ladder = ladder or cantor_ladder(depth)
    sf = scale_op(construction.field, alpha, ladder, certify=False)
    h = grid.h[0]
    rows = []
    for k in range(1, depth + 1):
        rho = 2.0 * 4.0 ** -k
        count = int(np.sum(sf.hi <= rho))
        measure = Fraction(count, 4 ** depth)
        bound = Fraction(1, 2 ** k)
        # A gap cell right after the first interval of A_k
        gap_point = 4.0 ** -k + h / 2
        gap_average = ball_average(construction.field, [gap_point], rho)
        rows.append(
            {
                "k": k,
                "rho": rho,
                "threshold": 2 ** -0.5 * 2 ** k,
                "measure": str(measure),
                "bound": str(bound),
                "holds": measure >= bound,
                "gap_average": gap_average,
                "gap_threshold": rho ** -alpha,
                "gap_holds": gap_average >= rho ** -alpha,
            }
        )
    table = pandas.DataFrame(rows)
    exact = all(
        level.measure == Fraction(1, 2 ** level.k) and level.count == 2 ** level.k
        for level in construction.levels
    )
    norms = averaged_norms(sf, grid)
    report = CantorReport(
        depth,
        alpha,
        table,
        construction.l1_norm(),
        exact,
        construction.nested(),
        {q: norms[f"L1,{q:g}"] for q in LORENTZ_SECONDARY},
        norms["weak L1"],
    )
    failed = table.loc[~table["holds"], "k"].tolist()
    if failed:
        logger.warning(f"Cantor lower bound fails at depth {depth} for k = {failed}")
    return report


def cantor_growth(depths: Sequence[int]) -> pandas.DataFrame:
    """L^{1,q} and weak-L^1 norms of A f_j for every depth j."""
    rows = []
    for depth in tqdm(depths, desc="cantor depths", disable=None):
        _check_depth(depth)
        construction = build_cantor(depth)
        sf = scale_op(construction.field, 0.5, cantor_ladder(depth), certify=False)
        row = {"depth": depth}
        row.update(averaged_norms(sf, construction.grid))
        row["L1"] = strong_norm(
            MeasuredSample(construction.field.data, construction.grid.cell_volume), 1.0
        )
        rows.append(row)
    return pandas.DataFrame(rows)


def growth_slope(growth: pandas.DataFrame, column: str = "L1,1") -> float:
    """Least-squares slope of a norm column against depth."""
    if len(growth) < 2:
        return math.nan
    return float(np.polyfit(growth["depth"], growth[column], 1)[0])
