import math
from fractions import Fraction

import numpy as np
import pytest

from msa.cantor import (
    AMPLITUDE,
    build_cantor,
    cantor_growth,
    cantor_ladder,
    cantor_lower_bound,
    growth_slope,
    left_endpoints,
    level_mask,
)
from msa.utils import ParameterError, ResourceError


def test_level_mask_keeps_digits_zero_and_two():
    mask = level_mask(2, 1)
    assert np.flatnonzero(mask).tolist() == [0, 1, 2, 3, 8, 9, 10, 11]
    assert np.flatnonzero(level_mask(2, 2)).tolist() == [0, 2, 8, 10]
    assert level_mask(3, 0).all()


def test_left_endpoints_are_exact():
    assert left_endpoints(0) == [Fraction(0)]
    assert left_endpoints(2) == [Fraction(0), Fraction(1, 8), Fraction(1, 2), Fraction(5, 8)]


def test_construction():
    construction = build_cantor(3)
    assert construction.grid.n == (64,)
    assert [level.measure for level in construction.levels] == [
        Fraction(1, 2 ** k) for k in range(4)
    ]
    assert [level.count for level in construction.levels] == [1, 2, 4, 8]
    assert construction.nested()
    assert construction.l1_norm() == pytest.approx(AMPLITUDE)
    assert construction.field.data.max() == pytest.approx(AMPLITUDE * 8)
    assert construction.field.data.sum() * construction.grid.h[0] == pytest.approx(AMPLITUDE)


def test_depth_limits():
    with pytest.raises(ResourceError, match="limit is depth 12"):
        build_cantor(13)
    with pytest.raises(ParameterError, match="at least 1"):
        build_cantor(0)


def test_ladder_contains_quaternary_radii():
    ladder = cantor_ladder(3)
    rungs = ladder.rungs()
    for k in range(1, 4):
        assert np.isclose(rungs, 2.0 * 4.0 ** -k).any()
    with pytest.raises(ParameterError, match="even"):
        cantor_ladder(3, per_octave=3)


def test_lower_bound_holds(caplog):
    report = cantor_lower_bound(3)
    assert report.holds
    assert report.exact_measures
    assert report.table["k"].tolist() == [1, 2, 3]
    assert report.table["bound"].tolist() == ["1/2", "1/4", "1/8"]
    assert report.l1_norm == pytest.approx(AMPLITUDE)
    assert report.weak <= report.lorentz[1.0] * (1 + 1e-9)
    dumped = report.to_json()
    assert dumped["holds"] is True
    assert len(dumped["levels"]) == 3
    assert not any("fails" in message for message in caplog.messages)
    with pytest.raises(ParameterError, match="alpha = 1/2"):
        cantor_lower_bound(3, alpha=1.0)


def test_growth():
    growth = cantor_growth([2, 3])
    assert growth["depth"].tolist() == [2, 3]
    np.testing.assert_allclose(growth["L1"], AMPLITUDE)
    assert set(growth.columns) >= {"L1,1", "L1,2", "L1,4", "weak L1"}
    assert growth_slope(growth, "L1") == pytest.approx(0.0, abs=1e-9)
    assert math.isnan(growth_slope(growth.iloc[:1]))
