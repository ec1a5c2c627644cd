import math

import numpy as np
import pytest

from msa.field_core import GraphFamily, GridSpec, ScalarField, TimeSpec
from msa.multiscale import (
    CONTINUUM,
    SPACETIME,
    EulerianAverager,
    ScaleLadder,
    average_field,
    ball_average,
    bracket_to_scale,
    cyl_average,
    ladder_search,
    level_set_measure,
    maximal_function,
    scale_op,
    unit_ball_volume,
    zero_average_measure,
)
from msa.utils import DomainError, ParameterError


def random_field(grid, time=None, seed=0):
    shape = grid.shape if time is None else (time.nt,) + grid.shape
    return ScalarField(grid, np.random.default_rng(seed).uniform(0.0, 1.0, shape), time)


def test_ladder():
    ladder = ScaleLadder(0.125, 1.0, 2)
    rungs = ladder.rungs()
    assert len(rungs) == 7
    assert rungs[-1] == pytest.approx(1.0)
    assert ladder.step == pytest.approx(math.sqrt(2))

    ladder = ScaleLadder.for_grid(GridSpec.torus(16, 1.0, rank=2))
    assert ladder.rho_min == pytest.approx(1 / 16)
    assert ladder.rho_max == pytest.approx(0.5)

    with pytest.raises(ParameterError, match="rho_min must be positive"):
        ScaleLadder(0.0, 1.0)
    with pytest.raises(ParameterError, match="smaller than rho_min"):
        ScaleLadder(1.0, 0.5)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


@pytest.mark.parametrize(
    "grid",
    [
        GridSpec.torus(16, 1.0, rank=2),
        GridSpec.box(16, 0.0, 1.0, rank=2),
        GridSpec.torus(32, 1.0),
        GridSpec.box(32, 0.0, 1.0),
        GridSpec.box(8, 0.0, 1.0, rank=3),
    ],
)
def test_full_field_averages_match_direct_sums(grid):
    f = random_field(grid)
    rho = 0.2
    averaged = average_field(f, rho)
    points = grid.points()
    for flat in (0, 5, grid.size // 2, grid.size - 1):
        direct = ball_average(f, points[flat], rho)
        assert averaged.data.ravel()[flat] == pytest.approx(direct, rel=1e-10)


def test_cylinder_averages_match_direct_sums():
    grid = GridSpec.torus(16, 1.0, rank=2)
    time = TimeSpec(6, 0.004, 0.0)
    f = random_field(grid, time)
    rho = 0.1
    averager = EulerianAverager(f, SPACETIME, rho_max=2 * rho)
    full = averager.full(rho)
    points = grid.points()
    for k in range(time.nt):
        for cell in (0, 37, 255):
            direct = cyl_average(f, float(time.times[k]), points[cell], rho)
            assert full[k].ravel()[cell] == pytest.approx(direct, rel=1e-10)


def test_constant_cylinder_sees_zero_before_first_slice():
    grid = GridSpec.torus(8, 1.0, rank=2)
    time = TimeSpec(5, 0.004, 0.0)
    f = ScalarField(grid, np.full((5, 8, 8), 3.0), time)
    averaged = average_field(f, 0.1, SPACETIME).data
    np.testing.assert_allclose(averaged[0], 1.0)
    np.testing.assert_allclose(averaged[1], 2.0)
    np.testing.assert_allclose(averaged[2:], 3.0)


def test_continuum_normalization():
    grid = GridSpec.torus(64, 1.0, rank=2)
    f = ScalarField(grid, np.full((64, 64), 2.0))
    x = grid.points()[0]
    assert ball_average(f, x, 0.25) == pytest.approx(2.0)
    assert ball_average(f, x, 0.25, CONTINUUM) == pytest.approx(2.0, rel=0.05)


def test_ladder_search_brackets():
    thresholds = np.array([0.01, 0.3, 10.0])
    ladder = ScaleLadder(0.1, 1.0, 4, 10)

    def trigger(rho, idx):
        return rho > thresholds[idx]

    bracket = ladder_search(trigger, ladder, 3)
    assert bracket.rung[0] == 0
    assert bracket.rung[2] == -1
    assert bracket.lo[1] <= 0.3 < bracket.hi[1]
    assert bracket.hi[1] / bracket.lo[1] <= ladder.step ** (1 / 2 ** 10) * (1 + 1e-12)
    s = bracket_to_scale(bracket, ladder)
    assert s[0] == 0.1
    assert s[1] == pytest.approx(0.3, rel=1e-3)
    assert math.isinf(s[2])


def test_scale_of_constant_field():
    grid = GridSpec.torus(16, 1.0, rank=2)
    f = ScalarField(grid, np.full((16, 16), 4.0))
    ladder = ScaleLadder.for_grid(grid)
    sf = scale_op(f, 1.0, ladder)
    assert not sf.sing.any()
    assert not sf.truncated.any()
    assert np.all(np.abs(np.log(sf.s / 0.25)) <= math.log(ladder.step) + 1e-12)
    np.testing.assert_allclose(sf.a, sf.s ** -1.0)
    assert np.nanmax(sf.residual) <= ladder.step - 1 + 1e-9

    gamma = GraphFamily.whole_domain(grid)
    assert level_set_measure(sf, gamma, 0.2) == pytest.approx(1.0)
    assert level_set_measure(sf, gamma, 0.5) == 0.0
    assert zero_average_measure(sf, gamma) == 0.0


def test_scale_extremes(caplog):
    grid = GridSpec.torus(16, 1.0, rank=2)
    ladder = ScaleLadder.for_grid(grid)

    zero = scale_op(ScalarField(grid, np.zeros((16, 16))), 1.0, ladder)
    assert zero.truncated.all()
    assert np.isinf(zero.s).all()
    np.testing.assert_array_equal(zero.a, 0.0)
    assert zero_average_measure(zero, GraphFamily.whole_domain(grid)) == pytest.approx(1.0)
    assert caplog.messages == ["100% of points never reach the threshold below rho_max"]

    huge = scale_op(ScalarField(grid, np.full((16, 16), 1e6)), 1.0, ladder)
    assert huge.sing.all()
    np.testing.assert_allclose(huge.s, ladder.rho_min)


def test_maximal_function_dominates():
    grid = GridSpec.torus(16, 1.0, rank=2)
    f = random_field(grid, seed=3)
    ladder = ScaleLadder.for_grid(grid)
    m = maximal_function(f, ladder)
    assert np.all(m.data >= f.data)
    for rho in ladder.rungs()[::4]:
        assert np.all(m.data >= average_field(f, rho).data - 1e-12)
    constant = maximal_function(ScalarField(grid, np.full((16, 16), 2.0)), ladder)
    np.testing.assert_allclose(constant.data, 2.0)


def test_operator_errors():
    grid = GridSpec.torus(8, 1.0, rank=2)
    static = ScalarField(grid, np.ones((8, 8)))
    with pytest.raises(DomainError, match="alpha must be positive"):
        scale_op(static, 0.0)
    with pytest.raises(ParameterError, match="time axis"):
        EulerianAverager(static, SPACETIME)
    with pytest.raises(ParameterError, match="Unknown mode"):
        EulerianAverager(static, "time")
    with pytest.raises(ParameterError, match="rho must be positive"):
        average_field(static, 0.0)
    with pytest.raises(ParameterError, match="cyl_average needs"):
        cyl_average(static, 0.1, [0.5, 0.5], 0.1)
    with pytest.raises(ParameterError, match="rank 2"):
        ball_average(static, [0.5], 0.1)
