import math

import numpy as np
import pytest

from msa.field_core import GridSpec, ScalarField, TimeSpec, VectorField
from msa.lagrangian import (
    LABEL_NAMES,
    REG_EQ,
    REG_LT,
    SING_EQ,
    AdmissibilityParams,
    DriftFlow,
    MollifierSpec,
    SkewedAverager,
    admissible,
    capped_scale_op,
    cylinder_polylines,
    flow_map,
    gradient_norm,
    make_cylinder,
    mollify_drift,
    skewed_cyl_average,
    sphere_area,
    trajectory_separation_check,
)
from msa.multiscale import SPACETIME, EulerianAverager, ScaleLadder, cyl_average
from msa.utils import ParameterError

GRID = GridSpec.torus(16, 1.0, rank=2)
TIME = TimeSpec(11, 0.01, 0.0)


def constant_drift(speed: float, grid=GRID, time=TIME) -> VectorField:
    shape = (time.nt,) + grid.shape
    return VectorField.from_array(grid, np.stack([np.full(shape, speed), np.zeros(shape)]), time)


def random_spacetime(grid=GRID, time=TIME, seed=0) -> ScalarField:
    data = np.random.default_rng(seed).uniform(0.0, 1.0, (time.nt,) + grid.shape)
    return ScalarField(grid, data, time)


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


@pytest.mark.parametrize("rank", [1, 2, 3])
def test_mollifier_has_unit_mass(rank):
    mollifier = MollifierSpec(rank)
    grid = GridSpec.centered(41, 2.05, rank) if rank < 3 else GridSpec.centered(21, 2.1, rank)
    mass = mollifier.profile(grid.points()).sum() * grid.cell_volume
    assert mass == pytest.approx(1.0, rel=2e-2)
    assert mollifier.sup == pytest.approx(mollifier.constant / math.e)
    _, weights = mollifier.kernel(GridSpec.torus(16, 1.0, rank=rank), 0.2)
    assert weights.sum() == pytest.approx(1.0)


def test_mollifier_fourier_and_rank():
    assert MollifierSpec(1).fourier(0.0) == pytest.approx(1.0, rel=1e-9)
    assert abs(MollifierSpec(1).fourier(20.0)) < 0.1
    with pytest.raises(ParameterError, match="rank"):
        MollifierSpec(4)
    with pytest.raises(ParameterError, match="only tabulated in 1-D"):
        MollifierSpec(2).fourier(1.0)


def test_admissibility_params():
    with pytest.raises(ParameterError, match="eta0"):
        AdmissibilityParams(0.0)
    params = AdmissibilityParams.default(2)
    assert MollifierSpec(2).sup * 4 ** 2 * params.eta0 == pytest.approx(0.9 * math.log(2))


def test_mollify_and_gradient():
    b = constant_drift(0.5)
    smoothed = mollify_drift(b, 0.2)
    np.testing.assert_allclose(smoothed.components[0].data, 0.5)
    np.testing.assert_allclose(gradient_norm(b).data, 0.0, atol=1e-12)

    grid = GridSpec.torus(32, 1.0, rank=2)
    x = grid.axes()[0][:, None] * np.ones((1, 32))
    wave = VectorField.from_array(grid, np.stack([np.sin(2 * math.pi * x), np.zeros((32, 32))]))
    expected = np.abs(2 * math.pi * np.cos(2 * math.pi * x))
    np.testing.assert_allclose(gradient_norm(wave).data, expected, atol=0.05 * 2 * math.pi)


def test_flow_map_follows_constant_drift():
    b = constant_drift(0.5)
    t, rho = 0.1, 0.2
    np.testing.assert_allclose(flow_map(None, rho, t, [0.5, 0.5], t - 0.04), [0.5, 0.5])
    np.testing.assert_allclose(flow_map(b, rho, t, [0.5, 0.5], t - 0.04), [0.48, 0.5], atol=1e-9)
    with pytest.raises(ParameterError, match="outside"):
        flow_map(b, rho, t, [0.5, 0.5], t - 0.1)


def test_zero_drift_matches_straight_cylinders():
    f = random_spacetime(time=TimeSpec(6, 0.004, 0.0))
    zero = constant_drift(0.0, time=f.time)
    n = f.data.size
    k = np.repeat(np.arange(f.time.nt), GRID.size)
    x = np.tile(GRID.points(), (f.time.nt, 1))
    skewed = SkewedAverager(f, DriftFlow(zero), rho_max=0.4, anchors=(k, x))
    eulerian = EulerianAverager(f, SPACETIME, rho_max=0.4)
    idx = np.arange(0, n, 7)
    for rho in (0.05, 0.1, 0.15):
        np.testing.assert_allclose(skewed.at(rho, idx), eulerian.at(rho, idx), rtol=1e-12)
    point = GRID.points()[19]
    assert skewed_cyl_average(f, None, 0.02, point, 0.1) == pytest.approx(
        cyl_average(f, 0.02, point, 0.1)
    )


def test_skewed_average_of_constant_is_constant():
    f = ScalarField(GRID, np.full((TIME.nt,) + GRID.shape, 3.0), TIME)
    b = constant_drift(0.7)
    assert skewed_cyl_average(f, b, 0.1, [0.31, 0.77], 0.2) == pytest.approx(3.0)
    verdict, measured = admissible(b, 0.1, [0.31, 0.77], 0.2)
    assert verdict
    assert measured == pytest.approx(0.0, abs=1e-9)


def test_flow_rejects_mismatched_inputs():
    scalar_drift = VectorField((random_spacetime().with_data(np.zeros((TIME.nt,) + GRID.shape)),))
    with pytest.raises(ParameterError, match="components on a rank 2 grid"):
        DriftFlow(scalar_drift)
    with pytest.raises(ParameterError, match="time axis"):
        SkewedAverager(ScalarField(GRID, np.zeros(GRID.shape)))


def test_capped_scale_without_drift():
    f = random_spacetime(time=TimeSpec(6, 0.004, 0.0), seed=1)
    f = f.with_data(20.0 * f.data)
    ladder = ScaleLadder.for_grid(GRID, rho_max=0.15)
    capped = capped_scale_op(f, None, 2.0, ladder)
    np.testing.assert_allclose(capped.a_hat, capped.a_lt + capped.a_eq)
    # nothing fits below t = 0
    assert capped.sing[0].all()
    assert np.all(np.isin(capped.labels, list(LABEL_NAMES)))
    assert sum(capped.label_counts().values()) == f.data.size
    assert np.all((capped.s <= capped.scale) | capped.sing)
    reg_lt = capped.labels == REG_LT
    np.testing.assert_allclose(capped.a_lt[reg_lt], capped.scale[reg_lt] ** -2.0)
    assert capped.rstar_violations == 0


def test_cylinders_and_separation():
    cylinder = make_cylinder(None, GRID, 0.1, [0.5, 0.5], 0.2, steps=8)
    assert cylinder.admissible
    assert cylinder.contained
    np.testing.assert_allclose(cylinder.backbone, 0.5)
    assert cylinder.times[-1] == pytest.approx(0.06)
    (dump,) = cylinder_polylines([cylinder])
    assert len(dump["polyline"]) == 9
    assert dump["polyline"][0] == [0.1, 0.5, 0.5]

    result = trajectory_separation_check(None, cylinder, trials=5)
    assert result.holds
    assert result.max_ratio < 1.0

    b = constant_drift(0.3)
    moving = make_cylinder(b, GRID, 0.1, [0.5, 0.5], 0.2, steps=8)
    assert moving.backbone[-1][0] == pytest.approx(0.5 - 0.3 * 0.04, abs=1e-9)
    assert trajectory_separation_check(b, moving, trials=5).max_ratio < 1.0

    with pytest.raises(ParameterError, match="0 < c1 < c2"):
        trajectory_separation_check(None, cylinder, c1=2.0, c2=1.0)
    with pytest.raises(ParameterError, match="is not below"):
        trajectory_separation_check(None, cylinder, params=AdmissibilityParams(1.0))


def shear(amplitude: float, grid=GRID, time=TIME) -> VectorField:
    y = grid.points()[:, 1].reshape(grid.shape)
    bx = np.broadcast_to(amplitude * np.sin(2 * math.pi * y), (time.nt,) + grid.shape).copy()
    return VectorField.from_array(grid, np.stack([bx, np.zeros_like(bx)]), time)


def test_capped_scale_with_shear_drift():
    time = TimeSpec(6, 0.004, 0.0)
    f = random_spacetime(time=time, seed=2)
    f = f.with_data(20.0 * f.data)
    ladder = ScaleLadder.for_grid(GRID, rho_max=0.15)
    capped = capped_scale_op(f, shear(2.0, time=time), 2.0, ladder)
    np.testing.assert_allclose(capped.a_hat, capped.a_lt + capped.a_eq)
    assert np.all(np.isin(capped.labels, list(LABEL_NAMES)))
    assert np.isfinite(capped.r_bar).any()
    np.testing.assert_array_equal(capped.r_bar, np.minimum(capped.r_adm, capped.r_int))
    equal = np.isin(capped.labels, [SING_EQ, REG_EQ])
    assert np.all(capped.a_lt[equal] == 0)
    assert np.all(capped.a_eq[~equal] == 0)
    assert np.all((capped.s <= capped.r_bar) | capped.sing)
