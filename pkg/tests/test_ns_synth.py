import math

import numpy as np
import pytest

from msa.field_core import GridSpec, ScalarField, TimeSpec, VectorField
from msa.multiscale import ScaleLadder
from msa.ns_synth import (
    TWO_PI,
    PivotConfig,
    SpectralOps,
    blowup_norm_comparison,
    fitted_regularity_constants,
    flow_checks,
    load_series,
    pivot_fields,
    pointwise_bound,
    random_solenoidal,
    regularity_rows,
    save_series,
    scale_fields,
    spectral_solve,
    taylor_green,
    taylor_green_point,
    theorem_ratios,
)
from msa.report import CHECK, RATIO
from msa.utils import ConfigurationError, DomainError, ParameterError

TIME = TimeSpec(3, 0.1, 0.0)


@pytest.fixture(scope="module")
def vortex():
    return taylor_green(0.1, TIME, 16)


def test_taylor_green_is_an_exact_solution(vortex):
    np.testing.assert_allclose(vortex.divergence(), 0.0, atol=1e-12)
    assert vortex.momentum_residual() < 1e-8
    assert vortex.energy_holds()
    balance = vortex.energy["balance"].to_numpy()
    np.testing.assert_allclose(balance, math.pi ** 2, rtol=1e-10)
    ops = vortex.ops()
    omega = ops.vorticity(vortex.ux[1], vortex.uy[1])
    np.testing.assert_allclose(omega, vortex.omega[1], atol=1e-10)
    assert all(row.lhs <= row.rhs for row in flow_checks(vortex))


def test_taylor_green_point_matches_grid(vortex):
    grid = vortex.grid2
    x = grid.points()[37]
    point = taylor_green_point(0.1, 0.2, x)
    i, j = divmod(37, 16)
    assert point["u"][0] == pytest.approx(vortex.ux[2, i, j])
    assert point["u"][1] == pytest.approx(vortex.uy[2, i, j])
    assert point["omega"][2] == pytest.approx(vortex.omega[2, i, j])
    assert point["pressure"] == pytest.approx(vortex.pressure[2, i, j], abs=1e-12)
    with pytest.raises(ParameterError, match="Viscosity"):
        taylor_green(-1.0, TIME, 16)


def test_spectral_ops_rejects_odd_grids():
    with pytest.raises(ParameterError, match="even n"):
        SpectralOps(5)


def test_dealiasing_keeps_two_thirds_of_nyquist():
    ops = SpectralOps(16)
    assert ops.cutoff == pytest.approx(16 / 3)
    kept = np.unique(np.abs(ops.kx[ops.dealias]))
    np.testing.assert_array_equal(kept, np.arange(6))


def test_random_solenoidal():
    u = random_solenoidal(16, seed=1, modes=3)
    ux, uy = (c.data for c in u.components)
    ops = SpectralOps(16)
    np.testing.assert_allclose(ops.divergence(ux, uy), 0.0, atol=1e-10)
    assert abs(ux.mean()) + abs(uy.mean()) < 1e-12
    assert np.sqrt(ux ** 2 + uy ** 2).max() == pytest.approx(1.0)
    with pytest.raises(ParameterError, match="modes"):
        random_solenoidal(16, modes=6)


def test_solver_reproduces_taylor_green(vortex):
    u0 = vortex.planar_velocity(0)
    series = spectral_solve(u0, 0.1, 0.2, 0.05, n_snapshots=3)
    assert series.time == TIME
    np.testing.assert_allclose(series.ux, vortex.ux, atol=1e-8)
    np.testing.assert_allclose(series.uy, vortex.uy, atol=1e-8)
    assert series.energy_holds()


def test_solver_rejects_bad_setups(vortex):
    u0 = vortex.planar_velocity(0)
    with pytest.raises(ParameterError, match="two snapshots"):
        spectral_solve(u0, 0.1, 0.2, 0.05, n_snapshots=1)
    with pytest.raises(ConfigurationError, match="not a multiple"):
        spectral_solve(u0, 0.1, 0.2, 0.03, n_snapshots=3)
    with pytest.raises(ConfigurationError, match="CFL"):
        spectral_solve(u0, 0.1, 2.0, 1.0, n_snapshots=3)

    grid = GridSpec.torus(16, TWO_PI, rank=2)
    x = np.meshgrid(*grid.axes(), indexing="ij")[0]
    compressible = VectorField(
        (ScalarField(grid, np.sin(x)), ScalarField(grid, np.zeros((16, 16))))
    )
    with pytest.raises(ParameterError, match="divergence-free"):
        spectral_solve(compressible, 0.1, 0.2, 0.05, n_snapshots=3)


def test_save_and_load_series(tmp_path, vortex):
    save_series(vortex, tmp_path / "tg")
    assert (tmp_path / "tg" / "energy.csv").is_file()
    loaded = load_series(tmp_path / "tg")
    assert loaded.nu == 0.1
    assert loaded.nz == vortex.nz
    np.testing.assert_allclose(loaded.ux, vortex.ux)
    np.testing.assert_allclose(loaded.energy["dissipation"], vortex.energy["dissipation"])
    with pytest.raises(OSError, match="could not be found"):
        load_series(tmp_path / "missing")


def test_pivot_fields(vortex):
    with pytest.raises(ParameterError, match="eta0 must be positive"):
        PivotConfig(eta0=0.0)
    with pytest.raises(ParameterError, match="Unknown pivot roles"):
        PivotConfig(roles=("f4",))
    pivots = pivot_fields(vortex, PivotConfig(roles=("f1", "f3")))
    assert set(pivots.fields) == {"f1", "f3"}
    np.testing.assert_allclose(pivots["f1"].data, pivots.maximal.data ** 2)
    assert pivots["f3"].data.shape == (TIME.nt, 16, 16, vortex.nz)


def test_blowup_comparison(vortex):
    with pytest.raises(DomainError, match="2/p \\+ 3/q = 1"):
        blowup_norm_comparison(vortex, 4.0, 4.0, 5.0, 5.0, 0.1)
    with pytest.raises(DomainError, match="No snapshot"):
        blowup_norm_comparison(vortex, 5.0, 5.0, 5.0, 5.0, 1.0)
    comparison = blowup_norm_comparison(vortex, 5.0, 5.0, 5.0, 5.0, 0.1)
    assert comparison.lhs > 0
    assert comparison.rhs_gradu is not None
    assert [row.name for row in comparison.rows(16)] == [
        "blow-up comparison via u",
        "blow-up comparison via grad u",
    ]


def test_pivot_fields_keep_their_formulas(vortex):
    pivots = pivot_fields(vortex, PivotConfig(eta=2.0, eta_bar=1.0, roles=("f1", "f2")))
    assert pivots.floored == {}
    m2 = pivots.maximal.data ** 2
    np.testing.assert_allclose(pivots["f1"].data, m2 / 2.0)
    hessian = vortex.embed(vortex.hess_p_norm()).data
    remainder = pivots["f2"].data - pivots["f1"].data * 2.0
    np.testing.assert_allclose(remainder, hessian, atol=1e-12)
    assert remainder.min() >= -1e-12


def test_pivot_floor_is_opt_in(vortex):
    config = PivotConfig(eta=1e3, eta0=1.0, floor=True, roles=("f1", "f3"))
    pivots = pivot_fields(vortex, config)
    assert set(pivots.floored) == {"f1"}
    assert 0 < pivots.floored["f1"] <= 1
    np.testing.assert_allclose(pivots["f1"].data, pivots.maximal.data ** 2)


@pytest.fixture(scope="module")
def vortex_scales(vortex):
    ladder = ScaleLadder.for_grid(vortex.grid)
    pivots = pivot_fields(vortex, PivotConfig(roles=("f1", "f3")), ladder)
    return scale_fields(vortex, pivots, ladder)


def test_scale_fields_and_pointwise_bound(vortex_scales):
    assert set(vortex_scales.scales) == {"s1", "s3"}
    assert set(vortex_scales.violations) == {"s1", "s3"}
    positive = int(np.count_nonzero(vortex_scales.rstar > 0))
    assert positive > 0
    assert vortex_scales.checked == 2 * positive
    s3 = vortex_scales["s3"]
    np.testing.assert_allclose(s3.a_hat, s3.a_lt + s3.a_eq)
    ladder = vortex_scales.ladder
    inverse, bound = pointwise_bound(s3, vortex_scales.rstar, ladder.per_octave)
    assert inverse.shape == bound.shape == (positive,)
    rstar = vortex_scales.rstar[vortex_scales.rstar > 0]
    assert np.all(bound >= 1.0 / rstar)


def test_theorem_ratios_and_regularity_rows(vortex, vortex_scales):
    rows = theorem_ratios(vortex, vortex_scales)
    kinds = {row.name: row.kind for row in rows}
    assert kinds["pressure hessian"] == RATIO
    assert kinds["s1 pointwise bound"] == CHECK
    assert kinds["s3 pointwise bound"] == CHECK
    pressure = next(row for row in rows if row.name == "pressure hessian")
    assert 0 < pressure.lhs < math.inf

    constants = fitted_regularity_constants(vortex, vortex_scales, n_max=1)
    assert set(constants["scale"]) == {"s1", "s3"}
    assert list(constants.columns) == ["quantity", "scale", "n", "constant", "points"]
    named = regularity_rows(constants, 16, prefix="solver ")
    assert len(named) == len(constants)
    assert all(row.name.startswith("solver C_") for row in named)
    assert all(row.kind == RATIO and row.grid == 16 for row in named)
