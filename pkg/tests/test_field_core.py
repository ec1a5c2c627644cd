import math

import numpy as np
import pytest

from msa.field_core import (
    PERIODIC,
    ZERO_OUTSIDE,
    GraphFamily,
    GridSpec,
    ScalarField,
    TimeSpec,
    VectorField,
    interpolate,
    load_field,
    parabolic_distance,
    r_star,
    r_star_field,
    save_field,
)
from msa.utils import DomainError, FormatError, ParameterError, TruncationError


def test_grid_constructors():
    torus = GridSpec.torus(8, 1.0, rank=2)
    assert torus.n == (8, 8)
    assert torus.h == (0.125, 0.125)
    assert torus.all_periodic
    assert torus.extent == (1.0, 1.0)

    box = GridSpec.box(4, 0.0, 2.0, rank=2)
    assert box.periodic == (False, False)
    assert box.cell_volume == pytest.approx(0.25)
    assert box.points().shape == (16, 2)
    np.testing.assert_allclose(box.axes()[0], [0.25, 0.75, 1.25, 1.75])

    centered = GridSpec.centered(5, 2.5, 2)
    np.testing.assert_allclose(centered.axes()[1][2], 0.0, atol=1e-15)


@pytest.mark.parametrize(
    "n, h, match",
    [((1, 4), 0.5, "at least 2"), ((4,), 0.0, "spacing"), ((2, 2, 2, 2), 1.0, "rank")],
)
def test_grid_rejects(n, h, match):
    with pytest.raises(ParameterError, match=match):
        GridSpec(n, h, False)


def test_grid_geometry():
    torus = GridSpec.torus(4, 1.0)
    np.testing.assert_allclose(torus.wrap(np.array([[0.9]])), [[-0.1]])
    assert math.isinf(torus.dist_to_boundary(np.array([0.3])))

    box = GridSpec.box(4, 0.0, 1.0, rank=2)
    assert box.dist_to_boundary(np.array([0.1, 0.3])) == pytest.approx(0.1)
    assert box.contains(np.array([[0.5, 0.5], [1.5, 0.5]])).tolist() == [True, False]
    flat, inside = box.nearest_index(np.array([[0.3, 0.8], [-0.1, 0.1]]))
    assert flat[0] == 1 * 4 + 3
    assert inside.tolist() == [True, False]


def test_time_spec():
    time = TimeSpec(5, 0.1, 0.2)
    np.testing.assert_allclose(time.times, [0.2, 0.3, 0.4, 0.5, 0.6])
    assert time.t_last == pytest.approx(0.6)
    assert time.window(0.5) == 2
    assert time.window(0.1) == 0
    with pytest.raises(ParameterError, match="at least one time slice"):
        TimeSpec(0, 0.1)
    with pytest.raises(ParameterError, match="Timestep"):
        TimeSpec(3, -1.0)


def test_interpolate_box_and_torus():
    box = GridSpec.box(4, 0.0, 1.0)
    linear = box.axes()[0]
    assert interpolate(linear, box, [[0.3]])[0] == pytest.approx(0.3)
    # beyond the last centre the missing neighbour reads zero
    assert interpolate(linear, box, [[0.95]])[0] == pytest.approx(0.7 * 0.875)

    torus = GridSpec.torus(4, 1.0)
    values = np.array([0.0, 1.0, 2.0, 3.0])
    assert interpolate(values, torus, [[0.0]])[0] == pytest.approx(1.5)


def test_scalar_field_validation():
    grid = GridSpec.box(4, 0.0, 1.0, rank=2)
    f = ScalarField(grid, np.arange(16.0))
    assert f.data.shape == (4, 4)
    assert f.extension == ZERO_OUTSIDE
    assert not f.data.flags.writeable
    assert ScalarField(GridSpec.torus(4, 1.0), np.zeros(4)).extension == PERIODIC
    with pytest.raises(ParameterError, match="samples"):
        ScalarField(grid, np.zeros(15))
    with pytest.raises(ParameterError, match="finite"):
        ScalarField(grid, np.full(16, np.nan))
    with pytest.raises(ParameterError, match="periodic grid"):
        ScalarField(grid, np.zeros(16), extension=PERIODIC)


def test_spacetime_sample_is_linear_in_time_and_zero_outside():
    grid = GridSpec.torus(4, 1.0, rank=2)
    time = TimeSpec(3, 0.5, 0.0)
    data = np.stack([np.full((4, 4), k + 1.0) for k in range(3)])
    f = ScalarField(grid, data, time)
    point = [[0.3, 0.6]]
    assert f.sample(point, 0.25)[0] == pytest.approx(1.5)
    assert f.sample(point, -0.25)[0] == pytest.approx(0.5)
    assert f.sample(point, 1.25)[0] == pytest.approx(1.5)
    assert f.sample(point, 2.0)[0] == 0.0
    assert f.slices().shape == (3, 4, 4)


def test_vector_field():
    grid = GridSpec.torus(4, 1.0, rank=2)
    v = VectorField.from_array(grid, np.stack([np.full((4, 4), 3.0), np.full((4, 4), 4.0)]))
    assert v.dim == 2
    np.testing.assert_allclose(v.magnitude().data, 5.0)
    other = ScalarField(GridSpec.torus(8, 1.0, rank=2), np.zeros((8, 8)))
    with pytest.raises(ParameterError, match="share grid"):
        VectorField((v.components[0], other))


def test_graph_families():
    grid = GridSpec.box(4, 0.0, 1.0, rank=2)
    whole = GraphFamily.whole_domain(grid)
    assert whole.d == 2
    np.testing.assert_allclose(whole.points(0), grid.points())
    assert whole.cell_volumes().sum() == pytest.approx(1.0)

    time = TimeSpec(3, 0.1, 0.0)
    plane = GraphFamily.hyperplane(grid, 0, 0.5, time, velocity=1.0)
    assert plane.d == 1
    assert plane.normal_axes == (0,)
    np.testing.assert_allclose(plane.points(2)[:, 0], 0.7)
    np.testing.assert_allclose(plane.slope_factor(0), 1.0)
    assert plane.cell_volumes().sum() == pytest.approx(1.0)

    with pytest.raises(ParameterError, match="leaves the domain"):
        GraphFamily.hyperplane(grid, 0, 2.0)


def test_graph_lipschitz_bound():
    grid = GridSpec.box(4, 0.0, 1.0, rank=2)
    heights = np.array([0.2, 0.8, 0.2, 0.8]).reshape(1, 4, 1)
    with pytest.raises(ParameterError, match="Lipschitz"):
        GraphFamily(grid, (1,), (grid.edges(1),), heights, [0.0], [1.0], lipschitz=1.0)
    gamma = GraphFamily(grid, (1,), (grid.edges(1),), heights, [0.0], [1.0], lipschitz=3.0)
    assert gamma.slope_factor(0).max() > 1.0


def test_save_and_load(tmp_path):
    grid = GridSpec.box(4, -1.0, 1.0, rank=2)
    time = TimeSpec(2, 0.25, 0.5)
    data = np.random.default_rng(0).normal(size=(2, 2, 4, 4))
    v = VectorField.from_array(grid, data, time)
    save_field(v, tmp_path / "v.msf", "velocity")
    loaded = load_field(tmp_path / "v.msf")
    assert isinstance(loaded, VectorField)
    assert loaded.grid == grid
    assert loaded.time == time
    np.testing.assert_array_equal(loaded.stack(), data)


def test_load_rejects_corrupt_files(tmp_path):
    with pytest.raises(OSError, match="could not be found"):
        load_field(tmp_path / "missing.msf")

    f = ScalarField(GridSpec.torus(4, 1.0), np.arange(4.0))
    path = tmp_path / "f.msf"
    save_field(f, path)
    raw = path.read_bytes()

    path.write_bytes(raw[:-8])
    with pytest.raises(TruncationError, match="payload bytes"):
        load_field(path)

    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        load_field(path)

    path.write_bytes(raw)
    path.with_suffix(".json").unlink()
    with pytest.raises(FormatError, match="sidecar"):
        load_field(path)


def test_r_star():
    box = GridSpec.box(4, 0.0, 1.0, rank=2)
    assert r_star(0.04, [0.5, 0.5], box) == pytest.approx(0.05)
    assert r_star(1.0, [0.1, 0.5], box, lipschitz=1.0) == pytest.approx(0.02)
    with pytest.raises(DomainError, match="t > 0"):
        r_star(0.0, [0.5, 0.5], box)

    field = r_star_field(box, TimeSpec(3, 0.04, 0.0))
    assert field.shape == (3, 4, 4)
    np.testing.assert_array_equal(field[0], 0.0)
    assert field[1, 1, 1] == pytest.approx(0.05)


def test_parabolic_distance():
    assert parabolic_distance((1.0, [0.0]), (0.0, [0.0])) == pytest.approx(1.0)
    assert parabolic_distance((0.0, [0.0, 3.0]), (0.0, [4.0, 0.0])) == pytest.approx(5.0)
    torus = GridSpec.torus(4, 1.0)
    assert parabolic_distance((0.0, [0.05]), (0.0, [0.95]), torus) == pytest.approx(0.1)
