import json
from unittest import mock

import numpy as np
import pandas
import pytest

from msa.cli import main
from msa.field_core import GridSpec, ScalarField, TimeSpec, load_field, save_field
from msa.utils import EXIT_PASS, EXIT_RESOURCE, EXIT_USAGE


@pytest.fixture(autouse=True)
def quiet_cli():
    with mock.patch("msa.cli.setup_logging"), mock.patch(
        "msa.cli.get_commit", return_value="0123abc"
    ):
        yield


def run(*argv) -> int:
    with pytest.raises(SystemExit) as exit_info:
        main([str(arg) for arg in argv])
    return exit_info.value.code


def test_gen_then_lattice(tmp_path):
    series = tmp_path / "tg"
    assert run("gen", "--out", series, "--grid", 8, "--snapshots", 3, "--tmax", 0.2) == EXIT_PASS
    for name in ("velocity.msf", "vorticity.msf", "pressure.msf", "energy.csv", "series.json"):
        assert series.joinpath(name).is_file()
    config = json.loads(series.joinpath("config.json").read_text())
    assert config["command"] == "gen"
    assert config["commit"] == "0123abc"
    assert config["energy_holds"] is True

    out = tmp_path / "lattice"
    assert run("lattice", "--series", series, "--out", out) == EXIT_PASS
    table = pandas.read_csv(out / "lattice.csv")
    assert sorted(table["n"].unique()) == [0, 1, 2, 3]
    assert (table["value"] > 0).all()


def test_scale(tmp_path):
    grid = GridSpec.torus(16, 1.0, rank=2)
    save_field(ScalarField(grid, np.full((16, 16), 4.0)), tmp_path / "f.msf")
    out = tmp_path / "scale"
    code = run("scale", "--field", tmp_path / "f.msf", "--alpha", 1, "--out", out, "--prefix", "c")
    assert code == EXIT_PASS
    s = load_field(out / "c_s.msf")
    assert np.all(np.abs(np.log(s.data / 0.25)) <= np.log(2) / 8 + 1e-12)
    assert load_field(out / "c_label.msf").data.max() == 0.0
    config = json.loads(out.joinpath("config.json").read_text())
    assert config["mode"] == "space"
    assert config["sing"] == 0


def test_lagrangian_scale_without_drift(tmp_path):
    grid = GridSpec.torus(8, 1.0, rank=2)
    time = TimeSpec(4, 0.01, 0.0)
    data = np.random.default_rng(0).uniform(0.0, 50.0, (4, 8, 8))
    save_field(ScalarField(grid, data, time), tmp_path / "f.msf")
    out = tmp_path / "capped"
    code = run("lagrangian-scale", "--field", tmp_path / "f.msf", "--alpha", 2, "--out", out)
    assert code == EXIT_PASS
    labels = load_field(out / "field_labels.msf")
    assert labels.time == time
    assert set(np.unique(labels.data)) <= {0.0, 1.0, 2.0, 3.0}
    cylinders = json.loads(out.joinpath("field_cylinders.json").read_text())
    assert all(c["admissible"] for c in cylinders)
    config = json.loads(out.joinpath("config.json").read_text())
    assert sum(config["labels"].values()) == data.size
    assert config["rstar_violations"] == 0


def test_cantor(tmp_path):
    assert run("cantor", "--depth", 3, "--out", tmp_path) == EXIT_PASS
    report = json.loads(tmp_path.joinpath("cantor.json").read_text())
    assert report["holds"] is True
    assert len(pandas.read_csv(tmp_path / "cantor.csv")) == 3


def test_verify(tmp_path):
    assert run("verify", "--suite", "cantor", "--depth", 3, "--out", tmp_path) == EXIT_PASS
    report = json.loads(tmp_path.joinpath("cantor.json").read_text())
    assert report["verdict"] == "PASS"
    assert report["suite"] == "cantor"


@pytest.mark.parametrize(
    "argv, code",
    [
        (("verify", "--suite", "nope"), EXIT_USAGE),
        (("scale", "--field", "missing.msf", "--alpha", "1"), EXIT_USAGE),
        (("scale", "--alpha", "1"), EXIT_USAGE),
        (("gen", "--field", "turbulence"), EXIT_USAGE),
        (("cantor", "--depth", "13"), EXIT_RESOURCE),
        (("verify", "--suite", "trace-space", "--grids", "15"), EXIT_USAGE),
    ],
)
def test_exit_codes(tmp_path, argv, code):
    assert run(*argv, "--out", tmp_path) == code


def test_lagrangian_scale_needs_time_axis(tmp_path):
    grid = GridSpec.torus(8, 1.0, rank=2)
    save_field(ScalarField(grid, np.ones((8, 8))), tmp_path / "f.msf")
    code = run("lagrangian-scale", "--field", tmp_path / "f.msf", "--alpha", 2, "--out", tmp_path)
    assert code == EXIT_USAGE
