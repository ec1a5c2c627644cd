import json
import logging
import math

import pandas
import pytest

from msa.report import (
    CHECK,
    FAIL,
    INFO,
    INFORMATIONAL,
    PASS,
    ReportRow,
    ReportSet,
    VerificationReport,
    ratio,
    refinement_stable,
)
from msa.utils import ParameterError


def test_ratio():
    assert ratio(0.0, 0.0) == 0.0
    assert ratio(1.0, 0.0) == math.inf
    assert ratio(3.0, 2.0) == 1.5


@pytest.mark.parametrize(
    "series, expected",
    [
        ({16: 1.0}, True),
        ({16: math.inf}, False),
        ({16: 1.0, 32: 1.2}, True),
        ({16: 1.0, 32: 1.5}, False),
        ({16: 0.0, 32: 0.0}, True),
        ({16: 0.0, 32: 0.1}, False),
        ({}, False),
    ],
)
def test_refinement_stable(series, expected):
    assert refinement_stable(series, 0.3) is expected


def test_row_validation_and_json():
    with pytest.raises(ParameterError, match="Unknown report kind"):
        ReportRow("x", 1.0, 1.0, kind="guess")
    row = ReportRow("x", math.inf, 1.0, params={"alpha": 2})
    dumped = row.to_json()
    assert dumped["lhs"] == "inf"
    assert dumped["ratio"] == "inf"
    assert dumped["params"] == {"alpha": 2}


def test_report_verdicts():
    report = VerificationReport("bound")
    report.add(ReportRow("bound", 1.0, 2.0, grid=16))
    report.add(ReportRow("bound", 1.1, 2.0, grid=32))
    assert report.fitted_constant == pytest.approx(0.55)
    assert report.refinement_series() == {16: 0.5, 32: 0.55}
    assert report.verdict == PASS
    report.add(ReportRow("bound", 3.0, 1.0, grid=64))
    assert report.verdict == FAIL
    with pytest.raises(ParameterError, match="does not belong"):
        report.add(ReportRow("other", 1.0, 1.0))

    check = VerificationReport("count", kind=CHECK, rows=[ReportRow("count", 0, 0, kind=CHECK)])
    assert check.verdict == PASS
    check.add(ReportRow("count", 2, 0, kind=CHECK))
    assert check.verdict == FAIL

    info = VerificationReport("norms", kind=INFO, rows=[ReportRow("norms", 9.0, 1.0, kind=INFO)])
    assert info.verdict == INFORMATIONAL
    assert info.passed


def test_report_set(tmp_path, caplog):
    caplog.set_level(logging.INFO)
    reports = ReportSet("trace")
    reports.extend(
        [
            ReportRow("bound", 1.0, 2.0, "trace bound", grid=16),
            ReportRow("count", 0, 0, kind=CHECK, grid=16),
        ]
    )
    assert "bound" in reports
    assert reports["bound"].anchor == "trace bound"
    assert reports.passed
    reports.log_verdicts()
    assert caplog.messages[0] == "trace: bound PASS (fitted constant 0.5, 1 rows)"

    reports.write(tmp_path / "out" / "report.json", tmp_path / "out" / "report.csv")
    dumped = json.loads((tmp_path / "out" / "report.json").read_text())
    assert dumped["verdict"] == PASS
    assert [r["name"] for r in dumped["reports"]] == ["bound", "count"]
    frame = pandas.read_csv(tmp_path / "out" / "report.csv")
    assert frame["verdict"].tolist() == [PASS, PASS]

    reports.record_error("grid 64 failed")
    assert not reports.passed
    assert reports.to_json()["verdict"] == FAIL
