"""
Verification reports. Every measured inequality becomes a row (lhs, rhs) tagged with
its grid and trial; rows with the same name form one report with a fitted constant
and a refinement series, and the report set decides the overall exit status.
"""
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas

from msa.utils import DEFAULT_REFINEMENT_BAND, ParameterError

logger = logging.getLogger(__name__)

RATIO = "ratio"
CHECK = "check"
INFO = "info"
KINDS = (RATIO, CHECK, INFO)

PASS = "PASS"
FAIL = "FAIL"
INFORMATIONAL = "INFO"


def ratio(lhs: float, rhs: float) -> float:
    """lhs / rhs with 0 / 0 = 0 and x / 0 = inf."""
    if lhs == 0:
        return 0.0
    if rhs == 0:
        return math.inf
    return lhs / rhs


def _number(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass(frozen=True)
class ReportRow:
    """
    One measurement. For ``check`` rows lhs is the measured quantity (often a
    violation count) and rhs the allowed value; the row holds when lhs <= rhs.
    """

    name: str
    lhs: float
    rhs: float
    anchor: str = ""
    kind: str = RATIO
    grid: int = 0
    trial: int = 0
    params: Dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"Unknown report kind {self.kind}")
        object.__setattr__(self, "lhs", float(self.lhs))
        object.__setattr__(self, "rhs", float(self.rhs))

    @property
    def ratio(self) -> float:
        return ratio(self.lhs, self.rhs)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "kind": self.kind,
            "grid": self.grid,
            "trial": self.trial,
            "lhs": _number(self.lhs),
            "rhs": _number(self.rhs),
            "ratio": _number(self.ratio),
            "params": {k: _number(v) for k, v in self.params.items()},
            "notes": self.notes,
        }


def refinement_stable(series: Dict[int, float], band: float = DEFAULT_REFINEMENT_BAND) -> bool:
    """
    Finest-grid value within +-band of the coarsest and no monotone doubling from
    grid to grid. A single grid only needs a finite value.
    """
    values = [series[grid] for grid in sorted(series)]
    if not values or not all(math.isfinite(v) for v in values):
        return False
    if len(values) == 1:
        return True
    coarse, fine = values[0], values[-1]
    if coarse == 0 and fine == 0:
        return True
    if coarse == 0 or abs(fine - coarse) > band * abs(coarse):
        return False
    doubling = all(b >= 2 * a > 0 for a, b in zip(values, values[1:]))
    return not doubling


@dataclass
class VerificationReport:
    name: str
    anchor: str = ""
    kind: str = RATIO
    band: float = DEFAULT_REFINEMENT_BAND
    rows: List[ReportRow] = field(default_factory=list)

    def add(self, row: ReportRow):
        if row.name != self.name:
            raise ParameterError(f"Row {row.name} does not belong to report {self.name}")
        self.rows.append(row)

    @property
    def fitted_constant(self) -> float:
        """Largest observed ratio; 0 without rows."""
        return max((row.ratio for row in self.rows), default=0.0)

    def refinement_series(self) -> Dict[int, float]:
        """Fitted constant per grid, ordered from coarse to fine."""
        series = {}
        for row in self.rows:
            series[row.grid] = max(series.get(row.grid, 0.0), row.ratio)
        return dict(sorted(series.items()))

    @property
    def verdict(self) -> str:
        if self.kind == INFO:
            return INFORMATIONAL
        if self.kind == CHECK:
            return PASS if all(row.lhs <= row.rhs for row in self.rows) else FAIL
        if not math.isfinite(self.fitted_constant):
            return FAIL
        return PASS if refinement_stable(self.refinement_series(), self.band) else FAIL

    @property
    def passed(self) -> bool:
        return self.verdict != FAIL

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "kind": self.kind,
            "verdict": self.verdict,
            "fitted_constant": _number(self.fitted_constant),
            "band": self.band,
            "refinement": {
                str(grid): _number(value) for grid, value in self.refinement_series().items()
            },
            "rows": [row.to_json() for row in self.rows],
        }


class ReportSet:
    """Reports keyed by name in insertion order."""

    def __init__(self, suite: str, band: float = DEFAULT_REFINEMENT_BAND):
        self.suite = suite
        self.band = band
        self._reports: "OrderedDict[str, VerificationReport]" = OrderedDict()
        self.errors: List[str] = []

    def add(self, row: ReportRow) -> ReportRow:
        report = self._reports.get(row.name)
        if report is None:
            report = VerificationReport(row.name, row.anchor, row.kind, self.band)
            self._reports[row.name] = report
        report.add(row)
        return row

    def extend(self, rows: Iterable[ReportRow]):
        for row in rows:
            self.add(row)

    def record_error(self, message: str):
        self.errors.append(message)

    @property
    def reports(self) -> List[VerificationReport]:
        return list(self._reports.values())

    def __getitem__(self, name: str) -> VerificationReport:
        return self._reports[name]

    def __contains__(self, name: str) -> bool:
        return name in self._reports

    @property
    def passed(self) -> bool:
        return not self.errors and all(report.passed for report in self.reports)

    def log_verdicts(self):
        for report in self.reports:
            logger.info(
                f"{self.suite}: {report.name} {report.verdict} "
                f"(fitted constant {report.fitted_constant:.4g}, {len(report.rows)} rows)"
            )

    def to_json(self) -> dict:
        return {
            "suite": self.suite,
            "verdict": PASS if self.passed else FAIL,
            "errors": list(self.errors),
            "reports": [report.to_json() for report in self.reports],
        }

    def to_frame(self) -> pandas.DataFrame:
        rows = []
        for report in self.reports:
            for row in report.rows:
                record = row.to_json()
                record["params"] = json.dumps(record["params"], sort_keys=True)
                record["verdict"] = report.verdict
                rows.append(record)
        columns = [
            "name",
            "anchor",
            "kind",
            "grid",
            "trial",
            "lhs",
            "rhs",
            "ratio",
            "verdict",
            "params",
            "notes",
        ]
        return pandas.DataFrame(rows, columns=columns)

    def write(self, report_path: Optional[Path] = None, csv_path: Optional[Path] = None):
        if report_path is not None:
            report_path = Path(report_path)
            report_path.parent.mkdir(exist_ok=True, parents=True)
            report_path.write_text(json.dumps(self.to_json(), indent=4))
            logger.info(f"Wrote report to {report_path}")
        if csv_path is not None:
            csv_path = Path(csv_path)
            csv_path.parent.mkdir(exist_ok=True, parents=True)
            self.to_frame().to_csv(csv_path, index=False)
