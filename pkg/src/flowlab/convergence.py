"""Convergence tables: (parameter, value) rows plus a fitted decay slope.

Every sweep experiment in the package (mollification scales, step sizes,
difference quotients) reports through this one structure so that tables
serialize uniformly and slopes are fitted the same way everywhere.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError


def report_slope(rows):
    """Least-squares slope of log(value) against log(parameter).

    ``rows`` is a sequence of (parameter, value) pairs, at least 3 of them,
    with positive parameters and values.  The returned slope is the fitted
    decay order: values ~ parameter**slope.
    """
    rows = list(rows)
    if len(rows) < 3:
        raise NumericError(f"slope fit needs >= 3 rows, got {len(rows)}")
    params = np.asarray([r[0] for r in rows], dtype=float)
    values = np.asarray([r[1] for r in rows], dtype=float)
    if np.any(params <= 0.0):
        raise NumericError("slope fit needs positive parameters")
    if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
        raise NumericError("slope fit needs positive finite values")
    x = np.log(params)
    y = np.log(values)
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


@dataclass
class ConvergenceReport:
    """Rows of (parameter, value) from one sweep, with helpers.

    ``label`` names the swept parameter (e.g. "eps", "h", "delta"),
    ``note`` records what the values measure.
    """

    label: str
    rows: list = field(default_factory=list)
    note: str = ""

    def add(self, param, value):
        self.rows.append((float(param), float(value)))

    @property
    def params(self):
        return np.asarray([r[0] for r in self.rows], dtype=float)

    @property
    def values(self):
        return np.asarray([r[1] for r in self.rows], dtype=float)

    def slope(self):
        return report_slope(self.rows)

    def nonincreasing(self, slack=0.0):
        """True when values never rise by more than ``slack`` (relative)."""
        v = self.values
        return bool(np.all(v[1:] <= v[:-1] * (1.0 + slack)))
