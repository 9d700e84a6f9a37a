"""Order statistics shared by every report.

Quantiles use the "lower" convention: the sorted sample at index
``floor(q * (n - 1))``. No interpolation, so every reported value is an
observed one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUANTILE_METHOD = "lower"
HEADER_NOTE = "# quantiles: lower interpolation (sorted[floor(q*(n-1))])"


def quantile(values, q: float) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan")
    return float(np.quantile(v, q, method=QUANTILE_METHOD))


@dataclass(frozen=True)
class Summary:
    median: float
    q1: float
    q3: float
    mean: float
    std: float
    count: int


def summarize(values) -> Summary:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        nan = float("nan")
        return Summary(nan, nan, nan, nan, nan, 0)
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return Summary(quantile(v, 0.5), quantile(v, 0.25), quantile(v, 0.75),
                   float(v.mean()), std, int(v.size))
