"""Validation errors, wall-clock timing and the grid cost model.

The cost model counts Gram-solve work as the square of the system size
times the number of right-hand-side systems per level::

    hkrls_cost(m) = sum_i (prod_{k > i} m_k) * m_i**2
    krls_cost(m)  = (prod_k m_k)**2

Both are evaluated with Python integers, so they never overflow.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "BenchReport",
    "CostEstimate",
    "DominanceReport",
    "error_metrics",
    "hkrls_cost",
    "krls_cost",
    "level_costs",
    "cost_estimate",
    "cost_dominance_check",
    "timed",
    "REPORT_COLUMNS",
    "TIME_COLUMNS",
    "reports_to_csv",
    "reports_to_markdown",
]


def error_metrics(predicted, actual, train_max: float):
    """Maximum and mean absolute error plus the normalised maximum.

    Returns
    -------
    (max_abs, avg_abs, normalized)
        ``normalized`` is ``max_abs / train_max``, or ``None`` when
        ``train_max`` is zero.
    """
    p = np.asarray(predicted, dtype=float).ravel()
    a = np.asarray(actual, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("error_metrics needs at least one value")
    if p.shape != a.shape:
        raise ValueError(f"{p.size} predictions for {a.size} actual values")
    r = np.abs(p - a)
    mx = float(r.max())
    # the rounded mean of equal residuals can land an ulp above their max
    avg = min(float(r.mean()), mx)
    train_max = abs(float(train_max))
    return mx, avg, (mx / train_max if train_max > 0 else None)


def _counts(m) -> tuple:
    m = tuple(m)
    if not m:
        raise ValueError("need at least one axis count")
    for k, v in enumerate(m):
        if isinstance(v, bool) or int(v) != v or v < 1:
            raise ValueError(f"axis count m_{k} must be an integer >= 1, got {v!r}")
    return tuple(int(v) for v in m)


def level_costs(m) -> list:
    """Per-level terms ``(prod_{k > i} m_k) * m_i**2`` of :func:`hkrls_cost`."""
    m = _counts(m)
    return [math.prod(m[i + 1:]) * m[i] ** 2 for i in range(len(m))]


def hkrls_cost(m) -> int:
    return sum(level_costs(m))


def krls_cost(m) -> int:
    return math.prod(_counts(m)) ** 2


@dataclass(frozen=True)
class CostEstimate:
    counts: tuple
    hkrls_cost: int
    krls_cost: int

    @property
    def ratio(self) -> float:
        return self.hkrls_cost / self.krls_cost


def cost_estimate(m) -> CostEstimate:
    m = _counts(m)
    return CostEstimate(m, hkrls_cost(m), krls_cost(m))


@dataclass
class DominanceReport:
    """Outcome of :func:`cost_dominance_check`.

    The equal-count sweep is exhaustive; the unequal sweep is an empirical
    sample and is reported separately.
    """

    equal_checked: int = 0
    random_checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def cost_dominance_check(n_max: int = 4, m_max: int = 10, n_random: int = 1000,
                         seed: int = 0) -> DominanceReport:
    """Check ``hkrls_cost < krls_cost`` over grids with ``n + 1`` axes.

    Every equal-count grid with ``m`` in ``[2, m_max]`` and ``n`` in
    ``[1, n_max]`` is checked, then ``n_random`` seeded random grids with
    unequal counts in ``[2, m_max]``.
    """
    if n_max < 1 or m_max < 2:
        raise ValueError("need n_max >= 1 and m_max >= 2")
    rep = DominanceReport()
    for n in range(1, n_max + 1):
        for m in range(2, m_max + 1):
            c = cost_estimate((m,) * (n + 1))
            rep.equal_checked += 1
            if not c.hkrls_cost < c.krls_cost:
                rep.violations.append(c)
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        n = int(rng.integers(1, n_max + 1))
        counts = tuple(int(v) for v in rng.integers(2, m_max + 1, size=n + 1))
        c = cost_estimate(counts)
        rep.random_checked += 1
        if not c.hkrls_cost < c.krls_cost:
            rep.violations.append(c)
    return rep


def timed(fn: Callable, *args, **kwargs):
    """Run ``fn`` once and return ``(result, seconds)`` on the monotonic clock."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


@dataclass
class BenchReport:
    """One method's row in a benchmark table."""

    method: str
    train_seconds: float
    max_abs_error: float
    avg_abs_error: float
    normalized_error: Optional[float]
    train_counts: tuple
    validation_counts: tuple
    seed: int
    config: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def row(self) -> dict:
        d = asdict(self)
        d["train_counts"] = "x".join(map(str, self.train_counts))
        d["validation_counts"] = "x".join(map(str, self.validation_counts))
        d["config"] = json.dumps(self.config, sort_keys=True)
        return d


REPORT_COLUMNS = ("method", "train_seconds", "max_abs_error", "avg_abs_error",
                  "normalized_error", "train_counts", "validation_counts", "seed",
                  "status", "config")
TIME_COLUMNS = ("train_seconds",)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def reports_to_csv(reports: Sequence[BenchReport], include_time: bool = True) -> str:
    cols = [c for c in REPORT_COLUMNS if include_time or c not in TIME_COLUMNS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in reports:
        row = r.row()
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def _num(v, spec: str) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    return format(v, spec)


def reports_to_markdown(reports: Sequence[BenchReport]) -> str:
    lines = [
        "| Method | Training Time (s) | Maximum Validation Error | Average Validation Error "
        "| Normalized Error | Status |",
        "|---|---:|---:|---:|---:|---|",
    ]
    for r in reports:
        lines.append(
            f"| {r.method} | {_num(r.train_seconds, '.4f')} | {_num(r.max_abs_error, '.4g')} "
            f"| {_num(r.avg_abs_error, '.4g')} | {_num(r.normalized_error, '.4g')} | {r.status} |")
    return "\n".join(lines) + "\n"
