"""Statistics for the evaluation harness.

Everything here is self-contained: rank tests, OLS interrupted-time-series
inference, Spearman correlation, and the tail functions they need. numpy is
used only for the least-squares solve; the statistical inference itself is
implemented directly so it can be cross-checked against independent oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

# Beyond this many subset assignments, exact permutation enumeration for the
# rank-sum test is replaced by the normal approximation.
_EXACT_ENUMERATION_LIMIT = 200_000
_EXACT_MAX_N = 20


class DegenerateInputError(ValueError):
    """Raised when an input has no variation to carry a statistic."""


def _rankdata(values: Sequence[float]) -> list[float]:
    """Average ranks (1-based); ties share the mean of their ordinal ranks."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def normal_sf(x: float) -> float:
    """Survival function of the standard normal."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-16:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(x: float, df: float) -> float:
    """Survival function of Student's t distribution."""
    if math.isnan(x):
        return float("nan")
    p = 0.5 * betainc(df / 2.0, 0.5, df / (df + x * x))
    return p if x >= 0 else 1.0 - p


def t_ppf(q: float, df: float) -> float:
    """Quantile of Student's t, by bisection on the CDF."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile must lie in (0, 1)")
    lo, hi = -1e6, 1e6
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if 1.0 - t_sf(mid, df) < q:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


@dataclass(frozen=True, slots=True)
class MannWhitneyResult:
    u: float  # U statistic of the first sample
    u_other: float
    p_value: float
    method: str  # "exact" or "normal"


def _exact_p_no_ties(n: int, m: int, u_obs: float) -> float:
    """Two-sided exact p by counting rank-sum subsets (no ties).

    Counts the number of size-n subsets of ranks 1..n+m per rank sum using
    dynamic programming, then takes 2 * min(P(U <= u), P(U >= u)) capped at 1.
    """
    total_ranks = n + m
    max_sum = sum(range(total_ranks - n + 1, total_ranks + 1))
    # ways[k][s]: subsets of size k summing to s
    ways = [[0] * (max_sum + 1) for _ in range(n + 1)]
    ways[0][0] = 1
    for r in range(1, total_ranks + 1):
        for k in range(min(r, n), 0, -1):
            row, prev = ways[k], ways[k - 1]
            for s in range(max_sum, r - 1, -1):
                if prev[s - r]:
                    row[s] += prev[s - r]
    counts = ways[n]
    total = sum(counts)
    offset = n * (n + 1) // 2  # U = ranksum - offset
    le = sum(c for s, c in enumerate(counts) if s - offset <= u_obs)
    ge = sum(c for s, c in enumerate(counts) if s - offset >= u_obs)
    return min(1.0, 2.0 * min(le, ge) / total)


def _exact_p_enumerate(pooled: list[float], n: int, u_obs: float) -> float:
    """Two-sided exact p by literal enumeration of group assignments.

    Valid with ties; only used when C(n+m, n) is small enough.
    """
    ranks = _rankdata(pooled)
    offset = n * (n + 1) / 2.0
    le = ge = total = 0
    for combo in combinations(range(len(pooled)), n):
        u = sum(ranks[i] for i in combo) - offset
        total += 1
        if u <= u_obs + 1e-12:
            le += 1
        if u >= u_obs - 1e-12:
            ge += 1
    return min(1.0, 2.0 * min(le, ge) / total)


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test.

    U is reported for the first sample. Exact enumeration is used for small
    samples (dynamic programming when tie-free, literal enumeration when ties
    keep C(n+m, n) tractable); otherwise the normal approximation with tie
    correction and continuity correction applies. Identical samples with zero
    variation yield p = 1.
    """
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    n, m = len(a), len(b)
    pooled = list(a) + list(b)
    ranks = _rankdata(pooled)
    rank_sum_a = sum(ranks[:n])
    u_a = rank_sum_a - n * (n + 1) / 2.0
    u_b = n * m - u_a

    if all(v == pooled[0] for v in pooled):
        return MannWhitneyResult(u_a, u_b, 1.0, "degenerate")

    has_ties = len(set(pooled)) < len(pooled)
    if not has_ties and max(n, m) <= _EXACT_MAX_N:
        return MannWhitneyResult(u_a, u_b, _exact_p_no_ties(n, m, u_a), "exact")
    if has_ties and math.comb(n + m, n) <= _EXACT_ENUMERATION_LIMIT:
        return MannWhitneyResult(u_a, u_b, _exact_p_enumerate(pooled, n, u_a), "exact")

    total = n + m
    seen: dict[float, int] = {}
    for v in pooled:
        seen[v] = seen.get(v, 0) + 1
    tie_sizes = [c for c in seen.values() if c > 1]
    tie_term = sum(t**3 - t for t in tie_sizes) / (total * (total - 1)) if total > 1 else 0.0
    var = n * m / 12.0 * (total + 1 - tie_term)
    mean = n * m / 2.0
    numerator = abs(u_a - mean) - 0.5  # continuity correction
    z = max(numerator, 0.0) / math.sqrt(var)
    return MannWhitneyResult(u_a, u_b, min(1.0, 2.0 * normal_sf(z)), "normal")


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation with average-rank tie handling."""
    if len(xs) != len(ys):
        raise ValueError("inputs must have equal length")
    if len(xs) < 2:
        raise ValueError("need at least two observations")
    rx, ry = _rankdata(xs), _rankdata(ys)
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    sxx = sum((r - mx) ** 2 for r in rx)
    syy = sum((r - my) ** 2 for r in ry)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("zero variance input")
    sxy = sum((p - mx) * (q - my) for p, q in zip(rx, ry))
    return sxy / math.sqrt(sxx * syy)


@dataclass(frozen=True, slots=True)
class ItsResult:
    """OLS fit of value ~ intercept + time + intervention(0/1)."""

    coef: tuple[float, float, float]  # (intercept, time, intervention)
    stderr: tuple[float, float, float]
    p_values: tuple[float, float, float]
    residuals: tuple[float, ...]
    df: int

    NAMES = ("intercept", "time", "intervention")

    def to_dict(self) -> dict:
        return {
            name: {"coef": c, "stderr": s, "p_value": p}
            for name, c, s, p in zip(self.NAMES, self.coef, self.stderr, self.p_values)
        }


def interrupted_time_series(values: Sequence[float], intervention_index: int) -> ItsResult:
    """Interrupted time series via OLS with a binary step at the intervention.

    Requires at least 3 observations on each side. On a perfect (zero
    residual) fit the standard errors are 0 and p-values are NaN.
    """
    n = len(values)
    if intervention_index < 3 or n - intervention_index < 3:
        raise ValueError("need >= 3 observations on each side of the intervention")
    x = np.column_stack(
        [
            np.ones(n),
            np.arange(n, dtype=float),
            (np.arange(n) >= intervention_index).astype(float),
        ]
    )
    y = np.asarray(values, dtype=float)
    if np.linalg.matrix_rank(x) < 3:
        raise ValueError("rank-deficient design matrix")
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    residuals = y - x @ coef
    df = n - 3
    rss = float(residuals @ residuals)
    # rounding noise on an exact fit is not residual variance
    perfect = rss <= 1e-20 * max(1.0, float(y @ y))
    sigma2 = 0.0 if perfect else rss / df
    cov = sigma2 * np.linalg.inv(x.T @ x)
    stderr = np.sqrt(np.diag(cov))
    p_values = []
    for c, se in zip(coef, stderr):
        if se == 0.0:
            p_values.append(float("nan"))
        else:
            p_values.append(min(1.0, 2.0 * t_sf(abs(c / se), df)))
    return ItsResult(
        coef=tuple(float(c) for c in coef),
        stderr=tuple(float(s) for s in stderr),
        p_values=tuple(p_values),
        residuals=tuple(float(r) for r in residuals),
        df=df,
    )


def relative_difference(treatment: float, control: float) -> float:
    """Percent change of treatment relative to control: 100*(t - c)/c."""
    if control == 0:
        raise ValueError("control must be nonzero")
    return 100.0 * (treatment - control) / control


def format_percent(value: float, digits: int = 1) -> str:
    return f"{value:.{digits}f}%"


def apply_funnel(initial: int, removals: Sequence[int]) -> list[int]:
    """Remaining counts after each curation stage, starting from initial."""
    remaining = [initial]
    for removed in removals:
        nxt = remaining[-1] - removed
        if nxt < 0:
            raise ValueError("funnel removes more cases than remain")
        remaining.append(nxt)
    return remaining


def mean_ci95(values: Sequence[float]) -> tuple[float, float, float]:
    """Mean and 95% CI over repeat means, using Student's t (df = n - 1)."""
    n = len(values)
    if n == 0:
        raise ValueError("no values")
    mean = sum(values) / n
    if n == 1:
        return mean, mean, mean
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    half = t_ppf(0.975, n - 1) * math.sqrt(var / n)
    return mean, mean - half, mean + half


def quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    """(Q1, median, Q3) with linear interpolation."""
    if not values:
        raise ValueError("no values")
    q1, q2, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q1), float(q2), float(q3)


def cohort_table(
    name_a: str,
    a: Sequence[float],
    name_b: str,
    b: Sequence[float],
    *,
    value_label: str = "value",
) -> str:
    """Plain-text cohort comparison table: counts, quartiles, relative diffs.

    Mirrors the usual "with/without" layout: one row per cohort plus a
    relative-difference row computed treatment-vs-control per quartile.
    """
    qa, qb = quartiles(a), quartiles(b)
    rel = tuple(relative_difference(x, y) for x, y in zip(qa, qb))
    rows = [
        ("Cohort", "N", "Q1", "Median", "Q3"),
        (name_a, str(len(a)), *(f"{v:.2f}" for v in qa)),
        (name_b, str(len(b)), *(f"{v:.2f}" for v in qb)),
        ("Relative Difference (%)", "", *(f"{v:+.1f}%" for v in rel)),
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = []
    for idx, row in enumerate(rows):
        lines.append(" | ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return f"[{value_label}]\n" + "\n".join(lines)


def rolling_mean(points: Sequence[tuple[int, float]], window: int) -> list[tuple[int, float]]:
    """Trailing-window mean of (position, value) points over the last
    ``window`` positions inclusive; positions with no covered points are
    omitted."""
    if window < 1:
        raise ValueError("window must be >= 1")
    by_pos: dict[int, list[float]] = {}
    for pos, val in points:
        by_pos.setdefault(pos, []).append(val)
    if not by_pos:
        return []
    out = []
    for pos in range(min(by_pos), max(by_pos) + 1):
        vals = [v for p in range(pos - window + 1, pos + 1) for v in by_pos.get(p, ())]
        if vals:
            out.append((pos, sum(vals) / len(vals)))
    return out
