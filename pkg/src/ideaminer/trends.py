"""Trend statistics over topic-term trajectories.

Correlation and regression run on short yearly series, so exactness matters
more than throughput: sums use ``math.fsum`` and p-values come from
:mod:`ideaminer.significance`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

from .significance import student_t_two_sided_p

REGRESSION_MIN_OBS = 4
ARIMA_MIN_OBS = 50
DEFAULT_ALPHA_LEVEL = 0.05


@dataclass(frozen=True)
class TermTrajectory:
    """Per-slice probability of one term inside one topic."""

    topic: int
    term: str
    years: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.years) != len(self.values):
            raise ValueError("years and values must have equal length")
        if any(a >= b for a, b in zip(self.years, self.years[1:])):
            raise ValueError("years must be strictly increasing")

    def __len__(self) -> int:
        return len(self.years)


@dataclass(frozen=True)
class CorrelationResult:
    term_a: str
    term_b: str
    r: float
    t_stat: float
    p_value: float
    n: int


@dataclass(frozen=True)
class ForecastResult:
    slope: float
    intercept: float
    r_squared: float
    rse: float
    slope_p_value: float
    n: int
    horizon: tuple[tuple[int, float], ...]
    horizon_clamped: tuple[tuple[int, float], ...]
    clamped: bool


@dataclass(frozen=True)
class MethodDecision:
    requested: str
    permitted: bool
    reason: str


def pearson_correlation(x, y, term_a: str = "x", term_b: str = "y") -> CorrelationResult:
    """Product-moment correlation with a two-sided t-test on n-2 df."""
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    if n != len(y):
        raise ValueError("series lengths differ")
    if n < 3:
        raise ValueError("correlation requires at least 3 paired observations")
    mean_x = math.fsum(x) / n
    mean_y = math.fsum(y) / n
    sxx = math.fsum((v - mean_x) ** 2 for v in x)
    syy = math.fsum((v - mean_y) ** 2 for v in y)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero variance: correlation undefined")
    sxy = math.fsum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    one_minus_r2 = 1.0 - r * r
    if one_minus_r2 <= 0.0:
        t_stat = math.copysign(math.inf, r)
        p_value = 0.0
    else:
        t_stat = r * math.sqrt((n - 2) / one_minus_r2)
        p_value = student_t_two_sided_p(t_stat, n - 2)
    return CorrelationResult(term_a, term_b, r, t_stat, p_value, n)


def ols_forecast(traj: TermTrajectory, horizon_years: int) -> ForecastResult:
    """Least-squares line over (year, value) with an extrapolated horizon.

    Years act as the regressor directly. Horizon predictions are the exact
    affine evaluations; a clamped copy confined to [0, 1] is carried
    alongside with a flag, since topic-term shares cannot leave that range.
    """
    n = len(traj)
    if n < REGRESSION_MIN_OBS:
        raise ValueError(
            f"regression requires at least {REGRESSION_MIN_OBS} observations, got {n}"
        )
    if horizon_years < 1:
        raise ValueError("horizon_years must be at least 1")
    years = [float(y) for y in traj.years]
    values = [float(v) for v in traj.values]
    mean_x = math.fsum(years) / n
    mean_y = math.fsum(values) / n
    sxx = math.fsum((x - mean_x) ** 2 for x in years)
    if sxx == 0.0:
        raise ValueError("zero variance in years: regression undefined")
    sxy = math.fsum((x - mean_x) * (y - mean_y) for x, y in zip(years, values))
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    residuals = [y - (intercept + slope * x) for x, y in zip(years, values)]
    sse = math.fsum(r * r for r in residuals)
    sst = math.fsum((y - mean_y) ** 2 for y in values)
    r_squared = 1.0 - sse / sst if sst > 0.0 else 0.0
    r_squared = max(0.0, min(1.0, r_squared))
    rse = math.sqrt(sse / (n - 2))
    se_slope = rse / math.sqrt(sxx)
    if se_slope == 0.0:
        t_stat = math.copysign(math.inf, slope) if slope != 0.0 else 0.0
        p_value = 0.0 if slope != 0.0 else 1.0
    else:
        t_stat = slope / se_slope
        p_value = student_t_two_sided_p(t_stat, n - 2)
    last = int(traj.years[-1])
    horizon = tuple(
        (year, intercept + slope * year) for year in range(last + 1, last + 1 + horizon_years)
    )
    horizon_clamped = tuple((year, min(1.0, max(0.0, v))) for year, v in horizon)
    clamped = any(hv != cv for (_, hv), (_, cv) in zip(horizon, horizon_clamped))
    return ForecastResult(
        slope=slope,
        intercept=intercept,
        r_squared=r_squared,
        rse=rse,
        slope_p_value=p_value,
        n=n,
        horizon=horizon,
        horizon_clamped=horizon_clamped,
        clamped=clamped,
    )


def method_gate(n_observations: int, requested: str) -> MethodDecision:
    """Decide whether a forecasting method is defensible at this series length.

    Refusals are ordinary results: the caller reports them instead of
    silently fitting an underpowered model.
    """
    if requested == "regression":
        if n_observations >= REGRESSION_MIN_OBS:
            return MethodDecision(
                "regression",
                True,
                f"linear regression is permitted with {n_observations} observations"
                f" (requires at least {REGRESSION_MIN_OBS})",
            )
        return MethodDecision(
            "regression",
            False,
            f"refused: regression needs at least {REGRESSION_MIN_OBS} observations,"
            f" got {n_observations}",
        )
    if requested == "arima":
        if n_observations < ARIMA_MIN_OBS:
            return MethodDecision(
                "arima",
                False,
                f"refused: ARIMA needs at least {ARIMA_MIN_OBS} observations,"
                f" got {n_observations}",
            )
        return MethodDecision(
            "arima",
            False,
            f"refused: the {ARIMA_MIN_OBS}-observation floor is met but ARIMA is"
            " not implemented; use regression",
        )
    raise ValueError(f"unknown method {requested!r}")


def classify_trend(
    forecast: ForecastResult, alpha_level: float = DEFAULT_ALPHA_LEVEL
) -> str:
    """"increasing" or "decreasing" when the slope is significant, else "flat"."""
    if not 0.0 < alpha_level < 1.0:
        raise ValueError("alpha_level must lie in (0, 1)")
    if forecast.slope > 0.0 and forecast.slope_p_value < alpha_level:
        return "increasing"
    if forecast.slope < 0.0 and forecast.slope_p_value < alpha_level:
        return "decreasing"
    return "flat"


@dataclass
class CorrelationMatrix:
    topic: int
    results: list[CorrelationResult] = field(default_factory=list)
    skipped_constant: list[str] = field(default_factory=list)


def correlation_matrix(model, topic: int, top_n: int = 10) -> CorrelationMatrix:
    """Pairwise correlations between a topic's leading terms over time.

    Candidates are the union of the per-slice top ``top_n`` terms. Constant
    series are skipped with a note. Pairs are ordered lexicographically, so
    the output is deterministic.
    """
    if top_n < 2:
        raise ValueError("top_n must be at least 2")
    n_slices = model.beta_.shape[0]
    if n_slices < 3:
        raise ValueError("correlation needs at least 3 time slices")
    candidates: set[str] = set()
    for t in range(n_slices):
        for term, _ in model.top_terms_at_slice(topic, t, top_n):
            candidates.add(str(term))
    series: dict[str, tuple[float, ...]] = {}
    skipped: list[str] = []
    for term in sorted(candidates):
        values = model.term_trajectory(topic, term).values
        if max(values) == min(values):
            skipped.append(term)
            continue
        series[term] = values
    if len(series) < 2:
        raise ValueError("fewer than 2 non-constant series; correlation undefined")
    matrix = CorrelationMatrix(topic=topic, skipped_constant=skipped)
    for term_a, term_b in combinations(sorted(series), 2):
        matrix.results.append(
            pearson_correlation(series[term_a], series[term_b], term_a, term_b)
        )
    return matrix
