"""Expanding-window backtests, error metrics and model diagnostics."""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from sigmort.decomposition import BasisModel, fit_fpca, fit_huts, fit_lc
from sigmort.errors import DegenerateDataError, DomainError, InsufficientDataError, SigmortError
from sigmort.forecast import forecast_lc, point_forecast
from sigmort.ingest import LogMortalitySurface
from sigmort.smoothing import SmoothParams, SmoothSurface, smooth_surface
from sigmort.uncertainty import (
    bias_corrected_interval,
    bootstrap_variants,
    coeff_forecast_errors,
    normal_interval,
    percentile_interval,
)

log = logging.getLogger(__name__)

MODEL_TAGS = ("huts", "hu", "lc")
MODEL_NAMES = {"huts": "HUts", "hu": "HU", "lc": "LC"}
INTERVAL_METHODS = ("normal", "bootstrap", "bias_corrected")


@dataclass(frozen=True)
class BacktestSpec:
    model: str = "huts"
    m: int = 2
    K: int = 6
    H: int = 10
    first_forecast_year: Optional[int] = None
    last_origin_year: Optional[int] = None
    seed: int = 0
    levels: tuple = ()
    L: int = 1000
    center: bool = False

    def __post_init__(self):
        if self.model not in MODEL_TAGS:
            raise ValueError(f"model must be one of {MODEL_TAGS}, got {self.model!r}")
        if self.H < 1:
            raise ValueError("H must be >= 1")
        if (
            self.first_forecast_year is not None
            and self.last_origin_year is not None
            and self.first_forecast_year > self.last_origin_year + 1
        ):
            raise ValueError("first_forecast_year must be <= last_origin_year + 1")

    def origins(self, end_year: int) -> np.ndarray:
        first = end_year - 19 if self.first_forecast_year is None else self.first_forecast_year
        last = end_year - 1 if self.last_origin_year is None else self.last_origin_year
        return np.arange(first - 1, last + 1)


@dataclass
class BacktestReport:
    """One row per (origin, horizon, age) with forecasts and optional bounds.

    Interval bounds live in ``bounds[(method, level)] = (lower, upper)``
    aligned with the record columns.
    """

    spec: BacktestSpec
    ages: np.ndarray
    origin: np.ndarray
    horizon: np.ndarray
    age: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray
    bounds: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def __len__(self):
        return self.origin.size

    @property
    def errors(self) -> np.ndarray:
        return self.actual - self.predicted

    def horizons(self) -> np.ndarray:
        return np.unique(self.horizon)

    def select(self, h) -> np.ndarray:
        mask = self.horizon == h
        if not mask.any():
            raise InsufficientDataError(f"report has no records at horizon {h}")
        return mask

    def coverage(self, method: str, level: float, h=None) -> float:
        lo, hi = self.bounds[(method, level)]
        mask = np.ones(len(self), dtype=bool) if h is None else self.select(h)
        inside = (lo < self.actual) & (self.actual < hi)
        return float(inside[mask].mean())


def _fit(spec, smoothed, log_surface):
    if spec.model == "huts":
        return fit_huts(smoothed, spec.m, spec.K, center=spec.center)
    if spec.model == "hu":
        return fit_fpca(smoothed, spec.K)
    return fit_lc(log_surface)


def _forecast_origin(spec, smoothed, log_surface, h_max, seed):
    model = _fit(spec, smoothed, log_surface)
    if spec.model == "lc":
        return forecast_lc(model, h_max).point, {}
    bundle = point_forecast(model, h_max)
    bounds = {}
    if not spec.levels:
        return bundle.point, bounds
    parts = {}
    for level in spec.levels:
        nrm = normal_interval(bundle, 1 - level)
        bounds[("normal", level)] = (nrm.lower, nrm.upper)
    for h in range(1, h_max + 1):
        errs = coeff_forecast_errors(model, h, bundle.coeff_models)
        var = bootstrap_variants(model, bundle, h, spec.L, seed, errors=errs)
        for level in spec.levels:
            alpha = 1 - level
            for method, iv in (
                ("bootstrap", percentile_interval(var, alpha)),
                ("bias_corrected", bias_corrected_interval(var, bundle.point[h - 1], alpha)),
            ):
                lo, hi = parts.setdefault((method, level), ([], []))
                lo.append(iv.lower[0])
                hi.append(iv.upper[0])
    for key, (lo, hi) in parts.items():
        bounds[key] = (np.vstack(lo), np.vstack(hi))
    return bundle.point, bounds


def expanding_backtest(
    surface: LogMortalitySurface,
    spec: BacktestSpec,
    smoothed: Optional[SmoothSurface] = None,
    smooth_params: SmoothParams = SmoothParams(),
) -> BacktestReport:
    """Refit on ``[first year, T]`` for every origin ``T`` and score forecasts.

    Yearly smoothing is independent across years, so the full surface is
    smoothed once and truncated per origin. Fits that raise are logged in
    ``report.failures`` and their origin is skipped.
    """
    years = np.asarray(surface.years)
    end_year = int(years[-1])
    if smoothed is None and spec.model != "lc":
        smoothed = smooth_surface(surface, smooth_params)
    cols = {int(y): j for j, y in enumerate(years)}
    ages = np.asarray(surface.ages)
    q = ages.size

    rec = {"origin": [], "horizon": [], "age": [], "actual": [], "predicted": []}
    bounds_acc = {}
    failures = []
    for origin in spec.origins(end_year):
        origin = int(origin)
        if origin not in cols:
            failures.append((origin, "origin year not in surface"))
            continue
        n_fit = cols[origin] + 1
        h_max = min(spec.H, end_year - origin)
        if h_max < 1:
            continue
        seed = int(np.random.SeedSequence([spec.seed, origin]).generate_state(1)[0])
        try:
            point, bounds = _forecast_origin(
                spec,
                smoothed.head(n_fit) if smoothed is not None else None,
                surface.restrict_years(last=origin),
                h_max,
                seed,
            )
        except (SigmortError, np.linalg.LinAlgError) as exc:
            log.warning("origin %d failed: %s", origin, exc)
            failures.append((origin, f"{type(exc).__name__}: {exc}"))
            continue
        for h in range(1, h_max + 1):
            rec["origin"].append(np.full(q, origin))
            rec["horizon"].append(np.full(q, h))
            rec["age"].append(ages)
            rec["actual"].append(surface.y[:, cols[origin + h]])
            rec["predicted"].append(point[h - 1])
        for key, (lo, hi) in bounds.items():
            acc = bounds_acc.setdefault(key, ([], []))
            acc[0].append(lo[:h_max].ravel())
            acc[1].append(hi[:h_max].ravel())

    def cat(xs, dtype=float):
        return np.concatenate(xs).astype(dtype) if xs else np.zeros(0, dtype=dtype)

    return BacktestReport(
        spec=spec,
        ages=ages,
        origin=cat(rec["origin"], np.int64),
        horizon=cat(rec["horizon"], np.int64),
        age=cat(rec["age"], ages.dtype),
        actual=cat(rec["actual"]),
        predicted=cat(rec["predicted"]),
        bounds={k: (cat(lo), cat(hi)) for k, (lo, hi) in bounds_acc.items()},
        failures=failures,
    )


def mse_mae_by_horizon(report: BacktestReport, h: int):
    """Mean squared and mean absolute error over all ages and origins at ``h``."""
    e = report.errors[report.select(h)]
    return float(np.mean(e**2)), float(np.mean(np.abs(e)))


def metric_curves(report: BacktestReport):
    """``(horizons, mse, mae)`` arrays over every horizon present."""
    hs = report.horizons()
    vals = np.array([mse_mae_by_horizon(report, h) for h in hs]).reshape(-1, 2)
    return hs, vals[:, 0], vals[:, 1]


def metrics_by_age(report: BacktestReport, h: int):
    """Per-age ``(ages, mse, mae, me)`` at horizon ``h``, averaged over origins."""
    mask = report.select(h)
    e = report.errors[mask]
    a = report.age[mask]
    ages = np.unique(a)
    idx = np.searchsorted(ages, a)
    cnt = np.bincount(idx, minlength=ages.size)
    mse = np.bincount(idx, e**2, ages.size) / cnt
    mae = np.bincount(idx, np.abs(e), ages.size) / cnt
    me = np.bincount(idx, e, ages.size) / cnt
    return ages, mse, mae, me


@dataclass(frozen=True)
class TruncationResult:
    candidates: tuple
    horizons: np.ndarray
    mse: np.ndarray  # (len(candidates), H)
    mae: np.ndarray
    best: int
    reports: dict = field(default_factory=dict, repr=False)

    def ranking(self) -> list:
        means = self.mse.mean(axis=1)
        order = sorted(range(len(self.candidates)), key=lambda i: (means[i], self.candidates[i]))
        return [self.candidates[i] for i in order]


def truncation_search(
    surface: LogMortalitySurface,
    candidates=(2, 3, 4, 5),
    spec: BacktestSpec = BacktestSpec(),
    smoothed: Optional[SmoothSurface] = None,
    rel_tol: float = 1e-12,
) -> TruncationResult:
    """Backtest HUts for every candidate order; pick the lowest mean MSE.

    Mean MSEs within ``rel_tol`` of each other count as ties, which go to
    the smaller order.
    """
    if smoothed is None:
        smoothed = smooth_surface(surface)
    cands = tuple(sorted(int(m) for m in candidates))
    reports = {}
    rows_mse, rows_mae = [], []
    horizons = None
    for m in cands:
        sp = BacktestSpec(
            "huts", m, spec.K, spec.H, spec.first_forecast_year, spec.last_origin_year,
            spec.seed, (), spec.L, spec.center,
        )
        rep = expanding_backtest(surface, sp, smoothed=smoothed)
        hs, mse, mae = metric_curves(rep)
        horizons = hs if horizons is None else horizons
        reports[m] = rep
        rows_mse.append(mse)
        rows_mae.append(mae)
    mse = np.array(rows_mse)
    mae = np.array(rows_mae)
    means = mse.mean(axis=1)
    best_i = 0
    for i in range(1, len(cands)):
        if means[i] < means[best_i] - rel_tol * abs(means[best_i]):
            best_i = i
    return TruncationResult(cands, horizons, mse, mae, cands[best_i], reports)


@dataclass(frozen=True)
class ResidualDiagnostic:
    age: float
    counts: np.ndarray
    edges: np.ndarray
    skewness: float
    excess_kurtosis: float
    jb_stat: float
    jb_pvalue: float


def normality_summary(values, bins: int = 20):
    x = np.asarray(values, dtype=np.float64)
    if x.size < 8:
        raise InsufficientDataError(f"need at least 8 residuals, have {x.size}")
    if np.ptp(x) <= 1e-14 * max(1.0, float(np.max(np.abs(x)))):
        raise DegenerateDataError("residuals have zero variance")
    counts, edges = np.histogram(x, bins=bins)
    jb = stats.jarque_bera(x)
    return (
        counts,
        edges,
        float(stats.skew(x)),
        float(stats.kurtosis(x)),
        float(jb.statistic),
        float(jb.pvalue),
    )


def residual_diagnostics(model: BasisModel, ages) -> list:
    """Histogram, skewness, excess kurtosis and Jarque-Bera test per selected age."""
    out = []
    for age in np.atleast_1d(ages):
        hit = np.nonzero(np.isclose(model.grid, age))[0]
        if hit.size == 0:
            raise DomainError(f"age {age} is not on the model grid")
        counts, edges, sk, ku, jb, pv = normality_summary(model.residuals[:, hit[0]])
        out.append(ResidualDiagnostic(float(age), counts, edges, sk, ku, jb, pv))
    return out
