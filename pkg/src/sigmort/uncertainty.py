"""Prediction intervals: normal theory, bootstrap percentiles, bias-corrected.

Quantiles use linear interpolation between order statistics: for sorted
values ``v_0..v_{L-1}`` the ``p``-quantile is ``v_j + f (v_{j+1} - v_j)``
with ``j + f = p (L - 1)`` (numpy's default ``'linear'`` method).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from sigmort.arima import insample_forecast_errors
from sigmort.decomposition import BasisModel
from sigmort.errors import AlignmentError, InsufficientDataError
from sigmort.forecast import ForecastBundle

DEFAULT_L = 1000


@dataclass(frozen=True)
class VariantSet:
    horizon: int
    curves: np.ndarray  # (L, q)
    seed: int
    warnings: tuple = ()

    @property
    def L(self) -> int:
        return self.curves.shape[0]


@dataclass(frozen=True)
class PredictionInterval:
    """Pointwise bounds, ``lower``/``upper`` shaped ``(len(horizons), q)``."""

    grid: np.ndarray
    horizons: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    nominal: float
    method: str
    meta: dict = field(default_factory=dict)


def coeff_forecast_errors(model: BasisModel, h: int, coeff_models) -> list:
    """In-sample ``h``-step errors of each coefficient series, fixed parameters."""
    if model.n_years <= h + 10:
        raise InsufficientDataError(
            f"need more than h + 10 = {h + 10} years for {h}-step errors, have {model.n_years}"
        )
    return [insample_forecast_errors(cm, h) for cm in coeff_models]


def _stream(seed, h):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(h)]))


def bootstrap_variants(model: BasisModel, bundle: ForecastBundle, h: int, L: int = DEFAULT_L,
                       seed: int = 0, errors=None) -> VariantSet:
    """``L`` resampled future curves at horizon ``h``.

    Each variant adds the ``h``-step coefficient errors of one resampled
    target year (shared across components, which keeps their correlation)
    to the coefficient forecasts, one whole residual curve drawn from the fitted
    years, and per-age resampled standardized smoothing residuals scaled by
    the observational standard deviation. Random draws come from a stream
    keyed on ``(seed, h)``.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    if errors is None:
        errors = coeff_forecast_errors(model, h, bundle.coeff_models)
    rng = _stream(seed, h)
    # Pools all end at the last fitted year; trimming to the common length
    # aligns them by target year so one draw picks the same year for every k.
    common = min(pool.size for pool in errors)
    if common < 1:
        raise InsufficientDataError(f"no {h}-step in-sample errors available")
    pools = np.column_stack([pool[pool.size - common:] for pool in errors])
    beta = bundle.coeff_means[h - 1][None, :] + pools[rng.integers(0, common, L)]
    n, q = model.residuals.shape
    resid = model.residuals[rng.integers(0, n, L)]
    pick = rng.integers(0, model.smooth_residuals.shape[0], (L, q))
    eps = model.smooth_residuals[pick, np.arange(q)[None, :]]
    noise = np.sqrt(model.obs_variance) * eps
    notes = ()
    if not model.sigma_known:
        notes = ("observational sd estimated from smoothing residuals",)
    curves = model.mean + beta @ model.basis.T + resid + noise
    return VariantSet(h, curves, int(seed), notes)


def bootstrap_all(model: BasisModel, bundle: ForecastBundle, L: int = DEFAULT_L, seed: int = 0,
                  horizons=None) -> list:
    hs = bundle.horizons if horizons is None else horizons
    return [bootstrap_variants(model, bundle, int(h), L, seed) for h in hs]


def column_quantiles(values: np.ndarray, probs) -> np.ndarray:
    """Per-column linear-interpolation quantiles, ``probs`` scalar or one per column."""
    s = np.sort(values, axis=0)
    L, q = s.shape
    p = np.broadcast_to(np.asarray(probs, dtype=np.float64), (q,))
    pos = p * (L - 1)
    lo = np.clip(np.floor(pos).astype(np.int64), 0, L - 1)
    hi = np.minimum(lo + 1, L - 1)
    frac = pos - lo
    cols = np.arange(q)
    a = s[lo, cols]
    b = s[hi, cols]
    return np.where(frac == 0, a, a + frac * (b - a))


def percentile_interval(variants: VariantSet, alpha: float, grid=None) -> PredictionInterval:
    lo = column_quantiles(variants.curves, alpha / 2)
    hi = column_quantiles(variants.curves, 1 - alpha / 2)
    q = variants.curves.shape[1]
    return PredictionInterval(
        np.arange(q) if grid is None else np.asarray(grid),
        np.array([variants.horizon]),
        lo[None, :],
        hi[None, :],
        1 - alpha,
        "bootstrap",
        {"seed": variants.seed, "L": variants.L},
    )


def bias_correction(variants: np.ndarray, point: np.ndarray, alpha: float):
    """Adjusted percentile levels ``(alpha1, alpha2, z0, clamped)`` per grid point.

    ``z0`` counts variants strictly below the point forecast. Proportions of
    0 or 1 are clamped to ``1/(2L)`` and ``1 - 1/(2L)``.
    """
    L = variants.shape[0]
    prop = np.sum(variants < point[None, :], axis=0) / L
    clamped = (prop <= 0) | (prop >= 1)
    prop = np.clip(prop, 1.0 / (2 * L), 1.0 - 1.0 / (2 * L))
    z0 = norm.ppf(prop)
    z0 = np.where(prop == 0.5, 0.0, z0)
    a1 = np.where(z0 == 0, alpha / 2, norm.cdf(z0 + norm.ppf(alpha / 2)))
    a2 = np.where(z0 == 0, 1 - alpha / 2, norm.cdf(z0 + norm.ppf(1 - alpha / 2)))
    return a1, a2, z0, clamped


def bias_corrected_interval(variants: VariantSet, point, alpha: float, grid=None) -> PredictionInterval:
    point = np.asarray(point, dtype=np.float64).ravel()
    a1, a2, z0, clamped = bias_correction(variants.curves, point, alpha)
    lo = column_quantiles(variants.curves, a1)
    hi = column_quantiles(variants.curves, a2)
    q = variants.curves.shape[1]
    return PredictionInterval(
        np.arange(q) if grid is None else np.asarray(grid),
        np.array([variants.horizon]),
        lo[None, :],
        hi[None, :],
        1 - alpha,
        "bias_corrected_bootstrap",
        {"seed": variants.seed, "L": variants.L, "clamped": int(clamped.sum()), "z0": z0},
    )


def normal_interval(bundle: ForecastBundle, alpha: float) -> PredictionInterval:
    half = norm.ppf(1 - alpha / 2) * np.sqrt(bundle.variance)
    return PredictionInterval(
        bundle.grid, bundle.horizons, bundle.point - half, bundle.point + half, 1 - alpha, "normal"
    )


def stack_intervals(parts) -> PredictionInterval:
    """Concatenate single-horizon intervals of one method and level."""
    parts = list(parts)
    first = parts[0]
    meta = dict(first.meta)
    meta.pop("z0", None)
    if "clamped" in meta:
        meta["clamped"] = sum(p.meta.get("clamped", 0) for p in parts)
    return PredictionInterval(
        first.grid,
        np.concatenate([p.horizons for p in parts]),
        np.vstack([p.lower for p in parts]),
        np.vstack([p.upper for p in parts]),
        first.nominal,
        first.method,
        meta,
    )


def covered(lower, upper, actual) -> np.ndarray:
    return (np.asarray(lower) < actual) & (actual < np.asarray(upper))


def empirical_coverage(intervals, actual) -> float:
    """Share of held-out cells strictly inside their intervals.

    ``intervals`` is an iterable of ``(origin_year, PredictionInterval)``;
    ``actual`` a ``LogMortalitySurface``.
    """
    col = {int(y): j for j, y in enumerate(actual.years)}
    ages = np.asarray(actual.ages)
    hits = 0
    total = 0
    for origin, iv in intervals:
        if iv.grid.shape != ages.shape or not np.allclose(iv.grid, ages):
            raise AlignmentError("interval grid does not match the actual surface's ages")
        for r, h in enumerate(iv.horizons):
            year = int(origin) + int(h)
            if year not in col:
                raise AlignmentError(f"no observation for year {year}")
            y = actual.y[:, col[year]]
            hits += int(np.sum(covered(iv.lower[r], iv.upper[r], y)))
            total += y.size
    if total == 0:
        raise AlignmentError("no interval cells to score")
    return hits / total
