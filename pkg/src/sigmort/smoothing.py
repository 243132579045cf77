"""Weighted P-spline smoothing of yearly log-mortality curves.

Each year is smoothed on its own: cubic B-splines on equally spaced knots,
a second-order difference penalty on the coefficients, smoothing parameter by
generalized cross-validation, then a pool-adjacent-violators projection that
makes the curve non-decreasing from ``monotone_age`` upwards.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline
from scipy.optimize import isotonic_regression

from sigmort.errors import DomainError, FitError, ShapeError
from sigmort.ingest import LogMortalitySurface

MIN_POINTS = 10


@dataclass(frozen=True)
class SmoothParams:
    lam: Union[float, str] = "gcv"
    monotone_age: float = 65.0
    knot_spacing: float = 3.0
    lambda_grid: tuple = tuple(np.logspace(-4, 4, 31))

    def __post_init__(self):
        if isinstance(self.lam, str):
            if self.lam.lower() != "gcv":
                object.__setattr__(self, "lam", float(self.lam))
        elif self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.knot_spacing <= 0:
            raise ValueError("knot_spacing must be positive")

    @property
    def use_gcv(self) -> bool:
        return isinstance(self.lam, str)


@dataclass(frozen=True)
class SmoothCurve:
    grid: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    lam: float
    edf: float
    residuals: np.ndarray  # observed minus fitted at the data ages


@dataclass(frozen=True)
class SmoothSurface:
    """Smoothed curves stacked year-major: ``values[t, i]`` is year ``t`` at ``grid[i]``."""

    years: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    observed: np.ndarray
    std_residuals: np.ndarray
    lams: np.ndarray
    edf: np.ndarray
    sigma_known: bool = True
    metadata: dict = field(default_factory=dict)

    @property
    def n_years(self) -> int:
        return self.years.size

    def curve(self, j: int) -> SmoothCurve:
        return SmoothCurve(
            self.grid,
            self.values[j],
            self.sigma[j],
            float(self.lams[j]),
            float(self.edf[j]),
            self.observed[j] - self.values[j],
        )

    def head(self, n: int) -> "SmoothSurface":
        """The first ``n`` years."""
        return SmoothSurface(
            self.years[:n],
            self.grid,
            self.values[:n],
            self.sigma[:n],
            self.observed[:n],
            self.std_residuals[:n],
            self.lams[:n],
            self.edf[:n],
            self.sigma_known,
            dict(self.metadata),
        )


def bspline_basis(x, lo, hi, spacing):
    """Cubic B-spline design matrix on equally spaced knots covering ``[lo, hi]``.

    The knot sequence extends three intervals past each end, so the
    coefficients of any linear function are themselves linear in the index.
    """
    nseg = max(1, int(np.ceil((hi - lo) / spacing - 1e-9)))
    dx = (hi - lo) / nseg
    knots = lo + dx * np.arange(-3, nseg + 4)
    xs = np.clip(np.asarray(x, dtype=np.float64), lo, hi)
    return BSpline.design_matrix(xs, knots, 3).toarray()


def _penalty(nb):
    dd = np.diff(np.eye(nb), n=2, axis=0)
    return dd.T @ dd


def _solve(btwb, btwy, pen, lam):
    try:
        cf = linalg.cho_factor(btwb + lam * pen)
    except linalg.LinAlgError:
        raise FitError("normal equations are singular") from None
    coef = linalg.cho_solve(cf, btwy)
    edf = float(np.trace(linalg.cho_solve(cf, btwb)))
    return coef, edf


def smooth_curve(ages, y, weights, params: SmoothParams = SmoothParams(), grid=None) -> SmoothCurve:
    """Smooth one year's log rates.

    Weights are rescaled to mean one before fitting so the lambda grid is
    comparable across years; ``sigma`` is reported as ``1/sqrt(weights)``.
    """
    x = np.asarray(ages, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if not (x.shape == y.shape == w.shape) or x.ndim != 1:
        raise ShapeError("ages, y and weights must be 1-d arrays of equal length")
    if x.size < MIN_POINTS:
        raise ShapeError(f"need at least {MIN_POINTS} ages, got {x.size}")
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise FitError("weights must be positive and finite")
    if np.any(~np.isfinite(y)):
        raise FitError("log rates must be finite")
    grid = x if grid is None else np.asarray(grid, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if grid.min() < lo or grid.max() > hi:
        raise DomainError(f"grid [{grid.min()}, {grid.max()}] outside data range [{lo}, {hi}]")

    wn = w / w.mean()
    b = bspline_basis(x, lo, hi, params.knot_spacing)
    btw = b.T * wn
    btwb = btw @ b
    btwy = btw @ y
    pen = _penalty(b.shape[1])

    if params.use_gcv:
        best = None
        for lam in params.lambda_grid:
            coef, edf = _solve(btwb, btwy, pen, lam)
            rss = float(np.sum(wn * (y - b @ coef) ** 2))
            denom = (x.size - edf) ** 2
            score = x.size * rss / denom if denom > 0 else np.inf
            if best is None or score < best[0]:
                best = (score, lam, coef, edf)
        _, lam, coef, edf = best
    else:
        lam = float(params.lam)
        coef, edf = _solve(btwb, btwy, pen, lam)

    values = bspline_basis(grid, lo, hi, params.knot_spacing) @ coef
    mono = grid >= params.monotone_age
    if mono.sum() >= 2:
        values = values.copy()
        values[mono] = isotonic_regression(values[mono], increasing=True).x
    fitted = values if grid is x else np.interp(x, grid, values)
    return SmoothCurve(grid, values, 1.0 / np.sqrt(w), float(lam), edf, y - fitted)


def smooth_surface(surface: LogMortalitySurface, params: SmoothParams = SmoothParams()) -> SmoothSurface:
    """Smooth every year of a log surface with weights ``1 / sigma_obs**2``.

    Without observational standard deviations the fit is unweighted and the
    per-age standard deviation is estimated from the smoothing residuals
    pooled over years.
    """
    ages = np.asarray(surface.ages, dtype=np.float64)
    y = np.asarray(surface.y, dtype=np.float64).T
    n, q = y.shape
    known = surface.sigma_obs is not None
    sig_in = np.asarray(surface.sigma_obs, dtype=np.float64).T if known else np.ones_like(y)

    values = np.empty_like(y)
    lams = np.empty(n)
    edf = np.empty(n)
    for j in range(n):
        try:
            c = smooth_curve(ages, y[j], 1.0 / sig_in[j] ** 2, params)
        except (FitError, ShapeError, DomainError) as exc:
            raise type(exc)(f"year {int(surface.years[j])}: {exc}") from None
        values[j] = c.values
        lams[j] = c.lam
        edf[j] = c.edf

    resid = y - values
    dof = (q / np.maximum(q - edf, 1.0))[:, None]
    if known:
        sigma = sig_in.copy()
    else:
        sigma = np.tile(np.sqrt(np.mean(resid**2 * dof, axis=0)), (n, 1))
        sigma = np.where(sigma > 0, sigma, np.finfo(float).tiny)
    std = resid / sigma * np.sqrt(dof)

    return SmoothSurface(
        years=np.asarray(surface.years),
        grid=ages,
        values=values,
        sigma=sigma,
        observed=y,
        std_residuals=std,
        lams=lams,
        edf=edf,
        sigma_known=known,
        metadata=dict(surface.metadata),
    )
