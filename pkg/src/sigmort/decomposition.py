"""Functional decompositions of smoothed log-mortality curves.

``fit_huts`` builds the age basis from principal components of per-age
truncated signatures; ``fit_fpca`` uses ordinary functional PCA of the
curves; ``fit_lc`` is the rank-one Lee-Carter fit on raw log rates.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from sigmort.errors import DegenerateDataError, DomainError, RankError, ShapeError
from sigmort.ingest import LogMortalitySurface
from sigmort.signature import augment_path, batch_signatures, sig_length
from sigmort.smoothing import SmoothSurface

OBS_VARIANCE_WINDOW = 10


@dataclass(frozen=True)
class BasisModel:
    """Fitted ``f_t(x) = mu(x) + sum_k beta[t, k] Z[:, k](x) + e_t(x)``.

    Attributes
    ----------
    grid : (q,) ages
    years : (n,) fitted years
    mean : (q,) mean curve
    basis : (q, K) orthogonal age basis
    coeffs : (n, K) time coefficients
    residuals : (n, q) model residual curves
    fit_variance : (q,) mean squared residual per age
    mean_variance : (q,) variance of the mean-curve estimate
    obs_variance : (q,) observational variance carried into forecasts
    smooth_residuals : (n, q) standardized smoothing residuals
    """

    kind: str
    grid: np.ndarray
    years: np.ndarray
    mean: np.ndarray
    basis: np.ndarray
    coeffs: np.ndarray
    residuals: np.ndarray
    fit_variance: np.ndarray
    mean_variance: np.ndarray
    obs_variance: np.ndarray
    smooth_residuals: np.ndarray
    singular_values: np.ndarray
    m: Optional[int] = None
    sig_columns: Optional[int] = None
    sigma_known: bool = True
    metadata: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.basis.shape[1]

    @property
    def n_years(self) -> int:
        return self.years.size

    def fitted_curves(self) -> np.ndarray:
        return self.mean + self.coeffs @ self.basis.T


class HutsModel(BasisModel):
    pass


class FpcaModel(BasisModel):
    pass


@dataclass(frozen=True)
class LcModel:
    ages: np.ndarray
    years: np.ndarray
    a: np.ndarray
    b: np.ndarray
    k: np.ndarray
    metadata: dict = field(default_factory=dict)

    def fitted(self) -> np.ndarray:
        """Fitted log rates indexed ``[age, year]``."""
        return self.a[:, None] + np.outer(self.b, self.k)


def mean_curve(surface: SmoothSurface) -> np.ndarray:
    if surface.n_years < 2:
        raise ShapeError("mean curve needs at least two years")
    return surface.values.mean(axis=0)


def signature_matrix(surface: SmoothSurface, m: int) -> np.ndarray:
    """Row ``i`` holds the signature of age ``i``'s embedded time series.

    The constant order-0 coefficient is dropped, leaving ``sig_length(3, m) - 1``
    columns.
    """
    vals = surface.values
    if vals.shape[0] < 2:
        raise ShapeError("each age needs at least two years")
    paths = np.stack([augment_path(vals[:, i]).points for i in range(vals.shape[1])])
    return batch_signatures(paths, m)[:, 1:]


def _sign_fix(z, v):
    idx = np.argmax(np.abs(z), axis=0)
    signs = np.sign(z[idx, np.arange(z.shape[1])])
    signs[signs == 0] = 1.0
    return z * signs, v * signs


def svd_scores(s: np.ndarray, K: int, center: bool = True):
    """First ``K`` principal component scores ``U Sigma`` of the feature matrix.

    Returns ``(Z_K, singular_values, V_K)``. Columns are sign-normalized so
    the entry of largest magnitude is positive.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2:
        raise ShapeError("feature matrix must be 2-d")
    if K < 0 or K > min(s.shape):
        raise RankError(f"K={K} exceeds min(rows, columns)={min(s.shape)}")
    sc = s - s.mean(axis=0) if center else s
    u, sv, vt = np.linalg.svd(sc, full_matrices=False)
    tol = (sv[0] if sv.size else 0.0) * max(sc.shape) * np.finfo(float).eps
    rank = int(np.sum(sv > tol))
    if K > rank:
        raise RankError(f"K={K} exceeds the effective rank {rank}", effective_rank=rank)
    z = u[:, :K] * sv[:K]
    z, v = _sign_fix(z, vt[:K].T)
    return z, sv, v


def regress_scores(basis: np.ndarray, curves: np.ndarray, mean: np.ndarray, sigma=None):
    """Least-squares coefficients of centered curves on an orthogonal basis.

    ``curves`` is ``(n, q)``; ``sigma`` the ``(n, q)`` observational standard
    deviations if known. Returns ``(beta, residuals, fit_variance,
    mean_variance)``.
    """
    y = np.asarray(curves, dtype=np.float64) - mean
    n = y.shape[0]
    norms = np.sum(basis**2, axis=0)
    if basis.shape[1] and (basis.shape[1] > basis.shape[0] or np.any(norms <= 0)):
        raise RankError("basis is not of full column rank")
    beta = (y @ basis) / norms if basis.shape[1] else np.zeros((n, 0))
    resid = y - beta @ basis.T
    v = np.mean(resid**2, axis=0)
    if sigma is not None:
        mean_var = np.sum(np.asarray(sigma) ** 2, axis=0) / n**2
    else:
        mean_var = v / n
    return beta, resid, v, mean_var


def _obs_variance(surface: SmoothSurface) -> np.ndarray:
    tail = surface.sigma[-min(OBS_VARIANCE_WINDOW, surface.n_years):]
    return np.mean(tail**2, axis=0)


def _assemble(cls, kind, surface, mu, z, sv, m=None, sig_cols=None, extra=None):
    sigma = surface.sigma if surface.sigma_known else None
    beta, resid, v, mean_var = regress_scores(z, surface.values, mu, sigma)
    meta = dict(surface.metadata)
    meta.update(extra or {})
    return cls(
        kind=kind,
        grid=surface.grid,
        years=surface.years,
        mean=mu,
        basis=z,
        coeffs=beta,
        residuals=resid,
        fit_variance=v,
        mean_variance=mean_var,
        obs_variance=_obs_variance(surface),
        smooth_residuals=surface.std_residuals,
        singular_values=sv,
        m=m,
        sig_columns=sig_cols,
        sigma_known=surface.sigma_known,
        metadata=meta,
    )


def fit_huts(surface: SmoothSurface, m: int = 2, K: int = 6, center: bool = False) -> HutsModel:
    """HUts fit. Signature columns are left uncentered unless ``center`` is set:
    the centered order-2 lead-lag feature matrix has rank 5, so centering
    would rule out the customary six components at ``m = 2``.
    """
    mu = mean_curve(surface)
    s = signature_matrix(surface, m)
    z, sv, _ = svd_scores(s, K, center=center)
    return _assemble(
        HutsModel, "huts", surface, mu, z, sv, m=m, sig_cols=s.shape[1],
        extra={"center_signatures": center},
    )


def fit_fpca(surface: SmoothSurface, K: int = 6) -> FpcaModel:
    mu = mean_curve(surface)
    y = surface.values - mu
    if K > min(y.shape):
        raise RankError(f"K={K} exceeds min(years, ages)={min(y.shape)}")
    u, sv, vt = np.linalg.svd(y, full_matrices=False)
    tol = (sv[0] if sv.size else 0.0) * max(y.shape) * np.finfo(float).eps
    rank = int(np.sum(sv > tol))
    if K > rank:
        raise RankError(f"K={K} exceeds the effective rank {rank}", effective_rank=rank)
    phi = vt[:K].T
    phi, _ = _sign_fix(phi, np.zeros((0, K)))
    return _assemble(FpcaModel, "fpca", surface, mu, phi, sv)


def fit_lc(surface: LogMortalitySurface) -> LcModel:
    """Lee-Carter by SVD, normalized to ``sum(b) = 1`` and ``sum(k) = 0``."""
    y = np.asarray(surface.y, dtype=np.float64)
    a = y.mean(axis=1)
    c = y - a[:, None]
    u, sv, vt = np.linalg.svd(c, full_matrices=False)
    if sv[0] <= 0:
        raise DegenerateDataError("leading singular value is zero")
    total = u[:, 0].sum()
    if abs(total) <= 1e-12 * np.abs(u[:, 0]).sum():
        raise DegenerateDataError("age loadings sum to zero; cannot normalize")
    b = u[:, 0] / total
    k = sv[0] * vt[0] * total
    k = k - k.mean()
    return LcModel(np.asarray(surface.ages), np.asarray(surface.years), a, b, k, dict(surface.metadata))


def basis_at(model: BasisModel, x) -> np.ndarray:
    """Basis rows at arbitrary ages by linear interpolation between grid points."""
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    g = model.grid
    if xs.min() < g[0] or xs.max() > g[-1]:
        raise DomainError(f"age outside [{g[0]}, {g[-1]}]")
    out = np.column_stack([np.interp(xs, g, model.basis[:, k]) for k in range(model.K)])
    out = out.reshape(xs.size, model.K)
    return out[0] if np.ndim(x) == 0 else out


def expected_columns(m: int, d: int = 3) -> int:
    return sig_length(d, m) - 1
