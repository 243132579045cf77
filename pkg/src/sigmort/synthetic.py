"""Synthetic mortality surfaces for tests, benchmarks and demos."""

from dataclasses import dataclass

import numpy as np

from sigmort.ingest import LogMortalitySurface, MortalitySurface

WAR_YEARS = (1914, 1915, 1916, 1917, 1918, 1940, 1941, 1942, 1943, 1944)
FLU_YEAR = 1918


def baseline_log_rates(ages):
    """Smooth adult-mortality schedule: infant decline, young-adult hump, Gompertz."""
    x = np.asarray(ages, dtype=np.float64)
    infant = np.exp(-3.0 - 0.9 * x)
    hump = 4e-4 * np.exp(-((x - 22.0) ** 2) / 60.0)
    senescent = 4e-5 * np.exp(0.095 * x)
    return np.log(infant + hump + senescent + 1.5e-4)


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def mortality_surface(
    ages=np.arange(0, 101),
    years=np.arange(1899, 2016),
    seed: int = 0,
    shocks: bool = True,
    shock_scale: float = 1.0,
    rotation: bool = True,
    population: float = 2e5,
) -> MortalitySurface:
    """Poisson deaths on a log-rate surface with an age-rotating decline.

    Annual improvement is a mix of a young-age and an old-age schedule. With
    ``rotation`` the young-age rate slows after mid-century while the old-age
    rate accelerates from around 1970, so no fixed age loading describes the
    whole history. ``shocks`` adds excess mortality at ages 15-45 in war
    years and a broad 15-40 excess in the flu year.
    """
    rng = np.random.default_rng(seed)
    ages = np.asarray(ages)
    years = np.asarray(years)
    x = ages.astype(np.float64)
    yr = years.astype(np.float64)
    tt = yr - yr[0]

    a = baseline_log_rates(x)
    young = np.exp(-x / 30.0)
    old = np.exp(-((x - 80.0) ** 2) / 800.0)
    mid = np.clip(1.0 - young - old, 0.0, None)
    if rotation:
        r_young = 0.015 + 0.025 * (1.0 - _logistic((yr - 1955.0) / 8.0))
        r_old = 0.003 + 0.017 * _logistic((yr - 1972.0) / 6.0)
    else:
        r_young = np.full(yr.size, 0.028)
        r_old = np.full(yr.size, 0.010)
    r_mid = 0.5 * (r_young + r_old)
    shocks_rw = rng.normal(0, 0.01, (2, yr.size))
    improve = (
        young[:, None] * (r_young + shocks_rw[0])[None, :]
        + old[:, None] * (r_old + shocks_rw[1])[None, :]
        + mid[:, None] * r_mid[None, :]
    )
    improve[:, 0] = 0.0
    logm = a[:, None] - np.cumsum(improve, axis=1)
    logm += 0.08 * np.sin(2 * np.pi * tt / 45.0)[None, :] * (x / 100.0)[:, None]

    if shocks:
        war = ((x >= 15) & (x <= 45)) * np.exp(-((x - 27.0) ** 2) / 150.0)
        flu = ((x >= 15) & (x <= 40)) * 1.0
        for j, y in enumerate(years):
            if y in WAR_YEARS:
                logm[:, j] += shock_scale * 1.6 * war * rng.uniform(0.6, 1.0)
            if y == FLU_YEAR:
                logm[:, j] += shock_scale * 1.1 * flu

    expo = population * np.exp(-((x / 88.0) ** 5))[:, None] * (1 + 0.004 * tt)[None, :]
    rates = np.exp(logm)
    deaths = rng.poisson(rates * expo).astype(np.float64)
    return MortalitySurface(
        ages=ages,
        years=years,
        rates=deaths / expo,
        deaths=deaths,
        exposures=expo,
        metadata={"code": f"SYN{seed}", "sex": "total", "pooled_rate_approximate": False},
    )


@dataclass(frozen=True)
class GaussianWorld:
    surface: LogMortalitySurface
    mean: np.ndarray
    basis: np.ndarray
    coeffs: np.ndarray
    smooth: np.ndarray  # noise-free curves, (n, q)


def gaussian_world(
    q: int = 40,
    n: int = 80,
    K: int = 3,
    seed: int = 0,
    obs_sd: float = 0.02,
    model_sd: float = 0.005,
    drift=(-0.08, 0.03, 0.0),
    innov=(0.12, 0.05, 0.03),
    first_year: int = 1936,
) -> GaussianWorld:
    """Log rates ``mu + Z beta_t + e_t + sigma eps`` with random-walk-with-drift scores.

    Every error source is Gaussian and the observational standard deviation
    is attached to the returned surface.
    """
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, q)
    mu = -7.0 + 6.0 * x**1.3
    shapes = [np.ones(q) - 0.7 * x, np.cos(np.pi * x), np.sin(2 * np.pi * x) * (1 - x)]
    basis = np.column_stack(shapes[:K])
    dr = np.resize(np.asarray(drift, dtype=np.float64), K)
    sd = np.resize(np.asarray(innov, dtype=np.float64), K)
    beta = np.cumsum(dr[None, :] + sd[None, :] * rng.normal(size=(n, K)), axis=0)
    f = mu + beta @ basis.T + model_sd * rng.normal(size=(n, q))
    sig = np.full((n, q), obs_sd)
    y = f + sig * rng.normal(size=(n, q))
    surface = LogMortalitySurface(
        ages=np.arange(q),
        years=np.arange(first_year, first_year + n),
        y=y.T.copy(),
        shift=0.0,
        sigma_obs=sig.T.copy(),
        metadata={"code": f"GW{seed}"},
    )
    return GaussianWorld(surface, mu, basis, beta, f)
