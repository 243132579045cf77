"""Human Mortality Database period 1x1 tables to log-mortality surfaces."""

import configparser
import enum
import io
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from sigmort.errors import (
    ConfigError,
    CoverageError,
    DataError,
    DegenerateDataError,
    DuplicateCellError,
    ParseError,
)

MAX_HMD_AGE = 110
DEATHS_FLOOR = 1.0
SEX_COLUMNS = {"female": 0, "male": 1, "total": 2}


class TableKind(enum.Enum):
    DEATH_RATES = "Mx"
    EXPOSURES = "Exposures"
    DEATHS = "Deaths"


@dataclass(frozen=True)
class RawMortalityTable:
    kind: TableKind
    years: np.ndarray
    ages: np.ndarray
    open_age: np.ndarray
    values: np.ndarray  # NaN marks a missing cell
    sex: str = "total"

    def __len__(self):
        return self.years.size

    def lookup(self) -> dict:
        return {(int(y), int(a)): v for y, a, v in zip(self.years, self.ages, self.values)}


@dataclass(frozen=True)
class CountryConfig:
    code: str
    commencing_year: int
    max_age: int
    end_year: int = 2015
    sex: str = "total"

    def __post_init__(self):
        if self.commencing_year >= self.end_year:
            raise ConfigError(
                f"commencing_year {self.commencing_year} must precede end_year {self.end_year}"
            )
        if not 0 < self.max_age <= MAX_HMD_AGE:
            raise ConfigError(f"max_age must lie in (0, {MAX_HMD_AGE}], got {self.max_age}")
        if self.sex.lower() not in SEX_COLUMNS:
            raise ConfigError(f"sex must be one of {sorted(SEX_COLUMNS)}, got {self.sex!r}")
        object.__setattr__(self, "sex", self.sex.lower())


# Start years and pooled top ages used for the twelve benchmark countries.
TABLE1_COUNTRIES = {
    "AUS": CountryConfig("AUS", 1921, 100),
    "BEL": CountryConfig("BEL", 1920, 100),
    "BGR": CountryConfig("BGR", 1947, 100),
    "DNK": CountryConfig("DNK", 1899, 99),
    "FIN": CountryConfig("FIN", 1899, 96),
    "FRATNP": CountryConfig("FRATNP", 1899, 100),
    "IRL": CountryConfig("IRL", 1950, 100),
    "ITA": CountryConfig("ITA", 1899, 100),
    "JPN": CountryConfig("JPN", 1947, 100),
    "NLD": CountryConfig("NLD", 1899, 99),
    "NOR": CountryConfig("NOR", 1899, 100),
    "USA": CountryConfig("USA", 1933, 100),
}


@dataclass(frozen=True)
class MortalitySurface:
    """Dense age x year grid of central death rates.

    Arrays are indexed ``[age, year]``. The last age is the pooled open group.
    """

    ages: np.ndarray
    years: np.ndarray
    rates: np.ndarray
    deaths: Optional[np.ndarray] = None
    exposures: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.rates.shape


@dataclass(frozen=True)
class LogMortalitySurface:
    ages: np.ndarray
    years: np.ndarray
    y: np.ndarray
    shift: float
    sigma_obs: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def restrict_years(self, first=None, last=None) -> "LogMortalitySurface":
        keep = np.ones(self.years.size, dtype=bool)
        if first is not None:
            keep &= self.years >= first
        if last is not None:
            keep &= self.years <= last
        sig = None if self.sigma_obs is None else self.sigma_obs[:, keep]
        return LogMortalitySurface(
            self.ages, self.years[keep], self.y[:, keep], self.shift, sig, dict(self.metadata)
        )


def _parse_year(tok, lineno):
    suffix = tok[-1] if tok[-1] in "+-" else ""
    body = tok[:-1] if suffix else tok
    try:
        return int(body), suffix
    except ValueError:
        raise ParseError(f"non-numeric year {tok!r}", line=lineno) from None


def _parse_value(tok, lineno):
    if tok == ".":
        return np.nan
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"unparsable value {tok!r}", line=lineno) from None
    if v < 0 or not np.isfinite(v):
        raise ParseError(f"value {tok!r} must be a nonnegative number", line=lineno)
    return v


def parse_hmd_table(text, kind: TableKind, sex: str = "total") -> RawMortalityTable:
    """Parse an HMD period 1x1 table (``Mx_1x1``, ``Deaths_1x1``, ``Exposures_1x1``).

    Parameters
    ----------
    text : str or file-like
        Table contents. Leading lines up to and including the ``Year Age ...``
        column header are skipped.
    kind : TableKind
        Which quantity the table holds.
    sex : {'total', 'female', 'male'}
        Value column to keep.

    Year tokens carrying HMD's territorial-change markers are handled by
    keeping the ``NNNN+`` (post-change) rows and dropping ``NNNN-`` rows.
    """
    col = SEX_COLUMNS.get(sex.lower())
    if col is None:
        raise ConfigError(f"unknown sex column {sex!r}")
    if not isinstance(text, str):
        text = text.read()
    lines = text.splitlines()

    start = None
    for i, line in enumerate(lines):
        toks = line.split()
        if toks and toks[0].lower() == "year":
            start = i + 1
            break
    if start is None:
        if len(lines) < 2:
            raise ParseError("table needs at least two header lines")
        start = 2

    cells = {}
    for lineno, line in enumerate(lines[start:], start=start + 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) < 5:
            raise ParseError(f"expected 5 columns, found {len(toks)}", line=lineno)
        year, suffix = _parse_year(toks[0], lineno)
        if suffix == "-":
            continue
        age_tok = toks[1]
        is_open = age_tok.endswith("+")
        try:
            age = int(age_tok.rstrip("+"))
        except ValueError:
            raise ParseError(f"unparsable age {age_tok!r}", line=lineno) from None
        if not 0 <= age <= MAX_HMD_AGE:
            raise ParseError(f"age {age} outside [0, {MAX_HMD_AGE}]", line=lineno)
        value = _parse_value(toks[2 + col], lineno)
        for tok in toks[2:5]:
            _parse_value(tok, lineno)
        if (year, age) in cells:
            raise DuplicateCellError(f"duplicate cell (year={year}, age={age})", line=lineno)
        cells[(year, age)] = (is_open, value)

    if not cells:
        raise ParseError("table contains no data rows")
    keys = sorted(cells)
    years = np.array([k[0] for k in keys], dtype=np.int64)
    ages = np.array([k[1] for k in keys], dtype=np.int64)
    for yr in np.unique(years):
        a = ages[years == yr]
        if not np.array_equal(a, np.arange(a.size)):
            raise ParseError(f"ages for year {yr} are not contiguous from 0")
    return RawMortalityTable(
        kind=kind,
        years=years,
        ages=ages,
        open_age=np.array([cells[k][0] for k in keys]),
        values=np.array([cells[k][1] for k in keys], dtype=np.float64),
        sex=sex.lower(),
    )


def read_hmd_table(path, kind: TableKind, sex: str = "total") -> RawMortalityTable:
    with open(path, encoding="utf-8") as fh:
        return parse_hmd_table(fh.read(), kind, sex)


def load_country_config(path_or_text) -> CountryConfig:
    """Read a ``key = value`` country file (code, commencing_year, end_year, max_age, sex)."""
    if os.path.exists(str(path_or_text)):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = str(path_or_text)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string("[country]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    sec = cp["country"]
    missing = [k for k in ("code", "commencing_year", "max_age") if k not in sec]
    if missing:
        raise ConfigError(f"missing field {missing[0]}")
    try:
        return CountryConfig(
            code=sec["code"],
            commencing_year=sec.getint("commencing_year"),
            max_age=sec.getint("max_age"),
            end_year=sec.getint("end_year", fallback=2015),
            sex=sec.get("sex", fallback="total"),
        )
    except KeyError as exc:
        raise ConfigError(f"missing field {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _grid(table, years, top_age):
    out = np.full((top_age + 1, years.size), np.nan)
    col = {int(y): j for j, y in enumerate(years)}
    for y, a, v in zip(table.years, table.ages, table.values):
        j = col.get(int(y))
        if j is not None and a <= top_age:
            out[a, j] = v
    return out


def _pool(grid, max_age, reducer):
    head = grid[:max_age]
    tail = grid[max_age:]
    return np.vstack([head, reducer(tail)[None, :]])


def build_surface(
    rates: RawMortalityTable,
    deaths: Optional[RawMortalityTable],
    exposures: Optional[RawMortalityTable],
    cfg: CountryConfig,
) -> MortalitySurface:
    """Restrict to the configured years and pool ages above ``cfg.max_age``.

    With deaths and exposures the pooled rate is total deaths over total
    exposure; otherwise it is the plain mean of the pooled rates and
    ``metadata['pooled_rate_approximate']`` is set. Where both counts are
    present every rate is recomputed as ``D / E`` (cells with ``E = 0`` keep
    the tabulated rate).
    """
    tables = [t for t in (rates, deaths, exposures) if t is not None]
    common = None
    for t in tables:
        yrs = set(int(y) for y in np.unique(t.years))
        common = yrs if common is None else common & yrs
    years = np.array(
        sorted(y for y in common if cfg.commencing_year <= y <= cfg.end_year), dtype=np.int64
    )
    if years.size == 0:
        raise CoverageError(
            f"no common years in [{cfg.commencing_year}, {cfg.end_year}] across input tables"
        )

    top = MAX_HMD_AGE
    for t in tables:
        for y in years:
            top = min(top, int(t.ages[t.years == y].max()))
    if cfg.max_age > top:
        raise CoverageError(f"max_age {cfg.max_age} exceeds the top listed age {top}")

    m = _grid(rates, years, top)
    have_counts = deaths is not None and exposures is not None
    d_grid = _grid(deaths, years, top) if deaths is not None else None
    e_grid = _grid(exposures, years, top) if exposures is not None else None

    metadata = {"code": cfg.code, "sex": cfg.sex, "pooled_rate_approximate": False}
    if have_counts:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = d_grid / e_grid
        ok = np.isfinite(ratio) & (e_grid > 0)
        m = np.where(ok, ratio, m)
        d_pool = _pool(d_grid, cfg.max_age, lambda x: np.nansum(x, axis=0))
        e_pool = _pool(e_grid, cfg.max_age, lambda x: np.nansum(x, axis=0))
        with np.errstate(divide="ignore", invalid="ignore"):
            top_rate = d_pool[-1] / e_pool[-1]
        top_rate = np.where(e_pool[-1] > 0, top_rate, np.nan)
        rates_out = np.vstack([m[: cfg.max_age], top_rate[None, :]])
    else:
        if cfg.max_age < top:
            metadata["pooled_rate_approximate"] = True
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rates_out = _pool(m, cfg.max_age, lambda x: np.nanmean(x, axis=0))
        d_pool = _pool(d_grid, cfg.max_age, lambda x: np.nansum(x, axis=0)) if d_grid is not None else None
        e_pool = _pool(e_grid, cfg.max_age, lambda x: np.nansum(x, axis=0)) if e_grid is not None else None

    bad = np.all(np.isnan(rates_out), axis=1)
    if bad.any():
        raise DataError(f"ages {np.arange(cfg.max_age + 1)[bad].tolist()} are missing in every year")

    return MortalitySurface(
        ages=np.arange(cfg.max_age + 1),
        years=years,
        rates=rates_out,
        deaths=d_pool,
        exposures=e_pool,
        metadata=metadata,
    )


def to_log_surface(surface: MortalitySurface) -> LogMortalitySurface:
    """Log rates with a uniform shift when any cell is zero or missing.

    The shift is the smallest strictly positive rate of the whole surface;
    missing cells are set to zero before shifting. Observational standard
    deviations ``1 / sqrt(max(D, 1))`` are attached when deaths (or
    exposures, via ``D = m E``) are known.
    """
    m = np.asarray(surface.rates, dtype=np.float64)
    positive = m[np.isfinite(m) & (m > 0)]
    if positive.size == 0:
        raise DegenerateDataError("every cell of the surface is zero or missing")
    needs_shift = bool(np.any(~np.isfinite(m)) or np.any(m == 0))
    shift = float(positive.min()) if needs_shift else 0.0
    filled = np.where(np.isfinite(m), m, 0.0)
    y = np.log(filled + shift)

    deaths = surface.deaths
    if deaths is None and surface.exposures is not None:
        deaths = filled * surface.exposures
    sigma = None
    if deaths is not None:
        d = np.where(np.isfinite(deaths), deaths, 0.0)
        sigma = 1.0 / np.sqrt(np.maximum(d, DEATHS_FLOOR))

    meta = dict(surface.metadata)
    meta["missing_cells"] = int(np.sum(~np.isfinite(m)))
    return LogMortalitySurface(surface.ages, surface.years, y, shift, sigma, meta)


def load_surface(mx_path, cfg: CountryConfig, deaths_path=None, exposures_path=None):
    """Read HMD files and return ``(MortalitySurface, LogMortalitySurface)``."""
    rates = read_hmd_table(mx_path, TableKind.DEATH_RATES, cfg.sex)
    deaths = read_hmd_table(deaths_path, TableKind.DEATHS, cfg.sex) if deaths_path else None
    expo = read_hmd_table(exposures_path, TableKind.EXPOSURES, cfg.sex) if exposures_path else None
    surface = build_surface(rates, deaths, expo, cfg)
    return surface, to_log_surface(surface)


def format_hmd_table(years, ages, values, title="Synthetic", open_age=None, digits=6) -> str:
    """Render an ``[age, year]`` grid in HMD 1x1 layout (same value in all sex columns)."""
    open_age = ages[-1] if open_age is None else open_age
    buf = io.StringIO()
    buf.write(f"{title}\tLast modified: synthetic\n\n")
    buf.write("  Year          Age             Female            Male           Total\n")
    for j, yr in enumerate(years):
        for i, a in enumerate(ages):
            v = values[i, j]
            tok = "." if not np.isfinite(v) else f"{v:.{digits}f}"
            age_tok = f"{a}+" if a == open_age else str(a)
            buf.write(f"  {yr:<13d} {age_tok:<10s} {tok:>14s} {tok:>16s} {tok:>16s}\n")
    return buf.getvalue()
