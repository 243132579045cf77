import io

import numpy as np
import pytest

from sigmort.errors import (
    ConfigError,
    CoverageError,
    DataError,
    DegenerateDataError,
    DuplicateCellError,
    ParseError,
)
from sigmort.ingest import (
    TABLE1_COUNTRIES,
    CountryConfig,
    MortalitySurface,
    TableKind,
    build_surface,
    format_hmd_table,
    load_country_config,
    parse_hmd_table,
    to_log_surface,
)

HEADER = "Australia, Death rates (period 1x1)\tLast modified: 01 Jan 2020\n\n" \
         "  Year          Age             Female            Male           Total\n"


def _table(rows, kind=TableKind.DEATH_RATES):
    return parse_hmd_table(HEADER + "\n".join(rows) + "\n", kind)


def _grid_text(years, ages, values, open_age=None, digits=6):
    return format_hmd_table(years, ages, values, open_age=open_age, digits=digits)


class TestParse:
    def test_total_column(self):
        t = _table(["1921   0   0.065871 0.082594 0.074300"])
        assert (t.years[0], t.ages[0], bool(t.open_age[0]), t.values[0]) == (1921, 0, False, 0.0743)

    def test_open_age_missing(self):
        rows = [f"1921 {a} 0.1 0.1 0.1" for a in range(110)] + ["1921 110+ . . ."]
        t = _table(rows)
        assert t.ages[-1] == 110 and bool(t.open_age[-1])
        assert np.isnan(t.values[-1])
        assert not t.open_age[:-1].any()

    def test_duplicate_cell(self):
        with pytest.raises(DuplicateCellError):
            _table(["1921 0 0.1 0.1 0.1", "1921 0 0.2 0.2 0.2"])

    def test_bad_year_names_line(self):
        with pytest.raises(ParseError) as exc:
            _table(["1921 0 0.1 0.1 0.1", "19x1 1 0.1 0.1 0.1"])
        assert exc.value.line == 5

    def test_bad_value(self):
        with pytest.raises(ParseError):
            _table(["1921 0 0.1 abc 0.1"])

    def test_sex_column(self):
        t = parse_hmd_table(HEADER + "1921 0 0.065871 0.082594 0.074300\n", TableKind.DEATH_RATES, "female")
        assert t.values[0] == pytest.approx(0.065871)

    def test_row_order_irrelevant(self, rng):
        rows = [f"{y} {a} {v:.6f} {v:.6f} {v:.6f}" for y in (1950, 1951) for a, v in
                zip(range(5), rng.uniform(0.001, 0.1, 5))]
        a = _table(rows)
        b = _table(list(reversed(rows)))
        for f in ("years", "ages", "values"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))

    def test_noncontiguous_ages(self):
        with pytest.raises(ParseError):
            _table(["1921 0 0.1 0.1 0.1", "1921 2 0.1 0.1 0.1"])

    def test_territorial_markers(self):
        t = _table(["1959- 0 0.1 0.1 0.1", "1959+ 0 0.2 0.2 0.2"])
        assert t.values.tolist() == [0.2]

    def test_file_like(self):
        t = parse_hmd_table(io.StringIO(HEADER + "1921 0 0.1 0.1 0.1\n"), TableKind.DEATH_RATES)
        assert len(t) == 1


def _raw(kind, years, ages, values):
    return parse_hmd_table(_grid_text(years, ages, values, digits=6), kind)


class TestBuild:
    def test_pooling_ages(self, rng):
        years, ages = np.arange(1990, 1993), np.arange(111)
        m = rng.uniform(0.001, 0.5, (111, 3))
        cfg = CountryConfig("X", 1990, 100, end_year=1992)
        s = build_surface(_raw(TableKind.DEATH_RATES, years, ages, m), None, None, cfg)
        np.testing.assert_array_equal(s.ages, np.arange(101))
        assert s.metadata["pooled_rate_approximate"]
        np.testing.assert_allclose(s.rates[-1], np.round(m[100:], 6).mean(axis=0), rtol=1e-12)

    def test_weighted_pooling(self):
        years, ages = np.array([2000]), np.arange(102)
        d = np.ones((102, 1))
        e = np.full((102, 1), 10.0)
        d[100, 0], d[101, 0] = 10, 5
        e[100, 0], e[101, 0] = 100, 25
        cfg = CountryConfig("X", 1999, 100, end_year=2000)
        s = build_surface(
            _raw(TableKind.DEATH_RATES, years, ages, d / e),
            _raw(TableKind.DEATHS, years, ages, d),
            _raw(TableKind.EXPOSURES, years, ages, e),
            cfg,
        )
        assert s.rates[-1, 0] == pytest.approx(15 / 125, abs=1e-15)
        assert s.deaths.sum() == pytest.approx(d.sum())
        assert s.exposures.sum() == pytest.approx(e.sum())
        assert not s.metadata["pooled_rate_approximate"]

    def test_single_age_pool_identity(self, rng):
        years, ages = np.arange(2000, 2003), np.arange(101)
        m = np.round(rng.uniform(0.001, 0.5, (101, 3)), 6)
        s = build_surface(_raw(TableKind.DEATH_RATES, years, ages, m), None, None,
                          CountryConfig("X", 2000, 100, end_year=2002))
        np.testing.assert_array_equal(s.rates, m)

    def test_rates_match_counts(self, rng):
        years, ages = np.arange(2000, 2004), np.arange(21)
        e = rng.uniform(100, 1e4, (21, 4)).round(2)
        d = rng.poisson(e * 0.02).astype(float)
        s = build_surface(
            _raw(TableKind.DEATH_RATES, years, ages, d / e),
            _raw(TableKind.DEATHS, years, ages, d),
            _raw(TableKind.EXPOSURES, years, ages, e),
            CountryConfig("X", 2000, 20, end_year=2003),
        )
        ok = s.exposures > 0
        assert np.all(np.abs(s.rates - s.deaths / s.exposures)[ok] <= 1e-8 * np.maximum(1, s.rates[ok]))

    def test_no_common_years(self, rng):
        t = _raw(TableKind.DEATH_RATES, np.arange(1900, 1902), np.arange(5), rng.uniform(size=(5, 2)))
        with pytest.raises(CoverageError):
            build_surface(t, None, None, CountryConfig("X", 1950, 4, end_year=1960))

    def test_all_missing_age(self):
        vals = np.full((5, 2), 0.1)
        vals[2] = np.nan
        t = _raw(TableKind.DEATH_RATES, np.arange(2000, 2002), np.arange(5), vals)
        with pytest.raises(DataError):
            build_surface(t, None, None, CountryConfig("X", 2000, 4, end_year=2001))


def _surface(rates, deaths=None):
    rates = np.atleast_2d(np.asarray(rates, dtype=float))
    return MortalitySurface(np.arange(rates.shape[0]), np.arange(rates.shape[1]), rates,
                            deaths, None, {})


class TestLog:
    def test_shift(self):
        ls = to_log_surface(_surface([[0.2, 0.0, 0.1]]))
        assert ls.shift == 0.1
        np.testing.assert_allclose(ls.y[0], np.log([0.3, 0.1, 0.2]), rtol=0, atol=1e-15)

    def test_no_shift(self, rng):
        m = rng.uniform(0.001, 0.3, (4, 5))
        ls = to_log_surface(_surface(m))
        assert ls.shift == 0.0
        np.testing.assert_array_equal(ls.y, np.log(m))
        np.testing.assert_allclose(np.exp(ls.y) - ls.shift, m, rtol=1e-12)

    def test_missing_filled(self):
        ls = to_log_surface(_surface([[0.2, np.nan, 0.1]]))
        assert ls.y[0, 1] == pytest.approx(np.log(0.1))

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            to_log_surface(_surface([[0.0, np.nan]]))

    def test_sigma_from_deaths(self):
        ls = to_log_surface(_surface([[0.01, 0.02]], deaths=np.array([[400.0, 0.0]])))
        assert ls.sigma_obs[0, 0] == pytest.approx(0.05)
        assert ls.sigma_obs[0, 1] == 1.0

    def test_poisson_delta_method(self):
        draws = np.random.default_rng(0).poisson(400, 200_000)
        sd = np.std(np.log(draws / 1000.0))
        assert sd == pytest.approx(0.05, rel=0.02)


class TestConfig:
    def test_load_text(self):
        cfg = load_country_config("code = AUS\ncommencing_year = 1921\nmax_age = 100\n")
        assert cfg == TABLE1_COUNTRIES["AUS"]

    def test_sex_and_end(self):
        cfg = load_country_config("code=X\ncommencing_year=1950\nmax_age=90\nend_year=2000\nsex=Female")
        assert (cfg.end_year, cfg.sex) == (2000, "female")

    @pytest.mark.parametrize("text", [
        "code=X\nmax_age=100",
        "code=X\ncommencing_year=2020\nmax_age=100",
        "code=X\ncommencing_year=1950\nmax_age=0",
        "code=X\ncommencing_year=1950\nmax_age=111",
        "code=X\ncommencing_year=abc\nmax_age=100",
        "code=X\ncommencing_year=1950\nmax_age=100\nsex=both",
    ])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            load_country_config(text)

    def test_table1(self):
        assert len(TABLE1_COUNTRIES) == 12
        assert TABLE1_COUNTRIES["FIN"].max_age == 96
