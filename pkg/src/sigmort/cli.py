"""``sigmort`` command-line interface.

Every command writes tab-separated tables plus ``manifest.json`` into
``--out-dir``. Failures print one line ``sigmort: error[<category>]: <detail>``
on stderr and exit with status 2 (usage errors keep argparse's own status).
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from sigmort import __version__
from sigmort import io as sio
from sigmort.decomposition import BasisModel, LcModel, fit_fpca, fit_huts, fit_lc
from sigmort.errors import ConfigError, SigmortError
from sigmort.evaluation import (
    BacktestSpec,
    expanding_backtest,
    metric_curves,
    metrics_by_age,
    residual_diagnostics,
    truncation_search,
)
from sigmort.forecast import forecast_lc, point_forecast
from sigmort.ingest import load_country_config, load_surface
from sigmort.smoothing import smooth_surface
from sigmort.uncertainty import (
    bias_corrected_interval,
    bootstrap_variants,
    coeff_forecast_errors,
    normal_interval,
    percentile_interval,
    stack_intervals,
)

log = logging.getLogger("sigmort")

COMMANDS = ("ingest", "fit", "forecast", "interval", "backtest", "truncsearch", "diagnose")
_KIND_TO_TAG = {"huts": "huts", "fpca": "hu", "lc": "lc"}

# Which inputs each command needs; "data" means the HMD files plus country
# config, "model" accepts either --model-in or the raw data.
_REQUIRES = {
    "ingest": "data",
    "fit": "data",
    "forecast": "model",
    "interval": "model",
    "backtest": "data",
    "truncsearch": "data",
    "diagnose": "model",
}


def _horizons(text: str) -> list:
    """``"10"`` means horizons 1..10; ``"1,5,10"`` lists them explicitly."""
    try:
        parts = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizons {text!r}") from None
    if not parts or min(parts) < 1:
        raise argparse.ArgumentTypeError("horizons must be positive integers")
    if len(parts) == 1:
        return list(range(1, parts[0] + 1))
    return sorted(set(parts))


def _int_list(text: str) -> list:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _alpha(text: str) -> float:
    a = float(text)
    if not 0.0 < a < 1.0:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigmort", description="Signature-based mortality forecasting")
    parser.add_argument("--version", action="version", version=f"sigmort {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--country-config", type=Path)
    parser.add_argument("--mx", type=Path, help="HMD Mx_1x1 file")
    parser.add_argument("--deaths", type=Path, help="HMD Deaths_1x1 file")
    parser.add_argument("--exposures", type=Path, help="HMD Exposures_1x1 file")
    parser.add_argument("--model-out", type=Path)
    parser.add_argument("--model-in", type=Path)
    parser.add_argument("--model", choices=("huts", "hu", "lc"), default="huts")
    parser.add_argument("--m", type=int, default=2, help="signature truncation order")
    parser.add_argument("--K", type=int, default=6, help="number of basis functions")
    parser.add_argument("--horizons", type=_horizons, default=_horizons("10"))
    parser.add_argument("--alpha", type=_alpha, action="append",
                        help="1 - nominal coverage; repeatable (default 0.05 and 0.2)")
    parser.add_argument("--L", type=int, default=1000, help="bootstrap variants")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--bias-correct", choices=("on", "off"), default="on")
    parser.add_argument("--candidates", type=_int_list, default=[2, 3, 4, 5],
                        help="truncation orders for truncsearch")
    parser.add_argument("--ages", type=_int_list, default=[0, 25, 40, 70],
                        help="ages for residual diagnostics")
    parser.add_argument("--out-dir", type=Path, required=True)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


class Run:
    """One CLI invocation: validated arguments and the artifacts it wrote."""

    def __init__(self, args):
        self.args = args
        self.out = sio.ensure_dir(args.out_dir)
        self.artifacts = []
        self._data = None
        self.validate()

    def validate(self):
        a = self.args
        need = _REQUIRES[a.command]
        has_data = a.mx is not None and a.country_config is not None
        if need == "data" and not has_data:
            raise ConfigError(f"{a.command} requires --mx and --country-config")
        if need == "model" and a.model_in is None and not has_data:
            raise ConfigError(f"{a.command} requires --model-in or --mx with --country-config")
        if a.K < 1 or a.m < 1:
            raise ConfigError("--m and --K must be >= 1")
        if a.L < 1:
            raise ConfigError("--L must be >= 1")
        if a.command == "interval" and a.model == "lc" and a.model_in is None:
            raise ConfigError("intervals are available for huts and hu models only")

    @property
    def alphas(self) -> list:
        return sorted(set(self.args.alpha or [0.05, 0.2]))

    def table(self, name, header, rows):
        self.artifacts.append(sio.write_table(self.out / name, header, rows))

    def data(self):
        if self._data is None:
            a = self.args
            cfg = load_country_config(a.country_config)
            self._data = (cfg,) + load_surface(a.mx, cfg, a.deaths, a.exposures)
        return self._data

    def fit(self, tag=None):
        a = self.args
        tag = tag or a.model
        _, _, log_surface = self.data()
        if tag == "lc":
            return fit_lc(log_surface)
        smoothed = smooth_surface(log_surface)
        if tag == "huts":
            return fit_huts(smoothed, m=a.m, K=a.K)
        return fit_fpca(smoothed, K=a.K)

    def model(self):
        if self.args.model_in is not None:
            return sio.load_model(self.args.model_in)
        return self.fit()

    def inputs(self):
        a = self.args
        paths = [a.country_config, a.mx, a.deaths, a.exposures, a.model_in]
        return [p for p in paths if p is not None]

    def params(self) -> dict:
        a = self.args
        return {
            "model": a.model, "m": a.m, "K": a.K, "horizons": a.horizons,
            "alpha": self.alphas, "L": a.L, "seed": a.seed,
            "bias_correct": a.bias_correct, "candidates": a.candidates, "ages": a.ages,
        }

    def finish(self, extra=None):
        params = self.params()
        params.update(extra or {})
        sio.write_manifest(self.out, self.args.command, params, self.inputs(), self.artifacts)


def _model_tag(model) -> str:
    return "lc" if isinstance(model, LcModel) else _KIND_TO_TAG[model.kind]


def cmd_ingest(run: Run):
    cfg, surface, log_surface = run.data()
    rows = []
    for j, year in enumerate(surface.years):
        for i, age in enumerate(surface.ages):
            rows.append((int(year), int(age), surface.rates[i, j], log_surface.y[i, j],
                         log_surface.sigma_obs[i, j]))
    run.table("surface.tsv", ("year", "age", "rate", "log_rate", "sigma_obs"), rows)
    return {"country": cfg.code, "pooled_rate_approximate": surface.metadata.get("pooled_rate_approximate")}


def cmd_fit(run: Run):
    model = run.fit()
    path = run.args.model_out or (run.out / "model.npz")
    sio.save_model(model, path)
    if Path(path).resolve().parent == run.out.resolve():
        run.artifacts.append(Path(path))
    if isinstance(model, LcModel):
        run.table("lc_age.tsv", ("age", "a", "b"), zip(model.ages, model.a, model.b))
        run.table("lc_time.tsv", ("year", "k"), zip(model.years, model.k))
    else:
        K = model.K
        run.table("basis.tsv", ("age", "mean") + tuple(f"Z{k + 1}" for k in range(K)),
                  (tuple([x, mu]) + tuple(row) for x, mu, row in zip(model.grid, model.mean, model.basis)))
        run.table("coefficients.tsv", ("year",) + tuple(f"beta{k + 1}" for k in range(K)),
                  (tuple([y]) + tuple(row) for y, row in zip(model.years, model.coeffs)))
    return {"model_file": Path(path).name}


def _forecast(model, H):
    if isinstance(model, LcModel):
        fc = forecast_lc(model, H)
        return fc.ages, fc.point, fc.k_var[:, None] * model.b[None, :] ** 2, None
    bundle = point_forecast(model, H)
    return bundle.grid, bundle.point, bundle.variance, bundle


def cmd_forecast(run: Run):
    model = run.model()
    hs = run.args.horizons
    grid, point, var, _ = _forecast(model, max(hs))
    idx = np.asarray(hs) - 1
    rows = sio.forecast_rows(grid, point[idx], var[idx], _model_tag(model))
    rows = [(x, hs[h - 1], p, v, t) for x, h, p, v, t in rows]
    run.table("forecast.tsv", sio.FORECAST_HEADER, rows)
    run.table("plot_forecast_curves.tsv", ("horizon", "age", "log_rate"),
              [(r[1], r[0], r[2]) for r in rows])
    return {"model_kind": _model_tag(model)}


def cmd_interval(run: Run):
    a = run.args
    model = run.model()
    if not isinstance(model, BasisModel):
        raise ConfigError("intervals are available for huts and hu models only")
    hs = a.horizons
    bundle = point_forecast(model, max(hs))
    rows = []
    clamped = {}
    for alpha in run.alphas:
        pieces = {"bootstrap": [], "bias_corrected_bootstrap": []}
        for h in hs:
            errs = coeff_forecast_errors(model, h, bundle.coeff_models)
            var = bootstrap_variants(model, bundle, h, a.L, a.seed, errors=errs)
            pieces["bootstrap"].append(percentile_interval(var, alpha, grid=model.grid))
            if a.bias_correct == "on":
                pieces["bias_corrected_bootstrap"].append(
                    bias_corrected_interval(var, bundle.point[h - 1], alpha, grid=model.grid)
                )
        nrm = normal_interval(bundle, alpha)
        idx = np.asarray(hs) - 1
        for iv in [stack_intervals(p) for p in pieces.values() if p]:
            rows.extend(sio.interval_rows(iv, a.seed, a.L))
            if "clamped" in iv.meta:
                clamped[f"{1 - alpha:.6g}"] = iv.meta["clamped"]
        nrm_sel = type(nrm)(nrm.grid, nrm.horizons[idx], nrm.lower[idx], nrm.upper[idx], nrm.nominal, nrm.method)
        rows.extend(sio.interval_rows(nrm_sel, a.seed, a.L))
    run.table("intervals.tsv", sio.INTERVAL_HEADER, rows)
    fan = [(r[1], r[0], r[2], r[3], r[4], r[5]) for r in rows]
    run.table("plot_interval_fan.tsv", ("horizon", "age", "lower", "upper", "nominal", "method"), fan)
    return {"model_kind": _model_tag(model), "bias_correction_clamped_cells": clamped}


def _spec(run: Run, levels=(), m=None) -> BacktestSpec:
    a = run.args
    return BacktestSpec(model=a.model, m=a.m if m is None else m, K=a.K, H=max(a.horizons),
                        seed=a.seed, levels=tuple(levels), L=a.L)


def cmd_backtest(run: Run):
    a = run.args
    cfg, _, log_surface = run.data()
    levels = tuple(1 - al for al in a.alpha) if a.alpha else ()
    if a.model == "lc":
        levels = ()
    spec = _spec(run, levels)
    rep = expanding_backtest(log_surface, spec)
    hs, mse, mae = metric_curves(rep)
    counts = [int(np.sum(rep.horizon == h)) for h in hs]
    run.table("metrics_by_horizon.tsv", ("horizon", "mse", "mae", "cells", "model"),
              [(int(h), e, b, c, a.model) for h, e, b, c in zip(hs, mse, mae, counts)])
    age_rows = []
    for h in hs:
        ages, amse, amae, ame = metrics_by_age(rep, h)
        age_rows.extend((int(h), x, s, m_, e) for x, s, m_, e in zip(ages, amse, amae, ame))
    run.table("metrics_by_age.tsv", ("horizon", "age", "mse", "mae", "me"), age_rows)
    run.table("failures.tsv", ("origin", "reason"), rep.failures)
    if rep.bounds:
        cov_rows = []
        for (method, level) in sorted(rep.bounds):
            for h in hs:
                cov_rows.append((method, level, int(h), rep.coverage(method, level, h)))
            cov_rows.append((method, level, "all", rep.coverage(method, level)))
        run.table("coverage.tsv", ("method", "nominal", "horizon", "coverage"), cov_rows)
    return {"country": cfg.code, "origins": [int(o) for o in spec.origins(int(log_surface.years[-1]))],
            "failed_origins": len(rep.failures)}


def cmd_truncsearch(run: Run):
    _, _, log_surface = run.data()
    res = truncation_search(log_surface, run.args.candidates, _spec(run))
    rows = []
    for i, m in enumerate(res.candidates):
        for j, h in enumerate(res.horizons):
            rows.append((m, int(h), res.mse[i, j], res.mae[i, j]))
    run.table("truncation.tsv", ("m", "horizon", "mse", "mae"), rows)
    run.table("truncation_ranking.tsv", ("rank", "m", "mean_mse"),
              [(r + 1, m, float(res.mse[res.candidates.index(m)].mean()))
               for r, m in enumerate(res.ranking())])
    print(f"recommended m = {res.best}")
    return {"recommended_m": res.best}


def cmd_diagnose(run: Run):
    model = run.model()
    if not isinstance(model, BasisModel):
        raise ConfigError("residual diagnostics need a huts or hu model")
    diags = residual_diagnostics(model, run.args.ages)
    run.table("diagnostics.tsv", ("age", "skewness", "excess_kurtosis", "jb_stat", "jb_pvalue"),
              [(d.age, d.skewness, d.excess_kurtosis, d.jb_stat, d.jb_pvalue) for d in diags])
    hist = []
    for d in diags:
        hist.extend((d.age, lo, hi, int(c)) for lo, hi, c in zip(d.edges[:-1], d.edges[1:], d.counts))
    run.table("residual_histograms.tsv", ("age", "bin_lower", "bin_upper", "count"), hist)
    return {"model_kind": _model_tag(model)}


_HANDLERS = {
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "interval": cmd_interval,
    "backtest": cmd_backtest,
    "truncsearch": cmd_truncsearch,
    "diagnose": cmd_diagnose,
}


def run(args) -> int:
    r = Run(args)
    extra = _HANDLERS[args.command](r)
    r.finish(extra)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return run(args)
    except SigmortError as exc:
        detail = " ".join(str(exc).split())
        print(f"sigmort: error[{exc.category}]: {detail}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        category = "io" if isinstance(exc, OSError) else "value"
        print(f"sigmort: error[{category}]: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
