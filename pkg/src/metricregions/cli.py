"""Batch command-line front end.

Five subcommands, all driven by an INI config file plus a few flags:

* ``simulate``  draw a synthetic dataset and write it as CSV
* ``fit``       fit region models (one per alpha) and save them as JSON
* ``predict``   load a model bundle and emit per-query regions as JSON
* ``evaluate``  score a saved bundle on evaluation data, write a report
* ``replicate`` run the full generate/fit/evaluate loop B times

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
Every command is deterministic given the same config and seed; reruns
produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import rng
from .errors import (
    DimensionMismatch,
    EmptyEvalSet,
    EmptyModel,
    EmptyValues,
    IncompatibleMetric,
    InvalidConfig,
    InvalidDataset,
    KGridEmpty,
    KTooLarge,
    MetricRegionsError,
    MultivariateUnsupported,
    NonMonotoneQuantile,
    SchemaError,
    TooFewSamples,
    UnsupportedScenario,
    VersionMismatch,
    WeightsSumToZero,
)
from .evaluate import evaluate_model
from .metrics import EuclideanVector, MetricKind, QuantileFunction
from .regions import (
    PredictionRegion,
    fit_conformalized_hetero,
    fit_hetero_tuned,
    fit_heteroscedastic_knn,
    fit_homoscedastic,
)
from .regression import (
    LabeledDataset,
    MeanSpec,
    SplitConfig,
    fit_mean,
    split_dataset,
    split_three,
)
from .simulate import (
    GaussianMulti,
    ScenarioSpec,
    WassersteinExample,
    generate,
    predictor_range,
    scenario_from_tag,
    scenario_tag,
)
from .storage import (
    read_dataset_csv,
    read_models_json,
    read_queries_csv,
    write_curves_tsv,
    write_dataset_csv,
    write_models_json,
    write_regions_json,
    write_report_json,
)

__all__ = ["main"]

_CONFIG_KEYS = """\
config file reference (INI sections and keys)

[data]
  scenario          setting1 | setting2 | setting3 | setting4 | gaussian | wasserstein
  n                 sample size for simulate / fit / replicate
  seed              base seed (overridden by --seed)
  input             dataset CSV path; alternative to scenario+n for fit
  response_dim      gaussian only: response dimension (default 1)
  predictor_dim     gaussian only: predictor dimension (default 1)
  heteroscedastic   gaussian only: true | false (default false)
  coefficients      wasserstein only: comma-separated trend coefficients
  n_obs_per_curve   wasserstein only: sample size behind each curve (default 100)
  noise_sd          wasserstein only: noise standard deviation (default 1.0)

[model]
  algorithm         homoscedastic | hetero-knn | hetero-tuned | conformal-hetero
  alpha             comma-separated miscoverage levels (default 0.2)
  mean              knn | global (default knn)
  mean_k            auto | positive integer (default auto)
  mean_k_grid       comma-separated candidate k values for mean selection
  k                 neighbor count for local radii (hetero-knn, conformal-hetero)
  k_grid            comma-separated radius k candidates (hetero-tuned)
  train_fraction    share of rows used to fit the mean (default 0.5)
  calib_fraction    conformal-hetero only: share for local radii (default 0.25)
  fit_metric        euclidean-l2 | wasserstein2 (default matches the data)
  region_metric     euclidean-l2 | euclidean-sup | wasserstein2 | quantile-sup
  randomized_ties   auto | true | false (default auto)

[predict]
  model             model bundle JSON path
  queries           CSV with x_1..x_p columns (extra response columns ignored)

[evaluate]
  model             model bundle JSON path
  eval_input        evaluation dataset CSV; or use [data] scenario with eval_n
  eval_n            evaluation draw size when using a scenario
  grid_points       conditional-coverage grid size (default 101)
  mc_draws          Monte Carlo draws for the region error (default 0 = skip)
  curves            optional TSV path for the coverage curves

[replicate]
  replicates        number of independent replicates B
  n                 per-replicate training size (default [data] n)
  eval_n            per-replicate evaluation size (default 2000)
  grid_points       conditional-coverage grid size (default 101)
  mc_draws          Monte Carlo draws for the region error (default 0 = skip)
  curves            optional TSV path for per-replicate coverage curves
"""

_REQUIRED = object()


class _Config:
    """Typed access to the INI file; failures name the section and key."""

    def __init__(self, path: str):
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise InvalidConfig(f"config file {path!r} not found or unreadable")
        self._parser = parser

    def has(self, section: str, key: str) -> bool:
        return self._parser.has_option(section, key)

    def _raw(self, section: str, key: str, default):
        if not self._parser.has_option(section, key):
            if default is _REQUIRED:
                raise InvalidConfig(f"[{section}] {key}: required key is missing")
            return None
        return self._parser.get(section, key).strip()

    def get_str(self, section: str, key: str, default=_REQUIRED) -> Optional[str]:
        raw = self._raw(section, key, default)
        return default if raw is None and default is not _REQUIRED else raw

    def get_int(self, section: str, key: str, default=_REQUIRED) -> Optional[int]:
        raw = self._raw(section, key, default)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise InvalidConfig(f"[{section}] {key}: {raw!r} is not an integer") from None

    def get_float(self, section: str, key: str, default=_REQUIRED) -> Optional[float]:
        raw = self._raw(section, key, default)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise InvalidConfig(f"[{section}] {key}: {raw!r} is not a number") from None

    def get_bool(self, section: str, key: str, default=_REQUIRED) -> Optional[bool]:
        raw = self._raw(section, key, default)
        if raw is None:
            return default
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InvalidConfig(f"[{section}] {key}: {raw!r} is not a boolean")

    def get_floats(self, section: str, key: str, default=_REQUIRED):
        raw = self._raw(section, key, default)
        if raw is None:
            return default
        try:
            return tuple(float(tok) for tok in raw.split(",") if tok.strip() != "")
        except ValueError:
            raise InvalidConfig(f"[{section}] {key}: {raw!r} is not a comma-separated number list") from None

    def get_ints(self, section: str, key: str, default=_REQUIRED):
        raw = self._raw(section, key, default)
        if raw is None:
            return default
        try:
            return tuple(int(tok) for tok in raw.split(",") if tok.strip() != "")
        except ValueError:
            raise InvalidConfig(f"[{section}] {key}: {raw!r} is not a comma-separated integer list") from None


# ---------------------------------------------------------------------------
# config interpretation


def _scenario(cfg: _Config) -> ScenarioSpec:
    tag = cfg.get_str("data", "scenario")
    if tag == "gaussian":
        return scenario_from_tag(
            tag,
            response_dim=cfg.get_int("data", "response_dim", 1),
            predictor_dim=cfg.get_int("data", "predictor_dim", 1),
            heteroscedastic=cfg.get_bool("data", "heteroscedastic", False),
        )
    if tag == "wasserstein":
        return scenario_from_tag(
            tag,
            coefficients=cfg.get_floats("data", "coefficients", (1.0,)),
            n_obs_per_curve=cfg.get_int("data", "n_obs_per_curve", 100),
            noise_sd=cfg.get_float("data", "noise_sd", 1.0),
        )
    return scenario_from_tag(tag)


def _optional_scenario(cfg: _Config) -> Optional[ScenarioSpec]:
    return _scenario(cfg) if cfg.has("data", "scenario") else None


def _base_seed(cfg: _Config, args) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.get_int("data", "seed", 0)


def _training_data(cfg: _Config, seed: int) -> LabeledDataset:
    if cfg.has("data", "input"):
        return read_dataset_csv(cfg.get_str("data", "input"))
    if cfg.has("data", "scenario"):
        return generate(_scenario(cfg), cfg.get_int("data", "n"), seed)
    raise InvalidConfig("[data]: either 'input' or 'scenario' (with 'n') is required")


def _metric(cfg: _Config, key: str, default: MetricKind) -> MetricKind:
    raw = cfg.get_str("model", key, None)
    if raw is None:
        return default
    try:
        return MetricKind(raw)
    except ValueError:
        raise InvalidConfig(f"[model] {key}: unknown metric {raw!r}") from None


def _randomized(cfg: _Config) -> Optional[bool]:
    raw = cfg.get_str("model", "randomized_ties", "auto")
    if raw == "auto":
        return None
    return cfg.get_bool("model", "randomized_ties")


def _alphas(cfg: _Config) -> tuple[float, ...]:
    values = cfg.get_floats("model", "alpha", (0.2,))
    if not values:
        raise InvalidConfig("[model] alpha: at least one level is required")
    out = []
    for a in values:
        if a not in out:
            out.append(float(a))
    return tuple(out)


def _mean_spec(cfg: _Config, fit_metric: MetricKind) -> MeanSpec:
    kind = cfg.get_str("model", "mean", "knn")
    if kind not in ("knn", "global"):
        raise InvalidConfig(f"[model] mean: unknown estimator {kind!r}")
    k = None
    raw_k = cfg.get_str("model", "mean_k", "auto")
    if raw_k != "auto":
        k = cfg.get_int("model", "mean_k")
        if k < 1:
            raise InvalidConfig("[model] mean_k: must be positive")
    grid = cfg.get_ints("model", "mean_k_grid", None)
    return MeanSpec(kind, fit_metric, k=k, k_grid=grid)


def _fit_models(cfg: _Config, data: LabeledDataset, seed: int) -> list:
    algorithm = cfg.get_str("model", "algorithm", "homoscedastic")
    default_metric = (
        MetricKind.WASSERSTEIN2 if data.quantile_grid is not None else MetricKind.EUCLIDEAN_L2
    )
    fit_metric = _metric(cfg, "fit_metric", default_metric)
    region_metric = _metric(cfg, "region_metric", default_metric)
    randomized = _randomized(cfg)
    alphas = _alphas(cfg)
    train_fraction = cfg.get_float("model", "train_fraction", 0.5)

    models = []
    if algorithm == "conformal-hetero":
        calib_fraction = cfg.get_float("model", "calib_fraction", 0.25)
        train, calib, conformal = split_three(data, train_fraction, calib_fraction, seed)
        mean = fit_mean(train, _mean_spec(cfg, fit_metric), rng.derive_seed(seed, "mean"))
        k = cfg.get_int("model", "k")
        for alpha in alphas:
            models.append(
                fit_conformalized_hetero(
                    train, calib, conformal, alpha, k, mean, region_metric,
                    seed=seed, randomized=randomized,
                )
            )
        return models

    train, calib = split_dataset(data, SplitConfig(train_fraction, seed))
    if algorithm == "hetero-tuned":
        for alpha in alphas:
            result = fit_hetero_tuned(
                train, calib, alpha,
                fit_metric=fit_metric,
                region_metric=region_metric,
                mean_k_grid=cfg.get_ints("model", "mean_k_grid", None),
                radius_k_grid=cfg.get_ints("model", "k_grid", None),
                seed=seed, randomized=randomized,
            )
            models.append(result.model)
        return models

    mean = fit_mean(train, _mean_spec(cfg, fit_metric), rng.derive_seed(seed, "mean"))
    if algorithm == "homoscedastic":
        for alpha in alphas:
            models.append(
                fit_homoscedastic(
                    train, calib, alpha, mean, region_metric,
                    seed=seed, randomized=randomized,
                )
            )
        return models
    if algorithm == "hetero-knn":
        k = cfg.get_int("model", "k")
        for alpha in alphas:
            models.append(
                fit_heteroscedastic_knn(
                    train, calib, alpha, k, mean, region_metric,
                    seed=seed, randomized=randomized,
                )
            )
        return models
    raise InvalidConfig(f"[model] algorithm: unknown algorithm {algorithm!r}")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(cfg: _Config, args) -> None:
    seed = _base_seed(cfg, args)
    data = generate(_scenario(cfg), cfg.get_int("data", "n"), seed)
    write_dataset_csv(args.out, data)


def _cmd_fit(cfg: _Config, args) -> None:
    seed = _base_seed(cfg, args)
    data = _training_data(cfg, seed)
    write_models_json(args.out, _fit_models(cfg, data, seed))


def _cmd_predict(cfg: _Config, args) -> None:
    models = read_models_json(cfg.get_str("predict", "model"))
    queries = read_queries_csv(cfg.get_str("predict", "queries"))
    # larger alpha first, so per-query radii are nondecreasing down the file
    models = sorted(models, key=lambda m: -m.alpha)
    per_model = []
    for model in models:
        centers = model.center_values(queries)
        radii = model.radii(queries)
        grid = model.mean.quantile_grid
        per_model.append((model, centers, radii, grid))
    entries = []
    for i in range(queries.shape[0]):
        for model, centers, radii, grid in per_model:
            point = (
                EuclideanVector(centers[i])
                if grid is None
                else QuantileFunction(grid, centers[i])
            )
            entries.append(
                {
                    "query": queries[i],
                    "alpha": model.alpha,
                    "region": PredictionRegion(point, float(radii[i]), model.region_metric),
                }
            )
    write_regions_json(args.out, entries)


def _report_row(report) -> dict:
    return {
        "alpha": report.alpha,
        "n_eval": report.n_eval,
        "marginal_coverage": report.marginal_coverage,
        "l2_error": report.l2_error,
        "region_error": report.region_error,
    }


def _eval_grid(spec: Optional[ScenarioSpec], eval_set: LabeledDataset, points: int):
    if eval_set.p != 1:
        return None
    if spec is not None:
        lo, hi = predictor_range(spec)
    else:
        lo = float(eval_set.predictors.min())
        hi = float(eval_set.predictors.max())
    return np.linspace(lo, hi, points)


def _cmd_evaluate(cfg: _Config, args) -> None:
    seed = _base_seed(cfg, args)
    models = read_models_json(cfg.get_str("evaluate", "model"))
    spec = _optional_scenario(cfg)
    if cfg.has("evaluate", "eval_input"):
        eval_set = read_dataset_csv(cfg.get_str("evaluate", "eval_input"))
    elif spec is not None:
        eval_set = generate(spec, cfg.get_int("evaluate", "eval_n"), rng.derive_seed(seed, "eval"))
    else:
        raise InvalidConfig("[evaluate]: need 'eval_input' or a [data] scenario with 'eval_n'")
    grid_points = cfg.get_int("evaluate", "grid_points", 101)
    mc_draws = cfg.get_int("evaluate", "mc_draws", 0)
    x_grid = _eval_grid(spec, eval_set, grid_points)
    rows = []
    curves = {}
    for i, model in enumerate(models):
        report = evaluate_model(
            model, eval_set, x_grid=x_grid, grid_points=grid_points,
            spec=spec if mc_draws > 0 else None, mc_draws=mc_draws,
            seed=rng.derive_seed(seed, "mc", i),
        )
        rows.append(_report_row(report))
        if report.curve is not None:
            curves[f"alpha_{report.alpha}"] = report.curve.values
    write_report_json(args.out, {"reports": rows})
    curves_path = cfg.get_str("evaluate", "curves", None)
    if curves_path and curves and x_grid is not None:
        write_curves_tsv(curves_path, x_grid, curves)


def _aggregate(values: list) -> Optional[dict]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    arr = np.asarray(vals, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "sd": sd, "values": arr}


def _cmd_replicate(cfg: _Config, args) -> None:
    seed = _base_seed(cfg, args)
    spec = _scenario(cfg)
    n = cfg.get_int("replicate", "n", None)
    if n is None:
        n = cfg.get_int("data", "n")
    b_total = cfg.get_int("replicate", "replicates")
    if b_total < 1:
        raise InvalidConfig("[replicate] replicates: must be at least 1")
    eval_n = cfg.get_int("replicate", "eval_n", 2000)
    grid_points = cfg.get_int("replicate", "grid_points", 101)
    mc_draws = cfg.get_int("replicate", "mc_draws", 0)
    lo, hi = predictor_range(spec)
    scalar_x = len(spec.coefficients) == 1 if isinstance(spec, WassersteinExample) else (
        spec.predictor_dim == 1 if isinstance(spec, GaussianMulti) else True
    )
    x_grid = np.linspace(lo, hi, grid_points) if scalar_x else None

    def one(b: int):
        try:
            rep_seed = rng.derive_seed(seed, "replicate", b)
            data = generate(spec, n, rep_seed)
            models = _fit_models(cfg, data, rep_seed)
            eval_set = generate(spec, eval_n, rng.derive_seed(rep_seed, "eval"))
            reports = []
            for i, model in enumerate(models):
                reports.append(
                    evaluate_model(
                        model, eval_set, x_grid=x_grid, grid_points=grid_points,
                        spec=spec if mc_draws > 0 else None, mc_draws=mc_draws,
                        seed=rng.derive_seed(rep_seed, "mc", i),
                    )
                )
            return reports
        except MetricRegionsError as exc:
            raise type(exc)(f"replicate {b}: {exc}") from exc

    threads = max(1, args.threads)
    if threads == 1:
        all_reports = [one(b) for b in range(b_total)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_reports = list(pool.map(one, range(b_total)))

    alphas = [r.alpha for r in all_reports[0]]
    per_alpha = []
    curves = {}
    for i, alpha in enumerate(alphas):
        reps = [reports[i] for reports in all_reports]
        per_alpha.append(
            {
                "alpha": alpha,
                "marginal_coverage": _aggregate([r.marginal_coverage for r in reps]),
                "l2_error": _aggregate([r.l2_error for r in reps]),
                "region_error": _aggregate([r.region_error for r in reps]),
            }
        )
        for b, r in enumerate(reps):
            if r.curve is not None:
                curves[f"alpha_{alpha}_rep_{b}"] = r.curve.values
    write_report_json(
        args.out,
        {
            "scenario": scenario_tag(spec),
            "replicates": b_total,
            "n": n,
            "eval_n": eval_n,
            "per_alpha": per_alpha,
        },
    )
    curves_path = cfg.get_str("replicate", "curves", None)
    if curves_path and curves and x_grid is not None:
        write_curves_tsv(curves_path, x_grid, curves)


# ---------------------------------------------------------------------------
# entry point

_HANDLERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "replicate": _cmd_replicate,
}

_CONFIG_FAILURES = (
    InvalidConfig,
    KGridEmpty,
    KTooLarge,
    TooFewSamples,
    MultivariateUnsupported,
    UnsupportedScenario,
    EmptyValues,
    EmptyEvalSet,
    configparser.Error,
)
_DATA_FAILURES = (
    SchemaError,
    VersionMismatch,
    InvalidDataset,
    DimensionMismatch,
    IncompatibleMetric,
    NonMonotoneQuantile,
    EmptyModel,
    OSError,
)
_NUMERIC_FAILURES = (WeightsSumToZero, FloatingPointError, np.linalg.LinAlgError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metricregions",
        description="Distribution-free prediction regions for metric-space responses.",
        epilog=_CONFIG_KEYS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "draw a synthetic dataset and write CSV"),
        ("fit", "fit region models and write a JSON bundle"),
        ("predict", "emit per-query regions from a saved bundle"),
        ("evaluate", "score a saved bundle on evaluation data"),
        ("replicate", "run the generate/fit/evaluate loop B times"),
    ):
        p = sub.add_parser(
            name, help=help_text, epilog=_CONFIG_KEYS,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.add_argument("--config", required=True, help="INI config file path")
        p.add_argument("--seed", type=int, default=None, help="override the [data] seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for replicate")
        p.add_argument("--out", required=True, help="primary output file path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _Config(args.config)
        _HANDLERS[args.command](cfg, args)
    except _NUMERIC_FAILURES as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except _CONFIG_FAILURES as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _DATA_FAILURES as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except MetricRegionsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
