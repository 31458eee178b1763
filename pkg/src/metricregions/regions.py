"""Distribution-free prediction regions as metric balls.

All regions share one shape: a ball ``B(center(x), radius(x))`` in the
chosen region metric, where the center is a fitted conditional Fréchet
mean.  Four radius rules are provided:

* homoscedastic: one global radius, the ``ceil((n2+1)(1-alpha))``-th
  smallest calibration residual (split-conformal; finite-sample marginal
  coverage at least ``1 - alpha`` and at most ``1 - alpha + 1/(n2+1)``
  up to ties);
* heteroscedastic: a query-local radius, the same empirical quantile
  taken over the residuals of the k calibration points whose predictors
  are nearest to the query;
* tuned two-stage: the kNN mean bandwidth is picked by a leave-one-out
  criterion on the training half, then the radius k is picked to bring
  marginal coverage on a tuning set closest to the nominal level;
* conformalized heteroscedastic: a third split calibrates an additive
  offset for the local radius, restoring a finite-sample marginal
  coverage guarantee.

Residuals are always distances in the region metric between observed
responses and the fitted mean, computed once per calibration point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import rng
from .errors import (
    EmptyValues,
    IncompatibleMetric,
    InvalidConfig,
    KTooLarge,
)
from .metrics import MetricKind, ResponsePoint, distance, rowwise_distance
from .regression import (
    LabeledDataset,
    MeanSpec,
    _as_query_matrix,
    _k_smallest,
    _sq_cross_distances,
    canonical_order,
    fit_mean,
)

__all__ = [
    "PredictionRegion",
    "HomoscedasticRegionModel",
    "HeteroscedasticRegionModel",
    "ConformalizedHeteroModel",
    "KTuneResult",
    "TunedFitResult",
    "empirical_quantile",
    "contains",
    "fit_homoscedastic",
    "predict_homoscedastic",
    "fit_heteroscedastic_knn",
    "predict_heteroscedastic",
    "with_radius_k",
    "tune_k_marginal",
    "fit_hetero_tuned",
    "fit_conformalized_hetero",
    "predict_conformalized",
    "default_radius_k_grid",
]


def empirical_quantile(
    values, level: float, randomized: bool = False, seed: int = 0
) -> float:
    """The ``ceil((n+1) * level)``-th smallest value, or +inf past the top.

    With ``randomized=True`` exact ties are ordered by a seeded uniform
    jitter (then by index) so ranks are almost surely distinct; the
    returned value is unchanged because tied entries are equal.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyValues("empirical quantile of no values")
    if not 0.0 < level < 1.0:
        raise InvalidConfig(f"quantile level {level} outside (0, 1)")
    n = v.size
    j = math.ceil((n + 1) * level)
    if j > n:
        return math.inf
    if randomized:
        jitter = rng.stream(seed, "quantile-ties").random(n)
        order = np.lexsort((np.arange(n), jitter, v))
        return float(v[order[j - 1]])
    return float(np.partition(v, j - 1)[j - 1])


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True, eq=False)
class PredictionRegion:
    """A metric ball: all responses within ``radius`` of ``center``."""

    center: ResponsePoint
    radius: float
    region_metric: MetricKind

    def contains(self, y: ResponsePoint) -> bool:
        return contains(self, y)


def contains(region: PredictionRegion, y: ResponsePoint) -> bool:
    """Whether ``y`` lies in the region (boundary counts as inside)."""
    return bool(distance(region.region_metric, y, region.center) <= region.radius)


def _auto_randomized(randomized: bool | None, region_metric: MetricKind) -> bool:
    # ties have positive probability under the sup metric on shared grids
    if randomized is None:
        return region_metric is MetricKind.QUANTILE_SUP
    return bool(randomized)


def _check_region_metric(region_metric: MetricKind, data: LabeledDataset) -> None:
    if region_metric.is_quantile != (data.quantile_grid is not None):
        raise IncompatibleMetric(
            f"region metric {region_metric.value} does not match the response variant"
        )


def _calibration_residuals(mean, calib: LabeledDataset, region_metric: MetricKind) -> np.ndarray:
    centers = mean.predict_values(calib.predictors)
    return rowwise_distance(
        region_metric, calib.response_values, centers, calib.quantile_grid
    )


# ---------------------------------------------------------------------------
# homoscedastic (global-radius) regions


@dataclass(frozen=True, eq=False)
class HomoscedasticRegionModel:
    """Fitted mean plus one calibrated radius shared by every query."""

    mean: object
    calibrated_radius: float
    alpha: float
    region_metric: MetricKind
    randomized_ties: bool
    seed: int

    def center_values(self, queries: np.ndarray) -> np.ndarray:
        return self.mean.predict_values(queries)

    def radii(self, queries: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        return np.full(q.shape[0], self.calibrated_radius)

    def predict(self, x: np.ndarray) -> PredictionRegion:
        return predict_homoscedastic(self, x)


def fit_homoscedastic(
    train: LabeledDataset,
    calib: LabeledDataset,
    alpha: float,
    mean: MeanSpec | object,
    region_metric: MetricKind,
    *,
    seed: int = 0,
    randomized: bool | None = None,
) -> HomoscedasticRegionModel:
    """Fit the mean on ``train`` and calibrate one global radius on ``calib``."""
    _validate_alpha(alpha)
    _check_region_metric(region_metric, calib)
    randomized = _auto_randomized(randomized, region_metric)
    mean_est = fit_mean(train, mean, rng.derive_seed(seed, "mean"))
    residuals = _calibration_residuals(mean_est, calib, region_metric)
    radius = empirical_quantile(
        residuals, 1.0 - alpha, randomized, rng.derive_seed(seed, "radius-quantile")
    )
    return HomoscedasticRegionModel(
        mean_est, radius, float(alpha), region_metric, randomized, int(seed)
    )


def predict_homoscedastic(model: HomoscedasticRegionModel, x: np.ndarray) -> PredictionRegion:
    """Region at a single query: ball of the calibrated radius around the mean."""
    return PredictionRegion(
        model.mean.predict(x), model.calibrated_radius, model.region_metric
    )


def _validate_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidConfig(f"miscoverage level alpha={alpha} outside (0, 1)")


# ---------------------------------------------------------------------------
# heteroscedastic (query-local radius) regions


@dataclass(frozen=True, eq=False)
class HeteroscedasticRegionModel:
    """Fitted mean plus a calibration store for query-local radii.

    ``calibration_predictors`` and ``calibration_residuals`` are kept in
    canonical row order; the radius at ``x`` is the empirical quantile
    of the residuals of the k nearest calibration predictors (Euclidean
    distance on predictors, ties at the cut rank broken by a jitter
    seeded from ``seed XOR hash(x)``).
    """

    mean: object
    calibration_predictors: np.ndarray
    calibration_residuals: np.ndarray
    k: int
    alpha: float
    region_metric: MetricKind
    randomized_ties: bool
    seed: int

    @property
    def n_calibration(self) -> int:
        return self.calibration_predictors.shape[0]

    def center_values(self, queries: np.ndarray) -> np.ndarray:
        return self.mean.predict_values(queries)

    def radii(self, queries: np.ndarray) -> np.ndarray:
        queries = _as_query_matrix(queries, self.calibration_predictors.shape[1])
        out = np.empty(queries.shape[0])
        chunk = max(1, int(4_000_000 / max(1, self.n_calibration)))
        for start in range(0, queries.shape[0], chunk):
            q = queries[start : start + chunk]
            d2 = _sq_cross_distances(q, self.calibration_predictors)
            out[start : start + q.shape[0]] = self._radii_from_d2(d2, q, self.k)
        return out

    def _radii_from_d2(self, d2: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
        j = math.ceil((k + 1) * (1.0 - self.alpha))
        if j > k:
            return np.full(d2.shape[0], np.inf)

        def tie_jitter(row: int) -> np.ndarray:
            local = rng.point_seed(self.seed, queries[row])
            return rng.stream(local, "neighbor-ties").random(self.n_calibration)

        idx = _k_smallest(d2, k, tie_jitter)
        neighbor_res = self.calibration_residuals[idx]
        return np.partition(neighbor_res, j - 1, axis=1)[:, j - 1]

    def predict(self, x: np.ndarray) -> PredictionRegion:
        return predict_heteroscedastic(self, x)


def fit_heteroscedastic_knn(
    train: LabeledDataset,
    calib: LabeledDataset,
    alpha: float,
    k: int,
    mean: MeanSpec | object,
    region_metric: MetricKind,
    *,
    seed: int = 0,
    randomized: bool | None = None,
) -> HeteroscedasticRegionModel:
    """Fit the mean on ``train``; store per-point residuals on ``calib``."""
    _validate_alpha(alpha)
    _check_region_metric(region_metric, calib)
    if not 1 <= k <= calib.n:
        raise KTooLarge(f"radius k={k} outside 1..{calib.n}")
    randomized = _auto_randomized(randomized, region_metric)
    mean_est = fit_mean(train, mean, rng.derive_seed(seed, "mean"))
    residuals = _calibration_residuals(mean_est, calib, region_metric)
    order = canonical_order(calib)
    return HeteroscedasticRegionModel(
        mean_est,
        calib.predictors[order].copy(),
        residuals[order],
        int(k),
        float(alpha),
        region_metric,
        randomized,
        int(seed),
    )


def predict_heteroscedastic(model: HeteroscedasticRegionModel, x: np.ndarray) -> PredictionRegion:
    """Region at a single query with its locally calibrated radius."""
    return PredictionRegion(
        model.mean.predict(x), float(model.radii(x)[0]), model.region_metric
    )


def with_radius_k(model: HeteroscedasticRegionModel, k: int) -> HeteroscedasticRegionModel:
    """Same calibration store, different neighbor count for the radius."""
    if not 1 <= k <= model.n_calibration:
        raise KTooLarge(f"radius k={k} outside 1..{model.n_calibration}")
    return replace(model, k=int(k))


# ---------------------------------------------------------------------------
# marginal-coverage tuning of the radius k


@dataclass(frozen=True, eq=False)
class KTuneResult:
    """Coverage per candidate k and the pick closest to nominal."""

    k_grid: tuple[int, ...]
    coverage: np.ndarray
    k_star: int


def default_radius_k_grid(n_calibration: int) -> tuple[int, ...]:
    grid = tuple(k for k in (25, 50, 100, 200, 400) if k <= n_calibration)
    return grid if grid else (max(1, n_calibration // 2),)


def tune_k_marginal(
    model: HeteroscedasticRegionModel,
    k_grid: Sequence[int],
    tune_set: LabeledDataset,
    alpha: float | None = None,
) -> KTuneResult:
    """Pick the radius k whose marginal coverage on ``tune_set`` is closest
    to ``1 - alpha``; ties go to the smallest k."""
    alpha = model.alpha if alpha is None else float(alpha)
    grid = sorted({int(k) for k in k_grid})
    if not grid:
        raise InvalidConfig("empty radius k grid")
    if grid[0] < 1 or grid[-1] > model.n_calibration:
        raise KTooLarge(
            f"radius k grid must stay within 1..{model.n_calibration}"
        )
    centers = model.center_values(tune_set.predictors)
    residuals = rowwise_distance(
        model.region_metric, tune_set.response_values, centers, tune_set.quantile_grid
    )
    d2 = _sq_cross_distances(
        _as_query_matrix(tune_set.predictors, model.calibration_predictors.shape[1]),
        model.calibration_predictors,
    )
    coverage = np.empty(len(grid))
    for i, k in enumerate(grid):
        radii = model._radii_from_d2(d2, tune_set.predictors, k)
        coverage[i] = float(np.mean(residuals <= radii))
    k_star = grid[int(np.argmin(np.abs(coverage - (1.0 - alpha))))]
    return KTuneResult(tuple(grid), coverage, int(k_star))


@dataclass(frozen=True, eq=False)
class TunedFitResult:
    """Final tuned model plus the two stage diagnostics."""

    model: HeteroscedasticRegionModel
    mean_k: int
    tune: KTuneResult


def fit_hetero_tuned(
    train: LabeledDataset,
    calib: LabeledDataset,
    alpha: float,
    *,
    fit_metric: MetricKind = MetricKind.EUCLIDEAN_L2,
    region_metric: MetricKind = MetricKind.EUCLIDEAN_L2,
    mean_k_grid: Sequence[int] | None = None,
    radius_k_grid: Sequence[int] | None = None,
    tune_set: LabeledDataset | None = None,
    seed: int = 0,
    randomized: bool | None = None,
) -> TunedFitResult:
    """Two-stage pipeline: leave-one-out bandwidth for the mean, then a
    radius k tuned for marginal coverage (on ``calib`` itself unless a
    separate ``tune_set`` is supplied)."""
    mean_spec = MeanSpec(
        "knn",
        fit_metric,
        k=None,
        k_grid=tuple(mean_k_grid) if mean_k_grid is not None else None,
    )
    mean_est = fit_mean(train, mean_spec, rng.derive_seed(seed, "mean"))
    grid = (
        tuple(radius_k_grid)
        if radius_k_grid is not None
        else default_radius_k_grid(calib.n)
    )
    base = fit_heteroscedastic_knn(
        train, calib, alpha, grid[0], mean_est, region_metric,
        seed=seed, randomized=randomized,
    )
    tune = tune_k_marginal(base, grid, tune_set if tune_set is not None else calib, alpha)
    return TunedFitResult(with_radius_k(base, tune.k_star), mean_est.k, tune)


# ---------------------------------------------------------------------------
# conformalized heteroscedastic regions


@dataclass(frozen=True, eq=False)
class ConformalizedHeteroModel:
    """Local radii shifted by a conformal offset from a third split.

    The offset is the empirical ``1 - alpha`` quantile of the score
    ``residual - local_radius`` over the third split; final radii are
    clipped at zero.
    """

    base: HeteroscedasticRegionModel
    offset: float

    @property
    def alpha(self) -> float:
        return self.base.alpha

    @property
    def region_metric(self) -> MetricKind:
        return self.base.region_metric

    @property
    def mean(self):
        return self.base.mean

    def center_values(self, queries: np.ndarray) -> np.ndarray:
        return self.base.center_values(queries)

    def radii(self, queries: np.ndarray) -> np.ndarray:
        base = self.base.radii(queries)
        out = np.maximum(base + self.offset, 0.0)
        out[np.isposinf(base)] = np.inf  # vacuous local radius stays vacuous
        return out

    def predict(self, x: np.ndarray) -> PredictionRegion:
        return predict_conformalized(self, x)


def fit_conformalized_hetero(
    train: LabeledDataset,
    calib: LabeledDataset,
    conformal: LabeledDataset,
    alpha: float,
    k: int,
    mean: MeanSpec | object,
    region_metric: MetricKind,
    *,
    seed: int = 0,
    randomized: bool | None = None,
) -> ConformalizedHeteroModel:
    """Three-split variant: mean on ``train``, local radii on ``calib``,
    conformal offset on ``conformal``."""
    base = fit_heteroscedastic_knn(
        train, calib, alpha, k, mean, region_metric, seed=seed, randomized=randomized
    )
    centers = base.center_values(conformal.predictors)
    residuals = rowwise_distance(
        region_metric, conformal.response_values, centers, conformal.quantile_grid
    )
    # an infinite local radius yields a score of -inf, which sorts first:
    # that point is covered for any offset
    scores = residuals - base.radii(conformal.predictors)
    offset = empirical_quantile(
        scores, 1.0 - alpha, base.randomized_ties, rng.derive_seed(seed, "offset-quantile")
    )
    return ConformalizedHeteroModel(base, float(offset))


def predict_conformalized(model: ConformalizedHeteroModel, x: np.ndarray) -> PredictionRegion:
    """Region with the conformally shifted local radius."""
    return PredictionRegion(
        model.mean.predict(x), float(model.radii(x)[0]), model.region_metric
    )
