"""Datasets, sample splitting, and conditional Fréchet mean estimators.

The Fréchet mean machinery covers the two response geometries for which
a closed-form mean exists: Euclidean vectors (coordinatewise averages)
and distributions under the 2-Wasserstein metric (pointwise averages of
quantile functions, projected onto nondecreasing functions when weights
can be negative).  Sup-norm metrics are deliberately rejected as fitting
metrics.

Two regression estimators are provided:

* k-nearest-neighbor Fréchet means, with neighbor ties at the cut rank
  broken by a seeded uniform jitter assigned in a canonical row order so
  fitted models are invariant to permutations of the training rows;
* global Fréchet regression, whose weights reduce the estimator to
  ordinary linear regression when responses are Euclidean.

``loo_select_k`` scores a grid of candidate k values per training point
by a leave-one-out criterion: the mean distance of the LOO neighbor
responses to their own Fréchet mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from . import rng
from .errors import (
    DimensionMismatch,
    EmptyModel,
    IncompatibleMetric,
    InvalidConfig,
    InvalidDataset,
    KGridEmpty,
    KTooLarge,
    TooFewSamples,
    WeightsSumToZero,
)
from .metrics import (
    EuclideanVector,
    MetricKind,
    QuantileFunction,
    ResponsePoint,
    rowwise_distance,
    trapezoid_weights,
    validate_point,
)

__all__ = [
    "LabeledDataset",
    "SplitConfig",
    "split_dataset",
    "split_three",
    "KnnFrechetModel",
    "GlobalFrechetModel",
    "ConstantMean",
    "MeanSpec",
    "LooKSelection",
    "fit_knn_frechet",
    "knn_frechet_mean",
    "fit_global_frechet",
    "predict_global_frechet",
    "loo_select_k",
    "select_global_k",
    "fit_mean",
    "default_k_grid",
]

_FIT_METRICS = (MetricKind.EUCLIDEAN_L2, MetricKind.WASSERSTEIN2)


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Predictors in R^p paired with response points of one shared variant.

    ``response_values`` stacks the responses row by row; a non-None
    ``quantile_grid`` marks them as quantile functions on that grid,
    otherwise they are plain Euclidean vectors.
    """

    predictors: np.ndarray
    response_values: np.ndarray
    quantile_grid: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.predictors, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(self.response_values, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        object.__setattr__(self, "predictors", X)
        object.__setattr__(self, "response_values", Y)
        if X.ndim != 2 or Y.ndim != 2:
            raise InvalidDataset("predictors and responses must be 2-d arrays")
        if X.shape[0] == 0:
            raise InvalidDataset("a dataset needs at least one row")
        if X.shape[0] != Y.shape[0]:
            raise InvalidDataset(
                f"{X.shape[0]} predictor rows vs {Y.shape[0]} response rows"
            )
        if X.shape[1] == 0 or Y.shape[1] == 0:
            raise InvalidDataset("zero-dimensional predictors or responses")
        if not np.isfinite(X).all():
            raise InvalidDataset("predictors contain non-finite entries")
        if not np.isfinite(Y).all():
            raise InvalidDataset("responses contain non-finite entries")
        if self.quantile_grid is not None:
            g = np.asarray(self.quantile_grid, dtype=np.float64)
            object.__setattr__(self, "quantile_grid", g)
            if g.ndim != 1 or g.size != Y.shape[1]:
                raise InvalidDataset("quantile grid does not match response width")
            if g.size and ((g <= 0.0).any() or (g >= 1.0).any() or (np.diff(g) <= 0).any()):
                raise InvalidDataset("quantile grid must increase strictly inside (0, 1)")
            if (np.diff(Y, axis=1) < 0).any():
                bad = int(np.argmax((np.diff(Y, axis=1) < 0).any(axis=1)))
                raise InvalidDataset(f"response row {bad} is not a nondecreasing quantile function")

    @property
    def n(self) -> int:
        return self.predictors.shape[0]

    @property
    def p(self) -> int:
        return self.predictors.shape[1]

    @property
    def response_dim(self) -> int:
        return self.response_values.shape[1]

    def response(self, i: int) -> ResponsePoint:
        if self.quantile_grid is None:
            return EuclideanVector(self.response_values[i].copy())
        return QuantileFunction(self.quantile_grid, self.response_values[i].copy())

    def iter_responses(self) -> Iterator[ResponsePoint]:
        for i in range(self.n):
            yield self.response(i)

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(
            self.predictors[indices], self.response_values[indices], self.quantile_grid
        )

    @classmethod
    def from_points(
        cls, predictors: np.ndarray, responses: Sequence[ResponsePoint]
    ) -> "LabeledDataset":
        if len(responses) == 0:
            raise InvalidDataset("a dataset needs at least one response")
        first = responses[0]
        grid = first.grid if isinstance(first, QuantileFunction) else None
        for i, point in enumerate(responses):
            if isinstance(point, QuantileFunction) != (grid is not None):
                raise InvalidDataset("responses mix Euclidean and quantile variants")
            if grid is not None and not np.array_equal(point.grid, grid):
                raise InvalidDataset(f"response {i} uses a different level grid")
            bad = validate_point(point)
            if bad:
                raise InvalidDataset(f"response {i}: {bad[0].message}")
        values = np.stack([point.values for point in responses])
        return cls(predictors, values, grid)


def _wrap_values(values: np.ndarray, grid: np.ndarray | None) -> ResponsePoint:
    if grid is None:
        return EuclideanVector(values)
    return QuantileFunction(grid, values)


# ---------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitConfig:
    """How to cut one dataset into fitting and calibration halves."""

    train_fraction: float = 0.5
    seed: int = 0


def split_dataset(data: LabeledDataset, config: SplitConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Randomly split ``data`` into (train, rest); both parts stay nonempty."""
    if data.n < 2:
        raise TooFewSamples("cannot split fewer than two rows")
    if not 0.0 < config.train_fraction < 1.0:
        raise InvalidConfig("train_fraction must lie strictly between 0 and 1")
    order = rng.stream(config.seed, "split").permutation(data.n)
    n1 = min(data.n - 1, max(1, math.floor(config.train_fraction * data.n)))
    return data.subset(order[:n1]), data.subset(order[n1:])


def split_three(
    data: LabeledDataset, first_fraction: float, second_fraction: float, seed: int = 0
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Three-way random split used by the conformalized variant."""
    if first_fraction <= 0 or second_fraction <= 0 or first_fraction + second_fraction >= 1:
        raise InvalidConfig("split fractions must be positive and sum below 1")
    order = rng.stream(seed, "split").permutation(data.n)
    n1 = math.floor(first_fraction * data.n)
    n2 = math.floor(second_fraction * data.n)
    if n1 < 1 or n2 < 1 or data.n - n1 - n2 < 1:
        raise TooFewSamples("three-way split leaves an empty part")
    return (
        data.subset(order[:n1]),
        data.subset(order[n1 : n1 + n2]),
        data.subset(order[n1 + n2 :]),
    )


# ---------------------------------------------------------------------------
# shared neighbor machinery


def canonical_order(data: LabeledDataset) -> np.ndarray:
    """Content-determined row order (lexicographic over predictors, then
    responses) so that seeded tie-breaking cannot depend on input row order."""
    cols = [data.response_values[:, j] for j in range(data.response_dim - 1, -1, -1)]
    cols += [data.predictors[:, j] for j in range(data.p - 1, -1, -1)]
    return np.lexsort(tuple(cols))


def _check_fit_metric(kind: MetricKind, data: LabeledDataset) -> None:
    if kind not in _FIT_METRICS:
        raise IncompatibleMetric(
            f"{kind.value} has no Fréchet mean formula; fit with euclidean-l2 "
            "or wasserstein2"
        )
    if (kind is MetricKind.WASSERSTEIN2) != (data.quantile_grid is not None):
        raise IncompatibleMetric(
            f"fit metric {kind.value} does not match the response variant"
        )


def _sq_cross_distances(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, queries (c, p) against points (n, p)."""
    d2 = (
        np.einsum("ij,ij->i", queries, queries)[:, None]
        + np.einsum("ij,ij->i", points, points)[None, :]
        - 2.0 * (queries @ points.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _k_smallest(d2: np.ndarray, k: int, tie_jitter) -> np.ndarray:
    """Per-row indices of the k smallest squared distances.

    ``tie_jitter(row)`` supplies a jitter vector used only when the
    value at the cut rank also occurs outside the selected set, so the
    fast path is a plain partition.  Final fallback is the index order.
    """
    n = d2.shape[1]
    if k > n:
        raise KTooLarge(f"k={k} exceeds the {n} available points")
    if k == n:
        return np.broadcast_to(np.arange(n), d2.shape).copy()
    idx = np.argpartition(d2, k - 1, axis=1)[:, :k]
    sel_vals = np.take_along_axis(d2, idx, axis=1)
    cut = sel_vals.max(axis=1)
    n_eq_total = (d2 == cut[:, None]).sum(axis=1)
    n_eq_sel = (sel_vals == cut[:, None]).sum(axis=1)
    for r in np.flatnonzero(n_eq_total > n_eq_sel):
        order = np.lexsort((np.arange(n), tie_jitter(int(r)), d2[r]))
        idx[r] = order[:k]
    return idx


# ---------------------------------------------------------------------------
# k-nearest-neighbor Fréchet means


@dataclass(frozen=True, eq=False)
class KnnFrechetModel:
    """Local Fréchet mean over the k nearest training predictors.

    Training rows are stored in canonical order; ``tie_jitter`` holds
    the per-row uniforms used to resolve neighbor ties at the cut rank.
    """

    training: LabeledDataset
    k: int
    fit_metric: MetricKind
    seed: int = 0
    tie_jitter: np.ndarray = field(repr=False, default=None)

    @property
    def quantile_grid(self) -> np.ndarray | None:
        return self.training.quantile_grid

    def predict_values(self, queries: np.ndarray) -> np.ndarray:
        queries = _as_query_matrix(queries, self.training.p)
        X = self.training.predictors
        Y = self.training.response_values
        n, m = self.training.n, self.training.response_dim
        out = np.empty((queries.shape[0], m))
        chunk = max(1, int(4_000_000 / max(n, self.k * m)))
        for start in range(0, queries.shape[0], chunk):
            q = queries[start : start + chunk]
            d2 = _sq_cross_distances(q, X)
            idx = _k_smallest(d2, self.k, lambda r: self.tie_jitter)
            out[start : start + q.shape[0]] = Y[idx].mean(axis=1)
        return out

    def predict(self, x: np.ndarray) -> ResponsePoint:
        return _wrap_values(self.predict_values(x)[0], self.quantile_grid)


def fit_knn_frechet(
    data: LabeledDataset, k: int, fit_metric: MetricKind, seed: int = 0
) -> KnnFrechetModel:
    """Freeze a kNN Fréchet mean estimator over ``data``."""
    _check_fit_metric(fit_metric, data)
    if not 1 <= k <= data.n:
        raise KTooLarge(f"k={k} outside 1..{data.n}")
    order = canonical_order(data)
    jitter = rng.stream(seed, "knn-ties").random(data.n)
    return KnnFrechetModel(data.subset(order), int(k), fit_metric, int(seed), jitter)


def knn_frechet_mean(model: KnnFrechetModel, x: np.ndarray) -> ResponsePoint:
    """Fréchet mean of the k training responses nearest to ``x``."""
    if model.training.n == 0:
        raise EmptyModel("no training rows")
    return model.predict(x)


def _as_query_matrix(queries: np.ndarray, p: int) -> np.ndarray:
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 0:
        q = q[None, None]
    elif q.ndim == 1:
        # a single p-dimensional query, or a column of scalar queries
        q = q[None, :] if q.size == p and p > 1 else q[:, None]
    if q.shape[1] != p:
        raise DimensionMismatch(f"queries have {q.shape[1]} coordinates, expected {p}")
    return q


# ---------------------------------------------------------------------------
# global Fréchet regression


@dataclass(frozen=True, eq=False)
class GlobalFrechetModel:
    """Weighted global Fréchet regression (linear in the predictors).

    ``cov_inv`` inverts the sample covariance (1/(n-1) normalization),
    ridged when ill-conditioned.  Prediction weights rescale the
    quadratic form by n/(n-1) so that Euclidean responses reproduce
    ordinary least squares exactly.
    """

    training: LabeledDataset
    mean_x: np.ndarray
    cov_inv: np.ndarray
    fit_metric: MetricKind

    @property
    def quantile_grid(self) -> np.ndarray | None:
        return self.training.quantile_grid

    def weights(self, queries: np.ndarray) -> np.ndarray:
        queries = _as_query_matrix(queries, self.training.p)
        n = self.training.n
        xc = self.training.predictors - self.mean_x
        qc = queries - self.mean_x
        return 1.0 + (n / (n - 1.0)) * (qc @ self.cov_inv @ xc.T)

    def predict_values(self, queries: np.ndarray) -> np.ndarray:
        w = self.weights(queries)
        sums = w.sum(axis=1)
        if (np.abs(sums) < 1e-12 * self.training.n).any():
            raise WeightsSumToZero("prediction weights cancel; cannot average")
        vals = (w @ self.training.response_values) / sums[:, None]
        if self.quantile_grid is not None:
            # negative weights can break monotonicity; project back under
            # the same quadrature norm that defines the Wasserstein metric
            qw = trapezoid_weights(self.quantile_grid)
            for i in range(vals.shape[0]):
                if (np.diff(vals[i]) < 0).any():
                    vals[i] = isotonic_regression(vals[i], weights=qw).x
        return vals

    def predict(self, x: np.ndarray) -> ResponsePoint:
        return _wrap_values(self.predict_values(x)[0], self.quantile_grid)


def fit_global_frechet(data: LabeledDataset, fit_metric: MetricKind) -> GlobalFrechetModel:
    """Fit global Fréchet regression on ``data``."""
    _check_fit_metric(fit_metric, data)
    if data.n < data.p + 2:
        raise TooFewSamples(f"need at least p+2={data.p + 2} rows, have {data.n}")
    order = canonical_order(data)
    data = data.subset(order)
    mean_x = data.predictors.mean(axis=0)
    xc = data.predictors - mean_x
    cov = (xc.T @ xc) / (data.n - 1)
    if np.linalg.cond(cov) > 1e12:
        scale = np.trace(cov) / data.p
        cov = cov + (1e-8 * scale if scale > 0 else 1e-8) * np.eye(data.p)
    return GlobalFrechetModel(data, mean_x, np.linalg.inv(cov), fit_metric)


def predict_global_frechet(model: GlobalFrechetModel, x: np.ndarray) -> ResponsePoint:
    """Global Fréchet prediction at a single query point."""
    return model.predict(x)


# ---------------------------------------------------------------------------
# constant (baseline) estimator


@dataclass(frozen=True, eq=False)
class ConstantMean:
    """Predicts the same response everywhere; a deliberately crude baseline."""

    point: ResponsePoint

    @property
    def quantile_grid(self) -> np.ndarray | None:
        return self.point.grid if isinstance(self.point, QuantileFunction) else None

    def predict_values(self, queries: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        return np.broadcast_to(self.point.values, (q.shape[0], self.point.values.size)).copy()

    def predict(self, x: np.ndarray) -> ResponsePoint:
        return self.point


# ---------------------------------------------------------------------------
# leave-one-out selection of k


@dataclass(frozen=True, eq=False)
class LooKSelection:
    """Leave-one-out k scores: ``scores[i, j]`` is the criterion for
    ``k_grid[j]`` at training point i; ``k_star[i]`` is the per-point
    argmin (smallest k on ties)."""

    k_grid: tuple[int, ...]
    scores: np.ndarray
    k_star: np.ndarray


def _clean_k_grid(k_grid: Sequence[int], k_max: int) -> tuple[int, ...]:
    grid = sorted({int(k) for k in k_grid})
    if not grid:
        raise KGridEmpty("no candidate k values")
    if grid[0] < 1:
        raise KGridEmpty(f"candidate k={grid[0]} below 1")
    if grid[-1] > k_max:
        raise KTooLarge(f"candidate k={grid[-1]} exceeds the usable maximum {k_max}")
    return tuple(grid)


def loo_select_k(
    data: LabeledDataset, fit_metric: MetricKind, k_grid: Sequence[int]
) -> LooKSelection:
    """Score candidate neighborhood sizes by a leave-one-out criterion.

    For each training point the k nearest other points are found, their
    Fréchet mean is formed from that same leave-one-out set, and the
    criterion is the mean fitting-metric distance of the set members to
    that mean.  Neighbor ties are broken by row index.
    """
    _check_fit_metric(fit_metric, data)
    if data.n < 2:
        raise TooFewSamples("leave-one-out needs at least two rows")
    grid = _clean_k_grid(k_grid, data.n - 1)
    max_k = grid[-1]
    X, Y = data.predictors, data.response_values
    qw = trapezoid_weights(data.quantile_grid) if data.quantile_grid is not None else None
    scores = np.empty((data.n, len(grid)))
    chunk = max(1, int(4_000_000 / max(data.n, max_k * data.response_dim)))
    for start in range(0, data.n, chunk):
        rows = slice(start, min(start + chunk, data.n))
        d2 = _sq_cross_distances(X[rows], X)
        d2[np.arange(d2.shape[0]), np.arange(start, rows.stop)] = np.inf
        near = np.argsort(d2, axis=1, kind="stable")[:, :max_k]
        sorted_resp = Y[near]  # (c, max_k, m)
        prefix = np.cumsum(sorted_resp, axis=1)
        for j, k in enumerate(grid):
            center = prefix[:, k - 1, :] / k
            diff = sorted_resp[:, :k, :] - center[:, None, :]
            if fit_metric is MetricKind.EUCLIDEAN_L2:
                member = np.sqrt(np.einsum("ckm,ckm->ck", diff, diff))
            else:
                member = np.sqrt(np.einsum("ckm,m,ckm->ck", diff, qw, diff))
            scores[rows, j] = member.mean(axis=1)
    k_star = np.asarray(grid)[np.argmin(scores, axis=1)]
    return LooKSelection(grid, scores, k_star)


def select_global_k(selection: LooKSelection) -> int:
    """Collapse per-point argmins to one k: the lower median."""
    ks = np.sort(selection.k_star)
    return int(ks[(ks.size - 1) // 2])


# ---------------------------------------------------------------------------
# mean-estimator specification


@dataclass(frozen=True)
class MeanSpec:
    """Which conditional-mean estimator to fit.

    ``kind`` is "knn" or "global".  For kNN, ``k=None`` selects k by the
    leave-one-out criterion over ``k_grid`` (median of per-point argmins).
    """

    kind: str = "knn"
    fit_metric: MetricKind = MetricKind.EUCLIDEAN_L2
    k: int | None = None
    k_grid: tuple[int, ...] | None = None


def default_k_grid(n: int) -> tuple[int, ...]:
    """Powers of two from 4 up to half the usable sample."""
    upper = max(1, n - 1)
    grid = sorted({min(upper, 2**j) for j in range(2, 10) if 2**j <= max(4, upper // 2)})
    return tuple(grid) if grid else (1,)


def fit_mean(data: LabeledDataset, spec, seed: int = 0):
    """Fit the estimator described by ``spec`` (pass-through if already fitted)."""
    if hasattr(spec, "predict_values"):
        return spec
    if spec.kind == "global":
        return fit_global_frechet(data, spec.fit_metric)
    if spec.kind != "knn":
        raise InvalidConfig(f"unknown mean estimator kind {spec.kind!r}")
    k = spec.k
    if k is None:
        grid = spec.k_grid if spec.k_grid else default_k_grid(data.n)
        k = select_global_k(loo_select_k(data, spec.fit_metric, grid))
    return fit_knn_frechet(data, k, spec.fit_metric, seed)
