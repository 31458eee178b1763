"""Coverage diagnostics for fitted region models.

Marginal coverage is the fraction of evaluation responses falling in
their regions.  Conditional coverage is estimated by smoothing the
coverage indicators against a scalar predictor with a Gaussian kernel
(Silverman's bandwidth), then summarized by the integrated squared
deviation from the nominal level.  When the generating scenario is
known, the symmetric-difference error measures the probability mass on
which the estimated and oracle regions disagree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .errors import EmptyEvalSet, MultivariateUnsupported
from .metrics import rowwise_distance
from .regression import LabeledDataset
from .simulate import ScenarioSpec, generate, oracle_contains, predictor_range

__all__ = [
    "CoverageCurve",
    "CoverageReport",
    "coverage_indicators",
    "marginal_coverage",
    "silverman_bandwidth",
    "smooth_indicators",
    "conditional_coverage_curve",
    "l2_integrated_error",
    "symmetric_difference_error",
    "evaluate_model",
]


@dataclass(frozen=True, eq=False)
class CoverageCurve:
    """Smoothed conditional coverage on a grid of predictor values."""

    x: np.ndarray
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class CoverageReport:
    alpha: float
    n_eval: int
    marginal_coverage: float
    curve: Optional[CoverageCurve] = None
    l2_error: Optional[float] = None
    region_error: Optional[float] = None


def coverage_indicators(model, eval_set: LabeledDataset) -> np.ndarray:
    """Boolean row-wise membership of evaluation responses in their regions."""
    if eval_set.n < 1:
        raise EmptyEvalSet("evaluation set is empty")
    centers = model.center_values(eval_set.predictors)
    resid = rowwise_distance(
        model.region_metric, eval_set.response_values, centers, eval_set.quantile_grid
    )
    return resid <= model.radii(eval_set.predictors)


def marginal_coverage(model, eval_set: LabeledDataset) -> float:
    return float(coverage_indicators(model, eval_set).mean())


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    sd = float(x.std(ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75.0, 25.0])
    spread_candidates = [s for s in (sd, float(q75 - q25) / 1.34) if s > 0.0]
    if not spread_candidates:
        # degenerate sample; any positive width gives the constant smoother
        return max(1e-3, 1e-3 * abs(float(x[0])) if n else 1e-3)
    return 0.9 * min(spread_candidates) * n ** (-0.2)


def smooth_indicators(
    x: np.ndarray, indicators: np.ndarray, x_grid: np.ndarray, bandwidth: Optional[float] = None
) -> CoverageCurve:
    """Nadaraya-Watson smoothing of 0/1 indicators, clipped to [0, 1]."""
    x = np.asarray(x, dtype=np.float64).ravel()
    ind = np.asarray(indicators, dtype=np.float64).ravel()
    x_grid = np.asarray(x_grid, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyEvalSet("no indicators to smooth")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    u = (x_grid[:, None] - x[None, :]) / h
    weights = np.exp(-0.5 * np.square(u))
    # same reduction path for both sums so constant indicators smooth to
    # exactly that constant
    denom = weights @ np.ones_like(ind)
    numer = weights @ ind
    values = np.full(x_grid.size, ind.mean())
    ok = denom > 0.0  # kernel can underflow to zero far from the data
    values[ok] = numer[ok] / denom[ok]
    return CoverageCurve(x_grid, np.clip(values, 0.0, 1.0))


def _default_grid(lo: float, hi: float, points: int) -> np.ndarray:
    return np.linspace(lo, hi, points)


def conditional_coverage_curve(
    model,
    eval_set: LabeledDataset,
    x_grid: Optional[np.ndarray] = None,
    grid_points: int = 101,
    bandwidth: Optional[float] = None,
) -> CoverageCurve:
    """Smoothed coverage against a scalar predictor."""
    if eval_set.p != 1:
        raise MultivariateUnsupported(
            "conditional coverage curves need a one-dimensional predictor"
        )
    ind = coverage_indicators(model, eval_set)
    xs = eval_set.predictors[:, 0]
    if x_grid is None:
        x_grid = _default_grid(float(xs.min()), float(xs.max()), grid_points)
    return smooth_indicators(xs, ind, x_grid, bandwidth)


def l2_integrated_error(curve: CoverageCurve, alpha: float) -> float:
    """Trapezoid integral of the squared deviation from 1 - alpha."""
    dev = np.square(curve.values - (1.0 - alpha))
    return float(np.trapezoid(dev, curve.x))


def symmetric_difference_error(
    model,
    spec: ScenarioSpec,
    alpha: Optional[float] = None,
    mc_draws: int = 20_000,
    seed: int = 0,
) -> float:
    """Monte Carlo mass of the symmetric difference between the fitted
    and oracle regions, averaged over the predictor law.

    A fitted region with infinite radius disagrees with the oracle
    exactly on the oracle's complement, contributing its alpha mass.
    """
    level = float(model.alpha if alpha is None else alpha)
    data = generate(spec, mc_draws, rng.derive_seed(seed, "region-error"))
    est = coverage_indicators(model, data)
    truth = oracle_contains(spec, data.predictors, data.response_values, level)
    return float(np.mean(est != truth))


def evaluate_model(
    model,
    eval_set: LabeledDataset,
    x_grid: Optional[np.ndarray] = None,
    grid_points: int = 101,
    spec: Optional[ScenarioSpec] = None,
    mc_draws: int = 0,
    seed: int = 0,
) -> CoverageReport:
    """One-stop report: marginal coverage always, the conditional curve
    and its integrated error for scalar predictors, and the Monte Carlo
    region error when a generating scenario is supplied."""
    cover = marginal_coverage(model, eval_set)
    curve = None
    l2 = None
    if eval_set.p == 1:
        if x_grid is None and spec is not None:
            lo, hi = predictor_range(spec)
            x_grid = _default_grid(lo, hi, grid_points)
        curve = conditional_coverage_curve(model, eval_set, x_grid, grid_points)
        l2 = l2_integrated_error(curve, model.alpha)
    region_error = None
    if spec is not None and mc_draws > 0:
        region_error = symmetric_difference_error(model, spec, mc_draws=mc_draws, seed=seed)
    return CoverageReport(
        alpha=float(model.alpha),
        n_eval=eval_set.n,
        marginal_coverage=cover,
        curve=curve,
        l2_error=l2,
        region_error=region_error,
    )
