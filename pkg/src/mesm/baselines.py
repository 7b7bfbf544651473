"""Comparison models and evaluation metrics.

Quantile linear regression (pinball loss via linear programming),
stochastic kriging with replication-variance nuggets, its tail-trained
quantile variant, and the distance metrics used to score marginal
predictions of extreme responses against held-out data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import DataValidationError, NumericalError
from .gev import gev_quantile
from .marginal import (DesignMatrix, ParameterSurface, fit_parameter_surface,
                       predict_marginals)
from .pipeline import FittedMesm
from .util import derived_rng


def wasserstein_1d(a, b) -> float:
    """Mean absolute difference of order statistics (equal sample sizes)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise DataValidationError("samples must be 1-D and of equal length")
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def pmd(a, b) -> float:
    """Relative gap of the sample means, |mean(a)-mean(b)| / |mean(a)|."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mean_a = a.mean()
    if mean_a == 0:
        raise DataValidationError("reference samples have zero mean; PMD undefined")
    return float(abs(mean_a - b.mean()) / abs(mean_a))


def l1_score(tau_hat, tau) -> float:
    """L1 distance between estimated and true length scales."""
    return float(np.sum(np.abs(np.asarray(tau_hat, dtype=float)
                               - np.asarray(tau, dtype=float))))


@dataclass
class QuantileLinearModel:
    """Linear conditional-quantile predictor fitted on the pinball loss."""

    coef: np.ndarray
    intercept: float
    quantile: float
    objective: float
    rank_deficient: bool = False

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x @ self.coef + self.intercept


def pinball_loss(residuals, quantile: float) -> float:
    r = np.asarray(residuals, dtype=float)
    return float(np.sum(np.where(r >= 0, quantile * r, (quantile - 1.0) * r)))


def fit_qlr(x, y, quantile: float) -> QuantileLinearModel:
    """Quantile regression as a linear program.

    Splits residuals into positive/negative parts and minimizes the
    pinball objective exactly with the HiGHS solver.
    """
    if not (0 < quantile < 1):
        raise DataValidationError(f"quantile must lie in (0, 1), got {quantile}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = x.shape
    if y.shape != (n,):
        raise DataValidationError("one response per design row required")
    design = np.column_stack([x, np.ones(n)])
    rank_deficient = np.linalg.matrix_rank(design) < d + 1

    # variables: [coef (d), intercept, pos residuals (n), neg residuals (n)]
    cost = np.concatenate([np.zeros(d + 1), np.full(n, quantile),
                           np.full(n, 1.0 - quantile)])
    eye = sparse.identity(n, format="csc")
    a_eq = sparse.hstack([sparse.csc_matrix(design), eye, -eye], format="csc")
    bounds = [(None, None)] * (d + 1) + [(0, None)] * (2 * n)
    res = linprog(cost, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise NumericalError(f"quantile regression LP failed: {res.message}")
    coef = res.x[:d]
    intercept = float(res.x[d])
    return QuantileLinearModel(coef=coef, intercept=intercept, quantile=quantile,
                               objective=float(res.fun), rank_deficient=rank_deficient)


@dataclass
class KrigingModel:
    """Gaussian-process predictor on replicated simulation output.

    The surface is trained on per-design sample means with a fixed
    per-point noise floor equal to the replication variance of those
    means; ``noise_mean`` keeps the average replicate variance so
    observation-level draws can include the intrinsic scatter.
    """

    surface: ParameterSurface
    noise_mean: float
    quantile: float | None = None

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        return self.surface.predict(x)

    def predict_observation(self, x) -> tuple[np.ndarray, np.ndarray]:
        mean, var = self.surface.predict(x)
        return mean, var + self.noise_mean


def _fit_kriging(designs: DesignMatrix, replicates: np.ndarray,
                 quantile: float | None, restarts: int, seed: int) -> KrigingModel:
    means = replicates.mean(axis=1)
    if replicates.shape[1] > 1:
        rep_var = replicates.var(axis=1, ddof=1)
    else:
        rep_var = np.zeros(replicates.shape[0])
    fixed_noise = rep_var / replicates.shape[1]
    surface = fit_parameter_surface(designs, means, fixed_noise=fixed_noise,
                                    restarts=restarts, seed=seed)
    return KrigingModel(surface=surface, noise_mean=float(rep_var.mean()),
                        quantile=quantile)


def fit_sk(designs: DesignMatrix, replicates, restarts: int = 5,
           seed: int = 0) -> KrigingModel:
    """Stochastic kriging on all replicates of each design point."""
    replicates = np.asarray(replicates, dtype=float)
    if replicates.ndim != 2 or replicates.shape[0] != designs.n_points:
        raise DataValidationError("replicates must be (design points, replications)")
    return _fit_kriging(designs, replicates, None, restarts, seed)


def fit_qsk(designs: DesignMatrix, replicates, quantile: float,
            restarts: int = 5, seed: int = 0) -> KrigingModel:
    """Stochastic kriging trained only on each point's upper tail.

    Keeps the ceil((1-q) * L) largest replicates per design point, so a
    zero quantile reproduces plain stochastic kriging exactly.
    """
    replicates = np.asarray(replicates, dtype=float)
    if replicates.ndim != 2 or replicates.shape[0] != designs.n_points:
        raise DataValidationError("replicates must be (design points, replications)")
    if not (0 <= quantile < 1):
        raise DataValidationError(f"quantile must lie in [0, 1), got {quantile}")
    if quantile == 0:
        retained = replicates
    else:
        L = replicates.shape[1]
        # tiny slack keeps ceil exact when (1-q)*L is an integer in real
        # arithmetic but lands just above it in floating point
        keep = max(1, math.ceil((1.0 - quantile) * L - 1e-9))
        retained = np.sort(replicates, axis=1)[:, L - keep:]
    model = _fit_kriging(designs, retained, quantile, restarts, seed)
    return model


# --- evaluation ------------------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    """One metric aggregated over test cells."""

    metric: str
    per_point: np.ndarray
    mean: float
    sd: float

    def __post_init__(self):
        per_point = np.asarray(self.per_point, dtype=float)
        if np.any(per_point < -1e-12) or self.mean < 0:
            raise DataValidationError(f"{self.metric} values must be nonnegative")
        object.__setattr__(self, "per_point", per_point)


@dataclass(frozen=True)
class ModelEvaluation:
    model: str
    parameter: str
    wd: MetricReport | None
    pmd: MetricReport
    train_seconds: float


class MesmMarginals:
    """Adapter exposing a fitted model's marginal laws to the evaluator."""

    def __init__(self, fitted: FittedMesm, parameter: str = "",
                 train_seconds: float = float("nan")):
        self.fitted = fitted
        self.parameter = parameter or f"T={fitted.block.block_size}"
        self.train_seconds = train_seconds

    def prepare(self, s):
        return predict_marginals(self.fitted.field, s)

    def sample_marginal(self, state, j: int, n: int, rng) -> np.ndarray:
        return gev_quantile(state[j], rng.uniform(size=n))


class KrigingMarginals:
    """Adapter over one kriging model per critical point."""

    def __init__(self, models: list[KrigingModel], name_parameter: str,
                 train_seconds: float = float("nan")):
        self.models = models
        self.parameter = name_parameter
        self.train_seconds = train_seconds

    def prepare(self, s):
        means = np.empty(len(self.models))
        sds = np.empty(len(self.models))
        for j, m in enumerate(self.models):
            mean, var = m.predict_observation(np.atleast_2d(s))
            means[j], sds[j] = mean[0], math.sqrt(max(var[0], 0.0))
        return means, sds

    def sample_marginal(self, state, j: int, n: int, rng) -> np.ndarray:
        means, sds = state
        return rng.normal(means[j], sds[j], size=n)


class QlrMarginals:
    """Adapter over one quantile line per critical point (point estimates only)."""

    def __init__(self, models: list[QuantileLinearModel], name_parameter: str,
                 train_seconds: float = float("nan")):
        self.models = models
        self.parameter = name_parameter
        self.train_seconds = train_seconds

    def prepare(self, s):
        return np.array([float(m.predict(s)[0]) for m in self.models])

    def sample_marginal(self, state, j: int, n: int, rng) -> None:
        return None

    def point_prediction(self, state, j: int) -> float:
        return float(state[j])


def evaluate_models(models: dict, test_designs, test_maxima,
                    n_resamples: int = 50, n_bootstrap: int = 200,
                    seed: int = 0) -> list[ModelEvaluation]:
    """Score each model's marginals against held-out block maxima.

    For every (test design, critical point) cell the distributional
    distance is the Wasserstein distance between the test maxima and an
    equal-size draw from the model marginal, averaged over resamples to
    tame sampling noise; the mean-distance metric compares sample means.
    Reported spreads are bootstrap standard deviations of the averaged
    metric, resampling test cells.
    """
    test_designs = np.atleast_2d(np.asarray(test_designs, dtype=float))
    test_maxima = np.asarray(test_maxima, dtype=float)
    if test_maxima.ndim != 3 or test_maxima.shape[0] != test_designs.shape[0]:
        raise DataValidationError("test maxima must be (designs, blocks, points)")
    M, Bt, J = test_maxima.shape

    out = []
    for name, model in models.items():
        rng = derived_rng(seed, "evaluate", name)
        wd_cells = np.full((M, J), np.nan)
        pmd_cells = np.full((M, J), np.nan)
        has_wd = True
        for m in range(M):
            state = model.prepare(test_designs[m])
            for j in range(J):
                test_vals = test_maxima[m, :, j]
                draws = model.sample_marginal(state, j, n_resamples * Bt, rng)
                if draws is None:
                    has_wd = False
                    point = model.point_prediction(state, j)
                    pmd_cells[m, j] = pmd(test_vals, np.array([point]))
                else:
                    chunks = draws.reshape(n_resamples, Bt)
                    wd_cells[m, j] = np.mean(
                        [wasserstein_1d(test_vals, c) for c in chunks])
                    pmd_cells[m, j] = pmd(test_vals, draws)

        boot_rng = derived_rng(seed, "evaluate-bootstrap", name)
        idx = boot_rng.integers(0, M * J, size=(n_bootstrap, M * J))

        def report(cells: np.ndarray, metric: str) -> MetricReport:
            flat = cells.ravel()
            reps = flat[idx].mean(axis=1)
            return MetricReport(metric=metric, per_point=cells.mean(axis=0),
                                mean=float(flat.mean()), sd=float(reps.std(ddof=1)))

        out.append(ModelEvaluation(
            model=name,
            parameter=model.parameter,
            wd=report(wd_cells, "WD") if has_wd else None,
            pmd=report(pmd_cells, "PMD"),
            train_seconds=float(model.train_seconds),
        ))
    return out
