"""Marginal parameter surfaces over the control space.

Each critical point gets three independent surfaces (shape, location,
log scale), each modeled as a linear trend in the control input plus a
zero-mean Gaussian process with an anisotropic squared-exponential
kernel. Hyperparameters are chosen by maximizing the (trend-profiled)
marginal likelihood with a quasi-Newton search and restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import DataValidationError, NumericalError
from .gev import GevParams, fit_gev_mle, mle_sampling_variances
from .util import derived_rng, parallel_map

NUGGET_FLOOR = 1e-10

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DesignMatrix:
    """Control inputs of the training runs plus the box they live in."""

    values: np.ndarray
    bounds: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataValidationError("design matrix must be 2-D (runs x input dimensions)")
        if values.shape[0] < 2:
            raise DataValidationError("need at least two design points")
        if not np.all(np.isfinite(values)):
            raise DataValidationError("design matrix contains non-finite entries")
        if np.unique(values, axis=0).shape[0] != values.shape[0]:
            raise DataValidationError("design matrix contains duplicate rows")
        if self.bounds is None:
            bounds = np.column_stack([values.min(axis=0), values.max(axis=0)])
        else:
            bounds = np.asarray(self.bounds, dtype=float)
            if bounds.shape != (values.shape[1], 2):
                raise DataValidationError(
                    f"bounds must be (n_dims, 2), got {bounds.shape}"
                )
            if np.any(bounds[:, 0] > bounds[:, 1]):
                raise DataValidationError("bounds must satisfy low <= high")
            tol = 1e-9 * np.maximum(1.0, np.abs(bounds).max())
            if (np.any(values < bounds[:, 0] - tol)
                    or np.any(values > bounds[:, 1] + tol)):
                raise DataValidationError("design points fall outside the stated bounds")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bounds", bounds)

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def n_dims(self) -> int:
        return self.values.shape[1]

    def contains(self, s: np.ndarray) -> bool:
        s = np.asarray(s, dtype=float)
        tol = 1e-9 * np.maximum(1.0, np.abs(self.bounds).max())
        return bool(np.all(s >= self.bounds[:, 0] - tol)
                    and np.all(s <= self.bounds[:, 1] + tol))


@dataclass(frozen=True)
class ExtremeDataset:
    """Block maxima indexed by (design point, block, critical point)."""

    maxima: np.ndarray
    designs: DesignMatrix

    def __post_init__(self):
        maxima = np.asarray(self.maxima, dtype=float)
        if maxima.ndim != 3:
            raise DataValidationError("maxima must be (designs, blocks, points)")
        if maxima.shape[0] != self.designs.n_points:
            raise DataValidationError("maxima first axis must match the design matrix")
        if not np.all(np.isfinite(maxima)):
            raise DataValidationError("maxima contain non-finite values")
        object.__setattr__(self, "maxima", maxima)

    @property
    def n_blocks(self) -> int:
        return self.maxima.shape[1]

    @property
    def n_points(self) -> int:
        return self.maxima.shape[2]


@dataclass(frozen=True)
class GpHyperparams:
    signal_scale: float
    length_scales: np.ndarray
    nugget: float

    def __post_init__(self):
        ls = np.asarray(self.length_scales, dtype=float)
        if self.signal_scale <= 0 or np.any(ls <= 0):
            raise DataValidationError("signal scale and length scales must be positive")
        if self.nugget < NUGGET_FLOOR:
            raise DataValidationError(f"nugget must be >= {NUGGET_FLOOR}")
        object.__setattr__(self, "length_scales", ls)


def _sq_dists(x1: np.ndarray, x2: np.ndarray, length_scales: np.ndarray) -> np.ndarray:
    diff = (x1[:, None, :] - x2[None, :, :]) / length_scales
    return np.sum(diff**2, axis=-1)


def _trend_matrix(x: np.ndarray) -> np.ndarray:
    return np.column_stack([x, np.ones(x.shape[0])])


def _trend_penalties(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Weak ridge on trend slopes, scaled to standardized units.

    A slope of one target-sd per input-sd carries unit penalty; the
    intercept is free. Keeps the wide trend (inputs + intercept vs few
    design points) from extrapolating wildly off the design cloud while
    leaving genuine linear signal essentially untouched.
    """
    col_sd = np.std(x, axis=0)
    col_sd[col_sd == 0] = 1.0
    y_sd = float(np.std(y))
    if y_sd == 0:
        y_sd = 1.0
    return np.concatenate([(col_sd / y_sd) ** 2, [0.0]])


def _solve_trend(chol_lower: np.ndarray, F: np.ndarray, y: np.ndarray,
                 penalties: np.ndarray) -> np.ndarray:
    """Ridge-stabilized generalized least squares in whitened coordinates.

    Solved as an augmented least-squares system (penalty rows appended)
    to avoid squaring the often badly conditioned whitened design.
    """
    Fw = solve_triangular(chol_lower, F, lower=True)
    yw = solve_triangular(chol_lower, y, lower=True)
    augmented = np.vstack([Fw, np.diag(np.sqrt(penalties))])
    rhs = np.concatenate([yw, np.zeros(penalties.size)])
    beta, *_ = np.linalg.lstsq(augmented, rhs, rcond=None)
    return beta


def _covariance(x: np.ndarray, hp: GpHyperparams,
                fixed_noise: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    corr = np.exp(-0.5 * _sq_dists(x, x, hp.length_scales))
    K = hp.signal_scale**2 * corr
    noise = np.full(x.shape[0], hp.nugget)
    if fixed_noise is not None:
        noise = noise + fixed_noise
    K[np.diag_indices_from(K)] += noise
    return K, corr


def _nll_and_grad(log_params: np.ndarray, x: np.ndarray, y: np.ndarray,
                  fixed_noise: np.ndarray | None):
    """Profile negative log marginal likelihood and its gradient.

    The trend coefficients are solved by ridge-stabilized generalized
    least squares at each evaluation; they minimize the penalized
    objective, so the gradient in the kernel parameters is exact by the
    envelope theorem.
    """
    n, d = x.shape
    sf = math.exp(log_params[0])
    ls = np.exp(log_params[1 : 1 + d])
    nug = math.exp(log_params[1 + d])
    hp = GpHyperparams(sf, ls, max(nug, NUGGET_FLOOR))
    K, corr = _covariance(x, hp, fixed_noise)
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return np.inf, np.zeros_like(log_params)
    F = _trend_matrix(x)
    penalties = _trend_penalties(x, y)
    beta = _solve_trend(L, F, y, penalties)
    resid = y - F @ beta
    alpha = cho_solve((L, True), resid)
    nll = (0.5 * float(resid @ alpha) + float(np.sum(np.log(np.diag(L))))
           + 0.5 * n * _LOG_2PI + 0.5 * float(penalties @ beta**2))

    Kinv = cho_solve((L, True), np.eye(n))
    inner = np.outer(alpha, alpha) - Kinv  # d(loglik)/dK = inner / 2
    signal_part = hp.signal_scale**2 * corr
    grad = np.empty_like(log_params)
    grad[0] = -0.5 * np.sum(inner * (2.0 * signal_part))
    diffs_sq = (x[:, None, :] - x[None, :, :]) ** 2
    for k in range(d):
        dK = signal_part * diffs_sq[:, :, k] / ls[k] ** 2
        grad[1 + k] = -0.5 * np.sum(inner * dK)
    grad[1 + d] = -0.5 * float(np.trace(inner)) * nug
    return nll, grad


@dataclass
class ParameterSurface:
    """One fitted trend-plus-GP surface over the control space."""

    x_train: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    hyperparams: GpHyperparams
    trend_coef: np.ndarray
    intercept: float
    fixed_noise: np.ndarray | None = field(default=None, repr=False)
    converged: bool = True
    log_marginal_likelihood: float = np.nan

    def __post_init__(self):
        self.x_train = np.asarray(self.x_train, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        self.trend_coef = np.asarray(self.trend_coef, dtype=float)
        K, _ = _covariance(self.x_train, self.hyperparams, self.fixed_noise)
        try:
            self._cho = cho_factor(K, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"covariance factorization failed at hyperparameters {self.hyperparams}"
            ) from exc
        resid = self.targets - self._trend(self.x_train)
        self._alpha = cho_solve(self._cho, resid)

    def _trend(self, x: np.ndarray) -> np.ndarray:
        return x @ self.trend_coef + self.intercept

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and latent variance at new control inputs.

        Accepts one input row or an (m, d) stack; returns matching 1-D
        arrays. The variance is for the latent surface (no observation
        noise added) and is clipped at zero.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        hp = self.hyperparams
        k_star = hp.signal_scale**2 * np.exp(
            -0.5 * _sq_dists(self.x_train, x, hp.length_scales))
        mean = self._trend(x) + k_star.T @ self._alpha
        solved = cho_solve(self._cho, k_star)
        var = hp.signal_scale**2 - np.sum(k_star * solved, axis=0)
        return mean, np.maximum(var, 0.0)

    def predict_one(self, s) -> tuple[float, float]:
        mean, var = self.predict(np.atleast_2d(s))
        return float(mean[0]), float(var[0])


def fit_parameter_surface(designs: DesignMatrix, targets,
                          fixed_noise: np.ndarray | None = None,
                          restarts: int = 5, seed: int = 0) -> ParameterSurface:
    """Fit trend and kernel hyperparameters to one target per design point.

    Quasi-Newton search on log hyperparameters with analytic gradients,
    from a data-scaled start plus random restarts; the best endpoint is
    kept and never falls below the likelihood of the starting values.
    A fit that converged nowhere is returned with converged=False.
    """
    x = designs.values
    y = np.asarray(targets, dtype=float)
    if y.shape != (designs.n_points,):
        raise DataValidationError("one target value per design point required")
    if not np.all(np.isfinite(y)):
        raise DataValidationError("targets contain non-finite values")
    n, d = x.shape

    spans = np.ptp(x, axis=0)
    spans[spans == 0] = 1.0
    y_sd = float(np.std(y))
    y_scale = y_sd if y_sd > 0 else 1.0

    log_bounds = [(math.log(1e-6 * y_scale), math.log(1e6 * y_scale))]
    log_bounds += [(math.log(1e-3 * sp), math.log(1e3 * sp)) for sp in spans]
    log_bounds += [(math.log(NUGGET_FLOOR), math.log(max(10.0 * y_scale**2, 1e-8)))]

    log_nug0 = math.log(max(1e-6 * y_scale**2, NUGGET_FLOOR))
    start = np.concatenate([[math.log(y_scale)], np.log(spans), [log_nug0]])
    starts = [start]
    if restarts > 1:
        # a rough-surface start; spans-wide kernels can miss short correlations
        starts.append(np.concatenate([[math.log(y_scale)], np.log(spans / 5.0), [log_nug0]]))
    rng = derived_rng(seed, "gp-restarts")
    for _ in range(max(restarts - 2, 0)):
        draw = np.concatenate([
            [rng.uniform(math.log(0.3 * y_scale), math.log(3.0 * y_scale))],
            rng.uniform(np.log(0.05 * spans), np.log(2.0 * spans)),
            [rng.uniform(math.log(max(1e-8 * y_scale**2, NUGGET_FLOOR)),
                         math.log(max(0.1 * y_scale**2, 1e-9)))],
        ])
        starts.append(draw)

    best_val, best_x, converged = np.inf, None, False
    for s0 in starts:
        res = minimize(_nll_and_grad, s0, args=(x, y, fixed_noise), jac=True,
                       method="L-BFGS-B", bounds=log_bounds,
                       options={"ftol": 1e-8, "gtol": 1e-8, "maxiter": 500})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_x = res.fun, res.x
            converged = converged or bool(res.success)
    start_val, _ = _nll_and_grad(start, x, y, fixed_noise)
    if best_x is None or start_val < best_val:
        best_val, best_x = start_val, start
    if not np.isfinite(best_val):
        raise NumericalError("no finite GP marginal likelihood found for any start")

    sf = math.exp(best_x[0])
    ls = np.exp(best_x[1 : 1 + d])
    nug = max(math.exp(best_x[1 + d]), NUGGET_FLOOR)
    hp = GpHyperparams(sf, ls, nug)
    K, _ = _covariance(x, hp, fixed_noise)
    L = cholesky(K, lower=True)
    F = _trend_matrix(x)
    beta = _solve_trend(L, F, y, _trend_penalties(x, y))
    return ParameterSurface(
        x_train=x, targets=y, hyperparams=hp,
        trend_coef=beta[:d], intercept=float(beta[d]),
        fixed_noise=fixed_noise, converged=converged,
        log_marginal_likelihood=-float(best_val),
    )


@dataclass
class MarginalField:
    """Per-critical-point GEV parameter surfaces over the control space.

    The scale is modeled on the log axis, so predicted scales are
    positive by construction. Surfaces are fitted independently per
    critical point and per parameter. ``mle_params`` keeps the raw
    per-cell estimates (n_designs, n_points, 3) for the probability
    transform at the training designs.
    """

    shape_surfaces: list[ParameterSurface]
    loc_surfaces: list[ParameterSurface]
    log_scale_surfaces: list[ParameterSurface]
    bounds: np.ndarray
    mle_params: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return len(self.shape_surfaces)

    def contains(self, s) -> bool:
        s = np.asarray(s, dtype=float)
        tol = 1e-9 * np.maximum(1.0, np.abs(self.bounds).max())
        return bool(np.all(s >= self.bounds[:, 0] - tol)
                    and np.all(s <= self.bounds[:, 1] + tol))

    def cell_params(self, n: int, j: int) -> GevParams:
        xi, mu, sigma = self.mle_params[n, j]
        return GevParams(xi, mu, sigma)


def fit_marginal_field(designs: DesignMatrix, extremes: ExtremeDataset,
                       restarts: int = 5, seed: int = 0,
                       threads: int | None = 1) -> MarginalField:
    """Per-cell GEV fits followed by one surface per parameter per point.

    Any cell whose maximum-likelihood fit fails aborts the whole field
    fit with the (design point, critical point) pair named; silent
    imputation would poison the downstream dependence fit.

    Each surface sees the sampling variance of its targets as a fixed
    per-point noise floor: the targets are maximum-likelihood estimates
    with known uncertainty, and without that floor the surface fit can
    degenerate into zero-nugget interpolation of estimation noise when
    the control dimension rivals the design size.
    """
    if extremes.designs is not designs and not np.array_equal(
            extremes.designs.values, designs.values):
        raise DataValidationError("extremes were built on a different design matrix")
    N, B, J = extremes.maxima.shape

    def fit_cell(nj: tuple[int, int]):
        n, j = nj
        try:
            params, _ = fit_gev_mle(extremes.maxima[n, :, j])
        except (DataValidationError, NumericalError) as exc:
            raise NumericalError(
                f"GEV fit failed at design point {n}, critical point {j}: {exc}"
            ) from exc
        variances = mle_sampling_variances(params, extremes.maxima[n, :, j])
        return (params.shape, params.loc, params.scale, *variances)

    cells = parallel_map(fit_cell, [(n, j) for n in range(N) for j in range(J)],
                         threads=threads)
    cells = np.array(cells).reshape(N, J, 6)
    mle = cells[:, :, :3]
    noise = cells[:, :, 3:]  # sampling variance of (shape, loc, log scale)

    def fit_surface(args) -> ParameterSurface:
        name, j, targets, fixed_noise = args
        return fit_parameter_surface(designs, targets, fixed_noise=fixed_noise,
                                     restarts=restarts,
                                     seed=int(derived_rng(seed, "surface", name, j)
                                              .integers(2**31)))

    jobs = []
    for j in range(J):
        jobs.append(("shape", j, mle[:, j, 0], noise[:, j, 0]))
        jobs.append(("loc", j, mle[:, j, 1], noise[:, j, 1]))
        jobs.append(("log_scale", j, np.log(mle[:, j, 2]), noise[:, j, 2]))
    surfaces = parallel_map(fit_surface, jobs, threads=threads)

    shape_s = [surfaces[3 * j] for j in range(J)]
    loc_s = [surfaces[3 * j + 1] for j in range(J)]
    log_scale_s = [surfaces[3 * j + 2] for j in range(J)]
    return MarginalField(shape_surfaces=shape_s, loc_surfaces=loc_s,
                         log_scale_surfaces=log_scale_s,
                         bounds=np.array(designs.bounds), mle_params=mle)


def predict_marginals(field: MarginalField, s) -> list[GevParams]:
    """GEV parameter triples at a control input inside the training box.

    Extrapolation in the control input is refused; extrapolating into
    the tail of the response is exactly what the fitted GEV margins are
    for.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (field.bounds.shape[0],):
        raise DataValidationError(
            f"control input must have {field.bounds.shape[0]} dimensions, got {s.shape}"
        )
    if not field.contains(s):
        raise DataValidationError(f"control input {s} is outside the modeled bounds")
    out = []
    for j in range(field.n_points):
        xi, _ = field.shape_surfaces[j].predict_one(s)
        mu, _ = field.loc_surfaces[j].predict_one(s)
        log_sigma, _ = field.log_scale_surfaces[j].predict_one(s)
        out.append(GevParams(shape=xi, loc=mu, scale=math.exp(log_sigma)))
    return out
