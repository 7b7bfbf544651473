"""Univariate generalized extreme value machinery.

Density/CDF/quantile evaluation, maximum-likelihood fitting of the
(shape, location, scale) triple, block-maxima extraction, and the
standard-Frechet probability transform used by the dependence model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import gamma as gamma_fn

from .errors import DataValidationError, NumericalError

# Below this |shape| the Gumbel-limit formulas are used; the log1p/expm1
# evaluation paths keep the two branches continuous across the switch.
XI_ZERO = 1e-8

MIN_FIT_SAMPLES = 20


@dataclass(frozen=True)
class GevParams:
    """Shape/location/scale triple of one GEV marginal.

    Positive shape gives a heavy (Frechet) upper tail, zero the Gumbel
    limit, negative a bounded (Weibull) tail. Scale must be positive;
    the support is {y : 1 + shape*(y - loc)/scale > 0}.
    """

    shape: float
    loc: float
    scale: float

    def __post_init__(self):
        if not (np.isfinite(self.shape) and np.isfinite(self.loc) and np.isfinite(self.scale)):
            raise DataValidationError(f"non-finite GEV parameters: {self}")
        if self.scale <= 0:
            raise DataValidationError(f"GEV scale must be positive, got {self.scale}")

    def support(self) -> tuple[float, float]:
        """Lower/upper support endpoints (infinite where unbounded)."""
        if abs(self.shape) < XI_ZERO:
            return (-math.inf, math.inf)
        edge = self.loc - self.scale / self.shape
        if self.shape > 0:
            return (edge, math.inf)
        return (-math.inf, edge)

    def contains(self, y) -> np.ndarray:
        lo, hi = self.support()
        y = np.asarray(y, dtype=float)
        return (y > lo) & (y < hi)


@dataclass(frozen=True)
class BlockMaximaConfig:
    """Block size for maxima extraction; the last block may be short."""

    block_size: int

    def __post_init__(self):
        if self.block_size < 1:
            raise DataValidationError(f"block size must be >= 1, got {self.block_size}")

    def n_blocks(self, n_observations: int) -> int:
        return -(-n_observations // self.block_size)


UNIT_FRECHET = GevParams(shape=1.0, loc=1.0, scale=1.0)


def _scalar_or_array(result: np.ndarray, scalar_input: bool):
    return float(result) if scalar_input else result


def gev_cdf(params: GevParams, y) -> float | np.ndarray:
    """GEV distribution function; values outside the support clamp to 0 or 1."""
    scalar = np.isscalar(y)
    w = (np.asarray(y, dtype=float) - params.loc) / params.scale
    xi = params.shape
    if abs(xi) < XI_ZERO:
        with np.errstate(over="ignore"):  # deep lower tail: exp(-inf) -> 0 is exact
            out = np.exp(-np.exp(-w))
    else:
        t = 1.0 + xi * w
        out = np.empty_like(w)
        inside = t > 0
        # t^(-1/xi) via log1p keeps accuracy for small xi*w
        out[inside] = np.exp(-np.exp(-np.log1p(xi * w[inside]) / xi))
        out[~inside] = 0.0 if xi > 0 else 1.0
    return _scalar_or_array(out, scalar)


def gev_logpdf(params: GevParams, y) -> float | np.ndarray:
    """Log density; -inf outside the support."""
    scalar = np.isscalar(y)
    w = (np.asarray(y, dtype=float) - params.loc) / params.scale
    xi = params.shape
    log_sigma = math.log(params.scale)
    if abs(xi) < XI_ZERO:
        with np.errstate(over="ignore"):  # deep lower tail: -inf log density
            out = -log_sigma - w - np.exp(-w)
    else:
        t = 1.0 + xi * w
        out = np.full_like(w, -np.inf)
        inside = t > 0
        log_t = np.log1p(xi * w[inside])
        out[inside] = -log_sigma - (1.0 + 1.0 / xi) * log_t - np.exp(-log_t / xi)
    return _scalar_or_array(out, scalar)


def gev_pdf(params: GevParams, y) -> float | np.ndarray:
    return np.exp(gev_logpdf(params, y))


def gev_quantile(params: GevParams, p) -> float | np.ndarray:
    """Inverse CDF for p strictly inside (0, 1)."""
    scalar = np.isscalar(p)
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise DataValidationError("quantile level must lie strictly in (0, 1)")
    log_neglog = np.log(-np.log(p))
    xi = params.shape
    if abs(xi) < XI_ZERO:
        out = params.loc - params.scale * log_neglog
    else:
        # ((-log p)^(-xi) - 1)/xi, evaluated via expm1 for small xi
        out = params.loc + params.scale * np.expm1(-xi * log_neglog) / xi
    return _scalar_or_array(out, scalar)


def block_maxima(observations, config: BlockMaximaConfig) -> np.ndarray:
    """Per-block maxima; block b covers observations [b*T, (b+1)*T)."""
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 1 or obs.size == 0:
        raise DataValidationError("observations must be a nonempty 1-D sequence")
    T = config.block_size
    return np.array([obs[i : i + T].max() for i in range(0, obs.size, T)])


def to_unit_frechet(params: GevParams, y) -> float | np.ndarray:
    """Probability-preserving map onto the standard Frechet scale."""
    scalar = np.isscalar(y)
    y_arr = np.asarray(y, dtype=float)
    w = (y_arr - params.loc) / params.scale
    xi = params.shape
    if abs(xi) < XI_ZERO:
        out = np.exp(w)
    else:
        # support test on the exact quantity the transform exponentiates
        if np.any(1.0 + xi * w <= 0.0):
            raise DataValidationError("value outside the support of the GEV parameters")
        out = np.exp(np.log1p(xi * w) / xi)
    return _scalar_or_array(out, scalar)


def from_unit_frechet(params: GevParams, z) -> float | np.ndarray:
    """Inverse of :func:`to_unit_frechet`; requires z > 0."""
    scalar = np.isscalar(z)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0):
        raise DataValidationError("standard-Frechet values must be positive")
    xi = params.shape
    if abs(xi) < XI_ZERO:
        out = params.loc + params.scale * np.log(z_arr)
    else:
        out = params.loc + params.scale * np.expm1(xi * np.log(z_arr)) / xi
    return _scalar_or_array(out, scalar)


def _pwm_start(x_sorted: np.ndarray) -> tuple[float, float, float]:
    """Probability-weighted-moment starting values (Hosking's estimators)."""
    n = x_sorted.size
    i = np.arange(1, n + 1, dtype=float)
    b0 = x_sorted.mean()
    b1 = np.sum((i - 1) / (n - 1) * x_sorted) / n
    b2 = np.sum((i - 1) * (i - 2) / ((n - 1) * (n - 2)) * x_sorted) / n
    c = (2 * b1 - b0) / (3 * b2 - b0) - math.log(2) / math.log(3)
    k = 7.8590 * c + 2.9554 * c * c  # Hosking's k is the negated shape
    k = float(np.clip(k, -0.5, 0.5))
    if abs(k) < 1e-3:
        sigma = (2 * b1 - b0) / math.log(2)
        mu = b0 - 0.5772156649015329 * sigma
        xi = 0.0
    else:
        g = gamma_fn(1 + k)
        sigma = (2 * b1 - b0) * k / (g * (1 - 2.0 ** (-k)))
        mu = b0 + sigma * (g - 1) / k
        xi = -k
    if not (np.isfinite(sigma) and sigma > 0):
        sigma = x_sorted.std() * math.sqrt(6) / math.pi
        mu = b0 - 0.5772156649015329 * sigma
        xi = 0.0
    return xi, mu, max(sigma, 1e-12)


def gev_loglik(params: GevParams, samples: np.ndarray) -> float:
    """Total log-likelihood; -inf if any sample falls outside the support."""
    return float(np.sum(gev_logpdf(params, samples)))


def fit_gev_mle(samples) -> tuple[GevParams, float]:
    """Maximum-likelihood GEV fit.

    Starts from probability-weighted moments, runs a derivative-free
    simplex search, then polishes with a quasi-Newton step. The scale is
    optimized on the log axis; support violations act as a -inf barrier.
    The shape is constrained to [-0.5, 5]: below -0.5 the maximum
    likelihood problem stops being regular.

    Args:
        samples: at least 20 finite values.

    Returns:
        (fitted parameters, log-likelihood at the fit).

    Raises:
        DataValidationError: too few, non-finite, or constant samples.
        NumericalError: optimizer failed to converge (best iterate attached).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise DataValidationError("samples must be 1-D")
    if x.size < MIN_FIT_SAMPLES:
        raise DataValidationError(
            f"need at least {MIN_FIT_SAMPLES} samples for a stable GEV fit, got {x.size}"
        )
    if not np.all(np.isfinite(x)):
        raise DataValidationError("samples contain non-finite values")
    if np.ptp(x) == 0:
        raise DataValidationError("degenerate samples: all values equal (scale would collapse)")

    x_sorted = np.sort(x)
    xi0, mu0, sigma0 = _pwm_start(x_sorted)

    def nll(theta: np.ndarray) -> float:
        xi, mu, log_sigma = theta
        # shape below -0.5 leaves the regular-MLE regime (the likelihood
        # diverges as the endpoint meets the sample maximum for xi <= -1)
        if xi < -0.5 or xi > 5 or abs(log_sigma) > 50:
            return np.inf
        ll = gev_loglik(GevParams(xi, mu, math.exp(log_sigma)), x)
        return -ll if np.isfinite(ll) else np.inf

    theta0 = np.array([xi0, mu0, math.log(sigma0)])
    if not np.isfinite(nll(theta0)):
        # PWM start outside the feasible region: fall back to a wide Gumbel start
        theta0 = np.array([0.0, float(x.mean()), math.log(max(x.std(), 1e-8))])

    simplex = minimize(nll, theta0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 2000})
    best = simplex
    with np.errstate(invalid="ignore"):  # finite differences may straddle the barrier
        polish = minimize(nll, simplex.x, method="L-BFGS-B",
                          options={"ftol": 1e-14, "gtol": 1e-10})
    if np.isfinite(polish.fun) and polish.fun <= best.fun:
        best = polish

    xi, mu, log_sigma = best.x
    params = GevParams(float(xi), float(mu), float(math.exp(log_sigma)))
    loglik = -float(best.fun)
    if not np.isfinite(loglik):
        raise NumericalError("GEV fit diverged: no finite-likelihood iterate found", best=params)
    if not (simplex.success or polish.success):
        raise NumericalError(
            f"GEV fit did not converge: {simplex.message}", best=(params, loglik)
        )
    return params, loglik


def mle_sampling_variances(params: GevParams, samples) -> np.ndarray:
    """Approximate sampling variances of (shape, loc, log scale) estimates.

    Diagonal of the inverse observed information, with the Hessian taken
    numerically at the fit. Entries are clipped to a sane positive range;
    a singular Hessian (boundary fits, tiny samples) falls back to a
    crude variance of order 1/n.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    theta = np.array([params.shape, params.loc, math.log(params.scale)])

    def nll(t: np.ndarray) -> float:
        ll = gev_loglik(GevParams(t[0], t[1], math.exp(t[2])), x)
        return -ll if np.isfinite(ll) else np.inf

    steps = np.array([1e-4, 1e-4 * max(params.scale, 1e-8), 1e-4])
    hess = np.empty((3, 3))
    for i in range(3):
        for k in range(i, 3):
            ei = np.zeros(3)
            ek = np.zeros(3)
            ei[i] = steps[i]
            ek[k] = steps[k]
            value = (nll(theta + ei + ek) - nll(theta + ei - ek)
                     - nll(theta - ei + ek) + nll(theta - ei - ek)) / (4 * steps[i] * steps[k])
            hess[i, k] = hess[k, i] = value
    fallback = np.array([1.0, params.scale**2, 1.0]) / n
    if not np.all(np.isfinite(hess)):
        return fallback
    try:
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        return fallback
    variances = np.diag(cov).copy()
    bad = ~np.isfinite(variances) | (variances <= 0)
    variances[bad] = fallback[bad]
    ceiling = fallback * n  # order-one cap keeps pathological cells bounded
    return np.minimum(variances, ceiling * 10.0)
