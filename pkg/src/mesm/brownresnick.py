"""Brown-Resnick max-stable process on the critical-point space.

The underlying field is a unit-variance Gaussian process with an
anisotropic squared-exponential correlation governed by per-coordinate
length scales. Pairs then follow the Husler-Reiss law with parameter
a = sqrt(2 * (1 - correlation)), which gives closed forms for the
bivariate exponent measure, density, and extremal coefficient, and an
exact sampler via extremal functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky
from scipy.special import ndtr

from .errors import DataValidationError, NumericalError
from .space import CriticalPointSpace
from .util import derived_rng, parallel_map

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Husler-Reiss parameter below which a pair is treated as completely dependent
_A_ZERO = 1e-12

MAX_SPECTRAL_ITERATIONS = 10**6


@dataclass(frozen=True)
class BrownResnickModel:
    """Max-stable dependence with per-coordinate length scales.

    Requires a coordinate-based space: the correlation is anisotropic in
    the plane, so distances alone are not enough.
    """

    tau: np.ndarray
    space: CriticalPointSpace

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if not self.space.has_coordinates:
            raise DataValidationError(
                "the dependence model needs point coordinates, not just distances"
            )
        if tau.shape != (self.space.coordinates.shape[1],):
            raise DataValidationError(
                f"need one length scale per coordinate dimension, got shape {tau.shape}"
            )
        if not np.all(np.isfinite(tau)) or np.any(tau <= 0):
            raise DataValidationError(f"length scales must be positive and finite, got {tau}")
        object.__setattr__(self, "tau", tau)


def rbf_correlation(diff: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """exp(-sum_d h_d^2 / (2 tau_d^2)) for coordinate differences h."""
    diff = np.asarray(diff, dtype=float)
    return np.exp(-0.5 * np.sum((diff / tau) ** 2, axis=-1))


def dependence_param(model: BrownResnickModel, i: int, k: int) -> float:
    """Husler-Reiss parameter of a pair: 0 at coincident points, <= sqrt(2)."""
    coords = model.space.coordinates
    corr = rbf_correlation(coords[i] - coords[k], model.tau)
    return math.sqrt(max(2.0 * (1.0 - corr), 0.0))


def pair_dependence_params(model: BrownResnickModel, idx_i, idx_k) -> np.ndarray:
    """Vectorized :func:`dependence_param` over index arrays."""
    coords = model.space.coordinates
    diff = coords[np.asarray(idx_i)] - coords[np.asarray(idx_k)]
    corr = rbf_correlation(diff, model.tau)
    return np.sqrt(np.maximum(2.0 * (1.0 - corr), 0.0))


def _check_positive(z, name: str) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or not np.all(np.isfinite(z)):
        raise DataValidationError(f"{name} must be positive and finite")
    return z


def hr_exponent_measure(a, z1, z2) -> float | np.ndarray:
    """Bivariate Husler-Reiss exponent measure V(z1, z2).

    a = 0 collapses to the complete-dependence limit 1/min(z1, z2).
    Broadcasts over array inputs.
    """
    scalar = np.isscalar(a) and np.isscalar(z1) and np.isscalar(z2)
    z1 = _check_positive(z1, "z1")
    z2 = _check_positive(z2, "z2")
    a, z1, z2 = np.broadcast_arrays(np.asarray(a, dtype=float), z1, z2)
    out = np.empty(a.shape)
    dep = a < _A_ZERO
    if np.any(dep):
        out[dep] = 1.0 / np.minimum(z1[dep], z2[dep])
    if np.any(~dep):
        an, x, y = a[~dep], z1[~dep], z2[~dep]
        w = an / 2 + np.log(y / x) / an
        v = an - w
        out[~dep] = ndtr(w) / x + ndtr(v) / y
    return float(out) if scalar else out


def hr_extremal_coefficient(a) -> float | np.ndarray:
    """V(1, 1) = 2 * Phi(a/2), between 1 (coincident) and 2 (independent)."""
    scalar = np.isscalar(a)
    out = 2.0 * ndtr(np.asarray(a, dtype=float) / 2.0)
    return float(out) if scalar else out


def hr_log_pairwise_density(a, z1, z2) -> float | np.ndarray:
    """Log of the bivariate Husler-Reiss density (a > 0 required).

    Differentiating exp(-V) and simplifying leaves
    f = exp(-V) * (Phi(w)Phi(v)/(z1 z2)^2 + phi(w)/(a z1^2 z2)),
    with w = a/2 + log(z2/z1)/a and v = a - w.
    """
    scalar = np.isscalar(a) and np.isscalar(z1) and np.isscalar(z2)
    z1 = _check_positive(z1, "z1")
    z2 = _check_positive(z2, "z2")
    a, z1, z2 = np.broadcast_arrays(np.asarray(a, dtype=float), z1, z2)
    if np.any(a < _A_ZERO):
        raise DataValidationError(
            "coincident points have a degenerate pair density; drop duplicate points"
        )
    w = a / 2 + np.log(z2 / z1) / a
    v = a - w
    phi_w, phi_v = ndtr(w), ndtr(v)
    dens_w = np.exp(-0.5 * w * w) / _SQRT_2PI
    V = phi_w / z1 + phi_v / z2
    bracket = phi_w * phi_v / (z1 * z1 * z2 * z2) + dens_w / (a * z1 * z1 * z2)
    with np.errstate(divide="ignore"):
        out = -V + np.log(bracket)
    return float(out) if scalar else out


def hr_pairwise_density(a, z1, z2) -> float | np.ndarray:
    out = np.exp(hr_log_pairwise_density(a, z1, z2))
    return float(out) if (np.isscalar(a) and np.isscalar(z1) and np.isscalar(z2)) else out


def exponent_measure_2(model: BrownResnickModel, i: int, k: int, z1, z2):
    return hr_exponent_measure(dependence_param(model, i, k), z1, z2)


def extremal_coefficient(model: BrownResnickModel, i: int, k: int) -> float:
    return hr_extremal_coefficient(dependence_param(model, i, k))


def pairwise_density(model: BrownResnickModel, i: int, k: int, z1, z2):
    return hr_pairwise_density(dependence_param(model, i, k), z1, z2)


def log_pairwise_density(model: BrownResnickModel, i: int, k: int, z1, z2):
    return hr_log_pairwise_density(dependence_param(model, i, k), z1, z2)


class _SamplerState:
    """Cholesky factor and semivariogram for one set of sample sites.

    Coincident sites are collapsed before factorization and re-expanded
    afterwards, so duplicates come out exactly equal rather than jittered.
    """

    def __init__(self, model: BrownResnickModel, points: np.ndarray):
        coords = model.space.coordinates[points]
        unique, inverse = np.unique(coords, axis=0, return_inverse=True)
        diff = unique[:, None, :] - unique[None, :, :]
        corr = rbf_correlation(diff, model.tau)
        self.gamma = 1.0 - corr  # semivariogram of the unit-variance field
        self.inverse = inverse
        self.n_unique = unique.shape[0]
        self.chol = None
        for jitter in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
            try:
                self.chol = cholesky(corr + jitter * np.eye(self.n_unique), lower=True)
                break
            except np.linalg.LinAlgError:
                continue
        if self.chol is None:
            raise NumericalError("correlation matrix of the sample sites is not factorizable")

    def spectral_function(self, anchor: int, rng: np.random.Generator) -> np.ndarray:
        """Log-Gaussian field normalized to 1 at the anchor, unit mean everywhere."""
        g = self.chol @ rng.standard_normal(self.n_unique)
        return np.exp(g - g[anchor] - self.gamma[:, anchor])

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One exact max-stable draw via extremal functions."""
        z = np.zeros(self.n_unique)
        for j in range(self.n_unique):
            zeta = rng.exponential()
            iterations = 0
            while 1.0 / zeta > z[j]:
                iterations += 1
                if iterations > MAX_SPECTRAL_ITERATIONS:
                    raise NumericalError(
                        f"exact sampler exceeded {MAX_SPECTRAL_ITERATIONS} "
                        f"spectral draws at site {j}"
                    )
                candidate = self.spectral_function(j, rng) / zeta
                # keep only functions that were not already extremal earlier
                if j == 0 or np.all(candidate[:j] < z[:j]):
                    np.maximum(z, candidate, out=z)
                zeta += rng.exponential()
        return z[self.inverse]


def _resolve_points(model: BrownResnickModel, points) -> np.ndarray:
    if points is None:
        return np.arange(model.space.n_points)
    points = np.asarray(points, dtype=int)
    if points.ndim != 1 or points.size == 0:
        raise DataValidationError("points must be a nonempty 1-D index list")
    if points.min() < 0 or points.max() >= model.space.n_points:
        raise DataValidationError("point index out of range")
    return points


def sample_exact(model: BrownResnickModel, points=None, seed: int = 0) -> np.ndarray:
    """One exact draw of the process at the given point indices.

    Margins are standard Frechet; pairwise dependence matches the
    analytic extremal coefficients. Defaults to all points of the space.
    """
    points = _resolve_points(model, points)
    state = _SamplerState(model, points)
    return state.draw(derived_rng(seed, "br-draw", 0))


def sample_many(model: BrownResnickModel, n_samples: int, seed: int = 0,
                points=None, threads: int | None = 1) -> np.ndarray:
    """n independent exact draws, reproducible per (seed, draw index).

    Each draw uses its own derived RNG stream, so the result does not
    depend on scheduling when drawn in parallel.
    """
    if n_samples < 1:
        raise DataValidationError("n_samples must be >= 1")
    points = _resolve_points(model, points)
    state = _SamplerState(model, points)

    def one(i: int) -> np.ndarray:
        return state.draw(derived_rng(seed, "br-draw", i))

    return np.array(parallel_map(one, range(n_samples), threads=threads))
