"""Synthetic data generation with known ground truth.

Covers the length-scale recovery study (unit-Frechet max-stable draws
at random planar points), a fuselage-like production dataset on a ring
of critical points, and maximin Latin hypercube designs. The fuselage
law is built from max-stability: raw replicates are exact max-stable
draws pushed through per-point GEV transforms, so block maxima of any
block size again follow known GEV margins and the same dependence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .brownresnick import BrownResnickModel, sample_many
from .errors import DataValidationError
from .gev import GevParams
from .marginal import DesignMatrix
from .space import CriticalPointSpace, circle_points
from .util import derived_rng


def maximin_lhd(n_points: int, n_dims: int, bounds=None, seed: int = 0,
                candidates: int = 50) -> DesignMatrix:
    """Best-of-candidates Latin hypercube by minimum pairwise distance.

    Every candidate is a proper Latin hypercube (one point per axis
    stratum, uniform within the cell); the one with the largest minimum
    pairwise distance on the unit cube wins, then gets scaled to bounds.
    """
    if n_points < 2 or n_dims < 1:
        raise DataValidationError("need n_points >= 2 and n_dims >= 1")
    if candidates < 1:
        raise DataValidationError("need at least one candidate")
    if bounds is None:
        bounds = np.tile([0.0, 1.0], (n_dims, 1))
    elif np.ndim(bounds) == 1:
        bounds = np.tile(np.asarray(bounds, dtype=float), (n_dims, 1))
    else:
        bounds = np.asarray(bounds, dtype=float)
    rng = derived_rng(seed, "maximin-lhd")
    best, best_score = None, -np.inf
    for _ in range(candidates):
        cells = np.column_stack([rng.permutation(n_points) for _ in range(n_dims)])
        unit = (cells + rng.uniform(size=(n_points, n_dims))) / n_points
        diff = unit[:, None, :] - unit[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        score = dist[np.triu_indices(n_points, k=1)].min()
        if score > best_score:
            best, best_score = unit, score
    values = bounds[:, 0] + best * (bounds[:, 1] - bounds[:, 0])
    return DesignMatrix(values=values, bounds=bounds)


def gen_simulation_study(n_points: int = 20, n_blocks: int = 20,
                         tau=(0.5, 0.02), seed: int = 0,
                         domain=((0.0, 1.0), (0.0, 1.0))
                         ) -> tuple[CriticalPointSpace, np.ndarray]:
    """Unit-Frechet max-stable draws at random points in a planar box.

    Defaults match the recovery study: 20 points on the unit square,
    20 replicates, length scales (0.5, 0.02). Margins need no further
    modeling, so no design matrix is involved.
    """
    domain = np.asarray(domain, dtype=float)
    rng = derived_rng(seed, "simstudy-points")
    coords = rng.uniform(domain[:, 0], domain[:, 1], size=(n_points, 2))
    space = CriticalPointSpace(coordinates=coords, metric="euclidean")
    model = BrownResnickModel(tau=np.asarray(tau, dtype=float), space=space)
    data = sample_many(model, n_blocks, seed=int(derived_rng(seed, "simstudy-data")
                                                 .integers(2**31)))
    return space, data


@dataclass(frozen=True)
class FuselageTruth:
    """Generating law of the synthetic production dataset.

    Raw observations at control input s follow GEV margins whose
    location and log scale are exactly linear in s with coefficients
    that vary smoothly around the ring; dependence across the ring is
    max-stable with the stated length scales. Block maxima of size T
    are then GEV with the closed-form parameter map below.
    """

    tau: np.ndarray
    shape: float
    loc_intercept: np.ndarray
    loc_coef: np.ndarray
    log_scale_intercept: np.ndarray
    log_scale_coef: np.ndarray

    def raw_params(self, s, j: int) -> GevParams:
        s = np.asarray(s, dtype=float)
        loc = float(self.loc_intercept[j] + self.loc_coef[j] @ s)
        scale = math.exp(float(self.log_scale_intercept[j] + self.log_scale_coef[j] @ s))
        return GevParams(self.shape, loc, scale)

    def block_params(self, s, j: int, block_size: int) -> GevParams:
        """Law of the maximum of block_size raw replicates (max-stability)."""
        raw = self.raw_params(s, j)
        xi = raw.shape
        if abs(xi) < 1e-12:
            return GevParams(0.0, raw.loc + raw.scale * math.log(block_size), raw.scale)
        factor = block_size**xi
        return GevParams(xi, raw.loc + raw.scale * (factor - 1.0) / xi, raw.scale * factor)


@dataclass(frozen=True)
class SyntheticFuselage:
    designs: DesignMatrix
    observations: np.ndarray
    space: CriticalPointSpace
    truth: FuselageTruth


def _fuselage_truth(n_points: int, n_dims: int, tau, shape: float) -> FuselageTruth:
    angles = 2.0 * math.pi * np.arange(n_points) / n_points
    loc_coef = np.zeros((n_points, n_dims))
    log_scale_coef = np.zeros((n_points, n_dims))
    # only the first two control dimensions act on the response fields;
    # magnitudes keep the variation O(1) over a +-200 input box
    loc_coef[:, 0] = 0.010 * np.cos(angles)
    loc_coef[:, 1] = 0.008 * np.sin(angles)
    log_scale_coef[:, 0] = 0.0008 * np.sin(angles)
    log_scale_coef[:, 1] = 0.0006 * np.cos(angles)
    return FuselageTruth(
        tau=np.asarray(tau, dtype=float),
        shape=shape,
        loc_intercept=40.0 + 6.0 * np.sin(angles),
        loc_coef=loc_coef,
        log_scale_intercept=math.log(3.0) + 0.3 * np.cos(angles),
        log_scale_coef=log_scale_coef,
    )


def gen_synthetic_fuselage(n_designs: int = 30, n_replicates: int = 500,
                           n_points: int = 128, n_dims: int = 20,
                           bounds=(-200.0, 200.0), tau=(10.0, 11.0),
                           shape: float = 0.1, seed: int = 0,
                           threads: int | None = 1) -> SyntheticFuselage:
    """Raw production-like dataset on a ring of critical points.

    Designs come from a maximin Latin hypercube over the control box;
    each replicate is an exact max-stable draw on the ring pushed
    through the per-point GEV transform of the truth. The ring is
    normalized so adjacent points sit at arc distance 1.
    """
    designs = maximin_lhd(n_designs, n_dims, bounds=bounds,
                          seed=int(derived_rng(seed, "fuselage-designs").integers(2**31)))
    space = circle_points(n_points)
    truth = _fuselage_truth(n_points, n_dims, tau, shape)
    model = BrownResnickModel(tau=truth.tau, space=space)

    S = designs.values
    loc = truth.loc_intercept[None, :] + S @ truth.loc_coef.T          # (N, J)
    scale = np.exp(truth.log_scale_intercept[None, :] + S @ truth.log_scale_coef.T)

    observations = np.empty((n_designs, n_replicates, n_points))
    for n in range(n_designs):
        z = sample_many(model, n_replicates,
                        seed=int(derived_rng(seed, "fuselage-draws", n).integers(2**31)),
                        threads=threads)
        # from_unit_frechet, vectorized over (replicate, point)
        observations[n] = loc[n] + scale[n] * np.expm1(truth.shape * np.log(z)) / truth.shape
    return SyntheticFuselage(designs=designs, observations=observations,
                             space=space, truth=truth)
