"""Empirical extremal-dependence diagnostics.

Tail-dependence coefficient estimates at finite thresholds, the
F-madogram over distance bins, and a flatness check of the dependence
structure across the control space (the modeling assumption that lets
observations at different control inputs pool as extra replications).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .brownresnick import BrownResnickModel, exponent_measure_2
from .errors import DataValidationError
from .space import CriticalPointSpace, pairwise_distances
from .util import derived_rng

DEFAULT_THRESHOLDS = (0.9, 0.95, 0.98)
DEFAULT_N_BINS = 10
DEFAULT_BOOTSTRAP = 500


@dataclass(frozen=True)
class DependenceEstimate:
    """One dependence estimate with its bootstrap confidence interval."""

    estimate: float
    ci_low: float
    ci_high: float
    ci_level: float
    n: int
    threshold: float | None = None
    bin_low: float | None = None
    bin_high: float | None = None
    n_pairs: int | None = None

    def __post_init__(self):
        if self.n <= 0:
            raise DataValidationError("sample count must be positive")
        # percentile intervals can just miss the point estimate; keep it inside
        object.__setattr__(self, "ci_low", min(self.ci_low, self.estimate))
        object.__setattr__(self, "ci_high", max(self.ci_high, self.estimate))

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low


def _percentile_ci(values: np.ndarray, level: float) -> tuple[float, float]:
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(values, alpha)), float(np.quantile(values, 1.0 - alpha))


def chi_empirical(z_i, z_k, threshold: float, n_bootstrap: int = DEFAULT_BOOTSTRAP,
                  ci_level: float = 0.95, seed: int = 0) -> DependenceEstimate:
    """Empirical tail-dependence coefficient at a finite threshold.

    Uses rank/(n+1) probability transforms of each margin and estimates
    P(both exceed | second exceeds). Resamples pairs for the interval.
    """
    z_i = np.asarray(z_i, dtype=float)
    z_k = np.asarray(z_k, dtype=float)
    if z_i.shape != z_k.shape or z_i.ndim != 1:
        raise DataValidationError("paired samples of equal length required")
    n = z_i.size
    if n < 50:
        raise DataValidationError(f"need at least 50 pairs, got {n}")
    if not (0.5 < threshold < 1.0):
        raise DataValidationError(f"threshold must lie in (0.5, 1), got {threshold}")

    def estimate(xi: np.ndarray, xk: np.ndarray) -> float:
        u_i = rankdata(xi) / (xi.size + 1)
        u_k = rankdata(xk) / (xk.size + 1)
        exceed_k = u_k > threshold
        denom = int(exceed_k.sum())
        if denom == 0:
            raise DataValidationError(
                f"no exceedances of threshold {threshold} among {xk.size} samples"
            )
        return float(np.sum((u_i > threshold) & exceed_k) / denom)

    chi = estimate(z_i, z_k)
    if n_bootstrap > 0:
        rng = derived_rng(seed, "chi-bootstrap")
        reps = np.empty(n_bootstrap)
        for r in range(n_bootstrap):
            idx = rng.integers(0, n, n)
            try:
                reps[r] = estimate(z_i[idx], z_k[idx])
            except DataValidationError:
                reps[r] = np.nan
        reps = reps[np.isfinite(reps)]
        lo, hi = _percentile_ci(reps, ci_level) if reps.size else (chi, chi)
    else:
        lo, hi = chi, chi
    return DependenceEstimate(estimate=chi, ci_low=lo, ci_high=hi, ci_level=ci_level,
                              n=n, threshold=threshold)


def chi_model(model: BrownResnickModel, i: int, k: int) -> float:
    """Model-implied tail dependence: 2 - V(1, 1), in [0, 1]."""
    return 2.0 - float(exponent_measure_2(model, i, k, 1.0, 1.0))


def _frechet_cdf(z: np.ndarray) -> np.ndarray:
    return np.exp(-1.0 / z)


def f_madogram(samples, space: CriticalPointSpace, bins=None,
               n_bins: int = DEFAULT_N_BINS, n_bootstrap: int = DEFAULT_BOOTSTRAP,
               ci_level: float = 0.95, seed: int = 0) -> list[DependenceEstimate]:
    """F-madogram of standard-Frechet samples, binned by point distance.

    For each unordered point pair the statistic is half the mean absolute
    difference of the probability-transformed values; pairs are grouped
    into distance bins (equal-count deciles of the pair distances by
    default). Bootstrap resamples whole blocks, preserving the
    cross-point dependence within a block. Empty bins are omitted.
    """
    Z = np.asarray(samples, dtype=float)
    if Z.ndim != 2:
        raise DataValidationError("samples must be a blocks x points matrix")
    B, J = Z.shape
    if B < 20:
        raise DataValidationError(f"need at least 20 blocks, got {B}")
    if np.any(Z <= 0):
        raise DataValidationError("samples must be positive (standard-Frechet margins)")
    if space.n_points != J:
        raise DataValidationError("sample columns do not match the point space")

    dist = pairwise_distances(space)
    ii, jj = np.triu_indices(J, k=1)
    pair_dist = dist[ii, jj]
    F = _frechet_cdf(Z)
    # per-block half absolute difference per pair; bootstrap only reweights rows
    diffs = 0.5 * np.abs(F[:, ii] - F[:, jj])

    if bins is None:
        qs = np.quantile(pair_dist, np.linspace(0.0, 1.0, n_bins + 1))
        bins = np.unique(qs)
        if bins.size == 1:  # all pairs at one distance: a single point bin
            bins = np.array([bins[0], bins[0]])
    bins = np.asarray(bins, dtype=float)
    if bins.size < 2:
        raise DataValidationError("need at least one distance bin")

    rng = derived_rng(seed, "madogram-bootstrap")
    boot_idx = (rng.integers(0, B, (n_bootstrap, B)) if n_bootstrap > 0 else None)

    out = []
    for b in range(bins.size - 1):
        lo_edge, hi_edge = bins[b], bins[b + 1]
        last = b == bins.size - 2
        in_bin = (pair_dist >= lo_edge) & (pair_dist <= hi_edge if last else pair_dist < hi_edge)
        if not np.any(in_bin):
            continue
        block_means = diffs[:, in_bin].mean(axis=1)
        est = float(block_means.mean())
        if boot_idx is not None:
            reps = block_means[boot_idx].mean(axis=1)
            lo, hi = _percentile_ci(reps, ci_level)
        else:
            lo, hi = est, est
        out.append(DependenceEstimate(estimate=est, ci_low=lo, ci_high=hi,
                                      ci_level=ci_level, n=B, bin_low=float(lo_edge),
                                      bin_high=float(hi_edge), n_pairs=int(in_bin.sum())))
    return out


@dataclass(frozen=True)
class InvarianceReport:
    """Spread of dependence curves across control-input groups.

    ``bin_spread[b]`` is the max-min range of the group estimates in
    curve bin b; the flat flag holds when every spread fits inside the
    pooled (mean) confidence-interval width of that bin. When control
    coordinates are supplied, ``design_distance_spread`` additionally
    bins group pairs by control-space distance and reports the largest
    estimate gap per bin, averaged over curve bins.
    """

    bin_spread: np.ndarray
    pooled_ci_width: np.ndarray
    flat: bool
    design_distance_edges: np.ndarray | None = None
    design_distance_spread: np.ndarray | None = None

    @property
    def max_spread(self) -> float:
        return float(np.max(self.bin_spread)) if self.bin_spread.size else 0.0


def input_invariance_check(curves, design_points=None,
                           n_design_bins: int = 5) -> InvarianceReport:
    """Compare dependence curves measured at different control inputs.

    Args:
        curves: one dependence curve (sequence of DependenceEstimate over
            shared bins) per control-input group.
        design_points: optional control coordinates of the groups, used to
            relate curve gaps to control-space distance.

    Returns:
        InvarianceReport with the per-bin spread and flat-line flag.
    """
    curves = [list(c) for c in curves]
    if len(curves) < 2:
        raise DataValidationError("need curves from at least two control-input groups")
    n_bins = len(curves[0])
    if any(len(c) != n_bins for c in curves) or n_bins == 0:
        raise DataValidationError("all curves must share the same nonempty bin structure")

    est = np.array([[e.estimate for e in curve] for curve in curves])
    width = np.array([[e.ci_width for e in curve] for curve in curves])
    bin_spread = est.max(axis=0) - est.min(axis=0)
    pooled_width = width.mean(axis=0)
    flat = bool(np.all(bin_spread <= pooled_width + 1e-15))

    edges = spread_by_distance = None
    if design_points is not None:
        pts = np.asarray(design_points, dtype=float)
        if pts.shape[0] != len(curves):
            raise DataValidationError("one design point per curve required")
        gi, gj = np.triu_indices(len(curves), k=1)
        gap = np.abs(est[gi] - est[gj]).mean(axis=1)  # mean over curve bins
        d = np.linalg.norm(pts[gi] - pts[gj], axis=1)
        edges = np.unique(np.quantile(d, np.linspace(0, 1, n_design_bins + 1)))
        spread_by_distance = np.full(max(edges.size - 1, 0), np.nan)
        for b in range(edges.size - 1):
            last = b == edges.size - 2
            sel = (d >= edges[b]) & (d <= edges[b + 1] if last else d < edges[b + 1])
            if np.any(sel):
                spread_by_distance[b] = gap[sel].max()

    return InvarianceReport(bin_spread=bin_spread, pooled_ci_width=pooled_width, flat=flat,
                            design_distance_edges=edges,
                            design_distance_spread=spread_by_distance)
