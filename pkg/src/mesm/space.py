"""Metric space of critical points and the clique graph built on it.

A space is defined either by planar coordinates with a named metric
(euclidean, or arc length along an origin-centered circle) or by a full
precomputed distance matrix. The clique graph keeps the H-subsets with
the smallest average pairwise distance and backs the truncated composite
likelihood.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError

METRICS = ("euclidean", "circle-arc")

MAX_ENUMERABLE_CLIQUES = 10**7

_MATRIX_TOL = 1e-9


def _validate_distance_matrix(dist: np.ndarray) -> None:
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise DataValidationError(f"distance matrix must be square, got shape {dist.shape}")
    if not np.all(np.isfinite(dist)):
        raise DataValidationError("distance matrix contains non-finite entries")
    if np.max(np.abs(dist - dist.T)) > _MATRIX_TOL:
        raise DataValidationError("distance matrix is not symmetric")
    if np.max(np.abs(np.diag(dist))) > _MATRIX_TOL:
        raise DataValidationError("distance matrix diagonal must be zero")
    off = dist[~np.eye(dist.shape[0], dtype=bool)]
    if off.size and off.min() <= 0:
        raise DataValidationError("off-diagonal distances must be strictly positive")
    # triangle inequality, checked one pivot at a time to bound memory
    for k in range(dist.shape[0]):
        slack = dist - (dist[:, [k]] + dist[[k], :])
        if slack.max() > _MATRIX_TOL:
            i, j = np.unravel_index(np.argmax(slack), slack.shape)
            raise DataValidationError(
                f"triangle inequality violated: d({i},{j}) > d({i},{k}) + d({k},{j})"
            )


@dataclass(frozen=True)
class CriticalPointSpace:
    """J measurement locations with a metric between them.

    Either ``coordinates`` (J x 2) plus ``metric`` or an explicit
    ``distances`` matrix must be given. Coordinate-based spaces support
    the dependence model; matrix-only spaces support graph construction.
    """

    coordinates: np.ndarray | None = None
    metric: str = "euclidean"
    distances: np.ndarray | None = None

    def __post_init__(self):
        if self.coordinates is None and self.distances is None:
            raise DataValidationError("a space needs coordinates or a distance matrix")
        if self.coordinates is not None:
            coords = np.asarray(self.coordinates, dtype=float)
            if coords.ndim != 2 or coords.shape[1] != 2:
                raise DataValidationError(f"coordinates must be J x 2, got {coords.shape}")
            if not np.all(np.isfinite(coords)):
                raise DataValidationError("coordinates contain non-finite values")
            if self.metric not in METRICS:
                raise DataValidationError(f"unknown metric {self.metric!r}; use one of {METRICS}")
            if self.metric == "circle-arc":
                radii = np.hypot(coords[:, 0], coords[:, 1])
                if radii.min() <= 0 or np.ptp(radii) > 1e-6 * max(radii.max(), 1.0):
                    raise DataValidationError(
                        "circle-arc metric requires points on a common origin-centered circle"
                    )
            object.__setattr__(self, "coordinates", coords)
        if self.distances is not None:
            dist = np.asarray(self.distances, dtype=float)
            _validate_distance_matrix(dist)
            if self.coordinates is not None and dist.shape[0] != self.coordinates.shape[0]:
                raise DataValidationError("distance matrix size does not match coordinates")
            object.__setattr__(self, "distances", dist)

    @property
    def n_points(self) -> int:
        if self.coordinates is not None:
            return self.coordinates.shape[0]
        return self.distances.shape[0]

    @property
    def has_coordinates(self) -> bool:
        return self.coordinates is not None


def circle_points(n_points: int, circumference: float | None = None) -> CriticalPointSpace:
    """Equispaced points on an origin-centered circle with arc metric.

    By default the circumference equals ``n_points`` so that adjacent
    points sit at arc distance 1.
    """
    if circumference is None:
        circumference = float(n_points)
    radius = circumference / (2 * math.pi)
    angles = 2 * math.pi * np.arange(n_points) / n_points
    coords = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return CriticalPointSpace(coordinates=coords, metric="circle-arc")


def pairwise_distances(space: CriticalPointSpace) -> np.ndarray:
    """Full symmetric distance matrix of the space."""
    if space.distances is not None:
        return np.array(space.distances)
    coords = space.coordinates
    if space.metric == "euclidean":
        diff = coords[:, None, :] - coords[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))
    # circle-arc: radius * wrapped angular separation
    radius = float(np.hypot(coords[0, 0], coords[0, 1]))
    angles = np.arctan2(coords[:, 1], coords[:, 0])
    gap = np.abs(angles[:, None] - angles[None, :])
    gap = np.minimum(gap, 2 * math.pi - gap)
    return radius * gap


@dataclass(frozen=True)
class CliqueGraph:
    """Cliques of ``order`` points kept for the truncated likelihood.

    ``cliques`` is an (n_cliques, order) index array sorted by
    (average distance, lexicographic order); ``deltas`` holds the
    matching average within-clique distances.
    """

    order: int
    cliques: np.ndarray
    deltas: np.ndarray
    quantile: float
    n_points: int = field(default=0)

    def __post_init__(self):
        cliques = np.asarray(self.cliques, dtype=int)
        deltas = np.asarray(self.deltas, dtype=float)
        if cliques.ndim != 2 or cliques.shape[1] != self.order:
            raise DataValidationError("cliques must be an (n, order) index array")
        if cliques.shape[0] == 0:
            raise DataValidationError("a clique graph must contain at least one clique")
        if cliques.shape[0] != deltas.size:
            raise DataValidationError("one average distance per clique required")
        object.__setattr__(self, "cliques", cliques)
        object.__setattr__(self, "deltas", deltas)

    def __len__(self) -> int:
        return self.cliques.shape[0]


def clique_average_distance(space: CriticalPointSpace, members) -> float:
    """Mean pairwise distance over the C(H,2) unordered pairs of a clique."""
    members = tuple(int(m) for m in members)
    if len(members) < 2:
        raise DataValidationError("a clique needs at least two members")
    if len(set(members)) != len(members):
        raise DataValidationError(f"repeated index in clique {members}")
    dist = pairwise_distances(space)
    total = sum(dist[i, j] for i, j in itertools.combinations(members, 2))
    return total / math.comb(len(members), 2)


def generate_graph(space: CriticalPointSpace, order: int, quantile: float) -> CliqueGraph:
    """Keep the floor(quantile * C(J, order)) cliques of smallest average distance.

    Ties in average distance break lexicographically on the member
    indices, so the result is deterministic. At least one clique is
    always kept; quantile 1 keeps the full enumeration.
    """
    if order < 2:
        raise DataValidationError(f"clique order must be >= 2, got {order}")
    if not (0 < quantile <= 1):
        raise DataValidationError(f"graph quantile must lie in (0, 1], got {quantile}")
    J = space.n_points
    if order > J:
        raise DataValidationError(f"clique order {order} exceeds point count {J}")
    total = math.comb(J, order)
    if total > MAX_ENUMERABLE_CLIQUES:
        raise DataValidationError(
            f"C({J},{order}) = {total} cliques exceed the enumeration guard "
            f"({MAX_ENUMERABLE_CLIQUES}); pre-filter with a distance cutoff"
        )
    dist = pairwise_distances(space)

    if order == 2:
        ii, jj = np.triu_indices(J, k=1)
        cliques = np.column_stack([ii, jj])
        deltas = dist[ii, jj]
    else:
        cliques = np.array(list(itertools.combinations(range(J), order)), dtype=int)
        pair_cols = list(itertools.combinations(range(order), 2))
        deltas = np.zeros(cliques.shape[0])
        for a, b in pair_cols:
            deltas += dist[cliques[:, a], cliques[:, b]]
        deltas /= len(pair_cols)

    # stable sort on lexicographic member order first, then by delta
    lex = np.lexsort(cliques.T[::-1])
    cliques, deltas = cliques[lex], deltas[lex]
    by_delta = np.argsort(deltas, kind="stable")
    cliques, deltas = cliques[by_delta], deltas[by_delta]

    keep = max(1, int(math.floor(quantile * total)))
    return CliqueGraph(order=order, cliques=cliques[:keep], deltas=deltas[:keep],
                       quantile=quantile, n_points=J)
