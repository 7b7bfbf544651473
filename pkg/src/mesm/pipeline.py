"""End-to-end model: fit, sample, return levels, exceedance estimates.

Fitting runs the two-step procedure: block maxima and per-cell GEV fits
feed the marginal parameter surfaces; the same per-cell fits transform
the maxima onto the standard Frechet scale, where the dependence length
scales are estimated by the graph-truncated composite likelihood. A
fitted model serializes to a single versioned JSON document.
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .brownresnick import BrownResnickModel, sample_many
from .dependence import f_madogram
from .errors import DataValidationError, NumericalError
from .gev import (XI_ZERO, BlockMaximaConfig, GevParams, from_unit_frechet, gev_cdf,
                  to_unit_frechet)
from .likelihood import DEFAULT_TAU_BOUNDS, DEFAULT_TERM_FLOOR, fit_tau
from .marginal import (DesignMatrix, ExtremeDataset, GpHyperparams, MarginalField,
                       ParameterSurface, fit_marginal_field, predict_marginals)
from .space import CliqueGraph, CriticalPointSpace, generate_graph


@contextmanager
def _stage_errors(stage: str):
    """Prefix module errors with the pipeline stage that raised them."""
    try:
        yield
    except NumericalError as exc:
        raise NumericalError(f"[stage: {stage}] {exc}", best=exc.best) from exc
    except DataValidationError as exc:
        raise DataValidationError(f"[stage: {stage}] {exc}") from exc

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ToleranceSpec:
    """Per-critical-point acceptability thresholds, in response units."""

    thresholds: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float)
        if t.ndim != 1 or not np.all(np.isfinite(t)):
            raise DataValidationError("thresholds must be a finite 1-D vector")
        object.__setattr__(self, "thresholds", t)


@dataclass
class FittedMesm:
    """Marginal surfaces plus dependence model, ready for prediction."""

    field: MarginalField
    dependence: BrownResnickModel
    space: CriticalPointSpace
    graph: CliqueGraph
    block: BlockMaximaConfig
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.field.n_points == self.space.n_points == self.graph.n_points):
            raise DataValidationError("marginal field, space, and graph disagree on J")

    @property
    def n_points(self) -> int:
        return self.space.n_points


def _extract_block_maxima(observations: np.ndarray, block_size: int) -> np.ndarray:
    N, L, J = observations.shape
    return np.stack(
        [observations[:, i : i + block_size, :].max(axis=1)
         for i in range(0, L, block_size)],
        axis=1,
    )


def fit_mesm(designs: DesignMatrix, observations, space: CriticalPointSpace,
             block_size: int, order: int = 2, graph_quantile: float = 0.02,
             tau_bounds: tuple[float, float] = DEFAULT_TAU_BOUNDS,
             tau_restarts: int = 3, gp_restarts: int = 5,
             term_floor: float = DEFAULT_TERM_FLOOR,
             seed: int = 0, threads: int | None = 1,
             diagnostics_bootstrap: int = 200) -> FittedMesm:
    """Fit the full model from raw replicated observations.

    Args:
        designs: control inputs, one row per design point.
        observations: array (design point, replicate, critical point).
        space: critical-point metric space (coordinates required).
        block_size: replicates per block for the maxima extraction.
        order: clique order of the dependence graph (2 for fitting).
        graph_quantile: fraction of closest cliques kept.

    Raises:
        DataValidationError / NumericalError with the failing stage named.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 3:
        raise DataValidationError("observations must be (designs, replicates, points)")
    N, L, J = obs.shape
    if N != designs.n_points:
        raise DataValidationError("observations first axis must match the design matrix")
    if J != space.n_points:
        raise DataValidationError("observations last axis must match the point space")
    if L < block_size:
        raise DataValidationError(f"need at least one full block: {L} replicates < "
                                  f"block size {block_size}")
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    maxima = _extract_block_maxima(obs, block_size)
    extremes = ExtremeDataset(maxima=maxima, designs=designs)
    timings["block_maxima"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage_errors("marginal fit"):
        field_ = fit_marginal_field(designs, extremes, restarts=gp_restarts,
                                    seed=seed, threads=threads)
    timings["marginal_fit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    B = maxima.shape[1]
    frechet = np.empty_like(maxima)
    for n in range(N):
        for j in range(J):
            frechet[n, :, j] = to_unit_frechet(field_.cell_params(n, j), maxima[n, :, j])
    pooled = frechet.reshape(N * B, J)
    timings["frechet_transform"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    graph = generate_graph(space, order=order, quantile=graph_quantile)
    timings["graph"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage_errors("dependence fit"):
        tau_fit = fit_tau(pooled, space, graph, bounds=tau_bounds,
                          restarts=tau_restarts, seed=seed, term_floor=term_floor)
    timings["dependence_fit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    curve = f_madogram(pooled, space, n_bootstrap=diagnostics_bootstrap,
                       seed=seed)
    timings["diagnostics"] = time.perf_counter() - t0

    diagnostics = {
        "timings_seconds": timings,
        "n_blocks_per_design": int(B),
        "n_pooled_blocks": int(N * B),
        "tau": [float(v) for v in tau_fit.model.tau],
        "tau_loglik": tau_fit.loglik,
        "tau_converged": tau_fit.converged,
        "tau_diagnostics": tau_fit.diagnostics,
        "madogram": [
            {"bin_low": e.bin_low, "bin_high": e.bin_high, "estimate": e.estimate,
             "ci_low": e.ci_low, "ci_high": e.ci_high, "n_pairs": e.n_pairs}
            for e in curve
        ],
    }
    return FittedMesm(field=field_, dependence=tau_fit.model, space=space,
                      graph=graph, block=BlockMaximaConfig(block_size),
                      diagnostics=diagnostics)


def sample_extremes(model: FittedMesm, s, n_samples: int, seed: int = 0,
                    threads: int | None = 1) -> np.ndarray:
    """Joint extreme scenarios at a control input, in response units.

    Draws from the dependence model and pushes each coordinate through
    the inverse probability transform of its predicted marginal.
    """
    params = predict_marginals(model.field, s)
    z = sample_many(model.dependence, n_samples, seed=seed, threads=threads)
    out = np.empty_like(z)
    for j, p in enumerate(params):
        out[:, j] = from_unit_frechet(p, z[:, j])
    return out


def return_level_from_params(params: GevParams, return_period: float) -> float:
    """Level exceeded once per return_period blocks on average.

    Any real period above 1 is valid (the tail probability 1/R must lie
    in (0, 1)); whole numbers are the usual reading.
    """
    if return_period <= 1:
        raise DataValidationError(f"return period must exceed 1, got {return_period}")
    p = 1.0 - 1.0 / return_period
    if abs(params.shape) < XI_ZERO:
        return params.loc - params.scale * math.log(-math.log(p))
    return params.loc + params.scale / params.shape * (
        (-math.log(p)) ** (-params.shape) - 1.0)


def return_level(model: FittedMesm, s, j: int, return_period: int) -> float:
    if not (0 <= j < model.n_points):
        raise DataValidationError(f"critical point index {j} out of range")
    params = predict_marginals(model.field, s)[j]
    return return_level_from_params(params, return_period)


@dataclass(frozen=True)
class ReturnLevelScan:
    """Return levels over a set of control inputs, with the worst point."""

    points: np.ndarray
    levels: np.ndarray
    argmax_point: np.ndarray
    max_level: np.ndarray

    def rows(self):
        for i in range(self.points.shape[0]):
            yield i, int(self.argmax_point[i]), float(self.max_level[i])


def return_level_scan(model: FittedMesm, scan_points, return_period: int = 100
                      ) -> ReturnLevelScan:
    """Per-input maximum return level across critical points."""
    pts = np.atleast_2d(np.asarray(scan_points, dtype=float))
    levels = np.empty((pts.shape[0], model.n_points))
    for i, s in enumerate(pts):
        for j, p in enumerate(predict_marginals(model.field, s)):
            levels[i, j] = return_level_from_params(p, return_period)
    return ReturnLevelScan(points=pts, levels=levels,
                           argmax_point=levels.argmax(axis=1),
                           max_level=levels.max(axis=1))


@dataclass(frozen=True)
class ExceedanceEstimate:
    """Monte Carlo and closed-form tolerance exceedance probabilities."""

    marginal_mc: np.ndarray
    marginal_exact: np.ndarray
    joint_any: float
    n_samples: int


def exceedance_probability(model: FittedMesm, s, tolerances: ToleranceSpec,
                           n_samples: int = 10000, seed: int = 0,
                           threads: int | None = 1) -> ExceedanceEstimate:
    """P(output >= threshold) per point plus the joint any-exceedance rate.

    Marginals also come in closed form from the predicted GEV; the joint
    probability relies on sampling since only pairs have closed forms.
    """
    kappa = tolerances.thresholds
    if kappa.size != model.n_points:
        raise DataValidationError("one threshold per critical point required")
    params = predict_marginals(model.field, s)
    exact = np.array([1.0 - gev_cdf(p, float(k)) for p, k in zip(params, kappa)])
    draws = sample_extremes(model, s, n_samples, seed=seed, threads=threads)
    exceed = draws >= kappa
    return ExceedanceEstimate(
        marginal_mc=exceed.mean(axis=0),
        marginal_exact=exact,
        joint_any=float(exceed.any(axis=1).mean()),
        n_samples=n_samples,
    )


# --- serialization ---------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _surface_to_dict(s: ParameterSurface) -> dict:
    return {
        "x_train": s.x_train.tolist(),
        "targets": s.targets.tolist(),
        "signal_scale": s.hyperparams.signal_scale,
        "length_scales": s.hyperparams.length_scales.tolist(),
        "nugget": s.hyperparams.nugget,
        "trend_coef": s.trend_coef.tolist(),
        "intercept": s.intercept,
        "fixed_noise": None if s.fixed_noise is None else s.fixed_noise.tolist(),
        "converged": bool(s.converged),
        "log_marginal_likelihood": float(s.log_marginal_likelihood),
    }


def _surface_from_dict(d: dict) -> ParameterSurface:
    return ParameterSurface(
        x_train=np.array(d["x_train"], dtype=float),
        targets=np.array(d["targets"], dtype=float),
        hyperparams=GpHyperparams(d["signal_scale"],
                                  np.array(d["length_scales"], dtype=float),
                                  d["nugget"]),
        trend_coef=np.array(d["trend_coef"], dtype=float),
        intercept=float(d["intercept"]),
        fixed_noise=None if d["fixed_noise"] is None
        else np.array(d["fixed_noise"], dtype=float),
        converged=bool(d["converged"]),
        log_marginal_likelihood=float(d["log_marginal_likelihood"]),
    )


_VOLATILE_DIAGNOSTIC_KEYS = {"timings_seconds", "seconds"}


def _strip_volatile(obj):
    """Drop wall-clock entries so the document is run-to-run identical."""
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in obj.items()
                if k not in _VOLATILE_DIAGNOSTIC_KEYS}
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    return obj


def model_to_dict(model: FittedMesm) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "space": {
            "coordinates": None if model.space.coordinates is None
            else model.space.coordinates.tolist(),
            "metric": model.space.metric,
            "distances": None if model.space.distances is None
            else model.space.distances.tolist(),
        },
        "block_size": model.block.block_size,
        "tau": model.dependence.tau.tolist(),
        "graph": {
            "order": model.graph.order,
            "quantile": model.graph.quantile,
            "n_points": model.graph.n_points,
            "cliques": model.graph.cliques.tolist(),
            "deltas": model.graph.deltas.tolist(),
        },
        "marginal_field": {
            "bounds": model.field.bounds.tolist(),
            "mle_params": model.field.mle_params.tolist(),
            "surfaces": [
                {"shape": _surface_to_dict(model.field.shape_surfaces[j]),
                 "loc": _surface_to_dict(model.field.loc_surfaces[j]),
                 "log_scale": _surface_to_dict(model.field.log_scale_surfaces[j])}
                for j in range(model.field.n_points)
            ],
        },
        "diagnostics": _strip_volatile(_jsonable(model.diagnostics)),
    }


def model_from_dict(doc: dict) -> FittedMesm:
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise DataValidationError(
            f"unsupported model document version {doc.get('version')!r}"
        )
    sp = doc["space"]
    space = CriticalPointSpace(
        coordinates=None if sp["coordinates"] is None
        else np.array(sp["coordinates"], dtype=float),
        metric=sp["metric"],
        distances=None if sp["distances"] is None
        else np.array(sp["distances"], dtype=float),
    )
    g = doc["graph"]
    graph = CliqueGraph(order=int(g["order"]),
                        cliques=np.array(g["cliques"], dtype=int),
                        deltas=np.array(g["deltas"], dtype=float),
                        quantile=float(g["quantile"]),
                        n_points=int(g["n_points"]))
    mf = doc["marginal_field"]
    field_ = MarginalField(
        shape_surfaces=[_surface_from_dict(d["shape"]) for d in mf["surfaces"]],
        loc_surfaces=[_surface_from_dict(d["loc"]) for d in mf["surfaces"]],
        log_scale_surfaces=[_surface_from_dict(d["log_scale"]) for d in mf["surfaces"]],
        bounds=np.array(mf["bounds"], dtype=float),
        mle_params=np.array(mf["mle_params"], dtype=float),
    )
    dependence = BrownResnickModel(tau=np.array(doc["tau"], dtype=float), space=space)
    return FittedMesm(field=field_, dependence=dependence, space=space, graph=graph,
                      block=BlockMaximaConfig(int(doc["block_size"])),
                      diagnostics=doc.get("diagnostics", {}))


def save_model(model: FittedMesm, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> FittedMesm:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
