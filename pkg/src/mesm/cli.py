"""Command-line front end and on-disk formats.

All randomness flows from a single seed; derived streams are keyed by
purpose and index, so outputs are byte-identical across runs and worker
counts. Data files are plain CSV (long format for observations) and the
model is one JSON document.

Exit codes: 0 ok, 1 usage error, 2 numerical failure, 3 data validation.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import baselines as bl
from . import dependence as dep
from .errors import DataValidationError, NumericalError
from .gev import BlockMaximaConfig, to_unit_frechet
from .likelihood import qg_sweep
from .marginal import DesignMatrix, fit_marginal_field, ExtremeDataset
from .pipeline import (FittedMesm, fit_mesm, load_model, return_level_scan,
                       sample_extremes, save_model, _extract_block_maxima)
from .space import CriticalPointSpace, pairwise_distances
from .synth import gen_simulation_study, gen_synthetic_fuselage, maximin_lhd
from .util import available_threads, derived_rng


# --- file formats ----------------------------------------------------------


def write_designs(designs: DesignMatrix, path: Path) -> None:
    cols = {f"s_{d + 1}": designs.values[:, d] for d in range(designs.n_dims)}
    frame = pd.DataFrame({"design_id": np.arange(designs.n_points), **cols})
    frame.to_csv(path, index=False)


def read_designs(path: Path, bounds=None) -> DesignMatrix:
    frame = pd.read_csv(path)
    cols = [c for c in frame.columns if c.startswith("s_")]
    if not cols or "design_id" not in frame.columns:
        raise DataValidationError(f"{path}: expected columns design_id,s_1,...")
    frame = frame.sort_values("design_id")
    return DesignMatrix(values=frame[cols].to_numpy(dtype=float), bounds=bounds)


def write_observations(observations: np.ndarray, path: Path) -> None:
    N, L, J = observations.shape
    design_id = np.repeat(np.arange(N), L * J)
    replicate = np.tile(np.repeat(np.arange(L), J), N)
    point_id = np.tile(np.arange(J), N * L)
    frame = pd.DataFrame({"design_id": design_id, "replicate": replicate,
                          "point_id": point_id, "value": observations.ravel()})
    frame.to_csv(path, index=False)


def read_observations(path: Path) -> np.ndarray:
    frame = pd.read_csv(path)
    required = {"design_id", "replicate", "point_id", "value"}
    if not required.issubset(frame.columns):
        raise DataValidationError(f"{path}: expected columns {sorted(required)}")
    N = int(frame["design_id"].max()) + 1
    L = int(frame["replicate"].max()) + 1
    J = int(frame["point_id"].max()) + 1
    if len(frame) != N * L * J:
        raise DataValidationError(
            f"{path}: expected {N * L * J} rows for a full (design, replicate, point) "
            f"grid, found {len(frame)}"
        )
    out = np.full((N, L, J), np.nan)
    out[frame["design_id"], frame["replicate"], frame["point_id"]] = frame["value"]
    if np.any(np.isnan(out)):
        raise DataValidationError(f"{path}: duplicate or missing cells in the grid")
    return out


def write_points(space: CriticalPointSpace, path: Path) -> None:
    if not space.has_coordinates:
        pd.DataFrame(space.distances).to_csv(path, index=False, header=False)
        return
    frame = pd.DataFrame({"point_id": np.arange(space.n_points),
                          "x": space.coordinates[:, 0],
                          "y": space.coordinates[:, 1]})
    frame.to_csv(path, index=False)


def read_points(path: Path, metric: str = "euclidean",
                distance_matrix: bool = False) -> CriticalPointSpace:
    if distance_matrix:
        matrix = pd.read_csv(path, header=None).to_numpy(dtype=float)
        return CriticalPointSpace(distances=matrix)
    frame = pd.read_csv(path)
    if not {"point_id", "x", "y"}.issubset(frame.columns):
        raise DataValidationError(f"{path}: expected columns point_id,x,y")
    frame = frame.sort_values("point_id")
    return CriticalPointSpace(coordinates=frame[["x", "y"]].to_numpy(dtype=float),
                              metric=metric)


def write_graph(graph, path: Path) -> None:
    cols = {f"member_{h + 1}": graph.cliques[:, h] for h in range(graph.order)}
    frame = pd.DataFrame({**cols, "delta": graph.deltas})
    frame.to_csv(path, index=False)


def _estimates_frame(estimates) -> pd.DataFrame:
    return pd.DataFrame([
        {"bin_low": e.bin_low, "bin_high": e.bin_high, "estimate": e.estimate,
         "ci_low": e.ci_low, "ci_high": e.ci_high, "n_pairs": e.n_pairs}
        for e in estimates
    ])


# --- option helpers --------------------------------------------------------


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise click.UsageError(f"cannot parse float list {text!r}") from exc


def _threads_option(fn):
    return click.option("--threads", type=int, default=None,
                        help="Worker pool size (default: available parallelism).")(fn)


def _resolve_threads(threads: int | None) -> int:
    return threads if threads and threads > 0 else available_threads()


def _bounds_array(bounds: str | None, n_dims: int):
    if bounds is None:
        return None
    lo, hi = _parse_floats(bounds)
    return np.tile([lo, hi], (n_dims, 1))


# --- commands --------------------------------------------------------------


@click.group()
def cli():
    """Extreme spatial modeling of multi-output systems."""


@cli.group()
def synth():
    """Generate synthetic datasets with known ground truth."""


@synth.command("simstudy")
@click.option("--n-points", "-j", default=20, show_default=True)
@click.option("--n-blocks", "-b", default=20, show_default=True)
@click.option("--tau", default="0.5,0.02", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
def synth_simstudy(n_points, n_blocks, tau, seed, out_dir):
    """Standard-Frechet max-stable draws at random planar points."""
    tau = _parse_floats(tau)
    out_dir.mkdir(parents=True, exist_ok=True)
    space, data = gen_simulation_study(n_points=n_points, n_blocks=n_blocks,
                                       tau=tau, seed=seed)
    write_points(space, out_dir / "points.csv")
    write_observations(data[None, :, :], out_dir / "observations.csv")
    (out_dir / "truth.json").write_text(json.dumps(
        {"tau": tau, "n_points": n_points, "n_blocks": n_blocks, "seed": seed,
         "metric": "euclidean", "margins": "unit-frechet"},
        sort_keys=True) + "\n")
    click.echo(f"wrote points.csv, observations.csv, truth.json to {out_dir}")


@synth.command("fuselage")
@click.option("--n-designs", default=30, show_default=True)
@click.option("--replicates", "-l", default=500, show_default=True)
@click.option("--n-points", "-j", default=128, show_default=True)
@click.option("--n-dims", "-d", default=20, show_default=True)
@click.option("--bounds", default="-200,200", show_default=True)
@click.option("--tau", default="10,11", show_default=True)
@click.option("--shape", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
@_threads_option
def synth_fuselage(n_designs, replicates, n_points, n_dims, bounds, tau, shape,
                   seed, out_dir, threads):
    """Production-like raw dataset on a ring of critical points."""
    lo, hi = _parse_floats(bounds)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = gen_synthetic_fuselage(n_designs=n_designs, n_replicates=replicates,
                                  n_points=n_points, n_dims=n_dims, bounds=(lo, hi),
                                  tau=_parse_floats(tau), shape=shape, seed=seed,
                                  threads=_resolve_threads(threads))
    write_designs(data.designs, out_dir / "designs.csv")
    write_observations(data.observations, out_dir / "observations.csv")
    write_points(data.space, out_dir / "points.csv")
    truth = data.truth
    (out_dir / "truth.json").write_text(json.dumps({
        "tau": truth.tau.tolist(), "shape": truth.shape,
        "loc_intercept": truth.loc_intercept.tolist(),
        "loc_coef": truth.loc_coef.tolist(),
        "log_scale_intercept": truth.log_scale_intercept.tolist(),
        "log_scale_coef": truth.log_scale_coef.tolist(),
        "bounds": [lo, hi], "metric": "circle-arc", "seed": seed,
    }, sort_keys=True) + "\n")
    click.echo(f"wrote designs.csv, observations.csv, points.csv, truth.json to {out_dir}")


@cli.command()
@click.option("--designs", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--observations", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--points", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--metric", type=click.Choice(["euclidean", "circle-arc"]),
              default="euclidean", show_default=True)
@click.option("--block-size", "-t", type=int, required=True)
@click.option("--order", "-h", default=2, show_default=True)
@click.option("--qg", default=0.02, show_default=True)
@click.option("--bounds", default=None, help="Control-space box as 'lo,hi' "
              "(default: per-dimension data range).")
@click.option("--tau-bounds", default="0.001,100", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--graph-out", type=click.Path(path_type=Path), default=None)
@_threads_option
def fit(designs, observations, points, metric, block_size, order, qg, bounds,
        tau_bounds, seed, out, graph_out, threads):
    """Fit the model from raw observations and write the model document."""
    obs = read_observations(observations)
    design_matrix = read_designs(designs)
    if bounds is not None:
        design_matrix = DesignMatrix(design_matrix.values,
                                     _bounds_array(bounds, design_matrix.n_dims))
    space = read_points(points, metric=metric)
    lo, hi = _parse_floats(tau_bounds)
    model = fit_mesm(design_matrix, obs, space, block_size=block_size, order=order,
                     graph_quantile=qg, tau_bounds=(lo, hi), seed=seed,
                     threads=_resolve_threads(threads))
    for stage, secs in model.diagnostics["timings_seconds"].items():
        click.echo(f"stage {stage}: {secs:.2f}s")
    click.echo(f"tau: {model.diagnostics['tau']} "
               f"(loglik {model.diagnostics['tau_loglik']:.3f}, "
               f"converged {model.diagnostics['tau_converged']})")
    curve = model.diagnostics["madogram"]
    if curve:
        click.echo(f"madogram: {curve[0]['estimate']:.4f} (closest bin) -> "
                   f"{curve[-1]['estimate']:.4f} (farthest bin)")
    save_model(model, out)
    if graph_out is not None:
        write_graph(model.graph, graph_out)
    click.echo(f"model written to {out}")


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--at", required=True, help="Control input as a comma list.")
@click.option("--n", "n_samples", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@_threads_option
def sample(model_path, at, n_samples, seed, out, threads):
    """Draw joint extreme scenarios at a control input."""
    model = load_model(model_path)
    s = np.array(_parse_floats(at))
    draws = sample_extremes(model, s, n_samples, seed=seed,
                            threads=_resolve_threads(threads))
    n, J = draws.shape
    frame = pd.DataFrame({"sample": np.repeat(np.arange(n), J),
                          "point_id": np.tile(np.arange(J), n),
                          "value": draws.ravel()})
    frame.to_csv(out, index=False)
    click.echo(f"wrote {n} samples x {J} points to {out}")


@cli.command()
@click.option("--observations", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--designs", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--points", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--metric", type=click.Choice(["euclidean", "circle-arc"]),
              default="euclidean", show_default=True)
@click.option("--block-size", "-t", type=int, default=None)
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--n-samples", default=1000, show_default=True,
              help="Draw count for model-based diagnostics.")
@click.option("--thresholds", default="0.9,0.95,0.98", show_default=True)
@click.option("--bins", default=10, show_default=True)
@click.option("--chi-points", default=6, show_default=True,
              help="Representative critical points for pairwise tail estimates.")
@click.option("--bootstrap", default=500, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
@_threads_option
def dependence(observations, designs, points, metric, block_size, model_path,
               n_samples, thresholds, bins, chi_points, bootstrap, seed, out_dir,
               threads):
    """Empirical dependence diagnostics from data or a fitted model."""
    thresholds = _parse_floats(thresholds)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_threads = _resolve_threads(threads)

    if model_path is not None:
        from .brownresnick import sample_many
        model = load_model(model_path)
        space = model.space
        frechet = sample_many(model.dependence, n_samples, seed=seed,
                              threads=n_threads)
        groups = None
        design_values = None
    else:
        if observations is None or designs is None or points is None or block_size is None:
            raise click.UsageError(
                "data mode needs --observations, --designs, --points, --block-size "
                "(or use --model)")
        obs = read_observations(observations)
        design_matrix = read_designs(designs)
        space = read_points(points, metric=metric)
        maxima = _extract_block_maxima(obs, block_size)
        field = fit_marginal_field(design_matrix,
                                   ExtremeDataset(maxima=maxima, designs=design_matrix),
                                   threads=n_threads, seed=seed)
        N, B, J = maxima.shape
        groups = np.empty_like(maxima)
        for n in range(N):
            for j in range(J):
                groups[n, :, j] = to_unit_frechet(field.cell_params(n, j),
                                                  maxima[n, :, j])
        frechet = groups.reshape(N * B, J)
        design_values = design_matrix.values

    curve = dep.f_madogram(frechet, space, n_bins=bins, n_bootstrap=bootstrap,
                           seed=seed)
    _estimates_frame(curve).to_csv(out_dir / "madogram_points.csv", index=False)

    if groups is not None and groups.shape[0] >= 2 and groups.shape[1] >= 20:
        shared_bins = np.array([curve[0].bin_low] + [e.bin_high for e in curve])
        per_design = [dep.f_madogram(groups[n], space, bins=shared_bins,
                                     n_bootstrap=bootstrap, seed=seed + n)
                      for n in range(groups.shape[0])]
        lengths = {len(c) for c in per_design}
        if len(lengths) == 1:
            report = dep.input_invariance_check(per_design, design_points=design_values)
            rows = pd.DataFrame({
                "bin_low": report.design_distance_edges[:-1],
                "bin_high": report.design_distance_edges[1:],
                "estimate": report.design_distance_spread,
                "ci_low": np.nan, "ci_high": np.nan,
                "n_pairs": len(per_design),
            })
            rows.to_csv(out_dir / "madogram_design_invariance.csv", index=False)
            click.echo(f"dependence flat across control inputs: {report.flat} "
                       f"(max curve spread {report.max_spread:.4f})")

    # pairwise tail-dependence estimates among representative points
    variances = frechet.var(axis=0)
    rep = np.sort(np.argsort(variances)[-chi_points:])
    rows = []
    for a_idx in range(rep.size):
        for b_idx in range(a_idx + 1, rep.size):
            i, k = int(rep[a_idx]), int(rep[b_idx])
            for t in thresholds:
                try:
                    est = dep.chi_empirical(frechet[:, i], frechet[:, k], t,
                                            n_bootstrap=bootstrap, seed=seed)
                except DataValidationError:
                    continue
                rows.append({"point_i": i, "point_k": k, "threshold": t,
                             "estimate": est.estimate, "ci_low": est.ci_low,
                             "ci_high": est.ci_high, "n": est.n})
    pd.DataFrame(rows).to_csv(out_dir / "chi.csv", index=False)
    click.echo(f"wrote madogram_points.csv and chi.csv to {out_dir}")


@cli.command("return-level")
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--return-period", "-r", default=100, show_default=True)
@click.option("--scan", type=click.Choice(["points", "random", "grid"]),
              default="points", show_default=True)
@click.option("--n-scan", default=100, show_default=True)
@click.option("--grid-size", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def return_level_cmd(model_path, return_period, scan, n_scan, grid_size, seed, out):
    """Scan return levels over the control space."""
    model = load_model(model_path)
    bounds = model.field.bounds
    if scan == "points":
        pts = model.field.shape_surfaces[0].x_train
    elif scan == "random":
        rng = derived_rng(seed, "return-level-scan")
        pts = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n_scan, bounds.shape[0]))
    else:
        if bounds.shape[0] > 3:
            raise click.UsageError("grid scans need at most 3 control dimensions; "
                                   "use --scan random")
        axes = [np.linspace(lo, hi, grid_size) for lo, hi in bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
    result = return_level_scan(model, pts, return_period=return_period)
    frame = pd.DataFrame({
        "s_index": np.arange(pts.shape[0]),
        "argmax_point": result.argmax_point.astype(int),
        "max_return_level": result.max_level,
    })
    frame.to_csv(out, index=False)
    worst = int(np.argmax(result.max_level))
    click.echo(f"largest {return_period}-block return level "
               f"{result.max_level[worst]:.4f} at scan index {worst} "
               f"(critical point {int(result.argmax_point[worst])})")


@cli.command()
@click.option("--qg-list", default="0.2,0.4,0.6,0.8,1.0", show_default=True)
@click.option("--reps", default=20, show_default=True)
@click.option("--tau", default="0.5,0.02", show_default=True)
@click.option("--n-points", "-j", default=20, show_default=True)
@click.option("--n-blocks", "-b", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def simstudy(qg_list, reps, tau, n_points, n_blocks, seed, out):
    """Length-scale recovery sweep over graph truncation levels."""
    records = qg_sweep(_parse_floats(qg_list), replications=reps, seed=seed,
                       tau_true=_parse_floats(tau), n_points=n_points,
                       n_blocks=n_blocks)
    frame = pd.DataFrame([
        {"q_G": r.q_g, "replication": r.replication, "score": r.score,
         "seconds": r.seconds, "converged": r.converged}
        for r in records
    ])
    frame.to_csv(out, index=False)
    summary = frame.groupby("q_G")["score"].agg(["min", "mean", "median"])
    click.echo(summary.to_string())
    click.echo(f"sweep written to {out}")


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--designs", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--observations", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--test-designs", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--test-observations", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--baselines", "baseline_list", default="sk,qsk,qlr", show_default=True)
@click.option("--quantiles", default="0.9,0.95,0.99", show_default=True)
@click.option("--resamples", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@_threads_option
def evaluate(model_path, designs, observations, test_designs, test_observations,
             baseline_list, quantiles, resamples, seed, out, threads):
    """Score the fitted model and baselines on held-out data."""
    model = load_model(model_path)
    T = model.block.block_size
    train_obs = read_observations(observations)
    design_matrix = read_designs(designs)
    test_obs = read_observations(test_observations)
    test_design_matrix = read_designs(test_designs)
    test_maxima = _extract_block_maxima(test_obs, T)
    quantile_values = _parse_floats(quantiles)
    names = [tok.strip() for tok in baseline_list.split(",") if tok.strip()]
    n_threads = _resolve_threads(threads)

    J = train_obs.shape[2]
    models: dict[str, object] = {"MESM": bl.MesmMarginals(model)}
    for name in names:
        if name == "sk":
            t0 = time.perf_counter()
            fits = [bl.fit_sk(design_matrix, train_obs[:, :, j], seed=seed)
                    for j in range(J)]
            models["SK"] = bl.KrigingMarginals(fits, "-",
                                               time.perf_counter() - t0)
        elif name == "qsk":
            for q in quantile_values:
                t0 = time.perf_counter()
                fits = [bl.fit_qsk(design_matrix, train_obs[:, :, j], q, seed=seed)
                        for j in range(J)]
                models[f"QSK(q={q})"] = bl.KrigingMarginals(
                    fits, f"q={q}", time.perf_counter() - t0)
        elif name == "qlr":
            L = train_obs.shape[1]
            x_long = np.repeat(design_matrix.values, L, axis=0)
            for q in quantile_values:
                t0 = time.perf_counter()
                fits = [bl.fit_qlr(x_long, train_obs[:, :, j].ravel(), q)
                        for j in range(J)]
                models[f"QLR(q={q})"] = bl.QlrMarginals(
                    fits, f"q={q}", time.perf_counter() - t0)
        else:
            raise click.UsageError(f"unknown baseline {name!r}; use sk, qsk, qlr")

    rows = bl.evaluate_models(models, test_design_matrix.values, test_maxima,
                              n_resamples=resamples, seed=seed)
    frame = pd.DataFrame([
        {"model": r.model, "parameter": r.parameter,
         "WD": r.wd.mean if r.wd else "", "WD_sd": r.wd.sd if r.wd else "",
         "PMD": r.pmd.mean, "PMD_sd": r.pmd.sd,
         "train_seconds": r.train_seconds}
        for r in rows
    ])
    frame.to_csv(out, index=False)
    click.echo(frame.to_string(index=False))
    click.echo(f"evaluation written to {out}")


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    except DataValidationError as exc:
        click.echo(f"data validation error: {exc}", err=True)
        return 3
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
