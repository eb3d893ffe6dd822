"""Command line interface.

Subcommands mirror the pipeline stages::

    cycliclv impute         GPS trace -> window actions CSV
    cycliclv describe-video frame index -> parsed descriptions + covariates
    cycliclv join           panel CSV + covariate CSV -> merged panel
    cycliclv simulate       spec + params + config -> synthetic panel CSV
    cycliclv estimate       panel + spec -> estimates, report, covariance
    cycliclv report         saved estimate -> formatted table

Every run writes a ``manifest.json`` beside its outputs recording the
command, configuration, seeds, package versions and SHA-256 digests of
inputs and outputs.  Exit codes: 0 on success, 1 on a pipeline failure,
2 on bad usage.
"""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd
import scipy

from . import __version__
from .draws import make_draws
from .estimator import (
    EstimationConfig,
    estimate as run_estimate,
    report as format_report,
    results_text,
)
from .imputer import ImputerConfig, impute, load_trace
from .likelihood import total_loglik
from .lvd import (
    HttpChatTransport,
    MockTransport,
    ParserConfig,
    UsageBudget,
    describe_windows,
    extract_sequences,
    heatmap_export,
    load_frame_index,
    render_record,
    to_covariates,
)
from .modelspec import BUNDLED_SPECS, load_bundled_spec, load_spec_file
from .panel import DeriveConfig, derive_levels, exclude_forced_stops, load_panel
from .synthetic import GeneratorConfig, simulate_dataset


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Provenance record for one CLI invocation."""

    def __init__(self, command: str, config: dict):
        self.data = {
            "command": command,
            "config": config,
            "versions": {
                "cycliclv": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
                "python": sys.version.split()[0],
            },
            "started_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "inputs": {},
            "outputs": {},
        }

    def add_input(self, path):
        if path is not None and Path(path).exists():
            self.data["inputs"][str(path)] = _sha256(Path(path))

    def add_output(self, path):
        if path is not None and Path(path).exists():
            self.data["outputs"][str(path)] = _sha256(Path(path))

    def write(self, out_dir):
        self.data["finished_utc"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path


def _load_any_spec(spec_arg, schema=None):
    if spec_arg in BUNDLED_SPECS:
        return load_bundled_spec(spec_arg, schema=schema)
    return load_spec_file(spec_arg, schema=schema)


def _fail(msg):
    raise click.ClickException(str(msg))


@click.group()
@click.version_option(__version__)
def main():
    """Cyclist action models: imputation, description, estimation."""


# ---------------------------------------------------------------------
# impute
# ---------------------------------------------------------------------

@main.command("impute")
@click.option("--trace", required=True, type=click.Path(exists=True),
              help="GPS trace CSV (timestamp, speed[, lat, lon]).")
@click.option("--out", required=True, type=click.Path(),
              help="Output window-action CSV.")
@click.option("--brake-drop", default=5.0, show_default=True)
@click.option("--decel-drop", default=1.5, show_default=True)
@click.option("--accel-rise", default=1.5, show_default=True)
@click.option("--wait-speed", default=1.0, show_default=True)
@click.option("--max-gap", default=5.0, show_default=True)
def impute_cmd(trace, out, brake_drop, decel_drop, accel_rise, wait_speed,
               max_gap):
    """Impute window actions from a speed trace."""
    cfg = ImputerConfig(brake_drop=brake_drop, decel_drop=decel_drop,
                        accel_rise=accel_rise, wait_speed=wait_speed,
                        max_gap_s=max_gap)
    manifest = RunManifest("impute", cfg.metadata())
    manifest.add_input(trace)
    try:
        result = impute(load_trace(trace), cfg)
    except Exception as exc:
        _fail(exc)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.to_frame().to_csv(out, index=False)
    manifest.add_output(out)
    manifest.write(out.parent)
    click.echo(f"{len(result.windows)} windows over {result.n_segments} "
               f"segment(s); {result.n_dropped_windows} dropped")


# ---------------------------------------------------------------------
# describe-video
# ---------------------------------------------------------------------

@main.command("describe-video")
@click.option("--frames", required=True, type=click.Path(exists=True),
              help="Frame index CSV (timestamp, path[, lat, lon]).")
@click.option("--individual", default="S000", show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--frames-per-window", default=2, show_default=True)
@click.option("--mock-dir", type=click.Path(exists=True), default=None,
              help="Replay fixtures from this directory instead of HTTP.")
@click.option("--endpoint", default=None, help="Chat-completion endpoint URL.")
@click.option("--model", default="gpt-4o", show_default=True)
@click.option("--fallback", type=click.Choice(["reject", "neutral"]),
              default="reject", show_default=True)
@click.option("--max-cost", type=float, default=None,
              help="Abort once the estimated spend crosses this amount.")
@click.option("--heatmap-variable", default=None,
              help="Also rasterize this covariate (needs positions).")
@click.option("--cell-size", default=25.0, show_default=True)
def describe_video(frames, individual, out_dir, frames_per_window, mock_dir,
                   endpoint, model, fallback, max_cost, heatmap_variable,
                   cell_size):
    """Describe frame sequences and distill covariates."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("describe-video", {
        "individual": individual, "frames_per_window": frames_per_window,
        "model": model, "fallback": fallback, "mock": bool(mock_dir),
    })
    manifest.add_input(frames)
    if mock_dir:
        transport = MockTransport(mock_dir)
    elif endpoint:
        transport = HttpChatTransport(endpoint)
    else:
        _fail("give either --mock-dir or --endpoint")
    try:
        sequences, report = extract_sequences(
            load_frame_index(frames), individual_id=individual,
            frames_per_window=frames_per_window,
        )
        budget = UsageBudget(max_cost=max_cost)
        described, failures = describe_windows(
            sequences, transport, parser=ParserConfig(fallback=fallback),
            budget=budget, model=model,
        )
    except Exception as exc:
        _fail(exc)
    records_path = out_dir / "records.txt"
    with open(records_path, "w", encoding="utf-8") as fh:
        for d in described:
            fh.write(f"# individual={d.individual_id} t={d.t}\n")
            fh.write(render_record(d.record))
            fh.write("\n")
    cov_path = out_dir / "covariates.csv"
    to_covariates(described).to_csv(cov_path, index=False)
    manifest.add_output(records_path)
    manifest.add_output(cov_path)
    if heatmap_variable:
        try:
            grid_path = out_dir / f"heatmap_{heatmap_variable}.txt"
            heatmap_export(described, heatmap_variable, grid_path, cell_size)
            manifest.add_output(grid_path)
        except Exception as exc:
            _fail(exc)
    manifest.write(out_dir)
    click.echo(f"described {len(described)} windows "
               f"({len(failures)} failed, {len(report.skipped_windows)} empty); "
               f"requests: {budget.n_requests}")
    if failures:
        for seq, diags in failures:
            for d in diags:
                click.echo(f"  window {seq.t}: {d}", err=True)
        sys.exit(1)


# ---------------------------------------------------------------------
# join
# ---------------------------------------------------------------------

@main.command()
@click.option("--panel", "panel_path", required=True, type=click.Path(exists=True))
@click.option("--covariates", "cov_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def join(panel_path, cov_path, out):
    """Join describer covariates onto a panel by (individual_id, t)."""
    manifest = RunManifest("join", {})
    manifest.add_input(panel_path)
    manifest.add_input(cov_path)
    try:
        panel = pd.read_csv(panel_path)
        cov = pd.read_csv(cov_path)
        for col in ("individual_id", "t"):
            if col not in panel.columns or col not in cov.columns:
                raise click.ClickException(f"both files need column {col!r}")
        merged = panel.merge(cov, on=["individual_id", "t"], how="left")
    except click.ClickException:
        raise
    except Exception as exc:
        _fail(exc)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    merged.to_csv(out, index=False)
    manifest.add_output(out)
    manifest.write(out.parent)
    click.echo(f"joined {len(cov.columns) - 2} covariate(s) onto "
               f"{len(merged)} rows")


# ---------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------

@main.command()
@click.option("--spec", "spec_arg", required=True,
              help="Bundled spec name or spec file path.")
@click.option("--params", "params_path", type=click.Path(exists=True),
              default=None, help="name = value lines for the true values.")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Generator config JSON.")
@click.option("--out", required=True, type=click.Path())
def simulate(spec_arg, params_path, config_path, out):
    """Draw a synthetic panel from a model."""
    manifest = RunManifest("simulate", {"spec": spec_arg})
    manifest.add_input(params_path)
    manifest.add_input(config_path)
    try:
        spec = _load_any_spec(spec_arg)
        pv = spec.build_parameters()
        if params_path:
            pv = pv.apply_text(Path(params_path).read_text(encoding="utf-8"))
        cfg = GeneratorConfig.from_dict(
            json.loads(Path(config_path).read_text(encoding="utf-8")))
        ds = simulate_dataset(spec, pv, cfg)
    except Exception as exc:
        _fail(exc)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out)
    manifest.add_output(out)
    manifest.write(out.parent)
    click.echo(f"simulated {ds.n_obs} observations for "
               f"{ds.n_individuals} individuals")


# ---------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------

@main.command("estimate")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_arg", required=True,
              help="Bundled spec name or spec file path.")
@click.option("--schema", type=click.Path(exists=True), default=None)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--draws", "R", type=int, default=None,
              help="Override the spec's draw count.")
@click.option("--draw-seed", type=int, default=None)
@click.option("--scheme", type=click.Choice(["halton", "pseudo"]), default=None)
@click.option("--candidates", type=int, default=1, show_default=True,
              help="Multi-start candidate count.")
@click.option("--perturbation", type=float, default=0.5, show_default=True)
@click.option("--top-k", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--maxiter", type=int, default=1000, show_default=True)
@click.option("--n-jobs", type=int, default=1, show_default=True)
@click.option("--derive/--no-derive", default=False, show_default=True,
              help="Derive level flags and interactions before fitting.")
@click.option("--exclude-forced-stops/--keep-forced-stops", "exclude_stops",
              default=False, show_default=True)
@click.option("--standardize-indicators/--raw-indicators", "standardize",
              default=False, show_default=True)
@click.option("--no-cov", is_flag=True, default=False,
              help="Skip the covariance computation.")
def estimate_cmd(data, spec_arg, schema, out_dir, R, draw_seed, scheme,
                 candidates, perturbation, top_k, seed, maxiter, n_jobs,
                 derive, exclude_stops, standardize, no_cov):
    """Fit a model by maximum simulated likelihood."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = EstimationConfig(
        R=R, scheme=scheme, draw_seed=draw_seed, n_candidates=candidates,
        perturbation=perturbation if candidates > 1 else 0.0, top_k=top_k,
        seed=seed, maxiter=maxiter, n_jobs=n_jobs, compute_cov=not no_cov,
    )
    manifest = RunManifest("estimate", {
        "spec": spec_arg, "R": R, "draw_seed": draw_seed, "scheme": scheme,
        "candidates": candidates, "seed": seed, "maxiter": maxiter,
        "n_jobs": n_jobs, "derive": derive,
        "exclude_forced_stops": exclude_stops,
        "standardize_indicators": standardize,
    })
    manifest.add_input(data)
    manifest.add_input(schema)
    try:
        ds = load_panel(data, schema=schema)
        if derive:
            ds = derive_levels(ds)
        if exclude_stops:
            ds = exclude_forced_stops(ds)
        if standardize:
            from .panel import standardize_indicators
            ds = standardize_indicators(ds)
        spec = _load_any_spec(spec_arg, schema=ds.covariate_columns())
        result = run_estimate(ds, spec, config=cfg)
    except Exception as exc:
        _fail(exc)
    (out_dir / "estimates.txt").write_text(results_text(result),
                                           encoding="utf-8")
    (out_dir / "report.txt").write_text(format_report(result) + "\n",
                                        encoding="utf-8")
    if result.cov is not None:
        np.savetxt(out_dir / "covariance.csv", result.cov.robust,
                   delimiter=",", header=",".join(result.cov.names))
    for name in ("estimates.txt", "report.txt", "covariance.csv"):
        manifest.add_output(out_dir / name)
    manifest.write(out_dir)
    click.echo(f"ll = {result.ll:.4f}  converged = {result.converged}  "
               f"k = {result.metrics.k}")
    if not result.converged:
        sys.exit(1)


# ---------------------------------------------------------------------
# report
# ---------------------------------------------------------------------

@main.command("report")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_arg", required=True)
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True),
              help="Saved estimates.txt (or name = value lines).")
@click.option("--draws", "R", type=int, default=None)
@click.option("--draw-seed", type=int, default=None)
def report_cmd(data, spec_arg, params_path, R, draw_seed):
    """Re-evaluate a saved fit and print its likelihood decomposition."""
    try:
        ds = load_panel(data)
        spec = _load_any_spec(spec_arg, schema=ds.covariate_columns())
        pv = spec.build_parameters()
        text = Path(params_path).read_text(encoding="utf-8")
        assigned = []
        for line in text.splitlines():
            if line.startswith("param."):
                assigned.append(line[len("param."):])
        pv = pv.apply_text("\n".join(assigned) if assigned else text)
        from .draws import draws_for_spec
        from .likelihood import prepare_dataset
        ds = prepare_dataset(ds, spec)
        draws = (draws_for_spec(ds.n_obs, spec, R=R, seed=draw_seed)
                 if spec.latents else None)
        rep = total_loglik(ds, pv, spec, draws=draws)
    except Exception as exc:
        _fail(exc)
    click.echo(f"n_obs = {rep.n_obs}")
    click.echo(f"ll = {rep.total:.6f}")
    for ind, ll in zip(rep.individuals, rep.per_individual):
        click.echo(f"  {ind}: {ll:.6f}")


if __name__ == "__main__":
    main()
