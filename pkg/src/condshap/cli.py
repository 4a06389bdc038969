"""Command-line surface: explain, explain-forecast, compare and plot."""

from __future__ import annotations

import csv
import functools
import json
import shlex
import sys
import traceback
from pathlib import Path

import click
import numpy as np
import yaml

from .causal import CausalSpecError
from .coalitions import CoalitionError
from .data import DataError, Dataset, load_csv, write_csv
from .estimators.base import EstimatorError
from .evaluation import ComparisonError, compare_approaches
from .explainer import ExplainerError, ShapleyExplainer, StateMismatchError
from .forecast import (ARPredictor, ExternalForecastPredictor, ForecastError,
                       ForecastTask, TimeSeriesData, explain_forecast)
from .models import ExternalPredictor, ModelError, load_model
from .plots import PlotError, bar_svg, scatter_svg, waterfall_svg
from .solver import IncompleteGameError, SingularSystemError

USER_ERRORS = (DataError, ModelError, CoalitionError, EstimatorError, CausalSpecError,
               ComparisonError, ForecastError, ExplainerError, StateMismatchError,
               IncompleteGameError, SingularSystemError, PlotError,
               FileNotFoundError, yaml.YAMLError, json.JSONDecodeError, KeyError, ValueError)

VERBOSE_CHOICES = ("basic", "progress", "convergence", "shapley", "vS_details")

# exit-code contract: 0 ok, 1 user error, 2 internal. Bad flags and missing
# files are user errors, so usage failures must not exit with 2.
click.UsageError.exit_code = 1


def guarded(fn):
    """Map failures onto the exit-code contract: 1 user error, 2 internal."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except click.ClickException:
            raise
        except USER_ERRORS as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(1)
        except Exception:
            click.echo("internal error:", err=True)
            traceback.print_exc()
            sys.exit(2)

    return wrapper


@click.group()
def main():
    """Conditional Shapley value explanations for predictive models."""


# ----------------------------------------------------------------- helpers

def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        config = yaml.safe_load(fh) or {}
    if not isinstance(config, dict):
        raise DataError(f"config file {path} must contain a mapping")
    return config


def _merge_flags(config: dict, **flags) -> dict:
    """Overlay command-line flags onto the config file; flags win."""
    merged = dict(config)
    for key, value in flags.items():
        if value is not None and value != ():
            merged[key] = value
    return merged


def _load_predictor(config: dict):
    model_path = config.get("model")
    model_cmd = config.get("model_cmd")
    if (model_path is None) == (model_cmd is None):
        raise ModelError("exactly one of 'model' (file) or 'model_cmd' (subprocess) is required")
    if model_path is not None:
        return load_model(model_path)
    cmd = model_cmd if isinstance(model_cmd, list) else shlex.split(str(model_cmd))
    return ExternalPredictor(cmd, timeout=float(config.get("model_timeout", 60.0)))


def _load_train(config: dict):
    if "train" not in config:
        raise DataError("config key 'train' (training data CSV) is required")
    train = load_csv(config["train"])
    response = config.get("response")
    y = None
    if response is not None:
        if response not in train.names:
            raise DataError(f"response column {response!r} not found in training data")
        y = train.column(response).values.astype(float)
        train = train.select([n for n in train.names if n != response])
    return train, y


def _approach(config: dict):
    approach = config.get("approach", "gaussian")
    if isinstance(approach, str) and "," in approach:
        approach = [a.strip() for a in approach.split(",")]
    return approach


def _explainer_from(config: dict, out_dir: Path | None) -> tuple[ShapleyExplainer, Dataset, np.ndarray | None, Dataset]:
    train, y_train = _load_train(config)
    if "explain" not in config:
        raise DataError("config key 'explain' (explicand data CSV) is required")
    explain = load_csv(config["explain"])
    causal = config.get("causal") or {}
    explainer = ShapleyExplainer(
        predictor=_load_predictor(config),
        approach=_approach(config),
        phi0=config.get("phi0"),
        seed=config.get("seed"),
        max_n_coalitions=config.get("max_n_coalitions"),
        iterative=config.get("iterative"),
        initial_n_coalitions=config.get("initial_n_coalitions"),
        paired_sampling=config.get("paired_sampling", True),
        reweighting=config.get("reweighting", "c-kernel"),
        semi_deterministic=config.get("semi_deterministic", False),
        n_mc_samples=config.get("n_mc_samples", 1000),
        n_boot=config.get("n_boot", 100),
        convergence_threshold=config.get("convergence_threshold", 0.01),
        max_iterations=config.get("max_iterations", 20),
        groups=config.get("groups"),
        causal_ordering=causal.get("ordering"),
        confounding=causal.get("confounding"),
        asymmetric=causal.get("asymmetric", False),
        approach_options=config.get("approach_options"),
        min_n_batches=config.get("min_n_batches", 10),
        max_batch_size=config.get("max_batch_size", 10),
        n_workers=config.get("workers"),
        saving_path=str(out_dir / "state.json") if out_dir is not None else None,
        verbose=tuple(config.get("verbose", ())),
        log_json=bool(config.get("log_json", False)),
    )
    return explainer, train, y_train, explain


def _write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (str, int)) else repr(float(v)) for v in row])


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def _echo_config(out_dir: Path, explainer: ShapleyExplainer, config: dict) -> None:
    params = {}
    for name, value in explainer.get_params().items():
        if name == "predictor":
            continue
        try:
            json.dumps(value)
        except TypeError:
            value = repr(value)
        params[name] = value
    _write_json(out_dir / "effective_config.json", {
        "inputs": {k: config.get(k) for k in ("train", "explain", "model", "model_cmd", "response")},
        "parameters": params,
    })


def _print_table(header: list[str], rows) -> None:
    cells = [header] + [[f"{v:.6g}" if isinstance(v, float) else str(v) for v in row] for row in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    for r, row in enumerate(cells):
        click.echo("  ".join(val.rjust(widths[j]) for j, val in enumerate(row)))
        if r == 0:
            click.echo("  ".join("-" * w for w in widths))


def _write_explanation(out_dir: Path, result, explain: Dataset) -> None:
    header = result.header()
    _write_table(out_dir / "shapley_values_est.csv", header, result.phi.tolist())
    _write_table(out_dir / "shapley_values_sd.csv", header, result.phi_sd.tolist())
    _write_table(out_dir / "pred_explain.csv", ["pred"], [[p] for p in result.pred_explain])
    write_csv(explain, out_dir / "explain_data.csv")
    _write_json(out_dir / "msev.json", result.msev.to_dict() if result.msev else None)
    _write_json(out_dir / "convergence_trace.json", result.convergence_trace)
    _write_json(out_dir / "timing.json", result.timings)


# ------------------------------------------------------------------ explain

@main.command("explain")
@click.option("--config", "config_path", type=click.Path(exists=True), help="YAML run configuration.")
@click.option("--train", type=click.Path(exists=True), help="Training data CSV.")
@click.option("--explain", "explain_path", type=click.Path(exists=True), help="Explicand data CSV.")
@click.option("--model", type=click.Path(exists=True), help="Model file (JSON).")
@click.option("--model-cmd", help="External model command (subprocess protocol).")
@click.option("--response", help="Response column in the training CSV (sets the baseline).")
@click.option("--approach", help="Estimation approach, or a comma list with one entry per coalition size.")
@click.option("--phi0", type=float, help="Explicit baseline value.")
@click.option("--seed", type=int, help="Random seed for reproducible runs.")
@click.option("--max-n-coalitions", type=int)
@click.option("--iterative/--no-iterative", "iterative", default=None)
@click.option("--n-mc-samples", type=int)
@click.option("--workers", type=int)
@click.option("--output-dir", default="condshap_output", show_default=True)
@click.option("--continue-from", "continue_from", type=click.Path(exists=True),
              help="Resume from a saved state file.")
@click.option("--verbose", multiple=True, type=click.Choice(VERBOSE_CHOICES))
@click.option("--log-json", is_flag=True, default=None)
@guarded
def cmd_explain(config_path, train, explain_path, model, model_cmd, response, approach,
                phi0, seed, max_n_coalitions, iterative, n_mc_samples, workers,
                output_dir, continue_from, verbose, log_json):
    """Explain model predictions with conditional Shapley values."""
    config = _merge_flags(_load_config(config_path), train=train, explain=explain_path,
                          model=model, model_cmd=model_cmd, response=response,
                          approach=approach, phi0=phi0, seed=seed,
                          max_n_coalitions=max_n_coalitions, iterative=iterative,
                          n_mc_samples=n_mc_samples, workers=workers,
                          verbose=list(verbose), log_json=log_json)
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    explainer, train_ds, y_train, explain_ds = _explainer_from(config, out_dir)
    explainer.fit(train_ds, y_train=y_train)
    _echo_config(out_dir, explainer, config)
    if continue_from:
        result = explainer.continue_explain(explain_ds, state_path=continue_from)
    else:
        result = explainer.explain(explain_ds)
    _write_explanation(out_dir, result, explain_ds)
    click.echo(f"Shapley values ({result.framework}, {result.coalitions.n_coalitions} coalitions):")
    _print_table(["row"] + result.header(),
                 [[i, *map(float, result.phi[i])] for i in range(result.n_explain)])
    click.echo(f"MSEv: {result.msev.score:.6g} (sd {result.msev.sd:.6g})")
    click.echo(f"artifacts written to {out_dir}")


# --------------------------------------------------------- explain-forecast

def _forecast_predictor(config: dict, data: TimeSeriesData):
    model = config.get("model")
    if not isinstance(model, dict) or "type" not in model:
        raise ModelError("forecast config needs a 'model' block with a 'type' key")
    if model["type"] == "ar":
        predictor = ARPredictor(model["y"], int(model["p"]), model.get("xreg", ()))
        return predictor.fit(data)
    if model["type"] == "external":
        cmd = model["command"]
        cmd = cmd if isinstance(cmd, list) else shlex.split(str(cmd))
        return ExternalForecastPredictor(cmd, timeout=float(model.get("timeout", 60.0)))
    raise ModelError(f"unknown forecast model type {model['type']!r}")


@main.command("explain-forecast")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True,
              help="YAML forecast configuration.")
@click.option("--seed", type=int)
@click.option("--output-dir", default="condshap_forecast_output", show_default=True)
@guarded
def cmd_explain_forecast(config_path, seed, output_dir):
    """Explain each step of a multi-horizon forecast."""
    config = _merge_flags(_load_config(config_path), seed=seed)
    if "data" not in config:
        raise DataError("forecast config key 'data' (time-series CSV) is required")
    series = load_csv(config["data"])
    y_names = config.get("y") or []
    if isinstance(y_names, str):
        y_names = [y_names]
    if not y_names:
        raise DataError("forecast config key 'y' (endogenous series names) is required")
    n_obs = int(config.get("n_obs", series.n_rows))
    xreg_names = config.get("xreg") or []
    if isinstance(xreg_names, str):
        xreg_names = [xreg_names]
    xreg = {n: series.column(n).values.astype(float) for n in xreg_names}
    if config.get("xreg_data"):
        extra = load_csv(config["xreg_data"])
        xreg.update({n: extra.column(n).values.astype(float) for n in extra.names})
        xreg_names = list(xreg)
    data = TimeSeriesData(
        y={n: series.column(n).values.astype(float)[:n_obs] for n in y_names},
        xreg=xreg)
    task = ForecastTask(
        explain_idx=[int(t) for t in config["explain_idx"]],
        horizon=int(config.get("horizon", 1)),
        explain_y_lags=config.get("explain_y_lags", 1),
        explain_xreg_lags=config.get("explain_xreg_lags", 0),
        train_idx=[int(t) for t in config["train_idx"]] if config.get("train_idx") else None,
        group_lags=bool(config.get("group_lags", False)),
        phi0=config.get("phi0"))
    predictor = _forecast_predictor(config, data)
    params = {k: config[k] for k in ("seed", "max_n_coalitions", "iterative", "n_mc_samples",
                                     "n_boot", "paired_sampling", "approach_options")
              if k in config}
    result = explain_forecast(predictor, data, task, approach=config.get("approach", "gaussian"),
                              **params)

    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_table(out_dir / "forecast_values.csv", result.header(), result.rows())
    sd_rows = []
    for q, expl in enumerate(result.by_horizon, start=1):
        for i, t in enumerate(result.explain_idx):
            sd_rows.append([t, q, *expl.phi_sd[i].tolist()])
    _write_table(out_dir / "forecast_sd.csv", result.header(), sd_rows)
    _write_json(out_dir / "timing.json", [e.timings for e in result.by_horizon])
    _write_json(out_dir / "effective_config.json", {k: v for k, v in config.items()})
    click.echo(f"forecast Shapley values (horizon {result.horizon}):")
    _print_table(result.header(), result.rows())
    click.echo(f"artifacts written to {out_dir}")


# ------------------------------------------------------------------ compare

@main.command("compare")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True,
              help="YAML configuration with an 'approaches' list (two or more).")
@click.option("--output-dir", default="condshap_compare_output", show_default=True)
@click.option("--plot/--no-plot", "make_plot", default=False)
@guarded
def cmd_compare(config_path, output_dir, make_plot):
    """Rank contribution-function approaches by the MSEv criterion."""
    config = _load_config(config_path)
    approaches = config.get("approaches")
    if not isinstance(approaches, list) or len(approaches) < 2:
        raise ComparisonError("config key 'approaches' must list at least two approaches")
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results, keys = [], []
    for name in approaches:
        run_config = dict(config, approach=name)
        explainer, train_ds, y_train, explain_ds = _explainer_from(run_config, None)
        explainer.fit(train_ds, y_train=y_train)
        result = explainer.explain(explain_ds)
        results.append((str(name), result.msev))
        keys.append(result.coalitions.masks)
    report = compare_approaches(results, coalition_keys=keys)
    _write_json(out_dir / "msev_compare.json", report)
    _write_table(out_dir / "msev_compare.csv",
                 ["rank", "approach", "MSEv", "MSEv_sd"],
                 [[e["rank"], e["approach"], e["MSEv"], e["MSEv_sd"]] for e in report])
    if make_plot:
        svg = bar_svg([e["approach"] for e in report], [[e["MSEv"] for e in report]])
        (out_dir / "msev_compare.svg").write_text(svg)
    _print_table(["rank", "approach", "MSEv", "MSEv_sd"],
                 [[e["rank"], e["approach"], float(e["MSEv"]), float(e["MSEv_sd"])] for e in report])
    click.echo(f"artifacts written to {out_dir}")


# --------------------------------------------------------------------- plot

@main.command("plot")
@click.option("--artifacts", type=click.Path(exists=True), required=True,
              help="Output directory of a previous explain run.")
@click.option("--kind", type=click.Choice(["bar", "waterfall", "scatter"]), required=True)
@click.option("--index", type=int, default=0, show_default=True,
              help="Explicand row for waterfall plots.")
@click.option("--feature", help="Feature name for scatter plots.")
@click.option("--top-k", type=int, help="Bar plot: keep this many features, aggregate the rest.")
@click.option("--output", help="Output SVG path (defaults into the artifact directory).")
@guarded
def cmd_plot(artifacts, kind, index, feature, top_k, output):
    """Render an SVG plot from explanation artifacts."""
    art = Path(artifacts)
    with open(art / "shapley_values_est.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    header, table = rows[0], np.array([[float(v) for v in r] for r in rows[1:]])
    names = header[1:]  # first column is the baseline
    phi0 = table[:, 0]
    phi = table[:, 1:]
    if kind == "bar":
        svg = bar_svg(names, phi, top_k=top_k)
    elif kind == "waterfall":
        if not 0 <= index < len(phi):
            raise PlotError(f"explicand index {index} out of range 0..{len(phi) - 1}")
        svg = waterfall_svg(names, phi[index], float(phi0[index]))
    else:
        if feature is None or feature not in names:
            raise PlotError(f"scatter needs --feature, one of {names}")
        explain_ds = load_csv(art / "explain_data.csv")
        j = names.index(feature)
        svg = scatter_svg(feature, explain_ds.column(feature).values.astype(float), phi[:, j])
    out = Path(output) if output else art / f"plot_{kind}.svg"
    out.write_text(svg)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
