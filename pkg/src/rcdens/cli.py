"""Command-line front end for the estimator library.

Subcommands: simulate (draw a synthetic panel), estimate (two-stage fit
with fixed tuning), cv (repeated K-fold tuning search), bootstrap (pairs
bootstrap around a fixed-tuning fit), montecarlo (replicated
simulate/tune/fit studies), diagnose (indicative coefficient-support
bounds).

Configuration lives in a JSON file whose lines may start with '#'
comments; command-line flags override file values. Every output file
embeds the resolved configuration and the package version, so a run can
be reproduced from its own artifacts. Exit codes: 0 success, 2 input
error, 3 infeasible tuning environment, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import DEFAULT_N_DRAWS, FrozenPipeline, bootstrap_report, pairs_bootstrap
from .numerics import HermiteBasis, build_frequency_grid
from .panel import (
    DifferencedSample,
    StackedSample,
    coefficient_support_bounds,
    first_difference,
    load_differenced_csv,
    load_panel_csv,
    load_stacked_csv,
    partition_stayers,
    stack_two_periods,
    stayer_threshold_rule,
)
from .simulation import (
    DGP_PRESETS,
    DgpSpec,
    dgp_preset,
    monte_carlo_report,
    monte_carlo_run,
    preset_estimator_config,
    simulate,
    write_summary_csv,
)
from .stage1_irregular import (
    DEFAULT_TRIM_THRESHOLD,
    IrregularConfig,
    NearestNeighborRule,
    first_stage_irregular,
)
from .stage1_regular import (
    RegularConfig,
    circular_silverman_bandwidth,
    first_stage_regular,
    precompute_regular,
)
from .stage2_sieve import SieveSolver, default_eval_grid, evaluate_and_postprocess
from .tuning_cv import (
    DESIGNS,
    CvConfig,
    InfeasibleCvError,
    IrregularFixedParams,
    PilotRule,
    RegularFixedParams,
    cv_report,
    repeated_cv,
)


class InputError(Exception):
    """Bad invocation, configuration, or input data (exit code 2)."""


class FeasibilityError(Exception):
    """The run cannot proceed under its feasibility gates (exit code 3)."""


def _plain(value):
    """Recursively convert numpy scalars/arrays for JSON output."""
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config file: {exc}") from None
    body = "\n".join(
        line for line in text.splitlines() if not line.lstrip().startswith("#")
    )
    try:
        config = json.loads(body or "{}")
    except json.JSONDecodeError as exc:
        raise InputError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise InputError("config file must hold a JSON object")
    return config


def _resolve_config(args: argparse.Namespace) -> dict:
    config = load_config_file(args.config) if args.config else {}
    for flag, key in (
        ("design", "design"),
        ("seed", "seed"),
        ("workers", "workers"),
        ("out", "out"),
        ("input", "input"),
        ("preset", "preset"),
        ("reps", "reps"),
        ("n_units", "n_units"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            config[key] = value
    if getattr(args, "draws", None) is not None:
        config.setdefault("bootstrap", {})["n_draws"] = args.draws
    config.setdefault("design", "irregular")
    config.setdefault("seed", 0)
    config.setdefault("out", ".")
    config.setdefault("workers", os.cpu_count() or 1)
    if config["design"] not in DESIGNS:
        raise InputError(f"unknown design {config['design']!r}")
    try:
        config["seed"] = int(config["seed"])
        config["workers"] = int(config["workers"])
    except (TypeError, ValueError):
        raise InputError("seed and workers must be integers") from None
    if config["workers"] < 1:
        raise InputError("workers must be at least 1")
    return config


def _outdir(config: dict) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_preamble(config: dict) -> list[str]:
    return [
        f"rcdens-version: {__version__}",
        "config: " + json.dumps(_plain(config), sort_keys=True),
    ]


def _write_json(path: Path, payload: dict) -> None:
    payload = _plain(payload)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")


def _write_csv(path: Path, header: list[str], rows, config: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in _config_preamble(config):
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _build_grid(config: dict):
    block = config.get("grid", {})
    if not isinstance(block, dict):
        raise InputError("'grid' must be an object")
    try:
        return build_frequency_grid(
            float(block.get("cutoff", 4.0)),
            int(block.get("n_nodes", 101)),
            str(block.get("weight_kind", "standard-normal")),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"grid: {exc}") from None


def _build_eval_grid(config: dict) -> np.ndarray:
    block = config.get("eval_grid")
    if block is None:
        return default_eval_grid()
    try:
        if isinstance(block, dict):
            arr = np.linspace(
                float(block["lo"]), float(block["hi"]), int(block["n"])
            )
        else:
            arr = np.asarray(block, dtype=float).ravel()
    except (TypeError, ValueError, KeyError) as exc:
        raise InputError(f"eval_grid: {exc}") from None
    if arr.size < 2 or not np.all(np.isfinite(arr)) or np.any(np.diff(arr) <= 0):
        raise InputError("eval_grid must be a finite increasing grid")
    return arr


def _bandwidth_value(value, label: str):
    if isinstance(value, dict):
        try:
            return NearestNeighborRule(int(value["neighbor_count"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{label}: {exc}") from None
    try:
        width = float(value)
    except (TypeError, ValueError):
        raise InputError(f"{label} must be a number or a neighbor-count rule") from None
    if not width > 0.0:
        raise InputError(f"{label} must be positive")
    return width


def _build_dgp(config: dict) -> DgpSpec:
    block = dict(config.get("generator", {}))
    if "preset" not in block and "preset" in config:
        block.setdefault("preset", config["preset"])
    try:
        if "preset" in block:
            spec = dgp_preset(str(block.pop("preset")))
            if block:
                spec = dataclasses.replace(spec, **block)
        else:
            spec = DgpSpec(**block)
    except (TypeError, ValueError) as exc:
        raise InputError(f"generator: {exc}") from None
    return spec


def _merge_cv(base: CvConfig, raw) -> CvConfig:
    if not isinstance(raw, dict):
        raise InputError("'cv' must be an object")
    kwargs = {}
    try:
        for key in ("n_folds", "n_repeats", "rng_seed"):
            if key in raw:
                kwargs[key] = int(raw[key])
        for key in ("max_instability", "max_trim_fraction"):
            if key in raw:
                kwargs[key] = float(raw[key])
        if "candidate_dimensions" in raw:
            kwargs["candidate_dimensions"] = tuple(
                int(s) for s in raw["candidate_dimensions"]
            )
        if "candidate_bandwidths" in raw:
            kwargs["candidate_bandwidths"] = tuple(
                _bandwidth_value(b, "candidate bandwidth")
                for b in raw["candidate_bandwidths"]
            )
        if "pilot" in raw:
            kwargs["pilot"] = PilotRule(**raw["pilot"])
        return dataclasses.replace(base, **kwargs)
    except InputError:
        raise
    except (TypeError, ValueError) as exc:
        raise InputError(f"cv: {exc}") from None


def _load_sample(config: dict):
    path = config.get("input")
    if not path:
        raise InputError("missing input path (set 'input' or --input)")
    if not os.path.exists(path):
        raise InputError(f"input file not found: {path}")
    design = config["design"]
    fmt = config.get("input_format") or (
        "stacked" if design == "regular" else "differenced"
    )
    try:
        if fmt == "differenced":
            sample, report = load_differenced_csv(path)
        elif fmt == "stacked":
            sample, report = load_stacked_csv(path)
        elif fmt == "panel":
            panel, report = load_panel_csv(path)
            if design == "regular":
                sample, stacked_report = stack_two_periods(panel)
                report = {**report, **stacked_report}
            else:
                pair = config.get("period_pair")
                if pair is None:
                    raise InputError(
                        "panel input needs 'period_pair' for the irregular design"
                    )
                sample, diff_report = first_difference(
                    panel, (int(pair[0]), int(pair[1]))
                )
                report = {**report, **diff_report}
        else:
            raise InputError(f"unknown input format {fmt!r}")
    except InputError:
        raise
    except (TypeError, ValueError) as exc:
        raise InputError(f"cannot load input: {exc}") from None
    wanted = StackedSample if design == "regular" else DifferencedSample
    if not isinstance(sample, wanted):
        raise InputError(
            f"design {design!r} needs a {wanted.__name__} input, got format {fmt!r}"
        )
    return sample, dict(report)


def _resolve_stayer(sample: DifferencedSample, config: dict):
    block = config.get("stayer", {})
    if not isinstance(block, dict):
        raise InputError("'stayer' must be an object")
    try:
        if block.get("threshold") is not None:
            threshold = float(block["threshold"])
            if not threshold > 0.0:
                raise InputError("stayer threshold must be positive")
        else:
            threshold = stayer_threshold_rule(
                sample.x,
                float(block.get("threshold_scale", 4.0)),
                float(block.get("threshold_rate", 1.0 / 3.0)),
            )
        bandwidth = block.get("bandwidth")
        bandwidth = None if bandwidth is None else float(bandwidth)
    except InputError:
        raise
    except (TypeError, ValueError) as exc:
        raise InputError(f"stayer: {exc}") from None
    return threshold, bandwidth


def _dimension(block: dict) -> int:
    if "dimension" not in block:
        raise InputError("missing 'dimension' in the estimate block")
    try:
        dim = int(block["dimension"])
    except (TypeError, ValueError):
        raise InputError("dimension must be an integer") from None
    if dim < 1 or dim % 2 == 0:
        raise InputError("dimension must be an odd positive integer")
    return dim


def _estimate_setup(sample, config: dict):
    """Resolve the fixed-tuning first-stage configuration for a design.

    Returns (stage config, dimension, tuning description dict).
    """
    design = config["design"]
    block = config.get("estimate", {})
    if not isinstance(block, dict):
        raise InputError("'estimate' must be an object")
    trim = float(config.get("trim_threshold", DEFAULT_TRIM_THRESHOLD))
    dim = _dimension(block)
    if design == "irregular":
        threshold, stayer_bandwidth = _resolve_stayer(sample, config)
        if "bandwidth" not in block:
            raise InputError("missing 'bandwidth' in the estimate block")
        bandwidth = _bandwidth_value(block["bandwidth"], "bandwidth")
        try:
            stage = IrregularConfig(
                stayer_threshold=threshold,
                numerator_bandwidth=bandwidth,
                stayer_bandwidth=stayer_bandwidth,
                trim_threshold=trim,
            )
        except ValueError as exc:
            raise InputError(str(exc)) from None
        tuning = {
            "stayer_threshold": threshold,
            "stayer_bandwidth": stage.effective_stayer_bandwidth,
            "bandwidth": bandwidth
            if not isinstance(bandwidth, NearestNeighborRule)
            else {"neighbor_count": bandwidth.count},
            "dimension": dim,
            "trim_threshold": trim,
        }
        return stage, dim, tuning
    if "regressor_bandwidth" not in block:
        raise InputError("missing 'regressor_bandwidth' in the estimate block")
    regressor_bandwidth = _bandwidth_value(
        block["regressor_bandwidth"], "regressor bandwidth"
    )
    if isinstance(regressor_bandwidth, NearestNeighborRule):
        raise InputError("the regular design takes a fixed regressor bandwidth")
    direction_bandwidth = block.get("direction_bandwidth")
    if direction_bandwidth is None:
        try:
            direction_bandwidth = circular_silverman_bandwidth(
                precompute_regular(sample).direction
            )
        except ValueError as exc:
            raise InputError(f"direction bandwidth rule: {exc}") from None
    else:
        direction_bandwidth = float(direction_bandwidth)
    try:
        stage = RegularConfig(
            regressor_bandwidth=regressor_bandwidth,
            direction_bandwidth=direction_bandwidth,
            trim_threshold=trim,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    tuning = {
        "regressor_bandwidth": regressor_bandwidth,
        "direction_bandwidth": direction_bandwidth,
        "dimension": dim,
        "trim_threshold": trim,
    }
    return stage, dim, tuning


def cmd_simulate(config: dict) -> None:
    spec = _build_dgp(config)
    try:
        n = int(config.get("n_units", 2000))
    except (TypeError, ValueError):
        raise InputError("n_units must be an integer") from None
    if n < 1:
        raise InputError("n_units must be at least 1")
    out = _outdir(config)
    sample, latent = simulate(spec, n, config["seed"])
    width = len(str(n - 1))
    ids = [f"{i:0{width}d}" for i in range(n)]
    _write_csv(
        out / "sample.csv",
        ["id", "y", "x"],
        zip(ids, sample.y, sample.x),
        config,
    )
    _write_csv(
        out / "latent.csv",
        ["id", "beta", "disturbance", "scale", "innovation"],
        zip(ids, latent.beta, latent.disturbance, latent.scale, latent.innovation),
        config,
    )
    metadata = {
        "config": config,
        "version": __version__,
        "generator": dataclasses.asdict(spec),
        "disturbance_variance": spec.disturbance_variance,
        "n_units": n,
        "seed": config["seed"],
    }
    if spec.error_family == "laplace":
        metadata["laplace_scales"] = list(spec.laplace_scales)
    _write_json(out / "metadata.json", metadata)
    print(f"simulate: wrote {n} units to {out / 'sample.csv'}")


def cmd_estimate(config: dict) -> None:
    sample, ingest = _load_sample(config)
    grid = _build_grid(config)
    eval_grid = _build_eval_grid(config)
    stage, dim, tuning = _estimate_setup(sample, config)
    out = _outdir(config)
    if config["design"] == "irregular":
        target = first_stage_irregular(sample, stage, grid)
    else:
        target = first_stage_regular(sample, stage, grid)
    solver = SieveSolver(grid, HermiteBasis(dim))
    estimate = evaluate_and_postprocess(solver.solve(target.values), eval_grid)
    payload = {
        "config": config,
        "version": __version__,
        "design": config["design"],
        "tuning": tuning,
        "ingest": ingest,
        "anchor": float(target.values[grid.nodes.size // 2].real),
        "trim": {
            "max_fraction": float(target.trim_fraction.max()),
            "min_retained": int(target.retained_count.min()),
        },
        "eval_grid": estimate.eval_grid,
        "raw": estimate.raw_values,
        "processed": estimate.processed_values,
        "moments": {
            "mean": estimate.mean,
            "variance": estimate.variance,
            "sd": estimate.sd,
        },
        "tail_mass": estimate.tail_mass,
    }
    _write_json(out / "density.json", payload)
    _write_csv(
        out / "density.csv",
        ["grid", "raw", "processed"],
        zip(estimate.eval_grid, estimate.raw_values, estimate.processed_values),
        config,
    )
    print(
        f"estimate: mean={estimate.mean:.6g} sd={estimate.sd:.6g} "
        f"-> {out / 'density.json'}"
    )


def cmd_cv(config: dict) -> None:
    sample, ingest = _load_sample(config)
    grid = _build_grid(config)
    design = config["design"]
    trim = float(config.get("trim_threshold", DEFAULT_TRIM_THRESHOLD))
    if design == "irregular":
        threshold, stayer_bandwidth = _resolve_stayer(sample, config)
        fixed = IrregularFixedParams(
            stayer_threshold=threshold,
            stayer_bandwidth=stayer_bandwidth,
            trim_threshold=trim,
        )
        fixed_report = {
            "stayer_threshold": threshold,
            "stayer_bandwidth": fixed.effective_stayer_bandwidth,
            "trim_threshold": trim,
        }
    else:
        block = config.get("estimate", {})
        direction_bandwidth = block.get("direction_bandwidth")
        if direction_bandwidth is None:
            try:
                direction_bandwidth = circular_silverman_bandwidth(
                    precompute_regular(sample).direction
                )
            except ValueError as exc:
                raise InputError(f"direction bandwidth rule: {exc}") from None
        fixed = RegularFixedParams(
            direction_bandwidth=float(direction_bandwidth), trim_threshold=trim
        )
        fixed_report = {
            "direction_bandwidth": fixed.direction_bandwidth,
            "trim_threshold": trim,
        }
    cv_config = _merge_cv(CvConfig(), config.get("cv", {}))
    out = _outdir(config)
    result = repeated_cv(sample, fixed, cv_config, grid, design=design)
    payload = {
        "config": config,
        "version": __version__,
        "design": design,
        "fixed": fixed_report,
        "ingest": ingest,
        **cv_report(result),
    }
    _write_json(out / "cv.json", payload)
    bandwidth, dim = result.selected
    label = (
        f"neighbor_count={bandwidth.count}"
        if isinstance(bandwidth, NearestNeighborRule)
        else f"{float(bandwidth):.6g}"
    )
    print(f"cv: selected bandwidth {label}, dimension {dim} -> {out / 'cv.json'}")


def cmd_bootstrap(config: dict) -> None:
    sample, ingest = _load_sample(config)
    grid = _build_grid(config)
    eval_grid = _build_eval_grid(config)
    stage, dim, tuning = _estimate_setup(sample, config)
    block = config.get("bootstrap", {})
    if not isinstance(block, dict):
        raise InputError("'bootstrap' must be an object")
    try:
        n_draws = int(block.get("n_draws", DEFAULT_N_DRAWS))
        alpha = float(block.get("alpha", 0.10))
    except (TypeError, ValueError):
        raise InputError("bootstrap: n_draws must be an integer, alpha a number") from None
    if not 0.0 < alpha < 1.0:
        raise InputError("bootstrap: alpha must lie in (0, 1)")
    if n_draws < 1:
        raise InputError("bootstrap: n_draws must be at least 1")
    pipeline = FrozenPipeline(
        design=config["design"],
        config=stage,
        grid=grid,
        dimension=dim,
        eval_grid=eval_grid,
    )
    out = _outdir(config)
    run = pairs_bootstrap(sample, pipeline, n_draws=n_draws, seed=config["seed"])
    payload = {
        "config": config,
        "version": __version__,
        "design": config["design"],
        "ingest": ingest,
        **bootstrap_report(run, alpha),
    }
    _write_json(out / "bootstrap.json", payload)
    lower = np.asarray(payload["band_lower"], dtype=float)
    upper = np.asarray(payload["band_upper"], dtype=float)
    se = payload["pointwise_se"]
    se_col = (
        np.full(run.point.eval_grid.size, "", dtype=object)
        if se is None
        else np.asarray(se, dtype=float)
    )
    _write_csv(
        out / "bands.csv",
        ["grid", "point", "lower", "upper", "se"],
        zip(run.point.eval_grid, run.point.processed_values, lower, upper, se_col),
        config,
    )
    print(
        f"bootstrap: {n_draws} draws, {run.n_redrawn} redrawn "
        f"-> {out / 'bootstrap.json'}"
    )


def cmd_montecarlo(config: dict) -> None:
    preset = config.get("preset")
    if preset is None:
        raise InputError("missing 'preset' (one of: " + ", ".join(sorted(DGP_PRESETS)) + ")")
    try:
        reps = int(config.get("reps", 20))
    except (TypeError, ValueError):
        raise InputError("reps must be an integer") from None
    if reps < 1:
        raise InputError("reps must be at least 1")
    spec = _build_dgp(config)
    overrides = {}
    try:
        if "n_units" in config:
            overrides["n_units"] = int(config["n_units"])
        if "threshold_scale" in config:
            overrides["threshold_scale"] = float(config["threshold_scale"])
        if "trim_threshold" in config:
            overrides["trim_threshold"] = float(config["trim_threshold"])
        block = config.get("grid", {})
        if "cutoff" in block:
            overrides["cutoff"] = float(block["cutoff"])
        if "n_nodes" in block:
            overrides["n_nodes"] = int(block["n_nodes"])
        if "weight_kind" in block:
            overrides["weight_kind"] = str(block["weight_kind"])
    except (TypeError, ValueError) as exc:
        raise InputError(f"montecarlo overrides: {exc}") from None
    if "eval_grid" in config:
        overrides["eval_grid"] = _build_eval_grid(config)
    try:
        estimator = preset_estimator_config(str(preset), **overrides)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    if "cv" in config:
        estimator = dataclasses.replace(
            estimator, cv=_merge_cv(estimator.cv, config["cv"])
        )
    out = _outdir(config)
    try:
        summary = monte_carlo_run(
            spec, reps, estimator, seed=config["seed"], n_workers=config["workers"]
        )
    except RuntimeError as exc:
        raise FeasibilityError(str(exc)) from None
    payload = {
        "config": config,
        "version": __version__,
        "workers": config["workers"],
        **monte_carlo_report(summary),
    }
    _write_json(out / "montecarlo.json", payload)
    write_summary_csv(summary, out / "summary.csv", preamble=_config_preamble(config))
    report = payload["ise"]
    print(
        f"montecarlo: {reps - summary.n_failed}/{reps} replications, "
        f"median ISE {report['median']:.4g} -> {out / 'montecarlo.json'}"
    )


def cmd_diagnose(config: dict) -> None:
    if config["design"] != "irregular":
        raise InputError("the support diagnostic applies to the irregular design")
    sample, ingest = _load_sample(config)
    threshold, _ = _resolve_stayer(sample, config)
    try:
        alpha = float(config.get("support_alpha", 0.05))
    except (TypeError, ValueError):
        raise InputError("support_alpha must be a number") from None
    if not 0.0 < alpha < 0.5:
        raise InputError("support_alpha must lie in (0, 0.5)")
    out = _outdir(config)
    lower, upper = coefficient_support_bounds(sample, threshold, alpha)
    part = partition_stayers(sample, threshold)
    payload = {
        "config": config,
        "version": __version__,
        "ingest": ingest,
        "stayer_threshold": threshold,
        "alpha": alpha,
        "support_lower": lower,
        "support_upper": upper,
        "n_stayers": int(part.stayer_indices.size),
        "n_movers": int(part.mover_indices.size),
    }
    _write_json(out / "diagnose.json", payload)
    print(
        f"diagnose: support approximately [{lower:.4g}, {upper:.4g}] "
        f"({part.stayer_indices.size} stayers) -> {out / 'diagnose.json'}"
    )


_HANDLERS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "cv": cmd_cv,
    "bootstrap": cmd_bootstrap,
    "montecarlo": cmd_montecarlo,
    "diagnose": cmd_diagnose,
}

# Annotated starting points for --emit-config; '#' lines are stripped by
# the loader, the rest must parse as JSON.
_TEMPLATES = {
    "simulate": """\
# Synthetic-panel generator settings.
{
  "seed": 0,
  "out": "runs/simulate",
  "n_units": 2000,
  "generator": {
    # one of: normal | skew | mixture | mixture-laplace
    "preset": "normal"
  }
}
""",
    "estimate": """\
# Fixed-tuning two-stage density fit.
{
  "design": "irregular",
  "seed": 0,
  "out": "runs/estimate",
  "input": "sample.csv",
  # differenced (id,y,x) | stacked (id,y1,y2,x1,x2) | panel (unit_id,period,outcome,regressor)
  "input_format": "differenced",
  "grid": {"cutoff": 4.0, "n_nodes": 101, "weight_kind": "standard-normal"},
  "eval_grid": {"lo": -3.0, "hi": 3.0, "n": 401},
  # smallest denominator modulus kept in the deconvolution ratios
  "trim_threshold": 1e-4,
  # stayer window: explicit "threshold", or the scale*spread*N^(-rate) rule
  "stayer": {"threshold_scale": 4.0, "threshold_rate": 0.3333333333333333},
  "estimate": {
    # fixed width, or {"neighbor_count": k} for the k-nearest-neighbor rule
    "bandwidth": 0.3,
    "dimension": 5
    # the regular design instead needs "regressor_bandwidth" and optionally
    # "direction_bandwidth" (defaults to a circular rule of thumb)
  }
}
""",
    "cv": """\
# Repeated K-fold search over bandwidth and sieve dimension.
{
  "design": "irregular",
  "seed": 0,
  "out": "runs/cv",
  "input": "sample.csv",
  "grid": {"cutoff": 4.0, "n_nodes": 101, "weight_kind": "standard-normal"},
  "trim_threshold": 1e-4,
  "stayer": {"threshold_scale": 4.0},
  "cv": {
    "n_folds": 5,
    "n_repeats": 20,
    # omit candidate_bandwidths for the multiplier grid around the
    # reference width; entries may be numbers or {"neighbor_count": k}
    "candidate_dimensions": [3, 5, 7, 9, 11, 13, 15],
    "max_instability": 100.0,
    "max_trim_fraction": 0.5,
    "rng_seed": 0
  }
}
""",
    "bootstrap": """\
# Pairs bootstrap around a fixed-tuning fit.
{
  "design": "irregular",
  "seed": 0,
  "out": "runs/bootstrap",
  "input": "sample.csv",
  "grid": {"cutoff": 4.0, "n_nodes": 101, "weight_kind": "standard-normal"},
  "eval_grid": {"lo": -3.0, "hi": 3.0, "n": 401},
  "trim_threshold": 1e-4,
  "stayer": {"threshold_scale": 4.0},
  "estimate": {"bandwidth": 0.3, "dimension": 5},
  "bootstrap": {
    "n_draws": 499,
    # two-sided level for the basic interval
    "alpha": 0.1
  }
}
""",
    "montecarlo": """\
# Replicated simulate/tune/fit study.
{
  "seed": 0,
  "out": "runs/montecarlo",
  # preset pairs a generator with its tuning grids:
  # normal | skew | mixture | mixture-laplace
  "preset": "normal",
  "reps": 20,
  "n_units": 2000
}
""",
    "diagnose": """\
# Indicative coefficient-support bounds (irregular design).
{
  "design": "irregular",
  "out": "runs/diagnose",
  "input": "sample.csv",
  "stayer": {"threshold_scale": 4.0},
  # disturbance quantile level for the stayer bracket
  "support_alpha": 0.05
}
""",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcdens",
        description="Coefficient-density estimation for short panels.",
    )
    parser.add_argument(
        "--version", action="version", version=f"rcdens {__version__}"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", help="JSON configuration file ('#' comment lines allowed)"
    )
    common.add_argument("--design", choices=list(DESIGNS))
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output directory (created if missing)")
    common.add_argument(
        "--emit-config",
        metavar="PATH",
        help="write an annotated config template and exit ('-' for stdout)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    simulate_p = sub.add_parser(
        "simulate", parents=[common], help="draw a synthetic two-period panel"
    )
    simulate_p.add_argument("--preset", choices=sorted(DGP_PRESETS))
    simulate_p.add_argument("--n-units", type=int, dest="n_units")
    for name, help_text in (
        ("estimate", "two-stage density fit with fixed tuning"),
        ("cv", "repeated K-fold tuning search"),
        ("bootstrap", "pairs bootstrap bands and moment table"),
        ("diagnose", "indicative coefficient-support bounds"),
    ):
        cmd = sub.add_parser(name, parents=[common], help=help_text)
        cmd.add_argument("--input", help="input CSV path")
        if name == "bootstrap":
            cmd.add_argument("--draws", type=int, help="bootstrap replications")
    montecarlo_p = sub.add_parser(
        "montecarlo", parents=[common], help="replicated simulate/tune/fit study"
    )
    montecarlo_p.add_argument("--preset", choices=sorted(DGP_PRESETS))
    montecarlo_p.add_argument("--reps", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "emit_config", None):
        text = _TEMPLATES[args.command]
        if args.emit_config == "-":
            sys.stdout.write(text)
        else:
            Path(args.emit_config).write_text(text, encoding="utf-8")
            print(f"wrote {args.emit_config}")
        return 0
    try:
        config = _resolve_config(args)
        _HANDLERS[args.command](config)
    except InputError as exc:
        print(f"rcdens {args.command}: input error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleCvError as exc:
        print(f"rcdens {args.command}: {exc}", file=sys.stderr)
        return 3
    except FeasibilityError as exc:
        print(f"rcdens {args.command}: infeasible: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"rcdens {args.command}: input error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"rcdens {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
