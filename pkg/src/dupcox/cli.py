"""Command-line entry point: ``dupcox {compare,fit,simulate}``.

Runs are driven by a JSON config file (a key/value tree); the command line
carries only the subcommand and common overrides (input, output, seed,
format).  Every output embeds the tool version, a hash of the effective
config, and the seed, so runs are reproducible byte for byte.

Exit codes: 0 success, 1 config error, 2 data/estimation error, 3 fit
non-convergence (the report is still written with diagnostics).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .cox import FitOptions
from .data import Schema, load_dataset, validate
from .design import ExposureSpec, build_design_matrix, duplicate_augment
from .errors import ConfigError, DataError, DupcoxError, EstimationError
from .inference import compare_exposures, render_table
from .simlab import SimConfig, estimate_power, estimate_type1_error
from . import cox

_TOP_KEYS = {
    "compare": {"command", "input", "schema", "exposure", "fit", "output", "format", "seed"},
    "fit": {"command", "input", "schema", "exposure", "fit", "output", "format", "seed"},
    "simulate": {"command", "simulation", "output", "format", "seed"},
}
_SCHEMA_KEYS = {"id", "entry", "exit", "event", "exposures", "covariates", "strata"}
_EXPOSURE_KEYS = {"kind", "columns", "levels", "reference", "scale", "confidence"}
_FIT_KEYS = {"ties", "max_iterations", "gradient_tolerance", "step_halvings"}
_SIM_KEYS = {
    "n_subjects", "exposure_correlation", "true_beta", "covariate_effects",
    "weibull_shape", "weibull_scale", "censoring_rate", "n_strata",
    "replicate_count", "alpha", "include_naive",
}


def _check_keys(block: dict, allowed: set, context: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{context}: expected a key/value block")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {unknown}")


def _load_config(path: str, command: str, overrides: dict) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    _check_keys(config, _TOP_KEYS[command], "config")
    declared = config.get("command")
    if declared is not None and declared != command:
        raise ConfigError(
            f"config declares command {declared!r} but {command!r} was invoked"
        )
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    config["command"] = command
    return config


def _config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _build_schema(block: dict) -> Schema:
    _check_keys(block, _SCHEMA_KEYS, "schema")
    try:
        return Schema(
            id_column=block["id"],
            entry_column=block.get("entry"),
            exit_column=block["exit"],
            event_column=block["event"],
            exposure_columns=tuple(block["exposures"]),
            covariate_columns=tuple(block.get("covariates", ())),
            strata_columns=tuple(block.get("strata", ())),
        )
    except KeyError as exc:
        raise ConfigError(f"schema block is missing required key {exc.args[0]!r}") from None


def _build_spec(block: dict, schema: Schema) -> ExposureSpec:
    _check_keys(block, _EXPOSURE_KEYS, "exposure")
    kind = block.get("kind", "continuous")
    columns = tuple(block.get("columns", schema.exposure_columns))
    missing = [c for c in columns if c not in schema.exposure_columns]
    if missing:
        raise ConfigError(f"exposure column(s) {missing} are not declared in the schema")
    return ExposureSpec(
        kind=kind,
        source_columns=columns,
        n_levels=block.get("levels"),
        reference_level=block.get("reference", 1),
    )


def _build_fit_options(block: dict | None) -> FitOptions:
    if block is None:
        return FitOptions()
    _check_keys(block, _FIT_KEYS, "fit")
    return FitOptions(
        tie_method=block.get("ties", "efron"),
        max_iterations=block.get("max_iterations", 25),
        gradient_tolerance=block.get("gradient_tolerance", 1e-9),
        step_halvings_max=block.get("step_halvings", 10),
    )


def _metadata(config: dict) -> dict:
    return {
        "tool": {"name": "dupcox", "version": __version__},
        "config_hash": _config_hash(config),
        "seed": config.get("seed"),
        "command": config["command"],
    }


def _write_output(config: dict, human_text: str, machine_doc: dict) -> None:
    path = config.get("output")
    if path is None:
        return
    if config.get("format", "human") == "machine":
        Path(path).write_text(json.dumps(machine_doc, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    else:
        Path(path).write_text(human_text + "\n", encoding="utf-8")


def _human_header(config: dict) -> str:
    meta = _metadata(config)
    seed = meta["seed"]
    return (f"# dupcox {__version__}  command={meta['command']}  "
            f"config={meta['config_hash'][:12]}  seed={seed if seed is not None else '-'}")


def _load_and_validate(config: dict):
    if "input" not in config:
        raise ConfigError("config is missing 'input'")
    if "schema" not in config:
        raise ConfigError("config is missing the 'schema' block")
    schema = _build_schema(config["schema"])
    try:
        dataset = load_dataset(config["input"], schema)
    except FileNotFoundError:
        raise DataError(f"input file {config['input']} does not exist") from None
    report = validate(dataset)
    for check in report.checks:
        if not check.passed:
            print(f"warning: {check.name}: {check.detail}", file=sys.stderr)
    return dataset, schema


def run_compare(config: dict) -> int:
    dataset, schema = _load_and_validate(config)
    exposure_block = config.get("exposure", {})
    spec = _build_spec(exposure_block, schema)
    options = _build_fit_options(config.get("fit"))
    report = compare_exposures(
        dataset, spec, options,
        confidence=exposure_block.get("confidence", 0.95),
        scale=exposure_block.get("scale", 1.0),
        seed=config.get("seed"),
    )
    human = _human_header(config) + "\n" + render_table(report)
    machine = _metadata(config) | {"report": report.to_dict()}
    print(human)
    _write_output(config, human, machine)
    return 0 if report.fit.converged else 3


def run_fit(config: dict) -> int:
    dataset, schema = _load_and_validate(config)
    spec = _build_spec(config.get("exposure", {}), schema)
    options = _build_fit_options(config.get("fit"))
    design = build_design_matrix(duplicate_augment(dataset, spec), spec)
    fit_result = cox.fit(design, options)

    rows = []
    for i, name in enumerate(fit_result.column_names):
        if fit_result.aliased_mask[i]:
            rows.append((name, "aliased", "", ""))
            continue
        se_model = fit_result.model_covariance[i, i] ** 0.5
        se_robust = (fit_result.robust_covariance[i, i] ** 0.5
                     if fit_result.robust_covariance is not None else float("nan"))
        rows.append((name, f"{fit_result.coefficients[i]: .6f}",
                     f"{se_robust:.6f}", f"{se_model:.6f}"))
    width = max(len(r[0]) for r in rows) + 2
    lines = [_human_header(config),
             f"{'term':<{width}}{'coef':>12}{'se(robust)':>14}{'se(model)':>14}"]
    lines += [f"{r[0]:<{width}}{r[1]:>12}{r[2]:>14}{r[3]:>14}" for r in rows]
    diag = fit_result.diagnostics
    lines.append(f"log partial likelihood: {fit_result.log_partial_likelihood:.6f}")
    lines.append(
        f"converged: {'yes' if fit_result.converged else 'NO'} "
        f"({fit_result.iterations} iterations); strata used: {diag.n_strata_used} "
        f"(skipped {diag.n_strata_skipped}); events: {diag.n_events}"
    )
    if diag.message:
        lines.append(diag.message)
    human = "\n".join(lines)

    machine = _metadata(config) | {
        "coefficients": [
            {
                "term": name,
                "aliased": bool(fit_result.aliased_mask[i]),
                "coefficient": None if fit_result.aliased_mask[i]
                else float(fit_result.coefficients[i]),
            }
            for i, name in enumerate(fit_result.column_names)
        ],
        "log_partial_likelihood": float(fit_result.log_partial_likelihood),
        "converged": fit_result.converged,
        "iterations": fit_result.iterations,
    }
    print(human)
    _write_output(config, human, machine)
    return 0 if fit_result.converged else 3


def run_simulate(config: dict) -> int:
    if "simulation" not in config:
        raise ConfigError("config is missing the 'simulation' block")
    block = config["simulation"]
    _check_keys(block, _SIM_KEYS, "simulation")
    try:
        sim_config = SimConfig(
            n_subjects=block["n_subjects"],
            exposure_correlation=block["exposure_correlation"],
            true_beta=tuple(block["true_beta"]),
            covariate_effects=tuple(block.get("covariate_effects", ())),
            weibull_shape=block.get("weibull_shape", 1.0),
            weibull_scale=block.get("weibull_scale", 1.0),
            censoring_rate=block.get("censoring_rate", 0.25),
            n_strata=block.get("n_strata", 1),
            replicate_count=block["replicate_count"],
            master_seed=config.get("seed", 0),
        )
    except KeyError as exc:
        raise ConfigError(f"simulation block is missing required key {exc.args[0]!r}") from None
    alpha = block.get("alpha", 0.05)
    include_naive = bool(block.get("include_naive", False))

    betas = set(sim_config.true_beta)
    runner = estimate_type1_error \
        if (len(betas) == 1 or sim_config.exposure_correlation == 1.0) else estimate_power
    result = runner(sim_config, alpha, include_naive=include_naive)

    lines = [
        _human_header(config),
        f"scenario: {result.scenario}  alpha={result.alpha}",
        f"rejection rate: {result.rejection_rate:.4f} "
        f"[{result.ci_lower:.4f}, {result.ci_upper:.4f}] (95% Monte Carlo CI)",
        f"replicates: {result.n_used} used / {result.n_replicates} total "
        f"({result.n_failures} failed fits)",
        f"scenario valid: {'yes' if result.valid else 'NO (failure fraction > 2%)'}",
    ]
    if result.ci_overlap_fraction is not None:
        lines.append(f"per-exposure CI overlap fraction: {result.ci_overlap_fraction:.4f}")
    if result.naive_rejection_rate is not None:
        lines.append(f"naive (uncorrelated z) rejection rate: "
                     f"{result.naive_rejection_rate:.4f}")
    human = "\n".join(lines)

    machine = _metadata(config) | {"result": result.to_dict()}
    print(human)
    _write_output(config, human, machine)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dupcox",
        description="Duplication-method comparison of exposure associations "
                    "in stratified Cox models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("compare", "test whether exposures associate differently with the outcome"),
        ("fit", "fit the augmented interaction model and print coefficients"),
        ("simulate", "Monte Carlo calibration of the comparison test"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--input", help="override the input path from the config")
        p.add_argument("--output", help="override the output path from the config")
        p.add_argument("--seed", type=int, help="override the seed from the config")
        p.add_argument("--format", choices=("human", "machine"),
                       help="override the output format from the config")
    args = parser.parse_args(argv)

    runners = {"compare": run_compare, "fit": run_fit, "simulate": run_simulate}
    try:
        config = _load_config(args.config, args.command, {
            "input": args.input,
            "output": args.output,
            "seed": args.seed,
            "format": args.format,
        })
        return runners[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, EstimationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except DupcoxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
