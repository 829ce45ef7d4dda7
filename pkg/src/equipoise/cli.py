"""Command-line front end: estimate, balance, weights, simulate.

Every run writes its artifacts into --out-dir and finishes with a JSON
report embedding a manifest (command, resolved flags, input digests, seed,
version, timestamp) plus the SHA-256 digest of each companion file, so a
re-run with the same inputs and seed is byte-identical up to the
timestamp.

Exit codes: 0 success, 2 validation error, 3 numerical/convergence error,
4 I/O error.  Module errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .balance import assert_exact_balance, balance_report, baseline_table, score_histogram
from .data import Dataset, ingest, load_schema
from .errors import (
    BalanceError,
    DomainError,
    EquipoiseError,
    FitError,
    HarnessError,
    InferenceError,
    IngestionError,
    SchemaError,
)
from .estimators import EstimationRecipe, fit_outcome_regression, augmented_estimate, hajek_estimate, ps_adjusted_regression
from .inference import bootstrap_variance, confidence_interval, sandwich_variance
from .propensity import fit_binary_logistic, fit_multinomial_logistic
from .simulation import DgpConfig, SimulationResult, run_monte_carlo
from .weights import Kind, WeightScheme, compute_weights

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_SCHEME_CHOICES = [k.value for k in Kind]


@dataclass
class RunManifest:
    command: str
    flags: dict
    input_digests: dict
    seed: int | None
    version: str
    timestamp: str

    @classmethod
    def build(cls, command: str, args: argparse.Namespace, inputs: dict[str, Path]) -> "RunManifest":
        flags = {
            key: value for key, value in sorted(vars(args).items()) if key != "func"
        }
        digests = {name: _sha256(path) for name, path in inputs.items()}
        return cls(
            command=command,
            flags=flags,
            input_digests=digests,
            seed=getattr(args, "seed", None),
            version=__version__,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "flags": self.flags,
            "input_digests": self.input_digests,
            "seed": self.seed,
            "version": self.version,
            "timestamp": self.timestamp,
        }


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float) and value != value:
        return None
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def _write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(args) -> tuple[Dataset, dict[str, Path]]:
    schema = load_schema(args.schema)
    load_outcome = getattr(args, "load_outcome", True)
    data = ingest(args.data, schema, load_outcome=load_outcome)
    return data, {"data": Path(args.data), "schema": Path(args.schema)}


def _fit_for(data: Dataset):
    if data.arms == 2:
        return fit_binary_logistic(data)
    return fit_multinomial_logistic(data)


def _effect_report(estimate) -> dict:
    report = {
        "estimand_label": estimate.estimand_label,
        "contrast": list(estimate.contrast),
        "point": estimate.point,
        "method": estimate.method,
        "variance_method": estimate.variance_method,
        "se": estimate.se,
    }
    if estimate.ci is not None:
        level, lower, upper = estimate.ci
        report["ci"] = {"level": level, "lower": lower, "upper": upper}
    else:
        report["ci"] = None
    if estimate.ato_equals_ate:
        report["ato_equals_ate"] = True
    return report


def cmd_estimate(args) -> int:
    data, inputs = _load_inputs(args)
    manifest = RunManifest.build("estimate", args, inputs)
    out = _out_dir(args)

    method = "augmented" if args.augmented else args.method
    scheme = WeightScheme.from_name(args.scheme, args.trim_alpha)
    contrast = tuple(args.contrast)
    fit = _fit_for(data)

    weight_vec = None
    if method == "hajek":
        weight_vec = compute_weights(fit, data, scheme)
        estimate = hajek_estimate(data, weight_vec, contrast)
    elif method == "augmented":
        family = args.outcome_model or ("logistic" if data.outcome_family == "binary" else "linear")
        om = fit_outcome_regression(data, family)
        estimate = augmented_estimate(data, fit, scheme, om, contrast)
        weight_vec = compute_weights(fit, data, scheme)
    else:  # ps-regression
        estimate = ps_adjusted_regression(data, fit)
        weight_vec = compute_weights(fit, data, WeightScheme(Kind.OVERLAP))

    if args.variance == "sandwich":
        result = sandwich_variance(data, fit, scheme, estimate)
        se = result.se
    elif args.variance == "bootstrap":
        recipe = EstimationRecipe(
            scheme=scheme,
            method={"ps-regression": "ps_adjusted_regression"}.get(method, method),
            contrast=contrast,
            outcome_family=args.outcome_model,
        )
        result = bootstrap_variance(data, recipe, args.bootstrap_reps, args.seed)
        se = result.se
    else:
        result = None
        se = None
    if se is not None:
        lower, upper = confidence_interval(estimate.point, se, args.ci_level)
        estimate = estimate.with_inference(se, (args.ci_level, lower, upper), args.variance)

    report_balance = balance_report(data, weight_vec, contrast if data.arms == 2 else (1, 0))
    payload = {
        "estimate": _effect_report(estimate),
        "variance": None
        if result is None
        else {
            "method": result.method,
            "se": result.se,
            "replicates": result.replicates,
            "failed_replicates": result.failed_replicates,
            "bread_condition": result.bread_condition,
        },
        "balance": {
            "max_abs_weighted_smd": report_balance.max_abs_weighted_smd,
            "ess_per_arm": report_balance.ess_per_arm,
            "n_per_arm": data.arm_counts(),
        },
        "treatment_levels": list(data.treatment_levels),
        "manifest": manifest.to_dict(),
    }
    _write_json(out / "estimate.json", payload)
    print(json.dumps(_jsonable(payload["estimate"]), sort_keys=True))
    return EXIT_OK


def cmd_balance(args) -> int:
    args.load_outcome = False  # design phase: never read the outcome column
    data, inputs = _load_inputs(args)
    manifest = RunManifest.build("balance", args, inputs)
    out = _out_dir(args)

    scheme = WeightScheme.from_name(args.scheme, args.trim_alpha)
    fit = _fit_for(data)
    weight_vec = compute_weights(fit, data, scheme)
    contrast = tuple(args.contrast)
    report = balance_report(data, weight_vec, contrast)

    balance_rows = [
        {
            "covariate": name,
            "unweighted_smd": report.unweighted_smd[i],
            "weighted_smd": report.weighted_smd[i],
        }
        for i, name in enumerate(report.covariate_names)
    ]
    _write_csv(out / "balance.csv", ["covariate", "unweighted_smd", "weighted_smd"], balance_rows)

    table_rows = baseline_table(data, weight_vec)
    _write_csv(out / "baseline_table.csv", list(table_rows[0].keys()), table_rows)

    hist_rows = score_histogram(fit, data)
    _write_csv(out / "ps_histogram.csv", ["arm", "bin_low", "bin_high", "count"], hist_rows)

    artifacts = ["balance.csv", "baseline_table.csv", "ps_histogram.csv"]
    if not args.no_plots:
        from . import report as figures

        figures.save_overlap_figure(hist_rows, out / "fig_overlap.png")
        figures.save_smd_figure(
            report.covariate_names, report.unweighted_smd, report.weighted_smd, out / "fig_smd.png"
        )
        artifacts += ["fig_overlap.png", "fig_smd.png"]

    exact_gap = None
    if scheme.kind is Kind.OVERLAP and data.arms == 2 and fit.converged:
        exact_gap = assert_exact_balance(data, fit)
    payload = {
        "scheme": scheme.kind.value,
        "contrast": list(contrast),
        "max_abs_weighted_smd": report.max_abs_weighted_smd,
        "exact_balance_gap": exact_gap,
        "ess_per_arm": report.ess_per_arm,
        "n_per_arm": data.arm_counts(),
        "treatment_levels": list(data.treatment_levels),
        "artifacts": {name: _sha256(out / name) for name in artifacts},
        "manifest": manifest.to_dict(),
    }
    _write_json(out / "balance.json", payload)
    return EXIT_OK


def cmd_weights(args) -> int:
    args.load_outcome = False
    data, inputs = _load_inputs(args)
    manifest = RunManifest.build("weights", args, inputs)
    out = _out_dir(args)

    scheme = WeightScheme.from_name(args.scheme, args.trim_alpha)
    fit = _fit_for(data)
    weight_vec = compute_weights(fit, data, scheme)
    if data.arms == 2:
        score = fit.scores[:, 1]
    else:
        score = fit.scores[np.arange(data.n), data.treatment]
    rows = [
        {
            "unit": i,
            "arm": int(data.treatment[i]),
            "score": score[i],
            "weight": weight_vec.weights[i],
            "kept": bool(weight_vec.kept[i]),
        }
        for i in range(data.n)
    ]
    _write_csv(out / "weights.csv", ["unit", "arm", "score", "weight", "kept"], rows)
    artifacts = ["weights.csv"]
    if not args.no_plots:
        from . import report as figures

        figures.save_weights_figure(rows, out / "fig_weights.png")
        artifacts.append("fig_weights.png")
    payload = {
        "scheme": scheme.kind.value,
        "estimand_label": scheme.estimand_label,
        "ess_per_arm": weight_vec.ess_per_arm,
        "n_per_arm": data.arm_counts(),
        "kept": int(weight_vec.kept.sum()),
        "treatment_levels": list(data.treatment_levels),
        "artifacts": {name: _sha256(out / name) for name in artifacts},
        "manifest": manifest.to_dict(),
    }
    _write_json(out / "weights.json", payload)
    return EXIT_OK


_DGP_KEYS = {
    "n": int,
    "p": int,
    "overlap_level": float,
    "heterogeneity": float,
    "base_effect": float,
    "outcome_family": str,
    "noise_sd": float,
    "misspecified_propensity": bool,
    "misspecified_outcome": bool,
}
_HARNESS_KEYS = {
    "schemes": list,
    "score_source": str,
    "variance": str,
    "ci_level": float,
    "trim_alpha": float,
}


def load_simulation_config(path: str | Path) -> tuple[DgpConfig, dict]:
    """Parse a simulate config file: DGP keys plus harness keys."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read config file {path}: {exc}") from exc
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("config file must contain a JSON object")
    dgp_kwargs = {}
    harness = {}
    for key, value in obj.items():
        if key in _DGP_KEYS:
            caster = _DGP_KEYS[key]
            try:
                dgp_kwargs[key] = caster(value) if not isinstance(value, bool) or caster is bool else value
            except (TypeError, ValueError):
                raise SchemaError(f"config key {key!r} has invalid value {value!r}") from None
        elif key in _HARNESS_KEYS:
            harness[key] = value
        else:
            raise SchemaError(f"unknown config key: {key!r}")
    for required in ("n", "p", "overlap_level"):
        if required not in dgp_kwargs:
            raise SchemaError(f"missing config key: {required!r}")
    try:
        config = DgpConfig(**dgp_kwargs)
    except DomainError as exc:
        raise SchemaError(str(exc)) from exc
    return config, harness


def cmd_simulate(args) -> int:
    config, harness = load_simulation_config(args.config)
    manifest = RunManifest.build("simulate", args, {"config": Path(args.config)})
    out = _out_dir(args)
    result = run_monte_carlo(
        config,
        schemes=harness.get("schemes", ["iptw", "overlap"]),
        replicates=args.reps,
        seed=args.seed,
        score_source=harness.get("score_source", "fitted"),
        variance=harness.get("variance", "none"),
        ci_level=harness.get("ci_level", 0.95),
        trim_alpha=harness.get("trim_alpha", 0.1),
    )

    rep_rows = []
    for name in result.schemes:
        summary = result.summaries[name]
        for r in range(result.replicates):
            rep_rows.append(
                {
                    "replicate": r,
                    "scheme": name,
                    "point": summary.points[r] if np.isfinite(summary.points[r]) else "",
                    "se": summary.ses[r] if np.isfinite(summary.ses[r]) else "",
                    "covered": int(summary.covered[r]) if np.isfinite(summary.covered[r]) else "",
                }
            )
    _write_csv(out / "replicates.csv", ["replicate", "scheme", "point", "se", "covered"], rep_rows)
    artifacts = ["replicates.csv"]
    if not args.no_plots:
        from . import report as figures

        figures.save_simulation_figure(
            {name: result.summaries[name].points for name in result.schemes},
            {name: result.summaries[name].target for name in result.schemes},
            out / "fig_simulation.png",
        )
        artifacts.append("fig_simulation.png")
    _write_json(out / "simulation.json", _simulation_payload(result, manifest, out, artifacts))
    return EXIT_OK


def _simulation_payload(result: SimulationResult, manifest: RunManifest, out: Path, artifacts) -> dict:
    summaries = {}
    for name in result.schemes:
        s = result.summaries[name]
        summaries[name] = {
            "target": s.target,
            "bias": s.bias,
            "empirical_sd": s.empirical_sd,
            "rmse": s.rmse,
            "mean_se": s.mean_se,
            "coverage": s.coverage,
            "mean_ess_per_arm": s.mean_ess_per_arm,
            "failures": s.failures,
        }
    return {
        "config": {
            "n": result.config.n,
            "p": result.config.p,
            "overlap_level": result.config.overlap_level,
            "heterogeneity": result.config.heterogeneity,
            "base_effect": result.config.base_effect,
            "outcome_family": result.config.outcome_family,
            "noise_sd": result.config.noise_sd,
            "misspecified_propensity": result.config.misspecified_propensity,
            "misspecified_outcome": result.config.misspecified_outcome,
        },
        "replicates": result.replicates,
        "seed": result.seed,
        "score_source": result.score_source,
        "variance": result.variance,
        "ci_level": result.ci_level,
        "true_ate": result.true_ate,
        "true_ato": result.true_ato,
        "targets": {
            name: {"value": t.value, "error": t.error, "method": t.method}
            for name, t in result.targets.items()
        },
        "schemes": summaries,
        "artifacts": {name: _sha256(out / name) for name in artifacts},
        "manifest": manifest.to_dict(),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equipoise",
        description="Balancing-weight treatment effect estimation, balance "
        "diagnostics, and Monte Carlo evaluation.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    io_parent = argparse.ArgumentParser(add_help=False)
    io_parent.add_argument("--data", required=True, help="comma-delimited data file with a header row")
    io_parent.add_argument("--schema", required=True, help="JSON ingestion schema")
    io_parent.add_argument("--out-dir", required=True, help="directory for all outputs")
    io_parent.add_argument("--seed", type=int, default=0, help="seed for any resampling (default 0)")
    io_parent.add_argument("--scheme", choices=_SCHEME_CHOICES, default="overlap",
                           help="weighting scheme (default overlap)")
    io_parent.add_argument("--trim-alpha", type=float, default=0.1,
                           help="threshold for the trimmed scheme (default 0.1)")
    io_parent.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    p_est = sub.add_parser("estimate", parents=[io_parent], help="point estimate with inference")
    p_est.add_argument("--method", choices=["hajek", "augmented", "ps-regression"], default="hajek")
    p_est.add_argument("--augmented", action="store_true", help="shorthand for --method augmented")
    p_est.add_argument("--outcome-model", choices=["linear", "logistic"], default=None,
                       help="outcome regression family for --method augmented")
    p_est.add_argument("--contrast", type=int, nargs=2, default=[1, 0], metavar=("J", "K"))
    p_est.add_argument("--ci-level", type=float, default=0.95)
    p_est.add_argument("--variance", choices=["sandwich", "bootstrap", "none"], default="sandwich")
    p_est.add_argument("--bootstrap-reps", type=int, default=1000)
    p_est.set_defaults(func=cmd_estimate)

    p_bal = sub.add_parser("balance", parents=[io_parent],
                           help="covariate balance diagnostics (never reads the outcome)")
    p_bal.add_argument("--contrast", type=int, nargs=2, default=[1, 0], metavar=("J", "K"))
    p_bal.set_defaults(func=cmd_balance)

    p_wts = sub.add_parser("weights", parents=[io_parent], help="per-unit weights and ESS")
    p_wts.set_defaults(func=cmd_weights)

    p_sim = sub.add_parser("simulate", help="Monte Carlo evaluation harness")
    p_sim.add_argument("--config", required=True, help="JSON DGP + harness configuration")
    p_sim.add_argument("--reps", type=int, default=1000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument("--no-plots", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def _exit_code(exc: EquipoiseError) -> int:
    if isinstance(exc, (IngestionError,)):
        return EXIT_IO
    if isinstance(exc, (FitError, InferenceError, BalanceError, HarnessError)):
        return EXIT_NUMERICAL
    return EXIT_VALIDATION  # SchemaError, DomainError, anything else


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EquipoiseError as exc:
        code = _exit_code(exc)
        error = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return code
    except OSError as exc:
        error = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": EXIT_IO}}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
