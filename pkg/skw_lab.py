"""
Command-line front end for the smart kinetic walk lab.

    python skw_lab.py simulate --config recipes/fig4.json --workers 8
    python skw_lab.py analyze --recipe fig4
    python skw_lab.py oracle --domain D2 --spacing 0.005 --samples 1000000
    python skw_lab.py list-recipes

Exit codes: 0 success, 1 oracle bound exceeded, 2 usage, 3 parse error, 4 validation
error, 5 runtime invariant failure, 6 missing input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from analysis import (
    band_coverage,
    convergence_profile,
    convergence_test,
    curve_frame,
    difference_curve,
    domain_ratio_report,
    l1_norm,
    oracle_report,
    rescale_and_collapse,
    rescaled_frame,
    shape_universality_test,
    sup_distance,
)
from engine import (
    EcdfAccumulator,
    RunAbortedError,
    RunConfig,
    __version__,
    accumulator_summary,
    config_hash,
    default_workers,
    load_accumulator,
    run_config_to_dict,
    run_experiment,
    save_accumulator,
    with_workers,
)
from run_config import (
    ConfigParseError,
    ConfigValidationError,
    ExperimentRecipe,
    MissingAccumulatorError,
    RecipeUsageError,
    accumulator_path,
    list_recipes,
    load_defaults,
    load_recipe,
    resolve_domain,
    resolve_output_dir,
)

logger = logging.getLogger("skw_lab")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_RUNTIME = 5
EXIT_MISSING = 6


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help="Output directory (overrides SKW_LAB_OUT_DIR and the recipe).")
    common.add_argument("--workers", type=int, help="Worker processes (default: all cores).")
    common.add_argument("--force", action="store_true", help="Recompute accumulators that already exist.")
    common.add_argument("--bins", type=int, help="Override n_bins for every run.")
    common.add_argument("--seed", type=int, help="Override master_seed for every run.")
    common.add_argument("--verbose", action="store_true", help="Debug logging.")
    return common


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    common = _common_options()
    parser = argparse.ArgumentParser(description="Exit distributions of smart kinetic walks versus harmonic measure.")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="Run every RunConfig of a config or recipe.")
    simulate.add_argument("--config", required=True, help="Run config or recipe (path or shipped recipe name).")

    analyze = commands.add_parser("analyze", parents=[common], help="Analyze the accumulators of a recipe.")
    analyze.add_argument("--recipe", required=True, help="Recipe path or shipped recipe name.")
    analyze.add_argument("--threshold", type=float, help="Override the collapse and shape thresholds.")

    oracle = commands.add_parser("oracle", parents=[common], help="Plain random walk against harmonic measure.")
    oracle.add_argument("--domain", help="Domain preset name from lab_defaults.json (default: oracle domain).")
    oracle.add_argument("--spacing", type=float)
    oracle.add_argument("--samples", type=int)
    oracle.add_argument("--bound", type=float, help="Calibrated bound on sup|F - H|.")

    commands.add_parser("list-recipes", parents=[common], help="List the shipped recipes.")
    return parser.parse_args(argv)


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def write_report(report: Mapping, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True, default=_to_builtin) + "\n", encoding="utf-8")
    logger.info("Report written to %s", path)
    return path


def apply_overrides(cfg: RunConfig, bins: int | None = None, seed: int | None = None) -> RunConfig:
    updates = {}
    if bins is not None:
        updates["n_bins"] = int(bins)
    if seed is not None:
        updates["master_seed"] = int(seed)
    return replace(cfg, **updates) if updates else cfg


def simulate_recipe(
    recipe: ExperimentRecipe,
    out_dir: Path,
    workers: int,
    force: bool = False,
    bins: int | None = None,
    seed: int | None = None,
) -> pd.DataFrame:
    """Run each RunConfig once; the accumulator file name is the config's content hash."""
    rows = []
    for cfg in recipe.runs:
        cfg = with_workers(apply_overrides(cfg, bins, seed), workers)
        path = accumulator_path(out_dir, cfg)
        if path.exists() and not force:
            logger.warning("Skipping %s: %s already exists (use --force to recompute)", cfg.run_id, path)
            rows.append({"run": cfg.run_id, "hash": config_hash(cfg), "status": "skipped", "path": str(path)})
            continue

        started = time.perf_counter()
        try:
            acc = run_experiment(cfg)
        except RunAbortedError as exc:
            save_accumulator(exc.accumulator, cfg, path.with_suffix(".aborted.json"), time.perf_counter() - started)
            raise
        save_accumulator(acc, cfg, path, time.perf_counter() - started)
        print(accumulator_summary(acc, cfg).to_string(index=False))
        rows.append({"run": cfg.run_id, "hash": config_hash(cfg), "status": "written", "path": str(path)})
    return pd.DataFrame(rows, columns=["run", "hash", "status", "path"])


def load_run(out_dir: Path, cfg: RunConfig) -> EcdfAccumulator:
    path = accumulator_path(out_dir, cfg)
    if not path.exists():
        raise MissingAccumulatorError(f"No accumulator for run {cfg.run_id!r} at {path}; run simulate first")
    acc, _, header = load_accumulator(path)
    if header.get("config_hash") != config_hash(cfg):
        raise ConfigValidationError(f"{path} was produced by a different config than run {cfg.run_id!r}")
    return acc


def _provenance(recipe: ExperimentRecipe, runs: Sequence[RunConfig]) -> dict:
    return {
        "recipe": recipe.name,
        "runs": {cfg.run_id: {"config_hash": config_hash(cfg), **run_config_to_dict(cfg)} for cfg in runs},
        "code_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def analyze_recipe(
    recipe: ExperimentRecipe,
    out_dir: Path,
    defaults: Mapping,
    bins: int | None = None,
    seed: int | None = None,
    threshold: float | None = None,
) -> dict[str, dict]:
    """Evaluate every analysis of the recipe; writes CSV curves and one JSON report per analysis."""
    settings = defaults.get("analysis", {})
    configs = {cfg.run_id: apply_overrides(cfg, bins, seed) for cfg in recipe.runs}
    accumulators: dict[str, EcdfAccumulator] = {}
    curves = {}

    def curve_for(run_id: str):
        if run_id not in curves:
            cfg = configs[run_id]
            accumulators[run_id] = load_run(out_dir, cfg)
            curves[run_id] = difference_curve(accumulators[run_id], cfg.domain, cfg)
        return curves[run_id]

    csv_dir = out_dir / "curves"
    csv_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    for position, analysis in enumerate(recipe.analyses):
        kind = analysis["kind"]
        name = str(analysis.get("name", f"{kind}{position}"))

        if kind == "ratio":
            pairs = {}
            for label, (x_id, y_id) in analysis["pairs"].items():
                curve_for(x_id)
                curve_for(y_id)
                pairs[label] = (accumulators[x_id], accumulators[y_id], configs[x_id].domain, configs[x_id], configs[y_id])
            report = domain_ratio_report(
                pairs,
                n_boot=int(analysis.get("n_boot", settings.get("bootstrap_replicates", 1000))),
                seed=int(analysis.get("bootstrap_seed", 0)),
                expected=analysis.get("expected"),
                tolerance=analysis.get("tolerance", settings.get("ratio_tolerance")),
            )
            used = [configs[run_id] for pair in analysis["pairs"].values() for run_id in pair]
        else:
            run_ids = list(analysis["runs"])
            selected = [curve_for(run_id) for run_id in run_ids]
            used = [configs[run_id] for run_id in run_ids]

            if kind == "difference":
                report = {"curves": {}}
                for run_id, curve in zip(run_ids, selected):
                    curve_frame(curve).to_csv(csv_dir / f"{name}_{run_id}.csv", index=False)
                    report["curves"][run_id] = {
                        "spacing": curve.spacing,
                        "n": curve.n,
                        "sup_abs_diff": sup_distance(curve),
                        "l1": l1_norm(curve),
                        "band_coverage": band_coverage(curve),
                    }
            elif kind == "collapse":
                limit = threshold if threshold is not None else analysis.get("threshold", settings.get("collapse_threshold", 3.0))
                report = rescale_and_collapse(selected, float(limit)).to_dict()
                reference = report["reference_spacing"]
                for run_id, curve in zip(run_ids, selected):
                    curve_frame(curve, reference).to_csv(csv_dir / f"{name}_{run_id}.csv", index=False)
                rescaled_frame(selected).to_csv(csv_dir / f"{name}_rescaled.csv", index=False)
            elif kind == "convergence":
                ratio_range = analysis.get("ratio_range", settings.get("convergence_ratio_range", [1.5, 2.6]))
                report = convergence_test(selected, tuple(ratio_range))
                convergence_profile(selected).to_csv(csv_dir / f"{name}_profile.csv", index=False)
            else:
                limit = threshold if threshold is not None else analysis.get("threshold", settings.get("shape_threshold", 3.0))
                report = shape_universality_test(selected, float(limit))

        if "expect" in analysis and "passed" in report:
            report["expect"] = analysis["expect"]
            report["matches_expectation"] = bool(report["passed"]) == (analysis["expect"] == "pass")
        report["kind"] = kind
        report["provenance"] = _provenance(recipe, used)
        write_report(report, out_dir / "reports" / f"{name}.json")
        reports[name] = report
    return reports


def run_oracle(
    domain_name: str,
    spacing: float,
    n_samples: int,
    n_bins: int,
    master_seed: int,
    workers: int,
    bound: float,
    defaults: Mapping,
    out_dir: Path | None = None,
) -> dict:
    """Ordinary random walk on a domain preset, judged against harmonic measure."""
    cfg = RunConfig(
        domain=resolve_domain(domain_name, defaults),
        spacing=float(spacing),
        n_samples=int(n_samples),
        n_bins=int(n_bins),
        master_seed=int(master_seed),
        n_workers=int(workers),
        model="simple",
        run_id=f"oracle-{domain_name}",
    )
    acc = run_experiment(cfg)
    curve = difference_curve(acc, cfg.domain, cfg)
    report = oracle_report(curve, bound)
    if out_dir is not None:
        (out_dir / "curves").mkdir(parents=True, exist_ok=True)
        curve_frame(curve).to_csv(out_dir / "curves" / f"{cfg.run_id}.csv", index=False)
        provenance = {
            "config": run_config_to_dict(cfg),
            "config_hash": config_hash(cfg),
            "code_version": __version__,
            "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        write_report({**report, "provenance": provenance}, out_dir / "reports" / f"{cfg.run_id}.json")
    return report


def _banner(title: str) -> None:
    print("=" * 80)
    print(title)
    print("=" * 80)


def _verdict(passed: bool) -> str:
    return "PASS" if passed else "FAIL"


def _dispatch(args: argparse.Namespace) -> int:
    defaults = load_defaults()
    workers = args.workers or default_workers()

    if args.command == "list-recipes":
        _banner("SKW LAB RECIPES")
        print(list_recipes().to_string(index=False))
        return EXIT_OK

    if args.command == "simulate":
        recipe = load_recipe(args.config, defaults)
        out_dir = resolve_output_dir(recipe.output_dir, args.out_dir)
        _banner(f"[SIMULATE] {recipe.name}: {len(recipe.runs)} run(s) on {workers} worker(s)")
        summary = simulate_recipe(recipe, out_dir, workers, force=args.force, bins=args.bins, seed=args.seed)
        print("\n" + summary.to_string(index=False))
        return EXIT_OK

    if args.command == "analyze":
        recipe = load_recipe(args.recipe, defaults)
        if not recipe.analyses:
            raise RecipeUsageError(f"Recipe {recipe.name!r} lists no analyses")
        out_dir = resolve_output_dir(recipe.output_dir, args.out_dir)
        _banner(f"[ANALYZE] {recipe.name}")
        reports = analyze_recipe(recipe, out_dir, defaults, bins=args.bins, seed=args.seed, threshold=args.threshold)
        rows = [
            {
                "analysis": name,
                "kind": report["kind"],
                "verdict": _verdict(report["passed"]) if "passed" in report else "-",
                "expect": report.get("expect", ""),
            }
            for name, report in reports.items()
        ]
        print(pd.DataFrame(rows).to_string(index=False))
        print(f"\nReports written to {out_dir / 'reports'}")
        return EXIT_OK

    oracle_defaults = defaults.get("oracle", {})
    engine_defaults = defaults.get("engine", {})
    domain_name = args.domain or oracle_defaults.get("domain", "unit_disk")
    bound = args.bound if args.bound is not None else float(oracle_defaults.get("calibrated_bound", 0.004))
    out_dir = resolve_output_dir(Path(defaults.get("output_dir", "outputs")) / "oracle", args.out_dir)
    _banner(f"[ORACLE] plain random walk on {domain_name}")
    report = run_oracle(
        domain_name=domain_name,
        spacing=args.spacing or oracle_defaults.get("spacing", 0.005),
        n_samples=args.samples or oracle_defaults.get("n_samples", 1_000_000),
        n_bins=args.bins or engine_defaults.get("n_bins", 1000),
        master_seed=args.seed if args.seed is not None else engine_defaults.get("master_seed", 20170101),
        workers=workers,
        bound=bound,
        defaults=defaults,
        out_dir=out_dir,
    )
    print(f"sup|F - H|        : {report['sup_abs_diff']:.6f}")
    print(f"4 sigma bound     : {report['four_sigma_bound']:.6f}")
    print(f"KS 1% critical    : {report['ks_critical_value_1pct']:.6f}")
    print(f"Calibrated bound  : {report['calibrated_bound']:.6f}  -> {_verdict(report['passed'])}")
    return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except RecipeUsageError as exc:
        print(f"[USAGE] {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigParseError as exc:
        print(f"[PARSE] {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"[MISSING] {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ValueError as exc:
        print(f"[INVALID] {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeError as exc:
        print(f"[ABORTED] {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
