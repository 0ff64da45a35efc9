"""
Configuration layer for the lab: project defaults, run configs and experiment recipes.

Recipes are JSON files that list RunConfigs (a spacing ladder or a test matrix) and the
analyses to apply to their accumulators. Every value a recipe omits falls back to
`lab_defaults.json`.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import pandas as pd

from engine import MODELS, RunConfig, RunConfigError, config_hash, run_config_to_dict, validate_run_config
from geometry import Domain, GeometryError, domain_from_dict
from transition import TransitionTableError, table_from_mapping

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).resolve().parent
LAB_DEFAULTS_PATH = PROJECT_ROOT / "lab_defaults.json"
RECIPES_DIR = PROJECT_ROOT / "recipes"
OUT_DIR_ENV = "SKW_LAB_OUT_DIR"

ANALYSIS_KINDS = ("difference", "collapse", "convergence", "ratio", "shape")
RUN_FIELDS = {"id", "domain", "table", "spacing", "n_samples", "n_bins", "master_seed", "model", "keep_raw"}


class ConfigParseError(ValueError):
    """Raised when a configuration file is not valid JSON."""


class ConfigValidationError(ValueError):
    """Raised when a configuration parses but describes an invalid experiment."""


class RecipeUsageError(ValueError):
    """Raised for recipes that ask for nothing to be done."""


class MissingAccumulatorError(FileNotFoundError):
    """Raised when an analysis needs an accumulator file that has not been produced."""


@dataclass(frozen=True)
class ExperimentRecipe:
    name: str
    description: str
    output_dir: str
    runs: tuple[RunConfig, ...]
    analyses: tuple[dict, ...] = ()
    source: Path | None = field(default=None, compare=False)

    def run(self, run_id: str) -> RunConfig:
        for cfg in self.runs:
            if cfg.run_id == run_id:
                return cfg
        raise ConfigValidationError(f"Recipe {self.name!r} has no run with id {run_id!r}")


def read_json(path: Path) -> Any:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigParseError(f"{path}: not UTF-8 text ({exc.reason} at byte {exc.start})") from exc


def load_defaults(path: Path = LAB_DEFAULTS_PATH) -> dict:
    """Project-level defaults; an absent file means built-in engine defaults only."""
    path = Path(path)
    if not path.exists():
        logger.warning("Defaults file %s not found; using built-in defaults", path)
        return {"domains": {}, "table": {}, "engine": {}, "analysis": {}, "oracle": {}}
    payload = read_json(path)
    if not isinstance(payload, dict):
        raise ConfigParseError(f"{path}: expected a JSON object at the top level")
    return payload


def canonical_dump(values: Mapping) -> str:
    return json.dumps(values, indent=2, sort_keys=True) + "\n"


def dump_run_config(cfg: RunConfig) -> str:
    """Byte-stable text form of a RunConfig."""
    return canonical_dump(run_config_to_dict(cfg))


def resolve_domain(value: Any, defaults: Mapping) -> Domain:
    """A domain is a preset name from the defaults file or an inline object."""
    if isinstance(value, str):
        presets = defaults.get("domains", {})
        if value not in presets:
            raise ConfigValidationError(f"Unknown domain preset {value!r}; known: {', '.join(sorted(presets))}")
        value = presets[value]
    if not isinstance(value, Mapping):
        raise ConfigValidationError(f"Domain must be a preset name or an object, got {value!r}")
    try:
        return domain_from_dict(dict(value))
    except GeometryError as exc:
        raise ConfigValidationError(str(exc)) from exc


def _run_from_entry(entry: Mapping, shared: Mapping, defaults: Mapping, index: int) -> RunConfig:
    if not isinstance(entry, Mapping):
        raise ConfigValidationError(f"Run #{index} must be an object, got {entry!r}")
    unknown = sorted(set(entry) - RUN_FIELDS)
    if unknown:
        raise ConfigValidationError(f"Run #{index} has unknown fields: {', '.join(unknown)}")

    engine_defaults = defaults.get("engine", {})

    def pick(name: str, fallback: Any = None) -> Any:
        if name in entry:
            return entry[name]
        if name in shared:
            return shared[name]
        return engine_defaults.get(name, fallback)

    domain_value = pick("domain")
    if domain_value is None:
        raise ConfigValidationError(f"Run #{index} does not name a domain")

    table_values = dict(defaults.get("table", {}))
    table_values.update(shared.get("table", {}) or {})
    table_values.update(entry.get("table", {}) or {})

    model = str(pick("model", "skw"))
    if model not in MODELS:
        raise ConfigValidationError(f"Run #{index}: model must be one of {MODELS}, got {model!r}")

    try:
        table = table_from_mapping(table_values)
        cfg = RunConfig(
            domain=resolve_domain(domain_value, defaults),
            table=table,
            spacing=float(pick("spacing", 0.02)),
            n_samples=int(pick("n_samples", 1_000_000)),
            n_bins=int(pick("n_bins", 1000)),
            master_seed=int(pick("master_seed", 20170101)),
            model=model,
            keep_raw=bool(pick("keep_raw", False)),
            run_id=str(entry.get("id", f"run{index}")),
        )
        validate_run_config(cfg)
        return cfg
    except (TransitionTableError, RunConfigError) as exc:
        raise ConfigValidationError(f"Run #{index}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigValidationError):
            raise
        raise ConfigValidationError(f"Run #{index}: {exc}") from exc


def _analysis_runs(analysis: Mapping) -> list[str]:
    if analysis.get("kind") == "ratio":
        return [run_id for pair in analysis.get("pairs", {}).values() for run_id in pair]
    return list(analysis.get("runs", []))


def _check_run_references(analysis: Mapping, name: str) -> None:
    if analysis.get("kind") == "ratio":
        pairs = analysis.get("pairs", {})
        if not isinstance(pairs, Mapping):
            raise ConfigValidationError(f"Analysis {name!r}: pairs must map a domain label to two run ids")
        groups = list(pairs.values())
    else:
        groups = [analysis.get("runs", [])]
    for group in groups:
        if not isinstance(group, (list, tuple)) or not all(isinstance(run_id, str) for run_id in group):
            raise ConfigValidationError(f"Analysis {name!r}: run references must be lists of run ids, got {group!r}")


def validate_recipe(recipe: ExperimentRecipe) -> None:
    """Structural checks that need no accumulator: ids, references, collapse ladders."""
    if not recipe.runs:
        raise RecipeUsageError(f"Recipe {recipe.name!r} contains no runs")

    ids = [cfg.run_id for cfg in recipe.runs]
    duplicates = sorted({run_id for run_id in ids if ids.count(run_id) > 1})
    if duplicates:
        raise ConfigValidationError(f"Duplicate run ids: {', '.join(duplicates)}")

    for analysis in recipe.analyses:
        kind = analysis.get("kind")
        name = analysis.get("name", kind)
        if kind not in ANALYSIS_KINDS:
            raise ConfigValidationError(f"Analysis {name!r}: kind must be one of {ANALYSIS_KINDS}, got {kind!r}")
        _check_run_references(analysis, name)
        referenced = _analysis_runs(analysis)
        if not referenced:
            raise ConfigValidationError(f"Analysis {name!r} references no runs")
        missing = [run_id for run_id in referenced if run_id not in ids]
        if missing:
            raise ConfigValidationError(f"Analysis {name!r} references unknown runs: {', '.join(missing)}")

        runs = [recipe.run(run_id) for run_id in referenced]
        if kind in ("collapse", "convergence"):
            if len(runs) < 2:
                raise ConfigValidationError(f"Analysis {name!r} needs at least two runs")
            if len({(cfg.domain, cfg.table, cfg.n_bins) for cfg in runs}) != 1:
                raise ConfigValidationError(f"Analysis {name!r}: runs must share domain, table and n_bins")
            spacings = [cfg.spacing for cfg in runs]
            if len(set(spacings)) != len(spacings):
                raise ConfigValidationError(f"Analysis {name!r}: lattice spacings must be distinct, got {spacings}")
        if kind == "shape":
            if len(runs) < 2:
                raise ConfigValidationError(f"Analysis {name!r} needs at least two runs")
            if len({(cfg.spacing, cfg.n_bins) for cfg in runs}) != 1:
                raise ConfigValidationError(f"Analysis {name!r}: runs must share spacing and n_bins")
        if kind == "ratio":
            pairs = analysis.get("pairs", {})
            if len(pairs) < 2:
                raise ConfigValidationError(f"Analysis {name!r} needs pairs on at least two domains")
            for label, pair in pairs.items():
                if len(pair) != 2:
                    raise ConfigValidationError(f"Analysis {name!r}: pair {label!r} must list two run ids")
                first, second = recipe.run(pair[0]), recipe.run(pair[1])
                if first.domain != second.domain or first.spacing != second.spacing:
                    raise ConfigValidationError(f"Analysis {name!r}: pair {label!r} must share domain and spacing")


def recipe_from_payload(payload: Any, defaults: Mapping, source: Path | None = None) -> ExperimentRecipe:
    """
    Build a recipe from parsed JSON.

    A payload without a "runs" list is read as a single run; that keeps one-off
    simulate configs and full recipes on one code path.
    """

    if not isinstance(payload, Mapping):
        raise ConfigValidationError("A config must be a JSON object")
    if not payload:
        raise RecipeUsageError(f"{source or 'config'} is empty: nothing to run")
    if "runs" not in payload:
        payload = {"name": source.stem if source else "run", "runs": [payload]}

    runs_payload = payload.get("runs")
    if not isinstance(runs_payload, list):
        raise ConfigValidationError("'runs' must be a list")
    shared = payload.get("defaults", {}) or {}
    runs = tuple(_run_from_entry(entry, shared, defaults, index) for index, entry in enumerate(runs_payload))

    analyses = payload.get("analyses", []) or []
    if not isinstance(analyses, list) or not all(isinstance(item, Mapping) for item in analyses):
        raise ConfigValidationError("'analyses' must be a list of objects")

    name = str(payload.get("name", source.stem if source else "recipe"))
    recipe = ExperimentRecipe(
        name=name,
        description=str(payload.get("description", "")),
        output_dir=str(payload.get("output_dir", Path(defaults.get("output_dir", "outputs")) / name)),
        runs=runs,
        analyses=tuple(dict(item) for item in analyses),
        source=source,
    )
    validate_recipe(recipe)
    return recipe


def load_recipe(path: Path, defaults: Mapping | None = None) -> ExperimentRecipe:
    path = find_recipe(path)
    defaults = load_defaults() if defaults is None else defaults
    return recipe_from_payload(read_json(path), defaults, source=path)


def find_recipe(name_or_path: str | Path) -> Path:
    """Accept a path, or the bare name of a shipped recipe ("fig4")."""
    path = Path(name_or_path)
    if path.exists():
        return path
    shipped = RECIPES_DIR / f"{path.stem}.json"
    if path.suffix in ("", ".json") and path.parent == Path(".") and shipped.exists():
        return shipped
    raise FileNotFoundError(f"Config or recipe not found: {name_or_path}")


def resolve_output_dir(recipe_dir: str | Path, override: str | Path | None = None) -> Path:
    """--out-dir beats the SKW_LAB_OUT_DIR environment variable, which beats the recipe."""
    if override:
        return Path(override)
    from_env = os.environ.get(OUT_DIR_ENV)
    if from_env:
        return Path(from_env)
    return Path(recipe_dir)


def accumulator_path(out_dir: Path, cfg: RunConfig) -> Path:
    return Path(out_dir) / "accumulators" / f"{config_hash(cfg)}.json"


def list_recipes(recipes_dir: Path = RECIPES_DIR) -> pd.DataFrame:
    rows = []
    for path in sorted(Path(recipes_dir).glob("*.json")):
        try:
            payload = read_json(path)
        except ConfigParseError as exc:
            logger.warning("Skipping unreadable recipe %s: %s", path, exc)
            continue
        rows.append(
            {
                "recipe": path.stem,
                "runs": len(payload.get("runs", [])),
                "analyses": ", ".join(item.get("kind", "?") for item in payload.get("analyses", [])),
                "description": payload.get("description", ""),
            }
        )
    return pd.DataFrame(rows, columns=["recipe", "runs", "analyses", "description"])
