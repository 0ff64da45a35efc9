"""
Monte Carlo engine for exit-point statistics.
Runs ensembles of walks in parallel with per-sample random streams and bins the exit
parameter into a mergeable accumulator.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from itertools import repeat
from pathlib import Path

import numpy as np
import pandas as pd

from geometry import TWO_PI, Domain, domain_from_dict, domain_label, domain_to_dict, is_admissible_spacing, origin_clearance
from transition import TransitionTable, table_from_mapping, table_label, table_to_dict, uniform_table
from walker import DeviateStream, WalkInvariantError, run_simple_walks, run_walk

logger = logging.getLogger(__name__)

__version__ = "1.0.0"

MODELS = ("skw", "simple")
SKW_CHUNK_SIZE = 256
SIMPLE_CHUNK_SIZE = 4096
WALK_STREAM = 0
CHUNK_STREAM = 1


class RunConfigError(ValueError):
    """Raised when a run configuration cannot be executed."""


class AccumulatorError(ValueError):
    """Raised for empty or incompatible accumulators."""


class RunAbortedError(RuntimeError):
    """Raised when any walk of a run violated the walk invariants."""

    def __init__(self, message: str, accumulator: "EcdfAccumulator") -> None:
        super().__init__(message)
        self.accumulator = accumulator


@dataclass(frozen=True)
class RunConfig:
    domain: Domain
    table: TransitionTable = field(default_factory=uniform_table)
    spacing: float = 0.02
    n_samples: int = 1_000_000
    n_bins: int = 1000
    master_seed: int = 20170101
    n_workers: int = 1
    model: str = "skw"
    keep_raw: bool = False
    run_id: str = ""

    @property
    def label(self) -> str:
        name = self.run_id or f"{self.model}-{self.spacing:g}"
        return f"{name} [{domain_label(self.domain)}; {table_label(self.table)}]"


@dataclass
class EcdfAccumulator:
    bin_counts: np.ndarray
    total: int = 0
    aborted: int = 0
    max_steps: int = 0
    raw: pd.DataFrame | None = None

    @classmethod
    def empty(cls, n_bins: int) -> "EcdfAccumulator":
        return cls(bin_counts=np.zeros(n_bins, dtype=np.int64))

    @property
    def n_bins(self) -> int:
        return int(self.bin_counts.size)

    @property
    def completed(self) -> int:
        return int(self.bin_counts.sum())


def validate_run_config(cfg: RunConfig) -> None:
    if int(cfg.n_samples) < 1:
        raise RunConfigError(f"n_samples must be at least 1, got {cfg.n_samples}")
    if int(cfg.n_bins) < 2:
        raise RunConfigError(f"n_bins must be at least 2, got {cfg.n_bins}")
    if int(cfg.n_workers) < 1:
        raise RunConfigError(f"n_workers must be at least 1, got {cfg.n_workers}")
    if cfg.model not in MODELS:
        raise RunConfigError(f"model must be one of {MODELS}, got {cfg.model!r}")
    if not 0 <= int(cfg.master_seed) < 2**64:
        raise RunConfigError("master_seed must be a non-negative 64-bit integer")
    if not is_admissible_spacing(cfg.domain, cfg.spacing):
        raise RunConfigError(
            f"spacing {cfg.spacing} is not admissible: it must be positive and below the "
            f"origin clearance {origin_clearance(cfg.domain):.6g} of {domain_label(cfg.domain)}"
        )


def run_config_to_dict(cfg: RunConfig) -> dict:
    return {
        "run_id": cfg.run_id,
        "model": cfg.model,
        "domain": domain_to_dict(cfg.domain),
        "table": table_to_dict(cfg.table),
        "spacing": float(cfg.spacing),
        "n_samples": int(cfg.n_samples),
        "n_bins": int(cfg.n_bins),
        "master_seed": int(cfg.master_seed),
        "n_workers": int(cfg.n_workers),
        "keep_raw": bool(cfg.keep_raw),
    }


def run_config_from_dict(values: dict) -> RunConfig:
    return RunConfig(
        domain=domain_from_dict(values["domain"]),
        table=table_from_mapping(values.get("table")),
        spacing=float(values["spacing"]),
        n_samples=int(values["n_samples"]),
        n_bins=int(values["n_bins"]),
        master_seed=int(values["master_seed"]),
        n_workers=int(values.get("n_workers", 1)),
        model=str(values.get("model", "skw")),
        keep_raw=bool(values.get("keep_raw", False)),
        run_id=str(values.get("run_id", "")),
    )


def config_hash(cfg: RunConfig) -> str:
    """Content hash of everything that determines the result (worker count excluded)."""
    identity = run_config_to_dict(cfg)
    identity.pop("n_workers")
    canonical = json.dumps(identity, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def walk_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for sample `index`, independent of scheduling."""
    seed_sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(WALK_STREAM, int(index)))
    return np.random.Generator(np.random.Philox(seed_sequence))


def chunk_rng(master_seed: int, chunk: int) -> np.random.Generator:
    seed_sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(CHUNK_STREAM, int(chunk)))
    return np.random.Generator(np.random.Philox(seed_sequence))


def bin_edges(n_bins: int) -> np.ndarray:
    return np.linspace(0.0, TWO_PI, int(n_bins) + 1)


def bin_index(theta, n_bins: int):
    """floor(theta / (2*pi / n_bins)), kept inside the last bin for theta at 2*pi."""
    index = np.floor(np.asarray(theta, dtype=float) / (TWO_PI / n_bins)).astype(np.int64)
    return np.clip(index, 0, n_bins - 1)


def merge(a: EcdfAccumulator, b: EcdfAccumulator) -> EcdfAccumulator:
    if a.n_bins != b.n_bins:
        raise AccumulatorError(f"Cannot merge accumulators with {a.n_bins} and {b.n_bins} bins")

    raw_parts = [part for part in (a.raw, b.raw) if part is not None]
    raw = pd.concat(raw_parts, ignore_index=True) if raw_parts else None

    return EcdfAccumulator(
        bin_counts=a.bin_counts + b.bin_counts,
        total=a.total + b.total,
        aborted=a.aborted + b.aborted,
        max_steps=max(a.max_steps, b.max_steps),
        raw=raw,
    )


def ecdf(acc: EcdfAccumulator, theta_grid) -> np.ndarray:
    """
    Empirical CDF on a grid.

    Exact at bin edges; linear between them. Normalized by completed walks.
    """

    completed = acc.completed
    if completed == 0:
        raise AccumulatorError("Cannot build an ECDF from an empty accumulator")
    edges = bin_edges(acc.n_bins)
    at_edges = np.concatenate([[0.0], np.cumsum(acc.bin_counts)]) / completed
    at_edges[-1] = 1.0
    return np.interp(np.asarray(theta_grid, dtype=float), edges, at_edges)


def _chunk_bounds(n_samples: int, chunk_size: int) -> list[tuple[int, int, int]]:
    return [
        (chunk, start, min(start + chunk_size, n_samples))
        for chunk, start in enumerate(range(0, n_samples, chunk_size))
    ]


def _run_skw_chunk(cfg: RunConfig, start: int, stop: int) -> EcdfAccumulator:
    acc = EcdfAccumulator.empty(cfg.n_bins)
    rows = []
    for index in range(start, stop):
        stream = DeviateStream(walk_rng(cfg.master_seed, index))
        acc.total += 1
        try:
            record = run_walk(cfg.domain, cfg.table, cfg.spacing, stream)
        except WalkInvariantError as exc:
            acc.aborted += 1
            logger.error("Walk %d aborted (master_seed=%d): %s", index, cfg.master_seed, exc)
            continue
        acc.bin_counts[bin_index(record.theta, cfg.n_bins)] += 1
        acc.max_steps = max(acc.max_steps, record.steps)
        if cfg.keep_raw:
            rows.append(
                {
                    "sample": index,
                    "theta": record.theta,
                    "side": record.side,
                    "boundary_x": record.boundary_point[0],
                    "boundary_y": record.boundary_point[1],
                    "steps": record.steps,
                }
            )
    if cfg.keep_raw:
        acc.raw = pd.DataFrame(rows, columns=["sample", "theta", "side", "boundary_x", "boundary_y", "steps"])
    return acc


def _run_simple_chunk(cfg: RunConfig, chunk: int, start: int, stop: int) -> EcdfAccumulator:
    result = run_simple_walks(cfg.domain, cfg.spacing, chunk_rng(cfg.master_seed, chunk), stop - start)
    counts = np.bincount(bin_index(result["theta"], cfg.n_bins), minlength=cfg.n_bins).astype(np.int64)
    acc = EcdfAccumulator(
        bin_counts=counts,
        total=stop - start,
        max_steps=int(result["steps"].max()) if result["steps"].size else 0,
    )
    if cfg.keep_raw:
        acc.raw = pd.DataFrame(
            {
                "sample": np.arange(start, stop),
                "theta": result["theta"],
                "side": result["side"],
                "steps": result["steps"],
            }
        )
    return acc


def _run_chunk(cfg: RunConfig, chunk: int, start: int, stop: int) -> EcdfAccumulator:
    if cfg.model == "simple":
        acc = _run_simple_chunk(cfg, chunk, start, stop)
    else:
        acc = _run_skw_chunk(cfg, start, stop)
    logger.debug("Chunk %d [%d, %d) done", chunk, start, stop)
    return acc


def run_experiment(cfg: RunConfig) -> EcdfAccumulator:
    """
    Execute exactly n_samples walks and bin their exit parameters.

    The result depends only on (master_seed, n_samples, n_bins, model, domain, table,
    spacing): samples are split into fixed chunks whose streams derive from the sample
    or chunk index, and integer bin counts add the same way in any order.
    """

    validate_run_config(cfg)
    chunk_size = SIMPLE_CHUNK_SIZE if cfg.model == "simple" else SKW_CHUNK_SIZE
    bounds = _chunk_bounds(int(cfg.n_samples), chunk_size)
    workers = min(int(cfg.n_workers), len(bounds))

    logger.info(
        "Running %s: %d samples in %d chunks on %d worker(s)",
        cfg.label,
        cfg.n_samples,
        len(bounds),
        workers,
    )
    started = time.perf_counter()

    chunks, starts, stops = zip(*bounds)
    result = EcdfAccumulator.empty(cfg.n_bins)
    raw_parts = []

    def absorb(part: EcdfAccumulator) -> EcdfAccumulator:
        if part.raw is not None:
            raw_parts.append(part.raw)
        return merge(result, replace(part, raw=None))

    if workers == 1:
        for part in map(_run_chunk, repeat(cfg), chunks, starts, stops):
            result = absorb(part)
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            batch = max(1, len(bounds) // (workers * 4))
            for part in executor.map(_run_chunk, repeat(cfg), chunks, starts, stops, chunksize=batch):
                result = absorb(part)
    if raw_parts:
        result.raw = pd.concat(raw_parts, ignore_index=True).sort_values("sample", kind="stable").reset_index(drop=True)

    elapsed = time.perf_counter() - started
    logger.info(
        "Finished %s in %.1fs (completed=%d, aborted=%d, longest walk=%d steps)",
        cfg.label,
        elapsed,
        result.completed,
        result.aborted,
        result.max_steps,
    )

    if result.aborted:
        raise RunAbortedError(
            f"{result.aborted} of {result.total} walks violated the walk invariants in {cfg.label}",
            result,
        )
    return result


def default_workers() -> int:
    return os.cpu_count() or 1


def accumulator_payload(acc: EcdfAccumulator, cfg: RunConfig, wall_time_seconds: float = 0.0) -> dict:
    return {
        "header": {
            "config": run_config_to_dict(cfg),
            "config_hash": config_hash(cfg),
            "code_version": __version__,
            "wall_time_seconds": round(float(wall_time_seconds), 3),
            "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        },
        "n_bins": acc.n_bins,
        "total": int(acc.total),
        "aborted": int(acc.aborted),
        "max_steps": int(acc.max_steps),
        "bin_counts": [int(count) for count in acc.bin_counts],
    }


def save_accumulator(acc: EcdfAccumulator, cfg: RunConfig, path: Path, wall_time_seconds: float = 0.0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(accumulator_payload(acc, cfg, wall_time_seconds), handle, indent=2)
    if acc.raw is not None:
        acc.raw.to_csv(path.with_suffix(".raw.csv"), index=False)
    logger.info("Accumulator written to %s", path)
    return path


def load_accumulator(path: Path) -> tuple[EcdfAccumulator, RunConfig, dict]:
    """Read an accumulator file back as (accumulator, config, header)."""
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)

    header = payload["header"]
    counts = np.asarray(payload["bin_counts"], dtype=np.int64)
    if counts.size != int(payload["n_bins"]):
        raise AccumulatorError(f"{path}: bin_counts length {counts.size} does not match n_bins {payload['n_bins']}")
    acc = EcdfAccumulator(
        bin_counts=counts,
        total=int(payload["total"]),
        aborted=int(payload.get("aborted", 0)),
        max_steps=int(payload.get("max_steps", 0)),
    )
    return acc, run_config_from_dict(header["config"]), header


def ecdf_frame(acc: EcdfAccumulator) -> pd.DataFrame:
    """(theta, F) at the bin edges, ready for CSV export."""
    edges = bin_edges(acc.n_bins)
    return pd.DataFrame({"theta": edges, "F": ecdf(acc, edges)})


def accumulator_summary(acc: EcdfAccumulator, cfg: RunConfig) -> pd.DataFrame:
    """Display-ready summary of one run."""
    rows = [
        ("Run", cfg.label),
        ("Lattice spacing", f"{cfg.spacing:g}"),
        ("Samples", f"{acc.total:,}"),
        ("Completed walks", f"{acc.completed:,}"),
        ("Aborted walks", f"{acc.aborted:,}"),
        ("Longest walk (steps)", f"{acc.max_steps:,}"),
        ("Bins", f"{acc.n_bins:,}"),
        ("Lattice units per domain unit", f"{1.0 / cfg.spacing:,.1f}"),
    ]
    return pd.DataFrame(rows, columns=["Statistic", "Value"])


def with_workers(cfg: RunConfig, n_workers: int) -> RunConfig:
    return replace(cfg, n_workers=int(n_workers))
