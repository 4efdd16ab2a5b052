"""Parameter sweeps over scenarios, one result row per (value, solver, seed)."""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

from .. import model
from ..aas import aas_solve
from ..model import Allocation, TrmpInstance
from ..scenario import DEFAULT_DOCUMENT, load_scenario, place_entities
from ..sqp import sqp_solve
from .oracle import brute_force_oracle

PARAMS = ("num_cus", "epsilon", "gamma_r_db", "min_rate", "bs_budget", "radar_budget", "radar_distance")
SOLVERS = ("sqp", "aas", "oracle")
CSV_HEADER = ["param", "value", "solver", "seed", "sum_rate_bps", "runtime_s", "status"]

# Reference parameters with the noise, coupling and radar threshold readings
# under which two co-tracking radars and the BS can coexist.
BASELINE_OVERRIDES: dict[str, Any] = {
    "noise_total_w": 1e-18,
    "rtr_coupling_c": 0.0,
    "radar_sinr_threshold_db": 3.0,
}


def baseline_document(**extra) -> dict:
    return {**DEFAULT_DOCUMENT, **BASELINE_OVERRIDES, **extra}


@dataclass
class SweepConfig:
    param: str
    values: list
    overrides: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: list(range(10)))
    solvers: list = field(default_factory=lambda: ["sqp", "aas"])
    delta: float | None = None
    epsilon: float = 0.2
    grid_points: int = 30
    max_cus: int = 6
    record_runtime: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}; expected one of {PARAMS}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad:
            raise ValueError(f"unknown solver(s) {bad}; expected a subset of {SOLVERS}")
        if self.param == "num_cus" and max(self.values) > self.max_cus:
            raise ValueError(f"num_cus values exceed the cap of {self.max_cus}")
        if not self.seeds:
            raise ValueError("sweep needs at least one seed")

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ResultRow:
    param: str
    value: float
    solver: str
    seed: int
    sum_rate_bps: float
    runtime_s: float
    status: str
    allocation: Allocation | None = None

    def __post_init__(self):
        if self.runtime_s < 0:
            raise ValueError("runtime must be >= 0")
        if np.isfinite(self.sum_rate_bps) and self.sum_rate_bps < 0:
            raise ValueError("sum rate must be >= 0")

    def csv_fields(self) -> list:
        return [self.param, repr(float(self.value)), self.solver, self.seed,
                repr(float(self.sum_rate_bps)), repr(float(self.runtime_s)), self.status]


def scenario_document(config: SweepConfig, value, seed: int) -> dict:
    doc = {**BASELINE_OVERRIDES, **config.overrides, "placement_seed": seed, "fading_seed": seed}
    p = config.param
    if p == "num_cus":
        doc["num_cus"] = int(value)
    elif p == "gamma_r_db":
        doc["radar_sinr_threshold_db"] = float(value)
    elif p == "min_rate":
        doc["min_rate_bps"] = float(value)
    elif p == "bs_budget":
        doc["bs_power_budget_dbm"] = float(value)
    elif p == "radar_budget":
        doc["radar_power_budget_w"] = float(value)
    elif p == "radar_distance":
        radars = [list(r) for r in doc.get("radar_positions_m", DEFAULT_DOCUMENT["radar_positions_m"])]
        radars[-1] = [float(value), 0.0, 0.0]
        doc["radar_positions_m"] = radars
    return doc


def build_instance(config: SweepConfig, value, seed: int) -> TrmpInstance:
    scenario = load_scenario(scenario_document(config, value, seed))
    return TrmpInstance.from_scenario(scenario, place_entities(scenario))


def solve(instance: TrmpInstance, solver: str, *, delta=None, epsilon=None, grid_points=30):
    """Run one solver; returns ``(allocation or None, status)``."""
    if solver == "sqp":
        rep = sqp_solve(instance)
        return rep.allocation, rep.status if rep.feasible else f"{rep.status}-infeasible"
    if solver == "aas":
        res = aas_solve(instance, delta, epsilon=None if delta is not None else epsilon)
        return res.allocation, "infeasible" if res.allocation is None else res.status
    if solver == "oracle":
        alloc = brute_force_oracle(instance, grid_points)
        return alloc, "infeasible" if alloc is None else "optimal"
    raise ValueError(f"unknown solver {solver!r}")


def _run_task(task) -> ResultRow:
    config, value, solver, seed = task
    start = time.perf_counter()
    try:
        instance = build_instance(config, value, seed)
        eps = float(value) if config.param == "epsilon" else config.epsilon
        delta = None if config.param == "epsilon" else config.delta
        alloc, status = solve(instance, solver, delta=delta, epsilon=eps, grid_points=config.grid_points)
        rate = model.objective(instance, alloc) if alloc is not None else float("nan")
    except Exception as exc:  # recorded per row, the sweep goes on
        alloc, status, rate = None, f"error: {type(exc).__name__}: {exc}".replace("\n", " "), float("nan")
    runtime = time.perf_counter() - start if config.record_runtime else 0.0
    return ResultRow(config.param, value, solver, seed, rate, runtime, status, alloc)


def _tasks(config: SweepConfig):
    return [(config, v, s, seed) for v in config.values for seed in config.seeds for s in config.solvers]


def run_sweep(config: SweepConfig) -> Iterator[ResultRow]:
    """Yield rows in input order as they complete; failures become status strings."""
    tasks = _tasks(config)
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            yield from pool.map(_run_task, tasks)
    else:
        for task in tasks:
            yield _run_task(task)


def write_results(rows: Iterable[ResultRow], out_dir) -> list[ResultRow]:
    """Stream rows to ``results.csv`` and ``allocations.jsonl`` in ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kept = []
    with open(out / "results.csv", "w", newline="") as fh, open(out / "allocations.jsonl", "w") as jh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.csv_fields())
            fh.flush()
            jh.write(json.dumps({"param": row.param, "value": row.value, "solver": row.solver,
                                 "seed": row.seed,
                                 "allocation": None if row.allocation is None else row.allocation.to_dict()})
                     + "\n")
            kept.append(row)
    return kept


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and list(rows[0].keys()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {list(rows[0].keys())}")
    for r in rows:
        r["value"] = float(r["value"])
        r["seed"] = int(r["seed"])
        r["sum_rate_bps"] = float(r["sum_rate_bps"])
        r["runtime_s"] = float(r["runtime_s"])
    return rows


def mean_series(rows: list[dict]) -> dict[str, tuple[list[float], list[float]]]:
    """Per solver: sorted swept values and the mean finite sum rate at each."""
    out: dict[str, tuple[list, list]] = {}
    for solver in sorted({r["solver"] for r in rows}):
        by_value: dict[float, list] = {}
        for r in rows:
            if r["solver"] == solver and np.isfinite(r["sum_rate_bps"]):
                by_value.setdefault(r["value"], []).append(r["sum_rate_bps"])
        xs = sorted(by_value)
        out[solver] = (xs, [float(np.mean(by_value[x])) for x in xs])
    return out
