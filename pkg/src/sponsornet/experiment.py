"""Seeded parameter sweeps over random markets, written as CSV."""
from __future__ import annotations

import csv
import io
import math
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .competitive import solve_competitive
from .cooperative import solve_cooperative_closed_form, solve_cooperative_gradient
from .errors import EmptyInput, InvalidConfig, MarketError
from .model import GenerationConfig, build_matrices, generate_instance
from .validate import check_assumption1, check_assumptions

__all__ = [
    "CSV_SCHEMA_VERSION",
    "MODES",
    "SWEEP_PARAMS",
    "Sweep",
    "ExperimentConfig",
    "SweepRow",
    "SummaryRow",
    "run_experiment",
    "summarize",
    "rows_to_csv",
    "write_csv",
    "summary_to_csv",
]

# bump when SweepRow columns change
CSV_SCHEMA_VERSION = 1

MODES = ("competitive", "cooperative")
SWEEP_PARAMS = ("n", "mu_g", "c")


@dataclass(frozen=True)
class Sweep:
    param: str
    start: float
    stop: float
    steps: int

    def values(self) -> list:
        vals = np.linspace(self.start, self.stop, int(self.steps))
        if self.param == "n":
            return [int(round(v)) for v in vals]
        return [float(v) for v in vals]

    @classmethod
    def parse(cls, text: str) -> "Sweep":
        """Parse ``param:start:stop:steps``."""
        parts = text.split(":")
        if len(parts) != 4:
            raise InvalidConfig(f"sweep must look like param:start:stop:steps, got {text!r}")
        try:
            return cls(parts[0], float(parts[1]), float(parts[2]), int(parts[3]))
        except ValueError as exc:
            raise InvalidConfig(f"bad sweep {text!r}: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    mode: str = "both"
    sweep: Sweep | None = None
    replications: int = 10
    competitive_tol: float = 1e-8
    competitive_max_iter: int = 10_000
    cooperative_method: str = "closed_form"
    cooperative_tol: float = 1e-8
    cooperative_max_iter: int = 100_000
    output_path: str | None = None
    workers: int = 1

    def validate(self) -> None:
        self.generation.validate()
        if self.mode not in MODES + ("both",):
            raise InvalidConfig(f"mode must be competitive, cooperative or both, got {self.mode!r}")
        if self.cooperative_method not in ("closed_form", "gradient"):
            raise InvalidConfig(f"unknown cooperative method {self.cooperative_method!r}")
        if self.replications < 1:
            raise InvalidConfig("replications must be >= 1")
        if self.competitive_tol <= 0 or self.cooperative_tol <= 0:
            raise InvalidConfig("tolerances must be > 0")
        if self.competitive_max_iter < 1 or self.cooperative_max_iter < 1:
            raise InvalidConfig("iteration caps must be >= 1")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")
        if self.sweep is not None:
            sw = self.sweep
            if sw.param not in SWEEP_PARAMS:
                raise InvalidConfig(f"sweep parameter must be one of {SWEEP_PARAMS}, got {sw.param!r}")
            if sw.steps < 2:
                raise InvalidConfig("sweep needs at least 2 steps")
            for v in sw.values():
                # raises InvalidConfig on e.g. n < 1 or c < 0
                replace(self.generation, **{sw.param: v}).validate()

    @property
    def modes(self) -> tuple:
        return MODES if self.mode == "both" else (self.mode,)


@dataclass(frozen=True)
class SweepRow:
    sweep_value: float | None
    seed: int
    mode: str
    total_demand: float
    price: float
    mean_sponsorship: float
    cp_profit: float
    sp_revenue: float
    aggregate_payoff: float
    sum_user_utility: float
    iterations: int
    a1: bool
    a2: bool
    a3: bool
    status: str = "ok"

    @classmethod
    def failed(cls, sweep_value, seed, mode, status, a1=False):
        nan = math.nan
        return cls(sweep_value, seed, mode, nan, nan, nan, nan, nan, nan, nan, 0, a1, False, False, status)


NUMERIC_COLUMNS = (
    "total_demand",
    "price",
    "mean_sponsorship",
    "cp_profit",
    "sp_revenue",
    "aggregate_payoff",
    "sum_user_utility",
    "iterations",
)


def _solve_point(cfg: ExperimentConfig, sweep_value, seed: int) -> list:
    gen = replace(cfg.generation, seed=seed)
    if cfg.sweep is not None:
        gen = replace(gen, **{cfg.sweep.param: sweep_value})
    inst = generate_instance(gen)
    try:
        mats = build_matrices(inst)
    except MarketError as exc:
        return [SweepRow.failed(sweep_value, seed, mode, type(exc).__name__) for mode in cfg.modes]

    rows = []
    for mode in cfg.modes:
        try:
            if mode == "competitive":
                res = solve_competitive(inst, mats, cfg.competitive_tol, cfg.competitive_max_iter)
                strat, demand = res.strategy, res.demand
                cp, sp, iters = res.payoffs.cp_profit, res.payoffs.sp_revenue, res.iterations
            elif cfg.cooperative_method == "gradient":
                res = solve_cooperative_gradient(inst, mats, cfg.cooperative_tol, cfg.cooperative_max_iter)
                strat, demand, cp, sp, iters = res.strategy, res.demand, res.cp_profit, res.sp_revenue, res.iterations
            else:
                res = solve_cooperative_closed_form(inst, mats)
                strat, demand, cp, sp, iters = res.strategy, res.demand, res.cp_profit, res.sp_revenue, res.iterations
        except (MarketError, ArithmeticError) as exc:
            rows.append(SweepRow.failed(sweep_value, seed, mode, type(exc).__name__, check_assumption1(inst).holds))
            continue
        report = check_assumptions(inst, mats, strat)
        rows.append(
            SweepRow(
                sweep_value=sweep_value,
                seed=seed,
                mode=mode,
                total_demand=demand.total,
                price=strat.p,
                mean_sponsorship=float(strat.theta.mean()),
                cp_profit=cp,
                sp_revenue=sp,
                aggregate_payoff=cp + sp,
                sum_user_utility=float(demand.utilities.sum()),
                iterations=int(iters),
                a1=report.a1_holds,
                a2=report.a2_holds,
                a3=report.a3_holds,
            )
        )
    return rows


def _solve_task(args):
    return _solve_point(*args)


def run_experiment(cfg: ExperimentConfig) -> list:
    """Solve every (sweep value, replication) point and return rows in a fixed order.

    Replication ``k`` uses seed ``base_seed + k``; rows are ordered by sweep
    value, then seed, then mode. If ``cfg.output_path`` is set the CSV is
    written there as well.
    """
    cfg.validate()
    values = cfg.sweep.values() if cfg.sweep is not None else [None]
    base = int(cfg.generation.seed)
    tasks = [(cfg, v, base + k) for v in values for k in range(cfg.replications)]

    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_solve_task, tasks))
    else:
        chunks = [_solve_task(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]

    if cfg.output_path:
        write_csv(rows, cfg.output_path)
    return rows


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(header, records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for rec in records:
        writer.writerow([_fmt(v) for v in rec])
    return buf.getvalue()


def rows_to_csv(rows) -> str:
    header = [f.name for f in fields(SweepRow)]
    return _csv_text(header, ([getattr(r, h) for h in header] for r in rows))


def write_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


@dataclass(frozen=True)
class SummaryRow:
    sweep_value: float | None
    mode: str
    count: int
    failures: int
    mean: dict
    std: dict


def summarize(rows) -> list:
    """Mean and sample standard deviation of each numeric column per (sweep value, mode).

    Failed rows are counted but left out of the statistics.
    """
    rows = list(rows)
    if not rows:
        raise EmptyInput("no rows to summarize")
    groups = OrderedDict()
    for r in rows:
        groups.setdefault((r.sweep_value, r.mode), []).append(r)

    out = []
    for (value, mode), members in groups.items():
        ok = [r for r in members if r.status == "ok"]
        mean, std = {}, {}
        for col in NUMERIC_COLUMNS:
            data = np.array([getattr(r, col) for r in ok], dtype=float)
            mean[col] = float(data.mean()) if data.size else math.nan
            std[col] = float(data.std(ddof=1)) if data.size > 1 else (0.0 if data.size else math.nan)
        out.append(SummaryRow(value, mode, len(ok), len(members) - len(ok), mean, std))
    return out


def summary_to_csv(summary) -> str:
    header = ["sweep_value", "mode", "count", "failures"]
    header += [f"{c}_mean" for c in NUMERIC_COLUMNS] + [f"{c}_std" for c in NUMERIC_COLUMNS]
    records = (
        [s.sweep_value, s.mode, s.count, s.failures]
        + [s.mean[c] for c in NUMERIC_COLUMNS]
        + [s.std[c] for c in NUMERIC_COLUMNS]
        for s in summary
    )
    return _csv_text(header, records)
