"""Monte-Carlo experiment driver: sweeps, per-trial rows, summaries, emission.

Every trial ``t`` draws one network from ``SeedSequence([seed, t])`` and
reuses it for every sweep value and scheme (common random numbers), so
differences between curves are not drowned in channel noise.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .baselines import SCHEMES, evaluate_scheme, get_scheme
from .channel import generate_channels
from .config import ConfigError, SystemConfig
from .rates import MODES
from .streams import ORDER_LABELS

log = logging.getLogger(__name__)

AXES = ("p_v_max", "p_u_max", "r_th_v", "decoding-order", "scheme-set")
NUMERIC_AXES = ("p_v_max", "p_u_max", "r_th_v")
CSV_FIELDS = ("sweep_axis", "sweep_value", "scheme", "seed", "sum_rate", "delta",
              "iterations", "feasible", "wall_ms")
SUMMARY_FIELDS = ("sweep_axis", "sweep_value", "scheme", "n", "mean", "half_width", "feasible_fraction")


def parse_sweep(text: str) -> tuple[str, tuple]:
    """``axis=lo:step:hi`` (inclusive) or ``axis=v1,v2,...``."""
    axis, sep, spec = text.partition("=")
    axis = axis.strip()
    if not sep or not spec.strip():
        raise ConfigError(f"sweep must look like axis=lo:step:hi or axis=a,b,c, got {text!r}")
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(AXES)}")
    spec = spec.strip()
    if axis not in NUMERIC_AXES:
        return axis, tuple(v.strip() for v in spec.split(",") if v.strip())
    try:
        if ":" in spec:
            lo, step, hi = (float(v) for v in spec.split(":"))
            if step <= 0 or hi < lo:
                raise ConfigError(f"bad sweep range {spec!r}")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return axis, tuple(round(lo + i * step, 10) for i in range(n))
        return axis, tuple(float(v) for v in spec.split(","))
    except ValueError:
        raise ConfigError(f"sweep values must be numbers for axis {axis!r}: {spec!r}") from None


@dataclass(frozen=True)
class ExperimentPlan:
    """One sweep over one axis, ``trials`` seeds per point.

    ``mode`` is the interference mode used to report rates; ``None`` means
    ``sic-global`` for decoding-order sweeps and ``static-ipi`` otherwise.
    """

    base: SystemConfig
    axis: str = "p_v_max"
    values: tuple = (15.0,)
    schemes: tuple[str, ...] = ("crsma-susmg",)
    trials: int = 1
    order: str = "order-3"
    mode: str | None = None
    out: str | None = None
    fmt: str = "csv"
    timing: bool = True
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.fmt!r}")
        if self.mode is not None and self.mode not in MODES:
            raise ConfigError(f"unknown interference mode {self.mode!r}")
        if self.order not in ORDER_LABELS:
            raise ConfigError(f"unknown decoding order {self.order!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        names = self.values if self.axis == "scheme-set" else self.schemes
        for name in names:
            if name not in SCHEMES:
                raise ConfigError(f"unknown scheme {name!r}")
        if self.axis == "decoding-order":
            for label in self.values:
                if label not in ORDER_LABELS:
                    raise ConfigError(f"unknown decoding order {label!r}")
        for v in self.values if self.axis in NUMERIC_AXES else ():
            self.config_at(v)

    @property
    def eval_mode(self) -> str:
        if self.mode is not None:
            return self.mode
        return "sic-global" if self.axis == "decoding-order" else "static-ipi"

    def config_at(self, value) -> SystemConfig:
        if self.axis in NUMERIC_AXES:
            return self.base.with_(**{self.axis: float(value)})
        return self.base

    def points(self) -> list[tuple[object, str, str]]:
        """(sweep value, scheme, decoding order) for every curve point."""
        out = []
        for v in self.values:
            if self.axis == "scheme-set":
                out.append((v, v, self.order))
            elif self.axis == "decoding-order":
                out += [(v, s, v) for s in self.schemes]
            else:
                out += [(v, s, self.order) for s in self.schemes]
        return out


def trial_seed(base_seed: int, trial: int) -> int:
    """Independent per-trial seed derived from (base seed, trial index)."""
    return int(np.random.SeedSequence([base_seed, trial]).generate_state(1, np.uint64)[0])


@dataclass
class Row:
    sweep_axis: str
    sweep_value: object
    scheme: str
    seed: int
    sum_rate: float
    delta: float
    iterations: int
    feasible: bool
    wall_ms: float
    trial: int = 0
    status: str = "optimal"
    user_rates: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}


def run_trial(plan: ExperimentPlan, trial: int) -> list[Row]:
    """Every curve point of one trial, in ``plan.points()`` order."""
    seed = trial_seed(plan.base.seed, trial)
    rows = []
    channels = {}
    for value, scheme, order in plan.points():
        config = plan.config_at(value)
        # budgets and thresholds do not enter channel generation
        ch = channels.get(config.channel_mode)
        if ch is None:
            ch = channels[config.channel_mode] = generate_channels(config, seed=seed)
        rng = np.random.default_rng(np.random.SeedSequence([plan.base.seed, trial, 1]))
        t0 = time.perf_counter()
        try:
            res = evaluate_scheme(get_scheme(scheme), ch, config, order, plan.eval_mode, rng)
            status, feasible = res.status, res.feasible
            sum_rate, delta, iters = res.sum_rate, res.delta, res.iterations
            users = res.report.user_rates() if res.report is not None else {}
        except Exception as exc:  # a broken trial must not abort the sweep
            log.warning("trial %d, %s at %s failed: %s", trial, scheme, value, exc)
            status, feasible, sum_rate, delta, iters, users = "error", False, 0.0, None, 0, {}
        wall = (time.perf_counter() - t0) * 1e3 if plan.timing else 0.0
        rows.append(Row(plan.axis, value, scheme, seed, sum_rate,
                        math.nan if delta is None else float(delta), iters, feasible, wall,
                        trial, status, users))
    return rows


def _trial_job(args):
    plan, trial = args
    return run_trial(plan, trial)


@dataclass
class ResultTable:
    plan: ExperimentPlan
    rows: list[Row]

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def any_feasible(self) -> bool:
        return any(r.feasible for r in self.rows)

    def summary(self) -> list[dict]:
        """Mean sum rate (infeasible trials count as zero) and the 95% t
        confidence half-width for every (sweep value, scheme)."""
        groups: dict[tuple, list[Row]] = {}
        for r in self.rows:
            groups.setdefault((r.sweep_value, r.scheme), []).append(r)
        out = []
        for (value, scheme), rows in groups.items():
            x = np.array([r.sum_rate for r in rows])
            out.append({
                "sweep_axis": self.plan.axis,
                "sweep_value": value,
                "scheme": scheme,
                "n": len(x),
                "mean": math.fsum(x) / len(x),
                "half_width": half_width(x),
                "feasible_fraction": sum(r.feasible for r in rows) / len(rows),
            })
        return out


def half_width(x, level: float = 0.95) -> float:
    """Student-t confidence half-width of the mean; NaN for a single sample."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return math.nan
    return float(stats.t.ppf(0.5 + level / 2, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x)))


def run_plan(plan: ExperimentPlan, progress=None) -> ResultTable:
    """Run every trial; rows come back in trial order whatever the worker count."""
    jobs = [(plan, t) for t in range(plan.trials)]
    rows: list[Row] = []
    if plan.workers > 1:
        from multiprocessing import get_context

        with get_context("spawn").Pool(plan.workers) as pool:
            for chunk in pool.imap(_trial_job, jobs):
                rows += chunk
                if progress:
                    progress(len(rows))
    else:
        for job in jobs:
            rows += _trial_job(job)
            if progress:
                progress(len(rows))
    return ResultTable(plan, rows)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else f"{value:.6f}"
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else round(float(value), 6)
    return value


def to_csv(records: list[dict], fields=CSV_FIELDS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for rec in records:
        writer.writerow([_fmt(rec[k]) for k in fields])
    return buf.getvalue()


def to_json(records: list[dict], fields=CSV_FIELDS) -> str:
    return json.dumps([{k: _json_value(rec[k]) for k in fields} for rec in records], indent=1) + "\n"


def json_to_csv(text: str, fields=CSV_FIELDS) -> str:
    """Re-emit parsed JSON rows as CSV (nulls become NaN)."""
    records = []
    for obj in json.loads(text):
        rec = {}
        for k in fields:
            v = obj[k]
            rec[k] = math.nan if v is None else v
        records.append(rec)
    return to_csv(records, fields)


def emit(table: ResultTable | list[dict], path: str, fmt: str = "csv", fields=CSV_FIELDS) -> str:
    """Write rows to ``path``; returns the text written.

    An empty table is an error and leaves no file behind.
    """
    records = [r.record() for r in table.rows] if isinstance(table, ResultTable) else list(table)
    if not records:
        raise ValueError("refusing to write an empty table")
    if fmt == "csv":
        text = to_csv(records, fields)
    elif fmt == "json":
        text = to_json(records, fields)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise OSError(f"output directory does not exist: {directory}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text


def emit_summary(table: ResultTable, path: str, fmt: str = "csv") -> str:
    return emit(table.summary(), path, fmt, SUMMARY_FIELDS)
