"""Validation harness: specify, configure, execute, observe, analyse, evaluate.

Every (geometry, engine) cell runs a pilot of ``pilot_n`` replications, sizes
the full sample from the pilot estimate, then extends the same replication
sequence up to that size.  Streams depend only on ``(master_seed, cell index,
replication index)``, so results are reproducible for any thread count.
"""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .dynamics import BatchResult, simulate_batch
from .errors import EmptyExperiment, InvalidConfig, NamError
from .model import EndState, NamGeometry, SimulatorConfig, make_geometry
from .rates import (BetaEstimate, analytic_beta, estimate_beta, pilot_sizing_beta, pmf_from_dict,
                    pmf_to_dict, required_replications)
from .stochastics import cell_seed, replication_seeds


@dataclass(frozen=True)
class AnalyticBeta:
    """Reference taken from the closed-form hitting probability of each geometry."""

    def value(self, geometry: NamGeometry) -> float:
        return analytic_beta(geometry.a, geometry.b, geometry.q)

    def to_dict(self):
        return "analytic"


@dataclass(frozen=True)
class FixedValue:
    beta_ref: float

    def __post_init__(self):
        if not 0.0 <= self.beta_ref <= 1.0:
            raise InvalidConfig(f"reference beta must lie in [0, 1], got {self.beta_ref}")

    def value(self, geometry: NamGeometry) -> float:
        return self.beta_ref

    def to_dict(self):
        return {"fixed": self.beta_ref}


@dataclass(frozen=True)
class GridPoint:
    """A geometry, optionally with the potential of mean force lowered from a model file."""

    geometry: NamGeometry
    pmf: object | None = None
    source: str | None = None

    def to_dict(self):
        d = {"a": self.geometry.a, "b": self.geometry.b, "q": self.geometry.q, "D": self.geometry.D}
        if self.pmf is not None:
            d["pmf"] = pmf_to_dict(self.pmf)
        if self.source is not None:
            d["source"] = self.source
        return d


@dataclass(frozen=True)
class ExperimentSpec:
    reference: AnalyticBeta | FixedValue
    e: float
    c: float
    model_grid: tuple
    engine_matrix: tuple
    master_seed: int = 0
    pilot_n: int = 50
    max_n: int = 10**6

    def __post_init__(self):
        grid = tuple(g if isinstance(g, GridPoint) else GridPoint(g) for g in self.model_grid)
        object.__setattr__(self, "model_grid", grid)
        object.__setattr__(self, "engine_matrix", tuple(self.engine_matrix))
        if not 0.0 < self.e < 1.0:
            raise InvalidConfig(f"tolerance e must lie in (0, 1), got {self.e}")
        if not 0.0 < self.c < 1.0:
            raise InvalidConfig(f"confidence c must lie in (0, 1), got {self.c}")
        if not grid:
            raise InvalidConfig("model grid is empty")
        if not self.engine_matrix:
            raise InvalidConfig("engine matrix is empty")
        if self.pilot_n < 2:
            raise InvalidConfig(f"pilot_n must be >= 2, got {self.pilot_n}")
        if self.max_n < self.pilot_n:
            raise InvalidConfig(f"max_n ({self.max_n}) must be >= pilot_n ({self.pilot_n})")
        if not 0 <= self.master_seed < 2**64:
            raise InvalidConfig(f"seed must be an unsigned 64-bit integer, got {self.master_seed}")

    def cells(self):
        """(cell_index, grid point, engine) in the fixed grid-major order."""
        i = 0
        for g in self.model_grid:
            for eng in self.engine_matrix:
                yield i, g, eng
                i += 1

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return ExperimentSpec(self.reference, self.e, self.c, self.model_grid, self.engine_matrix,
                              int(seed), self.pilot_n, self.max_n)

    def to_dict(self):
        return {
            "reference": self.reference.to_dict(),
            "e": self.e,
            "c": self.c,
            "grid": [g.to_dict() for g in self.model_grid],
            "engines": [eng.to_dict() for eng in self.engine_matrix],
            "seed": self.master_seed,
            "pilot_n": self.pilot_n,
            "max_n": self.max_n,
        }


@dataclass
class ConfigurationVerdict:
    cell: int
    geometry: NamGeometry
    engine: SimulatorConfig
    beta_ref: float
    estimate: BetaEstimate | None
    n_required: int
    valid: bool
    wall_time: float
    capped: bool = False  # n_required exceeded max_n
    step_limit_hits: int = 0
    error: str | None = None
    runs: BatchResult | None = field(default=None, repr=False, compare=False)

    @property
    def flagged(self) -> bool:
        return self.capped or self.step_limit_hits > 0 or self.error is not None


def evaluate(estimate: BetaEstimate, beta_ref: float, e: float) -> bool:
    """Valid iff the estimate is within e of the reference (boundary inclusive).

    A relative slack of a few ulps keeps decimal boundary cases such as
    |0.161 - 0.111| == 0.05 on the inclusive side despite binary rounding.
    """
    return _within(estimate.beta_hat, beta_ref, e)


def _within(beta_hat: float, beta_ref: float, e: float) -> bool:
    eps = 4 * np.finfo(float).eps
    return bool(abs(beta_hat - beta_ref) <= e * (1.0 + eps) + eps * abs(beta_ref))


def run_cell(spec: ExperimentSpec, cell: int, point: GridPoint, engine: SimulatorConfig, *,
             threads: int | None = None, backend: str | None = None) -> ConfigurationVerdict:
    t0 = time.perf_counter()
    g = point.geometry
    beta_ref = spec.reference.value(g)
    seed = cell_seed(spec.master_seed, cell)

    def run(start, count):
        return simulate_batch(g, engine, replication_seeds(seed, start, count), pmf=point.pmf,
                              threads=threads, backend=backend)

    try:
        pilot = run(0, spec.pilot_n)
    except NamError as exc:
        return ConfigurationVerdict(cell, g, engine, beta_ref, None, spec.pilot_n, False,
                                    time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")
    done = pilot.outcome != K.OUT_STEP_LIMIT
    beta_pilot = (pilot_sizing_beta(int(pilot.reacted[done].sum()), int(done.sum()), spec.c)
                  if done.any() else 0.5)
    n_required = required_replications(beta_pilot, spec.e, spec.c)
    n_total = min(max(n_required, spec.pilot_n), spec.max_n)
    runs = pilot
    if n_total > spec.pilot_n:
        runs = BatchResult.concat([pilot, run(spec.pilot_n, n_total - spec.pilot_n)])

    limit = runs.outcome == K.OUT_STEP_LIMIT
    hits = int(limit.sum())
    estimate = None
    valid = False
    if hits < len(runs):
        # the estimate is over terminated replications; the cell is flagged if any hit the cap
        states = [EndState.REACTED if o == K.OUT_REACTED else EndState.ESCAPED
                  for o in runs.outcome[~limit]]
        estimate = estimate_beta(states)
        valid = evaluate(estimate, beta_ref, spec.e) and hits == 0
    return ConfigurationVerdict(
        cell, g, engine, beta_ref, estimate, n_required, valid, time.perf_counter() - t0,
        capped=n_required > spec.max_n, step_limit_hits=hits,
        error=(f"StepLimitExceeded: {hits} replication(s) hit max_steps={engine.max_steps}"
               if hits else None),
        runs=runs)


def run_experiment(spec: ExperimentSpec, *, threads: int | None = None,
                   backend: str | None = None) -> list:
    """Run every cell and return verdicts in grid order (grid-major, engines inner)."""
    return [run_cell(spec, i, point, eng, threads=threads, backend=backend)
            for i, point, eng in spec.cells()]


# ----------------------------------------------------------------------------
# reporting

REPORT_COLUMNS = ("cell", "engine", "rng", "detector", "stepsize", "a", "b", "q", "D", "beta_ref",
                  "beta_hat", "std_error", "ci_half_width", "n", "n_required", "valid", "capped",
                  "step_limit_hits", "error")


@dataclass
class ExperimentReport:
    rows: list
    series: dict
    confidence: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: ("" if r[k] is None else _csv_cell(r[k])) for k in REPORT_COLUMNS})
        return buf.getvalue()

    def to_dict(self):
        return {"confidence": self.confidence, "rows": self.rows, "series": self.series}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @property
    def all_valid(self) -> bool:
        return all(r["valid"] for r in self.rows)


def _csv_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return v


def _step_label(engine: SimulatorConfig) -> str:
    return engine.label().split("/")[1]


def summarize(verdicts: Sequence[ConfigurationVerdict], c: float = 0.99) -> ExperimentReport:
    """Table grouped by engine, then D, plus plot-ready series per engine."""
    if not verdicts:
        raise EmptyExperiment("no verdicts to summarise")
    order = {}
    for v in verdicts:
        order.setdefault(v.engine, len(order))
    ordered = sorted(verdicts, key=lambda v: (order[v.engine], v.geometry.D, v.cell))
    rows = []
    series: dict = {}
    for v in ordered:
        est = v.estimate
        row = {
            "cell": v.cell,
            "engine": v.engine.label(),
            "rng": v.engine.rng_kind.value,
            "detector": v.engine.detector_kind.value,
            "stepsize": _step_label(v.engine),
            "a": v.geometry.a, "b": v.geometry.b, "q": v.geometry.q, "D": v.geometry.D,
            "beta_ref": v.beta_ref,
            "beta_hat": est.beta_hat if est else None,
            "std_error": est.std_error if est else None,
            "ci_half_width": est.ci_half_width(c) if est else None,
            "n": est.n if est else 0,
            "n_required": v.n_required,
            "valid": bool(v.valid),
            "capped": bool(v.capped),
            "step_limit_hits": v.step_limit_hits,
            "error": v.error,
        }
        rows.append(row)
        s = series.setdefault(row["engine"], {"D": [], "beta_hat": [], "ci_half_width": [],
                                              "beta_ref": []})
        s["D"].append(row["D"])
        s["beta_hat"].append(row["beta_hat"])
        s["ci_half_width"].append(row["ci_half_width"])
        s["beta_ref"].append(row["beta_ref"])
    return ExperimentReport(rows, series, c)


# ----------------------------------------------------------------------------
# config files

def _load_mapping(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: top level must be a mapping")
    return data


def _reference_from(obj):
    if obj is None or obj == "analytic":
        return AnalyticBeta()
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return FixedValue(float(obj))
    if isinstance(obj, dict) and "fixed" in obj:
        return FixedValue(float(obj["fixed"]))
    raise InvalidConfig(f"reference must be 'analytic', a number or {{fixed: value}}, got {obj!r}")


def _grid_from(items, base: Path | None):
    from .spacepi import BUNDLED_NAM, lower_to_nam, parse_model_file
    if not isinstance(items, list) or not items:
        raise InvalidConfig("grid must be a non-empty list")
    out = []
    for item in items:
        if not isinstance(item, dict) or "D" not in item:
            raise InvalidConfig(f"grid entry needs D: {item!r}")
        Ds = item["D"] if isinstance(item["D"], list) else [item["D"]]
        for D in Ds:
            if "model" in item:
                src = str(item["model"])
                path = BUNDLED_NAM if src == "bundled:nam" else Path(src)
                if base is not None and not path.is_absolute():
                    path = base / path
                low = lower_to_nam(parse_model_file(path), float(D))
                out.append(GridPoint(low.geometry, low.pmf, src))
            else:
                try:
                    g = make_geometry(float(item["a"]), float(item["b"]), float(item["q"]), float(D))
                except KeyError as exc:
                    raise InvalidConfig(f"grid entry lacks {exc.args[0]!r}: {item!r}") from None
                pmf = pmf_from_dict(item["pmf"]) if item.get("pmf") else None
                out.append(GridPoint(g, pmf, item.get("source")))
    return out


_SPEC_KEYS = {"reference", "e", "c", "grid", "engines", "seed", "pilot_n", "max_n"}


def spec_from_dict(data: dict, base: Path | None = None) -> ExperimentSpec:
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise InvalidConfig(f"unknown spec key(s): {', '.join(sorted(unknown))}")
    try:
        engines = [SimulatorConfig.from_dict(e) for e in data["engines"]]
        return ExperimentSpec(
            reference=_reference_from(data.get("reference")),
            e=float(data["e"]),
            c=float(data["c"]),
            model_grid=tuple(_grid_from(data["grid"], base)),
            engine_matrix=tuple(engines),
            master_seed=int(data.get("seed", 0)),
            pilot_n=int(data.get("pilot_n", 50)),
            max_n=int(data.get("max_n", 10**6)),
        )
    except KeyError as exc:
        raise InvalidConfig(f"spec lacks required key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NamError):
            raise
        raise InvalidConfig(str(exc)) from None


def load_spec(path) -> ExperimentSpec:
    """Read an experiment spec from JSON or YAML.

    Keys: ``reference`` ("analytic" | number | {fixed: x}), ``e``, ``c``,
    ``grid`` (list of {a, b, q, D} or {model: file.spi, D}; ``D`` may be a
    list), ``engines`` (list of {rng, detector, stepsize, max_steps}),
    ``seed``, ``pilot_n``, ``max_n``.  A run manifest written by the CLI is
    accepted as well and reproduces the recorded experiment.
    """
    path = Path(path)
    data = _load_mapping(path)
    if "spec" in data and "manifest_version" in data:
        data = data["spec"]  # a run manifest re-executes its own snapshot
    return spec_from_dict(data, path.parent)


def coverage(estimates: Sequence[float], beta_ref: float, e: float) -> float:
    """Fraction of experiment outcomes that :func:`evaluate` would accept."""
    arr = np.asarray(estimates, dtype=float)
    if arr.size == 0:
        raise EmptyExperiment("no estimates")
    return float(np.mean([_within(x, beta_ref, e) for x in arr]))
