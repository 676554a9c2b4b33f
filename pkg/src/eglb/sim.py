"""Scenario files, simulation runs, footprint ledgers and comparison metrics."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from eglb.errors import DomainError, ScenarioError
from eglb.footprint import (
    carbon_coefficients,
    cost_coefficients,
    energy_coefficients,
    env_coefficients,
    water_coefficients,
)
from eglb.model import Allocation, DataCenterProfile, Scenario, SourceProfile, Violation, validate_scenario
from eglb.offline import ObjectiveBreakdown, evaluate_objective, solve_eglb_off
from eglb.policies import init_policy, observe, policy_step

POLICIES = ("glb-cost", "glb-carbon", "glb-dist", "eglb-off", "eglb")
MODES = ("full", "partial")

SCENARIO_FILES = ("datacenters.csv", "traces.csv", "demand.csv", "topology.csv", "config.txt")
DC_HEADER = ["dc_id", "capacity"]
TRACE_HEADER = ["t", "dc_id", "price_usd_per_kwh", "carbon_g_per_kwh", "wue_l_per_kwh", "ewif_l_per_kwh", "pue"]
DEMAND_HEADER = ["t", "source_id", "requests"]
TOPOLOGY_HEADER = ["source_id", "dc_id", "distance_km"]
RESULTS_HEADER = ["policy", "mode", "lambda", "total_cost_usd", "par_water", "par_carbon", "equity_term", "cost_term"]
ALLOCATION_HEADER = ["t", "source_id", "dc_id", "requests"]

CONFIG_KEYS = {
    "lambda", "eta", "energy_per_request_kwh", "w_carbon", "w_water",
    "beta_carbon_usd_per_g", "beta_water_usd_per_l", "norm_carbon", "norm_water",
}

_TRACE_FIELDS = {
    "price": "price_usd_per_kwh",
    "carbon_intensity": "carbon_g_per_kwh",
    "wue": "wue_l_per_kwh",
    "ewif": "ewif_l_per_kwh",
    "pue": "pue",
}


# --- metrics -----------------------------------------------------------------

def compute_par(values) -> float:
    """Peak-to-average ratio max(v) / mean(v); 1.0 for an all-zero vector."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise DomainError("PAR needs a non-empty 1-D vector")
    if (v < 0).any() or not np.isfinite(v).all():
        raise DomainError(f"PAR entries must be finite and >= 0, got {v.tolist()}")
    top = v.max()
    if top == 0 or top == v.min():
        return 1.0
    return max(1.0, float(top / v.mean()))


@dataclass
class FootprintLedger:
    """Per-region cumulative footprint, with optional per-step history (T, N)."""

    energy: np.ndarray
    energy_cost: np.ndarray
    cost: np.ndarray  # energy cost plus monetized carbon/water
    carbon: np.ndarray
    water: np.ndarray
    env: np.ndarray
    history: dict[str, np.ndarray] | None = None

    FIELDS = ("energy", "energy_cost", "cost", "carbon", "water", "env")

    @classmethod
    def from_allocation(cls, scenario: Scenario, alloc: Allocation, keep_history: bool = True) -> FootprintLedger:
        load = alloc.dc_load
        per_step = {
            "energy": energy_coefficients(scenario) * load,
            "energy_cost": energy_coefficients(scenario) * scenario.price * load,
            "cost": cost_coefficients(scenario) * load,
            "carbon": carbon_coefficients(scenario) * load,
            "water": water_coefficients(scenario) * load,
            "env": env_coefficients(scenario) * load,
        }
        totals = {k: v.sum(axis=0) for k, v in per_step.items()}
        return cls(**totals, history=per_step if keep_history else None)


@dataclass
class RunResult:
    policy: str
    mode: str
    lam: float
    total_cost: float
    par_water: float
    par_carbon: float
    objective: ObjectiveBreakdown
    ledger: FootprintLedger = field(repr=False)
    allocation: Allocation | None = field(default=None, repr=False)
    wall_clock: float = 0.0

    def row(self) -> dict:
        return {
            "policy": self.policy,
            "mode": self.mode,
            "lambda": self.lam,
            "total_cost_usd": self.total_cost,
            "par_water": self.par_water,
            "par_carbon": self.par_carbon,
            "equity_term": self.objective.equity_term,
            "cost_term": self.objective.cost_term,
        }


def _scenario_for_mode(scenario: Scenario, mode: str) -> Scenario:
    if mode == "full":
        return scenario.with_full_topology()
    if mode == "partial":
        return scenario
    raise ValueError(f"unknown mode {mode!r}; expected 'full' or 'partial'")


def run_simulation(scenario: Scenario, policy: str, lam: float = 0.0, eta: float | None = None,
                   mode: str = "full", keep_allocation: bool = True) -> RunResult:
    """Drive one policy over the horizon and measure cost and PAR."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {', '.join(POLICIES)}")
    # validate as given; full mode then adds unlisted pairs at infinite distance
    bad = validate_scenario(scenario)
    if bad:
        raise ScenarioError(f"invalid scenario: {bad[0]}", bad)
    sc = _scenario_for_mode(scenario, mode)
    started = time.perf_counter()
    if policy == "eglb-off":
        alloc = solve_eglb_off(sc, lam).allocation
    else:
        state = init_policy(policy, sc, lam, eta)
        x = np.zeros(sc.shape)
        for t in range(sc.horizon):
            x[t], state = policy_step(state, observe(sc, t), sc)
        alloc = Allocation(x)
    elapsed = time.perf_counter() - started
    ledger = FootprintLedger.from_allocation(sc, alloc)
    return RunResult(
        policy=policy,
        mode=mode,
        lam=float(lam),
        total_cost=float(ledger.cost.sum()),
        par_water=compute_par(ledger.water),
        par_carbon=compute_par(ledger.carbon),
        objective=evaluate_objective(sc, alloc, lam),
        ledger=ledger,
        allocation=alloc if keep_allocation else None,
        wall_clock=elapsed,
    )


def summarize(results) -> list[dict]:
    """Comparison rows; every row after the first carries deltas against it."""
    rows = []
    base = results[0] if results else None
    for k, r in enumerate(results):
        row = {
            "policy": r.policy,
            "mode": r.mode,
            "lambda": r.lam,
            "cost": r.total_cost,
            "par_water": r.par_water,
            "par_carbon": r.par_carbon,
            "cost_delta_pct": None,
            "par_water_delta": None,
            "par_carbon_delta": None,
        }
        if k > 0:
            row["cost_delta_pct"] = (100.0 * (r.total_cost / base.total_cost - 1.0)
                                     if base.total_cost else 0.0 if r.total_cost == 0 else math.inf)
            row["par_water_delta"] = r.par_water - base.par_water
            row["par_carbon_delta"] = r.par_carbon - base.par_carbon
        rows.append(row)
    return rows


def format_summary(rows) -> str:
    head = f"{'policy':<12}{'cost (USD)':>14}{'PAR water':>11}{'PAR carbon':>12}{'d cost':>10}{'d water':>9}{'d carbon':>10}"
    lines = [head]
    for r in rows:
        if r["cost_delta_pct"] is None:
            deltas = f"{'':>10}{'':>9}{'':>10}"
        else:
            deltas = f"{r['cost_delta_pct']:>+9.1f}%{r['par_water_delta']:>+9.2f}{r['par_carbon_delta']:>+10.2f}"
        lines.append(f"{r['policy']:<12}{r['cost']:>14.2f}{r['par_water']:>11.2f}{r['par_carbon']:>12.2f}{deltas}")
    return "\n".join(lines)


# --- scenario files ----------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v) + 0.0, ".6g")


def _num(raw: str, where: str, column: str, blank=None) -> float:
    raw = (raw or "").strip()
    if raw == "" and blank is not None:
        return blank
    try:
        return float(raw)
    except ValueError:
        raise ScenarioError(f"{where}: malformed value {raw!r} in column {column!r}") from None


def _rows(path: Path, header: list[str]):
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        got = [h.strip() for h in (reader.fieldnames or [])]
        missing = [h for h in header if h not in got]
        if missing:
            raise ScenarioError(f"{path.name}: header is missing column(s) {', '.join(missing)}")
        for row in reader:
            if None in row or any(row.get(h) is None for h in header):
                raise ScenarioError(f"{path.name} line {reader.line_num}: wrong number of fields")
            yield reader.line_num, {k.strip(): (v or "").strip() for k, v in row.items()}


def read_config(directory) -> dict:
    """Parse ``config.txt`` (``key=value`` lines, ``#`` comments) into floats."""
    path = Path(directory) / "config.txt"
    out = {}
    for n, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"config.txt line {n}: expected key=value, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ScenarioError(f"config.txt line {n}: unknown key {key!r}")
        out[key] = _num(value, f"config.txt line {n}", key)
    return out


def load_scenario(directory) -> Scenario:
    """Read and validate a scenario directory."""
    root = Path(directory)
    missing = [f for f in SCENARIO_FILES if not (root / f).is_file()]
    if missing:
        raise ScenarioError(f"scenario directory {str(root)!r} is missing {', '.join(missing)}")
    cfg = read_config(root)
    if "energy_per_request_kwh" not in cfg:
        raise ScenarioError("config.txt: energy_per_request_kwh is required")

    lines: dict[tuple, int] = {}
    caps: dict[str, float] = {}
    for n, row in _rows(root / "datacenters.csv", DC_HEADER):
        dc = row["dc_id"]
        if dc in caps:
            raise ScenarioError(f"datacenters.csv line {n}: duplicate dc_id {dc!r}")
        caps[dc] = _num(row["capacity"], f"datacenters.csv line {n}", "capacity", blank=math.inf)
        lines[("capacity", dc, None)] = ("datacenters.csv", n)

    traces: dict[str, dict[int, dict]] = {dc: {} for dc in caps}
    for n, row in _rows(root / "traces.csv", TRACE_HEADER):
        where = f"traces.csv line {n}"
        t = int(_num(row["t"], where, "t"))
        dc = row["dc_id"]
        if dc not in traces:
            raise ScenarioError(f"{where}: unknown dc_id {dc!r}")
        if t in traces[dc]:
            raise ScenarioError(f"{where}: duplicate row for t={t}, dc {dc!r}")
        traces[dc][t] = {k: _num(row[c], where, c) for k, c in _TRACE_FIELDS.items()}
        for k in _TRACE_FIELDS:
            lines[(k, dc, t)] = ("traces.csv", n)

    steps = {dc: sorted(ts) for dc, ts in traces.items()}
    horizons = {len(ts) for ts in steps.values()}
    if len(horizons) != 1 or 0 in horizons:
        raise ScenarioError("traces.csv: every dc needs the same number of steps, got "
                            + ", ".join(f"{dc}={len(ts)}" for dc, ts in steps.items()))
    T = horizons.pop()
    for dc, ts in steps.items():
        if ts != list(range(T)):
            raise ScenarioError(f"traces.csv: steps for dc {dc!r} are not 0-based and contiguous")

    demand: dict[str, dict[int, float]] = {}
    for n, row in _rows(root / "demand.csv", DEMAND_HEADER):
        where = f"demand.csv line {n}"
        t = int(_num(row["t"], where, "t"))
        if not 0 <= t < T:
            raise ScenarioError(f"{where}: step {t} outside the trace horizon 0..{T - 1}")
        src = row["source_id"]
        per = demand.setdefault(src, {})
        if t in per:
            raise ScenarioError(f"{where}: duplicate row for t={t}, source {src!r}")
        per[t] = _num(row["requests"], where, "requests")
        lines[("demand", src, t)] = ("demand.csv", n)

    topo: dict[str, dict[str, float]] = {}
    for n, row in _rows(root / "topology.csv", TOPOLOGY_HEADER):
        where = f"topology.csv line {n}"
        src, dc = row["source_id"], row["dc_id"]
        if dc not in caps:
            raise ScenarioError(f"{where}: unknown dc_id {dc!r}")
        topo.setdefault(src, {})[dc] = _num(row["distance_km"], where, "distance_km")
        lines[("distance", src, dc)] = ("topology.csv", n)

    datacenters = tuple(
        DataCenterProfile(
            id=dc,
            capacity=caps[dc],
            **{k: [traces[dc][t][k] for t in range(T)] for k in _TRACE_FIELDS},
        )
        for dc in caps
    )
    sources = tuple(
        SourceProfile(
            id=src,
            demand=[demand.get(src, {}).get(t, 0.0) for t in range(T)],
            allowed=frozenset(topo.get(src, {})),
            distance=topo.get(src, {}),
        )
        for src in sorted(set(demand) | set(topo))
    )
    norms = None
    if "norm_carbon" in cfg or "norm_water" in cfg:
        fleet = Scenario(datacenters, sources, T, cfg["energy_per_request_kwh"]).env_norms
        norms = (cfg.get("norm_carbon", fleet[0]), cfg.get("norm_water", fleet[1]))
    scenario = Scenario(
        datacenters=datacenters,
        sources=sources,
        horizon=T,
        energy_per_request=cfg["energy_per_request_kwh"],
        env_weights=(cfg.get("w_carbon", 0.5), cfg.get("w_water", 0.5)),
        cost_weights=(cfg.get("beta_carbon_usd_per_g", 0.0), cfg.get("beta_water_usd_per_l", 0.0)),
        env_norms=norms,
    )
    bad = validate_scenario(scenario)
    if bad:
        msgs = [_locate(v, lines) for v in bad]
        raise ScenarioError("invalid scenario:\n  " + "\n  ".join(msgs), bad)
    return scenario


def _locate(v: Violation, lines: dict) -> str:
    key = None
    if v.field in _TRACE_FIELDS and v.dc is not None and v.step is not None:
        key = (v.field, v.dc, v.step)
    elif v.field == "capacity":
        key = ("capacity", v.dc, None)
    elif v.field == "demand" and v.source is not None:
        key = ("demand", v.source, v.step)
    elif v.field == "distance" and v.source is not None:
        key = ("distance", v.source, v.dc)
    if key in lines:
        name, n = lines[key]
        return f"{name} line {n}, field {v.field}: {v.message}"
    return v.message


def write_scenario(scenario: Scenario, directory, lam: float | None = None, eta: float | None = None) -> Path:
    """Write ``scenario`` in the directory format read by :func:`load_scenario`."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    with (root / "datacenters.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DC_HEADER)
        for dc in scenario.datacenters:
            w.writerow([dc.id, "" if math.isinf(dc.capacity) else repr(dc.capacity)])
    with (root / "traces.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t in range(scenario.horizon):
            for dc in scenario.datacenters:
                w.writerow([t, dc.id] + [repr(getattr(dc, k)[t]) for k in _TRACE_FIELDS])
    with (root / "demand.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DEMAND_HEADER)
        for t in range(scenario.horizon):
            for src in scenario.sources:
                w.writerow([t, src.id, repr(src.demand[t])])
    with (root / "topology.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TOPOLOGY_HEADER)
        for src in scenario.sources:
            for dc in scenario.dc_ids:
                if dc in src.allowed:
                    w.writerow([src.id, dc, repr(src.distance.get(dc, 0.0))])
    cfg = {
        "energy_per_request_kwh": scenario.energy_per_request,
        "w_carbon": scenario.env_weights[0],
        "w_water": scenario.env_weights[1],
        "beta_carbon_usd_per_g": scenario.cost_weights[0],
        "beta_water_usd_per_l": scenario.cost_weights[1],
        "norm_carbon": scenario.env_norms[0],
        "norm_water": scenario.env_norms[1],
    }
    if lam is not None:
        cfg["lambda"] = lam
    if eta is not None:
        cfg["eta"] = eta
    (root / "config.txt").write_text("".join(f"{k}={v!r}\n" for k, v in cfg.items()))
    return root


def write_results(results, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in results:
            row = r.row()
            w.writerow([row["policy"], row["mode"]] + [_fmt(row[k]) for k in RESULTS_HEADER[2:]])


def write_allocation(scenario: Scenario, alloc: Allocation, path) -> None:
    """Dump non-zero flows as ``t,source_id,dc_id,requests``."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ALLOCATION_HEADER)
        for t, s, i in zip(*np.nonzero(alloc.x)):
            w.writerow([int(t), scenario.source_ids[s], scenario.dc_ids[i], _fmt(alloc.x[t, s, i])])
