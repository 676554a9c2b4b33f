"""Scenario and allocation data model.

A :class:`Scenario` is an immutable description of the fleet: data centers with
per-step price / carbon / water / PUE series, traffic sources with per-step
demand and a routing topology, and the global constants used to turn load into
cost and environmental footprint.  Decisions are flows ``x[t, s, i]`` of
requests from source ``s`` to data center ``i`` at step ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from eglb.errors import DimensionMismatchError

REL_TOL = 1e-9

_DC_SERIES = ("price", "carbon_intensity", "wue", "ewif", "pue")


def _floats(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataCenterProfile:
    id: str
    price: tuple[float, ...]  # USD/kWh
    carbon_intensity: tuple[float, ...]  # gCO2/kWh
    wue: tuple[float, ...]  # L/kWh, on-site
    pue: tuple[float, ...]
    ewif: tuple[float, ...] | None = None  # L/kWh, off-site; zeros when omitted
    capacity: float = math.inf  # requests per step

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        for name in ("price", "carbon_intensity", "wue", "pue"):
            object.__setattr__(self, name, _floats(getattr(self, name)))
        if self.ewif is None:
            object.__setattr__(self, "ewif", (0.0,) * len(self.price))
        else:
            object.__setattr__(self, "ewif", _floats(self.ewif))
        cap = math.inf if self.capacity is None else float(self.capacity)
        object.__setattr__(self, "capacity", cap)


@dataclass(frozen=True)
class SourceProfile:
    id: str
    demand: tuple[float, ...]  # requests per step
    allowed: frozenset[str]
    distance: Mapping[str, float] = field(default_factory=dict)  # km

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "demand", _floats(self.demand))
        object.__setattr__(self, "allowed", frozenset(str(a) for a in self.allowed))
        object.__setattr__(
            self, "distance", {str(k): float(v) for k, v in dict(self.distance).items()}
        )


@dataclass(frozen=True)
class Scenario:
    datacenters: tuple[DataCenterProfile, ...]
    sources: tuple[SourceProfile, ...]
    horizon: int
    energy_per_request: float  # kWh/request
    env_weights: tuple[float, float] = (0.5, 0.5)  # (carbon, water)
    cost_weights: tuple[float, float] = (0.0, 0.0)  # (USD/g, USD/L)
    env_norms: tuple[float, float] | None = None  # (gCO2/kWh, L/kWh)

    def __post_init__(self):
        object.__setattr__(self, "datacenters", tuple(self.datacenters))
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "energy_per_request", float(self.energy_per_request))
        object.__setattr__(self, "env_weights", _floats(self.env_weights))
        object.__setattr__(self, "cost_weights", _floats(self.cost_weights))
        if self.env_norms is None:
            object.__setattr__(self, "env_norms", self._fleet_norms())
        else:
            object.__setattr__(self, "env_norms", _floats(self.env_norms))

    def _fleet_norms(self) -> tuple[float, float]:
        # Fleet time-average carbon intensity and water intensity.
        ci = [v for dc in self.datacenters for v in dc.carbon_intensity]
        water = [w + e for dc in self.datacenters for w, e in zip(dc.wue, dc.ewif)]
        norm_c = sum(ci) / len(ci) if ci else 0.0
        norm_w = sum(water) / len(water) if water else 0.0
        return (norm_c if norm_c > 0 else 1.0, norm_w if norm_w > 0 else 1.0)

    @property
    def n_dc(self) -> int:
        return len(self.datacenters)

    @property
    def n_src(self) -> int:
        return len(self.sources)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.horizon, self.n_src, self.n_dc)

    @cached_property
    def dc_ids(self) -> tuple[str, ...]:
        return tuple(dc.id for dc in self.datacenters)

    @cached_property
    def source_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sources)

    @cached_property
    def dc_index(self) -> dict[str, int]:
        return {d: i for i, d in enumerate(self.dc_ids)}

    def _series(self, name: str) -> np.ndarray:
        return _readonly(np.array([getattr(dc, name) for dc in self.datacenters], dtype=float).T)

    @cached_property
    def price(self) -> np.ndarray:
        """(T, N) electricity price."""
        return self._series("price")

    @cached_property
    def carbon_intensity(self) -> np.ndarray:
        return self._series("carbon_intensity")

    @cached_property
    def wue(self) -> np.ndarray:
        return self._series("wue")

    @cached_property
    def ewif(self) -> np.ndarray:
        return self._series("ewif")

    @cached_property
    def pue(self) -> np.ndarray:
        return self._series("pue")

    @cached_property
    def capacity(self) -> np.ndarray:
        return _readonly(np.array([dc.capacity for dc in self.datacenters], dtype=float))

    @cached_property
    def demand(self) -> np.ndarray:
        """(T, S) requests per step."""
        return _readonly(np.array([s.demand for s in self.sources], dtype=float).T.reshape(self.horizon, self.n_src))

    @cached_property
    def allowed_mask(self) -> np.ndarray:
        """(S, N) boolean routing topology."""
        mask = np.zeros((self.n_src, self.n_dc), dtype=bool)
        for s, src in enumerate(self.sources):
            for d in src.allowed:
                if d in self.dc_index:
                    mask[s, self.dc_index[d]] = True
        return _readonly(mask)

    @cached_property
    def distance(self) -> np.ndarray:
        """(S, N) km; ``inf`` where no distance is known."""
        dist = np.full((self.n_src, self.n_dc), np.inf)
        for s, src in enumerate(self.sources):
            for d, km in src.distance.items():
                if d in self.dc_index:
                    dist[s, self.dc_index[d]] = km
        return _readonly(dist)

    def with_full_topology(self) -> Scenario:
        """Copy of the scenario in which every source may use every data center."""
        every = frozenset(self.dc_ids)
        sources = tuple(replace(src, allowed=every) for src in self.sources)
        return replace(self, sources=sources)

    def zero_allocation(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass(frozen=True)
class Allocation:
    """Flows ``x[t, s, i]`` of requests from source ``s`` to data center ``i``."""

    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 3:
            raise DimensionMismatchError(f"dimension mismatch: allocation must be 3-D (T, S, N), got shape {x.shape}")
        object.__setattr__(self, "x", _readonly(x))

    @property
    def dc_load(self) -> np.ndarray:
        """(T, N) requests served by each data center."""
        return self.x.sum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, Allocation):
            return NotImplemented
        return self.x.shape == other.x.shape and bool(np.array_equal(self.x, other.x))

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    field: str | None = None
    dc: str | None = None
    source: str | None = None
    step: int | None = None
    magnitude: float | None = None

    def __str__(self):
        return self.message


def _where(dc=None, source=None, step=None) -> str:
    parts = []
    if dc is not None:
        parts.append(f"dc {dc!r}")
    if source is not None:
        parts.append(f"source {source!r}")
    if step is not None:
        parts.append(f"step {step}")
    return ", ".join(parts)


def validate_scenario(scenario: Scenario) -> list[Violation]:
    """Return every violated scenario invariant; an empty list means valid."""
    out: list[Violation] = []
    T = scenario.horizon

    def add(kind, msg, **kw):
        out.append(Violation(kind=kind, message=msg, **kw))

    if T < 1:
        add("horizon", f"horizon must be >= 1, got {T}", field="horizon")
    if not scenario.datacenters:
        add("empty", "scenario has no data centers", field="datacenters")
    if not scenario.sources:
        add("empty", "scenario has no sources", field="sources")

    for label, ids in (("data center", [d.id for d in scenario.datacenters]),
                       ("source", [s.id for s in scenario.sources])):
        seen = set()
        for i in ids:
            if i in seen:
                add("duplicate", f"duplicate {label} id {i!r}", field="id")
            seen.add(i)

    eps = scenario.energy_per_request
    if not (math.isfinite(eps) and eps > 0):
        add("constant", f"energy_per_request must be > 0, got {eps}", field="energy_per_request")
    wc, ww = scenario.env_weights
    if not (wc >= 0 and ww >= 0 and wc + ww > 0):
        add("constant", f"env_weights must be >= 0 with positive sum, got {(wc, ww)}", field="env_weights")
    bc, bw = scenario.cost_weights
    if not (bc >= 0 and bw >= 0):
        add("constant", f"cost_weights must be >= 0, got {(bc, bw)}", field="cost_weights")
    nc, nw = scenario.env_norms
    if not (nc > 0 and nw > 0 and math.isfinite(nc) and math.isfinite(nw)):
        add("constant", f"env_norms must be > 0, got {(nc, nw)}", field="env_norms")

    lower = {"price": 0.0, "carbon_intensity": 0.0, "wue": 0.0, "ewif": 0.0, "pue": 1.0}
    shapes_ok = T >= 1
    for dc in scenario.datacenters:
        if not (dc.capacity >= 0):
            add("range", f"dc {dc.id!r}: capacity must be >= 0, got {dc.capacity}", field="capacity", dc=dc.id)
        for name in _DC_SERIES:
            series = getattr(dc, name)
            if len(series) != T:
                shapes_ok = False
                add("length", f"dc {dc.id!r}: {name} has length {len(series)}, expected {T}", field=name, dc=dc.id)
                continue
            lo = lower[name]
            for t, v in enumerate(series):
                if not (math.isfinite(v) and v >= lo):
                    add("range", f"dc {dc.id!r}, field {name}, step {t}: value {v} violates {name} >= {lo:g}",
                        field=name, dc=dc.id, step=t, magnitude=(lo - v) if math.isfinite(v) else None)

    dc_ids = {d.id for d in scenario.datacenters}
    for src in scenario.sources:
        if len(src.demand) != T:
            shapes_ok = False
            add("length", f"source {src.id!r}: demand has length {len(src.demand)}, expected {T}",
                field="demand", source=src.id)
        else:
            for t, v in enumerate(src.demand):
                if not (math.isfinite(v) and v >= 0):
                    add("range", f"source {src.id!r}, field demand, step {t}: value {v} is negative or not finite",
                        field="demand", source=src.id, step=t)
        if not src.allowed:
            add("topology", f"source {src.id!r}: allowed set is empty", field="allowed", source=src.id)
        for d in sorted(src.allowed - dc_ids):
            add("topology", f"source {src.id!r}: allowed dc {d!r} does not exist", field="allowed", source=src.id, dc=d)
        for d, km in sorted(src.distance.items()):
            if d not in dc_ids:
                add("topology", f"source {src.id!r}: distance given for unknown dc {d!r}",
                    field="distance", source=src.id, dc=d)
            elif not (km >= 0):
                add("range", f"source {src.id!r}: distance to {d!r} must be >= 0, got {km}",
                    field="distance", source=src.id, dc=d)
        for d in sorted(src.allowed & dc_ids):
            if d not in src.distance:
                add("topology", f"source {src.id!r}: no distance for allowed dc {d!r}",
                    field="distance", source=src.id, dc=d)

    if shapes_ok and scenario.datacenters and scenario.sources:
        total_cap = sum(dc.capacity for dc in scenario.datacenters)
        for t in range(T):
            total_demand = sum(src.demand[t] for src in scenario.sources)
            if total_demand > total_cap:
                add("feasibility", f"step {t}: total demand {total_demand:g} exceeds total capacity {total_cap:g}",
                    field="demand", step=t, magnitude=total_demand - total_cap)
    return out


def _check_shape(scenario: Scenario, shape: Sequence[int]) -> None:
    if tuple(shape) != scenario.shape:
        raise DimensionMismatchError(
            f"dimension mismatch: expected (T, S, N) = {scenario.shape}, got {tuple(shape)}"
        )


def check_allocation(scenario: Scenario, alloc: Allocation) -> list[Violation]:
    """Report non-negativity, allowed-set, conservation and capacity violations."""
    x = alloc.x
    _check_shape(scenario, x.shape)
    out: list[Violation] = []
    dcs, srcs = scenario.dc_ids, scenario.source_ids

    for t, s, i in zip(*np.nonzero(x < 0)):
        v = float(x[t, s, i])
        out.append(Violation("negativity", f"{_where(dcs[i], srcs[s], int(t))}: negative flow {v:g}",
                             field="x", dc=dcs[i], source=srcs[s], step=int(t), magnitude=-v))

    blocked = ~scenario.allowed_mask
    for t, s, i in zip(*np.nonzero((x != 0) & blocked[None, :, :])):
        v = float(x[t, s, i])
        out.append(Violation("allowed", f"{_where(dcs[i], srcs[s], int(t))}: flow {v:g} to a disallowed dc",
                             field="x", dc=dcs[i], source=srcs[s], step=int(t), magnitude=abs(v)))

    demand = scenario.demand
    gap = x.sum(axis=2) - demand
    bad = np.abs(gap) > REL_TOL * np.maximum(1.0, demand)
    for t, s in zip(*np.nonzero(bad)):
        g = float(gap[t, s])
        out.append(Violation("conservation",
                             f"{_where(source=srcs[s], step=int(t))}: routed {demand[t, s] + g:g} of demand "
                             f"{demand[t, s]:g} (off by {abs(g):g})",
                             field="x", source=srcs[s], step=int(t), magnitude=abs(g)))

    load = alloc.dc_load
    cap = scenario.capacity
    over = load > cap[None, :] * (1 + REL_TOL)
    for t, i in zip(*np.nonzero(over)):
        excess = float(load[t, i] - cap[i])
        out.append(Violation("capacity", f"{_where(dcs[i], step=int(t))}: load {load[t, i]:g} exceeds capacity "
                                         f"{cap[i]:g} by {excess:g}",
                             field="x", dc=dcs[i], step=int(t), magnitude=excess))
    return out
