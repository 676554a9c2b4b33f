"""Seeded synthetic fleets with heterogeneous price, carbon and water."""

from __future__ import annotations

import numpy as np

from eglb.model import DataCenterProfile, Scenario, SourceProfile


def toy2() -> Scenario:
    """Two data centers, one source, two steps of 10 requests.

    dc1 is cheap but dirty (0.10 USD/kWh, 500 g/kWh, 2 L/kWh); dc2 costs
    twice as much and is cleaner (0.20 USD/kWh, 100 g/kWh, 1 L/kWh).
    """
    dc1 = DataCenterProfile("DC1", price=[0.10] * 2, carbon_intensity=[500.0] * 2, wue=[2.0] * 2, pue=[1.0] * 2)
    dc2 = DataCenterProfile("DC2", price=[0.20] * 2, carbon_intensity=[100.0] * 2, wue=[1.0] * 2, pue=[1.0] * 2)
    src = SourceProfile("S1", demand=[10.0, 10.0], allowed={"DC1", "DC2"}, distance={"DC1": 800.0, "DC2": 50.0})
    return Scenario((dc1, dc2), (src,), horizon=2, energy_per_request=1.0,
                    env_weights=(0.5, 0.5), env_norms=(300.0, 1.5))


def synthetic_scenario(
    seed: int = 0,
    n_dc: int = 10,
    n_src: int = 5,
    horizon: int = 168,
    carbon_range=(50.0, 700.0),
    wue_range=(0.2, 9.0),
    price_range=(0.04, 0.25),
    capacity_headroom: float = 2.0,
    reach: int | None = None,
    energy_per_request: float = 0.004,
) -> Scenario:
    """Hourly fleet with diurnal demand and per-site diurnal grid/weather swings.

    Each site draws a base level inside every range and oscillates around it
    (clipped to the range).  Total capacity is ``capacity_headroom`` times the
    peak fleet demand, split unevenly across sites.  With ``reach`` set, each
    source may only use its ``reach`` nearest sites.
    """
    rng = np.random.default_rng(seed)
    hours = np.arange(horizon)

    def series(lo, hi, swing):
        base = rng.uniform(lo, hi)
        phase = rng.uniform(0, 24)
        amp = swing * (hi - lo) * rng.uniform(0.3, 1.0)
        noise = rng.normal(0, 0.02 * (hi - lo), horizon)
        return np.clip(base + amp * np.sin(2 * np.pi * (hours - phase) / 24) + noise, lo, hi)

    dc_xy = rng.uniform(0, 10000, size=(n_dc, 2))
    src_xy = rng.uniform(0, 10000, size=(n_src, 2))
    src_scale = rng.uniform(500, 1500, n_src)
    src_phase = rng.uniform(0, 24, n_src)
    demand = np.array([
        src_scale[s] * (1 + 0.5 * np.sin(2 * np.pi * (hours - src_phase[s]) / 24))
        * rng.uniform(0.9, 1.1, horizon)
        for s in range(n_src)
    ])
    peak = demand.sum(axis=0).max()
    shares = rng.uniform(0.5, 1.5, n_dc)
    capacity = capacity_headroom * peak * shares / shares.sum()

    datacenters = []
    for i in range(n_dc):
        datacenters.append(DataCenterProfile(
            id=f"dc{i:02d}",
            price=series(*price_range, 0.15),
            carbon_intensity=series(*carbon_range, 0.10),
            wue=series(*wue_range, 0.15),
            pue=np.clip(rng.uniform(1.1, 1.5) + rng.normal(0, 0.02, horizon), 1.0, None),
            capacity=float(capacity[i]),
        ))
    ids = [dc.id for dc in datacenters]
    sources = []
    for s in range(n_src):
        km = np.hypot(*(dc_xy - src_xy[s]).T)
        order = np.argsort(km, kind="stable")
        allowed = [ids[i] for i in (order if reach is None else order[:reach])]
        sources.append(SourceProfile(
            id=f"src{s}",
            demand=demand[s],
            allowed=frozenset(allowed),
            distance={ids[i]: float(round(km[i], 3)) for i in range(n_dc)},
        ))
    return Scenario(tuple(datacenters), tuple(sources), horizon, energy_per_request)
