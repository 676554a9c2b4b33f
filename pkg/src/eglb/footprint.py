"""Load to energy, cost, carbon and water.

Energy is linear in load: ``energy = pue * energy_per_request * load``.  Every
other quantity is a per-kWh intensity times that energy, so all outputs are
1-homogeneous and non-decreasing in load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from eglb.errors import DomainError
from eglb.model import DataCenterProfile, Scenario


@dataclass(frozen=True)
class StepFootprint:
    energy: float  # kWh
    energy_cost: float  # USD
    carbon: float  # gCO2
    water: float  # L


def _check(load: float, dc: DataCenterProfile, t: int) -> None:
    if not 0 <= t < len(dc.pue):
        raise IndexError(f"step {t} out of range for dc {dc.id!r} with horizon {len(dc.pue)}")
    if not (load >= 0 and math.isfinite(load)):
        raise DomainError(f"load must be a finite value >= 0, got {load}")


def step_footprint(load: float, dc: DataCenterProfile, t: int, energy_per_request: float) -> StepFootprint:
    _check(load, dc, t)
    energy = dc.pue[t] * energy_per_request * load
    return StepFootprint(
        energy=energy,
        energy_cost=dc.price[t] * energy,
        carbon=dc.carbon_intensity[t] * energy,
        water=(dc.wue[t] + dc.ewif[t]) * energy,
    )


def env_cost(load: float, dc: DataCenterProfile, t: int, scenario: Scenario) -> float:
    """Dimensionless regional environmental cost of serving ``load`` at step ``t``.

    Carbon and water are each divided by a fleet-scale intensity so the two are
    commensurable, then mixed with ``scenario.env_weights``.
    """
    fp = step_footprint(load, dc, t, scenario.energy_per_request)
    wc, ww = scenario.env_weights
    nc, nw = scenario.env_norms
    return wc * fp.carbon / nc + ww * fp.water / nw


def glb_cost(load: float, dc: DataCenterProfile, t: int, scenario: Scenario) -> float:
    """Energy bill in USD plus optionally monetized carbon and water."""
    fp = step_footprint(load, dc, t, scenario.energy_per_request)
    bc, bw = scenario.cost_weights
    return fp.energy_cost + bc * fp.carbon + bw * fp.water


# Per-request marginal coefficients, shaped (T, N).  Multiplying by the (T, N)
# dc load gives the same quantities as the scalar functions above.

def energy_coefficients(scenario: Scenario) -> np.ndarray:
    return scenario.pue * scenario.energy_per_request


def carbon_coefficients(scenario: Scenario) -> np.ndarray:
    return energy_coefficients(scenario) * scenario.carbon_intensity


def water_coefficients(scenario: Scenario) -> np.ndarray:
    return energy_coefficients(scenario) * (scenario.wue + scenario.ewif)


def cost_coefficients(scenario: Scenario) -> np.ndarray:
    bc, bw = scenario.cost_weights
    return energy_coefficients(scenario) * (
        scenario.price + bc * scenario.carbon_intensity + bw * (scenario.wue + scenario.ewif)
    )


def env_coefficients(scenario: Scenario) -> np.ndarray:
    wc, ww = scenario.env_weights
    nc, nw = scenario.env_norms
    return energy_coefficients(scenario) * (
        wc * scenario.carbon_intensity / nc + ww * (scenario.wue + scenario.ewif) / nw
    )
