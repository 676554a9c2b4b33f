from pathlib import Path

import numpy as np
import pytest

from eglb.model import DataCenterProfile, Scenario, SourceProfile
from eglb.synthetic import toy2

ROOT = Path(__file__).resolve().parents[1]
TOY2_DIR = ROOT / "scenarios" / "toy2"


@pytest.fixture(scope="session")
def toy():
    return toy2()


@pytest.fixture(scope="session")
def toy_dir():
    return TOY2_DIR


def split_toy(a: float) -> np.ndarray:
    """TOY2 flows with ``a`` of the 20 requests on DC1, spread evenly over both steps."""
    x = np.zeros((2, 1, 2))
    x[:, 0, 0] = a / 2
    x[:, 0, 1] = 10 - a / 2
    return x


def random_small_scenario(rng, max_demand=3, capacity=True, partial=True, n_dc=None, n_src=None, horizon=None):
    """Tiny instance with integer demand and (optionally) integer capacity.

    Integer data keeps the transportation polytope integral, so every feasible
    point has an integer flow within distance 1 per coordinate.
    """
    N = n_dc or int(rng.integers(1, 4))
    S = n_src or int(rng.integers(1, 3))
    T = horizon or int(rng.integers(1, 4))
    ids = [f"d{i}" for i in range(N)]
    demand = rng.integers(0, max_demand + 1, size=(S, T)).astype(float)
    allowed = []
    for s in range(S):
        if partial and N > 1 and rng.random() < 0.5:
            k = int(rng.integers(1, N + 1))
            allowed.append(frozenset(rng.choice(ids, size=k, replace=False).tolist()))
        else:
            allowed.append(frozenset(ids))
    caps = [np.inf] * N
    if capacity and rng.random() < 0.5:
        peak = demand.sum(axis=0).max()
        caps = [float(rng.integers(int(np.ceil(peak / N)), int(peak) + 2)) for _ in range(N)]
    dcs = tuple(
        DataCenterProfile(
            id=ids[i],
            price=rng.uniform(0.04, 0.25, T),
            carbon_intensity=rng.uniform(50, 700, T),
            wue=rng.uniform(0.2, 9.0, T),
            pue=rng.uniform(1.0, 1.5, T),
            capacity=caps[i],
        )
        for i in range(N)
    )
    srcs = tuple(
        SourceProfile(f"s{s}", demand[s], allowed[s], {d: float(rng.uniform(10, 5000)) for d in ids})
        for s in range(S)
    )
    return Scenario(dcs, srcs, T, energy_per_request=1.0)
