"""Causal per-step routing policies.

Each policy sees only the current step's observation and its own state.  The
baselines rank data centers by a fixed marginal score; ``eglb`` adds a dual
price on each region's environmental cost and moves the duals by entropic
mirror ascent on the ``lam``-scaled simplex after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from eglb.errors import DomainError, InfeasibleError
from eglb.model import Scenario

KINDS = ("eglb", "glb-cost", "glb-carbon", "glb-dist")


@dataclass(frozen=True)
class StepObservation:
    t: int
    demand: np.ndarray  # (S,)
    price: np.ndarray  # (N,)
    carbon_intensity: np.ndarray
    wue: np.ndarray
    ewif: np.ndarray
    pue: np.ndarray


def observe(scenario: Scenario, t: int) -> StepObservation:
    """Slice step ``t`` out of the scenario's time series."""
    if not 0 <= t < scenario.horizon:
        raise IndexError(f"step {t} out of range for horizon {scenario.horizon}")
    return StepObservation(
        t=t,
        demand=scenario.demand[t].copy(),
        price=scenario.price[t].copy(),
        carbon_intensity=scenario.carbon_intensity[t].copy(),
        wue=scenario.wue[t].copy(),
        ewif=scenario.ewif[t].copy(),
        pue=scenario.pue[t].copy(),
    )


@dataclass(frozen=True)
class PolicyState:
    kind: str
    lam: float
    eta: float | None  # None: sqrt(ln N / T) / running mean of per-step max env-cost
    mu: np.ndarray | None  # duals, eglb only
    env_ledger: np.ndarray  # cumulative env-cost per region
    step: int = 0
    peak_env_sum: float = 0.0  # sum over steps of max_i env-cost, for the default eta

    def current_eta(self, n_dc: int, horizon: int) -> float:
        if self.eta is not None:
            return self.eta
        if self.step == 0 or self.peak_env_sum <= 0 or n_dc < 2:
            return 0.0
        return math.sqrt(math.log(n_dc) / horizon) / (self.peak_env_sum / self.step)


def init_policy(kind: str, scenario: Scenario, lam: float = 0.0, eta: float | None = None) -> PolicyState:
    if kind not in KINDS:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {', '.join(KINDS)}")
    lam = float(lam)
    if not (lam >= 0 and math.isfinite(lam)):
        raise DomainError(f"lambda must be a finite value >= 0, got {lam}")
    mu = None
    if kind == "eglb":
        if eta is not None and not eta > 0:
            raise DomainError(f"eta must be > 0, got {eta}")
        mu = np.full(scenario.n_dc, lam / scenario.n_dc)
    return PolicyState(
        kind=kind,
        lam=lam,
        eta=None if eta is None else float(eta),
        mu=mu,
        env_ledger=np.zeros(scenario.n_dc),
    )


def mirror_descent_update(mu, lam: float, eta: float, e) -> np.ndarray:
    """One entropic mirror-ascent step on {mu >= 0, sum(mu) = lam}.

    ``mu_i <- lam * mu_i * exp(eta * e_i) / sum_j mu_j * exp(eta * e_j)``
    """
    mu = np.asarray(mu, dtype=float)
    e = np.asarray(e, dtype=float)
    if not eta > 0:
        raise DomainError(f"eta must be > 0, got {eta}")
    if (mu < 0).any():
        raise DomainError("duals must be non-negative")
    live = mu > 0
    if lam > 0 and not live.any():
        raise DomainError("degenerate dual state: all duals are zero with lambda > 0")
    if abs(mu.sum() - lam) > 1e-9 * max(1.0, lam):
        raise DomainError(f"duals sum to {mu.sum()}, expected {lam}")
    if lam == 0:
        return np.zeros_like(mu)
    z = eta * e
    z = z - z[live].max()
    w = np.where(live, mu * np.exp(np.where(live, z, 0.0)), 0.0)
    return lam * w / w.sum()


def step_scores(state: PolicyState, obs: StepObservation, scenario: Scenario) -> np.ndarray:
    """(S, N) marginal score per request; lower is preferred."""
    energy = obs.pue * scenario.energy_per_request
    water = obs.wue + obs.ewif
    S = scenario.n_src
    if state.kind == "glb-dist":
        return np.array(scenario.distance, dtype=float)
    if state.kind == "glb-carbon":
        score = obs.carbon_intensity * energy
    else:
        bc, bw = scenario.cost_weights
        score = energy * (obs.price + bc * obs.carbon_intensity + bw * water)
        if state.kind == "eglb":
            score = score + state.mu * _env_rate(obs, scenario)
    return np.broadcast_to(score, (S, scenario.n_dc))


def _env_rate(obs: StepObservation, scenario: Scenario) -> np.ndarray:
    wc, ww = scenario.env_weights
    nc, nw = scenario.env_norms
    return obs.pue * scenario.energy_per_request * (
        wc * obs.carbon_intensity / nc + ww * (obs.wue + obs.ewif) / nw
    )


def waterfill(scores: np.ndarray, demand: np.ndarray, scenario: Scenario, t: int = 0) -> np.ndarray:
    """Route each source's demand to its cheapest allowed data centers in turn.

    Sources with fewer routing options go first; score ties fall to the
    lexicographically smaller dc id.
    """
    S, N = scores.shape
    remaining = np.array(scenario.capacity, dtype=float)
    mask = scenario.allowed_mask
    out = np.zeros((S, N))
    ids = scenario.dc_ids
    for s in sorted(range(S), key=lambda s: (int(mask[s].sum()), s)):
        need = float(demand[s])
        if need <= 0:
            continue
        for i in sorted(np.nonzero(mask[s])[0], key=lambda i: (scores[s, i], ids[i])):
            take = min(need, remaining[i])
            if take <= 0:
                continue
            out[s, i] += take
            remaining[i] -= take
            need -= take
            if need <= 0:
                break
        if need > 1e-9 * max(1.0, float(demand[s])):
            raise InfeasibleError(
                f"step {t}: source {scenario.source_ids[s]!r} has {need:g} requests left after filling "
                f"its allowed data centers", step=t, source=scenario.source_ids[s])
    return out


def policy_step(state: PolicyState, obs: StepObservation, scenario: Scenario):
    """Allocate one step; returns ``(x_t, new_state)`` with ``x_t`` shaped (S, N)."""
    if obs.t != state.step:
        raise ValueError(f"observation for step {obs.t} but policy expects step {state.step}")
    x = waterfill(step_scores(state, obs, scenario), obs.demand, scenario, obs.t)
    step_env = _env_rate(obs, scenario) * x.sum(axis=0)
    new = replace(
        state,
        env_ledger=state.env_ledger + step_env,
        step=state.step + 1,
        peak_env_sum=state.peak_env_sum + float(step_env.max(initial=0.0)),
    )
    if state.kind == "eglb" and state.lam > 0:
        eta = new.current_eta(scenario.n_dc, scenario.horizon)
        if eta > 0:
            new = replace(new, mu=mirror_descent_update(state.mu, state.lam, eta, step_env))
    return x, new


def greedy_allocation(scenario: Scenario, kind: str, lam: float = 0.0, eta: float | None = None) -> np.ndarray:
    """Run a policy over the whole horizon; returns x shaped (T, S, N)."""
    state = init_policy(kind, scenario, lam, eta)
    x = np.zeros(scenario.shape)
    for t in range(scenario.horizon):
        x[t], state = policy_step(state, observe(scenario, t), scenario)
    return x
