"""Full-horizon equity-aware load balancing (eGLB-Off).

Minimizes ``sum_t sum_i cost_it(load_it) + lam * max_i sum_t E_it(load_it)``
over feasible flows.  Two solution methods share one objective:

* ``"lp"`` (default) solves the epigraph form of the max term exactly with
  HiGHS, then snaps the result onto the feasible set.
* ``"subgradient"`` runs projected subgradient descent with a diminishing
  step, starting from the cost-greedy allocation and keeping the best iterate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from eglb.errors import DomainError, InfeasibleError
from eglb.footprint import cost_coefficients, env_coefficients
from eglb.model import Allocation, Scenario, _check_shape, check_allocation

TIE_TOL = 1e-9
ORACLE_BUDGET = 10**7


@dataclass(frozen=True)
class ObjectiveBreakdown:
    cost_term: float
    equity_term: float
    lam: float
    total: float
    argmax_regions: frozenset[str]
    region_env: tuple[float, ...]  # cumulative env-cost per region


@dataclass(frozen=True)
class SolverReport:
    allocation: Allocation
    objective: ObjectiveBreakdown
    iterations: int
    converged: bool
    final_step_size: float
    method: str = "lp"


class ProjectionError(RuntimeError):
    pass


class OracleBudgetError(ValueError):
    pass


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not (lam >= 0 and math.isfinite(lam)):
        raise DomainError(f"lambda must be a finite value >= 0, got {lam}")
    return lam


def _as_array(x) -> np.ndarray:
    return x.x if isinstance(x, Allocation) else np.asarray(x, dtype=float)


def _breakdown(scenario: Scenario, load: np.ndarray, lam: float, c=None, e=None) -> ObjectiveBreakdown:
    c = cost_coefficients(scenario) if c is None else c
    e = env_coefficients(scenario) if e is None else e
    cost_term = float((c * load).sum())
    region = (e * load).sum(axis=0)
    equity = float(region.max())
    argmax = frozenset(d for d, v in zip(scenario.dc_ids, region) if equity - v <= TIE_TOL)
    return ObjectiveBreakdown(
        cost_term=cost_term,
        equity_term=equity,
        lam=lam,
        total=cost_term + lam * equity,
        argmax_regions=argmax,
        region_env=tuple(float(v) for v in region),
    )


def evaluate_objective(scenario: Scenario, alloc, lam: float, allow_infeasible: bool = False) -> ObjectiveBreakdown:
    lam = _check_lambda(lam)
    x = _as_array(alloc)
    _check_shape(scenario, x.shape)
    if not allow_infeasible:
        bad = check_allocation(scenario, Allocation(x))
        if bad:
            raise DomainError(f"infeasible allocation ({len(bad)} violations, first: {bad[0]})")
    return _breakdown(scenario, x.sum(axis=1), lam)


def _subgradient(x: np.ndarray, c: np.ndarray, e: np.ndarray, lam: float) -> np.ndarray:
    region = (e * x.sum(axis=1)).sum(axis=0)
    top = region.max()
    share = (top - region <= TIE_TOL).astype(float)
    share /= share.sum()
    g = c + lam * e * share[None, :]
    return np.broadcast_to(g[:, None, :], x.shape).copy()


def objective_subgradient(scenario: Scenario, alloc, lam: float) -> np.ndarray:
    """Subgradient of the total w.r.t. ``x[t, s, i]``.

    The max term's subgradient is split equally among the regions that attain
    the max (within ``TIE_TOL``).
    """
    lam = _check_lambda(lam)
    x = _as_array(alloc)
    _check_shape(scenario, x.shape)
    return _subgradient(x, cost_coefficients(scenario), env_coefficients(scenario), lam)


# --- feasibility and projection ----------------------------------------------

def check_feasible(scenario: Scenario) -> None:
    """Raise InfeasibleError unless every step's demand can be routed.

    Uses Hall's condition: for each set D of data centers, demand of sources
    whose allowed set lies inside D must fit in the capacity of D.
    """
    demand, cap, mask = scenario.demand, scenario.capacity, scenario.allowed_mask
    T, S = demand.shape
    N = scenario.n_dc
    for s in range(S):
        reach = cap[mask[s]].sum()
        for t in np.nonzero(demand[:, s] > reach * (1 + 1e-9))[0]:
            raise InfeasibleError(
                f"step {t}: demand {demand[t, s]:g} of source {scenario.source_ids[s]!r} exceeds "
                f"capacity {reach:g} of its allowed data centers", step=int(t), source=scenario.source_ids[s])
    if np.all(np.isinf(cap)) or S == 1:
        return
    if N <= 16:
        src_bits = (mask * (1 << np.arange(N))).sum(axis=1)
        subsets = np.arange(1 << N)
        inside = (src_bits[None, :] & ~subsets[:, None]) == 0  # (2^N, S)
        members = ((subsets[:, None] >> np.arange(N)) & 1).astype(bool)
        with np.errstate(invalid="ignore"):
            cap_d = np.where(members, cap[None, :], 0.0).sum(axis=1)
        need = inside.astype(float) @ demand.T  # (2^N, T)
        bad = need > cap_d[:, None] * (1 + 1e-9) + 1e-12
        if bad.any():
            t = int(np.nonzero(bad.any(axis=0))[0][0])
            raise InfeasibleError(f"step {t}: demand cannot be routed within the allowed capacity", step=t)
        return
    import networkx as nx

    for t in range(T):
        g = nx.DiGraph()
        for s in range(S):
            g.add_edge("src", ("s", s), capacity=float(demand[t, s]))
            for i in np.nonzero(mask[s])[0]:
                g.add_edge(("s", s), ("d", int(i)))
        for i in range(N):
            if np.isfinite(cap[i]):
                g.add_edge(("d", i), "sink", capacity=float(cap[i]))
            else:
                g.add_edge(("d", i), "sink")
        flow = nx.maximum_flow_value(g, "src", "sink")
        if flow < demand[t].sum() * (1 - 1e-9):
            raise InfeasibleError(f"step {t}: demand cannot be routed within the allowed capacity", step=t)


def _project_rows(v: np.ndarray, mask: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto {w >= 0, w[~mask] = 0, sum w = z}."""
    lo = np.where(mask, v, np.inf).min(axis=1, keepdims=True)
    lo = np.where(np.isfinite(lo), lo, 0.0)
    w = np.where(mask, v, lo - z[:, None] - 1.0)
    u = -np.sort(-w, axis=1)
    css = np.cumsum(u, axis=1) - z[:, None]
    j = np.arange(1, v.shape[1] + 1)
    rho = (u - css / j > 0).sum(axis=1)
    rho = np.maximum(rho, 1)
    theta = css[np.arange(len(v)), rho - 1] / rho
    out = np.maximum(w - theta[:, None], 0.0)
    out[~mask] = 0.0
    out[z <= 0] = 0.0
    return out


def _project_simplices(x: np.ndarray, mask: np.ndarray, demand: np.ndarray) -> np.ndarray:
    T, S, N = x.shape
    m = np.broadcast_to(mask[None], x.shape).reshape(T * S, N)
    return _project_rows(x.reshape(T * S, N), m, demand.reshape(T * S)).reshape(T, S, N)


def _project_capacity(x: np.ndarray, cap: np.ndarray) -> np.ndarray:
    excess = np.maximum(x.sum(axis=1) - cap[None, :], 0.0)  # (T, N)
    return x - excess[:, None, :] / x.shape[1]


def _cap_excess(x: np.ndarray, cap: np.ndarray) -> float:
    """Largest capacity overload relative to capacity."""
    finite = np.isfinite(cap) & (cap > 0)
    if not finite.any() or x.size == 0:
        return 0.0
    c = cap[finite]
    return float(((x.sum(axis=1)[:, finite] - c) / c).max())


def _repair_step(x: np.ndarray, mask: np.ndarray, cap: np.ndarray) -> None:
    """Shift overload off data centers along augmenting paths, in place.

    ``x`` is one step's (S, N) flow that already meets every demand exactly.
    Moving flow of source ``s`` from dc ``i`` to an allowed dc ``j`` keeps its
    demand met, so a path of such moves ending at a dc with spare capacity
    reduces the overload without touching conservation.
    """
    S, N = x.shape
    for _ in range(10 * S * N + 10):
        load = x.sum(axis=0)
        over = load - cap
        i0 = int(np.argmax(over))
        if over[i0] <= 1e-12 * max(1.0, cap[i0]):
            return
        prev = {i0: None}
        queue = [i0]
        sink = None
        while queue and sink is None:
            i = queue.pop(0)
            for s in np.nonzero(x[:, i] > 0)[0]:
                for j in np.nonzero(mask[s])[0]:
                    if j in prev:
                        continue
                    prev[j] = (i, s)
                    if load[j] < cap[j]:
                        sink = j
                        break
                    queue.append(j)
                if sink is not None:
                    break
        if sink is None:
            raise ProjectionError("capacity overload cannot be moved to any data center with spare capacity")
        path = []
        j = sink
        while prev[j] is not None:
            i, s = prev[j]
            path.append((i, s, j))
            j = i
        amount = min(over[i0], cap[sink] - load[sink], *(x[s, i] for i, s, _ in path))
        for i, s, j in path:
            x[s, i] -= amount
            x[s, j] += amount
    raise ProjectionError("capacity repair did not terminate")


def project_feasible(scenario: Scenario, raw, max_sweeps: int = 500, tol: float = 1e-9) -> Allocation:
    """Euclidean projection onto the transportation polytope.

    Alternates (Dykstra) between per-(t, s) simplex projections and per-(t, i)
    capacity half-spaces, only on steps whose simplex projection overloads a
    data center.  Dykstra can stall for thousands of sweeps near a corner, so
    whatever overload survives ``max_sweeps`` is moved along augmenting paths;
    the result is then checked for exact feasibility.
    """
    raw = np.array(_as_array(raw), dtype=float)
    _check_shape(scenario, raw.shape)
    check_feasible(scenario)
    cap = scenario.capacity
    mask = scenario.allowed_mask & (cap > 0)[None, :]
    demand = scenario.demand
    y = _project_simplices(raw, mask, demand)
    hot = np.nonzero((y.sum(axis=1) > cap[None, :]).any(axis=1))[0]
    if hot.size:
        x = raw[hot]
        d = demand[hot]
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(max_sweeps):
            yk = _project_simplices(x + p, mask, d)
            p = x + p - yk
            if _cap_excess(yk, cap) <= tol:
                break
            x = _project_capacity(yk + q, cap)
            q = yk + q - x
        y[hot] = yk
        for t in hot:
            if _cap_excess(y[t][None], cap) > 0:
                _repair_step(y[t], mask, cap)
    alloc = Allocation(y)
    bad = check_allocation(scenario, alloc)
    if bad:
        raise ProjectionError(f"projection left {len(bad)} violations, first: {bad[0]}")
    return alloc


# --- solvers -----------------------------------------------------------------

def _warm_start(scenario: Scenario) -> np.ndarray:
    from eglb.policies import greedy_allocation

    try:
        return greedy_allocation(scenario, "glb-cost")
    except InfeasibleError:
        even = scenario.allowed_mask[None].astype(float) * scenario.demand[:, :, None]
        return project_feasible(scenario, even / np.maximum(scenario.allowed_mask.sum(axis=1), 1)[None, :, None]).x


def default_step0(scenario: Scenario, lam: float) -> float:
    c = cost_coefficients(scenario)
    marginal = float(c.mean())
    if marginal <= 0:
        marginal = float((c + lam * env_coefficients(scenario)).mean())
    if marginal <= 0:
        return 1.0
    return float(scenario.demand.sum()) / (scenario.horizon * scenario.n_dc * marginal)


def _solve_subgradient(scenario, lam, tol, max_iters, step0, window=50):
    c, e = cost_coefficients(scenario), env_coefficients(scenario)
    step0 = default_step0(scenario, lam) if step0 is None else float(step0)
    x = _warm_start(scenario)
    best_x = x
    best = _breakdown(scenario, x.sum(axis=1), lam, c, e).total
    history = [best]
    converged = False
    alpha = step0
    k = 0
    for k in range(1, max_iters + 1):
        alpha = step0 / math.sqrt(k)
        x = project_feasible(scenario, x - alpha * _subgradient(x, c, e, lam)).x
        total = _breakdown(scenario, x.sum(axis=1), lam, c, e).total
        if total < best:
            best, best_x = total, x
        history.append(best)
        if k >= window:
            old = history[-window - 1]
            if (old - best) / max(1.0, abs(best)) < tol:
                converged = True
                break
    return best_x, k, converged, alpha


def _solve_lp(scenario: Scenario, lam: float):
    T, S, N = scenario.shape
    c, e = cost_coefficients(scenario), env_coefficients(scenario)
    mask = scenario.allowed_mask & (scenario.capacity > 0)[None, :]
    t_idx, s_idx, i_idx = np.nonzero(np.broadcast_to(mask[None], (T, S, N)))
    nv = len(t_idx)
    tau = nv  # epigraph variable for the max term
    cols = np.arange(nv)

    a_eq = sp.csr_matrix((np.ones(nv), (t_idx * S + s_idx, cols)), shape=(T * S, nv + 1))
    b_eq = scenario.demand.reshape(T * S)

    rows, data, colv, b_ub = [], [], [], []
    finite = np.isfinite(scenario.capacity)
    cap_row = {}
    for (t, i) in itertools.product(range(T), np.nonzero(finite)[0]):
        cap_row[(t, i)] = len(cap_row)
        b_ub.append(scenario.capacity[i])
    n_cap = len(cap_row)
    if n_cap:
        sel = finite[i_idx]
        rows.append(np.array([cap_row[(t, i)] for t, i in zip(t_idx[sel], i_idx[sel])], dtype=int))
        colv.append(cols[sel])
        data.append(np.ones(sel.sum()))
    rows.append(n_cap + i_idx)
    colv.append(cols)
    data.append(e[t_idx, i_idx])
    rows.append(n_cap + np.arange(N))
    colv.append(np.full(N, tau))
    data.append(-np.ones(N))
    b_ub.extend([0.0] * N)
    a_ub = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(colv))),
                         shape=(n_cap + N, nv + 1))
    cost = np.append(c[t_idx, i_idx], lam)
    res = linprog(
        cost, A_ub=a_ub, b_ub=np.array(b_ub), A_eq=a_eq, b_eq=b_eq,
        bounds=[(0, None)] * (nv + 1), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        raise InfeasibleError("linear program is infeasible")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    x = np.zeros((T, S, N))
    x[t_idx, s_idx, i_idx] = np.maximum(res.x[:nv], 0.0)
    return project_feasible(scenario, x).x, int(res.nit)


def solve_eglb_off(scenario: Scenario, lam: float, tol: float = 1e-6, max_iters: int = 10000,
                   step0: float | None = None, method: str = "lp") -> SolverReport:
    lam = _check_lambda(lam)
    check_feasible(scenario)
    if method == "lp":
        x, iters = _solve_lp(scenario, lam)
        converged, alpha = True, 0.0
    elif method == "subgradient":
        x, iters, converged, alpha = _solve_subgradient(scenario, lam, tol, max_iters, step0)
    else:
        raise ValueError(f"unknown method {method!r}; expected 'lp' or 'subgradient'")
    alloc = Allocation(x)
    return SolverReport(
        allocation=alloc,
        objective=_breakdown(scenario, alloc.dc_load, lam),
        iterations=iters,
        converged=converged,
        final_step_size=alpha,
        method=method,
    )


# --- brute-force oracle ------------------------------------------------------

def _compositions(n: int, k: int) -> np.ndarray:
    """All ways to put ``n`` identical units into ``k`` bins, shape (m, k)."""
    if k == 1:
        return np.array([[n]])
    out = []
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        edges = (-1,) + bars + (n + k - 1,)
        out.append([edges[j + 1] - edges[j] - 1 for j in range(k)])
    return np.array(out)


def _grid_blocks(scenario: Scenario, step: float):
    T, S, N = scenario.shape
    blocks = []
    for t in range(T):
        for s in range(S):
            d = scenario.demand[t, s]
            allowed = np.nonzero(scenario.allowed_mask[s])[0]
            n = 0 if d <= 0 else max(1, int(round(d / step)))
            unit = d / n if n else 0.0
            opts = np.zeros((1, N)) if n == 0 else np.zeros((math.comb(n + len(allowed) - 1, len(allowed) - 1), N))
            if n:
                opts[:, allowed] = _compositions(n, len(allowed)) * unit
            blocks.append((t, s, opts, unit, len(allowed)))
    return blocks


def grid_slack(scenario: Scenario, lam: float, step: float) -> float:
    """Upper bound on (grid optimum - true optimum) when capacity does not bind.

    Rounding a block's composition to the grid moves at most ``2 * k * unit``
    requests in L1, and each request moves the objective by at most the
    largest marginal cost plus ``lam`` times the largest marginal env-cost.
    """
    c, e = cost_coefficients(scenario), env_coefficients(scenario)
    total = 0.0
    for t, s, _, unit, k in _grid_blocks(scenario, step):
        allowed = scenario.allowed_mask[s]
        total += 2 * k * unit * float((c[t, allowed] + lam * e[t, allowed]).max())
    return total


def brute_force_oracle(scenario: Scenario, lam: float, grid: float, budget: int = ORACLE_BUDGET):
    """Exhaustively minimize the objective over a uniform grid of feasible flows.

    ``grid`` is the target step in requests; each (step, source) demand is cut
    into ``round(demand / grid)`` equal units.
    """
    lam = _check_lambda(lam)
    if not grid > 0:
        raise DomainError(f"grid step must be > 0, got {grid}")
    T, S, N = scenario.shape
    blocks = _grid_blocks(scenario, grid)
    sizes = [len(b[2]) for b in blocks]
    count = math.prod(sizes)
    if count > budget:
        raise OracleBudgetError(f"grid has {count} points, exceeding the enumeration bound of {budget}")
    c, e = cost_coefficients(scenario), env_coefficients(scenario)
    cap = scenario.capacity * (1 + 1e-9)
    chunk = max(1, 2_000_000 // (T * N))
    best_total, best_flat = math.inf, None
    for start in range(0, count, chunk):
        flat = np.arange(start, min(start + chunk, count))
        idx = np.unravel_index(flat, sizes)
        load = np.zeros((len(flat), T, N))
        for b, (t, _, opts, _, _) in enumerate(blocks):
            load[:, t, :] += opts[idx[b]]
        ok = (load <= cap).all(axis=(1, 2))
        total = (load * c).sum(axis=(1, 2)) + lam * (load * e).sum(axis=1).max(axis=1)
        total = np.where(ok, total, np.inf)
        j = int(np.argmin(total))
        if total[j] < best_total:
            best_total, best_flat = float(total[j]), int(flat[j])
    if best_flat is None:
        raise InfeasibleError("no feasible grid point")
    x = np.zeros((T, S, N))
    for b, k in enumerate(np.unravel_index(best_flat, sizes)):
        t, s, opts, _, _ = blocks[b]
        x[t, s] = opts[k]
    return Allocation(x), best_total
