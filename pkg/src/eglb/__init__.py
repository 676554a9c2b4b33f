"""Equity-aware geographical load balancing for AI inference fleets."""

from eglb.errors import (
    DimensionMismatchError,
    DomainError,
    InfeasibleError,
    ScenarioError,
)
from eglb.model import (
    Allocation,
    DataCenterProfile,
    Scenario,
    SourceProfile,
    Violation,
    check_allocation,
    validate_scenario,
)
from eglb.footprint import StepFootprint, env_cost, glb_cost, step_footprint
from eglb.offline import (
    ObjectiveBreakdown,
    SolverReport,
    brute_force_oracle,
    evaluate_objective,
    objective_subgradient,
    project_feasible,
    solve_eglb_off,
)
from eglb.policies import (
    PolicyState,
    StepObservation,
    init_policy,
    mirror_descent_update,
    policy_step,
)
from eglb.sim import (
    FootprintLedger,
    RunResult,
    compute_par,
    load_scenario,
    run_simulation,
    summarize,
)

__version__ = "0.1.0"
