"""Chance-constrained multi-step DC-OPF via scenario approximation."""

from .case_io import GridCase, load_bundled_case, load_case, parse_case, serialize_case, validate_case
from .polytope import CostFunction, FeasibilityPolytope, build_feasibility_polytope, check_feasible, reconstruct_state
from .redundancy import build_outer_polytope, build_redundancy_system, is_redundant
from .reliability import ExperimentSetup, estimate_feasibility_probability, estimate_reliability_curve
from .scenario_opt import build_scenario_lp, solve_deterministic_dcopf, solve_scenario_lp
from .simplex import LpProblem, LpSolution, solve_lp
from .uncertainty import (AgcPolicy, ScenarioSet, UncertaintyModel, build_mixture, sample_is_scenarios,
                          sample_mc_scenarios, sample_plane_conditioned)

__version__ = "0.1.0"
