"""Empirical reliability of scenario solutions.

For each sample size N on a grid, L independent trials draw N scenarios,
solve the scenario LP and estimate the out-of-sample probability that every
security and ramp constraint holds under AGC.  The reliability at N is the
fraction of trials whose estimate reaches ``1 - eta``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .case_io import GridCase
from .polytope import FeasibilityPolytope, build_feasibility_polytope
from .redundancy import build_outer_polytope, build_redundancy_system
from .scenario_opt import ScenarioLpError, build_scenario_lp, solve_scenario_lp
from .uncertainty import (AgcPolicy, SamplingError, UncertaintyModel, build_mixture, sample_is_scenarios,
                          sample_mc_scenarios, substream)

SAMPLERS = ("mc", "is")
DEFAULT_L = 200
DEFAULT_N_MC = 10 ** 4
FEAS_TOL = 1e-9

# substream purpose codes
_IN_SAMPLE = 1
_OUT_OF_SAMPLE = 2
_SAMPLER_CODE = {"mc": 0, "is": 1}


def _margins(poly: FeasibilityPolytope, p0, alpha):
    """Admissible band ``[lo, hi]`` (MW) for the cumulative imbalance.

    Row i holds at a step iff ``a_i zeta <= (b_i - W_i p0) * base``; rows with
    zero sensitivity only constrain the base point.
    """
    slack = (poly.b - poly.W @ np.asarray(p0, dtype=float)) * poly.base_mva
    a = poly.agc_sensitivity(alpha)
    base_ok = bool(np.all(slack >= -FEAS_TOL * poly.base_mva))
    pos, neg = a > 1e-12, a < -1e-12
    hi = float(np.min(slack[pos] / a[pos])) if np.any(pos) else math.inf
    lo = float(np.max(slack[neg] / a[neg])) if np.any(neg) else -math.inf
    return base_ok, lo, hi


def feasible_mask(poly: FeasibilityPolytope, p0, alpha, ramps, zeta) -> np.ndarray:
    """Per-trajectory joint feasibility (security at every step, ramps)."""
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    base_ok, lo, hi = _margins(poly, p0, alpha)
    if not base_ok:
        return np.zeros(zeta.shape[0], dtype=bool)
    tol = FEAS_TOL * poly.base_mva
    ok = (zeta.max(axis=1) <= hi + tol) & (zeta.min(axis=1) >= lo - tol)
    xi = np.diff(np.hstack([np.zeros((zeta.shape[0], 1)), zeta]), axis=1)
    alpha = np.asarray(alpha, dtype=float)
    ramps = np.asarray(ramps, dtype=float)
    ramp_ok = np.all(np.abs(xi)[:, :, None] * alpha[None, None, :] <= ramps[None, None, :] + FEAS_TOL, axis=(1, 2))
    return ok & ramp_ok


def estimate_feasibility_probability(p0, alpha, poly: FeasibilityPolytope, model: UncertaintyModel, ramps,
                                     N_mc: int = DEFAULT_N_MC, seed=0,
                                     rng: np.random.Generator | None = None) -> float:
    """Fraction of fresh Monte-Carlo trajectories along which ``p0`` stays feasible.

    ``p0`` is reduced generation in p.u.; trajectories are always plain
    Monte-Carlo regardless of how the solution was obtained.
    """
    if N_mc < 1:
        raise ValueError("N_mc must be at least 1")
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (poly.dim,):
        raise ValueError(f"expected reduced generation of length {poly.dim}")
    scen = sample_mc_scenarios(model, N_mc, seed, rng=rng)
    return float(np.mean(feasible_mask(poly, p0, alpha, ramps, scen.zeta)))


def sample_grid(N_0: int, N_max: int) -> list[int]:
    """``N_0, N_0 + s, ...`` up to ``N_max`` with ``s = ceil(N_max / 10)``."""
    if not 1 <= N_0 <= N_max:
        raise ValueError("need 1 <= N_0 <= N_max")
    step = max(1, math.ceil(N_max / 10))
    return list(range(N_0, N_max + 1, step))


@dataclass
class ExperimentSetup:
    """Everything a trial needs, built once per (case, eta, sampler)."""

    poly: FeasibilityPolytope
    cost: object
    model: UncertaintyModel
    policy: AgcPolicy
    ramps: np.ndarray
    eta: float
    sampler: str
    alpha_mode: str = "fixed"
    mixture: object = None
    outer: object = None

    @classmethod
    def create(cls, case: GridCase, model: UncertaintyModel, eta: float, sampler: str,
               alpha_mode: str = "fixed", delta_alpha: float = 0.0,
               ramp_redundancy: str = "deterministic", weights=None) -> ExperimentSetup:
        if sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if not 0.0 < eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        poly, cost = build_feasibility_polytope(case)
        ramps = np.array([g.ramp_limit for g in case.generators])
        policy = AgcPolicy.proportional(ramps, delta_alpha)
        setup = cls(poly, cost, model, policy, ramps, eta, sampler, alpha_mode)
        if sampler == "is":
            system = build_redundancy_system(poly, policy, model, ramps, eta, ramp_redundancy)
            setup.mixture = build_mixture(system, weights)
            setup.outer = build_outer_polytope(poly, policy, model, eta)
        return setup

    def draw(self, N: int, rng: np.random.Generator, seed: int):
        if self.sampler == "mc":
            return sample_mc_scenarios(self.model, N, seed, rng=rng)
        return sample_is_scenarios(self.mixture, N, seed, rng=rng)


@dataclass
class TrialResult:
    N: int
    trial: int
    p_hat: float
    objective: float
    status: str


def run_trial(setup: ExperimentSetup, N: int, trial: int, N_mc: int, seed: int) -> TrialResult:
    code = _SAMPLER_CODE[setup.sampler]
    rng = substream(seed, _IN_SAMPLE, code, N, trial)
    try:
        scen = setup.draw(N, rng, seed)
        slp = build_scenario_lp(setup.poly, setup.cost, scen, setup.policy, setup.ramps,
                                setup.alpha_mode, outer=setup.outer)
        sol = solve_scenario_lp(slp)
    except (ScenarioLpError, SamplingError) as exc:
        return TrialResult(N, trial, 0.0, float("nan"), f"error:{type(exc).__name__}")
    if not sol.ok:
        return TrialResult(N, trial, 0.0, float("nan"), sol.status)
    eval_rng = substream(seed, _OUT_OF_SAMPLE, code, N, trial)
    p_hat = estimate_feasibility_probability(sol.p0, sol.alpha, setup.poly, setup.model, setup.ramps,
                                             N_mc, rng=eval_rng)
    return TrialResult(N, trial, p_hat, sol.objective, "optimal")


@dataclass
class ReliabilityReport:
    sampler: str
    eta: float
    L: int
    N_mc: int
    seed: int
    grid: list[int]
    trials: list[TrialResult]
    metadata: dict = field(default_factory=dict)

    def p_hat(self, N: int) -> np.ndarray:
        return np.array([t.p_hat for t in self.trials if t.N == N])

    def count(self, N: int) -> int:
        return int(np.sum(self.p_hat(N) >= 1.0 - self.eta))

    def reliability(self, N: int) -> float:
        return self.count(N) / self.L

    @property
    def curve(self) -> np.ndarray:
        return np.array([self.reliability(N) for N in self.grid])

    def objectives(self, N: int) -> np.ndarray:
        return np.array([t.objective for t in self.trials if t.N == N])

    @property
    def infeasible_trials(self) -> list[tuple[int, int]]:
        return [(t.N, t.trial) for t in self.trials if t.status != "optimal"]

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sampler", "eta", "N", "trial", "P_hat", "objective", "status"])
        for t in self.trials:
            w.writerow([self.sampler, repr(self.eta), t.N, t.trial, repr(t.p_hat), repr(t.objective), t.status])
        return buf.getvalue()

    def summary_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["sampler", "eta", "N", "reliability"])
        for N in self.grid:
            w.writerow([self.sampler, repr(self.eta), N, repr(self.reliability(N))])
        return buf.getvalue()

    def boxplot_csv(self, header: bool = True) -> str:
        """Five-number summary of per-trial P_hat for each N."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["sampler", "eta", "N", "min", "q1", "median", "q3", "max", "mean"])
        for N in self.grid:
            v = self.p_hat(N)
            q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
            w.writerow([self.sampler, repr(self.eta), N] + [repr(float(x)) for x in q] + [repr(float(v.mean()))])
        return buf.getvalue()


def required_samples(report: ReliabilityReport, target: float | None = None) -> int | None:
    """Smallest grid N whose reliability reaches ``target`` (default ``1 - eta``)."""
    target = 1.0 - report.eta if target is None else target
    for N in report.grid:
        if report.reliability(N) >= target - 1e-12:
            return N
    return None


def estimate_reliability_curve(setup: ExperimentSetup, L: int = DEFAULT_L, N_0: int = 1, N_max: int = 100,
                               N_mc: int = DEFAULT_N_MC, seed: int = 0, grid: list[int] | None = None,
                               workers: int = 1) -> ReliabilityReport:
    """Repeat L trials at each grid size; the result does not depend on ``workers``."""
    if L < 1:
        raise ValueError("L must be at least 1")
    grid = sample_grid(N_0, N_max) if grid is None else sorted(int(n) for n in grid)
    jobs = [(N, l) for N in grid for l in range(L)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(lambda job: run_trial(setup, job[0], job[1], N_mc, seed), jobs))
    else:
        trials = [run_trial(setup, N, l, N_mc, seed) for N, l in jobs]
    report = ReliabilityReport(setup.sampler, setup.eta, L, N_mc, seed, grid, trials)
    bad = report.infeasible_trials
    report.metadata = {"infeasible_trials": len(bad), "alpha_mode": setup.alpha_mode,
                       "T": setup.model.T}
    if setup.mixture is not None:
        report.metadata["mixture"] = setup.mixture.note()
    return report


def run_reliability(case: GridCase, model: UncertaintyModel, eta: float, sampler: str, L: int = DEFAULT_L,
                    N_0: int = 1, N_max: int = 100, N_mc: int = DEFAULT_N_MC, seed: int = 0,
                    **setup_kwargs) -> ReliabilityReport:
    setup = ExperimentSetup.create(case, model, eta, sampler, **setup_kwargs)
    return estimate_reliability_curve(setup, L, N_0, N_max, N_mc, seed)
