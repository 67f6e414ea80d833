"""Scenario-approximation LP over (p0, alpha) and the deterministic DC-OPF.

For scenario j and step tau the security block is

    W p0 + (W_full alpha) zeta^tau(j) / base <= b

(the tau = 0 block is W p0 <= b) and every step must respect the ramp limit
``alpha_k |xi^t(j)| <= R_k``.  With alpha fixed, the blocks only shift the
right-hand side; in box mode alpha is a variable in
``[alpha_ref - delta, alpha_ref + delta] ∩ [0, 1]`` summing to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .case_io import GridCase
from .polytope import CostFunction, FeasibilityPolytope, build_feasibility_polytope, reconstruct_state
from .redundancy import OuterPolytope
from .simplex import LpProblem, LpSolution, solve_lp
from .uncertainty import AgcPolicy, ScenarioSet

ALPHA_MODES = ("fixed", "box")
RAMP_TOL = 1e-9


class ScenarioLpError(ValueError):
    pass


class ScenarioRampError(ScenarioLpError):
    """A scenario violates a ramp limit under the fixed participation factors."""

    def __init__(self, scenario: int, step: int, generator: int, excess: float):
        self.scenario, self.step, self.generator, self.excess = scenario, step, generator, excess
        super().__init__(f"scenario forces ramp violation: scenario {scenario + 1}, step {step}, "
                         f"generator {generator + 1} (exceeds limit by {excess:.6g} MW)")


@dataclass
class ScenarioLp:
    """An LP plus what is needed to read its solution back."""

    lp: LpProblem
    poly: FeasibilityPolytope
    alpha_mode: str
    alpha_fixed: np.ndarray

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Reduced p0 (p.u.) and alpha from a primal vector."""
        d = self.poly.dim
        x = np.asarray(x, dtype=float)
        alpha = x[d:] if self.alpha_mode == "box" else self.alpha_fixed
        return x[:d], np.asarray(alpha, dtype=float)


@dataclass
class ScenarioSolution:
    status: str
    objective: float
    p0: np.ndarray | None           # reduced, p.u.
    alpha: np.ndarray
    dispatch_mw: np.ndarray | None  # full generation, MW
    iterations: int
    n_rows: int

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _zeta_with_zero(scenarios: ScenarioSet) -> np.ndarray:
    z = np.asarray(scenarios.zeta, dtype=float)
    return np.hstack([np.zeros((z.shape[0], 1)), z])


def check_ramps(scenarios: ScenarioSet, alpha, ramps) -> None:
    """Raise :class:`ScenarioRampError` on the first (j, t, k) that breaks a ramp limit."""
    alpha = np.asarray(alpha, dtype=float)
    ramps = np.asarray(ramps, dtype=float)
    move = np.abs(scenarios.xi)[:, :, None] * alpha[None, None, :]
    excess = move - ramps[None, None, :]
    bad = np.argwhere(excess > RAMP_TOL)
    if bad.size:
        j, t, k = bad[0]
        raise ScenarioRampError(int(j), int(t) + 1, int(k), float(excess[j, t, k]))


def build_scenario_lp(poly: FeasibilityPolytope, cost: CostFunction, scenarios: ScenarioSet,
                      policy: AgcPolicy, ramps, alpha_mode: str = "fixed",
                      outer: OuterPolytope | None = None, aggregate: bool = True) -> ScenarioLp:
    """Assemble the scenario program.

    With ``aggregate=False`` every (scenario, step, row) block is emitted
    literally: ``(T + 1) * J * N`` security rows, plus ``n_g * N * T``
    ramp rows in box mode.  ``aggregate=True`` keeps only the rows that can
    bind (the tightest right-hand side per W row with alpha fixed; the
    extreme disturbances per row in box mode), which yields the same
    feasible set.  ``outer`` adds the tightened rows of the necessary
    polytope.
    """
    if alpha_mode not in ALPHA_MODES:
        raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
    if scenarios.N < 1:
        raise ScenarioLpError("at least one scenario is required; use solve_deterministic_dcopf instead")
    ramps = np.asarray(ramps, dtype=float)
    if ramps.shape != (poly.n_g,):
        raise ValueError("need one ramp limit per generator")
    if policy.alpha.shape != (poly.n_g,):
        raise ValueError("participation vector length must equal the number of generators")
    if alpha_mode == "box" and policy.deviation_bound <= 0:
        raise ScenarioLpError("box mode needs a positive deviation bound")

    d, J = poly.dim, poly.J
    zeta = _zeta_with_zero(scenarios) / poly.base_mva       # N x (T+1), p.u.
    flat = zeta.ravel()
    labels_w = [f"{kind}{elem}" for kind, elem in poly.row_labels]

    if alpha_mode == "fixed":
        check_ramps(scenarios, policy.alpha, ramps)
        a = poly.agc_sensitivity(policy.alpha)
        if aggregate:
            worst = np.where(a > 0, a * flat.max(), a * flat.min())
            A = poly.W.copy()
            b = poly.b - worst
            row_labels = [f"{lab}|worst" for lab in labels_w]
        else:
            # rows ordered (scenario, step, W row)
            shift = flat[:, None] * a[None, :]
            A = np.tile(poly.W, (flat.size, 1))
            b = (poly.b[None, :] - shift).ravel()
            N, T1 = zeta.shape
            row_labels = [f"{lab}|j{j + 1}|t{t}" for j in range(N) for t in range(T1) for lab in labels_w]
        if outer is not None:
            A = np.vstack([A, poly.W])
            b = np.concatenate([b, outer.effective_b])
            row_labels += [f"{lab}|outer" for lab in labels_w]
        lp = LpProblem(cost.c, A, b, lb=np.full(d, -np.inf), ub=np.full(d, np.inf), c0=cost.ct,
                       var_labels=[f"p{k + 1}" for k in poly.free_gens], row_labels=row_labels)
        return ScenarioLp(lp, poly, alpha_mode, policy.alpha.copy())

    # box mode: variables (p0, alpha)
    n_g = poly.n_g
    if aggregate:
        levels = np.unique(np.array([0.0, flat.max(), flat.min()]))
    else:
        levels = flat
    blocks, rhs, row_labels = [], [], []
    for z in levels:
        blocks.append(np.hstack([poly.W, z * poly.W_full]))
        rhs.append(poly.b)
        row_labels += [f"{lab}|z={z:.6g}" for lab in labels_w]
    xi_abs = np.abs(scenarios.xi)
    if aggregate:
        xi_levels = np.array([xi_abs.max()])
    else:
        xi_levels = xi_abs.ravel()
    for v in xi_levels:
        # alpha >= 0, so |alpha_k xi| <= R_k is the single row alpha_k |xi| <= R_k
        R = np.zeros((n_g, d + n_g))
        R[np.arange(n_g), d + np.arange(n_g)] = v
        blocks.append(R)
        rhs.append(ramps)
        row_labels += [f"ramp{k + 1}|xi={v:.6g}" for k in range(n_g)]
    if outer is not None:
        # tightening uses the reference alpha, as in the redundancy geometry
        blocks.append(np.hstack([poly.W, np.zeros((J, n_g))]))
        rhs.append(outer.effective_b)
        row_labels += [f"{lab}|outer" for lab in labels_w]
    simplex_row = np.concatenate([np.zeros(d), np.ones(n_g)])
    blocks += [simplex_row[None, :], -simplex_row[None, :]]
    rhs += [np.array([1.0]), np.array([-1.0])]
    row_labels += ["alpha_sum<=1", "alpha_sum>=1"]
    A = np.vstack(blocks)
    b = np.concatenate(rhs)
    dev = policy.deviation_bound
    lb = np.concatenate([np.full(d, -np.inf), np.maximum(0.0, policy.alpha_ref - dev)])
    ub = np.concatenate([np.full(d, np.inf), np.minimum(1.0, policy.alpha_ref + dev)])
    c = np.concatenate([cost.c, np.zeros(n_g)])
    var_labels = [f"p{k + 1}" for k in poly.free_gens] + [f"alpha{k + 1}" for k in range(n_g)]
    lp = LpProblem(c, A, b, lb=lb, ub=ub, c0=cost.ct, var_labels=var_labels, row_labels=row_labels)
    return ScenarioLp(lp, poly, alpha_mode, policy.alpha.copy())


def solve_scenario_lp(slp: ScenarioLp) -> ScenarioSolution:
    sol = solve_lp(slp.lp)
    if not sol.ok:
        return ScenarioSolution(sol.status, float("nan"), None, slp.alpha_fixed, None,
                                sol.iterations, slp.lp.n_rows)
    p0, alpha = slp.split(sol.x)
    full, _ = reconstruct_state(slp.poly, p0)
    return ScenarioSolution("optimal", sol.objective, p0, alpha, slp.poly.to_mw(full),
                            sol.iterations, slp.lp.n_rows)


@dataclass
class DcopfResult:
    solution: LpSolution
    poly: FeasibilityPolytope
    cost: CostFunction
    dispatch_mw: np.ndarray | None
    theta: np.ndarray | None
    most_violated: str | None = None

    @property
    def objective(self) -> float:
        return self.solution.objective


def solve_deterministic_dcopf(case: GridCase) -> DcopfResult:
    """Minimize ``c . p + ct`` over ``W p <= b``; report the full dispatch in MW."""
    poly, cost = build_feasibility_polytope(case)
    lp = LpProblem(cost.c, poly.W, poly.b, lb=np.full(poly.dim, -np.inf), ub=np.full(poly.dim, np.inf),
                   c0=cost.ct, var_labels=[f"p{k + 1}" for k in poly.free_gens],
                   row_labels=[f"{kind}{elem}" for kind, elem in poly.row_labels])
    sol = solve_lp(lp)
    if not sol.ok:
        worst = None
        if sol.x is not None:
            viol = poly.W @ sol.x - poly.b
            i = int(np.argmax(viol))
            kind, elem = poly.row_labels[i]
            worst = f"{kind} {elem}"
        return DcopfResult(sol, poly, cost, None, None, worst)
    full, theta = reconstruct_state(poly, sol.x)
    return DcopfResult(sol, poly, cost, poly.to_mw(full), theta)
