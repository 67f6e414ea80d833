"""DC power-flow feasibility polytope in the space of non-slack generation.

Everything in this module is per-unit on the case MVA base: generation and
demand in p.u., angles in radians, linear cost in currency per p.u.-hour.

Phase angles are eliminated by solving the non-slack node equations, the
slack-node equation gives the reference relation ``a_ref . p_g = b_ref``, and
the slack generator is then substituted out of the security inequalities.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .case_io import GridCase

PIVOT_TOL = 1e-12
FEAS_TOL = 1e-9
ROW_KINDS = ("angle+", "angle-", "gen_upper", "gen_lower")


class PolytopeError(ValueError):
    pass


class SingularSystemError(PolytopeError):
    pass


@dataclass(frozen=True)
class CostFunction:
    """Linear cost on reduced generation: ``c . p + ct`` (p in p.u.)."""

    c: np.ndarray
    ct: float

    def __call__(self, p) -> float:
        return float(np.dot(self.c, p) + self.ct)


@dataclass(frozen=True)
class FeasibilityPolytope:
    """Reduced system ``W p <= b`` over the non-slack generators.

    ``W_full``/``b_full`` is the same system before the slack generator was
    eliminated (columns over all generators, case order).  It is what AGC
    sensitivities are computed from: a unit of disturbance moves generator k
    by ``alpha[k]`` and row i by ``(W_full @ alpha)[i]``.
    """

    W: np.ndarray
    b: np.ndarray
    a_ref: np.ndarray
    b_ref: float
    W_full: np.ndarray
    b_full: np.ndarray
    theta_offset: np.ndarray
    theta_matrix: np.ndarray
    row_labels: tuple[tuple[str, int], ...]
    slack_gen: int
    free_gens: tuple[int, ...]
    bus_ids: tuple[int, ...]
    slack_bus_index: int
    base_mva: float
    demand: np.ndarray = field(repr=False)
    p_min: np.ndarray = field(repr=False)
    p_max: np.ndarray = field(repr=False)

    @property
    def J(self) -> int:
        return self.W.shape[0]

    @property
    def n_g(self) -> int:
        return self.W_full.shape[1]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def full_generation(self, p) -> np.ndarray:
        """Lift reduced generation to all generators via the balance relation."""
        p = _check_dim(self, p)
        full = np.empty(self.n_g)
        rest = list(self.free_gens)
        full[rest] = p
        a0 = self.a_ref[self.slack_gen]
        full[self.slack_gen] = (self.b_ref - self.a_ref[rest] @ p) / a0
        return full

    def reduce(self, p_full) -> np.ndarray:
        return np.asarray(p_full, dtype=float)[list(self.free_gens)]

    def agc_sensitivity(self, alpha) -> np.ndarray:
        """Per-row change of ``W_full p`` for a unit disturbance under AGC ``alpha``."""
        return self.W_full @ np.asarray(alpha, dtype=float)

    def to_mw(self, x):
        return np.asarray(x, dtype=float) * self.base_mva

    def to_pu(self, x):
        return np.asarray(x, dtype=float) / self.base_mva


def _check_dim(poly: FeasibilityPolytope, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (poly.dim,):
        raise PolytopeError(f"expected reduced generation of length {poly.dim}, got shape {p.shape}")
    return p


def build_admittance(case: GridCase) -> np.ndarray:
    """Laplacian ``B`` with ``B_ij = -b_ij`` off the diagonal (p.u.)."""
    idx = case.bus_index()
    B = np.zeros((case.n, case.n))
    for br in case.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        B[i, j] -= br.susceptance
        B[j, i] -= br.susceptance
        B[i, i] += br.susceptance
        B[j, j] += br.susceptance
    return B


def build_equality_system(case: GridCase) -> tuple[np.ndarray, np.ndarray]:
    """Equality constraints over ``chi = (theta, p_g)`` in p.u.

    Row 0 is the system balance ``sum p_g = sum p_d``; row ``1 + i`` is the
    node equation of bus i, ``sum_{g at i} p_g - (B theta)_i = p_d,i``.
    The balance row equals the sum of the node rows, so the rank is one short.
    """
    n, n_g = case.n, case.n_g
    idx = case.bus_index()
    B = build_admittance(case)
    A = np.zeros((n + 1, n + n_g))
    b = np.zeros(n + 1)
    A[0, n:] = 1.0
    b[0] = case.total_demand / case.base_mva
    A[1:, :n] = -B
    for k, g in enumerate(case.generators):
        A[1 + idx[g.bus], n + k] = 1.0
    for i, bus in enumerate(case.buses):
        b[1 + i] = bus.demand / case.base_mva
    return A, b


def _inequality_system(case: GridCase, theta_buses: list[int]):
    """Rows of the security constraints over ``(theta[theta_buses], p_g)``.

    ``theta_buses`` are bus positions; the missing one is the slack (angle 0).
    """
    idx = case.bus_index()
    col = {i: c for c, i in enumerate(theta_buses)}
    m, n_g = case.m, case.n_g
    nt = len(theta_buses)
    A_th = np.zeros((2 * m + 2 * n_g, nt))
    A_pg = np.zeros((2 * m + 2 * n_g, n_g))
    rhs = np.zeros(2 * m + 2 * n_g)
    labels: list[tuple[str, int]] = []
    for sign, kind, offset in ((1.0, "angle+", 0), (-1.0, "angle-", m)):
        for k, br in enumerate(case.branches):
            i, j = idx[br.from_bus], idx[br.to_bus]
            if i in col:
                A_th[offset + k, col[i]] += sign
            if j in col:
                A_th[offset + k, col[j]] -= sign
            rhs[offset + k] = br.angle_limit
            labels.append((kind, k + 1))
    for k, g in enumerate(case.generators):
        A_pg[2 * m + k, k] = 1.0
        rhs[2 * m + k] = g.p_max / case.base_mva
        A_pg[2 * m + n_g + k, k] = -1.0
        rhs[2 * m + n_g + k] = -g.p_min / case.base_mva
    labels += [("gen_upper", k + 1) for k in range(n_g)]
    labels += [("gen_lower", k + 1) for k in range(n_g)]
    return A_th, A_pg, rhs, labels


def build_feasibility_polytope(case: GridCase) -> tuple[FeasibilityPolytope, CostFunction]:
    idx = case.bus_index()
    s = idx[case.slack_bus]
    n, n_g = case.n, case.n_g
    A_eq, b_eq = build_equality_system(case)

    ns = [i for i in range(n) if i != s]
    # the slack-node row is implied by the others plus the balance row; what
    # remains is square: non-slack node rows over non-slack angles
    rows = [1 + i for i in ns]
    At_th = A_eq[np.ix_(rows, ns)]
    At_pg = A_eq[np.ix_(rows, list(range(n, n + n_g)))]
    bt = b_eq[rows]

    if ns:
        lu, piv = lu_factor(At_th, check_finite=True)
        if np.min(np.abs(np.diag(lu))) < PIVOT_TOL:
            raise SingularSystemError("reduced admittance matrix is singular (is the grid connected?)")
        M_p = lu_solve((lu, piv), At_pg)
        M_b = lu_solve((lu, piv), bt)
    else:
        M_p = np.zeros((0, n_g))
        M_b = np.zeros(0)

    # reference relation from the slack-node equation
    A0_th = A_eq[1 + s, ns]
    A0_pg = A_eq[1 + s, n:]
    a_ref = A0_pg - A0_th @ M_p
    b_ref = float(b_eq[1 + s] - A0_th @ M_b)

    g0 = next(k for k, g in enumerate(case.generators) if g.bus == case.slack_bus)
    rest = [k for k in range(n_g) if k != g0]
    a0 = a_ref[g0]
    if abs(a0) < PIVOT_TOL:
        raise PolytopeError("slack not reconstructible: reference coefficient of slack generation is zero")

    A_th, A_pg, b_in, labels = _inequality_system(case, ns)
    A_prime = A_pg - A_th @ M_p
    b_prime = b_in - A_th @ M_b

    W = A_prime[:, rest] - np.outer(A_prime[:, g0], a_ref[rest]) / a0
    b = b_prime - (b_ref / a0) * A_prime[:, g0]

    # theta as an affine map of reduced generation
    E = np.zeros((n_g, len(rest)))
    E[rest, np.arange(len(rest))] = 1.0
    E[g0, :] = -a_ref[rest] / a0
    f = np.zeros(n_g)
    f[g0] = b_ref / a0
    theta_offset = np.zeros(n)
    theta_matrix = np.zeros((n, len(rest)))
    theta_offset[ns] = M_b - M_p @ f
    theta_matrix[ns, :] = -M_p @ E

    c1 = np.array([g.cost_linear for g in case.generators]) * case.base_mva
    c = c1[rest] - (c1[g0] / a0) * a_ref[rest]
    ct = c1[g0] * (b_ref / a0) + sum(g.cost_const for g in case.generators)

    poly = FeasibilityPolytope(
        W=W,
        b=b,
        a_ref=a_ref,
        b_ref=b_ref,
        W_full=A_prime,
        b_full=b_prime,
        theta_offset=theta_offset,
        theta_matrix=theta_matrix,
        row_labels=tuple(labels),
        slack_gen=g0,
        free_gens=tuple(rest),
        bus_ids=tuple(bus.id for bus in case.buses),
        slack_bus_index=s,
        base_mva=case.base_mva,
        demand=np.array([bus.demand for bus in case.buses]) / case.base_mva,
        p_min=np.array([g.p_min for g in case.generators]) / case.base_mva,
        p_max=np.array([g.p_max for g in case.generators]) / case.base_mva,
    )
    return poly, CostFunction(c=c, ct=float(ct))


def check_feasible(poly: FeasibilityPolytope, p, tol: float = FEAS_TOL) -> bool:
    p = _check_dim(poly, p)
    return bool(np.all(poly.W @ p <= poly.b + tol))


def reconstruct_state(poly: FeasibilityPolytope, p) -> tuple[np.ndarray, np.ndarray]:
    """Full generation (p.u., case order) and bus angles (rad, slack at 0)."""
    p = _check_dim(poly, p)
    return poly.full_generation(p), poly.theta_offset + poly.theta_matrix @ p


def row_slacks(poly: FeasibilityPolytope, p) -> np.ndarray:
    p = _check_dim(poly, p)
    return poly.b - poly.W @ p


def export_polytope_csv(poly: FeasibilityPolytope, path: str | Path | None = None) -> str:
    """CSV with one row per inequality: label, element id, W coefficients, b."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "kind", "element"] + [f"w_gen{k + 1}" for k in poly.free_gens] + ["b"])
    for i, (kind, elem) in enumerate(poly.row_labels):
        w.writerow([i, kind, elem] + [repr(float(x)) for x in poly.W[i]] + [repr(float(poly.b[i]))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def dump_polytope_text(poly: FeasibilityPolytope) -> str:
    """Plain-text dump with fixed formatting, used for golden comparisons."""
    lines = [
        f"J {poly.J}",
        f"dim {poly.dim}",
        f"slack_gen {poly.slack_gen + 1}",
        "a_ref " + " ".join(f"{x:.12e}" for x in poly.a_ref),
        f"b_ref {poly.b_ref:.12e}",
    ]
    for i, (kind, elem) in enumerate(poly.row_labels):
        coeffs = " ".join(f"{x:.12e}" for x in poly.W[i])
        lines.append(f"{kind} {elem} | {coeffs} | {poly.b[i]:.12e}")
    return "\n".join(lines) + "\n"
