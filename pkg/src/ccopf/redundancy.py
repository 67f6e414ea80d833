"""Outer (necessary-condition) polytope and redundant-trajectory classification.

With participation factors fixed, row i of the security system at step t
reads ``W_i p0 + a_i zeta^t <= b_i`` where ``a_i = (W_full alpha)_i``.  A
necessary condition for the joint chance constraint is that every single
row holds with probability ``1 - eta``, which tightens ``b_i`` by
``Phi^{-1}(1 - eta) * sigma_cum^t * |a_i|``.  Once those tightened rows are
in the scenario program, a trajectory with ``sign(a_i) zeta^t`` below
``Phi^{-1}(1 - eta) * sigma_cum^t`` for every row and step cannot change the
optimum: it is redundant.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .normal import norm_ppf
from .polytope import FeasibilityPolytope
from .uncertainty import AgcPolicy, UncertaintyModel

ZERO_SENSITIVITY = 1e-12
RAMP_MODES = ("deterministic", "quantile_scaled")


def _check_eta(eta: float) -> float:
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    return float(eta)


def active_rows(poly: FeasibilityPolytope, policy: AgcPolicy) -> np.ndarray:
    a = poly.agc_sensitivity(policy.alpha)
    return np.abs(a) > ZERO_SENSITIVITY


@dataclass(frozen=True)
class OuterPolytope:
    """Tightened thresholds ``b_i - Phi^{-1}(1-eta) sigma_cum^t |a_i|``.

    ``thresholds`` is J x T (p.u.); ``W``/``b`` reference the original system.
    """

    W: np.ndarray
    b: np.ndarray
    thresholds: np.ndarray
    eta: float
    quantile: float

    @property
    def effective_b(self) -> np.ndarray:
        """Per-row binding threshold (the tightest step)."""
        return self.thresholds.min(axis=1)

    def contains(self, p, tol: float = 1e-9) -> bool:
        return bool(np.all(self.W @ np.asarray(p, dtype=float) <= self.effective_b + tol))


def build_outer_polytope(poly: FeasibilityPolytope, policy: AgcPolicy, model: UncertaintyModel,
                         eta: float) -> OuterPolytope:
    eta = _check_eta(eta)
    q = float(norm_ppf(1.0 - eta))
    a = poly.agc_sensitivity(policy.alpha)
    a = np.where(np.abs(a) > ZERO_SENSITIVITY, a, 0.0)
    sig = poly.to_pu(model.sigma_cum)
    thresholds = poly.b[:, None] - q * np.outer(np.abs(a), sig)
    return OuterPolytope(poly.W, poly.b, thresholds, eta, q)


@dataclass(frozen=True)
class PlaneRow:
    kind: str       # security | ramp_up | ramp_down
    t: int          # 1-based step
    source: int     # W row (0-based) or generator (0-based)
    normal: np.ndarray
    threshold: float


@dataclass(frozen=True)
class RedundancySystem:
    """Polytope ``{zeta : normals @ zeta <= thresholds}`` of redundant trajectories.

    Coordinates are cumulative imbalances in MW.
    """

    rows: tuple[PlaneRow, ...]
    eta: float
    alpha: np.ndarray
    model: UncertaintyModel
    ramp_mode: str

    @property
    def normals(self) -> np.ndarray:
        return np.array([r.normal for r in self.rows]).reshape(len(self.rows), self.model.T)

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([r.threshold for r in self.rows])

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        T = self.model.T
        w.writerow(["kind", "t", "source"] + [f"n_{t + 1}" for t in range(T)] + ["threshold"])
        for r in self.rows:
            w.writerow([r.kind, r.t, r.source] + [repr(float(x)) for x in r.normal] + [repr(float(r.threshold))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def build_redundancy_system(poly: FeasibilityPolytope, policy: AgcPolicy, model: UncertaintyModel,
                            ramps, eta: float, ramp_mode: str = "deterministic") -> RedundancySystem:
    """Security rows ``sign(a_i) zeta^t <= q sigma_cum^t`` plus ramp rows.

    Ramp rows bound ``+-alpha_k (zeta^t - zeta^{t-1})`` by ``R_k`` (MW); with
    ``ramp_mode='quantile_scaled'`` the bound is scaled by the same quantile
    ``q`` as the security rows.  ``alpha_k = 0`` gives a vacuous row with an
    infinite threshold.
    """
    eta = _check_eta(eta)
    if ramp_mode not in RAMP_MODES:
        raise ValueError(f"unknown ramp mode {ramp_mode!r}")
    ramps = np.asarray(ramps, dtype=float)
    if ramps.shape != policy.alpha.shape:
        raise ValueError("need one ramp limit per generator")
    q = float(norm_ppf(1.0 - eta))
    a = poly.agc_sensitivity(policy.alpha)
    act = np.abs(a) > ZERO_SENSITIVITY
    if not np.any(act):
        raise ValueError("participation vector is orthogonal to every security row")
    T = model.T
    sig = model.sigma_cum
    eye = np.eye(T)
    rows: list[PlaneRow] = []
    for i in np.flatnonzero(act):
        s = float(np.sign(a[i]))
        for t in range(T):
            rows.append(PlaneRow("security", t + 1, int(i), s * eye[t], float(q * sig[t])))
    for sign, kind in ((1.0, "ramp_up"), (-1.0, "ramp_down")):
        for k, alpha_k in enumerate(policy.alpha):
            for t in range(T):
                diff = eye[t] - (eye[t - 1] if t > 0 else 0.0)
                if alpha_k <= 0:
                    rows.append(PlaneRow(kind, t + 1, k, np.zeros(T), float("inf")))
                    continue
                thr = ramps[k] if ramp_mode == "deterministic" else q * ramps[k]
                rows.append(PlaneRow(kind, t + 1, k, sign * alpha_k * diff, float(thr)))
    return RedundancySystem(tuple(rows), eta, policy.alpha.copy(), model, ramp_mode)


def redundant_mask(zeta, system: RedundancySystem, tol: float = 0.0) -> np.ndarray:
    """Vectorized :func:`is_redundant` over an ``(N, T)`` array."""
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    if zeta.shape[1] != system.model.T:
        raise ValueError(f"trajectories must have length {system.model.T}")
    thr = system.thresholds
    finite = np.isfinite(thr)
    lhs = zeta @ system.normals[finite].T
    return np.all(lhs <= thr[finite] + tol, axis=1)


def is_redundant(traj, system: RedundancySystem) -> bool:
    traj = np.asarray(traj, dtype=float)
    if traj.shape != (system.model.T,):
        raise ValueError(f"trajectory must have length {system.model.T}")
    return bool(redundant_mask(traj[None, :], system)[0])
