"""Aggregate disturbance model, AGC recourse and scenario samplers.

Disturbances are scalar system imbalances in MW.  ``zeta[:, t-1]`` holds the
cumulative imbalance after step t, i.e. the prefix sum of the per-step draws.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .normal import norm_isf, norm_sf

UNREACHABLE_TAU = 8.0
SIGMA_CONVENTIONS = ("cumulative", "per_step")


class SamplingError(ValueError):
    pass


class UnreachablePlaneError(SamplingError):
    pass


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *key)``.

    Keys are small non-negative integers (purpose code, sample size, trial
    index, ...), so any job can recreate its stream without coordination.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return substream(int(seed_or_rng))


@dataclass(frozen=True)
class UncertaintyModel:
    """Independent Gaussian per-step imbalances with std ``sigma_step`` (MW)."""

    sigma_step: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma_step, dtype=float).ravel()
        if s.size < 1:
            raise ValueError("horizon T must be at least 1")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("per-step standard deviations must be finite and non-negative")
        object.__setattr__(self, "sigma_step", s)

    @property
    def T(self) -> int:
        return self.sigma_step.size

    @property
    def sigma_cum(self) -> np.ndarray:
        return np.sqrt(np.cumsum(self.sigma_step ** 2))

    def trajectory_covariance(self) -> np.ndarray:
        """Covariance of ``(zeta^1, ..., zeta^T)``: ``var(zeta^min(s, t))``."""
        v = self.sigma_cum ** 2
        idx = np.arange(self.T)
        return v[np.minimum.outer(idx, idx)]

    @classmethod
    def from_cumulative(cls, sigma_cum: Sequence[float]) -> UncertaintyModel:
        c = np.asarray(sigma_cum, dtype=float)
        if np.any(np.diff(c) < 0):
            raise ValueError("cumulative standard deviation must be non-decreasing")
        var = np.diff(np.concatenate([[0.0], c ** 2]))
        return cls(np.sqrt(np.maximum(var, 0.0)))

    @classmethod
    def linear_growth(cls, T: int, scale: float, n_g: int, base_mva: float = 1.0,
                      convention: str = "cumulative") -> UncertaintyModel:
        """``scale * t * n_g`` (p.u., converted to MW by ``base_mva``).

        ``convention='cumulative'`` applies the growth to the cumulative
        standard deviation; ``'per_step'`` applies it to each step's draw.
        """
        if T < 1:
            raise ValueError("horizon T must be at least 1")
        vals = scale * np.arange(1, T + 1) * n_g * base_mva
        if convention == "cumulative":
            return cls.from_cumulative(vals)
        if convention == "per_step":
            return cls(vals)
        raise ValueError(f"unknown sigma convention {convention!r}")


def cumulative_std(model: UncertaintyModel, tau: int) -> float:
    if not 1 <= tau <= model.T:
        raise ValueError(f"step {tau} outside 1..{model.T}")
    return float(math.sqrt(float(np.sum(model.sigma_step[:tau] ** 2))))


@dataclass(frozen=True)
class AgcPolicy:
    alpha: np.ndarray
    alpha_ref: np.ndarray | None = None
    deviation_bound: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float).ravel()
        ref = a.copy() if self.alpha_ref is None else np.asarray(self.alpha_ref, dtype=float).ravel()
        if ref.shape != a.shape:
            raise ValueError("alpha and alpha_ref differ in length")
        if np.any(a < -1e-12):
            raise ValueError("participation factors must be non-negative")
        if abs(a.sum() - 1.0) > 1e-9:
            raise ValueError("participation factors must sum to 1")
        if self.deviation_bound < 0:
            raise ValueError("deviation bound must be non-negative")
        if np.max(np.abs(a - ref)) > self.deviation_bound + 1e-12:
            raise ValueError("alpha deviates from alpha_ref by more than the bound")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "alpha_ref", ref)

    @classmethod
    def proportional(cls, weights, deviation_bound: float = 0.0) -> AgcPolicy:
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        a = w / w.sum()
        return cls(a, a.copy(), deviation_bound)


def agc_step(p_prev, policy: AgcPolicy, xi: float) -> np.ndarray:
    """Move every generator by its share of the imbalance ``xi``."""
    return np.asarray(p_prev, dtype=float) + policy.alpha * xi


def simulate_agc(p0, policy: AgcPolicy, zeta) -> np.ndarray:
    """Generation after each step of one trajectory; row 0 is ``p0``."""
    zeta = np.asarray(zeta, dtype=float)
    xi = np.diff(np.concatenate([[0.0], zeta]))
    out = [np.asarray(p0, dtype=float)]
    for x in xi:
        out.append(agc_step(out[-1], policy, x))
    return np.vstack(out)


@dataclass(frozen=True)
class ScenarioSet:
    zeta: np.ndarray
    sampler: str
    seed: int
    likelihood_note: str = ""
    components: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.zeta, dtype=float))
        if z.shape[0] < 1:
            raise ValueError("scenario set must hold at least one trajectory")
        if self.sampler not in ("mc", "is"):
            raise ValueError(f"unknown sampler tag {self.sampler!r}")
        object.__setattr__(self, "zeta", z)

    @property
    def N(self) -> int:
        return self.zeta.shape[0]

    @property
    def T(self) -> int:
        return self.zeta.shape[1]

    @property
    def xi(self) -> np.ndarray:
        return np.diff(self.zeta, axis=1, prepend=0.0)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        note = self.likelihood_note.replace("\n", " ")
        buf.write(f"# sampler={self.sampler} seed={self.seed} note={note}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"zeta_{t + 1}" for t in range(self.T)])
        for row in self.zeta:
            w.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, text: str) -> ScenarioSet:
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ValueError("scenario CSV must start with a metadata line")
        meta: dict[str, str] = {}
        head, _, note = lines[0][1:].strip().partition(" note=")
        for tok in head.split():
            k, _, v = tok.partition("=")
            meta[k] = v
        rows = list(csv.reader(lines[1:]))
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        return cls(data, meta["sampler"], int(meta["seed"]), note)


def sample_mc_scenarios(model: UncertaintyModel, N: int, seed, rng: np.random.Generator | None = None) -> ScenarioSet:
    """Plain Monte-Carlo trajectories."""
    if N < 1:
        raise ValueError("N must be at least 1")
    gen = rng if rng is not None else _as_rng(seed)
    xi = gen.standard_normal((N, model.T)) * model.sigma_step
    seed_tag = seed if isinstance(seed, (int, np.integer)) else -1
    return ScenarioSet(np.cumsum(xi, axis=1), "mc", int(seed_tag), "")


def _psd_sqrt(Sigma: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(Sigma)
    if np.min(w) < -1e-10 * max(1.0, float(np.max(np.abs(w)))):
        raise SamplingError("covariance is not positive semidefinite")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


@dataclass(frozen=True)
class PlaneSampler:
    """Draws from ``N(mu, Sigma)`` restricted to ``omega . x >= threshold``."""

    mu: np.ndarray
    sqrt_cov: np.ndarray
    omega: np.ndarray
    threshold: float
    tau: float
    direction: np.ndarray
    norm: float

    @classmethod
    def create(cls, mu, Sigma, omega, threshold, sqrt_cov=None) -> PlaneSampler:
        mu = np.asarray(mu, dtype=float).ravel()
        omega = np.asarray(omega, dtype=float).ravel()
        S = _psd_sqrt(np.atleast_2d(np.asarray(Sigma, dtype=float))) if sqrt_cov is None else sqrt_cov
        v = S @ omega
        nv = float(np.linalg.norm(v))
        if not nv > 0:
            raise SamplingError("plane normal has zero variance under Sigma")
        tau = (threshold - float(omega @ mu)) / nv
        if tau > UNREACHABLE_TAU:
            raise UnreachablePlaneError(
                f"unreachable plane: standardized distance {tau:.3g} > {UNREACHABLE_TAU}")
        return cls(mu, S, omega, float(threshold), float(tau), v / nv, nv)

    @property
    def mass(self) -> float:
        """Probability of the half-space under the unconditioned Gaussian."""
        return float(norm_sf(self.tau))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        d = self.mu.size
        z = rng.standard_normal((size, d))
        u = rng.random(size)
        # y = Phi^{-1}(Phi(tau) + u (1 - Phi(tau))), evaluated on the upper tail
        q = (1.0 - u) * norm_sf(self.tau)
        q = np.clip(q, np.finfo(float).tiny, 1.0 - 1e-16)
        y = np.maximum(norm_isf(q), self.tau)
        phi = z - np.outer(z @ self.direction, self.direction) + np.outer(y, self.direction)
        return phi @ self.sqrt_cov.T + self.mu


def sample_plane_conditioned(mu, Sigma, omega, threshold, seed, size: int | None = None):
    """Gaussian draw(s) conditioned on the half-space ``omega . x >= threshold``.

    Returns one vector when ``size`` is None, else a ``(size, d)`` array.
    """
    sampler = PlaneSampler.create(mu, Sigma, omega, threshold)
    rng = _as_rng(seed)
    out = sampler.sample(rng, 1 if size is None else size)
    return out[0] if size is None else out


@dataclass(frozen=True)
class MixtureSampler:
    """Equal- or mass-weighted mixture of plane-conditioned Gaussians over
    cumulative-imbalance trajectories."""

    components: tuple[PlaneSampler, ...]
    weights: np.ndarray
    plane_index: np.ndarray
    masses: np.ndarray
    excluded: tuple[int, ...]
    weighting: str

    @property
    def T(self) -> int:
        return self.components[0].mu.size

    def note(self) -> str:
        return (f"mixture of {len(self.components)} plane-conditioned Gaussians, "
                f"{self.weighting} weights, {len(self.excluded)} planes excluded")

    def log_density_ratio(self, zeta) -> np.ndarray:
        """log(f_mixture / f_nominal) for each trajectory (0 mass -> -inf)."""
        zeta = np.atleast_2d(zeta)
        ratio = np.zeros(zeta.shape[0])
        for w, comp, mass in zip(self.weights, self.components, self.masses):
            inside = zeta @ comp.omega >= comp.threshold
            ratio += np.where(inside, w / mass, 0.0)
        with np.errstate(divide="ignore"):
            return np.log(ratio)


def build_mixture(system, weights: str | Sequence[float] | None = None) -> MixtureSampler:
    """Mixture over the planes of a redundancy system.

    ``system`` must expose ``normals`` (R x T), ``thresholds`` (R,) and
    ``model`` (an :class:`UncertaintyModel`).  Planes with zero variance,
    infinite thresholds or standardized distance above 8 are left out.
    ``weights`` is ``None``/``'uniform'``, ``'proportional'`` (to each plane's
    violation probability) or an explicit vector over the kept planes.
    """
    Sigma = system.model.trajectory_covariance()
    S = _psd_sqrt(Sigma)
    mu = np.zeros(system.model.T)
    comps, kept, excluded = [], [], []
    for i, (omega, thr) in enumerate(zip(system.normals, system.thresholds)):
        if not np.isfinite(thr) or not np.any(omega):
            excluded.append(i)
            continue
        try:
            comps.append(PlaneSampler.create(mu, Sigma, omega, thr, sqrt_cov=S))
            kept.append(i)
        except SamplingError:
            excluded.append(i)
    if not comps:
        raise SamplingError("all planes are unreachable; lower eta or shrink the polytope")
    masses = np.array([c.mass for c in comps])
    if weights is None or (isinstance(weights, str) and weights == "uniform"):
        w = np.full(len(comps), 1.0 / len(comps))
        label = "uniform"
    elif isinstance(weights, str) and weights == "proportional":
        w = masses / masses.sum()
        label = "proportional"
    elif isinstance(weights, str):
        raise ValueError(f"unknown weighting {weights!r}")
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(comps),) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("explicit weights must be non-negative, one per kept plane")
        w = w / w.sum()
        label = "explicit"
    return MixtureSampler(tuple(comps), w, np.array(kept), masses, tuple(excluded), label)


def sample_is_scenarios(mixture: MixtureSampler, N: int, seed,
                        rng: np.random.Generator | None = None) -> ScenarioSet:
    """Pick a plane with probability ``w_i`` and sample beyond it, N times."""
    if N < 1:
        raise ValueError("N must be at least 1")
    gen = rng if rng is not None else _as_rng(seed)
    choice = gen.choice(len(mixture.components), size=N, p=mixture.weights)
    zeta = np.empty((N, mixture.T))
    for k in np.unique(choice):
        rows = np.flatnonzero(choice == k)
        zeta[rows] = mixture.components[k].sample(gen, rows.size)
    seed_tag = seed if isinstance(seed, (int, np.integer)) else -1
    return ScenarioSet(zeta, "is", int(seed_tag), mixture.note(), components=mixture.plane_index[choice])
