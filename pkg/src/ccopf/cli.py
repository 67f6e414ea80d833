"""Command-line front end.

Subcommands: ``polytope``, ``solve``, ``reliability``, ``compare``.  Settings
come from a flat ``key = value`` config file (``--config``); command-line
flags override it.  Exit codes: 0 success, 2 input error, 3 infeasible
model, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .case_io import CaseError, resolve_case
from .polytope import PolytopeError, dump_polytope_text, export_polytope_csv, build_feasibility_polytope, row_slacks
from .redundancy import RAMP_MODES
from .reliability import SAMPLERS, ExperimentSetup, estimate_reliability_curve, required_samples, sample_grid
from .scenario_opt import ALPHA_MODES, ScenarioLpError, build_scenario_lp, solve_deterministic_dcopf, solve_scenario_lp
from .simplex import IterationLimitError
from .uncertainty import SIGMA_CONVENTIONS, SamplingError, UncertaintyModel, substream

log = logging.getLogger("ccopf")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    case_path: str = "case14"
    eta: float = 0.01
    T: int = 5
    sigma_convention: str = "cumulative"
    sigma_scale: float = 0.01
    L: int = 200
    N_0: int = 10
    N_max: int = 500
    N: int = 100
    N_mc: int = 10 ** 4
    alpha_mode: str = "fixed"
    delta_alpha: float = 0.0
    ramp_redundancy: str = "deterministic"
    mixture_weights: str = "uniform"
    sampler: str = "both"
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"

    def validate(self) -> ExperimentConfig:
        if not 0.0 < self.eta < 1.0:
            raise ConfigError("eta must lie in (0, 1)")
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if self.sigma_convention not in SIGMA_CONVENTIONS:
            raise ConfigError(f"sigma_convention must be one of {SIGMA_CONVENTIONS}")
        if self.sigma_scale < 0:
            raise ConfigError("sigma_scale must be non-negative")
        if self.L < 1 or self.N < 1 or self.N_mc < 1 or self.workers < 1:
            raise ConfigError("L, N, N_mc and workers must be positive")
        if not 1 <= self.N_0 <= self.N_max:
            raise ConfigError("need 1 <= N_0 <= N_max")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.alpha_mode == "box" and self.delta_alpha <= 0:
            raise ConfigError("alpha_mode = box needs delta_alpha > 0")
        if self.delta_alpha < 0:
            raise ConfigError("delta_alpha must be non-negative")
        if self.ramp_redundancy not in RAMP_MODES:
            raise ConfigError(f"ramp_redundancy must be one of {RAMP_MODES}")
        if self.mixture_weights not in ("uniform", "proportional"):
            raise ConfigError("mixture_weights must be uniform or proportional")
        if self.sampler not in SAMPLERS + ("both",):
            raise ConfigError("sampler must be mc, is or both")
        return self

    def samplers(self) -> tuple[str, ...]:
        return ("mc", "is") if self.sampler == "both" else (self.sampler,)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_TYPES = {"float": float, "int": int, "str": str}


def _coerce(key: str, value: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELDS[key].type
    try:
        if kind == "int":
            return int(float(value)) if "e" in value.lower() else int(value)
        return _TYPES[kind](value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read ``key = value`` lines (``#`` comments) over ``base`` or the defaults."""
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                       interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    for key, value in parser["config"].items():
        setattr(cfg, key, _coerce(key, value.strip()))
    return cfg


def load_config(path: str | None, overrides: dict[str, str]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg = parse_config_text(p.read_text(encoding="utf-8"), cfg)
    for key, value in overrides.items():
        setattr(cfg, key, _coerce(key, value))
    return cfg.validate()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_model(cfg: ExperimentConfig, case) -> UncertaintyModel:
    return UncertaintyModel.linear_growth(cfg.T, cfg.sigma_scale, case.n_g, case.base_mva, cfg.sigma_convention)


def _setup(cfg: ExperimentConfig, case, sampler: str) -> ExperimentSetup:
    return ExperimentSetup.create(case, build_model(cfg, case), cfg.eta, sampler, alpha_mode=cfg.alpha_mode,
                                  delta_alpha=cfg.delta_alpha, ramp_redundancy=cfg.ramp_redundancy,
                                  weights=cfg.mixture_weights)


def cmd_polytope(args, out: Path) -> int:
    case = resolve_case(args.case)
    poly, _ = build_feasibility_polytope(case)
    write_atomic(out / "polytope.csv", export_polytope_csv(poly))
    write_atomic(out / "polytope.txt", dump_polytope_text(poly))
    print(f"case {case.name}: n={case.n} m={case.m} n_g={case.n_g} J={poly.J} dim={poly.dim}")
    return EXIT_OK


def cmd_solve(cfg: ExperimentConfig, out: Path) -> int:
    case = resolve_case(cfg.case_path)
    sampler = cfg.samplers()[0]
    setup = _setup(cfg, case, sampler)
    rng = substream(cfg.seed, 1, 0 if sampler == "mc" else 1, cfg.N, 0)
    scen = setup.draw(cfg.N, rng, cfg.seed)
    slp = build_scenario_lp(setup.poly, setup.cost, scen, setup.policy, setup.ramps, cfg.alpha_mode,
                            outer=setup.outer)
    sol = solve_scenario_lp(slp)
    print(f"sampler {sampler} N {cfg.N} status {sol.status}")
    if not sol.ok:
        return EXIT_INFEASIBLE
    lines = [f"objective {sol.objective:.10g}"]
    lines += [f"gen{k + 1} {p:.6f} MW alpha {a:.6f}" for k, (p, a) in enumerate(zip(sol.dispatch_mw, sol.alpha))]
    slack = row_slacks(setup.poly, sol.p0)
    lines += [f"slack {kind}{elem} {s:.6e}" for (kind, elem), s in zip(setup.poly.row_labels, slack)]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    write_atomic(out / f"solution_{sampler}.txt", text)
    write_atomic(out / f"scenarios_{sampler}.csv", scen.to_csv())
    return EXIT_OK


def _reports(cfg: ExperimentConfig, case):
    reports = {}
    for sampler in cfg.samplers():
        log.info("running %s trials: L=%d grid=%s", sampler, cfg.L, sample_grid(cfg.N_0, cfg.N_max))
        setup = _setup(cfg, case, sampler)
        reports[sampler] = estimate_reliability_curve(setup, cfg.L, cfg.N_0, cfg.N_max, cfg.N_mc, cfg.seed,
                                                      workers=cfg.workers)
        if reports[sampler].metadata["infeasible_trials"]:
            log.warning("%s: %d trials had no optimal solution", sampler,
                        reports[sampler].metadata["infeasible_trials"])
    return reports


def _write_reports(reports, out: Path) -> None:
    items = list(reports.items())
    write_atomic(out / "summary.csv", "".join(r.summary_csv(header=i == 0) for i, (_, r) in enumerate(items)))
    write_atomic(out / "boxplot.csv", "".join(r.boxplot_csv(header=i == 0) for i, (_, r) in enumerate(items)))
    for s, r in items:
        write_atomic(out / f"trials_{s}.csv", r.trials_csv())


def cmd_reliability(cfg: ExperimentConfig, out: Path) -> int:
    case = resolve_case(cfg.case_path)
    reports = _reports(cfg, case)
    _write_reports(reports, out)
    write_atomic(out / "config.txt", cfg.to_text())
    for s, r in reports.items():
        print(f"{s}: " + " ".join(f"N={N}:{v:.3f}" for N, v in zip(r.grid, r.curve)))
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, out: Path) -> int:
    case = resolve_case(cfg.case_path)
    dc = solve_deterministic_dcopf(case)
    if not dc.solution.ok:
        print(f"DC-OPF infeasible (most violated: {dc.most_violated})")
        return EXIT_INFEASIBLE
    cfg = dataclasses.replace(cfg, sampler="both")
    reports = _reports(cfg, case)
    _write_reports(reports, out)
    rows = ["case,eta,sampler,N_required,cost_at_N,dcopf_cost"]
    print(f"DC-OPF cost {dc.objective:.6g}")
    for s, r in reports.items():
        n_req = required_samples(r)
        cost = float(np.nanmean(r.objectives(n_req))) if n_req is not None else float("nan")
        rows.append(f"{case.name},{cfg.eta!r},{s},{n_req if n_req is not None else ''},{cost!r},{dc.objective!r}")
        print(f"{s}: N required {n_req}, mean cost {cost:.6g}")
    write_atomic(out / "compare.csv", "\n".join(rows) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value experiment file")
    common.add_argument("--seed", type=int)
    common.add_argument("--sampler", choices=SAMPLERS + ("both",))
    common.add_argument("--out", help="output directory")
    common.add_argument("--case", help="case file or bundled case name")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ccopf", description="Scenario-approximation chance-constrained DC-OPF")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("polytope", parents=[common], help="build and export the feasibility polytope")
    p.add_argument("case_ref", nargs="?", help="case file or bundled case name")
    sub.add_parser("solve", parents=[common], help="solve one scenario program")
    sub.add_parser("reliability", parents=[common], help="empirical reliability curves")
    sub.add_parser("compare", parents=[common], help="SA vs SA-IS sample counts and costs")
    return parser


def _overrides(args) -> dict[str, str]:
    ov = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip()] = v.strip()
    for key, val in (("seed", args.seed), ("sampler", args.sampler), ("output_dir", args.out),
                     ("case_path", args.case)):
        if val is not None:
            ov[key] = str(val)
    return ov


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "polytope":
            args.case = args.case_ref or args.case
            if args.case is None:
                raise ConfigError("polytope needs a case")
            return cmd_polytope(args, Path(args.out or "out"))
        cfg = load_config(args.config, _overrides(args))
        out = Path(cfg.output_dir)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "reliability":
            return cmd_reliability(cfg, out)
        return cmd_compare(cfg, out)
    except (CaseError, ConfigError, FileNotFoundError, PolytopeError, SamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ScenarioLpError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (IterationLimitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
