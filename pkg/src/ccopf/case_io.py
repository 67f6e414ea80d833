"""Grid case model and readers for MATPOWER-style and canonical JSON cases.

Units on a parsed :class:`GridCase`: demands, generation limits and ramp
limits in MW (ramps per time step), susceptances in per-unit on ``base_mva``,
angle limits in radians, linear costs in currency per MWh.
"""

from __future__ import annotations

import json
import math
import re
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

FORMATS = ("matpower", "canonical")

# angle limits of 0 or >= 360 deg are "unconstrained" in MATPOWER; we keep a
# finite but non-binding row instead
UNCONSTRAINED_ANGLE = 2.0 * math.pi


class CaseError(Exception):
    """Base class for case reading problems."""


class CaseParseError(CaseError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class CaseValidationError(CaseError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class Bus:
    id: int
    demand: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    susceptance: float
    angle_limit: float = UNCONSTRAINED_ANGLE


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    ramp_limit: float
    cost_linear: float = 0.0
    cost_const: float = 0.0


@dataclass(frozen=True)
class Violation:
    invariant: str
    element: str
    message: str

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True)
class GridCase:
    name: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    slack_buses: tuple[int, ...]
    base_mva: float = 100.0

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def m(self) -> int:
        return len(self.branches)

    @property
    def n_g(self) -> int:
        return len(self.generators)

    @property
    def slack_bus(self) -> int:
        if len(self.slack_buses) != 1:
            raise CaseError(f"expected exactly one slack bus, got {list(self.slack_buses)}")
        return self.slack_buses[0]

    @property
    def total_demand(self) -> float:
        return sum(b.demand for b in self.buses)

    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}


def validate_case(case: GridCase) -> list[Violation]:
    """Return every invariant violation of ``case``; empty when valid."""
    out: list[Violation] = []

    def add(inv, elem, msg):
        out.append(Violation(inv, elem, msg))

    if len(case.slack_buses) == 0:
        add("single_slack", "case", "no slack bus")
    elif len(case.slack_buses) > 1:
        add("single_slack", "case", "multiple slack buses")

    seen: set[int] = set()
    for b in case.buses:
        if b.id in seen:
            add("unique_bus_ids", f"bus {b.id}", f"duplicate bus id {b.id}")
        seen.add(b.id)

    for s in dict.fromkeys(case.slack_buses):
        if s not in seen:
            add("slack_exists", f"bus {s}", f"slack bus {s} does not exist")
        elif not any(g.bus == s for g in case.generators):
            add("slack_has_generator", f"bus {s}", f"slack bus {s} hosts no generator")

    for k, br in enumerate(case.branches, start=1):
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                add("branch_endpoints", f"branch {k}", f"branch {k} references unknown bus {end}")
        if br.from_bus == br.to_bus:
            add("branch_endpoints", f"branch {k}", f"branch {k} is a self-loop at bus {br.from_bus}")
        if not br.susceptance > 0:
            add("positive_susceptance", f"branch {k}", f"branch {k} has non-positive susceptance")
        if not br.angle_limit > 0:
            add("positive_angle_limit", f"branch {k}", f"branch {k} has non-positive angle limit")

    gen_buses: dict[int, int] = {}
    for k, g in enumerate(case.generators, start=1):
        if g.bus not in seen:
            add("generator_bus", f"generator {k}", f"generator {k} at unknown bus {g.bus}")
        if g.p_min > g.p_max:
            add("generator_limits", f"generator {k}", f"generator {k} has p_min > p_max")
        if not g.ramp_limit > 0:
            add("positive_ramp", f"generator {k}", f"generator {k} has non-positive ramp limit")
        if g.bus in gen_buses:
            add("one_generator_per_bus", f"generator {k}",
                f"generator {k} shares bus {g.bus} with generator {gen_buses[g.bus]}")
        else:
            gen_buses[g.bus] = k

    # connectivity over the branch graph, starting from the first bus
    if case.buses:
        adj: dict[int, list[int]] = {b.id: [] for b in case.buses}
        for br in case.branches:
            if br.from_bus in adj and br.to_bus in adj:
                adj[br.from_bus].append(br.to_bus)
                adj[br.to_bus].append(br.from_bus)
        start = case.buses[0].id
        reached = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in reached:
                    reached.add(v)
                    queue.append(v)
        for b in case.buses:
            if b.id not in reached:
                add("connected", f"bus {b.id}", f"disconnected bus {b.id}")

    if sum(g.p_max for g in case.generators) < case.total_demand:
        add("capacity", "case", "insufficient generation capacity")
    return out


def merge_generators(case: GridCase) -> GridCase:
    """Collapse generators sharing a bus into one unit per bus.

    Limits, ramps and constant costs add up; the linear cost is the average
    weighted by ``p_max`` (plain mean when all ``p_max`` are zero).
    """
    groups: dict[int, list[Generator]] = {}
    for g in case.generators:
        groups.setdefault(g.bus, []).append(g)
    if all(len(v) == 1 for v in groups.values()):
        return case
    merged = []
    for bus, gens in groups.items():
        cap = sum(g.p_max for g in gens)
        if cap > 0:
            c1 = sum(g.cost_linear * g.p_max for g in gens) / cap
        else:
            c1 = sum(g.cost_linear for g in gens) / len(gens)
        merged.append(Generator(
            bus=bus,
            p_min=sum(g.p_min for g in gens),
            p_max=cap,
            ramp_limit=sum(g.ramp_limit for g in gens),
            cost_linear=c1,
            cost_const=sum(g.cost_const for g in gens),
        ))
    return replace(case, generators=tuple(merged))


def _finalize(raw: GridCase) -> GridCase:
    pre = [v for v in validate_case(raw) if v.invariant != "one_generator_per_bus"]
    if pre:
        raise CaseValidationError(pre)
    case = merge_generators(raw)
    post = validate_case(case)
    if post:
        raise CaseValidationError(post)
    return case


def parse_case(text: str, format: str = "canonical", name: str | None = None) -> GridCase:
    """Parse case-file contents into a validated :class:`GridCase`."""
    if format in ("matpower", "matpower-subset"):
        raw = _parse_matpower(text, name)
    elif format == "canonical":
        raw = _parse_canonical(text, name)
    else:
        raise ValueError(f"unknown case format {format!r}")
    return _finalize(raw)


def load_case(path: str | Path, format: str | None = None) -> GridCase:
    path = Path(path)
    if format is None:
        format = "matpower" if path.suffix == ".m" else "canonical"
    return parse_case(path.read_text(encoding="utf-8"), format, name=path.stem)


def bundled_case_path(name: str) -> Path:
    """Path of a case shipped with the package (``case3``, ``case14``)."""
    data = resources.files("ccopf") / "data"
    for candidate in (f"{name}.m", f"{name}.json", name):
        p = data / candidate
        if p.is_file():
            return Path(str(p))
    raise FileNotFoundError(f"no bundled case named {name!r}")


def load_bundled_case(name: str) -> GridCase:
    return load_case(bundled_case_path(name))


def resolve_case(ref: str | Path) -> GridCase:
    """Load ``ref`` as a file path, falling back to a bundled case name."""
    p = Path(ref)
    if p.is_file():
        return load_case(p)
    try:
        return load_bundled_case(str(ref))
    except FileNotFoundError:
        raise FileNotFoundError(f"case not found: {ref}") from None


# -- canonical JSON -------------------------------------------------------

def serialize_case(case: GridCase) -> str:
    slack = case.slack_buses[0] if len(case.slack_buses) == 1 else list(case.slack_buses)
    doc = {
        "name": case.name,
        "base_mva": case.base_mva,
        "slack_bus": slack,
        "buses": [asdict(b) for b in case.buses],
        "branches": [asdict(b) for b in case.branches],
        "generators": [asdict(g) for g in case.generators],
    }
    return json.dumps(doc, indent=2) + "\n"


def _parse_canonical(text: str, name: str | None) -> GridCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict):
        raise CaseParseError("top level must be an object", 1)
    for key in ("buses", "branches", "generators", "slack_bus"):
        if key not in doc:
            raise CaseParseError(f"missing section {key!r}")

    def build(cls, items, section):
        if not isinstance(items, list):
            raise CaseParseError(f"section {section!r} must be a list")
        out = []
        for k, item in enumerate(items, start=1):
            try:
                out.append(cls(**item))
            except TypeError as exc:
                raise CaseParseError(f"{section} entry {k}: {exc}") from None
        return tuple(out)

    buses = build(Bus, doc["buses"], "buses")
    buses = tuple(Bus(int(b.id), float(b.demand)) for b in buses)
    branches = build(Branch, doc["branches"], "branches")
    branches = tuple(Branch(int(b.from_bus), int(b.to_bus), float(b.susceptance), float(b.angle_limit))
                     for b in branches)
    gens = build(Generator, doc["generators"], "generators")
    gens = tuple(Generator(int(g.bus), float(g.p_min), float(g.p_max), float(g.ramp_limit),
                           float(g.cost_linear), float(g.cost_const)) for g in gens)
    slack = doc["slack_bus"]
    slack_buses = tuple(int(s) for s in slack) if isinstance(slack, list) else (int(slack),)
    return GridCase(
        name=str(doc.get("name", name or "case")),
        buses=buses,
        branches=branches,
        generators=gens,
        slack_buses=slack_buses,
        base_mva=float(doc.get("base_mva", 100.0)),
    )


# -- MATPOWER subset -----------------------------------------------------

_BLOCK_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[")
_SCALAR_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([^;\[]+);")

# minimum column counts for the tables we read
_MIN_COLS = {"bus": 3, "branch": 11, "gen": 10, "gencost": 5}


def _strip_comment(line: str) -> str:
    return line.split("%", 1)[0]


def _matpower_tables(text: str) -> tuple[dict[str, list[tuple[int, list[float]]]], dict[str, tuple[int, str]]]:
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    scalars: dict[str, tuple[int, str]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if current is None:
            m = _BLOCK_RE.match(line)
            if m:
                current = m.group(1)
                tables[current] = []
                line = line[m.end():]
            else:
                s = _SCALAR_RE.match(line)
                if s:
                    scalars[s.group(1)] = (lineno, s.group(2).strip())
                continue
        closed = "]" in line
        if closed:
            line = line.split("]", 1)[0]
        for chunk in line.split(";"):
            toks = chunk.replace(",", " ").split()
            if not toks:
                continue
            try:
                tables[current].append((lineno, [float(t) for t in toks]))
            except ValueError:
                raise CaseParseError(f"non-numeric entry in mpc.{current}", lineno) from None
        if closed:
            current = None
    if current is not None:
        raise CaseParseError(f"unterminated matrix mpc.{current}")
    return tables, scalars


def _parse_matpower(text: str, name: str | None) -> GridCase:
    tables, scalars = _matpower_tables(text)
    for key in ("bus", "branch", "gen", "gencost"):
        if key not in tables:
            raise CaseParseError(f"missing matrix mpc.{key}")
        for lineno, row in tables[key]:
            if len(row) < _MIN_COLS[key]:
                raise CaseParseError(f"mpc.{key} row has {len(row)} columns, need {_MIN_COLS[key]}", lineno)
    base = 100.0
    if "baseMVA" in scalars:
        lineno, val = scalars["baseMVA"]
        try:
            base = float(val)
        except ValueError:
            raise CaseParseError("baseMVA is not a number", lineno) from None

    buses, slack = [], []
    for _, row in tables["bus"]:
        if int(row[1]) == 4:  # isolated
            continue
        buses.append(Bus(int(row[0]), row[2]))
        if int(row[1]) == 3:
            slack.append(int(row[0]))

    branches = []
    for lineno, row in tables["branch"]:
        if row[10] == 0:
            continue
        x = row[3]
        tap = row[8] if row[8] != 0 else 1.0
        if x * tap == 0:
            raise CaseParseError("branch with zero reactance", lineno)
        limit = UNCONSTRAINED_ANGLE
        if len(row) >= 13:
            lo, hi = abs(row[11]), abs(row[12])
            deg = min(lo, hi)
            if 0 < deg < 360:
                limit = math.radians(deg)
        branches.append(Branch(int(row[0]), int(row[1]), 1.0 / (x * tap), limit))

    if len(tables["gencost"]) < len(tables["gen"]):
        raise CaseParseError("mpc.gencost has fewer rows than mpc.gen")
    gens = []
    for (lineno, row), (clineno, cost) in zip(tables["gen"], tables["gencost"]):
        if row[7] <= 0:
            continue
        if int(cost[0]) != 2:
            raise CaseParseError("only polynomial gencost (model 2) is supported", clineno)
        ncost = int(cost[3])
        coeffs = cost[4:4 + ncost]
        if len(coeffs) < ncost:
            raise CaseParseError("gencost row shorter than NCOST", clineno)
        c0 = coeffs[-1] if ncost >= 1 else 0.0
        c1 = coeffs[-2] if ncost >= 2 else 0.0
        p_max, p_min = row[8], row[9]
        # RAMP_10, then RAMP_AGC; a missing ramp never binds
        ramp = 0.0
        if len(row) >= 18 and row[17] > 0:
            ramp = row[17]
        elif len(row) >= 17 and row[16] > 0:
            ramp = row[16]
        if ramp <= 0:
            ramp = max(p_max - p_min, p_max, 1.0)
        gens.append(Generator(int(row[0]), p_min, p_max, ramp, c1, c0))

    return GridCase(
        name=name or "case",
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(gens),
        slack_buses=tuple(slack),
        base_mva=base,
    )
