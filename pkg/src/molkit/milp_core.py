"""Solver-agnostic MILP model, CPLEX-LP writer and external solver adapter."""

from __future__ import annotations

import math
import os
import shlex
import shutil
import subprocess
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

KINDS = ("binary", "integer", "continuous")
SENSES = ("<=", "=", ">=")
SOLVER_ENV = "MOLKIT_SOLVER_CMD"
_LINE_WIDTH = 200


class MilpError(ValueError):
    pass


class SolverUnavailable(RuntimeError):
    """No solver command configured, or its executable is missing."""


class SolverFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class Var:
    name: str
    lb: float
    ub: float
    kind: str


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    family: str = ""


Terms = Mapping[str, float] | Iterable[tuple[str, float]]


class MilpModel:
    """Feasibility model: variables and linear constraints in insertion order."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Var] = []
        self.constraints: list[Constraint] = []
        self._vindex: dict[str, int] = {}
        self._cnames: set[str] = set()
        self._family = ""
        self._var_family: list[str] = []

    # ---- builder
    @contextmanager
    def family(self, tag: str):
        """Tag variables and constraints added inside the block, for size reports."""
        prev, self._family = self._family, tag
        try:
            yield
        finally:
            self._family = prev

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf, kind: str = "continuous") -> int:
        if kind not in KINDS:
            raise MilpError(f"unknown variable kind {kind!r}")
        if name in self._vindex:
            raise MilpError(f"duplicate variable name {name!r}")
        if not name or any(c.isspace() for c in name) or name[0] in "eE0123456789.+-":
            raise MilpError(f"invalid variable name {name!r}")
        if kind == "binary":
            lb, ub = max(0.0, lb), min(1.0, ub)
        if math.isnan(lb) or math.isnan(ub) or lb > ub:
            raise MilpError(f"variable {name!r}: lower bound {lb} exceeds upper bound {ub}")
        self._vindex[name] = len(self.variables)
        self.variables.append(Var(name, float(lb), float(ub), kind))
        self._var_family.append(self._family)
        return len(self.variables) - 1

    def binary(self, name: str, lb: float = 0, ub: float = 1) -> int:
        return self.add_var(name, lb, ub, "binary")

    def integer(self, name: str, lb: float, ub: float) -> int:
        return self.add_var(name, lb, ub, "integer")

    def continuous(self, name: str, lb: float = -math.inf, ub: float = math.inf) -> int:
        return self.add_var(name, lb, ub, "continuous")

    def add_constraint(self, name: str, terms: Terms, sense: str, rhs: float = 0.0) -> int:
        if sense not in SENSES:
            raise MilpError(f"unknown sense {sense!r}")
        if name in self._cnames:
            raise MilpError(f"duplicate constraint name {name!r}")
        merged: dict[int, float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for var, coef in items:
            idx = self._vindex.get(var)
            if idx is None:
                raise MilpError(f"constraint {name!r} references undeclared variable {var!r}")
            merged[idx] = merged.get(idx, 0.0) + float(coef)
        packed = tuple((i, c) for i, c in merged.items() if c != 0.0)
        self._cnames.add(name)
        self.constraints.append(Constraint(name, packed, sense, float(rhs), self._family))
        return len(self.constraints) - 1

    # ---- queries
    def __contains__(self, name: str) -> bool:
        return name in self._vindex

    def var(self, name: str) -> Var:
        return self.variables[self._vindex[name]]

    def index(self, name: str) -> int:
        return self._vindex[name]

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def counts(self) -> dict:
        """Variable and constraint totals, overall and per family tag."""
        fam: dict[str, dict[str, int]] = {}
        for tag in self._var_family:
            fam.setdefault(tag, {"variables": 0, "constraints": 0})["variables"] += 1
        for c in self.constraints:
            fam.setdefault(c.family, {"variables": 0, "constraints": 0})["constraints"] += 1
        by_kind = {k: sum(1 for v in self.variables if v.kind == k) for k in KINDS}
        return {
            "variables": self.n_vars,
            "constraints": self.n_constraints,
            "by_kind": by_kind,
            "families": fam,
        }

    def matrix(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for r, c in enumerate(self.constraints):
            for i, a in c.terms:
                rows.append(r)
                cols.append(i)
                vals.append(a)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_constraints, self.n_vars))


# ---------------------------------------------------------------- LP writer


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _expr(m: MilpModel, terms: tuple[tuple[int, float], ...]) -> list[str]:
    if not terms:
        # the LP grammar needs at least one term on the left-hand side
        return [f"0 {m.variables[0].name}"]
    parts = []
    for k, (i, c) in enumerate(terms):
        name = m.variables[i].name
        mag = "" if abs(c) == 1 else _num(abs(c)) + " "
        if k == 0:
            parts.append(("-" if c < 0 else "") + mag + name)
        else:
            parts.append(("- " if c < 0 else "+ ") + mag + name)
    return parts


def _wrapped(head: str, parts: list[str]) -> list[str]:
    lines, cur = [], head
    for p in parts:
        if len(cur) + 1 + len(p) > _LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = "  " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return lines


def _bound_line(v: Var) -> str:
    lo, hi = v.lb, v.ub
    if lo == hi:
        return f" {v.name} = {_num(lo)}"
    if lo == -math.inf and hi == math.inf:
        return f" {v.name} free"
    left = "-inf" if lo == -math.inf else _num(lo)
    if hi == math.inf:
        return f" {v.name} >= {left}"
    return f" {left} <= {v.name} <= {_num(hi)}"


def lp_text(m: MilpModel) -> str:
    if not m.variables:
        raise MilpError("cannot emit a model without variables")
    out = [f"\\ {m.name}: feasibility model", "Minimize", f" obj: 0 {m.variables[0].name}", "Subject To"]
    for c in m.constraints:
        parts = _expr(m, c.terms) + [c.sense, _num(c.rhs)]
        out.extend(_wrapped(f" {c.name}:", parts))
    out.append("Bounds")
    out.extend(_bound_line(v) for v in m.variables)
    gens = [v.name for v in m.variables if v.kind == "integer"]
    bins = [v.name for v in m.variables if v.kind == "binary"]
    if gens:
        out.append("Generals")
        out.extend(_wrapped("", gens))
    if bins:
        out.append("Binaries")
        out.extend(_wrapped("", bins))
    out.append("End")
    return "\n".join(out) + "\n"


def emit_lp(m: MilpModel, path: str | Path) -> None:
    Path(path).write_text(lp_text(m), encoding="ascii")


# ---------------------------------------------------------------- solutions


@dataclass
class Solution:
    status: str  # optimal, infeasible, timeout, unknown
    values: dict[str, float]
    warnings: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"


_STATUS_WORDS = {
    "optimal": "optimal",
    "infeasible": "infeasible",
    "integer": "infeasible",  # "Integer infeasible"
    "stopped": "timeout",
    "unbounded": "unknown",
}


def parse_solution(path: str | Path, m: MilpModel) -> Solution:
    """Read ``name value`` lines, or a CBC ``solu`` file, into a full assignment.

    Variables absent from the file default to 0 and are listed in ``warnings``.
    """
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    status = "unknown"
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        first = line.split()[0].lower()
        if lineno == 1 and first in _STATUS_WORDS:
            status = _STATUS_WORDS[first]
            if "time" in line.lower() and status != "optimal":
                status = "timeout"
            continue
        if first == "status":
            status = line.split()[1].lower()
            continue
        tok = line.lstrip("*").split()
        if len(tok) >= 3 and tok[0].isdigit():
            name, val = tok[1], tok[2]  # CBC: index name value reduced-cost
        elif len(tok) == 2:
            name, val = tok
        else:
            raise MilpError(f"{path}:{lineno}: cannot parse solution line {raw!r}")
        if name not in m:
            raise MilpError(f"{path}:{lineno}: unknown variable {name!r}")
        try:
            values[name] = float(val)
        except ValueError:
            raise MilpError(f"{path}:{lineno}: bad value {val!r}") from None
    warnings = []
    for v in m.variables:
        if v.name not in values:
            values[v.name] = 0.0
            warnings.append(f"missing {v.name}, defaulted to 0")
    return Solution(status, {v.name: values[v.name] for v in m.variables}, warnings)


def write_assignment(values: Mapping[str, float], path: str | Path, status: str | None = None) -> None:
    """``name value`` lines, readable by ``parse_solution``, optionally headed by a status."""
    head = f"status {status}\n" if status else ""
    body = "".join(f"{k} {float(v)!r}\n" for k, v in values.items())
    Path(path).write_text(head + body, encoding="utf-8")


@dataclass
class Report:
    violations: list[tuple[str, float]]  # constraint name, amount violated
    integrality: list[tuple[str, float]]
    bounds: list[tuple[str, float]]

    @property
    def ok(self) -> bool:
        return not (self.violations or self.integrality or self.bounds)

    def summary(self, limit: int = 10) -> str:
        items = self.violations[:limit] + self.integrality[:limit] + self.bounds[:limit]
        return "; ".join(f"{n}: {x:.3g}" for n, x in items)


def check_assignment(m: MilpModel, assignment: Mapping[str, float], tol: float = 1e-6) -> Report:
    x = np.array([float(assignment.get(v.name, 0.0)) for v in m.variables])
    violations = []
    if m.constraints:
        lhs = m.matrix() @ x
        for c, val in zip(m.constraints, lhs):
            gap = val - c.rhs
            bad = {"<=": gap, ">=": -gap, "=": abs(gap)}[c.sense]
            if bad > tol:
                violations.append((c.name, float(bad)))
    integrality, bounds = [], []
    for v, val in zip(m.variables, x):
        if v.kind != "continuous" and abs(val - round(val)) > tol:
            integrality.append((v.name, float(val)))
        out = max(v.lb - val, val - v.ub)
        if out > tol:
            bounds.append((v.name, float(out)))
    return Report(violations, integrality, bounds)


# ---------------------------------------------------------------- external solver


def default_solver_template() -> str | None:
    env = os.environ.get(SOLVER_ENV)
    if env:
        return env
    if shutil.which("cbc"):
        return "cbc {lp} sec {timeout} solve solu {sol}"
    return None


def run_solver(lp: Path, sol: Path, template: str | None = None, timeout: float = 60.0) -> None:
    """Run the command ``template`` with {lp}, {sol} and {timeout} filled in."""
    template = template or default_solver_template()
    if not template:
        raise SolverUnavailable(f"no solver configured; set {SOLVER_ENV} or install cbc")
    argv = [a.format(lp=lp, sol=sol, timeout=int(math.ceil(timeout))) for a in shlex.split(template)]
    if shutil.which(argv[0]) is None:
        raise SolverUnavailable(f"solver executable {argv[0]!r} not found")
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout + 30)
    except subprocess.TimeoutExpired:
        raise SolverFailed(f"solver exceeded {timeout + 30:.0f}s wall clock") from None
    if proc.returncode != 0:
        raise SolverFailed(f"solver exited with {proc.returncode}: {proc.stderr.strip()[-500:]}")


def solve(
    m: MilpModel, workdir: str | Path, template: str | None = None, timeout: float = 60.0
) -> Solution:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    lp, sol = workdir / f"{m.name}.lp", workdir / f"{m.name}.sol"
    if sol.exists():
        sol.unlink()
    emit_lp(m, lp)
    run_solver(lp, sol, template, timeout)
    if not sol.exists():
        raise SolverFailed("solver produced no solution file")
    return parse_solution(sol, m)
