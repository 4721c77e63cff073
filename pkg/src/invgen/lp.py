"""Exact-rational linear programming.

A small dense two-phase simplex over exact rationals.  Free variables are
split into nonnegative pairs, ``=`` rows are expanded into two ``<=`` rows
and Bland's least-index pivoting rule guarantees termination without any
perturbation.  Every outcome (infeasible / optimal with witness /
unbounded) is exact; there is no floating point anywhere.

Mixed strict/non-strict feasibility is decided by ``lp_feasible_strict``:
maximize an auxiliary slack that strict rows must leave open.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .numeric import Rat, ZERO, ONE, as_rat, rat_str

INFEASIBLE = "infeasible"
OPTIMAL = "optimal"
UNBOUNDED = "unbounded"

_DELTA = "$strict"  # reserved auxiliary for strict-row slack


class LpError(Exception):
    """Malformed problem (undeclared variable, bad relation, ...)."""


@dataclass(frozen=True)
class Constraint:
    """A row ``sum(coeffs) rel rhs`` with rel one of ``<=`` or ``=``."""

    coeffs: Tuple[Tuple[str, Rat], ...]
    rel: str
    rhs: Rat

    @staticmethod
    def of(coeffs: Dict[str, Rat], rel: str, rhs) -> "Constraint":
        if rel not in ("<=", "="):
            raise LpError(f"unsupported relation {rel!r}")
        items = tuple((v, as_rat(c)) for v, c in coeffs.items() if c != 0)
        return Constraint(items, rel, as_rat(rhs))


class LpProblem:
    """Maximize a linear objective subject to ``<=`` / ``=`` rows."""

    def __init__(self, variables: Sequence[str], objective: Dict[str, Rat],
                 constraints: Sequence[Constraint]):
        self.variables = list(variables)
        if len(set(self.variables)) != len(self.variables):
            raise LpError("duplicate variable declaration")
        declared = set(self.variables)
        self.objective = {v: as_rat(c) for v, c in objective.items() if c != 0}
        for v in self.objective:
            if v not in declared:
                raise LpError(f"objective uses undeclared variable {v!r}")
        self.constraints = list(constraints)
        for row in self.constraints:
            for v, _ in row.coeffs:
                if v not in declared:
                    raise LpError(f"constraint uses undeclared variable {v!r}")

    def dump(self) -> str:
        """Plain-text form, one constraint per line (debugging aid)."""
        lines = ["max: " + _expr_str(self.objective)]
        for row in self.constraints:
            lines.append(f"  {_expr_str(dict(row.coeffs))} {row.rel} {rat_str(row.rhs)}")
        return "\n".join(lines)


def _expr_str(coeffs: Dict[str, Rat]) -> str:
    if not coeffs:
        return "0"
    parts = []
    for v, c in coeffs.items():
        if c == 1:
            term = v
        elif c == -1:
            term = f"-{v}"
        else:
            term = f"{rat_str(c)}*{v}"
        parts.append(term if not parts else (f"+ {term}" if c > 0 else f"- {term.lstrip('-')}"))
    return " ".join(parts)


@dataclass(frozen=True)
class LpResult:
    status: str
    value: Optional[Rat] = None
    witness: Optional[Dict[str, Rat]] = None


@dataclass(frozen=True)
class FeasResult:
    feasible: bool
    witness: Optional[Dict[str, Rat]] = None


def lp_solve(problem: LpProblem) -> LpResult:
    """Exactly classify the problem and compute an attained optimum.

    Returns ``LpResult(OPTIMAL, value, witness)`` where the witness
    satisfies every row exactly and attains the value, or the
    ``INFEASIBLE`` / ``UNBOUNDED`` classification.
    """
    tab = _Tableau(problem)
    if not tab.phase_one():
        return LpResult(INFEASIBLE)
    status = tab.phase_two()
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED)
    witness = tab.witness()
    value = ZERO
    for v, c in problem.objective.items():
        value = value + c * witness[v]
    return LpResult(OPTIMAL, value, witness)


def lp_feasible_strict(problem: LpProblem, strict_rows: Set[int]) -> FeasResult:
    """Decide a system where some ``<=`` rows must hold strictly.

    Maximizes an auxiliary slack d with ``row + d <= rhs`` for every strict
    row and ``d <= 1``; the mixed system is satisfiable iff the optimum is
    positive.  The witness then satisfies strict rows with room to spare.
    """
    for i in strict_rows:
        if not 0 <= i < len(problem.constraints):
            raise LpError(f"strict row index {i} out of range")
        if problem.constraints[i].rel != "<=":
            raise LpError("strict row must be a <= constraint")
    rows = []
    for i, row in enumerate(problem.constraints):
        if i in strict_rows:
            rows.append(Constraint(row.coeffs + ((_DELTA, ONE),), "<=", row.rhs))
        else:
            rows.append(row)
    rows.append(Constraint(((_DELTA, ONE),), "<=", ONE))
    relaxed = LpProblem(problem.variables + [_DELTA], {_DELTA: ONE}, rows)
    res = lp_solve(relaxed)
    if res.status != OPTIMAL or res.value <= 0:
        return FeasResult(False)
    witness = {v: q for v, q in res.witness.items() if v != _DELTA}
    return FeasResult(True, witness)


class _Tableau:
    """Dense simplex tableau; every free variable is split as u - w >= 0."""

    def __init__(self, problem: LpProblem):
        self.problem = problem
        self.var_index = {v: i for i, v in enumerate(problem.variables)}
        n2 = 2 * len(problem.variables)

        raw: List[Tuple[List[Rat], Rat]] = []
        for row in problem.constraints:
            dense = [ZERO] * n2
            for v, c in row.coeffs:
                j = 2 * self.var_index[v]
                dense[j] = dense[j] + c
                dense[j + 1] = dense[j + 1] - c
            raw.append((dense, row.rhs))
            if row.rel == "=":
                raw.append(([-c for c in dense], -row.rhs))

        m = len(raw)
        self.ncols = n2 + m  # structural + one slack per row; artificials appended
        self.rows: List[List[Rat]] = []
        self.rhs: List[Rat] = []
        self.basis: List[int] = []
        self.artificial: Set[int] = set()
        for i, (dense, b) in enumerate(raw):
            row = dense + [ZERO] * m
            row[n2 + i] = ONE
            if b < 0:
                row = [-c for c in row]
                b = -b
                art = self.ncols + len(self.artificial)
                self.artificial.add(art)
                self.basis.append(art)
            else:
                self.basis.append(n2 + i)
            self.rows.append(row)
            self.rhs.append(b)
        if self.artificial:
            width = self.ncols + len(self.artificial)
            for i, row in enumerate(self.rows):
                row.extend([ZERO] * (width - len(row)))
                if self.basis[i] >= self.ncols:
                    row[self.basis[i]] = ONE
            self.ncols = width

    # -- simplex core -----------------------------------------------------

    def _reduced_costs(self, cost: List[Rat]) -> List[Rat]:
        zrow = list(cost)
        for i, b in enumerate(self.basis):
            cb = cost[b]
            if cb != 0:
                row = self.rows[i]
                for j in range(self.ncols):
                    if row[j] != 0:
                        zrow[j] = zrow[j] - cb * row[j]
        return zrow

    def _optimize(self, cost: List[Rat], blocked: Set[int]) -> str:
        zrow = self._reduced_costs(cost)
        while True:
            enter = -1
            for j in range(self.ncols):  # Bland: least improving index
                if j not in blocked and zrow[j] > 0:
                    enter = j
                    break
            if enter < 0:
                return OPTIMAL
            leave = -1
            best = None
            for i, row in enumerate(self.rows):
                a = row[enter]
                if a > 0:
                    ratio = self.rhs[i] / a
                    if best is None or ratio < best or \
                            (ratio == best and self.basis[i] < self.basis[leave]):
                        best = ratio
                        leave = i
            if leave < 0:
                return UNBOUNDED
            self._pivot(leave, enter, zrow)

    def _pivot(self, leave: int, enter: int, zrow: Optional[List[Rat]]) -> None:
        prow = self.rows[leave]
        piv = prow[enter]
        if piv != 1:
            inv = ONE / piv
            self.rows[leave] = prow = [c * inv for c in prow]
            self.rhs[leave] = self.rhs[leave] * inv
        prhs = self.rhs[leave]
        for i, row in enumerate(self.rows):
            if i == leave:
                continue
            f = row[enter]
            if f != 0:
                self.rows[i] = [c - f * p for c, p in zip(row, prow)]
                self.rhs[i] = self.rhs[i] - f * prhs
        if zrow is not None:
            f = zrow[enter]
            if f != 0:
                for j in range(self.ncols):
                    zrow[j] = zrow[j] - f * prow[j]
        self.basis[leave] = enter

    # -- phases ------------------------------------------------------------

    def phase_one(self) -> bool:
        if not self.artificial:
            return True
        cost = [ZERO] * self.ncols
        for j in self.artificial:
            cost[j] = -ONE
        self._optimize(cost, blocked=set())
        for i, b in enumerate(self.basis):
            if b in self.artificial and self.rhs[i] != 0:
                return False
        # Drive leftover zero-valued artificials out of the basis; a row
        # with no real pivot candidate is redundant and can be dropped.
        for i in reversed(range(len(self.rows))):
            if self.basis[i] not in self.artificial:
                continue
            row = self.rows[i]
            enter = next((j for j in range(self.ncols)
                          if j not in self.artificial and row[j] != 0), -1)
            if enter >= 0:
                self._pivot(i, enter, None)
            else:
                del self.rows[i], self.rhs[i], self.basis[i]
        return True

    def phase_two(self) -> str:
        cost = [ZERO] * self.ncols
        for v, c in self.problem.objective.items():
            j = 2 * self.var_index[v]
            cost[j] = c
            cost[j + 1] = -c
        return self._optimize(cost, blocked=self.artificial)

    def witness(self) -> Dict[str, Rat]:
        col_val = {b: self.rhs[i] for i, b in enumerate(self.basis)}
        out = {}
        for v, i in self.var_index.items():
            out[v] = col_val.get(2 * i, ZERO) - col_val.get(2 * i + 1, ZERO)
        return out
