"""Satisfiability of selector-guarded linear rational formulas.

The problems decided here have a very specific Boolean shape: the only
Boolean structure is the selector attached to each disjunction, so a model
is a path through the formula plus an exact rational point on that path.
The internal backend searches selector assignments in index order and asks
the exact LP layer whether the atoms forced so far are consistent (strict
atoms are handled natively); an infeasible prefix prunes the whole subtree.

An external SMT-LIB2 solver can be used instead; its Boolean assignment is
trusted only after the rational part has been checked (or re-derived) by
exact substitution, so a misbehaving solver surfaces as a backend error,
never as a wrong verdict.
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .formula import (
    And, Atom, Or, SmtProblem, UNSAT_PROBLEM,  # noqa: F401  (re-exported)
    REL_LT, eval_formula,
)
from .lp import Constraint, FeasResult, LpProblem, lp_feasible_strict
from .numeric import Rat, ZERO

SAT = "sat"
UNSAT = "unsat"


class SmtBackendError(Exception):
    """External solver failed: subprocess, protocol or cross-check error."""


@dataclass(frozen=True)
class SmtModel:
    selectors: Dict[int, int]
    reals: Dict[str, Rat]


@dataclass(frozen=True)
class SmtResult:
    status: str
    model: Optional[SmtModel] = None

    @property
    def is_sat(self) -> bool:
        return self.status == SAT


# ---------------------------------------------------------------------------
# internal backend
# ---------------------------------------------------------------------------

def _forced(skeleton, assign: Dict[int, int]) -> Tuple[List[Atom], List[int]]:
    """Atoms forced by the partial selector assignment, plus the reachable
    still-unassigned selectors."""
    atoms: List[Atom] = []
    pending: List[int] = []

    def walk(node):
        if isinstance(node, Atom):
            atoms.append(node)
        elif isinstance(node, And):
            for ch in node.children:
                walk(ch)
        else:
            val = assign.get(node.selector)
            if val is None:
                pending.append(node.selector)
            else:
                walk(node.right if val else node.left)

    walk(skeleton)
    return atoms, pending


def _theory_check(atoms: Sequence[Atom]) -> FeasResult:
    variables: List[str] = []
    seen = set()
    for atom in atoms:
        for v in atom.lin.variables():
            if v not in seen:
                seen.add(v)
                variables.append(v)
    rows = [Constraint(tuple(a.lin.coeffs.items()), "<=", a.bound) for a in atoms]
    strict = {i for i, a in enumerate(atoms) if a.rel == REL_LT}
    return lp_feasible_strict(LpProblem(variables, {}, rows), strict)


def smt_check(problem: SmtProblem) -> SmtResult:
    """Decide the problem exactly; a sat answer carries a checked model."""

    def search(assign: Dict[int, int]) -> Optional[SmtModel]:
        atoms, pending = _forced(problem.skeleton, assign)
        feas = _theory_check(atoms)
        if not feas.feasible:
            return None
        if not pending:
            reals = {v: feas.witness.get(v, ZERO) for v in problem.real_vars}
            return SmtModel(dict(assign), reals)
        sel = min(pending)
        for value in (0, 1):
            assign[sel] = value
            model = search(assign)
            if model is not None:
                return model
            del assign[sel]
        return None

    model = search({})
    if model is None:
        return SmtResult(UNSAT)
    return SmtResult(SAT, model)


# ---------------------------------------------------------------------------
# SMT-LIB2 emission
# ---------------------------------------------------------------------------

def _sym(name: str) -> str:
    if name and (name[0].isalpha() or name[0] == "_") and \
            all(ch.isalnum() or ch == "_" for ch in name):
        return name
    return f"|{name}|"


def _selector_name(sel: int) -> str:
    return f"a{sel}"


def _smt_rat(q) -> str:
    if q < 0:
        return f"(- {_smt_rat(-q)})"
    if q.denominator == 1:
        return str(q.numerator)
    return f"(/ {q.numerator} {q.denominator})"


def _smt_expr(lin) -> str:
    terms = []
    for v, c in lin.coeffs.items():
        terms.append(_sym(v) if c == 1 else f"(* {_smt_rat(c)} {_sym(v)})")
    if not terms:
        return "0"
    if len(terms) == 1:
        return terms[0]
    return "(+ " + " ".join(terms) + ")"


def _smt_formula(node) -> str:
    if isinstance(node, Atom):
        op = "<" if node.rel == REL_LT else "<="
        return f"({op} {_smt_expr(node.lin)} {_smt_rat(node.bound)})"
    if isinstance(node, And):
        if not node.children:
            return "true"
        if len(node.children) == 1:
            return _smt_formula(node.children[0])
        return "(and " + " ".join(_smt_formula(ch) for ch in node.children) + ")"
    a = _selector_name(node.selector)
    return (f"(or (and (not {a}) {_smt_formula(node.left)})"
            f" (and {a} {_smt_formula(node.right)}))")


def emit_smtlib2(problem: SmtProblem) -> str:
    """Print the problem as an SMT-LIB2 script (logic QF_LRA), without the
    check-sat / get-value epilogue."""
    from .formula import selectors_of

    lines = ["(set-logic QF_LRA)"]
    for sel in sorted(selectors_of(problem.skeleton)):
        lines.append(f"(declare-const {_selector_name(sel)} Bool)")
    for v in problem.real_vars:
        lines.append(f"(declare-const {_sym(v)} Real)")
    lines.append(f"(assert {_smt_formula(problem.skeleton)})")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# external backend
# ---------------------------------------------------------------------------

def _sexp_tokens(text: str) -> List[str]:
    tokens: List[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            tokens.append(text[i:j + 1])
            i = j + 1
        elif ch == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise SmtBackendError("unterminated quoted symbol in solver output")
            tokens.append(text[i:j + 1])
            i = j + 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def _parse_sexps(text: str) -> List:
    tokens = _sexp_tokens(text)
    out: List = []
    stack: List[List] = []
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise SmtBackendError("unbalanced solver output")
            done = stack.pop()
            (stack[-1] if stack else out).append(done)
        else:
            (stack[-1] if stack else out).append(tok)
    if stack:
        raise SmtBackendError("unbalanced solver output")
    return out


def _sexp_rat(node) -> Rat:
    if isinstance(node, str):
        if "." in node:
            whole, _, frac = node.partition(".")
            scale = 10 ** len(frac)
            return Rat(int(whole or "0") * scale + int(frac or "0"), scale)
        return Rat(int(node))
    if isinstance(node, list) and node:
        if node[0] == "-" and len(node) == 2:
            return -_sexp_rat(node[1])
        if node[0] == "/" and len(node) == 3:
            return _sexp_rat(node[1]) / _sexp_rat(node[2])
    raise SmtBackendError(f"cannot read solver value {node!r}")


def _strip_sym(name: str) -> str:
    if name.startswith("|") and name.endswith("|"):
        return name[1:-1]
    return name


def smt_check_external(problem: SmtProblem,
                       solver_cmd: Union[str, Sequence[str]],
                       timeout: float = 300.0) -> SmtResult:
    """Decide the problem through an external SMT-LIB2 solver subprocess.

    The solver must read a script on stdin and answer check-sat / get-value
    on stdout (e.g. ``z3 -in``).  Boolean selector values come from the
    solver; rational values are taken from the solver only when they pass
    exact substitution, otherwise they are re-derived internally on the
    selected path.  Everything unexpected raises ``SmtBackendError``.
    """
    from .formula import selectors_of

    cmd = shlex.split(solver_cmd) if isinstance(solver_cmd, str) else list(solver_cmd)
    sels = sorted(selectors_of(problem.skeleton))
    script = [emit_smtlib2(problem), "(check-sat)\n"]
    if sels:
        script.append("(get-value (" + " ".join(_selector_name(s) for s in sels) + "))\n")
    if problem.real_vars:
        script.append("(get-value (" + " ".join(_sym(v) for v in problem.real_vars) + "))\n")
    try:
        proc = subprocess.run(cmd, input="".join(script), text=True,
                              capture_output=True, timeout=timeout)
    except FileNotFoundError as err:
        raise SmtBackendError(f"cannot launch solver {cmd[0]!r}: {err}") from None
    except subprocess.TimeoutExpired:
        raise SmtBackendError(f"solver timed out after {timeout}s") from None

    sexps = _parse_sexps(proc.stdout)
    verdict = next((s for s in sexps if s in (SAT, UNSAT, "unknown")), None)
    if verdict is None:
        raise SmtBackendError(
            f"no check-sat answer in solver output: {proc.stdout!r}")
    if verdict == "unknown":
        raise SmtBackendError("solver answered 'unknown'")
    if verdict == UNSAT:
        return SmtResult(UNSAT)

    pairs: Dict[str, object] = {}
    for s in sexps:
        if isinstance(s, list):
            for entry in s:
                if isinstance(entry, list) and len(entry) == 2 and isinstance(entry[0], str):
                    pairs[_strip_sym(entry[0])] = entry[1]

    selectors: Dict[int, int] = {}
    for sel in sels:
        val = pairs.get(_selector_name(sel))
        if val == "true":
            selectors[sel] = 1
        elif val == "false":
            selectors[sel] = 0
        else:
            raise SmtBackendError(f"missing Boolean value for selector {sel}")

    atoms, pending = _forced(problem.skeleton, selectors)
    if pending:
        raise SmtBackendError("solver assignment leaves a reachable disjunction open")

    reals: Optional[Dict[str, Rat]] = None
    try:
        candidate = {v: _sexp_rat(pairs[v]) for v in problem.real_vars}
        if all(a.holds(candidate) for a in atoms):
            reals = candidate
    except (KeyError, SmtBackendError):
        reals = None
    if reals is None:
        feas = _theory_check(atoms)
        if not feas.feasible:
            raise SmtBackendError(
                "solver said sat but its selected path is infeasible")
        reals = {v: feas.witness.get(v, ZERO) for v in problem.real_vars}
    return SmtResult(SAT, SmtModel(selectors, reals))


def check_model(problem: SmtProblem, model: SmtModel) -> bool:
    """Exact substitution check: does the model satisfy the problem?"""
    return eval_formula(problem.skeleton, model.reals, model.selectors)
