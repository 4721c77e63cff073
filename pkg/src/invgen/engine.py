"""Max-strategy iteration over template linear constraint domains.

The fixpoint system has one variable per (node, template row).  Start rows
are the constant +inf; every other variable is the maximum, over incoming
edges, of the edge's abstract transformer applied to the source bounds.  A
strategy picks one operand per maximum (an edge plus a path through its
disjunctions, or bottom); the loop alternates

  * improvement: a satisfiability query per (variable, operand) asks
    whether some transition pushes the row strictly above its current
    bound; a model's selector values identify the improving path, and
  * evaluation: the least solution of the chosen conjunctive system above
    the current bounds, computed by one exact LP per finite variable over
    a shared constraint system (unbounded LP = the bound is +inf),

until no query succeeds, which is exactly when the bounds are the least
solution, i.e. the strongest inductive invariant expressible with the
template.  Termination needs no widening: strategies never repeat.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .cfg import Cfg
from .formula import (
    Atom, LinExpr, atoms_of, build_psi, enumerate_path_choices, formula_vars,
    nonstrict_relaxation, primed, rename_vars, select_path,
)
from .lp import Constraint, LpProblem, OPTIMAL, UNBOUNDED, lp_feasible_strict, lp_solve
from .numeric import NEG_INF, POS_INF, ExtRat, Rat, ext
from .smt import SmtResult, smt_check, smt_check_external

VarKey = Tuple[str, int]  # (node, template row index)
Bounds = Dict[VarKey, ExtRat]


class EngineError(Exception):
    """Internal contract violation (e.g. infeasible evaluation LP)."""


class Template:
    """Rows of the template constraint matrix, as linear expressions over
    the program variables (no constant parts), with printable labels."""

    def __init__(self, rows: Sequence[LinExpr], labels: Optional[Sequence[str]] = None):
        self.rows = list(rows)
        if not self.rows:
            raise EngineError("template needs at least one row")
        for row in self.rows:
            if not row.coeffs:
                raise EngineError("template row without variables")
            if row.const != 0:
                raise EngineError("template row must not carry a constant offset")
        self.labels = list(labels) if labels is not None else [str(r) for r in self.rows]
        if len(self.labels) != len(self.rows):
            raise EngineError("one label per template row required")
        # duplicate expressions are allowed; labels are disambiguated
        seen: Dict[str, int] = {}
        for i, lab in enumerate(self.labels):
            if lab in seen:
                seen[lab] += 1
                self.labels[i] = f"{lab}#{seen[lab]}"
            else:
                seen[lab] = 1

    def __len__(self):
        return len(self.rows)


@dataclass
class Stats:
    improvement_steps: int = 0
    smt_queries: int = 0
    lp_solves: int = 0
    wall_time: float = 0.0
    converged: bool = True

    def as_dict(self) -> Dict[str, int]:
        return {
            "improvement_steps": self.improvement_steps,
            "smt_queries": self.smt_queries,
            "lp_solves": self.lp_solves,
            "wall_ms": int(round(self.wall_time * 1000)),
        }


# -- strategies --------------------------------------------------------------

class _Bottom:
    def __repr__(self):
        return "BOTTOM"


BOTTOM = _Bottom()


@dataclass(frozen=True)
class StratConst:
    value: ExtRat


@dataclass(frozen=True, eq=False)
class StratPath:
    edge_index: int
    path: Dict[int, int]

    def __eq__(self, other):
        return isinstance(other, StratPath) and \
            other.edge_index == self.edge_index and other.path == self.path


@dataclass(frozen=True)
class ConstChoice:
    value: ExtRat


@dataclass(frozen=True)
class EdgeChoice:
    edge_index: int


class EquationSystem:
    """The per-(node, row) maximum equations of a program and template."""

    def __init__(self, cfg: Cfg, template: Template):
        self.cfg = cfg
        self.template = template
        declared = set(cfg.program_vars)
        for row in template.rows:
            for v in row.variables():
                if v not in declared:
                    raise EngineError(f"template row uses undeclared variable {v!r}")
        self.order: List[VarKey] = []
        self.choices: Dict[VarKey, List] = {}
        m = len(template)
        incoming: Dict[str, List[int]] = {n: [] for n in cfg.nodes}
        for idx, edge in enumerate(cfg.edges):
            incoming[edge.target].append(idx)
        for node in cfg.nodes:
            for i in range(m):
                key = (node, i)
                self.order.append(key)
                if node == cfg.start:
                    self.choices[key] = [ConstChoice(POS_INF)]
                else:
                    self.choices[key] = [EdgeChoice(e) for e in incoming[node]]

    def initial_strategy(self) -> Dict[VarKey, object]:
        return {key: BOTTOM for key in self.order}

    def initial_bounds(self) -> Dict[VarKey, ExtRat]:
        return {key: NEG_INF for key in self.order}


def build_equation_system(g: Cfg, template: Template) -> EquationSystem:
    return EquationSystem(g, template)


# -- abstract transformer of a single sequential statement -------------------

def abstract_transform_row(seq_statement, d: Sequence[ExtRat], template,
                           j: int, stats: Optional[Stats] = None) -> ExtRat:
    """Best bound of template row ``j`` after one step of a sequential
    statement from the region ``T x <= d``.

    Strict atoms decide emptiness (empty source or disabled guard gives
    -inf); the supremum itself is taken over the non-strict closure, which
    coincides with the strict supremum whenever the set is nonempty.
    """
    rows = getattr(template, "rows", template)
    if any(di.is_neg_inf for di in d):
        return NEG_INF
    atoms = [Atom(row, "<=", d[i].value)
             for i, row in enumerate(rows) if d[i].is_finite]
    atoms.extend(atoms_of(seq_statement))
    variables: List[str] = []
    seen = set()
    for a in atoms:
        for v in a.lin.variables():
            if v not in seen:
                seen.add(v)
                variables.append(v)
    target = rows[j].rename({v: primed(v) for v in rows[j].variables()})
    for v in target.variables():
        if v not in seen:
            seen.add(v)
            variables.append(v)

    rows_lp = [Constraint(tuple(a.lin.coeffs.items()), "<=", a.bound) for a in atoms]
    strict = {i for i, a in enumerate(atoms) if a.rel == "<"}
    feas = lp_feasible_strict(LpProblem(variables, {}, rows_lp), strict)
    if stats is not None:
        stats.lp_solves += 1
    if not feas.feasible:
        return NEG_INF
    res = lp_solve(LpProblem(variables, dict(target.coeffs), rows_lp))
    if stats is not None:
        stats.lp_solves += 1
    if res.status == UNBOUNDED:
        return POS_INF
    if res.status != OPTIMAL:
        raise EngineError("optimum LP infeasible after a feasible strict check")
    return ext(res.value)


# -- improvement --------------------------------------------------------------

def _smt(problem, stats: Optional[Stats], backend) -> SmtResult:
    if stats is not None:
        stats.smt_queries += 1
    if backend is None:
        return smt_check(problem)
    return smt_check_external(problem, backend)


def _find_improving(eq: EquationSystem, key: VarKey, bounds, threshold: ExtRat,
                    stats, backend):
    """First operand of the maximum whose value strictly exceeds the
    threshold, in declared order; None if there is none."""
    node, j = key
    for choice in eq.choices[key]:
        if isinstance(choice, ConstChoice):
            if choice.value > threshold:
                return StratConst(choice.value)
            continue
        edge = eq.cfg.edges[choice.edge_index]
        d = [bounds[(edge.source, i)] for i in range(len(eq.template))]
        psi = build_psi(edge.statement, d, eq.template, j, threshold)
        res = _smt(psi, stats, backend)
        if res.is_sat:
            return StratPath(choice.edge_index, dict(res.model.selectors))
    return None


def _entry_value(eq: EquationSystem, key: VarKey, entry, bounds, stats) -> ExtRat:
    if isinstance(entry, StratConst):
        return entry.value
    edge = eq.cfg.edges[entry.edge_index]
    d = [bounds[(edge.source, i)] for i in range(len(eq.template))]
    seq = select_path(edge.statement, entry.path)
    return abstract_transform_row(seq, d, eq.template, key[1], stats)


def improve(eq: EquationSystem, strategy, bounds, *, stats: Optional[Stats] = None,
            backend=None, local: bool = False, bound_hint: Optional[ExtRat] = None,
            batch: bool = True):
    """One strategy-improvement pass; returns the improved strategy, or
    None when the current bounds already solve every equation.

    By default the first strictly improving operand is taken (the first
    model found); with ``local`` each changed variable gets a locally
    optimal operand, found by re-querying with the threshold raised to the
    value of the best operand so far.  Variables whose bound is already
    +inf cannot improve and are not queried.  With ``batch`` off only the
    first improvable variable changes per pass.
    """
    changed: Dict[VarKey, object] = {}
    for key in eq.order:
        current = bounds[key]
        if current.is_pos_inf:
            continue
        entry = _find_improving(eq, key, bounds, current, stats, backend)
        if entry is None:
            continue
        if local:
            while True:
                value = _entry_value(eq, key, entry, bounds, stats)
                if value.is_pos_inf:
                    break
                if bound_hint is not None and bound_hint.is_finite and value >= bound_hint:
                    break
                better = _find_improving(eq, key, bounds, value, stats, backend)
                if better is None:
                    break
                entry = better
        changed[key] = entry
        if not batch:
            break
    if not changed:
        return None
    new_strategy = dict(strategy)
    new_strategy.update(changed)
    return new_strategy


def improve_local_opt(eq: EquationSystem, strategy, bounds, *,
                      stats: Optional[Stats] = None, backend=None,
                      bound_hint: Optional[ExtRat] = None, batch: bool = True):
    return improve(eq, strategy, bounds, stats=stats, backend=backend,
                   local=True, bound_hint=bound_hint, batch=batch)


# -- strategy evaluation -------------------------------------------------------

def evaluate(eq: EquationSystem, strategy, bounds,
             stats: Optional[Stats] = None) -> Dict[VarKey, ExtRat]:
    """Least solution of the chosen conjunctive system above ``bounds``.

    Bottom variables stay -inf (transitively: a path reading any -inf
    source row has an empty source).  Variables already at +inf stay
    there.  Every other variable is the maximum of its own LP variable
    over one shared constraint system: per equation, fresh copies of the
    statement variables, the non-strict relaxation of the chosen path,
    the target-row link and the source-region rows (with +inf rows
    dropped); an unbounded LP pins the variable to +inf.
    """
    m = len(eq.template)
    rows = eq.template.rows
    pinned: Dict[VarKey, ExtRat] = {}
    for key in eq.order:
        entry = strategy[key]
        if entry is BOTTOM:
            pinned[key] = NEG_INF
        elif isinstance(entry, StratConst):
            pinned[key] = entry.value
        elif bounds[key].is_pos_inf:
            pinned[key] = POS_INF

    while True:  # propagate empty source regions
        grew = False
        for key in eq.order:
            if key in pinned:
                continue
            edge = eq.cfg.edges[strategy[key].edge_index]
            if any(pinned.get((edge.source, i), None) is not None
                   and pinned[(edge.source, i)].is_neg_inf for i in range(m)):
                pinned[key] = NEG_INF
                grew = True
        if not grew:
            break

    remaining = [key for key in eq.order if key not in pinned]
    result = dict(pinned)
    if remaining:
        lp_var = {key: f"$b{i}" for i, key in enumerate(remaining)}
        variables = [lp_var[key] for key in remaining]
        seen = set(variables)
        constraints: List[Constraint] = []

        def add_row(coeffs: Dict[str, Rat], rhs) -> None:
            for v in coeffs:
                if v not in seen:
                    seen.add(v)
                    variables.append(v)
            constraints.append(Constraint.of(coeffs, "<=", rhs))

        for copy_id, key in enumerate(remaining):
            entry = strategy[key]
            edge = eq.cfg.edges[entry.edge_index]
            node, j = key
            seq = nonstrict_relaxation(select_path(edge.statement, entry.path))
            mapping = {v: f"$q{copy_id}_{v}" for v in formula_vars(seq)}
            for x in eq.cfg.program_vars:
                mapping.setdefault(x, f"$q{copy_id}_{x}")
                mapping.setdefault(primed(x), f"$q{copy_id}_{primed(x)}")
            inst = rename_vars(seq, mapping)
            for atom in atoms_of(inst):
                add_row(dict(atom.lin.coeffs), atom.bound)
            # key's variable is bounded by row j of the post-state
            target = rows[j].rename({v: mapping[primed(v)] for v in rows[j].variables()})
            add_row({lp_var[key]: Rat(1), **target.scale(-1).coeffs}, 0)
            # source region: template rows over the pre-state copy
            for i, row in enumerate(rows):
                bkey = (edge.source, i)
                pre = row.rename({v: mapping[v] for v in row.variables()})
                pin = pinned.get(bkey)
                if bkey in lp_var:
                    add_row({**pre.coeffs, lp_var[bkey]: Rat(-1)}, 0)
                elif pin is not None and pin.is_finite:
                    add_row(dict(pre.coeffs), pin.value)
                # +inf rows vanish; -inf sources were pinned above

        for key in remaining:
            res = lp_solve(LpProblem(variables, {lp_var[key]: Rat(1)}, constraints))
            if stats is not None:
                stats.lp_solves += 1
            if res.status == UNBOUNDED:
                result[key] = POS_INF
            elif res.status == OPTIMAL:
                result[key] = ext(res.value)
            else:
                raise EngineError(
                    "evaluation LP infeasible; the strategy was not a proper improvement")

    for key in eq.order:
        if result[key] < bounds[key]:
            raise EngineError(f"evaluation decreased {key}; broken pre-solution")
    return result


# -- the main loop -------------------------------------------------------------

@dataclass
class EngineOptions:
    local_opt: bool = False
    smt_cmd: Optional[Union[str, Sequence[str]]] = None  # None = internal backend
    max_iters: Optional[int] = None
    batch: bool = True
    trace: Optional[object] = None  # file-like, one JSON record per iteration


def _trace_record(sink, eq: EquationSystem, step: int, changed_keys, strategy,
                  bounds, stats: Stats) -> None:
    labels = eq.template.labels

    def describe(entry) -> str:
        if entry is BOTTOM:
            return "bottom"
        if isinstance(entry, StratConst):
            return f"const {entry.value}"
        edge = eq.cfg.edges[entry.edge_index]
        path = ",".join(f"{s}:{v}" for s, v in sorted(entry.path.items()))
        return f"edge {entry.edge_index} {edge.source}->{edge.target} path[{path}]"

    record = {
        "step": step,
        "changed": {f"{node}[{labels[i]}]": describe(strategy[(node, i)])
                    for node, i in changed_keys},
        "rho": {node: {labels[i]: str(bounds[(node, i)]) for i in range(len(labels))}
                for node in eq.cfg.nodes},
        "smt_queries": stats.smt_queries,
        "lp_solves": stats.lp_solves,
    }
    sink.write(json.dumps(record) + "\n")


def run(g: Cfg, template: Template,
        opts: Optional[EngineOptions] = None) -> Tuple[Dict[VarKey, ExtRat], Stats]:
    """Compute the least solution of the equation system of ``g`` and the
    template: the strongest inductive invariant expressible as one bound
    per (node, row).

    Starts from all-bottom / all minus-infinity and alternates improvement
    and evaluation until stable.  If ``opts.max_iters`` is hit first, the
    current (sound from below, possibly non-least) bounds are returned with
    ``stats.converged`` off.
    """
    opts = opts or EngineOptions()
    eq = build_equation_system(g, template)
    strategy = eq.initial_strategy()
    bounds = eq.initial_bounds()
    stats = Stats()
    started = time.perf_counter()
    while True:
        improved = improve(eq, strategy, bounds, stats=stats, backend=opts.smt_cmd,
                           local=opts.local_opt, batch=opts.batch)
        if improved is None:
            break
        changed_keys = [k for k in eq.order if improved[k] != strategy[k]]
        strategy = improved
        bounds = evaluate(eq, strategy, bounds, stats)
        stats.improvement_steps += 1
        if opts.trace is not None:
            _trace_record(opts.trace, eq, stats.improvement_steps, changed_keys,
                          strategy, bounds, stats)
        if opts.max_iters is not None and stats.improvement_steps >= opts.max_iters:
            stats.converged = False
            break
    stats.wall_time = time.perf_counter() - started
    return bounds, stats


# -- certification and test oracle ---------------------------------------------

@dataclass
class CertResult:
    verified: bool
    edge_index: Optional[int] = None
    row: Optional[int] = None
    model: Optional[object] = None

    def __bool__(self):
        return self.verified


def check_post_fixpoint(g: Cfg, template: Template, bounds,
                        *, backend=None, stats: Optional[Stats] = None) -> CertResult:
    """Independent certificate: no edge maps a state inside the source
    bounds strictly above any finite target row bound.

    Checks, per edge and finite row, that the improvement formula against
    the candidate's own bound is unsatisfiable; a model is a concrete
    escaping transition (counterexample to inductiveness).
    """
    for idx, edge in enumerate(g.edges):
        d = [bounds[(edge.source, i)] for i in range(len(template))]
        for j in range(len(template)):
            c = bounds[(edge.target, j)]
            if c.is_pos_inf:
                continue
            psi = build_psi(edge.statement, d, template, j, c)
            res = _smt(psi, stats, backend)
            if res.is_sat:
                return CertResult(False, idx, j, res.model)
    return CertResult(True)


def kleene_oracle(g: Cfg, template: Template,
                  max_steps: int = 1000) -> Optional[Dict[VarKey, ExtRat]]:
    """Plain Kleene iteration of the abstract transformer, no widening.

    Evaluates every equation by brute force (all paths through each edge
    statement, one transformer LP per path and row) and iterates to a
    fixed point.  Returns None when ``max_steps`` passes do not converge;
    intended as an independent test oracle, not for production use.
    """
    eq = build_equation_system(g, template)
    paths_cache = {idx: enumerate_path_choices(e.statement)
                   for idx, e in enumerate(g.edges)}
    bounds = eq.initial_bounds()
    for _ in range(max_steps):
        new: Dict[VarKey, ExtRat] = {}
        for key in eq.order:
            node, j = key
            best = NEG_INF
            for choice in eq.choices[key]:
                if isinstance(choice, ConstChoice):
                    val = choice.value
                    best = val if val > best else best
                    continue
                edge = eq.cfg.edges[choice.edge_index]
                d = [bounds[(edge.source, i)] for i in range(len(template))]
                for path in paths_cache[choice.edge_index]:
                    seq = select_path(edge.statement, path)
                    val = abstract_transform_row(seq, d, template, j)
                    if val > best:
                        best = val
            new[key] = best
        if new == bounds:
            return bounds
        bounds = new
    return None
