"""SMT-LIB2 emission and the external solver subprocess bridge.

Emission is deterministic: identical queries produce byte-identical text.
The solver command is configurable (``STAGEDVERIFY_SMT_CMD`` environment
variable overrides; the documented default is ``z3 -in``).  A bundled
fallback solver speaking the same protocol ships as
``python -m stagedverify.backend.minismt`` for hosts without z3.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
from typing import Optional

from ..kernel import (
    PAnd,
    PAtom,
    PEq,
    PExists,
    PFalse,
    PLt,
    PNot,
    POr,
    PSubsume,
    PTrue,
    Pure,
    TAdd,
    TApp,
    TCons,
    TConst,
    TFnName,
    TLambda,
    TNeg,
    TNil,
    TVar,
    Term,
    UNIT,
    lambda_token,
)
from .queries import (
    BOOL,
    FN,
    INT,
    LIST,
    LOC,
    PureQuery,
    PureVerdict,
    UnsupportedConstruct,
    sort_of_term,
)

DEFAULT_SMT_CMD = "z3 -in"
SMT_CMD_ENV = "STAGEDVERIFY_SMT_CMD"

_SORT_NAMES = {INT: "Int", LOC: "Int", BOOL: "Bool", LIST: "IList", FN: "Fn", "unit": "Int"}


def bundled_solver_cmd() -> str:
    return f"{shlex.quote(sys.executable)} -m stagedverify.backend.minismt"


def _symbol(name: str) -> str:
    if name and all(c.isalnum() or c in "_-." for c in name) and not name[0].isdigit():
        return name
    return "|" + name.replace("|", "!") + "|"


class _Emitter:
    def __init__(self, q: PureQuery):
        self.q = q
        self.sorts = dict(q.sorts)
        self.lambdas: dict[str, str] = {}  # token -> symbol
        self.fns: dict[str, str] = {}  # fn-name constants
        self.apps: dict[str, tuple[tuple[str, ...], str]] = {}
        self.preds: dict[str, tuple[str, ...]] = {}
        self.consts: dict[str, str] = {}
        self.uses_list = False
        self.uses_fn = False

    # -- collection ---------------------------------------------------------

    def scan_term(self, t: Term, expect: str):
        if isinstance(t, TVar):
            sort = self.sorts.get(t.name, expect)
            self.consts.setdefault(t.name, sort if sort != LOC else INT)
            if sort == LIST:
                self.uses_list = True
            if sort == FN:
                self.uses_fn = True
        elif isinstance(t, TConst):
            pass
        elif isinstance(t, TNil):
            self.uses_list = True
        elif isinstance(t, TCons):
            self.uses_list = True
            head_sort = sort_of_term(t.head, self.sorts)
            if head_sort not in (INT, LOC):
                raise UnsupportedConstruct(
                    f"list element of sort {head_sort}; backend lists are over Int")
            self.scan_term(t.head, INT)
            self.scan_term(t.tail, LIST)
        elif isinstance(t, TAdd):
            self.scan_term(t.left, INT)
            self.scan_term(t.right, INT)
        elif isinstance(t, TNeg):
            self.scan_term(t.arg, INT)
        elif isinstance(t, TFnName):
            if t.name != "null":
                self.uses_fn = True
                self.fns.setdefault(t.name, FN)
        elif isinstance(t, TLambda):
            self.uses_fn = True
            self.lambdas.setdefault(lambda_token(t), FN)
        elif isinstance(t, TApp):
            arg_sorts = tuple(self._term_sort(a) for a in t.args)
            self.apps.setdefault(t.fn, (arg_sorts, expect if expect in (INT, BOOL, LIST) else INT))
            for a, s in zip(t.args, arg_sorts):
                self.scan_term(a, s)
        else:
            raise TypeError(t)

    def _term_sort(self, t: Term) -> str:
        s = sort_of_term(t, self.sorts)
        return INT if s in (LOC, "unit") else s

    def scan_pure(self, p: Pure):
        if isinstance(p, (PTrue, PFalse)):
            return
        if isinstance(p, (PAnd, POr)):
            self.scan_pure(p.left)
            self.scan_pure(p.right)
        elif isinstance(p, PNot):
            self.scan_pure(p.arg)
        elif isinstance(p, PExists):
            self.scan_pure(p.body)
        elif isinstance(p, PEq):
            s = self._term_sort(p.left)
            if s == INT:
                s = self._term_sort(p.right)
            self.scan_term(p.left, s)
            self.scan_term(p.right, s)
        elif isinstance(p, PLt):
            self.scan_term(p.left, INT)
            self.scan_term(p.right, INT)
        elif isinstance(p, PAtom):
            arg_sorts = tuple(self._term_sort(a) for a in p.args)
            self.preds.setdefault(p.pred, arg_sorts)
            for a, s in zip(p.args, arg_sorts):
                self.scan_term(a, s)
        elif isinstance(p, PSubsume):
            raise UnsupportedConstruct("subsumption assertion cannot reach the backend")
        else:
            raise TypeError(p)

    # -- encoding -----------------------------------------------------------

    def term(self, t: Term, bound: dict[str, str]) -> str:
        if isinstance(t, TVar):
            return _symbol(t.name)
        if isinstance(t, TConst):
            v = t.value
            if isinstance(v, bool):
                return "true" if v else "false"
            if v == UNIT and not isinstance(v, int):
                return "0"
            return str(v) if v >= 0 else f"(- {-v})"
        if isinstance(t, TNil):
            return "nil"
        if isinstance(t, TCons):
            return f"(cons {self.term(t.head, bound)} {self.term(t.tail, bound)})"
        if isinstance(t, TAdd):
            return f"(+ {self.term(t.left, bound)} {self.term(t.right, bound)})"
        if isinstance(t, TNeg):
            return f"(- {self.term(t.arg, bound)})"
        if isinstance(t, TFnName):
            if t.name == "null":
                return "0"
            return _symbol(f"fn.{t.name}")
        if isinstance(t, TLambda):
            return _symbol(f"lam.{lambda_token(t)}")
        if isinstance(t, TApp):
            args = " ".join(self.term(a, bound) for a in t.args)
            return f"({_symbol(t.fn)} {args})"
        raise TypeError(t)

    def pure(self, p: Pure, bound: dict[str, str]) -> str:
        if isinstance(p, PTrue):
            return "true"
        if isinstance(p, PFalse):
            return "false"
        if isinstance(p, PAnd):
            return f"(and {self.pure(p.left, bound)} {self.pure(p.right, bound)})"
        if isinstance(p, POr):
            return f"(or {self.pure(p.left, bound)} {self.pure(p.right, bound)})"
        if isinstance(p, PNot):
            return f"(not {self.pure(p.arg, bound)})"
        if isinstance(p, PExists):
            sort = self.sorts.get(p.var, INT)
            smt_sort = _SORT_NAMES.get(sort, "Int")
            inner = self.pure(p.body, {**bound, p.var: smt_sort})
            return f"(exists (({_symbol(p.var)} {smt_sort})) {inner})"
        if isinstance(p, PEq):
            return f"(= {self.term(p.left, bound)} {self.term(p.right, bound)})"
        if isinstance(p, PLt):
            return f"(< {self.term(p.left, bound)} {self.term(p.right, bound)})"
        if isinstance(p, PAtom):
            args = " ".join(self.term(a, bound) for a in p.args)
            return f"({_symbol(p.pred)} {args})"
        raise UnsupportedConstruct(str(type(p)))

    def emit(self) -> str:
        for h in self.q.hypotheses:
            self.scan_pure(h)
        self.scan_pure(self.q.goal)
        # existential binders should not be declared as constants
        bound_vars = _collect_bound(self.q.goal)
        for h in self.q.hypotheses:
            bound_vars |= _collect_bound(h)
        lines = ["(set-logic ALL)"]
        if self.uses_list:
            lines.append(
                "(declare-datatypes ((IList 0)) (((nil) (cons (head Int) (tail IList)))))")
        if self.uses_fn:
            lines.append("(declare-sort Fn 0)")
        for name in sorted(self.fns):
            lines.append(f"(declare-const {_symbol('fn.' + name)} Fn)")
        for token in sorted(self.lambdas):
            lines.append(f"(declare-const {_symbol('lam.' + token)} Fn)")
        for name in sorted(self.consts):
            if name in bound_vars or name == "null":
                continue
            sort = _SORT_NAMES.get(self.consts[name], "Int")
            lines.append(f"(declare-const {_symbol(name)} {sort})")
        for name in sorted(self.apps):
            arg_sorts, ret = self.apps[name]
            args = " ".join(_SORT_NAMES.get(s, "Int") for s in arg_sorts)
            lines.append(f"(declare-fun {_symbol(name)} ({args}) {_SORT_NAMES.get(ret, 'Int')})")
        for name in sorted(self.preds):
            arg_sorts = self.preds[name]
            args = " ".join(_SORT_NAMES.get(s, "Int") for s in arg_sorts)
            lines.append(f"(declare-fun {_symbol(name)} ({args}) Bool)")
        for h in self.q.hypotheses:
            lines.append(f"(assert {self.pure(h, {})})")
        lines.append(f"(assert (not {self.pure(self.q.goal, {})}))")
        lines.append("(check-sat)")
        return "\n".join(lines) + "\n"


def _collect_bound(p: Pure) -> set[str]:
    if isinstance(p, PExists):
        return {p.var} | _collect_bound(p.body)
    if isinstance(p, (PAnd, POr)):
        return _collect_bound(p.left) | _collect_bound(p.right)
    if isinstance(p, PNot):
        return _collect_bound(p.arg)
    return set()


def emit_smtlib(q: PureQuery) -> str:
    """Deterministic SMT-LIB2 text for the query (unsat means valid)."""
    return _Emitter(q).emit()


# ---------------------------------------------------------------------------
# Subprocess bridge
# ---------------------------------------------------------------------------

def solver_command(configured: Optional[str] = None) -> str:
    env = os.environ.get(SMT_CMD_ENV)
    if env:
        return env
    return configured or DEFAULT_SMT_CMD


def run_external(text: str, cmd: Optional[str] = None, timeout_ms: int = 5000) -> str:
    """Runs one solver process over stdin; returns sat | unsat | unknown."""
    command = solver_command(cmd)
    try:
        proc = subprocess.run(
            shlex.split(command),
            input=text,
            capture_output=True,
            text=True,
            timeout=timeout_ms / 1000.0,
        )
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    for line in proc.stdout.splitlines():
        line = line.strip()
        if line in ("sat", "unsat", "unknown"):
            return line
    return "unknown"


def prove(q: PureQuery, prover: str = "internal", solver_cmd: Optional[str] = None,
          timeout_ms: int = 5000) -> PureVerdict:
    """Decides the query's validity with the chosen prover.

    The internal prover falls back to the external bridge when the query
    leaves its fragment and a solver command is configured.
    """
    from .internal import internal_decide
    from .queries import OutOfFragment

    if prover in ("internal", "auto"):
        try:
            return internal_decide(q)
        except OutOfFragment:
            if prover == "internal":
                return PureVerdict("unknown")
    try:
        text = emit_smtlib(q)
    except UnsupportedConstruct:
        return PureVerdict("unknown")
    result = run_external(text, solver_cmd, timeout_ms)
    if result == "unsat":
        return PureVerdict("valid")
    if result == "sat":
        return PureVerdict("invalid")
    return PureVerdict("unknown")
