"""Pure-logic query representation and sort inference.

Variables are sorted int | bool | loc | list | fn | unit.  Locations are
encoded as integers with ``null`` as 0, so loc behaves as int inside the
solvers while staying distinct for emission purposes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
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
)

INT, BOOL, LOC, LIST, FN, UNIT_S = "int", "bool", "loc", "list", "fn", "unit"

NULL = TFnName("null")


class SolverError(Exception):
    pass


class OutOfFragment(SolverError):
    """The internal procedure cannot decide this query; fall back."""


class UnsupportedConstruct(SolverError):
    """The construct cannot be emitted to the external backend."""


@dataclass(frozen=True)
class PureQuery:
    hypotheses: tuple[Pure, ...]
    goal: Pure
    sorts: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sorts", dict(self.sorts))


@dataclass(frozen=True)
class PureVerdict:
    status: str  # valid | invalid | unknown
    countermodel: Optional[dict] = None

    @property
    def is_valid(self) -> bool:
        return self.status == "valid"


def make_query(hypotheses, goal, sorts=None) -> PureQuery:
    hyps = tuple(hypotheses)
    env = infer_sorts(hyps, goal, dict(sorts or {}))
    return PureQuery(hyps, goal, env)


# ---------------------------------------------------------------------------
# Sort inference
# ---------------------------------------------------------------------------

class _SortUnifier:
    def __init__(self, env: dict[str, str]):
        self.env = dict(env)

    def var(self, name: str, sort: Optional[str]):
        if sort is None:
            return
        prev = self.env.get(name)
        if prev is None:
            self.env[name] = sort
        elif prev != sort:
            # loc and int are interchangeable (locations are ints)
            if {prev, sort} == {LOC, INT}:
                self.env[name] = LOC
            # otherwise keep the first, conflicts surface in the solver

    def term(self, t: Term, expect: Optional[str]):
        if isinstance(t, TVar):
            self.var(t.name, expect)
        elif isinstance(t, TConst):
            pass
        elif isinstance(t, TNil):
            pass
        elif isinstance(t, TCons):
            self.term(t.head, None)
            self.term(t.tail, LIST)
        elif isinstance(t, TAdd):
            self.term(t.left, INT)
            self.term(t.right, INT)
        elif isinstance(t, TNeg):
            self.term(t.arg, INT)
        elif isinstance(t, TApp):
            for a in t.args:
                self.term(a, None)
        elif isinstance(t, (TFnName, TLambda)):
            pass

    def sort_of(self, t: Term) -> Optional[str]:
        if isinstance(t, TConst):
            if isinstance(t.value, bool):
                return BOOL
            if t.value == UNIT and not isinstance(t.value, int):
                return UNIT_S
            return INT
        if isinstance(t, (TNil, TCons)):
            return LIST
        if isinstance(t, (TAdd, TNeg)):
            return INT
        if isinstance(t, TLambda):
            return FN
        if isinstance(t, TFnName):
            return LOC if t.name == "null" else FN
        if isinstance(t, TVar):
            return self.env.get(t.name)
        if isinstance(t, TApp):
            return None
        return None

    def pure(self, p: Pure):
        if isinstance(p, (PTrue, PFalse)):
            return
        if isinstance(p, (PAnd, POr)):
            self.pure(p.left)
            self.pure(p.right)
            return
        if isinstance(p, PNot):
            self.pure(p.arg)
            return
        if isinstance(p, PExists):
            self.pure(p.body)
            return
        if isinstance(p, PEq):
            self.term(p.left, None)
            self.term(p.right, None)
            ls, rs = self.sort_of(p.left), self.sort_of(p.right)
            if ls and isinstance(p.right, TVar):
                self.var(p.right.name, ls)
            if rs and isinstance(p.left, TVar):
                self.var(p.left.name, rs)
            return
        if isinstance(p, PLt):
            self.term(p.left, INT)
            self.term(p.right, INT)
            return
        if isinstance(p, PAtom):
            for a in p.args:
                self.term(a, None)
            return
        if isinstance(p, PSubsume):
            return
        raise TypeError(p)


def infer_sorts(hypotheses, goal, env: Optional[dict[str, str]] = None) -> dict[str, str]:
    uni = _SortUnifier(env or {})
    for _ in range(3):  # a few passes let equalities propagate sorts
        for h in hypotheses:
            uni.pure(h)
        uni.pure(goal)
    return uni.env


def sort_of_term(t: Term, env: dict[str, str]) -> str:
    s = _SortUnifier(env).sort_of(t)
    return s or INT
