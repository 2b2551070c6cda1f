"""Core value, formula and specification types, plus structural utilities.

Every other module works over these types.  All nodes are frozen dataclasses:
immutable after construction and safe to share across threads.

The specification language is built from *stages* (req / ens / function
stages) combined with sequencing, disjunction and existentials.  A *flow* is
the disjunction-free normal form: alternating req/ens segments separated by
function stages.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Optional, Union


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

class Term:
    """Base class for logic terms."""

    __slots__ = ()


@dataclass(frozen=True)
class TNil(Term):
    pass


@dataclass(frozen=True)
class TCons(Term):
    head: Term
    tail: Term


UNIT = ()  # the unit value is represented by the empty tuple


@dataclass(frozen=True)
class TConst(Term):
    """A boolean, integer or unit constant."""

    value: Union[bool, int, tuple]

    def __post_init__(self):
        v = self.value
        if not (isinstance(v, bool) or isinstance(v, int) or v == UNIT):
            raise TypeError(f"unsupported constant {v!r}")


@dataclass(frozen=True)
class TVar(Term):
    name: str


@dataclass(frozen=True)
class TAdd(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class TNeg(Term):
    arg: Term


@dataclass(frozen=True)
class TFnName(Term):
    """A toplevel function or predicate name used as a value."""

    name: str


@dataclass(frozen=True)
class TApp(Term):
    """Application of a named pure function/predicate to argument terms.

    Not part of the base grammar, but required to talk about pure
    predicates such as list-sums inside states.
    """

    fn: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class TLambda(Term):
    """A logical lambda: parameters, result name and a specification body.

    Carries a specification, never an expression body.
    """

    params: tuple[str, ...]
    result: str
    spec: "Spec"


def tint(n: int) -> TConst:
    return TConst(int(n))


def tbool(b: bool) -> TConst:
    return TConst(bool(b))


def tunit() -> TConst:
    return TConst(UNIT)


# ---------------------------------------------------------------------------
# Pure formulae
# ---------------------------------------------------------------------------

class Pure:
    __slots__ = ()

    def __and__(self, other: "Pure") -> "Pure":
        return pand(self, other)


@dataclass(frozen=True)
class PTrue(Pure):
    pass


@dataclass(frozen=True)
class PFalse(Pure):
    pass


@dataclass(frozen=True)
class PAnd(Pure):
    left: Pure
    right: Pure


@dataclass(frozen=True)
class POr(Pure):
    left: Pure
    right: Pure


@dataclass(frozen=True)
class PNot(Pure):
    arg: Pure


@dataclass(frozen=True)
class PExists(Pure):
    var: str
    body: Pure


@dataclass(frozen=True)
class PEq(Pure):
    left: Term
    right: Term


@dataclass(frozen=True)
class PLt(Pure):
    left: Term
    right: Term


@dataclass(frozen=True)
class PAtom(Pure):
    """Application of a named pure predicate, e.g. a list-sum relation."""

    pred: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class PSubsume(Pure):
    """A subsumption assertion between two specs, stored but only ever
    matched syntactically (never sent to the pure solver)."""

    lhs: "Spec"
    rhs: "Spec"


def pand(*ps: Pure) -> Pure:
    """Conjunction, flattening and dropping trivial conjuncts."""
    out: list[Pure] = []
    for p in ps:
        for c in conjuncts(p):
            if isinstance(c, PTrue):
                continue
            out.append(c)
    if not out:
        return PTrue()
    acc = out[0]
    for c in out[1:]:
        acc = PAnd(acc, c)
    return acc


def conjuncts(p: Pure) -> Iterator[Pure]:
    if isinstance(p, PAnd):
        yield from conjuncts(p.left)
        yield from conjuncts(p.right)
    else:
        yield p


def pnot(p: Pure) -> Pure:
    if isinstance(p, PTrue):
        return PFalse()
    if isinstance(p, PFalse):
        return PTrue()
    if isinstance(p, PNot):
        return p.arg
    return PNot(p)


def plt(a: Term, b: Term) -> Pure:
    return PLt(a, b)


def ple(a: Term, b: Term) -> Pure:
    return pnot(PLt(b, a))


def obviously_false(p: Pure) -> bool:
    """Syntactic falsity check used by the ens-false absorption rule."""
    if isinstance(p, PFalse):
        return True
    if isinstance(p, PNot) and isinstance(p.arg, PTrue):
        return True
    if isinstance(p, PAnd):
        return obviously_false(p.left) or obviously_false(p.right)
    if isinstance(p, PEq):
        l, r = p.left, p.right
        if isinstance(l, TConst) and isinstance(r, TConst) and l.value != r.value:
            return True
        if {type(l), type(r)} == {TNil, TCons}:
            return True
    return False


# ---------------------------------------------------------------------------
# Heap formulae and symbolic states
# ---------------------------------------------------------------------------

class Heap:
    __slots__ = ()


@dataclass(frozen=True)
class HEmp(Heap):
    pass


@dataclass(frozen=True)
class HPointsTo(Heap):
    loc: Term
    value: Term


@dataclass(frozen=True)
class HStar(Heap):
    left: Heap
    right: Heap


def hstar(*hs: Heap) -> Heap:
    cells = [h for h in hs for h in heap_atoms(h)]
    if not cells:
        return HEmp()
    acc: Heap = cells[0]
    for c in cells[1:]:
        acc = HStar(acc, c)
    return acc


def heap_atoms(h: Heap) -> Iterator[HPointsTo]:
    if isinstance(h, HEmp):
        return
    if isinstance(h, HPointsTo):
        yield h
        return
    if isinstance(h, HStar):
        yield from heap_atoms(h.left)
        yield from heap_atoms(h.right)
        return
    raise TypeError(h)


@dataclass(frozen=True)
class State:
    """A symbolic state: heap formula plus pure constraint.

    ``read_only`` marks the checked-but-not-consumed variant and is only
    meaningful under a req stage.
    """

    heap: Heap = field(default_factory=HEmp)
    pure: Pure = field(default_factory=PTrue)
    read_only: bool = False


EMPTY_STATE = State()


def state(heap: Heap | None = None, pure: Pure | None = None, read_only: bool = False) -> State:
    return State(heap or HEmp(), pure or PTrue(), read_only)


# ---------------------------------------------------------------------------
# Staged specifications
# ---------------------------------------------------------------------------

class Spec:
    __slots__ = ()


@dataclass(frozen=True)
class Require(Spec):
    state: State


@dataclass(frozen=True)
class Ensure(Spec):
    result: str
    state: State


@dataclass(frozen=True)
class FnStage(Spec):
    fn: str
    args: tuple[Term, ...]
    result: str


@dataclass(frozen=True)
class Seq(Spec):
    first: Spec
    second: Spec


@dataclass(frozen=True)
class Disj(Spec):
    left: Spec
    right: Spec


@dataclass(frozen=True)
class Exists(Spec):
    vars: tuple[str, ...]
    body: Spec


@dataclass(frozen=True)
class Intersect(Spec):
    """The intersection connective over staged specs.  Only produced or
    consumed when the alias-cases flag is on."""

    left: Spec
    right: Spec


Stage = Union[Require, Ensure, FnStage]

ANON = "_"
RESULT = "res"


def seq(*specs: Spec) -> Spec:
    """Right-nested sequence of the given specs."""
    items = [s for s in specs if s is not None]
    if not items:
        return Ensure(ANON, EMPTY_STATE)
    acc = items[-1]
    for s in reversed(items[:-1]):
        acc = Seq(s, acc)
    return acc


def disj(*specs: Spec) -> Spec:
    items = list(specs)
    acc = items[0]
    for s in items[1:]:
        acc = Disj(acc, s)
    return acc


def ens_pure(p: Pure, result: str = ANON) -> Ensure:
    return Ensure(result, State(HEmp(), p))


def req_pure(p: Pure) -> Require:
    return Require(State(HEmp(), p))


# ---------------------------------------------------------------------------
# Flows (normal form views)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowSegment:
    """One normal-form segment: binders and a req, then binders and an ens,
    then an optional function stage (absent only in the final segment).

    ``ex`` holds binders the req mentions (fixed by the caller under
    contravariance); ``ex_ens`` holds witnesses first used at or after the
    ens."""

    ex: tuple[str, ...]
    req: State
    ex_ens: tuple[str, ...]
    ens_var: str
    ens: State
    call: Optional[FnStage] = None


@dataclass(frozen=True)
class Flow:
    segments: tuple[FlowSegment, ...]

    def to_spec(self) -> Spec:
        acc: Optional[Spec] = None
        for seg in reversed(self.segments):
            parts: list[Spec] = [Ensure(seg.ens_var, seg.ens)]
            if seg.call is not None:
                parts.append(seg.call)
            if acc is not None:
                parts.append(acc)
            inner = seq(*parts)
            if seg.ex_ens:
                inner = Exists(seg.ex_ens, inner)
            body = Seq(Require(seg.req), inner)
            acc = Exists(seg.ex, body) if seg.ex else body
        assert acc is not None
        return acc

    @property
    def result_var(self) -> str:
        return self.segments[-1].ens_var


# ---------------------------------------------------------------------------
# Programs
# ---------------------------------------------------------------------------

class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class EVal(Expr):
    """A constant or nil literal."""

    value: Term  # TConst or TNil


@dataclass(frozen=True)
class EVar(Expr):
    name: str


@dataclass(frozen=True)
class ELet(Expr):
    var: str
    bound: Expr
    body: Expr


@dataclass(frozen=True)
class ECall(Expr):
    fn: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class ERef(Expr):
    var: str


@dataclass(frozen=True)
class EAssign(Expr):
    target: str
    source: str


@dataclass(frozen=True)
class EDeref(Expr):
    var: str


@dataclass(frozen=True)
class ECons(Expr):
    head: str
    tail: str


@dataclass(frozen=True)
class EAssert(Expr):
    state: State


@dataclass(frozen=True)
class EIf(Expr):
    cond: str
    then: Expr
    other: Expr


@dataclass(frozen=True)
class ELambda(Expr):
    params: tuple[str, ...]
    spec: Optional[Spec]
    body: Expr


@dataclass(frozen=True)
class EMatch(Expr):
    """Surface-only list match; removed by desugaring before ANF."""

    scrutinee: str
    nil_case: Expr
    head_var: str
    tail_var: str
    cons_case: Expr


@dataclass(frozen=True)
class PredicateDef:
    name: str
    params: tuple[str, ...]
    result: Optional[str]
    body: Spec
    kind: str = "staged"  # staged | pure


@dataclass(frozen=True)
class Lemma:
    name: str
    universals: tuple[str, ...]
    head: FnStage
    rhs: Flow


@dataclass(frozen=True)
class Toplevel:
    name: str
    is_rec: bool
    params: tuple[str, ...]
    spec: Optional[Spec]
    body: Expr


@dataclass(frozen=True)
class Program:
    toplevels: tuple[Toplevel, ...]
    predicates: tuple[PredicateDef, ...] = ()
    lemmas: tuple[Lemma, ...] = ()


# ---------------------------------------------------------------------------
# Free variables
# ---------------------------------------------------------------------------

def term_vars(t: Term) -> set[str]:
    if isinstance(t, TVar):
        return {t.name}
    if isinstance(t, TCons):
        return term_vars(t.head) | term_vars(t.tail)
    if isinstance(t, (TAdd,)):
        return term_vars(t.left) | term_vars(t.right)
    if isinstance(t, TNeg):
        return term_vars(t.arg)
    if isinstance(t, TApp):
        return set().union(*[term_vars(a) for a in t.args]) if t.args else set()
    if isinstance(t, TFnName):
        return {t.name}
    if isinstance(t, TLambda):
        return free_vars(t.spec) - set(t.params) - {t.result}
    return set()


def pure_vars(p: Pure) -> set[str]:
    if isinstance(p, (PTrue, PFalse)):
        return set()
    if isinstance(p, (PAnd, POr)):
        return pure_vars(p.left) | pure_vars(p.right)
    if isinstance(p, PNot):
        return pure_vars(p.arg)
    if isinstance(p, PExists):
        return pure_vars(p.body) - {p.var}
    if isinstance(p, (PEq, PLt)):
        return term_vars(p.left) | term_vars(p.right)
    if isinstance(p, PAtom):
        return set().union(*[term_vars(a) for a in p.args]) if p.args else set()
    if isinstance(p, PSubsume):
        return free_vars(p.lhs) | free_vars(p.rhs)
    raise TypeError(p)


def heap_vars(h: Heap) -> set[str]:
    out: set[str] = set()
    for cell in heap_atoms(h):
        out |= term_vars(cell.loc) | term_vars(cell.value)
    return out


def state_vars(d: State) -> set[str]:
    return heap_vars(d.heap) | pure_vars(d.pure)


def free_vars(s: Spec) -> set[str]:
    """Variables of ``s`` not bound by any enclosing existential or lambda.

    Function-stage names and result variables are free occurrences; the ens
    result variable is likewise an ordinary occurrence, not a binder.
    """
    if isinstance(s, Require):
        return state_vars(s.state)
    if isinstance(s, Ensure):
        out = state_vars(s.state)
        if s.result != ANON:
            out.add(s.result)
        return out
    if isinstance(s, FnStage):
        out = {s.fn, s.result} if s.result != ANON else {s.fn}
        for a in s.args:
            out |= term_vars(a)
        return out
    if isinstance(s, (Seq, Disj, Intersect)):
        a, b = _children(s)
        return free_vars(a) | free_vars(b)
    if isinstance(s, Exists):
        return free_vars(s.body) - set(s.vars)
    raise TypeError(s)


def _children(s: Spec) -> tuple[Spec, Spec]:
    if isinstance(s, Seq):
        return s.first, s.second
    if isinstance(s, Disj):
        return s.left, s.right
    if isinstance(s, Intersect):
        return s.left, s.right
    raise TypeError(s)


# ---------------------------------------------------------------------------
# Fresh names
# ---------------------------------------------------------------------------

class NameSupply:
    """Fresh-name source.  Names carry a ``$`` so they can never collide
    with program or annotation identifiers (which the lexer rejects)."""

    def __init__(self, taken: Iterable[str] = ()):
        self._counter = itertools.count()
        self._taken = set(taken)

    def fresh(self, hint: str = "v") -> str:
        base = hint.split("$")[0] or "v"
        while True:
            name = f"{base}${next(self._counter)}"
            if name not in self._taken:
                self._taken.add(name)
                return name

    def reserve(self, names: Iterable[str]) -> None:
        self._taken.update(names)


# ---------------------------------------------------------------------------
# Substitution (capture avoiding)
# ---------------------------------------------------------------------------

def _subst_name(name: str, mapping: Mapping[str, Term]) -> str:
    """Substitute in a name-only position (fn names, result vars).

    Only name-like images apply; other terms cannot occupy these slots and
    leave the occurrence unchanged.
    """
    t = mapping.get(name)
    if isinstance(t, TVar):
        return t.name
    if isinstance(t, TFnName):
        return t.name
    return name


def subst_term(t: Term, mapping: Mapping[str, Term]) -> Term:
    if not mapping:
        return t
    if isinstance(t, TVar):
        return mapping.get(t.name, t)
    if isinstance(t, TCons):
        return TCons(subst_term(t.head, mapping), subst_term(t.tail, mapping))
    if isinstance(t, TAdd):
        return TAdd(subst_term(t.left, mapping), subst_term(t.right, mapping))
    if isinstance(t, TNeg):
        return TNeg(subst_term(t.arg, mapping))
    if isinstance(t, TApp):
        return TApp(t.fn, tuple(subst_term(a, mapping) for a in t.args))
    if isinstance(t, TFnName):
        got = mapping.get(t.name)
        if isinstance(got, (TFnName, TVar, TLambda)):
            return got
        return t
    if isinstance(t, TLambda):
        bound = set(t.params) | {t.result}
        inner = {k: v for k, v in mapping.items() if k not in bound}
        if not inner:
            return t
        clash = bound & set().union(*[term_vars(v) for v in inner.values()])
        if clash:
            supply = NameSupply(free_vars(t.spec) | bound | set(inner))
            ren = {v: TVar(supply.fresh(v)) for v in clash}
            params = tuple(_subst_name(p, ren) for p in t.params)
            result = _subst_name(t.result, ren)
            body = subst(subst(t.spec, ren), inner)
            return TLambda(params, result, body)
        return TLambda(t.params, t.result, subst(t.spec, inner))
    return t


def subst_pure(p: Pure, mapping: Mapping[str, Term]) -> Pure:
    if not mapping:
        return p
    if isinstance(p, (PTrue, PFalse)):
        return p
    if isinstance(p, PAnd):
        return PAnd(subst_pure(p.left, mapping), subst_pure(p.right, mapping))
    if isinstance(p, POr):
        return POr(subst_pure(p.left, mapping), subst_pure(p.right, mapping))
    if isinstance(p, PNot):
        return PNot(subst_pure(p.arg, mapping))
    if isinstance(p, PExists):
        inner = {k: v for k, v in mapping.items() if k != p.var}
        if not inner:
            return p
        clash = {p.var} & set().union(*[term_vars(v) for v in inner.values()])
        if clash:
            supply = NameSupply(pure_vars(p.body) | set(inner) | {p.var})
            nv = supply.fresh(p.var)
            body = subst_pure(p.body, {p.var: TVar(nv)})
            return PExists(nv, subst_pure(body, inner))
        return PExists(p.var, subst_pure(p.body, inner))
    if isinstance(p, PEq):
        return PEq(subst_term(p.left, mapping), subst_term(p.right, mapping))
    if isinstance(p, PLt):
        return PLt(subst_term(p.left, mapping), subst_term(p.right, mapping))
    if isinstance(p, PAtom):
        return PAtom(p.pred, tuple(subst_term(a, mapping) for a in p.args))
    if isinstance(p, PSubsume):
        return PSubsume(subst(p.lhs, mapping), subst(p.rhs, mapping))
    raise TypeError(p)


def subst_heap(h: Heap, mapping: Mapping[str, Term]) -> Heap:
    if isinstance(h, HEmp) or not mapping:
        return h
    if isinstance(h, HPointsTo):
        return HPointsTo(subst_term(h.loc, mapping), subst_term(h.value, mapping))
    if isinstance(h, HStar):
        return HStar(subst_heap(h.left, mapping), subst_heap(h.right, mapping))
    raise TypeError(h)


def subst_state(d: State, mapping: Mapping[str, Term]) -> State:
    return State(subst_heap(d.heap, mapping), subst_pure(d.pure, mapping), d.read_only)


def subst(s: Spec, mapping: Mapping[str, Term]) -> Spec:
    """Capture-avoiding substitution; bound variables shadow the mapping and
    binders are renamed on capture."""
    if not mapping:
        return s
    if isinstance(s, Require):
        return Require(subst_state(s.state, mapping))
    if isinstance(s, Ensure):
        return Ensure(_subst_name(s.result, mapping), subst_state(s.state, mapping))
    if isinstance(s, FnStage):
        return FnStage(
            _subst_name(s.fn, mapping),
            tuple(subst_term(a, mapping) for a in s.args),
            _subst_name(s.result, mapping),
        )
    if isinstance(s, Seq):
        return Seq(subst(s.first, mapping), subst(s.second, mapping))
    if isinstance(s, Disj):
        return Disj(subst(s.left, mapping), subst(s.right, mapping))
    if isinstance(s, Intersect):
        return Intersect(subst(s.left, mapping), subst(s.right, mapping))
    if isinstance(s, Exists):
        inner = {k: v for k, v in mapping.items() if k not in s.vars}
        if not inner:
            return s
        clash = set(s.vars) & set().union(*[term_vars(v) for v in inner.values()])
        if clash:
            supply = NameSupply(free_vars(s.body) | set(inner) | set(s.vars))
            ren = {v: TVar(supply.fresh(v)) for v in clash}
            body = subst(s.body, ren)
            new_vars = tuple(_subst_name(v, ren) for v in s.vars)
            return Exists(new_vars, subst(body, inner))
        return Exists(s.vars, subst(s.body, inner))
    raise TypeError(s)


def subst_flow(f: Flow, mapping: Mapping[str, Term]) -> Flow:
    got = subst(f.to_spec(), mapping)
    return spec_to_flow(got)


def spec_to_flow(s: Spec) -> Flow:
    """Reads a normal-form spec back into a Flow.  Raises on non-flows."""
    from . import compaction

    flows = compaction.flows_of(compaction.normalize(s))
    if len(flows) != 1:
        raise ValueError("spec is not a single flow")
    return flows[0]


# ---------------------------------------------------------------------------
# Sequencing lifted over disjunction
# ---------------------------------------------------------------------------

def disjuncts(s: Spec) -> list[Spec]:
    """Top-level disjuncts, distributing existentials over disjunction."""
    if isinstance(s, Disj):
        return disjuncts(s.left) + disjuncts(s.right)
    if isinstance(s, Exists):
        inner = disjuncts(s.body)
        if len(inner) > 1:
            return [Exists(s.vars, d) for d in inner]
    return [s]


def seq_compose(s1: Spec, s2: Spec) -> Spec:
    """Sequencing lifted to disjunctive specs: the cross product of
    disjuncts, each pair joined by Seq."""
    out = [Seq(a, b) for a in disjuncts(s1) for b in disjuncts(s2)]
    return disj(*out)


# ---------------------------------------------------------------------------
# Alpha normalization
# ---------------------------------------------------------------------------

def alpha_normalize(s: Spec) -> Spec:
    """Rename binders to canonical names so alpha-equivalent specs become
    structurally identical."""
    counter = itertools.count()

    def canon(_hint: str) -> str:
        return f"b{next(counter)}"

    def go_term(t: Term, env: dict[str, str]) -> Term:
        if isinstance(t, TVar):
            return TVar(env.get(t.name, t.name))
        if isinstance(t, TCons):
            return TCons(go_term(t.head, env), go_term(t.tail, env))
        if isinstance(t, TAdd):
            return TAdd(go_term(t.left, env), go_term(t.right, env))
        if isinstance(t, TNeg):
            return TNeg(go_term(t.arg, env))
        if isinstance(t, TApp):
            return TApp(t.fn, tuple(go_term(a, env) for a in t.args))
        if isinstance(t, TFnName):
            return TFnName(env.get(t.name, t.name))
        if isinstance(t, TLambda):
            new_env = dict(env)
            params = []
            for p in t.params:
                c = canon(p)
                new_env[p] = c
                params.append(c)
            r = canon(t.result)
            new_env[t.result] = r
            return TLambda(tuple(params), r, go(t.spec, new_env))
        return t

    def go_pure(p: Pure, env: dict[str, str]) -> Pure:
        if isinstance(p, (PTrue, PFalse)):
            return p
        if isinstance(p, PAnd):
            return PAnd(go_pure(p.left, env), go_pure(p.right, env))
        if isinstance(p, POr):
            return POr(go_pure(p.left, env), go_pure(p.right, env))
        if isinstance(p, PNot):
            return PNot(go_pure(p.arg, env))
        if isinstance(p, PExists):
            c = canon(p.var)
            new_env = dict(env)
            new_env[p.var] = c
            return PExists(c, go_pure(p.body, new_env))
        if isinstance(p, PEq):
            return PEq(go_term(p.left, env), go_term(p.right, env))
        if isinstance(p, PLt):
            return PLt(go_term(p.left, env), go_term(p.right, env))
        if isinstance(p, PAtom):
            return PAtom(p.pred, tuple(go_term(a, env) for a in p.args))
        if isinstance(p, PSubsume):
            return PSubsume(go(p.lhs, env), go(p.rhs, env))
        raise TypeError(p)

    def go_state(d: State, env: dict[str, str]) -> State:
        heap = d.heap
        cells = [HPointsTo(go_term(c.loc, env), go_term(c.value, env)) for c in heap_atoms(heap)]
        return State(hstar(*cells), go_pure(d.pure, env), d.read_only)

    def go(sp: Spec, env: dict[str, str]) -> Spec:
        if isinstance(sp, Require):
            return Require(go_state(sp.state, env))
        if isinstance(sp, Ensure):
            return Ensure(env.get(sp.result, sp.result), go_state(sp.state, env))
        if isinstance(sp, FnStage):
            return FnStage(
                env.get(sp.fn, sp.fn),
                tuple(go_term(a, env) for a in sp.args),
                env.get(sp.result, sp.result),
            )
        if isinstance(sp, Seq):
            return Seq(go(sp.first, env), go(sp.second, env))
        if isinstance(sp, Disj):
            return Disj(go(sp.left, env), go(sp.right, env))
        if isinstance(sp, Intersect):
            return Intersect(go(sp.left, env), go(sp.right, env))
        if isinstance(sp, Exists):
            new_env = dict(env)
            vs = []
            for v in sp.vars:
                c = canon(v)
                new_env[v] = c
                vs.append(c)
            return Exists(tuple(vs), go(sp.body, new_env))
        raise TypeError(sp)

    return go(s, {})


def alpha_equivalent(a: Spec, b: Spec) -> bool:
    return alpha_normalize(a) == alpha_normalize(b)


# ---------------------------------------------------------------------------
# Pretty printing (annotation syntax; re-parseable by the frontend)
# ---------------------------------------------------------------------------

def _term_prec(t: Term) -> int:
    if isinstance(t, TAdd):
        return 1
    if isinstance(t, TCons):
        return 2
    return 3


def show_term(t: Term, prec: int = 0) -> str:
    if isinstance(t, TNil):
        return "[]"
    if isinstance(t, TConst):
        if t.value == UNIT and not isinstance(t.value, (bool, int)):
            return "()"
        if isinstance(t.value, bool):
            return "true" if t.value else "false"
        n = t.value
        return str(n) if n >= 0 else f"({n})"
    if isinstance(t, TVar):
        return t.name
    if isinstance(t, TAdd):
        s = f"{show_term(t.left, 1)}+{show_term(t.right, 2)}"
        return f"({s})" if prec > 1 else s
    if isinstance(t, TNeg):
        return f"-{show_term(t.arg, 3)}"
    if isinstance(t, TCons):
        s = f"{show_term(t.head, 3)}::{show_term(t.tail, 2)}"
        return f"({s})" if prec > 2 else s
    if isinstance(t, TFnName):
        return t.name
    if isinstance(t, TApp):
        args = ",".join(show_term(a) for a in t.args)
        return f"{t.fn}({args})"
    if isinstance(t, TLambda):
        ps = ",".join(t.params + (t.result,))
        return f"\\({ps}). ({show_spec(t.spec)})"
    raise TypeError(t)


def show_pure(p: Pure, prec: int = 0) -> str:
    # precedences: or 1, and 2, atoms 3
    if isinstance(p, PTrue):
        return "true"
    if isinstance(p, PFalse):
        return "false"
    if isinstance(p, POr):
        s = f"{show_pure(p.left, 1)} \\/ {show_pure(p.right, 1)}"
        return f"({s})" if prec > 1 else s
    if isinstance(p, PAnd):
        s = f"{show_pure(p.left, 2)} /\\ {show_pure(p.right, 2)}"
        return f"({s})" if prec > 2 else s
    if isinstance(p, PNot):
        if isinstance(p.arg, PEq):
            return f"{show_term(p.arg.left)}!={show_term(p.arg.right)}"
        if isinstance(p.arg, PLt):
            return f"{show_term(p.arg.right)}<={show_term(p.arg.left)}"
        return f"not({show_pure(p.arg)})"
    if isinstance(p, PExists):
        return f"(exists {p.var}. {show_pure(p.body, 1)})"
    if isinstance(p, PEq):
        return f"{show_term(p.left)}={show_term(p.right)}"
    if isinstance(p, PLt):
        return f"{show_term(p.left)}<{show_term(p.right)}"
    if isinstance(p, PAtom):
        args = ",".join(show_term(a) for a in p.args)
        return f"{p.pred}({args})"
    if isinstance(p, PSubsume):
        return f"(({show_spec(p.lhs)}) <: ({show_spec(p.rhs)}))"
    raise TypeError(p)


def show_heap(h: Heap) -> str:
    cells = list(heap_atoms(h))
    if not cells:
        return "emp"
    return " * ".join(f"{show_term(c.loc, 3)}->{show_term(c.value)}" for c in cells)


def show_state(d: State) -> str:
    heap_s = show_heap(d.heap)
    if isinstance(d.pure, PTrue):
        return heap_s
    if not list(heap_atoms(d.heap)):
        return show_pure(d.pure, 2)
    return f"{heap_s} /\\ {show_pure(d.pure, 2)}"


def show_spec(s: Spec, prec: int = 0) -> str:
    # precedences: intersect 0, disj 1, seq 2, stage 3
    if isinstance(s, Intersect):
        t = f"{show_spec(s.left, 1)} /\\sp {show_spec(s.right, 1)}"
        return f"({t})" if prec > 0 else t
    if isinstance(s, Disj):
        t = f"{show_spec(s.left, 2)} \\/ {show_spec(s.right, 2)}"
        return f"({t})" if prec > 1 else t
    if isinstance(s, Seq):
        t = f"{show_spec(s.first, 3)}; {show_spec(s.second, 2)}"
        return f"({t})" if prec > 2 else t
    if isinstance(s, Exists):
        body = show_spec(s.body, 2)
        t = f"ex {' '.join(s.vars)}. {body}"
        return f"({t})" if prec > 2 else t
    if isinstance(s, Require):
        ro = "@" if s.state.read_only else ""
        return f"req {show_state(s.state)}{ro}"
    if isinstance(s, Ensure):
        if s.result == RESULT:
            tag = ""
        elif s.result == ANON:
            tag = "[_]"
        else:
            tag = f"[{s.result}]"
        return f"ens{tag} {show_state(s.state)}"
    if isinstance(s, FnStage):
        args = ",".join([show_term(a) for a in s.args] + [s.result])
        return f"{s.fn}({args})"
    raise TypeError(s)


def _is_identity(s: Spec, keep_result: bool) -> bool:
    if isinstance(s, Require):
        return isinstance(s.state.heap, HEmp) and isinstance(s.state.pure, PTrue) \
            and not s.state.read_only
    if isinstance(s, Ensure):
        if keep_result and s.result != ANON:
            return False
        return isinstance(s.state.heap, HEmp) and isinstance(s.state.pure, PTrue)
    return False


def _elide(s: Spec) -> Spec:
    """Drops identity stages for display purposes."""
    if isinstance(s, Seq):
        items: list[Spec] = []

        def collect(x: Spec):
            if isinstance(x, Seq):
                collect(x.first)
                collect(x.second)
            else:
                items.append(x)

        collect(s)
        out = [_elide(x) for x in items]
        last_ens = None
        for i in reversed(range(len(out))):
            if isinstance(out[i], Ensure):
                last_ens = i
                break
        kept = [x for i, x in enumerate(out)
                if not _is_identity(x, keep_result=(i == last_ens))]
        if not kept:
            kept = [Ensure(ANON, EMPTY_STATE)]
        return seq(*kept)
    if isinstance(s, Disj):
        return Disj(_elide(s.left), _elide(s.right))
    if isinstance(s, Intersect):
        return Intersect(_elide(s.left), _elide(s.right))
    if isinstance(s, Exists):
        return Exists(s.vars, _elide(s.body))
    return s


def display_spec(s: Spec) -> str:
    """Readable rendering: machine binders tidied, identity stages elided.
    The result still parses to a spec alpha-equivalent after normalization."""
    return show_spec(_elide(tidy_names(s)))


def tidy_names(s: Spec) -> Spec:
    """Renames machine-generated binders to short readable names for display.

    Free variables are untouched; the result is alpha-equivalent to the
    input.
    """
    taken = set(free_vars(s))
    counter = itertools.count()

    def pick(hint: str) -> str:
        base = hint.split("$")[0] or "v"
        if base not in taken:
            taken.add(base)
            return base
        while True:
            name = f"{base}{next(counter)}"
            if name not in taken:
                taken.add(name)
                return name

    def go(sp: Spec) -> Spec:
        if isinstance(sp, Exists):
            ren = {v: TVar(pick(v)) for v in sp.vars if "$" in v}
            body = subst(sp.body, ren) if ren else sp.body
            vars2 = tuple(ren[v].name if v in ren else v for v in sp.vars)
            return Exists(vars2, go(body))
        if isinstance(sp, Seq):
            return Seq(go(sp.first), go(sp.second))
        if isinstance(sp, Disj):
            return Disj(go(sp.left), go(sp.right))
        if isinstance(sp, Intersect):
            return Intersect(go(sp.left), go(sp.right))
        return sp

    return go(s)


def lambda_token(t: TLambda) -> str:
    """Canonical token for a logical lambda: alpha-equivalent lambdas share
    the same token.  Used by the solver bridge."""
    canon = alpha_normalize(Ensure(ANON, State(HEmp(), PEq(TVar("$t"), t))))
    assert isinstance(canon, Ensure)
    p = canon.state.pure
    assert isinstance(p, PEq)
    return show_term(p.right)
