"""Internal decision procedure for the pure fragment.

Decides validity of ``hypotheses => goal`` over linear integer arithmetic,
booleans, free list constructors and uninterpreted function tokens:
congruence closure over constructor/application terms plus exhaustive
Fourier-Motzkin elimination on each DNF cube.  Goal existentials are
instantiated from syntactic equalities and from matching uninterpreted
atoms against hypotheses; anything beyond the fragment raises
OutOfFragment so callers can fall back to the external prover.
"""

from __future__ import annotations

import itertools
from math import gcd
from typing import Iterator, Optional

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
    subst_pure,
    term_vars,
)
from .queries import (
    BOOL,
    INT,
    LIST,
    LOC,
    FN,
    OutOfFragment,
    PureQuery,
    PureVerdict,
    make_query,
)

MAX_CUBES = 512
MAX_EXISTS_ATTEMPTS = 128
MAX_DISEQ_SPLITS = 10
GRID = 8


# ---------------------------------------------------------------------------
# NNF / DNF
# ---------------------------------------------------------------------------

class _Skolem:
    def __init__(self):
        self.count = 0

    def fresh(self, hint: str) -> str:
        self.count += 1
        return f"sk${self.count}"


def _nnf(p: Pure, positive: bool, sk: _Skolem) -> Pure:
    if isinstance(p, PTrue):
        return PTrue() if positive else PFalse()
    if isinstance(p, PFalse):
        return PFalse() if positive else PTrue()
    if isinstance(p, PAnd):
        l, r = _nnf(p.left, positive, sk), _nnf(p.right, positive, sk)
        return PAnd(l, r) if positive else POr(l, r)
    if isinstance(p, POr):
        l, r = _nnf(p.left, positive, sk), _nnf(p.right, positive, sk)
        return POr(l, r) if positive else PAnd(l, r)
    if isinstance(p, PNot):
        return _nnf(p.arg, not positive, sk)
    if isinstance(p, PExists):
        if not positive:
            raise OutOfFragment("universal quantification")
        body = subst_pure(p.body, {p.var: TVar(sk.fresh(p.var))})
        return _nnf(body, True, sk)
    if isinstance(p, (PEq, PLt, PAtom)):
        return p if positive else PNot(p)
    if isinstance(p, PSubsume):
        raise OutOfFragment("subsumption assertion reached the solver")
    raise TypeError(p)


def _dnf(p: Pure) -> list[list[Pure]]:
    if isinstance(p, PTrue):
        return [[]]
    if isinstance(p, PFalse):
        return []
    if isinstance(p, POr):
        out = _dnf(p.left) + _dnf(p.right)
        if len(out) > MAX_CUBES:
            raise OutOfFragment("DNF blowup")
        return out
    if isinstance(p, PAnd):
        left, right = _dnf(p.left), _dnf(p.right)
        if len(left) * len(right) > MAX_CUBES:
            raise OutOfFragment("DNF blowup")
        return [a + b for a in left for b in right]
    return [[p]]


# ---------------------------------------------------------------------------
# Congruence closure
# ---------------------------------------------------------------------------

class _Conflict(Exception):
    pass


class CongruenceClosure:
    """Naive congruence closure over interned term nodes.

    Node kinds: base constants ('int', 'bool', 'unit', 'nil', 'lam', 'fname'),
    variables, 'cons' and 'app' with child node ids, and 'arith' leaves for
    arithmetic terms (opaque here, handled by the linear core).
    """

    def __init__(self):
        self.kind: list[tuple] = []      # node id -> (tag, payload)
        self.children: list[tuple] = []  # node id -> child node ids
        self.parent: list[int] = []
        self.index: dict[tuple, int] = {}
        self.int_eqs: list[tuple[Term, Term]] = []  # produced by decomposition

    # interning ------------------------------------------------------------

    def _node(self, key: tuple, children: tuple[int, ...]) -> int:
        if key in self.index:
            return self.index[key]
        nid = len(self.kind)
        self.kind.append(key)
        self.children.append(children)
        self.parent.append(nid)
        self.index[key] = nid
        return nid

    def intern(self, t: Term) -> int:
        if isinstance(t, TVar):
            return self._node(("var", t.name), ())
        if isinstance(t, TConst):
            v = t.value
            if isinstance(v, bool):
                return self._node(("bool", v), ())
            if v == UNIT and not isinstance(v, int):
                return self._node(("unit",), ())
            return self._node(("int", int(v)), ())
        if isinstance(t, TNil):
            return self._node(("nil",), ())
        if isinstance(t, TCons):
            h, tl = self.intern(t.head), self.intern(t.tail)
            return self._node(("cons", h, tl), (h, tl))
        if isinstance(t, TFnName):
            return self._node(("fname", t.name), ())
        if isinstance(t, TLambda):
            return self._node(("lam", lambda_token(t)), ())
        if isinstance(t, TApp):
            args = tuple(self.intern(a) for a in t.args)
            return self._node(("app", t.fn) + args, args)
        if isinstance(t, (TAdd, TNeg)):
            return self._node(("arith", _term_fingerprint(t)), ())
        raise TypeError(t)

    # union-find -----------------------------------------------------------

    def find(self, n: int) -> int:
        while self.parent[n] != n:
            self.parent[n] = self.parent[self.parent[n]]
            n = self.parent[n]
        return n

    def _is_value(self, n: int) -> bool:
        return self.kind[n][0] in ("int", "bool", "unit", "nil", "cons")

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        ka, kb = self.kind[ra], self.kind[rb]
        if self._is_value(ra) and self._is_value(rb):
            if ka[0] == "cons" and kb[0] == "cons":
                self.parent[rb] = ra
                self.union(self.children[ra][0], self.children[rb][0])
                self.union(self.children[ra][1], self.children[rb][1])
                return
            raise _Conflict()
        if self._is_value(rb):
            ra, rb = rb, ra
        self.parent[rb] = ra

    def close(self):
        """Congruence: merge applications/cons with congruent children."""
        while True:
            sig: dict[tuple, int] = {}
            merged = False
            for nid in range(len(self.kind)):
                tag = self.kind[nid][0]
                if tag == "app":
                    s = ("app", self.kind[nid][1]) + tuple(self.find(c) for c in self.children[nid])
                elif tag == "cons":
                    s = ("cons",) + tuple(self.find(c) for c in self.children[nid])
                else:
                    continue
                other = sig.get(s)
                if other is None:
                    sig[s] = nid
                elif self.find(other) != self.find(nid):
                    self.union(other, nid)
                    merged = True
            if not merged:
                break

    def acyclic_conflict(self) -> bool:
        graph: dict[int, set[int]] = {}
        for nid in range(len(self.kind)):
            if self.kind[nid][0] == "cons":
                root = self.find(nid)
                graph.setdefault(root, set()).add(self.find(self.children[nid][1]))
        color: dict[int, int] = {}

        def dfs(n: int) -> bool:
            c = color.get(n, 0)
            if c == 1:
                return True
            if c == 2:
                return False
            color[n] = 1
            if any(dfs(m) for m in graph.get(n, ())):
                return True
            color[n] = 2
            return False

        return any(dfs(n) for n in list(graph))

    def class_var(self, t: Term) -> str:
        return f"@c{self.find(self.intern(t))}"


def _term_fingerprint(t: Term) -> tuple:
    coeffs, const = _linearize_pure(t)
    return (tuple(sorted(coeffs.items())), const)


# ---------------------------------------------------------------------------
# Linear arithmetic over integers
# ---------------------------------------------------------------------------

def _linearize_pure(t: Term) -> tuple[dict[str, int], int]:
    if isinstance(t, TConst):
        if isinstance(t.value, bool):
            raise OutOfFragment("boolean in arithmetic position")
        if t.value == UNIT and not isinstance(t.value, int):
            return {}, 0
        return {}, int(t.value)
    if isinstance(t, TVar):
        return {t.name: 1}, 0
    if isinstance(t, TFnName) and t.name == "null":
        return {}, 0
    if isinstance(t, TAdd):
        c1, k1 = _linearize_pure(t.left)
        c2, k2 = _linearize_pure(t.right)
        return _merge(c1, c2), k1 + k2
    if isinstance(t, TNeg):
        c, k = _linearize_pure(t.arg)
        return {v: -n for v, n in c.items()}, -k
    raise OutOfFragment(f"non-linear term")


def linearize(t: Term, cc: Optional[CongruenceClosure]) -> tuple[dict[str, int], int]:
    """Like _linearize_pure but mapping opaque terms to class variables."""
    if isinstance(t, (TApp, TCons, TNil, TLambda)) or (
        isinstance(t, TFnName) and t.name != "null"
    ):
        if cc is None:
            raise OutOfFragment("opaque term in arithmetic")
        return {cc.class_var(t): 1}, 0
    if isinstance(t, TAdd):
        c1, k1 = linearize(t.left, cc)
        c2, k2 = linearize(t.right, cc)
        return _merge(c1, c2), k1 + k2
    if isinstance(t, TNeg):
        c, k = linearize(t.arg, cc)
        return {v: -n for v, n in c.items()}, -k
    return _linearize_pure(t)


def _merge(c1: dict[str, int], c2: dict[str, int]) -> dict[str, int]:
    out = dict(c1)
    for v, c in c2.items():
        n = out.get(v, 0) + c
        if n:
            out[v] = n
        else:
            out.pop(v, None)
    return out


class Row:
    """A constraint  sum(coeffs) + const {<=,=} 0."""

    __slots__ = ("coeffs", "const", "is_eq")

    def __init__(self, coeffs: dict[str, int], const: int, is_eq: bool):
        self.coeffs = {v: c for v, c in coeffs.items() if c}
        self.const = const
        self.is_eq = is_eq

    def key(self):
        return (tuple(sorted(self.coeffs.items())), self.const, self.is_eq)


def _row_sub(row: Row, var: str, expr_coeffs: dict[str, int], expr_const: int, denom: int) -> Row:
    """Substitute var = (expr_coeffs + expr_const)/denom into row (denom=±1)."""
    c = row.coeffs.get(var, 0)
    if not c:
        return row
    coeffs = dict(row.coeffs)
    del coeffs[var]
    scaled = {v: n * c * denom for v, n in expr_coeffs.items()}
    return Row(_merge(coeffs, scaled), row.const + c * denom * expr_const, row.is_eq)


def solve_linear(rows: list[Row]) -> tuple[str, Optional[dict[str, int]]]:
    """Decides integer satisfiability of the rows.

    Returns ('sat', model|None), ('unsat', None) or ('unknown', None).
    Exhaustive Fourier-Motzkin; exact when coefficient products stay unit,
    otherwise unsat remains sound and sat falls back to a grid search.
    """
    rows = [r for r in rows if r.coeffs or r.const or r.is_eq]
    # equality elimination
    inexact = False
    eliminated: list[tuple[str, dict[str, int], int, int]] = []
    changed = True
    while changed:
        changed = False
        for row in list(rows):
            if not row.is_eq:
                continue
            if not row.coeffs:
                if row.const != 0:
                    return "unsat", None
                rows.remove(row)
                changed = True
                break
            g = 0
            for c in row.coeffs.values():
                g = gcd(g, abs(c))
            if g > 1:
                if row.const % g:
                    return "unsat", None
                row.coeffs = {v: c // g for v, c in row.coeffs.items()}
                row.const //= g
            unit = next((v for v, c in row.coeffs.items() if abs(c) == 1), None)
            if unit is None:
                continue
            c = row.coeffs[unit]
            # var = -(rest + const)/c  with c = ±1
            rest = {v: -n for v, n in row.coeffs.items() if v != unit}
            expr_const = -row.const
            denom = c  # ±1
            rows.remove(row)
            rows = [_row_sub(r, unit, rest, expr_const, denom) for r in rows]
            eliminated.append((unit, rest, expr_const, denom))
            changed = True
            break
    for row in rows:
        if row.is_eq:
            # equalities without unit coefficients: keep as two inequalities
            inexact = True
    expanded: list[Row] = []
    for row in rows:
        if row.is_eq:
            expanded.append(Row(row.coeffs, row.const, False))
            expanded.append(Row({v: -c for v, c in row.coeffs.items()}, -row.const, False))
        else:
            expanded.append(row)
    rows = expanded

    # Fourier-Motzkin
    fm_trace: list[tuple[str, list[Row], list[Row]]] = []
    work = {v for r in rows for v in r.coeffs}
    while work:
        var = min(work, key=lambda v: _fm_cost(rows, v))
        lowers = [r for r in rows if r.coeffs.get(var, 0) < 0]
        uppers = [r for r in rows if r.coeffs.get(var, 0) > 0]
        rest = [r for r in rows if not r.coeffs.get(var, 0)]
        if len(lowers) * len(uppers) > 400:
            return "unknown", None
        new_rows = list(rest)
        for lo in lowers:
            for up in uppers:
                a = up.coeffs[var]
                b = -lo.coeffs[var]
                if a != 1 and b != 1:
                    inexact = True
                combo = _merge({v: c * b for v, c in up.coeffs.items()},
                               {v: c * a for v, c in lo.coeffs.items()})
                combo.pop(var, None)
                new_rows.append(Row(combo, up.const * b + lo.const * a, False))
        fm_trace.append((var, lowers, uppers))
        seen: set = set()
        rows = []
        for r in new_rows:
            k = r.key()
            if k not in seen:
                seen.add(k)
                rows.append(r)
        work = {v for r in rows for v in r.coeffs}

    for r in rows:
        if r.const > 0:
            return "unsat", None

    if inexact:
        return "unknown", None

    # back-substitute a model
    model: dict[str, int] = {}

    def val_of(coeffs: dict[str, int], const: int) -> int:
        return sum(model.get(v, 0) * c for v, c in coeffs.items()) + const

    for var, lowers, uppers in reversed(fm_trace):
        lo_bound = None
        hi_bound = None
        for lo in lowers:  # c*var >= stuff, c<0 in row form
            b = -lo.coeffs[var]
            other = {v: c for v, c in lo.coeffs.items() if v != var}
            bound = -(-val_of(other, lo.const) // b)  # ceil
            lo_bound = bound if lo_bound is None else max(lo_bound, bound)
        for up in uppers:
            a = up.coeffs[var]
            other = {v: c for v, c in up.coeffs.items() if v != var}
            bound = (-val_of(other, up.const)) // a  # floor
            hi_bound = bound if hi_bound is None else min(hi_bound, bound)
        if lo_bound is not None and hi_bound is not None and lo_bound > hi_bound:
            return "unknown", None  # rounding slipped; fall back
        pick = 0
        if lo_bound is not None:
            pick = max(pick, lo_bound)
        if hi_bound is not None:
            pick = min(pick, hi_bound)
        model[var] = pick
    for var, rest, expr_const, denom in reversed(eliminated):
        model[var] = denom * (sum(model.get(v, 0) * c for v, c in rest.items()) + expr_const)
    return "sat", model


def _fm_cost(rows: list[Row], var: str) -> int:
    lowers = sum(1 for r in rows if r.coeffs.get(var, 0) < 0)
    uppers = sum(1 for r in rows if r.coeffs.get(var, 0) > 0)
    return lowers * uppers


# ---------------------------------------------------------------------------
# Cube decision
# ---------------------------------------------------------------------------

def _eq_sort(l: Term, r: Term, sorts: dict[str, str]) -> str:
    for t in (l, r):
        if isinstance(t, (TAdd, TNeg)):
            return INT
        if isinstance(t, (TCons, TNil)):
            return LIST
        if isinstance(t, TLambda):
            return FN
        if isinstance(t, TFnName):
            return LOC if t.name == "null" else FN
        if isinstance(t, TConst):
            if isinstance(t.value, bool):
                return BOOL
            if t.value == UNIT and not isinstance(t.value, int):
                return "unit"
            return INT
    for t in (l, r):
        if isinstance(t, TVar) and t.name in sorts:
            s = sorts[t.name]
            return INT if s == LOC else s
    return INT


def decide_cube(literals: list[Pure], sorts: dict[str, str], depth: int = 0
                ) -> tuple[str, Optional[dict]]:
    if depth > MAX_DISEQ_SPLITS:
        return "unknown", None
    cc = CongruenceClosure()
    int_eqs: list[tuple[Term, Term]] = []
    int_diseqs: list[tuple[Term, Term]] = []
    rows_src: list[tuple[Term, Term, bool]] = []  # (a, b, strict) meaning a<b or a<=b
    other_diseqs: list[tuple[Term, Term]] = []
    cc_eqs: list[tuple[Term, Term]] = []
    atoms_pos: list[PAtom] = []
    atoms_neg: list[PAtom] = []

    def classify_eq(l: Term, r: Term, positive: bool):
        s = _eq_sort(l, r, sorts)
        if s == INT:
            (int_eqs if positive else int_diseqs).append((l, r))
        elif s == BOOL and not positive:
            if isinstance(r, TConst):
                cc_eqs.append((l, TConst(not r.value)))
            elif isinstance(l, TConst):
                cc_eqs.append((TConst(not l.value), r))
            else:
                other_diseqs.append((l, r))
        elif positive:
            cc_eqs.append((l, r))
        else:
            other_diseqs.append((l, r))

    for lit in literals:
        if isinstance(lit, PTrue):
            continue
        if isinstance(lit, PFalse):
            return "unsat", None
        if isinstance(lit, PEq):
            classify_eq(lit.left, lit.right, True)
        elif isinstance(lit, PNot) and isinstance(lit.arg, PEq):
            classify_eq(lit.arg.left, lit.arg.right, False)
        elif isinstance(lit, PLt):
            rows_src.append((lit.left, lit.right, True))
        elif isinstance(lit, PNot) and isinstance(lit.arg, PLt):
            rows_src.append((lit.arg.right, lit.arg.left, False))
        elif isinstance(lit, PAtom):
            atoms_pos.append(lit)
        elif isinstance(lit, PNot) and isinstance(lit.arg, PAtom):
            atoms_neg.append(lit.arg)
        else:
            raise OutOfFragment(f"unexpected literal {lit}")

    # congruence closure
    true_n = None
    false_n = None
    try:
        true_n = cc.intern(TConst(True))
        false_n = cc.intern(TConst(False))
        for l, r in cc_eqs:
            cc.union(cc.intern(l), cc.intern(r))
        for a in atoms_pos:
            cc.union(cc.intern(TApp(a.pred, a.args)), true_n)
        for a in atoms_neg:
            cc.union(cc.intern(TApp(a.pred, a.args)), false_n)
        cc.close()
    except _Conflict:
        return "unsat", None
    if cc.find(true_n) == cc.find(false_n):
        return "unsat", None
    if cc.acyclic_conflict():
        return "unsat", None

    # decomposition can equate arithmetic leaves: route them to the rows
    derived_int_eqs: list[tuple[Term, Term]] = []
    arith_nodes: dict[int, list[int]] = {}
    for nid in range(len(cc.kind)):
        if cc.kind[nid][0] in ("arith", "int", "var"):
            arith_nodes.setdefault(cc.find(nid), []).append(nid)

    # non-int disequalities after closure
    for l, r in other_diseqs:
        if cc.find(cc.intern(l)) == cc.find(cc.intern(r)):
            return "unsat", None

    # integer rows; arith-relevant congruence classes share a class variable
    rows: list[Row] = []

    def add_rel(l: Term, r: Term, strict: bool, eq: bool):
        cl, kl = linearize(l, cc)
        cr, kr = linearize(r, cc)
        coeffs = _merge(cl, {v: -c for v, c in cr.items()})
        const = kl - kr + (1 if strict else 0)
        rows.append(Row(coeffs, const, eq))

    for l, r in int_eqs:
        add_rel(l, r, False, True)
    for a, b, strict in rows_src:
        add_rel(a, b, strict, False)
    # tie congruence classes holding several distinct arith members together
    for root, members in arith_nodes.items():
        if len(members) < 2:
            continue
        rep = members[0]
        for m in members[1:]:
            lt = _node_term(cc, rep)
            rt = _node_term(cc, m)
            if lt is not None and rt is not None:
                add_rel(lt, rt, False, True)

    # integer variables also equated through the closure to constants
    for nid in range(len(cc.kind)):
        if cc.kind[nid][0] == "var":
            root = cc.find(nid)
            if cc.kind[root][0] == "int":
                rows.append(Row({cc.kind[nid][1]: 1}, -cc.kind[root][1], True))

    if int_diseqs:
        l, r = int_diseqs[0]
        rest = [x for x in literals if x not in (PNot(PEq(l, r)),)]
        below = rest + [PLt(l, r)]
        above = rest + [PLt(r, l)]
        s1, m1 = decide_cube(below, sorts, depth + 1)
        if s1 == "sat":
            return s1, m1
        s2, m2 = decide_cube(above, sorts, depth + 1)
        if s2 == "sat":
            return s2, m2
        if "unknown" in (s1, s2):
            return "unknown", None
        return "unsat", None

    status, model = solve_linear(rows)
    if status == "unknown":
        grid_model = _grid_search(literals, sorts)
        if grid_model is not None:
            return "sat", grid_model
        return "unknown", None
    if status == "unsat":
        return "unsat", None
    full_model = _grid_search(literals, sorts)
    return "sat", full_model if full_model is not None else model


def _node_term(cc: CongruenceClosure, nid: int) -> Optional[Term]:
    kind = cc.kind[nid]
    if kind[0] == "var":
        return TVar(kind[1])
    if kind[0] == "int":
        return TConst(kind[1])
    if kind[0] == "arith":
        coeffs, const = kind[1]
        t: Optional[Term] = TConst(const) if const or not coeffs else None
        for v, c in coeffs:
            part: Term = TVar(v)
            if c < 0:
                part = TNeg(part)
                c = -c
            for _ in range(c - 1):
                part = TAdd(part, TVar(v))
            t = part if t is None else TAdd(t, part)
        return t if t is not None else TConst(0)
    return None


# ---------------------------------------------------------------------------
# Grid model search (verified countermodels)
# ---------------------------------------------------------------------------

def evaluate_term(t: Term, env: dict[str, object]) -> object:
    if isinstance(t, TConst):
        v = t.value
        if isinstance(v, bool):
            return v
        if v == UNIT and not isinstance(v, int):
            return UNIT
        return int(v)
    if isinstance(t, TVar):
        if t.name not in env:
            raise KeyError(t.name)
        return env[t.name]
    if isinstance(t, TNil):
        return ("nil",)
    if isinstance(t, TCons):
        return ("cons", evaluate_term(t.head, env), evaluate_term(t.tail, env))
    if isinstance(t, TAdd):
        return evaluate_term(t.left, env) + evaluate_term(t.right, env)
    if isinstance(t, TNeg):
        return -evaluate_term(t.arg, env)
    if isinstance(t, TFnName):
        return 0 if t.name == "null" else ("fn", t.name)
    if isinstance(t, TLambda):
        return ("fn", lambda_token(t))
    raise KeyError("opaque")


def evaluate_pure(p: Pure, env: dict[str, object], depth: int = 6) -> bool:
    if isinstance(p, PTrue):
        return True
    if isinstance(p, PFalse):
        return False
    if isinstance(p, PAnd):
        return evaluate_pure(p.left, env, depth) and evaluate_pure(p.right, env, depth)
    if isinstance(p, POr):
        return evaluate_pure(p.left, env, depth) or evaluate_pure(p.right, env, depth)
    if isinstance(p, PNot):
        return not evaluate_pure(p.arg, env, depth)
    if isinstance(p, PExists):
        for v in _small_universe():
            if evaluate_pure(p.body, {**env, p.var: v}, depth - 1):
                return True
        return False
    if isinstance(p, PEq):
        return evaluate_term(p.left, env) == evaluate_term(p.right, env)
    if isinstance(p, PLt):
        return evaluate_term(p.left, env) < evaluate_term(p.right, env)
    raise KeyError("atom")


def _small_universe() -> Iterator[object]:
    yield from range(-2, 4)
    yield True
    yield False
    yield ("nil",)
    yield ("cons", 0, ("nil",))


def _grid_search(literals: list[Pure], sorts: dict[str, str]) -> Optional[dict]:
    vars_: set[str] = set()
    for lit in literals:
        from ..kernel import pure_vars

        try:
            vars_ |= pure_vars(lit)
        except TypeError:
            return None
    vars_l = sorted(v for v in vars_ if v != "null")
    if len(vars_l) > 5:
        return None

    def domain(v: str):
        s = sorts.get(v, INT)
        if s == BOOL:
            return [True, False]
        if s == LIST:
            return [("nil",), ("cons", 0, ("nil",)), ("cons", 1, ("nil",)),
                    ("cons", 0, ("cons", 1, ("nil",)))]
        if s == FN:
            return [("fn", "f0"), ("fn", "f1")]
        if s == "unit":
            return [UNIT]
        if s == LOC:
            return [0, 1, 2, 3]
        return range(-GRID, GRID + 1)

    for values in itertools.product(*[domain(v) for v in vars_l]):
        env = dict(zip(vars_l, values))
        try:
            if all(evaluate_pure(lit, env) for lit in literals):
                return env
        except KeyError:
            return None
    return None


# ---------------------------------------------------------------------------
# Goal existentials
# ---------------------------------------------------------------------------

def _hoist_exists(p: Pure, counter: Optional[itertools.count] = None) -> Pure:
    """Pulls existentials outward through conjunction and disjunction,
    renaming binders so nothing in a sibling is captured."""
    counter = counter or itertools.count()

    def pull(node, ctor):
        l, r = _hoist_exists(node.left, counter), _hoist_exists(node.right, counter)
        while isinstance(l, PExists) or isinstance(r, PExists):
            if isinstance(l, PExists):
                nv = f"hx${next(counter)}"
                body = subst_pure(l.body, {l.var: TVar(nv)})
                return PExists(nv, _hoist_exists(ctor(body, r), counter))
            nv = f"hx${next(counter)}"
            body = subst_pure(r.body, {r.var: TVar(nv)})
            return PExists(nv, _hoist_exists(ctor(l, body), counter))
        return ctor(l, r)

    if isinstance(p, PAnd):
        return pull(p, PAnd)
    if isinstance(p, POr):
        return pull(p, POr)
    if isinstance(p, PExists):
        return PExists(p.var, _hoist_exists(p.body, counter))
    return p


def _freshen_exists(p: Pure, taken: set[str]) -> Pure:
    """Alpha-renames existential binders that clash with ``taken``."""
    if isinstance(p, PExists):
        v = p.var
        body = p.body
        if v in taken:
            i = 0
            while f"{v}.{i}" in taken:
                i += 1
            nv = f"{v}.{i}"
            body = subst_pure(body, {v: TVar(nv)})
            v = nv
        taken = taken | {v}
        return PExists(v, _freshen_exists(body, taken))
    return p


def _witness_candidates(var: str, body: Pure, hyps: list[Pure]) -> list[Term]:
    cands: list[Term] = []

    def eqs(p: Pure):
        if isinstance(p, (PAnd, POr)):
            eqs(p.left)
            eqs(p.right)
        elif isinstance(p, PNot):
            eqs(p.arg)
        elif isinstance(p, PExists):
            eqs(p.body)
        elif isinstance(p, PEq):
            if isinstance(p.left, TVar) and p.left.name == var and var not in term_vars(p.right):
                cands.append(p.right)
            if isinstance(p.right, TVar) and p.right.name == var and var not in term_vars(p.left):
                cands.append(p.left)

    eqs(body)

    # positional matching of uninterpreted atoms / applications
    goal_atoms: list[tuple[str, tuple[Term, ...]]] = []
    hyp_atoms: list[tuple[str, tuple[Term, ...]]] = []

    def atoms(p: Pure, out):
        if isinstance(p, (PAnd, POr)):
            atoms(p.left, out)
            atoms(p.right, out)
        elif isinstance(p, (PNot, PExists)):
            atoms(p.arg if isinstance(p, PNot) else p.body, out)
        elif isinstance(p, PAtom):
            out.append((p.pred, p.args))
        elif isinstance(p, PEq):
            for side in (p.left, p.right):
                if isinstance(side, TApp):
                    out.append((side.fn, side.args))

    atoms(body, goal_atoms)
    for h in hyps:
        atoms(h, hyp_atoms)
    for pred, args in goal_atoms:
        for hpred, hargs in hyp_atoms:
            if hpred != pred or len(hargs) != len(args):
                continue
            for ga, ha in zip(args, hargs):
                if isinstance(ga, TVar) and ga.name == var and var not in term_vars(ha):
                    cands.append(ha)
    seen: set = set()
    out = []
    for c in cands:
        if repr(c) not in seen:
            seen.add(repr(c))
            out.append(c)
    return out


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def internal_decide(q: PureQuery) -> PureVerdict:
    """Complete on the supported fragment; raises OutOfFragment otherwise."""
    sorts = dict(q.sorts)
    hyps = list(q.hypotheses)
    taken: set[str] = set()
    for h in hyps:
        taken |= _pvars(h)
    goal = _freshen_exists(_hoist_exists(q.goal), taken)
    attempts = [0]
    return _prove(hyps, goal, sorts, attempts)


def _pvars(p: Pure) -> set[str]:
    from ..kernel import pure_vars

    return pure_vars(p)


def _prove(hyps: list[Pure], goal: Pure, sorts: dict[str, str], attempts: list[int]) -> PureVerdict:
    if isinstance(goal, PExists):
        cands = _witness_candidates(goal.var, goal.body, hyps)
        if not cands:
            raise OutOfFragment(f"no witness candidates for {goal.var}")
        undecided = False
        for cand in cands:
            attempts[0] += 1
            if attempts[0] > MAX_EXISTS_ATTEMPTS:
                raise OutOfFragment("witness search budget exceeded")
            inst = subst_pure(goal.body, {goal.var: cand})
            try:
                v = _prove(hyps, _hoist_exists(inst), sorts, attempts)
            except OutOfFragment:
                undecided = True
                continue
            if v.is_valid:
                return v
        if undecided:
            raise OutOfFragment("existential witness undecided")
        return PureVerdict("invalid", None)

    sk = _Skolem()
    parts = [_nnf(h, True, sk) for h in hyps] + [_nnf(goal, False, sk)]
    formula = parts[0] if parts else PTrue()
    for p in parts[1:]:
        formula = PAnd(formula, p)
    sorts2 = make_query(list(hyps) + [formula], goal, sorts).sorts
    cubes = _dnf(formula)
    unknown = False
    for cube in cubes:
        status, model = decide_cube(cube, sorts2)
        if status == "sat":
            cm = {k: v for k, v in (model or {}).items() if not k.startswith("@")}
            return PureVerdict("invalid", cm or None)
        if status == "unknown":
            unknown = True
    if unknown:
        raise OutOfFragment("cube undecided")
    return PureVerdict("valid")


def quick_valid(hypotheses, goal, sorts=None) -> bool:
    """True only when the internal procedure proves the implication."""
    try:
        q = make_query(list(hypotheses), goal, sorts or {})
        return internal_decide(q).is_valid
    except OutOfFragment:
        return False
    except _Conflict:
        return False
