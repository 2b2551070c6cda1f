"""A small SMT-LIB2 solver for the quantifier-light fragment this package
emits: linear integer arithmetic, booleans, an integer list datatype and
uninterpreted functions.

Reads a script on stdin, prints ``sat``/``unsat``/``unknown`` per
``(check-sat)``.  Written against the wire format, independently of the
in-process decision procedure, so the two can cross-check each other.

Run as ``python -m stagedverify.backend.minismt``.
"""

from __future__ import annotations

import sys
from math import gcd

MAX_CUBES = 1024
GRID_SMALL = 3
GRID_WIDE = 8


# ---------------------------------------------------------------------------
# S-expressions
# ---------------------------------------------------------------------------

def tokenize(text: str):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield c
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            yield text[i:j + 1]
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n()|;":
                j += 1
            yield text[i:j]
            i = j


def parse_all(text: str) -> list:
    toks = list(tokenize(text))
    pos = 0
    out = []

    def parse():
        nonlocal pos
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while toks[pos] != ")":
                items.append(parse())
            pos += 1
            return items
        return t

    while pos < len(toks):
        out.append(parse())
    return out


# ---------------------------------------------------------------------------
# Script state
# ---------------------------------------------------------------------------

class Script:
    def __init__(self):
        self.sorts: dict[str, str] = {}       # const -> sort name
        self.funs: dict[str, tuple[list[str], str]] = {}
        self.assertions: list = []

    def load(self, forms: list) -> list[str]:
        results = []
        for form in forms:
            if not isinstance(form, list) or not form:
                continue
            head = form[0]
            if head == "declare-const":
                self.sorts[form[1]] = _sort_name(form[2])
            elif head == "declare-fun":
                name, args, ret = form[1], form[2], form[3]
                if not args:
                    self.sorts[name] = _sort_name(ret)
                else:
                    self.funs[name] = ([_sort_name(a) for a in args], _sort_name(ret))
            elif head == "assert":
                self.assertions.append(form[1])
            elif head == "check-sat":
                results.append(check(self.assertions, self.sorts, self.funs))
            elif head in ("set-logic", "declare-datatypes", "declare-sort", "set-option", "exit"):
                pass
        return results


def _sort_name(s) -> str:
    return s if isinstance(s, str) else "IList"


# ---------------------------------------------------------------------------
# Formula workspace: NNF, universal instantiation, DNF
# ---------------------------------------------------------------------------

class GiveUp(Exception):
    pass


def nnf(e, positive: bool, fresh: list[int], sorts: dict[str, str]):
    if e == "true":
        return "true" if positive else "false"
    if e == "false":
        return "false" if positive else "true"
    if isinstance(e, str):
        # boolean constant
        return ["=", e, "true" if positive else "false"]
    head = e[0]
    if head == "not":
        return nnf(e[1], not positive, fresh, sorts)
    if head == "and":
        parts = [nnf(x, positive, fresh, sorts) for x in e[1:]]
        return ["and" if positive else "or"] + parts
    if head == "or":
        parts = [nnf(x, positive, fresh, sorts) for x in e[1:]]
        return ["or" if positive else "and"] + parts
    if head == "exists":
        if positive:
            binds = e[1]
            body = e[2]
            ren = {}
            for b in binds:
                fresh[0] += 1
                nv = f"!sk{fresh[0]}"
                ren[b[0]] = nv
                sorts[nv] = _sort_name(b[1])
            return nnf(rename(body, ren), True, fresh, sorts)
        return ["!forall", e[1], e[2]]  # handled by instantiation later
    if head in ("=", "<", "<=", ">", ">="):
        norm = normalize_rel(e)
        return norm if positive else ["not", norm]
    # uninterpreted boolean application
    return ["=", e, "true"] if positive else ["=", e, "false"]


def normalize_rel(e):
    head = e[0]
    if head == "=":
        return ["=", e[1], e[2]]
    if head == "<":
        return ["<", e[1], e[2]]
    if head == "<=":
        return ["not", ["<", e[2], e[1]]]
    if head == ">":
        return ["<", e[2], e[1]]
    if head == ">=":
        return ["not", ["<", e[1], e[2]]]
    raise GiveUp(head)


def rename(e, ren: dict[str, str]):
    if isinstance(e, str):
        return ren.get(e, e)
    if e and e[0] == "exists":
        inner = {k: v for k, v in ren.items() if k not in [b[0] for b in e[1]]}
        return ["exists", e[1], rename(e[2], inner)]
    return [rename(x, ren) for x in e]


def ground_terms_of_sort(assertions, sorts, funs, want: str) -> list:
    """Candidate instantiation terms collected from the whole script."""
    found: list = []
    seen: set[str] = set()

    def sort_of(e) -> str:
        if isinstance(e, str):
            if e.lstrip("-").isdigit():
                return "Int"
            if e in ("true", "false"):
                return "Bool"
            if e == "nil":
                return "IList"
            return sorts.get(e, "?")
        if not e or not isinstance(e[0], str):
            return "?"
        if e[0] in ("+", "-", "head"):
            return "Int"
        if e[0] == "cons":
            return "IList"
        if e[0] in funs:
            return funs[e[0]][1]
        return "?"

    def walk(e):
        key = repr(e)
        if sort_of(e) == want and key not in seen:
            seen.add(key)
            found.append(e)
        if isinstance(e, list):
            for x in e[1:] if e and e[0] == "exists" else e:
                if isinstance(x, (list, str)):
                    walk(x)

    for a in assertions:
        walk(a)
    if want == "Int":
        for c in ("0", "1", "-1"):
            if c not in seen:
                found.append(c)
    if want == "IList" and "nil" not in seen:
        found.append("nil")
    return found[:8]


def instantiate_foralls(e, assertions, sorts, funs, fresh, saw: list[bool]):
    """Replaces !forall nodes by finite conjunctions over candidate terms.

    Sound for refutation only; ``saw`` records that a universal was
    approximated so sat answers can be suppressed."""
    if isinstance(e, str):
        return e
    if e and e[0] == "!forall":
        saw[0] = True
        binds, body = e[1], e[2]
        inst = ["and"]
        combos = [[]]
        for b in binds:
            cands = ground_terms_of_sort(assertions, sorts, funs, _sort_name(b[1]))
            combos = [c + [(b[0], t)] for c in combos for t in cands]
            if len(combos) > 64:
                raise GiveUp("too many instantiations")
        if not combos or not combos[0]:
            raise GiveUp("no candidates for universal")
        for combo in combos:
            body2 = body
            for v, t in combo:
                body2 = substitute(body2, v, t)
            part = nnf(["not", body2], True, fresh, sorts)
            inst.append(instantiate_foralls(part, assertions, sorts, funs, fresh, saw))
        return inst
    return [instantiate_foralls(x, assertions, sorts, funs, fresh, saw)
            if isinstance(x, list) else x for x in e]


def substitute(e, var: str, term):
    if isinstance(e, str):
        return term if e == var else e
    if e and e[0] == "exists" and any(b[0] == var for b in e[1]):
        return e
    return [substitute(x, var, term) for x in e]


def dnf(e) -> list[list]:
    if e == "true":
        return [[]]
    if e == "false":
        return []
    if isinstance(e, list) and e and e[0] == "and":
        cubes = [[]]
        for part in e[1:]:
            sub = dnf(part)
            cubes = [a + b for a in cubes for b in sub]
            if len(cubes) > MAX_CUBES:
                raise GiveUp("cube explosion")
        return cubes
    if isinstance(e, list) and e and e[0] == "or":
        out = []
        for part in e[1:]:
            out.extend(dnf(part))
        if len(out) > MAX_CUBES:
            raise GiveUp("cube explosion")
        return out
    return [[e]]


# ---------------------------------------------------------------------------
# Cube decision: union-find closure + Fourier-Motzkin
# ---------------------------------------------------------------------------

class UF:
    def __init__(self):
        self.p: dict[str, str] = {}
        self.rep_term: dict[str, object] = {}

    def add(self, k: str, term):
        if k not in self.p:
            self.p[k] = k
            self.rep_term[k] = term

    def find(self, k: str) -> str:
        while self.p[k] != k:
            self.p[k] = self.p[self.p[k]]
            k = self.p[k]
        return k


def term_key(e, sorts) -> str:
    if isinstance(e, str):
        if e.lstrip("-").isdigit():
            return f"#i{int(e)}"
        if e in ("true", "false"):
            return f"#b{e}"
        if e == "nil":
            return "#nil"
        if e.startswith("|"):
            return f"#sym{e}"
        return f"v:{e}"
    if e[0] == "cons":
        return f"(cons {term_key(e[1], sorts)} {term_key(e[2], sorts)})"
    if e[0] in ("+", "-"):
        lin = linear_of(e, None, sorts)
        return "#lin" + repr(sorted(lin[0].items())) + f"+{lin[1]}"
    return "(" + " ".join([e[0]] + [term_key(x, sorts) for x in e[1:]]) + ")"


def is_int_expr(e, sorts, funs) -> bool:
    if isinstance(e, str):
        if e.lstrip("-").isdigit():
            return True
        return sorts.get(e) == "Int"
    if e[0] in ("+", "-", "head"):
        return True
    if e[0] in funs:
        return funs[e[0]][1] == "Int"
    return False


def linear_of(e, cube_ctx, sorts) -> tuple[dict[str, int], int]:
    """Linear form over variables and opaque-term keys."""
    if isinstance(e, str):
        if e.lstrip("-").isdigit():
            return {}, int(e)
        return {f"v:{e}": 1}, 0
    if e[0] == "+":
        coeffs: dict[str, int] = {}
        const = 0
        for part in e[1:]:
            c2, k2 = linear_of(part, cube_ctx, sorts)
            for v, c in c2.items():
                coeffs[v] = coeffs.get(v, 0) + c
            const += k2
        return {v: c for v, c in coeffs.items() if c}, const
    if e[0] == "-":
        if len(e) == 2:
            c2, k2 = linear_of(e[1], cube_ctx, sorts)
            return {v: -c for v, c in c2.items()}, -k2
        c1, k1 = linear_of(e[1], cube_ctx, sorts)
        c2, k2 = linear_of(e[2], cube_ctx, sorts)
        out = dict(c1)
        for v, c in c2.items():
            out[v] = out.get(v, 0) - c
        return {v: c for v, c in out.items() if c}, k1 - k2
    # opaque application; identified by closure class when available
    key = cube_ctx.class_key(e) if cube_ctx else term_key(e, sorts)
    return {key: 1}, 0


class Cube:
    def __init__(self, sorts, funs):
        self.sorts = sorts
        self.funs = funs
        self.uf = UF()
        self.ineqs: list[tuple[dict[str, int], int]] = []  # sum + const <= 0
        self.int_eqs: list[tuple[object, object]] = []
        self.diseqs: list[tuple[object, object]] = []

    def register(self, e):
        k = term_key(e, self.sorts)
        self.uf.add(k, e)
        if isinstance(e, list) and e[0] not in ("+", "-"):
            for x in e[1:]:
                self.register(x)
        return k

    def class_key(self, e) -> str:
        return "cls:" + self.uf.find(self.register(e))

    def union(self, a, b) -> bool:
        """Returns False on constructor conflict."""
        ka, kb = self.uf.find(self.register(a)), self.uf.find(self.register(b))
        if ka == kb:
            return True
        ta, tb = self.uf.rep_term[ka], self.uf.rep_term[kb]
        va, vb = _value_kind(ta), _value_kind(tb)
        if va and vb:
            if va == vb == "cons":
                self.uf.p[kb] = ka
                return self.union(ta[1], tb[1]) and self.union(ta[2], tb[2])
            return False
        if vb:
            ka, kb = kb, ka
        self.uf.p[kb] = ka
        return True

    def congruence(self) -> bool:
        while True:
            sig: dict[str, str] = {}
            merged = False
            for k in list(self.uf.p):
                t = self.uf.rep_term[k]
                if isinstance(t, list) and t[0] not in ("+", "-"):
                    s = "(" + " ".join(
                        [t[0]] + [self.uf.find(self.register(x)) for x in t[1:]]) + ")"
                    if s in sig:
                        if self.uf.find(sig[s]) != self.uf.find(k):
                            if not self.union(self.uf.rep_term[self.uf.find(sig[s])], t):
                                return False
                            merged = True
                    else:
                        sig[s] = k
            if not merged:
                return True


def _value_kind(t):
    if isinstance(t, str):
        if t.lstrip("-").isdigit():
            return f"int{t}"
        if t in ("true", "false"):
            return t
        if t == "nil":
            return "nil"
        return None
    if t[0] == "cons":
        return "cons"
    return None


def decide_cube(literals, sorts, funs, depth=0):
    if depth > 8:
        return "unknown"
    cube = Cube(sorts, funs)
    int_rows: list[tuple[dict, int]] = []
    pending_int_eqs = []
    splits = []

    for lit in literals:
        neg = False
        e = lit
        if isinstance(e, list) and e and e[0] == "not":
            neg, e = True, e[1]
        if e == "true":
            if neg:
                return "unsat"
            continue
        if e == "false":
            if not neg:
                return "unsat"
            continue
        if isinstance(e, list) and e[0] == "=":
            a, b = e[1], e[2]
            if is_int_expr(a, sorts, funs) or is_int_expr(b, sorts, funs):
                if neg:
                    splits.append((a, b))
                else:
                    pending_int_eqs.append((a, b))
            else:
                if neg:
                    cube.diseqs.append((a, b))
                else:
                    if not cube.union(a, b):
                        return "unsat"
        elif isinstance(e, list) and e[0] == "<":
            ca, ka = linear_of(e[1], cube, sorts)
            cb, kb = linear_of(e[2], cube, sorts)
            row = _sub_lin(ca, ka, cb, kb)
            if neg:  # b <= a
                int_rows.append(_neg_row(row))
            else:    # a < b  ->  a - b + 1 <= 0
                int_rows.append((row[0], row[1] + 1))
        else:
            return "unknown"

    if not cube.congruence():
        return "unsat"
    if _cyclic(cube):
        return "unsat"
    for a, b in cube.diseqs:
        if cube.uf.find(cube.register(a)) == cube.uf.find(cube.register(b)):
            return "unsat"
    for a, b in pending_int_eqs:
        ca, ka = linear_of(a, cube, sorts)
        cb, kb = linear_of(b, cube, sorts)
        coeffs, const = _sub_lin(ca, ka, cb, kb)
        int_rows.append((coeffs, const))
        int_rows.append(_neg_row((coeffs, const)))
    # distinct integer constants merged through the closure
    seen_ints: dict[str, int] = {}
    for k in list(cube.uf.p):
        t = cube.uf.rep_term[k]
        kind = _value_kind(t)
        root = cube.uf.find(k)
        if kind and kind.startswith("int"):
            if root in seen_ints and seen_ints[root] != int(t):
                return "unsat"
            seen_ints[root] = int(t)

    if splits:
        a, b = splits[0]
        rest = [x for x in literals if x != ["not", ["=", a, b]]]
        r1 = decide_cube(rest + [["<", a, b]], sorts, funs, depth + 1)
        if r1 == "sat":
            return "sat"
        r2 = decide_cube(rest + [["<", b, a]], sorts, funs, depth + 1)
        if r2 == "sat":
            return "sat"
        if "unknown" in (r1, r2):
            return "unknown"
        return "unsat"

    return fm_decide(int_rows)


def _sub_lin(ca, ka, cb, kb):
    out = dict(ca)
    for v, c in cb.items():
        out[v] = out.get(v, 0) - c
        if not out[v]:
            del out[v]
    return out, ka - kb


def _neg_row(row):
    coeffs, const = row
    return ({v: -c for v, c in coeffs.items()}, -const)


def _cyclic(cube: Cube) -> bool:
    graph: dict[str, set[str]] = {}
    for k in list(cube.uf.p):
        t = cube.uf.rep_term[k]
        if isinstance(t, list) and t[0] == "cons":
            root = cube.uf.find(k)
            graph.setdefault(root, set()).add(cube.uf.find(cube.register(t[2])))
    color: dict[str, int] = {}

    def dfs(n):
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


def fm_decide(rows) -> str:
    rows = [r for r in rows if r[0] or r[1] > 0]
    exact = True
    while True:
        vars_ = sorted({v for coeffs, _ in rows for v in coeffs})
        if not vars_:
            break
        var = vars_[0]
        lowers = [r for r in rows if r[0].get(var, 0) < 0]
        uppers = [r for r in rows if r[0].get(var, 0) > 0]
        rest = [r for r in rows if not r[0].get(var, 0)]
        if len(lowers) * len(uppers) > 500:
            return "unknown"
        new = list(rest)
        for lc, lk in lowers:
            for uc, uk in uppers:
                a = uc[var]
                b = -lc[var]
                if a != 1 and b != 1:
                    exact = False
                g = gcd(a, b)
                coeffs: dict[str, int] = {}
                for v, c in uc.items():
                    coeffs[v] = coeffs.get(v, 0) + c * (b // g)
                for v, c in lc.items():
                    coeffs[v] = coeffs.get(v, 0) + c * (a // g)
                coeffs.pop(var, None)
                coeffs = {v: c for v, c in coeffs.items() if c}
                new.append((coeffs, uk * (b // g) + lk * (a // g)))
        dedup = {}
        for coeffs, const in new:
            key = repr(sorted(coeffs.items()))
            if key not in dedup or dedup[key][1] < const:
                dedup[key] = (coeffs, const)
        rows = list(dedup.values())
    for coeffs, const in rows:
        if const > 0:
            return "unsat"
    return "sat" if exact else "unknown"


# ---------------------------------------------------------------------------
# Model search
# ---------------------------------------------------------------------------

def _negative_exists(e, positive=True) -> bool:
    if isinstance(e, str):
        return False
    if e and e[0] == "exists":
        if not positive:
            return True
        return _negative_exists(e[2], positive)
    if e and e[0] == "not":
        return _negative_exists(e[1], not positive)
    return any(_negative_exists(x, positive) for x in e[1:] if isinstance(x, (list, str))) \
        if e else False


def find_model(assertions, sorts, funs) -> bool:
    if funs:
        return False
    # a universally-quantified assertion cannot be verified on a finite grid
    if any(_negative_exists(a) for a in assertions):
        return False
    consts = sorted(sorts)
    if len(consts) > 5:
        return False

    def domain(sort, wide):
        r = GRID_WIDE if wide else GRID_SMALL
        if sort == "Bool":
            return [True, False]
        if sort == "IList":
            return [("nil",), ("cons", 0, ("nil",)), ("cons", 1, ("nil",)),
                    ("cons", -1, ("cons", 0, ("nil",)))]
        if sort == "Fn":
            return [("fn", 0), ("fn", 1)]
        return list(range(-r, r + 1))

    import itertools

    for wide in (False, True):
        doms = [domain(sorts[c], wide) for c in consts]
        total = 1
        for d in doms:
            total *= len(d)
        if total > 300000:
            return False
        for combo in itertools.product(*doms):
            env = dict(zip(consts, combo))
            try:
                if all(eval_sexpr(a, env, sorts) is True for a in assertions):
                    return True
            except GiveUp:
                return False
    return False


def eval_sexpr(e, env, sorts):
    if isinstance(e, str):
        if e.lstrip("-").isdigit():
            return int(e)
        if e == "true":
            return True
        if e == "false":
            return False
        if e == "nil":
            return ("nil",)
        if e.startswith("|"):
            return ("sym", e)
        if e in env:
            return env[e]
        raise GiveUp(e)
    head = e[0]
    if head == "and":
        return all(eval_sexpr(x, env, sorts) is True for x in e[1:])
    if head == "or":
        return any(eval_sexpr(x, env, sorts) is True for x in e[1:])
    if head == "not":
        return eval_sexpr(e[1], env, sorts) is not True
    if head == "=":
        return eval_sexpr(e[1], env, sorts) == eval_sexpr(e[2], env, sorts)
    if head == "<":
        return eval_sexpr(e[1], env, sorts) < eval_sexpr(e[2], env, sorts)
    if head == "<=":
        return eval_sexpr(e[1], env, sorts) <= eval_sexpr(e[2], env, sorts)
    if head == ">":
        return eval_sexpr(e[1], env, sorts) > eval_sexpr(e[2], env, sorts)
    if head == ">=":
        return eval_sexpr(e[1], env, sorts) >= eval_sexpr(e[2], env, sorts)
    if head == "+":
        return sum(eval_sexpr(x, env, sorts) for x in e[1:])
    if head == "-":
        if len(e) == 2:
            return -eval_sexpr(e[1], env, sorts)
        return eval_sexpr(e[1], env, sorts) - eval_sexpr(e[2], env, sorts)
    if head == "cons":
        return ("cons", eval_sexpr(e[1], env, sorts), eval_sexpr(e[2], env, sorts))
    if head == "exists":
        binds, body = e[1], e[2]

        def loop(i, env2):
            if i == len(binds):
                return eval_sexpr(body, env2, sorts) is True
            name, sort = binds[i][0], _sort_name(binds[i][1])
            dom = ([("nil",), ("cons", 0, ("nil",)), ("cons", 1, ("nil",))]
                   if sort == "IList" else
                   [True, False] if sort == "Bool" else range(-GRID_SMALL, GRID_SMALL + 1))
            return any(loop(i + 1, {**env2, name: v}) for v in dom)

        return loop(0, env)
    raise GiveUp(head)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def check(assertions, sorts, funs) -> str:
    saw_forall = [False]
    try:
        fresh = [0]
        local_sorts = dict(sorts)
        parts = [nnf(a, True, fresh, local_sorts) for a in assertions]
        parts = [instantiate_foralls(p, assertions, local_sorts, funs, fresh, saw_forall)
                 for p in parts]
        formula = ["and"] + parts if parts else "true"
        cubes = dnf(formula)
        any_unknown = False
        any_sat = False
        for cube in cubes:
            res = decide_cube(cube, local_sorts, funs, 0)
            if res == "sat":
                any_sat = True
                break
            if res == "unknown":
                any_unknown = True
        if any_sat and not saw_forall[0]:
            return "sat"
        if not any_sat and not any_unknown:
            return "unsat"
    except (GiveUp, RecursionError):
        pass
    try:
        if not saw_forall[0] and find_model(assertions, sorts, funs):
            return "sat"
    except (GiveUp, RecursionError):
        pass
    return "unknown"


def main() -> int:
    text = sys.stdin.read()
    try:
        forms = parse_all(text)
    except (IndexError, ValueError):
        print("unknown")
        return 0
    script = Script()
    for result in script.load(forms):
        print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
