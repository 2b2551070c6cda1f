"""Surface syntax: a mini-ML with specification annotations.

Annotations appear in ``(*@ ... @*)`` comments between a toplevel's parameter
list and ``=`` (or as the first token of a body).  The annotation grammar is
the one documented in the README; ``parse_spec`` and ``show_spec`` round-trip
up to alpha equivalence.

Lowering order: parse to a surface tree, normalize to ANF (match scrutinees
become variables), then desugar matches into recognizer/projection calls.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Optional

from .kernel import (
    ANON,
    EAssert,
    EAssign,
    ECall,
    ECons,
    EDeref,
    EIf,
    ELambda,
    ELet,
    EMatch,
    ERef,
    EVal,
    EVar,
    Ensure,
    Exists,
    Expr,
    Disj,
    FnStage,
    Flow,
    HEmp,
    HPointsTo,
    HStar,
    Heap,
    Intersect,
    Lemma,
    NameSupply,
    PAtom,
    PEq,
    PExists,
    PFalse,
    PLt,
    PNot,
    POr,
    PSubsume,
    PTrue,
    PredicateDef,
    Program,
    Pure,
    RESULT,
    Require,
    Seq,
    Spec,
    State,
    TAdd,
    TCons,
    TConst,
    TLambda,
    TNeg,
    TNil,
    TVar,
    Term,
    Toplevel,
    UNIT,
    free_vars,
    hstar,
    pand,
    pnot,
    seq,
    state,
)


# ---------------------------------------------------------------------------
# Errors and spans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpan:
    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def __str__(self):
        return f"{self.file}:{self.start_line}:{self.start_col}"


class FrontendError(Exception):
    def __init__(self, message: str, span: Optional[SourceSpan] = None):
        self.span = span
        super().__init__(f"{span}: {message}" if span else message)


class SyntaxErr(FrontendError):
    pass


class SpecSyntaxError(FrontendError):
    pass


class DuplicateName(FrontendError):
    pass


class UnsupportedPattern(FrontendError):
    pass


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

KEYWORDS = {
    "let", "rec", "in", "if", "then", "else", "fun", "match", "with",
    "assert", "ref", "not", "true", "false", "ex", "req", "ens", "emp",
    "forall", "exists", "lemma", "predicate",
}

SYMBOLS = [
    "(*@", "@*)", "/\\sp", "<=", ">=", "!=", "->", "::", ":=", "<:", "/\\",
    "\\/", "&&", "(", ")", "[", "]", ".", ",", ";", "!", "+", "-", "=",
    "<", ">", "@", "*", "\\", "|", ":", "_",
]

IDENT_START = set(string.ascii_lowercase + string.ascii_uppercase)
IDENT_CHARS = IDENT_START | set(string.digits) | {"_", "'"}


@dataclass(frozen=True)
class Token:
    kind: str  # 'ident' | 'int' | 'sym' | 'kw' | 'eof'
    text: str
    line: int
    col: int

    def span(self, file: str = "<input>") -> SourceSpan:
        return SourceSpan(file, self.line, self.col, self.line, self.col + len(self.text))


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        # plain comments (* ... *) skipped, but (*@ ... @*) is an annotation
        if text.startswith("(*", i) and not text.startswith("(*@", i):
            depth = 1
            j = i + 2
            while j < n and depth:
                if text.startswith("(*", j):
                    depth += 1
                    j += 2
                elif text.startswith("*)", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            if depth:
                raise SyntaxErr("unterminated comment", SourceSpan(file, line, col, line, col))
            skipped = text[i:j]
            line += skipped.count("\n")
            col = j - (text.rfind("\n", i, j) + 1) + 1 if "\n" in skipped else col + (j - i)
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c in IDENT_START:
            j = i
            while j < n and text[j] in IDENT_CHARS:
                j += 1
            word = text[i:j]
            kind = "kw" if word in KEYWORDS else "ident"
            toks.append(Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        for sym in SYMBOLS:
            if text.startswith(sym, i):
                toks.append(Token("sym", sym, line, col))
                col += len(sym)
                i += len(sym)
                break
        else:
            raise SyntaxErr(f"unexpected character {c!r}", SourceSpan(file, line, col, line, col))
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Surface expression tree
# ---------------------------------------------------------------------------

class SExpr:
    __slots__ = ()


@dataclass(frozen=True)
class SLit(SExpr):
    value: Term  # TConst or TNil


@dataclass(frozen=True)
class SVar(SExpr):
    name: str


@dataclass(frozen=True)
class SLet(SExpr):
    var: str
    bound: SExpr
    body: SExpr


@dataclass(frozen=True)
class SApp(SExpr):
    fn: SExpr
    args: tuple[SExpr, ...]


@dataclass(frozen=True)
class SIf(SExpr):
    cond: SExpr
    then: SExpr
    other: SExpr


@dataclass(frozen=True)
class SFun(SExpr):
    params: tuple[str, ...]
    spec: Optional[Spec]
    body: SExpr


@dataclass(frozen=True)
class SMatch(SExpr):
    scrutinee: SExpr
    nil_case: Optional[SExpr]
    head_var: Optional[str]
    tail_var: Optional[str]
    cons_case: Optional[SExpr]


@dataclass(frozen=True)
class SAssign(SExpr):
    target: str
    value: SExpr


@dataclass(frozen=True)
class SDeref(SExpr):
    arg: SExpr


@dataclass(frozen=True)
class SRef(SExpr):
    arg: SExpr


@dataclass(frozen=True)
class SCons(SExpr):
    head: SExpr
    tail: SExpr


@dataclass(frozen=True)
class SAssert(SExpr):
    state: State


@dataclass(frozen=True)
class SSeq(SExpr):
    first: SExpr
    second: SExpr


# ---------------------------------------------------------------------------
# Token cursor
# ---------------------------------------------------------------------------

class Cursor:
    def __init__(self, tokens: list[Token], file: str = "<input>", err=SyntaxErr):
        self.toks = tokens
        self.pos = 0
        self.file = file
        self.err = err

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def at(self, text: str, ahead: int = 0) -> bool:
        return self.peek(ahead).text == text and self.peek(ahead).kind != "eof"

    def at_kind(self, kind: str) -> bool:
        return self.peek().kind == kind

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def eat(self, text: str) -> Token:
        t = self.peek()
        if t.text != text or t.kind == "eof":
            raise self.err(f"expected {text!r}, found {t.text!r}", t.span(self.file))
        return self.next()

    def eat_ident(self) -> str:
        t = self.peek()
        if t.kind != "ident":
            raise self.err(f"expected identifier, found {t.text!r}", t.span(self.file))
        self.next()
        return t.text

    def fail(self, msg: str):
        raise self.err(msg, self.peek().span(self.file))


# ---------------------------------------------------------------------------
# Specification parser
# ---------------------------------------------------------------------------

class SpecParser:
    """Parses the annotation grammar.  ``ex x*.`` scopes to the end of the
    enclosing flow, matching how the binder is used in practice."""

    def __init__(self, cur: Cursor):
        self.cur = cur
        self.cur.err = SpecSyntaxError
        self.anon = NameSupply()

    # -- terms ------------------------------------------------------------

    def term(self) -> Term:
        return self.term_cons()

    def term_cons(self) -> Term:
        left = self.term_add()
        if self.cur.at("::"):
            self.cur.next()
            return TCons(left, self.term_cons())
        return left

    def term_add(self) -> Term:
        left = self.term_atom()
        while self.cur.at("+") or self.cur.at("-"):
            op = self.cur.next().text
            right = self.term_atom()
            left = TAdd(left, right if op == "+" else TNeg(right))
        return left

    def term_atom(self) -> Term:
        cur = self.cur
        t = cur.peek()
        if t.kind == "int":
            cur.next()
            return TConst(int(t.text))
        if cur.at("-"):
            cur.next()
            return TNeg(self.term_atom())
        if cur.at("true"):
            cur.next()
            return TConst(True)
        if cur.at("false"):
            cur.next()
            return TConst(False)
        if cur.at("["):
            cur.next()
            cur.eat("]")
            return TNil()
        if cur.at("_"):
            cur.next()
            return TVar(self._anon_var())
        if cur.at("\\"):
            return self.lambda_term()
        if cur.at("(") and cur.at(")", 1):
            cur.next()
            cur.next()
            return TConst(UNIT)
        if cur.at("("):
            cur.next()
            inner = self.term()
            cur.eat(")")
            return inner
        if t.kind == "ident":
            cur.next()
            if cur.at("("):
                cur.next()
                args = [self.term()]
                while cur.at(","):
                    cur.next()
                    args.append(self.term())
                cur.eat(")")
                from .kernel import TApp

                return TApp(t.text, tuple(args))
            return TVar(t.text)
        cur.fail(f"expected term, found {t.text!r}")

    def lambda_term(self) -> TLambda:
        cur = self.cur
        cur.eat("\\")
        cur.eat("(")
        names = [cur.eat_ident()]
        while cur.at(","):
            cur.next()
            names.append(cur.eat_ident())
        cur.eat(")")
        cur.eat(".")
        cur.eat("(")
        body = self.spec()
        cur.eat(")")
        if len(names) < 1:
            cur.fail("lambda needs a result name")
        return TLambda(tuple(names[:-1]), names[-1], body)

    # -- pure formulae -----------------------------------------------------

    def pure_full(self) -> Pure:
        left = self.pure_conj()
        while self.cur.at("\\/"):
            self.cur.next()
            left = POr(left, self.pure_conj())
        return left

    def pure_conj(self) -> Pure:
        left = self.pure_atom()
        while self.cur.at("/\\"):
            self.cur.next()
            left = pand(left, self.pure_atom())
        return left

    def pure_atom(self) -> Pure:
        cur = self.cur
        if cur.at("true"):
            cur.next()
            return PTrue()
        if cur.at("false"):
            cur.next()
            return PFalse()
        if cur.at("not"):
            cur.next()
            cur.eat("(")
            body = self.pure_full()
            cur.eat(")")
            return pnot(body)
        if cur.at("exists"):
            cur.next()
            names = [cur.eat_ident()]
            while self.cur.at_kind("ident"):
                names.append(cur.eat_ident())
            cur.eat(".")
            body = self.pure_conj()
            for v in reversed(names):
                body = PExists(v, body)
            return body
        if cur.at("("):
            # either a grouped pure formula or a subsumption assertion
            save = cur.pos
            try:
                cur.next()
                lhs = self.spec()
                cur.eat(")")
                cur.eat("<:")
                cur.eat("(")
                rhs = self.spec()
                cur.eat(")")
                return PSubsume(lhs, rhs)
            except SpecSyntaxError:
                cur.pos = save
            cur.next()
            inner = self.pure_full()
            cur.eat(")")
            return inner
        return self.comparison()

    def comparison(self) -> Pure:
        cur = self.cur
        # predicate atom: ident(...) not followed by a comparison operator
        if cur.at_kind("ident") and cur.at("(", 1):
            save = cur.pos
            name = cur.eat_ident()
            cur.next()
            args = [self.term()]
            while cur.at(","):
                cur.next()
                args.append(self.term())
            cur.eat(")")
            if not any(cur.at(op) for op in ("=", "<", "<=", ">", ">=", "!=")):
                return PAtom(name, tuple(args))
            cur.pos = save
        left = self.term()
        t = cur.peek()
        if t.text == "=":
            cur.next()
            return PEq(left, self.term())
        if t.text == "!=":
            cur.next()
            return pnot(PEq(left, self.term()))
        if t.text == "<":
            cur.next()
            return PLt(left, self.term())
        if t.text == "<=":
            cur.next()
            return pnot(PLt(self.term(), left))
        if t.text == ">":
            cur.next()
            return PLt(self.term(), left)
        if t.text == ">=":
            cur.next()
            return pnot(PLt(left, self.term()))
        # a bare boolean term is promoted to an equality with true
        return PEq(left, TConst(True))

    # -- states ------------------------------------------------------------

    def _looks_like_cell(self) -> bool:
        """Lookahead: does a heap cell (term -> term) start here?"""
        cur = self.cur
        save = cur.pos
        try:
            self.term()
            ok = cur.at("->")
        except SpecSyntaxError:
            ok = False
        cur.pos = save
        return ok

    def state(self) -> State:
        cur = self.cur
        cells: list[Heap] = []
        if cur.at("emp") or self._looks_like_cell():
            while True:
                if cur.at("emp"):
                    cur.next()
                else:
                    loc = self.term()
                    cur.eat("->")
                    cells.append(HPointsTo(loc, self.term()))
                if cur.at("*"):
                    cur.next()
                    continue
                break
            pure: Pure = PTrue()
            if cur.at("/\\"):
                cur.next()
                pure = self.pure_conj()
            return State(hstar(*cells), pure)
        return State(HEmp(), self.pure_conj())

    # -- stages and flows ---------------------------------------------------

    def _anon_var(self) -> str:
        return self.anon.fresh("u")

    def spec(self) -> Spec:
        left = self.spec_disj()
        while self.cur.at("/\\sp"):
            self.cur.next()
            left = Intersect(left, self.spec_disj())
        return left

    def spec_disj(self) -> Spec:
        left = self.flow()
        while self.cur.at("\\/"):
            self.cur.next()
            left = Disj(left, self.flow())
        return left

    def flow(self) -> Spec:
        cur = self.cur
        if cur.at("ex"):
            cur.next()
            names = [cur.eat_ident()]
            while cur.at_kind("ident") and not self._stage_keyword_ahead():
                names.append(cur.eat_ident())
            cur.eat(".")
            body = self.flow()
            return Exists(tuple(names), body)
        first = self.stage()
        if cur.at(";"):
            cur.next()
            rest = self.flow()
            return Seq(first, rest)
        return first

    def _stage_keyword_ahead(self) -> bool:
        return False  # idents before '.' are all binder names

    def stage(self) -> Spec:
        cur = self.cur
        if cur.at("("):
            save = cur.pos
            try:
                cur.next()
                inner = self.spec()
                cur.eat(")")
                return inner
            except SpecSyntaxError:
                cur.pos = save
                cur.fail("bad parenthesized spec")
        if cur.at("ex"):
            return self.flow()
        if cur.at("req"):
            cur.next()
            st = self.state()
            if cur.at("@"):
                cur.next()
                st = State(st.heap, st.pure, True)
            return self._close_anon(Require(st))
        if cur.at("ens"):
            cur.next()
            result = RESULT
            if cur.at("["):
                cur.next()
                if cur.at("_"):
                    cur.next()
                    result = ANON
                else:
                    result = cur.eat_ident()
                cur.eat("]")
            st = self.state()
            return self._close_anon(Ensure(result, st))
        if cur.at_kind("ident"):
            name = cur.eat_ident()
            cur.eat("(")
            args = [self.term()]
            while cur.at(","):
                cur.next()
                args.append(self.term())
            cur.eat(")")
            last = args[-1]
            if not isinstance(last, TVar):
                cur.fail(f"function stage {name} needs a variable result")
            return self._close_anon(FnStage(name, tuple(args[:-1]), last.name))
        cur.fail(f"expected stage, found {cur.peek().text!r}")

    def _close_anon(self, st: Spec) -> Spec:
        """Wrap a stage with binders for any ``_``-introduced variables."""
        anons = sorted(v for v in free_vars(st) if v.startswith("u$"))
        if anons:
            return Exists(tuple(anons), st)
        return st


def parse_spec(text: str, file: str = "<spec>") -> Spec:
    cur = Cursor(tokenize(text, file), file, err=SpecSyntaxError)
    parser = SpecParser(cur)
    out = parser.spec()
    if not cur.at_kind("eof"):
        cur.fail(f"trailing tokens after spec: {cur.peek().text!r}")
    return out


def parse_state(text: str, file: str = "<state>") -> State:
    cur = Cursor(tokenize(text, file), file, err=SpecSyntaxError)
    parser = SpecParser(cur)
    st = parser.state()
    if not cur.at_kind("eof"):
        cur.fail(f"trailing tokens after state: {cur.peek().text!r}")
    return st


# ---------------------------------------------------------------------------
# Program parser
# ---------------------------------------------------------------------------

BINOPS = {"=", "<", "<=", ">", ">=", "+", "-", "&&"}


class ProgramParser:
    def __init__(self, cur: Cursor):
        self.cur = cur
        self.wilds = NameSupply()

    def annotation(self) -> Optional[tuple[str, object]]:
        """Parses one (*@ ... @*) block: a spec, predicate or lemma."""
        cur = self.cur
        if not cur.at("(*@"):
            return None
        cur.next()
        sp = SpecParser(cur)
        if cur.at("predicate"):
            cur.next()
            name = cur.eat_ident()
            cur.eat("(")
            params = [cur.eat_ident()]
            while cur.at(","):
                cur.next()
                params.append(cur.eat_ident())
            cur.eat(")")
            cur.eat("=")
            body = sp.spec()
            cur.eat("@*)")
            result = RESULT if RESULT in free_vars(body) else None
            return ("predicate", PredicateDef(name, tuple(params), result, body, "pure"))
        if cur.at("lemma"):
            cur.next()
            name = cur.eat_ident()
            cur.eat(":")
            cur.eat("forall")
            univ = [cur.eat_ident()]
            while cur.at_kind("ident"):
                univ.append(cur.eat_ident())
            cur.eat(".")
            head_name = cur.eat_ident()
            cur.eat("(")
            args = [sp.term()]
            while cur.at(","):
                cur.next()
                args.append(sp.term())
            cur.eat(")")
            last = args[-1]
            if not isinstance(last, TVar):
                raise SpecSyntaxError("lemma head needs a variable result",
                                      cur.peek().span(cur.file))
            head = FnStage(head_name, tuple(args[:-1]), last.name)
            cur.eat("<:")
            rhs_spec = sp.flow()
            cur.eat("@*)")
            return ("lemma", (name, tuple(univ), head, rhs_spec))
        spec = sp.spec()
        cur.eat("@*)")
        return ("spec", spec)

    def params(self) -> list[str]:
        cur = self.cur
        out: list[str] = []
        supply = NameSupply()
        while True:
            if cur.at_kind("ident"):
                out.append(cur.eat_ident())
            elif cur.at("(") and cur.at(")", 1):
                cur.next()
                cur.next()
                out.append(supply.fresh("unit"))
            elif cur.at("_"):
                cur.next()
                out.append(supply.fresh("wild"))
            else:
                return out

    # expressions, loosest to tightest

    def expr(self) -> SExpr:
        cur = self.cur
        if cur.at("let"):
            cur.next()
            if cur.at("rec"):
                cur.fail("local let rec is not supported")
            if cur.at("_"):
                cur.next()
                name = self.wilds.fresh("wild")
            else:
                name = cur.eat_ident()
            ps = self.params()
            ann = self.annotation()
            spec = ann[1] if ann and ann[0] == "spec" else None
            if ann and ann[0] != "spec":
                cur.fail("only spec annotations are allowed on lets")
            cur.eat("=")
            bound = self.expr()
            if ps:
                bound = SFun(tuple(ps), spec, bound)
                spec = None
            elif spec is not None and isinstance(bound, SFun) and bound.spec is None:
                bound = SFun(bound.params, spec, bound.body)
            cur.eat("in")
            body = self.expr()
            return SLet(name, bound, body)
        if cur.at("if"):
            cur.next()
            cond = self.expr()
            cur.eat("then")
            then = self.expr()
            cur.eat("else")
            other = self.expr()
            return SIf(cond, then, other)
        if cur.at("fun"):
            cur.next()
            ps = self.params()
            if not ps:
                cur.fail("fun needs parameters")
            ann = self.annotation()
            spec = ann[1] if ann and ann[0] == "spec" else None
            cur.eat("->")
            body = self.expr()
            return SFun(tuple(ps), spec, body)
        if cur.at("match"):
            return self.match_expr()
        return self.seq_expr()

    def match_expr(self) -> SExpr:
        cur = self.cur
        cur.eat("match")
        scrut = self.expr()
        cur.eat("with")
        arms: dict[str, object] = {}
        while cur.at("|") or (not arms and (cur.at("[") or cur.at_kind("ident"))):
            if cur.at("|"):
                cur.next()
            if cur.at("["):
                cur.next()
                cur.eat("]")
                cur.eat("->")
                if "nil" in arms:
                    raise UnsupportedPattern("duplicate [] pattern", cur.peek().span(cur.file))
                arms["nil"] = self.expr()
            elif cur.at_kind("ident") or cur.at("_"):
                h = cur.next().text
                cur.eat("::")
                t = cur.next().text
                cur.eat("->")
                if "cons" in arms:
                    raise UnsupportedPattern("duplicate :: pattern", cur.peek().span(cur.file))
                arms["cons"] = (h, t, self.expr())
            else:
                raise UnsupportedPattern(
                    f"unsupported pattern {cur.peek().text!r}", cur.peek().span(cur.file))
        if not arms:
            raise UnsupportedPattern("match needs at least one arm", cur.peek().span(cur.file))
        nil_case = arms.get("nil")
        cons = arms.get("cons")
        return SMatch(
            scrut,
            nil_case,
            cons[0] if cons else None,
            cons[1] if cons else None,
            cons[2] if cons else None,
        )

    def seq_expr(self) -> SExpr:
        first = self.assign_expr()
        if self.cur.at(";"):
            self.cur.next()
            return SSeq(first, self.expr())
        return first

    def assign_expr(self) -> SExpr:
        cur = self.cur
        if cur.at_kind("ident") and cur.at(":=", 1):
            target = cur.eat_ident()
            cur.next()
            return SAssign(target, self.bool_expr())
        return self.bool_expr()

    def bool_expr(self) -> SExpr:
        left = self.cmp_expr()
        while self.cur.at("&&"):
            self.cur.next()
            right = self.cmp_expr()
            left = SApp(SVar("&&"), (left, right))
        return left

    def cmp_expr(self) -> SExpr:
        left = self.cons_expr()
        for op in ("<=", ">=", "=", "<", ">"):
            if self.cur.at(op):
                self.cur.next()
                return SApp(SVar(op), (left, self.cons_expr()))
        return left

    def cons_expr(self) -> SExpr:
        left = self.add_expr()
        if self.cur.at("::"):
            self.cur.next()
            return SCons(left, self.cons_expr())
        return left

    def add_expr(self) -> SExpr:
        left = self.app_expr()
        while self.cur.at("+") or self.cur.at("-"):
            op = self.cur.next().text
            right = self.app_expr()
            left = SApp(SVar(op), (left, right))
        return left

    def app_expr(self) -> SExpr:
        cur = self.cur
        if cur.at("!"):
            cur.next()
            return SDeref(self.atom())
        if cur.at("ref"):
            cur.next()
            return SRef(self.atom())
        if cur.at("not"):
            cur.next()
            return SApp(SVar("not"), (self.atom(),))
        if cur.at("assert"):
            cur.next()
            cur.eat("(")
            sp = SpecParser(cur)
            st = sp.state()
            cur.eat(")")
            return SAssert(st)
        fn = self.atom()
        args: list[SExpr] = []
        while self._atom_starts():
            args.append(self.atom())
        if args:
            return SApp(fn, tuple(args))
        return fn

    def _atom_starts(self) -> bool:
        t = self.cur.peek()
        if t.kind in ("int", "ident"):
            return True
        return t.text in ("(", "[", "true", "false", "!")

    def atom(self) -> SExpr:
        cur = self.cur
        t = cur.peek()
        if t.kind == "int":
            cur.next()
            return SLit(TConst(int(t.text)))
        if cur.at("true"):
            cur.next()
            return SLit(TConst(True))
        if cur.at("false"):
            cur.next()
            return SLit(TConst(False))
        if cur.at("["):
            cur.next()
            cur.eat("]")
            return SLit(TNil())
        if cur.at("!"):
            cur.next()
            return SDeref(self.atom())
        if cur.at("(") and cur.at(")", 1):
            cur.next()
            cur.next()
            return SLit(TConst(UNIT))
        if cur.at("("):
            cur.next()
            inner = self.expr()
            cur.eat(")")
            return inner
        if t.kind == "ident":
            cur.next()
            return SVar(t.text)
        cur.fail(f"expected expression, found {t.text!r}")

    # toplevels

    def program(self) -> tuple[Program, list]:
        cur = self.cur
        toplevels: list[Toplevel] = []
        predicates: list[PredicateDef] = []
        lemmas: list[Lemma] = []
        names: set[str] = set()
        while not cur.at_kind("eof"):
            if cur.at("(*@"):
                tag, item = self.annotation()
                if tag == "predicate":
                    if item.name in names:
                        raise DuplicateName(f"duplicate name {item.name}",
                                            cur.peek().span(cur.file))
                    names.add(item.name)
                    predicates.append(item)
                elif tag == "lemma":
                    name, univ, head, rhs_spec = item
                    if name in names:
                        raise DuplicateName(f"duplicate name {name}", cur.peek().span(cur.file))
                    names.add(name)
                    lemmas.append((name, univ, head, rhs_spec))
                else:
                    cur.fail("stray spec annotation at toplevel")
                continue
            cur.eat("let")
            is_rec = False
            if cur.at("rec"):
                cur.next()
                is_rec = True
            name = cur.eat_ident()
            if name in names:
                raise DuplicateName(f"duplicate name {name}", cur.peek().span(cur.file))
            names.add(name)
            ps = self.params()
            ann = self.annotation()
            spec = None
            if ann:
                if ann[0] != "spec":
                    cur.fail("expected a spec annotation")
                spec = ann[1]
            cur.eat("=")
            if spec is None:
                ann = self.annotation()
                if ann:
                    if ann[0] != "spec":
                        cur.fail("expected a spec annotation")
                    spec = ann[1]
            body = self.expr()
            toplevels.append(Toplevel(name, is_rec, tuple(ps), spec, _surface_marker(body)))
        # lemma heads must reference a known name
        defined = names
        fixed_lemmas = []
        for name, univ, head, rhs_spec in lemmas:
            if head.fn not in defined:
                raise DuplicateName(f"lemma {name} references undefined {head.fn}", None)
            fixed_lemmas.append((name, univ, head, rhs_spec))
        prog = Program(tuple(toplevels), tuple(predicates), ())
        return prog, fixed_lemmas


def _surface_marker(e: SExpr):
    return e  # toplevel bodies stay as surface trees until lowering


# ---------------------------------------------------------------------------
# ANF lowering
# ---------------------------------------------------------------------------

def anf_transform(e, supply: Optional[NameSupply] = None) -> Expr:
    """Lowers a surface tree (or rechecks an already-ANF core tree) into ANF.

    Introduced temporaries are fresh; left-to-right evaluation order is
    preserved.
    """
    supply = supply or NameSupply()
    if isinstance(e, Expr):
        return _anf_core(e, supply)
    return _anf(e, supply)


def _anf_core(e: Expr, supply: NameSupply) -> Expr:
    # already-core trees pass through with bodies recursively processed
    if isinstance(e, ELet):
        return ELet(e.var, _anf_core(e.bound, supply), _anf_core(e.body, supply))
    if isinstance(e, EIf):
        return EIf(e.cond, _anf_core(e.then, supply), _anf_core(e.other, supply))
    if isinstance(e, ELambda):
        return ELambda(e.params, e.spec, _anf_core(e.body, supply))
    if isinstance(e, EMatch):
        return EMatch(e.scrutinee, _anf_core(e.nil_case, supply), e.head_var,
                      e.tail_var, _anf_core(e.cons_case, supply))
    return e


def _bind(e: SExpr, supply: NameSupply, binds: list[tuple[str, Expr]]) -> str:
    """Names a subexpression, producing a variable for a compound position."""
    if isinstance(e, SVar):
        return e.name
    lowered = _anf(e, supply)
    v = supply.fresh("t")
    binds.append((v, lowered))
    return v


def _wrap(binds: list[tuple[str, Expr]], body: Expr) -> Expr:
    for v, b in reversed(binds):
        body = ELet(v, b, body)
    return body


def _anf(e: SExpr, supply: NameSupply) -> Expr:
    if isinstance(e, SLit):
        return EVal(e.value)
    if isinstance(e, SVar):
        return EVar(e.name)
    if isinstance(e, SLet):
        return ELet(e.var, _anf(e.bound, supply), _anf(e.body, supply))
    if isinstance(e, SSeq):
        return ELet(supply.fresh("seq"), _anf(e.first, supply), _anf(e.second, supply))
    if isinstance(e, SIf):
        binds: list[tuple[str, Expr]] = []
        c = _bind(e.cond, supply, binds)
        return _wrap(binds, EIf(c, _anf(e.then, supply), _anf(e.other, supply)))
    if isinstance(e, SApp):
        binds = []
        if not isinstance(e.fn, SVar):
            fn = _bind(e.fn, supply, binds)
        else:
            fn = e.fn.name
        args = [_bind(a, supply, binds) for a in e.args]
        return _wrap(binds, ECall(fn, tuple(args)))
    if isinstance(e, SAssign):
        binds = []
        v = _bind(e.value, supply, binds)
        return _wrap(binds, EAssign(e.target, v))
    if isinstance(e, SDeref):
        binds = []
        v = _bind(e.arg, supply, binds)
        return _wrap(binds, EDeref(v))
    if isinstance(e, SRef):
        binds = []
        v = _bind(e.arg, supply, binds)
        return _wrap(binds, ERef(v))
    if isinstance(e, SCons):
        binds = []
        h = _bind(e.head, supply, binds)
        t = _bind(e.tail, supply, binds)
        return _wrap(binds, ECons(h, t))
    if isinstance(e, SAssert):
        return EAssert(e.state)
    if isinstance(e, SFun):
        return ELambda(e.params, e.spec, _anf(e.body, supply))
    if isinstance(e, SMatch):
        binds = []
        scrut = _bind(e.scrutinee, supply, binds)
        nil_case = _anf(e.nil_case, supply) if e.nil_case is not None else None
        cons_case = _anf(e.cons_case, supply) if e.cons_case is not None else None
        return _wrap(binds, EMatch(scrut, nil_case, e.head_var, e.tail_var, cons_case))
    raise TypeError(e)


def validate_anf(e: Expr) -> bool:
    """Checks the ANF invariant: compound positions hold only variables."""
    if isinstance(e, (EVal, EVar, ECall, ERef, EAssign, EDeref, ECons, EAssert)):
        return True
    if isinstance(e, ELet):
        return validate_anf(e.bound) and validate_anf(e.body)
    if isinstance(e, EIf):
        return validate_anf(e.then) and validate_anf(e.other)
    if isinstance(e, ELambda):
        return validate_anf(e.body)
    if isinstance(e, EMatch):
        ok = True
        if e.nil_case is not None:
            ok = ok and validate_anf(e.nil_case)
        if e.cons_case is not None:
            ok = ok and validate_anf(e.cons_case)
        return ok
    return False


# ---------------------------------------------------------------------------
# Match desugaring
# ---------------------------------------------------------------------------

def desugar_match(e: Expr, supply: Optional[NameSupply] = None) -> Expr:
    """Replaces list matches by a conditional on ``is_cons`` plus head/tail
    projections, each introduced by a let.  Missing arms assert false."""
    supply = supply or NameSupply()

    def go(x: Expr) -> Expr:
        if isinstance(x, EMatch):
            nil_case = go(x.nil_case) if x.nil_case is not None else _assert_false()
            if x.cons_case is not None:
                h = x.head_var if x.head_var not in (None, "_") else supply.fresh("h")
                t = x.tail_var if x.tail_var not in (None, "_") else supply.fresh("t")
                cons_case = ELet(
                    h, ECall("head", (x.scrutinee,)),
                    ELet(t, ECall("tail", (x.scrutinee,)), go(x.cons_case)),
                )
            else:
                cons_case = _assert_false()
            c = supply.fresh("c")
            return ELet(c, ECall("is_cons", (x.scrutinee,)), EIf(c, cons_case, nil_case))
        if isinstance(x, ELet):
            return ELet(x.var, go(x.bound), go(x.body))
        if isinstance(x, EIf):
            return EIf(x.cond, go(x.then), go(x.other))
        if isinstance(x, ELambda):
            return ELambda(x.params, x.spec, go(x.body))
        return x

    return go(e)


def _assert_false() -> Expr:
    return EAssert(State(HEmp(), PFalse()))


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def parse_program(text: str, file: str = "<input>") -> Program:
    """Parses, lowers to ANF and desugars matches; annotations attached."""
    cur = Cursor(tokenize(text, file), file)
    prog, raw_lemmas = ProgramParser(cur).program()
    supply = NameSupply()
    toplevels = []
    for tl in prog.toplevels:
        body = desugar_match(anf_transform(tl.body, supply), supply)
        toplevels.append(Toplevel(tl.name, tl.is_rec, tl.params, tl.spec, body))
    lemmas = tuple(_finish_lemma(*L) for L in raw_lemmas)
    return Program(tuple(toplevels), prog.predicates, lemmas)


def _finish_lemma(name: str, univ: tuple[str, ...], head: FnStage, rhs_spec: Spec) -> Lemma:
    from .compaction import flows_of, normalize

    flows = flows_of(normalize(rhs_spec))
    if len(flows) != 1:
        raise SpecSyntaxError(f"lemma {name}: right-hand side must be disjunction-free")
    return Lemma(name, univ, head, flows[0])


def parse_program_file(path: str) -> Program:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_program(fh.read(), path)
