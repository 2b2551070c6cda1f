"""Staged subsumption: proves lhs <= rhs stage by stage.

Disjunction on the left universally splits; on the right the engine
backtracks over disjuncts left to right.  Aligned segments reduce to
separation-logic entailments (contravariant for req, covariant for ens)
whose residual frames flow into later obligations; across matched function
stages only the pure portion of the frame survives.  Misaligned function
stages are resolved by rewriting with lemmas and by unfolding known
predicate or lambda-bound stages, in that order, under per-path budgets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional

from .kernel import (
    ANON,
    Disj,
    Ensure,
    Exists,
    Flow,
    FlowSegment,
    FnStage,
    HEmp,
    HPointsTo,
    Heap,
    Intersect,
    Lemma,
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
    PredicateDef,
    Pure,
    Require,
    Seq,
    Spec,
    State,
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
    alpha_equivalent,
    conjuncts,
    free_vars,
    heap_atoms,
    hstar,
    pand,
    pnot,
    show_spec,
    show_state,
    state_vars,
    subst,
    subst_pure,
    subst_state,
    subst_term,
    term_vars,
)
from .compaction import NormalizationError, fold_pure, fold_state, fold_term, normalize_flows
from .backend.queries import OutOfFragment, make_query
from .backend.smtlib import prove as backend_prove
from . import mutations


# ---------------------------------------------------------------------------
# Context and results
# ---------------------------------------------------------------------------

@dataclass
class EntailCtx:
    predicates: dict[str, PredicateDef] = field(default_factory=dict)
    pure_preds: dict[str, PredicateDef] = field(default_factory=dict)
    lemmas: list[Lemma] = field(default_factory=list)
    unfold_bound: int = 1
    rewrite_bound: int = 1
    step_budget: int = 50_000
    prover: str = "internal"
    solver_cmd: Optional[str] = None
    timeout_ms: int = 5000
    saturation_depth: int = 2

    def with_lemma(self, lemma: Lemma) -> "EntailCtx":
        out = replace(self)
        out.lemmas = self.lemmas + [lemma]
        return out


@dataclass(frozen=True)
class ProofResult:
    verdict: str  # proved | failed | aborted
    trace: tuple[str, ...]
    reason: str = ""

    @property
    def proved(self) -> bool:
        return self.verdict == "proved"


class _Aborted(Exception):
    pass


def is_recursive(ctx: EntailCtx, name: str) -> bool:
    d = ctx.predicates.get(name)
    if d is None:
        return False
    return name in free_vars(d.body)


# ---------------------------------------------------------------------------
# xpure: sound pure abstraction of a symbolic heap
# ---------------------------------------------------------------------------

NULL = TFnName("null")


def xpure(h: Heap) -> Pure:
    cells = list(heap_atoms(h))
    locs: list[Term] = []
    for c in cells:
        if c.loc not in locs:
            locs.append(c.loc)
    parts: list[Pure] = [pnot(PEq(loc, NULL)) for loc in locs]
    for a, b in itertools.combinations(locs, 2):
        parts.append(pnot(PEq(a, b)))
    return pand(*parts) if parts else PTrue()


def xpure_state(d: State) -> Pure:
    return pand(xpure(d.heap), d.pure)


# ---------------------------------------------------------------------------
# Pure predicate definitions as pure formulae
# ---------------------------------------------------------------------------

def pure_definition(d: PredicateDef) -> Pure:
    """The predicate body as a pure formula: flows become conjunctions,
    function stages become atoms, disjuncts a disjunction."""
    flows = normalize_flows(d.body)
    parts: list[Pure] = []
    for f in flows:
        conj: list[Pure] = []
        binders: list[str] = []
        for seg in f.segments:
            binders.extend(seg.ex)
            binders.extend(seg.ex_ens)
            conj.append(seg.req.pure)
            conj.append(seg.ens.pure)
            if seg.call is not None:
                conj.append(PAtom(seg.call.fn, seg.call.args + (TVar(seg.call.result),)))
        body = pand(*conj)
        for v in reversed(binders):
            body = PExists(v, body)
        parts.append(body)
    out = parts[0]
    for p in parts[1:]:
        out = POr(out, p)
    return out


def _functionalize(p: Pure, ctx: EntailCtx) -> Pure:
    """Rewrites atoms of result-carrying pure predicates into equations over
    an uninterpreted function, so congruence supplies functionality."""
    if isinstance(p, PAtom):
        d = ctx.pure_preds.get(p.pred)
        if d is not None and d.result is not None and len(p.args) == len(d.params) + 1:
            return PEq(TApp(p.pred, p.args[:-1]), p.args[-1])
        return p
    if isinstance(p, PAnd):
        return PAnd(_functionalize(p.left, ctx), _functionalize(p.right, ctx))
    if isinstance(p, POr):
        return POr(_functionalize(p.left, ctx), _functionalize(p.right, ctx))
    if isinstance(p, PNot):
        return PNot(_functionalize(p.arg, ctx))
    if isinstance(p, PExists):
        return PExists(p.var, _functionalize(p.body, ctx))
    return p


def _atom_instances(p: Pure, ctx: EntailCtx) -> list[tuple[str, tuple[Term, ...]]]:
    out: list[tuple[str, tuple[Term, ...]]] = []

    def go(q: Pure):
        if isinstance(q, PAtom) and q.pred in ctx.pure_preds:
            out.append((q.pred, q.args))
        elif isinstance(q, PEq):
            for side in (q.left, q.right):
                if isinstance(side, TApp) and side.fn in ctx.pure_preds:
                    other = q.right if side is q.left else q.left
                    out.append((side.fn, side.args + (other,)))
        elif isinstance(q, (PAnd, POr)):
            go(q.left)
            go(q.right)
        elif isinstance(q, PNot):
            go(q.arg)
        elif isinstance(q, PExists):
            go(q.body)

    go(p)
    return out


def saturate(ctx: EntailCtx, hyps: list[Pure], goal: Pure) -> list[Pure]:
    """Instantiates pure-predicate definitions for atoms present in the
    query, ``saturation_depth`` rounds deep."""
    extra: list[Pure] = []
    seen: set[str] = set()
    frontier: list[tuple[str, tuple[Term, ...]]] = []
    for h in hyps:
        frontier.extend(_atom_instances(h, ctx))
    frontier.extend(_atom_instances(goal, ctx))
    for _ in range(ctx.saturation_depth):
        next_frontier: list[tuple[str, tuple[Term, ...]]] = []
        for pred, args in frontier:
            d = ctx.pure_preds.get(pred)
            if d is None:
                continue
            key = f"{pred}{args!r}"
            if key in seen:
                continue
            seen.add(key)
            names = list(d.params) + ([d.result] if d.result else [])
            if len(args) != len(names):
                continue
            body = pure_definition(d)
            inst = subst_pure(body, dict(zip(names, args)))
            inst = _functionalize(inst, ctx)
            head = _functionalize(PAtom(pred, args), ctx)
            axiom = POr(pnot(head), inst)  # head => body
            extra.append(axiom)
            next_frontier.extend(_atom_instances(inst, ctx))
        frontier = next_frontier
    return extra


# ---------------------------------------------------------------------------
# The engine
# ---------------------------------------------------------------------------

class _Engine:
    def __init__(self, ctx: EntailCtx):
        self.ctx = ctx
        self.trace: list[str] = []
        self.budget = ctx.step_budget

    def log(self, rule: str, lhs: str = "", rhs: str = ""):
        self.trace.append(f"RULE {rule} lhs={lhs} rhs={rhs}")
        self.budget -= 1
        if self.budget < 0:
            raise _Aborted("step budget exceeded")

    # -- pure obligations ----------------------------------------------------

    def discharge(self, hyps: list[Pure], goal: Pure) -> bool:
        hyps = [fold_pure(h) for h in hyps if not isinstance(h, PTrue)]
        goal = fold_pure(goal)
        if isinstance(goal, PTrue):
            return True
        # subsumption assertions: matched syntactically modulo alpha
        goal, ok = self._strip_subsume_goals(hyps, goal)
        if not ok:
            return False
        if isinstance(goal, PTrue):
            return True
        hyps = [_strip_subsume_hyp(h) for h in hyps]
        extra = saturate(self.ctx, hyps, goal)
        hyps = [_functionalize(h, self.ctx) for h in hyps] + extra
        goal = _functionalize(goal, self.ctx)
        try:
            q = make_query(hyps, goal)
        except Exception:
            return False
        verdict = backend_prove(q, self.ctx.prover, self.ctx.solver_cmd, self.ctx.timeout_ms)
        return verdict.is_valid

    def _strip_subsume_goals(self, hyps: list[Pure], goal: Pure) -> tuple[Pure, bool]:
        subs_hyps = []
        for h in hyps:
            for c in conjuncts(h):
                if isinstance(c, PSubsume):
                    subs_hyps.append(c)

        failed = []

        def go(p: Pure) -> Pure:
            if isinstance(p, PSubsume):
                for h in subs_hyps:
                    if alpha_equivalent(h.lhs, p.lhs) and alpha_equivalent(h.rhs, p.rhs):
                        return PTrue()
                failed.append(p)
                return PFalse()
            if isinstance(p, PAnd):
                return pand(go(p.left), go(p.right))
            if isinstance(p, POr):
                return POr(go(p.left), go(p.right))
            if isinstance(p, PExists):
                return PExists(p.var, go(p.body))
            return p

        out = go(goal)
        if failed and isinstance(out, PFalse):
            return out, False
        return out, True

    # -- separation logic entailment ------------------------------------------

    def sl_entail(self, hyp: State, goal: State, inst: set[str],
                  theta: dict[str, Term]) -> Optional[tuple[State, dict[str, Term], set[str]]]:
        """Proves hyp |- exists(inst). goal * frame.

        Returns (frame, extended theta, residual existentials closed in the
        pure obligation) or None.  Backtracks over existential location
        matches."""
        goal = subst_state(goal, theta)
        hyp = subst_state(hyp, theta)
        goal_cells = list(heap_atoms(goal.heap))
        hyp_cells = list(heap_atoms(hyp.heap))

        def attempt(gi: int, remaining: list[HPointsTo], th: dict[str, Term],
                    eqs: list[Pure]) -> Optional[tuple[State, dict[str, Term], set[str]]]:
            if gi == len(goal_cells):
                frame_heap = hstar(*[subst_term_cell(c, th) for c in remaining])
                resid = {v for v in inst if v not in th}
                obligation = pand(subst_pure(goal.pure, th), *[subst_pure(e, th) for e in eqs])
                closed = {v for v in resid if v in _pvars(obligation)}
                for v in closed:
                    obligation = PExists(v, obligation)
                hyp_pure = hyp.pure
                hyps = [xpure(frame_heap), hyp_pure]
                if not self.discharge(hyps, obligation):
                    return None
                frame = State(frame_heap, hyp_pure)
                return frame, th, closed

            cell = goal_cells[gi]
            loc = subst_term(cell.loc, th)
            val = subst_term(cell.value, th)
            # exact syntactic location match
            for i, hc in enumerate(remaining):
                if hc.loc == loc:
                    return try_match(gi, remaining, i, th, eqs, loc, val)
            # pure-implied location match (deterministic, first win)
            for i, hc in enumerate(remaining):
                if self.discharge([hyp.pure, pand(*eqs)], PEq(hc.loc, loc)):
                    return try_match(gi, remaining, i, th, eqs, loc, val)
            # existential location: backtrack over all cells
            if isinstance(loc, TVar) and loc.name in inst and loc.name not in th:
                for i in range(len(remaining)):
                    th2 = dict(th)
                    th2[loc.name] = remaining[i].loc
                    out = try_match(gi, remaining, i, th2, eqs,
                                    remaining[i].loc, subst_term(val, th2))
                    if out is not None:
                        return out
            return None

        def try_match(gi, remaining, i, th, eqs, loc, val):
            hc = remaining[i]
            rest = remaining[:i] + remaining[i + 1:]
            if isinstance(val, TVar) and val.name in inst and val.name not in th:
                th2 = dict(th)
                th2[val.name] = hc.value
                return attempt(gi + 1, rest, th2, eqs)
            if val == hc.value:
                return attempt(gi + 1, rest, th, eqs)
            return attempt(gi + 1, rest, th, eqs + [PEq(val, hc.value)])

        return attempt(0, hyp_cells, dict(theta), [])

    # -- stage-pairwise subsumption -------------------------------------------

    def prove(self, lhs: Spec, rhs: Spec, frame: State, unfolds: dict[str, int],
              rewrites: dict[str, int], goal_head: Optional[str]) -> bool:
        try:
            lflows = normalize_flows(lhs)
            rflows = normalize_flows(rhs)
        except NormalizationError as e:
            self.log("NormalizeFail", str(e))
            return False
        for lf in lflows:
            if len(lflows) > 1:
                self.log("DisjLeft", show_spec(lf.to_spec()))
            if not self.prove_flow_against(lf, rflows, frame, dict(unfolds),
                                           dict(rewrites), goal_head):
                return False
        return True

    def prove_flow_against(self, lf: Flow, rflows: list[Flow], frame: State,
                           unfolds: dict[str, int], rewrites: dict[str, int],
                           goal_head: Optional[str]) -> bool:
        for i, rf in enumerate(rflows):
            if len(rflows) > 1:
                self.log("DisjRight", rhs=f"disjunct {i + 1}")
            if self.prove_flow_pair(list(lf.segments), list(rf.segments), frame,
                                    dict(unfolds), dict(rewrites), goal_head):
                return True
            if len(rflows) > 1:
                self.log("Backtrack", rhs=f"disjunct {i + 1}")
        return False

    def prove_flow_pair(self, lsegs: list[FlowSegment], rsegs: list[FlowSegment],
                        frame: State, unfolds: dict[str, int],
                        rewrites: dict[str, int], goal_head: Optional[str]) -> bool:
        lseg, rseg = lsegs[0], rsegs[0]
        lcall, rcall = lseg.call, rseg.call

        aligned = (lcall is None and rcall is None and len(lsegs) == 1 and len(rsegs) == 1) \
            or (lcall is not None and rcall is not None and lcall.fn == rcall.fn)

        if not aligned:
            return self.realign(lsegs, rsegs, frame, unfolds, rewrites, goal_head)

        theta_l: dict[str, Term] = {}
        theta_r: dict[str, Term] = {}

        # EntReq: contravariant
        l_inst = set(lseg.ex)
        if mutations.active("entreq_covariant"):
            got = self.sl_entail(State(hstar(frame.heap, lseg.req.heap),
                                       pand(frame.pure, lseg.req.pure)),
                                 rseg.req, set(rseg.ex), {})
        else:
            got = self.sl_entail(State(hstar(frame.heap, rseg.req.heap),
                                       pand(frame.pure, rseg.req.pure)),
                                 lseg.req, l_inst, {})
        self.log("EntReq", show_state(lseg.req), show_state(rseg.req))
        if got is None:
            self.log("EntReqFail", show_state(lseg.req), show_state(rseg.req))
            return False
        f1, theta_l, _ = got

        # ens result naming: the rhs result denotes the lhs result
        rbinders = _r_binders(rsegs)
        if rseg.ens_var not in (ANON, lseg.ens_var) and lseg.ens_var != ANON:
            if rseg.ens_var in rbinders:
                theta_r.setdefault(rseg.ens_var, TVar(lseg.ens_var))
            else:
                self.log("ResultMismatch", lseg.ens_var, rseg.ens_var)
                return False

        # EntEns: covariant
        r_inst = set(rseg.ex_ens)
        lens = subst_state(lseg.ens, theta_l)
        got = self.sl_entail(State(hstar(f1.heap, lens.heap), pand(f1.pure, lens.pure)),
                             rseg.ens, r_inst, theta_r)
        self.log("EntEns", show_state(lseg.ens), show_state(rseg.ens))
        if got is None:
            self.log("EntEnsFail", show_state(lseg.ens), show_state(rseg.ens))
            return False
        f2, theta_r, closed = got
        if mutations.active("entens_drop_frame"):
            f2 = State()
        # witnesses closed inside the obligation must not be needed later
        later = free_vars(_flow_spec(rsegs[1:])) if rsegs[1:] else set()
        if rcall is not None:
            later |= {rcall.fn, rcall.result}
            for a in rcall.args:
                later |= term_vars(a)
        if closed & later:
            self.log("EntEnsScopeFail", rhs=",".join(sorted(closed & later)))
            return False

        if lcall is None and rcall is None:
            return True

        # EntFunc: same constructor, arguments provably equal; only the pure
        # portion of the frame survives the stage
        pi_p = pand(xpure(f2.heap), f2.pure)
        lcall2 = subst(subst(lcall, theta_l), {})
        rcall2 = subst(rcall, theta_r)
        obligations: list[Pure] = []
        for la, ra in zip(lcall2.args, rcall2.args):
            if isinstance(ra, TVar) and ra.name in _r_binders(rsegs) and \
                    ra.name not in theta_r:
                theta_r[ra.name] = la
            elif la != ra:
                obligations.append(PEq(la, ra))
        if lcall2.result != rcall2.result:
            if rcall2.result in _r_binders(rsegs) and rcall2.result not in theta_r:
                theta_r[rcall2.result] = TVar(lcall2.result)
            else:
                obligations.append(PEq(TVar(lcall2.result), TVar(rcall2.result)))
        self.log("EntFunc", show_spec(lcall2), show_spec(rcall2))
        if obligations and not self.discharge([pi_p], pand(*obligations)):
            self.log("EntFuncFail", show_spec(lcall2), show_spec(rcall2))
            return False

        lrest = [_seg_subst(s, theta_l) for s in lsegs[1:]]
        rrest = [_seg_subst(s, theta_r) for s in rsegs[1:]]
        return self.prove_flow_pair(lrest, rrest, State(HEmp(), pi_p),
                                    unfolds, rewrites, goal_head)

    # -- realignment: rewrite then unfold --------------------------------------

    def realign(self, lsegs: list[FlowSegment], rsegs: list[FlowSegment],
                frame: State, unfolds: dict[str, int], rewrites: dict[str, int],
                goal_head: Optional[str]) -> bool:
        # try lemma rewriting anywhere in the lhs flow
        for lemma in self.ctx.lemmas:
            if rewrites.get(lemma.name, 0) >= self.ctx.rewrite_bound:
                continue
            if unfolds.get(lemma.head.fn, 0) < 1:
                continue  # induction hypotheses fire only under an unfold
            rewritten = rewrite_with_lemma(lemma, Flow(tuple(lsegs)))
            if rewritten is not None:
                self.log("Rewrite", lemma.name)
                rewrites = dict(rewrites)
                rewrites[lemma.name] = rewrites.get(lemma.name, 0) + 1
                self.log("Normalize")
                return self.prove(rewritten.to_spec(), _flow_spec(rsegs), frame,
                                  unfolds, rewrites, goal_head)

        # unfold the first resolvable lhs function stage
        first_call = next((s.call for s in lsegs if s.call is not None), None)
        if first_call is not None:
            body = self.resolve_stage(first_call, lsegs, frame)
            if body is not None:
                count = unfolds.get(first_call.fn, 0)
                if count >= self.ctx.unfold_bound and first_call.fn in self.ctx.predicates \
                        and is_recursive(self.ctx, first_call.fn):
                    self.log("UnfoldBudget", first_call.fn)
                    return False
                unfolds = dict(unfolds)
                unfolds[first_call.fn] = count + 1
                self.log("Unfold", first_call.fn)
                new_lhs = _splice_unfold(lsegs, first_call, body)
                self.log("Normalize")
                return self.prove(new_lhs, _flow_spec(rsegs), frame, unfolds,
                                  rewrites, goal_head)
        self.log("AlignFail",
                 show_spec(_flow_spec(lsegs)), show_spec(_flow_spec(rsegs)))
        return False

    def resolve_stage(self, stage: FnStage, lsegs: list[FlowSegment],
                      frame: State) -> Optional[Spec]:
        d = self.ctx.predicates.get(stage.fn)
        if d is not None:
            names = list(d.params) + [d.result or "res"]
            args = list(stage.args) + [TVar(stage.result)]
            if len(names) != len(args):
                return None
            return subst(d.body, dict(zip(names, args)))
        # a local name bound to a logical lambda in the pure context
        pures = [frame.pure]
        for seg in lsegs:
            pures.append(seg.req.pure)
            pures.append(seg.ens.pure)
            if seg.call is stage:
                break
        for p in pures:
            for c in conjuncts(p):
                lam = _lambda_binding(c, stage.fn)
                if lam is not None:
                    if len(lam.params) != len(stage.args):
                        continue
                    mapping = dict(zip(lam.params, stage.args))
                    mapping[lam.result] = TVar(stage.result)
                    return subst(lam.spec, mapping)
        return None


def _strip_subsume_hyp(h: Pure) -> Pure:
    parts = [c for c in conjuncts(h) if not isinstance(c, PSubsume)]
    return pand(*parts) if parts else PTrue()


def _lambda_binding(c: Pure, name: str) -> Optional[TLambda]:
    if isinstance(c, PEq):
        if isinstance(c.left, TVar) and c.left.name == name and isinstance(c.right, TLambda):
            return c.right
        if isinstance(c.right, TVar) and c.right.name == name and isinstance(c.left, TLambda):
            return c.left
    return None


def _pvars(p: Pure) -> set[str]:
    from .kernel import pure_vars

    return pure_vars(p)


def subst_term_cell(c: HPointsTo, th: dict[str, Term]) -> HPointsTo:
    return HPointsTo(subst_term(c.loc, th), subst_term(c.value, th))


def _seg_subst(seg: FlowSegment, th: dict[str, Term]) -> FlowSegment:
    call = seg.call
    if call is not None:
        call = subst(call, th)
    return FlowSegment(seg.ex, fold_state(subst_state(seg.req, th)), seg.ex_ens,
                       seg.ens_var, fold_state(subst_state(seg.ens, th)), call)


def _r_binders(rsegs: list[FlowSegment]) -> set[str]:
    out: set[str] = set()
    for seg in rsegs:
        out.update(seg.ex)
        out.update(seg.ex_ens)
    return out


def _flow_spec(segs: list[FlowSegment]) -> Spec:
    return Flow(tuple(segs)).to_spec()


def _splice_unfold(lsegs: list[FlowSegment], stage: FnStage, body: Spec) -> Spec:
    """Replaces the leading function stage with its instantiated body."""
    seg = lsegs[0]
    assert seg.call is stage
    rest = _flow_spec(lsegs[1:]) if lsegs[1:] else None
    from .kernel import seq as kseq

    parts = [Require(seg.req), Ensure(seg.ens_var, seg.ens), body]
    if rest is not None:
        parts.append(rest)
    spec: Spec = kseq(*parts)
    binders = seg.ex + seg.ex_ens
    if binders:
        spec = Exists(binders, spec)
    return spec


# ---------------------------------------------------------------------------
# Lemmas
# ---------------------------------------------------------------------------

def _match_term(pattern: Term, actual: Term, univ: set[str],
                sigma: dict[str, Term]) -> bool:
    if isinstance(pattern, TVar) and pattern.name in univ:
        if pattern.name in sigma:
            return sigma[pattern.name] == actual
        sigma[pattern.name] = actual
        return True
    if type(pattern) is not type(actual):
        return False
    if isinstance(pattern, (TVar, TConst, TFnName)):
        return pattern == actual
    if isinstance(pattern, TNil):
        return True
    if isinstance(pattern, TCons):
        return _match_term(pattern.head, actual.head, univ, sigma) and \
            _match_term(pattern.tail, actual.tail, univ, sigma)
    if isinstance(pattern, TAdd):
        return _match_term(pattern.left, actual.left, univ, sigma) and \
            _match_term(pattern.right, actual.right, univ, sigma)
    if isinstance(pattern, TNeg):
        return _match_term(pattern.arg, actual.arg, univ, sigma)
    if isinstance(pattern, TApp):
        return pattern.fn == actual.fn and len(pattern.args) == len(actual.args) and \
            all(_match_term(p, a, univ, sigma) for p, a in zip(pattern.args, actual.args))
    return pattern == actual


def rewrite_with_lemma(lemma: Lemma, flow: Flow) -> Optional[Flow]:
    """Replaces the first stage matching the lemma head by the instantiated
    right-hand side.  Returns None when no stage matches."""
    univ = set(lemma.universals)
    for i, seg in enumerate(flow.segments):
        stage = seg.call
        if stage is None or stage.fn != lemma.head.fn:
            continue
        if len(stage.args) != len(lemma.head.args):
            continue
        sigma: dict[str, Term] = {}
        ok = all(_match_term(p, a, univ, sigma)
                 for p, a in zip(lemma.head.args, stage.args))
        if not ok:
            continue
        if lemma.head.result in univ:
            sigma[lemma.head.result] = TVar(stage.result)
        elif lemma.head.result != stage.result:
            continue
        rhs = subst(lemma.rhs.to_spec(), sigma)
        segs = list(flow.segments)
        head_seg = FlowSegment(seg.ex, seg.req, seg.ex_ens, seg.ens_var, seg.ens, None)
        prefix = Flow(tuple(segs[:i] + [head_seg])).to_spec()
        suffix = Flow(tuple(segs[i + 1:])).to_spec() if segs[i + 1:] else None
        spec = Seq(prefix, Seq(rhs, suffix) if suffix is not None else rhs)
        flows = normalize_flows(spec)
        if len(flows) != 1:
            return None
        return flows[0]
    return None


def unfold_stage(ctx: EntailCtx, stage: FnStage, continuation: Optional[Flow] = None,
                 pure_ctx: Pure = PTrue()) -> Spec:
    """The stage's definition instantiated and sequenced with the
    continuation.  Raises KeyError for unknown functions."""
    engine = _Engine(ctx)
    frame = State(HEmp(), pure_ctx)
    segs = [FlowSegment((), State(), (), ANON, State(), stage)]
    if continuation is not None:
        segs.extend(continuation.segments)
    else:
        segs.append(FlowSegment((), State(), (), ANON, State(), None))
    body = engine.resolve_stage(stage, segs, frame)
    if body is None:
        raise KeyError(f"unknown function {stage.fn}")
    rest = Flow(tuple(segs[1:])).to_spec()
    return Seq(body, rest)


def induction_hypothesis(goal_lhs: Spec, rhs: Flow, ctx: EntailCtx) -> Optional[Lemma]:
    """Generalizes a goal whose lhs is a single recursive predicate stage
    (possibly under a pure context) into a subsumption lemma."""
    try:
        flows = normalize_flows(goal_lhs)
    except NormalizationError:
        return None
    if len(flows) != 1:
        return None
    flow = flows[0]
    calls = [s.call for s in flow.segments if s.call is not None]
    if len(calls) != 1:
        return None
    stage = calls[0]
    if not is_recursive(ctx, stage.fn):
        return None
    # the surrounding context must be pure (no heap before the stage)
    for seg in flow.segments:
        if list(heap_atoms(seg.req.heap)) or list(heap_atoms(seg.ens.heap)):
            return None
        if seg.call is stage:
            break
    pinned: set[str] = set()
    for seg in flow.segments:
        pinned |= _pvars(seg.ens.pure) | _pvars(seg.req.pure)
        if seg.call is stage:
            break
    universals = tuple(
        [a.name for a in stage.args if isinstance(a, TVar) and a.name not in pinned]
        + [stage.result])
    if len(universals) < 2:
        return None
    return Lemma(f"ih${stage.fn}", universals, stage, rhs)


# ---------------------------------------------------------------------------
# Public entry
# ---------------------------------------------------------------------------

def subsumes(ctx: EntailCtx, lhs: Spec, rhs: Spec) -> ProofResult:
    """Proves lhs <= rhs; generates an induction hypothesis when the goal
    is a recursive predicate stage, and pre-registers user lemmas."""
    engine = _Engine(ctx)
    try:
        rflows = normalize_flows(rhs)
    except NormalizationError as e:
        return ProofResult("failed", tuple(engine.trace), f"rhs not normalizable: {e}")

    work_ctx = ctx
    goal_head = None
    if len(rflows) == 1:
        ih = induction_hypothesis(lhs, rflows[0], ctx)
        if ih is not None:
            work_ctx = ctx.with_lemma(ih)
            goal_head = ih.head.fn
            engine.ctx = work_ctx
    try:
        ok = engine.prove(lhs, rhs, State(), {}, {}, goal_head)
    except _Aborted as e:
        return ProofResult("aborted", tuple(engine.trace), str(e))
    except NormalizationError as e:
        return ProofResult("failed", tuple(engine.trace), str(e))
    return ProofResult("proved" if ok else "failed", tuple(engine.trace))


def sl_entail(lhs: State, rhs: State, ex_vars: tuple[str, ...] = (),
              ctx: Optional[EntailCtx] = None) -> Optional[State]:
    """Standalone separation-logic entailment: lhs |- (ex. rhs) * frame."""
    engine = _Engine(ctx or EntailCtx())
    got = engine.sl_entail(lhs, rhs, set(ex_vars), {})
    if got is None:
        return None
    return got[0]
