"""Normalization of staged specs into disjunctions of flows.

The engine flattens each disjunct into a stage list, then folds stages into
alternating req/ens segments: consecutive reqs and enss merge by separating
conjunction, and a req arriving after an ens is floated left through
biabduction.  Function stages close segments and are never merged across.

Biabduction computes an antiframe (what the context must additionally
provide) and a frame (what survives).  The antiframe's pure part is guarded:
it is the implication  current-ens facts => required facts , simplified to
``true`` when the solver can discharge it outright.  Read-only requires keep
matched cells in the frame and restore unmatched ones, so the checked heap
passes through unchanged.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional

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
    HStar,
    Heap,
    Intersect,
    NameSupply,
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
    conjuncts,
    free_vars,
    heap_atoms,
    hstar,
    obviously_false,
    pand,
    pnot,
    state_vars,
    subst,
    subst_state,
    subst_term,
    term_vars,
)
from . import mutations


class NormalizationError(Exception):
    pass


class BiabductionFailure(NormalizationError):
    pass


class CaseExplosion(NormalizationError):
    pass


@dataclass(frozen=True)
class BiabductionResult:
    antiframe: State
    frame: State


DEFAULT_BUDGET = 10_000


# ---------------------------------------------------------------------------
# Term simplification (constant folding)
# ---------------------------------------------------------------------------

def fold_term(t: Term) -> Term:
    if isinstance(t, TAdd):
        l, r = fold_term(t.left), fold_term(t.right)
        if isinstance(l, TConst) and isinstance(r, TConst) \
                and isinstance(l.value, int) and isinstance(r.value, int) \
                and not isinstance(l.value, bool) and not isinstance(r.value, bool):
            return TConst(l.value + r.value)
        if isinstance(l, TConst) and l.value == 0 and not isinstance(l.value, bool):
            return r
        if isinstance(r, TConst) and r.value == 0 and not isinstance(r.value, bool):
            return l
        # re-associate (x + c1) + c2
        if isinstance(l, TAdd) and isinstance(l.right, TConst) and isinstance(r, TConst) \
                and not isinstance(r.value, bool) and not isinstance(l.right.value, bool):
            return fold_term(TAdd(l.left, TConst(l.right.value + r.value)))
        return TAdd(l, r)
    if isinstance(t, TNeg):
        a = fold_term(t.arg)
        if isinstance(a, TConst) and isinstance(a.value, int) and not isinstance(a.value, bool):
            return TConst(-a.value)
        if isinstance(a, TNeg):
            return a.arg
        return TNeg(a)
    if isinstance(t, TCons):
        return TCons(fold_term(t.head), fold_term(t.tail))
    if isinstance(t, TApp):
        return TApp(t.fn, tuple(fold_term(a) for a in t.args))
    return t


def fold_pure(p: Pure) -> Pure:
    if isinstance(p, PAnd):
        return pand(fold_pure(p.left), fold_pure(p.right))
    if isinstance(p, POr):
        return POr(fold_pure(p.left), fold_pure(p.right))
    if isinstance(p, PNot):
        return pnot(fold_pure(p.arg))
    if isinstance(p, PExists):
        return PExists(p.var, fold_pure(p.body))
    if isinstance(p, PEq):
        l, r = fold_term(p.left), fold_term(p.right)
        if l == r:
            return PTrue()
        return PEq(l, r)
    if isinstance(p, PLt):
        return PLt(fold_term(p.left), fold_term(p.right))
    if isinstance(p, PAtom):
        return PAtom(p.pred, tuple(fold_term(a) for a in p.args))
    return p


def fold_state(d: State) -> State:
    cells = [HPointsTo(fold_term(c.loc), fold_term(c.value)) for c in heap_atoms(d.heap)]
    return State(hstar(*cells), fold_pure(d.pure), d.read_only)


# ---------------------------------------------------------------------------
# Biabduction
# ---------------------------------------------------------------------------

def _locs_equal(l1: Term, l2: Term, ctx: Pure, pure_facts: Pure) -> bool:
    if l1 == l2:
        return True
    from .backend.internal import quick_valid

    return quick_valid([ctx, pure_facts], PEq(l1, l2))


def _biabduct(current: State, incoming: State, pure_ctx: Pure,
              ex_vars: set[str], pinned: set[str]) -> tuple[BiabductionResult, dict]:
    """Biabduction aware of flow existentials: a bare unconstrained
    existential in a value position is instantiated as a witness instead of
    generating an equality."""
    from .backend.internal import quick_valid

    read_only = incoming.read_only and not mutations.active("ro_req_consumes")
    frame_cells = list(heap_atoms(current.heap))
    anti_cells: list[HPointsTo] = []
    eqs: list[Pure] = []
    witness: dict[str, Term] = {}
    pi1 = current.pure
    facts = pand(pi1, incoming.pure)

    for cell in heap_atoms(incoming.heap):
        loc = subst_term(cell.loc, witness)
        val = subst_term(cell.value, witness)
        match = None
        for i, fc in enumerate(frame_cells):
            if fc.loc == loc:
                match = i
                break
        if match is None:
            for i, fc in enumerate(frame_cells):
                if _locs_equal(fc.loc, loc, pure_ctx, pand(facts, *eqs)):
                    match = i
                    break
        if match is None:
            anti_cells.append(HPointsTo(loc, val))
            if read_only:
                frame_cells.append(HPointsTo(loc, val))
            continue
        cur_cell = frame_cells[match]
        if not read_only:
            del frame_cells[match]
        if isinstance(val, TVar) and val.name in ex_vars and val.name not in pinned \
                and val.name not in term_vars(cur_cell.value):
            witness[val.name] = cur_cell.value
        elif val != cur_cell.value:
            eq = PEq(val, cur_cell.value)
            if quick_valid([pure_ctx, facts] + eqs, pnot(eq)):
                raise BiabductionFailure(
                    f"contradictory match at {cell.loc}: {val} vs {cur_cell.value}")
            eqs.append(eq)

    pi2 = subst_state(incoming, witness).pure
    required = pand(pi2, *eqs)
    if isinstance(required, PTrue):
        anti_pure: Pure = PTrue()
    elif quick_valid([pure_ctx, subst_state(current, witness).pure], required):
        anti_pure = PTrue()
    elif isinstance(pi1, PTrue):
        anti_pure = required
    else:
        anti_pure = POr(pnot(subst_state(current, witness).pure), required)

    anti = State(hstar(*anti_cells), anti_pure)
    frame = State(
        hstar(*[HPointsTo(subst_term(c.loc, witness), subst_term(c.value, witness))
                for c in frame_cells]),
        subst_state(current, witness).pure,
    )
    return BiabductionResult(anti, frame), witness


def biabduct(current: State, incoming: State, pure_ctx: Pure = PTrue()) -> BiabductionResult:
    """Antiframe/frame pair such that  antiframe * current |- incoming * frame."""
    result, _ = _biabduct(current, incoming, pure_ctx, set(), set())
    return result


# ---------------------------------------------------------------------------
# Alias-aware floating (intersection specs)
# ---------------------------------------------------------------------------

def float_pre_alias_cases(current: State, incoming: State, bound: int = 16) -> Spec:
    """One branch per aliasing scenario between location variables of the
    two states, combined with the intersection connective."""
    cur_locs = [c.loc for c in heap_atoms(current.heap) if isinstance(c.loc, TVar)]
    inc_locs = [c.loc for c in heap_atoms(incoming.heap) if isinstance(c.loc, TVar)]
    pairs = []
    for il in inc_locs:
        for cl in cur_locs:
            if il != cl and (cl.name, il.name) not in [(a.name, b.name) for a, b in pairs]:
                pairs.append((cl, il))
    if 2 ** len(pairs) > bound:
        raise CaseExplosion(f"{len(pairs)} alias pairs")
    branches: list[Spec] = []
    for k in range(len(pairs) + 1):
        for chosen in itertools.combinations(pairs, k):
            mapping = {il.name: cl for cl, il in chosen}
            inc2 = subst_state(incoming, mapping)
            try:
                res = biabduct(current, inc2)
            except BiabductionFailure:
                continue
            alias_eqs = [PEq(cl, TVar(il_name)) for il_name, cl in
                         [(il.name, cl) for cl, il in chosen]]
            anti = State(res.antiframe.heap, pand(res.antiframe.pure, *alias_eqs))
            branch = Seq(Require(anti), Ensure(ANON, res.frame))
            branches.append(branch)
    if not branches:
        raise BiabductionFailure("all aliasing scenarios contradictory")
    out = branches[0]
    for b in branches[1:]:
        out = Intersect(out, b)
    return out


# ---------------------------------------------------------------------------
# Flattening
# ---------------------------------------------------------------------------

def _flatten(s: Spec, supply: NameSupply, budget: list[int]) -> list[list]:
    """Disjunct branches as stage-item lists; binders renamed fresh.
    Items are ('ex', names) markers or Require/Ensure/FnStage stages."""
    budget[0] -= 1
    if budget[0] < 0:
        raise NormalizationError("rewrite budget exceeded")
    if isinstance(s, (Require, Ensure, FnStage)):
        return [[s]]
    if isinstance(s, Seq):
        lefts = _flatten(s.first, supply, budget)
        rights = _flatten(s.second, supply, budget)
        if len(lefts) * len(rights) > 4096:
            raise NormalizationError("disjunct explosion")
        return [a + b for a in lefts for b in rights]
    if isinstance(s, Disj):
        return _flatten(s.left, supply, budget) + _flatten(s.right, supply, budget)
    if isinstance(s, Exists):
        out = []
        for branch in _flatten(s.body, supply, budget):
            ren = {v: TVar(supply.fresh(v)) for v in s.vars}
            # inner 'ex' markers bind already-freshened names, never s.vars
            renamed = [it if isinstance(it, tuple) else subst(it, ren) for it in branch]
            out.append([("ex", tuple(t.name for t in ren.values()))] + renamed)
        return out
    if isinstance(s, Intersect):
        raise NormalizationError("intersection nested under sequencing")
    raise TypeError(s)


# ---------------------------------------------------------------------------
# Segment folding
# ---------------------------------------------------------------------------

def _fold_branch(items: list, supply: NameSupply, budget: list[int]) -> Flow:
    segments: list[FlowSegment] = []
    pend_ex: list[str] = []
    pend_req = State()
    pend_ens = State()
    pend_var = ANON
    all_ex: set[str] = set()
    pinned: set[str] = set()
    dead = False

    def seg_close(call: Optional[FnStage]):
        nonlocal pend_ex, pend_req, pend_ens, pend_var
        segments.append(FlowSegment(tuple(pend_ex), fold_state(pend_req), (), pend_var,
                                    fold_state(pend_ens), call))
        pend_ex, pend_req, pend_ens, pend_var = [], State(), State(), ANON

    def apply_witness(witness: dict, rest: list) -> list:
        if not witness:
            return rest
        nonlocal pend_req, pend_ens
        pend_req = subst_state(pend_req, witness)
        pend_ens = subst_state(pend_ens, witness)
        return [it if isinstance(it, tuple) else subst(it, witness) for it in rest]

    idx = 0
    work = list(items)
    while idx < len(work):
        item = work[idx]
        idx += 1
        budget[0] -= 1
        if budget[0] < 0:
            raise NormalizationError("rewrite budget exceeded")
        if dead:
            continue
        if isinstance(item, tuple) and item[0] == "ex":
            pend_ex.extend(item[1])
            all_ex.update(item[1])
            continue
        if isinstance(item, Require):
            if list(heap_atoms(item.state.heap)):
                # an unsatisfiable preceding ens behaves as ens false: absorb
                from .backend.internal import quick_valid

                if not isinstance(pend_ens.pure, PTrue) and \
                        quick_valid([pend_req.pure], pnot(pend_ens.pure)):
                    pend_ens = State(HEmp(), PFalse())
                    dead = True
                    continue
            try:
                result, witness = _biabduct(pend_ens, item.state, pend_req.pure,
                                            all_ex, pinned)
            except BiabductionFailure as e:
                raise NormalizationError(
                    f"biabduction failed between `ens {pend_ens}` and `req {item.state}`: {e}"
                ) from e
            rest = work[idx:]
            work = work[:idx] + apply_witness(witness, rest)
            pend_req = State(hstar(pend_req.heap, result.antiframe.heap),
                             pand(pend_req.pure, result.antiframe.pure))
            pend_ens = State(result.frame.heap, result.frame.pure, False)
            pinned |= state_vars(item.state)
            continue
        if isinstance(item, Ensure):
            pend_ens = State(hstar(pend_ens.heap, item.state.heap),
                             pand(pend_ens.pure, item.state.pure))
            pend_var = item.result
            pinned |= state_vars(item.state)
            if item.result != ANON:
                pinned.add(item.result)
            if obviously_false(fold_pure(pend_ens.pure)):
                pend_ens = State(HEmp(), PFalse())
                dead = True
            continue
        if isinstance(item, FnStage):
            pinned.add(item.fn)
            pinned.add(item.result)
            for a in item.args:
                pinned |= term_vars(a)
            seg_close(item)
            continue
        raise TypeError(item)
    if pend_var == ANON and segments and segments[-1].call is not None \
            and isinstance(pend_ens.heap, HEmp) and isinstance(pend_ens.pure, PTrue):
        # a flow ending in a call yields the call's result
        pend_var = segments[-1].call.result
    seg_close(None)
    return _postprocess(Flow(tuple(segments)), all_ex)


# ---------------------------------------------------------------------------
# Flow post-processing
# ---------------------------------------------------------------------------

def _flow_name_slots(flow: Flow) -> set[str]:
    out = set()
    for seg in flow.segments:
        if seg.ens_var != ANON:
            out.add(seg.ens_var)
        if seg.call is not None:
            out.add(seg.call.fn)
            out.add(seg.call.result)
    return out


def _binding_depth(flow: Flow) -> dict[str, int]:
    out: dict[str, int] = {}
    for i, seg in enumerate(flow.segments):
        for v in seg.ex:
            out[v] = i
        for v in seg.ex_ens:
            out[v] = i
    return out


def _flow_occurrences(flow: Flow, var: str) -> int:
    count = 0
    for seg in flow.segments:
        for d in (seg.req, seg.ens):
            if var in state_vars(d):
                count += 1
        if seg.call is not None:
            if seg.call.fn == var or seg.call.result == var:
                count += 1
            if any(var in term_vars(a) for a in seg.call.args):
                count += 1
        if seg.ens_var == var:
            count += 1
    return count


def _subst_segments(flow: Flow, mapping: dict) -> Flow:
    segs = []
    for seg in flow.segments:
        call = seg.call
        if call is not None:
            call = subst(call, mapping)
        new_req = subst_state(seg.req, mapping)
        new_ens = subst_state(seg.ens, mapping)
        ens_var = seg.ens_var
        got = mapping.get(ens_var)
        if isinstance(got, TVar):
            ens_var = got.name
        segs.append(FlowSegment(seg.ex, fold_state(new_req), seg.ex_ens, ens_var,
                                fold_state(new_ens), call))
    return Flow(tuple(segs))


def _postprocess(flow: Flow, all_ex: set[str]) -> Flow:
    depth = _binding_depth(flow)
    name_slots = _flow_name_slots(flow)

    changed = True
    rounds = 0
    while changed and rounds < 50:
        changed = False
        rounds += 1
        depth = _binding_depth(flow)
        name_slots = _flow_name_slots(flow)
        for i, seg in enumerate(flow.segments):
            for conj in conjuncts(seg.ens.pure):
                if not isinstance(conj, PEq):
                    continue
                pairs = [(conj.left, conj.right), (conj.right, conj.left)]
                done = False
                for v_t, t in pairs:
                    if not isinstance(v_t, TVar):
                        continue
                    v = v_t.name
                    if v not in depth or v in term_vars(t):
                        continue
                    if v in name_slots and not isinstance(t, TVar):
                        continue
                    tv = term_vars(t)
                    # witnesses come from bound variables and constants only;
                    # equations against free program variables stay visible
                    if not tv <= set(depth):
                        continue
                    if any(depth.get(w, -1) > depth[v] for w in tv):
                        continue
                    # drop the defining equation, then substitute the witness
                    new_pure = _remove_conjunct(seg.ens.pure, conj)
                    segs = list(flow.segments)
                    segs[i] = FlowSegment(seg.ex, seg.req, seg.ens_var,
                                          State(seg.ens.heap, new_pure), seg.call)
                    flow = _subst_segments(Flow(tuple(segs)), {v: t})
                    changed = True
                    done = True
                    break
                if done:
                    break
            if changed:
                break

    # unused binder elimination, and the req/ens slot split: a binder the
    # req mentions is fixed before the req, the rest are ens-side witnesses
    segs = []
    for seg in flow.segments:
        live = [v for v in (seg.ex + seg.ex_ens) if _flow_occurrences(flow, v) > 0]
        req_side = tuple(v for v in live if v in state_vars(seg.req))
        ens_side = tuple(v for v in live if v not in req_side)
        segs.append(FlowSegment(req_side, seg.req, ens_side, seg.ens_var, seg.ens, seg.call))
    return Flow(tuple(segs))


def _remove_conjunct(p: Pure, target: Pure) -> Pure:
    remaining = [c for c in conjuncts(p) if c != target]
    return pand(*remaining) if remaining else PTrue()


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def normalize_flows(s: Spec, budget: int = DEFAULT_BUDGET) -> list[Flow]:
    """The disjunction-of-flows normal form of ``s`` (intersection-free)."""
    supply = NameSupply(free_vars(s))
    budget_box = [budget]
    branches = _flatten(s, supply, budget_box)
    return [_fold_branch(b, supply, budget_box) for b in branches]


def _split_intersections(s: Spec) -> list[Spec]:
    if isinstance(s, Intersect):
        return _split_intersections(s.left) + _split_intersections(s.right)
    return [s]


def normalize(s: Spec, budget: int = DEFAULT_BUDGET) -> Spec:
    """Normal form: intersections outermost, then a disjunction of flows."""
    groups = _split_intersections(s)
    outs = []
    for g in groups:
        flows = normalize_flows(g, budget)
        specs = [f.to_spec() for f in flows]
        out = specs[0]
        for sp in specs[1:]:
            out = Disj(out, sp)
        outs.append(out)
    result = outs[0]
    for o in outs[1:]:
        result = Intersect(result, o)
    return result


def flows_of(s: Spec) -> list[Flow]:
    """Flow views of a (normalized or normalizable) intersection-free spec."""
    return normalize_flows(s)
