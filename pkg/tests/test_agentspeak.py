import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from debrisim.agentspeak import (
    AgentProgram,
    AgentState,
    Atom,
    ContractViolation,
    EvaluationError,
    LexError,
    Num,
    ParseError,
    Plan,
    Str,
    Struct,
    TriggerEvent,
    TriggerKind,
    Var,
    canonical_source,
    check_context,
    format_program,
    parse_program,
    post_event,
    reasoning_step,
    resolve_action,
    struct,
    substitute,
    unify,
)
from debrisim.agentspeak.syntax import (
    AchieveGoal,
    Action,
    AddBelief,
    DelBelief,
    Literal,
    Relation,
)
from debrisim.agentspeak.syntax import TestGoal as QueryGoal
from debrisim.agentspeak.terms import is_ground, variables

MASTER = parse_program(canonical_source("master"))
SLAVE = parse_program(canonical_source("slave"))


def add(term):
    return TriggerEvent(TriggerKind.BELIEF_ADD, term)


def achieve(term):
    return TriggerEvent(TriggerKind.GOAL_ADD, term)


# -- parser -------------------------------------------------------------------


def test_single_belief():
    prog = parse_program("ready.")
    assert prog.initial_beliefs == [Atom("ready")]
    assert prog.initial_goals == [] and prog.plans == []


def test_goal_and_plan():
    prog = parse_program("!start.\n+!start : true <- listen_gs.")
    assert prog.initial_goals == [Atom("start")]
    assert prog.plans == [Plan(achieve(Atom("start")), (), (Action("listen_gs"),))]


def test_missing_period_is_parse_error_at_end():
    src = "+!g <- a"
    with pytest.raises(ParseError) as info:
        parse_program(src)
    assert info.value.line == 1 and info.value.column == len(src) + 1


def test_lex_error_position():
    with pytest.raises(LexError) as info:
        parse_program("ok.\n  $bad.")
    assert (info.value.line, info.value.column) == (2, 3)


def test_non_ground_initial_belief_rejected():
    with pytest.raises(ParseError):
        parse_program("pos(X).")


def test_unbound_relation_variable_rejected():
    with pytest.raises(ParseError):
        parse_program("+go : Y > 0 <- act.")


def test_all_body_step_kinds():
    prog = parse_program('+e(X) : b(X) & not c & X >= -2 <- act(X, "s"); !g(X); ?q(Y); +r(Y); -b(X).')
    plan = prog.plans[0]
    assert plan.context == (
        Literal(struct("b", "X")),
        Literal(Atom("c"), negated=True),
        Relation(">=", Var("X"), Num(-2)),
    )
    assert [type(s) for s in plan.body] == [Action, AchieveGoal, QueryGoal, AddBelief, DelBelief]
    assert plan.body[0].args == (Var("X"), Str("s"))


def test_comments_ignored():
    prog = parse_program("// one\n/* two\nlines */ a. // tail\n")
    assert prog.initial_beliefs == [Atom("a")]


def test_canonical_programs_name_the_protocol_actions():
    assert {"listen_gs", "announce_perform_mission", "perform_mission"} <= MASTER.actions()
    assert {"listen_server", "perform_mission"} <= SLAVE.actions()


# generated programs for the round-trip property

NAMES = st.from_regex(r"[a-z][a-z0-9_]{0,5}", fullmatch=True).filter(lambda s: s not in ("not", "true"))
VARS = st.from_regex(r"[A-Z][A-Za-z0-9]{0,4}", fullmatch=True).map(Var)
NUMS = st.one_of(
    st.integers(-10**6, 10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
).map(Num)
STRS = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=8).map(Str)


def ground_terms():
    base = st.one_of(NAMES.map(Atom), NUMS, STRS)
    return st.recursive(
        base,
        lambda kids: st.builds(lambda f, a: Struct(f, tuple(a)), NAMES, st.lists(kids, min_size=1, max_size=3)),
        max_leaves=6,
    )


def terms():
    base = st.one_of(NAMES.map(Atom), NUMS, STRS, VARS)
    return st.recursive(
        base,
        lambda kids: st.builds(lambda f, a: Struct(f, tuple(a)), NAMES, st.lists(kids, min_size=1, max_size=3)),
        max_leaves=6,
    )


def literals(inner):
    return st.one_of(
        NAMES.map(Atom),
        st.builds(lambda f, a: Struct(f, tuple(a)), NAMES, st.lists(inner, min_size=1, max_size=3)),
    )


@st.composite
def plans(draw):
    trigger = TriggerEvent(draw(st.sampled_from(list(TriggerKind))), draw(literals(terms())))
    context = []
    for _ in range(draw(st.integers(0, 3))):
        context.append(Literal(draw(literals(terms())), draw(st.booleans())))
    bound = set()
    bound.update(variables(trigger.content))
    for c in context:
        if not c.negated:
            bound.update(variables(c.term))
    if draw(st.booleans()):
        pool = [Var(v) for v in sorted(bound)] + [draw(NUMS)]
        op = draw(st.sampled_from(["==", "\\==", "<=", ">=", "<", ">"]))
        context.append(Relation(op, draw(st.sampled_from(pool)), draw(NUMS)))
    step_kinds = st.sampled_from([Action, AchieveGoal, QueryGoal, AddBelief, DelBelief])
    body = []
    for _ in range(draw(st.integers(0, 4))):
        kind = draw(step_kinds)
        lit = draw(literals(terms()))
        if kind is Action:
            body.append(Action(lit.name) if isinstance(lit, Atom) else Action(lit.functor, lit.args))
        else:
            body.append(kind(lit))
    return Plan(trigger, tuple(context), tuple(body))


@st.composite
def programs(draw):
    return AgentProgram(
        initial_beliefs=draw(st.lists(literals(ground_terms()), max_size=3)),
        initial_goals=draw(st.lists(literals(terms()), max_size=2)),
        plans=draw(st.lists(plans(), max_size=4)),
    )


@settings(max_examples=120, deadline=None)
@given(programs())
def test_parse_print_round_trip(prog):
    once = parse_program(format_program(prog))
    assert once == prog
    assert parse_program(format_program(once)) == once


@pytest.mark.parametrize("role", ["master", "slave"])
def test_canonical_round_trip(role):
    prog = parse_program(canonical_source(role))
    assert parse_program(format_program(prog)) == prog


# -- unification ----------------------------------------------------------------


def test_unify_examples():
    assert unify(struct("mission", "X"), struct("mission", 5), {}) == {"X": Num(5)}
    assert unify(Atom("a"), Atom("b"), {}) is None
    assert unify(struct("f", "X", "X"), struct("f", 1, 2), {}) is None


def test_occurs_check():
    assert unify(Var("X"), struct("f", "X"), {}) is None


def test_numbers_compare_exactly():
    assert unify(Num(1), Num(1.0)) == {}
    assert unify(Num(0.1 + 0.2), Num(0.3)) is None


def test_unify_does_not_mutate_input():
    s = {"Y": Num(1)}
    out = unify(Var("X"), Var("Y"), s)
    assert s == {"Y": Num(1)} and out is not None and "X" in out


@settings(max_examples=300, deadline=None)
@given(terms(), terms())
def test_unify_symmetric_and_sound(a, b):
    ab, ba = unify(a, b, {}), unify(b, a, {})
    assert (ab is None) == (ba is None)
    for s in (ab, ba):
        if s is not None:
            assert substitute(a, s) == substitute(b, s)
            # applying a fully resolved substitution twice changes nothing
            once = substitute(a, s)
            assert substitute(once, s) == once


@settings(max_examples=200, deadline=None)
@given(terms())
def test_unify_with_self(a):
    assert unify(a, a, {}) == {}


# -- context checks ---------------------------------------------------------------


def _ctx(text):
    return parse_program(f"+e : {text} <- true.").plans[0].context


def test_context_true():
    assert check_context((), {}, {}) == {}


def test_context_binds_then_compares():
    beliefs = {struct("speed", 40): None}
    assert check_context(_ctx("speed(S) & S > 0"), beliefs, {}) == {"S": Num(40)}


def test_context_no_match():
    assert check_context(_ctx("speed(S)"), {}, {}) is None


def test_context_backtracks_over_beliefs():
    beliefs = {struct("speed", -1): None, struct("speed", 7): None}
    assert check_context(_ctx("speed(S) & S > 0"), beliefs, {}) == {"S": Num(7)}


def test_context_negation():
    assert check_context(_ctx("not busy"), {}, {}) == {}
    assert check_context(_ctx("not busy"), {Atom("busy"): None}, {}) is None


def test_unbound_relation_is_evaluation_error():
    with pytest.raises(EvaluationError):
        check_context((Relation(">", Var("Q"), Num(0)),), {}, {})


# -- events and the reasoning cycle -------------------------------------------------


def test_post_belief_add():
    state = post_event(AgentState(), add(struct("mission", 40, 1500)))
    assert state.beliefs == [struct("mission", 40, 1500)]
    assert [e.trigger for e in state.event_queue] == [add(struct("mission", 40, 1500))]


def test_post_belief_add_twice_is_idempotent():
    state = AgentState()
    post_event(state, add(Atom("b")))
    post_event(state, add(Atom("b")))
    assert state.beliefs == [Atom("b")] and len(state.event_queue) == 1


def test_delete_absent_belief_is_noop():
    state = post_event(AgentState(), TriggerEvent(TriggerKind.BELIEF_DEL, Atom("b")))
    assert state.beliefs == [] and not state.event_queue


def test_non_ground_belief_rejected():
    with pytest.raises(ContractViolation):
        post_event(AgentState(), add(struct("p", "X")))


def test_start_goal_requests_listen_gs():
    state = post_event(AgentState(), achieve(Atom("start")))
    state, request = reasoning_step(state, MASTER)
    assert request is not None and request.name == "listen_gs" and request.args == ()
    assert state.pending_action is not None


def test_quiescent_step():
    state = AgentState()
    state2, request = reasoning_step(state, MASTER)
    assert request is None and state2.quiescent()


def test_unknown_event_dropped():
    state = post_event(AgentState(), add(Atom("unknown_belief")))
    state, request = reasoning_step(state, MASTER)
    assert request is None and state.diagnostics.no_plan == 1


def test_step_is_noop_while_action_pending():
    state = post_event(AgentState(), achieve(Atom("start")))
    state, _ = reasoning_step(state, MASTER)
    post_event(state, add(Atom("unknown_belief")))
    cycles = state.diagnostics.cycles
    state, request = reasoning_step(state, MASTER)
    assert request is None and state.diagnostics.cycles == cycles and len(state.event_queue) == 1


def _run(state, program, limit=50):
    for _ in range(limit):
        state, request = reasoning_step(state, program)
        if request is not None or state.quiescent():
            return state, request
    raise AssertionError("no progress")


def test_resolve_listen_gs_posts_mission_and_announces():
    state = post_event(AgentState(), achieve(Atom("start")))
    state, _ = reasoning_step(state, MASTER)
    resolve_action(state, struct("mission", 40, 1500))
    assert [e.trigger for e in state.event_queue] == [add(struct("mission", 40, 1500))]
    state, request = _run(state, MASTER)
    assert str(request) == "announce_perform_mission(40,1500)"


def test_slave_timeout_retries_poll():
    state = post_event(AgentState(), achieve(Atom("poll")))
    state, request = _run(state, SLAVE)
    assert request.name == "listen_server"
    resolve_action(state, Atom("timeout"))
    state, request = _run(state, SLAVE)
    assert request.name == "listen_server"
    assert Atom("timeout") not in state.belief_base


def test_resolve_without_pending_action():
    with pytest.raises(ContractViolation):
        resolve_action(AgentState(), Atom("ok"))


def test_result_binds_trailing_variable():
    prog = parse_program("!go.\n+!go <- sense(V); +seen(V).")
    state = post_event(AgentState(), achieve(Atom("go")))
    state, request = _run(state, prog)
    assert request.name == "sense" and request.args == (Var(request.args[0].name),)
    resolve_action(state, Num(3))
    state, request = _run(state, prog)
    assert struct("seen", 3) in state.belief_base


def test_subgoal_binds_caller_variable():
    prog = parse_program("+!get(X) <- ?val(X).\n+!top <- !get(Y); +got(Y).\nval(9).")
    state = AgentState()
    for b in prog.initial_beliefs:
        state.belief_base[b] = None
    post_event(state, achieve(Atom("top")))
    state, _ = _run(state, prog)
    assert struct("got", 9) in state.belief_base


def test_missing_subgoal_plan_drops_intention():
    prog = parse_program("+!top <- !nothing; act.")
    state = post_event(AgentState(), achieve(Atom("top")))
    state, request = _run(state, prog)
    assert request is None
    assert state.diagnostics.no_plan == 1 and state.diagnostics.dropped_intentions == 1


def test_first_applicable_plan_wins():
    prog = parse_program("+e : false_cond <- a1.\n+e <- a2.\n+e <- a3.")
    state = post_event(AgentState(), add(Atom("e")))
    _, request = _run(state, prog)
    assert request.name == "a2"


def test_round_robin_between_intentions():
    prog = parse_program("+a <- +x1; +x2.\n+b <- +y1; +y2.")
    state = AgentState()
    post_event(state, add(Atom("a")))
    post_event(state, add(Atom("b")))
    order = []
    for _ in range(12):
        before = set(state.belief_base)
        state, _ = reasoning_step(state, prog)
        order += [str(b) for b in state.belief_base if b not in before]
    assert order == ["x1", "y1", "x2", "y2"]


def _trace(program, results, goal):
    state = post_event(AgentState(), achieve(Atom(goal)))
    out = []
    for result in results:
        state, request = _run(state, program)
        out.append(str(request))
        resolve_action(state, result)
    state, request = _run(state, program)
    out.append(str(request))
    return out, [str(b) for b in state.beliefs]


def test_reasoning_is_deterministic():
    results = [struct("mission", 40, 1500), struct("scheduled", 665), Atom("ok")]
    assert _trace(MASTER, results, "start") == _trace(MASTER, results, "start")


def test_master_full_cycle_leaves_clean_beliefs():
    actions, beliefs = _trace(MASTER, [struct("mission", 40, 1500), struct("scheduled", 665), Atom("ok")], "start")
    assert actions == ["listen_gs", "announce_perform_mission(40,1500)", "perform_mission(665,40,1500)", "None"]
    assert beliefs == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["mission", "pending", "timeout", "ok"]), max_size=8))
def test_belief_base_stays_ground(choices):
    state = AgentState()
    post_event(state, add(struct("poll_interval", 100)))
    post_event(state, achieve(Atom("poll")))
    results = {
        "mission": struct("mission", 40, 1500, 665),
        "pending": Atom("pending"),
        "timeout": Atom("timeout"),
        "ok": Atom("ok"),
    }
    for choice in choices:
        state, request = _run(state, SLAVE)
        assert all(is_ground(b) for b in state.belief_base)
        if request is None:
            break
        resolve_action(state, results[choice])
