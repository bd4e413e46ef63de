"""Reasoning cycle for the AgentSpeak subset.

Selection rules are fixed so runs are reproducible: events are taken FIFO,
the first applicable plan in source order wins, and runnable intentions
are served round-robin, one body step per cycle.

External actions are asynchronous. ``reasoning_step`` hands back an
:class:`ActionRequest` and blocks the whole agent until the host calls
``resolve_action`` with the outcome. The outcome is either bound to the
action's trailing unbound variable, or (when there is none) added to the
belief base as a percept; the atom ``ok`` carries no information and is
discarded.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterator, List, Optional, Tuple

from .syntax import (
    AchieveGoal,
    Action,
    AddBelief,
    AgentProgram,
    Condition,
    DelBelief,
    Literal,
    Plan,
    Relation,
    TestGoal,
    TriggerEvent,
    TriggerKind,
)
from .terms import (
    Atom,
    Num,
    Struct,
    Substitution,
    Term,
    Var,
    is_ground,
    substitute,
    unify,
)

OK = Atom("ok")


class EvaluationError(RuntimeError):
    """A relational expression could not be evaluated."""


class ContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class Event:
    trigger: TriggerEvent
    intention: Optional[int] = None


@dataclass(frozen=True)
class ActionRequest:
    name: str
    args: Tuple[Term, ...]
    intention: int

    @property
    def term(self) -> Term:
        return Struct(self.name, self.args) if self.args else Atom(self.name)

    def __str__(self) -> str:
        return str(self.term)


@dataclass
class Frame:
    plan: Plan
    subst: Substitution
    goal: Optional[Term] = None  # the subgoal term as posted by the parent frame
    pc: int = 0

    @property
    def finished(self) -> bool:
        return self.pc >= len(self.plan.body)


@dataclass
class Intention:
    id: int
    stack: List[Frame] = field(default_factory=list)
    waiting: bool = False


@dataclass
class PendingAction:
    request: ActionRequest
    result_var: Optional[str] = None


@dataclass
class Diagnostics:
    no_plan: int = 0
    test_failed: int = 0
    dropped_intentions: int = 0
    cycles: int = 0


@dataclass
class AgentState:
    belief_base: Dict[Term, None] = field(default_factory=dict)
    event_queue: Deque[Event] = field(default_factory=deque)
    intentions: List[Intention] = field(default_factory=list)
    pending_action: Optional[PendingAction] = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    next_id: int = 1
    rr: int = 0

    @property
    def beliefs(self) -> List[Term]:
        return list(self.belief_base)

    def quiescent(self) -> bool:
        return (
            self.pending_action is None
            and not self.event_queue
            and not any(not i.waiting for i in self.intentions)
        )


# -- context evaluation -------------------------------------------------------

def _compare(op: str, left: Term, right: Term) -> bool:
    if op == "==":
        return left == right
    if op == "\\==":
        return left != right
    if not (isinstance(left, Num) and isinstance(right, Num)):
        raise EvaluationError(f"cannot order non-numeric terms {left} {op} {right}")
    a, b = left.value, right.value
    return {"<": a < b, ">": a > b, "<=": a <= b, ">=": a >= b}[op]


def _evaluate(rel: Relation, s: Substitution) -> bool:
    left, right = substitute(rel.left, s), substitute(rel.right, s)
    if not (is_ground(left) and is_ground(right)):
        raise EvaluationError(f"unbound variable in {rel}")
    return _compare(rel.op, left, right)


def _solve(conditions, beliefs, s: Substitution) -> Iterator[Substitution]:
    if not conditions:
        yield s
        return
    first, rest = conditions[0], conditions[1:]
    if isinstance(first, Relation):
        if _evaluate(first, s):
            yield from _solve(rest, beliefs, s)
        return
    if first.negated:
        if not any(unify(first.term, b, s) is not None for b in beliefs):
            yield from _solve(rest, beliefs, s)
        return
    for belief in beliefs:
        s2 = unify(first.term, belief, s)
        if s2 is not None:
            yield from _solve(rest, beliefs, s2)


def check_context(
    conditions, belief_base, s: Optional[Substitution] = None
) -> Optional[Substitution]:
    """First substitution satisfying every condition, searching left to right
    and beliefs in insertion order. An empty condition list is ``true``."""
    return next(_solve(tuple(conditions), list(belief_base), dict(s or {})), None)


# -- events ------------------------------------------------------------------

def post_event(state: AgentState, trigger: TriggerEvent, intention: Optional[int] = None) -> AgentState:
    """Queue an event, updating the belief base first for belief triggers.

    Adding a belief that is already held, or deleting one that is not,
    changes nothing and queues nothing.
    """
    kind, content = trigger.kind, trigger.content
    if kind is TriggerKind.BELIEF_ADD:
        if not is_ground(content):
            raise ContractViolation(f"belief {content} is not ground")
        if content in state.belief_base:
            return state
        state.belief_base[content] = None
    elif kind is TriggerKind.BELIEF_DEL:
        if content not in state.belief_base:
            return state
        del state.belief_base[content]
    state.event_queue.append(Event(trigger, intention))
    return state


def _rename(plan: Plan, suffix: str) -> Plan:
    """Standardize plan variables apart for one plan instance."""
    names: Dict[str, Term] = {}

    def fresh(t: Term) -> Term:
        if isinstance(t, Var):
            return names.setdefault(t.name, Var(f"{t.name}__{suffix}"))
        if isinstance(t, Struct):
            return Struct(t.functor, tuple(fresh(a) for a in t.args))
        return t

    def cond(c: Condition) -> Condition:
        if isinstance(c, Relation):
            return Relation(c.op, fresh(c.left), fresh(c.right))
        return Literal(fresh(c.term), c.negated)

    def step(b):
        if isinstance(b, Action):
            return Action(b.name, tuple(fresh(a) for a in b.args))
        if isinstance(b, (AchieveGoal, TestGoal)):
            return type(b)(fresh(b.goal))
        return type(b)(fresh(b.belief))

    return Plan(
        TriggerEvent(plan.trigger.kind, fresh(plan.trigger.content)),
        tuple(cond(c) for c in plan.context),
        tuple(step(b) for b in plan.body),
    )


def select_plan(program: AgentProgram, state: AgentState, trigger: TriggerEvent):
    """First plan in source order whose trigger unifies and context holds."""
    for plan in program.plans:
        if plan.trigger.kind is not trigger.kind:
            continue
        renamed = _rename(plan, str(state.next_id))
        s = unify(renamed.trigger.content, trigger.content, {})
        if s is None:
            continue
        s = check_context(renamed.context, state.belief_base, s)
        if s is not None:
            return renamed, s
    return None


# -- reasoning cycle -----------------------------------------------------------

def _find(state: AgentState, intention_id: int) -> Optional[Intention]:
    for it in state.intentions:
        if it.id == intention_id:
            return it
    return None


def _drop(state: AgentState, intention: Intention) -> None:
    state.intentions.remove(intention)
    state.diagnostics.dropped_intentions += 1


def _handle_event(program: AgentProgram, state: AgentState, event: Event) -> None:
    chosen = select_plan(program, state, event.trigger)
    parent = _find(state, event.intention) if event.intention is not None else None
    if chosen is None:
        state.diagnostics.no_plan += 1
        if parent is not None:
            _drop(state, parent)
        return
    plan, s = chosen
    state.next_id += 1
    frame = Frame(plan, s, goal=event.trigger.content if parent else None)
    if parent is not None:
        parent.stack.append(frame)
        parent.waiting = False
    else:
        state.intentions.append(Intention(state.next_id, [frame]))
        state.next_id += 1


def _pop_finished(intention: Intention) -> bool:
    """Pop completed frames, passing bindings back to callers.

    Returns False when the intention has nothing left to run."""
    while intention.stack and intention.stack[-1].finished:
        done = intention.stack.pop()
        if intention.stack and done.goal is not None:
            parent = intention.stack[-1]
            result = substitute(done.plan.trigger.content, done.subst)
            s = unify(done.goal, result, parent.subst)
            if s is not None:
                parent.subst = s
    return bool(intention.stack)


def _next_runnable(state: AgentState) -> Optional[Intention]:
    n = len(state.intentions)
    for k in range(n):
        idx = (state.rr + k) % n
        it = state.intentions[idx]
        if it.waiting:
            continue
        if not _pop_finished(it):
            continue
        state.rr = idx + 1
        return it
    return None


def _execute(state: AgentState, intention: Intention) -> Optional[ActionRequest]:
    frame = intention.stack[-1]
    step = frame.plan.body[frame.pc]
    frame.pc += 1
    s = frame.subst

    if isinstance(step, Action):
        args = tuple(substitute(a, s) for a in step.args)
        result_var = None
        if args and isinstance(args[-1], Var):
            result_var = args[-1].name
        request = ActionRequest(step.name, args, intention.id)
        state.pending_action = PendingAction(request, result_var)
        return request

    if isinstance(step, AchieveGoal):
        goal = substitute(step.goal, s)
        # tail call: a finished frame needs no continuation unless it must
        # pass bindings back to its caller
        if frame.finished and (len(intention.stack) == 1 or is_ground(substitute(frame.plan.trigger.content, s))):
            intention.stack.pop()
            _pop_finished(intention)
        intention.waiting = True
        post_event(state, TriggerEvent(TriggerKind.GOAL_ADD, goal), intention.id)
        return None

    if isinstance(step, TestGoal):
        goal = substitute(step.goal, s)
        for belief in state.belief_base:
            s2 = unify(goal, belief, s)
            if s2 is not None:
                frame.subst = s2
                return None
        state.diagnostics.test_failed += 1
        _drop(state, intention)
        return None

    if isinstance(step, AddBelief):
        belief = substitute(step.belief, s)
        if not is_ground(belief):
            raise ContractViolation(f"cannot add non-ground belief {belief}")
        post_event(state, TriggerEvent(TriggerKind.BELIEF_ADD, belief))
        return None

    if isinstance(step, DelBelief):
        pattern = substitute(step.belief, s)
        for belief in list(state.belief_base):
            s2 = unify(pattern, belief, s)
            if s2 is not None:
                frame.subst = s2
                post_event(state, TriggerEvent(TriggerKind.BELIEF_DEL, belief))
                break
        return None

    raise ContractViolation(f"unknown body step {step!r}")


def reasoning_step(state: AgentState, program: AgentProgram) -> Tuple[AgentState, Optional[ActionRequest]]:
    """Run one reasoning cycle. The state is updated in place and returned."""
    if state.pending_action is not None:
        return state, None
    state.diagnostics.cycles += 1
    if state.event_queue:
        _handle_event(program, state, state.event_queue.popleft())
    intention = _next_runnable(state)
    if intention is None:
        state.intentions = [i for i in state.intentions if i.stack or i.waiting]
        return state, None
    request = _execute(state, intention)
    state.intentions = [i for i in state.intentions if i.stack or i.waiting]
    return state, request


def resolve_action(state: AgentState, result: Term) -> AgentState:
    pending = state.pending_action
    if pending is None:
        raise ContractViolation("resolve_action called with no action in flight")
    state.pending_action = None
    intention = _find(state, pending.request.intention)
    if pending.result_var is not None:
        if intention is not None and intention.stack:
            frame = intention.stack[-1]
            s = unify(Var(pending.result_var), result, frame.subst)
            if s is None:
                _drop(state, intention)
            else:
                frame.subst = s
        return state
    if result != OK:
        post_event(state, TriggerEvent(TriggerKind.BELIEF_ADD, result))
    return state


class Agent:
    """A program bound to its runtime state."""

    def __init__(self, program: AgentProgram, name: str = "agent"):
        self.program = program
        self.name = name
        self.state = AgentState()

    def boot(self) -> None:
        for belief in self.program.initial_beliefs:
            self.state.belief_base[belief] = None
        self.post_initial_goals()

    def post_initial_goals(self) -> None:
        for goal in self.program.initial_goals:
            post_event(self.state, TriggerEvent(TriggerKind.GOAL_ADD, goal))

    def post(self, trigger: TriggerEvent) -> None:
        post_event(self.state, trigger)

    def step(self) -> Optional[ActionRequest]:
        _, request = reasoning_step(self.state, self.program)
        return request

    def resolve(self, result: Term) -> None:
        resolve_action(self.state, result)

    def run(self, max_cycles: int = 1000) -> Optional[ActionRequest]:
        """Cycle until an action is requested or nothing is left to do."""
        for _ in range(max_cycles):
            if self.state.pending_action is not None or self.state.quiescent():
                return None
            request = self.step()
            if request is not None:
                return request
        raise ContractViolation(f"{self.name}: no quiescence after {max_cycles} cycles")
