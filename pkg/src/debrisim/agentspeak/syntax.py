"""AST, lexer, parser and printer for the AgentSpeak subset.

Grammar (informal)::

    program   := { belief "." | "!" literal "." | plan "." }
    plan      := trigger [ ":" context ] "<-" body
    trigger   := ("+" | "-") ["!"] literal
    context   := "true" | condition { "&" condition }
    condition := ["not"] literal | term relop term
    body      := "true" | step { ";" step }
    step      := "!" literal | "?" literal | "+" literal | "-" literal | literal

Comments are ``// ...`` to end of line and ``/* ... */``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import List, Tuple, Union

from .terms import Atom, Num, Str, Struct, Term, Var, is_ground, variables


class AgentSpeakSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class LexError(AgentSpeakSyntaxError):
    pass


class ParseError(AgentSpeakSyntaxError):
    def __init__(self, message: str, line: int, column: int, expected: Tuple[str, ...] = ()):
        super().__init__(message, line, column)
        self.expected = expected


class TriggerKind(enum.Enum):
    BELIEF_ADD = "+"
    BELIEF_DEL = "-"
    GOAL_ADD = "+!"
    GOAL_DEL = "-!"


@dataclass(frozen=True)
class TriggerEvent:
    kind: TriggerKind
    content: Term

    def __str__(self) -> str:
        return f"{self.kind.value}{self.content}"


@dataclass(frozen=True)
class Literal:
    term: Term
    negated: bool = False

    def __str__(self) -> str:
        return f"not {self.term}" if self.negated else str(self.term)


RELOPS = ("==", "\\==", "<=", ">=", "<", ">")


@dataclass(frozen=True)
class Relation:
    op: str
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


Condition = Union[Literal, Relation]


@dataclass(frozen=True)
class Action:
    name: str
    args: Tuple[Term, ...] = ()

    @property
    def term(self) -> Term:
        return Struct(self.name, self.args) if self.args else Atom(self.name)

    def __str__(self) -> str:
        return str(self.term)


@dataclass(frozen=True)
class AchieveGoal:
    goal: Term

    def __str__(self) -> str:
        return f"!{self.goal}"


@dataclass(frozen=True)
class TestGoal:
    goal: Term

    def __str__(self) -> str:
        return f"?{self.goal}"


@dataclass(frozen=True)
class AddBelief:
    belief: Term

    def __str__(self) -> str:
        return f"+{self.belief}"


@dataclass(frozen=True)
class DelBelief:
    belief: Term

    def __str__(self) -> str:
        return f"-{self.belief}"


BodyStep = Union[Action, AchieveGoal, TestGoal, AddBelief, DelBelief]


@dataclass(frozen=True)
class Plan:
    trigger: TriggerEvent
    context: Tuple[Condition, ...] = ()
    body: Tuple[BodyStep, ...] = ()

    def __str__(self) -> str:
        ctx = " & ".join(str(c) for c in self.context) if self.context else "true"
        body = "; ".join(str(b) for b in self.body) if self.body else "true"
        return f"{self.trigger} : {ctx} <- {body}."


@dataclass
class AgentProgram:
    initial_beliefs: List[Term] = field(default_factory=list)
    initial_goals: List[Term] = field(default_factory=list)
    plans: List[Plan] = field(default_factory=list)

    def actions(self) -> set:
        """Names of every action referenced by a plan body."""
        return {s.name for p in self.plans for s in p.body if isinstance(s, Action)}


# -- lexer -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<line_comment>//[^\n]*)
  | (?P<block_comment>/\*.*?\*/)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<atom>[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<punct><-|\\==|==|<=|>=|[<>.,():;&!?+\-])
    """,
    re.VERBOSE | re.DOTALL,
)

_ESCAPES = {"n": "\n", '"': '"', "\\": "\\"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(source: str) -> List[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            col = pos - line_start + 1
            if source.startswith("/*", pos):
                raise LexError("unterminated block comment", line, col)
            if source[pos] == '"':
                raise LexError("unterminated string", line, col)
            raise LexError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "line_comment", "block_comment"):
            if kind == "atom" and text in ("not", "true"):
                kind = text
            tokens.append(Token(kind, text, line, pos - line_start + 1))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unescape(body: str) -> str:
    out, i = [], 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            out.append(_ESCAPES.get(body[i + 1], body[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


# -- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.kind == "punct" and self.tok.text == text

    def fail(self, *expected: str):
        tok = self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(
            f"expected {' or '.join(expected)}, found {found}",
            tok.line,
            tok.column,
            expected,
        )

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(repr(text))
        tok = self.tok
        self.i += 1
        return tok

    def program(self) -> AgentProgram:
        prog = AgentProgram()
        while self.tok.kind != "eof":
            if self.at("+") or self.at("-"):
                prog.plans.append(self.plan())
            elif self.at("!"):
                self.i += 1
                prog.initial_goals.append(self.literal_term())
            else:
                start = self.tok
                belief = self.literal_term()
                if not is_ground(belief):
                    raise ParseError("initial belief must be ground", start.line, start.column)
                prog.initial_beliefs.append(belief)
            self.expect(".")
        return prog

    def plan(self) -> Plan:
        sign = self.tok.text
        self.i += 1
        goal = False
        if self.at("!"):
            goal = True
            self.i += 1
        start = self.tok
        content = self.literal_term()
        kind = {
            ("+", False): TriggerKind.BELIEF_ADD,
            ("-", False): TriggerKind.BELIEF_DEL,
            ("+", True): TriggerKind.GOAL_ADD,
            ("-", True): TriggerKind.GOAL_DEL,
        }[(sign, goal)]
        context: Tuple[Condition, ...] = ()
        if self.at(":"):
            self.i += 1
            context = self.context()
        if not self.at("<-"):
            self.fail("':'" if not context else "'&'", "'<-'")
        self.i += 1
        body = self.body()
        plan = Plan(TriggerEvent(kind, content), context, body)
        _check_relation_vars(plan, start)
        return plan

    def context(self) -> Tuple[Condition, ...]:
        if self.tok.kind == "true":
            self.i += 1
            return ()
        conds = [self.condition()]
        while self.at("&"):
            self.i += 1
            conds.append(self.condition())
        return tuple(conds)

    def condition(self) -> Condition:
        if self.tok.kind == "not":
            self.i += 1
            return Literal(self.literal_term(), negated=True)
        left = self.term()
        if self.tok.kind == "punct" and self.tok.text in RELOPS:
            op = self.tok.text
            self.i += 1
            return Relation(op, left, self.term())
        if not isinstance(left, (Atom, Struct)):
            self.fail("relational operator")
        return Literal(left)

    def body(self) -> Tuple[BodyStep, ...]:
        if self.tok.kind == "true":
            self.i += 1
            return ()
        steps = [self.step()]
        while self.at(";"):
            self.i += 1
            steps.append(self.step())
        return tuple(steps)

    def step(self) -> BodyStep:
        prefix = {"!": AchieveGoal, "?": TestGoal, "+": AddBelief, "-": DelBelief}
        if self.tok.kind == "punct" and self.tok.text in prefix:
            cls = prefix[self.tok.text]
            self.i += 1
            return cls(self.literal_term())
        term = self.literal_term()
        if isinstance(term, Atom):
            return Action(term.name)
        return Action(term.functor, term.args)

    def literal_term(self) -> Term:
        if self.tok.kind != "atom":
            self.fail("identifier")
        return self.term()

    def term(self) -> Term:
        tok = self.tok
        if tok.kind == "atom":
            self.i += 1
            if self.at("("):
                self.i += 1
                args = [self.term()]
                while self.at(","):
                    self.i += 1
                    args.append(self.term())
                self.expect(")")
                return Struct(tok.text, tuple(args))
            return Atom(tok.text)
        if tok.kind == "var":
            self.i += 1
            return Var(tok.text)
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "str":
            self.i += 1
            return Str(_unescape(tok.text[1:-1]))
        if self.at("-") and self.peek().kind == "num":
            self.i += 2
            return Num(-float(self.tokens[self.i - 1].text))
        self.fail("term")


def _check_relation_vars(plan: Plan, start: Token) -> None:
    bound = set(variables(plan.trigger.content))
    for cond in plan.context:
        if isinstance(cond, Literal):
            if not cond.negated:
                bound.update(variables(cond.term))
            continue
        free = (set(variables(cond.left)) | set(variables(cond.right))) - bound
        if free:
            raise ParseError(
                f"unbound variable(s) {', '.join(sorted(free))} in relational expression",
                start.line,
                start.column,
            )


def parse_program(source: str) -> AgentProgram:
    """Parse AgentSpeak source text, preserving plan order."""
    return _Parser(tokenize(source)).program()


def format_program(program: AgentProgram) -> str:
    lines = [f"{b}." for b in program.initial_beliefs]
    lines += [f"!{g}." for g in program.initial_goals]
    lines += [str(p) for p in program.plans]
    return "\n".join(lines) + ("\n" if lines else "")
