"""AgentSpeak subset: terms, parser and BDI reasoning cycle."""

from importlib import resources

from .interpreter import (
    ActionRequest,
    Agent,
    AgentState,
    ContractViolation,
    EvaluationError,
    check_context,
    post_event,
    reasoning_step,
    resolve_action,
)
from .syntax import (
    AgentProgram,
    LexError,
    ParseError,
    Plan,
    TriggerEvent,
    TriggerKind,
    format_program,
    parse_program,
)
from .terms import Atom, Num, Str, Struct, Term, Var, struct, substitute, unify


def canonical_source(role: str) -> str:
    """Source text of the bundled ``master`` or ``slave`` program."""
    return resources.files(__package__).joinpath("programs", f"{role}.asl").read_text()


__all__ = [
    "ActionRequest",
    "Agent",
    "AgentProgram",
    "AgentState",
    "Atom",
    "ContractViolation",
    "EvaluationError",
    "LexError",
    "Num",
    "ParseError",
    "Plan",
    "Str",
    "Struct",
    "Term",
    "TriggerEvent",
    "TriggerKind",
    "Var",
    "canonical_source",
    "check_context",
    "format_program",
    "parse_program",
    "post_event",
    "reasoning_step",
    "resolve_action",
    "struct",
    "substitute",
    "unify",
]
