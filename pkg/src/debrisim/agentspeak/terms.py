"""Logic terms, substitutions and unification for the AgentSpeak subset."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

ATOM_RE = re.compile(r"[a-z][A-Za-z0-9_]*\Z")
VAR_RE = re.compile(r"[A-Z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Atom:
    name: str

    def __post_init__(self):
        if not ATOM_RE.match(self.name):
            raise ValueError(f"invalid atom name {self.name!r}")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        if not VAR_RE.match(self.name):
            raise ValueError(f"invalid variable name {self.name!r}")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    def __str__(self) -> str:
        return format_number(self.value)


@dataclass(frozen=True)
class Str:
    text: str

    def __str__(self) -> str:
        escaped = self.text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'


@dataclass(frozen=True)
class Struct:
    functor: str
    args: Tuple["Term", ...]

    def __post_init__(self):
        if not ATOM_RE.match(self.functor):
            raise ValueError(f"invalid functor {self.functor!r}")
        object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ValueError("arity-0 structures must be atoms")

    def __str__(self) -> str:
        return f"{self.functor}({','.join(str(a) for a in self.args)})"


Term = Union[Atom, Var, Num, Str, Struct]
Substitution = Dict[str, Term]


def format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def struct(functor: str, *args) -> Term:
    """Build a term from Python values; strings starting upper-case become vars."""
    if not args:
        return Atom(functor)
    return Struct(functor, tuple(_coerce(a) for a in args))


def _coerce(value) -> Term:
    if isinstance(value, (Atom, Var, Num, Str, Struct)):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not terms")
    if isinstance(value, (int, float)):
        return Num(value)
    if isinstance(value, str):
        return Var(value) if VAR_RE.match(value) else Atom(value)
    raise TypeError(f"cannot convert {value!r} to a term")


def functor_key(term: Term) -> Optional[Tuple[str, int]]:
    if isinstance(term, Atom):
        return (term.name, 0)
    if isinstance(term, Struct):
        return (term.functor, len(term.args))
    return None


def is_ground(term: Term) -> bool:
    if isinstance(term, Var):
        return False
    if isinstance(term, Struct):
        return all(is_ground(a) for a in term.args)
    return True


def variables(term: Term) -> list:
    """Variable names in first-occurrence order."""
    seen: list = []

    def walk(t):
        if isinstance(t, Var):
            if t.name not in seen:
                seen.append(t.name)
        elif isinstance(t, Struct):
            for a in t.args:
                walk(a)

    walk(term)
    return seen


def walk(term: Term, s: Substitution) -> Term:
    while isinstance(term, Var) and term.name in s:
        term = s[term.name]
    return term


def substitute(term: Term, s: Substitution) -> Term:
    term = walk(term, s)
    if isinstance(term, Struct):
        return Struct(term.functor, tuple(substitute(a, s) for a in term.args))
    return term


def _occurs(name: str, term: Term, s: Substitution) -> bool:
    term = walk(term, s)
    if isinstance(term, Var):
        return term.name == name
    if isinstance(term, Struct):
        return any(_occurs(name, a, s) for a in term.args)
    return False


def unify(a: Term, b: Term, s: Optional[Substitution] = None) -> Optional[Substitution]:
    """Most general unifier of ``a`` and ``b`` extending ``s``, or None.

    The input substitution is never mutated. Numbers compare exactly.
    Bindings are kept in triangular form; use :func:`resolve` for an
    idempotent (fully applied) view.
    """
    s = dict(s) if s else {}
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        x = walk(x, s)
        y = walk(y, s)
        if x == y:
            continue
        if isinstance(x, Var):
            if _occurs(x.name, y, s):
                return None
            s[x.name] = y
        elif isinstance(y, Var):
            if _occurs(y.name, x, s):
                return None
            s[y.name] = x
        elif isinstance(x, Struct) and isinstance(y, Struct):
            if x.functor != y.functor or len(x.args) != len(y.args):
                return None
            stack.extend(reversed(list(zip(x.args, y.args))))
        else:
            return None
    return s


def resolve(s: Substitution) -> Substitution:
    """Fully apply a triangular substitution to its own range."""
    return {name: substitute(value, s) for name, value in s.items()}
