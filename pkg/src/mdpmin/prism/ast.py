"""AST for the supported guarded-command modeling language subset.

Expression nodes carry an optional source position that is excluded from
equality, so reparsing printed source yields equal ASTs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from ..errors import PrismParseError

Pos = Optional[tuple[int, int]]


@dataclass(frozen=True)
class IntLit:
    value: int
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class RatLit:
    """Decimal literal; only legal inside probability expressions."""

    value: Fraction
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BoolLit:
    value: bool
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Ident:
    name: str
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Unary:
    op: str  # '-' or '!'
    operand: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / = != < <= > >= & |
    left: "Expr"
    right: "Expr"
    pos: Pos = field(default=None, compare=False, repr=False)


Expr = Union[IntLit, RatLit, BoolLit, Ident, Unary, Binary]


@dataclass(frozen=True)
class Constant:
    name: str
    type: str  # 'int' | 'bool'
    value: Optional[Expr]  # None: parameter, bound at instantiation

    @property
    def is_parameter(self) -> bool:
        return self.value is None


@dataclass(frozen=True)
class VariableDecl:
    name: str
    lower: Expr
    upper: Expr
    init: Expr
    is_bool: bool = False
    parametric: bool = False  # upper bound mentions a parameter (transitively)


@dataclass(frozen=True)
class Assignment:
    var: str
    expr: Expr


@dataclass(frozen=True)
class Update:
    prob: Optional[Expr]  # None: probability 1 (single-update command)
    assignments: tuple[Assignment, ...]  # empty: no change ("true")


@dataclass(frozen=True)
class Command:
    action: Optional[str]
    guard: Expr
    updates: tuple[Update, ...]


@dataclass(frozen=True)
class Module:
    name: str
    variables: tuple[VariableDecl, ...]
    commands: tuple[Command, ...]


@dataclass(frozen=True)
class LabelDef:
    name: str
    expr: Expr


@dataclass(frozen=True)
class Program:
    model_type: str
    constants: tuple[Constant, ...]
    globals: tuple[VariableDecl, ...]
    modules: tuple[Module, ...]
    labels: tuple[LabelDef, ...]

    @property
    def parameters(self) -> tuple[Constant, ...]:
        return tuple(c for c in self.constants if c.is_parameter)

    def variables(self) -> tuple[tuple[VariableDecl, Optional[str]], ...]:
        """All variables in declaration order, paired with their owning module (None: global)."""
        out = [(v, None) for v in self.globals]
        for m in self.modules:
            out.extend((v, m.name) for v in m.variables)
        return tuple(out)

    def variable_names(self) -> tuple[str, ...]:
        return tuple(v.name for v, _ in self.variables())

    def label(self, name: str) -> LabelDef:
        for lab in self.labels:
            if lab.name == name:
                return lab
        raise PrismParseError(f"no label named {name!r}")


# -- identifier utilities ----------------------------------------------------


def identifiers_in(expr: Expr) -> set[str]:
    if isinstance(expr, Ident):
        return {expr.name}
    if isinstance(expr, Unary):
        return identifiers_in(expr.operand)
    if isinstance(expr, Binary):
        return identifiers_in(expr.left) | identifiers_in(expr.right)
    return set()


def substitute(expr: Expr, mapping: dict[str, str]) -> Expr:
    """Rename identifiers through `mapping`; unmapped names pass through."""
    if isinstance(expr, Ident):
        return Ident(mapping.get(expr.name, expr.name), expr.pos)
    if isinstance(expr, Unary):
        return Unary(expr.op, substitute(expr.operand, mapping), expr.pos)
    if isinstance(expr, Binary):
        return Binary(expr.op, substitute(expr.left, mapping), substitute(expr.right, mapping), expr.pos)
    return expr


# -- printing ----------------------------------------------------------------


def _rat_to_decimal(value: Fraction) -> str:
    """Exact decimal text for a fraction whose denominator is 2^a * 5^b."""
    den = value.denominator
    a = b = 0
    while den % 2 == 0:
        den //= 2
        a += 1
    while den % 5 == 0:
        den //= 5
        b += 1
    if den != 1:
        raise ValueError(f"{value} has no finite decimal form")
    k = max(a, b)
    digits = value.numerator * 10**k // value.denominator
    text = str(abs(digits)).rjust(k + 1, "0")
    sign = "-" if digits < 0 else ""
    if k == 0:
        return f"{sign}{text}"
    return f"{sign}{text[:-k]}.{text[-k:]}"


def expr_to_source(expr: Expr) -> str:
    if isinstance(expr, IntLit):
        return str(expr.value)
    if isinstance(expr, RatLit):
        return _rat_to_decimal(expr.value)
    if isinstance(expr, BoolLit):
        return "true" if expr.value else "false"
    if isinstance(expr, Ident):
        return expr.name
    if isinstance(expr, Unary):
        return f"{expr.op}{_wrap(expr.operand)}"
    if isinstance(expr, Binary):
        return f"({expr_to_source(expr.left)} {expr.op} {expr_to_source(expr.right)})"
    raise TypeError(f"not an expression: {expr!r}")


def _wrap(expr: Expr) -> str:
    text = expr_to_source(expr)
    if isinstance(expr, (Binary, Unary)):
        return text if text.startswith("(") else f"({text})"
    return text


def _variable_to_source(v: VariableDecl) -> str:
    if v.is_bool:
        init = "" if v.init == BoolLit(False) else f" init {expr_to_source(v.init)}"
        return f"{v.name} : bool{init};"
    init = f" init {expr_to_source(v.init)}"
    return f"{v.name} : [{expr_to_source(v.lower)}..{expr_to_source(v.upper)}]{init};"


def _command_to_source(c: Command) -> str:
    action = c.action or ""
    updates = []
    for u in c.updates:
        if u.assignments:
            body = " & ".join(f"({a.var}'={expr_to_source(a.expr)})" for a in u.assignments)
        else:
            body = "true"
        if u.prob is not None:
            body = f"{expr_to_source(u.prob)} : {body}"
        updates.append(body)
    return f"[{action}] {expr_to_source(c.guard)} -> {' + '.join(updates)};"


def program_to_source(p: Program) -> str:
    """Render back to source; reparsing yields an equal AST (renamings stay expanded)."""
    lines = [p.model_type, ""]
    for c in p.constants:
        if c.value is None:
            lines.append(f"const {c.type} {c.name};")
        else:
            lines.append(f"const {c.type} {c.name} = {expr_to_source(c.value)};")
    if p.constants:
        lines.append("")
    for v in p.globals:
        lines.append(f"global {_variable_to_source(v)}")
    if p.globals:
        lines.append("")
    for m in p.modules:
        lines.append(f"module {m.name}")
        for v in m.variables:
            lines.append(f"  {_variable_to_source(v)}")
        for c in m.commands:
            lines.append(f"  {_command_to_source(c)}")
        lines.append("endmodule")
        lines.append("")
    for lab in p.labels:
        lines.append(f'label "{lab.name}" = {expr_to_source(lab.expr)};')
    return "\n".join(lines).rstrip() + "\n"
