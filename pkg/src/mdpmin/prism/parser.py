"""Lexer, recursive-descent parser, and static checks for the modeling subset.

Supported: `mdp` models, int/bool constants (valueless int constants are
parameters), bounded-int and bool variables, literal modules and module
renaming, unlabeled and multi-party synchronized commands, labels.  Anything
else in the source (formulas, rewards, other model types, init blocks, ...)
is rejected by name.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from ..errors import PrismParseError, PrismTypeError
from .ast import (
    Assignment,
    Binary,
    BoolLit,
    Command,
    Constant,
    Expr,
    Ident,
    IntLit,
    LabelDef,
    Module,
    Program,
    RatLit,
    Unary,
    Update,
    VariableDecl,
    identifiers_in,
    substitute,
)

KEYWORDS = {
    "mdp", "const", "int", "bool", "global", "module", "endmodule",
    "init", "label", "true", "false", "min", "max",
}

UNSUPPORTED_KEYWORDS = {
    "dtmc": "model type 'dtmc'",
    "ctmc": "model type 'ctmc'",
    "pta": "model type 'pta'",
    "probabilistic": "model type 'probabilistic'",
    "nondeterministic": "model type 'nondeterministic'",
    "double": "'double' constants",
    "formula": "'formula' definitions",
    "rewards": "'rewards' structures",
    "system": "'system' composition blocks",
    "player": "'player' definitions",
    "invariant": "'invariant' blocks",
    "clock": "'clock' variables",
}

SYMBOLS = ["->", "..", "!=", "<=", ">=", "[", "]", "(", ")", ";", ":", "'",
           "=", "<", ">", "+", "-", "*", "/", "&", "|", "!", ",", '"']


@dataclass(frozen=True)
class Token:
    kind: str  # 'ident' | 'int' | 'decimal' | 'string' | symbol text | 'eof'
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise PrismParseError("unterminated string", line, col)
            tokens.append(Token("string", text[i + 1 : j], line, col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            # A '..' range separator must not be eaten as a decimal point.
            if j < n and text[j] == "." and not text.startswith("..", j):
                j += 1
                if j >= n or not text[j].isdigit():
                    raise PrismParseError("malformed decimal literal", line, col)
                while j < n and text[j].isdigit():
                    j += 1
                tokens.append(Token("decimal", text[i:j], line, col))
            else:
                tokens.append(Token("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("ident", text[i:j], line, col))
            col += j - i
            i = j
            continue
        for sym in SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(Token(sym, sym, line, col))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise PrismParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def check(self, kind: str) -> bool:
        return self.peek().kind == kind

    def accept(self, kind: str) -> Optional[Token]:
        if self.check(kind):
            return self.advance()
        return None

    def expect(self, kind: str, what: str = "") -> Token:
        tok = self.peek()
        if tok.kind != kind:
            expected = what or f"{kind!r}"
            raise PrismParseError(
                f"expected {expected}, found {tok.text or tok.kind!r}", tok.line, tok.column
            )
        return self.advance()

    def keyword(self) -> Optional[str]:
        tok = self.peek()
        if tok.kind == "ident":
            return tok.text
        return None

    def expect_name(self, what: str) -> Token:
        tok = self.expect("ident", what)
        if tok.text in KEYWORDS or tok.text in UNSUPPORTED_KEYWORDS:
            raise PrismParseError(
                f"keyword {tok.text!r} cannot be used as {what}", tok.line, tok.column
            )
        return tok

    def reject_unsupported(self, tok: Token) -> None:
        if tok.text in UNSUPPORTED_KEYWORDS:
            raise PrismParseError(
                f"unsupported construct: {UNSUPPORTED_KEYWORDS[tok.text]}", tok.line, tok.column
            )

    # -- grammar -----------------------------------------------------------

    def parse_program(self) -> Program:
        tok = self.peek()
        self.reject_unsupported(tok)
        if not (tok.kind == "ident" and tok.text == "mdp"):
            raise PrismParseError("program must start with model type 'mdp'", tok.line, tok.column)
        self.advance()

        constants: list[Constant] = []
        globals_: list[VariableDecl] = []
        modules: list[Module] = []
        labels: list[LabelDef] = []
        while not self.check("eof"):
            tok = self.peek()
            self.reject_unsupported(tok)
            kw = self.keyword()
            if kw == "const":
                constants.append(self.parse_constant())
            elif kw == "global":
                self.advance()
                globals_.append(self.parse_variable_decl())
            elif kw == "module":
                modules.append(self.parse_module(modules))
            elif kw == "label":
                labels.append(self.parse_label())
            elif kw == "init":
                raise PrismParseError(
                    "unsupported construct: 'init ... endinit' blocks", tok.line, tok.column
                )
            else:
                raise PrismParseError(
                    f"expected declaration, found {tok.text or tok.kind!r}", tok.line, tok.column
                )
        program = Program(
            model_type="mdp",
            constants=tuple(constants),
            globals=tuple(globals_),
            modules=tuple(modules),
            labels=tuple(labels),
        )
        _check_program(program)
        return _mark_parametric(program)

    def parse_constant(self) -> Constant:
        self.advance()  # const
        tok = self.peek()
        self.reject_unsupported(tok)
        if self.keyword() == "int":
            self.advance()
            ctype = "int"
        elif self.keyword() == "bool":
            self.advance()
            ctype = "bool"
        else:
            raise PrismParseError(
                "constant needs a type ('int' or 'bool')", tok.line, tok.column
            )
        name = self.expect_name("constant name").text
        value = None
        if self.accept("="):
            value = self.parse_expr()
        elif ctype == "bool":
            tok = self.peek()
            raise PrismParseError(
                "bool constants cannot be parameters; give a value", tok.line, tok.column
            )
        self.expect(";")
        return Constant(name, ctype, value)

    def parse_variable_decl(self) -> VariableDecl:
        name_tok = self.expect_name("variable name")
        self.expect(":")
        if self.keyword() == "bool":
            self.advance()
            init: Expr = BoolLit(False)
            if self.keyword() == "init":
                self.advance()
                init = self.parse_expr()
            self.expect(";")
            return VariableDecl(name_tok.text, IntLit(0), IntLit(1), init, is_bool=True)
        self.expect("[", "'[' of variable range")
        lower = self.parse_expr()
        self.expect("..")
        upper = self.parse_expr()
        self.expect("]")
        init = lower
        if self.keyword() == "init":
            self.advance()
            init = self.parse_expr()
        self.expect(";")
        return VariableDecl(name_tok.text, lower, upper, init)

    def parse_module(self, earlier: list[Module]) -> Module:
        self.advance()  # module
        name = self.expect_name("module name").text
        if self.accept("="):
            return self.parse_renaming(name, earlier)
        variables: list[VariableDecl] = []
        commands: list[Command] = []
        while True:
            tok = self.peek()
            self.reject_unsupported(tok)
            if self.keyword() == "endmodule":
                self.advance()
                break
            if self.check("["):
                commands.append(self.parse_command())
            elif tok.kind == "ident":
                variables.append(self.parse_variable_decl())
            else:
                raise PrismParseError(
                    f"expected variable, command, or 'endmodule', found {tok.text or tok.kind!r}",
                    tok.line,
                    tok.column,
                )
        return Module(name, tuple(variables), tuple(commands))

    def parse_renaming(self, name: str, earlier: list[Module]) -> Module:
        src_tok = self.expect_name("source module name")
        source = next((m for m in earlier if m.name == src_tok.text), None)
        if source is None:
            raise PrismParseError(
                f"renamed module references unknown module {src_tok.text!r}",
                src_tok.line,
                src_tok.column,
            )
        self.expect("[")
        mapping: dict[str, str] = {}
        while True:
            old = self.expect_name("renamed identifier").text
            self.expect("=")
            new = self.expect_name("replacement identifier").text
            if old in mapping:
                raise PrismParseError(f"identifier {old!r} renamed twice")
            mapping[old] = new
            if not self.accept(","):
                break
        self.expect("]")
        tok = self.peek()
        if not (self.keyword() == "endmodule"):
            raise PrismParseError(
                "renamed module body must be empty", tok.line, tok.column
            )
        self.advance()

        missing = [v.name for v in source.variables if v.name not in mapping]
        if missing:
            raise PrismParseError(
                f"renaming of module {source.name!r} must map all its variables; "
                f"missing: {', '.join(missing)}"
            )
        variables = tuple(
            VariableDecl(
                mapping[v.name],
                substitute(v.lower, mapping),
                substitute(v.upper, mapping),
                substitute(v.init, mapping),
                is_bool=v.is_bool,
            )
            for v in source.variables
        )
        commands = tuple(
            Command(
                mapping.get(c.action, c.action) if c.action else None,
                substitute(c.guard, mapping),
                tuple(
                    Update(
                        substitute(u.prob, mapping) if u.prob is not None else None,
                        tuple(
                            Assignment(mapping.get(a.var, a.var), substitute(a.expr, mapping))
                            for a in u.assignments
                        ),
                    )
                    for u in c.updates
                ),
            )
            for c in source.commands
        )
        return Module(name, variables, commands)

    def parse_command(self) -> Command:
        self.expect("[")
        action = None
        if not self.check("]"):
            action = self.expect_name("action label").text
        self.expect("]")
        guard = self.parse_expr()
        self.expect("->")
        updates = [self.parse_update()]
        while self.accept("+"):
            updates.append(self.parse_update())
        self.expect(";")
        if len(updates) > 1 and any(u.prob is None for u in updates):
            raise PrismParseError(
                "every update of a probabilistic command needs a probability"
            )
        return Command(action, guard, tuple(updates))

    def parse_update(self) -> "Update":
        start = self.pos
        prob: Optional[Expr] = None
        try:
            candidate = self.parse_expr()
            if self.accept(":"):
                prob = candidate
            else:
                self.pos = start
        except PrismParseError:
            self.pos = start
        if self.keyword() == "true":
            self.advance()
            return Update(prob, ())
        assignments = [self.parse_assignment()]
        while self.accept("&"):
            assignments.append(self.parse_assignment())
        seen = set()
        for a in assignments:
            if a.var in seen:
                raise PrismParseError(f"variable {a.var!r} assigned twice in one update")
            seen.add(a.var)
        return Update(prob, tuple(assignments))

    def parse_assignment(self) -> Assignment:
        self.expect("(", "'(' of assignment")
        var = self.expect_name("assigned variable").text
        self.expect("'", "prime of assignment")
        self.expect("=")
        expr = self.parse_expr()
        self.expect(")")
        return Assignment(var, expr)

    def parse_label(self) -> LabelDef:
        self.advance()  # label
        name_tok = self.expect("string", "label name string")
        if name_tok.text in ("init", "deadlock"):
            raise PrismParseError(
                f"label name {name_tok.text!r} is reserved", name_tok.line, name_tok.column
            )
        self.expect("=")
        expr = self.parse_expr()
        self.expect(";")
        return LabelDef(name_tok.text, expr)

    # -- expressions (precedence climbing) -----------------------------------

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.check("|"):
            tok = self.advance()
            left = Binary("|", left, self.parse_and(), (tok.line, tok.column))
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self.check("&"):
            tok = self.advance()
            left = Binary("&", left, self.parse_not(), (tok.line, tok.column))
        return left

    def parse_not(self) -> Expr:
        if self.check("!"):
            tok = self.advance()
            return Unary("!", self.parse_not(), (tok.line, tok.column))
        return self.parse_comparison()

    def parse_comparison(self) -> Expr:
        left = self.parse_additive()
        for op in ("=", "!=", "<=", ">=", "<", ">"):
            if self.check(op):
                tok = self.advance()
                return Binary(op, left, self.parse_additive(), (tok.line, tok.column))
        return left

    def parse_additive(self) -> Expr:
        left = self.parse_multiplicative()
        while self.check("+") or self.check("-"):
            tok = self.advance()
            left = Binary(tok.kind, left, self.parse_multiplicative(), (tok.line, tok.column))
        return left

    def parse_multiplicative(self) -> Expr:
        left = self.parse_unary()
        while self.check("*") or self.check("/"):
            tok = self.advance()
            left = Binary(tok.kind, left, self.parse_unary(), (tok.line, tok.column))
        return left

    def parse_unary(self) -> Expr:
        if self.check("-"):
            tok = self.advance()
            return Unary("-", self.parse_unary(), (tok.line, tok.column))
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "int":
            self.advance()
            return IntLit(int(tok.text), (tok.line, tok.column))
        if tok.kind == "decimal":
            self.advance()
            return RatLit(Fraction(tok.text), (tok.line, tok.column))
        if tok.kind == "ident":
            self.reject_unsupported(tok)
            if tok.text == "true":
                self.advance()
                return BoolLit(True, (tok.line, tok.column))
            if tok.text == "false":
                self.advance()
                return BoolLit(False, (tok.line, tok.column))
            if tok.text in ("min", "max"):
                raise PrismParseError(
                    f"unsupported construct: builtin function {tok.text!r}", tok.line, tok.column
                )
            if tok.text in KEYWORDS:
                raise PrismParseError(
                    f"unexpected keyword {tok.text!r} in expression", tok.line, tok.column
                )
            self.advance()
            return Ident(tok.text, (tok.line, tok.column))
        if tok.kind == "(":
            self.advance()
            expr = self.parse_expr()
            self.expect(")")
            return expr
        raise PrismParseError(
            f"expected expression, found {tok.text or tok.kind!r}", tok.line, tok.column
        )


# -- static checks -------------------------------------------------------------


def _expr_pos(expr: Expr) -> tuple[Optional[int], Optional[int]]:
    pos = getattr(expr, "pos", None)
    return (pos[0], pos[1]) if pos else (None, None)


class _Scope:
    """Declared names and their kinds/types for identifier and type checking."""

    def __init__(self, program: Program):
        self.constants: dict[str, Constant] = {}
        self.variables: dict[str, VariableDecl] = {}
        self.var_owner: dict[str, Optional[str]] = {}
        for c in program.constants:
            self._declare(c.name, "constant")
            self.constants[c.name] = c
        for v, owner in program.variables():
            self._declare(v.name, "variable")
            self.variables[v.name] = v
            self.var_owner[v.name] = owner

    def _declare(self, name: str, kind: str) -> None:
        if name in self.constants or name in self.variables:
            raise PrismTypeError(f"duplicate declaration of {name!r}")

    def type_of(self, name: str) -> str:
        if name in self.constants:
            return self.constants[name].type
        if name in self.variables:
            return "bool" if self.variables[name].is_bool else "int"
        raise PrismTypeError(f"undeclared identifier {name!r}")


def _type_check(expr: Expr, scope: _Scope, *, constants_only=False, allow_rational=False,
                context="") -> str:
    """Infer 'int' | 'bool' | 'rational'; raise on mismatch or undeclared names."""
    where = f" in {context}" if context else ""
    if isinstance(expr, IntLit):
        return "int"
    if isinstance(expr, BoolLit):
        return "bool"
    if isinstance(expr, RatLit):
        if not allow_rational:
            line, col = _expr_pos(expr)
            raise PrismTypeError(f"decimal literal only allowed in probabilities{where}", line, col)
        return "rational"
    if isinstance(expr, Ident):
        line, col = _expr_pos(expr)
        if expr.name not in scope.constants and expr.name not in scope.variables:
            raise PrismTypeError(f"undeclared identifier {expr.name!r}{where}", line, col)
        if constants_only and expr.name not in scope.constants:
            raise PrismTypeError(
                f"variable {expr.name!r} not allowed{where} (constants only)", line, col
            )
        return scope.type_of(expr.name)
    if isinstance(expr, Unary):
        t = _type_check(expr.operand, scope, constants_only=constants_only,
                        allow_rational=allow_rational, context=context)
        line, col = _expr_pos(expr)
        if expr.op == "-" and t in ("int", "rational"):
            return t
        if expr.op == "!" and t == "bool":
            return "bool"
        raise PrismTypeError(f"operator {expr.op!r} does not apply to {t}{where}", line, col)
    if isinstance(expr, Binary):
        lt = _type_check(expr.left, scope, constants_only=constants_only,
                         allow_rational=allow_rational, context=context)
        rt = _type_check(expr.right, scope, constants_only=constants_only,
                         allow_rational=allow_rational, context=context)
        line, col = _expr_pos(expr)
        op = expr.op
        numeric = {"int", "rational"}
        if op in ("+", "-", "*", "/"):
            if lt in numeric and rt in numeric:
                if allow_rational and (op == "/" or "rational" in (lt, rt)):
                    return "rational"
                return "int"
            raise PrismTypeError(f"arithmetic on {lt} and {rt}{where}", line, col)
        if op in ("<", "<=", ">", ">="):
            if lt in numeric and rt in numeric:
                return "bool"
            raise PrismTypeError(f"comparison of {lt} and {rt}{where}", line, col)
        if op in ("=", "!="):
            if (lt in numeric and rt in numeric) or (lt == "bool" and rt == "bool"):
                return "bool"
            raise PrismTypeError(f"equality between {lt} and {rt}{where}", line, col)
        if op in ("&", "|"):
            if lt == "bool" and rt == "bool":
                return "bool"
            raise PrismTypeError(f"boolean operator on {lt} and {rt}{where}", line, col)
    raise PrismTypeError(f"malformed expression{where}")


def _check_program(program: Program) -> None:
    scope = _Scope(program)

    for c in program.constants:
        if c.value is not None:
            t = _type_check(c.value, scope, constants_only=True,
                            context=f"constant {c.name!r}")
            if t != c.type:
                raise PrismTypeError(f"constant {c.name!r} declared {c.type} but value is {t}")

    for v, owner in program.variables():
        ctx = f"variable {v.name!r}"
        for bound in (v.lower, v.upper):
            if _type_check(bound, scope, constants_only=True, context=ctx) != "int":
                raise PrismTypeError(f"range bound of {v.name!r} must be int")
        expected = "bool" if v.is_bool else "int"
        if _type_check(v.init, scope, constants_only=True, context=ctx) != expected:
            raise PrismTypeError(f"init of {v.name!r} must be {expected}")

    for m in program.modules:
        for cmd in m.commands:
            ctx = f"module {m.name!r}"
            if _type_check(cmd.guard, scope, context=f"guard in {ctx}") != "bool":
                raise PrismTypeError(f"guard must be bool in {ctx}")
            for u in cmd.updates:
                if u.prob is not None:
                    t = _type_check(u.prob, scope, constants_only=True, allow_rational=True,
                                    context=f"probability in {ctx}")
                    if t not in ("int", "rational"):
                        raise PrismTypeError(f"probability must be numeric in {ctx}")
                for a in u.assignments:
                    if a.var not in scope.variables:
                        raise PrismTypeError(f"assignment to undeclared variable {a.var!r} in {ctx}")
                    owner = scope.var_owner[a.var]
                    if owner is not None and owner != m.name:
                        raise PrismTypeError(
                            f"module {m.name!r} assigns {a.var!r} owned by module {owner!r}"
                        )
                    if owner is None and cmd.action is not None:
                        raise PrismTypeError(
                            f"global {a.var!r} assigned in synchronized command in {ctx}"
                        )
                    expected = "bool" if scope.variables[a.var].is_bool else "int"
                    got = _type_check(a.expr, scope, context=f"assignment to {a.var!r} in {ctx}")
                    if got != expected:
                        raise PrismTypeError(
                            f"assignment to {a.var!r} must be {expected}, got {got}"
                        )

    seen_labels = set()
    for lab in program.labels:
        if lab.name in seen_labels:
            raise PrismTypeError(f"duplicate label {lab.name!r}")
        seen_labels.add(lab.name)
        if _type_check(lab.expr, scope, context=f"label {lab.name!r}") != "bool":
            raise PrismTypeError(f"label {lab.name!r} must be bool")

    seen_modules = set()
    for m in program.modules:
        if m.name in seen_modules:
            raise PrismTypeError(f"duplicate module {m.name!r}")
        seen_modules.add(m.name)


def _mark_parametric(program: Program) -> Program:
    """Set the parametric flag on variables whose upper bound mentions a parameter,
    following constant definitions transitively."""
    params = {c.name for c in program.constants if c.is_parameter}
    defs = {c.name: c.value for c in program.constants if c.value is not None}

    def mentions_parameter(expr: Expr, seen: frozenset = frozenset()) -> bool:
        for name in identifiers_in(expr):
            if name in params:
                return True
            if name in defs and name not in seen:
                if mentions_parameter(defs[name], seen | {name}):
                    return True
        return False

    def mark(v: VariableDecl) -> VariableDecl:
        flag = mentions_parameter(v.upper)
        if flag == v.parametric:
            return v
        return VariableDecl(v.name, v.lower, v.upper, v.init, v.is_bool, flag)

    return Program(
        model_type=program.model_type,
        constants=program.constants,
        globals=tuple(mark(v) for v in program.globals),
        modules=tuple(
            Module(m.name, tuple(mark(v) for v in m.variables), m.commands)
            for m in program.modules
        ),
        labels=program.labels,
    )


def parse(text: str) -> Program:
    """Parse source text into a checked Program with renamings expanded."""
    return _Parser(text).parse_program()
