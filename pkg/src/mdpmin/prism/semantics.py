"""Instantiation (parameter binding + constant folding) and state-space exploration.

Integer expressions use floor division for `/`; probability expressions are
evaluated exactly as rationals and may reference constants only, so every
branch probability is fixed before exploration starts.  Guards and update
right-hand sides are compiled once to Python lambdas over the valuation tuple.
"""

from __future__ import annotations

import itertools
from collections import deque
from fractions import Fraction
from typing import Callable, Optional

from ..core import Distribution, Mdp, VarMeta
from ..errors import ExploreError, InstantiationError
from ..limits import ResourceGuard
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
    VariableDecl,
)
from .ast import _command_to_source


def _eval_int(expr: Expr, env: dict) -> int | bool:
    """Exact integer/boolean evaluation; `/` is floor division."""
    if isinstance(expr, IntLit):
        return expr.value
    if isinstance(expr, BoolLit):
        return expr.value
    if isinstance(expr, RatLit):
        raise InstantiationError("decimal literal in integer context")
    if isinstance(expr, Ident):
        if expr.name not in env:
            raise InstantiationError(f"constant {expr.name!r} used before its definition")
        return env[expr.name]
    if isinstance(expr, Unary):
        v = _eval_int(expr.operand, env)
        return -v if expr.op == "-" else (not v)
    if isinstance(expr, Binary):
        l = _eval_int(expr.left, env)
        r = _eval_int(expr.right, env)
        op = expr.op
        if op == "+":
            return l + r
        if op == "-":
            return l - r
        if op == "*":
            return l * r
        if op == "/":
            if r == 0:
                raise InstantiationError("division by zero in constant expression")
            return l // r
        if op == "=":
            return l == r
        if op == "!=":
            return l != r
        if op == "<":
            return l < r
        if op == "<=":
            return l <= r
        if op == ">":
            return l > r
        if op == ">=":
            return l >= r
        if op == "&":
            return bool(l) and bool(r)
        if op == "|":
            return bool(l) or bool(r)
    raise InstantiationError(f"cannot evaluate expression {expr!r}")


def _eval_prob(expr: Expr, env: dict) -> Fraction:
    """Exact rational evaluation of a probability expression (constants only)."""
    if isinstance(expr, IntLit):
        return Fraction(expr.value)
    if isinstance(expr, RatLit):
        return expr.value
    if isinstance(expr, Ident):
        if expr.name not in env:
            raise InstantiationError(f"constant {expr.name!r} used before its definition")
        return Fraction(env[expr.name])
    if isinstance(expr, Unary) and expr.op == "-":
        return -_eval_prob(expr.operand, env)
    if isinstance(expr, Binary):
        l = _eval_prob(expr.left, env)
        r = _eval_prob(expr.right, env)
        if expr.op == "+":
            return l + r
        if expr.op == "-":
            return l - r
        if expr.op == "*":
            return l * r
        if expr.op == "/":
            if r == 0:
                raise InstantiationError("division by zero in probability expression")
            return l / r
    raise InstantiationError(f"cannot evaluate probability expression {expr!r}")


def _fold_variable(v: VariableDecl, env: dict) -> VariableDecl:
    lower = _eval_int(v.lower, env)
    upper = _eval_int(v.upper, env)
    init = _eval_int(v.init, env)
    if v.is_bool:
        lower, upper, init = 0, 1, int(bool(init))
    if upper < lower:
        raise InstantiationError(
            f"variable {v.name!r}: empty range [{lower}..{upper}]"
        )
    if not (lower <= init <= upper):
        raise InstantiationError(
            f"variable {v.name!r}: init {init} outside [{lower}..{upper}]"
        )
    return VariableDecl(
        v.name, IntLit(lower), IntLit(upper), IntLit(init) if not v.is_bool else BoolLit(bool(init)),
        is_bool=v.is_bool, parametric=v.parametric,
    )


def constant_env(program: Program) -> dict:
    """Values of all (folded) constants; raises if any is not a literal yet."""
    env: dict = {}
    for c in program.constants:
        if isinstance(c.value, IntLit):
            env[c.name] = c.value.value
        elif isinstance(c.value, BoolLit):
            env[c.name] = c.value.value
        elif c.value is None:
            raise InstantiationError(f"parameter {c.name!r} is unbound")
        else:
            env[c.name] = _eval_int(c.value, env)
    return env


def instantiate(program: Program, bindings: dict[str, int]) -> Program:
    """Bind parameters and fold every constant and variable bound to a literal.

    `bindings` must cover exactly the parameters.  Probability expressions are
    validated here: each must be a rational in (0, 1] and each command's
    probabilities must sum to 1.
    """
    param_names = {c.name for c in program.parameters}
    missing = sorted(param_names - set(bindings))
    if missing:
        raise InstantiationError(f"missing parameter bindings: {', '.join(missing)}")
    extra = sorted(set(bindings) - param_names)
    if extra:
        raise InstantiationError(f"unknown parameters in bindings: {', '.join(extra)}")

    env: dict = {}
    constants = []
    for c in program.constants:
        if c.is_parameter:
            value = int(bindings[c.name])
            env[c.name] = value
            constants.append(Constant(c.name, "int", IntLit(value)))
        else:
            value = _eval_int(c.value, env)
            if c.type == "bool":
                value = bool(value)
                constants.append(Constant(c.name, "bool", BoolLit(value)))
            else:
                constants.append(Constant(c.name, "int", IntLit(int(value))))
            env[c.name] = value

    globals_ = tuple(_fold_variable(v, env) for v in program.globals)
    modules = tuple(
        Module(m.name, tuple(_fold_variable(v, env) for v in m.variables), m.commands)
        for m in program.modules
    )

    for m in modules:
        for idx, cmd in enumerate(m.commands):
            probs = [
                _eval_prob(u.prob, env) if u.prob is not None else Fraction(1)
                for u in cmd.updates
            ]
            for p in probs:
                if not (0 < p <= 1):
                    raise InstantiationError(
                        f"module {m.name!r} command {idx + 1}: probability {p} outside (0, 1]"
                    )
            if sum(probs) != 1:
                raise InstantiationError(
                    f"module {m.name!r} command {idx + 1}: probabilities sum to {sum(probs)}, not 1"
                )

    return Program("mdp", tuple(constants), globals_, modules, program.labels)


# -- compilation ---------------------------------------------------------------


def _compile_expr(expr: Expr, var_index: dict[str, int], env: dict) -> str:
    if isinstance(expr, IntLit):
        return str(expr.value)
    if isinstance(expr, BoolLit):
        return "True" if expr.value else "False"
    if isinstance(expr, RatLit):
        raise ExploreError("decimal literal outside probability expression")
    if isinstance(expr, Ident):
        if expr.name in var_index:
            return f"v[{var_index[expr.name]}]"
        value = env[expr.name]
        return ("True" if value else "False") if isinstance(value, bool) else str(value)
    if isinstance(expr, Unary):
        inner = _compile_expr(expr.operand, var_index, env)
        return f"(-{inner})" if expr.op == "-" else f"(not {inner})"
    if isinstance(expr, Binary):
        l = _compile_expr(expr.left, var_index, env)
        r = _compile_expr(expr.right, var_index, env)
        op = {"=": "==", "&": "and", "|": "or", "/": "//"}.get(expr.op, expr.op)
        return f"({l} {op} {r})"
    raise ExploreError(f"cannot compile expression {expr!r}")


def _compile_fn(expr: Expr, var_index: dict[str, int], env: dict) -> Callable:
    return eval(f"lambda v: {_compile_expr(expr, var_index, env)}")  # noqa: S307


class _CompiledCommand:
    __slots__ = ("module", "action", "guard", "branches", "source", "assigned")

    def __init__(self, module: str, cmd: Command, var_index, env, var_bounds):
        self.module = module
        self.action = cmd.action
        self.guard = _compile_fn(cmd.guard, var_index, env)
        self.source = f"module {module!r}: {_command_to_source(cmd)}"
        self.branches = []
        assigned: set[int] = set()
        for u in cmd.updates:
            prob = _eval_prob(u.prob, env) if u.prob is not None else Fraction(1)
            assigns = []
            for a in u.assignments:
                idx = var_index[a.var]
                assigned.add(idx)
                lo, hi = var_bounds[idx]
                assigns.append((idx, _compile_fn(a.expr, var_index, env), lo, hi))
            self.branches.append((prob, tuple(assigns)))
        self.assigned = assigned


def _apply_branch(valuation, assigns, names, source):
    nv = list(valuation)
    for idx, fn, lo, hi in assigns:
        value = fn(valuation)
        if isinstance(value, bool):
            value = int(value)
        if value < lo or value > hi:
            raise ExploreError(
                f"state {tuple(valuation)}: {names[idx]}={value} outside [{lo}..{hi}] in {source}"
            )
        nv[idx] = value
    return tuple(nv)


def explore(
    program: Program,
    goal_label: Optional[str] = None,
    max_states: Optional[int] = None,
    guard: Optional[ResourceGuard] = None,
) -> Mdp:
    """Breadth-first exploration of a closed program into an explicit MDP.

    States are numbered in discovery order, with modules' command order as the
    tie-break, so numbering is reproducible.  Unlabeled commands interleave;
    same-label commands of all modules declaring that label fire jointly with
    the product distribution.  Deadlock states get one self-loop choice and are
    recorded.
    """
    if program.parameters:
        names = ", ".join(c.name for c in program.parameters)
        raise ExploreError(f"program has unbound parameters: {names}")
    program = instantiate(program, {})  # folds constants of directly-parsed programs
    env = constant_env(program)

    decls = [v for v, _ in program.variables()]
    names = [v.name for v in decls]
    var_index = {v.name: i for i, v in enumerate(decls)}
    var_bounds = [
        (_eval_int(v.lower, env), _eval_int(v.upper, env)) for v in decls
    ]
    initial_valuation = tuple(int(_eval_int(v.init, env)) for v in decls)

    var_meta = tuple(
        VarMeta(v.name, lo, hi, parametric=v.parametric, is_bool=v.is_bool)
        for v, (lo, hi) in zip(decls, var_bounds)
    )

    # Compile commands; collect the synchronization alphabet in first-appearance order.
    module_unlabeled: list[list[_CompiledCommand]] = []
    module_labeled: list[dict[str, list[_CompiledCommand]]] = []
    action_names: list[str] = []
    for m in program.modules:
        unlabeled = []
        labeled: dict[str, list[_CompiledCommand]] = {}
        for cmd in m.commands:
            compiled = _CompiledCommand(m.name, cmd, var_index, env, var_bounds)
            if cmd.action is None:
                unlabeled.append(compiled)
            else:
                if cmd.action not in action_names:
                    action_names.append(cmd.action)
                labeled.setdefault(cmd.action, []).append(compiled)
        module_unlabeled.append(unlabeled)
        module_labeled.append(labeled)

    participants: dict[str, list[int]] = {
        a: [i for i, lab in enumerate(module_labeled) if a in lab] for a in action_names
    }

    label_fns = [
        (lab.name, _compile_fn(lab.expr, var_index, env)) for lab in program.labels
    ]
    label_names = tuple(name for name, _ in label_fns)
    if goal_label is not None and goal_label not in label_names:
        raise ExploreError(f"goal label {goal_label!r} not defined in program")

    state_ids: dict[tuple, int] = {initial_valuation: 0}
    valuations: list[tuple] = [initial_valuation]
    choices_out: list[list[tuple[int, Distribution]]] = []
    deadlocks: set[int] = set()
    sync_cache: dict[tuple, list[tuple[Fraction, tuple]]] = {}

    def state_id(valuation: tuple) -> int:
        sid = state_ids.get(valuation)
        if sid is None:
            sid = len(valuations)
            if max_states is not None and sid >= max_states:
                from ..errors import ResourceLimitError

                raise ResourceLimitError(
                    "states", f"exploration exceeded {max_states} states"
                )
            state_ids[valuation] = sid
            valuations.append(valuation)
        return sid

    cursor = 0
    while cursor < len(valuations):
        v = valuations[cursor]
        if guard is not None:
            guard.tick()
        state_choices: list[tuple[int, Distribution]] = []

        for unlabeled in module_unlabeled:
            for cmd in unlabeled:
                if not cmd.guard(v):
                    continue
                pairs = [
                    (state_id(_apply_branch(v, assigns, names, cmd.source)), prob)
                    for prob, assigns in cmd.branches
                ]
                state_choices.append((-1, Distribution.from_pairs(pairs)))

        for action_idx, action in enumerate(action_names):
            mods = participants[action]
            enabled: list[list[_CompiledCommand]] = []
            for mi in mods:
                cmds = [c for c in module_labeled[mi][action] if c.guard(v)]
                if not cmds:
                    break
                enabled.append(cmds)
            else:
                for combo in itertools.product(*enabled):
                    key = (action_idx,) + tuple(id(c) for c in combo)
                    merged = sync_cache.get(key)
                    if merged is None:
                        merged = _merge_sync(combo)
                        sync_cache[key] = merged
                    pairs = []
                    for prob, assigns in merged:
                        target = _apply_branch(v, assigns, names, combo[0].source)
                        pairs.append((state_id(target), prob))
                    state_choices.append((action_idx, Distribution.from_pairs(pairs)))

        if not state_choices:
            deadlocks.add(cursor)
            state_choices.append((-1, Distribution.point(cursor)))
        choices_out.append(state_choices)
        cursor += 1

    n = len(valuations)
    masks = []
    for v in valuations:
        mask = 0
        for bit, (_, fn) in enumerate(label_fns):
            if fn(v):
                mask |= 1 << bit
        masks.append(mask)

    goal: frozenset[int] = frozenset()
    if goal_label is not None:
        bit = 1 << label_names.index(goal_label)
        goal = frozenset(s for s in range(n) if masks[s] & bit)

    return Mdp.build(
        initial=0,
        choices=choices_out,
        valuations=valuations,
        var_meta=var_meta,
        action_names=tuple(action_names),
        label_names=label_names,
        label_masks=masks,
        goal=goal,
        goal_label=goal_label,
        deadlock_states=deadlocks,
        check_reachable=False,  # BFS from the initial state reaches exactly these
    )


def _merge_sync(combo) -> list[tuple[Fraction, tuple]]:
    """Product distribution of one synchronized command combination."""
    assigned: set[int] = set()
    for cmd in combo:
        overlap = assigned & cmd.assigned
        if overlap:
            raise ExploreError(
                f"conflicting assignments in synchronized commands: {cmd.source}"
            )
        assigned |= cmd.assigned
    merged = [(Fraction(1), ())]
    for cmd in combo:
        merged = [
            (p * q, assigns + more)
            for p, assigns in merged
            for q, more in cmd.branches
        ]
    return merged
