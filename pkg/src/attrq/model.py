"""Logical regulatory models and their asynchronous dynamics.

A model is a list of components, each with a level domain ``{0..max_level}``
and an ordered list of ``(target_level, condition)`` rules. The target value
of a component in a state is the level of the first rule whose condition
holds (0 when none does). Input components keep their level.

States are tuples of levels; a state code is the mixed-radix integer with
component 0 as the least significant digit. Python ints are unbounded, so
models with many components need no special handling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

State = tuple  # tuple[int, ...]


class ModelError(ValueError):
    """Raised for malformed models (unknown names, out-of-range levels...)."""


# ---------------------------------------------------------------------------
# Boolean expressions over component levels

@dataclass(frozen=True)
class Atom:
    component: int
    op: str  # '=', '<=', '>='
    level: int


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


Expr = Union[Atom, Not, And, Or]


def compile_expr(expr: Expr) -> Callable[[Sequence[int]], bool]:
    """Turn an expression tree into a plain predicate over a level vector."""
    if isinstance(expr, Atom):
        i, lvl = expr.component, expr.level
        if expr.op == "=":
            return lambda v: v[i] == lvl
        if expr.op == "<=":
            return lambda v: v[i] <= lvl
        if expr.op == ">=":
            return lambda v: v[i] >= lvl
        raise ModelError(f"unknown comparator {expr.op!r}")
    if isinstance(expr, Not):
        f = compile_expr(expr.arg)
        return lambda v: not f(v)
    if isinstance(expr, And):
        fs = tuple(compile_expr(a) for a in expr.args)
        return lambda v: all(f(v) for f in fs)
    if isinstance(expr, Or):
        fs = tuple(compile_expr(a) for a in expr.args)
        return lambda v: any(f(v) for f in fs)
    raise TypeError(f"not an expression: {expr!r}")


def expr_atoms(expr: Expr):
    if isinstance(expr, Atom):
        yield expr
    elif isinstance(expr, Not):
        yield from expr_atoms(expr.arg)
    else:
        for a in expr.args:
            yield from expr_atoms(a)


# ---------------------------------------------------------------------------
# Components and models

@dataclass(frozen=True)
class ComponentDef:
    name: str
    max_level: int
    rules: tuple = ()  # tuple[(target_level, Expr), ...]
    is_input: bool = False


class LogicalModel:
    """Immutable logical regulatory graph with memoised successor lookup.

    The successor cache is an implementation detail: it never changes the
    answers, only their cost.
    """

    def __init__(self, components: Sequence[ComponentDef], succ_cache_limit: int = 1 << 21):
        self.components = tuple(components)
        if not self.components:
            raise ModelError("model has no components")
        names = [c.name for c in self.components]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ModelError(f"duplicate component names: {', '.join(dup)}")
        self.index = {c.name: i for i, c in enumerate(self.components)}
        self.radix = tuple(c.max_level + 1 for c in self.components)
        weights, w = [], 1
        for r in self.radix:
            weights.append(w)
            w *= r
        self.weights = tuple(weights)
        self.n_states = w
        self.input_flags = tuple(c.is_input for c in self.components)
        for i, comp in enumerate(self.components):
            if comp.max_level < 1:
                raise ModelError(f"component {comp.name}: max level must be >= 1")
            for target, cond in comp.rules:
                if not 0 <= target <= comp.max_level:
                    raise ModelError(f"component {comp.name}: level out of range ({target})")
                for atom in expr_atoms(cond):
                    if not 0 <= atom.component < len(self.components):
                        raise ModelError(f"component {comp.name}: unknown regulator index {atom.component}")
                    if not 0 <= atom.level <= self.components[atom.component].max_level:
                        ref = self.components[atom.component].name
                        raise ModelError(f"component {comp.name}: level out of range for {ref} ({atom.level})")
        self._rules = tuple(
            tuple((t, compile_expr(c)) for t, c in comp.rules) for comp in self.components
        )
        self._succ_cache: dict = {}
        self._succ_cache_limit = succ_cache_limit

    def __reduce__(self):
        # compiled rule closures are rebuilt on unpickling
        return (LogicalModel, (self.components, self._succ_cache_limit))

    def __repr__(self):
        return f"LogicalModel({', '.join(c.name for c in self.components)})"

    def __len__(self):
        return len(self.components)

    @property
    def names(self) -> list:
        return [c.name for c in self.components]

    # -- encoding -------------------------------------------------------------

    def encode(self, v: Sequence[int]) -> int:
        if len(v) != len(self.radix):
            raise ModelError(f"state has {len(v)} levels, model has {len(self.radix)} components")
        code = 0
        for lvl, r, w in zip(v, self.radix, self.weights):
            if not 0 <= lvl < r:
                raise ModelError(f"level {lvl} outside domain 0..{r - 1}")
            code += lvl * w
        return code

    def decode(self, code: int) -> State:
        if not 0 <= code < self.n_states:
            raise ModelError(f"state code {code} outside [0, {self.n_states})")
        out = []
        for r in self.radix:
            code, lvl = divmod(code, r)
            out.append(lvl)
        return tuple(out)

    # -- dynamics -------------------------------------------------------------

    def eval_target(self, i: int, v: Sequence[int]) -> int:
        if self.input_flags[i]:
            return v[i]
        for target, cond in self._rules[i]:
            if cond(v):
                return target
        return 0

    def successors(self, v: Sequence[int]) -> list:
        """Asynchronous successors of ``v``: one unit step per unstable component."""
        out = []
        for i in range(len(self.components)):
            k = self.eval_target(i, v)
            if k != v[i]:
                w = list(v)
                w[i] += 1 if k > v[i] else -1
                out.append(tuple(w))
        return out

    def successor_codes(self, code: int) -> tuple:
        """Successors of a state code, as codes (memoised)."""
        hit = self._succ_cache.get(code)
        if hit is not None:
            return hit
        v = self.decode(code)
        out = []
        for i, w in enumerate(self.weights):
            k = self.eval_target(i, v)
            if k > v[i]:
                out.append(code + w)
            elif k < v[i]:
                out.append(code - w)
        res = tuple(out)
        if len(self._succ_cache) < self._succ_cache_limit:
            self._succ_cache[code] = res
        return res

    def transition_probability(self, v: Sequence[int], w: Sequence[int]) -> float:
        succ = self.successors(v)
        if tuple(w) not in succ:
            raise ModelError(f"{tuple(w)} is not a successor of {tuple(v)}")
        return 1.0 / len(succ)

    def is_stable(self, code: int) -> bool:
        return not self.successor_codes(code)

    def format_state(self, code: int) -> str:
        """Compact level string, component 0 first (e.g. '0102')."""
        v = self.decode(code)
        if all(r <= 10 for r in self.radix):
            return "".join(str(x) for x in v)
        return ",".join(str(x) for x in v)

    def state_dict(self, code: int) -> dict:
        return dict(zip(self.names, self.decode(code)))
