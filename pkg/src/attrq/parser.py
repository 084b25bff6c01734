"""Line-oriented model file format.

::

    # comment
    NODE <name> <max_level>
    INPUT <name> <max_level>
    TARGET <name> <level> : <expr>
    INIT <name>=<level> <name>=SAMPLE ...
    INIT * SAMPLE
    ORACLE <id> : <name>=<level|*> ...

Expressions use ``!``, ``&`` (binds tighter) and ``|`` over atoms
``name=k``, ``name<=k``, ``name>=k``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Optional

from .model import And, Atom, ComponentDef, LogicalModel, ModelError, Not, Or

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_TOKEN = re.compile(r"\s*(?:(<=|>=|[=!&|()])|([A-Za-z_][A-Za-z0-9_]*)|(\d+))")


class ParseError(ModelError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass
class InitialSpec:
    fixed: dict = field(default_factory=dict)  # component index -> level
    sampled: frozenset = frozenset()  # component indices

    @property
    def is_point(self) -> bool:
        return not self.sampled


@dataclass(frozen=True)
class OracleSpec:
    id: str
    patterns: tuple  # tuple of tuples; one entry per component, None = wildcard


@dataclass
class ModelDocument:
    model: LogicalModel
    initial: InitialSpec = field(default_factory=InitialSpec)
    oracles: list = field(default_factory=list)
    name: str = "model"


# ---------------------------------------------------------------------------
# expressions

class _ExprParser:
    def __init__(self, text: str, line: int, index: dict):
        self.line = line
        self.index = index
        self.toks = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ParseError(line, f"unexpected character {text[pos:].strip()[:1]!r} in expression")
            op, name, num = m.groups()
            if op:
                self.toks.append(("op", op))
            elif name:
                self.toks.append(("name", name))
            else:
                self.toks.append(("int", int(num)))
            pos = m.end()
        self.pos = 0

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind or "token"
            got = "end of line" if tok[0] is None else repr(tok[1])
            raise ParseError(self.line, f"expected {want}, got {got}")
        self.pos += 1
        return tok[1]

    def parse(self):
        if not self.toks:
            raise ParseError(self.line, "empty expression")
        e = self.parse_or()
        if self.pos != len(self.toks):
            raise ParseError(self.line, f"unexpected {self.peek()[1]!r}")
        return e

    def parse_or(self):
        args = [self.parse_and()]
        while self.peek() == ("op", "|"):
            self.pos += 1
            args.append(self.parse_and())
        return args[0] if len(args) == 1 else Or(_flatten(args, Or))

    def parse_and(self):
        args = [self.parse_unary()]
        while self.peek() == ("op", "&"):
            self.pos += 1
            args.append(self.parse_unary())
        return args[0] if len(args) == 1 else And(_flatten(args, And))

    def parse_unary(self):
        tok = self.peek()
        if tok == ("op", "!"):
            self.pos += 1
            return Not(self.parse_unary())
        if tok == ("op", "("):
            self.pos += 1
            e = self.parse_or()
            self.take("op", ")")
            return e
        name = self.take("name")
        if name not in self.index:
            raise ParseError(self.line, f"unknown component {name!r}")
        op = self.take("op")
        if op not in ("=", "<=", ">="):
            raise ParseError(self.line, f"expected comparator after {name}, got {op!r}")
        level = self.take("int")
        return Atom(self.index[name], op, level)


def _flatten(args, kind):
    out = []
    for a in args:
        out.extend(a.args if isinstance(a, kind) else (a,))
    return tuple(out)


def parse_expr(text: str, index: dict, line: int = 0):
    return _ExprParser(text, line, index).parse()


# ---------------------------------------------------------------------------
# documents

def _parse_level(tok: str, line: int) -> int:
    if not tok.isdigit():
        raise ParseError(line, f"expected a non-negative integer, got {tok!r}")
    return int(tok)


def _split_assign(tok: str, line: int):
    if tok.count("=") != 1:
        raise ParseError(line, f"expected name=value, got {tok!r}")
    name, value = tok.split("=")
    return name, value


def parse_model(text: str, name: str = "model") -> ModelDocument:
    decls = []  # (line, name, max_level, is_input)
    targets = []  # (line, name, level, expr text)
    inits = []  # (line, tokens)
    oracles = []  # (line, id, tokens)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kw, _, rest = line.partition(" ")
        rest = rest.strip()
        if kw in ("NODE", "INPUT"):
            parts = rest.split()
            if len(parts) != 2:
                raise ParseError(lineno, f"{kw} expects <name> <max_level>")
            if not _IDENT.match(parts[0]):
                raise ParseError(lineno, f"invalid identifier {parts[0]!r}")
            decls.append((lineno, parts[0], _parse_level(parts[1], lineno), kw == "INPUT"))
        elif kw == "TARGET":
            head, sep, expr = rest.partition(":")
            parts = head.split()
            if not sep or len(parts) != 2:
                raise ParseError(lineno, "TARGET expects <name> <level> : <expr>")
            targets.append((lineno, parts[0], _parse_level(parts[1], lineno), expr))
        elif kw == "INIT":
            inits.append((lineno, rest.split()))
        elif kw == "ORACLE":
            head, sep, body = rest.partition(":")
            oid = head.strip()
            if not sep or not _IDENT.match(oid):
                raise ParseError(lineno, "ORACLE expects <id> : <name>=<level|*> ...")
            oracles.append((lineno, oid, body.split()))
        else:
            raise ParseError(lineno, f"unknown keyword {kw!r}")

    index = {}
    for lineno, cname, _, _ in decls:
        if cname in index:
            raise ParseError(lineno, f"duplicate component {cname!r}")
        index[cname] = len(index)
    if not index:
        raise ParseError(0, "no components declared")
    maxes = [d[2] for d in decls]

    rules = [[] for _ in decls]
    for lineno, cname, level, expr in targets:
        if cname not in index:
            raise ParseError(lineno, f"unknown component {cname!r}")
        i = index[cname]
        if decls[i][3]:
            raise ParseError(lineno, f"input component {cname!r} cannot have TARGET rules")
        if level > maxes[i]:
            raise ParseError(lineno, f"level out of range: {cname} has max level {maxes[i]}, got {level}")
        e = parse_expr(expr, index, lineno)
        for atom in _atoms(e):
            if atom.level > maxes[atom.component]:
                raise ParseError(lineno, f"level out of range: {decls[atom.component][1]}={atom.level}")
        rules[i].append((level, e))

    try:
        model = LogicalModel([
            ComponentDef(cname, mx, tuple(rules[i]), is_in)
            for i, (_, cname, mx, is_in) in enumerate(decls)
        ])
    except ModelError as exc:
        raise ParseError(0, str(exc)) from None

    initial = InitialSpec()
    sampled = set()
    for lineno, toks in inits:
        if toks == ["*", "SAMPLE"]:
            sampled.update(range(len(decls)))
            continue
        if not toks:
            raise ParseError(lineno, "INIT expects assignments")
        for tok in toks:
            cname, value = _split_assign(tok, lineno)
            if cname not in index:
                raise ParseError(lineno, f"unknown component {cname!r}")
            i = index[cname]
            if value == "SAMPLE":
                sampled.add(i)
            else:
                lvl = _parse_level(value, lineno)
                if lvl > maxes[i]:
                    raise ParseError(lineno, f"level out of range: {cname}={lvl}")
                initial.fixed[i] = lvl
    both = sampled & set(initial.fixed)
    if both:
        names = ", ".join(decls[i][1] for i in sorted(both))
        raise ParseError(inits[-1][0], f"components both fixed and sampled: {names}")
    initial.sampled = frozenset(sampled)

    patterns = {}
    for lineno, oid, toks in oracles:
        pat = [None] * len(decls)
        for tok in toks:
            cname, value = _split_assign(tok, lineno)
            if cname not in index:
                raise ParseError(lineno, f"unknown component {cname!r}")
            i = index[cname]
            if value != "*":
                lvl = _parse_level(value, lineno)
                if lvl > maxes[i]:
                    raise ParseError(lineno, f"level out of range: {cname}={lvl}")
                pat[i] = lvl
        patterns.setdefault(oid, []).append(tuple(pat))
    oracle_specs = [OracleSpec(oid, tuple(p)) for oid, p in patterns.items()]

    return ModelDocument(model, initial, oracle_specs, name)


def load_model(path) -> ModelDocument:
    from pathlib import Path

    p = Path(path)
    return parse_model(p.read_text(encoding="utf-8"), name=p.stem)


def _atoms(e):
    if isinstance(e, Atom):
        yield e
    elif isinstance(e, Not):
        yield from _atoms(e.arg)
    else:
        for a in e.args:
            yield from _atoms(a)


# ---------------------------------------------------------------------------
# canonical printer

def format_expr(e, names) -> str:
    return _fmt(e, names, 0)


def _fmt(e, names, ctx) -> str:
    # ctx: 0 top/or, 1 inside and, 2 inside not
    if isinstance(e, Atom):
        return f"{names[e.component]}{e.op}{e.level}"
    if isinstance(e, Not):
        return "!" + _fmt(e.arg, names, 2)
    if isinstance(e, And):
        s = " & ".join(_fmt(a, names, 1) for a in e.args)
        return f"({s})" if ctx >= 2 else s
    s = " | ".join(_fmt(a, names, 0) for a in e.args)
    return f"({s})" if ctx >= 1 else s


def format_model(doc: ModelDocument) -> str:
    model = doc.model
    names = model.names
    lines = []
    for c in model.components:
        lines.append(f"{'INPUT' if c.is_input else 'NODE'} {c.name} {c.max_level}")
    for c in model.components:
        for level, cond in c.rules:
            lines.append(f"TARGET {c.name} {level} : {format_expr(cond, names)}")
    init = doc.initial
    if init.sampled and len(init.sampled) == len(names):
        lines.append("INIT * SAMPLE")
    else:
        toks = [f"{names[i]}={lvl}" for i, lvl in sorted(init.fixed.items())]
        toks += [f"{names[i]}=SAMPLE" for i in sorted(init.sampled)]
        if toks:
            lines.append("INIT " + " ".join(toks))
    for oracle in doc.oracles:
        for pat in oracle.patterns:
            body = " ".join(f"{n}={'*' if lvl is None else lvl}" for n, lvl in zip(names, pat))
            lines.append(f"ORACLE {oracle.id} : {body}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# initial laws and oracles

def initial_state(doc: ModelDocument) -> tuple:
    """The fixed part of the initial condition, unlisted components at 0."""
    v = [0] * len(doc.model)
    for i, lvl in doc.initial.fixed.items():
        v[i] = lvl
    return tuple(v)


def initial_distribution(doc: ModelDocument) -> dict:
    """Initial law as ``{state code: probability}`` (uniform over sampled coordinates)."""
    model = doc.model
    base = list(initial_state(doc))
    sampled = sorted(doc.initial.sampled)
    if not sampled:
        return {model.encode(base): 1.0}
    count = 1
    for i in sampled:
        count *= model.radix[i]
    mass = 1.0 / count
    out = {}
    for levels in itertools.product(*(range(model.radix[i]) for i in sampled)):
        for i, lvl in zip(sampled, levels):
            base[i] = lvl
        out[model.encode(base)] = mass
    return out


class OracleSet:
    """Membership tests for a list of oracles, memoised by state code."""

    def __init__(self, model: LogicalModel, oracles):
        self.model = model
        self.oracles = list(oracles)
        self._compiled = []
        for oracle in self.oracles:
            for pat in oracle.patterns:
                checks = tuple(
                    (model.weights[i], model.radix[i], lvl)
                    for i, lvl in enumerate(pat) if lvl is not None
                )
                self._compiled.append((oracle.id, checks))
        self._memo: dict = {}

    def __bool__(self):
        return bool(self._compiled)

    def match(self, code: int) -> Optional[str]:
        if not self._compiled:
            return None
        try:
            return self._memo[code]
        except KeyError:
            pass
        found = None
        for oid, checks in self._compiled:
            if all((code // w) % r == lvl for w, r, lvl in checks):
                found = oid
                break
        if len(self._memo) < (1 << 20):
            self._memo[code] = found
        return found

    def size(self, oid: str, limit: int = 1 << 20) -> Optional[int]:
        """Number of states matched by oracle ``oid`` (None if too many to count)."""
        pats = [p for o in self.oracles if o.id == oid for p in o.patterns]
        free_total = 0
        for pat in pats:
            n = 1
            for lvl, r in zip(pat, self.model.radix):
                if lvl is None:
                    n *= r
            free_total += n
        if free_total > limit:
            return None
        seen = set()
        for pat in pats:
            ranges = [range(r) if lvl is None else (lvl,) for lvl, r in zip(pat, self.model.radix)]
            for v in itertools.product(*ranges):
                seen.add(self.model.encode(v))
        return len(seen)
