"""Explicit state transition graphs, SCCs and attractors for desk-scale models."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .results import Attractor

DEFAULT_STATE_CAP = 1 << 22


class CapacityError(RuntimeError):
    """The requested explicit construction exceeds the configured state cap."""


@dataclass
class ExplicitSTG:
    """Adjacency over state codes.

    ``probs`` is optional: when absent every state moves uniformly to its
    successors (the asynchronous semantics). Weighted graphs are used for
    rewired chains and hand-built test chains.
    """

    edges: dict  # code -> tuple of successor codes
    probs: Optional[dict] = None  # code -> tuple of floats aligned with edges

    @property
    def states(self):
        return self.edges.keys()

    def __len__(self):
        return len(self.edges)

    def n_edges(self) -> int:
        return sum(len(s) for s in self.edges.values())

    def row(self, code: int) -> list:
        succ = self.edges[code]
        if self.probs is not None and code in self.probs:
            return list(zip(succ, self.probs[code]))
        if not succ:
            return []
        p = 1.0 / len(succ)
        return [(w, p) for w in succ]

    @classmethod
    def from_rows(cls, rows: dict) -> "ExplicitSTG":
        """Build a weighted graph from ``{state: [(succ, prob), ...]}``."""
        edges, probs = {}, {}
        for u, row in rows.items():
            edges[u] = tuple(w for w, _ in row)
            probs[u] = tuple(float(p) for _, p in row)
            for w, _ in row:
                edges.setdefault(w, ())
        for u in edges:
            probs.setdefault(u, ())
        return cls(edges, probs)


def build_stg(model, roots: Optional[Iterable] = None, cap: int = DEFAULT_STATE_CAP) -> ExplicitSTG:
    """Forward-reachable STG from ``roots`` (states or codes), or the full STG."""
    succ = model.successor_codes
    if roots is None:
        if model.n_states > cap:
            raise CapacityError(f"state-space too large: {model.n_states} states exceeds cap {cap}")
        return ExplicitSTG({c: succ(c) for c in range(model.n_states)})
    queue = deque()
    edges = {}
    for r in roots:
        code = r if isinstance(r, int) else model.encode(r)
        if code not in edges:
            edges[code] = None
            queue.append(code)
    while queue:
        u = queue.popleft()
        out = succ(u)
        edges[u] = out
        for w in out:
            if w not in edges:
                if len(edges) >= cap:
                    raise CapacityError(f"state-space too large: more than {cap} reachable states (cap {cap})")
                edges[w] = None
                queue.append(w)
    return ExplicitSTG(edges)


def tarjan(nodes: Iterable, succ: Callable, within: Optional[Callable] = None) -> list:
    """Iterative Tarjan over the graph reachable from ``nodes``.

    ``succ(u)`` gives successors; if ``within`` is given, successors failing
    it are ignored. Returns SCCs (lists) in reverse topological order of the
    condensation: an SCC is emitted only after every SCC it can reach.
    """
    index = {}
    low = {}
    on_stack = set()
    stack = []
    out = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        work = [(root, iter(succ(root)))]
        while work:
            u, it = work[-1]
            pushed = False
            for w in it:
                if within is not None and not within(w):
                    continue
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ(w))))
                    pushed = True
                    break
                if w in on_stack and index[w] < low[u]:
                    low[u] = index[w]
            if pushed:
                continue
            work.pop()
            if work:
                p = work[-1][0]
                if low[u] < low[p]:
                    low[p] = low[u]
            if low[u] == index[u]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == u:
                        break
                out.append(comp)
    return out


@dataclass
class SccDecomposition:
    component_id: dict  # code -> scc index
    members: list  # per scc: sorted list of codes
    terminal_flags: list = field(default_factory=list)

    def terminal(self) -> list:
        return [i for i, t in enumerate(self.terminal_flags) if t]


def tarjan_scc(stg: ExplicitSTG) -> SccDecomposition:
    edges = stg.edges
    comps = tarjan(sorted(edges), lambda u: edges[u])
    component_id = {}
    members = []
    for k, comp in enumerate(comps):
        for u in comp:
            component_id[u] = k
        members.append(sorted(comp))
    terminal = []
    for k, comp in enumerate(members):
        terminal.append(all(component_id[w] == k for u in comp for w in edges[u]))
    return SccDecomposition(component_id, members, terminal)


def attractors(dec: SccDecomposition) -> list:
    """One attractor per terminal SCC, ordered by smallest member code."""
    found = [Attractor.complex(dec.members[k]) for k in dec.terminal()]
    return sorted(found, key=lambda a: a.states[0])


def model_attractors(model, roots=None, cap: int = DEFAULT_STATE_CAP) -> list:
    return attractors(tarjan_scc(build_stg(model, roots, cap)))


def quotient_dot(stg: ExplicitSTG, dec: SccDecomposition, model=None) -> str:
    """Graphviz rendering of the condensation (one node per SCC)."""
    lines = ["digraph quotient {"]
    for k, comp in enumerate(dec.members):
        if model is not None and len(comp) <= 4:
            label = "\\n".join(model.format_state(c) for c in comp)
        else:
            label = f"{len(comp)} states"
        shape = "doublecircle" if dec.terminal_flags[k] else "box"
        lines.append(f'  s{k} [label="{label}", shape={shape}];')
    arcs = set()
    for u, succ in stg.edges.items():
        a = dec.component_id[u]
        for w in succ:
            b = dec.component_id[w]
            if a != b:
                arcs.add((a, b))
    for a, b in sorted(arcs):
        lines.append(f"  s{a} -> s{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"
