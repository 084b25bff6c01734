"""Monte Carlo walks that dismantle the cycles they run into.

Each simulation follows the asynchronous dynamics from a start state. When
the walk revisits a state of the current incarnation, the cycle it just
closed is (optionally) extended to a larger strongly connected set and
rewired: every transition inside the set is replaced by direct transitions
to the set's exits, weighted by ``(I - q)^-1 r`` so that absorption
probabilities are unchanged. The walk ends on a state with no successors
(point attractor) or on a closed set (complex attractor), or on an oracle.

Runs are processed in batches. Complex attractors discovered and transient
rewirings admitted to the cache during a batch become visible to later
batches only, so results depend on the seed alone, never on how runs were
spread over workers.
"""

from __future__ import annotations

import bisect
import csv
import io
import itertools
import math
import os
import threading
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .parser import ModelDocument, OracleSet, initial_state
from .results import AbsorptionResult, Attractor, AttractorEstimate
from .stg import tarjan

DENSE_SOLVE_LIMIT = 2048
MEMO_LIMIT = 4096
CONFIRMED_LIMIT = 1 << 20


class NoExitError(ValueError):
    """The cycle has no transition leaving it: it lies inside an attractor."""


@dataclass
class AvatarConfig:
    runs: int = 10_000
    seed: int = 0
    tau0: int = 3
    min_cycle_to_rewire: int = 4
    explicit_transition_budget: int = 100_000
    small_stg_threshold: int = 1 << 10
    inflationary: str = "auto"  # auto | on | off
    keep_transients: bool = True
    keep_transients_min_size: int = 32
    keep_transients_max_exit_ratio: float = 1.0
    max_steps_per_run: int = 10_000_000
    inflation_state_budget: int = 1 << 20
    sync_every: int = 250
    threads: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.tau0 < 1:
            raise ValueError("tau0 must be >= 1")
        if self.inflationary not in ("auto", "on", "off"):
            raise ValueError("inflationary must be auto, on or off")
        for name in ("min_cycle_to_rewire", "explicit_transition_budget", "small_stg_threshold",
                     "keep_transients_min_size", "keep_transients_max_exit_ratio"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.sync_every < 1:
            raise ValueError("sync_every must be >= 1")


# ---------------------------------------------------------------------------
# building blocks

class CycleUnionFind:
    """Disjoint sets over state codes that shared a dismantled cycle."""

    def __init__(self):
        self.parent = {}
        self.size = {}

    def find(self, x):
        parent = self.parent
        if x not in parent:
            return x
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a, b):
        for x in (a, b):
            if x not in self.parent:
                self.parent[x] = x
                self.size[x] = 1
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size.pop(rb)
        return ra

    def union_all(self, states):
        it = iter(states)
        first = next(it)
        self.union(first, first)
        for s in it:
            self.union(first, s)

    def members(self, x) -> set:
        root = self.find(x)
        if x not in self.parent:
            return {x}
        return {y for y in self.parent if self.find(y) == root}


@dataclass
class Row:
    """Explicit weighted transitions of an overridden state."""

    targets: tuple
    probs: tuple
    cum: list = field(repr=False, default_factory=list)

    def __post_init__(self):
        if not self.cum:
            self.cum = list(itertools.accumulate(self.probs))

    def pairs(self):
        return list(zip(self.targets, self.probs))


@dataclass
class RewireRecord:
    cycle: tuple  # sorted member codes
    exits: tuple  # sorted exit codes
    rows: dict  # member -> Row

    def row_dict(self, c) -> dict:
        r = self.rows[c]
        return dict(zip(r.targets, r.probs))


def detect_cycle(visited: dict, path: list, v_next) -> Optional[list]:
    """States visited since ``v_next`` was first seen in this incarnation (None if unseen)."""
    j = visited.get(v_next)
    if j is None:
        return None
    return path[j:]


def cycle_exits(cycle, row_fn: Callable) -> list:
    inside = set(cycle)
    return sorted({w for c in inside for w, p in row_fn(c) if p > 0 and w not in inside})


def extend_cycle(cycle, succ: Callable, tau: int, inflationary: bool = False,
                 budget: Optional[int] = None) -> set:
    """Grow ``cycle`` to the SCC containing it in the graph explored from it.

    Exploration is breadth-first up to depth ``tau`` or, when
    ``inflationary``, until no new state appears (bounded by ``budget``
    explored states). The result always contains ``cycle`` and every state
    in it is mutually reachable with ``cycle`` inside the explored region.
    """
    cycle = list(cycle)
    explored = set(cycle)
    frontier = cycle
    depth = 0
    while frontier and (inflationary or depth < tau):
        nxt = []
        for u in frontier:
            for w in succ(u):
                if w not in explored:
                    explored.add(w)
                    nxt.append(w)
        frontier = nxt
        depth += 1
        if budget is not None and len(explored) > budget:
            break
    root = cycle[0]
    comps = tarjan([root], succ, within=explored.__contains__)
    for comp in comps:
        if root in comp:
            out = set(comp)
            out.update(cycle)
            return out
    raise AssertionError("root SCC not found")


def rewire(cycle, row_fn: Callable) -> RewireRecord:
    """Replace transitions inside ``cycle`` by direct exits weighted by ``(I - q)^-1 r``.

    ``row_fn(state)`` returns the current ``[(successor, probability), ...]``.
    Raises :class:`NoExitError` when no transition leaves the set.
    """
    members = sorted(set(cycle))
    idx = {c: i for i, c in enumerate(members)}
    exits = cycle_exits(members, row_fn)
    if not exits:
        raise NoExitError(f"cycle of {len(members)} states has no exit")
    eidx = {e: j for j, e in enumerate(exits)}
    k, b = len(members), len(exits)
    qi, qj, qv, ri, rj, rv = [], [], [], [], [], []
    for c in members:
        i = idx[c]
        for w, p in row_fn(c):
            if p <= 0:
                continue
            if w in idx:
                qi.append(i)
                qj.append(idx[w])
                qv.append(p)
            else:
                ri.append(i)
                rj.append(eidx[w])
                rv.append(p)
    if k <= DENSE_SOLVE_LIMIT:
        q = np.zeros((k, k))
        r = np.zeros((k, b))
        np.add.at(q, (qi, qj), qv)
        np.add.at(r, (ri, rj), rv)
        try:
            X = np.linalg.solve(np.eye(k) - q, r)
        except np.linalg.LinAlgError:
            X = None
        if X is None or np.any(np.abs(X.sum(axis=1) - 1.0) > 1e-9):
            # nearly closed set: I - q is ill-conditioned, eliminate without cancellation
            X = _reduction_exit_law(q, r)
    else:
        q = sp.csr_matrix((qv, (qi, qj)), shape=(k, k))
        r = sp.csr_matrix((rv, (ri, rj)), shape=(k, b))
        X = _series_exit_law(q, r)
        if X is None:
            X = spla.splu((sp.identity(k, format="csc") - q).tocsc()).solve(r.toarray())
    X = np.where(X > 0, X, 0.0)
    sums = X.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise NoExitError("exit law does not sum to one: part of the cycle is closed")
    rows = {}
    for c in members:
        x = X[idx[c]] / sums[idx[c]]
        nz = np.nonzero(x)[0]
        rows[c] = Row(tuple(exits[j] for j in nz), tuple(float(x[j]) for j in nz))
    return RewireRecord(tuple(members), tuple(exits), rows)


def _series_exit_law(q, r, tol: float = 1e-12, max_iter: int = 100_000):
    # sum_j q^j r, stopping once ||q^j 1||_inf < tol (None if that takes too long)
    acc = r.toarray()
    term = acc.copy()
    mass = np.ones(q.shape[0])
    for _ in range(max_iter):
        mass = q @ mass
        if mass.max(initial=0.0) < tol:
            return acc
        term = q @ term
        acc += term
    return None


def _reduction_exit_law(q, r):
    """Exit law by eliminating states one at a time (no subtractive cancellation).

    After states ``0..t-1`` are folded into the others, state ``t`` stays
    put with probability ``q[t, t]``; its escape mass ``1 - q[t, t]`` is
    taken as the sum of its other entries so that nearly closed sets keep
    full relative accuracy.
    """
    q = q.copy()
    r = r.copy()
    k = q.shape[0]
    s = np.empty(k)
    for t in range(k):
        out = q[t, t + 1:].sum() + r[t].sum()
        if out <= 0:
            raise NoExitError("part of the cycle cannot reach an exit")
        s[t] = out
        rows = np.nonzero(q[t + 1:, t])[0] + t + 1
        if len(rows):
            w = q[rows, t][:, None] / out
            q[rows, t + 1:] += w * q[t, t + 1:]
            r[rows] += w * r[t]
            q[rows, t] = 0.0
    X = np.zeros_like(r)
    for t in range(k - 1, -1, -1):
        X[t] = (r[t] + q[t, t + 1:] @ X[t + 1:]) / s[t]
    return X


class TransientCache:
    """Rewirings of large transients kept across simulations.

    Keys are the sorted member tuples; an entry is reused only for the
    exact same member set.
    """

    def __init__(self):
        self._records: dict = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._records)

    def __contains__(self, key):
        return key in self._records

    def get(self, key) -> Optional[RewireRecord]:
        return self._records.get(key)

    def insert(self, record: RewireRecord) -> bool:
        with self._lock:
            if record.cycle in self._records:
                return False
            self._records[record.cycle] = record
            return True

    def records(self):
        return list(self._records.values())


def exit_ratio(model, members) -> float:
    inside = set(members)
    out = sum(1 for c in inside for w in model.successor_codes(c) if w not in inside)
    return out / len(inside)


# ---------------------------------------------------------------------------
# one simulation

@dataclass
class Shared:
    """Read-only context for one batch of simulations."""

    installed: dict  # code -> Row, from cached transients
    cache: dict  # member tuple -> RewireRecord
    found: dict  # code -> Attractor, complex attractors discovered so far
    small_stg: bool
    # rewirings of sets without overridden members depend on the member set
    # alone, so they can be reused freely (this never changes any draw)
    memo: dict = field(default_factory=dict)
    confirmed: dict = field(default_factory=dict)  # code -> members of its attractor


@dataclass
class SimOutcome:
    run: int
    start: int
    attractor: Optional[Attractor]
    steps: int
    incarnations: int
    aborted: bool = False
    new_records: list = field(default_factory=list)
    cstar_size: int = 1


_ORIGINAL = object()


class _Uniforms:
    __slots__ = ("gen", "buf")

    def __init__(self, gen):
        self.gen = gen
        self.buf = []

    def __call__(self) -> float:
        if not self.buf:
            self.buf = self.gen.random(512).tolist()
        return self.buf.pop()


def run_generator(seed: int, run: int) -> np.random.Generator:
    """Independent stream for run ``run`` (same as ``SeedSequence(seed).spawn(...)[run]``)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run,))))


def draw_start(model, doc: ModelDocument, u) -> int:
    v = list(initial_state(doc))
    for i in sorted(doc.initial.sampled):
        v[i] = min(int(u() * model.radix[i]), model.radix[i] - 1)
    return model.encode(v)


def confirm_attractor(model, v, budget: Optional[int] = None) -> Optional[list]:
    """Members of the terminal SCC containing ``v`` in the original dynamics, or None if ``v`` is transient."""
    succ = model.successor_codes
    seen = {v}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        for w in succ(u):
            if w not in seen:
                seen.add(w)
                queue.append(w)
                if budget is not None and len(seen) > budget:
                    return None
    comps = tarjan([v], succ)
    if len(comps) != 1:
        return None
    return sorted(comps[0])


def avatar_simulation(model, start: int, cfg: AvatarConfig, shared: Shared, u,
                      oracles: Optional[OracleSet] = None, run: int = 0) -> SimOutcome:
    succ_of = model.successor_codes
    installed = shared.installed
    local: dict = {}

    def row_fn(c):
        row = local.get(c)
        if row is None:
            row = installed.get(c)
        if row is None or row is _ORIGINAL:
            s = succ_of(c)
            return [(w, 1.0 / len(s)) for w in s]
        return row.pairs()

    def eff_succ(c):
        row = local.get(c)
        if row is None:
            row = installed.get(c)
        if row is None or row is _ORIGINAL:
            return succ_of(c)
        return row.targets

    found = shared.found
    match = oracles.match if oracles else None
    inflationary = cfg.inflationary == "on" or (cfg.inflationary == "auto" and shared.small_stg)
    tau = cfg.tau0
    explicit = 0
    uf = CycleUnionFind()
    out = SimOutcome(run, start, None, 0, 0)
    v = start
    visited = {v: 0}
    path = [v]
    steps = 0
    max_steps = cfg.max_steps_per_run
    while True:
        if match is not None:
            oid = match(v)
            if oid is not None:
                out.attractor = Attractor("complex", (), label=oid, oracle_size=oracles.size(oid))
                break
        hit = found.get(v)
        if hit is not None:
            out.attractor = hit
            out.cstar_size = len(hit.states)
            break
        row = local.get(v)
        if row is None:
            row = installed.get(v)
        if row is None or row is _ORIGINAL:
            succ = succ_of(v)
            if not succ:
                cstar = uf.members(v)
                if len(cstar) != 1:
                    raise AssertionError("a stable state was part of a dismantled cycle")
                out.attractor = Attractor.point(v)
                break
            nxt = succ[int(u() * len(succ))]
        else:
            targets = row.targets
            k = bisect.bisect_right(row.cum, u() * row.cum[-1])
            nxt = targets[k if k < len(targets) else -1]
        steps += 1
        if steps > max_steps:
            out.aborted = True
            break
        j = visited.get(nxt)
        if j is None:
            visited[nxt] = len(path)
            path.append(nxt)
            v = nxt
            continue

        # cycle closed: path[j:] are the states visited since nxt was discovered
        cycle = path[j:]
        v = nxt
        known = shared.confirmed.get(v) if inflationary else None
        if (known is not None and len(known) <= cfg.inflation_state_budget
                and not any(c in local or c in installed for c in known)):
            # full closure from inside an untouched attractor gives back the attractor
            key = known
        else:
            key = tuple(sorted(extend_cycle(cycle, eff_succ, tau, inflationary, cfg.inflation_state_budget)))
        rec = shared.cache.get(key)
        if rec is None:
            if not cycle_exits(key, row_fn):
                members = shared.confirmed.get(v)
                if members is None:
                    members = confirm_attractor(model, v)
                    if members is not None and len(shared.confirmed) < CONFIRMED_LIMIT:
                        members = tuple(members)
                        for c in members:
                            shared.confirmed[c] = members
                if members is not None:
                    uf.union_all(key)
                    cstar = uf.members(v)
                    if not cstar <= set(members):
                        raise AssertionError("reconstructed attractor leaks outside its terminal SCC")
                    out.attractor = Attractor.complex(members)
                    out.cstar_size = len(cstar)
                    break
                # closed only because of overrides: fall back to the original rows
                for c in key:
                    local[c] = _ORIGINAL
                visited = {v: 0}
                path = [v]
                continue
            if len(key) < cfg.min_cycle_to_rewire:
                visited = {v: 0}
                path = [v]
                continue
            pure = not any(c in local or c in installed for c in key)
            rec = shared.memo.get(key) if pure else None
            if rec is None:
                rec = rewire(key, row_fn)
                if pure and len(shared.memo) < MEMO_LIMIT:
                    shared.memo[key] = rec
            if (cfg.keep_transients and len(key) >= cfg.keep_transients_min_size
                    and exit_ratio(model, key) < cfg.keep_transients_max_exit_ratio):
                out.new_records.append(rec)
        for c, r in rec.rows.items():
            local[c] = r
            explicit += len(r.targets)
        uf.union_all(key)
        out.incarnations += 1
        tau *= 2
        if cfg.inflationary == "auto" and explicit > cfg.explicit_transition_budget:
            inflationary = True
        visited = {v: 0}
        path = [v]
    out.steps = steps
    return out


# ---------------------------------------------------------------------------
# many simulations

@dataclass
class AvatarRun:
    result: AbsorptionResult
    outcomes: list
    cache: TransientCache
    hit: list = field(default_factory=list)  # per outcome: its AttractorEstimate (None if aborted)


def _simulate_many(model, doc, cfg, shared, runs):
    oracles = OracleSet(model, doc.oracles)
    out = []
    for run in runs:
        u = _Uniforms(run_generator(cfg.seed, run))
        start = draw_start(model, doc, u)
        out.append(avatar_simulation(model, start, cfg, shared, u, oracles, run))
    return out


def _worker(args):
    model, doc, cfg, shared, runs = args
    return _simulate_many(model, doc, cfg, shared, runs)


def _split(seq, parts):
    k, m = divmod(len(seq), parts)
    out, i = [], 0
    for p in range(parts):
        n = k + (1 if p < m else 0)
        if n:
            out.append(seq[i:i + n])
        i += n
    return out


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("ATTRQ_THREADS", "1")))
    except ValueError:
        return 1


def avatar_run(doc: ModelDocument, cfg: Optional[AvatarConfig] = None,
               cache: Optional[TransientCache] = None) -> AvatarRun:
    cfg = cfg or AvatarConfig()
    model = doc.model
    cache = cache if cache is not None else TransientCache()
    t0 = time.perf_counter()
    found: dict = {}
    installed: dict = {}
    for rec in cache.records():
        installed.update(rec.rows)
    small = model.n_states <= cfg.small_stg_threshold
    outcomes = []
    memo: dict = {}
    confirmed: dict = {}
    pool = ProcessPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for b0 in range(0, cfg.runs, cfg.sync_every):
            runs = list(range(b0, min(cfg.runs, b0 + cfg.sync_every)))
            shared = Shared(installed, {r.cycle: r for r in cache.records()}, found, small, memo, confirmed)
            if pool is None:
                batch = _simulate_many(model, doc, cfg, shared, runs)
            else:
                jobs = [(model, doc, cfg, shared, chunk) for chunk in _split(runs, cfg.threads)]
                batch = [o for part in pool.map(_worker, jobs) for o in part]
            batch.sort(key=lambda o: o.run)
            # merge in run order so the shared state is independent of scheduling
            installed = dict(installed)
            found = dict(found)
            for o in batch:
                for rec in o.new_records:
                    if cache.insert(rec):
                        installed.update(rec.rows)
                a = o.attractor
                if a is not None and a.kind == "complex" and a.states and a.states[0] not in found:
                    for c in a.states:
                        found[c] = a
            outcomes.extend(batch)
    finally:
        if pool is not None:
            pool.shutdown()
    res, hit = aggregate(doc, outcomes, cfg)
    res.wall_time_s = time.perf_counter() - t0
    res.metadata["cached_transients"] = len(cache)
    return AvatarRun(res, outcomes, cache, hit)


def aggregate(doc: ModelDocument, outcomes: list, cfg: AvatarConfig):
    """Hit frequencies, binomial standard errors and mean depths per attractor.

    With sampled input components, attractors that differ only in those
    inputs are merged and the input valuations leading to each are kept.
    """
    model = doc.model
    runs = len(outcomes)
    sampled_inputs = sorted(i for i in doc.initial.sampled if model.input_flags[i])
    names = model.names

    def project(code):
        for i in sampled_inputs:
            code -= ((code // model.weights[i]) % model.radix[i]) * model.weights[i]
        return code

    def valuation(code):
        return ",".join(f"{names[i]}={(code // model.weights[i]) % model.radix[i]}" for i in sampled_inputs)

    groups: dict = {}
    keys = []
    aborted = 0
    for o in outcomes:
        if o.aborted or o.attractor is None:
            aborted += 1
            keys.append(None)
            continue
        a = o.attractor
        key = (a.label, tuple(sorted({project(c) for c in a.states}))) if sampled_inputs else (a.label, a.states)
        keys.append(key)
        g = groups.setdefault(key, {"originals": set(), "hits": 0, "steps": 0, "inputs": {}})
        g["originals"].add(a)
        g["hits"] += 1
        g["steps"] += o.steps
        if sampled_inputs:
            val = valuation(o.start)
            g["inputs"][val] = g["inputs"].get(val, 0) + 1
    ests = []
    est_of = {}
    for key, g in groups.items():
        label, pstates = key
        originals = g["originals"]
        if len(originals) == 1:
            a = next(iter(originals))
        else:
            kind = "point" if all(o.kind == "point" for o in originals) else "complex"
            a = Attractor(kind, pstates, label)
        p = g["hits"] / runs
        est = AttractorEstimate(a, p, std_error=math.sqrt(p * (1 - p) / runs), avg_depth=g["steps"] / g["hits"])
        if sampled_inputs:
            est.inputs = {k: v / runs for k, v in g["inputs"].items()}
        ests.append(est)
        est_of[key] = est
    params = {"runs": cfg.runs, "seed": cfg.seed, "tau": cfg.tau0, "min_rewire": cfg.min_cycle_to_rewire,
              "inflationary": cfg.inflationary, "keep_transients": cfg.keep_transients}
    res = AbsorptionResult(
        "avatar", ests, residual=aborted / runs if runs else 0.0, parameters=params, model=doc.name, runs=runs,
        metadata={"aborted_runs": aborted,
                  "rewirings": sum(o.incarnations for o in outcomes)},
    )
    return res, [None if k is None else est_of[k] for k in keys]


TRACE_COLUMNS = ["run", "attractor", "steps", "incarnations"]


def emit_trace(run: AvatarRun, path=None) -> str:
    from .results import attractor_ids

    ids = {id(est): aid for aid, est in zip(attractor_ids(run.result), run.result.sorted_attractors())}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for o, est in zip(run.outcomes, run.hit):
        w.writerow([o.run, "aborted" if est is None else ids[id(est)], o.steps, o.incarnations])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
