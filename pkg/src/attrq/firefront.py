"""Breadth-wise probability propagation with a neglected set.

Mass starts on the initial state and is pushed to successors one
iteration at a time. States whose mass falls below ``alpha`` are parked in
the neglected set ``N`` (and re-promoted if they later accumulate
``alpha``); stable states and oracle hits collect mass in ``A``. The run
stops when the front holds at most ``beta``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Optional

from .parser import ModelDocument, OracleSet, initial_state
from .results import AbsorptionResult, Attractor, AttractorEstimate

MAX_ITER_CAP = 1 << 31
TRACE_COLUMNS = ["iteration", "F_size", "N_size", "A_size", "P_F", "P_N", "P_A"]


@dataclass
class FirefrontConfig:
    alpha: float = 1e-5
    beta: float = 1e-3
    max_iterations: Optional[int] = None  # default |S|^2, capped at 2^31
    trace: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0 <= self.beta:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class FirefrontState:
    F: dict  # code -> mass
    N: dict = field(default_factory=dict)  # code -> mass
    A: dict = field(default_factory=dict)  # code (point attractor) or oracle id -> mass
    iteration: int = 0

    def masses(self):
        return math.fsum(self.F.values()), math.fsum(self.N.values()), math.fsum(self.A.values())

    def trace_row(self):
        pf, pn, pa = self.masses()
        return (self.iteration, len(self.F), len(self.N), len(self.A), pf, pn, pa)


def firefront_step(model, st: FirefrontState, cfg: FirefrontConfig,
                   oracles: Optional[OracleSet] = None) -> FirefrontState:
    """One outer iteration: expand every state of the front."""
    alpha = cfg.alpha
    succ_of = model.successor_codes
    match = oracles.match if oracles else (lambda c: None)
    F_next: dict = {}
    N, A = st.N, st.A
    for v in sorted(st.F):
        p_v = st.F[v]
        oid = match(v)
        if oid is not None:
            A[oid] = A.get(oid, 0.0) + p_v
            continue
        succ = succ_of(v)
        if not succ:
            A[v] = A.get(v, 0.0) + p_v
            continue
        p = p_v / len(succ)
        for w in succ:
            oid = match(w)
            if oid is not None:
                A[oid] = A.get(oid, 0.0) + p
                continue
            if w in A:
                A[w] += p
            elif not succ_of(w):
                # stable successors are absorbed on arrival, like oracle hits
                A[w] = p
            elif w in F_next:
                F_next[w] += p
            elif w in N:
                m = N[w] + p
                if m >= alpha:
                    del N[w]
                    F_next[w] = m
                else:
                    N[w] = m
            elif p >= alpha:
                F_next[w] = p
            else:
                N[w] = p
    return FirefrontState(F_next, N, A, st.iteration + 1)


@dataclass
class FirefrontRun:
    result: AbsorptionResult
    state: FirefrontState
    trace: list  # rows as in TRACE_COLUMNS


def default_max_iterations(model) -> int:
    return min(model.n_states ** 2, MAX_ITER_CAP)


def firefront_run(doc: ModelDocument, cfg: Optional[FirefrontConfig] = None) -> FirefrontRun:
    cfg = cfg or FirefrontConfig()
    model = doc.model
    if doc.initial.sampled:
        raise ValueError("firefront needs a point initial condition (sampling is not supported)")
    t0 = time.perf_counter()
    max_iter = cfg.max_iterations or default_max_iterations(model)
    oracles = OracleSet(model, doc.oracles)
    st = FirefrontState({model.encode(initial_state(doc)): 1.0})
    trace = [st.trace_row()]
    while math.fsum(st.F.values()) > cfg.beta and st.iteration < max_iter:
        st = firefront_step(model, st, cfg, oracles)
        if cfg.trace:
            trace.append(st.trace_row())
    pf, pn, _ = st.masses()
    residual = pf + pn
    ests = []
    for key, mass in st.A.items():
        if isinstance(key, str):
            a = Attractor("complex", (), label=key, oracle_size=oracles.size(key))
        else:
            a = Attractor.point(key)
        ests.append(AttractorEstimate(a, mass, lower_bound=mass, upper_bound=min(1.0, mass + pf + pn)))
    res = AbsorptionResult(
        "firefront", ests, residual=residual,
        parameters={"alpha": cfg.alpha, "beta": cfg.beta, "max_iterations": max_iter},
        model=doc.name, iterations=st.iteration,
        metadata={"terminated_by": "beta" if pf <= cfg.beta else "max_iterations",
                  "front_probability": pf, "neglected_probability": pn,
                  "front_size": len(st.F), "neglected_size": len(st.N)},
    )
    res.wall_time_s = time.perf_counter() - t0
    return FirefrontRun(res, st, trace if cfg.trace else [])


def emit_trace(run: FirefrontRun, path=None) -> str:
    """CSV of the per-iteration series (also written to ``path`` if given)."""
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in run.trace:
        w.writerow([row[0], row[1], row[2], row[3], repr(row[4]), repr(row[5]), repr(row[6])])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
