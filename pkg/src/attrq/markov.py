"""Exact absorption probabilities of the stopped chain.

Each attractor (terminal SCC) is collapsed into one absorbing state; the
remaining states form the transient block ``Q`` and ``P`` holds the
transient-to-attractor mass. Absorption probabilities from an initial law
``mu0`` are ``mu0_T (I - Q)^-1 P + mu0_A``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .results import AbsorptionResult, AttractorEstimate
from .stg import ExplicitSTG, SccDecomposition, attractors, build_stg, tarjan_scc


class SingularChainError(ArithmeticError):
    pass


@dataclass
class AbsorbingChain:
    transient: list  # ascending state codes
    classes: list  # list of Attractor
    Q: sp.csr_matrix
    P: sp.csr_matrix
    rows: dict  # transient code -> [(succ, prob)] (for the rational path)
    class_of: dict  # attractor state code -> class index

    @property
    def theta(self) -> int:
        return len(self.classes)

    def position(self) -> dict:
        return {u: k for k, u in enumerate(self.transient)}


def build_chain(stg: ExplicitSTG, dec: Optional[SccDecomposition] = None) -> AbsorbingChain:
    if dec is None:
        dec = tarjan_scc(stg)
    classes = attractors(dec)
    class_of = {}
    for k, a in enumerate(classes):
        for u in a.states:
            class_of[u] = k
    transient = sorted(u for u in stg.edges if u not in class_of)
    pos = {u: k for k, u in enumerate(transient)}
    qi, qj, qv, pi, pj, pv = [], [], [], [], [], []
    rows = {}
    for k, u in enumerate(transient):
        row = stg.row(u)
        rows[u] = row
        for w, p in row:
            if p == 0:
                continue
            if w in pos:
                qi.append(k)
                qj.append(pos[w])
                qv.append(p)
            else:
                pi.append(k)
                pj.append(class_of[w])
                pv.append(p)
    n, m = len(transient), len(classes)
    # duplicate (i, j) pairs are summed by the COO -> CSR conversion
    Q = sp.coo_matrix((qv, (qi, qj)), shape=(n, n)).tocsr()
    P = sp.coo_matrix((pv, (pi, pj)), shape=(n, m)).tocsr()
    return AbsorbingChain(transient, classes, Q, P, rows, class_of)


def _split_mu0(chain: AbsorbingChain, mu0: dict):
    pos = chain.position()
    mu_t = np.zeros(len(chain.transient))
    mu_a = np.zeros(chain.theta)
    for u, p in mu0.items():
        if u in pos:
            mu_t[pos[u]] += p
        elif u in chain.class_of:
            mu_a[chain.class_of[u]] += p
        else:
            raise KeyError(f"initial mass on state {u} outside the chain")
    return mu_t, mu_a


def _result(chain, probs, method, residual=0.0, **kw) -> AbsorptionResult:
    ests = [AttractorEstimate(a, float(p)) for a, p in zip(chain.classes, probs) if p > 0]
    return AbsorptionResult(method, ests, residual=float(residual), **kw)


def absorption_probabilities(chain: AbsorbingChain, mu0: dict, rational: bool = False) -> AbsorptionResult:
    """Exact absorption law from ``mu0`` via a sparse LU solve of ``(I - Q)^T x = mu0_T``.

    With ``rational=True`` the system is eliminated in exact fractions
    (intended for tiny chains; probabilities are then converted to floats,
    the exact values are kept in ``metadata['exact']``).
    """
    t0 = time.perf_counter()
    if rational:
        exact = _rational_absorption(chain, mu0)
        res = _result(chain, [float(x) for x in exact], "exact")
        res.metadata["exact"] = [str(x) for x in exact]
        res.wall_time_s = time.perf_counter() - t0
        return res
    mu_t, mu_a = _split_mu0(chain, mu0)
    probs = mu_a.copy()
    n = len(chain.transient)
    if n and mu_t.any():
        A = (sp.identity(n, format="csc") - chain.Q.T.tocsc()).tocsc()
        with np.errstate(all="ignore"):
            x = np.atleast_1d(spla.spsolve(A, mu_t))
        if not np.all(np.isfinite(x)):
            raise SingularChainError("I - Q is numerically singular (malformed chain)")
        probs += chain.P.T @ x
    res = _result(chain, probs, "exact")
    res.wall_time_s = time.perf_counter() - t0
    return res


def absorption_matrix(chain: AbsorbingChain) -> np.ndarray:
    """``(I - Q)^-1 P``: absorption probabilities from every transient state (rows)."""
    n = len(chain.transient)
    if n == 0:
        return np.zeros((0, chain.theta))
    A = (sp.identity(n, format="csc") - chain.Q.tocsc()).tocsc()
    B = chain.P.toarray()
    lu = spla.splu(A)
    X = lu.solve(B) if B.size else B
    if not np.all(np.isfinite(X)):
        raise SingularChainError("I - Q is numerically singular (malformed chain)")
    return X


def decay_horizon(chain: AbsorbingChain, tol: float = 1e-12, max_steps: int = 10_000_000) -> int:
    """Smallest k with ||Q^k 1||_inf < tol."""
    n = len(chain.transient)
    if n == 0:
        return 0
    y = np.ones(n)
    for k in range(1, max_steps + 1):
        y = chain.Q @ y
        if y.max(initial=0.0) < tol:
            return k
    raise SingularChainError(f"transient mass did not decay below {tol} within {max_steps} steps")


def power_absorption_estimate(chain: AbsorbingChain, mu0: dict, k_max: int) -> AbsorptionResult:
    """Truncated series ``mu0_T (sum_{j<k_max} Q^j) P + mu0_A``.

    The mass still transient after ``k_max`` steps is the residual. With
    ``k_max=0`` nothing is absorbed (initial mass on attractors excepted).
    """
    t0 = time.perf_counter()
    mu_t, mu_a = _split_mu0(chain, mu0)
    acc = np.zeros(chain.theta)
    x = mu_t
    QT, PT = chain.Q.T.tocsr(), chain.P.T.tocsr()
    if k_max > 0:
        acc = acc + mu_a
    for _ in range(k_max):
        if not x.any():
            break
        acc += PT @ x
        x = QT @ x
    residual = math.fsum(x) + (0.0 if k_max > 0 else math.fsum(mu_a))
    res = _result(chain, acc, "power", residual=residual, iterations=k_max)
    res.wall_time_s = time.perf_counter() - t0
    return res


# ---------------------------------------------------------------------------
# exact rational elimination

def _rational_absorption(chain: AbsorbingChain, mu0: dict) -> list:
    pos = chain.position()
    n = len(chain.transient)
    mu = [Fraction(0)] * n
    out = [Fraction(0)] * chain.theta
    for u, p in mu0.items():
        p = Fraction(p)
        if u in pos:
            mu[pos[u]] += p
        elif u in chain.class_of:
            out[chain.class_of[u]] += p
        else:
            raise KeyError(f"initial mass on state {u} outside the chain")

    def frac_row(u):
        row = chain.rows[u]
        if all(isinstance(p, float) for _, p in row) and len({p for _, p in row}) == 1:
            # uniform row: use 1/k rather than the float's binary expansion
            return [(w, Fraction(1, len(row))) for w, _ in row]
        return [(w, Fraction(p)) for w, p in row]

    # A = (I - Q)^T as dict-of-dicts, rows indexed by column state of Q
    A = [dict() for _ in range(n)]
    for k in range(n):
        A[k][k] = Fraction(1)
    for u in chain.transient:
        i = pos[u]
        for w, p in frac_row(u):
            if w in pos:
                j = pos[w]
                A[j][i] = A[j].get(i, Fraction(0)) - p
    b = mu[:]
    # forward elimination, ascending order
    for k in range(n):
        piv = k
        if A[k].get(k, 0) == 0:
            piv = next((r for r in range(k + 1, n) if A[r].get(k, 0) != 0), None)
            if piv is None:
                raise SingularChainError("I - Q is singular (malformed chain)")
            A[k], A[piv] = A[piv], A[k]
            b[k], b[piv] = b[piv], b[k]
        pk = A[k][k]
        for r in range(k + 1, n):
            f = A[r].get(k)
            if not f:
                continue
            f = f / pk
            for c, val in A[k].items():
                nv = A[r].get(c, Fraction(0)) - f * val
                if nv:
                    A[r][c] = nv
                else:
                    A[r].pop(c, None)
            b[r] -= f * b[k]
    x = [Fraction(0)] * n
    for k in range(n - 1, -1, -1):
        s = b[k] - sum(val * x[c] for c, val in A[k].items() if c > k)
        x[k] = s / A[k][k]
    for u in chain.transient:
        xi = x[pos[u]]
        if not xi:
            continue
        for w, p in frac_row(u):
            if w in chain.class_of:
                out[chain.class_of[w]] += xi * p
    return out


# ---------------------------------------------------------------------------

def exact_run(doc, cap=None, rational: bool = False) -> AbsorptionResult:
    """Exact analysis of a model document (point or sampled initial law)."""
    from .parser import initial_distribution
    from .stg import DEFAULT_STATE_CAP

    t0 = time.perf_counter()
    mu0 = initial_distribution(doc)
    stg = build_stg(doc.model, roots=list(mu0), cap=cap or DEFAULT_STATE_CAP)
    dec = tarjan_scc(stg)
    chain = build_chain(stg, dec)
    res = absorption_probabilities(chain, mu0, rational=rational)
    res.model = doc.name
    res.parameters = {"rational": rational}
    res.metadata.update({"reachable_states": len(stg), "transient_states": len(chain.transient)})
    res.wall_time_s = time.perf_counter() - t0
    return res
