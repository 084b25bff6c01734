from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from attrq.markov import (
    AbsorbingChain, SingularChainError, absorption_matrix, absorption_probabilities, build_chain,
    decay_horizon, exact_run, power_absorption_estimate,
)
from attrq.model import ComponentDef, LogicalModel
from attrq.parser import ModelDocument, load_model
from attrq.stg import ExplicitSTG, build_stg
from oracles import C1, FOUR_CYCLE_EXITS, FOUR_CYCLE_ROWS, MODELS, dense_absorption, random_boolean, repressilator, toggle

seeds = st.integers(0, 2**32 - 1)


def _four_cycle_chain():
    return build_chain(ExplicitSTG.from_rows(FOUR_CYCLE_ROWS))


def _by_point(res):
    return {e.attractor.states[0]: e.probability for e in res.attractors if e.attractor.kind == "point"}


def test_toggle_chain():
    chain = build_chain(build_stg(toggle().model))
    assert chain.transient == [0, 3]
    assert chain.theta == 2
    assert chain.P.toarray().tolist() == [[0.5, 0.5], [0.5, 0.5]]
    assert chain.Q.nnz == 0


def test_repressilator_chain():
    chain = build_chain(build_stg(repressilator().model))
    assert chain.transient == [0, 7]
    assert chain.theta == 1
    assert np.allclose(chain.P.toarray().sum(axis=1), 1.0)


def test_stable_only_model():
    m = LogicalModel([ComponentDef("a", 1, ())])
    chain = build_chain(build_stg(m, roots=[0]))
    assert chain.transient == [] and chain.theta == 1
    res = absorption_probabilities(chain, {0: 1.0})
    assert res.total_probability() == 1.0


def test_toggle_absorption():
    chain = build_chain(build_stg(toggle().model))
    assert _by_point(absorption_probabilities(chain, {0: 1.0})) == {1: 0.5, 2: 0.5}
    exact = absorption_probabilities(chain, {0: 1.0}, rational=True)
    assert exact.metadata["exact"] == ["1/2", "1/2"]


def test_four_cycle_exits():
    chain = _four_cycle_chain()
    res = _by_point(absorption_probabilities(chain, {C1: 1.0}))
    for v, (num, den) in FOUR_CYCLE_EXITS.items():
        assert res[v] == pytest.approx(num / den, abs=1e-12)
    exact = absorption_probabilities(chain, {C1: 1.0}, rational=True).metadata["exact"]
    assert sorted(Fraction(x) for x in exact) == sorted(Fraction(*f) for f in FOUR_CYCLE_EXITS.values())


def test_power_examples():
    chain = build_chain(build_stg(toggle().model))
    res = power_absorption_estimate(chain, {0: 1.0}, 1)
    assert _by_point(res) == {1: 0.5, 2: 0.5} and res.residual == 0.0
    zero = power_absorption_estimate(chain, {0: 1.0}, 0)
    assert zero.total_probability() == 0.0 and zero.residual == 1.0
    four = power_absorption_estimate(_four_cycle_chain(), {C1: 1.0}, 40)
    for v, (num, den) in FOUR_CYCLE_EXITS.items():
        assert _by_point(four)[v] == pytest.approx(num / den, abs=1e-9)


def test_cellcycle_uniform():
    doc = load_model(MODELS / "cellcycle_sampling.av")
    res = exact_run(doc)
    kinds = {e.attractor.kind: e.probability for e in res.attractors}
    assert kinds["complex"] == pytest.approx(0.5, abs=1e-9)
    assert kinds["point"] == pytest.approx(0.5, abs=1e-9)


@pytest.mark.filterwarnings("ignore::scipy.sparse.linalg.MatrixRankWarning")
def test_singular_chain_detected():
    Q = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    chain = AbsorbingChain([0, 1], [], Q, sp.csr_matrix((2, 0)), {0: [(1, 1.0)], 1: [(0, 1.0)]}, {})
    with pytest.raises(SingularChainError):
        absorption_probabilities(chain, {0: 1.0})
    with pytest.raises(SingularChainError):
        absorption_probabilities(chain, {0: 1.0}, rational=True)
    with pytest.raises(SingularChainError):
        decay_horizon(chain, max_steps=100)


def test_mass_outside_chain_rejected():
    with pytest.raises(KeyError):
        absorption_probabilities(_four_cycle_chain(), {99: 1.0})


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), seeds, st.data())
def test_solvers_agree(n, seed, data):
    m = random_boolean(n, 2, seed)
    v0 = data.draw(st.integers(0, m.n_states - 1))
    chain = build_chain(build_stg(m, roots=[v0]))
    exact = absorption_probabilities(chain, {v0: 1.0})
    assert abs(exact.total_probability() - 1.0) <= 1e-9
    k = max(1, decay_horizon(chain))  # a start inside an attractor needs one step
    power = power_absorption_estimate(chain, {v0: 1.0}, k)
    assert len(power.attractors) == len(exact.attractors)
    for a, b in zip(exact.attractors, power.attractors):
        assert a.attractor == b.attractor
        assert abs(a.probability - b.probability) <= 1e-9
    # uncollapsed reference
    dense = dense_absorption(m, {v0: 1.0})
    got = {frozenset(e.attractor.states): e.probability for e in exact.attractors}
    for a, p in dense.items():
        assert abs(got.get(a, 0.0) - p) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), seeds)
def test_rational_matches_float(n, seed):
    m = random_boolean(n, 2, seed)
    chain = build_chain(build_stg(m))
    mu0 = {c: 1.0 / m.n_states for c in range(m.n_states)}
    fl = absorption_probabilities(chain, mu0)
    ra = absorption_probabilities(chain, mu0, rational=True)
    assert sum(Fraction(x) for x in ra.metadata["exact"]) == 1
    for a, b in zip(fl.attractors, ra.attractors):
        assert abs(a.probability - b.probability) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), seeds)
def test_power_monotone(n, seed):
    m = random_boolean(n, 2, seed)
    chain = build_chain(build_stg(m, roots=[0]))
    exact = absorption_probabilities(chain, {0: 1.0})
    prev = None
    for k in (0, 1, 2, 4, 8, 16, 64):
        cur = power_absorption_estimate(chain, {0: 1.0}, k)
        vals = {e.attractor: e.probability for e in cur.attractors}
        if prev is not None:
            for a, p in prev.items():
                assert vals.get(a, 0.0) >= p - 1e-15
        for e in exact.attractors:
            assert vals.get(e.attractor, 0.0) <= e.probability + 1e-12
        prev = vals


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), seeds)
def test_absorption_matrix_rows(n, seed):
    m = random_boolean(n, 2, seed)
    chain = build_chain(build_stg(m))
    X = absorption_matrix(chain)
    assert np.allclose(X.sum(axis=1), 1.0, atol=1e-9)
    for i, u in enumerate(chain.transient[:5]):
        res = absorption_probabilities(chain, {u: 1.0})
        for e in res.attractors:
            assert abs(X[i, chain.classes.index(e.attractor)] - e.probability) <= 1e-9


def test_exact_run_sampled_document():
    doc = ModelDocument(toggle().model)
    doc.initial.sampled = frozenset({0, 1})
    res = exact_run(doc)
    assert _by_point(res) == {1: 0.5, 2: 0.5}
