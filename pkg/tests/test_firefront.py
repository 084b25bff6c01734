import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrq.firefront import FirefrontConfig, FirefrontState, emit_trace, firefront_run, firefront_step
from attrq.markov import exact_run
from attrq.parser import InitialSpec, ModelDocument, OracleSet, OracleSpec, load_model, parse_model
from oracles import MODELS, TOGGLE, random_boolean, toggle

seeds = st.integers(0, 2**32 - 1)

FLIPFLOP = """\
NODE x 1
NODE y 1
TARGET x 1 : x=0
TARGET y 1 : y=0
"""


def test_toggle_step():
    st0 = FirefrontState({0: 1.0})
    st1 = firefront_step(toggle().model, st0, FirefrontConfig())
    assert st1.F == {} and st1.A == {1: 0.5, 2: 0.5} and st1.iteration == 1


def test_small_mass_goes_to_neglected():
    m = parse_model(FLIPFLOP).model
    st1 = firefront_step(m, FirefrontState({0: 1.6e-5}), FirefrontConfig(alpha=1e-5))
    assert st1.F == {} and st1.N == pytest.approx({1: 8e-6, 2: 8e-6})


def test_neglected_state_is_promoted():
    m = parse_model(FLIPFLOP).model
    # 3 reaches 1 and 2; 1 already holds 6e-6 in N and gets another 8e-6
    st1 = firefront_step(m, FirefrontState({3: 1.6e-5}, N={1: 6e-6}), FirefrontConfig(alpha=1e-5))
    assert st1.F == pytest.approx({1: 1.4e-5})
    assert st1.N == pytest.approx({2: 8e-6})


def test_oracle_successor_absorbed():
    doc = parse_model(TOGGLE + "ORACLE cc : a=0 b=1\n")
    orc = OracleSet(doc.model, doc.oracles)
    st1 = firefront_step(doc.model, FirefrontState({0: 1.0}), FirefrontConfig(), orc)
    assert st1.A == {"cc": 0.5, 1: 0.5}
    run = firefront_run(doc)
    labels = {e.attractor.label: e.probability for e in run.result.attractors}
    assert labels["cc"] == 0.5


def test_oracle_on_start():
    doc = parse_model(TOGGLE + "ORACLE start : a=0 b=0\n")
    run = firefront_run(doc)
    assert run.state.A == {"start": 1.0}
    assert run.result.attractors[0].attractor.oracle_size == 1


def test_toggle_run():
    run = firefront_run(toggle(), FirefrontConfig(alpha=1e-5, beta=1e-3, trace=True))
    res = run.result
    assert res.iterations == 1 and res.residual == 0.0
    for est in res.attractors:
        assert est.lower_bound == 0.5 and est.upper_bound == 0.5
    assert len(run.trace) == 2
    assert run.trace[-1][6] == 1.0
    csv_text = emit_trace(run)
    assert csv_text.splitlines()[0] == "iteration,F_size,N_size,A_size,P_F,P_N,P_A"
    assert len(csv_text.splitlines()) == 3


def test_trace_off_by_default():
    assert firefront_run(toggle()).trace == []


def test_cellcycle_without_oracle_finds_nothing():
    doc = load_model(MODELS / "cellcycle.av")
    run = firefront_run(doc, FirefrontConfig(max_iterations=300, trace=True))
    res = run.result
    assert res.attractors == []
    assert res.residual == pytest.approx(1.0, abs=1e-9)
    assert res.metadata["terminated_by"] == "max_iterations"
    assert all(abs(r[4] + r[5] - 1.0) < 1e-9 for r in run.trace)


def test_cellcycle_with_oracle():
    doc = load_model(MODELS / "cellcycle.av")
    ca = exact_run(doc).attractors[0].attractor
    pats = tuple(doc.model.decode(c) for c in ca.states)
    doc.oracles = [OracleSpec("CA1", pats)]
    res = firefront_run(doc).result
    assert res.residual == 0.0
    assert res.attractors[0].probability == 1.0
    assert res.attractors[0].attractor.oracle_size == 112


def test_rejects_sampling_and_bad_config():
    doc = parse_model(TOGGLE.replace("INIT a=0 b=0", "INIT * SAMPLE"))
    with pytest.raises(ValueError):
        firefront_run(doc)
    for kw in ({"alpha": 0.0}, {"alpha": 1.0}, {"beta": -1.0}, {"max_iterations": 0}):
        with pytest.raises(ValueError):
            FirefrontConfig(**kw)


def _doc(m, v0):
    return ModelDocument(m, InitialSpec(fixed=dict(enumerate(m.decode(v0)))))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), seeds, st.data())
def test_conservation_and_bounds(n, seed, data):
    m = random_boolean(n, 2, seed)
    v0 = data.draw(st.integers(0, m.n_states - 1))
    cfg = FirefrontConfig(alpha=1e-5, beta=1e-3, max_iterations=2000, trace=True)
    run = firefront_run(_doc(m, v0), cfg)
    prev_a = 0.0
    for row in run.trace:
        assert abs(row[4] + row[5] + row[6] - 1.0) <= 1e-9
        assert row[6] >= prev_a - 1e-12
        prev_a = row[6]
    assert not set(run.state.F) & set(run.state.N)
    res = run.result
    assert abs(res.total_probability() + res.residual - 1.0) <= 1e-9
    if res.metadata["terminated_by"] != "beta":
        return
    exact = exact_run(_doc(m, v0))
    pn = res.metadata["neglected_probability"]
    lower = {e.attractor.states: e.lower_bound for e in res.attractors}
    upper = {e.attractor.states: e.upper_bound for e in res.attractors}
    for e in exact.attractors:
        key = e.attractor.states
        lo = lower.get(key, 0.0)
        hi = upper.get(key, res.residual)
        assert lo <= e.probability + 1e-9
        assert e.probability <= hi + 1e-9
        assert e.probability <= lo + cfg.beta + pn + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), seeds)
def test_tiny_alpha_converges(n, seed):
    m = random_boolean(n, 2, seed)
    exact = exact_run(_doc(m, 0))
    if any(e.attractor.kind == "complex" for e in exact.attractors):
        return
    res = firefront_run(_doc(m, 0), FirefrontConfig(alpha=1e-300, beta=1e-6, max_iterations=10**6)).result
    assert res.metadata["terminated_by"] == "beta"
    assert res.metadata["neglected_probability"] == 0.0
    got = {e.attractor.states: e.lower_bound for e in res.attractors}
    for e in exact.attractors:
        assert abs(got.get(e.attractor.states, 0.0) - e.probability) <= 1e-6 + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 8), seeds)
def test_oracle_soundness(n, seed):
    m = random_boolean(n, 2, seed)
    ex = exact_run(_doc(m, 0))
    target = max(ex.attractors, key=lambda e: len(e.attractor.states)).attractor
    oracles = OracleSet(m, [OracleSpec("o", tuple(m.decode(c) for c in target.states))])
    cfg = FirefrontConfig()
    state = FirefrontState({0: 1.0})
    prev = 0.0
    for _ in range(200):
        if math.fsum(state.F.values()) <= cfg.beta:
            break
        state = firefront_step(m, state, cfg, oracles)
        assert state.A.get("o", 0.0) >= prev
        prev = state.A.get("o", 0.0)
        for code in list(state.F) + list(state.N):
            assert oracles.match(code) is None
