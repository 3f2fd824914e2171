import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftc.engine import backward, forward, node_values
from liftc.errors import NonFinite, ShapeMismatch
from liftc.graph import ATOM, RULE, vectorize
from liftc.logic import atom
from liftc.params import ParameterStore
from liftc.parser import parse_template
from liftc.zoo import ZooSpec, instantiate
from liftc.synthetic import example_for

import oracles
from support import graph_of, one_example, random_params

LINEAR = "@fn * rule=identity, agg=avg, atom=identity.\n"


def _store(template, **values):
    store = ParameterStore(template.parameter_slots)
    for slot, v in values.items():
        store.set(slot, np.asarray(v, dtype=float).reshape(store.shapes[slot]))
    return store


def _grads(g, params):
    value, tape = forward(g, params)
    return value, backward(g, params, tape, np.ones_like(value))


def test_gcn_rule_averages_neighbours():
    tpl = parse_template("@fn h rule=identity, agg=avg, atom=relu.\nW {2,2} :: h(V) :- f(U), 0 : edge(V,U).")
    ex = one_example("[1, 0] :: f(u1). [0, 1] :: f(u2). edge(v,u1). edge(v,u2). h(v) ?")
    g = graph_of(tpl, ex, query=atom("h", "v"))
    assert forward(g, _store(tpl, W=np.eye(2)))[0].tolist() == [0.5, 0.5]


def test_unweighted_chain_passes_the_fact_through():
    tpl = parse_template(LINEAR + "h :- f.\nq :- h.")
    g = graph_of(tpl, one_example("3 :: f. q ?"))
    assert forward(g, ParameterStore({}))[0].tolist() == [3.0]


def test_two_rule_sage_combination():
    tpl = parse_template(
        "@fn h rule=relu, agg=max, atom=identity.\n"
        "h(V) :- nbr {1,1} : f(U), 0 : edge(V,U).\n"
        "h(V) :- self {1,1} : f(V)."
    )
    ex = one_example("1 :: f(v). 3 :: f(a). 2 :: f(b). edge(v,a). edge(v,b). h(v) ?")
    g = graph_of(tpl, ex, query=atom("h", "v"))
    assert forward(g, _store(tpl, nbr=1.0, self=2.0))[0].tolist() == [5.0]


def test_scalar_chain_gradients():
    tpl = parse_template(LINEAR + "w2 {1,1} :: q :- w1 {1,1} : f.")
    g = graph_of(tpl, one_example("3 :: f. q ?"))
    value, grads = _grads(g, _store(tpl, w1=2.0, w2=5.0))
    assert value.tolist() == [30.0]
    assert grads["w1"].item() == 15.0
    assert grads["w2"].item() == 6.0


def test_shared_slot_accumulates():
    ex = one_example("0.7 :: f. -1.2 :: g. q ?")
    shared = parse_template("@fn q atom=tanh, rule=identity.\nq :- W {1,1} : f.\nq :- W : g.")
    split = parse_template("@fn q atom=tanh, rule=identity.\nq :- A {1,1} : f.\nq :- B {1,1} : g.")
    v1, g1 = _grads(graph_of(shared, ex), _store(shared, W=0.4))
    v2, g2 = _grads(graph_of(split, ex), _store(split, A=0.4, B=0.4))
    assert v1.tolist() == v2.tolist()
    assert g1["W"].item() == pytest.approx(g2["A"].item() + g2["B"].item(), rel=1e-15)


def _learnable_facts(agg):
    return parse_template(f"A {{1,1}} :: f(a).\nB {{1,1}} :: f(b).\n@fn q rule=identity, agg={agg}, atom=identity.\nq :- f(X).")


@pytest.mark.parametrize("a, b", [(1.0, 1.0), (2.0, 1.0), (-1.0, 0.5)])
def test_max_routes_gradient_to_one_input(a, b):
    tpl = _learnable_facts("max")
    value, grads = _grads(graph_of(tpl, one_example("q ?")), _store(tpl, A=a, B=b))
    assert value.item() == max(a, b)
    got = sorted([grads["A"].item(), grads["B"].item()])
    assert got == [0.0, 1.0]
    if a != b:
        assert grads["A" if a > b else "B"].item() == 1.0


@pytest.mark.parametrize("agg, value, grad", [("avg", 1.5, 0.5), ("sum", 3.0, 1.0)])
def test_avg_and_sum_gradients(agg, value, grad):
    tpl = _learnable_facts(agg)
    out, grads = _grads(graph_of(tpl, one_example("q ?")), _store(tpl, A=2.0, B=1.0))
    assert out.item() == value
    assert grads["A"].item() == grads["B"].item() == grad


def test_unused_slot_absent_from_gradients():
    tpl = parse_template(LINEAR + "q :- W {1,1} : f.\nr :- V {1,1} : f.")
    _, grads = _grads(graph_of(tpl, one_example("2 :: f. q ?")), _store(tpl, W=1.0, V=1.0))
    assert set(grads) == {"W"}


def test_forward_is_repeatable():
    spec = ZooSpec("gsage", dim=4)
    tpl = instantiate(spec)
    g = graph_of(tpl, example_for(spec, np.random.default_rng(0)))
    params = random_params(tpl, np.random.default_rng(1))
    a, b = forward(g, params)[0], forward(g, params)[0]
    assert a.tobytes() == b.tobytes()


def test_overflow_reports_node():
    tpl = parse_template(LINEAR + "h :- W {1,1} : f.\nq :- V {1,1} : h.")
    g = graph_of(tpl, one_example("1e200 :: f. q ?"))
    with pytest.raises(NonFinite) as info:
        forward(g, _store(tpl, W=1e200, V=1.0))
    # the first product that leaves the float range is the rule node for h
    bad = g.nodes[info.value.node_id]
    assert bad.kind == RULE and bad.origin.head == atom("h")


def test_missing_slot_is_a_shape_error():
    tpl = parse_template(LINEAR + "q :- W {1,1} : f.")
    g = graph_of(tpl, one_example("f. q ?"))
    with pytest.raises(ShapeMismatch):
        forward(g, ParameterStore({"W": (2, 2)}))


def test_node_values_follow_the_graph():
    tpl = parse_template(LINEAR + "h(X) :- W {1,1} : f(X).\nq :- h(X).")
    g = graph_of(tpl, one_example("2 :: f(a). 4 :: f(b). q ?"))
    vals = node_values(g, _store(tpl, W=0.5))
    by_atom = {str(n.origin): vals[n.id].item() for n in g.nodes if n.kind == ATOM}
    assert by_atom == {"h(a)": 1.0, "h(b)": 2.0, "q": 1.5}


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["gcn", "gsage", "gin0", "mlp", "recurrent", "cnn1d"]))
def test_gradients_match_differences_on_random_graphs(seed, name):
    rng = np.random.default_rng(seed)
    spec = ZooSpec(name, dim=2, layers=2 if name not in ("recurrent",) else 1, extra={"smooth": True})
    tpl = instantiate(spec)
    g = graph_of(tpl, example_for(spec, rng, nodes=4), pruned=True)
    params = random_params(tpl, rng)
    _, grads = _grads(g, params)
    for slot in params:
        numeric = oracles.central_differences(lambda: float(forward(g, params)[0][0]), params.view(slot), 1e-5)
        analytic = grads.get_or_zero(slot, params.shapes[slot])
        assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-7)


def test_vectorized_forward_matches_on_learnable_facts():
    tpl = _learnable_facts("max")
    g = graph_of(tpl, one_example("q ?"))
    params = _store(tpl, A=0.25, B=-3.0)
    assert vectorize(g).forward(params).tolist() == forward(g, params)[0].tolist()
