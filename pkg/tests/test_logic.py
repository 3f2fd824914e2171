from hypothesis import given
from hypothesis import strategies as st

from liftc.logic import (
    Atom,
    Const,
    Example,
    FnSpec,
    FunctionConfig,
    Predicate,
    Query,
    Var,
    WeightedFact,
    apply_substitution,
    atom,
    check_example,
    infer_dimensions,
    match_atom,
    term,
    validate_template,
)
from liftc.parser import parse_template

from support import WATER_TEMPLATE


def test_term_kinds():
    assert term("X") == Var("X")
    assert term("_tmp") == Var("_tmp")
    assert term("h1") == Const("h1")


def test_atom_text_and_predicate():
    a = atom("edge", "X", "b")
    assert str(a) == "edge(X,b)"
    assert a.predicate == Predicate("edge", 2)
    assert str(a.predicate) == "edge/2"
    assert not a.is_ground
    assert str(Atom("q")) == "q"


def test_apply_substitution_examples():
    theta = {Var("X"): Const("a"), Var("Y"): Const("b")}
    assert apply_substitution(atom("edge", "X", "Y"), theta) == atom("edge", "a", "b")
    assert apply_substitution(atom("node", "a"), {Var("X"): Const("b")}) == atom("node", "a")
    theta = {Var("P"): Const("n1"), Var("C1"): Const("l1"), Var("C2"): Const("l2"), Var("C3"): Const("l3")}
    assert apply_substitution(atom("parent", "P", "C1", "C2", "C3"), theta) == atom("parent", "n1", "l1", "l2", "l3")


def test_match_atom_examples():
    assert match_atom(atom("edge", "X", "Y"), atom("edge", "a", "b"), {}) == {Var("X"): Const("a"), Var("Y"): Const("b")}
    assert match_atom(atom("edge", "X", "X"), atom("edge", "a", "b"), {}) is None
    got = match_atom(atom("b", "X", "Y"), atom("b", "h1", "o1"), {Var("X"): Const("h1")})
    assert got == {Var("X"): Const("h1"), Var("Y"): Const("o1")}
    assert match_atom(atom("b", "X"), atom("c", "h1"), {}) is None
    assert match_atom(atom("b", "h2"), atom("b", "h1"), {}) is None


names = st.sampled_from(["a", "b", "c", "d"])
variables = st.sampled_from(["X", "Y", "Z", "W"])


@st.composite
def pattern_and_theta(draw):
    args = draw(st.lists(st.one_of(names, variables), min_size=0, max_size=4))
    pattern = atom("p", *args)
    theta = {v: Const(draw(names)) for v in pattern.variables()}
    extra = draw(st.dictionaries(variables.map(Var), names.map(Const), max_size=2))
    return pattern, {**extra, **theta}


@given(pattern_and_theta())
def test_match_recovers_substitution(case):
    pattern, theta = case
    ground = apply_substitution(pattern, theta)
    assert ground.is_ground
    assert apply_substitution(ground, theta) == ground
    assert match_atom(pattern, ground, {}) == {v: theta[v] for v in pattern.variables()}


def test_validate_example_template_clean():
    assert validate_template(parse_template(WATER_TEMPLATE)) == []


def test_validate_unsafe_rule():
    diags = validate_template(parse_template("h(X,Z) :- edge(X,Y)."))
    assert len(diags) == 1
    assert diags[0].rule == 0
    assert "Z unbound" in diags[0].message
    assert str(diags[0]).startswith("<input>:1:1: rule 0")


def test_validate_shape_conflict():
    tpl = parse_template("W {10,4} :: h(X) :- f(X).\nW {10,5} :: g(X) :- f(X).")
    assert any("shape conflict" in d.message for d in validate_template(tpl))


def test_validate_dimension_composition():
    tpl = parse_template("[1, 2] :: f(a).\nh(X) :- W {3,3} : f(X).")
    diags = validate_template(tpl)
    assert diags and all(d.rule == 1 for d in diags)


def test_validate_unknown_function():
    tpl = parse_template("@fn h atom=softplus.\nh(X) :- f(X).")
    assert any("softplus" in d.message for d in validate_template(tpl))


def test_infer_dimensions_propagates_through_layers():
    tpl = parse_template("[1, 0, 2] :: f(a).\nh(X) :- W {4,3} : f(X).\nout {1,4} :: q :- h(X).")
    dims = infer_dimensions(tpl)
    assert dims[Predicate("f", 1)] == 3
    assert dims[Predicate("h", 1)] == 4
    assert dims[Predicate("q", 0)] == 1


def test_function_config_layering():
    cfg = FunctionConfig(FnSpec(rule="relu"), (("h", FnSpec(atom="sigmoid")), ("h/2", FnSpec(agg="max"))))
    one = cfg.for_predicate(Predicate("h", 1))
    two = cfg.for_predicate(Predicate("h", 2))
    assert (one.rule, one.agg, one.atom) == ("relu", "avg", "sigmoid")
    assert (two.rule, two.agg, two.atom) == ("relu", "max", "sigmoid")


def test_rule_options_override_predicate_functions():
    tpl = parse_template("@fn h rule=tanh.\nh(X) :- f(X) | rule=relu.\nh(X) :- g(X).")
    assert tpl.rule_functions(0).rule == "relu"
    assert tpl.rule_functions(1).rule == "tanh"


def test_parameter_slots_in_first_occurrence_order():
    tpl = parse_template("B {2,3} :: h(X) :- A {3,3} : f(X).\nC :: q :- B : h(X).")
    assert list(tpl.parameter_slots) == ["B", "A", "C"]
    assert tpl.parameter_slots["B"] == (2, 3)


def test_check_example_flags_problems():
    bad = Example((WeightedFact(atom("f", "X")), WeightedFact(atom("g", "a"), (float("nan"),))), (Query(atom("q", "Y")),))
    problems = check_example(bad)
    assert len(problems) == 3
