import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from liftc.errors import ConfigError, DomainError, ParseError, ShapeMismatch
from liftc.functions import activate, activation_grad, aggregate, loss, sigmoid
from liftc.params import GradientStore, ParameterStore


def test_bce_at_half():
    value, grad = loss(0.5, 1.0, "bce")
    assert value == pytest.approx(math.log(2), abs=1e-12)
    assert grad.tolist() == [-2.0]


def test_bce_gradient_at_point_eight():
    _, grad = loss(0.8, 1.0, "bce")
    assert grad[0] == pytest.approx(-1.25, abs=1e-12)


def test_mse_of_identical_vectors():
    x = np.array([0.3, -2.0, 7.5])
    value, grad = loss(x, x, "mse")
    assert value == 0.0 and not grad.any()


def test_bce_is_clamped_at_the_edges():
    value, _ = loss(1.0, 0.0, "bce")
    assert np.isfinite(value) and value == -math.log(1.0 - (1.0 - 1e-12))


@pytest.mark.parametrize("p", [1.5, -0.1, float("nan")])
def test_bce_outside_unit_interval(p):
    with pytest.raises(DomainError):
        loss(p, 1.0, "bce")


def test_unknown_names():
    with pytest.raises(ConfigError):
        loss(0.5, 1.0, "hinge")
    with pytest.raises(ConfigError):
        activate("softplus", 1.0)
    with pytest.raises(ConfigError):
        aggregate("median", [[1.0]])


def test_sigmoid_does_not_overflow():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert out.tolist() == [0.0, 0.5, 1.0]


@given(arrays(np.float64, st.integers(1, 4), elements=st.floats(-50, 50)), st.integers(1, 6))
def test_aggregating_copies(v, k):
    copies = [v] * k
    assert np.allclose(aggregate("sum", copies), k * v, rtol=1e-12, atol=0)
    assert np.allclose(aggregate("avg", copies), v, rtol=1e-15, atol=0)
    assert np.array_equal(aggregate("max", copies), v)


def test_aggregation_is_per_dimension():
    got = aggregate("max", [[1.0, 5.0], [3.0, 2.0]])
    assert got.tolist() == [3.0, 5.0]
    assert aggregate("avg", [[1.0, 5.0], [3.0, 2.0]]).tolist() == [2.0, 3.5]


@pytest.mark.parametrize("name", ["identity", "sigmoid", "tanh", "relu"])
def test_activation_grad_matches_differences(name):
    z = np.array([-1.3, -0.2, 0.4, 2.1])
    y = activate(name, z)
    h = 1e-6
    numeric = (activate(name, z + h) - activate(name, z - h)) / (2 * h)
    assert np.allclose(activation_grad(name, z, y), numeric, rtol=1e-6, atol=1e-9)


# -- parameter store -----------------------------------------------------------


def _store():
    store = ParameterStore({"W": (2, 3), "b": (1, 1)})
    store.set("W", np.arange(6.0).reshape(2, 3) / 7)
    store.set("b", [[-0.1]])
    return store


def test_store_layout_and_views():
    store = _store()
    assert store.size == 7
    assert store.offsets == {"W": 0, "b": 6}
    view = store.view("W")
    view[0, 0] = 9.0
    assert store.data[0] == 9.0
    # item access hands out a copy
    store["W"][0, 0] = -1.0
    assert store.data[0] == 9.0


def test_version_counter():
    store = _store()
    v = store.version
    store.set("b", [[1.0]])
    store.assign_flat(np.zeros(7))
    store.touch()
    assert store.version == v + 3


def test_set_rejects_wrong_shape():
    with pytest.raises(ShapeMismatch):
        _store().set("W", np.zeros((3, 2)))


def test_text_round_trip_is_exact():
    store = _store()
    store.set("b", [[1 / 3]])
    text = store.dumps()
    assert text.splitlines()[2].startswith("b 1 1 ")
    again = ParameterStore.loads(text)
    assert again == store
    assert again.dumps() == text


def test_save_and_load(tmp_path):
    store = _store()
    path = tmp_path / "p.txt"
    store.save(path)
    assert ParameterStore.load(path) == store


@pytest.mark.parametrize(
    "text, line",
    [("W 2 2 1 2 3", 1), ("% c\nW 1 1 x", 2), ("W 1 1 0\nW 1 1 0", 2), ("W", 1)],
)
def test_malformed_parameter_text(text, line):
    with pytest.raises(ParseError) as info:
        ParameterStore.loads(text, "p.txt")
    assert info.value.span.line == line


def test_gradient_store_holds_only_used_slots():
    store = _store()
    grads = GradientStore.from_flat(store, np.arange(7.0), {"b"})
    assert list(grads) == ["b"]
    assert grads["b"].tolist() == [[6.0]]
    assert not grads.get_or_zero("W", (2, 3)).any()
