import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obsmanifold.exceptions import CarrierMismatch, DimensionMismatch, InputError
from oracles import lattice_law_failures

from obsmanifold.observer import (
    Carrier,
    Observer,
    image,
    inf_intersection,
    leq,
    strictly_less,
    sup_union,
    zero_observer,
)

AB = Carrier(["a", "b"])


def ob(carrier, table):
    return Observer.from_mapping(carrier, table)


def test_sup_inf_examples():
    x = ob(AB, {"a": 0.3, "b": 0.7})
    y = ob(AB, {"a": 0.9, "b": 0.5})
    assert sup_union(x, y).as_dict() == {"a": (0.9,), "b": (0.7,)}
    assert inf_intersection(x, y).as_dict() == {"a": (0.3,), "b": (0.5,)}
    z = zero_observer(AB, 1)
    assert x | z == x and x & z == z
    assert x | x == x and x & x == x


def test_order_examples():
    a = Carrier(["a"])
    assert leq(zero_observer(AB, 1), ob(AB, {"a": 0.2, "b": 0.0}))
    assert leq(ob(a, {"a": 0.3}), ob(a, {"a": 0.3}))
    assert not leq(ob(AB, {"a": 0.4, "b": 0.1}), ob(AB, {"a": 0.3, "b": 0.9}))
    assert strictly_less(zero_observer(a, 1), ob(a, {"a": 0.5}))
    assert not strictly_less(ob(a, {"a": 0.5}), ob(a, {"a": 0.5}))
    assert strictly_less(ob(AB, {"a": 0.3, "b": 0.5}), ob(AB, {"a": 0.3, "b": 0.6}))


def test_zero_and_image():
    assert zero_observer(Carrier(["a"]), 1).as_dict() == {"a": (0.0,)}
    assert zero_observer(AB, 2).as_dict() == {"a": (0.0, 0.0), "b": (0.0, 0.0)}
    assert image(ob(AB, {"a": 0.5, "b": 0.5})) == [(0.5,)]
    assert image(ob(AB, {"a": 0.2, "b": 0.9})) == [(0.2,), (0.9,)]
    assert image(zero_observer(AB, 3)) == [(0.0, 0.0, 0.0)]


def test_invalid_observers():
    with pytest.raises(InputError):
        ob(AB, {"a": 1.2, "b": 0.0})
    with pytest.raises(InputError):
        ob(AB, {"a": 0.2})
    with pytest.raises(InputError):
        Carrier(["a", "a"])
    with pytest.raises(DimensionMismatch):
        sup_union(zero_observer(AB, 1), zero_observer(AB, 2))
    with pytest.raises(CarrierMismatch):
        sup_union(zero_observer(AB, 1), zero_observer(Carrier(["a", "c"]), 1))


def test_lattice_laws_exhaustive_small():
    grid = (0.0, 0.25, 0.5, 0.75, 1.0)
    for n in (1, 2):
        c = Carrier([f"p{i}" for i in range(n)])
        obs = [Observer(c, np.array(v)) for v in itertools.product(grid, repeat=n)]
        for x, y, z in itertools.product(obs, repeat=3):
            assert lattice_law_failures(x, y, z) == []


@st.composite
def triples(draw):
    n = draw(st.integers(1, 6))
    m = draw(st.integers(1, 3))
    c = Carrier([f"p{i}" for i in range(n)])
    vals = st.lists(st.floats(0, 1), min_size=n * m, max_size=n * m)
    return tuple(Observer(c, np.array(draw(vals)).reshape(n, m)) for _ in range(3))


@settings(max_examples=300, deadline=None)
@given(triples())
def test_lattice_laws_random(t):
    assert lattice_law_failures(*t) == []
