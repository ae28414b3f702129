import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obsmanifold.atlas import Chart, CompatibilityWitness, MuStructure, validate_structure
from obsmanifold.corpus import composable_instance, constant_map_instance, random_map_instance, random_path_curves
from obsmanifold.differentiable import SelectiveMap, compose
from obsmanifold.exceptions import (
    BaseMismatch,
    ChartNotInFamily,
    FamilyMismatch,
    MissingRepresentative,
    NotDifferentiable,
    OutOfInterval,
)
from obsmanifold.expr import VecMap, parse_sexpr
from obsmanifold.observer import Carrier, Observer
from obsmanifold.tangent import (
    MultiPath,
    OverlapWitness,
    alpha_differential,
    charts_at,
    make_vector,
    partition_charts,
    path_component,
    path_velocity,
    paths_equivalent,
    pushforward_error,
    tangent_bijection,
    tv_add,
    tv_scale,
    validate_multipath,
    verify_overlap,
    zero_vector,
)

A = Carrier(["a", "b"])


def curve(*sexprs):
    return VecMap.from_exprs([parse_sexpr(s) for s in sexprs], ("t",), (-1.0,), (1.0,))


def two_chart_structure():
    mu = Observer.from_mapping(A, {"a": 0.5, "b": 0.5})
    u = Chart("U", {"a": 0.0, "b": 1.0})
    v = Chart("V", {"a": 1.0, "b": 3.0})
    h = VecMap.from_exprs([parse_sexpr("(add (mul 2 x1) 1)")], ("x1",))
    h_inv = VecMap.from_exprs([parse_sexpr("(mul 0.5 (sub x1 1))")], ("x1",))
    return MuStructure(A, mu, [u, v], {("U", "V"): CompatibilityWitness({"a": "a", "b": "b"}, h, h_inv)})


def full_partition(d, p, alpha):
    charts = charts_at(d, p, alpha)
    ws = {(a.name, b.name): OverlapWitness.identity(a, b) for a, b in itertools.combinations(charts, 2)}
    return partition_charts(charts, ws)


def test_velocity_examples():
    d = two_chart_structure()
    g = MultiPath("a", 0.5, {"U": curve("(mul 1.5 t)"), "V": curve("(add 1 (mul 3 (pow t 2)))")})
    assert path_velocity(g, "U").tolist() == [1.5]
    assert path_velocity(g, "V").tolist() == [0.0]
    g2 = MultiPath("a", 0.5, {"W": curve("(sin t)", "(sub (cos t) 1)")})
    assert np.allclose(path_velocity(g2, "W"), [1.0, 0.0])
    with pytest.raises(ChartNotInFamily):
        path_velocity(g, "W")
    assert validate_multipath(g, d).passes


def test_equivalence_examples():
    lin = MultiPath("a", 0.5, {"U": curve("(mul 2 t)"), "V": curve("(add 1 (mul 4 t))")})
    bent = MultiPath("a", 0.5, {"U": curve("(add (mul 2 t) (pow t 2))"), "V": curve("(add 1 (mul 4 t) (sin (pow t 2)))")})
    off = MultiPath("a", 0.5, {"U": curve("(mul 2 t)"), "V": curve("(add 1 (mul 5 t))")})
    assert paths_equivalent(lin, lin)
    assert paths_equivalent(lin, bent) and paths_equivalent(bent, lin)
    assert not paths_equivalent(lin, off)
    with pytest.raises(FamilyMismatch):
        paths_equivalent(lin, MultiPath("a", 0.5, {"U": curve("(mul 2 t)")}))


def test_path_component_examples():
    d = two_chart_structure()
    u, v = d.chart("U"), d.chart("V")
    g = MultiPath("a", 0.5, {"U": curve("(mul 2 t)"), "V": curve("(add 1 (mul 4 t))")})
    assert path_component(g, u, 0.0) == "a"
    assert path_component(g, u, 0.5) == "b"
    assert np.allclose(path_component(g, u, 0.25), [0.5])
    # the U->V transition x -> 2x + 1 carries the U component to the V component at 0
    assert np.allclose(2 * u.phi("a") + 1, v.phi(path_component(g, v, 0.0)))
    with pytest.raises(OutOfInterval):
        path_component(g, u, 1.0)


def test_partition_examples():
    d = two_chart_structure()
    u, v = d.chart("U"), d.chart("V")
    assert partition_charts([u]).classes == (("U",),)
    assert partition_charts([u, v], {("U", "V"): OverlapWitness.identity(u, v)}).classes == (("U", "V"),)
    part = partition_charts([u, v])
    assert part.classes == (("U",), ("V",)) and part.unverified == [("U", "V")]
    sq = OverlapWitness({"U": VecMap.from_exprs([parse_sexpr("(pow x1 2)")], ("x1",)), "V": VecMap.identity(1)})
    assert not verify_overlap(u, v, sq).passes


def test_bijection_examples():
    d = two_chart_structure()
    part = full_partition(d, "a", 0.5)
    g = MultiPath.linear(d, "a", 0.5, {"U": [3.0], "V": [6.0]})
    assert tangent_bijection(g, part).allclose(make_vector("a", 0.5, {"U": [3.0]}), 0)
    same = MultiPath("a", 0.5, {"U": curve("(add (mul 3 t) (pow t 3))"), "V": curve("(add 1 (mul 6 t))")})
    assert tangent_bijection(same, part).allclose(tangent_bijection(g, part), 1e-9)
    still = MultiPath.linear(d, "a", 0.5, {"U": [0.0], "V": [0.0]})
    assert tangent_bijection(still, part).allclose(zero_vector("a", 0.5, part), 0)
    with pytest.raises(MissingRepresentative):
        tangent_bijection(MultiPath("a", 0.5, {"V": curve("(add 1 t)")}), part)


def test_vector_ops_examples():
    v = make_vector("a", 0.5, {"U": [1.0, 2.0]})
    w = make_vector("a", 0.5, {"U": [3.0, -2.0]})
    assert (v + w).flat().tolist() == [4.0, 0.0]
    assert tv_scale(-2, make_vector("a", 0.5, {"U": [1.0, 0.5]})).flat().tolist() == [-2.0, -1.0]
    assert tv_scale(0, v).flat().tolist() == [0.0, 0.0]
    with pytest.raises(BaseMismatch):
        tv_add(v, make_vector("b", 0.5, {"U": [1.0, 2.0]}))


def test_differential_examples():
    c = Carrier(["a"])
    mu = Observer.from_mapping(c, {"a": 0.5})
    d1 = MuStructure(c, mu, [Chart("U", {"a": [3.0, 1.0]})])
    d2 = MuStructure(c, mu, [Chart("V", {"a": [9.0, 1.0]})])
    t = VecMap.from_exprs([parse_sexpr("(pow x1 2)"), parse_sexpr("x2")], ("x1", "x2"))
    f = SelectiveMap(c, c, {"a": "a"}, {("U", "V"): t})
    parts = (full_partition(d1, "a", 0.5), full_partition(d2, "a", 0.5))
    df = alpha_differential(f, "a", 0.5, parts, d1, d2)
    assert np.allclose(df.matrices[("U", "V")], [[6, 0], [0, 1]], atol=1e-9)
    out = df.apply(make_vector("a", 0.5, {"U": [1.0, 1.0]}))
    assert np.allclose(out.flat(), [6.0, 1.0])
    g = MultiPath.linear(d1, "a", 0.5, {"U": [1.0, 1.0]})
    assert pushforward_error(df, f, g, d2) <= 1e-6

    d = two_chart_structure()
    ident = SelectiveMap.identity(d)
    part = full_partition(d, "a", 0.5)
    assert validate_structure(d).passes
    dI = alpha_differential(ident, "a", 0.5, (part, part), d, d)
    assert np.allclose(dI.matrices[("U", "U")], np.eye(1))


def test_not_differentiable_raises():
    c = Carrier(["a"])
    d = MuStructure(c, Observer.from_mapping(c, {"a": 0.5}), [Chart("U", {"a": 0.0})])
    f = SelectiveMap(c, c, {"a": "a"}, {("U", "U"): VecMap.from_exprs([parse_sexpr("(abs x1)")], ("x1",))})
    part = full_partition(d, "a", 0.5)
    with pytest.raises(NotDifferentiable):
        alpha_differential(f, "a", 0.5, (part, part), d, d)


def test_constant_map_has_zero_differential(rng):
    for _ in range(20):
        s1, s2, f = constant_map_instance(rng)
        for p in s1.d.carrier:
            alpha = s1.d.mu(p)
            parts = (full_partition(s1.d, p, alpha), full_partition(s2.d, f(p), alpha))
            df = alpha_differential(f, p, alpha, parts, s1.d, s2.d)
            assert df.max_abs() <= 1e-8


vec = st.lists(st.floats(-100, 100), min_size=3, max_size=3)


@settings(max_examples=200, deadline=None)
@given(vec, vec, vec, st.floats(-10, 10), st.floats(-10, 10))
def test_vector_space_axioms(x, y, z, a, b):
    def mk(vals):
        return make_vector("p", 0.5, {"U": vals[:2], "W": vals[2:]})

    u, v, w = mk(x), mk(y), mk(z)
    zero = mk([0.0, 0.0, 0.0])
    tol = 1e-9 * (1 + max(map(abs, x + y + z))) * (1 + abs(a) + abs(b)) ** 2
    assert ((u + v) + w).allclose(u + (v + w), tol)
    assert (u + v).allclose(v + u, tol)
    assert (u + zero).allclose(u, 0)
    assert (u + -u).allclose(zero, tol)
    assert tv_scale(a, tv_scale(b, u)).allclose(tv_scale(a * b, u), tol)
    assert tv_scale(1, u).allclose(u, 0)
    assert tv_scale(a, u + v).allclose(tv_scale(a, u) + tv_scale(a, v), tol)
    assert tv_scale(a + b, u).allclose(tv_scale(a, u) + tv_scale(b, u), tol)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pushforward_and_linearity(seed):
    rng = np.random.default_rng(seed)
    s1, s2, f = random_map_instance(rng)
    p = s1.d.carrier.labels[0]
    alpha = s1.d.mu(p)
    charts = charts_at(s1.d, p, alpha)
    if not charts:
        return
    parts = (full_partition(s1.d, p, alpha), full_partition(s2.d, f(p), alpha))
    df = alpha_differential(f, p, alpha, parts, s1.d, s2.d)
    curves, _ = random_path_curves(rng, s1, p, alpha, charts)
    g = MultiPath(p, alpha, curves)
    assert validate_multipath(g, s1.d).passes
    assert pushforward_error(df, f, g, s2.d) <= 1e-6
    v = tangent_bijection(g, parts[0])
    w = tangent_bijection(MultiPath.linear(s1.d, p, alpha, {c.name: [0.7] for c in charts}), parts[0])
    assert df.apply(v + w).allclose(df.apply(v) + df.apply(w), 1e-9)
    assert df.apply(tv_scale(2.5, v)).allclose(tv_scale(2.5, df.apply(v)), 1e-9)


def test_composed_differential_is_product(rng):
    done = 0
    while done < 10:
        s1, s2, s3, f, g = composable_instance(rng)
        gf = compose(f, g)
        p = s1.d.carrier.labels[0]
        alpha = s1.d.mu(p)
        if not charts_at(s1.d, p, alpha):
            continue
        p1 = full_partition(s1.d, p, alpha)
        p2 = full_partition(s2.d, f(p), alpha)
        p3 = full_partition(s3.d, gf(p), alpha)
        dfm = alpha_differential(f, p, alpha, (p1, p2), s1.d, s2.d)
        dgm = alpha_differential(g, f(p), alpha, (p2, p3), s2.d, s3.d)
        dgf = alpha_differential(gf, p, alpha, (p1, p3), s1.d, s3.d)
        (mid,) = p2.representatives()  # one class per level by construction
        for (s, t), m in dgf.matrices.items():
            expect = dgm.matrices[(mid, t)] @ dfm.matrices[(s, mid)]
            assert np.allclose(m, expect, atol=1e-6)
        done += 1
