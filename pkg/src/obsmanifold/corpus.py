"""Random instance generators for property suites.

Every structure is built on one hidden "base" coordinate per point; each
chart is an affine image of it.  Witnesses and map transitions are derived
from that base, so charts on one domain agree with each other and a map's
transitions agree across charts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .atlas import Chart, CompatibilityWitness, MuStructure, validate_structure
from .differentiable import SelectiveMap, is_r_alpha_differentiable
from .expr import Expr, VecMap, absolute, add, const, mul, sin, sub, substitute, var
from .observer import Carrier, Observer, image
from .product import product_structure
from .report import AxiomReport
from .tolerance import TolerancePolicy, resolve
from .topology import build_K

LEVEL_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))
HALF_BAND = 0.05


@dataclass
class RandomStructure:
    d: MuStructure
    base: dict  # label -> float
    affine: dict  # chart name -> (scale, offset)
    levels: list = field(default_factory=list)


def random_levels(rng, n: int, k: int | None = None) -> list:
    k = k or int(rng.integers(1, min(n, 3) + 1))
    levels = [float(v) for v in rng.choice(LEVEL_GRID, size=k, replace=False)]
    values = levels + [levels[int(i)] for i in rng.integers(0, k, size=n - k)]
    rng.shuffle(values)
    return values


def random_base(rng, n: int) -> np.ndarray:
    return rng.permutation(n).astype(float) + rng.uniform(-0.2, 0.2, size=n)


def random_structure(rng, n: int | None = None, labels=None, mu_values=None, base=None,
                     prefix: str = "c", charts_per_domain: int | None = None,
                     spanning: bool | None = None) -> RandomStructure:
    """Valid 1-dimensional structure with affine witnesses between charts on one domain."""
    if labels is None:
        n = n or int(rng.integers(1, 6))
        labels = [f"p{i}" for i in range(n)]
    labels = list(labels)
    n = len(labels)
    carrier = Carrier(labels)
    if mu_values is None:
        mu_values = random_levels(rng, n)
    mu = Observer(carrier, np.asarray(mu_values, dtype=float).reshape(n, 1))
    if base is None:
        base = random_base(rng, n)
    base = {lab: float(b) for lab, b in zip(labels, base)}
    levels = sorted({float(v) for v in np.asarray(mu_values).reshape(-1)})
    bounds = [(lv - HALF_BAND, lv + HALF_BAND) for lv in levels]
    if spanning is None:
        spanning = bool(rng.integers(0, 2))
    if spanning and len(levels) > 1:
        bounds.append((levels[0] - HALF_BAND, levels[-1] + HALF_BAND))
    ks = build_K([frozenset(labels)], mu, bounds)
    charts, affine, witnesses = [], {}, {}
    for j, dom in enumerate(ks):
        k = charts_per_domain or int(rng.integers(1, 3))
        names = []
        for m in range(k):
            name = f"{prefix}{j}_{m}"
            scale = float(rng.choice([-1, 1]) * rng.uniform(0.5, 2.0))
            offset = float(rng.uniform(-1, 1))
            coords = {lab: [scale * base[lab] + offset] for lab in carrier.ordered(dom.domain)}
            charts.append(Chart(name, coords, provenance=dom))
            affine[name] = (scale, offset)
            names.append(name)
        for a in names:
            for b in names:
                if a < b:
                    witnesses[(a, b)] = affine_witness(dom.domain, affine[a], affine[b])
    return RandomStructure(MuStructure(carrier, mu, charts, witnesses), base, affine, levels)


def _affine_expr(x: Expr, scale: float, offset: float) -> Expr:
    return add(mul(const(scale), x), const(offset))


def affine_witness(domain, src: tuple, dst: tuple) -> CompatibilityWitness:
    (a1, b1), (a2, b2) = src, dst
    k = a2 / a1
    h = VecMap.from_exprs([_affine_expr(var("x1"), k, b2 - k * b1)], ("x1",))
    h_inv = VecMap.from_exprs([_affine_expr(var("x1"), 1 / k, b1 - b2 / k)], ("x1",))
    return CompatibilityWitness({u: u for u in domain}, h, h_inv)


# ---------------------------------------------------------------- maps


def interpolant(xs, ys, y: Expr) -> Expr:
    """Newton-form polynomial through (xs, ys), in the expression ``y``."""
    xs = [float(v) for v in xs]
    coef = [float(v) for v in ys]
    n = len(xs)
    for j in range(1, n):
        for i in range(n - 1, j - 1, -1):
            coef[i] = (coef[i] - coef[i - 1]) / (xs[i] - xs[i - j])
    out = const(coef[-1])
    for i in range(n - 2, -1, -1):
        out = add(mul(out, sub(y, const(xs[i]))), const(coef[i]))
    return out


def kink_term(xs, x0: float, order: int, weight: float, y: Expr) -> Expr:
    """Vanishes at every anchor; has a jump in derivative ``order`` at x0."""
    d = sub(y, const(x0))
    term = absolute(d)
    for _ in range(order - 1):
        term = mul(d, term)
    for x in xs:
        if x != x0:
            term = mul(term, sub(y, const(float(x))))
    return mul(const(weight), term)


@dataclass
class BaseMap:
    """A map of base coordinates ``G(y)`` as one expression in ``y``."""

    expr: Expr
    inverse: Expr | None = None


def base_map_for(s1: RandomStructure, s2: RandomStructure, table: dict,
                 kink: tuple | None = None, weight: float = 0.5) -> BaseMap:
    """Interpolate ``base2(F(u))`` over ``base1(u)``; ``kink = (label, order)`` adds a kink there."""
    y = var("y")
    labels = list(s1.base)
    xs = [s1.base[u] for u in labels]
    ys = [s2.base[table[u]] for u in labels]
    g = interpolant(xs, ys, y)
    if kink is not None:
        lab, order = kink
        g = add(g, kink_term(xs, s1.base[lab], order, weight, y))
    return BaseMap(g)


def affine_base_map(scale: float, offset: float) -> BaseMap:
    y = var("y")
    return BaseMap(_affine_expr(y, scale, offset), _affine_expr(y, 1 / scale, -offset / scale))


def _chart_transition(g: Expr, src: Chart, src_aff, dst_aff) -> VecMap:
    """``psi o f o phi^-1`` given the base map ``g``: x -> a_V g((x - b_U)/a_U) + b_V."""
    (a1, b1), (a2, b2) = src_aff, dst_aff
    inner = _affine_expr(var("x1"), 1 / a1, -b1 / a1)
    body = _affine_expr(substitute(g, {"y": inner}), a2, b2)
    return VecMap.from_exprs([body], ("x1",), src.lower, src.upper)


def transitions_for(g: Expr, s1: RandomStructure, s2: RandomStructure, table: dict) -> dict:
    out = {}
    for c1 in s1.d.charts:
        img = {table[u] for u in c1.domain}
        for c2 in s2.d.charts:
            if img <= c2.domain:
                out[(c1.name, c2.name)] = _chart_transition(g, c1, s1.affine[c1.name], s2.affine[c2.name])
    return out


def random_map(rng, s1: RandomStructure, s2: RandomStructure, table: dict, kink: tuple | None = None,
               base: BaseMap | None = None, name: str = "f") -> SelectiveMap:
    base = base or base_map_for(s1, s2, table, kink)
    trans = transitions_for(base.expr, s1, s2, table)
    inv = {}
    if base.inverse is not None:
        back = {v: u for u, v in table.items()}
        if len(back) == len(table):
            inv = transitions_for(base.inverse, s2, s1, back)
    return SelectiveMap(s1.d.carrier, s2.d.carrier, table, trans, inv, name=name)


def pullback_structure(rng, s2: RandomStructure, table_fn, n: int, prefix: str = "a",
                       labels=None) -> tuple:
    """Source structure whose observer is ``mu2 o F`` for a random F; returns (s1, table)."""
    labels = labels or [f"{prefix}{i}" for i in range(n)]
    table = table_fn(labels)
    mu_values = [s2.d.mu(table[u])[0] for u in labels]
    s1 = random_structure(rng, labels=labels, mu_values=mu_values, prefix=prefix.upper())
    return s1, table


def random_map_instance(rng, kink_order: int | None = None, n1: int | None = None, n2: int | None = None):
    """(s1, s2, f) with ``mu1 = mu2 o F`` so that equivariance holds by construction."""
    s2 = random_structure(rng, n=n2 or int(rng.integers(1, 6)), prefix="v")
    targets = list(s2.d.carrier.labels)
    n1 = n1 or int(rng.integers(1, 6))
    s1, table = pullback_structure(rng, s2, lambda ls: {u: targets[int(rng.integers(0, len(targets)))] for u in ls},
                                   n1, prefix="u")
    kink = None
    if kink_order:
        kink = (list(s1.base)[int(rng.integers(0, n1))], kink_order)
    return s1, s2, random_map(rng, s1, s2, table, kink)


def composable_instance(rng, kink_order: int | None = None, n: int | None = None):
    """(s1, s2, s3, f, g) with f: s1 -> s2 smooth and g: s2 -> s3 optionally kinked."""
    s2, s3, g = random_map_instance(rng, kink_order=kink_order, n1=n, n2=n)
    targets = list(s2.d.carrier.labels)
    n1 = n or int(rng.integers(1, 6))
    s1, table = pullback_structure(rng, s2, lambda ls: {u: targets[int(rng.integers(0, len(targets)))] for u in ls},
                                   n1, prefix="s")
    f = random_map(rng, s1, s2, table, name="f")
    g.name = "g"
    return s1, s2, s3, f, g


def relabeled_copy(rng, s2: RandomStructure, prefix: str = "q") -> tuple:
    """A copy of s2 under a bijective relabeling with an affine change of base; returns (s1, f)."""
    labels2 = list(s2.d.carrier.labels)
    perm = rng.permutation(len(labels2))
    labels1 = [f"{prefix}{i}" for i in range(len(labels2))]
    table = {labels1[i]: labels2[int(perm[i])] for i in range(len(labels2))}
    scale = float(rng.choice([-1, 1]) * rng.uniform(0.5, 2.0))
    offset = float(rng.uniform(-1, 1))
    base1 = [(s2.base[table[u]] - offset) / scale for u in labels1]
    mu1 = [s2.d.mu(table[u])[0] for u in labels1]
    s1 = random_structure(rng, labels=labels1, mu_values=mu1, base=base1, prefix=prefix.upper())
    f = random_map(rng, s1, s2, table, base=affine_base_map(scale, offset), name="f")
    return s1, f


def constant_map_instance(rng):
    """A constant map into a random structure; the source observer is constant at mu2(q)."""
    s2 = random_structure(rng, prefix="v")
    q = list(s2.d.carrier.labels)[int(rng.integers(0, len(s2.d.carrier)))]
    n1 = int(rng.integers(1, 5))
    s1, table = pullback_structure(rng, s2, lambda ls: {u: q for u in ls}, n1, prefix="u")
    g = const(s2.base[q])
    return s1, s2, random_map(rng, s1, s2, table, base=BaseMap(g), name="const")


def levels_of(d: MuStructure, tol=None) -> list:
    return [tuple(v) for v in image(d.mu, None, tol)]


# ---------------------------------------------------------------- paths


def random_path_curves(rng, s: RandomStructure, p, alpha, charts) -> tuple:
    """Consistent per-chart curves through p; returns (curves, base velocity)."""
    v = float(rng.uniform(-2, 2))
    w = float(rng.uniform(-1, 1))
    z = float(rng.uniform(-0.5, 0.5))
    t = var("t")
    base_curve = add(add(add(const(s.base[p]), mul(const(v), t)), mul(const(w), mul(t, t))), mul(const(z), sin(mul(t, t))))
    curves = {}
    for c in charts:
        a, b = s.affine[c.name]
        curves[c.name] = VecMap.from_exprs([_affine_expr(base_curve, a, b)], ("t",), (-1.0,), (1.0,))
    return curves, v


# ---------------------------------------------------------------- CLI sweep


def random_suite_checks(seed: int, tol: TolerancePolicy | None = None, count: int = 5) -> AxiomReport:
    """A short randomized sweep: structure validity, identity differentiability, product validity."""
    tol = resolve(tol)
    rng = np.random.default_rng(seed)
    rep = AxiomReport()
    for i in range(count):
        s = random_structure(rng, prefix=f"r{i}c")
        vr = validate_structure(s.d, 1, tol)
        rep.add(f"random[{seed}:{i}]:structure", "b1-b2", vr.passes, f"{len(s.d.charts)} charts")
        ident = SelectiveMap.identity(s.d)
        ok = all(
            is_r_alpha_differentiable(ident, p, 1, s.d.mu(p), s.d, s.d, tol).verdict
            for p in s.d.carrier
        )
        rep.add(f"random[{seed}:{i}]:identity", "c1-c4", ok, "identity map is differentiable at every level")
        t = random_structure(rng, n=int(rng.integers(1, 4)), prefix=f"r{i}t")
        prod = product_structure(s.d, t.d, 1, True, tol)
        rep.add(f"random[{seed}:{i}]:product", "b1-b2", validate_structure(prod, 1, tol).passes,
                f"{len(prod.charts)} product charts")
    return rep
