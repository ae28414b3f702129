"""Level-alpha tangent spaces and differentials.

A multi-path is stored as one coordinate curve per chart of the family
``A^{p, alpha}`` (charts with ``mu(U) = {alpha}`` containing ``p``); only
these curves are ever differentiated.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .atlas import Chart, MuStructure, sample_grid, MIN_ABS_DET
from .differentiable import SelectiveMap, as_level, is_r_alpha_differentiable, _singleton_level
from .exceptions import (
    BaseMismatch,
    ChartNotInFamily,
    FamilyMismatch,
    InputError,
    MissingRepresentative,
    MissingTransition,
    NotDifferentiable,
    NumericError,
    OutOfInterval,
)
from .expr import VecMap, compose_maps
from .kernel import jacobian, jacobian_fd, jacobian_symbolic, smoothness_probe
from .report import AxiomReport
from .tolerance import TolerancePolicy, resolve


def charts_at(d: MuStructure, p, alpha, tol: TolerancePolicy | None = None) -> list:
    """``A^{p, alpha}``: charts containing p whose mu-image is exactly {alpha}."""
    tol = resolve(tol)
    alpha = as_level(alpha)
    return [c for c in d.charts if p in c.domain and _singleton_level(d.mu, c.domain, alpha, tol.eq_tol)]


@dataclass
class MultiPath:
    point: object
    alpha: tuple
    curves: dict

    def __post_init__(self):
        self.alpha = as_level(self.alpha)
        for name, c in self.curves.items():
            if c.in_dim != 1:
                raise InputError(f"curve for chart {name!r} must have one parameter")

    @classmethod
    def linear(cls, d: MuStructure, p, alpha, velocities: Mapping, tol=None) -> "MultiPath":
        """``t -> phi(p) + t v`` in each chart of ``A^{p, alpha}``."""
        curves = {}
        for c in charts_at(d, p, alpha, tol):
            v = np.asarray(velocities[c.name], dtype=float).reshape(-1)
            curves[c.name] = VecMap.affine(v.reshape(-1, 1), c.phi(p), (-1.0,), (1.0,)).renamed(("t",))
        return cls(p, alpha, curves)

    def family(self) -> frozenset:
        return frozenset(self.curves)


def validate_multipath(g: MultiPath, d: MuStructure, r: int = 1, tol: TolerancePolicy | None = None) -> AxiomReport:
    tol = resolve(tol)
    rep = AxiomReport()
    expected = {c.name for c in charts_at(d, g.point, g.alpha, tol)}
    rep.add("path:family", "path", set(g.curves) == expected, "one curve per chart of A^{p,alpha}",
            witness={"expected": sorted(expected), "given": sorted(g.curves)} if set(g.curves) != expected else None)
    for name in sorted(g.curves):
        curve = g.curves[name]
        try:
            start = curve(np.zeros(1))
            chart = d.chart(name)
            ok = start.shape == chart.phi(g.point).shape and np.max(np.abs(start - chart.phi(g.point))) <= tol.deriv_tol
        except (InputError, NumericError):
            ok = False
        rep.add(f"path[{name}]:d1", "d1", ok, "curve passes through phi(p) at t = 0")
        pr = smoothness_probe(curve, np.zeros(1), r, tol)
        rep.add(f"path[{name}]:d2", "d2", pr.passes, f"curve is C^{r} at 0", witness=pr.diagnostics or None)
    return rep


def _curve(g: MultiPath, name: str) -> VecMap:
    try:
        return g.curves[name]
    except KeyError:
        raise ChartNotInFamily(f"chart {name!r} is not in the path's family") from None


def path_velocity(g: MultiPath, chart, tol: TolerancePolicy | None = None) -> np.ndarray:
    """``d(phi o gamma)/dt`` at 0 in the given chart."""
    tol = resolve(tol)
    name = chart.name if isinstance(chart, Chart) else chart
    c = _curve(g, name)
    t0 = np.zeros(1)
    if c.abs_free:
        v = jacobian_symbolic(c, t0)[:, 0]
        check = jacobian_fd(c, t0, tol=tol)[:, 0]
        if np.max(np.abs(v - check)) > tol.deriv_tol * (1 + np.max(np.abs(v))):
            raise NumericError(f"symbolic and finite-difference velocities disagree in chart {name!r}")
        return v
    return jacobian(c, t0, tol)[:, 0]


def paths_equivalent(g1: MultiPath, g2: MultiPath, tol: TolerancePolicy | None = None) -> bool:
    tol = resolve(tol)
    if g1.point != g2.point or g1.alpha != g2.alpha or g1.family() != g2.family():
        raise FamilyMismatch("paths differ in base point, level or chart family")
    return all(
        np.max(np.abs(path_velocity(g1, n, tol) - path_velocity(g2, n, tol))) <= tol.deriv_tol
        for n in sorted(g1.curves)
    )


def path_component(g: MultiPath, chart: Chart, t: float, tol: TolerancePolicy | None = None):
    """Model value of the curve at t; a carrier label when it hits an anchor of the chart."""
    tol = resolve(tol)
    if not -1.0 < t < 1.0:
        raise OutOfInterval(f"t = {t} is outside (-1, 1)")
    value = _curve(g, chart.name)(np.array([t]))
    hit = chart.phi_inverse(value, tol.deriv_tol)
    return hit if hit is not None else value


# ---------------------------------------------------------------- chart classes


@dataclass
class OverlapWitness:
    """Maps ``f_i`` from ``phi_i(U1 & U2)`` into ``phi_i(U_i)``, keyed by chart name."""

    maps: dict

    @classmethod
    def identity(cls, c1: Chart, c2: Chart) -> "OverlapWitness":
        return cls({c.name: VecMap.identity(c.dim, c.lower, c.upper) for c in (c1, c2)})


def verify_overlap(c1: Chart, c2: Chart, w: OverlapWitness, tol: TolerancePolicy | None = None) -> AxiomReport:
    tol = resolve(tol)
    rep = AxiomReport()
    overlap = c1.domain & c2.domain
    tag = f"sim[{c1.name}~{c2.name}]"
    rep.add(f"{tag}:overlap", "e1", bool(overlap), "charts overlap")
    if not overlap:
        return rep
    for c in (c1, c2):
        fmap = w.maps.get(c.name)
        if fmap is None or fmap.in_dim != c.dim or fmap.out_dim != c.dim:
            rep.add(f"{tag}:{c.name}", "e2", False, "missing or mis-shaped overlap map")
            continue
        anchors = [c.phi(u) for u in sorted(overlap, key=str)]
        e1 = all(c.box_contains(a) for a in anchors)
        e1_rank = True
        for a in anchors:
            try:
                if np.linalg.matrix_rank(jacobian(fmap, a, tol)) < c.dim:
                    e1_rank = False
            except (InputError, NumericError):
                e1_rank = False
        rep.add(f"{tag}:{c.name}:e1", "e1", e1 and e1_rank,
                "overlap anchors in the model box with a full-rank parametrization")
        lo = np.maximum(np.array(c.lower), np.array(fmap.lower))
        hi = np.minimum(np.array(c.upper), np.array(fmap.upper))
        ok = bool(np.all(lo < hi))
        if ok:
            for x in sample_grid(lo, hi):
                try:
                    if not abs(np.linalg.det(jacobian(fmap, x, tol))) > MIN_ABS_DET:
                        ok = False
                        break
                except NumericError:
                    ok = False
                    break
        rep.add(f"{tag}:{c.name}:e2", "e2", ok, "overlap map has invertible Jacobian at samples")
    return rep


@dataclass
class ChartClassPartition:
    charts: dict
    classes: tuple
    unverified: list = field(default_factory=list)

    def representative(self, block) -> str:
        return min(block)

    def representatives(self) -> list:
        return [self.representative(b) for b in self.classes]

    def class_of(self, name: str) -> tuple:
        for b in self.classes:
            if name in b:
                return b
        raise ChartNotInFamily(f"chart {name!r} is not partitioned")

    def dims(self) -> dict:
        return {self.representative(b): self.charts[self.representative(b)].dim for b in self.classes}


def partition_charts(a_p_alpha: Iterable[Chart], witnesses: Mapping | None = None,
                     tol: TolerancePolicy | None = None) -> ChartClassPartition:
    """Classes of the chart relation: transitive closure of verified pairs."""
    tol = resolve(tol)
    charts = {c.name: c for c in a_p_alpha}
    witnesses = dict(witnesses or {})
    parent = {n: n for n in charts}

    def find(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    unverified = []
    for a, b in itertools.combinations(sorted(charts), 2):
        w = witnesses.get((a, b)) or witnesses.get((b, a))
        if w is None:
            unverified.append((a, b))
            continue
        if verify_overlap(charts[a], charts[b], w, tol).passes:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        else:
            unverified.append((a, b))
    blocks: dict = {}
    for n in sorted(charts):
        blocks.setdefault(find(n), []).append(n)
    classes = tuple(sorted(tuple(sorted(b)) for b in blocks.values()))
    return ChartClassPartition(charts, classes, unverified)


# ---------------------------------------------------------------- tangent vectors


@dataclass(frozen=True, eq=False)
class TangentVector:
    point: object
    alpha: tuple
    components: tuple  # ((representative, vector), ...) sorted by representative

    def vector(self, rep: str) -> np.ndarray:
        for name, v in self.components:
            if name == rep:
                return v
        raise MissingRepresentative(f"no component for class {rep!r}")

    def classes(self) -> tuple:
        return tuple(name for name, _ in self.components)

    def flat(self) -> np.ndarray:
        if not self.components:
            return np.zeros(0)
        return np.concatenate([v for _, v in self.components])

    def allclose(self, other: "TangentVector", atol: float) -> bool:
        return (self.point == other.point and self.alpha == other.alpha and self.classes() == other.classes()
                and bool(np.all(np.abs(self.flat() - other.flat()) <= atol)))

    def __add__(self, other):
        return tv_add(self, other)

    def __rmul__(self, c):
        return tv_scale(c, self)

    def __neg__(self):
        return tv_scale(-1.0, self)

    def __sub__(self, other):
        return tv_add(self, tv_scale(-1.0, other))


def make_vector(point, alpha, components: Mapping) -> TangentVector:
    comps = tuple((k, np.asarray(components[k], dtype=float).reshape(-1)) for k in sorted(components))
    return TangentVector(point, as_level(alpha), comps)


def zero_vector(point, alpha, part: ChartClassPartition) -> TangentVector:
    return make_vector(point, alpha, {rep: np.zeros(dim) for rep, dim in part.dims().items()})


def tangent_bijection(g: MultiPath, part: ChartClassPartition, tol: TolerancePolicy | None = None) -> TangentVector:
    """Velocity of the path in each class representative chart."""
    comps = {}
    for block in part.classes:
        rep = part.representative(block)
        if rep not in g.curves:
            raise MissingRepresentative(f"path has no curve in representative chart {rep!r}")
        comps[rep] = path_velocity(g, rep, tol)
    return make_vector(g.point, g.alpha, comps)


def tv_add(v: TangentVector, w: TangentVector) -> TangentVector:
    if v.point != w.point or v.alpha != w.alpha or v.classes() != w.classes():
        raise BaseMismatch("tangent vectors live in different tangent spaces")
    if any(a.shape != b.shape for (_, a), (_, b) in zip(v.components, w.components)):
        raise BaseMismatch("component dimensions differ")
    return TangentVector(v.point, v.alpha, tuple((n, a + b) for (n, a), (_, b) in zip(v.components, w.components)))


def tv_scale(c: float, v: TangentVector) -> TangentVector:
    c = float(c)
    return TangentVector(v.point, v.alpha, tuple((n, c * a) for n, a in v.components))


# ---------------------------------------------------------------- differential


@dataclass
class Differential:
    """``d_p^alpha f`` as one Jacobian per linked (source class, target class)."""

    point: object
    image_point: object
    alpha: tuple
    matrices: dict
    source: ChartClassPartition
    target: ChartClassPartition

    def link_for(self, tgt_rep: str):
        for (s, t) in sorted(self.matrices):
            if t == tgt_rep:
                return s
        raise MissingTransition(f"no source class linked to target class {tgt_rep!r}")

    def apply(self, v: TangentVector) -> TangentVector:
        if v.point != self.point or v.alpha != self.alpha:
            raise BaseMismatch("vector is not based at the differential's point and level")
        comps = {}
        for rep in self.target.representatives():
            src = self.link_for(rep)
            comps[rep] = self.matrices[(src, rep)] @ v.vector(src)
        return make_vector(self.image_point, self.alpha, comps)

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(m))) if m.size else 0.0 for m in self.matrices.values()), default=0.0)


def alpha_differential(f: SelectiveMap, p, alpha, parts, d1: MuStructure, d2: MuStructure,
                       r: int = 1, tol: TolerancePolicy | None = None) -> Differential:
    """Jacobians of registered transitions between class representatives, at phi(p)."""
    tol = resolve(tol)
    src_part, tgt_part = parts
    rep = is_r_alpha_differentiable(f, p, r, alpha, d1, d2, tol)
    if not rep.verdict:
        raise NotDifferentiable(f"{f.name!r} is not ({r}, alpha)-differentiable at {p!r}: fails {rep.failed()}")
    matrices = {}
    for s in src_part.representatives():
        for t in tgt_part.representatives():
            trans = f.transitions.get((s, t))
            if trans is None:
                continue
            matrices[(s, t)] = jacobian(trans, d1.chart(s).phi(p), tol)
    linked = {t for _, t in matrices}
    missing = [t for t in tgt_part.representatives() if t not in linked]
    if missing:
        raise MissingTransition(f"no registered transition reaches target classes {missing}")
    return Differential(p, f(p), as_level(alpha), matrices, src_part, tgt_part)


def pushforward_path(f: SelectiveMap, g: MultiPath, d2: MuStructure, tol: TolerancePolicy | None = None) -> MultiPath:
    """``f o gamma`` as a multi-path at f(p), one curve per reachable level-alpha target chart."""
    tol = resolve(tol)
    curves = {}
    for c in charts_at(d2, f(g.point), g.alpha, tol):
        for src in sorted(g.curves):
            trans = f.transitions.get((src, c.name))
            if trans is not None:
                curves[c.name] = compose_maps(trans, g.curves[src])
                break
    return MultiPath(f(g.point), g.alpha, curves)


def pushforward_error(df: Differential, f: SelectiveMap, g: MultiPath, d2: MuStructure,
                      tol: TolerancePolicy | None = None) -> float:
    """Max gap between ``df [gamma]`` and the finite-difference velocity of ``[f o gamma]``."""
    tol = resolve(tol)
    predicted = df.apply(tangent_bijection(g, df.source, tol))
    pushed = pushforward_path(f, g, d2, tol)
    worst = 0.0
    for rep in df.target.representatives():
        if rep not in pushed.curves:
            raise MissingTransition(f"pushed path misses target class {rep!r}")
        v = jacobian_fd(pushed.curves[rep], np.zeros(1), tol=tol)[:, 0]
        worst = max(worst, float(np.max(np.abs(v - predicted.vector(rep)))))
    return worst
