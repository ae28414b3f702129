"""Level-alpha differentiability of maps between selective structures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .atlas import Chart, MuStructure
from .exceptions import (
    CarrierMismatch,
    InputError,
    MissingInverseTransition,
    MissingMiddleChart,
    NoTransitionRegistered,
    NumericError,
    PreconditionFailed,
    PreimageMismatch,
    ProvenanceMissing,
)
from .expr import VecMap, compose_maps
from .kernel import smoothness_probe, step_sizes
from .observer import Carrier, Observer, image, same_value_set
from .report import AxiomReport
from .tolerance import TolerancePolicy, resolve
from .topology import KDomain, level_preimage

#: Finite stand-in for r = infinity; abs-free transitions short-circuit symbolically.
SMOOTH_PROBE_CAP = 4


def as_level(alpha) -> tuple:
    return tuple(float(a) for a in np.atleast_1d(alpha))


class SelectiveMap:
    """A total point map between carriers plus analytic chart transitions.

    ``transitions[(U, V)]`` represents ``psi o f o phi^-1`` on phi's model
    box; ``inverse_transitions[(V, U)]`` the corresponding inverse, used when
    the map is a diffeomorphism.
    """

    def __init__(self, source: Carrier, target: Carrier, table: Mapping,
                 transitions: Mapping | None = None, inverse_transitions: Mapping | None = None,
                 name: str = "f"):
        missing = [p for p in source if p not in table]
        if missing:
            raise InputError(f"map {name!r} is not total; missing {missing}")
        extra = [p for p in table if p not in source]
        if extra:
            raise InputError(f"map {name!r} has points outside its source {extra}")
        bad = [table[p] for p in source if table[p] not in target]
        if bad:
            raise InputError(f"map {name!r} sends points outside its target: {bad}")
        self.source = source
        self.target = target
        self.table = {p: table[p] for p in source}
        self.transitions = dict(transitions or {})
        self.inverse_transitions = dict(inverse_transitions or {})
        self.name = name

    def __call__(self, p):
        return self.table[p]

    def image_of(self, subset) -> frozenset:
        return frozenset(self.table[p] for p in subset)

    def preimage(self, subset) -> frozenset:
        subset = frozenset(subset)
        return frozenset(p for p in self.source if self.table[p] in subset)

    def is_bijective(self) -> bool:
        vals = set(self.table.values())
        return len(vals) == len(self.source) and vals == set(self.target.labels)

    def inverse(self) -> "SelectiveMap":
        if not self.is_bijective():
            raise InputError(f"map {self.name!r} is not bijective")
        inv = {v: k for k, v in self.table.items()}
        return SelectiveMap(self.target, self.source, inv, self.inverse_transitions, self.transitions,
                            name=f"{self.name}^-1")

    @classmethod
    def identity(cls, d: MuStructure, name: str = "id") -> "SelectiveMap":
        """Identity map with identity transitions on each chart and witness maps between equal domains."""
        trans, inv = {}, {}
        for c in d.charts:
            trans[(c.name, c.name)] = inv[(c.name, c.name)] = VecMap.identity(c.dim, c.lower, c.upper)
        for a in d.charts:
            for b in d.charts:
                if a.name == b.name or not a.domain <= b.domain:
                    continue
                w = d.witness_for(a.name, b.name)
                if w is not None and all(w.h0.get(u) == u for u in a.domain):
                    trans[(a.name, b.name)] = w.h
                    if w.h_inv is not None:
                        inv[(b.name, a.name)] = w.h_inv
        return cls(d.carrier, d.carrier, {p: p for p in d.carrier}, trans, inv, name=name)

    def __repr__(self):
        return f"SelectiveMap({self.name!r}, transitions={sorted(self.transitions)})"


def validate_transitions(f: SelectiveMap, d1: MuStructure, d2: MuStructure,
                         tol: TolerancePolicy | None = None) -> AxiomReport:
    """Registered transitions must reproduce the point table in coordinates."""
    tol = resolve(tol)
    rep = AxiomReport()
    for (a, b), t in sorted(f.transitions.items()):
        ca, cb = d1.chart(a), d2.chart(b)
        bad = None
        for u in sorted(ca.domain, key=str):
            fu = f(u)
            if fu not in cb.domain:
                bad = {"point": u, "reason": "f(u) outside target chart"}
                break
            try:
                err = float(np.max(np.abs(t(ca.phi(u)) - cb.phi(fu))))
            except (InputError, NumericError) as exc:
                bad = {"point": u, "reason": str(exc)}
                break
            if err > tol.deriv_tol:
                bad = {"point": u, "error": err}
                break
        rep.add(f"transition[{f.name}:{a}->{b}]", "map", bad is None,
                "transition agrees with the point table", witness=bad)
    return rep


@dataclass(frozen=True)
class KfAlphaSet:
    alpha: tuple
    pairs: tuple

    def __bool__(self):
        return bool(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def _singleton_level(mu: Observer, domain, alpha: tuple, eq_tol: float) -> bool:
    vals = image(mu, domain, TolerancePolicy(eq_tol=eq_tol))
    return len(vals) == 1 and len(alpha) == len(vals[0]) and max(abs(a - b) for a, b in zip(vals[0], alpha)) <= eq_tol


def compute_k_f_alpha(f: SelectiveMap, alpha, d1: MuStructure, d2: MuStructure,
                      tol: TolerancePolicy | None = None) -> KfAlphaSet:
    """Chart pairs with ``f(U) <= V`` and ``mu1(U) = mu2(V) = {alpha}``."""
    tol = resolve(tol)
    alpha = as_level(alpha)
    left = [c for c in d1.charts if _singleton_level(d1.mu, c.domain, alpha, tol.eq_tol)]
    right = [c for c in d2.charts if _singleton_level(d2.mu, c.domain, alpha, tol.eq_tol)]
    pairs = tuple((u.name, v.name) for u in left for v in right if f.image_of(u.domain) <= v.domain)
    return KfAlphaSet(alpha, pairs)


def _c2(f: SelectiveMap, mu1: Observer, mu2: Observer, tol):
    for p in f.source:
        if np.max(np.abs(mu2.at(f(p)) - mu1.at(p))) > tol.eq_tol:
            return False, {"point": p, "mu1": list(mu1(p)), "mu2_of_f": list(mu2(f(p)))}
    return True, None


def check_c2(f: SelectiveMap, mu1: Observer, mu2: Observer, tol: TolerancePolicy | None = None) -> bool:
    """``mu2 o f = mu1`` pointwise."""
    return _c2(f, mu1, mu2, resolve(tol))[0]


def _c3(f: SelectiveMap, alpha: tuple, d2: MuStructure, mu1: Observer, mu2: Observer, tol):
    zero = all(a == 0.0 for a in alpha)
    for v in d2.charts:
        if not _singleton_level(mu2, v.domain, alpha, tol.eq_tol):
            continue
        pre = f.preimage(v.domain)
        if not pre:
            if zero:
                continue
            return False, {"chart": v.name, "reason": "empty preimage"}
        if not same_value_set(image(mu2, v.domain, tol), image(mu1, pre, tol), tol.eq_tol):
            return False, {"chart": v.name, "preimage_values": image(mu1, pre, tol)}
    return True, None


def check_c3(f: SelectiveMap, alpha, d2: MuStructure, mu1: Observer, mu2: Observer,
             tol: TolerancePolicy | None = None) -> bool:
    """``mu2(V) = mu1(f^-1(V))`` for every level-alpha chart V of the target."""
    return _c3(f, as_level(alpha), d2, mu1, mu2, resolve(tol))[0]


def _pairs_at(p, k: KfAlphaSet, d1: MuStructure) -> list:
    return [(a, b) for a, b in k.pairs if p in d1.chart(a).domain]


def _transition(f: SelectiveMap, pair) -> VecMap:
    t = f.transitions.get(pair)
    if t is None:
        raise NoTransitionRegistered(f"map {f.name!r} has no transition for charts {pair}")
    return t


def _probe_order(r) -> int:
    return SMOOTH_PROBE_CAP if r == math.inf else int(r)


def _c4(f, p, r, k, d1, tol):
    pairs = _pairs_at(p, k, d1)
    if not pairs:
        return True, {"vacuous": True}
    order = _probe_order(r)
    for pair in pairs:
        t = _transition(f, pair)
        x = d1.chart(pair[0]).phi(p)
        if order == 0:
            ok = t.contains(x)
            diag = [] if ok else ["phi(p) outside transition domain"]
        else:
            pr = smoothness_probe(t, x, order, tol)
            ok, diag = pr.passes, pr.diagnostics
        if not ok:
            return False, {"pair": list(pair), "diagnostics": diag}
    return True, None


def check_c4(f: SelectiveMap, p, r, k: KfAlphaSet, d1: MuStructure, tol: TolerancePolicy | None = None) -> bool:
    """Every transition of a K pair whose source chart holds p is C^r near phi(p)."""
    if not _pairs_at(p, k, d1):
        raise PreconditionFailed(f"{p!r} lies in no source chart of K_f,alpha")
    return _c4(f, p, r, k, d1, resolve(tol))[0]


@dataclass
class DiffReport:
    c1: bool
    c2: bool
    c3: bool
    c4: bool
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return self.c1 and self.c2 and self.c3 and self.c4

    def failed(self) -> list:
        return [name for name in ("c1", "c2", "c3", "c4") if not getattr(self, name)]

    def as_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3, "c4": self.c4,
                "verdict": self.verdict, "details": self.details}


def _diff_report(f, p, r, alpha, d1, d2, k, tol) -> DiffReport:
    if p not in f.source:
        raise InputError(f"{p!r} is not a point of the source carrier")
    details = {}
    c1 = bool(k.pairs)
    if not c1:
        details["c1"] = "K_f,alpha is empty"
    c2, w2 = _c2(f, d1.mu, d2.mu, tol)
    if w2:
        details["c2"] = w2
    c3, w3 = _c3(f, k.alpha, d2, d1.mu, d2.mu, tol)
    if w3:
        details["c3"] = w3
    c4, w4 = _c4(f, p, r, k, d1, tol)
    if w4:
        details["c4"] = w4
    return DiffReport(c1, c2, c3, c4, details)


def is_r_alpha_differentiable(f: SelectiveMap, p, r, alpha, d1: MuStructure, d2: MuStructure,
                              tol: TolerancePolicy | None = None) -> DiffReport:
    """Conditions c1-c4 at ``p``.  ``r = math.inf`` asks for alpha-smoothness.

    c4 is vacuous when p lies in no source chart of K_f,alpha.
    """
    tol = resolve(tol)
    k = compute_k_f_alpha(f, alpha, d1, d2, tol)
    return _diff_report(f, p, r, alpha, d1, d2, k, tol)


def is_r_alpha_differentiable_on(f: SelectiveMap, r, alpha, d1, d2, tol=None) -> bool:
    tol = resolve(tol)
    k = compute_k_f_alpha(f, alpha, d1, d2, tol)
    return all(_diff_report(f, p, r, alpha, d1, d2, k, tol).verdict for p in f.source)


def is_alpha_smooth(f: SelectiveMap, alpha, d1, d2, tol=None) -> bool:
    return is_r_alpha_differentiable_on(f, math.inf, alpha, d1, d2, tol)


# ---------------------------------------------------------------- continuity


def _continuous_at(t: VecMap, x, tol) -> bool:
    try:
        base = t(x)
    except (InputError, NumericError):
        return False
    hs = step_sizes(t, x)
    for j in range(t.in_dim):
        for sign in (1.0, -1.0):
            diffs = []
            for e in range(5):
                y = np.array(x, dtype=float)
                y[j] += sign * hs[j] * 10.0**-e
                if not t.contains(y):
                    return False
                try:
                    diffs.append(float(np.max(np.abs(t._raw(y) - base))))
                except NumericError:
                    return False
            if diffs[-1] <= tol.deriv_tol:
                continue
            shrinking = all(b <= a for a, b in zip(diffs, diffs[1:]))
            if not (shrinking and diffs[-1] * 100.0 <= diffs[0]):
                return False
    return True


def check_continuity(f: SelectiveMap, p, k: KfAlphaSet, d1: MuStructure,
                     tol: TolerancePolicy | None = None) -> bool:
    """Transitions at phi(p) +- delta (delta shrinking by decades) approach their value at phi(p)."""
    tol = resolve(tol)
    pairs = _pairs_at(p, k, d1)
    if not pairs:
        raise PreconditionFailed(f"{p!r} lies in no source chart of K_f,alpha")
    return all(_continuous_at(_transition(f, pair), d1.chart(pair[0]).phi(p), tol) for pair in pairs)


# ---------------------------------------------------------------- preimage charts


def preimage_domain(f: SelectiveMap, v: Chart, mu1: Observer, tol: TolerancePolicy | None = None) -> frozenset:
    """``f^-1(V1) & mu1^-1(r o f, s o f)`` from V's ``V1 & mu2^-1(r, s)`` provenance."""
    tol = resolve(tol)
    prov = v.provenance
    if prov is None:
        raise ProvenanceMissing(f"chart {v.name!r} has no K decomposition")
    u1 = f.preimage(prov.u1)
    # r o f and s o f are the same constants read on the source carrier
    return u1 & level_preimage(mu1, prov.r, prov.s, tol)


def preimage_chart(f: SelectiveMap, v: Chart, mu1: Observer, mu2: Observer | None = None,
                   tol: TolerancePolicy | None = None, name: str | None = None) -> Chart:
    """A source chart whose domain is exactly ``f^-1(V)``.

    Coordinates are pulled back (psi o f) when f is injective on the domain,
    otherwise the points are numbered along one axis.
    """
    tol = resolve(tol)
    dom = preimage_domain(f, v, mu1, tol)
    enumerated = f.preimage(v.domain)
    if dom != enumerated:
        raise PreimageMismatch(
            f"constructed domain {sorted(map(str, dom))} differs from f^-1(V) {sorted(map(str, enumerated))}"
        )
    if not dom:
        raise InputError(f"f^-1({v.name}) is empty; no chart to build")
    prov = v.provenance
    provenance = KDomain(dom, f.preimage(prov.u1), prov.r, prov.s)
    labels = f.source.ordered(dom)
    if len({f(u) for u in labels}) == len(labels):
        coords = {u: v.phi(f(u)) for u in labels}
        lower, upper = v.lower, v.upper
    else:
        coords = {u: [float(i)] for i, u in enumerate(labels)}
        lower, upper = (-1.0,), (float(len(labels)),)
    return Chart(name or f"{f.name}^-1({v.name})", coords, lower, upper, provenance=provenance)


# ---------------------------------------------------------------- composition


def compose(f: SelectiveMap, g: SelectiveMap) -> SelectiveMap:
    """``g o f`` with transitions composed through shared middle charts."""
    if f.target != g.source:
        raise CarrierMismatch("target of f is not the source of g")
    table = {p: g(f(p)) for p in f.source}
    trans = {}
    for (u, v), tf in sorted(f.transitions.items()):
        for (v2, w), tg in sorted(g.transitions.items()):
            if v2 == v and (u, w) not in trans:
                trans[(u, w)] = compose_maps(tg, tf)
    if f.transitions and g.transitions and not trans:
        raise MissingMiddleChart("no chart of the middle structure links a transition of f to one of g")
    inv = {}
    for (w, v), tg in sorted(g.inverse_transitions.items()):
        for (v2, u), tf in sorted(f.inverse_transitions.items()):
            if v2 == v and (w, u) not in inv:
                inv[(w, u)] = compose_maps(tf, tg)
    return SelectiveMap(f.source, g.target, table, trans, inv, name=f"{g.name}o{f.name}")


# ---------------------------------------------------------------- diffeomorphisms


def is_r_alpha_diffeomorphism(f: SelectiveMap, r, alpha, d1: MuStructure, d2: MuStructure,
                              tol: TolerancePolicy | None = None) -> bool:
    tol = resolve(tol)
    if not f.is_bijective():
        return False
    if not f.inverse_transitions:
        raise MissingInverseTransition(f"map {f.name!r} carries no inverse transitions")
    if not is_r_alpha_differentiable_on(f, r, alpha, d1, d2, tol):
        return False
    finv = f.inverse()
    try:
        return is_r_alpha_differentiable_on(finv, r, alpha, d2, d1, tol)
    except NoTransitionRegistered as exc:
        raise MissingInverseTransition(str(exc)) from exc


@dataclass
class ConsistencyReport:
    g_smooth: bool
    gf_smooth: bool

    @property
    def consistent(self) -> bool:
        return self.g_smooth == self.gf_smooth


def smooth_iff_composed(f: SelectiveMap, g: SelectiveMap, alpha, d1: MuStructure, d2: MuStructure,
                        d3: MuStructure, tol: TolerancePolicy | None = None,
                        check_f: bool = True) -> ConsistencyReport:
    """Decide alpha-smoothness of g and of g o f for an alpha-smooth diffeomorphism f.

    A disagreement (``consistent`` false) indicates a defect in the library.
    """
    tol = resolve(tol)
    if check_f and not is_r_alpha_diffeomorphism(f, math.inf, alpha, d1, d2, tol):
        raise PreconditionFailed(f"{f.name!r} is not an alpha-smooth diffeomorphism")
    g_ok = is_alpha_smooth(g, alpha, d2, d3, tol)
    gf_ok = is_alpha_smooth(compose(f, g), alpha, d1, d3, tol)
    return ConsistencyReport(g_ok, gf_ok)
