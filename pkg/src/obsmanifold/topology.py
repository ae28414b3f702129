"""mu-topologies, level preimages and generated point topologies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import BoundsNotOrdered, DimensionMismatch, EmptyK1, NotDominated
from .observer import (
    Carrier,
    ConstantObserver,
    Observer,
    as_constant,
    leq,
    zero_observer,
)
from .report import AxiomReport
from .tolerance import TolerancePolicy, resolve


@dataclass(frozen=True)
class MuTopology:
    mu: Observer
    members: tuple

    @property
    def carrier(self) -> Carrier:
        return self.mu.carrier

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, obs):
        return obs in set(self.members)

    def contains(self, obs: Observer, tol: TolerancePolicy | None = None) -> bool:
        return _find(_stack(self.members), obs.values.reshape(-1), resolve(tol).eq_tol) >= 0


def _stack(observers: Sequence[Observer]) -> np.ndarray:
    if not observers:
        return np.zeros((0, 0))
    return np.vstack([o.values.reshape(1, -1) for o in observers])


def _find(rows: np.ndarray, target: np.ndarray, eq_tol: float) -> int:
    if rows.shape[0] == 0:
        return -1
    dist = np.abs(rows - target[None, :]).max(axis=1)
    hits = np.nonzero(dist <= eq_tol)[0]
    return int(hits[0]) if hits.size else -1


def _unique_rows(rows: np.ndarray) -> np.ndarray:
    return np.unique(rows, axis=0)


def _close(rows: np.ndarray, op) -> np.ndarray:
    """Closure of a row set under a pointwise binary operation (worklist)."""
    members = _unique_rows(rows)
    known = {r.tobytes() for r in members}
    frontier = members
    while frontier.shape[0]:
        combos = op(frontier[:, None, :], members[None, :, :]).reshape(-1, members.shape[1])
        combos = _unique_rows(combos)
        fresh = [r for r in combos if r.tobytes() not in known]
        if not fresh:
            break
        fresh = np.vstack(fresh)
        known.update(r.tobytes() for r in fresh)
        members = np.vstack([members, fresh])
        frontier = fresh
    return members


def generate_mu_topology(mu: Observer, family: Iterable[Observer], tol: TolerancePolicy | None = None) -> MuTopology:
    """Smallest family containing ``family``, mu and zero, closed under inf and sup.

    Meets are closed first; in the distributive observer lattice the join
    closure of a meet-closed set is again meet-closed, so one pass of each
    reaches the fixpoint.
    """
    tol = resolve(tol)
    family = list(family)
    for lam in family:
        if not leq(lam, mu, tol):
            raise NotDominated(f"family member {lam!r} is not below mu")
    carrier, m = mu.carrier, mu.dim
    zero = zero_observer(carrier, m)
    rows = _stack([zero, mu] + family)
    rows = _close(rows, np.minimum)
    rows = _close(rows, np.maximum)
    rows = _unique_rows(rows)
    shape = (len(carrier), m)
    members = tuple(Observer(carrier, r.reshape(shape)) for r in rows)
    return MuTopology(mu, members)


def validate_mu_axioms(t: MuTopology, tol: TolerancePolicy | None = None) -> AxiomReport:
    """Check dominance and a1-a3; failures carry the offending member(s)."""
    tol = resolve(tol)
    rep = AxiomReport()
    members = list(t.members)
    rows = _stack(members)
    mu = t.mu

    undominated = [o for o in members if not leq(o, mu, tol)]
    rep.add("dominated", "a0", not undominated, "every member is below mu",
            witness=undominated[0].as_dict() if undominated else None)

    zero = zero_observer(mu.carrier, mu.dim)
    has_mu = _find(rows, mu.values.reshape(-1), tol.eq_tol) >= 0 if members else False
    has_zero = _find(rows, zero.values.reshape(-1), tol.eq_tol) >= 0 if members else False
    missing = [name for name, ok in (("mu", has_mu), ("zero", has_zero)) if not ok]
    rep.add("a1", "a1", not missing, "mu and the zero observer are members",
            witness={"missing": missing} if missing else None)

    for axiom, op, what in (("a2", np.minimum, "intersection"), ("a3", np.maximum, "union")):
        witness = _closure_violation(rows, op, tol.eq_tol)
        detail = f"closed under pairwise {what}"
        if witness is not None:
            i, j = witness
            witness = {"pair": [i, j], "left": members[i].as_dict(), "right": members[j].as_dict()}
        rep.add(axiom, axiom, witness is None, detail, witness=witness)
    return rep


def _closure_violation(rows: np.ndarray, op, eq_tol: float):
    n = rows.shape[0]
    if n == 0:
        return None
    exact = {r.tobytes() for r in rows}
    for i in range(n):
        combos = op(rows[i][None, :], rows[i:])
        for off, c in enumerate(combos):
            if c.tobytes() in exact:
                continue
            if _find(rows, c, eq_tol) < 0:
                return (i, i + off)
    return None


# ---------------------------------------------------------------- level sets


def _bounds(lam: Observer, r, s, tol: TolerancePolicy):
    r = as_constant(r, lam.dim)
    s = as_constant(s, lam.dim)
    if r.dim != lam.dim or s.dim != lam.dim:
        raise DimensionMismatch("bound dimensions do not match the observer")
    lo = np.array(r.constants)
    hi = np.array(s.constants)
    if np.any(lo >= hi):
        raise BoundsNotOrdered(f"bounds not ordered: r={r.constants}, s={s.constants}")
    return lo, hi


def level_preimage(lam: Observer, r, s, tol: TolerancePolicy | None = None) -> frozenset:
    """Points where ``r_j < lam_j < s_j`` for every coordinate j (margin eq_tol)."""
    tol = resolve(tol)
    lo, hi = _bounds(lam, r, s, tol)
    inside = np.all((lam.values > lo + tol.eq_tol) & (lam.values < hi - tol.eq_tol), axis=1)
    return frozenset(lab for lab, ok in zip(lam.carrier, inside) if ok)


@dataclass(frozen=True)
class PointTopology:
    carrier: Carrier
    opens: frozenset

    def __len__(self):
        return len(self.opens)

    def __contains__(self, subset):
        return frozenset(subset) in self.opens

    def is_discrete(self) -> bool:
        return len(self.opens) == 2 ** len(self.carrier)

    def check(self) -> AxiomReport:
        rep = AxiomReport()
        full = frozenset(self.carrier)
        rep.add("empty", "topology", frozenset() in self.opens, "contains the empty set")
        rep.add("whole", "topology", full in self.opens, "contains the carrier")
        opens = list(self.opens)
        bad_meet = next(((a, b) for a in opens for b in opens if a & b not in self.opens), None)
        rep.add("meets", "topology", bad_meet is None, "closed under intersection", witness=bad_meet)
        bad_join = next(((a, b) for a in opens for b in opens if a | b not in self.opens), None)
        rep.add("joins", "topology", bad_join is None, "closed under union", witness=bad_join)
        return rep


def _masks_close(masks: set, op) -> set:
    masks = set(masks)
    frontier = set(masks)
    while frontier:
        fresh = set()
        for a in frontier:
            for b in masks:
                c = op(a, b)
                if c not in masks:
                    fresh.add(c)
        masks |= fresh
        frontier = fresh
    return masks


def generate_level_topology(t: MuTopology, bounds: Sequence, tol: TolerancePolicy | None = None) -> PointTopology:
    """Topology with subbasis ``{lam^-1(r, s)}`` over members and bound pairs."""
    tol = resolve(tol)
    carrier = t.carrier
    subbasis = set()
    for r, s in bounds:
        for lam in t.members:
            subbasis.add(level_preimage(lam, r, s, tol))
    return topology_from_subbasis(carrier, subbasis)


def topology_from_subbasis(carrier: Carrier, subbasis: Iterable) -> PointTopology:
    labels = carrier.labels

    def to_mask(subset):
        m = 0
        for lab in subset:
            m |= 1 << carrier.index(lab)
        return m

    full = (1 << len(labels)) - 1
    masks = {to_mask(s) for s in subbasis}
    masks = _masks_close(masks, lambda a, b: a & b)
    masks = _masks_close(masks, lambda a, b: a | b)
    masks |= {0, full}
    opens = frozenset(frozenset(lab for i, lab in enumerate(labels) if m >> i & 1) for m in masks)
    return PointTopology(carrier, opens)


# ---------------------------------------------------------------- chart domains


@dataclass(frozen=True)
class KDomain:
    """A chart domain ``U = U1 & mu^-1(r, s)`` with its provenance."""

    domain: frozenset
    u1: frozenset
    r: ConstantObserver
    s: ConstantObserver


@dataclass
class KSet:
    domains: list = field(default_factory=list)
    discarded: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.domains

    def __iter__(self):
        return iter(self.domains)

    def __len__(self):
        return len(self.domains)

    def subsets(self) -> set:
        return {d.domain for d in self.domains}


def build_K(k1: Iterable, mu: Observer, bounds: Sequence, tol: TolerancePolicy | None = None) -> KSet:
    """All non-empty ``U1 & mu^-1(r, s)``; empty intersections are reported in ``discarded``."""
    tol = resolve(tol)
    k1 = [frozenset(u) for u in k1]
    if not k1:
        raise EmptyK1("K1 must be non-empty")
    bounds = list(bounds)
    if not bounds:
        raise EmptyK1("no (r, s) bounds supplied, so K1 yields no chart domains")
    out = KSet()
    seen = set()
    for u1 in k1:
        mu.carrier.subset(u1)
        for r, s in bounds:
            r = as_constant(r, mu.dim)
            s = as_constant(s, mu.dim)
            dom = u1 & level_preimage(mu, r, s, tol)
            entry = KDomain(dom, u1, r, s)
            if not dom:
                out.discarded.append(entry)
            elif dom not in seen:
                seen.add(dom)
                out.domains.append(entry)
    return out
