"""Products of selective structures.

Product points are flat tuples of factor labels; nesting a product inside
another product flattens, so folding over a list of factors is associative
at the data level.  Tuple labels are therefore reserved for product points.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from .atlas import Chart, CompatibilityWitness, MuStructure, validate_structure
from .exceptions import FactorInvalid, FactorWitnessInvalid, InputError
from .expr import product_maps
from .observer import Carrier, ConstantObserver, Observer
from .tolerance import TolerancePolicy, resolve
from .topology import KDomain


def _flat(label) -> tuple:
    return label if isinstance(label, tuple) else (label,)


def _pair(a, b) -> tuple:
    return _flat(a) + _flat(b)


class ProductCarrier(Carrier):
    """Carrier of flat label tuples with the arity split of its factors."""

    __slots__ = ("factors", "split")

    def __init__(self, factors: Sequence[Carrier]):
        factors = tuple(factors)
        labels = [()]
        split = []
        for fac in factors:
            labels = [_flat(a) + _flat(b) if a else _flat(b) for a in labels for b in fac.labels]
            split.extend(getattr(fac, "split", (1,)))
        super().__init__(labels)
        self.factors = factors
        self.split = tuple(split)


def product_carrier(c1: Carrier, c2: Carrier) -> ProductCarrier:
    facs = []
    for c in (c1, c2):
        facs.extend(c.factors if isinstance(c, ProductCarrier) else (c,))
    return ProductCarrier(facs)


def product_observer(m1: Observer, m2: Observer) -> Observer:
    """``mu(x, y) = (mu1(x), mu2(y))`` on the product carrier."""
    carrier = product_carrier(m1.carrier, m2.carrier)
    rows = np.vstack([np.concatenate([m1.values[i], m2.values[j]])
                      for i in range(len(m1.carrier)) for j in range(len(m2.carrier))])
    return Observer(carrier, rows)


def _concat_constant(a: ConstantObserver, b: ConstantObserver) -> ConstantObserver:
    return ConstantObserver(a.constants + b.constants)


def product_chart(c1: Chart, c2: Chart) -> Chart:
    coords = {}
    for u, x in c1.coords.items():
        for v, y in c2.coords.items():
            coords[_pair(u, v)] = np.concatenate([x, y])
    prov = None
    if c1.provenance is not None and c2.provenance is not None:
        p1, p2 = c1.provenance, c2.provenance
        prov = KDomain(
            frozenset(coords),
            frozenset(_pair(a, b) for a in p1.u1 for b in p2.u1),
            _concat_constant(p1.r, p2.r),
            _concat_constant(p1.s, p2.s),
        )
    ext = None
    if c1.extension is not None or c2.extension is not None:
        ext = product_maps(c1.model_map(), c2.model_map())
    return Chart(f"{c1.name}*{c2.name}", coords, c1.lower + c2.lower, c1.upper + c2.upper,
                 extension=ext, provenance=prov)


def _commutation_error(src: Chart, dst: Chart, w: CompatibilityWitness) -> float:
    worst = 0.0
    for u in src.domain:
        lhs = w.h(src.phi(u))
        rhs = dst.phi(w.h0[u])
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def product_witness(w1: CompatibilityWitness, w2: CompatibilityWitness,
                    src: tuple | None = None, dst: tuple | None = None,
                    tol: TolerancePolicy | None = None) -> CompatibilityWitness:
    """Assemble ``(xi0 x eta0, xi x eta)`` from factor witnesses.

    With ``src = (phi_a, psi_b)`` and ``dst = (phi_s, psi_d)`` both factor
    diagrams and the product diagram are checked on every point.
    """
    tol = resolve(tol)
    h0 = {_pair(u, v): _pair(w1.h0[u], w2.h0[v]) for u in w1.h0 for v in w2.h0}
    h = product_maps(w1.h, w2.h)
    h_inv = product_maps(w1.h_inv, w2.h_inv) if w1.h_inv is not None and w2.h_inv is not None else None
    w = CompatibilityWitness(h0, h, h_inv)
    if src is not None and dst is not None:
        for k, (a, b, wk) in enumerate(((src[0], dst[0], w1), (src[1], dst[1], w2))):
            try:
                err = _commutation_error(a, b, wk)
            except (InputError, KeyError) as exc:
                raise FactorWitnessInvalid(f"factor {k + 1} witness unusable: {exc}") from exc
            if err > tol.deriv_tol:
                raise FactorWitnessInvalid(f"factor {k + 1} witness does not commute (error {err:.3g})")
        err = _commutation_error(product_chart(*src), product_chart(*dst), w)
        if err > tol.deriv_tol:
            raise FactorWitnessInvalid(f"assembled witness does not commute (error {err:.3g})")
    return w


def product_structure(d1: MuStructure, d2: MuStructure, r: int = 1, validate: bool = True,
                      tol: TolerancePolicy | None = None) -> MuStructure:
    """All product charts, with witnesses assembled wherever both factors have one.

    Pairs lacking a factor witness get no product witness and show up as
    unverifiable when the product is validated.
    """
    tol = resolve(tol)
    if validate:
        for k, d in enumerate((d1, d2)):
            rep = validate_structure(d, r, tol)
            if not rep.passes:
                bad = ", ".join(x.check_id for x in rep.failures())
                raise FactorInvalid(f"factor {k + 1} fails validation: {bad}")
    mu = product_observer(d1.mu, d2.mu)
    pairs = [(a, b) for a in d1.charts for b in d2.charts]
    charts = [product_chart(a, b) for a, b in pairs]
    witnesses = {}
    for (a, b), pc in zip(pairs, charts):
        for (s, t), qc in zip(pairs, charts):
            w1 = d1.witness_for(a.name, s.name)
            w2 = d2.witness_for(b.name, t.name)
            if w1 is None or w2 is None:
                continue
            witnesses[(pc.name, qc.name)] = product_witness(w1, w2, tol=tol)
    return MuStructure(mu.carrier, mu, charts, witnesses)


def n_fold_product(ds: Sequence[MuStructure], r: int = 1, validate: bool = True,
                   tol: TolerancePolicy | None = None) -> MuStructure:
    ds = list(ds)
    if len(ds) < 2:
        raise InputError("n_fold_product needs at least two factors")
    tol = resolve(tol)
    if validate:
        for k, d in enumerate(ds):
            if not validate_structure(d, r, tol).passes:
                raise FactorInvalid(f"factor {k + 1} fails validation")
    first = product_structure(ds[0], ds[1], r, False, tol)
    return reduce(lambda acc, d: product_structure(acc, d, r, False, tol), ds[2:], first)
