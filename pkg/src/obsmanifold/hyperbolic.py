"""Eigenvalue-count observers at hyperbolic fixed points.

Each point of the carrier is a pair (f, p) with p a fixed point of f.  The
observer records how many Jacobian eigenvalues lie outside and inside the
unit circle, and the chart sends (f, p) to the flattened Jacobian df(p).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .atlas import Chart, MuStructure, SelectiveManifold, check_chart, validate_b1, validate_selective
from .exceptions import DimensionMismatch, InputError, NotFixedPoint, NotHyperbolic
from .expr import VecMap
from .kernel import eigenvalues, jacobian
from .observer import Carrier, Observer
from .report import AxiomReport
from .tolerance import TolerancePolicy, resolve
from .topology import build_K

FIXED_POINT_TOL = 1e-8


@dataclass(frozen=True)
class DynamicalPoint:
    label: str
    f: VecMap
    p: tuple

    def __post_init__(self):
        if self.f.in_dim != self.f.out_dim:
            raise DimensionMismatch(f"{self.label}: map must send R^m to R^m")
        p = tuple(float(v) for v in np.atleast_1d(self.p))
        if len(p) != self.f.in_dim:
            raise DimensionMismatch(f"{self.label}: point has {len(p)} coordinates, map expects {self.f.in_dim}")
        object.__setattr__(self, "p", p)

    @classmethod
    def linear(cls, label: str, a) -> "DynamicalPoint":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        m = a.shape[0]
        return cls(label, VecMap.affine(a, np.zeros(m)), tuple(np.zeros(m)))

    @property
    def dim(self) -> int:
        return self.f.in_dim

    def residual(self) -> float:
        x = np.array(self.p)
        return float(np.max(np.abs(self.f(x) - x)))

    def require_fixed(self):
        res = self.residual()
        if not res <= FIXED_POINT_TOL:
            raise NotFixedPoint(f"{self.label}: |f(p) - p| = {res:.3g} exceeds {FIXED_POINT_TOL}")


def _jacobian_at(dp: DynamicalPoint, tol) -> np.ndarray:
    dp.require_fixed()
    return jacobian(dp.f, np.array(dp.p), tol)


@dataclass(frozen=True)
class SigmaDelta:
    sigma: int
    delta: int
    hyperbolic: bool
    eigenvalues: tuple

    def __iter__(self):
        return iter((self.sigma, self.delta, self.hyperbolic))


def count_moduli(eigs: Sequence[complex], unit_tol: float) -> SigmaDelta:
    mods = [abs(z) for z in eigs]
    sigma = sum(1 for r in mods if r > 1 + unit_tol)
    delta = sum(1 for r in mods if r < 1 - unit_tol)
    hyper = all(abs(r - 1) > unit_tol for r in mods)
    return SigmaDelta(sigma, delta, hyper, tuple(eigs))


def sigma_delta(dp: DynamicalPoint, tol: TolerancePolicy | None = None) -> SigmaDelta:
    tol = resolve(tol)
    return count_moduli(eigenvalues(_jacobian_at(dp, tol)), tol.unit_circle_tol)


def sigma_delta_matrix(a, tol: TolerancePolicy | None = None) -> SigmaDelta:
    tol = resolve(tol)
    return count_moduli(eigenvalues(np.atleast_2d(np.asarray(a, dtype=float))), tol.unit_circle_tol)


def observer_value(dp: DynamicalPoint, tol: TolerancePolicy | None = None) -> tuple:
    sd = sigma_delta(dp, tol)
    if not sd.hyperbolic:
        raise NotHyperbolic(f"{dp.label}: an eigenvalue lies on the unit circle")
    return (1.0 / (sd.sigma + 1), 1.0 / (sd.delta + 1))


def example_chart(dp: DynamicalPoint, tol: TolerancePolicy | None = None) -> np.ndarray:
    """df(p) as a matrix; ``.reshape(-1)`` gives the model point."""
    return _jacobian_at(dp, resolve(tol))


@dataclass
class ExampleStructure:
    carrier: Carrier
    mu: Observer
    structure: MuStructure
    report: AxiomReport


def build_example_structure(points: Sequence[DynamicalPoint], bounds: Sequence, k1=None,
                            tol: TolerancePolicy | None = None) -> ExampleStructure:
    """Carrier of (f, p) labels, eigenvalue-count observer, charts over ``build_K``.

    ``k1`` defaults to the single subset holding every point.
    """
    tol = resolve(tol)
    points = list(points)
    if not points:
        raise InputError("no dynamical points supplied")
    labels = [dp.label for dp in points]
    carrier = Carrier(labels)
    dims = {dp.dim for dp in points}
    if len(dims) != 1:
        raise DimensionMismatch(f"points mix state dimensions {sorted(dims)}")
    mu = Observer(carrier, np.array([observer_value(dp, tol) for dp in points]))
    flat = {dp.label: example_chart(dp, tol).reshape(-1) for dp in points}
    k1 = [frozenset(labels)] if k1 is None else k1
    ks = build_K(k1, mu, bounds, tol)
    charts = []
    for i, dom in enumerate(ks):
        coords = {lab: flat[lab] for lab in carrier.ordered(dom.domain)}
        charts.append(Chart(f"K{i}", coords, provenance=dom))
    d = MuStructure(carrier, mu, charts)
    rep = AxiomReport()
    for c in charts:
        rep.extend(check_chart(c, mu, tol))
    rep.extend(validate_b1(d, carrier, tol))
    rep.extend(validate_selective(SelectiveManifold(carrier, d), tol))
    return ExampleStructure(carrier, mu, d, rep)
