"""Charts, mu-structures and the checks b1, b2 and the selective condition."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from ._parallel import ordered_map
from .exceptions import InputError, NumericError, PreconditionFailed, WitnessIncomplete
from .expr import VecMap
from .kernel import jacobian, smoothness_probe
from .observer import Carrier, Observer, image, same_value_set
from .report import UNVERIFIABLE, AxiomReport
from .tolerance import TolerancePolicy, resolve
from .topology import KDomain, level_preimage

GRID_POINTS_PER_AXIS = 5
MAX_GRID_SAMPLES = 4096
MIN_ABS_DET = 1e-8


class Chart:
    """A chart ``(U, phi)``: finite domain, coordinates in R^n and a model box.

    ``extension`` is an analytic map into R^n carrying the differential
    structure of the model (identity on the box when omitted).
    ``provenance`` records the ``U1 & mu^-1(r, s)`` decomposition.
    """

    def __init__(self, name: str, coords: Mapping, lower=None, upper=None,
                 extension: VecMap | None = None, provenance: KDomain | None = None):
        if not coords:
            raise InputError(f"chart {name!r} has an empty domain")
        self.name = str(name)
        table = {lab: np.atleast_1d(np.asarray(v, dtype=float)) for lab, v in coords.items()}
        dims = {v.shape[0] for v in table.values()}
        if len(dims) != 1:
            raise InputError(f"chart {name!r} mixes coordinate dimensions {sorted(dims)}")
        self.dim = dims.pop()
        for v in table.values():
            v.setflags(write=False)
        self.coords = table
        self.domain = frozenset(table)
        pts = np.vstack(list(table.values()))
        if lower is None or upper is None:
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            pad = np.maximum(1.0, 0.5 * (hi - lo))
            lower = lo - pad if lower is None else lower
            upper = hi + pad if upper is None else upper
        self.lower = tuple(float(v) for v in np.atleast_1d(lower))
        self.upper = tuple(float(v) for v in np.atleast_1d(upper))
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise InputError(f"chart {name!r}: model box dimension differs from coordinate dimension")
        if extension is not None and extension.out_dim != self.dim:
            raise InputError(f"chart {name!r}: extension has {extension.out_dim} outputs, expected {self.dim}")
        self.extension = extension
        self.provenance = provenance
        if provenance is not None and provenance.domain != self.domain:
            raise InputError(f"chart {name!r}: provenance domain differs from the chart domain")

    def phi(self, label) -> np.ndarray:
        try:
            return self.coords[label]
        except KeyError:
            raise InputError(f"{label!r} is not in the domain of chart {self.name!r}") from None

    def phi_inverse(self, point, eq_tol: float):
        point = np.asarray(point, dtype=float)
        for lab, v in self.coords.items():
            if np.max(np.abs(v - point)) <= eq_tol:
                return lab
        return None

    def ordered_domain(self, carrier: Carrier) -> tuple:
        return carrier.ordered(self.domain)

    def model_map(self) -> VecMap:
        if self.extension is not None:
            return self.extension
        return VecMap.identity(self.dim, self.lower, self.upper)

    def box_contains(self, x, margin: float = 0.0) -> bool:
        return all(lo + margin < v < hi - margin for v, lo, hi in zip(x, self.lower, self.upper))

    def __repr__(self):
        return f"Chart({self.name!r}, domain={sorted(map(str, self.domain))}, dim={self.dim})"


def check_chart(chart: Chart, mu: Observer | None = None, tol: TolerancePolicy | None = None) -> AxiomReport:
    """Injectivity, model-box containment and (when available) K membership."""
    tol = resolve(tol)
    rep = AxiomReport()
    labels = sorted(chart.domain, key=str)
    collision = None
    for a, b in itertools.combinations(labels, 2):
        if np.max(np.abs(chart.coords[a] - chart.coords[b])) <= tol.eq_tol:
            collision = [a, b]
            break
    rep.add(f"chart[{chart.name}]:injective", "chart", collision is None,
            "coordinate map is one to one", witness=collision)
    outside = [lab for lab in labels if not chart.box_contains(chart.coords[lab])]
    rep.add(f"chart[{chart.name}]:in-box", "chart", not outside,
            "coordinates lie in the model box", witness=outside or None)
    if mu is not None and chart.provenance is not None:
        prov = chart.provenance
        expected = prov.u1 & level_preimage(mu, prov.r, prov.s, tol)
        rep.add(f"chart[{chart.name}]:K", "K", expected == chart.domain,
                "domain equals U1 & mu^-1(r, s)",
                witness=None if expected == chart.domain else {"expected": expected, "actual": chart.domain})
    return rep


@dataclass
class CompatibilityWitness:
    """Point bijection ``h0: U -> V`` and model map ``h`` with ``h o phi = psi o h0``."""

    h0: dict
    h: VecMap
    h_inv: VecMap | None = None

    @classmethod
    def identity(cls, chart: Chart) -> "CompatibilityWitness":
        ident = VecMap.identity(chart.dim, chart.lower, chart.upper)
        return cls({lab: lab for lab in chart.domain}, ident, ident)

    def inverted(self) -> "CompatibilityWitness":
        if self.h_inv is None:
            raise InputError("witness has no inverse model map")
        inv0 = {v: k for k, v in self.h0.items()}
        if len(inv0) != len(self.h0):
            raise InputError("h0 is not injective, cannot invert")
        return CompatibilityWitness(inv0, self.h_inv, self.h)


class MuStructure:
    """A set of charts for an observer, with a registry of b2 witnesses."""

    def __init__(self, carrier: Carrier, mu: Observer, charts: Iterable[Chart],
                 witnesses: Mapping | None = None):
        if mu.carrier != carrier:
            raise InputError("observer lives on a different carrier")
        charts = tuple(charts)
        names = [c.name for c in charts]
        if len(set(names)) != len(names):
            raise InputError(f"duplicate chart names in {names}")
        for c in charts:
            carrier.subset(c.domain)
        self.carrier = carrier
        self.mu = mu
        self.charts = charts
        self._by_name = {c.name: c for c in charts}
        self.witnesses = dict(witnesses or {})
        for a, b in self.witnesses:
            self.chart(a)
            self.chart(b)

    def chart(self, name: str) -> Chart:
        try:
            return self._by_name[name]
        except KeyError:
            raise InputError(f"no chart named {name!r}") from None

    def __iter__(self):
        return iter(self.charts)

    def __len__(self):
        return len(self.charts)

    def covered(self) -> frozenset:
        out = frozenset()
        for c in self.charts:
            out |= c.domain
        return out

    def chart_image(self, chart: Chart, tol: TolerancePolicy | None = None) -> list:
        return image(self.mu, chart.domain, tol)

    def witness_for(self, a: str, b: str) -> CompatibilityWitness | None:
        w = self.witnesses.get((a, b))
        if w is not None:
            return w
        back = self.witnesses.get((b, a))
        if back is not None and back.h_inv is not None:
            return back.inverted()
        if a == b:
            return CompatibilityWitness.identity(self.chart(a))
        return None

    def same_image_pairs(self, tol: TolerancePolicy | None = None) -> list:
        tol = resolve(tol)
        imgs = {c.name: self.chart_image(c, tol) for c in self.charts}
        out = []
        for c1 in self.charts:
            for c2 in self.charts:
                if same_value_set(imgs[c1.name], imgs[c2.name], tol.eq_tol):
                    out.append((c1.name, c2.name))
        return out

    def with_charts(self, extra: Iterable[Chart], witnesses: Mapping | None = None) -> "MuStructure":
        reg = dict(self.witnesses)
        reg.update(witnesses or {})
        return MuStructure(self.carrier, self.mu, self.charts + tuple(extra), reg)

    def __repr__(self):
        return f"MuStructure(charts={[c.name for c in self.charts]})"


@dataclass
class SelectiveManifold:
    carrier: Carrier
    structure: MuStructure
    mu: Observer | None = None

    def observer(self) -> Observer:
        return self.mu if self.mu is not None else self.structure.mu


# ---------------------------------------------------------------- b1


def validate_b1(d: MuStructure, m: Carrier | None = None, tol: TolerancePolicy | None = None) -> AxiomReport:
    tol = resolve(tol)
    carrier = m or d.carrier
    rep = AxiomReport()
    full = image(d.mu, carrier.labels, tol)
    covered = image(d.mu, d.covered(), tol) if d.covered() else []
    missing = [v for v in full if not any(max(abs(a - b) for a, b in zip(v, w)) <= tol.eq_tol for w in covered)]
    rep.add("b1", "b1", same_value_set(full, covered, tol.eq_tol),
            "mu(M) equals mu of the union of chart domains",
            witness={"missing_values": missing} if missing else None)
    return rep


# ---------------------------------------------------------------- b2


def sample_grid(lower, upper, per_axis: int = GRID_POINTS_PER_AXIS, cap: int = MAX_GRID_SAMPLES) -> np.ndarray:
    """Deterministic interior grid: fractions (i+1)/(per_axis+1) of each axis."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    fr = (np.arange(per_axis) + 1.0) / (per_axis + 1.0)
    n = lower.shape[0]
    total = per_axis**n
    if total <= cap:
        idx = np.array(list(itertools.product(range(per_axis), repeat=n)), dtype=int).reshape(-1, n)
    else:
        # fixed-stride subset of the full grid, always including the centre
        picks = set(np.linspace(0, total - 1, cap).astype(np.int64).tolist())
        if total // 2 not in picks:
            picks = set(np.linspace(0, total - 1, cap - 1).astype(np.int64).tolist()) | {total // 2}
        picks = sorted(picks)
        idx = np.array([np.unravel_index(p, (per_axis,) * n) for p in picks], dtype=int)
    return lower + fr[idx] * (upper - lower)


def _box_intersection(a_lo, a_hi, b_lo, b_hi):
    lo = np.maximum(np.asarray(a_lo, float), np.asarray(b_lo, float))
    hi = np.minimum(np.asarray(a_hi, float), np.asarray(b_hi, float))
    return lo, hi


def _newton_solve(h: VecMap, target, start, tol, max_iter=50):
    y = np.array(start, dtype=float)
    for _ in range(max_iter):
        if not h.contains(y):
            return None
        try:
            res = h._raw(y) - target
            if np.max(np.abs(res)) <= 1e-12 * (1 + np.max(np.abs(target))):
                return y
            jac = jacobian(h, y, tol)
            step = np.linalg.solve(jac, res)
        except (NumericError, np.linalg.LinAlgError):
            return None
        y = y - step
    if h.contains(y) and np.max(np.abs(h._raw(y) - target)) <= 1e-9 * (1 + np.max(np.abs(target))):
        return y
    return None


def validate_b2_pair(c1: Chart, c2: Chart, w: CompatibilityWitness, mu: Observer, r: int = 1,
                     tol: TolerancePolicy | None = None) -> AxiomReport:
    """Verify a compatibility witness between two charts with equal mu-images."""
    tol = resolve(tol)
    img1, img2 = image(mu, c1.domain, tol), image(mu, c2.domain, tol)
    if not same_value_set(img1, img2, tol.eq_tol):
        raise PreconditionFailed(f"charts {c1.name!r} and {c2.name!r} have different mu-images")
    tag = f"b2[{c1.name}->{c2.name}]"
    rep = AxiomReport()

    # (i) h0 bijective U -> V and identity on the overlap
    h0 = w.h0
    problems = []
    if set(h0) != set(c1.domain):
        problems.append("h0 is not defined exactly on U")
    targets = list(h0.values())
    if len(set(targets)) != len(targets):
        problems.append("h0 is not injective")
    if set(targets) != set(c2.domain):
        problems.append("h0 is not onto V")
    moved = [u for u in c1.domain & c2.domain if h0.get(u, u) != u]
    if moved:
        problems.append(f"h0 moves overlap points {sorted(map(str, moved))}")
    rep.add(f"{tag}:h0", "b2", not problems, "h0 bijective and identity on the overlap",
            witness=problems or None)

    # (ii) h o phi = psi o h0
    h = w.h
    bad = []
    if not problems:
        for u in sorted(c1.domain, key=str):
            x = c1.phi(u)
            try:
                lhs = h(x)
            except (InputError, NumericError) as exc:
                bad.append({"point": u, "error": str(exc)})
                continue
            rhs = c2.phi(h0[u])
            err = float(np.max(np.abs(lhs - rhs))) if lhs.shape == rhs.shape else float("inf")
            if err > tol.deriv_tol:
                bad.append({"point": u, "error": err})
    rep.add(f"{tag}:commutes", "b2", not problems and not bad, "h o phi = psi o h0 on U",
            witness=bad[:3] or None)

    # (iii)-(iv) smoothness, invertible derivative, inverse on a sample grid
    if h.in_dim != c1.dim or h.out_dim != c2.dim:
        rep.add(f"{tag}:smooth", "b2", False, "h has wrong dimensions",
                witness={"h": [h.in_dim, h.out_dim], "charts": [c1.dim, c2.dim]})
        return rep
    lo, hi = _box_intersection(c1.lower, c1.upper, h.lower, h.upper)
    if np.any(lo >= hi):
        rep.add(f"{tag}:smooth", "b2", False, "h domain does not meet the model box")
        return rep
    samples = sample_grid(lo, hi)
    rough = None
    for x in samples:
        pr = smoothness_probe(h, x, r, tol)
        if not pr.passes:
            rough = {"sample": x, "diagnostics": pr.diagnostics}
            break
    rep.add(f"{tag}:smooth", "b2", rough is None, f"h is C^{r} at every sample", witness=rough)

    singular = None
    if h.in_dim != h.out_dim:
        singular = {"reason": "h is not square"}
    else:
        for x in samples:
            try:
                det = float(np.linalg.det(jacobian(h, x, tol)))
            except NumericError as exc:
                singular = {"sample": x, "error": str(exc)}
                break
            if not abs(det) > MIN_ABS_DET:
                singular = {"sample": x, "det": det}
                break
    rep.add(f"{tag}:invertible", "b2", singular is None, "Jacobian of h invertible at samples",
            witness=singular)
    if singular is not None:
        return rep

    failure = None
    if w.h_inv is not None:
        for x in samples:
            try:
                back = w.h_inv(h(x))
            except (InputError, NumericError) as exc:
                failure = {"sample": x, "error": str(exc)}
                break
            if np.max(np.abs(back - x)) > tol.deriv_tol:
                failure = {"sample": x, "error": float(np.max(np.abs(back - x)))}
                break
        method = "supplied inverse"
    else:
        centre = (lo + hi) / 2
        width = hi - lo
        for x in samples:
            target = h._raw(x)
            y = _newton_solve(h, target, centre, tol)
            if y is not None and np.max(np.abs(y - x)) > 1e-6 * (1 + np.max(np.abs(width))):
                failure = {"sample": x, "other_preimage": y}
                break
            if y is None:
                y = _newton_solve(h, target, x + 0.05 * width, tol)
                if y is None or np.max(np.abs(y - x)) > 1e-6 * (1 + np.max(np.abs(width))):
                    failure = {"sample": x, "reason": "Newton inverse did not converge"}
                    break
        method = "Newton inverse"
    rep.add(f"{tag}:inverse", "b2", failure is None, f"h invertible on samples ({method})", witness=failure)
    return rep


def validate_structure(d: MuStructure, r: int = 1, tol: TolerancePolicy | None = None,
                       jobs: int = 1) -> AxiomReport:
    """Chart sanity, b1 and b2 for every ordered pair of charts with equal mu-images.

    Pairs without a registered witness are recorded as unverifiable.
    """
    tol = resolve(tol)
    rep = AxiomReport()
    for c in d.charts:
        rep.extend(check_chart(c, d.mu, tol))
    rep.extend(validate_b1(d, tol=tol))

    def run(pair):
        a, b = pair
        w = d.witness_for(a, b)
        if w is None:
            return None
        return validate_b2_pair(d.chart(a), d.chart(b), w, d.mu, r, tol)

    pairs = d.same_image_pairs(tol)
    for (a, b), sub in zip(pairs, ordered_map(run, pairs, jobs)):
        if sub is None:
            rep.add(f"b2[{a}->{b}]", "b2", UNVERIFIABLE, "no compatibility witness registered")
        else:
            rep.extend(sub)
    return rep


# ---------------------------------------------------------------- selective


def validate_selective(sm: SelectiveManifold, tol: TolerancePolicy | None = None) -> AxiomReport:
    tol = resolve(tol)
    mu = sm.observer()
    covered = sm.structure.covered()
    outside = [p for p in sm.carrier if p not in covered]
    offenders = [p for p in outside if np.max(np.abs(mu.at(p))) > tol.eq_tol]
    rep = AxiomReport()
    rep.add("selective", "selective", not offenders,
            "every uncovered point has observer value zero",
            witness={"point": offenders[0], "value": list(mu(offenders[0]))} if offenders else None)
    return rep


# ---------------------------------------------------------------- ordering


def structure_leq(d1: MuStructure, d2: MuStructure, f: Mapping, tol: TolerancePolicy | None = None) -> AxiomReport:
    """Check ``d1 <= d2`` with the injective point map ``f`` as witness."""
    tol = resolve(tol)
    domain = d1.covered()
    missing = [p for p in domain if p not in f]
    if missing:
        raise WitnessIncomplete(f"point map misses {sorted(map(str, missing))}")
    rep = AxiomReport()
    images = [f[p] for p in domain]
    collided = len(set(images)) != len(images)
    rep.add("leq:injective", "order", not collided, "point map is one to one")
    if collided:
        return rep
    for c in d1.charts:
        fu = frozenset(f[u] for u in c.domain)
        if not all(p in d2.carrier for p in fu):
            rep.add(f"leq[{c.name}]", "order", False, "f(U) leaves the target carrier")
            continue
        same = same_value_set(image(d1.mu, c.domain, tol), image(d2.mu, fu, tol), tol.eq_tol)
        rep.add(f"leq[{c.name}]:image", "order", same, "mu1(U) = mu2(f(U))")
        match = None
        for c2 in d2.charts:
            if c2.domain != fu or c2.dim != c.dim:
                continue
            if all(np.max(np.abs(c2.phi(f[u]) - c.phi(u))) <= tol.eq_tol for u in c.domain):
                match = c2.name
                break
        rep.add(f"leq[{c.name}]:chart", "order", match is not None,
                "target structure contains (f(U), phi o f^-1)", witness=match)
    return rep


def structures_equivalent(d1: MuStructure, d2: MuStructure, f12: Mapping, f21: Mapping,
                          tol: TolerancePolicy | None = None) -> bool:
    return structure_leq(d1, d2, f12, tol).passes and structure_leq(d2, d1, f21, tol).passes
