"""Run checkers over a parsed instance and assemble a deterministic report."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from . import __version__
from ._parallel import ordered_map
from .atlas import SelectiveManifold, validate_selective, validate_structure
from .differentiable import as_level, is_r_alpha_differentiable, validate_transitions
from .exceptions import FactorInvalid, InputError, NotDifferentiable, NumericError
from .hyperbolic import build_example_structure, sigma_delta
from .instance import InstanceFile, build_instance, format_instance
from .product import n_fold_product
from .report import FAIL, PASS, UNVERIFIABLE, AxiomReport, CheckResult
from .tangent import (
    alpha_differential,
    charts_at,
    partition_charts,
    pushforward_error,
    tangent_bijection,
    validate_multipath,
)
from .tolerance import TolerancePolicy, resolve
from .topology import MuTopology, generate_level_topology, generate_mu_topology, validate_mu_axioms

COMMANDS = (
    "validate-topology",
    "validate-structure",
    "validate-selective",
    "product",
    "diff-check",
    "tangent",
    "dynamics",
)

ERROR_AXIOM = "error"


@dataclass
class SuiteOptions:
    point: str | None = None
    order: int | None = None
    alpha: tuple | None = None
    seed: int | None = None
    jobs: int = 1
    order_b2: int = 1


@dataclass
class ValidationReport:
    digest: str
    command: str
    checks: list
    tolerance: dict
    version: str = __version__
    errors: list = field(default_factory=list)  # exception class names, in check order

    @property
    def passes(self) -> bool:
        return all(c.verdict != FAIL for c in self.checks)

    def counts(self) -> dict:
        out = {PASS: 0, FAIL: 0, UNVERIFIABLE: 0}
        for c in self.checks:
            out[c.verdict] = out.get(c.verdict, 0) + 1
        return out

    def exit_code(self) -> int:
        if any(e == "numeric" for e in self.errors):
            return 3
        if any(e == "input" for e in self.errors):
            return 2
        return 0 if self.passes else 1

    def as_dict(self) -> dict:
        return {
            "tool": "obsmanifold",
            "version": self.version,
            "command": self.command,
            "digest": self.digest,
            "tolerance": self.tolerance,
            "summary": self.counts(),
            "checks": [c.as_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"obsmanifold {self.version}  {self.command}  sha256:{self.digest}"]
        width = max((len(c.check_id) for c in self.checks), default=0)
        for c in self.checks:
            tag = f"[{c.axiom}]"
            lines.append(f"{c.verdict.upper():<13}{c.check_id:<{width}}  {tag:<15}{c.detail}")
        n = self.counts()
        lines.append(f"{n[PASS]} passed, {n[FAIL]} failed, {n[UNVERIFIABLE]} unverifiable")
        return "\n".join(lines)


def report_from_dict(data: dict) -> ValidationReport:
    checks = [CheckResult(c["id"], c["axiom"], c["verdict"], c["detail"], c["witness"]) for c in data["checks"]]
    return ValidationReport(data["digest"], data["command"], checks, data["tolerance"], data["version"])


def instance_digest(inst: InstanceFile) -> str:
    return hashlib.sha256(format_instance(inst).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------- check groups
#
# Each task returns an AxiomReport; exceptions become error entries so that
# nothing is silently skipped.


def _guard(check_id, fn):
    try:
        return fn(), None
    except NumericError as exc:
        rep = AxiomReport()
        rep.add(check_id, ERROR_AXIOM, False, f"{type(exc).__name__}: {exc}")
        return rep, "numeric"
    except InputError as exc:
        rep = AxiomReport()
        rep.add(check_id, ERROR_AXIOM, False, f"{type(exc).__name__}: {exc}")
        return rep, "input"


def _topology_tasks(b, tol, opts):
    tasks = []
    for name, (mu, mode, members, levels) in sorted(b.topologies.items()):
        def run(name=name, mu=mu, mode=mode, members=members, levels=levels):
            t = generate_mu_topology(mu, members, tol) if mode == "generated" else MuTopology(mu, tuple(members))
            rep = AxiomReport()
            rep.extend(validate_mu_axioms(t, tol), prefix=f"topology[{name}]:")
            for i, (r, s) in enumerate(levels):
                pt = generate_level_topology(t, [(r, s)], tol)
                rep.extend(pt.check(), prefix=f"topology[{name}]:level{i}:")
            return rep
        tasks.append((f"topology[{name}]", run))
    return tasks


def _structure_tasks(b, tol, opts):
    return [(f"structure[{n}]", lambda n=n, d=d: _prefixed(validate_structure(d, opts.order_b2, tol), f"structure[{n}]:"))
            for n, d in sorted(b.structures.items())]


def _selective_tasks(b, tol, opts):
    return [(f"selective[{n}]", lambda n=n, d=d: _prefixed(
        validate_selective(SelectiveManifold(d.carrier, d), tol), f"selective[{n}]:"))
        for n, d in sorted(b.structures.items())]


def _product_tasks(b, tol, opts):
    tasks = []
    for name, factors in sorted(b.products.items()):
        def run(name=name, factors=factors):
            rep = AxiomReport()
            try:
                p = n_fold_product([b.structures[f] for f in factors], opts.order_b2, True, tol)
            except FactorInvalid as exc:
                rep.add(f"product[{name}]:factors", "b2", False, str(exc))
                return rep
            rep.add(f"product[{name}]:charts", "product", True, f"{len(p.charts)} product charts")
            rep.extend(validate_structure(p, opts.order_b2, tol), prefix=f"product[{name}]:")
            return rep
        tasks.append((f"product[{name}]", run))
    return tasks


def _level_label(alpha) -> str:
    return ",".join(repr(float(v)) for v in alpha)


_COND_TEXT = {
    "c1": "K_f,alpha is non-empty",
    "c2": "observer equivariance mu2 o f = mu1",
    "c3": "level preimages carry the same observer values",
    "c4": "transitions at phi(p) pass the smoothness probe",
}


def _diff_run(b, tol, fname, p, r, alpha):
    f = b.selmaps[fname]
    d1 = _structure_for(b, f, "source")
    d2 = _structure_for(b, f, "target")
    rep = AxiomReport()
    dr = is_r_alpha_differentiable(f, p, r, alpha, d1, d2, tol)
    tag = f"diff[{fname}@{p},r={r},alpha={_level_label(alpha)}]"
    for cond in ("c1", "c2", "c3", "c4"):
        rep.add(f"{tag}:{cond}", cond, getattr(dr, cond), _COND_TEXT[cond], witness=dr.details.get(cond))
    return rep


def _structure_for(b, f, side):
    src, tgt = b.selmap_structures[f.name]
    return b.structures[src if side == "source" else tgt]


def _diff_tasks(b, tol, opts):
    tasks = []
    for name in sorted(b.selmaps):
        def run(name=name):
            f = b.selmaps[name]
            return _prefixed(validate_transitions(f, _structure_for(b, f, "source"),
                                                  _structure_for(b, f, "target"), tol), f"selmap[{name}]:")
        tasks.append((f"selmap[{name}]", run))
    requests = []
    if opts.point is not None or opts.order is not None or opts.alpha is not None:
        for name in sorted(b.selmaps):
            f = b.selmaps[name]
            d1 = _structure_for(b, f, "source")
            points = [opts.point] if opts.point is not None else list(f.source.labels)
            for p in points:
                if p not in f.source:
                    raise InputError(f"point {p!r} is not in the source of {name!r}")
                alpha = as_level(opts.alpha) if opts.alpha is not None else d1.mu(p)
                requests.append((name, p, opts.order if opts.order is not None else 1, alpha))
    else:
        requests = [(m, p, r, as_level(a)) for _, (m, p, r, a) in sorted(b.diffs.items())]
    for fname, p, r, alpha in requests:
        tasks.append((f"diff[{fname}@{p}]", lambda fname=fname, p=p, r=r, alpha=alpha: _diff_run(b, tol, fname, p, r, alpha)))
    return tasks


def _tangent_run(b, tol, name):
    sname, g, through = b.paths[name]
    d = b.structures[sname]
    tag = f"tangent[{name}]"
    rep = AxiomReport()
    rep.extend(validate_multipath(g, d, 1, tol), prefix=f"{tag}:")
    fam = charts_at(d, g.point, g.alpha, tol)
    wits = {pair: w for _, (pair, w) in sorted(b.overlaps.items())}
    part = partition_charts(fam, wits, tol)
    rep.add(f"{tag}:classes", "tangent", bool(part.classes),
            f"{len(part.classes)} chart class(es) over {len(fam)} chart(s)",
            witness={"classes": [list(c) for c in part.classes], "unverified": [list(p) for p in part.unverified]})
    v = tangent_bijection(g, part, tol)
    rep.add(f"{tag}:vector", "tangent", True, "velocity per class",
            witness={k: [float(x) for x in vec] for k, vec in v.components})
    if through is not None:
        f = b.selmaps[through]
        d2 = _structure_for(b, f, "target")
        tgt = partition_charts(charts_at(d2, f(g.point), g.alpha, tol), wits, tol)
        try:
            df = alpha_differential(f, g.point, g.alpha, (part, tgt), d, d2, 1, tol)
        except NotDifferentiable as exc:
            rep.add(f"{tag}:differential", "c1-c4", False, str(exc))
            return rep
        err = pushforward_error(df, f, g, d2, tol)
        rep.add(f"{tag}:pushforward", "differential", err <= tol.deriv_tol,
                f"matrix action vs pushed path, max gap {err:.3g}")
    return rep


def _tangent_tasks(b, tol, opts):
    return [(f"tangent[{n}]", lambda n=n: _tangent_run(b, tol, n)) for n in sorted(b.paths)]


def _dynamics_run(b, tol, name):
    pts, bounds, k1 = b.dynamics[name]
    tag = f"dynamics[{name}]"
    rep = AxiomReport()
    for dp in pts:
        sd = sigma_delta(dp, tol)
        rep.add(f"{tag}:{dp.label}:hyperbolic", "hyperbolic", sd.hyperbolic,
                f"sigma={sd.sigma} delta={sd.delta}")
    if not all(sigma_delta(dp, tol).hyperbolic for dp in pts):
        return rep
    ex = build_example_structure(pts, bounds, k1, tol)
    rep.add(f"{tag}:observer", "hyperbolic", True, "observer values",
            witness={lab: list(ex.mu(lab)) for lab in ex.carrier})
    rep.extend(ex.report, prefix=f"{tag}:")
    return rep


def _dynamics_tasks(b, tol, opts):
    return [(f"dynamics[{n}]", lambda n=n: _dynamics_run(b, tol, n)) for n in sorted(b.dynamics)]


def _random_tasks(b, tol, opts):
    from .corpus import random_suite_checks

    return [("random", lambda: random_suite_checks(opts.seed, tol))]


_GROUPS = {
    "validate-topology": _topology_tasks,
    "validate-structure": _structure_tasks,
    "validate-selective": _selective_tasks,
    "product": _product_tasks,
    "diff-check": _diff_tasks,
    "tangent": _tangent_tasks,
    "dynamics": _dynamics_tasks,
}


def _prefixed(rep: AxiomReport, prefix: str) -> AxiomReport:
    out = AxiomReport()
    out.extend(rep, prefix=prefix)
    return out


def run_suite(inst: InstanceFile, command: str = "all", opts: SuiteOptions | None = None,
              tol: TolerancePolicy | None = None) -> ValidationReport:
    tol = resolve(tol)
    opts = opts or SuiteOptions()
    if command != "all" and command not in _GROUPS:
        raise InputError(f"unknown command {command!r}")
    b = build_instance(inst)
    groups = COMMANDS if command == "all" else (command,)
    tasks = []
    for g in groups:
        tasks.extend(_GROUPS[g](b, tol, opts))
    if opts.seed is not None:
        tasks.extend(_random_tasks(b, tol, opts))
    outcomes = ordered_map(lambda t: _guard(t[0] + ":run", t[1]), tasks, opts.jobs)
    checks = []
    errors = []
    for rep, err in outcomes:
        checks.extend(rep.results)
        if err:
            errors.append(err)
    checks.sort(key=lambda c: c.check_id)
    ids = [c.check_id for c in checks]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise InputError(f"duplicate check identifiers {dup}")
    return ValidationReport(instance_digest(inst), command, checks, tol.as_dict(), errors=errors)
