"""Instance files: parsing, canonical formatting and object construction.

Layout::

    # comment
    [kind name]
    key arg arg ...

Vectors are comma-separated floats without spaces (``0.5,0.25``).  ``expr``
lines take one s-expression.  Names must be unique across the whole file and
references may point forward.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .atlas import Chart, CompatibilityWitness, MuStructure
from .differentiable import SelectiveMap
from .exceptions import NonTotalTable, ParseError, UnresolvedReference
from .expr import ExpressionSyntaxError, VecMap, parse_sexpr, to_sexpr
from .hyperbolic import DynamicalPoint
from .observer import Carrier, ConstantObserver, Observer
from .tangent import MultiPath, OverlapWitness
from .topology import KDomain


@dataclass(frozen=True)
class Field:
    key: str
    args: tuple
    required: bool = False
    repeat: bool = False


def _f(key, *args, required=False, repeat=False):
    return Field(key, tuple(args), required, repeat)


# argument kinds: label, labels (variadic), vec, uvec, int, word, sexpr,
# ref:<kind>, refs:<kind> (variadic)
SCHEMA = {
    "carrier": (_f("points", "labels", required=True),),
    "observer": (_f("carrier", "ref:carrier", required=True), _f("value", "label", "uvec", repeat=True)),
    "constant": (_f("value", "uvec", required=True),),
    "topology": (
        _f("observer", "ref:observer", required=True),
        _f("mode", "word", required=True),
        _f("members", "refs:observer"),
        _f("level", "ref:constant", "ref:constant", repeat=True),
    ),
    "vecmap": (
        _f("vars", "labels", required=True),
        _f("lower", "vec"),
        _f("upper", "vec"),
        _f("expr", "sexpr", required=True, repeat=True),
    ),
    "chart": (
        _f("observer", "ref:observer"),
        _f("u1", "labels"),
        _f("bounds", "ref:constant", "ref:constant"),
        _f("coord", "label", "vec", required=True, repeat=True),
        _f("lower", "vec"),
        _f("upper", "vec"),
        _f("extension", "ref:vecmap"),
    ),
    "witness": (
        _f("from", "ref:chart", required=True),
        _f("to", "ref:chart", required=True),
        _f("h0", "label", "label", repeat=True),
        _f("map", "ref:vecmap", required=True),
        _f("inverse", "ref:vecmap"),
    ),
    "structure": (
        _f("observer", "ref:observer", required=True),
        _f("charts", "refs:chart", required=True),
        _f("witnesses", "refs:witness"),
    ),
    "product": (_f("factors", "refs:structure", required=True),),
    "selmap": (
        _f("source", "ref:structure", required=True),
        _f("target", "ref:structure", required=True),
        _f("point", "label", "label", repeat=True),
        _f("transition", "ref:chart", "ref:chart", "ref:vecmap", repeat=True),
        _f("inverse", "ref:chart", "ref:chart", "ref:vecmap", repeat=True),
    ),
    "diff": (
        _f("map", "ref:selmap", required=True),
        _f("point", "label", required=True),
        _f("order", "int", required=True),
        _f("alpha", "uvec", required=True),
    ),
    "overlap": (
        _f("charts", "ref:chart", "ref:chart", required=True),
        _f("map", "ref:chart", "ref:vecmap", repeat=True),
    ),
    "path": (
        _f("structure", "ref:structure", required=True),
        _f("point", "label", required=True),
        _f("alpha", "uvec", required=True),
        _f("curve", "ref:chart", "ref:vecmap", repeat=True),
        _f("through", "ref:selmap"),
    ),
    "dynamics": (
        _f("point", "label", "ref:vecmap", "vec", required=True, repeat=True),
        _f("bounds", "ref:constant", "ref:constant", required=True, repeat=True),
        _f("k1", "labels", repeat=True),
    ),
}

_HEADER = re.compile(r"\[\s*([A-Za-z_]+)\s+([^\s\[\]]+)\s*\]\s*$")
_LABEL = re.compile(r"[^\s,#\[\]()]+\Z")
_TOKEN = re.compile(r"\S+")


@dataclass(frozen=True)
class Section:
    kind: str
    name: str
    entries: tuple  # ((key, values), ...) in canonical key order
    line: int = field(default=0, compare=False)

    def get(self, key, default=None):
        for k, v in self.entries:
            if k == key:
                return v
        return default

    def all(self, key) -> list:
        return [v for k, v in self.entries if k == key]


@dataclass(frozen=True)
class InstanceFile:
    sections: tuple

    def by_kind(self, kind: str) -> list:
        return [s for s in self.sections if s.kind == kind]

    def section(self, name: str) -> Section:
        for s in self.sections:
            if s.name == name:
                return s
        raise UnresolvedReference(f"no section named {name!r}")


# ---------------------------------------------------------------- parsing


def _parse_float(tok: str, line: int, col: int, unit: bool) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", line, col) from None
    if math.isnan(v) or (unit and math.isinf(v)):
        raise ParseError(f"{tok!r} is not an admissible value", line, col)
    if unit and not 0.0 <= v <= 1.0:
        raise ParseError(f"observer value {tok} out of range [0, 1]", line, col)
    return v


def _parse_vec(tok: str, line: int, col: int, unit: bool) -> tuple:
    parts = tok.split(",")
    out = []
    offset = 0
    for p in parts:
        out.append(_parse_float(p, line, col + offset, unit))
        offset += len(p) + 1
    return tuple(out)


def _parse_label(tok: str, line: int, col: int) -> str:
    if not _LABEL.match(tok):
        raise ParseError(f"invalid name {tok!r}", line, col)
    return tok


def _parse_args(spec: Field, rest: str, rest_col: int, line: int):
    values = []
    if spec.args == ("sexpr",):
        if not rest.strip():
            raise ParseError("missing expression", line, rest_col)
        try:
            return (parse_sexpr(rest),)
        except ExpressionSyntaxError as exc:
            raise ParseError(str(exc), line, rest_col) from None
    toks = [(m.group(), rest_col + m.start()) for m in _TOKEN.finditer(rest)]
    variadic = spec.args[-1] in ("labels",) or spec.args[-1].startswith("refs:")
    fixed = len(spec.args) - (1 if variadic else 0)
    if len(toks) < fixed or (not variadic and len(toks) != fixed) or (variadic and len(toks) == fixed):
        raise ParseError(f"'{spec.key}' expects {' '.join(spec.args)}", line, rest_col)
    for i, kind in enumerate(spec.args):
        if kind == "labels" or kind.startswith("refs:"):
            values.append(tuple(_parse_label(t, line, c) for t, c in toks[i:]))
            break
        tok, col = toks[i]
        if kind in ("label", "word") or kind.startswith("ref:"):
            values.append(_parse_label(tok, line, col))
        elif kind == "vec":
            values.append(_parse_vec(tok, line, col, unit=False))
        elif kind == "uvec":
            values.append(_parse_vec(tok, line, col, unit=True))
        elif kind == "int":
            try:
                values.append(int(tok))
            except ValueError:
                raise ParseError(f"expected an integer, got {tok!r}", line, col) from None
        else:  # pragma: no cover
            raise AssertionError(kind)
    return tuple(values)


def _strip_comment(raw: str) -> str:
    i = raw.find("#")
    return raw if i < 0 else raw[:i]


class _Pending:
    def __init__(self, kind, name, line):
        self.kind, self.name, self.line = kind, name, line
        self.entries = []  # (key, values, line)


def _finish(p: _Pending) -> Section:
    schema = SCHEMA[p.kind]
    order = {f.key: i for i, f in enumerate(schema)}
    seen = {}
    for key, _, line in p.entries:
        seen[key] = seen.get(key, 0) + 1
        spec = schema[order[key]]
        if seen[key] > 1 and not spec.repeat:
            raise ParseError(f"'{key}' given more than once in [{p.kind} {p.name}]", line, 1)
    for spec in schema:
        if spec.required and spec.key not in seen:
            raise ParseError(f"[{p.kind} {p.name}] is missing '{spec.key}'", p.line, 1)
    ents = sorted(p.entries, key=lambda e: order[e[0]])  # stable: keeps order among repeats
    return Section(p.kind, p.name, tuple((k, v) for k, v, _ in ents), p.line)


def parse_instance(text: str) -> InstanceFile:
    sections = []
    cur = None
    names = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw).rstrip()
        if not body.strip():
            continue
        stripped = body.lstrip()
        indent = len(body) - len(stripped)
        if stripped.startswith("["):
            m = _HEADER.match(stripped)
            if not m:
                raise ParseError("malformed section header", lineno, indent + 1)
            kind, name = m.group(1), m.group(2)
            if kind not in SCHEMA:
                raise ParseError(f"unknown section kind {kind!r}", lineno, indent + 2)
            _parse_label(name, lineno, indent + 2 + len(kind))
            if name in names:
                raise ParseError(f"name {name!r} already defined on line {names[name]}", lineno, indent + 1)
            names[name] = lineno
            if cur is not None:
                sections.append(_finish(cur))
            cur = _Pending(kind, name, lineno)
            continue
        if cur is None:
            raise ParseError("entry outside any section", lineno, indent + 1)
        m = _TOKEN.match(stripped)
        key = m.group()
        spec = next((f for f in SCHEMA[cur.kind] if f.key == key), None)
        if spec is None:
            raise ParseError(f"unknown key {key!r} in [{cur.kind}]", lineno, indent + 1)
        rest_start = indent + len(key)
        rest = body[rest_start:]
        values = _parse_args(spec, rest, rest_start + 1, lineno)
        cur.entries.append((key, values, lineno))
    if cur is not None:
        sections.append(_finish(cur))
    inst = InstanceFile(tuple(sections))
    _resolve(inst, text)
    return inst


def _locate(text: str, line: int, token: str) -> int | None:
    lines = text.splitlines()
    if not 1 <= line <= len(lines):
        return None
    body = _strip_comment(lines[line - 1])
    for m in _TOKEN.finditer(body):
        if m.group() == token:
            return m.start() + 1
    return None


def _entry_line(text: str, sec: Section, key: str, first_token: str | None = None) -> int:
    lines = text.splitlines()
    i = sec.line
    while i < len(lines):
        body = _strip_comment(lines[i]).strip()
        if body.startswith("["):
            break
        toks = body.split()
        if toks and toks[0] == key and (first_token is None or (len(toks) > 1 and toks[1] == first_token)):
            return i + 1
        i += 1
    return sec.line


def _resolve(inst: InstanceFile, text: str) -> None:
    """References resolve to the right kind; tables are total."""
    kinds = {s.name: s.kind for s in inst.sections}
    for sec in inst.sections:
        schema = {f.key: f for f in SCHEMA[sec.kind]}
        for key, values in sec.entries:
            for kind, val in zip(schema[key].args, values):
                if kind.startswith("ref"):
                    want = kind.split(":", 1)[1]
                    for name in (val if kind.startswith("refs:") else (val,)):
                        if kinds.get(name) != want:
                            line = _entry_line(text, sec, key)
                            msg = (f"{name!r} is a {kinds[name]}, expected a {want}" if name in kinds
                                   else f"reference to undeclared {want} {name!r}")
                            raise UnresolvedReference(msg, line, _locate(text, line, name))
    for sec in inst.sections:
        _check_tables(inst, sec, text)


def _carrier_of_structure(inst: InstanceFile, name: str) -> tuple:
    obs = inst.section(inst.section(name).get("observer")[0])
    return inst.section(obs.get("carrier")[0]).get("points")[0]


def _check_tables(inst: InstanceFile, sec: Section, text: str) -> None:
    def missing(what, labels):
        raise NonTotalTable(f"[{sec.kind} {sec.name}] {what} has no entry for {', '.join(map(str, labels))}",
                            sec.line, 1)

    def unknown(key, label, first=None):
        line = _entry_line(text, sec, key, first)
        raise UnresolvedReference(f"{label!r} is not a point of the relevant carrier", line, _locate(text, line, label))

    if sec.kind == "carrier":
        pts = sec.get("points")[0]
        if len(set(pts)) != len(pts):
            raise ParseError(f"carrier {sec.name!r} repeats a point", sec.line, 1)
    elif sec.kind == "observer":
        pts = inst.section(sec.get("carrier")[0]).get("points")[0]
        table = {}
        dims = set()
        for lab, vec in sec.all("value"):
            if lab not in pts:
                unknown("value", lab, lab)
            if lab in table:
                raise ParseError(f"point {lab!r} given twice", _entry_line(text, sec, "value", lab), 1)
            table[lab] = vec
            dims.add(len(vec))
        if len(dims) > 1:
            raise ParseError(f"observer {sec.name!r} mixes value dimensions {sorted(dims)}", sec.line, 1)
        gap = [p for p in pts if p not in table]
        if gap:
            missing("value table", gap)
    elif sec.kind == "chart":
        prov = [sec.get(k) is not None for k in ("observer", "u1", "bounds")]
        if any(prov) and not all(prov):
            raise ParseError(f"chart {sec.name!r}: observer, u1 and bounds go together", sec.line, 1)
        if all(prov):
            pts = inst.section(inst.section(sec.get("observer")[0]).get("carrier")[0]).get("points")[0]
            for lab, _ in sec.all("coord"):
                if lab not in pts:
                    unknown("coord", lab, lab)
            for lab in sec.get("u1")[0]:
                if lab not in pts:
                    unknown("u1", lab)
    elif sec.kind == "witness":
        src = {lab for lab, _ in inst.section(sec.get("from")[0]).all("coord")}
        dst = {lab for lab, _ in inst.section(sec.get("to")[0]).all("coord")}
        seen = set()
        for a, b in sec.all("h0"):
            if a not in src:
                unknown("h0", a, a)
            if b not in dst:
                unknown("h0", b, a)
            seen.add(a)
        gap = sorted(src - seen)
        if gap:
            missing("h0", gap)
    elif sec.kind == "selmap":
        src = _carrier_of_structure(inst, sec.get("source")[0])
        dst = _carrier_of_structure(inst, sec.get("target")[0])
        seen = set()
        for a, b in sec.all("point"):
            if a not in src:
                unknown("point", a, a)
            if b not in dst:
                unknown("point", b, a)
            seen.add(a)
        gap = [p for p in src if p not in seen]
        if gap:
            missing("point table", gap)
    elif sec.kind == "diff":
        src = _carrier_of_structure(inst, inst.section(sec.get("map")[0]).get("source")[0])
        if sec.get("point")[0] not in src:
            unknown("point", sec.get("point")[0])
    elif sec.kind == "path":
        pts = _carrier_of_structure(inst, sec.get("structure")[0])
        if sec.get("point")[0] not in pts:
            unknown("point", sec.get("point")[0])
    elif sec.kind == "topology":
        if sec.get("mode")[0] not in ("generated", "given"):
            line = _entry_line(text, sec, "mode")
            raise ParseError("mode must be 'generated' or 'given'", line, _locate(text, line, sec.get("mode")[0]))
    elif sec.kind == "product":
        if len(sec.get("factors")[0]) < 2:
            raise ParseError("a product needs at least two factors", _entry_line(text, sec, "factors"), 1)


# ---------------------------------------------------------------- formatting


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _fmt_value(kind: str, v) -> str:
    if kind in ("vec", "uvec"):
        return ",".join(_fmt_float(x) for x in v)
    if kind == "labels" or kind.startswith("refs:"):
        return " ".join(v)
    if kind == "sexpr":
        return to_sexpr(v)
    return str(v)


def format_instance(inst: InstanceFile) -> str:
    """Canonical text; ``parse_instance(format_instance(x)) == x``."""
    out = []
    for sec in inst.sections:
        schema = {f.key: f for f in SCHEMA[sec.kind]}
        out.append(f"[{sec.kind} {sec.name}]")
        for key, values in sec.entries:
            args = " ".join(_fmt_value(k, v) for k, v in zip(schema[key].args, values))
            out.append(f"{key} {args}")
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------- building


@dataclass
class BuiltInstance:
    carriers: dict = field(default_factory=dict)
    observers: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    vecmaps: dict = field(default_factory=dict)
    charts: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    structures: dict = field(default_factory=dict)
    selmaps: dict = field(default_factory=dict)
    selmap_structures: dict = field(default_factory=dict)  # name -> (source, target)
    overlaps: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    topologies: dict = field(default_factory=dict)  # name -> (observer, mode, members, levels)
    products: dict = field(default_factory=dict)  # name -> factor names
    diffs: dict = field(default_factory=dict)  # name -> (map, point, order, alpha)
    dynamics: dict = field(default_factory=dict)  # name -> (points, bounds, k1)


def _box(sec: Section):
    lo = sec.get("lower")
    hi = sec.get("upper")
    return (lo[0] if lo else None), (hi[0] if hi else None)


def build_instance(inst: InstanceFile) -> BuiltInstance:
    b = BuiltInstance()
    for s in inst.by_kind("carrier"):
        b.carriers[s.name] = Carrier(s.get("points")[0])
    for s in inst.by_kind("observer"):
        c = b.carriers[s.get("carrier")[0]]
        b.observers[s.name] = Observer.from_mapping(c, dict(s.all("value")))
    for s in inst.by_kind("constant"):
        b.constants[s.name] = ConstantObserver(s.get("value")[0])
    for s in inst.by_kind("vecmap"):
        names = s.get("vars")[0]
        lo, hi = _box(s)
        b.vecmaps[s.name] = VecMap.from_exprs([e for (e,) in s.all("expr")], names, lo, hi)
    for s in inst.by_kind("chart"):
        coords = {lab: vec for lab, vec in s.all("coord")}
        prov = None
        if s.get("observer") is not None:
            r, sc = s.get("bounds")
            prov = KDomain(frozenset(coords), frozenset(s.get("u1")[0]), b.constants[r], b.constants[sc])
        ext = b.vecmaps[s.get("extension")[0]] if s.get("extension") else None
        lo, hi = _box(s)
        b.charts[s.name] = Chart(s.name, coords, lo, hi, extension=ext, provenance=prov)
    for s in inst.by_kind("witness"):
        inv = s.get("inverse")
        b.witnesses[s.name] = (s.get("from")[0], s.get("to")[0], CompatibilityWitness(
            dict(s.all("h0")), b.vecmaps[s.get("map")[0]], b.vecmaps[inv[0]] if inv else None))
    for s in inst.by_kind("structure"):
        mu = b.observers[s.get("observer")[0]]
        ws = {}
        for wname in (s.get("witnesses") or ((),))[0]:
            a, c, w = b.witnesses[wname]
            ws[(a, c)] = w
        b.structures[s.name] = MuStructure(mu.carrier, mu, [b.charts[n] for n in s.get("charts")[0]], ws)
    for s in inst.by_kind("selmap"):
        d1 = b.structures[s.get("source")[0]]
        d2 = b.structures[s.get("target")[0]]
        b.selmaps[s.name] = SelectiveMap(
            d1.carrier, d2.carrier, dict(s.all("point")),
            {(u, v): b.vecmaps[m] for u, v, m in s.all("transition")},
            {(u, v): b.vecmaps[m] for u, v, m in s.all("inverse")},
            name=s.name,
        )
        b.selmap_structures[s.name] = (s.get("source")[0], s.get("target")[0])
    for s in inst.by_kind("overlap"):
        a, c = s.get("charts")
        b.overlaps[s.name] = ((a, c), OverlapWitness({ch: b.vecmaps[m] for ch, m in s.all("map")}))
    for s in inst.by_kind("path"):
        curves = {ch: b.vecmaps[m] for ch, m in s.all("curve")}
        through = s.get("through")
        b.paths[s.name] = (s.get("structure")[0], MultiPath(s.get("point")[0], s.get("alpha")[0], curves),
                           through[0] if through else None)
    for s in inst.by_kind("topology"):
        members = s.get("members")
        levels = [(b.constants[r], b.constants[t]) for r, t in s.all("level")]
        b.topologies[s.name] = (b.observers[s.get("observer")[0]], s.get("mode")[0],
                                [b.observers[n] for n in (members[0] if members else ())], levels)
    for s in inst.by_kind("product"):
        b.products[s.name] = s.get("factors")[0]
    for s in inst.by_kind("diff"):
        b.diffs[s.name] = (s.get("map")[0], s.get("point")[0], s.get("order")[0], s.get("alpha")[0])
    for s in inst.by_kind("dynamics"):
        pts = [DynamicalPoint(lab, b.vecmaps[m], p) for lab, m, p in s.all("point")]
        bounds = [(b.constants[r], b.constants[t]) for r, t in s.all("bounds")]
        k1 = [frozenset(x) for (x,) in s.all("k1")] or None
        b.dynamics[s.name] = (pts, bounds, k1)
    return b
