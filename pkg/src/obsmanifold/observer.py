"""Observers on finite carriers and their lattice operations."""

from __future__ import annotations

from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import CarrierMismatch, DimensionMismatch, InputError
from .tolerance import TolerancePolicy, resolve


class Carrier:
    """An ordered, finite set of distinct point labels."""

    __slots__ = ("labels", "_index")

    def __init__(self, labels: Iterable[Hashable]):
        labels = tuple(labels)
        if not labels:
            raise InputError("a carrier needs at least one point")
        index = {}
        for i, lab in enumerate(labels):
            if lab in index:
                raise InputError(f"duplicate point label {lab!r}")
            index[lab] = i
        self.labels = labels
        self._index = index

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label):
        return label in self._index

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise InputError(f"{label!r} is not a point of the carrier") from None

    def subset(self, labels: Iterable) -> frozenset:
        labels = frozenset(labels)
        for lab in labels:
            self.index(lab)
        return labels

    def ordered(self, labels: Iterable) -> tuple:
        """Labels of a subset in carrier order."""
        return tuple(sorted(labels, key=self.index))

    def __eq__(self, other):
        return isinstance(other, Carrier) and self.labels == other.labels

    def __hash__(self):
        return hash(self.labels)

    def __repr__(self):
        return f"Carrier({list(self.labels)!r})"


class Observer:
    """A map from a carrier into [0, 1]^m, stored as an (n_points, m) table.

    ``==`` and ``hash`` are exact; use :func:`equals` for tolerance-aware
    comparison.  Lattice operations only copy existing values, so exact
    equality is stable under them.
    """

    __slots__ = ("carrier", "values", "_key")

    def __init__(self, carrier: Carrier, values):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] != len(carrier):
            raise InputError(f"observer table must have one row per carrier point ({len(carrier)}), got shape {values.shape}")
        if values.shape[1] < 1:
            raise InputError("observer dimension must be at least 1")
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise InputError("observer values must lie in [0, 1]")
        values = values + 0.0  # normalise -0.0
        values.setflags(write=False)
        self.carrier = carrier
        self.values = values
        self._key = (carrier.labels, values.shape, values.tobytes())

    @classmethod
    def _trusted(cls, carrier: Carrier, values: np.ndarray) -> "Observer":
        # values already known to be a finite (n, m) table in [0, 1]
        obj = object.__new__(cls)
        values = values + 0.0
        values.setflags(write=False)
        obj.carrier = carrier
        obj.values = values
        obj._key = (carrier.labels, values.shape, values.tobytes())
        return obj

    @classmethod
    def from_mapping(cls, carrier: Carrier, table: Mapping) -> "Observer":
        missing = [lab for lab in carrier if lab not in table]
        if missing:
            raise InputError(f"observer table misses points {missing}")
        extra = [lab for lab in table if lab not in carrier]
        if extra:
            raise InputError(f"observer table has unknown points {extra}")
        rows = [np.atleast_1d(np.asarray(table[lab], dtype=float)) for lab in carrier]
        return cls(carrier, np.vstack(rows))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, label) -> tuple:
        return tuple(self.values[self.carrier.index(label)])

    def at(self, label) -> np.ndarray:
        return self.values[self.carrier.index(label)]

    def as_dict(self) -> dict:
        return {lab: tuple(float(v) for v in row) for lab, row in zip(self.carrier, self.values)}

    def __eq__(self, other):
        return isinstance(other, Observer) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        body = ", ".join(f"{lab}: {_fmt_vec(row)}" for lab, row in zip(self.carrier, self.values))
        return "Observer({" + body + "})"

    # operator sugar
    def __or__(self, other):
        return sup_union(self, other)

    def __and__(self, other):
        return inf_intersection(self, other)

    def __le__(self, other):
        return leq(self, other)

    def __lt__(self, other):
        return strictly_less(self, other)


def _fmt_vec(row) -> str:
    if len(row) == 1:
        return f"{row[0]:g}"
    return "(" + ", ".join(f"{v:g}" for v in row) + ")"


class ConstantObserver:
    """Per-coordinate constants; every coordinate is constant on the carrier."""

    __slots__ = ("constants",)

    def __init__(self, constants):
        constants = tuple(float(c) for c in np.atleast_1d(constants))
        if not constants:
            raise InputError("constant observer needs at least one coordinate")
        if any(not 0.0 <= c <= 1.0 for c in constants):
            raise InputError("constant observer values must lie in [0, 1]")
        self.constants = constants

    @property
    def dim(self) -> int:
        return len(self.constants)

    def materialize(self, carrier: Carrier) -> Observer:
        return Observer(carrier, np.tile(np.array(self.constants), (len(carrier), 1)))

    def __eq__(self, other):
        return isinstance(other, ConstantObserver) and self.constants == other.constants

    def __hash__(self):
        return hash(self.constants)

    def __repr__(self):
        return f"ConstantObserver({list(self.constants)})"


def as_constant(value, dim: int | None = None) -> ConstantObserver:
    if isinstance(value, ConstantObserver):
        c = value
    else:
        c = ConstantObserver(value)
    if dim is not None and c.dim != dim:
        if c.dim == 1:
            return ConstantObserver(c.constants * dim)
        raise DimensionMismatch(f"constant observer has dimension {c.dim}, expected {dim}")
    return c


def _check_compatible(a: Observer, b: Observer) -> None:
    if a.carrier is not b.carrier and a.carrier != b.carrier:
        raise CarrierMismatch("observers live on different carriers")
    if a.dim != b.dim:
        raise DimensionMismatch(f"observer dimensions differ ({a.dim} vs {b.dim})")


def sup_union(a: Observer, b: Observer) -> Observer:
    _check_compatible(a, b)
    return Observer._trusted(a.carrier, np.maximum(a.values, b.values))


def inf_intersection(a: Observer, b: Observer) -> Observer:
    _check_compatible(a, b)
    return Observer._trusted(a.carrier, np.minimum(a.values, b.values))


def leq(a: Observer, b: Observer, tol: TolerancePolicy | None = None) -> bool:
    _check_compatible(a, b)
    return bool(np.all(a.values <= b.values + resolve(tol).eq_tol))


def strictly_less(a: Observer, b: Observer, tol: TolerancePolicy | None = None) -> bool:
    # strict at some point and coordinate (existential reading)
    tol = resolve(tol)
    return leq(a, b, tol) and bool(np.any(a.values < b.values - tol.eq_tol))


def equals(a: Observer, b: Observer, tol: TolerancePolicy | None = None) -> bool:
    _check_compatible(a, b)
    return bool(np.all(np.abs(a.values - b.values) <= resolve(tol).eq_tol))


def zero_observer(carrier: Carrier, m: int) -> Observer:
    if m < 1:
        raise InputError("observer dimension must be at least 1")
    return Observer(carrier, np.zeros((len(carrier), m)))


def dedupe_vectors(rows: Iterable[Sequence[float]], eq_tol: float) -> list:
    """Distinct value vectors (first representative kept), sorted."""
    out: list = []
    for row in rows:
        row = tuple(float(v) for v in row)
        if not any(max(abs(x - y) for x, y in zip(row, seen)) <= eq_tol for seen in out):
            out.append(row)
    return sorted(out)


def image(a: Observer, points: Iterable | None = None, tol: TolerancePolicy | None = None) -> list:
    """Set of value vectors attained on ``points`` (default: the whole carrier)."""
    tol = resolve(tol)
    if points is None:
        rows = a.values
    else:
        rows = [a.values[a.carrier.index(p)] for p in points]
    return dedupe_vectors(rows, tol.eq_tol)


def same_value_set(xs: Sequence, ys: Sequence, eq_tol: float) -> bool:
    def covered(src, dst):
        return all(any(max(abs(a - b) for a, b in zip(u, v)) <= eq_tol for v in dst) for u in src)

    return covered(xs, ys) and covered(ys, xs)


def value_in(v: Sequence[float], values: Sequence, eq_tol: float) -> bool:
    return any(max(abs(a - b) for a, b in zip(v, w)) <= eq_tol for w in values)
