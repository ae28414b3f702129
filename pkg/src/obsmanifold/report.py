"""Check results shared by all validators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

PASS = "pass"
FAIL = "fail"
UNVERIFIABLE = "unverifiable"


@dataclass(frozen=True)
class CheckResult:
    check_id: str
    axiom: str
    verdict: str
    detail: str = ""
    witness: object = None

    @property
    def passed(self) -> bool:
        return self.verdict != FAIL

    def as_dict(self) -> dict:
        return {
            "id": self.check_id,
            "axiom": self.axiom,
            "verdict": self.verdict,
            "detail": self.detail,
            "witness": _plain(self.witness),
        }


@dataclass
class AxiomReport:
    """Ordered collection of check results.

    ``passes`` is true when nothing failed; unverifiable entries are kept
    for the record but do not fail the report.
    """

    results: list = field(default_factory=list)

    def add(self, check_id, axiom, ok, detail="", witness=None) -> CheckResult:
        verdict = ok if isinstance(ok, str) else (PASS if ok else FAIL)
        res = CheckResult(check_id, axiom, verdict, detail, witness)
        self.results.append(res)
        return res

    def extend(self, other: "AxiomReport", prefix: str = "") -> None:
        for r in other.results:
            self.results.append(
                CheckResult(prefix + r.check_id, r.axiom, r.verdict, r.detail, r.witness) if prefix else r
            )

    @property
    def passes(self) -> bool:
        return all(r.passed for r in self.results)

    def __bool__(self):
        return self.passes

    def failures(self, axiom: str | None = None) -> list:
        return [r for r in self.results if r.verdict == FAIL and (axiom is None or r.axiom == axiom)]

    def by_axiom(self, axiom: str) -> list:
        return [r for r in self.results if r.axiom == axiom]

    def axiom_passes(self, axiom: str) -> bool:
        return all(r.passed for r in self.by_axiom(axiom))

    def unverifiable(self) -> list:
        return [r for r in self.results if r.verdict == UNVERIFIABLE]

    def as_dicts(self) -> list:
        return [r.as_dict() for r in self.results]


def _plain(obj):
    """Convert witnesses into JSON-friendly structures deterministically."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        obj = float(obj)
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (frozenset, set)):
        return sorted((_plain(v) for v in obj), key=str)
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _plain(obj.tolist())
    if hasattr(obj, "as_dict"):
        return _plain(obj.as_dict())
    return str(obj)
