"""Tolerance policy shared by every checker.

The default policy can be overridden process-wide through the
``OBSMANIFOLD_TOL`` environment variable, e.g.::

    OBSMANIFOLD_TOL="eq=1e-10,deriv=1e-7,unit=1e-8"

Unknown keys raise ``ValueError`` so typos do not silently fall back.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

ENV_VAR = "OBSMANIFOLD_TOL"

_ENV_KEYS = {"eq": "eq_tol", "deriv": "deriv_tol", "unit": "unit_circle_tol"}


@dataclass(frozen=True)
class TolerancePolicy:
    eq_tol: float = 1e-9
    deriv_tol: float = 1e-6
    unit_circle_tol: float = 1e-8

    def __post_init__(self):
        for name in ("eq_tol", "deriv_tol", "unit_circle_tol"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    def with_overrides(self, **kwargs) -> "TolerancePolicy":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)

    def as_dict(self) -> dict:
        return {
            "eq_tol": self.eq_tol,
            "deriv_tol": self.deriv_tol,
            "unit_circle_tol": self.unit_circle_tol,
        }


def parse_policy(text: str, base: TolerancePolicy | None = None) -> TolerancePolicy:
    """Parse ``key=value`` pairs (comma separated) into a policy."""
    base = base or TolerancePolicy()
    overrides = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in _ENV_KEYS:
            raise ValueError(f"bad tolerance override {item!r}; keys are {sorted(_ENV_KEYS)}")
        overrides[_ENV_KEYS[key]] = float(value)
    return base.with_overrides(**overrides)


def default_policy() -> TolerancePolicy:
    text = os.environ.get(ENV_VAR)
    if text:
        return parse_policy(text)
    return TolerancePolicy()


def resolve(tol: TolerancePolicy | None) -> TolerancePolicy:
    return default_policy() if tol is None else tol
