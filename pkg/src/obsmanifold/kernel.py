"""Differentiation, smoothness probing and small dense eigenproblems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import DomainViolation, NoConvergence, NonDifferentiable, NonFinite, NumericError
from .expr import VecMap, _compile
from .tolerance import TolerancePolicy, resolve

BASE_STEP = 1e-3
ORDER_THRESHOLD = 0.75
PROBE_STEPS = (1.0, 0.5, 0.25)
KINK_CLEARANCE = 1e-8
_EPS = np.finfo(float).eps


def _point(m: VecMap, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != m.in_dim:
        raise DomainViolation(f"point has {x.shape[0]} coordinates, map expects {m.in_dim}")
    if not m.contains(x):
        raise DomainViolation(f"point {x.tolist()} outside domain box")
    return x


@lru_cache(maxsize=None)
def _jacobian_fns(m: VecMap):
    return tuple(tuple(_compile(e, m.variables) for e in row) for row in m.jacobian_exprs())


def jacobian_symbolic(m: VecMap, x) -> np.ndarray:
    """Exact Jacobian (n x k) from symbolic partial derivatives."""
    x = _point(m, x)
    xs = [float(v) for v in x]
    out = np.empty((m.out_dim, m.in_dim))
    for i, row in enumerate(_jacobian_fns(m)):
        for j, fn in enumerate(row):
            val = fn(xs)
            if not math.isfinite(val):
                raise NonFinite(f"non-finite Jacobian entry ({i}, {j})")
            out[i, j] = val
    return out


def step_sizes(m: VecMap, x) -> np.ndarray:
    return BASE_STEP * m.widths(x)


def jacobian_fd(m: VecMap, x, order_of_accuracy: int = 4, tol: TolerancePolicy | None = None) -> np.ndarray:
    """Central-difference Jacobian.

    ``order_of_accuracy=4`` applies one Richardson step to the central
    differences at ``h`` and ``h/2``; ``2`` returns the plain ``h/2``
    central difference.  Raises :class:`NonDifferentiable` when one-sided
    quotients keep disagreeing as the step shrinks (a kink in the stencil).
    """
    if order_of_accuracy not in (2, 4):
        raise ValueError("order_of_accuracy must be 2 or 4")
    tol = resolve(tol)
    x = _point(m, x)
    hs = step_sizes(m, x)
    out = np.empty((m.out_dim, m.in_dim))
    f0 = m._raw(x)
    for j in range(m.in_dim):
        e = np.zeros(m.in_dim)
        e[j] = hs[j]
        if not (m.contains(x + e) and m.contains(x - e)):
            raise DomainViolation(f"finite-difference stencil leaves the domain box along axis {j}")
        fp, fm = m._raw(x + e), m._raw(x - e)
        fp2, fm2 = m._raw(x + e / 2), m._raw(x - e / 2)
        h = hs[j]
        d_h = (fp - fm) / (2 * h)
        d_h2 = (fp2 - fm2) / h
        gap_h = np.abs(fp - 2 * f0 + fm) / h
        gap_h2 = np.abs(fp2 - 2 * f0 + fm2) / (h / 2)
        noise = 1e3 * _EPS * (np.abs(f0) + 1.0) / h
        for i in range(m.out_dim):
            if gap_h2[i] > max(tol.deriv_tol, noise[i]) and gap_h2[i] > ORDER_THRESHOLD * gap_h[i]:
                raise NonDifferentiable(
                    f"one-sided difference quotients disagree by {gap_h2[i]:.3g} "
                    f"for component {i}, axis {j}"
                )
        out[:, j] = (4 * d_h2 - d_h) / 3 if order_of_accuracy == 4 else d_h2
    return out


def jacobian(m: VecMap, x, tol: TolerancePolicy | None = None) -> np.ndarray:
    """Symbolic Jacobian when the map is abs-free, finite differences otherwise."""
    if m.abs_free:
        return jacobian_symbolic(m, x)
    try:
        return jacobian_symbolic(m, x)
    except NonDifferentiable:
        return jacobian_fd(m, x, tol=tol)


@dataclass
class ProbeReport:
    passes: bool
    estimated_order: float | None
    method: str
    diagnostics: list = field(default_factory=list)


def _binom(k, j):
    return math.comb(k, j)


def _one_sided(g, k, s, sign):
    # k-th forward (sign=+1) or backward (sign=-1) difference in step units
    total = 0.0
    for j in range(k + 1):
        coef = _binom(k, j) * (-1) ** (k - j) if sign > 0 else _binom(k, j) * (-1) ** j
        total += coef * g(sign * j * s)
    return total / s**k


def _rate(seq, floor):
    """log2 convergence rate of a 3-term sequence; inf when already at noise level."""
    d1 = abs(seq[0] - seq[1])
    d2 = abs(seq[1] - seq[2])
    if d2 <= floor:
        return math.inf
    if d1 <= floor:
        return -math.inf
    return math.log2(d1 / d2)


def smoothness_probe(m: VecMap, x, r: int, tol: TolerancePolicy | None = None) -> ProbeReport:
    """Decide whether ``m`` looks C^r near ``x``.

    Maps are built from analytic primitives plus abs, so a map whose abs
    arguments are all nonzero at ``x`` (in particular an abs-free map) is
    smooth near ``x``; that case is decided symbolically.  Otherwise, for
    every order 1..r and every probe direction (each axis plus the main
    diagonal), forward and backward divided differences at steps h, h/2, h/4
    must converge at log2 rate >= 0.75 and their gap must vanish at that
    rate too.
    """
    if r < 1:
        raise ValueError("smoothness order must be >= 1")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != m.in_dim or not m.contains(x):
        return ProbeReport(False, None, "domain", [f"point {x.tolist()} outside domain box"])
    try:
        m._raw(x)
    except NumericError as exc:
        return ProbeReport(False, None, "domain", [f"map not evaluable at point: {exc}"])
    if m.abs_free:
        return ProbeReport(True, math.inf, "symbolic", [])
    try:
        clear = m.kink_clearance(x)
    except NumericError:
        clear = 0.0
    if clear > KINK_CLEARANCE:
        return ProbeReport(True, math.inf, "symbolic", [f"abs arguments clear of zero by {clear:.3g}"])

    hs = step_sizes(m, x)
    directions = [np.eye(m.in_dim)[j] * hs[j] for j in range(m.in_dim)]
    if m.in_dim > 1:
        directions.append(hs.copy())
    for d in directions:
        if not (m.contains(x + r * d) and m.contains(x - r * d)):
            return ProbeReport(False, None, "numeric", [f"stencil of {r} steps leaves the domain box"])

    worst = math.inf
    diagnostics = []
    for di, d in enumerate(directions):
        cache: dict = {}

        def g(s, d=d, cache=cache):
            if s not in cache:
                cache[s] = m._raw(x + s * d)
            return cache[s]

        try:
            gmax = max(np.max(np.abs(g(s))) for s in range(-r, r + 1))
        except NumericError as exc:
            return ProbeReport(False, None, "numeric", [f"evaluation failed in stencil: {exc}"])
        for k in range(1, r + 1):
            fwd = [_one_sided(g, k, s, +1) for s in PROBE_STEPS]
            bwd = [_one_sided(g, k, s, -1) for s in PROBE_STEPS]
            floor = 1e3 * _EPS * (gmax + 1.0) * 8.0**k
            for i in range(m.out_dim):
                gaps = [abs(a[i] - b[i]) for a, b in zip(fwd, bwd)]
                rates = (
                    _rate([v[i] for v in fwd], floor),
                    _rate([v[i] for v in bwd], floor),
                    _gap_rate(gaps, floor),
                )
                rate = min(rates)
                worst = min(worst, rate)
                if rate < ORDER_THRESHOLD:
                    diagnostics.append(
                        f"order {k}, direction {di}, component {i}: divided differences do not converge "
                        f"(log2 ratio {rate:.3g}, one-sided gap {gaps[2]:.3g})"
                    )
                    return ProbeReport(False, rate, "numeric", diagnostics)
    return ProbeReport(True, worst, "numeric", diagnostics)


def _gap_rate(gaps, floor):
    if gaps[2] <= floor:
        return math.inf
    if gaps[1] <= floor:
        return -math.inf
    return math.log2(gaps[1] / gaps[2])


# ---------------------------------------------------------------- eigenvalues

MAX_EIG_DIM = 8


def hessenberg(a: np.ndarray) -> np.ndarray:
    """Upper Hessenberg form by Householder similarity transforms."""
    h = np.array(a, dtype=complex)
    n = h.shape[0]
    for k in range(n - 2):
        col = h[k + 1 :, k].copy()
        alpha = np.linalg.norm(col)
        if alpha == 0.0:
            continue
        phase = col[0] / abs(col[0]) if col[0] != 0 else 1.0
        v = col.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        h[k + 1 :, :] -= 2.0 * np.outer(v, v.conj() @ h[k + 1 :, :])
        h[:, k + 1 :] -= 2.0 * np.outer(h[:, k + 1 :] @ v, v.conj())
        h[k + 2 :, k] = 0.0
    return h


def _givens(a, b):
    r = math.hypot(abs(a), abs(b))
    if r == 0.0:
        return 1.0, 0.0
    return a / r, b / r


def _wilkinson(block):
    a, b = block[0, 0], block[0, 1]
    c, d = block[1, 0], block[1, 1]
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(tr * tr / 4 - det + 0j)
    l1, l2 = tr / 2 + disc, tr / 2 - disc
    return l1 if abs(l1 - d) < abs(l2 - d) else l2


def eigenvalues(a, max_iter_per_eig: int = 200) -> list:
    """All eigenvalues (with multiplicity) of a small square matrix.

    Hessenberg reduction followed by complex single-shift QR with Wilkinson
    shifts and deflation; exceptional shifts break stagnation.  Each result
    is checked against ``|det(A - lambda I)| <= 1e-7 * max(||A||, 1)^n``.
    """
    a = np.asarray(a, dtype=float if not np.iscomplexobj(a) else complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("eigenvalues needs a square matrix")
    n = a.shape[0]
    if n == 0:
        return []
    if n > MAX_EIG_DIM:
        raise ValueError(f"dimension {n} exceeds the supported maximum {MAX_EIG_DIM}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has non-finite entries")

    h = hessenberg(a)
    eigs = []
    hi = n - 1
    iters = 0
    since_deflation = 0
    while hi >= 0:
        if hi == 0:
            eigs.append(h[0, 0])
            break
        lo = hi
        while lo > 0:
            s = abs(h[lo - 1, lo - 1]) + abs(h[lo, lo])
            if s == 0.0:
                s = np.abs(h).max() or 1.0
            if abs(h[lo, lo - 1]) <= _EPS * s:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs.append(h[hi, hi])
            hi -= 1
            since_deflation = 0
            continue
        iters += 1
        since_deflation += 1
        if iters > max_iter_per_eig * n:
            raise NoConvergence(f"QR iteration did not converge after {iters} sweeps")
        if since_deflation % 11 == 10:
            shift = h[hi, hi] + 0.75 * abs(h[hi, hi - 1]) * (1 + 1j)
        else:
            shift = _wilkinson(h[hi - 1 : hi + 1, hi - 1 : hi + 1])
        _qr_step(h, lo, hi, shift)

    eigs = [complex(e) for e in eigs]
    norm = max(np.abs(a).sum(axis=1).max(), 1.0)
    bound = 1e-7 * norm**n
    ident = np.eye(n)
    for lam in eigs:
        res = abs(np.linalg.det(a - lam * ident))
        if not res <= bound:
            raise NoConvergence(f"eigenvalue {lam} has residual {res:.3g} > {bound:.3g}")
    return sorted(eigs, key=lambda z: (round(z.real, 12), round(z.imag, 12)))


def _qr_step(h, lo, hi, shift):
    m = hi - lo + 1
    block = h[lo : hi + 1, lo : hi + 1]
    block -= shift * np.eye(m)
    rotations = []
    for k in range(m - 1):
        c, s = _givens(block[k, k], block[k + 1, k])
        g = np.array([[np.conj(c), np.conj(s)], [-s, c]])
        block[k : k + 2, k:] = g @ block[k : k + 2, k:]
        rotations.append(g)
    for k, g in enumerate(rotations):
        block[: k + 2, k : k + 2] = block[: k + 2, k : k + 2] @ g.conj().T
    block += shift * np.eye(m)
    h[lo : hi + 1, lo : hi + 1] = block
