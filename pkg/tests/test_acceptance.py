"""Acceptance gate: ten criteria, each run at its stated counts, tolerances and time limits.

conftest.py prints one PASS/FAIL line per criterion at the end of the session.
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np

from oracles import brute_axioms, brute_closure, brute_preimage, lattice_law_failures

from obsmanifold.atlas import validate_b1, validate_b2_pair
from obsmanifold.cli import demo_text
from obsmanifold.corpus import (
    composable_instance,
    constant_map_instance,
    random_map_instance,
    random_path_curves,
    random_structure,
    relabeled_copy,
)
from obsmanifold.differentiable import (
    SelectiveMap,
    compose,
    is_r_alpha_diffeomorphism,
    is_r_alpha_differentiable,
    preimage_chart,
    preimage_domain,
    smooth_iff_composed,
)
from obsmanifold.expr import VecMap, parse_sexpr
from obsmanifold.hyperbolic import DynamicalPoint, observer_value, sigma_delta, sigma_delta_matrix
from obsmanifold.kernel import eigenvalues, jacobian_fd, jacobian_symbolic, smoothness_probe
from obsmanifold.observer import Carrier, Observer
from obsmanifold.product import n_fold_product, product_structure
from obsmanifold.tangent import (
    MultiPath,
    OverlapWitness,
    alpha_differential,
    charts_at,
    make_vector,
    partition_charts,
    pushforward_error,
    tv_scale,
)
from obsmanifold.tolerance import default_policy
from obsmanifold.topology import MuTopology, generate_mu_topology, validate_mu_axioms

from test_differentiable import single_violation_fixtures
from test_kernel import random_abs_free_map


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def rows_of(observers):
    return {tuple(o.values.reshape(-1)) for o in observers}


def axioms_agree(members, mu):
    """Library verdicts for a1-a3 equal the enumeration oracle's."""
    rep = validate_mu_axioms(MuTopology(mu, tuple(members)))
    got = tuple(next(r.verdict == "pass" for r in rep.results if r.check_id == a) for a in ("a1", "a2", "a3"))
    return got == brute_axioms(rows_of(members), tuple(mu.values.reshape(-1)))


def full_partition(d, p, alpha):
    charts = charts_at(d, p, alpha)
    ws = {(a.name, b.name): OverlapWitness.identity(a, b) for a, b in itertools.combinations(charts, 2)}
    return partition_charts(charts, ws)


# ---------------------------------------------------------------- 1


def test_criterion_01_lattice_and_axiom_suite(rng):
    failures = 0
    with Timer() as t:
        grid = (0.0, 0.5, 1.0)
        for n in (1, 2, 3):
            c = Carrier([f"p{i}" for i in range(n)])
            obs = [Observer(c, np.array(v)) for v in itertools.product(grid, repeat=n)]
            for x, y, z in itertools.product(obs, repeat=3):
                failures += bool(lattice_law_failures(x, y, z))
            zero = obs[0]
            for mu in obs:
                below = [o for o in obs if o <= mu]
                for size in (0, 1, 2):
                    for fam in itertools.combinations(below, size):
                        tt = generate_mu_topology(mu, fam)
                        failures += not validate_mu_axioms(tt).passes
                        failures += rows_of(tt) != brute_closure(mu, fam)
                        for extra in ((), (mu,), (zero,), (mu, zero)):
                            members = tuple(dict.fromkeys(fam + extra))
                            if members:
                                failures += not axioms_agree(members, mu)
        for _ in range(10_000):
            n = int(rng.integers(1, 7))
            m = int(rng.integers(1, 3))
            c = Carrier([f"p{i}" for i in range(n)])
            x, y, z = (Observer(c, rng.uniform(0, 1, size=(n, m))) for _ in range(3))
            failures += bool(lattice_law_failures(x, y, z))
            mu = x | y | z
            fracs = rng.choice([0.0, 0.5, 1.0], size=(2, n, m))
            fam = [Observer(c, mu.values * f) for f in fracs]
            tt = generate_mu_topology(mu, fam)
            failures += not validate_mu_axioms(tt).passes
            partial = tuple(tt.members[: int(rng.integers(1, len(tt.members) + 1))])
            failures += not axioms_agree(partial, mu)
    print(f"criterion 1: {failures} failures in {t.elapsed:.1f}s")
    assert failures == 0
    assert t.elapsed < 30


# ---------------------------------------------------------------- 2


def test_criterion_02_closure_oracle(rng):
    mismatches = 0
    with Timer() as t:
        for _ in range(1000):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(1, 3))
            c = Carrier([f"p{i}" for i in range(n)])
            mu = Observer(c, rng.choice([0.2, 0.5, 0.8, 1.0], size=(n, m)))
            k = int(rng.integers(0, 5))
            fam = [Observer(c, mu.values * rng.choice([0.0, 0.25, 0.5, 0.75, 1.0], size=(n, m))) for _ in range(k)]
            got = generate_mu_topology(mu, fam)
            want = brute_closure(mu, fam)
            lib = rows_of(got)
            eq = default_policy().eq_tol
            matched = len(lib) == len(want) and all(
                any(max(abs(a - b) for a, b in zip(u, v)) <= eq for v in want) for u in lib
            )
            mismatches += not matched
    print(f"criterion 2: {mismatches} mismatches in {t.elapsed:.1f}s")
    assert mismatches == 0
    assert t.elapsed < 60


# ---------------------------------------------------------------- 3


def _block_error(p, factors):
    """Max gap between each assembled witness Jacobian and the block diagonal of factor Jacobians."""
    worst = 0.0
    for (a, b), w in p.witnesses.items():
        src = p.chart(a)
        x = (np.array(src.lower) + np.array(src.upper)) / 2
        blocks = []
        for k, (fa, fb) in enumerate(zip(a.split("*"), b.split("*"))):
            fw = factors[k].witness_for(fa, fb)
            blocks.append(jacobian_symbolic(fw.h, x[k:k + 1]))
        expect = np.zeros((len(blocks), len(blocks)))
        for k, blk in enumerate(blocks):
            expect[k, k] = blk[0, 0]
        worst = max(worst, float(np.max(np.abs(jacobian_fd(w.h, x) - expect))))
    return worst


def test_criterion_03_product_theorem(rng):
    bad = 0
    worst = 0.0
    with Timer() as t:
        for i in range(200):
            k = 2 if i % 2 == 0 else 3
            top = 5 if k == 2 else 3
            factors = [random_structure(rng, int(rng.integers(1, top + 1)), prefix=f"f{j}_",
                                        charts_per_domain=1 if k == 3 else None).d for j in range(k)]
            p = n_fold_product(factors) if k == 3 else product_structure(*factors)
            bad += not validate_b1(p).passes
            for a, b in p.same_image_pairs():
                w = p.witness_for(a, b)
                if w is None or not validate_b2_pair(p.chart(a), p.chart(b), w, p.mu).passes:
                    bad += 1
            worst = max(worst, _block_error(p, factors))
    print(f"criterion 3: {bad} failing products, block-diagonal error {worst:.2e}, {t.elapsed:.1f}s")
    assert bad == 0
    assert worst <= 1e-6
    assert t.elapsed < 120


# ---------------------------------------------------------------- 4


def test_criterion_04_differentiability_suite(rng):
    identity_failures = 0
    for _ in range(100):
        d = random_structure(rng).d
        f = SelectiveMap.identity(d)
        for alpha in {d.mu(p) for p in d.carrier}:
            for p in d.carrier:
                for r in (1, 2, math.inf):
                    identity_failures += not is_r_alpha_differentiable(f, p, r, alpha, d, d).verdict
    downgrade_violations = checked = mixed = 0
    for i in range(150):
        s1, s2, f = random_map_instance(rng, kink_order=(None, 1, 2)[i % 3])
        for p in s1.d.carrier:
            alpha = s1.d.mu(p)
            v = [is_r_alpha_differentiable(f, p, r, alpha, s1.d, s2.d).verdict for r in (1, 2, 3, 4, math.inf)]
            downgrade_violations += sum(hi and not lo for lo, hi in zip(v, v[1:]))
            mixed += any(v) and not all(v)
            checked += 1
    isolated = 0
    fixtures = single_violation_fixtures()
    for target, f, p, alpha, d1, d2 in fixtures:
        rep = is_r_alpha_differentiable(f, p, 1, alpha, d1, d2)
        isolated += rep.failed() == [target]
    print(f"criterion 4: identity failures {identity_failures}, downgrade violations "
          f"{downgrade_violations}/{checked} ({mixed} points with mixed verdicts), isolated fixtures {isolated}/{len(fixtures)}")
    assert identity_failures == 0
    assert downgrade_violations == 0 and mixed > 0
    assert isolated == len(fixtures) == 4


# ---------------------------------------------------------------- 5


def test_criterion_05_preimage_oracle(rng):
    done = mismatches = 0
    while done < 500:
        s1, s2, f = random_map_instance(rng)
        for v in s2.d.charts:
            if done == 500:
                break
            want = brute_preimage(f.table, v.domain)
            got = preimage_domain(f, v, s1.d.mu)
            ok = got == want
            if want:
                ok = ok and preimage_chart(f, v, s1.d.mu, s2.d.mu).domain == want
            mismatches += not ok
            done += 1
    print(f"criterion 5: {mismatches} mismatches over {done} instances")
    assert mismatches == 0


# ---------------------------------------------------------------- 6


def test_criterion_06_chain_rule_and_iff_composition(rng):
    violations = premises = 0
    for i in range(100):
        s1, s2, s3, f, g = composable_instance(rng, kink_order=(None, None, 1, 2)[i % 4])
        gf = compose(f, g)
        for p in s1.d.carrier:
            alpha = s1.d.mu(p)
            for r in (1, 2, math.inf):
                if (is_r_alpha_differentiable(f, p, r, alpha, s1.d, s2.d).verdict
                        and is_r_alpha_differentiable(g, f(p), r, alpha, s2.d, s3.d).verdict):
                    premises += 1
                    violations += not is_r_alpha_differentiable(gf, p, r, alpha, s1.d, s3.d).verdict
    disagreements = diffeos = kinked = 0
    while diffeos < 50:
        s2, s3, g = random_map_instance(rng, kink_order=(None, 1)[diffeos % 2])
        s1, f = relabeled_copy(rng, s2)
        levels = sorted({s2.d.mu(p) for p in s2.d.carrier})
        if not all(is_r_alpha_diffeomorphism(f, math.inf, a, s1.d, s2.d) for a in levels):
            continue
        diffeos += 1
        for alpha in levels:
            rep = smooth_iff_composed(f, g, alpha, s1.d, s2.d, s3.d, check_f=False)
            disagreements += not rep.consistent
            kinked += not rep.g_smooth
    print(f"criterion 6: chain-rule violations {violations}/{premises}; "
          f"iff disagreements {disagreements} over {diffeos} diffeomorphisms ({kinked} non-smooth g levels)")
    assert premises > 0 and violations == 0
    assert kinked > 0 and disagreements == 0


# ---------------------------------------------------------------- 7


def test_criterion_07_tangent_and_differential(rng):
    axiom_failures = 0
    for _ in range(10_000):
        dims = rng.integers(1, 4, size=int(rng.integers(1, 4)))
        names = [f"K{j}" for j in range(len(dims))]

        def vec():
            return make_vector("p", 0.5, {n: rng.normal(size=k) * 10 for n, k in zip(names, dims)})

        u, v, w = vec(), vec(), vec()
        a, b = rng.normal(size=2) * 3
        zero = tv_scale(0.0, u)
        tol = 1e-9
        axiom_failures += not all((
            ((u + v) + w).allclose(u + (v + w), tol),
            (u + v).allclose(v + u, 0),
            (u + zero).allclose(u, 0),
            (u + -u).allclose(zero, 0),
            tv_scale(a, tv_scale(b, u)).allclose(tv_scale(a * b, u), tol),
            tv_scale(1.0, u).allclose(u, 0),
            tv_scale(a, u + v).allclose(tv_scale(a, u) + tv_scale(a, v), tol),
            tv_scale(a + b, u).allclose(tv_scale(a, u) + tv_scale(b, u), tol),
        ))

    worst_const = 0.0
    for _ in range(100):
        s1, s2, f = constant_map_instance(rng)
        for p in s1.d.carrier:
            alpha = s1.d.mu(p)
            df = alpha_differential(f, p, alpha, (full_partition(s1.d, p, alpha),
                                                  full_partition(s2.d, f(p), alpha)), s1.d, s2.d)
            worst_const = max(worst_const, df.max_abs())

    worst_push = 0.0
    paths = 0
    while paths < 500:
        s1, s2, f = random_map_instance(rng)
        p = s1.d.carrier.labels[int(rng.integers(0, len(s1.d.carrier)))]
        alpha = s1.d.mu(p)
        charts = charts_at(s1.d, p, alpha)
        parts = (full_partition(s1.d, p, alpha), full_partition(s2.d, f(p), alpha))
        df = alpha_differential(f, p, alpha, parts, s1.d, s2.d)
        curves, _ = random_path_curves(rng, s1, p, alpha, charts)
        worst_push = max(worst_push, pushforward_error(df, f, MultiPath(p, alpha, curves), s2.d))
        paths += 1

    worst_comp = 0.0
    for _ in range(100):
        s1, s2, s3, f, g = composable_instance(rng)
        gf = compose(f, g)
        p = s1.d.carrier.labels[0]
        alpha = s1.d.mu(p)
        p1, p2, p3 = (full_partition(s1.d, p, alpha), full_partition(s2.d, f(p), alpha),
                      full_partition(s3.d, gf(p), alpha))
        dfm = alpha_differential(f, p, alpha, (p1, p2), s1.d, s2.d)
        dgm = alpha_differential(g, f(p), alpha, (p2, p3), s2.d, s3.d)
        dgf = alpha_differential(gf, p, alpha, (p1, p3), s1.d, s3.d)
        (mid,) = p2.representatives()
        for (s, t), m in dgf.matrices.items():
            worst_comp = max(worst_comp, float(np.max(np.abs(m - dgm.matrices[(mid, t)] @ dfm.matrices[(s, mid)]))))
    print(f"criterion 7: axiom failures {axiom_failures}; constant-map max entry {worst_const:.1e}; "
          f"pushforward error {worst_push:.1e} over {paths} paths; composition error {worst_comp:.1e}")
    assert axiom_failures == 0
    assert worst_const <= 1e-8
    assert worst_push <= 1e-6
    assert worst_comp <= 1e-6


# ---------------------------------------------------------------- 8


def _random_hyperbolic(rng, m):
    while True:
        a = rng.normal(size=(m, m)) * rng.uniform(0.3, 2.0)
        if np.min(np.abs(np.abs(np.linalg.eigvals(a)) - 1)) > 1e-6:
            return a


def _residual(a, lam):
    """Smallest singular value of A - lambda I relative to max(|A|, 1)."""
    s = np.linalg.svd(a - lam * np.eye(a.shape[0]), compute_uv=False)
    return float(s[-1] / max(np.linalg.norm(a, 2), 1.0))


def test_criterion_08_hyperbolic_pipeline(rng):
    vm = lambda *e: VecMap.from_exprs([parse_sexpr(s) for s in e], ("x1", "x2"))  # noqa: E731
    saddle = DynamicalPoint("saddle", vm("(mul 2 x1)", "(mul 0.5 x2)"), (0.0, 0.0))
    rot = DynamicalPoint("rot", vm("(mul -2 x2)", "(mul 2 x1)"), (0.0, 0.0))
    assert tuple(sigma_delta(saddle))[:2] == (1, 1) and observer_value(saddle) == (0.5, 0.5)
    mu_rot = observer_value(rot)
    assert tuple(sigma_delta(rot))[:2] == (2, 0)
    assert abs(mu_rot[0] - 1 / 3) <= 1e-15 and mu_rot[1] == 1.0

    sum_failures = 0
    worst_res = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 7))
        a = _random_hyperbolic(rng, m)
        sd = sigma_delta_matrix(a)
        sum_failures += not (sd.hyperbolic and sd.sigma + sd.delta == m)
        worst_res = max(worst_res, max(_residual(a, z) for z in eigenvalues(a)))
    sim_failures = 0
    for _ in range(100):
        m = int(rng.integers(1, 7))
        a = _random_hyperbolic(rng, m)
        p = rng.normal(size=(m, m)) + 2 * np.sqrt(m) * np.eye(m)
        conj = p @ a @ np.linalg.inv(p)
        sim_failures += tuple(sigma_delta_matrix(conj))[:2] != tuple(sigma_delta_matrix(a))[:2]
    print(f"criterion 8: sum failures {sum_failures}; similarity failures {sim_failures}; "
          f"max eigen residual {worst_res:.1e}")
    assert sum_failures == 0 and sim_failures == 0
    assert worst_res < 1e-7


# ---------------------------------------------------------------- 9


def test_criterion_09_kernel_cross_check(rng):
    worst = 0.0
    for _ in range(1000):
        m = random_abs_free_map(rng)
        x = rng.uniform(-1, 1, size=2)
        worst = max(worst, float(np.max(np.abs(jacobian_symbolic(m, x) - jacobian_fd(m, x)))))
    abs_rejected = xabs_rejected = 0
    for _ in range(100):
        c = float(rng.uniform(-3, 3))
        k = float(rng.choice([-1, 1]) * rng.uniform(0.2, 5))
        e = f"(mul {k!r} (sub x1 {c!r}))"
        abs_map = VecMap.from_exprs([parse_sexpr(f"(abs {e})")], ("x1",))
        xabs_map = VecMap.from_exprs([parse_sexpr(f"(mul {e} (abs {e}))")], ("x1",))
        abs_rejected += not smoothness_probe(abs_map, [c], 1).passes
        xabs_rejected += (not smoothness_probe(xabs_map, [c], 2).passes) and smoothness_probe(xabs_map, [c], 1).passes
    print(f"criterion 9: max |symbolic - fd| {worst:.1e}; |x| rejected {abs_rejected}/100; "
          f"x|x| rejected at r=2 {xabs_rejected}/100")
    assert worst <= 1e-6
    assert abs_rejected == 100 and xabs_rejected == 100


# ---------------------------------------------------------------- 10


def test_criterion_10_determinism(tmp_path):
    outputs = set()
    for run, jobs in enumerate((1, 4, 1, 4, 2)):
        proc = subprocess.run([sys.executable, "-m", "obsmanifold.cli", "all", "--demo", "--json", "--jobs", str(jobs)],
                              capture_output=True, check=False)
        assert proc.returncode == 0, proc.stderr
        outputs.add(proc.stdout)
    text_runs = {subprocess.run([sys.executable, "-m", "obsmanifold.cli", "all", "--demo", "--jobs", "3"],
                                capture_output=True).stdout for _ in range(2)}
    print(f"criterion 10: {len(outputs)} distinct JSON reports over 5 runs, {len(text_runs)} distinct text reports")
    assert len(outputs) == 1 and len(text_runs) == 1
    assert demo_text()  # bundled instance is readable
