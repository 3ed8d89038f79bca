"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (about two minutes).
"""

import hashlib
import itertools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from torusflow import intlinalg as il
from torusflow.closure import (closures_agree, detect_affine_subtorus, essential_closure_estimate,
                               torus_project)
from torusflow.counting import counting_bound_report, crossing_walk, sigma_census
from torusflow.definable import (ExpSpiral, GraphCurve, LinearFlow, RayFlow, family_from_record,
                                 sample_in_ball)
from torusflow.lattice import Lattice, height
from torusflow.runner import parse_config, run_scenario
from torusflow.special import (UnionOfTranslates, decompose, grid_jaccard, phi_injectivity_probe,
                               recompose, stabilizer, translation_preserves)
from torusflow.subtorus import (AffineTranslate, RationalSubtorus, complement, intersection_order,
                                quotient_map, saturate, span_subtorus, wrap)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOLDEN = (1 + math.sqrt(5)) / 2
LCM12 = 27720  # lcm(1, ..., 12)


def verdict(capsys, n, title, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n} [{title}]: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------- 1

def curve_families(n, rng):
    """The unbounded one-parameter families, with seeded random parameters."""
    d = 2 * n
    u = rng.standard_normal(d)
    w = rng.standard_normal(d)
    off = rng.uniform(-1, 1, d)
    return {
        "RayFlow": RayFlow(u, off),
        "LinearFlow": LinearFlow(w, off),
        "ExpSpiral": ExpSpiral(n - 1, 1, slice_y=float(rng.uniform(0, 2 * math.pi))),
        "GraphCurve-exp": GraphCurve("exp", (float(rng.uniform(0.2, 2)), float(rng.uniform(0.2, 1))),
                                     u, w, off),
        "GraphCurve-poly": GraphCurve("poly", (0.0, float(rng.uniform(-1, 1)), float(rng.uniform(0.1, 1))),
                                      w, u, off),
    }


def test_criterion_1_counting_bound(capsys):
    worst_T0, worst_time, failures, cases = 0, 0.0, [], 0
    for n in (1, 2):
        for seed in range(20):
            L = Lattice.random_real(n, seed)
            rng = np.random.default_rng(1000 * n + seed)
            for name, X in curve_families(n, rng).items():
                t0 = time.perf_counter()
                rep = counting_bound_report(sigma_census(X, L, 200, budget=1000, seed=seed))
                dt = time.perf_counter() - t0
                cases += 1
                worst_time = max(worst_time, dt)
                ok = (rep.T0 is not None and rep.T0 <= 10
                      and all(p for T, _, _, p in rep.rows if T >= rep.T0)
                      and rep.rows[-1][0] == 200 and dt <= 10.0)
                if ok:
                    worst_T0 = max(worst_T0, rep.T0)
                else:
                    failures.append((n, seed, name, rep.T0, round(dt, 2)))
    verdict(capsys, 1, "counting bound", not failures,
            f"{cases - len(failures)}/{cases} cases, worst T0 {worst_T0}, "
            f"slowest {worst_time:.2f} s, failures {failures[:5]}")


# ---------------------------------------------------------------------------- 2

def test_criterion_2_crossing_increments(capsys):
    rng = np.random.default_rng(2)
    lattices = [Lattice.random_real(n, s) for n in (1, 2) for s in range(10)]
    lattices += [Lattice.random_unimodular(n, s) for n in (1, 2) for s in range(5)]
    paths = violations = crossings = 0
    for _ in range(100_000):
        L = lattices[int(rng.integers(len(lattices)))]
        k = int(rng.integers(2, 24))
        steps = rng.standard_normal((k, L.dim))
        steps *= (L.inradius * rng.uniform(0.0, 0.999, (k, 1))
                  / np.linalg.norm(steps, axis=1, keepdims=True))
        path = rng.uniform(-20, 20, L.dim) + np.cumsum(steps, axis=0)
        lams = [lam for lam, _ in crossing_walk(path, L)]
        paths += 1
        crossings += len(lams) - 1
        for a, b in zip(lams, lams[1:]):
            if max(abs(x - y) for x, y in zip(a, b)) > 1 or abs(height(a) - height(b)) > 1:
                violations += 1
    verdict(capsys, 2, "crossing increments", violations == 0,
            f"{paths} paths, {crossings} cell changes, {violations} violations")


# ---------------------------------------------------------------------------- 3

def kronecker_case(direction, L, offset, seed):
    X = LinearFlow(np.asarray(direction, dtype=float) @ L.basis, offset)
    Y = torus_project(sample_in_ball(X, 400.0, 10_000, seed=seed).points, L)
    return detect_affine_subtorus(Y, 50, seed=seed), Y


def test_criterion_3_kronecker(capsys):
    rng = np.random.default_rng(3)
    rational_ok, slow, bad = 0, 0.0, []
    for case in range(100):
        while True:
            p, q = (int(v) for v in rng.integers(-7, 8, 2))
            if q != 0:
                break
        L = Lattice.identity(1) if case % 2 == 0 else Lattice.random_unimodular(1, case)
        t0 = time.perf_counter()
        c, Y = kronecker_case([q, p], L, rng.uniform(-1, 1, 2), case)
        dt = time.perf_counter() - t0
        slow = max(slow, dt)
        g = math.gcd(p, q)
        expect_rel = il.row_basis([[p // g, -q // g]])
        ok = (il.row_basis(c.relations) == expect_rel
              and [comp.direction for comp in c.components] == [span_subtorus([[q, p]], 2)]
              and c.residual <= 1e-6 and dt <= 5.0)
        rational_ok += ok
        if not ok:
            bad.append((p, q, c.relations))
    irr_ok, irr_cases = 0, 0
    for slope in (math.sqrt(2), math.sqrt(3), GOLDEN):
        for seed in range(10):
            L = Lattice.identity(1) if seed % 2 == 0 else Lattice.random_unimodular(1, 50 + seed)
            t0 = time.perf_counter()
            c, _ = kronecker_case([1.0, slope], L, rng.uniform(-1, 1, 2), seed)
            dt = time.perf_counter() - t0
            slow = max(slow, dt)
            irr_cases += 1
            irr_ok += c.is_full_torus() and c.relations == [] and dt <= 5.0
    ok = rational_ok == 100 and irr_ok == irr_cases
    verdict(capsys, 3, "Kronecker recovery", ok,
            f"rational {rational_ok}/100, irrational {irr_ok}/{irr_cases}, "
            f"slowest {slow:.2f} s, misses {bad[:3]}")


# ---------------------------------------------------------------------------- 4

def random_saturated(rng, dim):
    r = int(rng.integers(1, dim))
    while True:
        M = rng.integers(-4, 5, size=(r, dim))
        if il.rank(M.tolist()) == r:
            return saturate(M)


def brute_common_points(B, Bc, bound=12):
    """Points of order <= bound lying in both subtori, by enumeration."""
    found = set()
    for N in range(1, bound + 1):
        C = np.array(list(itertools.product(range(N), repeat=B.dim)))
        X = C / N
        both = (B.offset_residual(X) <= 1e-9) & (Bc.offset_residual(X) <= 1e-9)
        for c in C[both]:
            found.add(tuple(int(v) * (LCM12 // N) for v in c))
    return len(found)


def test_criterion_4_complement_algebra(capsys):
    rng = np.random.default_rng(4)
    rank_ok = checked = order_ok = 0
    for case in range(200):
        dim = (2, 4, 6)[case % 3]
        B = random_saturated(rng, dim)
        pairs = [complement(B)]
        # also an arbitrary valid coordinate complement, whose order is often > 1
        eye = il.identity(dim)
        opts = [ix for ix in itertools.combinations(range(dim), dim - B.rank)
                if il.det(B.to_list() + [eye[i] for i in ix])]
        pairs.append(saturate([eye[i] for i in opts[int(rng.integers(len(opts)))]], dim))
        rank_ok += all(B.rank + Bc.rank == dim for Bc in pairs[:1])
        for Bc in pairs:
            order = intersection_order(B, Bc)
            if order <= 12 and dim <= 4:
                checked += 1
                order_ok += brute_common_points(B, Bc) == order
    ok = rank_ok == 200 and order_ok == checked and checked > 0
    verdict(capsys, 4, "complement algebra", ok,
            f"rank sums {rank_ok}/200, brute-force orders {order_ok}/{checked}")


# ---------------------------------------------------------------------------- 5

def constructed_union(rng, case):
    """V = union over g in G of (P + g + B), with G a known finite group mod B."""
    dim = 2 if case < 20 else 4
    r = 1 if dim == 2 else int(rng.integers(1, 4))
    B = random_saturated(rng, dim) if dim == 2 else None
    while B is None or B.rank != r:
        B = random_saturated(rng, dim)
    q = quotient_map(None, B)
    dq = q.quotient_dim
    N1 = int(rng.integers(1, 7))
    N2 = int(rng.integers(1, 3)) if dq >= 2 and N1 <= 6 else 1
    gens = []
    y1 = np.zeros(dq)
    y1[0] = 1.0 / N1
    if dq >= 2:
        y1[1] = float(rng.integers(0, N1)) / N1
    gens.append((y1, N1))
    if N2 > 1:
        y2 = np.zeros(dq)
        y2[1] = 1.0 / N2
        gens.append((y2, N2))
    P = rng.random(dim)
    elems = []
    for ks in itertools.product(*[range(N) for _, N in gens]):
        y = sum(k * g for k, (g, _) in zip(ks, gens))
        elems.append(np.mod(q.lift(np.mod(y, 1.0)), 1.0))
    comps = [AffineTranslate.make(np.mod(P + g, 1.0), B) for g in elems]
    return UnionOfTranslates(comps), B, len(elems)


def brute_finite_part(V, C, bound=12, step=0.02):
    """Classes mod C of torsion points (order <= bound in A/C) preserving V."""
    q = quotient_map(None, C)
    dq = q.quotient_dim
    seen, reps = set(), []
    for N in range(1, bound + 1):
        for c in itertools.product(range(N), repeat=dq):
            key = tuple(int(v) * (LCM12 // N) for v in c)
            if key in seen:
                continue
            seen.add(key)
            t = q.lift(np.array(c, dtype=float) / N)
            # cheap necessary condition on base points, then the full grid test
            bases = np.array([comp.base for comp in V.components])
            if not V.contains(np.mod(bases + t, 1.0)).all():
                continue
            if translation_preserves(V, t, step=step):
                reps.append(t)
    return reps


def test_criterion_5_stabilizer_decomposition(capsys):
    rng = np.random.default_rng(5)
    conn_ok = fin_ok = jac_ok = 0
    worst_j = 1.0
    for case in range(50):
        V, B, order = constructed_union(rng, case)
        res = stabilizer(V)
        conn_ok += res.connected == B
        brute = brute_finite_part(V, B)
        fin_ok += (len(res.finite_part) == order == len(brute)
                   and all(translation_preserves(V, t) for t in res.finite_part))
        Bd, Bc, Vp = decompose(V)
        J = grid_jaccard(V, recompose(Bd, Vp), step=1e-2)
        worst_j = min(worst_j, J)
        jac_ok += J >= 0.999 and Bd == B
    ok = conn_ok == fin_ok == jac_ok == 50
    verdict(capsys, 5, "stabilizer/decomposition", ok,
            f"connected {conn_ok}/50, finite part {fin_ok}/50, "
            f"Jaccard>=0.999 {jac_ok}/50 (min {worst_j:.4f})")


# ---------------------------------------------------------------------------- 6

def test_criterion_6_phi_probe(capsys):
    rng = np.random.default_rng(6)
    first_try = 0
    for case in range(100):
        dim = (2, 4)[case % 2]
        B = random_saturated(rng, dim)
        recs = [{"base": list(rng.random(dim)), "generators": B.to_list()}]
        recs += [{"base": list(rng.random(dim))} for _ in range(int(rng.integers(0, 3)))]
        V = UnionOfTranslates.from_records(recs, dim)
        m = int(rng.integers(2, 6))
        pr = phi_injectivity_probe(V, m, seed=case)
        xs, ys = (np.array(t) for t in pr.witness) if pr.witness else (None, None)
        good = (pr.collision and pr.attempts == 1
                and np.abs(wrap(np.diff(xs, axis=0) - np.diff(ys, axis=0))).max() <= 1e-9
                and V.contains(xs).all() and V.contains(ys).all()
                and np.abs(wrap(xs - ys)).max() > 1e-6)
        first_try += bool(good)
    exhaustive_ok = 0
    for case in range(10):
        dim = (2, 4)[case % 2]
        V = UnionOfTranslates.from_records([{"base": list(p)} for p in rng.random((5, dim))], dim)
        assert len(stabilizer(V).finite_part) == 1
        pr = phi_injectivity_probe(V, 3, trials=10**5, seed=case)
        exhaustive_ok += (not pr.collision) and pr.attempts == 60 * 59 // 2
    ok = first_try == 100 and exhaustive_ok == 10
    verdict(capsys, 6, "phi_m probe", ok,
            f"first-attempt collisions {first_try}/100, "
            f"exhaustive 5-point searches without collision {exhaustive_ok}/10")


# ---------------------------------------------------------------------------- 7

def test_criterion_7_essential_stabilization(capsys):
    s = parse_config((CONFIGS / "essential_blob_line.json").read_text())
    r1, r2 = run_scenario(s), run_scenario(s)
    rec = r1.results[0]
    X = family_from_record(s.family)
    blob_r = s.family["members"][0]["radius"]
    L = s.build_lattice()
    ec = essential_closure_estimate(X, L, s.R_schedule, s.budget, s.relation_bound, s.seed,
                                    s.membership_tol)
    past = [i for i, (R, _) in enumerate(ec.entries) if R >= blob_r]
    by_second = len(past) >= 2 and ec.entries[past[1]][1].stabilized
    line = family_from_record(s.family["members"][1])
    only = essential_closure_estimate(line, L, s.R_schedule, s.budget, s.relation_bound, s.seed,
                                      s.membership_tol).final
    final = ec.final
    same_dir = [c.direction for c in final.components] == [c.direction for c in only.components]
    base_gap = max(float(np.linalg.norm(wrap(a.base_array - b.base_array)))
                   for a, b in zip(final.components, only.components)) if same_dir else math.inf
    ok = (rec["stabilized"] and by_second and same_dir and base_gap <= 1e-6
          and closures_agree(final, only) and r1.body_bytes() == r2.body_bytes())
    verdict(capsys, 7, "essential closure stabilization", ok,
            f"stabilized at R={ec.entries[past[1]][0] if by_second else None}, "
            f"direction {final.components[0].direction.to_list()}, base gap {base_gap:.2e}")


# ---------------------------------------------------------------------------- 8

_PIPELINE = {}


def pipeline_report(max_workers=1, fresh=False):
    if fresh or max_workers not in _PIPELINE:
        s = parse_config((CONFIGS / "pipeline_spiral.json").read_text())
        _PIPELINE[max_workers] = run_scenario(s, max_workers=max_workers)
    return _PIPELINE[max_workers]


def test_criterion_8_spiral_pipeline(capsys):
    s = parse_config((CONFIGS / "pipeline_spiral.json").read_text())
    assert s.budget == 10**6 and s.relation_bound == 50 and s.witness_points == 10
    r = pipeline_report()
    recs = {rec["experiment"]: rec for rec in r.results}
    final = recs["essential_closure"]["entries"][-1]["closure"]
    w = recs["witnesses"]["witnesses"]
    full_rank = sum(x["on_closure"] and x["rank"] == 4 for x in w)
    ok = (final["full_torus"] and final["relations"] == [] and len(w) == 10 and full_rank == 10
          and r.wall_clock_s <= 60.0)
    verdict(capsys, 8, "spiral pipeline", ok,
            f"full torus {final['full_torus']}, relations {final['relations']}, "
            f"full-rank witnesses {full_rank}/10, {r.wall_clock_s:.1f} s")


# ---------------------------------------------------------------------------- 9

def pure_digests():
    """Digests of the non-runner criteria (2, 4, 5, 6) on a reduced scale."""
    rng = np.random.default_rng(9)
    out = []
    L = Lattice.random_real(2, 1)
    steps = rng.standard_normal((500, 4)) * 0.1 * L.inradius
    out.append(crossing_walk(np.cumsum(steps, axis=0), L))
    for _ in range(20):
        B = random_saturated(rng, 4)
        out.append((B.to_list(), complement(B).to_list(), intersection_order(B, complement(B))))
    for case in (0, 25, 40):
        V, B, _ = constructed_union(rng, case)
        out.append(stabilizer(V).to_record())
        out.append(phi_injectivity_probe(V, 3, seed=case).to_record())
    return digest(out)


def test_criterion_9_determinism(capsys):
    mismatches, runs = [], 0
    for path in sorted(CONFIGS.glob("*.json")):
        s = parse_config(path.read_text())
        if path.stem == "pipeline_spiral":
            bodies = [pipeline_report(1).body_bytes(), pipeline_report(1, fresh=True).body_bytes(),
                      pipeline_report(8).body_bytes()]
        else:
            bodies = [run_scenario(s, 1).body_bytes(), run_scenario(s, 1).body_bytes(),
                      run_scenario(s, 8).body_bytes()]
        runs += 3
        if len(set(bodies)) != 1:
            mismatches.append(path.stem)
    pure_ok = pure_digests() == pure_digests()
    ok = not mismatches and pure_ok
    verdict(capsys, 9, "determinism", ok,
            f"{runs} runner executions over {runs // 3} scenarios, mismatches {mismatches}, "
            f"library digests stable {pure_ok}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
