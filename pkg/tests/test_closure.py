import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusflow import intlinalg as il
from torusflow.closure import (ClosureFitError, NotOnClosure, closures_agree,
                               detect_affine_subtorus, equidistribution_stats,
                               essential_closure_estimate, find_relations, relations_in_box,
                               torus_project, weakly_special_witness)
from torusflow.definable import BoundedBlob, LinearFlow, UnionSet, sample_in_ball
from torusflow.lattice import Lattice
from torusflow.subtorus import AffineTranslate, saturate, span_subtorus, wrap

GOLDEN = (1 + math.sqrt(5)) / 2


def brute_relations(X, bound, tol=1e-6):
    """Every nonzero m with H(m) <= bound and m.(x - x0) = 0 mod 1 on all samples."""
    d = X.shape[1]
    M = np.array(list(itertools.product(range(-bound, bound + 1), repeat=d)))
    M = M[np.any(M != 0, axis=1)]
    D = wrap(X - X[0])
    ok = np.abs(wrap(D @ M.T.astype(float))).max(axis=0) <= tol
    return {tuple(int(a) for a in m) for m in M[ok]}


def subtorus_samples(G, n, seed, base=None):
    rng = np.random.default_rng(seed)
    G = np.array(G, dtype=float)
    base = rng.random(G.shape[1]) if base is None else np.asarray(base)
    return np.mod(base + rng.uniform(0, 1, (n, len(G))) @ G, 1.0)


def test_projection_is_lattice_coordinates():
    L = Lattice(np.array([[2.0, 0.0], [0.0, 1.0]]))
    assert np.allclose(torus_project([[3.0, -0.25]], L), [[0.5, 0.75]])


def test_rational_line_relation():
    X = np.mod(np.outer(np.linspace(0, 50, 2000), [1.0, 2.0]), 1.0)
    c = detect_affine_subtorus(X, 50)
    assert c.relations == [[2, -1]] or c.relations == [[-2, 1]] or il.row_basis(c.relations) == [[2, -1]]
    assert len(c.components) == 1
    assert c.components[0].direction.to_list() == [[1, 2]]
    assert c.residual < 1e-9


@pytest.mark.parametrize("slope", [math.sqrt(2), math.sqrt(3), GOLDEN])
def test_irrational_line_is_dense(slope):
    X = np.mod(np.outer(np.linspace(0, 2000, 10000), [1.0, slope]), 1.0)
    c = detect_affine_subtorus(X, 50)
    assert c.is_full_torus()
    assert c.relations == []


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_relations_match_brute_force_box(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.choice([2, 4]))
    k = int(rng.integers(1, d))
    while True:
        G = rng.integers(-3, 4, size=(k, d))
        if il.rank(G.tolist()) == k:
            break
    X = subtorus_samples(G, 300, seed)
    bound = 10
    rel = find_relations(wrap(X - X[0]), bound, rng=np.random.default_rng(seed))
    assert relations_in_box(rel, bound, d) == brute_relations(X, bound)


def test_two_parallel_lines():
    B = span_subtorus([[1, 1]], 2)
    X = np.vstack([subtorus_samples([[1, 1]], 400, 1, [0.0, 0.3]),
                   subtorus_samples([[1, 1]], 400, 2, [0.0, 0.7])])
    c = detect_affine_subtorus(X, 20)
    assert len(c.components) == 2
    assert all(comp.direction == B for comp in c.components)


def test_two_crossing_lines():
    X = np.vstack([subtorus_samples([[1, 0]], 400, 1, [0.0, 0.3]),
                   subtorus_samples([[1, 2]], 400, 2, [0.2, 0.1])])
    c = detect_affine_subtorus(X, 20)
    dirs = sorted(comp.direction.to_list() for comp in c.components)
    assert dirs == [[[1, 0]], [[1, 2]]]
    assert c.residual < 1e-9


def test_every_sample_within_residual():
    rng = np.random.default_rng(5)
    X = np.vstack([subtorus_samples([[1, 0, 1, 0], [0, 1, 0, 1]], 500, 3),
                   subtorus_samples([[0, 0, 1, 2]], 300, 4)])
    c = detect_affine_subtorus(X, 20, seed=1)
    assert c.residuals(X).max() <= c.residual + 1e-15
    assert c.residual <= 1e-6


def test_finite_point_cloud():
    pts = np.array([[0.1, 0.2], [0.6, 0.7]])
    X = np.repeat(pts, 50, axis=0)
    c = detect_affine_subtorus(X, 20)
    assert c.dim == 0
    assert len(c.components) == 2


def test_noise_raises():
    X = np.random.default_rng(0).random((300, 2))
    X[:, 1] = np.mod(2 * X[:, 0] + 1e-3 * np.random.default_rng(1).standard_normal(300), 1.0)
    # points near but not on a line: either the full torus or an honest failure
    try:
        c = detect_affine_subtorus(X, 50)
    except ClosureFitError:
        return
    assert c.is_full_torus()


@pytest.mark.parametrize("direction", [[1.0, 0.0], [3.0, 5.0], [1.0, math.sqrt(2)]])
def test_coverage_oracle(direction):
    """Dense lines fill every grid box; rational lines fill few."""
    X = torus_project(sample_in_ball(LinearFlow(direction), 3000.0, 20000).points, Lattice.identity(1))
    cov, disc = equidistribution_stats(X, 0.02)
    c = detect_affine_subtorus(X, 50)
    if c.is_full_torus():
        assert cov >= 0.98 and disc < 0.05
    else:
        # a closed rational line misses most fine boxes
        assert cov <= 0.3


def test_uniform_samples_have_small_discrepancy():
    X = np.random.default_rng(0).random((20000, 2))
    cov, disc = equidistribution_stats(X, 0.1)
    assert cov == 1.0
    assert disc < 0.03


def test_essential_closure_ignores_blob():
    line = LinearFlow([1.0, math.sqrt(2), 1.0, math.sqrt(2)], [0.25, 0.5, 0.0, 0.0])
    X = UnionSet([BoundedBlob([0.0] * 4, 5.0), line])
    L = Lattice.identity(2)
    ec = essential_closure_estimate(X, L, [1.0, 10.0, 20.0], 20000, 20)
    assert ec.entries[0][1].is_full_torus()
    assert ec.stabilized and not ec.truncated
    final = ec.final
    assert [c.direction.to_list() for c in final.components] == [[[1, 0, 1, 0], [0, 1, 0, 1]]]
    only = essential_closure_estimate(line, L, [1.0, 10.0, 20.0], 20000, 20)
    assert closures_agree(only.final, final)


def test_bounded_set_truncates():
    ec = essential_closure_estimate(BoundedBlob([0.0, 0.0], 2.0), Lattice.identity(1),
                                    [1.0, 4.0, 8.0], 2000, 20)
    assert ec.truncated and not ec.stabilized
    assert len(ec.entries) == 1


def test_schedule_validation():
    with pytest.raises(ValueError):
        essential_closure_estimate(LinearFlow([1.0, 0.0]), Lattice.identity(1), [1.0, 2.0], 100, 5)


def test_weakly_special_witness():
    B = span_subtorus([[1, 1]], 2)
    X = subtorus_samples([[1, 1]], 300, 0, [0.0, 0.3])
    c = detect_affine_subtorus(X, 20)
    assert weakly_special_witness(c, X[5]) == B
    with pytest.raises(NotOnClosure):
        weakly_special_witness(c, [0.0, 0.0])


def test_projection_periodicity():
    L = Lattice.random_real(2, 7)
    rng = np.random.default_rng(0)
    P = rng.uniform(-10, 10, (50, 4))
    lam = rng.integers(-5, 6, (50, 4)) @ L.basis
    assert np.abs(wrap(torus_project(P + lam, L) - torus_project(P, L))).max() < 1e-9
    assert np.allclose(torus_project([[1.25, -0.5]], Lattice.identity(1)), [[0.25, 0.5]])


def test_single_sample_is_a_point():
    c = detect_affine_subtorus([[0.3, 0.6]], 20)
    assert c.dim == 0 and len(c.components) == 1
    assert np.allclose(c.components[0].base, [0.3, 0.6])


@pytest.mark.parametrize("p", range(-7, 8))
def test_all_rational_slopes_with_thousand_samples(p):
    for q in range(-7, 8):
        if q == 0:
            continue
        t = np.random.default_rng(100 * (p + 7) + q + 7).random(1000)
        X = np.mod(np.outer(t, [q, p]) + [0.1, 0.7], 1.0)
        c = detect_affine_subtorus(X, 50)
        g = math.gcd(p, q)
        assert il.row_basis(c.relations) == il.row_basis([[p // g, -q // g]]), (p, q)


def test_witness_edge_cases():
    full = detect_affine_subtorus(np.random.default_rng(0).random((2000, 2)), 20)
    assert weakly_special_witness(full, [0.4, 0.1]).is_full()
    pts = detect_affine_subtorus(np.repeat([[0.1, 0.2], [0.6, 0.1]], 20, axis=0), 20)
    assert weakly_special_witness(pts, [0.1, 0.2]) is None


def test_coverage_examples():
    cov, _ = equidistribution_stats(np.full((100, 2), 0.33), 0.1)
    assert cov == pytest.approx(1 / 100)
    t = np.linspace(0, 1, 10**4, endpoint=False)
    line = np.column_stack([t, np.mod(2 * t, 1.0)])
    cov, _ = equidistribution_stats(line, 0.1)
    # direct count: boxes met by a densely sampled copy of the same subtorus
    dense = np.linspace(0, 1, 10**6, endpoint=False)
    idx = np.minimum((np.column_stack([dense, np.mod(2 * dense, 1.0)]) / 0.1).astype(int), 9)
    assert cov == pytest.approx(len(np.unique(idx, axis=0)) / 100)
