"""Detection of affine subtori containing sampled torus points.

The detector looks for integer covectors ``m`` (height <= relation_bound)
with ``m · (x − x₀) ≡ 0 (mod 1)`` on every sample. Candidates come from LLL
reduction of ``[I | K·D]`` stacked on ``[0 | K·I]`` where ``D`` holds a few
sample differences; every candidate is then checked against all samples,
so no false relation survives. The common kernel of the relations is the
direction of the detected subtorus, and the samples are split into its
cosets. A union of several translates is found by greedy peeling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import config
from . import intlinalg as il
from .definable import ParamSet, sample_annulus
from .lattice import Lattice, lattice_coords
from .subtorus import (AffineTranslate, RationalSubtorus, kernel_subtorus, wrap)


class ClosureFitError(RuntimeError):
    pass


class NotOnClosure(ValueError):
    pass


def torus_project(points, L: Lattice) -> np.ndarray:
    """Image of ambient points in A, as lattice coordinates in [0, 1)."""
    t = lattice_coords(np.atleast_2d(points), L)
    return np.mod(np.mod(t, 1.0), 1.0)


# --------------------------------------------------------------------------- relations

def find_relations(D: np.ndarray, relation_bound: int, tol: float = config.MEMBERSHIP_TOL,
                   scale: int = config.RELATION_SCALE, n_probe: int | None = None,
                   rng: np.random.Generator | None = None) -> list[list[int]]:
    """HNF basis of the integer relations found for difference vectors ``D``.

    A relation is a covector ``m`` with ``H(m) <= relation_bound`` and
    ``|wrap(D @ m)| <= tol`` on every row of ``D``.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    d = D.shape[1]
    D = wrap(D)
    if len(D) == 0 or not np.any(np.abs(D) > tol):
        return il.identity(d)
    rng = np.random.default_rng(0) if rng is None else rng
    S = min(len(D), d + 10 if n_probe is None else n_probe)
    spread = rng.choice(len(D), size=S, replace=False) if len(D) > S else np.arange(len(D))
    probe = D[np.sort(spread)]
    n = d + S
    basis = np.zeros((n, n), dtype=np.int64)
    basis[:d, :d] = np.eye(d, dtype=np.int64)
    basis[:d, d:] = np.rint(scale * probe.T).astype(np.int64)
    basis[d:, d:] = scale * np.eye(S, dtype=np.int64)
    red = il.lll(basis)
    cands = red[:, :d]
    cands = cands[np.any(cands != 0, axis=1) & (np.abs(cands).max(axis=1) <= relation_bound)]
    verified = [m for m in cands if np.abs(wrap(D @ m.astype(float))).max() <= tol]
    if not verified:
        return []
    return il.row_basis([[int(v) for v in m] for m in verified])


def relations_in_box(relations, bound: int, dim: int) -> set[tuple[int, ...]]:
    """All nonzero lattice vectors of height <= bound (exhaustive; small cases)."""
    if not relations:
        return set()
    M = np.array(relations, dtype=float)
    grid = np.array(np.meshgrid(*[np.arange(-bound, bound + 1)] * dim, indexing="ij"))
    V = grid.reshape(dim, -1).T
    V = V[np.any(V != 0, axis=1)]
    # v is in the row lattice iff v = c @ M with integer c
    c, *_ = np.linalg.lstsq(M.T, V.T.astype(float), rcond=None)
    ok = (np.abs(c - np.rint(c)).max(axis=0) < 1e-9) & (np.abs(M.T @ np.rint(c) - V.T).max(axis=0) < 1e-9)
    return {tuple(int(a) for a in v) for v in V[ok]}


# --------------------------------------------------------------------------- detection

@dataclass
class DetectedClosure:
    components: list[AffineTranslate]
    residual: float
    relation_bound: int
    stabilized: bool = False
    R_at_detection: float | None = None
    relations: list[list[int]] = field(default_factory=list)
    labels: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return max((c.dim for c in self.components), default=-1)

    @property
    def ambient_dim(self) -> int:
        return self.components[0].direction.dim

    def is_full_torus(self) -> bool:
        return any(c.direction.is_full() for c in self.components)

    def residuals(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.min([c.residual(X) for c in self.components], axis=0)

    def to_record(self) -> dict:
        return {
            "components": [dict(c.to_record(), dim=c.dim) for c in self.components],
            "residual": float(self.residual),
            "relation_bound": int(self.relation_bound),
            "relations": [list(map(int, r)) for r in self.relations],
            "stabilized": bool(self.stabilized),
            "R_at_detection": self.R_at_detection,
            "full_torus": self.is_full_torus(),
        }


def _cosets(X: np.ndarray, relations, tol: float) -> list[AffineTranslate]:
    """Split samples satisfying ``relations`` into connected translates."""
    d = X.shape[1]
    direction = kernel_subtorus(relations, d) if relations else RationalSubtorus.full(d)
    A = direction.annihilator.astype(float)
    if len(A) == 0:
        return [AffineTranslate.make(np.zeros(d), direction)]
    vals = np.mod(X @ A.T, 1.0)
    ctol = tol * (1.0 + float(np.abs(A).sum(axis=1).max()))
    left = np.ones(len(X), dtype=bool)
    out = []
    while left.any():
        i = int(np.flatnonzero(left)[0])
        near = np.abs(wrap(vals - vals[i])).max(axis=1) <= ctol
        take = left & near
        out.append(AffineTranslate.make(X[i], direction))
        left &= ~take
        if len(out) > 4096:
            raise ClosureFitError("samples fall into too many cosets of the detected relations")
    return out


def _inliers(X: np.ndarray, x0: np.ndarray, relations, tol: float) -> np.ndarray:
    if not relations:
        return np.ones(len(X), dtype=bool)
    R = np.array(relations, dtype=float)
    return np.abs(wrap((X - x0) @ R.T)).max(axis=1) <= tol


def _rank(relations) -> int:
    return il.rank(relations) if relations else 0


def _prune(components: list[AffineTranslate], tol: float) -> list[AffineTranslate]:
    keep: list[AffineTranslate] = []
    for i, c in enumerate(components):
        covered = False
        for j, o in enumerate(components):
            if i == j or not o.contains_translate(c, tol):
                continue
            # strictly larger, or an equal copy that appears earlier
            if o.dim > c.dim or j < i:
                covered = True
                break
        if not covered:
            keep.append(c)
    return keep


def _peel_candidate(X, relation_bound, tol, rng, dim_global, min_inliers, trials):
    d = X.shape[1]
    tree = cKDTree(X, boxsize=1.0)
    k = min(len(X), 3 * d + 4)
    anchors = rng.choice(len(X), size=min(trials, len(X)), replace=False)
    best = None
    for a in anchors:
        _, nb = tree.query(X[a], k=k)
        diffs = wrap(X[np.atleast_1d(nb)] - X[a])
        rel = find_relations(diffs, relation_bound, tol, rng=rng)
        if not rel:
            continue
        mask = _inliers(X, X[a], rel, tol)
        count = int(mask.sum())
        if count < min_inliers:
            continue
        rel = find_relations(wrap(X[mask] - X[a]), relation_bound, tol, rng=rng)
        dim_c = d - _rank(rel)
        if dim_c >= dim_global:
            continue
        mask = _inliers(X, X[a], rel, tol)
        key = (dim_c, -int(mask.sum()))
        if best is None or key < best[0]:
            best = (key, rel, mask)
    return None if best is None else (best[1], best[2])


def detect_affine_subtorus(samples, relation_bound: int, tol: float = config.MEMBERSHIP_TOL,
                           seed: int = 0, max_components: int = config.MAX_COMPONENTS,
                           min_fraction: float = 0.02, trials: int = 8) -> DetectedClosure:
    """Smallest union of affine subtori (within the search bounds) containing the samples."""
    X = np.mod(np.atleast_2d(np.asarray(samples, dtype=float)), 1.0) % 1.0
    if X.size == 0:
        raise ValueError("no samples to fit")
    n, d = X.shape
    rng = np.random.default_rng(seed)
    min_inliers = max(d + 2, int(np.ceil(min_fraction * n)))
    remaining = np.arange(n)
    components: list[AffineTranslate] = []
    global_rel = None
    while remaining.size:
        Xr = X[remaining]
        rel_g = find_relations(wrap(Xr - Xr[0]), relation_bound, tol, rng=rng)
        if global_rel is None:
            global_rel = rel_g
        dim_g = d - _rank(rel_g)
        cand = None
        if dim_g > 0 and len(components) < max_components - 1 and len(Xr) >= 2 * min_inliers:
            cand = _peel_candidate(Xr, relation_bound, tol, rng, dim_g, min_inliers, trials)
        if cand is None:
            components.extend(_cosets(Xr, rel_g, tol))
            break
        rel, mask = cand
        components.extend(_cosets(Xr[mask], rel, tol))
        remaining = remaining[~mask]
    components = _prune(components, tol)
    res = np.array([c.residual(X) for c in components])
    labels = np.argmin(res, axis=0)
    residual = float(res.min(axis=0).max())
    if residual > max(tol, 1e-9) * 10:
        raise ClosureFitError(f"fit leaves samples {residual:.3g} away from every component")
    return DetectedClosure(components, residual, relation_bound, relations=global_rel or [],
                           labels=labels)


def closures_agree(a: DetectedClosure, b: DetectedClosure,
                   tol: float = config.MEMBERSHIP_TOL) -> bool:
    """Same saturated directions and congruent base points, component by component."""
    if len(a.components) != len(b.components):
        return False
    unmatched = list(b.components)
    for c in a.components:
        hit = next((o for o in unmatched if o.same_as(c, tol)), None)
        if hit is None:
            return False
        unmatched.remove(hit)
    return True


# --------------------------------------------------------------------------- flows

@dataclass
class EssentialClosure:
    entries: list[tuple[float, DetectedClosure]]
    stabilized: bool
    truncated: bool

    @property
    def final(self) -> DetectedClosure | None:
        return self.entries[-1][1] if self.entries else None

    def to_record(self) -> dict:
        return {
            "stabilized": self.stabilized,
            "truncated": self.truncated,
            "entries": [dict(R=R, closure=c.to_record()) for R, c in self.entries],
        }


def essential_closure_estimate(X: ParamSet, L: Lattice, R_schedule, budget: int,
                               relation_bound: int, seed: int = 0,
                               tol: float = config.MEMBERSHIP_TOL,
                               max_workers: int = 1) -> EssentialClosure:
    """Detect the closure of the image of ``X \\ B(0,R)`` along an R-schedule.

    The entry at ``R_i`` fits samples from the annulus ``[R_i, R_{i+1})``;
    the last entry uses ``[R_last, 2 R_last)``. The flow is stabilized when
    the last two detections agree. An empty annulus truncates the schedule.
    """
    Rs = [float(r) for r in R_schedule]
    if len(Rs) < 3 or any(b <= a for a, b in zip(Rs, Rs[1:])):
        raise ValueError("R_schedule must be strictly increasing with at least 3 entries")
    entries: list[tuple[float, DetectedClosure]] = []
    truncated = False
    for i, R in enumerate(Rs):
        R_next = Rs[i + 1] if i + 1 < len(Rs) else 2.0 * R
        batch = sample_annulus(X, R, R_next, budget, seed + i, max_workers=max_workers)
        if batch.empty:
            truncated = True
            break
        c = detect_affine_subtorus(torus_project(batch.points, L), relation_bound, tol, seed=seed + i)
        c.R_at_detection = R
        if entries:
            c.stabilized = closures_agree(entries[-1][1], c, tol)
        entries.append((R, c))
    stabilized = (not truncated) and len(entries) >= 2 and entries[-1][1].stabilized
    return EssentialClosure(entries, stabilized, truncated)


def weakly_special_witness(closure: DetectedClosure, P, tol: float = config.MEMBERSHIP_TOL,
                           step: float = 1e-2, cap: int = 20000) -> RationalSubtorus | None:
    """Direction of a positive-dimensional translate through ``P`` inside the closure."""
    P = np.mod(np.asarray(P, dtype=float), 1.0)
    slack = max(tol, closure.residual) + 1e-12
    res = np.array([c.residual(P)[0] for c in closure.components])
    on = np.flatnonzero(res <= slack)
    if len(on) == 0:
        raise NotOnClosure(f"point is {res.min():.3g} away from the closure")
    best = max(on, key=lambda i: closure.components[i].dim)
    B = closure.components[best].direction
    if B.rank == 0:
        return None
    grid = np.mod(P + B.grid(step, cap), 1.0)
    if closure.residuals(grid).max() > slack + float(res[best]):
        raise ClosureFitError("translate through the point leaves the closure")
    return B


def equidistribution_stats(samples, grid_resolution: float, n_anchors: int = 2000,
                           seed: int = 0) -> tuple[float, float]:
    """Box coverage fraction and a randomized star-discrepancy estimate."""
    if not 0 < grid_resolution < 1:
        raise ValueError("grid_resolution must lie in (0, 1)")
    X = np.mod(np.atleast_2d(np.asarray(samples, dtype=float)), 1.0) % 1.0
    n, d = X.shape
    m = int(np.ceil(1.0 / grid_resolution - 1e-12))
    if m ** d > config.ENUMERATION_LIMIT:
        raise ValueError("too many boxes for the coverage count")
    idx = np.minimum((X / grid_resolution).astype(np.int64), m - 1)
    occupied = len(np.unique(idx, axis=0))
    coverage = occupied / m ** d
    rng = np.random.default_rng(seed)
    anchors = rng.random((n_anchors, d))
    extra = X[rng.choice(n, size=min(n, 1000), replace=False)]
    anchors = np.vstack([anchors, extra, np.nextafter(extra, 2.0)])
    disc = 0.0
    for chunk in np.array_split(anchors, max(1, len(anchors) * n // 2_000_000 + 1)):
        inside = np.all(X[None, :, :] < chunk[:, None, :], axis=2).mean(axis=1)
        disc = max(disc, float(np.abs(inside - np.prod(chunk, axis=1)).max()))
    return coverage, disc
