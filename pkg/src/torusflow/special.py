"""Stabilizers, splittings V = B + V′, and the difference map on unions of translates."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import config
from .lattice import Lattice
from .subtorus import (AffineTranslate, RationalSubtorus, complement, intersection,
                       quotient_map, span_subtorus, wrap)


class PreconditionError(ValueError):
    pass


class ArityError(ValueError):
    pass


@dataclass
class UnionOfTranslates:
    """A finite union of affine subtori, normalised to its maximal members."""

    components: list[AffineTranslate]
    tol: float = field(default=config.MEMBERSHIP_TOL, repr=False)

    def __post_init__(self):
        if not self.components:
            raise ValueError("a union of translates needs at least one component")
        dims = {c.direction.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError("components live in different tori")
        kept: list[AffineTranslate] = []
        for i, c in enumerate(self.components):
            dominated = any(
                o.contains_translate(c, self.tol) and (o.dim > c.dim or j < i)
                for j, o in enumerate(self.components) if j != i
            )
            if not dominated:
                kept.append(c)
        self.components = kept

    @property
    def dim(self) -> int:
        return self.components[0].direction.dim

    def residual(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.min([c.residual(X) for c in self.components], axis=0)

    def contains(self, X, tol: float | None = None) -> np.ndarray:
        return self.residual(X) <= (self.tol if tol is None else tol)

    def grid(self, step: float = 1e-2, cap: int = 20000) -> np.ndarray:
        return np.vstack([c.grid(step, cap, seed=i) for i, c in enumerate(self.components)])

    def to_records(self) -> list[dict]:
        return [c.to_record() for c in self.components]

    @classmethod
    def from_records(cls, records, dim: int) -> "UnionOfTranslates":
        return cls([AffineTranslate.from_record(r, dim) for r in records])


def translation_preserves(V: UnionOfTranslates, t, step: float = 1e-2,
                          tol: float = config.MEMBERSHIP_TOL, cap: int = 20000) -> bool:
    """Grid test of ``t + V = V``."""
    G = V.grid(step, cap)
    t = np.asarray(t, dtype=float)
    return bool(V.contains(np.mod(G + t, 1.0), tol).all()
                and V.contains(np.mod(G - t, 1.0), tol).all())


# --------------------------------------------------------------------------- stabilizer

@dataclass
class StabilizerResult:
    connected: RationalSubtorus
    finite_part: list[np.ndarray]
    quotient_part: list[np.ndarray] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "connected": self.connected.to_list(),
            "connected_dim": self.connected.rank,
            "finite_part": [[float(v) for v in t] for t in self.finite_part],
            "order_mod_connected": len(self.finite_part),
        }


def _quotient_direction(q, B: RationalSubtorus) -> RationalSubtorus:
    k = q.subtorus.rank
    dq = q.quotient_dim
    if B.rank == 0:
        return RationalSubtorus.zero(dq)
    coords = np.rint(q.coordinates(B.matrix.astype(float))).astype(np.int64)[:, k:]
    return span_subtorus(coords.tolist(), dq)


def _torsion_points(dim: int, N: int) -> np.ndarray:
    if N ** dim > 5_000_000:
        return np.zeros((0, dim))
    pts = np.array(list(itertools.product(range(N), repeat=dim)), dtype=float) / N
    return pts.reshape(-1, dim)


def _maps_components(qcomps, t, tol) -> bool:
    """Exact test: translation by ``t`` permutes the quotient components."""
    for base, direction in qcomps:
        moved = np.mod(base + t, 1.0)
        if not any(d2 == direction and direction.offset_residual(moved - b2)[0] <= tol
                   for b2, d2 in qcomps):
            return False
    return True


def stabilizer(V: UnionOfTranslates, torsion_bound: int = config.TORSION_BOUND,
               tol: float = config.MEMBERSHIP_TOL) -> StabilizerResult:
    """Identity component and coset representatives of ``{t : t + V = V}``.

    The connected part is the identity component of the intersection of all
    component directions. In the quotient by it the stabilizer is finite;
    candidates are base-point differences of components sharing a
    direction, refined by torsion points of order <= ``torsion_bound`` when
    that direction is still positive-dimensional in the quotient.
    """
    if torsion_bound < 1:
        raise ValueError("torsion_bound must be at least 1")
    comps = V.components
    C = comps[0].direction
    for c in comps[1:]:
        C = intersection(C, c.direction)
    q = quotient_map(None, C)
    dq = q.quotient_dim
    if dq == 0:
        return StabilizerResult(C, [np.zeros(V.dim)], [np.zeros(0)])
    qcomps = [(q(np.array(c.base)), _quotient_direction(q, c.direction)) for c in comps]
    i0 = min(range(len(qcomps)), key=lambda i: qcomps[i][1].rank)
    b0, d0 = qcomps[i0]
    found: list[np.ndarray] = []

    def consider(y):
        y = np.mod(y, 1.0) % 1.0
        if any(np.linalg.norm(wrap(y - f)) <= tol for f in found):
            return
        if _maps_components(qcomps, y, tol):
            found.append(y)

    for bj, dj in qcomps:
        if dj != d0:
            continue
        delta = np.mod(bj - b0, 1.0)
        if d0.rank == 0:
            consider(delta)
            continue
        for N in range(1, torsion_bound + 1):
            Y = _torsion_points(dq, N)
            if len(Y) == 0:
                continue
            on = d0.offset_residual(Y - delta) <= tol
            for y in Y[on]:
                consider(y)
    found.sort(key=lambda y: (np.linalg.norm(wrap(y)) > tol, tuple(np.round(y, 12))))
    lifts = [np.mod(q.lift(y), 1.0) % 1.0 for y in found]
    return StabilizerResult(C, lifts, found)


# --------------------------------------------------------------------------- decomposition

def recompose(B: RationalSubtorus, Vp: UnionOfTranslates) -> UnionOfTranslates:
    """The union ``B + V′``."""
    comps = []
    for c in Vp.components:
        gens = B.to_list() + c.direction.to_list()
        comps.append(AffineTranslate.make(np.array(c.base), span_subtorus(gens, B.dim)))
    return UnionOfTranslates(comps)


def decompose(V: UnionOfTranslates, L: Lattice | None = None,
              tol: float = config.MEMBERSHIP_TOL):
    """Split ``V = B + V′`` with B the connected stabilizer and ``V′ ⊂ B′``.

    Returns ``(B, B′, V′)``. Raises ``PreconditionError`` if the stabilizer
    is finite.
    """
    B = stabilizer(V, torsion_bound=1, tol=tol).connected
    if B.rank == 0:
        raise PreconditionError("stabilizer is finite; no positive-dimensional splitting")
    Bc = complement(B, L)
    d = V.dim
    if Bc.rank == 0:
        Vp = UnionOfTranslates([AffineTranslate.make(np.zeros(d), RationalSubtorus.zero(d))])
        return B, Bc, Vp
    S = np.vstack([B.matrix, Bc.matrix]).astype(float)
    Sinv = np.linalg.inv(S)
    comps = []
    for c in V.components:
        coef = np.array(c.base) @ Sinv
        bprime = np.mod(coef[B.rank:] @ Bc.matrix.astype(float), 1.0)
        direction = intersection(c.direction, Bc)
        comps.append(AffineTranslate.make(bprime, direction))
    return B, Bc, UnionOfTranslates(comps)


def grid_jaccard(V: UnionOfTranslates, W: UnionOfTranslates, step: float = 1e-2,
                 tol: float = config.MEMBERSHIP_TOL) -> float:
    """Jaccard index of V and W estimated on grids laid over each of them."""
    gV, gW = V.grid(step), W.grid(step)
    a = int(W.contains(gV, tol).sum())
    b = int(V.contains(gW, tol).sum())
    return (a + b) / (len(gV) + len(gW))


# --------------------------------------------------------------------------- difference map

def _mod1(v):
    v = v % 1
    return v - 1 if v >= 1 else v


def phi_m(points) -> list[tuple]:
    """Consecutive differences ``x_i − x_{i+1}`` mod 1.

    Entries may be floats or ``Fraction``; with fractions the result is exact.
    """
    pts = [tuple(p) for p in points]
    if len(pts) < 2:
        raise ArityError("phi_m needs at least two points")
    return [tuple(_mod1(a - b) for a, b in zip(x, y)) for x, y in zip(pts, pts[1:])]


@dataclass
class PhiProbe:
    collision: bool
    witness: tuple | None
    attempts: int

    def to_record(self) -> dict:
        rec = {"collision": self.collision, "attempts": self.attempts}
        if self.witness is not None:
            rec["witness"] = [[list(map(float, p)) for p in tup] for tup in self.witness]
        return rec


def _tup(T) -> tuple:
    return tuple(tuple(float(v) for v in row) for row in T)


def _phi_array(T: np.ndarray) -> np.ndarray:
    """Vectorised phi on tuples of shape (count, m, d)."""
    return np.mod(T[:, :-1, :] - T[:, 1:, :], 1.0)


def _distinct_entries(T: np.ndarray, tol: float) -> np.ndarray:
    m = T.shape[1]
    ok = np.ones(len(T), dtype=bool)
    for i in range(m):
        for j in range(i + 1, m):
            ok &= np.linalg.norm(wrap(T[:, i] - T[:, j]), axis=1) > tol
    return ok


def phi_injectivity_probe(V: UnionOfTranslates, m: int, trials: int = 10000, seed: int = 0,
                          tol: float = config.MEMBERSHIP_TOL) -> PhiProbe:
    """Look for two distinct m-tuples of V (entries pairwise distinct) with equal phi.

    With a positive-dimensional component ``P + B`` the collision
    ``(x_i)`` vs ``(x_i + b)`` with ``b ∈ B`` is constructed directly.
    Otherwise V is a finite point set and tuples are searched exhaustively
    when there are at most ``trials`` pairs, at random otherwise.
    """
    if m < 2:
        raise ArityError("phi probe needs m >= 2")
    rng = np.random.default_rng(seed)
    pos = [c for c in V.components if c.dim > 0]
    if pos:
        c = pos[0]
        G = c.direction.matrix.astype(float)
        xs = np.mod(np.array(c.base) + rng.random((m, c.dim)) @ G, 1.0)
        b = np.mod(rng.uniform(0.1, 0.9) * G[0], 1.0)
        ys = np.mod(xs + b, 1.0)
        same = np.abs(wrap(_phi_array(xs[None]) - _phi_array(ys[None]))).max() <= tol
        distinct = _distinct_entries(xs[None], tol)[0]
        if same and distinct:
            return PhiProbe(True, (_tup(xs), _tup(ys)), 1)
    P = np.array([c.base for c in V.components if c.dim == 0])
    if len(P) < m:
        return PhiProbe(False, None, 0)
    n = len(P)
    if n ** m * n ** m <= trials:
        idx = np.array(list(itertools.product(range(n), repeat=m)))
        T = P[idx]
        keep = _distinct_entries(T, tol)
        idx, T = idx[keep], T[keep]
        F = _phi_array(T).reshape(len(T), -1)
        for i in range(len(T)):
            close = np.abs(wrap(F[i + 1:] - F[i])).max(axis=1) <= tol
            if close.any():
                j = i + 1 + int(np.flatnonzero(close)[0])
                return PhiProbe(True, (_tup(T[i]), _tup(T[j])),
                                len(T) * (len(T) - 1) // 2)
        return PhiProbe(False, None, len(T) * (len(T) - 1) // 2)
    I = rng.integers(0, n, size=(trials, m))
    J = rng.integers(0, n, size=(trials, m))
    TI, TJ = P[I], P[J]
    ok = _distinct_entries(TI, tol) & _distinct_entries(TJ, tol) & np.any(I != J, axis=1)
    same = np.abs(wrap(_phi_array(TI) - _phi_array(TJ))).reshape(trials, -1).max(axis=1) <= tol
    hit = np.flatnonzero(ok & same)
    if len(hit):
        k = int(hit[0])
        return PhiProbe(True, (_tup(TI[k]), _tup(TJ[k])), k + 1)
    return PhiProbe(False, None, trials)
