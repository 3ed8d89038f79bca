"""Real subtori of A = R^{2n}/Λ described by saturated integer sublattices.

All integer data is expressed in lattice coordinates: a subtorus ``B`` is
the image of ``span_R(G)`` where the rows of ``G`` generate a saturated
sublattice of Z^{2n}. Torus points are arrays of lattice coordinates mod 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import config
from . import intlinalg as il
from .lattice import Lattice


class SubtorusError(ValueError):
    pass


class DegenerateInput(SubtorusError):
    pass


class InfiniteIntersection(SubtorusError):
    pass


def wrap(x):
    """Centered representative of ``x`` mod 1, in [-1/2, 1/2)."""
    return x - np.floor(np.asarray(x) + 0.5)


def torus_distance(x, y) -> np.ndarray:
    """Flat torus distance between points given in lattice coordinates."""
    return np.linalg.norm(wrap(np.asarray(x) - np.asarray(y)), axis=-1)


@dataclass(frozen=True)
class RationalSubtorus:
    """A connected real subtorus; ``generators`` is its canonical HNF basis."""

    generators: tuple[tuple[int, ...], ...]
    dim: int

    def __post_init__(self):
        G = [list(r) for r in self.generators]
        if any(len(r) != self.dim for r in G):
            raise SubtorusError("generator length does not match ambient dimension")
        if G and il.row_basis(G) != G:
            raise SubtorusError("generators must be given in Hermite normal form")
        if G and il.saturate_rows(G, self.dim) != G:
            raise SubtorusError("generators do not span a saturated sublattice")

    @property
    def rank(self) -> int:
        return len(self.generators)

    @cached_property
    def matrix(self) -> np.ndarray:
        M = np.array(self.generators, dtype=np.int64).reshape(self.rank, self.dim)
        M.setflags(write=False)
        return M

    @cached_property
    def annihilator(self) -> np.ndarray:
        """Saturated basis of integer covectors vanishing on the subtorus."""
        K = il.right_kernel(self.generators, self.dim) if self.rank else il.identity(self.dim)
        A = np.array(K, dtype=np.int64).reshape(len(K), self.dim)
        A.setflags(write=False)
        return A

    @cached_property
    def annihilator_pinv(self) -> np.ndarray:
        A = self.annihilator.astype(float)
        return np.linalg.pinv(A) if len(A) else np.zeros((self.dim, 0))

    def is_full(self) -> bool:
        return self.rank == self.dim

    def contains_subtorus(self, other: "RationalSubtorus") -> bool:
        if other.rank == 0:
            return True
        return not np.any(self.annihilator @ other.matrix.T)

    def offset_residual(self, d) -> np.ndarray:
        """Distance bound from displacement(s) ``d`` to the subtorus.

        Uses the minimum-norm correction that clears the annihilator
        constraints; this is an upper bound on the true torus distance.
        """
        d = np.atleast_2d(np.asarray(d, dtype=float))
        if len(self.annihilator) == 0:
            return np.zeros(len(d))
        f = wrap(d @ self.annihilator.T.astype(float))
        return np.linalg.norm(f @ self.annihilator_pinv.T, axis=1)

    def contains_point(self, x, tol: float = config.MEMBERSHIP_TOL) -> bool:
        return bool(self.offset_residual(x)[0] <= tol)

    def grid(self, step: float = 1e-2, cap: int = 20000, seed: int = 0) -> np.ndarray:
        """Points ``s @ G`` for ``s`` on a grid of ``[0,1)^k`` (mod 1).

        When the full grid would exceed ``cap`` points a seeded subset of the
        grid nodes is used instead.
        """
        k = self.rank
        if k == 0:
            return np.zeros((1, self.dim))
        m = int(round(1.0 / step))
        total = m ** k
        if total <= cap:
            S = np.array(list(itertools.product(range(m), repeat=k)), dtype=float) * step
        else:
            rng = np.random.default_rng(seed)
            S = rng.integers(0, m, size=(cap, k)).astype(float) * step
        return np.mod(S @ self.matrix.astype(float), 1.0)

    def to_list(self) -> list[list[int]]:
        return [list(r) for r in self.generators]

    @classmethod
    def full(cls, dim: int) -> "RationalSubtorus":
        return cls(tuple(tuple(r) for r in il.identity(dim)), dim)

    @classmethod
    def zero(cls, dim: int) -> "RationalSubtorus":
        return cls((), dim)


def saturate(M, dim: int | None = None) -> RationalSubtorus:
    """Saturate the row lattice of an integer matrix with independent rows."""
    rows = il.as_int_matrix(M)
    if dim is None:
        if not rows:
            raise DegenerateInput("cannot infer dimension of an empty matrix")
        dim = len(rows[0])
    if rows and il.rank(rows) != len(rows):
        raise DegenerateInput("generator rows are rationally dependent")
    if not rows:
        return RationalSubtorus.zero(dim)
    S = il.saturate_rows(rows, dim)
    return RationalSubtorus(tuple(tuple(r) for r in S), dim)


def span_subtorus(M, dim: int) -> RationalSubtorus:
    """Subtorus spanned by arbitrary (possibly dependent) integer rows."""
    rows = il.as_int_matrix(M)
    if not rows:
        return RationalSubtorus.zero(dim)
    basis = il.row_basis(rows)
    if not basis:
        return RationalSubtorus.zero(dim)
    return RationalSubtorus(tuple(tuple(r) for r in il.saturate_rows(basis, dim)), dim)


def kernel_subtorus(A, dim: int) -> RationalSubtorus:
    """Identity component of ``{x : A x ≡ 0 mod 1}``."""
    rows = il.as_int_matrix(A)
    if not rows or not il.row_basis(rows):
        return RationalSubtorus.full(dim)
    K = il.right_kernel(rows, dim)
    return span_subtorus(K, dim)


def intersection(B1: RationalSubtorus, B2: RationalSubtorus) -> RationalSubtorus:
    """Identity component of ``B1 ∩ B2``."""
    A = np.vstack([B1.annihilator, B2.annihilator])
    return kernel_subtorus(A.tolist(), B1.dim)


def intersection_order(B: RationalSubtorus, Bc: RationalSubtorus) -> int:
    """Order of the finite group ``B ∩ B′`` for complementary subtori."""
    if B.dim != Bc.dim or B.rank + Bc.rank != B.dim:
        raise InfiniteIntersection("ranks do not sum to the ambient dimension")
    d = il.det([list(r) for r in B.generators] + [list(r) for r in Bc.generators])
    if d == 0:
        raise InfiniteIntersection("concatenated generators are dependent")
    return abs(d)


def complement(B: RationalSubtorus, L: Lattice | None = None) -> RationalSubtorus:
    """A complementary subtorus spanned by standard basis vectors.

    Among the coordinate subsets that complete ``B`` to full rank, the one
    with the smallest intersection order is chosen, ties broken
    lexicographically. ``L`` is accepted for interface symmetry; the
    construction lives entirely in lattice coordinates.
    """
    dim = B.dim
    if B.rank == 0:
        return RationalSubtorus.full(dim)
    if B.rank == dim:
        return RationalSubtorus.zero(dim)
    best = None
    G = [list(r) for r in B.generators]
    eye = il.identity(dim)
    for idx in itertools.combinations(range(dim), dim - B.rank):
        d = abs(il.det(G + [eye[i] for i in idx]))
        if d and (best is None or d < best[0]):
            best = (d, idx)
            if d == 1:
                break
    assert best is not None
    return saturate([eye[i] for i in best[1]], dim)


@dataclass(frozen=True)
class QuotientMap:
    """Projection A -> A/B expressed in lattice coordinates."""

    subtorus: RationalSubtorus
    completion: tuple[tuple[int, ...], ...]
    inverse: tuple[tuple[int, ...], ...]

    @property
    def quotient_dim(self) -> int:
        return self.subtorus.dim - self.subtorus.rank

    def coordinates(self, x) -> np.ndarray:
        """Real coordinates of ``x`` in the completed basis (no reduction)."""
        return np.asarray(x, dtype=float) @ np.array(self.inverse, dtype=float)

    def __call__(self, x) -> np.ndarray:
        c = self.coordinates(x)
        return np.mod(c[..., self.subtorus.rank:], 1.0)

    def lift(self, y) -> np.ndarray:
        """A preimage of quotient point(s) ``y``."""
        y = np.asarray(y, dtype=float)
        V = np.array(self.completion, dtype=float)
        return np.mod(y @ V[self.subtorus.rank:], 1.0)


def quotient_map(L: Lattice | None, B: RationalSubtorus) -> QuotientMap:
    V = il.unimodular_completion([list(r) for r in B.generators], B.dim)
    Vinv = il.unimodular_inverse(V)
    return QuotientMap(B, tuple(map(tuple, V)), tuple(map(tuple, Vinv)))


def tangent_projection(p, B: RationalSubtorus, Bc: RationalSubtorus,
                       L: Lattice | None = None) -> np.ndarray:
    """Component of ambient point(s) ``p`` along ``span(B)``, split along ``span(B′)``."""
    if B.rank + Bc.rank != B.dim:
        raise SubtorusError("splitting ranks do not sum to the ambient dimension")
    basis = L.basis if L is not None else np.eye(B.dim)
    GB = B.matrix.astype(float) @ basis
    GC = Bc.matrix.astype(float) @ basis
    S = np.vstack([GB, GC]) if B.rank and Bc.rank else (GB if B.rank else GC)
    if abs(np.linalg.det(S)) <= config.INDEPENDENCE_TOL * np.prod(np.linalg.norm(S, axis=1)):
        raise SubtorusError("span(B) and span(B′) do not form a direct sum")
    if B.rank == 0:
        return np.zeros_like(np.asarray(p, dtype=float))
    coef = np.asarray(p, dtype=float) @ np.linalg.inv(S)
    return coef[..., : B.rank] @ GB


@dataclass(frozen=True)
class AffineTranslate:
    """The translate ``base + direction`` of a subtorus."""

    base: tuple[float, ...]
    direction: RationalSubtorus

    @classmethod
    def make(cls, base, direction: RationalSubtorus) -> "AffineTranslate":
        return cls(tuple(float(v) for v in canonical_base(base, direction)), direction)

    @property
    def dim(self) -> int:
        return self.direction.rank

    @property
    def base_array(self) -> np.ndarray:
        return np.array(self.base)

    @property
    def constants(self) -> np.ndarray:
        """Annihilator values at the base point, mod 1."""
        return np.mod(self.direction.annihilator @ self.base_array, 1.0)

    def residual(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.direction.offset_residual(X - self.base_array)

    def contains(self, X, tol: float = config.MEMBERSHIP_TOL) -> np.ndarray:
        return self.residual(X) <= tol

    def contains_translate(self, other: "AffineTranslate",
                           tol: float = config.MEMBERSHIP_TOL) -> bool:
        return (self.direction.contains_subtorus(other.direction)
                and bool(self.contains(other.base_array, tol)[0]))

    def same_as(self, other: "AffineTranslate", tol: float = config.MEMBERSHIP_TOL) -> bool:
        return self.direction == other.direction and bool(self.contains(other.base_array, tol)[0])

    def grid(self, step: float = 1e-2, cap: int = 20000, seed: int = 0) -> np.ndarray:
        return np.mod(self.base_array + self.direction.grid(step, cap, seed), 1.0)

    def to_record(self) -> dict:
        return {"base": [float(v) for v in self.base], "generators": self.direction.to_list()}

    @classmethod
    def from_record(cls, rec: dict, dim: int) -> "AffineTranslate":
        base = np.asarray(rec["base"], dtype=float)
        gens = rec.get("generators") or []
        return cls.make(base, span_subtorus(gens, dim) if gens else RationalSubtorus.zero(dim))


def canonical_base(x, B: RationalSubtorus) -> np.ndarray:
    """A canonical representative of the coset ``x + B``.

    The coset is determined by ``c = A x mod 1`` for the annihilator ``A``;
    the representative is the minimum-norm solution of ``A y = c``.
    """
    x = np.asarray(x, dtype=float)
    A = B.annihilator
    if len(A) == 0:
        return np.zeros(B.dim)
    if len(A) == B.dim:
        return np.mod(x, 1.0) % 1.0
    c = np.mod(A @ x, 1.0)
    c[np.abs(c - 1.0) < 1e-12] = 0.0
    return np.mod(B.annihilator_pinv @ c, 1.0) % 1.0
