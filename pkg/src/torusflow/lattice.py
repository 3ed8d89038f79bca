"""Full-rank lattices in R^{2n}, heights, and fundamental-cell reduction.

A point ``p`` of the ambient space is written ``p = t @ basis`` where the
rows of ``basis`` are the lattice generators; ``t`` are its lattice
coordinates. The fundamental cell is the half-open parallelepiped
``{t @ basis : t in [0, 1)^{2n}}``, so reduction is a function.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import config


class LatticeError(ValueError):
    pass


def height(v) -> int:
    """Max-norm of the integer coefficient vector."""
    return max((abs(int(a)) for a in v), default=0)


@dataclass(frozen=True, eq=False)
class Lattice:
    """A lattice with a distinguished ordered basis (rows of ``basis``)."""

    basis: np.ndarray
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        B = np.array(self.basis, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] % 2:
            raise LatticeError(f"basis must be 2n x 2n, got shape {B.shape}")
        if not np.all(np.isfinite(B)):
            raise LatticeError("basis has non-finite entries")
        d = float(np.linalg.det(B))
        scale = float(np.prod(np.linalg.norm(B, axis=1)))
        if not abs(d) > config.INDEPENDENCE_TOL * scale:
            raise LatticeError("basis vectors are linearly dependent")
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "basis_matrix_det", d)

    @property
    def dim(self) -> int:
        """Ambient real dimension 2n."""
        return self.basis.shape[0]

    @property
    def dimension_n(self) -> int:
        return self.dim // 2

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = np.linalg.inv(self.basis)
        inv.setflags(write=False)
        return inv

    @cached_property
    def inradius(self) -> float:
        """Half the smallest distance between opposite faces of the cell."""
        # face i has normal given by column i of basis^{-1}
        widths = 1.0 / np.linalg.norm(self.inverse, axis=0)
        return 0.5 * float(widths.min())

    @cached_property
    def diameter_bound(self) -> float:
        return float(np.linalg.norm(self.basis, axis=1).sum())

    def __eq__(self, other):
        return isinstance(other, Lattice) and np.array_equal(self.basis, other.basis)

    def __hash__(self):
        return hash(self.basis.tobytes())

    def __repr__(self):
        return f"Lattice(name={self.name!r}, dim={self.dim})"

    def to_ambient(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=float) @ self.basis

    @classmethod
    def identity(cls, n: int) -> "Lattice":
        return cls(np.eye(2 * n), name="identity")

    @classmethod
    def random_unimodular(cls, n: int, seed: int, steps: int | None = None) -> "Lattice":
        """Z^{2n} with a skewed basis: a seeded product of elementary moves."""
        dim = 2 * n
        rng = np.random.default_rng(seed)
        steps = 3 * dim if steps is None else steps
        U = np.eye(dim, dtype=np.int64)
        for _ in range(steps):
            i, j = rng.choice(dim, size=2, replace=False)
            c = int(rng.choice([-1, 1]))
            U[i] += c * U[j]
            if np.abs(U).max() > 4:
                U[i] -= c * U[j]
        perm = rng.permutation(dim)
        return cls(U[perm].astype(float), name=f"random_unimodular({seed})")

    @classmethod
    def random_real(cls, n: int, seed: int) -> "Lattice":
        """A seeded perturbation of the identity with condition number < 10."""
        dim = 2 * n
        rng = np.random.default_rng(seed)
        while True:
            B = np.eye(dim) + 0.35 * rng.standard_normal((dim, dim))
            if np.linalg.cond(B) < 10:
                return cls(B, name=f"random_real({seed})")


def lattice_coords(p, L: Lattice) -> np.ndarray:
    """Solve ``p = t @ basis`` for ``t``. Works row-wise on 2-d input."""
    return np.asarray(p, dtype=float) @ L.inverse


SNAP = 1e-9


def _snap(t):
    # lattice points land on an integer corner rather than one cell off
    r = np.round(t)
    return np.where(np.abs(t - r) < SNAP, r, t)


def reduce_to_fundamental(p, L: Lattice) -> tuple[np.ndarray, tuple[int, ...]]:
    """Split ``p = q + k @ basis`` with ``q`` in the fundamental cell.

    Returns ``(q, k)`` where ``k`` is the integer coefficient tuple.
    """
    t = _snap(lattice_coords(p, L))
    k = np.floor(t)
    q = np.asarray(p, dtype=float) - k @ L.basis
    return q, tuple(int(a) for a in k)


def reduce_many(P, L: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised reduction: returns fractional coords and integer cells."""
    t = _snap(lattice_coords(P, L))
    k = np.floor(t)
    return t - k, k.astype(np.int64)


def enumerate_height_ball(L: Lattice | int, T: int):
    """Yield every integer coefficient vector of height <= T exactly once."""
    dim = L.dim if isinstance(L, Lattice) else int(L)
    if T < 0:
        raise ValueError("T must be nonnegative")
    if (2 * T + 1) ** dim > config.ENUMERATION_LIMIT:
        raise LatticeError(
            f"height ball of radius {T} in dimension {dim} exceeds "
            f"{config.ENUMERATION_LIMIT} vectors"
        )
    yield from itertools.product(range(-T, T + 1), repeat=dim)


def lattice_from_record(rec: dict, n: int) -> Lattice:
    """Build a lattice from a config record (see ``runner``)."""
    preset = rec.get("preset")
    if "matrix" in rec:
        return Lattice(np.array(rec["matrix"], dtype=float), name="matrix")
    if preset == "identity":
        return Lattice.identity(n)
    if preset == "random_unimodular":
        return Lattice.random_unimodular(n, int(rec.get("seed", 0)))
    if preset == "random_real":
        return Lattice.random_real(n, int(rec.get("seed", 0)))
    raise LatticeError(f"unknown lattice preset {preset!r}")
