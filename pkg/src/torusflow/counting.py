"""Census of the lattice translates of the fundamental cell met by a set X.

A translate is recorded as the lattice vector ``λ`` with ``p ∈ F − λ``,
i.e. ``λ = −k`` where ``p = q + k @ basis`` is the cell reduction of a
witness point ``p ∈ X``. Walking a path of X through adjacent cells moves
``λ`` by a vector of height at most one, which yields one translate per
height between the endpoints.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .definable import ParamSet, sample_in_ball, trace_path
from .lattice import Lattice, height, reduce_many


class StepSizeError(ValueError):
    pass


def crossing_walk(path, L: Lattice) -> list[tuple[tuple[int, ...], int]]:
    """Cell translates visited along a polyline, one entry per cell change.

    Returns ``(λ, index)`` pairs where ``index`` is the first polyline point
    inside ``F − λ`` after the change. Revisits are listed again so that
    consecutive entries are always adjacent cells.
    """
    P = np.atleast_2d(np.asarray(path, dtype=float))
    if len(P) > 1:
        gaps = np.linalg.norm(np.diff(P, axis=0), axis=1)
        worst = float(gaps.max())
        if worst >= L.inradius:
            raise StepSizeError(
                f"polyline step {worst:.4g} is not below the cell inradius {L.inradius:.4g}"
            )
    _, K = reduce_many(P, L)
    change = np.ones(len(K), dtype=bool)
    change[1:] = np.any(K[1:] != K[:-1], axis=1)
    idx = np.flatnonzero(change)
    return [(tuple(int(-a) for a in K[i]), int(i)) for i in idx]


@dataclass
class SigmaSample:
    """Translates ``λ`` with ``X ∩ (F − λ) ≠ ∅``, each with a witness point."""

    witnesses: dict = field(default_factory=dict)
    T_max_explored: int = 0
    empty: bool = False

    @property
    def discovered(self) -> set:
        return set(self.witnesses)

    @property
    def per_height_count(self) -> dict[int, int]:
        c = Counter(height(v) for v in self.witnesses)
        return {h: c.get(h, 0) for h in range(self.T_max_explored + 1)}

    def cumulative(self, T: int) -> int:
        return sum(1 for v in self.witnesses if height(v) <= T)

    def cumulative_table(self) -> np.ndarray:
        counts = np.zeros(self.T_max_explored + 1, dtype=np.int64)
        for v in self.witnesses:
            counts[height(v)] += 1
        return np.cumsum(counts)

    def add(self, lam, point) -> None:
        lam = tuple(int(a) for a in lam)
        p = tuple(float(a) for a in point)
        old = self.witnesses.get(lam)
        if old is None or p < old:
            self.witnesses[lam] = p

    def merge(self, other: "SigmaSample") -> "SigmaSample":
        """Union of two censuses; the smaller witness wins so order is irrelevant."""
        out = SigmaSample(dict(self.witnesses), max(self.T_max_explored, other.T_max_explored))
        for lam, p in other.witnesses.items():
            out.add(lam, p)
        out.empty = not out.witnesses
        return out

    def sorted_items(self):
        return sorted(self.witnesses.items(), key=lambda kv: (height(kv[0]), kv[0]))


def _census_from_points(P: np.ndarray, L: Lattice, T_max: int) -> SigmaSample:
    out = SigmaSample(T_max_explored=T_max)
    if len(P) == 0:
        return out
    _, K = reduce_many(P, L)
    H = np.abs(K).max(axis=1)
    ok = np.flatnonzero(H <= T_max)
    if len(ok) == 0:
        return out
    lam = -K[ok]
    # first occurrence of each translate, then the smallest witness among ties
    order = np.lexsort(tuple(P[ok].T[::-1]))
    lam_sorted = lam[order]
    _, first = np.unique(lam_sorted, axis=0, return_index=True)
    for i in first:
        out.witnesses[tuple(int(a) for a in lam_sorted[i])] = tuple(
            float(a) for a in P[ok][order[i]]
        )
    return out


def _walk_curve(curve: ParamSet, L: Lattice, R_cover: float, T_max: int,
                step_fraction: float = 0.9) -> SigmaSample:
    box = curve.param_box(R_cover)
    if box is None:
        return SigmaSample(T_max_explored=T_max)
    lo, hi = box[0]
    path = trace_path(curve, lo, hi, step_fraction * L.inradius)
    return _census_from_points(path, L, T_max)


def sigma_census(X: ParamSet, L: Lattice, T_max: int, budget: int, seed: int = 0,
                 max_workers: int = 1) -> SigmaSample:
    """Census of ``Σ ∩ Λ`` up to height ``T_max``.

    Combines walks along the curves of X (complete along each path) with a
    low-discrepancy sample of ``X ∩ B(0, R)`` where R is large enough that
    every point outside it has height above ``T_max``.
    """
    if T_max < 0:
        raise ValueError("T_max must be nonnegative")
    if X.dim != L.dim:
        raise ValueError("set and lattice live in different dimensions")
    R_cover = (T_max + 2) * L.diameter_bound
    curves = X.curves()
    if max_workers > 1 and len(curves) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as ex:
            parts = list(ex.map(lambda c: _walk_curve(c, L, R_cover, T_max), curves))
    else:
        parts = [_walk_curve(c, L, R_cover, T_max) for c in curves]
    batch = sample_in_ball(X, R_cover, budget, seed, max_workers=max_workers)
    parts.append(_census_from_points(batch.points, L, T_max))
    out = SigmaSample(T_max_explored=T_max)
    for part in parts:
        out = out.merge(part)
    out.T_max_explored = T_max
    out.empty = not out.witnesses
    return out


@dataclass
class CountingReport:
    rows: list[tuple[int, int, float, bool]]
    T0: int | None

    def to_record(self) -> dict:
        return {
            "T0": self.T0,
            "rows": [{"T": T, "cumulative": c, "bound": b, "pass": p} for T, c, b, p in self.rows],
        }


def counting_bound_report(census: SigmaSample) -> CountingReport:
    """Check ``cumulative(T) >= T/2`` for every explored T."""
    if census.empty or not census.witnesses:
        raise ValueError("counting report needs a nonempty census")
    cum = census.cumulative_table()
    rows = [(T, int(c), T / 2, bool(c >= T / 2)) for T, c in enumerate(cum)]
    T0 = None
    for T in range(len(rows) - 1, -1, -1):
        if not rows[T][3]:
            break
        T0 = T
    return CountingReport(rows, T0)
