"""A closed catalogue of explicitly parametrized definable sets in R^{2n}.

Every family is real analytic and definable with restricted analytic
functions plus the real exponential. Complex coordinates are laid out
interleaved: ``z_j = x_{2j} + i x_{2j+1}``.

Whitelisted ``GraphCurve`` functions:

* ``poly``: ``f(t) = sum(c_k t^k)`` on any interval
* ``exp``: ``f(t) = c_0 exp(c_1 t)`` on any interval
* ``sin`` / ``cos``: ``f(t) = c_0 sin(c_1 t)`` (resp. cos) on a bounded interval only
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import config
from .lattice import Lattice
from .subtorus import RationalSubtorus, tangent_projection


class FamilyError(ValueError):
    pass


class UnsupportedFamily(FamilyError):
    pass


GRAPH_FUNCTIONS = ("poly", "exp", "sin", "cos")


@dataclass
class SampleBatch:
    points: np.ndarray
    params: np.ndarray
    member: np.ndarray | None = None
    empty: bool = False

    def __len__(self):
        return len(self.points)


def _vec(v, name) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise FamilyError(f"{name} must be a finite real vector")
    return a


class ParamSet:
    """Base class for the catalogue. Subclasses set ``dim`` and ``param_dim``."""

    dim: int
    param_dim: int
    declared_unbounded: bool

    def evaluate(self, params) -> np.ndarray:
        raise NotImplementedError

    def in_domain(self, params) -> np.ndarray:
        return np.ones(len(params), dtype=bool)

    def param_box(self, R: float) -> list[tuple[float, float]] | None:
        """A parameter box whose image contains ``X ∩ B(0,R)``; None if empty."""
        raise NotImplementedError

    def curves(self) -> list["ParamSet"]:
        """One-parameter subfamilies used for path walks."""
        return [self] if self.param_dim == 1 else []

    def to_record(self) -> dict:
        raise NotImplementedError

    @property
    def domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def anchor(self) -> float:
        """Curve parameter of (approximately) the point closest to the origin."""
        if self.param_dim != 1:
            raise UnsupportedFamily(f"{type(self).__name__} is not a curve")
        p0 = self.evaluate(np.array([[self._mid()]]))[0]
        box = self.param_box(2.0 * float(np.linalg.norm(p0)) + 1.0)
        lo, hi = box[0]
        ts = np.linspace(lo, hi, 4001)
        norms = np.linalg.norm(self.evaluate(ts[:, None]), axis=1)
        return float(ts[int(np.argmin(norms))])

    def _mid(self) -> float:
        lo, hi = self.domain
        if math.isinf(lo) and math.isinf(hi):
            return 0.0
        if math.isinf(lo):
            return min(0.0, hi)
        if math.isinf(hi):
            return max(0.0, lo)
        return 0.5 * (lo + hi)


def _quadratic_interval(o, d, R, lo=-math.inf, hi=math.inf):
    """Parameter interval where ``|o + t d| < R`` intersected with [lo, hi]."""
    a = float(d @ d)
    b = float(o @ d)
    c = float(o @ o) - R * R
    disc = b * b - a * c
    if disc <= 0:
        return None
    r = math.sqrt(disc)
    t0, t1 = max((-b - r) / a, lo), min((-b + r) / a, hi)
    if t0 >= t1:
        return None
    return (t0, t1)


@dataclass
class LinearFlow(ParamSet):
    """The line ``offset + t * direction``, t real."""

    direction: np.ndarray
    offset: np.ndarray | None = None
    param_dim: int = field(default=1, init=False)

    def __post_init__(self):
        self.direction = _vec(self.direction, "direction")
        self.dim = len(self.direction)
        self.offset = np.zeros(self.dim) if self.offset is None else _vec(self.offset, "offset")
        if len(self.offset) != self.dim:
            raise FamilyError("offset and direction lengths differ")
        if self.dim % 2:
            raise FamilyError("ambient dimension must be even")
        if not np.any(self.direction):
            raise FamilyError("direction must be nonzero")
        self.declared_unbounded = True

    def evaluate(self, params):
        t = np.asarray(params, dtype=float).reshape(-1, 1)
        return self.offset + t * self.direction

    def param_box(self, R):
        iv = _quadratic_interval(self.offset, self.direction, R, *self.domain)
        return None if iv is None else [iv]

    def anchor(self):
        t = -float(self.offset @ self.direction) / float(self.direction @ self.direction)
        lo, hi = self.domain
        return min(max(t, lo), hi)

    def to_record(self):
        return {"type": type(self).__name__, "direction": self.direction.tolist(),
                "offset": self.offset.tolist()}


@dataclass
class RayFlow(LinearFlow):
    """The ray ``offset + t * direction``, t >= 0."""

    @property
    def domain(self):
        return (0.0, math.inf)

    def in_domain(self, params):
        return np.asarray(params)[:, 0] >= 0


@dataclass
class ExpSpiral(ParamSet):
    """``(x+iy, ..., x+iy, e^x e^{iy}, ..., e^x e^{iy})`` with s and r copies.

    Parameters ``(x, y)`` range over ``R x [0, 2π]``. With ``slice_y`` set,
    y is frozen and the family becomes the curve ``x -> X(x, slice_y)``.
    """

    s: int
    r: int
    slice_y: float | None = None

    def __post_init__(self):
        if self.s < 0 or self.r < 0 or self.s + self.r < 1:
            raise FamilyError("ExpSpiral needs s, r >= 0 and s + r >= 1")
        if self.slice_y is not None and not 0.0 <= self.slice_y <= 2 * math.pi:
            raise FamilyError("slice_y must lie in [0, 2π]")
        self.dim = 2 * (self.s + self.r)
        self.param_dim = 1 if self.slice_y is not None else 2
        self.declared_unbounded = True

    def _xy(self, params):
        P = np.asarray(params, dtype=float)
        if self.slice_y is not None:
            x = P.reshape(-1)
            return x, np.full_like(x, self.slice_y)
        return P[:, 0], P[:, 1]

    def evaluate(self, params):
        x, y = self._xy(params)
        ex = np.exp(x)
        out = np.empty((len(x), self.dim))
        for j in range(self.s):
            out[:, 2 * j] = x
            out[:, 2 * j + 1] = y
        for j in range(self.s, self.s + self.r):
            out[:, 2 * j] = ex * np.cos(y)
            out[:, 2 * j + 1] = ex * np.sin(y)
        return out

    def in_domain(self, params):
        if self.slice_y is not None:
            return np.ones(len(params), dtype=bool)
        y = np.asarray(params)[:, 1]
        return (y >= 0) & (y <= 2 * math.pi)

    def param_box(self, R):
        hi = math.inf
        lo = -math.inf
        if self.s:
            hi = lo = R / math.sqrt(self.s)
            lo = -lo
        if self.r:
            hi = min(hi, math.log(R / math.sqrt(self.r)))
        if math.isinf(lo):
            # s = 0: points shrink to the origin as x -> -inf
            lo = hi - 40.0
        if lo >= hi:
            return None
        if self.slice_y is not None:
            return [(lo, hi)]
        return [(lo, hi), (0.0, 2 * math.pi)]

    def curves(self):
        if self.slice_y is not None:
            return [self]
        return [ExpSpiral(self.s, self.r, y) for y in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)]

    def to_record(self):
        rec = {"type": "ExpSpiral", "s": self.s, "r": self.r}
        if self.slice_y is not None:
            rec["slice_y"] = self.slice_y
        return rec


@dataclass
class GraphCurve(ParamSet):
    """``offset + t * tangent + f(t) * normal`` for a whitelisted ``f``."""

    function: str
    coeffs: tuple[float, ...]
    tangent: np.ndarray
    normal: np.ndarray
    offset: np.ndarray | None = None
    interval: tuple[float, float] = (-math.inf, math.inf)
    param_dim: int = field(default=1, init=False)

    def __post_init__(self):
        if self.function not in GRAPH_FUNCTIONS:
            raise FamilyError(f"function {self.function!r} is not whitelisted")
        self.coeffs = tuple(float(c) for c in self.coeffs)
        self.tangent = _vec(self.tangent, "tangent")
        self.normal = _vec(self.normal, "normal")
        self.dim = len(self.tangent)
        self.offset = np.zeros(self.dim) if self.offset is None else _vec(self.offset, "offset")
        if len(self.normal) != self.dim or len(self.offset) != self.dim or self.dim % 2:
            raise FamilyError("tangent, normal, offset must share an even length")
        lo, hi = (float(v) for v in self.interval)
        if not lo < hi:
            raise FamilyError("empty domain interval")
        self.interval = (lo, hi)
        if self.function in ("sin", "cos") and (math.isinf(lo) or math.isinf(hi)):
            raise FamilyError("sin/cos are only allowed on a bounded interval")
        if self.function == "exp" and len(self.coeffs) != 2:
            raise FamilyError("exp takes coeffs (c0, c1)")
        if self.function in ("sin", "cos") and len(self.coeffs) != 2:
            raise FamilyError(f"{self.function} takes coeffs (c0, c1)")
        M = np.vstack([self.tangent, self.normal])
        self._sigma = float(np.linalg.svd(M, compute_uv=False)[-1])
        if self._sigma <= 1e-12:
            raise FamilyError("tangent and normal must be linearly independent")
        self.declared_unbounded = math.isinf(lo) or math.isinf(hi)

    @property
    def domain(self):
        return self.interval

    def f(self, t):
        c = self.coeffs
        if self.function == "poly":
            return np.polynomial.polynomial.polyval(t, c) if c else np.zeros_like(t)
        if self.function == "exp":
            return c[0] * np.exp(c[1] * t)
        if self.function == "sin":
            return c[0] * np.sin(c[1] * t)
        return c[0] * np.cos(c[1] * t)

    def evaluate(self, params):
        t = np.asarray(params, dtype=float).reshape(-1)
        return self.offset + t[:, None] * self.tangent + self.f(t)[:, None] * self.normal

    def in_domain(self, params):
        t = np.asarray(params)[:, 0]
        return (t >= self.interval[0]) & (t <= self.interval[1])

    def param_box(self, R):
        # |t*u + f*w| >= sigma_min * |t| bounds the parameter range
        T = (R + float(np.linalg.norm(self.offset))) / self._sigma
        lo, hi = max(-T, self.interval[0]), min(T, self.interval[1])
        c0, c1 = (self.coeffs + (0.0, 0.0))[:2]
        if self.function == "exp" and c0 != 0 and c1 != 0:
            # the same bound applies to |f(t)|
            edge = math.log(T / abs(c0)) / c1
            if c1 > 0:
                hi = min(hi, edge)
            else:
                lo = max(lo, edge)
        if self.function == "poly" and len(self.coeffs) > 1 and lo < hi:
            lo, hi = self._poly_hull(lo, hi, T)
        if lo >= hi:
            return None
        return [(lo, hi)]

    def _poly_hull(self, lo, hi, T):
        """Hull of ``{t in [lo, hi] : |f(t)| <= T}``; its ends are box ends or roots of f = ±T."""
        P = np.polynomial.Polynomial(self.coeffs)
        cands = [lo, hi]
        for shift in (T, -T):
            for r in (P - shift).roots():
                if abs(r.imag) < 1e-9 and lo <= r.real <= hi:
                    cands.append(float(r.real))
        ok = [t for t in cands if abs(P(t)) <= T * (1 + 1e-9)]
        if not ok:
            return lo, lo
        return min(ok), max(ok)

    def to_record(self):
        rec = {"type": "GraphCurve", "function": self.function, "coeffs": list(self.coeffs),
               "tangent": self.tangent.tolist(), "normal": self.normal.tolist(),
               "offset": self.offset.tolist()}
        lo, hi = self.interval
        rec["domain"] = [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi]
        return rec


@dataclass
class BoundedBlob(ParamSet):
    """The open Euclidean ball of given center and radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = _vec(self.center, "center")
        self.dim = len(self.center)
        if self.dim % 2:
            raise FamilyError("ambient dimension must be even")
        if not self.radius > 0:
            raise FamilyError("radius must be positive")
        self.param_dim = self.dim
        self.declared_unbounded = False

    def evaluate(self, params):
        return self.center + self.radius * np.asarray(params, dtype=float)

    def in_domain(self, params):
        return np.linalg.norm(np.asarray(params), axis=1) < 1.0

    def param_box(self, R):
        if np.linalg.norm(self.center) - self.radius >= R:
            return None
        return [(-1.0, 1.0)] * self.dim

    def to_record(self):
        return {"type": "BoundedBlob", "center": self.center.tolist(), "radius": self.radius}


@dataclass
class UnionSet(ParamSet):
    members: list

    def __post_init__(self):
        if not self.members:
            raise FamilyError("UnionSet needs at least one member")
        dims = {m.dim for m in self.members}
        if len(dims) != 1:
            raise FamilyError("UnionSet members live in different dimensions")
        self.dim = dims.pop()
        self.param_dim = max(m.param_dim for m in self.members)
        self.declared_unbounded = any(m.declared_unbounded for m in self.members)

    def curves(self):
        return [c for m in self.members for c in m.curves()]

    def to_record(self):
        return {"type": "UnionSet", "members": [m.to_record() for m in self.members]}


FAMILIES = {c.__name__: c for c in (LinearFlow, RayFlow, ExpSpiral, GraphCurve, BoundedBlob, UnionSet)}


def family_from_record(rec: dict) -> ParamSet:
    """Build a family from a config record; unknown keys are rejected."""
    if not isinstance(rec, dict) or "type" not in rec:
        raise FamilyError("family record needs a 'type'")
    kind = rec["type"]
    allowed = {
        "LinearFlow": {"direction", "offset"},
        "RayFlow": {"direction", "offset"},
        "ExpSpiral": {"s", "r", "slice_y"},
        "GraphCurve": {"function", "coeffs", "tangent", "normal", "offset", "domain"},
        "BoundedBlob": {"center", "radius"},
        "UnionSet": {"members"},
    }
    if kind not in allowed:
        raise FamilyError(f"unknown family type {kind!r}")
    extra = set(rec) - allowed[kind] - {"type"}
    if extra:
        raise FamilyError(f"unknown key {sorted(extra)[0]!r} in {kind} record")
    try:
        if kind in ("LinearFlow", "RayFlow"):
            return FAMILIES[kind](rec["direction"], rec.get("offset"))
        if kind == "ExpSpiral":
            return ExpSpiral(int(rec["s"]), int(rec["r"]), rec.get("slice_y"))
        if kind == "GraphCurve":
            lo, hi = rec.get("domain") or (None, None)
            interval = (-math.inf if lo is None else float(lo), math.inf if hi is None else float(hi))
            return GraphCurve(rec["function"], tuple(rec.get("coeffs", ())), rec["tangent"],
                              rec["normal"], rec.get("offset"), interval)
        if kind == "BoundedBlob":
            return BoundedBlob(rec["center"], float(rec["radius"]))
        return UnionSet([family_from_record(m) for m in rec["members"]])
    except KeyError as exc:
        raise FamilyError(f"missing key {exc.args[0]!r} in {kind} record") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FamilyError):
            raise
        raise FamilyError(f"bad {kind} record: {exc}") from None


# --------------------------------------------------------------------------- sampling

def _halton(d: int, n: int, seed: int) -> np.ndarray:
    return qmc.Halton(d=d, scramble=True, seed=np.random.default_rng(seed)).random(n)


CHUNK = 8192


def _evaluate_chunked(X: ParamSet, params: np.ndarray, max_workers: int) -> np.ndarray:
    # fixed chunk boundaries so the result does not depend on max_workers
    if len(params) <= CHUNK:
        return X.evaluate(params)
    chunks = [params[i:i + CHUNK] for i in range(0, len(params), CHUNK)]
    if max_workers <= 1:
        parts = [X.evaluate(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as ex:
            parts = list(ex.map(X.evaluate, chunks))
    return np.concatenate(parts)


def _sample_shell(X: ParamSet, R0: float, R1: float, budget: int, seed: int,
                  max_workers: int) -> SampleBatch:
    if isinstance(X, UnionSet):
        k = len(X.members)
        shares = [budget // k + (i < budget % k) for i in range(k)]
        batches = [
            _sample_shell(m, R0, R1, max(b, 1), seed + 7919 * i, max_workers)
            for i, (m, b) in enumerate(zip(X.members, shares))
        ]
        pts = [b.points for b in batches]
        params = []
        for b in batches:
            P = np.full((len(b), X.param_dim), np.nan)
            P[:, : b.params.shape[1]] = b.params
            params.append(P)
        member = np.concatenate([np.full(len(b), i) for i, b in enumerate(batches)])
        points = np.concatenate(pts) if pts else np.zeros((0, X.dim))
        return SampleBatch(points, np.concatenate(params), member, empty=len(points) == 0)
    box = X.param_box(R1)
    if box is None:
        return SampleBatch(np.zeros((0, X.dim)), np.zeros((0, X.param_dim)), empty=True)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    U = _halton(len(box), budget, seed)
    params = lo + U * (hi - lo)
    params = params[X.in_domain(params)]
    pts = _evaluate_chunked(X, params, max_workers)
    nrm = np.linalg.norm(pts, axis=1)
    keep = (nrm < R1) & (nrm >= R0)
    return SampleBatch(pts[keep], params[keep], empty=not np.any(keep))


def sample_in_ball(X: ParamSet, R: float, budget: int, seed: int = 0,
                   max_workers: int = 1) -> SampleBatch:
    """Points of ``X ∩ B(0,R)`` from a scrambled Halton sweep of parameters.

    At most ``budget`` parameter draws are made; draws landing outside
    the ball are rejected.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if not R > 0:
        raise ValueError("radius must be positive")
    return _sample_shell(X, 0.0, R, budget, seed, max_workers)


def sample_annulus(X: ParamSet, R0: float, R1: float, budget: int, seed: int = 0,
                   max_workers: int = 1) -> SampleBatch:
    """Points of X with ``R0 <= |p| < R1``."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if not 0 <= R0 < R1:
        raise ValueError("annulus needs 0 <= R0 < R1")
    return _sample_shell(X, R0, R1, budget, seed, max_workers)


def trace_path(X: ParamSet, t0: float, t1: float, max_step: float,
               return_params: bool = False):
    """Polyline along a curve family with consecutive gaps <= ``max_step``.

    Segments that are too long are split uniformly in parameter until every
    gap complies, so the step adapts where the curve speeds up.
    """
    if X.param_dim != 1 or isinstance(X, (UnionSet, BoundedBlob)):
        raise UnsupportedFamily(f"{type(X).__name__} is not a one-parameter curve")
    if not max_step > 0:
        raise ValueError("max_step must be positive")
    if t1 < t0:
        raise ValueError("trace_path needs t0 <= t1")
    if t1 == t0:
        ts = np.array([t0])
    else:
        ts = np.linspace(t0, t1, 2)
        for _ in range(200):
            pts = X.evaluate(ts)
            gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            bad = gaps > max_step
            if not bad.any():
                break
            pieces = np.where(bad, np.ceil(gaps / max_step * 1.05).astype(np.int64), 1)
            # split segment i into pieces[i] equal parts, keeping exact endpoints
            seg = np.repeat(np.arange(len(pieces)), pieces)
            j = np.arange(len(seg)) - np.repeat(np.cumsum(pieces) - pieces, pieces) + 1
            a, b, k = ts[:-1][seg], ts[1:][seg], pieces[seg]
            inner = np.where(j == k, b, a + (b - a) * (j / k))
            ts = np.concatenate([ts[:1], inner])
            if len(ts) > 5 * 10**7:
                raise FamilyError("path refinement exceeded the point budget")
        else:
            raise FamilyError("path refinement did not converge")
    pts = X.evaluate(ts)
    return (pts, ts) if return_params else pts


def projection_unbounded_check(X: ParamSet, B: RationalSubtorus, Bc: RationalSubtorus,
                               R_schedule, budget: int, L: Lattice | None = None,
                               seed: int = 0, factor: float = config.GROWTH_FACTOR):
    """Probe whether ``p_B(X)`` is unbounded along an increasing radius schedule.

    Returns ``(verdict, table)`` where ``table`` lists ``(R, max |p_B(p)|)``.
    The verdict is true iff the maxima grow by at least ``factor`` across
    each of the last three radii.
    """
    Rs = [float(r) for r in R_schedule]
    if len(Rs) < 3 or any(b <= a for a, b in zip(Rs, Rs[1:])):
        raise ValueError("R_schedule must be strictly increasing with at least 3 entries")
    table = []
    for R in Rs:
        batch = sample_in_ball(X, R, budget, seed)
        if len(batch):
            proj = tangent_projection(batch.points, B, Bc, L)
            table.append((R, float(np.linalg.norm(proj, axis=1).max())))
        else:
            table.append((R, 0.0))
    m = [v for _, v in table[-3:]]
    verdict = all(b > 0 and b >= factor * a and b > a for a, b in zip(m, m[1:]))
    return verdict, table
