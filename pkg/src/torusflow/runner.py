"""Scenario configs, experiment dispatch, and report files.

A scenario is a JSON object. Only the keys below are accepted::

    kind            counting | closure | essential_closure | stabilizer |
                    decomposition | phi_probe | pipeline       (required)
    lattice         {"n": int, "preset": "identity" | "random_unimodular" |
                     "random_real", "seed": int} or {"matrix": [[...]]}
    family          a set-family record (see ``definable.family_from_record``)
    union           list of {"base": [...], "generators": [[...]]} records
    R_schedule      increasing radii, at least 3            [5, 10, 20, 40]
    T_max           census height bound                     50
    budget          parameter draws per sampling call       20000
    relation_bound  height bound for relation search        50
    torsion_bound   search bound for finite stabilizers     12
    seed            base seed                               0
    m               arity of the difference map             3
    trials          difference-map probe trials             10000
    witness_points  points checked for weakly special translates   10
    grid_resolution box size for coverage statistics        0.1
    tolerances      {"membership": 1e-6, "reconstruction": 1e-9}
    output          output directory                        "out"
"""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, config
from .closure import (detect_affine_subtorus, equidistribution_stats,
                      essential_closure_estimate, torus_project, weakly_special_witness)
from .counting import counting_bound_report, sigma_census
from .closure import NotOnClosure
from .definable import FamilyError, family_from_record, sample_annulus, sample_in_ball
from .lattice import Lattice, LatticeError, lattice_from_record
from .special import (PreconditionError, UnionOfTranslates, decompose, grid_jaccard,
                      phi_injectivity_probe, recompose, stabilizer, translation_preserves)
from .subtorus import SubtorusError

KINDS = ("counting", "closure", "essential_closure", "stabilizer", "decomposition",
         "phi_probe", "pipeline")
FAMILY_KINDS = ("counting", "closure", "essential_closure", "pipeline")
UNION_KINDS = ("stabilizer", "decomposition", "phi_probe")

DEFAULTS = {
    "R_schedule": [5.0, 10.0, 20.0, 40.0],
    "T_max": 50,
    "budget": 20000,
    "relation_bound": 50,
    "torsion_bound": config.TORSION_BOUND,
    "seed": 0,
    "m": 3,
    "trials": 10000,
    "witness_points": 10,
    "grid_resolution": 0.1,
    "tolerances": {"membership": config.MEMBERSHIP_TOL, "reconstruction": config.RECON_TOL},
    "output": "out",
}

INT_RANGES = {
    "T_max": (0, 10000),
    "budget": (1, 10**7),
    "relation_bound": (1, 1000),
    "torsion_bound": (1, 64),
    "seed": (0, 2**32 - 1),
    "m": (2, 16),
    "trials": (1, 10**7),
    "witness_points": (0, 1000),
}

PLOT_ROWS = 20000


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class ExperimentError(RuntimeError):
    pass


@dataclass
class Scenario:
    kind: str
    lattice: dict
    family: dict | None = None
    union: list | None = None
    R_schedule: list = field(default_factory=lambda: list(DEFAULTS["R_schedule"]))
    T_max: int = DEFAULTS["T_max"]
    budget: int = DEFAULTS["budget"]
    relation_bound: int = DEFAULTS["relation_bound"]
    torsion_bound: int = DEFAULTS["torsion_bound"]
    seed: int = DEFAULTS["seed"]
    m: int = DEFAULTS["m"]
    trials: int = DEFAULTS["trials"]
    witness_points: int = DEFAULTS["witness_points"]
    grid_resolution: float = DEFAULTS["grid_resolution"]
    tolerances: dict = field(default_factory=lambda: dict(DEFAULTS["tolerances"]))
    output: str = DEFAULTS["output"]

    @property
    def membership_tol(self) -> float:
        return float(self.tolerances["membership"])

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "lattice": copy.deepcopy(self.lattice)}
        if self.family is not None:
            d["family"] = copy.deepcopy(self.family)
        if self.union is not None:
            d["union"] = copy.deepcopy(self.union)
        for key in DEFAULTS:
            d[key] = copy.deepcopy(getattr(self, key))
        return d

    def build_lattice(self) -> Lattice:
        return lattice_from_record(self.lattice, int(self.lattice.get("n", 0)))


def _int(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    lo, hi = INT_RANGES[key]
    if not lo <= int(value) <= hi:
        raise ConfigError(key, f"value {value} outside [{lo}, {hi}]")
    return int(value)


def _parse_lattice(raw) -> dict:
    if isinstance(raw, str):
        raise ConfigError("lattice", "give an object such as {\"n\": 1, \"preset\": \"identity\"}")
    if not isinstance(raw, dict):
        raise ConfigError("lattice", "expected an object")
    extra = set(raw) - {"n", "preset", "seed", "matrix"}
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown key in lattice")
    out = dict(raw)
    if "matrix" in raw:
        M = raw["matrix"]
        if "preset" in raw:
            raise ConfigError("lattice", "give either a preset or a matrix")
        try:
            arr = np.array(M, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("matrix", "expected a square list of numbers") from None
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2:
            raise ConfigError("matrix", "expected a 2n x 2n matrix")
        out["n"] = arr.shape[0] // 2
        if raw.get("n", out["n"]) != out["n"]:
            raise ConfigError("n", "does not match the matrix size")
        out["matrix"] = arr.tolist()
    else:
        if raw.get("preset") not in ("identity", "random_unimodular", "random_real"):
            raise ConfigError("preset", f"unknown lattice preset {raw.get('preset')!r}")
        n = raw.get("n")
        if isinstance(n, bool) or not isinstance(n, int) or not 1 <= n <= 4:
            raise ConfigError("n", "complex dimension must be an integer in [1, 4]")
        if raw["preset"] == "identity":
            out.pop("seed", None)
        else:
            out["seed"] = _int("seed", raw.get("seed", 0))
    try:
        lattice_from_record(out, out["n"])
    except LatticeError as exc:
        raise ConfigError("lattice", str(exc)) from None
    return out


def parse_config(text: str, overrides: dict | None = None) -> Scenario:
    """Parse and validate a JSON scenario; defaults are filled in."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"malformed JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    raw = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    allowed = {"kind", "lattice", "family", "union"} | set(DEFAULTS)
    for key in raw:
        if key not in allowed:
            raise ConfigError(key, "unknown key")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"expected one of {', '.join(KINDS)}, got {kind!r}")
    if "lattice" not in raw:
        raise ConfigError("lattice", "missing")
    lattice = _parse_lattice(raw["lattice"])
    dim = 2 * lattice["n"]
    s = Scenario(kind=kind, lattice=lattice)

    if kind in FAMILY_KINDS:
        if "family" not in raw:
            raise ConfigError("family", f"required for kind {kind!r}")
        try:
            fam = family_from_record(raw["family"])
        except FamilyError as exc:
            raise ConfigError("family", str(exc)) from None
        if fam.dim != dim:
            raise ConfigError("family", f"family lives in R^{fam.dim}, lattice in R^{dim}")
        s.family = fam.to_record()
    elif "family" in raw:
        raise ConfigError("family", f"not used by kind {kind!r}")
    if kind in UNION_KINDS:
        if "union" not in raw:
            raise ConfigError("union", f"required for kind {kind!r}")
        recs = raw["union"]
        if not isinstance(recs, list) or not recs:
            raise ConfigError("union", "expected a nonempty list of translates")
        for rec in recs:
            if not isinstance(rec, dict) or set(rec) - {"base", "generators"} or "base" not in rec:
                bad = sorted(set(rec) - {"base", "generators"}) if isinstance(rec, dict) else []
                raise ConfigError(bad[0] if bad else "union", "bad translate record")
            gens = rec.get("generators") or []
            if len(rec["base"]) != dim or any(len(g) != dim for g in gens):
                raise ConfigError("union", f"translate coordinates must have length {dim}")
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v)
                   for g in gens for v in g):
                raise ConfigError("generators", "generator entries must be integers")
        try:
            UnionOfTranslates.from_records(recs, dim)
        except (SubtorusError, ValueError, TypeError) as exc:
            raise ConfigError("union", str(exc)) from None
        # echo the records as given (types normalised) so parsing is idempotent
        s.union = [{"base": [float(v) for v in rec["base"]],
                    "generators": [[int(v) for v in g] for g in rec.get("generators") or []]}
                   for rec in recs]
    elif "union" in raw:
        raise ConfigError("union", f"not used by kind {kind!r}")

    for key in INT_RANGES:
        if key in raw:
            setattr(s, key, _int(key, raw[key]))
    if "R_schedule" in raw:
        Rs = raw["R_schedule"]
        if (not isinstance(Rs, list) or len(Rs) < 3
                or not all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in Rs)
                or any(not math.isfinite(r) or r <= 0 for r in Rs)
                or any(b <= a for a, b in zip(Rs, Rs[1:]))):
            raise ConfigError("R_schedule", "expected >= 3 strictly increasing positive radii")
        s.R_schedule = [float(r) for r in Rs]
    if "grid_resolution" in raw:
        g = raw["grid_resolution"]
        if isinstance(g, bool) or not isinstance(g, (int, float)) or not 0 < g < 1:
            raise ConfigError("grid_resolution", "expected a number in (0, 1)")
        s.grid_resolution = float(g)
    if "tolerances" in raw:
        tol = raw["tolerances"]
        if not isinstance(tol, dict):
            raise ConfigError("tolerances", "expected an object")
        for k, v in tol.items():
            if k not in DEFAULTS["tolerances"]:
                raise ConfigError(k, "unknown key in tolerances")
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v < 1e-2:
                raise ConfigError(k, "tolerance must lie in (0, 0.01)")
        s.tolerances = {**DEFAULTS["tolerances"], **{k: float(v) for k, v in tol.items()}}
    if "output" in raw:
        if not isinstance(raw["output"], str) or not raw["output"]:
            raise ConfigError("output", "expected a nonempty path string")
        s.output = raw["output"]
    return s


def emit_config(s: Scenario) -> str:
    return json.dumps(s.to_dict(), indent=2)


# --------------------------------------------------------------------------- experiments

@dataclass
class Report:
    scenario: dict
    results: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    version: str = __version__
    sidecars: dict = field(default_factory=dict, repr=False)

    def body(self) -> dict:
        return _clean({"version": self.version, "scenario": self.scenario,
                       "results": self.results})

    def body_bytes(self) -> bytes:
        return json.dumps(self.body(), sort_keys=True, allow_nan=False).encode()


def _witness_rows(census):
    return [list(lam) + list(p) for lam, p in census.sorted_items()]


def _run_counting(s, L, X, max_workers, report):
    census = sigma_census(X, L, s.T_max, s.budget, s.seed, max_workers=max_workers)
    if census.empty:
        report.results.append({"experiment": "counting", "empty": True})
        return None
    cr = counting_bound_report(census)
    report.results.append({
        "experiment": "counting",
        "empty": False,
        "discovered": len(census.witnesses),
        "per_height_count": [census.per_height_count[h] for h in range(s.T_max + 1)],
        "report": cr.to_record(),
    })
    report.sidecars["counting.csv"] = (["T", "cumulative", "bound", "pass"],
                                       [[T, c, b, p] for T, c, b, p in cr.rows])
    dim = L.dim
    report.sidecars["witnesses.csv"] = (
        [f"lambda_{i + 1}" for i in range(dim)] + [f"p_{i + 1}" for i in range(dim)],
        _witness_rows(census))
    return cr


def _plot_rows(Y, labels):
    n = min(len(Y), PLOT_ROWS)
    return [list(map(float, Y[i])) + [int(labels[i])] for i in range(n)]


def _plot_sidecar(report, Y, labels):
    dim = Y.shape[1]
    report.sidecars["samples.csv"] = ([f"x_{i + 1}" for i in range(dim)] + ["label"],
                                      _plot_rows(Y, labels))


def _run_closure(s, L, X, max_workers, report):
    R = s.R_schedule[-1]
    batch = sample_in_ball(X, R, s.budget, s.seed, max_workers=max_workers)
    if batch.empty:
        report.results.append({"experiment": "closure", "empty": True, "R": R})
        return None
    Y = torus_project(batch.points, L)
    c = detect_affine_subtorus(Y, s.relation_bound, s.membership_tol, seed=s.seed)
    c.R_at_detection = R
    cov, disc = equidistribution_stats(Y, s.grid_resolution, seed=s.seed) if L.dim <= 6 else (None, None)
    report.results.append({"experiment": "closure", "empty": False, "R": R, "samples": len(Y),
                           "closure": c.to_record(), "coverage": cov, "star_discrepancy": disc})
    _plot_sidecar(report, Y, c.labels)
    return c


def _run_essential(s, L, X, max_workers, report):
    ec = essential_closure_estimate(X, L, s.R_schedule, s.budget, s.relation_bound, s.seed,
                                    s.membership_tol, max_workers=max_workers)
    report.results.append(dict(experiment="essential_closure", **ec.to_record()))
    return ec


def _union(s) -> UnionOfTranslates:
    return UnionOfTranslates.from_records(s.union, 2 * s.lattice["n"])


def _stabilizer_record(V, s):
    st = stabilizer(V, s.torsion_bound, s.membership_tol)
    sound = all(translation_preserves(V, t, tol=s.membership_tol) for t in st.finite_part)
    return st, dict(experiment="stabilizer", **st.to_record(), grid_verified=sound)


def _decomposition_record(V, L, s):
    B, Bc, Vp = decompose(V, L, s.membership_tol)
    J = grid_jaccard(V, recompose(B, Vp), tol=s.membership_tol)
    return {"experiment": "decomposition", "B": B.to_list(), "B_complement": Bc.to_list(),
            "V_prime": Vp.to_records(), "jaccard": J}


def _run_pipeline(s, L, X, max_workers, report):
    _run_counting(s, L, X, max_workers, report)
    ec = _run_essential(s, L, X, max_workers, report)
    final = ec.final
    if final is None:
        report.results.append({"experiment": "pipeline", "closure_found": False})
        return
    R = ec.entries[-1][0]
    # witness points come from the image of X outside B(0, R)
    batch = sample_annulus(X, R, 2.0 * R, s.budget, s.seed + len(ec.entries) - 1,
                           max_workers=max_workers)
    Y = torus_project(batch.points, L)
    rng = np.random.default_rng(s.seed)
    pick = rng.choice(len(Y), size=min(s.witness_points, len(Y)), replace=False) if len(Y) else []
    witnesses = []
    for i in sorted(pick):
        try:
            B_P = weakly_special_witness(final, Y[i], s.membership_tol)
        except NotOnClosure:
            witnesses.append({"point": [float(v) for v in Y[i]], "on_closure": False,
                              "B_P": None, "rank": 0})
            continue
        witnesses.append({"point": [float(v) for v in Y[i]], "on_closure": True,
                          "B_P": None if B_P is None else B_P.to_list(),
                          "rank": 0 if B_P is None else B_P.rank})
    V = UnionOfTranslates(list(final.components), tol=s.membership_tol)
    st, st_rec = _stabilizer_record(V, s)
    report.results.append({"experiment": "witnesses", "closure_R": R, "witnesses": witnesses})
    report.results.append(st_rec)
    if st.connected.rank > 0:
        report.results.append(_decomposition_record(V, L, s))
    report.results.append({
        "experiment": "pipeline",
        "closure_found": True,
        "stabilized": ec.stabilized,
        "full_torus": final.is_full_torus(),
        "closure_dim": final.dim,
    })
    if len(Y):
        _plot_sidecar(report, Y, np.argmin([c.residual(Y) for c in final.components], axis=0))


def run_scenario(s: Scenario, max_workers: int = 1) -> Report:
    """Run one experiment; deterministic given the scenario."""
    start = time.perf_counter()
    report = Report(scenario=s.to_dict())
    try:
        L = s.build_lattice()
        X = family_from_record(s.family) if s.family is not None else None
        if s.kind == "counting":
            _run_counting(s, L, X, max_workers, report)
        elif s.kind == "closure":
            _run_closure(s, L, X, max_workers, report)
        elif s.kind == "essential_closure":
            ec = _run_essential(s, L, X, max_workers, report)
            if ec.final is not None and ec.final.labels is not None:
                R = ec.entries[-1][0]
                i = len(ec.entries) - 1
                R_next = s.R_schedule[i + 1] if i + 1 < len(s.R_schedule) else 2.0 * R
                b = sample_annulus(X, R, R_next, s.budget, s.seed + i, max_workers=max_workers)
                _plot_sidecar(report, torus_project(b.points, L), ec.final.labels)
        elif s.kind == "pipeline":
            _run_pipeline(s, L, X, max_workers, report)
        elif s.kind == "stabilizer":
            report.results.append(_stabilizer_record(_union(s), s)[1])
        elif s.kind == "decomposition":
            report.results.append(_decomposition_record(_union(s), L, s))
        elif s.kind == "phi_probe":
            probe = phi_injectivity_probe(_union(s), s.m, s.trials, s.seed, s.membership_tol)
            report.results.append(dict(experiment="phi_probe", m=s.m, **probe.to_record()))
    except (PreconditionError, FamilyError, SubtorusError, LatticeError, ValueError,
            RuntimeError) as exc:
        raise ExperimentError(f"{s.kind} scenario failed: {exc}") from exc
    report.wall_clock_s = time.perf_counter() - start
    return report


def _clean(obj):
    """Replace non-finite floats so the JSON body stays strict."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def emit_report(r: Report, path) -> list[Path]:
    """Write ``report.json`` and CSV sidecars into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    r.scenario = _clean(r.scenario)
    r.results = _clean(r.results)
    doc = r.body()
    doc["volatile"] = {"wall_clock_s": r.wall_clock_s}
    written = []
    target = out / "report.json"
    target.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    written.append(target)
    for name, (header, rows) in sorted(r.sidecars.items()):
        target = out / name
        with target.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(target)
    return written
