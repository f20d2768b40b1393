"""The acceptance battery shared by ``mcflab check`` and the test suite.

Each criterion is a function returning a :class:`CriterionResult`; ``FAST``
lists the quick subset.
"""

from __future__ import annotations

import functools
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import analysis
from .config import ExperimentConfig
from .experiments import doubling_experiment, uniqueness_probe
from .flow import FlowConfig, evolve, evolve_radial_subdomain, initial_subdomain_state, sphere_radius
from .initdata import InitialDatum, boundedcase_constant, builtin, random_lipschitz
from .mesh import ClampedInitialContinuation, ExactGhosts, Grid1D, RadialGrid, TensorGrid2D


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"{tag} [{self.number:2d}] {self.title}: {parts} ({self.seconds:.1f} s)"

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "pass": self.passed, "measured": self.measured,
                "seconds": self.seconds}


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _clock(fn):
    def wrapper(*args, **kwargs) -> CriterionResult:
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --------------------------------------------------------------------------
# 1-3: solver oracles and the exact arctan bound
# --------------------------------------------------------------------------


def grim_reaper_exact(x, t):
    return t - np.log(np.cos(x))


@_clock
def c01_grim_reaper() -> CriterionResult:
    """Translator u = t - ln cos x with exact Dirichlet ghosts: second-order convergence."""
    hs = (0.012, 0.006, 0.003)
    errs = []
    t0 = time.perf_counter()
    for h in hs:
        g = Grid1D.from_spacing(-1.2, 1.2, h)
        f0 = builtin("grim_reaper").on(g)
        cfg = FlowConfig(t_end=0.5, policy=ExactGhosts(grim_reaper_exact), monitor_stride=0)
        u = evolve(f0, cfg).final
        errs.append(float(np.max(np.abs(u.values - grim_reaper_exact(g.nodes, 0.5)))))
    wall = time.perf_counter() - t0
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = all(3.2 <= r <= 4.8 for r in ratios) and errs[-1] <= 5e-4 and wall <= 60.0
    return CriterionResult(1, "grim reaper convergence", ok, {"errors": errs, "ratios": ratios, "wall_s": wall})


@_clock
def c02_cross_oracles() -> CriterionResult:
    """Divergence vs non-divergence CSF, and full 2D vs radial solver."""
    absx = builtin("abs")
    div = []
    for h in (0.04, 0.02):
        g = Grid1D.from_spacing(-8.0, 8.0, h)
        a = evolve(absx.on(g), FlowConfig(t_end=0.1, form="nondivergence", monitor_stride=0)).final
        b = evolve(absx.on(g), FlowConfig(t_end=0.1, form="divergence", monitor_stride=0)).final
        d = float(np.max(np.abs(a.values - b.values)))
        div.append(d / h ** 2)
    par = builtin("paraboloid")
    h = 0.1
    g2 = TensorGrid2D.square(3.0, h)
    u2 = evolve(par.on(g2), FlowConfig(t_end=0.1, monitor_stride=0)).final
    gr = RadialGrid.from_spacing(4.3, h, 2)
    ur = evolve(par.on(gr), FlowConfig(t_end=0.1, monitor_stride=0)).final
    X, Y = g2.mesh()
    rr = np.hypot(X, Y)
    inner = (np.abs(X) <= 1.5 + 1e-12) & (np.abs(Y) <= 1.5 + 1e-12)
    ref = CubicSpline(gr.nodes, ur.values, bc_type=((1, 0.0), "not-a-knot"))(rr)
    rad = float(np.max(np.abs(u2.values - ref)[inner])) / h ** 2
    ok = all(c <= 10.0 for c in div) and rad <= 20.0
    return CriterionResult(2, "cross-oracle equivalence", ok,
                           {"div_vs_nondiv/h^2": div, "2d_vs_radial/h^2": rad})


def arctan_samples(n: int = 100_000, seed: int = 20240101):
    rng = np.random.default_rng(seed)
    v1 = 10.0 ** rng.uniform(-6.0, 6.0, n)
    v2 = 10.0 ** rng.uniform(-6.0, 6.0, n)
    gamma = 1.0 - rng.random(n)  # (0, 1]
    # exact zeros and ties are part of the domain
    v1[:50] = 0.0
    v2[50:100] = 0.0
    v2[100:150] = v1[100:150]
    return v1, v2, gamma


@_clock
def c03_arctan_bound() -> CriterionResult:
    v1, v2, gamma = arctan_samples()
    _, _, holds = analysis.arctan_holder_check(v1, v2, gamma)
    bad = int(np.count_nonzero(~holds))
    return CriterionResult(3, "arctan Holder bound", bad == 0, {"samples": len(v1), "violations": bad})


# --------------------------------------------------------------------------
# 4-5: barrier and scaling
# --------------------------------------------------------------------------


def barrier_case(seed: int, h: float = 0.05, R: float = 10.0, t_end: float = 0.5):
    g = Grid1D.from_spacing(-16.0, 16.0, h)
    d = random_lipschitz(seed, 1.0, g)
    u0 = d(g.nodes)
    x0 = np.array([0.0, float(u0[g.n_nodes // 2])])
    ball = (g.nodes - x0[0]) ** 2 + (u0 - x0[1]) ** 2 <= R * R
    shift = -float(u0[ball].min())
    d = d.shifted(shift)
    x0[1] += shift
    tr = evolve(d.on(g), FlowConfig(t_end=t_end, snapshot_stride=5, monitor_stride=0), datum=d)
    return analysis.barrier_check(tr, 0.0, R, x0, 10.0 * h * h)


@_clock
def c04_barrier() -> CriterionResult:
    reps = [barrier_case(seed) for seed in range(20)]
    worst = min(r.margin for r in reps)
    return CriterionResult(4, "barrier on the parabolic ball", all(r.passed for r in reps),
                           {"worst_margin": worst, "tol": reps[0].tolerance, "seeds": len(reps)})


def scaling_discrepancy(h: float, t: float = 0.1, L: float = 2.0) -> float:
    """sup_{|x|<=L} |u_2(x, t) - u_1(2x, 4t)/2| with u_2 started from u_0(2x)/2 (same spacing)."""
    par = builtin("paraboloid")
    g1 = Grid1D.from_spacing(-4 * L, 4 * L, h)
    g2 = Grid1D.from_spacing(-2 * L, 2 * L, h)
    r1 = evolve(par.on(g1), FlowConfig(t_end=4 * t, policy=ClampedInitialContinuation(), monitor_stride=0),
                datum=par).final
    scaled = InitialDatum("scaled_paraboloid", lambda x: 0.5 * par(2.0 * np.asarray(x)), proper=True, convex=True)
    r2 = evolve(scaled.on(g2), FlowConfig(t_end=t, policy=ClampedInitialContinuation(), monitor_stride=0),
                datum=scaled).final
    # node i of g2 sits at x_i; node 2i of g1 (counted from the centre) sits at 2 x_i
    c1, c2 = g1.n_nodes // 2, g2.n_nodes // 2
    idx = np.arange(-c2, c2 + 1)
    sel = np.abs(g2.nodes) <= L + 1e-12
    diff = r2.values - 0.5 * r1.values[c1 + 2 * idx]
    return float(np.max(np.abs(diff[sel])))


@_clock
def c05_scaling() -> CriterionResult:
    hs = (0.05, 0.025)
    d = [scaling_discrepancy(h) for h in hs]
    ok = all(x <= 20.0 * h * h for x, h in zip(d, hs)) and d[1] < d[0]
    return CriterionResult(5, "parabolic scaling symmetry", ok,
                           {"discrepancy": d, "over_h^2": [x / h ** 2 for x, h in zip(d, hs)]})


# --------------------------------------------------------------------------
# 6-7: uniqueness probe and supersolution gap
# --------------------------------------------------------------------------

PROBE_H = 0.1
PROBE_T_END = 4.0


def probe_config(geometry: str) -> dict:
    return {
        "experiment": "uniqueness_probe",
        "name": f"probe_{geometry}",
        "datum": {"name": "cone", "params": {"a": 1.0}},
        "flow": {"t_end": PROBE_T_END, "snapshot_stride": 10, "monitor_stride": 0},
        "probe": {"geometry": geometry, "R": [4, 8, 16], "policies": ["linear", "frozen_slope"], "h": PROBE_H,
                  "eps": 0.01, "c": 0.0, "max_ratio": 0.25},
    }


_probe_cache: dict = {}


def probe_results(geometry: str) -> dict:
    if geometry not in _probe_cache:
        with tempfile.TemporaryDirectory() as tmp:
            _probe_cache[geometry] = uniqueness_probe(ExperimentConfig.from_dict(probe_config(geometry)), Path(tmp))
    return _probe_cache[geometry]


@_clock
def c06_probe_decay() -> CriterionResult:
    m, ok = {}, True
    for geo in ("1d", "radial"):
        s = probe_results(geo)["summary"]
        m[f"{geo}_d"] = s["d"]
        m[f"{geo}_ratios"] = s["ratios"]
        ok &= all(r <= 0.25 for r in s["ratios"])
    return CriterionResult(6, "uniqueness probe decay", bool(ok), m)


@_clock
def c07_supersolution() -> CriterionResult:
    tol = 50.0 * PROBE_H ** 2
    worst = -math.inf
    for geo in ("1d", "radial"):
        for g in probe_results(geo)["summary"]["supersolution"]:
            worst = max(worst, g["max_W"])
    return CriterionResult(7, "supersolution gap", worst <= tol, {"max_W": worst, "tol": tol})


# --------------------------------------------------------------------------
# 8-9: convexity and Harnack
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=2)
def paraboloid_runs(snapshot_stride: int = 20):
    par = builtin("paraboloid")
    grids = {
        "1d": Grid1D.from_spacing(-4.0, 4.0, 0.05),
        "radial": RadialGrid.from_spacing(4.0, 0.05, 2),
        "2d": TensorGrid2D.square(3.0, 0.1),
    }
    out = {}
    for key, g in grids.items():
        cfg = FlowConfig(t_end=0.5, policy=ClampedInitialContinuation(), snapshot_stride=snapshot_stride,
                         monitor_stride=0)
        out[key] = evolve(par.on(g), cfg, datum=par)
    return out


@_clock
def c08_convexity(runs=None) -> CriterionResult:
    runs = runs or paraboloid_runs()
    m, ok = {}, True
    for key, tr in runs.items():
        h = tr.grid.h
        rep, _ = analysis.condition_c_monitor(tr, 0.0, 10.0 * h * h)
        m[f"{key}_min_lam"] = rep.margin
        ok &= rep.passed
    return CriterionResult(8, "convexity preserved (lam_min_vh >= 0)", bool(ok), m)


@_clock
def c09_harnack(runs=None) -> CriterionResult:
    runs = runs or paraboloid_runs()
    m, ok = {}, True
    for key in ("1d", "radial"):
        tr = runs[key]
        h = tr.grid.h
        rep = analysis.harnack_monitor(tr, 0.05, 50.0 * h * h)
        m[f"{key}_min_Z"] = rep.margin
        m[f"{key}_tol"] = rep.tolerance
        ok &= rep.passed
    return CriterionResult(9, "Harnack quantity", bool(ok), m)


# --------------------------------------------------------------------------
# 10-13
# --------------------------------------------------------------------------


def doubling_config() -> dict:
    return {
        "experiment": "doubling",
        "name": "doubling",
        "datum": {"name": "paraboloid"},
        "doubling": {"heights": [2, 4, 8], "window": 1.0, "times": [0.25], "ds": 0.01, "graph_h": 0.00625,
                     "graph_window": 5.0, "richardson": True},
    }


@_clock
def c10_doubling() -> CriterionResult:
    with tempfile.TemporaryDirectory() as tmp:
        res = doubling_experiment(ExperimentConfig.from_dict(doubling_config()), Path(tmp))
    table = res["summary"]
    col = [row[0] for row in table["distances"]]
    gerr = table["graph_error"][0]
    strict = all(b < a for a, b in zip(col, col[1:]))
    enc = next(r for r in res["reports"] if r["check"] == "enclosure")
    ok = strict and col[-1] <= 2.0 * gerr and enc["pass"]
    return CriterionResult(10, "doubling convergence", ok,
                           {"distances": col, "graph_error": gerr, "enclosure_margin": enc["margin"]})


@_clock
def c11_ecker_huisken() -> CriterionResult:
    absx = builtin("abs")
    vals = []
    for h in (0.05, 0.025, 0.0125):
        g = Grid1D.from_spacing(-4.0, 4.0, h)
        tr = evolve(absx.on(g), FlowConfig(t_end=0.1, snapshot_stride=1, monitor_stride=0))
        vals.append(analysis.ecker_huisken_monitor(tr, 1.0))
    ratios = [vals[1] / vals[0], vals[2] / vals[1]]
    return CriterionResult(11, "curvature decay sqrt(t)|A|", all(r <= 1.2 for r in ratios),
                           {"sup": vals, "ratios": ratios})


@_clock
def c12_bounded_set() -> CriterionResult:
    h = 0.05
    cone = builtin("cone", a=1.0)
    g = Grid1D.from_spacing(-8.0, 8.0, h)
    M = 2.0
    cM = boundedcase_constant(cone, g, M)
    tr = evolve(cone.on(g), FlowConfig(t_end=0.5, snapshot_stride=5, monitor_stride=0), datum=cone)
    rep = analysis.bounded_set_checks(tr, M, cM, 10.0 * h)[0]
    return CriterionResult(12, "bounded-set slope estimate", rep.passed,
                           {"c(M)": cM, "margin": rep.margin, "tol": rep.tolerance})


@_clock
def c13_radial_ball() -> CriterionResult:
    cosh = builtin("cosh")
    R0, n = 3.0, 2
    state = initial_subdomain_state(cosh.profile, R0, 121, n)
    sub = evolve_radial_subdomain(state, FlowConfig(t_end=0.5, snapshot_stride=10, monitor_stride=0))
    law = float(np.max(np.abs(sub.radii - sphere_radius(R0, n, sub.times))))
    series = analysis.properness_monitor(sub, [1.0, 1.5, 2.0])
    rep = analysis.properness_report(series)
    ok = law == 0.0 and rep.passed
    return CriterionResult(13, "radial ball: boundary law and properness", ok,
                           {"radius_error": law, "min_increase": rep.margin, "snapshots": len(sub.states)})


CRITERIA = {
    1: c01_grim_reaper,
    2: c02_cross_oracles,
    3: c03_arctan_bound,
    4: c04_barrier,
    5: c05_scaling,
    6: c06_probe_decay,
    7: c07_supersolution,
    8: c08_convexity,
    9: c09_harnack,
    10: c10_doubling,
    11: c11_ecker_huisken,
    12: c12_bounded_set,
    13: c13_radial_ball,
}
FAST = (1, 3, 5, 8)
SUITES = {"fast": FAST, "full": tuple(CRITERIA)}


def run_suite(name: str, echo=print) -> list[CriterionResult]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    results = []
    for k in SUITES[name]:
        try:
            res = CRITERIA[k]()
        except Exception as exc:  # a crashing criterion is a failing criterion
            res = CriterionResult(k, CRITERIA[k].__name__, False, {"error": f"{type(exc).__name__}: {exc}"})
        results.append(res)
        if echo:
            echo(res.line())
    return results
