"""Experiment drivers: single runs, invariant batteries, uniqueness probes, doubling and sweeps.

Each driver takes a validated :class:`ExperimentConfig` and an output
directory, writes its artifacts there and returns a result dict with a
``reports`` list (serialized :class:`InvariantReport` objects) and a
``summary`` payload.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, store
from .config import ConfigError, ExperimentConfig, build_datum, build_flow, build_grid, tolerance
from .flow import (
    ClosedCurve,
    FlowConfig,
    Trajectory,
    evolve,
    evolve_curve,
    evolve_radial_subdomain,
    initial_subdomain_state,
    redistribute,
    sphere_radius,
    stable_dt,
)
from .initdata import boundedcase_constant, double_at_height
from .mesh import ClampedInitialContinuation, Grid1D

DEFAULT_TOL = {
    "condition_c": {"h2": 10.0},
    "harnack": {"h2": 50.0},
    "barrier": {"h2": 10.0},
    "properness": {"abs": 0.0},
    "bounded_set": {"h1": 10.0},
    "ecker_huisken": {"abs": 0.0},
    "supersolution": {"h2": 50.0},
    "boundary_law": {"abs": 1e-12},
}


def parallel_map(fn, items: list, workers: int = 1) -> list:
    """Map in input order; results do not depend on the worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        futures = [pool.submit(fn, *it) for it in items]
        return [f.result() for f in futures]


def evolve_job(datum_spec: dict, seed: int, grid_spec: dict, flow_spec: dict, overrides: dict | None = None) -> Trajectory:
    """One graph run described entirely by plain data (safe to ship to a worker process)."""
    grid = build_grid(grid_spec)
    datum = build_datum(datum_spec, seed, grid)
    return evolve(datum.on(grid), build_flow(flow_spec, **(overrides or {})), datum=datum)


# --------------------------------------------------------------------------
# checks on a single trajectory
# --------------------------------------------------------------------------


def _dt_of(traj: Trajectory, flow: FlowConfig) -> float:
    return stable_dt(traj.snapshots[0], flow)


def run_checks(traj, checks: list[dict], datum, flow: FlowConfig) -> list[analysis.InvariantReport]:
    grid = traj.snapshots[0].grid
    h = grid.h
    dt = _dt_of(traj, flow) if isinstance(traj, Trajectory) else 0.0
    reports = []
    for i, spec in enumerate(checks):
        name = spec["name"]
        tol = tolerance(spec.get("tolerance"), h, dt, DEFAULT_TOL[name])
        if name == "properness":
            series = analysis.properness_monitor(traj, spec.get("levels", [1.0]))
            reports.append(analysis.properness_report(series, tol))
            continue
        if not isinstance(traj, Trajectory):
            raise ConfigError([(f"/checks/{i}/name", f"check {name!r} is not available on a moving radial ball")])
        if name == "condition_c":
            rep, _ = analysis.condition_c_monitor(traj, spec.get("c", 0.0), tol, traj.policy)
            reports.append(rep)
        elif name == "harnack":
            if not (datum.convex and datum.proper):
                raise ConfigError([("/datum/name", "the Harnack check needs a convex proper datum")])
            reports.append(analysis.harnack_monitor(traj, spec.get("t_start", 0.05), tol, traj.policy))
        elif name == "barrier":
            if "x0" not in spec:
                raise ConfigError([(f"/checks/{i}/x0", "required property is missing")])
            reports.append(analysis.barrier_check(traj, spec.get("C", 0.0), spec.get("R", 10.0), spec["x0"], tol))
        elif name == "bounded_set":
            M = spec.get("M", 2.0)
            cM = boundedcase_constant(datum, grid, M)
            reports.extend(analysis.bounded_set_checks(traj, M, cM, tol, traj.policy))
        elif name == "ecker_huisken":
            val = analysis.ecker_huisken_monitor(traj, spec.get("window", 1.0), traj.policy)
            bound = spec.get("bound", 10.0)
            reports.append(analysis.InvariantReport("ecker_huisken", bound - val, None, None, tol,
                                                    analysis.ANCHORS["ecker_huisken"], f"sup sqrt(t)|A| = {val!r}"))
    return reports


# --------------------------------------------------------------------------
# drivers
# --------------------------------------------------------------------------


def single_run(cfg: ExperimentConfig, out: Path) -> dict:
    raw = cfg.raw
    gspec = raw["grid"]
    flow = build_flow(raw["flow"])
    checks = list(raw.get("checks", []))
    if cfg.experiment == "harnack_suite" and not checks:
        checks = [{"name": "condition_c"}, {"name": "harnack"}]
    if gspec["kind"] == "radial_ball":
        datum = build_datum(raw["datum"], cfg.seed)
        if not datum.radial:
            raise ConfigError([("/datum/name", "a radial ball run needs a rotationally symmetric datum")])
        state = initial_subdomain_state(datum.profile, gspec["R0"], gspec["n_nodes"], gspec.get("ambient_dim", 2),
                                        gspec.get("margin_nodes", 2))
        traj = evolve_radial_subdomain(state, flow, gspec.get("margin_nodes", 2))
        store.write_snapshots(out / "snapshots" / "run.csv", traj.snapshots)
        law = np.max(np.abs(traj.radii - sphere_radius(traj.R0, state.ambient_dim, traj.times)))
        reports = [analysis.InvariantReport("boundary_law", 0.0 - float(law), None, None, DEFAULT_TOL["boundary_law"]["abs"],
                                            "R(t) = sqrt(R0^2 - 2 (n - 1) t)")]
        reports += run_checks(traj, checks, datum, flow)
        summary = {"steps": len(traj.states) - 1, "final_radius": float(traj.radii[-1])}
    else:
        grid = build_grid(gspec)
        datum = build_datum(raw["datum"], cfg.seed, grid)
        if cfg.experiment == "harnack_suite" and flow.snapshot_stride == 0 and not flow.snapshot_times:
            flow = build_flow(raw["flow"], snapshot_stride=10)
        traj = evolve(datum.on(grid), flow, datum=datum)
        store.write_snapshots(out / "snapshots" / "run.csv", traj)
        if len(traj.monitor):
            store.write_monitor(out / "monitor" / "run.csv", traj)
        reports = run_checks(traj, checks, datum, flow)
        summary = {"steps": traj.steps, "snapshots": len(traj.snapshots)}
    rep = [r.to_dict() for r in reports]
    store.write_json(out / "reports" / "checks.json", rep)
    return {"reports": rep, "summary": summary}


def _probe_grid(geometry: str, R: float, h: float, n: int) -> dict:
    if geometry == "radial":
        return {"kind": "radial", "r_max": 2 * R, "h": h, "ambient_dim": n}
    return {"kind": "1d", "x_min": -2 * R, "x_max": 2 * R, "h": h}


def _safe_ratio(a: float, b: float) -> float:
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return a / b


def uniqueness_probe(cfg: ExperimentConfig, out: Path) -> dict:
    """Run two far-field policies on windows [-2R, 2R] and compare on |x| <= R/2, t >= t_start."""
    raw = cfg.raw
    p = raw["probe"]
    Rs = [float(r) for r in p["R"]]
    if any(b <= a for a, b in zip(Rs, Rs[1:])):
        raise ConfigError([("/probe/R", "window widths must be strictly increasing")])
    geometry = p.get("geometry", "1d")
    n = p.get("ambient_dim", 2)
    h = p["h"]
    t_start = p.get("t_start", 0.05)
    flow_spec = dict(raw["flow"])
    if not flow_spec.get("snapshot_stride") and not flow_spec.get("snapshot_times"):
        flow_spec["snapshot_stride"] = 10
    flow_spec.setdefault("monitor_stride", 0)
    jobs = []
    for R in Rs:
        for pol in p["policies"]:
            jobs.append((raw["datum"], cfg.seed, _probe_grid(geometry, R, h, n), {**flow_spec, "policy": pol}))
    trajs = parallel_map(evolve_job, jobs, cfg.workers)
    eps = p.get("eps", 0.01)
    c = p.get("c", 0.0)
    gamma = p.get("gamma")
    d, gaps, hp = [], [], []
    sup_reports = []
    for k, R in enumerate(Rs):
        t1, t2 = trajs[2 * k], trajs[2 * k + 1]
        for j, pol in enumerate(p["policies"]):
            store.write_snapshots(out / "snapshots" / f"R{R:g}_{pol}.csv", (t1, t2)[j])
        inner = np.abs(t1.grid.nodes) <= R / 2 + 1e-12
        dR = 0.0
        for a, b in zip(t1.snapshots, t2.snapshots):
            if a.time >= t_start - 1e-12:
                dR = max(dR, float(np.max(np.abs(a.values - b.values)[inner])))
        d.append(dR)
        g12 = analysis.supersolution_gap(t1, t2, eps, c)
        g21 = analysis.supersolution_gap(t2, t1, eps, c)
        worst = g12 if g12.max_W >= g21.max_W else g21
        gaps.append({"R": R, "max_W": worst.max_W, "T_star": worst.T_star})
        tol = tolerance(None, h, 0.0, DEFAULT_TOL["supersolution"])
        rep = worst.report(tol)
        rep.note = f"R = {R:g}"
        sup_reports.append(rep)
        if gamma is not None:
            series = analysis.hp_functional(t1, t2, gamma, R)
            hp.append({"R": R, "final": float(series.values[-1]), "max": float(np.max(series.values))})
    ratios = [_safe_ratio(b, a) for a, b in zip(d, d[1:])]
    max_ratio = p.get("max_ratio", 0.25)
    decay = analysis.InvariantReport(
        "probe_decay", min(max_ratio - r for r in ratios), None, None, 0.0,
        "u1 = u2 on R^n x (0, T]: interior difference vanishes as the window recedes",
        f"d(R) = {d}, ratios = {ratios}",
    )
    summary = {
        "geometry": geometry, "R": Rs, "policies": p["policies"], "d": d, "ratios": ratios, "max_ratio": max_ratio,
        "supersolution": gaps, "anchors": {"decay": decay.anchor, "supersolution": analysis.ANCHORS["supersolution"]},
    }
    if hp:
        summary["hp_functional"] = {"gamma": gamma, "series": hp, "anchor": analysis.ANCHORS["hp_functional"]}
    reports = [decay.to_dict()] + [r.to_dict() for r in sup_reports]
    store.write_json(out / "reports" / "probe.json", {"summary": summary, "reports": reports})
    return {"reports": reports, "summary": summary}


def _curve_job(points: np.ndarray, t_end: float, times: tuple[float, ...]):
    return evolve_curve(ClosedCurve(points), t_end, snapshot_times=times)


def doubled_curve(sampled, height: float, ds: float) -> ClosedCurve:
    c = double_at_height(sampled, height)
    n = max(16, int(round(c.perimeter / ds)))
    return ClosedCurve(redistribute(c.points, n))


def doubling_experiment(cfg: ExperimentConfig, out: Path) -> dict:
    raw = cfg.raw
    p = raw["doubling"]
    datum = build_datum(raw["datum"], cfg.seed)
    if not (datum.convex and datum.proper):
        raise ConfigError([("/datum/name", "doubling needs a convex proper datum")])
    heights = sorted(float(x) for x in p["heights"])
    times = sorted(float(t) for t in p["times"])
    window = p["window"]
    ds = p.get("ds", 0.01)
    gh = p.get("graph_h", 0.00625)
    gw = p.get("graph_window", 5.0)
    rich = p.get("richardson", True)
    sample_h = p.get("sample_h", 0.001)
    half = gw + 1.0
    while float(datum(np.array([half]))[0]) <= heights[-1] or float(datum(np.array([-half]))[0]) <= heights[-1]:
        half *= 2
    sampled = datum.on(Grid1D.from_spacing(-half, half, sample_h))
    T = times[-1]
    rec = tuple(sorted(set(times) | {T * k / 4 for k in (1, 2, 3)}))

    graph_specs = [gh, gh / 2] if rich else [gh]
    gjobs = [(raw["datum"], cfg.seed, {"kind": "1d", "x_min": -gw, "x_max": gw, "h": hh},
              {"t_end": T, "snapshot_times": list(rec), "monitor_stride": 0}, {"policy": ClampedInitialContinuation()})
             for hh in graph_specs]
    cjobs = []
    for s in ([ds, ds / 2] if rich else [ds]):
        for ht in heights:
            cjobs.append((doubled_curve(sampled, ht, s).points, T, rec))
    results = parallel_map(_job_dispatch, [("graph", j) for j in gjobs] + [("curve", j) for j in cjobs], cfg.workers)
    graphs = results[:len(gjobs)]
    curves = results[len(gjobs):]
    nh = len(heights)
    base = {ht: curves[i] for i, ht in enumerate(heights)}
    fine = {ht: curves[nh + i] for i, ht in enumerate(heights)} if rich else None
    for ht, tr in base.items():
        store.write_csv(out / "curves" / f"height_{ht:g}.csv",
                        [["t", "x", "y"]] + [[repr(c.time), repr(float(x)), repr(float(y))]
                                             for c in tr.snapshots for x, y in c.points])
    store.write_snapshots(out / "snapshots" / "graph.csv", graphs[0])
    table = analysis.doubling_comparison(graphs[0], base, window, times,
                                         graph_fine=graphs[1] if rich else None, curve_fine=fine)
    reports = []
    for j, t in enumerate(times):
        col = table.distances[:, j]
        # margin is the smallest drop d(i) - d(next i); strictly decreasing means margin > 0
        diffs = -np.diff(col)
        reports.append(analysis.InvariantReport(
            "doubling_monotone", float(np.min(diffs)) if len(diffs) else 0.0, None, t, 0.0, analysis.ANCHORS["doubling"],
            f"distances {col.tolist()}"))
        if rich:
            reports.append(analysis.InvariantReport(
                "doubling_last", 2.0 * table.graph_error[j] - col[-1], (nh - 1,), t, 0.0, analysis.ANCHORS["doubling"],
                f"last distance {col[-1]!r} vs graph error {table.graph_error[j]!r}"))
    enc_tol = p.get("enclosure_tolerance", ds * ds)
    reports.append(analysis.enclosure_report(base, enc_tol))
    rep = [r.to_dict() for r in reports]
    summary = table.to_dict()
    summary["enclosure_anchor"] = analysis.ANCHORS["enclosure"]
    store.write_json(out / "reports" / "doubling.json", {"table": summary, "reports": rep})
    return {"reports": rep, "summary": summary}


def _job_dispatch(kind: str, args: tuple):
    return evolve_job(*args) if kind == "graph" else _curve_job(*args)


DRIVERS = {
    "single_run": single_run,
    "harnack_suite": single_run,
    "invariant_suite": single_run,
    "uniqueness_probe": uniqueness_probe,
    "doubling": doubling_experiment,
}
