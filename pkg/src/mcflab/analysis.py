"""Numerical checks of the inequalities, barriers and functionals used in the uniqueness theory.

Every check returns an :class:`InvariantReport` (or a small table) carrying the
worst signed margin, where it occurred, and the tolerance it was judged
against.  A check passes when ``margin >= -tolerance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from . import geometry
from .flow import ClosedCurve, Trajectory
from .mesh import (
    FarFieldPolicy,
    Grid1D,
    LinearExtrapolate,
    RadialGrid,
    ScalarField,
    TensorGrid2D,
    diff_ops,
    interior_mask,
)

ANCHORS = {
    "arctan_holder": "(arctan v1 - arctan v2)_+ <= 2 (v1 - v2)_+^gamma",
    "hp_functional": "I(t) = int (v1 - v2)_+ phi dx",
    "barrier": "u >= C - 10 t / R on |x - x0|^2 + 2 n t <= R^2 / 2",
    "properness": "u(x, t) -> +infinity as |x| -> infinity, uniformly in t",
    "bounded_i": "(M - u)_+^2 v <= M^2 c(M)",
    "bounded_ii": "|A|^2 (M - u)_+^2 <= max{c(M) M^2, k^-1 (3 + k^-1) M}, k = 1 / (2 M^2 c(M))",
    "bounded_iii": "t |A|^2 (M - u)^2 <= 2 k^-1 (3 + k^-1) M + M^2",
    "condition_c": "v h^i_j >= -c delta^i_j",
    "supersolution": "W = u - ubar - eps (t + eps) u^2 <= 0 on (0, T*], T* = min(T, 1/4, 1/(10 c))",
    "ecker_huisken": "sup |A| <= C t^(-1/2)",
    "harnack": "dH/dt + 2 <grad H, V> + h(V, V) + H / (2t) >= 0",
    "doubling": "lower parts of the doubled compact flows converge to the graph flow",
    "enclosure": "Sigma^i_t is enclosed by Sigma^(i+1)_t",
}


@dataclass
class InvariantReport:
    check: str
    margin: float
    node: tuple | None
    t: float | None
    tolerance: float
    anchor: str
    note: str = ""
    applicable: bool = True
    passed: bool = field(init=False)

    def __post_init__(self):
        self.margin = float(self.margin)
        self.tolerance = float(self.tolerance)
        self.passed = bool(self.margin >= -self.tolerance)

    @property
    def counts(self) -> bool:
        """Whether the report enters an aggregate verdict (its precondition held)."""
        return self.applicable

    def to_dict(self) -> dict:
        out = {
            "check": self.check,
            "margin": self.margin,
            "location": {"node": list(self.node) if self.node is not None else None, "t": self.t},
            "tolerance": self.tolerance,
            "pass": self.passed,
            "anchor": self.anchor,
        }
        if self.note:
            out["note"] = self.note
        if not self.applicable:
            out["applicable"] = False
        return out


def _run_policy(traj, policy: FarFieldPolicy | None) -> FarFieldPolicy | None:
    """Explicit policy if given, else the bound policy recorded by the run."""
    return policy if policy is not None else getattr(traj, "policy", None)


def _worst(margins: np.ndarray) -> tuple[float, tuple]:
    flat = np.where(np.isnan(margins), np.inf, margins)
    idx = np.unravel_index(int(np.argmin(flat)), flat.shape)
    return float(flat[idx]), tuple(int(i) for i in idx)


# --------------------------------------------------------------------------
# arctan Hölder bound
# --------------------------------------------------------------------------


def arctan_holder_check(v1, v2, gamma):
    """Both sides of (arctan v1 - arctan v2)_+ <= 2 (v1 - v2)_+^gamma, judged exactly."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(v1 < 0) or np.any(v2 < 0):
        raise ValueError("the bound is stated for v1, v2 >= 0")
    if np.any((gamma <= 0) | (gamma > 1)):
        raise ValueError("gamma must lie in (0, 1]")
    d = np.maximum(v1 - v2, 0.0)
    # arctan a - arctan b = arctan((a - b) / (1 + a b)) for a, b >= 0
    lhs = np.where(d > 0, np.arctan(d / (1.0 + v1 * v2)), 0.0)
    rhs = 2.0 * np.where(d > 0, d ** gamma, 0.0)
    holds = lhs <= rhs
    if lhs.ndim == 0:
        return float(lhs), float(rhs), bool(holds)
    return lhs, rhs, holds


# --------------------------------------------------------------------------
# cut-off and the Herrero-Pierre functional
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CutoffSpec:
    """psi = 1 on [0, 1], 0 on [2, inf), quintic smoothstep in between (C^2 joints)."""

    def psi(self, rho):
        s = np.clip(np.abs(np.asarray(rho, dtype=float)) - 1.0, 0.0, 1.0)
        return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)

    def dpsi(self, rho):
        rho = np.asarray(rho, dtype=float)
        s = np.clip(np.abs(rho) - 1.0, 0.0, 1.0)
        return -np.sign(rho) * 30.0 * s * s * (1.0 - s) ** 2

    def d2psi(self, rho):
        s = np.clip(np.abs(np.asarray(rho, dtype=float)) - 1.0, 0.0, 1.0)
        return -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def weighted_integral(self, gamma: float) -> float:
        """int_1^2 |psi''|^(1/(1-gamma)) psi^(-gamma/(1-gamma)) drho.

        Near rho = 2 the integrand behaves like (2 - rho)^((1 - 3 gamma)/(1 - gamma)),
        so it is finite exactly for gamma < 1/2.
        """
        if not 0 < gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if gamma >= 0.5:
            return math.inf
        p = 1.0 / (1.0 - gamma)

        def f(r):
            ps = float(self.psi(r))
            if ps <= 0:
                return 0.0
            return abs(float(self.d2psi(r))) ** p * ps ** (-gamma * p)

        val, _ = integrate.quad(f, 1.0, 2.0, limit=200)
        return val


@dataclass
class HPFunctionalSeries:
    gamma: float
    R: float
    times: np.ndarray
    values: np.ndarray
    ambient_dim: int
    symmetry: str

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma, "R": self.R, "times": self.times.tolist(), "values": self.values.tolist(),
            "ambient_dim": self.ambient_dim, "symmetry": self.symmetry, "anchor": ANCHORS["hp_functional"],
        }


def _shared_times(traj1: Trajectory, traj2: Trajectory) -> list[tuple[ScalarField, ScalarField]]:
    if traj1.grid != traj2.grid:
        raise ValueError("trajectories live on different grids")
    t1, t2 = traj1.times, traj2.times
    pairs = []
    for i, t in enumerate(t1):
        j = np.flatnonzero(np.abs(t2 - t) <= 1e-12 * max(1.0, abs(t)))
        if j.size:
            pairs.append((traj1.snapshots[i], traj2.snapshots[int(j[0])]))
    if not pairs:
        raise ValueError("trajectories share no snapshot times")
    return pairs


def hp_functional(traj1: Trajectory, traj2: Trajectory, gamma: float, R: float,
                  cutoff: CutoffSpec | None = None) -> HPFunctionalSeries:
    """I(t) = int (v1 - v2)_+ phi, with v the slope u_x (1D) or u_r (radial)."""
    cutoff = cutoff or CutoffSpec()
    pairs = _shared_times(traj1, traj2)
    grid = traj1.grid
    if isinstance(grid, Grid1D):
        x = grid.nodes
        if 2 * R > max(abs(grid.x_min), abs(grid.x_max)) + 1e-12:
            raise ValueError("cut-off support [-2R, 2R] must lie inside the window")
        n, sym = 1, "1D"
    elif isinstance(grid, RadialGrid):
        x = grid.nodes
        n, sym = grid.ambient_dim, "radial"
    else:
        raise TypeError("the functional is defined for 1D and radial runs")
    times, vals = [], []
    for a, b in pairs:
        va = diff_ops(a, LinearExtrapolate())[0][:, 0]
        vb = diff_ops(b, LinearExtrapolate())[0][:, 0]
        w = np.maximum(va - vb, 0.0)
        if sym == "1D":
            phi = cutoff.psi(x / R)
            integrand = w * phi
        else:
            rho = (x * x + 2.0 * (n - 1) * a.time) / (R * R)
            if np.any((rho < 2) & (x >= x[-1])):
                raise ValueError("cut-off support must lie inside the radial window")
            integrand = w * cutoff.psi(rho) * x ** (n - 1)
        times.append(a.time)
        vals.append(float(integrate.trapezoid(integrand, x)))
    return HPFunctionalSeries(gamma, R, np.array(times), np.array(vals), n, sym)


# --------------------------------------------------------------------------
# barrier and properness
# --------------------------------------------------------------------------


def _horizontal(grid) -> np.ndarray:
    if isinstance(grid, TensorGrid2D):
        X, Y = grid.mesh()
        return np.stack([X, Y], axis=-1)
    return grid.nodes[:, None]


def barrier_check(traj: Trajectory, C: float, R: float, x0: Sequence[float], tol: float = 0.0) -> InvariantReport:
    """Worst value of u - (C - 10 t / R) over the parabolic ball around ``x0``.

    ``x0`` is a point of R^{n+1} (horizontal coordinates then height).
    """
    grid = traj.grid
    n = grid.dim
    x0 = np.asarray(x0, dtype=float)
    X = _horizontal(grid)
    if x0.shape != (X.shape[-1] + 1,):
        raise ValueError(f"x0 must have {X.shape[-1] + 1} components")
    u0 = traj.snapshots[0].values
    dist2 = np.sum((X - x0[:-1]) ** 2, axis=-1) + (u0 - x0[-1]) ** 2
    ball = dist2 <= R * R
    bad = np.argwhere(ball & (u0 < C))
    if bad.size:
        raise ValueError(f"u0 < C at {len(bad)} nodes of the ball, first at {tuple(int(i) for i in bad[0])}")
    worst, where = math.inf, (None, None)
    for s in traj.snapshots:
        d2 = np.sum((X - x0[:-1]) ** 2, axis=-1) + (s.values - x0[-1]) ** 2 + 2.0 * n * s.time
        inside = d2 <= 0.5 * R * R
        if not np.any(inside):
            continue
        m = np.where(inside, s.values - (C - 10.0 * s.time / R), np.inf)
        val, node = _worst(m)
        if val < worst:
            worst, where = val, (node, s.time)
    return InvariantReport("barrier", worst, where[0], where[1], tol, ANCHORS["barrier"])


def barrier_threshold(C: float, R: float, t: float) -> float:
    return C - 10.0 * t / R


@dataclass
class ProperSeries:
    times: np.ndarray
    levels: np.ndarray
    minima: np.ndarray  # shape (n_times, n_levels)

    @property
    def monotone_in_level(self) -> bool:
        return bool(np.all(np.diff(self.minima, axis=1) >= 0))


    @property
    def nondecreasing_in_time(self) -> bool:
        return bool(np.all(np.diff(self.minima, axis=0) >= 0))


def properness_monitor(traj, levels: Sequence[float]) -> ProperSeries:
    """min u over each outer window {|x| >= rho}; snapshots may live on different grids."""
    levels = np.sort(np.asarray(levels, dtype=float))
    mins = np.full((len(traj.snapshots), len(levels)), np.inf)
    for i, s in enumerate(traj.snapshots):
        radius = np.sqrt(np.sum(_horizontal(s.grid) ** 2, axis=-1))
        for j, rho in enumerate(levels):
            sel = radius >= rho - 1e-12
            if np.any(sel):
                mins[i, j] = float(np.min(s.values[sel]))
    return ProperSeries(np.array([s.time for s in traj.snapshots]), levels, mins)


def properness_report(series: ProperSeries, tol: float = 0.0) -> InvariantReport:
    """Margin = smallest increase in time of an outer-window minimum (negative if it ever drops)."""
    if len(series.times) < 2:
        raise ValueError("need at least two snapshots")
    inc = np.diff(series.minima, axis=0)
    val, (k, j) = _worst(inc)
    return InvariantReport("properness", val, (j,), float(series.times[k + 1]), tol, ANCHORS["properness"],
                           f"outer window |x| >= {series.levels[j]:g}")


# --------------------------------------------------------------------------
# bounded-set estimates
# --------------------------------------------------------------------------


def bounded_set_constants(M: float, cM: float) -> dict:
    k = 1.0 / (2.0 * M * M * cM)
    ki = 1.0 / k
    return {
        "k": k,
        "bound_i": M * M * cM,
        "bound_ii": max(cM * M * M, ki * (3.0 + ki) * M),
        "bound_iii": 2.0 * ki * (3.0 + ki) * M + M * M,
    }


def bounded_set_checks(traj: Trajectory, M: float, cM: float, tol: float = 0.0,
                  policy: FarFieldPolicy | None = None, margin_nodes: int = 3) -> list[InvariantReport]:
    """The three bounded-set estimates, evaluated at every snapshot on interior nodes."""
    if not math.isfinite(cM):
        raise ValueError("bounded-set condition violated: c(M) is infinite")
    if np.min(traj.snapshots[0].values) < 0:
        raise ValueError("the estimates assume u >= 0; shift the datum first")
    policy = _run_policy(traj, policy)
    b = bounded_set_constants(M, cM)
    mask = interior_mask(traj.grid, margin_nodes)
    geo0 = geometry.geometric_data(traj.snapshots[0], policy)
    u0 = traj.snapshots[0].values
    ii_applicable = bool(np.all(geo0.A2[mask & (u0 <= M)] <= cM))
    worst = {"i": (math.inf, None, None), "ii": (math.inf, None, None), "iii": (math.inf, None, None)}
    for s in traj.snapshots:
        geo = geometry.geometric_data(s, policy)
        mu = np.maximum(M - s.values, 0.0)
        below = s.values <= M
        cand = {
            "i": b["bound_i"] - mu ** 2 * geo.v,
            "ii": np.where(below, b["bound_ii"] - geo.A2 * mu ** 2, np.inf),
            "iii": np.where(below, b["bound_iii"] - s.time * geo.A2 * mu ** 2, np.inf),
        }
        for key, m in cand.items():
            val, node = _worst(np.where(mask, m, np.inf))
            if val < worst[key][0]:
                worst[key] = (val, node, s.time)
    reports = []
    for key in ("i", "ii", "iii"):
        val, node, t = worst[key]
        note, ok = "", True
        if key == "ii" and not ii_applicable:
            note, ok = "precondition |A|^2(., 0) <= c(M) on {u0 <= M} fails; reported for information", False
        reports.append(InvariantReport(f"bounded_{key}", val, node, t, tol, ANCHORS[f"bounded_{key}"], note, ok))
    return reports


# --------------------------------------------------------------------------
# curvature condition, supersolution gap, curvature decay
# --------------------------------------------------------------------------


@dataclass
class ConditionSeries:
    times: np.ndarray
    lam_min: np.ndarray

    @property
    def nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.lam_min) >= -1e-12))


def condition_c_monitor(traj: Trajectory, c: float, tol: float = 0.0, policy: FarFieldPolicy | None = None,
                        margin_nodes: int = 3) -> tuple[InvariantReport, ConditionSeries]:
    policy = _run_policy(traj, policy)
    mask = interior_mask(traj.grid, margin_nodes)
    lam, nodes = [], []
    for s in traj.snapshots:
        geo = geometry.geometric_data(s, policy)
        val, node = _worst(np.where(mask, geo.lam_min_vh, np.inf))
        lam.append(val)
        nodes.append(node)
    lam = np.array(lam)
    k = int(np.argmin(lam))
    series = ConditionSeries(traj.times, lam)
    note = "minimum nondecreasing in t" if series.nondecreasing else "minimum not monotone in t"
    rep = InvariantReport("condition_c", lam[k] + c, nodes[k], float(traj.times[k]), tol, ANCHORS["condition_c"], note)
    return rep, series


def supersolution_threshold(c: float, T: float) -> float:
    inv = math.inf if c <= 0 else 1.0 / (10.0 * c)
    return min(T, 0.25, inv)


@dataclass
class GapResult:
    max_W: float
    T_star: float
    node: tuple | None
    t: float | None
    shift: float

    def report(self, tol: float) -> InvariantReport:
        return InvariantReport("supersolution", -self.max_W, self.node, self.t, tol, ANCHORS["supersolution"])


def supersolution_gap(traj1: Trajectory, traj2: Trajectory, eps: float, c: float, T: float | None = None,
                      margin_nodes: int = 3) -> GapResult:
    """max of W = u - ubar - eps (t + eps) u^2 over interior nodes and 0 < t <= T*.

    Both runs are lifted by a common constant so that min u, min ubar >= 1;
    the flow commutes with vertical translation.
    """
    pairs = _shared_times(traj1, traj2)
    T = traj1.times[-1] if T is None else T
    Ts = supersolution_threshold(c, T)
    lo = min(float(np.min(traj1.snapshots[0].values)), float(np.min(traj2.snapshots[0].values)))
    shift = max(0.0, 1.0 - lo)
    mask = interior_mask(traj1.grid, margin_nodes)
    best, where = -math.inf, (None, None)
    for a, b in pairs:
        t = a.time
        if not (0 < t <= Ts * (1 + 1e-12)):
            continue
        u = a.values + shift
        ub = b.values + shift
        W = u - ub - eps * (t + eps) * u * u
        W = np.where(mask, W, -np.inf)
        idx = np.unravel_index(int(np.argmax(W)), W.shape)
        if W[idx] > best:
            best, where = float(W[idx]), (tuple(int(i) for i in idx), t)
    if not math.isfinite(best):
        raise ValueError("no shared snapshot in (0, T*]")
    return GapResult(best, Ts, where[0], where[1], shift)


def ecker_huisken_monitor(traj: Trajectory, window: float, policy: FarFieldPolicy | None = None) -> float:
    """sup over t > 0 snapshots of sqrt(t) * max_{|x| <= window} |A|."""
    policy = _run_policy(traj, policy)
    X = _horizontal(traj.grid)
    sel = np.sqrt(np.sum(X ** 2, axis=-1)) <= window + 1e-12
    best = 0.0
    for s in traj.snapshots:
        if s.time <= 0:
            continue
        geo = geometry.geometric_data(s, policy)
        best = max(best, math.sqrt(s.time) * float(np.max(geo.A[sel])))
    return best


def harnack_monitor(traj: Trajectory, t_start: float = 0.05, tol: float = 0.0, policy: FarFieldPolicy | None = None,
                    margin_nodes: int = 3, t_stop: float | None = None) -> InvariantReport:
    """Minimum of the Harnack expression over interior nodes and snapshots with t >= t_start.

    Uses the analytic minimiser over V where b is positive definite, V = 0 elsewhere.
    """
    if t_start <= 0:
        raise ValueError("t_start must be positive")
    policy = _run_policy(traj, policy)
    snaps = traj.snapshots
    mask = interior_mask(traj.grid, margin_nodes)
    worst, where = math.inf, (None, None)
    for k in range(1, len(snaps) - 1):
        t = snaps[k].time
        if t < t_start - 1e-12 or (t_stop is not None and t > t_stop + 1e-12):
            continue
        geo = geometry.geometric_data(snaps[k], policy)
        eig = np.linalg.eigvalsh(geo.b)[..., 0]
        convex = mask & (eig > 0)
        Z0 = geometry.harnack_quantity(snaps[k - 1], snaps[k], snaps[k + 1], np.zeros(geo.Du.shape[-1]), policy, mask)
        Z = Z0
        if np.any(convex):
            Zm = geometry.harnack_quantity(snaps[k - 1], snaps[k], snaps[k + 1], "minimize", policy, convex)
            Z = np.where(convex, Zm, Z0)
        val, node = _worst(np.where(mask, Z, np.inf))
        if val < worst:
            worst, where = val, (node, t)
    if not math.isfinite(worst):
        raise ValueError("no snapshot triple with t >= t_start")
    return InvariantReport("harnack", worst, where[0], where[1], tol, ANCHORS["harnack"])


# --------------------------------------------------------------------------
# doubling construction
# --------------------------------------------------------------------------


class NotGraphicalError(ValueError):
    pass


def lower_arc_profile(curve: ClosedCurve, height: float, x: np.ndarray) -> np.ndarray:
    """Heights of the part of ``curve`` below ``height`` as a graph over ``x`` (cubic interpolation)."""
    p = curve.points
    q = p[p[:, 1] < height]
    if len(q) < 4:
        raise NotGraphicalError(f"height {height}: lower arc has too few points")
    q = q[np.argsort(q[:, 0])]
    if np.any(np.diff(q[:, 0]) <= 0) or q[0, 0] > x.min() or q[-1, 0] < x.max():
        raise NotGraphicalError(f"height {height}: lower arc is not a graph over the window")
    return CubicSpline(q[:, 0], q[:, 1])(x)


def richardson(coarse: np.ndarray, fine: np.ndarray, order: int = 2) -> np.ndarray:
    f = 2.0 ** order
    return (f * np.asarray(fine) - np.asarray(coarse)) / (f - 1.0)


@dataclass
class DoublingTable:
    heights: list[float]
    times: list[float]
    distances: np.ndarray  # (n_heights, n_times)
    graph_error: np.ndarray  # (n_times,) discretization error estimate of the base graph run
    extrapolated: bool

    def decreasing_at(self, j: int) -> bool:
        return bool(np.all(np.diff(self.distances[:, j]) < 0))

    def to_dict(self) -> dict:
        return {
            "heights": list(self.heights), "times": list(self.times),
            "distances": self.distances.tolist(), "graph_error": self.graph_error.tolist(),
            "extrapolated": self.extrapolated, "anchor": ANCHORS["doubling"],
        }


def _graph_profile(traj: Trajectory, t: float, x: np.ndarray) -> np.ndarray:
    s = traj.at(t)
    return CubicSpline(s.grid.nodes, s.values)(x)


def doubling_comparison(graph_traj: Trajectory, curve_trajs: dict, window: float, times: Sequence[float],
                        graph_fine: Trajectory | None = None, curve_fine: dict | None = None,
                        n_window: int = 81) -> DoublingTable:
    """Sup distance between the lower arc of each doubled curve and the graph solution.

    With ``graph_fine`` / ``curve_fine`` (runs at half the spacing) both sides
    are Richardson-extrapolated before comparison; the graph error column is
    then ``sup |graph_h - graph_extrapolated|``.
    """
    x = np.linspace(-window, window, n_window)
    heights = sorted(curve_trajs)
    extrap = graph_fine is not None and curve_fine is not None
    D = np.zeros((len(heights), len(times)))
    gerr = np.full(len(times), np.nan)
    for j, t in enumerate(times):
        g = _graph_profile(graph_traj, t, x)
        if graph_fine is not None:
            g2 = richardson(g, _graph_profile(graph_fine, t, x))
            gerr[j] = float(np.max(np.abs(g - g2)))
            if extrap:
                g = g2
        for i, height in enumerate(heights):
            c = lower_arc_profile(curve_trajs[height].at(t), height, x)
            if extrap:
                c = richardson(c, lower_arc_profile(curve_fine[height].at(t), height, x))
            D[i, j] = float(np.max(np.abs(c - g)))
    return DoublingTable(list(heights), list(times), D, gerr, extrap)


def enclosure_report(curves: dict, tol: float) -> InvariantReport:
    """Signed margin of curve(i) lying inside curve(next height), over all shared snapshots.

    ``curves`` maps height -> CurveTrajectory.  Points strictly inside count
    positive (their distance to the outer curve), outside negative.
    """
    import shapely
    from shapely.geometry import Polygon

    heights = sorted(curves)
    worst, where = math.inf, (None, None)
    for lo, hi in zip(heights[:-1], heights[1:]):
        inner_tr, outer_tr = curves[lo], curves[hi]
        for c in inner_tr.snapshots:
            try:
                outer = outer_tr.at(c.time)
            except KeyError:
                continue
            poly = Polygon(outer.points)
            d = shapely.distance(poly.exterior, shapely.points(c.points))
            inside = shapely.contains_xy(poly, c.points[:, 0], c.points[:, 1])
            signed = np.where(inside | (d == 0), d, -d)
            k = int(np.argmin(signed))
            if signed[k] < worst:
                worst, where = float(signed[k]), ((int(lo), int(hi), k), c.time)
    return InvariantReport("enclosure", worst, where[0], where[1], tol, ANCHORS["enclosure"])

