"""Explicit time integration of graphical mean curvature flow.

Supported problems:

* 1D curve shortening flow for a graph, in non-divergence form
  ``u_t = u_xx / (1 + u_x^2)`` or divergence form ``u_t = (arctan u_x)_x``;
* rotationally symmetric graphs in R^n,
  ``u_t = u_rr / (1 + u_r^2) + (n - 1) u_r / r``;
* full graphs over R^2, ``u_t = a^{ij}(Du) D_ij u``;
* closed planar polygons moving by their discrete curvature vector;
* rotationally symmetric graphs over a shrinking ball.

The diffusion matrix is bounded by the identity, so the explicit CFL limit
``dt <= h^2 / (2 d)`` does not depend on the solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from . import geometry
from .mesh import (
    ExactGhosts,
    FarFieldPolicy,
    Grid1D,
    LinearExtrapolate,
    RadialGrid,
    ScalarField,
    TensorGrid2D,
    central_derivatives,
    interior_mask,
    pad,
)

SCHEMES = ("heun", "euler")
FORMS = ("nondivergence", "divergence")


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowConfig:
    t_end: float
    scheme: str = "heun"
    cfl: float = 0.9
    snapshot_stride: int = 0
    policy: FarFieldPolicy = field(default_factory=LinearExtrapolate)
    form: str = "nondivergence"
    snapshot_times: tuple[float, ...] = ()
    monitor_stride: int = 1
    monitor_margin: int = 3

    def __post_init__(self):
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}")
        if self.snapshot_stride < 0 or self.monitor_stride < 0:
            raise ValueError("strides must be non-negative")
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(t) for t in self.snapshot_times)))


MONITOR_COLUMNS = ("t", "max_Du", "max_A", "min_u", "lam_min_vh")


@dataclass
class Trajectory:
    snapshots: list[ScalarField]
    monitor: np.ndarray
    steps: int = 0
    policy: FarFieldPolicy | None = None  # the bound far-field policy used by the run

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1]

    @property
    def grid(self):
        return self.snapshots[0].grid

    def at(self, t: float, tol: float = 1e-12) -> ScalarField:
        for s in self.snapshots:
            if abs(s.time - t) <= tol * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot at t={t}")


# --------------------------------------------------------------------------
# right-hand sides
# --------------------------------------------------------------------------


def velocity(field: ScalarField, policy: FarFieldPolicy, form: str = "nondivergence") -> np.ndarray:
    """u_t at every node for the graph flow appropriate to the field's grid."""
    grid = field.grid
    P = pad(field, policy, 1).values_padded
    if isinstance(grid, Grid1D):
        h = grid.h
        if form == "divergence":
            slopes = np.diff(P) / h
            return np.diff(np.arctan(slopes)) / h
        du, d2u = central_derivatives(P, (h,))
        return d2u[:, 0, 0] / (1.0 + du[:, 0] ** 2)
    if isinstance(grid, RadialGrid):
        h = grid.h
        n = grid.ambient_dim
        du, d2u = central_derivatives(P, (h,))
        ur = du[:, 0]
        urr = d2u[:, 0, 0]
        r = grid.nodes
        out = np.empty_like(ur)
        out[1:] = urr[1:] / (1.0 + ur[1:] ** 2) + (n - 1) * ur[1:] / r[1:]
        out[0] = n * urr[0]
        return out
    if isinstance(grid, TensorGrid2D):
        du, d2u = central_derivatives(P, grid.spacings)
        a = geometry.diffusion_matrix(du)
        return np.einsum("...ij,...ij->...", a, d2u)
    raise TypeError(f"unsupported grid {type(grid).__name__}")


def stable_dt(field: ScalarField, config: FlowConfig) -> float:
    """CFL-limited step, clamped so that t_end and requested snapshot times are hit exactly."""
    grid = field.grid
    h = grid.h
    dt = config.cfl * h * h / (2.0 * grid.dim)
    remaining = config.t_end - field.time
    for ts in config.snapshot_times:
        if ts > field.time * (1 + 1e-14) + 1e-300:
            remaining = min(remaining, ts - field.time)
            break
    return min(dt, remaining)


def _check_finite(values: np.ndarray, step: int | None):
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        node = tuple(int(i) for i in bad[0])
        raise FlowError(f"non-finite update at node {node}" + (f", step {step}" if step is not None else ""))


def step(field: ScalarField, dt: float, config: FlowConfig, policy: FarFieldPolicy | None = None,
         step_index: int | None = None) -> ScalarField:
    policy = policy if policy is not None else config.policy
    u = field.values
    k1 = velocity(field, policy, config.form)
    if config.scheme == "euler":
        new = u + dt * k1
    else:
        pred = u + dt * k1
        _check_finite(pred, step_index)
        k2 = velocity(ScalarField(field.grid, pred, field.time + dt), policy, config.form)
        new = u + 0.5 * dt * (k1 + k2)
    _check_finite(new, step_index)
    return ScalarField(field.grid, new, field.time + dt)


def _require(field: ScalarField, kind: type, dt: float, config: FlowConfig):
    if not isinstance(field.grid, kind):
        raise TypeError(f"expected a field on {kind.__name__}, got {type(field.grid).__name__}")
    limit = config.cfl * field.grid.h ** 2 / (2.0 * field.grid.dim)
    if dt > limit * (1 + 1e-12):
        raise FlowError(f"dt={dt} exceeds the stable step {limit}")


def step_csf(field: ScalarField, dt: float, config: FlowConfig, policy: FarFieldPolicy | None = None) -> ScalarField:
    _require(field, Grid1D, dt, config)
    return step(field, dt, config, policy)


def step_radial(field: ScalarField, dt: float, config: FlowConfig, policy: FarFieldPolicy | None = None) -> ScalarField:
    _require(field, RadialGrid, dt, config)
    return step(field, dt, config, policy)


def step_full2d(field: ScalarField, dt: float, config: FlowConfig, policy: FarFieldPolicy | None = None) -> ScalarField:
    _require(field, TensorGrid2D, dt, config)
    return step(field, dt, config, policy)


def monitor_row(field: ScalarField, policy: FarFieldPolicy, margin: int = 3) -> tuple[float, ...]:
    geo = geometry.geometric_data(field, policy)
    mask = interior_mask(field.grid, margin)
    if not np.any(mask):
        mask = np.ones(field.grid.shape, dtype=bool)
    du = np.sqrt(np.sum(geo.Du ** 2, axis=-1))
    return (
        field.time,
        float(np.max(du[mask])),
        float(np.max(geo.A[mask])),
        float(np.min(field.values)),
        float(np.min(geo.lam_min_vh[mask])),
    )


def evolve(field: ScalarField, config: FlowConfig, datum: Callable | None = None) -> Trajectory:
    """Integrate from ``field`` to ``config.t_end``.

    Snapshots are stored every ``snapshot_stride`` steps (0 = only requested
    ``snapshot_times`` and the end), always including t = 0 and t_end.
    """
    policy = config.policy.bind(field, datum) if not isinstance(config.policy, ExactGhosts) else config.policy
    snaps = [field]
    rows = []
    if config.monitor_stride:
        rows.append(monitor_row(field, policy, config.monitor_margin))
    cur = field
    wanted = [t for t in config.snapshot_times if 0 < t <= config.t_end]
    n = 0
    t_end = config.t_end
    while cur.time < t_end * (1 - 1e-14) and t_end - cur.time > 1e-15:
        dt = stable_dt(cur, config)
        n += 1
        cur = step(cur, dt, config, policy, step_index=n)
        if abs(cur.time - t_end) <= 1e-13 * max(1.0, t_end):
            cur = ScalarField(cur.grid, cur.values, t_end)
        hit = False
        while wanted and cur.time >= wanted[0] * (1 - 1e-13):
            if abs(cur.time - wanted[0]) <= 1e-12 * max(1.0, wanted[0]):
                cur = ScalarField(cur.grid, cur.values, wanted[0])
            wanted.pop(0)
            hit = True
        at_end = cur.time >= t_end * (1 - 1e-14)
        if hit or at_end or (config.snapshot_stride and n % config.snapshot_stride == 0):
            snaps.append(cur)
        if config.monitor_stride and (n % config.monitor_stride == 0 or at_end):
            rows.append(monitor_row(cur, policy, config.monitor_margin))
    monitor = np.array(rows, dtype=float).reshape(-1, len(MONITOR_COLUMNS))
    return Trajectory(snaps, monitor, n, policy)


# --------------------------------------------------------------------------
# closed planar curves
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    points: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("closed curve points must have shape (N, 2)")
        if len(pts) < 16:
            raise ValueError(f"closed curve needs at least 16 points, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("closed curve has non-finite points")
        seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        if np.any(seg == 0):
            raise ValueError("consecutive curve points coincide")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=1)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.segment_lengths))

    @property
    def area(self) -> float:
        x, y = self.points.T
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def is_simple(self) -> bool:
        from shapely.geometry import LinearRing

        return bool(LinearRing(self.points).is_simple)

    def turning_angles(self) -> np.ndarray:
        """Signed exterior angles, positive for left turns (convex when counter-clockwise)."""
        e = np.roll(self.points, -1, axis=0) - self.points
        e_prev = np.roll(e, 1, axis=0)
        cross = e_prev[:, 0] * e[:, 1] - e_prev[:, 1] * e[:, 0]
        dot = np.sum(e_prev * e, axis=1)
        sign = 1.0 if self.area > 0 else -1.0
        return sign * np.arctan2(cross, dot)


def curvature_vector(points: np.ndarray) -> np.ndarray:
    """Curvature vector at each vertex from the circle through it and its two neighbours."""
    b = points
    u = np.roll(points, 1, axis=0) - b
    w = np.roll(points, -1, axis=0) - b
    uu = np.sum(u * u, axis=1)
    ww = np.sum(w * w, axis=1)
    z = u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]
    # circumcentre relative to b is P / (2 z)
    P = np.stack([uu * w[:, 1] - ww * u[:, 1], ww * u[:, 0] - uu * w[:, 0]], axis=1)
    PP = np.sum(P * P, axis=1)
    return (2.0 * z / PP)[:, None] * P


def redistribute(points: np.ndarray, n: int | None = None, method: str = "spline") -> np.ndarray:
    """Resample a closed polyline at uniform arclength, keeping point 0.

    ``method="spline"`` interpolates with a periodic cubic spline in the chord
    length parameter (second-order accurate); ``"linear"`` uses the polyline.
    """
    n = len(points) if n is None else n
    closed = np.vstack([points, points[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
    if method == "linear":
        targets = np.linspace(0.0, s[-1], n, endpoint=False)
        return np.stack([np.interp(targets, s, closed[:, 0]), np.interp(targets, s, closed[:, 1])], axis=1)
    if method != "spline":
        raise ValueError(f"unknown redistribution method {method!r}")
    # chord length agrees with the spline's arclength to third order in the spacing
    spl = CubicSpline(s, closed, bc_type="periodic")
    return spl(np.linspace(0.0, s[-1], n, endpoint=False))


def step_closed_curve(curve: ClosedCurve, dt: float, cfl: float = 1.0) -> ClosedCurve:
    seg = curve.segment_lengths
    if seg.min() < 1e-10 * seg.sum():
        raise FlowError("curve collapsed")
    limit = cfl * seg.min() ** 2 / 2.0
    if dt > limit * (1 + 1e-12):
        raise FlowError(f"dt={dt} exceeds the stable step {limit}")
    pts = curve.points + dt * curvature_vector(curve.points)
    if not np.all(np.isfinite(pts)):
        raise FlowError("non-finite curve update")
    return ClosedCurve(pts, curve.time + dt)


@dataclass
class CurveTrajectory:
    snapshots: list[ClosedCurve]
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([c.time for c in self.snapshots])

    def at(self, t: float, tol: float = 1e-12) -> ClosedCurve:
        for c in self.snapshots:
            if abs(c.time - t) <= tol * max(1.0, abs(t)):
                return c
        raise KeyError(f"no curve snapshot at t={t}")


def evolve_curve(curve: ClosedCurve, t_end: float, cfl: float = 0.9, redistribute_every: int = 10,
                 snapshot_times: tuple[float, ...] = (), stop_below_segment: float | None = None,
                 redistribution: str = "spline") -> CurveTrajectory:
    """Evolve by the discrete curvature vector; stops early if the curve collapses."""
    wanted = sorted(t for t in snapshot_times if 0 < t <= t_end)
    snaps = [curve]
    cur = curve
    n = 0
    while t_end - cur.time > 1e-14 * max(1.0, t_end):
        seg = cur.segment_lengths
        if seg.min() < 1e-10 * seg.sum() or (stop_below_segment and seg.max() < stop_below_segment):
            break
        dt = cfl * seg.min() ** 2 / 2.0
        dt = min(dt, t_end - cur.time)
        if wanted:
            dt = min(dt, wanted[0] - cur.time)
        n += 1
        cur = step_closed_curve(cur, dt, cfl)
        if redistribute_every and n % redistribute_every == 0:
            cur = ClosedCurve(redistribute(cur.points, method=redistribution), cur.time)
        if wanted and abs(cur.time - wanted[0]) <= 1e-12 * max(1.0, wanted[0]):
            cur = ClosedCurve(cur.points, wanted.pop(0))
            snaps.append(cur)
    if snaps[-1] is not cur:
        snaps.append(cur)
    return CurveTrajectory(snaps, n)


def circle(radius: float, n: int = 64, center: tuple[float, float] = (0.0, 0.0)) -> ClosedCurve:
    th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return ClosedCurve(np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=1))


# --------------------------------------------------------------------------
# rotationally symmetric flow over a shrinking ball
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialDomainState:
    radius: float
    field: ScalarField

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("boundary radius must be positive")
        if not isinstance(self.field.grid, RadialGrid):
            raise TypeError("subdomain state needs a radial grid")

    @property
    def time(self) -> float:
        return self.field.time

    @property
    def ambient_dim(self) -> int:
        return self.field.grid.ambient_dim


def sphere_radius(R0: float, n: int, t: float | np.ndarray) -> float | np.ndarray:
    """Radius of a round (n-1)-sphere in R^n moving by mean curvature."""
    return np.sqrt(R0 * R0 - 2.0 * (n - 1) * np.asarray(t, dtype=float))


def extinction_time(R0: float, n: int) -> float:
    return R0 * R0 / (2.0 * (n - 1))


def subdomain_grid(radius: float, n_nodes: int, ambient_dim: int, margin_nodes: int = 2) -> RadialGrid:
    h = radius / (n_nodes - 1 + margin_nodes)
    return RadialGrid(h * (n_nodes - 1), n_nodes, ambient_dim)


def initial_subdomain_state(profile: Callable, R0: float, n_nodes: int, ambient_dim: int,
                            margin_nodes: int = 2) -> RadialDomainState:
    grid = subdomain_grid(R0, n_nodes, ambient_dim, margin_nodes)
    return RadialDomainState(R0, ScalarField(grid, profile(grid.nodes), 0.0))


def remesh(field: ScalarField, grid: RadialGrid) -> ScalarField:
    """Cubic re-interpolation onto a (smaller) radial grid; even symmetry at r = 0."""
    r = field.grid.nodes
    spline = CubicSpline(r, field.values, bc_type=((1, 0.0), "not-a-knot"))
    new_r = np.clip(grid.nodes, 0.0, r[-1])
    return ScalarField(grid, spline(new_r), field.time)


@dataclass
class SubdomainTrajectory:
    states: list[RadialDomainState]
    R0: float

    @property
    def snapshots(self) -> list[ScalarField]:
        return [s.field for s in self.states]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    @property
    def radii(self) -> np.ndarray:
        return np.array([s.radius for s in self.states])


def evolve_radial_subdomain(state: RadialDomainState, config: FlowConfig, margin_nodes: int = 2) -> SubdomainTrajectory:
    """Flow a proper radial graph over the ball B_{R(t)} with R(t) following the sphere law.

    Each step: advance u on the current grid, then move the boundary to R(t+dt)
    and re-interpolate u onto the rescaled grid with the same node count.
    """
    n = state.ambient_dim
    R0 = state.radius
    t_ext = extinction_time(R0, n)
    if config.t_end >= t_ext:
        raise FlowError(f"t_end={config.t_end} is beyond the extinction time {t_ext:.6g} of the boundary sphere")
    n_nodes = state.field.grid.n_nodes
    states = [state]
    cur = state.field
    policy = config.policy
    wanted = [t for t in config.snapshot_times if 0 < t <= config.t_end]
    k = 0
    while config.t_end - cur.time > 1e-14 * max(1.0, config.t_end):
        dt = stable_dt(cur, config)
        k += 1
        bound = policy.bind(cur) if not isinstance(policy, ExactGhosts) else policy
        nxt = step(cur, dt, config, bound, step_index=k)
        t_new = nxt.time
        if abs(t_new - config.t_end) <= 1e-13 * max(1.0, config.t_end):
            t_new = config.t_end
        R_new = float(sphere_radius(R0, n, t_new))
        if R_new <= 0:
            break
        cur = remesh(ScalarField(nxt.grid, nxt.values, t_new), subdomain_grid(R_new, n_nodes, n, margin_nodes))
        hit = False
        while wanted and t_new >= wanted[0] * (1 - 1e-12):
            wanted.pop(0)
            hit = True
        at_end = t_new >= config.t_end
        if hit or at_end or (config.snapshot_stride and k % config.snapshot_stride == 0):
            states.append(RadialDomainState(R_new, cur))
    return SubdomainTrajectory(states, R0)
