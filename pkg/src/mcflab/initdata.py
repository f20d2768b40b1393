"""Initial data library, bounded-set constants c(M) and the doubling construction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .flow import ClosedCurve
from .mesh import Grid, Grid1D, RadialGrid, ScalarField, TensorGrid2D, diff_ops, LinearExtrapolate


class DatumError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class InitialDatum:
    """A closed-form (or sampled) initial height with its declared hypothesis class.

    ``profile`` is a function of one coordinate: x for 1D data, r = |x| for
    rotationally symmetric data.  Non-radial data are 1D only, except lines,
    which extend to 2D as ``a*x + b``.
    """

    name: str
    profile: Callable[[np.ndarray], np.ndarray]
    radial: bool = True
    proper: bool = False
    convex: bool = False
    lipschitz: float | None = None
    params: dict = field(default_factory=dict)
    plane: Callable | None = None

    def __call__(self, *coords):
        if len(coords) == 1:
            return self.profile(np.asarray(coords[0], dtype=float))
        if len(coords) == 2:
            if self.plane is not None:
                return self.plane(*coords)
            if not self.radial:
                raise DatumError(f"datum {self.name!r} is not rotationally symmetric")
            return self.profile(np.hypot(*coords))
        raise DatumError("data are defined on one or two coordinates")

    def on(self, grid: Grid) -> ScalarField:
        if isinstance(grid, RadialGrid) and not self.radial:
            raise DatumError(f"datum {self.name!r} is not rotationally symmetric")
        from .mesh import sample

        return sample(self, grid)

    def shifted(self, c: float) -> "InitialDatum":
        prof = self.profile
        plane = self.plane
        return InitialDatum(
            self.name, lambda s: prof(s) + c, self.radial, self.proper, self.convex, self.lipschitz,
            {**self.params, "shift": self.params.get("shift", 0.0) + c},
            (lambda x, y: plane(x, y) + c) if plane is not None else None,
        )


def _oscillatory(x):
    # bounded height, slope x*cos(x^2/2) growing linearly
    return np.sin(0.5 * np.asarray(x) ** 2)


def builtin(name: str, **params) -> InitialDatum:
    """Named initial data: line, abs, cone, paraboloid, cosh, grim_reaper, log_well, oscillatory."""
    if name == "line":
        a = float(params.get("a", 0.0))
        b = float(params.get("b", 0.0))
        return InitialDatum(
            "line", lambda x: a * x + b, radial=(a == 0.0), convex=True, lipschitz=abs(a),
            params={"a": a, "b": b}, plane=lambda x, y: a * x + b + 0.0 * y,
        )
    if name == "abs":
        return InitialDatum("abs", np.abs, proper=True, convex=True, lipschitz=1.0)
    if name == "cone":
        a = float(params.get("a", 1.0))
        if a <= 0:
            raise DatumError("cone slope must be positive")
        return InitialDatum("cone", lambda x: a * np.abs(x), proper=True, convex=True, lipschitz=a, params={"a": a})
    if name == "paraboloid":
        return InitialDatum("paraboloid", lambda x: 0.5 * np.asarray(x) ** 2, proper=True, convex=True)
    if name == "cosh":
        return InitialDatum("cosh", np.cosh, proper=True, convex=True)
    if name == "grim_reaper":
        return InitialDatum("grim_reaper", lambda x: -np.log(np.cos(x)), radial=False, proper=True, convex=True)
    if name == "log_well":
        R0 = float(params.get("R0", 1.0))
        return InitialDatum(
            "log_well", lambda r: -np.log1p(-(np.asarray(r) / R0) ** 2), proper=True, convex=True, params={"R0": R0}
        )
    if name == "oscillatory":
        return InitialDatum("oscillatory", _oscillatory, radial=False)
    raise DatumError(f"unknown datum {name!r}")


BUILTIN_NAMES = ("line", "abs", "cone", "paraboloid", "cosh", "grim_reaper", "log_well", "oscillatory")


def random_lipschitz(seed: int, slope_bound: float, grid: Grid1D) -> InitialDatum:
    """Seeded random walk with increments in [-L h, L h], interpolated linearly."""
    if slope_bound <= 0:
        raise DatumError("slope bound must be positive")
    rng = np.random.default_rng(seed)
    h = grid.h
    inc = rng.uniform(-slope_bound * h, slope_bound * h, size=grid.n_nodes - 1)
    values = np.concatenate([[0.0], np.cumsum(inc)])
    nodes = grid.nodes

    def profile(x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, nodes, values)
        # linear continuation outside the sampled window
        left = x < nodes[0]
        right = x > nodes[-1]
        out = np.where(left, values[0] + (x - nodes[0]) * (values[1] - values[0]) / h, out)
        out = np.where(right, values[-1] + (x - nodes[-1]) * (values[-1] - values[-2]) / h, out)
        return out

    return InitialDatum("random_lipschitz", profile, radial=False, lipschitz=slope_bound,
                        params={"seed": seed, "L": slope_bound})


def measured_lipschitz(field: ScalarField) -> float:
    grid = field.grid
    if isinstance(grid, TensorGrid2D):
        sx = np.abs(np.diff(field.values, axis=0)) / grid.hx
        sy = np.abs(np.diff(field.values, axis=1)) / grid.hy
        return float(max(sx.max(), sy.max()))
    return float(np.max(np.abs(np.diff(field.values))) / grid.h)


def _sup_v_below(field: ScalarField, M: float) -> tuple[float, bool]:
    """sup of v0 over sampled nodes with u0 < M, plus whether the set touches the window edge."""
    u = np.asarray(field.values)
    inside = u < M
    if not np.any(inside):
        raise DatumError(f"the set {{u0 < {M}}} is empty on this grid")
    Du, _ = diff_ops(field, LinearExtrapolate())
    v = np.sqrt(1.0 + np.sum(Du ** 2, axis=-1))
    best = float(np.max(v[inside]))
    if isinstance(field.grid, (Grid1D, RadialGrid)):
        # one-sided slopes on segments leaving the set
        s = np.abs(np.diff(u)) / field.grid.h
        edge = inside[:-1] != inside[1:]
        if np.any(edge):
            best = max(best, float(np.max(np.sqrt(1.0 + s[edge] ** 2))))
        touches = bool(inside[-1]) or (not isinstance(field.grid, RadialGrid) and bool(inside[0]))
    else:
        touches = bool(inside[0, :].any() or inside[-1, :].any() or inside[:, 0].any() or inside[:, -1].any())
    return best, touches


def boundedcase_constant(datum: InitialDatum, grid: Grid, M: float, cap: float = 1e3, max_doublings: int = 12) -> float:
    """Measured c(M) = sup{v0 : u0 < M}; ``math.inf`` when it keeps growing past ``cap``.

    If the set reaches the edge of the window the window is doubled (same
    spacing) until the supremum stabilises; runaway growth returns infinity.
    A sampled slope never exceeds (max u0 - min u0) / h, so ``cap`` must sit
    below that for divergence to be detectable on the given spacing.
    """
    c, touches = _sup_v_below(datum.on(grid), M)
    g = grid
    for _ in range(max_doublings):
        if c > cap:
            return math.inf
        if not touches:
            return c
        g = _doubled(g)
        c2, touches = _sup_v_below(datum.on(g), M)
        if c2 <= c * (1 + 1e-9):
            return max(c, c2)
        c = c2
    return math.inf if c > cap or touches else c


def _doubled(grid: Grid) -> Grid:
    if isinstance(grid, Grid1D):
        mid = 0.5 * (grid.x_min + grid.x_max)
        half = grid.x_max - grid.x_min
        return Grid1D.from_spacing(mid - half, mid + half, grid.h)
    if isinstance(grid, RadialGrid):
        return RadialGrid.from_spacing(2 * grid.r_max, grid.h, grid.ambient_dim)
    hx, hy = grid.hx, grid.hy
    cx, cy = 0.5 * (grid.x_min + grid.x_max), 0.5 * (grid.y_min + grid.y_max)
    wx, wy = grid.x_max - grid.x_min, grid.y_max - grid.y_min
    return TensorGrid2D(cx - wx, cx + wx, int(round(2 * wx / hx)) + 1, cy - wy, cy + wy, int(round(2 * wy / hy)) + 1)


def double_at_height(field: ScalarField, height: float) -> ClosedCurve:
    """Boundary of {u0(x) <= y <= 2*height - u0(x)} for a sampled 1D datum.

    The lower arc is the sampled graph below ``height``; the upper arc is its
    mirror image across y = height.  The two arcs meet at the crossings
    {u0 = height}, located by linear interpolation.  Points run
    counter-clockwise starting at the left crossing.
    """
    if not isinstance(field.grid, Grid1D):
        raise DatumError("doubling is defined for 1D data")
    x = field.grid.nodes
    u = np.asarray(field.values)
    if u.min() >= height:
        raise DatumError(f"empty doubled region: min u0 = {u.min()} >= {height}")
    below = np.flatnonzero(u < height)
    lo, hi = below[0], below[-1]
    if not np.all(u[lo:hi + 1] < height):
        raise DatumError("sub-level set is not an interval; datum is not convex")
    if lo == 0 or hi == len(u) - 1:
        raise DatumError(f"sub-level set {{u0 < {height}}} reaches the edge of the sampled window")

    def crossing(i, j):
        t = (height - u[i]) / (u[j] - u[i])
        return x[i] + t * (x[j] - x[i])

    xl = crossing(lo, lo - 1)
    xr = crossing(hi, hi + 1)
    lower = np.column_stack([x[lo:hi + 1], u[lo:hi + 1]])
    upper = np.column_stack([x[lo:hi + 1][::-1], 2.0 * height - u[lo:hi + 1][::-1]])
    pts = np.vstack([[xl, height], lower, [xr, height], upper])
    return ClosedCurve(pts)


def reflect_curve(curve: ClosedCurve, height: float) -> np.ndarray:
    """Mirror across y = height, re-indexed to the original starting point and orientation."""
    pts = curve.points.copy()
    pts[:, 1] = 2.0 * height - pts[:, 1]
    # reflection reverses orientation; reverse order keeping point 0 fixed
    return np.vstack([pts[:1], pts[1:][::-1]])
