"""Uniform grids, sampled height fields, ghost extension and central stencils.

All grids are vertex-centred and uniform.  Fields are immutable numpy arrays
(the write flag is cleared on construction).  Derivatives are second-order
central differences everywhere; boundary nodes use ghost values supplied by a
far-field policy, except at the origin of a radial grid where the even
reflection u(-r) = u(r) is always used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "Grid1D",
    "RadialGrid",
    "TensorGrid2D",
    "Grid",
    "ScalarField",
    "FarFieldPolicy",
    "LinearExtrapolate",
    "QuadraticExtrapolate",
    "FrozenInitialSlope",
    "ClampedInitialContinuation",
    "ExactGhosts",
    "make_grid",
    "sample",
    "extend_ghost",
    "pad",
    "diff_ops",
    "policy_from_name",
]


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 5:
            raise GridError(f"need at least 5 nodes, got {self.n_nodes}")
        if self.n_nodes % 2 == 0:
            raise GridError(f"1D grids use an odd node count, got {self.n_nodes}")
        if not self.x_max > self.x_min:
            raise GridError(f"bounds not ordered: [{self.x_min}, {self.x_max}]")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_nodes - 1)

    @property
    def dim(self) -> int:
        return 1

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.h,)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_nodes,)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_nodes)

    def coords(self) -> tuple[np.ndarray, ...]:
        return (self.nodes,)

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, h: float) -> "Grid1D":
        n = int(round((x_max - x_min) / h)) + 1
        return cls(x_min, x_max, n)


@dataclass(frozen=True)
class RadialGrid:
    """Nodes r_j = j*h on [0, r_max] for a rotationally symmetric graph in R^n."""

    r_max: float
    n_nodes: int
    ambient_dim: int = 2

    def __post_init__(self):
        if self.n_nodes < 5:
            raise GridError(f"need at least 5 nodes, got {self.n_nodes}")
        if not self.r_max > 0:
            raise GridError(f"r_max must be positive, got {self.r_max}")
        if self.ambient_dim < 2:
            raise GridError("radial grids need ambient dimension n >= 2")

    @property
    def h(self) -> float:
        return self.r_max / (self.n_nodes - 1)

    @property
    def dim(self) -> int:
        return self.ambient_dim

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.h,)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_nodes,)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.h

    def coords(self) -> tuple[np.ndarray, ...]:
        return (self.nodes,)

    @classmethod
    def from_spacing(cls, r_max: float, h: float, ambient_dim: int = 2) -> "RadialGrid":
        return cls(r_max, int(round(r_max / h)) + 1, ambient_dim)


@dataclass(frozen=True)
class TensorGrid2D:
    x_min: float
    x_max: float
    nx: int
    y_min: float
    y_max: float
    ny: int

    def __post_init__(self):
        for lo, hi, n, name in ((self.x_min, self.x_max, self.nx, "x"), (self.y_min, self.y_max, self.ny, "y")):
            if n < 5:
                raise GridError(f"need at least 5 nodes along {name}, got {n}")
            if not hi > lo:
                raise GridError(f"{name} bounds not ordered: [{lo}, {hi}]")

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def h(self) -> float:
        return min(self.hx, self.hy)

    @property
    def dim(self) -> int:
        return 2

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.hx, self.hy)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nx, self.ny)

    def coords(self) -> tuple[np.ndarray, ...]:
        return (np.linspace(self.x_min, self.x_max, self.nx), np.linspace(self.y_min, self.y_max, self.ny))

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(*self.coords(), indexing="ij"))

    @classmethod
    def square(cls, half_width: float, h: float) -> "TensorGrid2D":
        n = int(round(2 * half_width / h)) + 1
        return cls(-half_width, half_width, n, -half_width, half_width, n)


Grid = Union[Grid1D, RadialGrid, TensorGrid2D]


def make_grid(kind: str, **params) -> Grid:
    """Build a grid by kind name ("1d", "radial", "2d")."""
    kinds = {"1d": Grid1D, "radial": RadialGrid, "2d": TensorGrid2D}
    try:
        cls = kinds[kind]
    except KeyError:
        raise GridError(f"unknown grid kind {kind!r}; expected one of {sorted(kinds)}") from None
    return cls(**params)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            raise ValueError(f"non-finite value at node {tuple(int(i) for i in bad[0])}")
        if self.time < 0:
            raise ValueError(f"negative time {self.time}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray, time: float) -> "ScalarField":
        return ScalarField(self.grid, values, time)


def sample(f: Callable[..., np.ndarray], grid: Grid) -> ScalarField:
    """Evaluate a closed-form datum at every node (t = 0).

    1D and radial grids call ``f(x)`` / ``f(r)``; 2D grids call ``f(X, Y)``.
    """
    if isinstance(grid, TensorGrid2D):
        values = np.asarray(f(*grid.mesh()), dtype=float)
    else:
        values = np.asarray(f(grid.nodes), dtype=float)
    values = np.broadcast_to(values, grid.shape).astype(float)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        where = tuple(float(c[i]) for c, i in zip(grid.coords(), idx))
        raise ValueError(f"datum is not finite at node {idx} (coordinates {where})")
    return ScalarField(grid, values, 0.0)


# --------------------------------------------------------------------------
# Far-field policies
# --------------------------------------------------------------------------
#
# A policy produces `width` ghost layers beyond one side of one axis.  The
# helper `_outward` hands each policy the array re-oriented so that the
# boundary slab is ``arr[-1]`` and ghosts continue at indices N, N+1, ...


class FarFieldPolicy:
    name = "base"

    def bind(self, initial: ScalarField, datum: Callable | None = None) -> "FarFieldPolicy":
        """Return a copy carrying whatever initial-data information the policy needs."""
        return self

    def ghosts(self, arr: np.ndarray, axis: int, side: str, h: float, width: int, t: float) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class LinearExtrapolate(FarFieldPolicy):
    name = "linear"

    def ghosts(self, arr, axis, side, h, width, t):
        k = _ks(width, arr.ndim)
        return arr[-1] + k * (arr[-1] - arr[-2])


class QuadraticExtrapolate(FarFieldPolicy):
    name = "quadratic"

    def ghosts(self, arr, axis, side, h, width, t):
        k = _ks(width, arr.ndim)
        d1 = arr[-1] - arr[-2]
        d2 = arr[-1] - 2.0 * arr[-2] + arr[-3]
        return arr[-1] + k * d1 + 0.5 * k * (k + 1) * d2


@dataclass(frozen=True, eq=False)
class FrozenInitialSlope(FarFieldPolicy):
    """Continue with the one-sided outward slope of u_0 at each boundary node."""

    slopes: dict = field(default_factory=dict)
    name = "frozen_slope"

    def bind(self, initial, datum=None):
        slopes = {}
        for axis, h in enumerate(_axis_spacings(initial.grid)):
            for side in _policy_sides(initial.grid, axis):
                arr = _outward(initial.values, axis, side)
                s = (arr[-1] - arr[-2]) / h
                if not np.all(np.isfinite(s)):
                    raise ValueError("frozen far-field slope is not finite")
                slopes[(axis, side)] = s
        return FrozenInitialSlope(slopes)

    def ghosts(self, arr, axis, side, h, width, t):
        if (axis, side) not in self.slopes:
            raise RuntimeError("FrozenInitialSlope used before bind()")
        s = self.slopes[(axis, side)]
        if s.shape != arr.shape[1:]:
            # corner fill on an already padded array: extend slopes by edge values
            pad = [(0, 0)] * s.ndim
            for j in range(s.ndim):
                extra = arr.shape[1 + j] - s.shape[j]
                pad[j] = (extra // 2, extra - extra // 2)
            s = np.pad(s, pad, mode="edge")
        return arr[-1] + _ks(width, arr.ndim) * h * s

    def __repr__(self):
        return "FrozenInitialSlope()"


@dataclass(frozen=True, eq=False)
class ClampedInitialContinuation(FarFieldPolicy):
    """Continue with u_0 beyond the window, shifted to the current boundary value.

    With a closed-form datum the increments u_0(x_N + k h) - u_0(x_N) are exact;
    otherwise u_0 is continued by quadratic extrapolation of the samples.
    """

    increments: dict = field(default_factory=dict)
    name = "clamped_initial"

    def bind(self, initial, datum=None, width: int = 2):
        grid = initial.grid
        if datum is not None:
            ext = _extended_values(datum, grid, width)
        else:
            ext = pad(initial, QuadraticExtrapolate(), width).values_padded
        inc = {}
        for axis in range(len(grid.shape)):
            for side in _policy_sides(grid, axis):
                core = _trim_other_axes(ext, grid, axis, width)
                arr = _outward(core, axis, side)
                n = grid.shape[axis]
                # arr holds [ghosts_inward..., interior..., ghosts_outward]; boundary node at n+width-1
                b = width + n - 1
                inc[(axis, side)] = np.stack([arr[b + k] - arr[b] for k in range(1, width + 1)])
        return ClampedInitialContinuation(inc)

    def ghosts(self, arr, axis, side, h, width, t):
        if (axis, side) not in self.increments:
            raise RuntimeError("ClampedInitialContinuation used before bind()")
        inc = self.increments[(axis, side)]
        if inc.shape[0] < width:
            raise ValueError(f"bound with {inc.shape[0]} ghost layers, {width} requested")
        inc = inc[:width]
        if inc.shape[1:] != arr.shape[1:]:
            pad_w = [(0, 0)]
            for j in range(1, inc.ndim):
                extra = arr.shape[j] - inc.shape[j]
                pad_w.append((extra // 2, extra - extra // 2))
            inc = np.pad(inc, pad_w, mode="edge")
        return arr[-1] + inc

    def __repr__(self):
        return "ClampedInitialContinuation()"


@dataclass(frozen=True, eq=False)
class ExactGhosts(FarFieldPolicy):
    """Dirichlet ghosts from a known solution ``f(*coords, t)``; used by exact-solution tests."""

    func: Callable = None
    name = "exact"

    def ghosts(self, arr, axis, side, h, width, t):  # pragma: no cover - handled in pad()
        raise RuntimeError("ExactGhosts is applied through pad()")

    def __repr__(self):
        return "ExactGhosts()"


_POLICIES = {
    "linear": LinearExtrapolate,
    "quadratic": QuadraticExtrapolate,
    "frozen_slope": FrozenInitialSlope,
    "clamped_initial": ClampedInitialContinuation,
}


def policy_from_name(name: str) -> FarFieldPolicy:
    try:
        return _POLICIES[name]()
    except KeyError:
        raise ValueError(f"unknown far-field policy {name!r}; expected one of {sorted(_POLICIES)}") from None


def _ks(width: int, ndim: int) -> np.ndarray:
    return np.arange(1, width + 1, dtype=float).reshape((width,) + (1,) * (ndim - 1))


def _axis_spacings(grid: Grid) -> tuple[float, ...]:
    return grid.spacings


def _policy_sides(grid: Grid, axis: int) -> tuple[str, ...]:
    if isinstance(grid, RadialGrid):
        return ("hi",)
    return ("lo", "hi")


def _outward(values: np.ndarray, axis: int, side: str) -> np.ndarray:
    arr = np.moveaxis(values, axis, 0)
    return arr[::-1] if side == "lo" else arr


def _extended_coords(grid: Grid, width: int) -> tuple[np.ndarray, ...]:
    out = []
    for c, h in zip(grid.coords(), grid.spacings):
        k = np.arange(1, width + 1) * h
        out.append(np.concatenate([c[0] - k[::-1], c, c[-1] + k]))
    return tuple(out)


def _extended_values(f: Callable, grid: Grid, width: int) -> np.ndarray:
    coords = _extended_coords(grid, width)
    if isinstance(grid, TensorGrid2D):
        return np.asarray(f(*np.meshgrid(*coords, indexing="ij")), dtype=float)
    return np.asarray(f(np.abs(coords[0]) if isinstance(grid, RadialGrid) else coords[0]), dtype=float)


def _trim_other_axes(ext: np.ndarray, grid: Grid, axis: int, width: int) -> np.ndarray:
    sl = [slice(width, width + n) for n in grid.shape]
    sl[axis] = slice(None)
    return ext[tuple(sl)]


@dataclass(frozen=True)
class Padded:
    values_padded: np.ndarray
    width: int


def extend_ghost(field: ScalarField, policy: FarFieldPolicy, width: int = 1) -> dict[tuple[int, str], np.ndarray]:
    """Ghost layers per (axis, side), ordered outward from the boundary node.

    On radial grids the r = 0 side is the even reflection u(-r) = u(r) regardless
    of the policy.
    """
    if width < 1:
        raise ValueError("ghost width must be at least 1")
    padded = pad(field, policy, width).values_padded
    out = {}
    for axis, n in enumerate(field.grid.shape):
        core = _trim_other_axes(padded, field.grid, axis, width)
        arr = np.moveaxis(core, axis, 0)
        out[(axis, "lo")] = arr[:width][::-1].copy()
        out[(axis, "hi")] = arr[width + n:].copy()
    return out


def pad(field: ScalarField, policy: FarFieldPolicy, width: int = 1) -> Padded:
    """Return the field padded by `width` ghost layers on every side (corners included)."""
    grid = field.grid
    if isinstance(policy, ExactGhosts):
        coords = _extended_coords(grid, width)
        if isinstance(grid, TensorGrid2D):
            ext = np.asarray(policy.func(*np.meshgrid(*coords, indexing="ij"), field.time), dtype=float)
        else:
            ext = np.asarray(policy.func(coords[0], field.time), dtype=float)
        ext = np.array(ext)
        inner = tuple(slice(width, width + n) for n in grid.shape)
        ext[inner] = field.values
        if isinstance(grid, RadialGrid):
            ext[:width] = field.values[1:width + 1][::-1]
        return Padded(ext, width)
    arr = np.asarray(field.values)
    for axis, h in enumerate(grid.spacings):
        arr = _pad_axis(arr, grid, axis, h, policy, width, field.time)
    return Padded(arr, width)


def _pad_axis(arr, grid, axis, h, policy, width, t):
    moved = np.moveaxis(arr, axis, 0)
    if isinstance(grid, RadialGrid):
        lo = moved[1:width + 1][::-1]
    else:
        lo = policy.ghosts(moved[::-1], axis, "lo", h, width, t)[::-1]
    hi = policy.ghosts(moved, axis, "hi", h, width, t)
    return np.moveaxis(np.concatenate([lo, moved, hi], axis=0), 0, axis)


# --------------------------------------------------------------------------
# Stencils
# --------------------------------------------------------------------------


def diff_ops(field: ScalarField, policy: FarFieldPolicy | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Central first and second derivatives at every node.

    Returns ``Du`` with shape ``grid.shape + (d,)`` and ``D2u`` with shape
    ``grid.shape + (d, d)`` where d = 1 for 1D/radial grids (the radial
    derivative) and d = 2 for tensor grids.  The mixed derivative uses the
    four-point centred stencil.
    """
    policy = policy or LinearExtrapolate()
    P = pad(field, policy, 1).values_padded
    return central_derivatives(P, field.grid.spacings)


def central_derivatives(P: np.ndarray, spacings: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives at the interior of an array padded by one ghost layer."""
    if P.ndim == 1:
        (h,) = spacings
        du = (P[2:] - P[:-2]) / (2.0 * h)
        d2u = (P[2:] - 2.0 * P[1:-1] + P[:-2]) / (h * h)
        return du[:, None], d2u[:, None, None]
    hx, hy = spacings
    c = P[1:-1, 1:-1]
    ux = (P[2:, 1:-1] - P[:-2, 1:-1]) / (2.0 * hx)
    uy = (P[1:-1, 2:] - P[1:-1, :-2]) / (2.0 * hy)
    uxx = (P[2:, 1:-1] - 2.0 * c + P[:-2, 1:-1]) / (hx * hx)
    uyy = (P[1:-1, 2:] - 2.0 * c + P[1:-1, :-2]) / (hy * hy)
    uxy = (P[2:, 2:] - P[2:, :-2] - P[:-2, 2:] + P[:-2, :-2]) / (4.0 * hx * hy)
    du = np.stack([ux, uy], axis=-1)
    d2u = np.empty(c.shape + (2, 2))
    d2u[..., 0, 0] = uxx
    d2u[..., 1, 1] = uyy
    d2u[..., 0, 1] = d2u[..., 1, 0] = uxy
    return du, d2u


def interior_mask(grid: Grid, margin: int = 3) -> np.ndarray:
    """Nodes at least `margin` nodes away from every truncation boundary (r = 0 is not one)."""
    mask = np.ones(grid.shape, dtype=bool)
    if margin <= 0:
        return mask
    for axis, n in enumerate(grid.shape):
        idx = np.arange(n)
        keep = idx < n - margin
        if not isinstance(grid, RadialGrid):
            keep &= idx >= margin
        shape = [1] * len(grid.shape)
        shape[axis] = n
        mask &= keep.reshape(shape)
    return mask


def is_close_spacing(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=0.0)
