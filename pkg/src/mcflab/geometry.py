"""Pointwise geometry of a graph x_{n+1} = u(x) from its first and second derivatives.

Every function is vectorized over a leading batch of nodes: ``Du`` has shape
``(..., n)`` and ``D2u`` shape ``(..., n, n)``.

Conventions: the upward unit normal is ``(-Du, 1) / v`` with
``v = sqrt(1 + |Du|^2)``; the second fundamental form in lower indices is
``b_ij = D_ij u / v`` and the shape operator is ``h^i_j = a^{il} b_lj`` with
``a = g^{-1} = I - Du Du^T / v^2``.  Convex graphs have ``H >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (
    FarFieldPolicy,
    LinearExtrapolate,
    RadialGrid,
    ScalarField,
    diff_ops,
)


class GeometryError(ValueError):
    pass


def gradient_function(Du: np.ndarray) -> np.ndarray:
    Du = np.asarray(Du, dtype=float)
    return np.sqrt(1.0 + np.sum(Du * Du, axis=-1))


def induced_metric(Du: np.ndarray) -> np.ndarray:
    Du = np.asarray(Du, dtype=float)
    n = Du.shape[-1]
    return np.eye(n) + Du[..., :, None] * Du[..., None, :]


def diffusion_matrix(Du: np.ndarray) -> np.ndarray:
    """a^{ij} = delta^{ij} - D^i u D^j u / (1 + |Du|^2), the inverse induced metric."""
    Du = np.asarray(Du, dtype=float)
    n = Du.shape[-1]
    v2 = 1.0 + np.sum(Du * Du, axis=-1)
    return np.eye(n) - Du[..., :, None] * Du[..., None, :] / v2[..., None, None]


def shape_operator(Du: np.ndarray, D2u: np.ndarray):
    """Return (b, h, H, A2): lower-index form, mixed tensor, mean curvature, |A|^2."""
    Du = np.asarray(Du, dtype=float)
    D2u = np.asarray(D2u, dtype=float)
    v = gradient_function(Du)
    b = D2u / v[..., None, None]
    h = diffusion_matrix(Du) @ b
    H = np.trace(h, axis1=-2, axis2=-1)
    A2 = np.einsum("...ij,...ji->...", h, h)
    return b, h, H, A2


def condition_eigenvalue(v: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of v*h^i_j, via the symmetric pencil (v*b, g)."""
    v = np.asarray(v, dtype=float)
    g = np.asarray(g, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise GeometryError("induced metric is not positive definite") from None
    n = g.shape[-1]
    if n == 1:
        return (v[..., None, None] * b / g)[..., 0, 0]
    Linv = np.linalg.inv(L)
    C = Linv @ (v[..., None, None] * b) @ np.swapaxes(Linv, -1, -2)
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    return np.linalg.eigvalsh(C)[..., 0]


@dataclass(frozen=True, eq=False)
class GeometricData:
    Du: np.ndarray
    D2u: np.ndarray
    v: np.ndarray
    g: np.ndarray
    a: np.ndarray
    b: np.ndarray
    h: np.ndarray
    H: np.ndarray
    A2: np.ndarray
    lam_min_vh: np.ndarray

    @classmethod
    def from_derivatives(cls, Du, D2u) -> "GeometricData":
        Du = np.asarray(Du, dtype=float)
        D2u = np.asarray(D2u, dtype=float)
        v = gradient_function(Du)
        g = induced_metric(Du)
        a = diffusion_matrix(Du)
        b, h, H, A2 = shape_operator(Du, D2u)
        lam = condition_eigenvalue(v, g, b)
        return cls(Du, D2u, v, g, a, b, h, H, A2, lam)

    @property
    def A(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.A2, 0.0))


def radial_embedding(ur: np.ndarray, urr: np.ndarray, r: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Du and D2u of u(|x|) in R^n, in the frame (radial, tangential, ...).

    The Hessian of a radial function is u_rr in the radial direction and u_r/r
    in each of the n-1 tangential directions; at r = 0 the limit is u_rr.
    """
    ur = np.asarray(ur, dtype=float)
    urr = np.asarray(urr, dtype=float)
    r = np.asarray(r, dtype=float)
    Du = np.zeros(ur.shape + (n,))
    Du[..., 0] = ur
    tang = np.where(r > 0, ur / np.where(r > 0, r, 1.0), urr)
    D2u = np.zeros(ur.shape + (n, n))
    D2u[..., 0, 0] = urr
    for k in range(1, n):
        D2u[..., k, k] = tang
    return Du, D2u


def field_derivatives(field: ScalarField, policy: FarFieldPolicy | None = None):
    """(Du, D2u) of the graph in ambient coordinates, lifting radial fields to R^n."""
    Du, D2u = diff_ops(field, policy or LinearExtrapolate())
    grid = field.grid
    if isinstance(grid, RadialGrid):
        return radial_embedding(Du[..., 0], D2u[..., 0, 0], grid.nodes, grid.ambient_dim)
    return Du, D2u


def geometric_data(field: ScalarField, policy: FarFieldPolicy | None = None) -> GeometricData:
    return GeometricData.from_derivatives(*field_derivatives(field, policy))


def mean_curvature_gradient(field: ScalarField, H: np.ndarray) -> np.ndarray:
    """Coordinate gradient of H (one-dimensional for radial grids, padded to n)."""
    grid = field.grid
    Hf = ScalarField(grid, H, field.time)
    # H has no closed-form ghosts; extrapolate linearly regardless of the height policy.
    dH, _ = diff_ops(Hf, LinearExtrapolate())
    if isinstance(grid, RadialGrid):
        out = np.zeros(H.shape + (grid.ambient_dim,))
        out[..., 0] = dH[..., 0]
        return out
    return dH


def harnack_quantity(
    prev: ScalarField,
    cur: ScalarField,
    nxt: ScalarField,
    V: np.ndarray | str = "minimize",
    policy: FarFieldPolicy | None = None,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Hamilton's Harnack expression at the nodes of ``cur``.

    ``Z(V) = H_t + 2 V^i d_i H + b_ij V^i V^j + H / (2t)``, where the flow-normal
    time derivative is the centred difference of H at fixed x minus the drift
    ``T^i d_i H`` with ``T^i = v H g^{ij} D_j u``.  With ``V="minimize"`` the
    quadratic in V is minimised analytically (requires b positive definite).
    """
    t = cur.time
    if t <= 0:
        raise GeometryError("Harnack quantity needs t > 0")
    if not (prev.time < t < nxt.time):
        raise GeometryError("snapshots must straddle the evaluation time")
    gp = geometric_data(prev, policy)
    gc = geometric_data(cur, policy)
    gn = geometric_data(nxt, policy)
    H = gc.H
    dH = mean_curvature_gradient(cur, H)
    Ht_fixed = (gn.H - gp.H) / (nxt.time - prev.time)
    drift = (gc.v * H)[..., None] * np.einsum("...ij,...j->...i", gc.a, gc.Du)
    Ht = Ht_fixed - np.sum(drift * dH, axis=-1)
    if isinstance(V, str):
        if V != "minimize":
            raise ValueError(f"unknown V mode {V!r}")
        b = gc.b
        sel = np.ones(H.shape, dtype=bool) if mask is None else mask
        eig_min = np.linalg.eigvalsh(b[sel])[..., 0] if np.any(sel) else np.array([1.0])
        if np.any(eig_min <= 0):
            raise GeometryError("not strictly convex at node")
        quad = np.zeros(H.shape)
        quad[sel] = np.einsum("...i,...i->...", dH[sel], np.linalg.solve(b[sel], dH[sel][..., None])[..., 0])
        Z = Ht - quad + H / (2.0 * t)
    else:
        V = np.broadcast_to(np.asarray(V, dtype=float), dH.shape)
        Z = Ht + 2.0 * np.sum(V * dH, axis=-1) + np.einsum("...i,...ij,...j->...", V, gc.b, V) + H / (2.0 * t)
    if mask is not None:
        Z = np.where(mask, Z, np.nan)
    return Z
