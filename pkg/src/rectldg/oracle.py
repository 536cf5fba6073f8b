"""Finite-difference Laplace solves used to cross-check the series limits.

These assemble the 5-point operator directly (ghost nodes for Robin edges)
and do not share code with the energy discretisation.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid


def laplace_dirichlet(grid: Grid, boundary: np.ndarray) -> np.ndarray:
    """Discrete harmonic extension of the boundary entries of ``boundary``."""
    ny, nx = grid.shape
    hx2, hy2 = grid.hx**2, grid.hy**2
    mi, mj = nx - 2, ny - 2
    Ix = sp.identity(mi)
    Iy = sp.identity(mj)
    Tx = sp.diags([np.ones(mi - 1), -2 * np.ones(mi), np.ones(mi - 1)], [-1, 0, 1]) / hx2
    Ty = sp.diags([np.ones(mj - 1), -2 * np.ones(mj), np.ones(mj - 1)], [-1, 0, 1]) / hy2
    A = (sp.kron(Iy, Tx) + sp.kron(Ty, Ix)).tocsc()
    rhs = np.zeros((mj, mi))
    rhs[:, 0] -= boundary[1:-1, 0] / hx2
    rhs[:, -1] -= boundary[1:-1, -1] / hx2
    rhs[0, :] -= boundary[0, 1:-1] / hy2
    rhs[-1, :] -= boundary[-1, 1:-1] / hy2
    sol = spla.spsolve(A, rhs.ravel())
    out = boundary.astype(float).copy()
    out[1:-1, 1:-1] = sol.reshape(mj, mi)
    return out


def laplace_robin(grid: Grid, tau: float, data: tuple[float, float, float, float]) -> np.ndarray:
    """Solve ``Lap f = 0`` with ``tau f + df/dnu = tau * g_edge`` on every edge.

    ``data`` holds the constant ``g`` on the bottom, right, top and left edges.
    Boundary rows eliminate the ghost node through the Robin condition; at a
    corner both directions are eliminated.
    """
    ny, nx = grid.shape
    hx, hy = grid.hx, grid.hy
    n = nx * ny
    idx = np.arange(n).reshape(ny, nx)
    rows, cols, vals = [], [], []
    rhs = np.zeros((ny, nx))
    diag = np.zeros((ny, nx))
    gb, gr, gt, gl = data

    def add(r, c, v):
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(np.broadcast_to(v, r.shape).ravel())

    # x-direction second difference
    cx = 1.0 / hx**2
    diag -= 2 * cx
    add(idx[:, 1:], idx[:, :-1], cx * np.where(np.arange(1, nx) == nx - 1, 2.0, 1.0)[None, :] * np.ones((ny, 1)))
    add(idx[:, :-1], idx[:, 1:], cx * np.where(np.arange(nx - 1) == 0, 2.0, 1.0)[None, :] * np.ones((ny, 1)))
    # ghost elimination: f_ghost = f_in - 2h tau (f - g) on outward normal
    diag[:, 0] -= 2 * tau / hx
    rhs[:, 0] -= 2 * tau * gl / hx
    diag[:, -1] -= 2 * tau / hx
    rhs[:, -1] -= 2 * tau * gr / hx
    cy = 1.0 / hy**2
    diag -= 2 * cy
    add(idx[1:, :], idx[:-1, :], cy * np.where(np.arange(1, ny) == ny - 1, 2.0, 1.0)[:, None] * np.ones((1, nx)))
    add(idx[:-1, :], idx[1:, :], cy * np.where(np.arange(ny - 1) == 0, 2.0, 1.0)[:, None] * np.ones((1, nx)))
    diag[0, :] -= 2 * tau / hy
    rhs[0, :] -= 2 * tau * gb / hy
    diag[-1, :] -= 2 * tau / hy
    rhs[-1, :] -= 2 * tau * gt / hy
    add(idx, idx, diag)
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return spla.spsolve(A, rhs.ravel()).reshape(ny, nx)


def trapezoid_edge_data(grid: Grid, d: float) -> np.ndarray:
    """Boundary array with the ramp on ``y = 0`` and zero on the other edges."""
    from .boundary import trapezoid

    g = np.zeros(grid.shape)
    g[0, :] = trapezoid(np.arange(grid.nx) / (grid.nx - 1), d / grid.domain.a)
    return g


def dirichlet_extrapolated(grid: Grid, edge_data) -> np.ndarray:
    """Richardson-extrapolated harmonic extension on ``grid``.

    ``edge_data(fine_grid)`` returns the boundary array on any grid. Solves on
    ``grid`` and on its uniform refinement and combines them as ``(4 u_h/2 - u_h)/3``.
    Kinks of the boundary data should sit on coarse nodes for the h^2
    expansion to hold.
    """
    fine = Grid(grid.domain, 2 * grid.nx - 1, 2 * grid.ny - 1)
    uc = laplace_dirichlet(grid, edge_data(grid))
    uf = laplace_dirichlet(fine, edge_data(fine))
    return (4 * uf[::2, ::2] - uc) / 3
