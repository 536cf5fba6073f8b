"""Discrete reduced Landau-de Gennes energy, its residual and linearisation.

The discrete energy is

    E = 2 * sum_e c_e |dQ_e|^2                          (gradient, edge form)
        + eps^-2 * sum_n w_n ((|Q_n|^2 - 1)^2 - 32/27)   (bulk, trapezoid rule)
        + 2 * tau * sum_n l_n |Q_n - g_n|^2              (Robin anchoring only)

with ``c_e`` the trapezoid-weighted edge coefficients, so that the residual
``-grad E / (4 w)`` equals ``Lap_h Q - eps^-2 (|Q|^2 - 1) Q`` at interior
nodes, ``Lap_h`` being the 5-point Laplacian. Boundary rows in Robin mode
coincide with ghost-node elimination of ``nu . grad Q + tau (Q - g) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .boundary import DIRICHLET, ROBIN, BoundarySpec, dirichlet_trace
from .grid import Grid, QField

BULK_CONSTANT = 32.0 / 27.0
# Gradient of E is GRAD_SCALE * w * (-residual).
GRAD_SCALE = 4.0


class BoundaryMismatch(ValueError):
    """Dirichlet-mode field whose boundary differs from the imposed trace."""


@dataclass(frozen=True)
class EnergyParams:
    epsilon: float
    bc: BoundarySpec = BoundarySpec()

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def with_epsilon(self, epsilon: float) -> "EnergyParams":
        return EnergyParams(float(epsilon), self.bc)


class Discretization:
    """Grid- and boundary-dependent operators shared by every epsilon."""

    def __init__(self, grid: Grid, bc: BoundarySpec):
        self.grid = grid
        self.bc = bc
        ny, nx = grid.shape
        hx, hy = grid.hx, grid.hy
        self.w = grid.node_weights()
        self.g1, self.g2 = dirichlet_trace(grid, bc.d)
        if bc.mode == DIRICHLET:
            self.free = grid.interior_mask()
            self.robin = np.zeros(grid.shape)
        else:
            self.free = np.ones(grid.shape, dtype=bool)
            self.robin = bc.tau * grid.boundary_lengths() / self.w

        # edge coefficients: gradient energy per component is sum c_e (Q_a - Q_b)^2
        wy = np.ones(ny)
        wy[[0, -1]] = 0.5
        wx = np.ones(nx)
        wx[[0, -1]] = 0.5
        self.cx = (hy / hx) * np.repeat(wy[:, None], nx - 1, axis=1)  # (ny, nx-1)
        self.cy = (hx / hy) * np.repeat(wx[None, :], ny - 1, axis=0)  # (ny-1, nx)

        idx = np.arange(grid.size).reshape(grid.shape)
        rows, cols, vals = [], [], []
        for c, a_, b_ in ((self.cx, idx[:, :-1], idx[:, 1:]), (self.cy, idx[:-1, :], idx[1:, :])):
            a_, b_, c = a_.ravel(), b_.ravel(), c.ravel()
            rows += [a_, b_, a_, b_]
            cols += [a_, b_, b_, a_]
            vals += [c, c, -c, -c]
        S = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(grid.size, grid.size),
        )
        # consistent Laplacian on all nodes: -M^-1 S
        self.lap = (-sp.diags(1.0 / self.w.ravel()) @ S).tocsr()
        self.free_idx = np.flatnonzero(self.free.ravel())
        self.nfree = self.free_idx.size
        self.lap_ff = self.lap[self.free_idx][:, self.free_idx].tocsr()
        self.mass_free = np.tile(self.w.ravel()[self.free_idx], 2)

    def check_boundary(self, field: QField, tol: float = 1e-12) -> None:
        if self.bc.mode != DIRICHLET:
            return
        bnd = ~self.free
        err = max(
            np.max(np.abs(field.q11[bnd] - self.g1[bnd])),
            np.max(np.abs(field.q12[bnd] - self.g2[bnd])),
        )
        if err > tol:
            raise BoundaryMismatch(f"field boundary differs from the Dirichlet trace by {err:.3e}")

    def impose(self, field: QField) -> QField:
        """Copy of ``field`` with boundary nodes overwritten by the trace (Dirichlet only)."""
        out = field.copy()
        if self.bc.mode == DIRICHLET:
            bnd = ~self.free
            out.q11[bnd] = self.g1[bnd]
            out.q12[bnd] = self.g2[bnd]
        return out

    def pack(self, field: QField) -> np.ndarray:
        """Free-node unknowns ``[q11_free, q12_free]``."""
        return np.concatenate([field.q11.ravel()[self.free_idx], field.q12.ravel()[self.free_idx]])

    def unpack(self, u: np.ndarray, template: QField | None = None) -> QField:
        """Field with free nodes from ``u``; other nodes from ``template`` or the trace."""
        if template is None:
            q11, q12 = self.g1.copy(), self.g2.copy()
            if self.bc.mode == ROBIN:
                q11[:] = 0.0
        else:
            q11, q12 = template.q11.copy(), template.q12.copy()
        q11.ravel()[self.free_idx] = u[: self.nfree]
        q12.ravel()[self.free_idx] = u[self.nfree:]
        return QField(self.grid, q11, q12)


@lru_cache(maxsize=32)
def discretization(grid: Grid, bc: BoundarySpec) -> Discretization:
    return Discretization(grid, bc)


def _disc(field: QField, p: EnergyParams) -> Discretization:
    return discretization(field.grid, p.bc)


def energy(field: QField, p: EnergyParams, check: bool = True) -> float:
    """Discrete free energy including the ``-(32/27) eps^-2`` offset."""
    D = _disc(field, p)
    if check:
        D.check_boundary(field)
    grad = 0.0
    for q in (field.q11, field.q12):
        grad += np.sum(D.cx * np.diff(q, axis=1) ** 2) + np.sum(D.cy * np.diff(q, axis=0) ** 2)
    s2 = field.q11**2 + field.q12**2
    bulk = np.sum(D.w * ((s2 - 1.0) ** 2 - BULK_CONSTANT)) / p.epsilon**2
    total = 2.0 * grad + bulk
    if p.bc.mode == ROBIN:
        ell = D.robin * D.w / p.bc.tau
        total += 2.0 * p.bc.tau * np.sum(ell * ((field.q11 - D.g1) ** 2 + (field.q12 - D.g2) ** 2))
    return float(total)


def residual(field: QField, p: EnergyParams, check: bool = True) -> QField:
    """Euler-Lagrange residual ``-grad E / (4 w)``; zero on constrained nodes."""
    D = _disc(field, p)
    if check:
        D.check_boundary(field)
    inv_e2 = 1.0 / p.epsilon**2
    bulk = inv_e2 * (field.q11**2 + field.q12**2 - 1.0)
    r11 = (D.lap @ field.q11.ravel()).reshape(D.grid.shape) - bulk * field.q11
    r12 = (D.lap @ field.q12.ravel()).reshape(D.grid.shape) - bulk * field.q12
    if p.bc.mode == ROBIN:
        r11 -= D.robin * (field.q11 - D.g1)
        r12 -= D.robin * (field.q12 - D.g2)
    r11[~D.free] = 0.0
    r12[~D.free] = 0.0
    return QField(D.grid, r11, r12)


def residual_norm(field: QField, p: EnergyParams) -> float:
    r = residual(field, p, check=False)
    return float(max(np.max(np.abs(r.q11)), np.max(np.abs(r.q12))))


def energy_gradient(field: QField, p: EnergyParams) -> QField:
    """True gradient of :func:`energy` with respect to the free nodal values."""
    D = _disc(field, p)
    r = residual(field, p)
    return QField(D.grid, -GRAD_SCALE * D.w * r.q11, -GRAD_SCALE * D.w * r.q12)


def bulk_blocks(field: QField, p: EnergyParams, free_idx: np.ndarray):
    """Diagonal blocks of the linearised bulk term at the free nodes."""
    inv_e2 = 1.0 / p.epsilon**2
    q11 = field.q11.ravel()[free_idx]
    q12 = field.q12.ravel()[free_idx]
    s2m1 = q11**2 + q12**2 - 1.0
    return inv_e2 * (s2m1 + 2 * q11**2), inv_e2 * (2 * q11 * q12), inv_e2 * (s2m1 + 2 * q12**2)


def jacobian(field: QField, p: EnergyParams) -> sp.csr_matrix:
    """Sparse derivative of the free-node residual, unknowns ordered ``[q11, q12]``."""
    D = _disc(field, p)
    b11, b12, b22 = bulk_blocks(field, p, D.free_idx)
    L = D.lap_ff
    if p.bc.mode == ROBIN:
        L = L - sp.diags(D.robin.ravel()[D.free_idx])
    J = sp.bmat(
        [[L - sp.diags(b11), sp.diags(-b12)], [sp.diags(-b12), L - sp.diags(b22)]],
        format="csr",
    )
    return J


def depsilon_residual(field: QField, p: EnergyParams) -> np.ndarray:
    """Derivative of the packed free-node residual with respect to epsilon."""
    D = _disc(field, p)
    q11 = field.q11.ravel()[D.free_idx]
    q12 = field.q12.ravel()[D.free_idx]
    s2m1 = q11**2 + q12**2 - 1.0
    fac = 2.0 / p.epsilon**3
    return np.concatenate([fac * s2m1 * q11, fac * s2m1 * q12])


def hessian_apply(field: QField, p: EnergyParams, v: QField) -> QField:
    """Directional derivative of :func:`residual` at ``field`` along ``v``."""
    D = _disc(field, p)
    if v.grid != field.grid:
        raise ValueError("direction lives on a different grid")
    if p.bc.mode == DIRICHLET and (np.any(v.q11[~D.free] != 0) or np.any(v.q12[~D.free] != 0)):
        raise ValueError("direction must vanish on Dirichlet nodes")
    inv_e2 = 1.0 / p.epsilon**2
    q11, q12 = field.q11, field.q12
    s2m1 = q11**2 + q12**2 - 1.0
    dot = q11 * v.q11 + q12 * v.q12
    h11 = (D.lap @ v.q11.ravel()).reshape(D.grid.shape) - inv_e2 * (s2m1 * v.q11 + 2 * dot * q11)
    h12 = (D.lap @ v.q12.ravel()).reshape(D.grid.shape) - inv_e2 * (s2m1 * v.q12 + 2 * dot * q12)
    if p.bc.mode == ROBIN:
        h11 -= D.robin * v.q11
        h12 -= D.robin * v.q12
    h11[~D.free] = 0.0
    h12[~D.free] = 0.0
    return QField(D.grid, h11, h12)


def weighted_inner(u: QField, v: QField) -> float:
    """Discrete L2 inner product with trapezoid weights."""
    w = u.grid.node_weights()
    return float(np.sum(w * (u.q11 * v.q11 + u.q12 * v.q12)))


def branch_measures(field: QField) -> dict[str, float]:
    """Domain averages used as bifurcation-diagram coordinates."""
    g = field.grid
    w = g.node_weights()
    area = g.domain.area
    X, Y = g.mesh()
    s2 = field.q11**2 + field.q12**2
    return {
        "m11": float(np.sum(w * (X + Y) * field.q11) / area),
        "m12": float(np.sum(w * (X + Y) * field.q12) / area),
        "int_q11_sq": float(np.sum(w * field.q11**2) / area),
        "int_q12_sq": float(np.sum(w * field.q12**2) / area),
        "int_s2": float(np.sum(w * s2) / area),
    }
