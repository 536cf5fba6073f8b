"""Closed-form limiting profiles.

Large epsilon: each Q-component is harmonic, built from the rectangle
solution ``f`` that takes boundary data on one edge and vanishes on the rest.
Strong anchoring uses Dirichlet data (trapezoidal ramp, or the constant 1 when
``d = 0``); weak anchoring uses Robin data with eigenfunctions
``p cos(px) + tau sin(px)``.

Small epsilon: the director angle is harmonic with constant edge values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .boundary import TABLE_STATES, trapezoid
from .grid import Grid, RectDomain

KMAX_CAP = 100_000


class ToleranceUnreachable(RuntimeError):
    pass


@dataclass(frozen=True)
class SeriesTruncation:
    kmax: int
    tail_bound: float


# ----------------------------------------------------------------------------
# Dirichlet series


def _strong_coef(k: np.ndarray, p: float, d: float) -> np.ndarray:
    if d == 0:
        return 4.0 / (k * np.pi)
    r = d / p
    return 4.0 * np.sin(k * np.pi * r) / (k**2 * np.pi**2 * r)


def _coef_bound(k: float, p: float, d: float) -> float:
    return 4.0 / (k * np.pi) if d == 0 else 4.0 * p / (k**2 * np.pi**2 * d)


def _sinh_ratio(k: np.ndarray, v: np.ndarray, p: float, q: float) -> np.ndarray:
    """``sinh(k pi (q - v) / p) / sinh(k pi q / p)`` without overflow."""
    c = np.pi / p
    num = -np.expm1(-2 * k * c * (q - v))
    den = -np.expm1(-2 * k * c * q)
    return np.exp(-k * c * v) * num / den


def strong_truncation(vmin: float, p: float, d: float, tol: float) -> SeriesTruncation:
    """Odd cutoff ``K`` such that the neglected tail at ``v >= vmin`` is below ``tol``."""
    if vmin <= 0:
        raise ToleranceUnreachable("series evaluated on its data edge; use the boundary value")
    decay = np.exp(-np.pi * vmin / p)
    if decay >= 1.0:
        raise ToleranceUnreachable(f"v={vmin} is indistinguishable from the data edge")
    geo = 1.0 / (1.0 - decay**2)
    K = 1
    while True:
        nxt = K + 2
        tail = _coef_bound(nxt, p, d) * decay**nxt * geo
        if tail <= tol:
            return SeriesTruncation(K, float(tail))
        K = nxt
        if K > KMAX_CAP:
            raise ToleranceUnreachable(f"more than {KMAX_CAP} terms needed for tol={tol} at v={vmin}")


def _edge_value(u: np.ndarray, p: float, d: float) -> np.ndarray:
    t = np.clip(u / p, 0.0, 1.0)
    if d == 0:
        return np.where((t > 0) & (t < 1), 1.0, np.where((t == 0) | (t == 1), 0.5, 0.0))
    return trapezoid(t, d / p) * np.ones_like(t)


def f_strong(x, y, a: float, b: float, d: float, tol: float = 1e-12) -> np.ndarray | float:
    """Harmonic ``f`` on ``[0,a]x[0,b]`` with data ``T_{d/a}(x/a)`` on ``y = 0``.

    ``d = 0`` selects the constant-data limit (coefficients ``4/(k pi)``).
    Points on the data edge return the data directly; other edges return 0.
    """
    if d < 0 or (d > 0 and not d < a / 2):
        raise ValueError(f"ramp width d={d} outside [0, a/2)")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    out = np.zeros(x.shape)
    on_data = y <= 0
    on_zero = (y >= b) | (x <= 0) | (x >= a)
    out[on_data] = _edge_value(x[on_data], a, d)
    # corners belong to both; zero edges win except the constant-data mid value
    out[on_zero & ~on_data] = 0.0
    inside = ~on_data & ~on_zero
    if np.any(inside):
        xi, yi = x[inside], y[inside]
        out[inside] = _series_points(xi, yi, a, b, d, tol)
    return float(out) if out.ndim == 0 else out


def _series_points(x, y, a, b, d, tol):
    trunc = strong_truncation(float(np.min(y)), a, d, tol)
    ks = np.arange(1, trunc.kmax + 1, 2, dtype=float)
    total = np.zeros(x.shape)
    for chunk in np.array_split(ks, max(1, len(ks) // 256)):
        c = _strong_coef(chunk, a, d)
        s = np.sin(np.outer(x, chunk) * np.pi / a)
        r = _sinh_ratio(chunk[None, :], y[:, None], a, b)
        total += (s * r) @ c
    return total


def f_strong_tensor(u: np.ndarray, v: np.ndarray, p: float, q: float, d: float, tol: float) -> np.ndarray:
    """``f(u_i, v_j; p, q)`` on a tensor grid, shape ``(len(v), len(u))``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.zeros((len(v), len(u)))
    vin = (v > 0) & (v < q)
    uin = (u > 0) & (u < p)
    out[v <= 0, :] = _edge_value(u, p, d)[None, :]
    out[:, ~uin] = 0.0
    out[v >= q, :] = 0.0
    if np.any(vin) and np.any(uin):
        trunc = strong_truncation(float(np.min(v[vin])), p, d, tol)
        ks = np.arange(1, trunc.kmax + 1, 2, dtype=float)
        c = _strong_coef(ks, p, d)
        S = np.sin(np.outer(u[uin], ks) * np.pi / p) * c[None, :]
        R = _sinh_ratio(ks[None, :], v[vin][:, None], p, q)
        block = R @ S.T
        out[np.ix_(vin, uin)] = block
    return out


def _four_terms_on_grid(grid: Grid, d: float, tol: float) -> tuple[np.ndarray, ...]:
    """Bottom, right, top and left edge solutions sampled on grid nodes."""
    a, b = grid.domain.a, grid.domain.b
    x, y = grid.x, grid.y
    bottom = f_strong_tensor(x, y, a, b, d, tol)
    top = f_strong_tensor(x, b - y, a, b, d, tol)
    # f(y, a - x; b, a): tensor over (u=y, v=a-x) gives shape (nx, ny)
    right = f_strong_tensor(y, a - x, b, a, d, tol).T
    left = f_strong_tensor(y, x, b, a, d, tol).T
    return bottom, right, top, left


def limit_strong_Q(x, y, domain: RectDomain, d: float, tol: float = 1e-12):
    """Large-epsilon strong-anchoring profile ``(q11, q12)`` at points."""
    a, b = domain.a, domain.b
    t = tol / 4
    q11 = (
        f_strong(x, y, a, b, d, t)
        - f_strong(y, a - np.asarray(x, dtype=float), b, a, d, t)
        + f_strong(x, b - np.asarray(y, dtype=float), a, b, d, t)
        - f_strong(y, x, b, a, d, t)
    )
    return q11, np.zeros_like(np.asarray(q11, dtype=float))


def limit_strong_grid(grid: Grid, d: float, tol: float = 1e-12):
    """:func:`limit_strong_Q` sampled on every grid node, boundary set to the trace."""
    from .boundary import dirichlet_trace

    bottom, right, top, left = _four_terms_on_grid(grid, d, tol / 4)
    q11 = bottom - right + top - left
    g1, _ = dirichlet_trace(grid, d)
    bnd = grid.boundary_mask()
    q11[bnd] = g1[bnd]
    return q11, np.zeros(grid.shape)


# ----------------------------------------------------------------------------
# Robin series


@dataclass(frozen=True)
class RobinRoots:
    tau: float
    a: float
    roots: np.ndarray

    def residuals(self) -> np.ndarray:
        """Normalised residual ``((p^2 - tau^2) sin(pa) - 2 tau p cos(pa)) / (p^2 + tau^2)``."""
        p, t = self.roots, self.tau
        return ((p**2 - t**2) * np.sin(p * self.a) - 2 * t * p * np.cos(p * self.a)) / (p**2 + t**2)


def robin_roots(tau: float, a: float, n_roots: int) -> RobinRoots:
    """First ``n_roots`` positive solutions of ``tan(pa) = 2 tau p / (p^2 - tau^2)``.

    Uses the equivalent monotone form ``p a - 2 atan(tau/p) = (k-1) pi`` which
    has exactly one root in ``((k-1) pi/a, k pi/a)``.
    """
    if not (tau > 0 and a > 0):
        raise ValueError("tau and a must be positive")
    roots = np.empty(n_roots)
    for k in range(1, n_roots + 1):
        lo, hi = (k - 1) * np.pi / a, k * np.pi / a

        def g(p, k=k):
            return p * a - 2 * np.arctan(tau / p) - (k - 1) * np.pi

        lo_eval = lo if k > 1 else 1e-300
        roots[k - 1] = brentq(g, lo_eval, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return RobinRoots(float(tau), float(a), roots)


def _robin_terms(tau: float, a: float, b: float, n_roots: int):
    p = robin_roots(tau, a, n_roots).roots
    norm2 = (p**2 + tau**2) * a / 2 + (p**2 - tau**2) * np.sin(2 * p * a) / (4 * p) + tau * np.sin(p * a) ** 2
    proj = np.sin(p * a) + tau * (1 - np.cos(p * a)) / p
    return p, proj / norm2


def _robin_y(p: np.ndarray, y: np.ndarray, tau: float, b: float) -> np.ndarray:
    """``tau (p cosh(py) + tau sinh(py)) / ((p^2+tau^2) sinh(pb) + 2 tau p cosh(pb))``, overflow-free."""
    num = (p + tau) * np.exp(p * (y - b)) + (p - tau) * np.exp(-p * (y + b))
    den = (p + tau) ** 2 - (p - tau) ** 2 * np.exp(-2 * p * b)
    return tau * num / den


def robin_default_roots(vgap: float, a: float, tol: float = 1e-12) -> int:
    """Roots needed for the tail at distance ``vgap`` from the data edge to drop below ``tol``."""
    if vgap <= 0:
        return 20_000
    n = int(np.ceil(a * np.log(1 / tol) / (np.pi * vgap))) + 8
    return int(min(max(n, 16), 20_000))


def f_weak(x, y, a: float, b: float, tau: float, n_roots: int | None = None):
    """Harmonic ``f`` with Robin data ``tau f + df/dnu = tau`` on ``y = b`` and 0 elsewhere."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    if n_roots is None:
        n_roots = robin_default_roots(float(np.min(b - y)), a)
    p, coef = _robin_terms(tau, a, b, n_roots)
    out = np.zeros(x.shape)
    flat_x, flat_y = x.ravel(), y.ravel()
    res = np.zeros(flat_x.shape)
    for chunk in np.array_split(np.arange(n_roots), max(1, n_roots // 512)):
        pk = p[chunk]
        X = pk[None, :] * np.cos(np.outer(flat_x, pk)) + tau * np.sin(np.outer(flat_x, pk))
        Y = _robin_y(pk[None, :], flat_y[:, None], tau, b)
        res += (X * Y) @ coef[chunk]
    out = res.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def f_weak_dy(x, y, a: float, b: float, tau: float, n_roots: int):
    """Term-wise ``df/dy`` of :func:`f_weak`."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    p, coef = _robin_terms(tau, a, b, n_roots)
    X = p[None, :] * np.cos(np.outer(x, p)) + tau * np.sin(np.outer(x, p))
    num = (p + tau) * np.exp(p * (y[:, None] - b)) - (p - tau) * np.exp(-p * (y[:, None] + b))
    den = (p + tau) ** 2 - (p - tau) ** 2 * np.exp(-2 * p * b)
    dY = tau * p * num / den
    return (X * dY) @ coef


def limit_weak_Q11(x, y, domain: RectDomain, tau: float, n_roots: int | None = None):
    """Large-epsilon weak-anchoring ``q11`` (``q12`` vanishes identically)."""
    a, b = domain.a, domain.b
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (
        f_weak(x, b - y, a, b, tau, n_roots)
        - f_weak(y, x, b, a, tau, n_roots)
        + f_weak(x, y, a, b, tau, n_roots)
        - f_weak(y, a - x, b, a, tau, n_roots)
    )


def limit_weak_grid(grid: Grid, tau: float, n_roots: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    X, Y = grid.mesh()
    if n_roots is None:
        n_roots = robin_default_roots(min(grid.hx, grid.hy), max(grid.domain.a, grid.domain.b), 1e-10)
    q11 = limit_weak_Q11(X, Y, grid.domain, tau, n_roots)
    return q11, np.zeros(grid.shape)


# ----------------------------------------------------------------------------
# Small-epsilon director angle


def theta_harmonic(d1, d2, d3, d4, domain: RectDomain, x, y, tol: float = 1e-12):
    """Harmonic angle with constant values on the bottom, right, top and left edges."""
    a, b = domain.a, domain.b
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = tol / 4
    return (
        d1 * f_strong(x, y, a, b, 0.0, t)
        + d2 * f_strong(y, a - x, b, a, 0.0, t)
        + d3 * f_strong(x, b - y, a, b, 0.0, t)
        + d4 * f_strong(y, x, b, a, 0.0, t)
    )


def theta_harmonic_grid(grid: Grid, dvals, tol: float = 1e-12) -> np.ndarray:
    """:func:`theta_harmonic` on all grid nodes; boundary nodes take the edge trace."""
    from .boundary import theta_trace

    bottom, right, top, left = _four_terms_on_grid(grid, 0.0, tol / 4)
    d1, d2, d3, d4 = dvals
    th = d1 * bottom + d2 * right + d3 * top + d4 * left
    bnd = grid.boundary_mask()
    th[bnd] = theta_trace(grid, d1, d2, d3, d4)[bnd]
    return th


def theta_state(state: str, domain: RectDomain, x, y, tol: float = 1e-12):
    return theta_harmonic(*TABLE_STATES[state], domain, x, y, tol)


def _kernel_grad(u, v, p):
    """Gradient of ``(2/pi) atan(sin(pi u/p) / sinh(pi v/p))``, the strip sum of the odd series."""
    su, cu = np.sin(np.pi * u / p), np.cos(np.pi * u / p)
    sv, cv = np.sinh(np.pi * v / p), np.cosh(np.pi * v / p)
    den = su**2 + sv**2
    fac = 2.0 / p
    return fac * cu * sv / den, -fac * su * cv / den


def grad_f0(u, v, p: float, q: float):
    """``(df/du, df/dv)`` of the ``d = 0`` series ``f(u, v; p, q)``.

    The series is summed in closed form: the sinh ratio expands into images
    ``exp(-k c (2mq + v)) - exp(-k c (2mq + 2q - v))`` and each image sums to
    the arctan kernel, so the result is the term-wise derivative without
    truncating in ``k``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    du = np.zeros(np.broadcast(u, v).shape)
    dv = np.zeros_like(du)
    m = 0
    while True:
        a1, b1 = _kernel_grad(u, 2 * m * q + v, p)
        a2, b2 = _kernel_grad(u, 2 * m * q + 2 * q - v, p)
        du += a1 - a2
        dv += b1 + b2
        m += 1
        if 8.0 / p * np.exp(-np.pi * 2 * m * q / p) < 1e-17:
            return du, dv


def _theta_gradient(dvals, domain: RectDomain, x, y):
    a, b = domain.a, domain.b
    d1, d2, d3, d4 = dvals
    gx = np.zeros(x.shape)
    gy = np.zeros(x.shape)
    fu, fv = grad_f0(x, y, a, b)
    gx += d1 * fu
    gy += d1 * fv
    fu, fv = grad_f0(y, a - x, b, a)
    gx -= d2 * fv
    gy += d2 * fu
    fu, fv = grad_f0(x, b - y, a, b)
    gx += d3 * fu
    gy -= d3 * fv
    fu, fv = grad_f0(y, x, b, a)
    gx += d4 * fv
    gy += d4 * fu
    return gx, gy


def quadrant_dirichlet_energy(dvals, domain: RectDomain, rho: float, n_quad: int = 64) -> float:
    """``int |grad theta|^2`` over ``[0,a/2]x[0,b/2]`` minus the disk of radius ``rho`` at the origin.

    Polar Gauss-Legendre quadrature in ``(log r, phi)`` about the singular corner.
    """
    a, b = domain.a, domain.b
    if not 0 < rho < min(a, b) / 2:
        raise ValueError("cutoff radius must lie inside the quadrant")
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    phic = np.arctan2(b / 2, a / 2)
    total = 0.0
    for lo, hi in ((0.0, phic), (phic, np.pi / 2)):
        phi = 0.5 * (hi - lo) * (xg + 1) + lo
        wphi = 0.5 * (hi - lo) * wg
        with np.errstate(divide="ignore"):
            rmax = np.minimum((a / 2) / np.cos(phi), (b / 2) / np.maximum(np.sin(phi), 1e-300))
        tlo = np.log(rho)
        thi = np.log(rmax)
        T = 0.5 * (thi - tlo)[:, None] * (xg[None, :] + 1) + tlo
        W = (0.5 * (thi - tlo)[:, None] * wg[None, :]) * wphi[:, None]
        r = np.exp(T)
        X = r * np.cos(phi)[:, None]
        Y = r * np.sin(phi)[:, None]
        gx, gy = _theta_gradient(dvals, domain, X.ravel(), Y.ravel())
        integrand = (gx**2 + gy**2) * (r.ravel() ** 2)
        total += float(np.sum(W.ravel() * integrand))
    return total


def dirichlet_energy_compare(domain: RectDomain, rhos=(1e-1, 1e-2, 1e-3), states=("D1", "R3"),
                             n_quad: int = 64) -> dict[float, tuple[float, float]]:
    """Quadrant Dirichlet energies of two table states for each corner cutoff."""
    if domain.a < domain.b:
        raise ValueError("comparison assumes a >= b")
    return {
        rho: (
            quadrant_dirichlet_energy(TABLE_STATES[states[0]], domain, rho, n_quad),
            quadrant_dirichlet_energy(TABLE_STATES[states[1]], domain, rho, n_quad),
        )
        for rho in rhos
    }
