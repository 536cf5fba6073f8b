"""Solution labels, low-order (defect) regions and vertex winding degrees."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .boundary import DEFAULT_D, TABLE_STATES
from .grid import QField

LABELS = ("D1", "D2", "R1", "R2", "R3", "R4", "BD1", "BD2", "WORS", "Unknown")


@dataclass(frozen=True)
class Tolerances:
    bd_tol: float = 1e-3
    probe_tol: float = np.pi / 4
    s_floor: float = 1e-3  # relative s below which loop angles are meaningless


@dataclass(frozen=True)
class SolutionClass:
    label: str
    confidence: float
    probes: tuple[float, ...] | None = None


def _interior_scale(field_: QField) -> float:
    s = np.hypot(field_.q11, field_.q12)[1:-1, 1:-1]
    return float(np.max(s)) if s.size else 0.0


def probe_offset(grid, d: float = DEFAULT_D) -> tuple[int, int]:
    """Node offsets ``(kx, ky)`` of the inner probe loop: ``max(3h, 2d)`` from the boundary."""
    kx = max(3, int(np.ceil(2 * d / grid.hx - 1e-9)))
    ky = max(3, int(np.ceil(2 * d / grid.hy - 1e-9)))
    kx = min(kx, (grid.nx - 1) // 2 - 1)
    ky = min(ky, (grid.ny - 1) // 2 - 1)
    return max(kx, 1), max(ky, 1)


def rect_loop(j0: int, j1: int, i0: int, i1: int) -> tuple[np.ndarray, np.ndarray]:
    """Anticlockwise node loop on the rectangle ``[i0,i1] x [j0,j1]`` starting at ``(j0, i0)``."""
    js, is_ = [], []
    for i in range(i0, i1):
        js.append(j0), is_.append(i)
    for j in range(j0, j1):
        js.append(j), is_.append(i1)
    for i in range(i1, i0, -1):
        js.append(j1), is_.append(i)
    for j in range(j1, j0, -1):
        js.append(j), is_.append(i0)
    return np.array(js), np.array(is_)


def loop_rotation(field_: QField, js: np.ndarray, is_: np.ndarray) -> np.ndarray:
    """Unwrapped director angle along a node sequence (closed by repeating the first node)."""
    phi = np.arctan2(field_.q12[js, is_], field_.q11[js, is_])
    phi = np.append(phi, phi[0])
    return np.unwrap(phi) / 2


def loop_winding(field_: QField, js: np.ndarray, is_: np.ndarray) -> float:
    th = loop_rotation(field_, js, is_)
    return float(np.round((th[-1] - th[0]) / np.pi) / 2)


def probe_angles(field_: QField, d: float = DEFAULT_D) -> tuple[tuple[float, float, float, float], float, float]:
    """Director angle at the bottom, right, top and left probe nodes.

    The angle is unwrapped anticlockwise along the inner loop starting at the
    bottom probe and shifted so the bottom value lies in ``(-pi/2, pi/2]``.
    Also returns the loop winding and the smallest relative ``s`` on the loop.
    """
    g = field_.grid
    kx, ky = probe_offset(g, d)
    j0, j1, i0, i1 = ky, g.ny - 1 - ky, kx, g.nx - 1 - kx
    js, is_ = rect_loop(j0, j1, i0, i1)
    ic, jc = (g.nx - 1) // 2, (g.ny - 1) // 2
    start = int(np.flatnonzero((js == j0) & (is_ == ic))[0])
    js, is_ = np.roll(js, -start), np.roll(is_, -start)
    th = loop_rotation(field_, js, is_)
    shift = np.pi * np.round(th[0] / np.pi)
    th = th - shift
    if th[0] <= -np.pi / 2:
        th = th + np.pi

    def at(j, i):
        return float(th[int(np.flatnonzero((js == j) & (is_ == i))[0])])

    probes = (at(j0, ic), at(jc, i1), at(j1, ic), at(jc, i0))
    winding = float(np.round((th[-1] - th[0]) / np.pi) / 2)
    scale = _interior_scale(field_)
    smin = float(np.min(np.hypot(field_.q11[js, is_], field_.q12[js, is_]))) / scale if scale > 0 else 0.0
    return probes, winding, smin


def classify(field_: QField, tols: Tolerances = Tolerances(), d: float = DEFAULT_D) -> SolutionClass:
    """Decision tree: BD family by vanishing ``q12``, otherwise the nearest ``TABLE_STATES`` row."""
    g = field_.grid
    scale = _interior_scale(field_)
    if not scale > 0 or not field_.is_finite():
        return SolutionClass("Unknown", 0.0)
    q12max = float(np.max(np.abs(field_.q12[1:-1, 1:-1]))) / scale
    if q12max <= tols.bd_tol:
        centre = g.center_value(field_.q11) / scale
        margin = tols.bd_tol - q12max
        if abs(centre) < tols.bd_tol:
            if g.domain.is_square:
                return SolutionClass("WORS", min(margin, tols.bd_tol - abs(centre)))
            return SolutionClass("Unknown", 0.0)
        label = "BD2" if centre > 0 else "BD1"
        return SolutionClass(label, min(margin, abs(centre) - tols.bd_tol))

    probes, winding, smin = probe_angles(field_, d)
    if winding != 0 or smin < tols.s_floor:
        return SolutionClass("Unknown", 0.0, probes)
    best, dist = "Unknown", np.inf
    for name, row in TABLE_STATES.items():
        dd = max(abs(p - r) for p, r in zip(probes, row))
        if dd < dist:
            best, dist = name, dd
    if dist > tols.probe_tol:
        return SolutionClass("Unknown", 0.0, probes)
    return SolutionClass(best, float(tols.probe_tol - dist), probes)


# ----------------------------------------------------------------------------
# vertex degrees


@dataclass(frozen=True)
class VertexDegrees:
    """Winding degrees at ``(0,0), (a,0), (a,b), (0,b)``."""

    values: tuple[float, float, float, float]

    def __iter__(self):
        return iter(self.values)

    @property
    def total(self) -> float:
        return float(sum(self.values))

    @property
    def excess_charges(self) -> tuple[float, ...]:
        return tuple(excess_charge(w) for w in self.values)


def _is_multiple(x: float, unit: float, offset: float = 0.0, tol: float = 1e-9) -> bool:
    r = (x - offset) / unit
    return abs(r - round(r)) <= tol


def vertex_degrees(theta_bc) -> VertexDegrees:
    """Degrees from edge constants ``(bottom, right, top, left)``.

    Each degree is the anticlockwise rotation of the director around the
    corner, from one edge to the next, divided by ``2 pi``.
    """
    d1, d2, d3, d4 = (float(v) for v in theta_bc)
    for v in (d1, d3):
        if not _is_multiple(v, np.pi):
            raise ValueError(f"horizontal edge angle {v} is not a multiple of pi")
    for v in (d2, d4):
        if not _is_multiple(v, np.pi, np.pi / 2):
            raise ValueError(f"vertical edge angle {v} is not an odd multiple of pi/2")
    tp = 2 * np.pi
    return VertexDegrees(((d4 - d1) / tp, (d1 - d2) / tp, (d2 - d3) / tp, (d3 - d4) / tp))


def excess_charge(omega: float) -> float:
    """``(|n| - 1) / 2`` for ``omega = n / 4``."""
    n = int(round(4 * omega))
    return (abs(n) - 1) / 2


def effective_vertex_degrees(field_: QField, radius: float | None = None) -> VertexDegrees:
    """Degrees measured from the field on a quarter arc of given radius around each corner.

    The arc is traversed anticlockwise about the corner, from the first edge to
    the second; nearest-node sampling keeps it on the grid.
    """
    g = field_.grid
    a, b = g.domain.a, g.domain.b
    h = max(g.hx, g.hy)
    if radius is None:
        radius = max(2 * DEFAULT_D, 4 * h)
    n = max(16, int(np.ceil(np.pi / 2 * radius / (0.5 * min(g.hx, g.hy)))))
    corners = ((0.0, 0.0, 0.0), (a, 0.0, np.pi / 2), (a, b, np.pi), (0.0, b, 3 * np.pi / 2))
    out = []
    for cx, cy, start in corners:
        ang = start + np.linspace(0, np.pi / 2, n)
        xs = cx + radius * np.cos(ang)
        ys = cy + radius * np.sin(ang)
        idx = [g.nearest_node(x, y) for x, y in zip(xs, ys)]
        js = np.array([j for j, _ in idx])
        is_ = np.array([i for _, i in idx])
        phi = np.unwrap(np.arctan2(field_.q12[js, is_], field_.q11[js, is_])) / 2
        out.append(float(phi[-1] - phi[0]) / (2 * np.pi))
    # quantise to quarter turns
    return VertexDegrees(tuple(float(np.round(4 * w) / 4) for w in out))


# ----------------------------------------------------------------------------
# defects


@dataclass
class DefectSet:
    points: list[tuple[float, float, float]] = field(default_factory=list)
    lines: list[dict] = field(default_factory=list)
    low_order_mask: np.ndarray | None = None

    @property
    def total_winding(self) -> float:
        return float(sum(w for _, _, w in self.points))

    def to_json(self, degrees: VertexDegrees | None = None) -> str:
        doc = {
            "points": [{"x": x, "y": y, "winding": w} for x, y, w in self.points],
            "lines": self.lines,
            "vertex_degrees": list(degrees.values) if degrees is not None else [],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _diagonal_fraction(mask: np.ndarray, grid, anti: bool) -> float:
    n = 4 * max(grid.nx, grid.ny)
    t = np.linspace(0.1, 0.9, n)
    xs = t * grid.domain.a
    ys = (1 - t if anti else t) * grid.domain.b
    hits = [mask[grid.nearest_node(x, y)] for x, y in zip(xs, ys)]
    return float(np.mean(hits))


def _edge_feature(comp: np.ndarray, grid) -> str:
    X, Y = grid.mesh()
    a, b = grid.domain.a, grid.domain.b
    xs, ys = X[comp], Y[comp]
    span = max(np.ptp(xs) / a, np.ptp(ys) / b)
    if span <= 0.15:
        cx, cy = np.mean(xs) / a, np.mean(ys) / b
        return f"corner:({'a' if cx > 0.5 else '0'},{'b' if cy > 0.5 else '0'})"
    if np.all(xs <= 0.25 * a):
        return "edge:left"
    if np.all(xs >= 0.75 * a):
        return "edge:right"
    if np.all(ys <= 0.25 * b):
        return "edge:bottom"
    if np.all(ys >= 0.75 * b):
        return "edge:top"
    return "boundary"


def detect_defects(field_: QField, s2_threshold: float | None = None) -> DefectSet:
    """Low-order components of ``s^2`` with their windings or boundary-feature labels.

    The default threshold is ``0.1 * max interior s^2``.
    """
    g = field_.grid
    s2 = field_.q11**2 + field_.q12**2
    if s2_threshold is None:
        s2_threshold = 0.1 * float(np.max(s2[1:-1, 1:-1]))
    mask = s2 < s2_threshold
    out = DefectSet(low_order_mask=mask)
    if not mask.any():
        return out
    labels, n = ndimage.label(mask, structure=np.ones((3, 3)))
    X, Y = g.mesh()
    bnd = g.boundary_mask()
    diag_seen = set()
    for k in range(1, n + 1):
        comp = labels == k
        js, is_ = np.nonzero(comp)
        bbox = [float(X[comp].min()), float(Y[comp].min()), float(X[comp].max()), float(Y[comp].max())]
        diags = [name for name, anti in (("diagonal:main", False), ("diagonal:anti", True))
                 if _diagonal_fraction(comp, g, anti) >= 0.9]
        if diags:
            for name in diags:
                if name not in diag_seen:
                    diag_seen.add(name)
                    out.lines.append({"edge_or_diagonal": name, "bbox": bbox})
            continue
        if np.any(comp & bnd):
            out.lines.append({"edge_or_diagonal": _edge_feature(comp, g), "bbox": bbox})
            continue
        j0, j1 = js.min() - 2, js.max() + 2
        i0, i1 = is_.min() - 2, is_.max() + 2
        if j0 < 1 or i0 < 1 or j1 > g.ny - 2 or i1 > g.nx - 2:
            out.lines.append({"edge_or_diagonal": "boundary", "bbox": bbox})
            continue
        lj, li = rect_loop(j0, j1, i0, i1)
        w = loop_winding(field_, lj, li)
        if w != 0:
            wts = s2_threshold - s2[comp]
            xc = float(np.sum(X[comp] * wts) / np.sum(wts))
            yc = float(np.sum(Y[comp] * wts) / np.sum(wts))
            out.points.append((xc, yc, w))
    out.points.sort()
    return out
