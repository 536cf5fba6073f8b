"""Tangent boundary data: the trapezoidal Dirichlet trace, Robin anchoring and
edge-constant director angles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid

DIRICHLET = "dirichlet"
ROBIN = "robin"
DEFAULT_D = 0.03

# Edge constants (bottom, right, top, left) of the small-epsilon director angle.
HALF_PI = np.pi / 2
TABLE_STATES: dict[str, tuple[float, float, float, float]] = {
    "D1": (0.0, +HALF_PI, 0.0, +HALF_PI),
    "D2": (0.0, -HALF_PI, 0.0, -HALF_PI),
    "R1": (0.0, -HALF_PI, -np.pi, -HALF_PI),
    "R2": (0.0, +HALF_PI, +np.pi, +HALF_PI),
    "R3": (0.0, -HALF_PI, 0.0, +HALF_PI),
    "R4": (0.0, +HALF_PI, 0.0, -HALF_PI),
}
NONTRIVIAL_SEED = (0.0, HALF_PI, 2 * np.pi, 5 * HALF_PI)


@dataclass(frozen=True)
class BoundarySpec:
    mode: str = DIRICHLET
    d: float = DEFAULT_D
    tau: float | None = None

    def __post_init__(self):
        if self.mode not in (DIRICHLET, ROBIN):
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        if not (self.d > 0):
            raise ValueError(f"mismatch width d must be positive, got {self.d}")
        if self.mode == ROBIN and (self.tau is None or not self.tau > 0):
            raise ValueError(f"Robin anchoring needs tau > 0, got {self.tau}")

    def validate_for(self, a: float, b: float, strict: bool = False) -> None:
        """Check ``d`` against the domain; ``strict`` uses the tighter quarter bound."""
        bound = min(a, b) / (4 if strict else 2)
        if not self.d < bound:
            raise ValueError(f"d={self.d} must be below {bound} on a {a}x{b} domain")


def trapezoid(t, d: float):
    """``min(t/d, 1, (1-t)/d)`` on ``[0, 1]``."""
    if not 0 < d < 0.5:
        raise ValueError(f"ramp width must lie in (0, 1/2), got {d}")
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12) or np.any(t > 1 + 1e-12):
        raise ValueError("trapezoid argument outside [0, 1]")
    t = np.clip(t, 0.0, 1.0)
    out = np.minimum(np.minimum(t / d, 1.0), (1.0 - t) / d)
    return float(out) if out.ndim == 0 else out


def dirichlet_trace(grid: Grid, d: float) -> tuple[np.ndarray, np.ndarray]:
    """Boundary values ``(g1, g2)`` on the full node array; interior entries are 0.

    Horizontal edges carry ``+T_{d/a}(x/a)``, vertical edges ``-T_{d/b}(y/b)``;
    both ramps vanish at the corners so the two formulas agree there.
    """
    a, b = grid.domain.a, grid.domain.b
    BoundarySpec(DIRICHLET, d).validate_for(a, b)
    g1 = np.zeros(grid.shape)
    tx = np.arange(grid.nx) / (grid.nx - 1)
    ty = np.arange(grid.ny) / (grid.ny - 1)
    horiz = trapezoid(tx, d / a)
    vert = -trapezoid(ty, d / b)
    g1[0, :] = horiz
    g1[-1, :] = horiz
    g1[:, 0] = vert
    g1[:, -1] = vert
    for j in (0, -1):
        for i in (0, -1):
            g1[j, i] = 0.0
    return g1, np.zeros(grid.shape)


def theta_trace(grid: Grid, d1: float, d2: float, d3: float, d4: float) -> np.ndarray:
    """Edge-constant director angle on the boundary (interior entries are 0).

    Edges are bottom (``d1``), right (``d2``), top (``d3``) and left (``d4``);
    corners take the mean of their two edges.
    """
    th = np.zeros(grid.shape)
    th[0, :] = d1
    th[:, -1] = d2
    th[-1, :] = d3
    th[:, 0] = d4
    th[0, 0] = 0.5 * (d1 + d4)
    th[0, -1] = 0.5 * (d1 + d2)
    th[-1, -1] = 0.5 * (d2 + d3)
    th[-1, 0] = 0.5 * (d3 + d4)
    return th
