"""Rectangular domain, uniform node grid and the field containers living on it.

Arrays are stored with shape ``(ny, nx)`` and indexed ``[j, i]`` so that node
``(i, j)`` sits at ``(i * hx, j * hy)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class RectDomain:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.a <= 0 or self.b <= 0:
            raise ValueError(f"domain sides must be positive and finite, got a={self.a}, b={self.b}")

    @property
    def aspect(self) -> float:
        return self.a / self.b

    @property
    def area(self) -> float:
        return self.a * self.b

    @property
    def is_square(self) -> bool:
        return abs(self.a - self.b) <= 1e-12


@dataclass(frozen=True)
class Grid:
    domain: RectDomain
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3 nodes per axis, got {self.nx}x{self.ny}")

    @property
    def hx(self) -> float:
        return self.domain.a / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.domain.b / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def x(self) -> np.ndarray:
        # i * hx rather than linspace so coordinates are exactly reproducible
        return np.arange(self.nx) * self.hx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.hy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``X, Y`` of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask()

    def node_weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights of every node."""
        wx = np.full(self.nx, self.hx)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny, self.hy)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx)

    def boundary_lengths(self) -> np.ndarray:
        """Trapezoidal line-quadrature weights along the boundary (zero inside)."""
        ell = np.zeros(self.shape)
        ell[0, :] += self.hx
        ell[-1, :] += self.hx
        ell[:, 0] += self.hy
        ell[:, -1] += self.hy
        ell[0, [0, -1]] -= self.hx / 2
        ell[-1, [0, -1]] -= self.hx / 2
        ell[[0, -1], 0] -= self.hy / 2
        ell[[0, -1], -1] -= self.hy / 2
        return ell

    def nearest_node(self, x: float, y: float) -> tuple[int, int]:
        """Index ``(j, i)`` of the node closest to ``(x, y)``."""
        i = int(np.clip(round(x / self.hx), 0, self.nx - 1))
        j = int(np.clip(round(y / self.hy), 0, self.ny - 1))
        return j, i

    def center_value(self, arr: np.ndarray) -> float:
        """Bilinear interpolation of a nodal array at the domain centre."""
        return self.interpolate(arr, self.domain.a / 2, self.domain.b / 2)

    def interpolate(self, arr: np.ndarray, x: float, y: float) -> float:
        fx = min(max(x / self.hx, 0.0), self.nx - 1.0)
        fy = min(max(y / self.hy, 0.0), self.ny - 1.0)
        i0 = min(int(np.floor(fx)), self.nx - 2)
        j0 = min(int(np.floor(fy)), self.ny - 2)
        tx, ty = fx - i0, fy - j0
        return float(
            (1 - tx) * (1 - ty) * arr[j0, i0]
            + tx * (1 - ty) * arr[j0, i0 + 1]
            + (1 - tx) * ty * arr[j0 + 1, i0]
            + tx * ty * arr[j0 + 1, i0 + 1]
        )


def make_grid(domain: RectDomain, h: float) -> Grid:
    """Uniform grid with spacing as close as possible to ``h`` on both axes."""
    if not np.isfinite(h) or h <= 0:
        raise ValueError(f"grid spacing must be positive, got {h}")
    nx = int(round(domain.a / h)) + 1
    ny = int(round(domain.b / h)) + 1
    if nx < 3 or ny < 3:
        raise ValueError(f"spacing h={h} too coarse for a {domain.a}x{domain.b} domain")
    return Grid(domain, nx, ny)


@dataclass
class QField:
    """The two independent components of the reduced Q-tensor on a grid."""

    grid: Grid
    q11: np.ndarray
    q12: np.ndarray

    def __post_init__(self):
        self.q11 = np.asarray(self.q11, dtype=float).reshape(self.grid.shape)
        self.q12 = np.asarray(self.q12, dtype=float).reshape(self.grid.shape)

    @classmethod
    def zeros(cls, grid: Grid) -> "QField":
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    @classmethod
    def uniform(cls, grid: Grid, q11: float, q12: float) -> "QField":
        return cls(grid, np.full(grid.shape, float(q11)), np.full(grid.shape, float(q12)))

    def copy(self) -> "QField":
        return QField(self.grid, self.q11.copy(), self.q12.copy())

    def stack(self) -> np.ndarray:
        return np.stack([self.q11, self.q12])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q11)) and np.all(np.isfinite(self.q12)))

    def max_abs_diff(self, other: "QField") -> float:
        return float(max(np.max(np.abs(self.q11 - other.q11)), np.max(np.abs(self.q12 - other.q12))))

    def __add__(self, other: "QField") -> "QField":
        return QField(self.grid, self.q11 + other.q11, self.q12 + other.q12)

    def __sub__(self, other: "QField") -> "QField":
        return QField(self.grid, self.q11 - other.q11, self.q12 - other.q12)

    def __mul__(self, c: float) -> "QField":
        return QField(self.grid, c * self.q11, c * self.q12)

    __rmul__ = __mul__


@dataclass
class ThetaField:
    grid: Grid
    theta: np.ndarray
    zero_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).reshape(self.grid.shape)
        if self.zero_mask is None:
            self.zero_mask = np.zeros(self.grid.shape, dtype=bool)


def s2_field(field: QField) -> np.ndarray:
    """``tr(Q^2)/2 = q11^2 + q12^2`` at every node."""
    return field.q11**2 + field.q12**2


def q_to_theta_s(field: QField, s_floor: float = 1e-12) -> tuple[ThetaField, np.ndarray]:
    """Director angle and scalar order of a Q-field.

    ``theta = atan2(q12, q11) / 2`` lies in ``(-pi/2, pi/2]``. Where ``s`` is
    below ``s_floor`` the angle is set to 0 and flagged in ``zero_mask``.
    """
    s = np.hypot(field.q11, field.q12)
    theta = 0.5 * np.arctan2(field.q12, field.q11)
    zero = s <= s_floor
    theta = np.where(zero, 0.0, theta)
    return ThetaField(field.grid, theta, zero), s


def lift_theta(theta: ThetaField, s: float | np.ndarray = 1.0) -> QField:
    """Q-field ``s (cos 2theta, sin 2theta)`` of a director angle field."""
    return QField(theta.grid, s * np.cos(2 * theta.theta), s * np.sin(2 * theta.theta))


FIELD_CSV_HEADER = ("x", "y", "q11", "q12", "s2")


def write_field_csv(field: QField, path: str | Path) -> None:
    """Dump a field as ``x,y,q11,q12,s2`` rows, j outer and i inner."""
    g = field.grid
    X, Y = g.mesh()
    s2 = s2_field(field)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(FIELD_CSV_HEADER) + "\n")
        for j in range(g.ny):
            for i in range(g.nx):
                fh.write(
                    f"{X[j, i]:.17g},{Y[j, i]:.17g},{field.q11[j, i]:.17g},{field.q12[j, i]:.17g},{s2[j, i]:.17g}\n"
                )


def read_field_csv(path: str | Path) -> QField:
    """Inverse of :func:`write_field_csv`; the grid is recovered from the coordinates."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != FIELD_CSV_HEADER:
            raise ValueError(f"unexpected field CSV header {header!r}")
        rows = np.array([[float(v) for v in row] for row in reader])
    xs = np.unique(rows[:, 0])
    ys = np.unique(rows[:, 1])
    nx, ny = len(xs), len(ys)
    if nx * ny != len(rows):
        raise ValueError("field CSV is not a full tensor-product grid")
    grid = Grid(RectDomain(float(xs[-1]), float(ys[-1])), nx, ny)
    return QField(grid, rows[:, 2].reshape(ny, nx), rows[:, 3].reshape(ny, nx))
