"""Equilibrium solvers: damped Newton, steepest-descent relaxation and the
smallest eigenvalue of the second variation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .boundary import DIRICHLET, ROBIN
from .energy import EnergyParams, discretization, energy, jacobian, residual
from .grid import QField

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
FLOW_STOP_TOL = 1e-8


class NonConvergence(RuntimeError):
    def __init__(self, msg: str, report: "SolverReport"):
        super().__init__(msg)
        self.report = report


class SingularLinearization(RuntimeError):
    pass


class StepUnstable(RuntimeError):
    pass


class NotAnEquilibrium(ValueError):
    pass


@dataclass
class SolverReport:
    converged: bool
    iterations: int
    final_residual_norm: float
    energy: float
    history: list[float] = field(default_factory=list)


def _packed_residual(u: np.ndarray, template: QField, p: EnergyParams) -> tuple[QField, np.ndarray]:
    D = discretization(template.grid, p.bc)
    f = D.unpack(u, template)
    return f, D.pack(residual(f, p, check=False))


def newton_solve(
    init: QField,
    p: EnergyParams,
    tol: float = NEWTON_TOL,
    max_iter: int = 50,
    raise_on_failure: bool = False,
) -> tuple[QField, SolverReport]:
    """Damped Newton iteration with backtracking on the residual 2-norm.

    Raises :class:`SingularLinearization` when the Jacobian cannot be factorised.
    """
    D = discretization(init.grid, p.bc)
    D.check_boundary(init)
    field_ = init.copy()
    u = D.pack(field_)
    _, F = _packed_residual(u, field_, p)
    rnorm = float(np.max(np.abs(F)))
    history = [rnorm]
    it = 0
    while rnorm > tol and it < max_iter:
        J = jacobian(D.unpack(u, field_), p).tocsc()
        try:
            lu = spla.splu(J)
        except RuntimeError as exc:
            raise SingularLinearization(str(exc)) from exc
        step = lu.solve(-F)
        if not np.all(np.isfinite(step)):
            raise SingularLinearization("non-finite Newton step")
        merit = np.linalg.norm(F)
        alpha = 1.0
        while True:
            trial = u + alpha * step
            _, Ft = _packed_residual(trial, field_, p)
            if np.all(np.isfinite(Ft)) and np.linalg.norm(Ft) <= (1 - 1e-4 * alpha) * merit:
                break
            alpha *= 0.5
            if alpha < 1.0 / 1024:
                break
        u, F = trial, Ft
        rnorm = float(np.max(np.abs(F))) if np.all(np.isfinite(F)) else np.inf
        history.append(rnorm)
        it += 1
        if not np.isfinite(rnorm):
            break
    out = D.unpack(u, field_)
    converged = bool(rnorm <= tol)
    report = SolverReport(
        converged, it, rnorm, energy(out, p, check=False) if out.is_finite() else np.nan, history
    )
    if not converged and raise_on_failure:
        raise NonConvergence(f"Newton stopped after {it} iterations at residual {rnorm:.3e}", report)
    return out, report


# ----------------------------------------------------------------------------
# stability


def stability_operator(field_: QField, p: EnergyParams) -> tuple[sp.csr_matrix, sp.dia_matrix]:
    """Symmetric pair ``(A, M)``: the second variation is ``A v = lambda M v``.

    ``A = M (-J)`` with ``M`` the diagonal nodal mass on free unknowns, which
    is exactly a quarter of the discrete Hessian of the energy.
    """
    D = discretization(field_.grid, p.bc)
    M = sp.diags(D.mass_free)
    A = (M @ (-jacobian(field_, p))).tocsc()
    A = (A + A.T) * 0.5
    return A, M


def smallest_eigenvalue(
    field_: QField, p: EnergyParams, tol: float = 1e-8, check_tol: float = 1e-6
) -> tuple[float, QField]:
    """Smallest eigenvalue of the second variation at an equilibrium.

    Shift-invert Lanczos on ``A v = lambda M v`` with a shift below the
    lower bound ``-eps^-2`` of the spectrum. The eigenvector is returned with
    unit discrete L2 norm.
    """
    D = discretization(field_.grid, p.bc)
    r = residual(field_, p, check=False)
    rn = float(max(np.max(np.abs(r.q11)), np.max(np.abs(r.q12))))
    if not rn <= check_tol:
        raise NotAnEquilibrium(f"residual {rn:.3e} exceeds {check_tol:.1e}")
    A, M = stability_operator(field_, p)
    sigma = -1.0 / p.epsilon**2 - 1.0
    v0 = np.ones(A.shape[0]) + np.linspace(0.0, 1.0, A.shape[0])
    vals, vecs = spla.eigsh(A, k=1, M=M.tocsc(), sigma=sigma, which="LM", v0=v0, tol=tol * 1e-2)
    lam = float(vals[0])
    v = vecs[:, 0]
    v = v / np.sqrt(v @ (D.mass_free * v))
    # deterministic sign: largest component positive
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    vec = D.unpack(v, QField.zeros(field_.grid))
    return lam, vec


def rayleigh_quotient(field_: QField, p: EnergyParams, v: QField) -> float:
    D = discretization(field_.grid, p.bc)
    A, _ = stability_operator(field_, p)
    x = D.pack(v)
    return float(x @ (A @ x) / (x @ (D.mass_free * x)))


# ----------------------------------------------------------------------------
# relaxation


def stable_time_step(grid, p: EnergyParams) -> float:
    """Explicit Euler bound ``2 / lambda_max`` of the linearised flow about ``Q = 0``-ish states."""
    D = discretization(grid, p.bc)
    lam = 4 / grid.hx**2 + 4 / grid.hy**2 + 2 / p.epsilon**2
    if p.bc.mode == ROBIN:
        lam += float(np.max(D.robin))
    return 2.0 / lam


def default_time_step(grid, p: EnergyParams) -> float:
    h = min(grid.hx, grid.hy)
    return min(0.2 * h**2, 0.9 * stable_time_step(grid, p))


@dataclass
class Snapshot:
    time: float
    field: QField
    energy: float


@dataclass
class RelaxationTrajectory:
    snapshots: list[Snapshot]
    terminal_class: str
    steps: int = 0
    final_residual_norm: float = np.nan
    converged: bool = False
    dt: float = np.nan
    polished: bool = False

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.snapshots])

    @property
    def terminal(self) -> QField:
        return self.snapshots[-1].field


def _max_norm(r: QField) -> float:
    return float(max(np.max(np.abs(r.q11)), np.max(np.abs(r.q12))))


def gradient_flow(
    init: QField,
    p: EnergyParams,
    dt: float | None = None,
    stop_tol: float = FLOW_STOP_TOL,
    snap_every: int = 1000,
    max_steps: int = 2_000_000,
    polish_tol: float | None = None,
    classify_terminal: bool = True,
) -> RelaxationTrajectory:
    """Explicit Euler steepest descent ``Q <- Q + dt * residual(Q)``.

    ``dt`` is clamped below the stability bound. If the energy rises the step
    is halved (at most 10 times); three consecutive rises raise
    :class:`StepUnstable`. With ``polish_tol`` set, once the residual drops
    below it a Newton solve finishes the descent; it is accepted only if it
    converges without raising the energy.
    """
    D = discretization(init.grid, p.bc)
    D.check_boundary(init)
    if dt is None:
        dt = default_time_step(init.grid, p)
    if not dt > 0:
        raise ValueError("time step must be positive")
    dt = min(dt, 0.9 * stable_time_step(init.grid, p))

    q = init.copy()
    E = energy(q, p, check=False)
    t = 0.0
    snaps = [Snapshot(0.0, q.copy(), E)]
    halvings = 0
    rises = 0
    steps = 0
    polished = False
    r = residual(q, p, check=False)
    rn = _max_norm(r)
    while rn > stop_tol and steps < max_steps:
        if polish_tol is not None and rn <= polish_tol:
            cand, rep = newton_solve(q, p, tol=min(stop_tol, NEWTON_TOL))
            if rep.converged and rep.energy <= E + 1e-10 * max(1.0, abs(E)):
                q, E, rn = cand, rep.energy, rep.final_residual_norm
                polished = True
                break
            polish_tol = None
        trial = QField(q.grid, q.q11 + dt * r.q11, q.q12 + dt * r.q12)
        Et = energy(trial, p, check=False)
        if not np.isfinite(Et) or Et > E + 1e-12 * max(1.0, abs(E)):
            rises += 1
            if rises >= 3 or halvings >= 10:
                raise StepUnstable(f"energy increased {rises} times at step {steps} (dt={dt:.3e})")
            dt *= 0.5
            halvings += 1
            continue
        rises = 0
        q, E = trial, Et
        t += dt
        steps += 1
        r = residual(q, p, check=False)
        rn = _max_norm(r)
        if steps % snap_every == 0:
            snaps.append(Snapshot(t, q.copy(), E))
    if steps > 0 or polished:
        if snaps[-1].field is not q:
            snaps.append(Snapshot(t, q.copy(), E))
    label = "Unknown"
    if classify_terminal:
        from .classify import classify

        label = classify(q, d=p.bc.d).label
    return RelaxationTrajectory(snaps, label, steps, rn, bool(rn <= stop_tol), dt, polished)
