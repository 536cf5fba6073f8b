"""Pseudo-arclength continuation of equilibria in epsilon.

Two modes are available. ``"arclength"`` follows the solution curve through
folds and records them. ``"pathway"`` follows what happens to a state as
epsilon is pushed in one direction: at a fold in epsilon it tries to step
past the turning point with a natural-parameter solve; a nearby solution
means the curve met another branch (symmetry-breaking pitchfork) and the
pathway continues there, otherwise the branch ends at the fold.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .analytic import limit_strong_grid, limit_weak_grid, theta_harmonic_grid
from .boundary import DIRICHLET, TABLE_STATES
from .classify import SolutionClass, classify
from .energy import (
    EnergyParams,
    branch_measures,
    depsilon_residual,
    discretization,
    energy,
    jacobian,
    residual,
    residual_norm,
)
from .grid import Grid, QField, ThetaField, lift_theta
from .solvers import NEWTON_TOL, newton_solve, smallest_eigenvalue

log = logging.getLogger(__name__)

RANGE_END = "RangeEnd"
END_POINT = "EndPoint"
FOLD = "Fold"
BRANCH_CSV_HEADER = ("eps", "energy", "lambda_min", "class", "m11", "m12", "int_q12_sq")


class SeedNotConverged(ValueError):
    pass


class MissingTransition(LookupError):
    pass


@dataclass(frozen=True)
class StepPolicy:
    initial: float = 0.01
    cap: float = 0.05
    floor: float = 1e-5
    max_corrector: int = 5
    easy_iterations: int = 3
    easy_accepts_to_grow: int = 2
    max_halvings: int = 6
    tol: float = NEWTON_TOL


@dataclass
class BranchPoint:
    epsilon: float
    field: QField
    energy: float
    lambda_min: float
    class_label: SolutionClass
    m11: float
    m12: float
    int_q12_sq: float
    residual_norm: float = 0.0

    @property
    def stable(self) -> bool:
        return self.lambda_min > 0

    @property
    def tag(self) -> str:
        return ("s" if self.stable else "u") + self.class_label.label


@dataclass
class Transition:
    epsilon: float
    from_tag: str
    to_tag: str
    lo: int  # index of the last point before
    hi: int  # index of the first point after
    kind: str = "crossing"  # crossing | switch


@dataclass
class Fold:
    epsilon: float
    index: int


@dataclass
class Branch:
    points: list[BranchPoint]
    params: EnergyParams
    transitions: list[Transition] = field(default_factory=list)
    folds: list[Fold] = field(default_factory=list)
    terminated: str = RANGE_END
    seed_name: str = ""

    @property
    def grid(self) -> Grid:
        return self.points[0].field.grid

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([pt.epsilon for pt in self.points])

    def end_epsilon(self) -> float | None:
        if self.terminated != END_POINT:
            return None
        return self.folds[-1].epsilon if self.folds else self.points[-1].epsilon

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(BRANCH_CSV_HEADER)
        for pt in self.points:
            w.writerow([
                f"{pt.epsilon:.12g}", f"{pt.energy:.12g}", f"{pt.lambda_min:.10g}", pt.tag,
                f"{pt.m11:.12g}", f"{pt.m12:.12g}", f"{pt.int_q12_sq:.12g}",
            ])
        return buf.getvalue()


def make_point(fld: QField, p: EnergyParams, tol: float = NEWTON_TOL, eig_tol: float = 1e-8) -> BranchPoint:
    """Evaluate diagnostics of a converged equilibrium, re-checking its residual."""
    rn = residual_norm(fld, p)
    if not rn <= tol * 10:
        raise SeedNotConverged(f"residual {rn:.3e} above tolerance at eps={p.epsilon}")
    lam, _ = smallest_eigenvalue(fld, p, tol=eig_tol, check_tol=max(tol * 10, 1e-8))
    m = branch_measures(fld)
    return BranchPoint(
        p.epsilon, fld, energy(fld, p, check=False), lam, classify(fld, d=p.bc.d),
        m["m11"], m["m12"], m["int_q12_sq"], rn,
    )


# ----------------------------------------------------------------------------
# arclength machinery


class _Arc:
    """Packed unknowns, the weighted arclength metric and the bordered corrector."""

    def __init__(self, template: QField, p: EnergyParams):
        self.p = p
        self.template = template
        self.D = discretization(template.grid, p.bc)
        self.W = self.D.mass_free / template.grid.domain.area

    def field(self, u: np.ndarray) -> QField:
        return self.D.unpack(u, self.template)

    def R(self, u: np.ndarray, eps: float) -> np.ndarray:
        return self.D.pack(residual(self.field(u), self.p.with_epsilon(eps), check=False))

    def norm(self, du: np.ndarray, de: float) -> float:
        return float(np.sqrt(du @ (self.W * du) + de * de))

    def tangent_from_derivative(self, u: np.ndarray, eps: float, direction: int) -> tuple[np.ndarray, float]:
        pe = self.p.with_epsilon(eps)
        f = self.field(u)
        J = jacobian(f, pe).tocsc()
        du = spla.spsolve(J, -depsilon_residual(f, pe))
        n = self.norm(du, 1.0)
        return direction * du / n, direction / n

    def correct(self, u0, e0, tu, te, policy: StepPolicy):
        """Newton on ``R(u, eps) = 0`` with the hyperplane constraint through the predictor."""
        u, e = u0.copy(), e0
        wt = self.W * tu
        for it in range(1, policy.max_corrector + 1):
            pe = self.p.with_epsilon(e)
            f = self.field(u)
            F = self.D.pack(residual(f, pe, check=False))
            g = wt @ (u - u0) + te * (e - e0)
            J = jacobian(f, pe)
            Re = depsilon_residual(f, pe)
            A = sp.bmat([[J, sp.csc_matrix(Re[:, None])], [sp.csr_matrix(wt[None, :]), sp.csr_matrix([[te]])]], format="csc")
            try:
                step = spla.splu(A).solve(-np.append(F, g))
            except RuntimeError:
                return None
            if not np.all(np.isfinite(step)):
                return None
            u = u + step[:-1]
            e = e + step[-1]
            if not e > 0:
                return None
            rn = float(np.max(np.abs(self.R(u, e))))
            if rn <= policy.tol:
                return u, e, it
            if not np.isfinite(rn) or rn > 1e8:
                return None
        return None


def _parabola_vertex(s: np.ndarray, e: np.ndarray) -> float:
    c = np.polyfit(s, e, 2)
    if c[0] == 0:
        return float(np.max(e))
    sv = -c[1] / (2 * c[0])
    if not (s.min() <= sv <= s.max()):
        return float(e[np.argmax(np.abs(e - e[0]))])
    return float(np.polyval(c, sv))


def _tags_differ(a: BranchPoint, b: BranchPoint) -> bool:
    return a.tag != b.tag


def continue_branch(
    seed: BranchPoint,
    p: EnergyParams,
    eps_range: tuple[float, float],
    step: float | None = None,
    policy: StepPolicy = StepPolicy(),
    direction: int = 1,
    mode: str = "pathway",
    max_points: int = 2000,
    max_folds: int | None = None,
    seed_name: str = "",
    switch_distance: float = 0.15,
) -> Branch:
    """Trace the branch through ``seed`` across ``eps_range``.

    Termination: ``RangeEnd`` when the range boundary is reached, ``EndPoint``
    when the corrector keeps failing (or, in pathway mode, when the curve
    turns back and no branch continues past the turning point) and ``Fold``
    after ``max_folds`` folds in arclength mode.
    """
    lo, hi = eps_range
    if not lo <= seed.epsilon <= hi:
        raise ValueError("seed epsilon outside the continuation range")
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if mode not in ("pathway", "arclength"):
        raise ValueError(f"unknown continuation mode {mode!r}")
    pe = p.with_epsilon(seed.epsilon)
    if residual_norm(seed.field, pe) > policy.tol * 10:
        raise SeedNotConverged("seed is not a converged equilibrium")

    arc = _Arc(seed.field, p)
    branch = Branch([seed], p, seed_name=seed_name)
    u = arc.D.pack(seed.field)
    e = seed.epsilon
    tu, te = arc.tangent_from_derivative(u, e, direction)
    ds = min(step if step is not None else policy.initial, policy.cap)
    s_hist = [0.0]
    easy = 0
    fails = 0
    target = hi if direction > 0 else lo

    def accept(u_new, e_new):
        pt = make_point(arc.field(u_new), p.with_epsilon(e_new), policy.tol)
        prev = branch.points[-1]
        branch.points.append(pt)
        if _tags_differ(prev, pt):
            k = len(branch.points) - 1
            branch.transitions.append(Transition(0.5 * (prev.epsilon + e_new), prev.tag, pt.tag, k - 1, k))
        return pt

    while len(branch.points) < max_points:
        # finish exactly on the range boundary
        if direction * (e + ds * te - target) >= 0 and direction * te > 0:
            f_end, rep = newton_solve(arc.field(u + tu * (target - e) / te), p.with_epsilon(target), policy.tol)
            if rep.converged and arc.norm(arc.D.pack(f_end) - u, target - e) <= 2 * policy.cap:
                accept(arc.D.pack(f_end), target)
                branch.terminated = RANGE_END
                return branch
        if not (lo <= e <= hi):
            branch.terminated = RANGE_END
            return branch

        res = arc.correct(u + ds * tu, e + ds * te, tu, te, policy)
        if res is None:
            fails += 1
            easy = 0
            ds *= 0.5
            if fails > policy.max_halvings or ds < policy.floor:
                branch.terminated = END_POINT
                return branch
            continue
        u_new, e_new, its = res
        fails = 0
        if not (lo <= e_new <= hi):
            branch.terminated = RANGE_END
            return branch
        du, de = u_new - u, e_new - e
        n = arc.norm(du, de)
        if n == 0:
            branch.terminated = END_POINT
            return branch
        new_tu, new_te = du / n, de / n
        accept(u_new, e_new)
        s_hist.append(s_hist[-1] + n)
        turned = np.sign(new_te) != np.sign(te) and np.sign(te) == direction
        u, e, tu, te = u_new, e_new, new_tu, new_te

        if turned:
            k = len(branch.points)
            window = slice(max(0, k - 3), k)
            e_fold = _parabola_vertex(np.array(s_hist[window]), branch.epsilons[window])
            branch.folds.append(Fold(e_fold, k - 2))
            if mode == "arclength":
                if max_folds is not None and len(branch.folds) >= max_folds:
                    branch.terminated = FOLD
                    return branch
            else:
                switched = _try_switch(branch, arc, p, e_fold, direction, policy, switch_distance, ds)
                if switched is None:
                    # drop the point past the turn; the pathway ends at the fold
                    branch.points.pop()
                    if branch.transitions and branch.transitions[-1].hi >= len(branch.points):
                        branch.transitions.pop()
                    branch.terminated = END_POINT
                    return branch
                u, e = switched
                tu, te = arc.tangent_from_derivative(u, e, direction)
                s_hist.append(s_hist[-1] + ds)
                easy = 0
                continue

        if its <= policy.easy_iterations:
            easy += 1
            if easy >= policy.easy_accepts_to_grow:
                ds = min(2 * ds, policy.cap)
                easy = 0
        else:
            easy = 0
    branch.terminated = RANGE_END
    return branch


def _try_switch(branch: Branch, arc: _Arc, p: EnergyParams, e_fold: float, direction: int,
                policy: StepPolicy, max_dist: float, ds: float):
    """Natural-parameter step past a turning point from the extreme point of the curve."""
    pts = branch.points
    # the extreme point precedes the one that came back; if the curve crossed
    # onto the mirror arm exactly at the tip, start from the point before it
    tip_idx = len(pts) - 2
    if tip_idx > 0 and branch.transitions and branch.transitions[-1].hi == tip_idx:
        tip_idx -= 1
    tip = pts[tip_idx]
    u_tip = arc.D.pack(tip.field)
    base = max(e_fold, tip.epsilon) if direction > 0 else min(e_fold, tip.epsilon)
    for delta in sorted({5e-4, 2e-3, 0.25 * ds}):
        e_new = base + direction * delta
        f_new, rep = newton_solve(tip.field, p.with_epsilon(e_new), policy.tol, max_iter=30)
        if not rep.converged:
            continue
        u_new = arc.D.pack(f_new)
        dist = float(np.max(np.abs(u_new - u_tip)))
        if dist > max_dist:
            continue
        # replace everything past the tip with the continuation beyond the fold
        del pts[tip_idx + 1:]
        while branch.transitions and branch.transitions[-1].hi > tip_idx:
            branch.transitions.pop()
        pt = make_point(f_new, p.with_epsilon(e_new), policy.tol)
        pts.append(pt)
        if pt.tag != tip.tag:
            k = len(pts) - 1
            branch.transitions.append(Transition(0.5 * (tip.epsilon + e_new), tip.tag, pt.tag, k - 1, k, "switch"))
        return u_new, e_new
    return None


# ----------------------------------------------------------------------------
# seeds


def theta_seed(grid: Grid, p: EnergyParams, dvals) -> QField:
    D = discretization(grid, p.bc)
    th = theta_harmonic_grid(grid, dvals)
    return D.impose(lift_theta(ThetaField(grid, th)))


def limit_seed(grid: Grid, p: EnergyParams) -> QField:
    if p.bc.mode == DIRICHLET:
        q11, q12 = limit_strong_grid(grid, p.bc.d)
    else:
        q11, q12 = limit_weak_grid(grid, p.bc.tau)
    return discretization(grid, p.bc).impose(QField(grid, q11, q12))


@dataclass
class SeedReport:
    seeds: dict[str, BranchPoint]
    failed: list[str]


def seed_library(grid: Grid, p: EnergyParams, eps_small: float | None = 0.02,
                 eps_large: float | None = 5.0, merge_tol: float = 1e-6) -> SeedReport:
    """Newton-polished ``TABLE_STATES`` lifts at ``eps_small`` and the limit profile at ``eps_large``."""
    if eps_small is not None and eps_small > 0.05:
        raise ValueError("eps_small must be at most 0.05")
    if eps_large is not None and eps_large < 2:
        raise ValueError("eps_large must be at least 2")
    seeds: dict[str, BranchPoint] = {}
    failed: list[str] = []
    cands: list[tuple[str, QField, float]] = []
    if eps_small is not None:
        for name, dvals in TABLE_STATES.items():
            cands.append((name, theta_seed(grid, p, dvals), eps_small))
    if eps_large is not None:
        cands.append(("limit", limit_seed(grid, p), eps_large))
    for name, init, eps in cands:
        pe = p.with_epsilon(eps)
        f, rep = newton_solve(init, pe)
        if not rep.converged:
            failed.append(name)
            continue
        dup = any(
            abs(bp.epsilon - eps) < 1e-14 and bp.field.max_abs_diff(f) <= merge_tol for bp in seeds.values()
        )
        if dup:
            continue
        seeds[name] = make_point(f, pe)
    return SeedReport(seeds, failed)


# ----------------------------------------------------------------------------
# transitions


def _natural_solve(start: QField, p: EnergyParams, eps: float, tol: float):
    f, rep = newton_solve(start, p.with_epsilon(eps), tol, max_iter=40)
    return f if rep.converged else None


def refine_transition(branch: Branch, tr: Transition, resolution: float = 1e-3) -> float:
    """Bisection in epsilon between the bracketing points of a crossing.

    A stability change is located through the sign of ``lambda_min``, a class
    change through the label of the solution continued from the lower side.
    """
    a_pt, b_pt = branch.points[tr.lo], branch.points[tr.hi]
    p = branch.params
    stab_change = a_pt.stable != b_pt.stable
    label_change = a_pt.class_label.label != b_pt.class_label.label
    ea, eb = a_pt.epsilon, b_pt.epsilon
    fa = a_pt.field
    while abs(eb - ea) > resolution / 2:
        em = 0.5 * (ea + eb)
        fm = _natural_solve(fa, p, em, NEWTON_TOL)
        if fm is None:
            break
        pm = make_point(fm, p.with_epsilon(em))
        same_as_a = True
        if label_change and pm.class_label.label != a_pt.class_label.label:
            same_as_a = False
        if stab_change and not label_change and pm.stable != a_pt.stable:
            same_as_a = False
        if same_as_a:
            ea, fa = em, fm
        else:
            eb = em
    return 0.5 * (ea + eb)


def transition_parameters(branches: list[Branch], resolution: float = 1e-3,
                          names: list[str] | None = None) -> dict[str, float]:
    """Named transition values ``eps_<from>_<to>`` and ``eps_end_<seed>``.

    Crossings are refined by bisection to ``resolution``; fold end points come
    from the parabola through the points around the turn. Raises
    :class:`MissingTransition` if a requested name (or, with ``names=None``,
    any transition at all) is absent.
    """
    out: dict[str, float] = {}
    for br in branches:
        for tr in br.transitions:
            key = f"eps_{tr.from_tag}_{tr.to_tag}"
            if key in out:
                continue
            if tr.kind == "switch":
                fold = next((f for f in reversed(br.folds) if f.index <= tr.hi), None)
                out[key] = fold.epsilon if fold is not None else tr.epsilon
            else:
                out[key] = refine_transition(br, tr, resolution)
        end = br.end_epsilon()
        if end is not None:
            out.setdefault(f"eps_end_{br.seed_name or br.points[0].tag}", end)
    if names is None:
        if not out:
            raise MissingTransition("no transitions found in the supplied branches")
        return out
    missing = [n for n in names if n not in out]
    if missing:
        raise MissingTransition(f"missing transitions: {', '.join(missing)}")
    return {n: out[n] for n in names}


def transitions_json(values: dict[str, float], grid: Grid) -> str:
    recs = [
        {"name": k, "epsilon": v, "a": grid.domain.a, "b": grid.domain.b, "h": min(grid.hx, grid.hy)}
        for k, v in sorted(values.items())
    ]
    return json.dumps(recs, indent=2)
