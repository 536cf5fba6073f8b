"""End-to-end acceptance checks, one test per criterion."""

import subprocess
import sys
import time

import numpy as np
import pytest

from rectldg import QField, RectDomain, energy, make_grid
from rectldg.analytic import limit_strong_grid, limit_strong_Q, limit_weak_Q11, robin_roots, robin_default_roots
from rectldg.boundary import NONTRIVIAL_SEED, TABLE_STATES
from rectldg.classify import classify, detect_defects
from rectldg.continuation import (
    continue_branch,
    limit_seed,
    seed_library,
    theta_seed,
    transition_parameters,
)
from rectldg.energy import discretization, energy_gradient, hessian_apply, weighted_inner
from rectldg.grid import Grid
from rectldg.oracle import laplace_dirichlet, laplace_robin
from rectldg.solvers import gradient_flow, newton_solve, rayleigh_quotient, smallest_eigenvalue, stability_operator

from helpers import params, report

D = 0.03


def test_criterion_01_large_epsilon_rate():
    t0 = time.time()
    g = make_grid(RectDomain(1.0, 1.0), 1 / 128)
    l11, l12 = limit_strong_grid(g, D)
    # h-level floor: the discrete harmonic extension against the exact limit
    floor = max(np.abs(laplace_dirichlet(g, l11) - l11).max(), np.abs(laplace_dirichlet(g, l12) - l12).max())
    eps = np.array([2.0, 4.0, 8.0, 16.0])
    err = []
    for e in eps:
        p = params(e)
        f, rep = newton_solve(limit_seed(g, p), p, raise_on_failure=True)
        err.append(max(np.abs(f.q11 - l11).max(), np.abs(f.q12 - l12).max()))
    excess = np.array(err) - floor
    ok_pos = bool(np.all(excess > 0))
    slope = float(np.polyfit(np.log(eps), np.log(excess), 1)[0]) if ok_pos else float("nan")
    dt = time.time() - t0
    report(1, ok_pos and abs(slope + 2.0) <= 0.3 and dt <= 120,
           f"slope {slope:.4f} (target -2 +- 0.3), floor {floor:.3e}, {dt:.1f}s")


def test_criterion_02_wors_diagonals():
    sq = RectDomain(1.0, 1.0)
    s = np.linspace(0.0, 1.0, 201)
    main = np.abs(limit_strong_Q(s, s, sq, D)[0]).max()
    anti = np.abs(limit_strong_Q(s, 1 - s, sq, D)[0]).max()
    h = 1 / 64
    g = make_grid(sq, h)
    p = params(5.0)
    f, _ = newton_solve(limit_seed(g, p), p, raise_on_failure=True)
    n = np.arange(g.nx)
    fd = max(np.abs(f.q11[n, n]).max(), np.abs(f.q11[n, g.nx - 1 - n]).max())
    report(2, main <= 1e-10 and anti <= 1e-10 and fd <= 5 * h * h,
           f"limit diagonals {max(main, anti):.2e} (<=1e-10), FD diagonal {fd:.2e} (<= {5 * h * h:.2e})")


def test_criterion_03_centre_sign():
    vals = {a: float(limit_strong_Q(a / 2, 0.5, RectDomain(a, 1.0), D)[0]) for a in (1.1, 1.25, 1.5, 2.0)}
    sq = float(limit_strong_Q(0.5, 0.5, RectDomain(1.0, 1.0), D)[0])
    report(3, all(v > 0 for v in vals.values()) and abs(sq) <= 1e-12,
           "centre q11 " + ", ".join(f"a={a}: {v:.5f}" for a, v in vals.items()) + f", square {sq:.1e}")


def test_criterion_04_weak_anchoring():
    rng = np.random.default_rng(2024)
    worst_root, worst_fd, worst_diag = 0.0, 0.0, 0.0
    for tau in (3.0, 10.0):
        for a in (1.0, 1.5):
            n = robin_default_roots(0.02, a)
            worst_root = max(worst_root, float(np.abs(robin_roots(tau, a, n).residuals()).max()))
            dom = RectDomain(a, 1.0)
            g = Grid(dom, int(round(512 * a)) + 1, 513)
            fd = laplace_robin(g, tau, (1.0, -1.0, 1.0, -1.0))
            xs = rng.uniform(0.02, a - 0.02, 20)
            ys = rng.uniform(0.02, 0.98, 20)
            ser = limit_weak_Q11(xs, ys, dom, tau)
            ora = np.array([g.interpolate(fd, x, y) for x, y in zip(xs, ys)])
            worst_fd = max(worst_fd, float(np.abs(ser - ora).max()))
        s = np.linspace(0.0, 1.0, 41)
        sq = RectDomain(1.0, 1.0)
        worst_diag = max(worst_diag, float(np.abs(limit_weak_Q11(s, s, sq, tau)).max()),
                         float(np.abs(limit_weak_Q11(s, 1 - s, sq, tau)).max()))
    report(4, worst_root <= 1e-12 and worst_fd <= 1e-4 and worst_diag <= 1e-8,
           f"root residual {worst_root:.1e}, series vs 513^2 oracle {worst_fd:.2e}, diagonal {worst_diag:.1e}")


def _converged_energies(a, names):
    g = make_grid(RectDomain(a, 1.0), 1 / 64)
    p = params(0.03)
    out = {}
    for name in names:
        f, rep = newton_solve(theta_seed(g, p, TABLE_STATES[name]), p, raise_on_failure=True)
        assert classify(f).label == name
        out[name] = rep.energy
    return out


def test_criterion_05_small_epsilon_ordering():
    w = _converged_energies(1.5, ("D1", "R2", "R3"))
    s = _converged_energies(1.0, ("R1", "R2", "R3", "R4"))
    spread = (max(s.values()) - min(s.values())) / abs(np.mean(list(s.values())))
    report(5, w["D1"] < w["R3"] < w["R2"] and spread <= 1e-6,
           f"1.5x1: D1 {w['D1']:.3f} < R3 {w['R3']:.3f} < R2 {w['R2']:.3f}; square rotated spread {spread:.1e}")


def test_criterion_06_derivative_health():
    rng = np.random.default_rng(6)
    g_rel = sym = eig = 0.0
    for a in (1.0, 1.5):
        g = make_grid(RectDomain(a, 1.0), 1 / 32)
        p = params(0.1)
        Dz = discretization(g, p.bc)
        zero = Dz.impose(QField.zeros(g))

        def noise(scale=1.0):
            return Dz.impose(QField(g, scale * rng.normal(size=g.shape), scale * rng.normal(size=g.shape))) - zero

        q = theta_seed(g, p, TABLE_STATES["R3"]) + noise(0.1)
        for _ in range(5):
            v = noise()
            gr = energy_gradient(q, p)
            an = float(np.sum(gr.q11 * v.q11 + gr.q12 * v.q12))
            fd = (energy(q + v * 1e-5, p) - energy(q - v * 1e-5, p)) / 2e-5
            g_rel = max(g_rel, abs(fd - an) / abs(an))
            u = noise()
            x1, x2 = weighted_inner(u, hessian_apply(q, p, v)), weighted_inner(v, hessian_apply(q, p, u))
            sym = max(sym, abs(x1 - x2) / abs(x1))
        f, _ = newton_solve(theta_seed(g, p, TABLE_STATES["D1"]), p, raise_on_failure=True)
        lam, vec = smallest_eigenvalue(f, p)
        A, M = stability_operator(f, p)
        x = Dz.pack(vec)
        rq = rayleigh_quotient(f, p, vec)
        eig = max(eig, np.linalg.norm(A @ x - rq * (M @ x)) / np.linalg.norm(A @ x), abs(rq - lam) / abs(lam))
    report(6, g_rel <= 1e-6 and sym <= 1e-10 and eig <= 1e-8,
           f"gradient {g_rel:.1e}, Hessian symmetry {sym:.1e}, eigenpair residual {eig:.1e}")


def test_criterion_07_uniqueness_large_epsilon():
    worst = 0.0
    for a in (1.0, 1.5):
        g = make_grid(RectDomain(a, 1.0), 1 / 64)
        p = params(5.0)
        Dz = discretization(g, p.bc)
        sols = []
        for k in range(10):
            r = np.random.default_rng(100 + k)
            pert = QField(g, r.uniform(-0.3, 0.3, g.shape), r.uniform(-0.3, 0.3, g.shape))
            f, _ = newton_solve(Dz.impose(limit_seed(g, p) + pert), p, raise_on_failure=True)
            sols.append(f)
        worst = max(worst, max(s.max_abs_diff(sols[0]) for s in sols))
    report(7, worst <= 1e-6, f"max spread of 10 perturbed solves {worst:.1e}")


def _wors_star(h):
    g = make_grid(RectDomain(1.0, 1.0), h)
    p = params(5.0)
    lib = seed_library(g, p, eps_small=None)
    br = continue_branch(lib.seeds["limit"], p, (0.1, 5.0), direction=-1, seed_name="WORS")
    return transition_parameters([br], names=["eps_sWORS_uWORS"])["eps_sWORS_uWORS"]


def test_criterion_08_square_bifurcations():
    g = make_grid(RectDomain(1.0, 1.0), 1 / 64)
    p = params(0.02)
    lib = seed_library(g, p)
    small = [k for k, bp in lib.seeds.items() if bp.epsilon == 0.02 and bp.stable]
    ends = [lib.seeds["limit"]]
    for name in small:
        br = continue_branch(lib.seeds[name], p, (0.02, 5.0), seed_name=name)
        if br.points[-1].epsilon >= 5.0 - 1e-12:
            ends.append(br.points[-1])
    distinct = []
    for bp in ends:
        if not any(bp.field.max_abs_diff(o.field) <= 1e-6 for o in distinct):
            distinct.append(bp)
    at5 = [bp.tag for bp in distinct]
    e32, e64 = _wors_star(1 / 32), _wors_star(1 / 64)
    rel = abs(e32 - e64) / e64
    report(8, len(small) >= 6 and at5 == ["sWORS"] and rel <= 0.05,
           f"{len(small)} stable states at eps=0.02, distinct at eps=5: {at5}, "
           f"eps* {e32:.5f} (h=1/32) vs {e64:.5f} (h=1/64), rel {rel:.1e}")


@pytest.fixture(scope="module")
def wide_pathways():
    g = make_grid(RectDomain(1.5, 1.0), 1 / 32)
    p = params(0.02)
    lib = seed_library(g, p, eps_large=None)
    return {n: continue_branch(lib.seeds[n], p, (0.02, 1.0), seed_name=n) for n in ("D1", "R2", "R3")}


def test_criterion_09_rectangle_pathways(wide_pathways):
    d1 = wide_pathways["D1"]
    tr = next(t for t in d1.transitions if (t.from_tag, t.to_tag) == ("sD1", "sBD2"))
    i12 = np.array([bp.int_q12_sq for bp in d1.points])
    jump = abs(i12[tr.hi] - i12[tr.lo])
    pre = np.abs(np.diff(i12[max(0, tr.lo - 3): tr.lo + 1])).max()
    ratio = jump / pre
    vals = transition_parameters(list(wide_pathways.values()))
    names = ("eps_sD1_sBD2", "eps_end_R2", "eps_sR3_uR3", "eps_uR3_uBD2", "eps_uBD2_sBD2")
    have = all(n in vals for n in names)
    r2_end = wide_pathways["R2"].terminated == "EndPoint"
    order = have and vals["eps_end_R2"] < vals["eps_sD1_sBD2"] and (
        vals["eps_sR3_uR3"] < vals["eps_uR3_uBD2"] < vals["eps_uBD2_sBD2"])
    same = have and abs(vals["eps_uBD2_sBD2"] - vals["eps_sD1_sBD2"]) <= 1e-3
    detail = (f"q12^2 jump/pre-jump variation {ratio:.3f} (need >10); R2 {wide_pathways['R2'].terminated}; "
              + ", ".join(f"{n[4:]}={vals.get(n, float('nan')):.5f}" for n in names))
    report(9, ratio > 10 and r2_end and order and same, detail)


def _relax(a, eps):
    g = make_grid(RectDomain(a, 1.0), 1 / 64)
    p = params(eps)
    t0 = time.time()
    tr = gradient_flow(theta_seed(g, p, NONTRIVIAL_SEED), p, snap_every=500)
    windings = [w for s in tr.snapshots for _, _, w in detect_defects(s.field).points]
    return tr, windings, time.time() - t0


def test_criterion_10_relaxation():
    lines, ok = [], True
    trivial = set(TABLE_STATES)
    for a, eps, want in ((1.0, 0.4, {"WORS"}), (5.0, 0.4, {"BD2"}), (1.0, 0.05, trivial), (5.0, 0.05, trivial)):
        tr, wind, dt = _relax(a, eps)
        half = all(abs(w) == 0.5 for w in wind)
        good = tr.converged and tr.terminal_class in want and dt <= 600 and (eps > 0.1 or half)
        ok &= good
        lines.append(f"{a:g}x1 eps={eps}: {tr.terminal_class} ({tr.steps} steps, {dt:.0f}s"
                     + (f", windings {sorted(set(wind))}" if eps < 0.1 else "") + ")")
    report(10, ok, "; ".join(lines))


def test_criterion_11_determinism(tmp_path):
    csvs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        cmd = [sys.executable, "-m", "rectldg.cli", "continue", "--seed", "R3", "--a", "1.5", "--h", "0.03125",
               "--eps-range", "0.02:1", "--out", str(out)]
        subprocess.run(cmd, check=True, capture_output=True)
        csvs.append((out / "branch.csv").read_bytes())
    report(11, csvs[0] == csvs[1] and len(csvs[0]) > 0, f"two CLI runs, {len(csvs[0])} bytes, identical={csvs[0] == csvs[1]}")
