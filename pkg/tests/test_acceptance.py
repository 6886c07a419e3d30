"""One test per acceptance criterion; each prints a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary, so
``pytest tests/test_acceptance.py`` lists all thirteen verdicts at the end.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from wklab import experiments as ex
from wklab import model
from wklab import operators as ops
from wklab import virial


def report(n, ok, detail):
    ok = bool(ok)
    ACCEPTANCE[n] = (ok, detail)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def orders(errors):
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


def full_line_x(dx, X):
    n = int(round(X / dx))
    return np.arange(-n, n + 1) * dx


def test_criterion_01_kink_energy():
    x = full_line_x(0.01, 20.0)
    t0 = time.perf_counter()
    e = model.energy(model.kink(x), np.zeros_like(x), 0.01)
    elapsed = time.perf_counter() - t0
    err = abs(e - 4.0 / 3.0)
    report(1, err < 1e-8 and elapsed < 1.0, f"|E(H) - 4/3| = {err:.2e}, {elapsed * 1e3:.1f} ms")


def test_criterion_02_bogomolnyi():
    x = full_line_x(0.01, 20.0)
    h = model.kink(x)
    d_kink = model.bogomolnyi_defect(h, 0.01)
    rng = np.random.default_rng(2)
    worst = np.inf
    for _ in range(50):
        u = h.copy()
        for _ in range(int(rng.integers(1, 4))):
            a, c, s = rng.uniform(-0.4, 0.4), rng.uniform(-6, 6), rng.uniform(0.4, 2.5)
            u += a * np.exp(-((x - c) / s) ** 2) * np.cos(rng.uniform(0, 3) * x)
        worst = min(worst, model.bogomolnyi_defect(u, 0.01))
    report(2, abs(d_kink) < 1e-8 and worst >= -1e-8,
           f"defect(kink) = {d_kink:.2e}, min over 50 perturbations = {worst:.3e}")


def test_criterion_03_repulsivity():
    r = np.linspace(-100.0, 100.0, 100_000)
    rep_min = model.repulsivity_profile(r).min()
    errs = []
    for h in (0.02, 0.01, 0.005):
        rr = np.arange(-int(round(10 / h)), int(round(10 / h)) + 1) * h
        fd = (model.potential_P1(rr + h) - model.potential_P1(rr - h)) / (2 * h)
        errs.append(np.max(np.abs(-rr * fd - model.repulsivity_profile(rr))))
    p = orders(errs)
    report(3, rep_min >= 0.0 and np.all(np.abs(p - 2) < 0.2),
           f"min -rP1' = {rep_min:.3e} on 1e5 nodes, FD orders {np.round(p, 3).tolist()}")


def test_criterion_04_darboux():
    r = np.random.default_rng(4).uniform(-50, 50, 1000)
    nu, dnu = model.darboux_nu(r), model.darboux_nu_prime(r)
    e_v = np.max(np.abs(model.potential_V(r) - (nu ** 2 - dnu)))
    e_p = np.max(np.abs(model.potential_P1(r) - (nu ** 2 + dnu)))
    fac, inter = [], []
    for h in (0.1, 0.05, 0.025):
        g = ops.OperatorGrid.uniform(20.0, h)
        tests = ex.smooth_test_fields(g)[1:]
        fac.append(ops.factorization_residual(tests, g))
        inter.append(ops.intertwining_residual(tests, g))
    pf, pi = orders(fac), orders(inter)
    ok = e_v < 1e-12 and e_p < 1e-12 and np.all(np.abs(pf - 2) < 0.2) and np.all(np.abs(pi - 2) < 0.2)
    report(4, ok, f"pointwise {max(e_v, e_p):.1e}, factorization orders {np.round(pf, 3).tolist()}, "
                  f"intertwining orders {np.round(pi, 3).tolist()}")


def test_criterion_05_zero_modes():
    zero = []
    for h in (0.1, 0.05, 0.025):
        g = ops.OperatorGrid.uniform(40.0, h)
        y = model.darboux_ground_state(g.node_r)
        zero.append(ops._interior_norm(ops.apply_tildeL(y, g), g) / g.norm(y))
    pz = orders(zero)
    lam, overlap = [], []
    for h in (0.1, 0.05, 0.025):
        g = ops.OperatorGrid.uniform(40.0, h)
        vals, vecs, gg = ops.smallest_eigenvalues("L_tilde_full", 1, g, return_vectors=True)
        y = model.darboux_ground_state(gg.node_r)
        lam.append(abs(vals[0]))
        overlap.append(abs(gg.inner(vecs[:, 0], y)) / gg.norm(y))
    mu = [ops.odd_coercivity(L, 0.025).mu_l2 for L in (40.0, 80.0)]
    l1_min = min(ops.smallest_eigenvalues("L1", 3, ops.OperatorGrid.uniform(L, 0.05)).min()
                 for L in (40.0, 80.0))
    mu_var = max(mu) / min(mu) - 1.0
    ok = (np.all(np.abs(pz - 2) < 0.2) and np.all(np.diff(lam) < 0) and np.all(orders(lam) > 1.8)
          and min(overlap) > 0.999 and min(mu) > 0 and mu_var <= 0.10 and l1_min >= -1e-10)
    report(5, ok, f"zero-mode orders {np.round(pz, 3).tolist()}, |lambda0| {[f'{v:.1e}' for v in lam]}, "
                  f"overlap >= {min(overlap):.6f}, mu0 {np.round(mu, 5).tolist()} (var {mu_var:.1e}), "
                  f"min L1 eig {l1_min:.2e}")


def test_criterion_06_xeps():
    g = ops.OperatorGrid.uniform(60.0, 0.025)
    W = virial.build_weights(40.0, 8.0, 2.0, 0.1, g)
    rows = {eps: virial.lemma_check("xeps", eps, W, 100, seed=6).ratios for eps in (0.1, 0.05, 0.025)}
    c = max(v["contraction"] for v in rows.values())
    d1 = [v["d1"] for v in rows.values()]
    d2 = max(v["d2"] for v in rows.values())
    ok = c <= 1 + 1e-12 and max(d1) <= 1.0 and d2 <= 1.0 and 0.45 <= min(d1) and max(d1) <= 0.55
    report(6, ok, f"contraction {c:.4f}, d1 constants {np.round(d1, 4).tolist()}, d2 max {d2:.4f}")


def test_criterion_07_lemma_suite():
    rep = ex.run_lemma_suite(seed=7, trials=100, spacings=(0.05, 0.025), eps_list=(0.1, 0.05),
                             xeps_eps=())
    stab = rep.summary["stability"]
    worst = max(v["variation"] for v in stab.values())
    ok = all(v["pass"] for v in stab.values()) and set(k.split(":")[0] for k in stab) >= {
        "transfer", "comut1", "coerc", "poincare46"}
    report(7, ok, f"{len(stab)} constants bounded, worst max/min variation {worst:.3f}")


def test_criterion_08_commutator():
    g = ops.OperatorGrid.uniform(80.0, 0.025)
    r = g.node_r
    rng = np.random.default_rng(8)
    agree = 0.0
    for _ in range(50):
        w = virial.random_field(rng, r, "odd")
        d, i = ops.commutator_XepsP1(w, 0.1, g)
        agree = max(agree, g.norm(d - i) / g.norm(d))
    w = r * np.exp(-(r / 16.0) ** 2)
    eps = np.array([0.02, 0.04, 0.08])
    norms = [g.norm(ops.commutator_XepsP1(w, e, g)[0]) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(norms), 1)[0]
    report(8, agree < 1e-10 and abs(slope - 1) <= 0.15,
           f"dual-route relative gap {agree:.1e}, eps slope {slope:.3f}")


def test_criterion_09_energy_conservation():
    d1 = ex.energy_drift(0.015)
    d2 = ex.energy_drift(0.0075)
    report(9, d1 < 1e-6 and 3.0 <= d1 / d2 <= 5.0, f"drift {d1:.2e} (dt), {d2:.2e} (dt/2), ratio {d1 / d2:.3f}")


def test_criterion_10_virial_rate():
    lad = ex.virial_rate_ladder()
    ri, rj = lad["I"]["ratio"], lad["J"]["ratio"]
    report(10, 3.0 <= ri <= 5.0, f"I errors {[f'{e:.2e}' for e in lad['I']['errors']]} ratio {ri:.3f}; "
                                 f"J ratio {rj:.3f}")


@pytest.fixture(scope="module")
def sweep():
    cfg = ex.ExperimentConfig()
    ex.check_causality(cfg)
    return cfg, ex.run_sweep(cfg, jobs=3)


@pytest.mark.slow
def test_criterion_11_orbital_stability(sweep):
    cfg, members = sweep
    rep = ex.run_orbital_stability(cfg, sweep=members)
    s = rep.summary
    report(11, rep.passed, f"sup ratios {s['sup_ratio']}, variation {s['variation']:.3f}")


@pytest.mark.slow
def test_criterion_12_decay(sweep):
    cfg, members = sweep
    ref = next(m for m in members if m.delta == cfg.data.amplitude)
    rep = ex.run_decay(cfg, member=ref)
    s = rep.summary
    ratio = s["final_over_initial_local_energy"]["5"]
    ok = ratio < 0.05 and s["eventually_decreasing"]["localE_5"] and s["eventually_decreasing"]["thm_weight"]
    report(12, ok and rep.passed, f"E_loc[-5,5](200)/E_loc(0) = {ratio:.2e}, trends {s['eventually_decreasing']}")


@pytest.mark.slow
def test_criterion_13_budget(sweep):
    cfg, members = sweep
    rep = ex.run_virial_budget(cfg, sweep=members)
    s = rep.summary
    sat = max(max(e["last_quartile_fraction"].values()) for e in s["per_delta"].values())
    spread = max(s["delta2_scaling_spread"].values())
    report(13, rep.passed and sat < 0.10 and spread <= 0.30,
           f"max last-quartile fraction {sat:.2e}, max delta^2 spread {spread:.3f}")
