import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wklab import model, solver, virial
from wklab import operators as ops
from wklab.operators import OperatorGrid


@pytest.fixture(scope="module")
def weights():
    g = OperatorGrid.uniform(60.0, 0.05)
    return virial.build_weights(40.0, 8.0, 2.0, 0.1, g)


@given(st.floats(-2.0, 2.0))
def test_chi_is_a_cutoff(t):
    c = float(virial.chi(t))
    assert 0.0 <= c <= 1.0
    if abs(t) <= 1.0:
        assert c == 1.0
    if abs(t) >= 2.0:
        assert c == 0.0


def test_chi_derivatives_match_finite_differences():
    t = np.linspace(-2.5, 2.5, 5001)
    h = t[1] - t[0]
    for k in (1, 2, 3):
        fd = np.gradient(virial.chi(t, k - 1), h)
        assert np.max(np.abs(fd - virial.chi(t, k))[2:-2]) < 1e-2 * max(1, np.max(np.abs(virial.chi(t, k))))


def test_sech_has_no_overflow():
    with np.errstate(over="raise"):
        assert virial.sech(np.array([1000.0]))[0] == 0.0
    np.testing.assert_allclose(virial.sech(np.linspace(-5, 5, 11)), 1 / np.cosh(np.linspace(-5, 5, 11)))


def test_weight_validation():
    g = OperatorGrid.uniform(60.0, 0.05)
    with pytest.raises(ValueError, match="sqrt"):
        virial.build_weights(40.0, 8.0, 1.3, 0.1, g)
    with pytest.raises(ValueError):
        virial.build_weights(40.0, 8.0, 2.0, 0.0, g)
    with pytest.warns(UserWarning):
        virial.build_weights(4.0, 8.0, 2.0, 0.1, g)
    with pytest.raises(ValueError, match="origin"):
        virial.build_weights(40.0, 8.0, 2.0, 0.1, OperatorGrid(np.linspace(-10.0, 10.0, 200)))


def test_phi_is_odd_increasing_bounded(weights):
    W = weights
    r = W.grid.node_r
    np.testing.assert_allclose(W.Phi_A, -W.Phi_A[::-1], atol=1e-13)
    assert np.all(np.diff(W.Phi_A) > 0)
    # Phi_A = r inside the cutoff, and it saturates near A/2 far out
    mid = np.abs(r) <= 1
    np.testing.assert_allclose(W.Phi_A[mid], r[mid], atol=1e-9)
    assert 0.4 * W.A < W.Phi_A[-1] < 0.5 * W.A + 1
    assert W.phi_profile.d1.min() > 0


def test_weight_profiles_derivatives():
    # chi has large high derivatives on 1 < |r| < 2, hence the loose bound
    errs = []
    for h in (0.01, 0.005):
        W = virial.build_weights(10.0, 4.0, 2.0, 0.1, OperatorGrid.uniform(25.0, h))
        e = []
        for prof in (W.phi_profile, W.psi_profile):
            d1 = np.gradient(prof.value, h)
            d3 = np.gradient(np.gradient(np.gradient(prof.value, h), h), h)
            assert np.max(np.abs(d1 - prof.d1)[3:-3]) < 1e-3
            e.append(np.max(np.abs(d3 - prof.d3)[6:-6]))
        errs.append(max(e))
    assert errs[1] < 1e-2
    assert errs[0] / errs[1] > 3.0


def test_psi_support(weights):
    r = weights.grid.node_r
    assert np.all(weights.Psi_AB[np.abs(r) >= 80 - 1e-9] == 0.0)


def test_sandwich_bounds_finite(weights):
    lo, hi = weights.sandwich
    assert 0 < lo <= hi < np.inf


def test_hierarchy_report_flags():
    rep = virial.hierarchy_report(40.0, 8.0, 2.0, 0.1, 0.05)
    assert rep["K/B"]["value"] == pytest.approx(0.25)
    assert not rep["A^4*delta"]["satisfied"]
    assert virial.hierarchy_report(1e6, 1e3, 2.0, 1e-3)["B/A"]["satisfied"]


def _direct_rate(r, a1, a1r, a1rr, phi, phi1, pot, src):
    """dI/dt from a1_t = a2, a2_t = a1_rr - P a1 + G, with the a2 part integrated out."""
    integrand = (phi * a1r + 0.5 * phi1 * a1) * (a1rr - pot * a1 + src)
    return np.trapezoid(integrand, r)


def test_virial_rate_matches_direct_derivative():
    errs = []
    for h in (0.04, 0.02):
        g = OperatorGrid.uniform(30.0, h)
        r = g.node_r
        a1 = np.exp(-r ** 2 / 4) * np.sin(r)
        a1r = np.exp(-r ** 2 / 4) * (np.cos(r) - 0.5 * r * np.sin(r))
        a1rr = np.gradient(a1r, r, edge_order=2)
        L = 5.0
        phi = L * np.tanh(r / L)
        s = 1 / np.cosh(r / L) ** 2
        phi1 = s
        phi3 = s * (4 * np.tanh(r / L) ** 2 - 2 * s) / L ** 2
        pot, dpot = model.potential_P1(r), model.potential_P1_prime(r)
        src = 0.3 * np.exp(-r ** 2)
        rate = virial.virial_rate(a1, None, virial.Profile(phi, phi1, phi3), dpot, src, g)
        errs.append(abs(rate - _direct_rate(r, a1, a1r, a1rr, phi, phi1, pot, src)))
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] > 3.0


def test_series_columns_layout():
    cols = virial.series_columns((1, 2.5))
    assert cols[:5] == ["t", "energy", "I", "H", "J"]
    assert "localE_1" in cols and "localE_2.5" in cols
    assert cols[-2:] == ["rate_I", "rate_J"]
    assert len(cols) == len(set(cols))


def test_record_row_roundtrip(weights):
    cfg = solver.SolverConfig(dx=0.05, dt=0.04, half_extent=40.0, t_final=0.4, observe_every=5)
    g = cfg.make_grid()
    st0 = solver.make_initial_data(solver.InitialDataSpec(), g)
    diag = virial.Diagnostics(g, 10.0, 4.0, 2.0, 0.1)
    rows = solver.evolve(st0, cfg, [diag]).records
    recs = [row["record"] for row in rows]
    virial.add_running_integrals(recs, 10.0)
    for rec in recs:
        again = virial.DiagnosticsRecord.from_row(rec.as_row(), (1, 2, 5))
        assert again.as_row() == rec.as_row()
    assert recs[0].running["int_phiA"] == 0.0
    assert recs[-1].running["int_phiA"] > 0.0


def test_diagnostics_match_weighted_norms():
    cfg = solver.SolverConfig(dx=0.05, dt=0.04, half_extent=40.0, t_final=0.0)
    g = cfg.make_grid()
    st0 = solver.make_initial_data(solver.InitialDataSpec(), g)
    diag = virial.Diagnostics(g, 10.0, 4.0, 2.0, 0.1)
    rec = diag.record(st0, 0.0)
    og, w1, w2 = virial.full_line_w(st0)
    n = virial.weighted_norms(w1, w2, diag.weights, (1, 2, 5))
    assert rec.norm_sigmaA_w1 == pytest.approx(n["norm_sA_w1"])
    assert rec.local_energy_R[5.0] == pytest.approx(n["local_energy"][5.0])
    assert rec.thm_weight_norm == pytest.approx(n["thm_weight"])
    # w2 = 0 at t = 0, so every functional pairing against it vanishes
    assert rec.I == 0.0 and rec.Hfun == 0.0 and rec.J == 0.0


def test_local_energy_monotone_in_radius():
    g = OperatorGrid.uniform(20.0, 0.05)
    W = virial.build_weights(10.0, 4.0, 2.0, 0.1, g)
    w1 = np.tanh(g.node_r) * np.exp(-g.node_r ** 2 / 10)
    n = virial.weighted_norms(w1, w1, W, (1, 2, 5))
    le = n["local_energy"]
    assert le[1.0] < le[2.0] < le[5.0]


def test_random_field_parity_and_determinism():
    r = np.linspace(-20, 20, 801)
    a = virial.random_field(np.random.default_rng([3, 1]), r, "odd")
    b = virial.random_field(np.random.default_rng([3, 1]), r, "odd")
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(a, -a[::-1], atol=1e-15)
    e = virial.random_field(np.random.default_rng(0), r, "even")
    np.testing.assert_allclose(e, e[::-1], atol=1e-15)


@pytest.mark.parametrize("lemma", virial.LEMMAS)
def test_lemma_constants_finite(lemma, weights):
    rep = virial.lemma_check(lemma, 0.1, weights, trials=10, seed=1)
    assert rep.bounded and rep.trials == 10
    assert all(v > 0 for v in rep.ratios.values())


def test_lemma_check_arguments(weights):
    with pytest.raises(ValueError):
        virial.lemma_check("nope", 0.1, weights)
    with pytest.raises(ValueError):
        virial.lemma_check("xeps", 0.1, weights, trials=0)
    r = weights.grid.node_r
    f = np.exp(-r ** 2) * r
    rep = virial.lemma_check("xeps", 0.1, weights, trials=1, fields=[f])
    x = ops.solve_Xeps(f, 0.1, weights.grid)
    assert rep.ratios["contraction"] == pytest.approx(weights.grid.norm(x) / weights.grid.norm(f))
