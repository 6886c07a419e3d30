import numpy as np
import pytest

from wklab import solver
from wklab.model import Grid1D, WaveState
from wklab.solver import (BlowUpError, CausalityError, InitialDataSpec, SolverConfig,
                          convergence_order, evolve, evolve_step, make_initial_data)


def small_config(**kw):
    base = dict(dx=0.04, dt=0.03, half_extent=30.0, t_final=3.0, observe_every=10)
    base.update(kw)
    return SolverConfig(**base)


def test_cfl_rejected():
    with pytest.raises(ValueError, match="CFL"):
        SolverConfig(dx=0.02, dt=0.019)
    SolverConfig(dx=0.02, dt=0.018)


@pytest.mark.parametrize("kw", [dict(dx=0.0), dict(t_final=-1.0), dict(observe_every=0),
                                dict(boundary="periodic"), dict(coordinate="polar")])
def test_invalid_solver_config(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_default_data_support_and_causality():
    cfg = SolverConfig()
    st = make_initial_data(InitialDataSpec(), cfg.make_grid())
    support = solver.support_radius(st)
    assert support == pytest.approx(18.02, abs=0.02)
    cfg.check_causality(support)
    with pytest.raises(CausalityError):
        SolverConfig(half_extent=220.0).check_causality(support)


def test_n_steps_rounds():
    assert SolverConfig().n_steps == 13333
    assert SolverConfig(t_final=100.0, dt=0.01).n_steps == 10000


def test_initial_data_families():
    g = Grid1D.from_spacing("r_uniform", 30.0, 0.05)
    a = make_initial_data(InitialDataSpec(amplitude=0.1), g)
    b = make_initial_data(InitialDataSpec("odd_velocity_bump", amplitude=0.1), g)
    np.testing.assert_array_equal(a.pos.values, b.vel.values)
    assert not np.any(b.pos.values)
    x = g.node_x
    np.testing.assert_allclose(a.pos.values[:-1], 0.1 * np.sinh(x[:-1]) * np.exp(-x[:-1] ** 2))
    with pytest.raises(ValueError):
        InitialDataSpec(family="square")
    with pytest.raises(ValueError):
        InitialDataSpec(width=0.0)
    with pytest.raises(ValueError):
        InitialDataSpec(family="custom_table")


def test_custom_table_matches_builtin():
    g = Grid1D.from_spacing("r_uniform", 30.0, 0.05)
    xt = np.linspace(-8, 8, 4001)
    prof = np.sinh(xt) * np.exp(-xt ** 2)
    spec = InitialDataSpec("custom_table", amplitude=0.1, table=(xt, prof, 0 * xt))
    a = make_initial_data(spec, g)
    b = make_initial_data(InitialDataSpec(amplitude=0.1), g)
    np.testing.assert_allclose(a.pos.values, b.pos.values, atol=1e-6)
    with pytest.raises(ValueError, match="odd"):
        make_initial_data(InitialDataSpec("custom_table", table=(xt, np.cos(xt), 0 * xt)), g)


@pytest.mark.parametrize("coordinate", ["x_uniform", "r_uniform"])
def test_kink_is_exact_equilibrium(coordinate):
    cfg = small_config(coordinate=coordinate, half_extent=8.0 if coordinate == "x_uniform" else 30.0)
    g = cfg.make_grid()
    z = np.zeros(g.n_points)
    res = evolve(WaveState.from_arrays("v_frame", g, z, z), cfg)
    assert not np.any(res.state.pos.values)


def test_evolve_matches_repeated_steps():
    cfg = small_config(t_final=0.3)
    st = make_initial_data(InitialDataSpec(), cfg.make_grid())
    s = st
    for _ in range(cfg.n_steps):
        s = evolve_step(s, cfg)
    res = evolve(st, cfg)
    np.testing.assert_allclose(res.state.pos.values, s.pos.values, rtol=0, atol=1e-15)
    assert res.state.time == pytest.approx(0.3)


def test_records_sampling_and_energy():
    cfg = small_config(t_final=3.0, observe_every=25)
    st = make_initial_data(InitialDataSpec(), cfg.make_grid())
    res = evolve(st, cfg, [lambda s: {"peak": float(np.max(np.abs(s.pos.values)))}])
    ts = [r["t"] for r in res.records]
    assert ts[0] == 0.0 and ts[-1] == pytest.approx(3.0)
    assert len(ts) == 1 + 100 // 25
    e = np.array([r["energy"] for r in res.records])
    assert np.max(np.abs(e - e[0])) / e[0] < 1e-6
    assert all("peak" in r for r in res.records)


def test_energy_of_zero_perturbation_is_kink_energy():
    g = SolverConfig().make_grid()
    z = np.zeros(g.n_points)
    assert solver.discrete_energy(WaveState.from_arrays("v_frame", g, z, z)) == pytest.approx(4 / 3, abs=1e-6)


def test_blowup_detected():
    cfg = small_config(blowup_cap=0.01)
    st = make_initial_data(InitialDataSpec(amplitude=0.05), cfg.make_grid())
    with pytest.raises(BlowUpError) as info:
        evolve(st, cfg)
    assert info.value.step == 1 or info.value.peak > 0.01


def test_rejects_wrong_frame():
    cfg = small_config()
    g = cfg.make_grid()
    z = np.zeros(g.n_points)
    with pytest.raises(ValueError):
        evolve(WaveState.from_arrays("w_frame", g, z, z), cfg)


@pytest.mark.parametrize("problem, res, kw", [
    ("manufactured", (0.04, 0.02, 0.01), {"coordinate": "r_uniform"}),
    ("manufactured", (0.04, 0.02, 0.01), {"coordinate": "x_uniform"}),
    ("kink_residual", (0.04, 0.02, 0.01), {}),
    ("dt", (0.02, 0.01, 0.005), {"fixed_dx": 0.025}),
])
def test_second_order(problem, res, kw):
    out = convergence_order(problem, res, **kw)
    assert out.conclusive
    assert 1.8 < out.order < 2.2


def test_convergence_ladder_validation():
    with pytest.raises(ValueError):
        convergence_order("manufactured", (0.04, 0.02))
    with pytest.raises(ValueError):
        convergence_order("manufactured", (0.04, 0.03, 0.01))
    with pytest.raises(ValueError):
        convergence_order("bogus", (0.04, 0.02, 0.01))


def test_support_of_truncated_data_is_whole_domain():
    g = Grid1D.from_spacing("r_uniform", 10.0, 0.05)
    st = make_initial_data(InitialDataSpec(), g)
    assert solver.support_radius(st) == pytest.approx(10.0)
    z = np.zeros(g.n_points)
    assert solver.support_radius(WaveState.from_arrays("v_frame", g, z, z)) == 0.0


@pytest.mark.parametrize("coordinate, half_extent", [("x_uniform", 8.0), ("r_uniform", 20.0)])
def test_richardson_order(coordinate, half_extent):
    out = convergence_order("richardson", (0.04, 0.02, 0.01), coordinate=coordinate,
                            half_extent=half_extent)
    assert out.conclusive and 1.8 < out.order < 2.2


def test_truncated_domain_is_inconclusive():
    # r = 8 cuts the default bump (x = 2.8); successive differences stall
    out = convergence_order("richardson", (0.04, 0.02, 0.01), coordinate="r_uniform")
    assert not out.conclusive and np.isnan(out.order)
