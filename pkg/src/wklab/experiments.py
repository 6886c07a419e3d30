"""Orchestrated studies: orbital stability, decay, virial budget, lemmas, spectra, convergence."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from . import model
from . import operators as ops
from . import solver
from . import virial
from .solver import InitialDataSpec, SolverConfig

DECAY_RATIO_MAX = 0.05
SATURATION_MAX = 0.10
DELTA_SCALING_TOL = 0.30
STABILITY_FACTOR = 2.0
# values below this fraction of the first window average count as zero
WINDOW_FLOOR = 1e-10


@dataclass(frozen=True)
class WeightParams:
    A: float = 40.0
    B: float = 8.0
    K: float = 2.0
    eps: float = 0.1

    def __post_init__(self):
        if not self.K > virial.K_MIN:
            raise ValueError(f"K = {self.K} must exceed sqrt(9/5)")
        if not (self.A > 0 and self.B > 0 and self.eps > 0):
            raise ValueError("A, B and eps must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    data: InitialDataSpec = field(default_factory=InitialDataSpec)
    weights: WeightParams = field(default_factory=WeightParams)
    R_list: tuple = (1.0, 2.0, 5.0)
    delta_list: tuple = (0.02, 0.05, 0.1)
    seed: int = 0
    output_path: str = "out"
    window: float = 20.0
    lemma_trials: int = 100
    lemma_spacings: tuple = (0.05, 0.025)
    lemma_eps: tuple = (0.1, 0.05)
    xeps_eps: tuple = (0.1, 0.05, 0.025)
    spectrum_domain: float = 40.0
    spectrum_n: int = 1600

    def __post_init__(self):
        if not self.delta_list or list(self.delta_list) != sorted(self.delta_list):
            raise ValueError("delta_list must be nonempty and sorted")
        if any(d < 0 for d in self.delta_list):
            raise ValueError("delta_list entries must be nonnegative")
        if not self.R_list or any(not 0 < R < self.solver.half_extent for R in self.R_list):
            raise ValueError("R_list entries must lie in (0, X_max)")
        if self.window <= 0 or self.lemma_trials < 1 or self.spectrum_n < 16:
            raise ValueError("window, lemma_trials and spectrum_n must be positive")

    def hash(self) -> str:
        payload = json.dumps(_plain(asdict(self)), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items() if k != "table"}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


@dataclass
class ExperimentReport:
    name: str
    series: list
    summary: dict
    provenance: dict
    r_list: tuple = (1.0, 2.0, 5.0)
    figures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.summary.get("pass", False))


def _provenance(config: ExperimentConfig) -> dict:
    return {"config_hash": config.hash(), "code_version": __version__, "seed": config.seed}


# ---------------------------------------------------------------------------
# evolution sweeps


@dataclass
class SweepMember:
    delta: float
    records: list
    data_norms: np.ndarray
    blowup: str | None = None


def _run_member(config: ExperimentConfig, delta: float) -> SweepMember:
    cfg = config.solver
    grid = cfg.make_grid()
    data = replace(config.data, amplitude=delta)
    state = solver.make_initial_data(data, grid)
    w = config.weights
    diag = virial.Diagnostics(grid, w.A, w.B, w.K, w.eps, config.R_list)
    norms = []

    def norm_observer(st):
        norms.append(solver.data_norm(st))
        return {}

    try:
        result = solver.evolve(state, cfg, [diag, norm_observer])
    except solver.BlowUpError as exc:
        return SweepMember(delta, [], np.array(norms), str(exc))
    records = [row["record"] for row in result.records]
    virial.add_running_integrals(records, w.A)
    return SweepMember(delta, records, np.array(norms))


def check_causality(config: ExperimentConfig, deltas=None) -> float:
    """Raise :class:`solver.CausalityError` if the domain is too short; return the support."""
    grid = config.solver.make_grid()
    support = 0.0
    for delta in deltas if deltas is not None else config.delta_list:
        st = solver.make_initial_data(replace(config.data, amplitude=delta), grid)
        support = max(support, solver.support_radius(st))
    config.solver.check_causality(support)
    return support


def run_sweep(config: ExperimentConfig, deltas=None, jobs: int = 1) -> list:
    deltas = list(config.delta_list if deltas is None else deltas)
    if jobs > 1 and len(deltas) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(deltas))) as pool:
            futures = [pool.submit(_run_member, config, d) for d in deltas]
            return [f.result() for f in futures]
    return [_run_member(config, d) for d in deltas]


def _column(records, attr):
    return np.array([getattr(r, attr) for r in records])


def _local(records, R):
    return np.array([r.local_energy_R[R] for r in records])


def _reference(members, config):
    for m in members:
        if m.delta == config.data.amplitude and m.records:
            return m
    return next((m for m in members if m.records), members[0])


def _series_figures(records, r_list, A):
    if not records:
        return []
    t = _column(records, "time")
    local = {f"E_loc(R={R:g})": _local(records, R) for R in r_list}
    local["min(1,1/r) weight"] = _column(records, "thm_weight_norm")
    e = _column(records, "energy")
    running = {k: np.array([r.running[k] for r in records]) for k in virial.RUNNING_COLUMNS}
    return [
        ("local_energy.svg", "local energies", t, local, True),
        ("functionals.svg", "virial functionals", t,
         {"I": _column(records, "I"), "H": _column(records, "Hfun"), "J": _column(records, "J")}, False),
        ("running_integrals.svg", "running integrals", t, running, False),
        ("energy_drift.svg", "relative energy drift", t, {"energy drift": (e - e[0]) / e[0]}, False),
    ]


def run_orbital_stability(config: ExperimentConfig, jobs: int = 1, sweep=None) -> ExperimentReport:
    """sup_t of the weighted data norm over its initial value, across the delta sweep."""
    members = sweep if sweep is not None else run_sweep(config, jobs=jobs)
    ratios, failures = {}, []
    for m in members:
        if m.blowup:
            failures.append({"delta": m.delta, "error": m.blowup})
            continue
        n0 = m.data_norms[0]
        ratios[repr(m.delta)] = float(np.max(m.data_norms) / n0) if n0 > 0 else 0.0
    vals = [v for v in ratios.values() if v > 0]
    variation = max(vals) / min(vals) if vals else float("nan")
    ok = not failures and bool(vals) and all(np.isfinite(vals)) and variation <= STABILITY_FACTOR
    summary = {"sup_ratio": ratios, "variation": variation, "blowups": failures, "pass": ok}
    ref = _reference(members, config)
    return ExperimentReport("orbital_stability", ref.records, summary, _provenance(config),
                            config.R_list, _series_figures(ref.records, config.R_list, config.weights.A))


def window_averages(t, y, window: float) -> np.ndarray:
    """Trapezoid means of y over consecutive complete windows of length ``window``."""
    t = np.asarray(t)
    y = np.asarray(y)
    out = []
    start = t[0]
    while start + window <= t[-1] + 1e-9:
        mask = (t >= start - 1e-9) & (t <= start + window + 1e-9)
        out.append(np.trapezoid(y[mask], t[mask]) / (t[mask][-1] - t[mask][0]))
        start += window
    return np.array(out)


def eventually_decreasing(averages, floor: float = WINDOW_FLOOR) -> bool:
    """Non-increasing from some index in the first half on (tiny values read as 0)."""
    a = np.asarray(averages, dtype=float)
    if a.size < 2:
        return False
    scale = np.max(np.abs(a))
    if scale == 0.0:
        return True
    a = np.where(np.abs(a) < floor * scale, 0.0, a)
    ok = np.append(np.diff(a) <= 0.0, True)
    # first index from which every later step is non-increasing
    k0 = a.size - 1
    while k0 > 0 and ok[k0 - 1]:
        k0 -= 1
    return k0 <= a.size // 2


def run_decay(config: ExperimentConfig, member: SweepMember | None = None) -> ExperimentReport:
    """Local energies and min(1, 1/r)-weighted norms for the reference amplitude."""
    check_causality(config, [config.data.amplitude])
    m = member or _run_member(config, config.data.amplitude)
    if m.blowup:
        summary = {"pass": False, "blowup": m.blowup}
        return ExperimentReport("decay", [], summary, _provenance(config), config.R_list)
    recs = m.records
    t = _column(recs, "time")
    final_ratio, trend = {}, {}
    for R in config.R_list:
        e = _local(recs, R)
        final_ratio[f"{R:g}"] = float(e[-1] / e[0]) if e[0] > 0 else 0.0
        trend[f"localE_{R:g}"] = eventually_decreasing(window_averages(t, e, config.window))
    trend["thm_weight"] = eventually_decreasing(
        window_averages(t, _column(recs, "thm_weight_norm"), config.window))
    gated = [v for R, v in zip(config.R_list, final_ratio.values()) if R <= 5.0]
    ok = all(v < DECAY_RATIO_MAX for v in gated) and all(trend.values())
    summary = {"delta": m.delta, "t_final": float(t[-1]), "final_over_initial_local_energy": final_ratio,
               "thm_weight_final_over_initial": float(recs[-1].thm_weight_norm / recs[0].thm_weight_norm)
               if recs[0].thm_weight_norm > 0 else 0.0,
               "eventually_decreasing": trend, "pass": ok}
    return ExperimentReport("decay", recs, summary, _provenance(config), config.R_list,
                            _series_figures(recs, config.R_list, config.weights.A))


def _fd_rate_error(records, value_attr, rate_attr):
    t = _column(records, "time")
    v = _column(records, value_attr)
    rate = _column(records, rate_attr)
    if t.size < 3:
        return float("nan"), t[:0], t[:0]
    fd = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    return float(np.max(np.abs(fd - rate[1:-1]))), t[1:-1], fd - rate[1:-1]


def run_virial_budget(config: ExperimentConfig, jobs: int = 1, sweep=None) -> ExperimentReport:
    """Boundedness of I, H, J and saturation / delta^2 scaling of running integrals."""
    check_causality(config)
    members = sweep if sweep is not None else run_sweep(config, jobs=jobs)
    A = config.weights.A
    per_delta, totals = {}, {k: {} for k in virial.RUNNING_COLUMNS}
    ok = True
    for m in members:
        if m.blowup:
            per_delta[repr(m.delta)] = {"blowup": m.blowup}
            ok = False
            continue
        recs = m.records
        n = len(recs)
        scale = A * m.delta ** 2
        entry = {}
        for name, attr in (("I", "I"), ("H", "Hfun"), ("J", "J")):
            peak = float(np.max(np.abs(_column(recs, attr))))
            entry[f"c_{name}"] = peak / scale if scale > 0 else 0.0
        sat = {}
        for k in virial.RUNNING_COLUMNS:
            series = np.array([r.running[k] for r in recs])
            total = series[-1]
            inc = total - series[(3 * n) // 4]
            sat[k] = float(inc / total) if total > 0 else 0.0
            totals[k][repr(m.delta)] = float(total)
            if m.delta > 0:
                entry[f"{k}_over_delta2"] = float(total / m.delta ** 2)
        entry["last_quartile_fraction"] = sat
        err_i, _, _ = _fd_rate_error(recs, "I", "rate_I")
        err_j, _, _ = _fd_rate_error(recs, "J", "rate_J")
        entry["rate_check_I"] = err_i / max(float(np.max(np.abs(_column(recs, "rate_I")))), 1e-300)
        entry["rate_check_J"] = err_j / max(float(np.max(np.abs(_column(recs, "rate_J")))), 1e-300)
        ok &= all(np.isfinite(entry[f"c_{x}"]) for x in "IHJ")
        ok &= all(v < SATURATION_MAX for v in sat.values())
        per_delta[repr(m.delta)] = entry
    scaling = {}
    for k, by_delta in totals.items():
        vals = [v / float(d) ** 2 for d, v in by_delta.items() if float(d) > 0]
        spread = max(vals) / min(vals) - 1.0 if vals and min(vals) > 0 else float("nan")
        scaling[k] = spread
        if len(vals) > 1:
            ok &= bool(spread <= DELTA_SCALING_TOL)
    summary = {"per_delta": per_delta, "delta2_scaling_spread": scaling,
               "hierarchy": virial.hierarchy_report(A, config.weights.B, config.weights.K,
                                                    config.weights.eps, config.data.amplitude),
               "pass": bool(ok)}
    ref = _reference(members, config)
    return ExperimentReport("virial_budget", ref.records, summary, _provenance(config), config.R_list,
                            _series_figures(ref.records, config.R_list, A))


# ---------------------------------------------------------------------------
# lemmas, spectra, convergence


def run_lemma_suite(seed: int = 0, trials: int = 100, spacings=(0.05, 0.025), eps_list=(0.1, 0.05),
                    weights: WeightParams = WeightParams(), half_extent: float = 60.0,
                    xeps_eps=(0.1, 0.05, 0.025), config: ExperimentConfig | None = None) -> ExperimentReport:
    """Measured lemma constants over resolutions x eps; stable if max/min <= 2."""
    table: dict = {}
    xeps_table: dict = {}
    for h in spacings:
        grid = ops.OperatorGrid.uniform(half_extent, h)
        W = virial.build_weights(weights.A, weights.B, weights.K, weights.eps, grid)
        for eps in sorted(set(eps_list) | set(xeps_eps), reverse=True):
            lemmas = virial.LEMMAS if eps in eps_list else ("xeps",)
            for lemma in lemmas:
                rep = virial.lemma_check(lemma, eps, W, trials, seed)
                key = f"h={h:g},eps={eps:g}"
                if lemma == "xeps":
                    xeps_table[key] = rep.ratios
                if eps in eps_list:
                    for bound, val in rep.ratios.items():
                        table.setdefault(f"{lemma}:{bound}", {})[key] = val
    stability, ok = {}, True
    for name, vals in table.items():
        v = np.array(list(vals.values()))
        bounded = bool(np.all(np.isfinite(v)))
        var = float(v.max() / v.min()) if v.min() > 0 else (1.0 if v.max() == 0 else float("inf"))
        stability[name] = {"max": float(v.max()), "variation": var,
                           "pass": bounded and var <= STABILITY_FACTOR}
        ok &= stability[name]["pass"]
    xeps_bounds = {
        "contraction_max": max(r["contraction"] for r in xeps_table.values()),
        "d1_max": max(r["d1"] for r in xeps_table.values()),
        "d2_max": max(r["d2"] for r in xeps_table.values()),
    }
    xeps_ok = (xeps_bounds["contraction_max"] <= 1 + 1e-12 and xeps_bounds["d1_max"] <= 1.0
               and xeps_bounds["d2_max"] <= 1.0)
    summary = {"constants": table, "stability": stability, "xeps": xeps_table,
               "xeps_bounds": xeps_bounds, "pass": bool(ok and xeps_ok)}
    prov = _provenance(config) if config else {"config_hash": None, "code_version": __version__,
                                                "seed": seed}
    return ExperimentReport("lemmas", [], summary, prov)


def smooth_test_fields(grid: ops.OperatorGrid, seed: int = 0, count: int = 4) -> list:
    """Ytilde plus smooth odd bumps, for residual ladders."""
    r = grid.node_r
    rng = np.random.default_rng([seed, 7])
    fields = [model.darboux_ground_state(r)]
    for _ in range(count):
        c, s, k = rng.uniform(-3, 3), rng.uniform(1.0, 2.5), rng.uniform(0.0, 2.0)
        f = np.exp(-((r - c) / s) ** 2) * np.sin(k * r + 0.3)
        fields.append(0.5 * (f - f[::-1]))
    return fields


def _orders(errors):
    e = np.asarray(errors)
    return [float(np.log2(a / b)) for a, b in zip(e, e[1:])]


def run_spectral_report(domains=(40.0, 80.0), spacing: float = 0.05, ladder=(0.1, 0.05, 0.025),
                        repulsivity_nodes: int = 100_000, config: ExperimentConfig | None = None
                        ) -> ExperimentReport:
    """Repulsivity, Darboux residual orders, zero mode and eigenvalue studies."""
    r = np.linspace(-100.0, 100.0, repulsivity_nodes)
    rep = model.repulsivity_profile(r)
    h = r[1] - r[0]
    rep_min = float(rep.min())
    fd_err = []
    for hh in (0.02, 0.01, 0.005):
        rr = np.linspace(-10, 10, int(round(20 / hh)) + 1)
        fd = (model.potential_P1(rr + hh) - model.potential_P1(rr - hh)) / (2 * hh)
        fd_err.append(float(np.max(np.abs(-rr * fd - model.repulsivity_profile(rr)))))

    fac, inter, zero = [], [], []
    for hh in ladder:
        g = ops.OperatorGrid.uniform(20.0, hh)
        tests = smooth_test_fields(g)[1:]
        fac.append(ops.factorization_residual(tests, g))
        inter.append(ops.intertwining_residual(tests, g))
        y = model.darboux_ground_state(g.node_r)
        zero.append(ops._interior_norm(ops.apply_tildeL(y, g), g) / g.norm(y))

    eig = {}
    for L in domains:
        g = ops.OperatorGrid.uniform(L, spacing)
        vals, vecs, gg = ops.smallest_eigenvalues("L_tilde_full", 2, g, return_vectors=True)
        y = model.darboux_ground_state(gg.node_r)
        overlap = abs(gg.inner(vecs[:, 0], y)) / gg.norm(y)
        odd = ops.smallest_eigenvalues("L_tilde_odd", 2, g)
        l1 = ops.smallest_eigenvalues("L1", 3, g)
        coerc = ops.odd_coercivity(L, spacing / 2)
        eig[f"{L:g}"] = {"L_tilde_full": vals.tolist(), "overlap": float(overlap),
                         "L_tilde_odd": odd.tolist(), "L_tilde_odd_times_L2": float(odd[0] * L * L),
                         "L1": l1.tolist(), "mu0_l2": coerc.mu_l2, "mu0_h1": coerc.mu_h1}
    mus = [e["mu0_l2"] for e in eig.values()]
    mu_stable = max(mus) / min(mus) - 1.0 <= 0.10 and min(mus) > 0
    ok = (rep_min >= 0.0
          and all(1.8 < o < 2.2 for o in _orders(fd_err))
          and all(1.8 < o < 2.2 for o in _orders(fac) + _orders(inter) + _orders(zero))
          and all(e["overlap"] > 0.999 for e in eig.values())
          and all(min(e["L1"]) >= -1e-10 for e in eig.values())
          and all(e["L_tilde_odd"][0] > e["L_tilde_full"][0] for e in eig.values())
          and mu_stable)
    summary = {
        "repulsivity_min": rep_min, "repulsivity_nodes": repulsivity_nodes, "repulsivity_spacing": h,
        "repulsivity_fd_errors": fd_err, "repulsivity_fd_orders": _orders(fd_err),
        "factorization_residuals": fac, "factorization_orders": _orders(fac),
        "intertwining_residuals": inter, "intertwining_orders": _orders(inter),
        "zero_mode_residuals": zero, "zero_mode_orders": _orders(zero),
        "eigen": eig, "mu0_stable": bool(mu_stable), "pass": bool(ok),
    }
    prov = _provenance(config) if config else {"config_hash": None, "code_version": __version__,
                                                "seed": None}
    return ExperimentReport("spectrum", [], summary, prov)


def energy_drift(dt: float, dx: float = 0.02, t_final: float = 100.0, delta: float = 0.05,
                 coordinate: str = "r_uniform", half_extent: float | None = None) -> float:
    """max_t |E_d(t) - E_d(0)| / E_d(0) along one run."""
    half = half_extent if half_extent is not None else t_final + 22.0
    cfg = SolverConfig(dx=dx, dt=dt, half_extent=half, t_final=t_final,
                       observe_every=max(1, int(round(0.3 / dt))), coordinate=coordinate)
    grid = cfg.make_grid()
    st = solver.make_initial_data(InitialDataSpec(amplitude=delta), grid)
    e = np.array([r["energy"] for r in solver.evolve(st, cfg).records])
    return float(np.max(np.abs(e - e[0])) / e[0])


def virial_rate_ladder(levels=((0.04, 0.03), (0.02, 0.015)), t_final: float = 10.0,
                       observe_every: int = 2, delta: float = 0.05,
                       weights: WeightParams = WeightParams(), coordinate: str = "r_uniform",
                       half_extent: float = 40.0) -> dict:
    """max |centered dI/dt - virial_rate| at common sample times, per (dx, dt) level."""
    errs = {"I": [], "J": []}
    times = None
    for dx, dt in levels:
        cfg = SolverConfig(dx=dx, dt=dt, half_extent=half_extent, t_final=t_final,
                           observe_every=observe_every, coordinate=coordinate)
        grid = cfg.make_grid()
        st = solver.make_initial_data(InitialDataSpec(amplitude=delta), grid)
        diag = virial.Diagnostics(grid, weights.A, weights.B, weights.K, weights.eps)
        recs = [row["record"] for row in solver.evolve(st, cfg, [diag]).records]
        for key, val, rate in (("I", "I", "rate_I"), ("J", "J", "rate_J")):
            _, t, e = _fd_rate_error(recs, val, rate)
            if times is None:
                times = t
            idx = np.searchsorted(t, times - 1e-9)
            errs[key].append(float(np.max(np.abs(e[idx]))))
    return {k: {"errors": v, "ratio": v[0] / v[1] if v[1] > 0 else float("nan")} for k, v in errs.items()}


def run_convergence(config: ExperimentConfig | None = None, quick: bool = False) -> ExperimentReport:
    """Observed orders of the solver, energy drift scaling and the virial-rate ladder."""
    studies = {}
    for name, problem, res, kw in (
            ("kink_stationarity", "kink_residual", (0.04, 0.02, 0.01), {}),
            ("manufactured_r", "manufactured", (0.04, 0.02, 0.01), {"coordinate": "r_uniform"}),
            ("manufactured_x", "manufactured", (0.04, 0.02, 0.01), {"coordinate": "x_uniform"}),
            ("time_step", "dt", (0.02, 0.01, 0.005), {"fixed_dx": 0.025})):
        out = solver.convergence_order(problem, res, **kw)
        studies[name] = {"order": out.order, "errors": out.errors, "conclusive": out.conclusive}
    t_final = 20.0 if quick else 100.0
    d1 = energy_drift(0.015, t_final=t_final)
    d2 = energy_drift(0.0075, t_final=t_final)
    ladder = virial_rate_ladder(t_final=4.0 if quick else 10.0)
    ok = (all(s["conclusive"] and 1.8 < s["order"] < 2.2 for s in studies.values())
          and d1 < 1e-6 and 3.0 <= d1 / d2 <= 5.0
          and 3.0 <= ladder["I"]["ratio"] <= 5.0)
    summary = {"orders": studies, "energy_drift": {"dt": d1, "dt/2": d2, "ratio": d1 / d2,
                                                   "t_final": t_final},
               "virial_rate_ladder": ladder, "pass": bool(ok)}
    prov = _provenance(config) if config else {"config_hash": None, "code_version": __version__,
                                                "seed": None}
    return ExperimentReport("converge", [], summary, prov)


def run_evolve(config: ExperimentConfig) -> ExperimentReport:
    """Single evolution of the reference amplitude with the full diagnostics series."""
    check_causality(config, [config.data.amplitude])
    m = _run_member(config, config.data.amplitude)
    if m.blowup:
        return ExperimentReport("evolve", [], {"pass": False, "blowup": m.blowup},
                                _provenance(config), config.R_list)
    e = _column(m.records, "energy")
    drift = float(np.max(np.abs(e - e[0])) / e[0])
    summary = {"delta": m.delta, "energy_drift": drift,
               "data_norm_sup_ratio": float(np.max(m.data_norms) / m.data_norms[0])
               if m.data_norms[0] > 0 else 0.0,
               "hierarchy": virial.hierarchy_report(config.weights.A, config.weights.B, config.weights.K,
                                                    config.weights.eps, m.delta),
               "pass": bool(math.isfinite(drift))}
    return ExperimentReport("evolve", m.records, summary, _provenance(config), config.R_list,
                            _series_figures(m.records, config.R_list, config.weights.A))
