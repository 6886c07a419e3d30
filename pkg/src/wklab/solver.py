"""Time evolution of odd perturbations v = u - H of the kink.

The equation is written in flux form in the uniform grid coordinate s,

    m(s) v_tt = d_s(k d_s v) + g(s) [f(H + v) - f(H)],

with (m, k, g) = (cosh^2 x, 1, 1) on an x-uniform grid and
(sqrt(1+r^2), sqrt(1+r^2), 1/sqrt(1+r^2)) on an r-uniform grid.  Both are
the same PDE.  Space is discretised with the symmetric 3-point flux stencil
and time with position (drift-kick-drift) Stormer-Verlet, so the
semi-discrete energy returned by :func:`discrete_energy` has bounded
oscillation and no drift.

Odd parity is structural: fields live on [0, X_max] with v = 0 pinned at
node 0 and at the far end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import model
from .model import Grid1D, WaveState

# fraction of the data norm allowed outside the support radius
SUPPORT_NORM_FRACTION = 1e-8


class BlowUpError(RuntimeError):
    def __init__(self, step: int, time: float, peak: float):
        super().__init__(f"|v| reached {peak:.3g} at step {step} (t = {time:.6g})")
        self.step = step
        self.time = time
        self.peak = peak


class CausalityError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dx: float = 0.02
    dt: float = 0.015
    half_extent: float = 222.0
    t_final: float = 200.0
    observe_every: int = 20
    boundary: str = "dirichlet_vacuum"
    coordinate: str = "r_uniform"
    blowup_cap: float = 10.0

    def __post_init__(self):
        for name in ("dx", "dt", "half_extent"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")
        if self.observe_every < 1:
            raise ValueError("observe_every must be a positive integer")
        if self.boundary != "dirichlet_vacuum":
            raise ValueError(f"unsupported boundary {self.boundary!r}")
        if self.coordinate not in model.GRID_KINDS:
            raise ValueError(f"unknown coordinate {self.coordinate!r}")
        # characteristic speed in s is at most 1 for both coordinates
        if self.dt > 0.9 * self.dx:
            raise ValueError(f"CFL violated: dt = {self.dt} > 0.9 dx = {0.9 * self.dx}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def make_grid(self) -> Grid1D:
        return Grid1D.from_spacing(self.coordinate, self.half_extent, self.dx)

    def check_causality(self, support_radius: float) -> None:
        need = self.t_final + support_radius + 2.0
        if self.half_extent < need:
            raise CausalityError(
                f"half_extent {self.half_extent} < t_final + support + 2 = {need:.4g}")


@dataclass(frozen=True)
class InitialDataSpec:
    family: str = "odd_gaussian_bump"
    amplitude: float = 0.05
    width: float = 1.0
    center_offset: float = 0.0
    # custom_table only: full-line (x, v1, v2) samples
    table: tuple | None = field(default=None, compare=False, repr=False)

    FAMILIES = ("odd_gaussian_bump", "odd_velocity_bump", "custom_table")

    def __post_init__(self):
        if self.family not in self.FAMILIES:
            raise ValueError(f"unknown data family {self.family!r}")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if self.family == "custom_table" and self.table is None:
            raise ValueError("custom_table needs a (x, v1, v2) table")


def _odd_profile(x, width, offset):
    envelope = 0.5 * (np.exp(-((x - offset) / width) ** 2) + np.exp(-((x + offset) / width) ** 2))
    return np.sinh(x) * envelope


def make_initial_data(spec: InitialDataSpec, grid: Grid1D) -> WaveState:
    x = grid.node_x
    zero = np.zeros(grid.n_points)
    if spec.family == "odd_gaussian_bump":
        v1, v2 = spec.amplitude * _odd_profile(x, spec.width, spec.center_offset), zero
    elif spec.family == "odd_velocity_bump":
        v1, v2 = zero, spec.amplitude * _odd_profile(x, spec.width, spec.center_offset)
    else:
        xt, t1, t2 = (np.asarray(a, dtype=float) for a in spec.table)
        if xt.ndim != 1 or not np.allclose(xt, -xt[::-1], atol=1e-12):
            raise ValueError("custom table nodes must be symmetric about 0")
        for arr in (t1, t2):
            scale = max(np.max(np.abs(arr)), 1e-300)
            if np.max(np.abs(arr + arr[::-1])) > 1e-12 * scale:
                raise ValueError("custom table data is not odd")
        v1 = spec.amplitude * np.interp(x, xt, t1, right=0.0)
        v2 = spec.amplitude * np.interp(x, xt, t2, right=0.0)
    v1 = np.array(v1, dtype=float)
    v2 = np.array(v2, dtype=float)
    for v in (v1, v2):
        v[0] = 0.0
        v[-1] = 0.0
    return WaveState.from_arrays("v_frame", grid, v1, v2)


def data_norm_density(state: WaveState) -> np.ndarray:
    """(v2^2 + v1_r^2 + v1^2/(1+r^2)) (1+r^2)^(1/2), per unit r."""
    grid = state.grid
    v1, v2 = state.pos.values, state.vel.values
    q = 1.0 + grid.node_r ** 2
    v1r = grid.d_dr(v1, "odd")
    return (v2 ** 2 + v1r ** 2 + v1 ** 2 / q) * np.sqrt(q)


def data_norm(state: WaveState) -> float:
    """Weighted norm int (v2^2 + v1_r^2 + v1^2/(1+r^2)) (1+r^2)^(1/2) dr."""
    return state.grid.integrate(data_norm_density(state))


def support_radius(state: WaveState, fraction: float = SUPPORT_NORM_FRACTION) -> float:
    """Smallest r outside which at most ``fraction`` of the data norm lives."""
    grid = state.grid
    dens = data_norm_density(state) * grid.dr_ds
    total = float(np.sum(dens))
    if total == 0.0:
        return 0.0
    tail = np.cumsum(dens[::-1])[::-1]
    inside = tail <= fraction * total
    if not inside.any():
        # data reaches the boundary
        return float(grid.node_r[-1])
    return float(grid.node_r[int(np.argmax(inside))])


class Scheme:
    """Precomputed coefficient arrays of the semi-discrete system on one grid.

    ``kink_residual=True`` keeps the discrete static residual of H in the
    force, i.e. evolves the total field u = H + v with the discrete
    Laplacian; the default subtracts the continuum static equation so the
    kink is an exact equilibrium.
    """

    def __init__(self, grid: Grid1D, kink_residual: bool = False,
                 forcing: Callable[[float], np.ndarray] | None = None):
        self.grid = grid
        h = grid.spacing
        s_half = grid.node_s[:-1] + 0.5 * h
        if grid.kind == "x_uniform":
            self.mass = np.cosh(grid.node_x) ** 2
            self.k_half = np.ones(grid.n_points - 1)
            self.g = np.ones(grid.n_points)
        else:
            q = 1.0 + grid.node_r ** 2
            self.mass = np.sqrt(q)
            self.k_half = np.sqrt(1.0 + s_half ** 2)
            self.g = 1.0 / np.sqrt(q)
        self.kink = model.kink(grid.node_x)
        self.f_kink = model.nonlinearity_f(self.kink)
        self.forcing = forcing
        self.residual = None
        if kink_residual:
            self.residual = self._flux_div(self.kink) + self.g[1:-1] * self.f_kink[1:-1]
        self.kink_energy = grid.integrate(model.kink_energy_density_r(grid.node_r))

    def _flux_div(self, v):
        flux = self.k_half * np.diff(v)
        return (flux[1:] - flux[:-1]) / self.grid.spacing ** 2

    def acceleration(self, v: np.ndarray, t: float = 0.0) -> np.ndarray:
        a = np.zeros_like(v)
        vi = v[1:-1]
        hi = self.kink[1:-1]
        force = self._flux_div(v) + self.g[1:-1] * (model.nonlinearity_f(hi + vi) - self.f_kink[1:-1])
        if self.residual is not None:
            force += self.residual
        if self.forcing is not None:
            force += self.forcing(t)[1:-1]
        a[1:-1] = force / self.mass[1:-1]
        return a

    def energy(self, v: np.ndarray, vt: np.ndarray) -> float:
        """Semi-discrete energy E(H + v), conserved by the spatial scheme."""
        h = self.grid.spacing
        hk = self.kink
        # 1/2 [W(H+v) - W(H) - W'(H) v], written without cancellation
        g_pot = 0.5 * (2.0 * hk * v + v * v) ** 2 - (1.0 - hk * hk) * v * v
        node = 0.5 * self.mass * vt * vt + self.g * g_pot
        # half-line trapezoid doubled = full-line sum with weight h at the origin
        node_sum = h * (2.0 * np.sum(node[1:-1]) + node[0] + node[-1])
        grad = np.sum(self.k_half * np.diff(v) ** 2) / h
        return self.kink_energy + node_sum + grad


_SCHEMES: dict = {}


def scheme_for(grid: Grid1D) -> Scheme:
    key = id(grid)
    entry = _SCHEMES.get(key)
    if entry is None or entry[0] is not grid:
        if len(_SCHEMES) > 32:
            _SCHEMES.clear()
        entry = (grid, Scheme(grid))
        _SCHEMES[key] = entry
    return entry[1]


def discrete_energy(state: WaveState) -> float:
    if state.frame != "v_frame":
        raise ValueError("energy is evaluated on v-frame states")
    return scheme_for(state.grid).energy(state.pos.values, state.vel.values)


def _step_arrays(scheme: Scheme, v, vt, t, dt):
    v = v + 0.5 * dt * vt
    vt = vt + dt * scheme.acceleration(v, t + 0.5 * dt)
    v = v + 0.5 * dt * vt
    return v, vt


def evolve_step(state: WaveState, config: SolverConfig, scheme: Scheme | None = None) -> WaveState:
    """One position-Verlet step; raises :class:`BlowUpError` past the cap."""
    if state.frame != "v_frame":
        raise ValueError("the solver evolves v-frame states")
    if state.pos.parity != "odd" or state.vel.parity != "odd":
        raise ValueError("the solver evolves the odd sector")
    scheme = scheme or scheme_for(state.grid)
    v, vt = _step_arrays(scheme, state.pos.values, state.vel.values, state.time, config.dt)
    peak = float(np.max(np.abs(v)))
    if not peak <= config.blowup_cap:
        raise BlowUpError(1, state.time + config.dt, peak)
    return WaveState.from_arrays("v_frame", state.grid, v, vt, state.time + config.dt)


Observer = Callable[[WaveState], dict]


@dataclass
class EvolutionResult:
    state: WaveState
    records: list
    steps: int


def evolve(state: WaveState, config: SolverConfig, observers: Sequence[Observer] = (),
           scheme: Scheme | None = None) -> EvolutionResult:
    """Step to ``config.t_final`` and sample diagnostics every ``observe_every`` steps.

    Every record holds ``t`` and ``energy`` plus whatever the observers
    return.  The initial and final states are always sampled.
    """
    if state.frame != "v_frame":
        raise ValueError("the solver evolves v-frame states")
    scheme = scheme or scheme_for(state.grid)
    grid = state.grid
    dt = config.dt
    n_steps = config.n_steps
    t0 = state.time
    v = state.pos.values.copy()
    vt = state.vel.values.copy()
    records = []

    def observe(step, v, vt):
        snap = WaveState.from_arrays("v_frame", grid, v, vt, t0 + step * dt)
        rec = {"t": snap.time, "energy": scheme.energy(v, vt)}
        for obs in observers:
            rec.update(obs(snap))
        records.append(rec)
        return snap

    snap = observe(0, v, vt)
    for step in range(1, n_steps + 1):
        v, vt = _step_arrays(scheme, v, vt, t0 + (step - 1) * dt, dt)
        peak = float(np.max(np.abs(v)))
        if not peak <= config.blowup_cap:
            raise BlowUpError(step, t0 + step * dt, peak)
        if step % config.observe_every == 0 or step == n_steps:
            snap = observe(step, v, vt)
    if n_steps == 0:
        snap = WaveState.from_arrays("v_frame", grid, v, vt, t0)
    return EvolutionResult(snap, records, n_steps)


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class ConvergenceResult:
    order: float
    errors: list
    spacings: list
    conclusive: bool


def _grid_norm(values: np.ndarray, spacing: float) -> float:
    return math.sqrt(2.0 * float(np.trapezoid(values ** 2, dx=spacing)))


def _manufactured(grid: Grid1D, amplitude: float):
    """Exact solution a sin(t + 1/2) s exp(-s^2/4) of the forced equation."""
    s = grid.node_s
    env = np.exp(-s * s / 4.0)
    phi = s * env
    dphi = (1.0 - s * s / 2.0) * env
    d2phi = (s ** 3 / 4.0 - 1.5 * s) * env
    if grid.kind == "x_uniform":
        mass, k, dk, g = np.cosh(s) ** 2, 1.0, 0.0, 1.0
    else:
        q = 1.0 + s * s
        mass, k, dk, g = np.sqrt(q), np.sqrt(q), s / np.sqrt(q), 1.0 / np.sqrt(q)
    hk = model.kink(grid.node_x)
    fh = model.nonlinearity_f(hk)

    def exact(t):
        return amplitude * math.sin(t + 0.5) * phi

    def exact_t(t):
        return amplitude * math.cos(t + 0.5) * phi

    def forcing(t):
        v = exact(t)
        vtt = -v
        div = amplitude * math.sin(t + 0.5) * (k * d2phi + dk * dphi)
        return mass * vtt - div - g * (model.nonlinearity_f(hk + v) - fh)

    return exact, exact_t, forcing


def _ladder_ok(values: Sequence[float]) -> bool:
    return all(abs(a / b - 2.0) < 1e-9 for a, b in zip(values, values[1:]))


def convergence_order(problem: str, resolutions: Sequence[float], *, t_final: float = 1.0,
                      coordinate: str = "x_uniform", half_extent: float = 8.0,
                      cfl: float = 0.5, amplitude: float = 0.1,
                      fixed_dx: float = 0.005) -> ConvergenceResult:
    """Observed order of v1(T) under a factor-2 refinement ladder.

    problem:
      ``manufactured``  -- forced equation with a known exact solution
                           (resolutions are grid spacings, dt = cfl * dx);
      ``kink_residual`` -- total-field evolution from the bare kink, error
                           measured against the exact static solution 0;
      ``richardson``    -- smooth odd data, successive differences;
      ``dt``            -- time-step ladder at fixed spacing ``fixed_dx``
                           (resolutions are time steps).
    """
    if len(resolutions) < 3 or not _ladder_ok(resolutions):
        raise ValueError("need at least 3 resolutions forming a factor-2 ladder")
    finals, spacings = [], []
    exact = None
    for res in resolutions:
        dx = fixed_dx if problem == "dt" else res
        dt = res if problem == "dt" else cfl * res
        grid = Grid1D.from_spacing(coordinate, half_extent, dx)
        n_steps = int(round(t_final / dt))
        if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
            raise ValueError("t_final must be a multiple of every time step")
        if problem == "manufactured":
            exact, exact_t, forcing = _manufactured(grid, amplitude)
            scheme = Scheme(grid, forcing=forcing)
            v, vt = exact(0.0), exact_t(0.0)
        elif problem == "kink_residual":
            scheme = Scheme(grid, kink_residual=True)
            v = np.zeros(grid.n_points)
            vt = np.zeros(grid.n_points)
        elif problem in ("richardson", "dt"):
            scheme = Scheme(grid)
            st = make_initial_data(InitialDataSpec(amplitude=amplitude), grid)
            v, vt = st.pos.values.copy(), st.vel.values.copy()
        else:
            raise ValueError(f"unknown convergence problem {problem!r}")
        for step in range(n_steps):
            v, vt = _step_arrays(scheme, v, vt, step * dt, dt)
        if problem == "manufactured":
            finals.append(v - exact(t_final))
        else:
            finals.append(v)
        spacings.append(dx)

    coarse = spacings[0]
    if problem in ("manufactured", "kink_residual"):
        errors = [_grid_norm(e[:: int(round(coarse / h))], coarse) for e, h in zip(finals, spacings)]
    else:
        errors = []
        for a, b, ha, hb in zip(finals, finals[1:], spacings, spacings[1:]):
            errors.append(_grid_norm(a[:: int(round(coarse / ha))] - b[:: int(round(coarse / hb))], coarse))
    conclusive = all(e > 0 for e in errors) and all(a > b for a, b in zip(errors, errors[1:]))
    if len(errors) < 2 or not conclusive:
        return ConvergenceResult(float("nan"), errors, spacings, False)
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    return ConvergenceResult(float(np.mean(orders)), errors, spacings, True)
