"""Closed-form ingredients of the reduced Yang-Mills equation on the wormhole.

The reduced field u(t, r) solves

    u_tt = u_rr + r/(1+r^2) u_r + f(u)/(1+r^2),    f(u) = 2u(1-u^2),

or, with x = arcsinh r,  cosh^2(x) u_tt = u_xx + f(u).  The static kink is
H(x) = tanh x, i.e. H(r) = r/sqrt(1+r^2).  Perturbations are written
u = H + v and the weighted field w = (1+r^2)^(1/4) v.

Everything here is a pure function of its inputs.  Grids are half-line
grids on [0, X_max]; odd/even fields are reconstructed on the full line by
reflection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRID_KINDS = ("x_uniform", "r_uniform")
PARITIES = ("odd", "even", "none")
FRAMES = ("v_frame", "w_frame", "u_frame")

KINK_ENERGY = 4.0 / 3.0


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Half-line grid with node 0 at the origin.

    ``kind='x_uniform'`` places nodes uniformly in x (the r nodes are the
    mapped values sinh x); ``kind='r_uniform'`` places them uniformly in r.
    ``spacing`` is the step of whichever coordinate is uniform, called s.
    """

    kind: str
    half_extent: float
    n_points: int
    spacing: float = field(init=False)
    node_s: np.ndarray = field(init=False, repr=False)
    node_x: np.ndarray = field(init=False, repr=False)
    node_r: np.ndarray = field(init=False, repr=False)
    jacobian: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.n_points < 16:
            raise ValueError("a grid needs at least 16 points")
        if not self.half_extent > 0:
            raise ValueError("half_extent must be positive")
        s = np.linspace(0.0, self.half_extent, self.n_points)
        ds = self.half_extent / (self.n_points - 1)
        if self.kind == "x_uniform":
            x = s
            r = np.sinh(x)
        else:
            r = s
            x = np.arcsinh(r)
        for name, value in (("spacing", ds), ("node_s", s), ("node_x", x),
                            ("node_r", r), ("jacobian", np.sqrt(1.0 + r * r))):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_spacing(cls, kind: str, half_extent: float, spacing: float) -> "Grid1D":
        n = int(round(half_extent / spacing)) + 1
        return cls(kind, (n - 1) * spacing, n)

    @property
    def dr_ds(self) -> np.ndarray:
        """dr/ds at the nodes (cosh x for x-uniform grids, 1 otherwise)."""
        if self.kind == "x_uniform":
            return self.jacobian
        return np.ones(self.n_points)

    def mirror(self, values: np.ndarray, parity: str) -> np.ndarray:
        """Full-line values on the 2n-1 nodes [-X_max, X_max]."""
        values = np.asarray(values, dtype=float)
        if parity == "odd":
            left = -values[:0:-1]
        elif parity == "even":
            left = values[:0:-1]
        else:
            raise ValueError("mirror needs parity 'odd' or 'even'")
        return np.concatenate([left, values])

    def full_nodes(self, which: str = "s") -> np.ndarray:
        nodes = {"s": self.node_s, "x": self.node_x, "r": self.node_r}[which]
        return self.mirror(nodes, "odd")

    def integrate(self, integrand: np.ndarray) -> float:
        """Integral over r in R of an even integrand given on the half-line.

        Composite trapezoid in the uniform coordinate, doubled.
        """
        g = np.asarray(integrand, dtype=float) * self.dr_ds
        return 2.0 * float(np.trapezoid(g, dx=self.spacing))

    def integrate_window(self, integrand: np.ndarray, radius: float) -> float:
        """Integral over |r| <= radius of an even integrand (trapezoid, doubled)."""
        g = np.asarray(integrand, dtype=float) * self.dr_ds
        k = int(np.searchsorted(self.node_r, radius * (1 + 1e-12), side="right"))
        if k < 2:
            return 0.0
        return 2.0 * float(np.trapezoid(g[:k], dx=self.spacing))

    def d_ds(self, values: np.ndarray, parity: str) -> np.ndarray:
        """Centered first derivative in s; the origin uses the parity ghost."""
        v = np.asarray(values, dtype=float)
        out = np.empty_like(v)
        h = self.spacing
        out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        if parity == "odd":
            out[0] = v[1] / h
        elif parity == "even":
            out[0] = 0.0
        else:
            out[0] = (v[1] - v[0]) / h
        out[-1] = (v[-1] - v[-2]) / h
        return out

    def d_dr(self, values: np.ndarray, parity: str) -> np.ndarray:
        """First derivative in r, using d/dr = (ds/dr) d/ds."""
        return self.d_ds(values, parity) / self.dr_ds


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid1D
    values: np.ndarray
    parity: str = "none"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise ValueError("field length does not match the grid")
        if self.parity not in PARITIES:
            raise ValueError(f"unknown parity {self.parity!r}")
        if self.parity == "odd" and values[0] != 0.0:
            raise ValueError("odd field must vanish at the origin")
        object.__setattr__(self, "values", values)

    def full_line(self) -> np.ndarray:
        return self.grid.mirror(self.values, self.parity)


@dataclass(frozen=True, eq=False)
class WaveState:
    """(position, velocity) in one of the three frames, plus the time."""

    frame: str
    pos: ScalarField
    vel: ScalarField
    time: float = 0.0

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.pos.grid is not self.vel.grid:
            raise ValueError("pos and vel must share one grid")

    @property
    def grid(self) -> Grid1D:
        return self.pos.grid

    @classmethod
    def from_arrays(cls, frame, grid, pos, vel, time=0.0, parity="odd"):
        return cls(frame, ScalarField(grid, pos, parity), ScalarField(grid, vel, parity), time)


# ---------------------------------------------------------------------------
# kink, nonlinearity and potentials


def kink(x):
    return np.tanh(x)


def kink_r(r):
    r = np.asarray(r, dtype=float)
    return r / np.sqrt(1.0 + r * r)


def kink_derivative_r(r):
    """dH/dr = (1+r^2)^(-3/2)."""
    r = np.asarray(r, dtype=float)
    return (1.0 + r * r) ** -1.5


def kink_derivative_x(r):
    """dH/dx = sech^2 x = (1+r^2)^(-1), the translation zero mode."""
    r = np.asarray(r, dtype=float)
    return 1.0 / (1.0 + r * r)


def nonlinearity_f(u):
    u = np.asarray(u, dtype=float)
    return 2.0 * u * (1.0 - u * u)


def nonlinearity_fprime(u):
    u = np.asarray(u, dtype=float)
    return 2.0 - 6.0 * u * u


def potential_W(u):
    u = np.asarray(u, dtype=float)
    return (1.0 - u * u) ** 2


def nonlinear_remainder(v, r):
    """f(H+v) - f(H) - f'(H) v at H = H(r); equals -6 H v^2 - 2 v^3."""
    h = kink_r(r)
    v = np.asarray(v, dtype=float)
    # expanded form, free of the cancellation in the defining difference
    return -6.0 * h * v * v - 2.0 * v ** 3


def nonlinear_remainder_direct(v, r):
    """Same remainder evaluated literally as a Taylor difference."""
    h = kink_r(r)
    return nonlinearity_f(h + v) - nonlinearity_f(h) - nonlinearity_fprime(h) * v


def transformed_nonlinearity(w1, r):
    """(1+r^2)^(-3/4) N(w1 (1+r^2)^(-1/4)), the source term in the w-frame."""
    q = 1.0 + np.asarray(r, dtype=float) ** 2
    return q ** -0.75 * nonlinear_remainder(np.asarray(w1) * q ** -0.25, r)


def transformed_nonlinearity_closed(w1, r):
    r = np.asarray(r, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    q = 1.0 + r * r
    return -6.0 * kink_r(r) * w1 ** 2 / q ** 1.25 - 2.0 * w1 ** 3 / q ** 1.5


def potential_V(r):
    """Potential of the w-frame operator -d_rr + V."""
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return 0.75 * (5.0 * r * r - 2.0) / q ** 2


def potential_V_from_L(r):
    """V assembled from the conjugation of L: (2-r^2)/(4q^2) - f'(H)/q."""
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return (2.0 - r * r) / (4.0 * q * q) - nonlinearity_fprime(kink_r(r)) / q


def potential_V_prime(r):
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return (13.5 * r - 7.5 * r ** 3) / q ** 3


def potential_P1(r):
    """Potential of the Darboux partner operator -d_rr + P1."""
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return 0.75 * (2.0 + r * r) / q ** 2


def potential_P1_prime(r):
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return -1.5 * r * (3.0 + r * r) / q ** 3


def potential_P1_second(r):
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    # d/dr of -1.5 (3r + r^3) q^-3
    return -1.5 * ((3.0 + 3.0 * r * r) * q - 6.0 * r * (3.0 * r + r ** 3)) / q ** 4


def repulsivity_profile(r):
    """-r P1'(r) = (3/2) r^2 (3+r^2)/(1+r^2)^3, nonnegative."""
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return 1.5 * r * r * (3.0 + r * r) / q ** 3


def darboux_ground_state(r):
    """Zero mode of -d_rr + V: (1+r^2)^(-3/4)."""
    r = np.asarray(r, dtype=float)
    return (1.0 + r * r) ** -0.75


def darboux_nu(r):
    """nu = -Y'/Y, so that U = d_r + nu and U* = -d_r + nu."""
    r = np.asarray(r, dtype=float)
    return 1.5 * r / (1.0 + r * r)


def darboux_nu_prime(r):
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return 1.5 * (1.0 - r * r) / q ** 2


# ---------------------------------------------------------------------------
# frames


def field_transform(state: WaveState, target: str) -> WaveState:
    """Convert between v = u - H and w = (1+r^2)^(1/4) v."""
    if state.frame == "u_frame" or target == "u_frame":
        raise ValueError("u-frame fields come from the smoothing map, not a pointwise transform")
    if target not in FRAMES:
        raise ValueError(f"unknown frame {target!r}")
    if target == state.frame:
        return state
    weight = (1.0 + state.grid.node_r ** 2) ** 0.25
    if target == "v_frame":
        weight = 1.0 / weight
    pos = ScalarField(state.grid, state.pos.values * weight, state.pos.parity)
    vel = ScalarField(state.grid, state.vel.values * weight, state.vel.parity)
    return WaveState(target, pos, vel, state.time)


# ---------------------------------------------------------------------------
# energy

# 8th-order centered first-derivative weights for offsets 1..4
_D8 = np.array([4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0])


def derivative_x(u: np.ndarray, dx: float) -> np.ndarray:
    """Eighth-order centered derivative on a uniform grid (2nd order at the ends)."""
    u = np.asarray(u, dtype=float)
    out = np.gradient(u, dx, edge_order=2)
    if u.size > 8:
        inner = np.zeros(u.size - 8)
        for k, c in enumerate(_D8, start=1):
            inner += c * (u[4 + k:u.size - 4 + k] - u[4 - k:u.size - 4 - k])
        out[4:-4] = inner / dx
    return out


def energy(u: np.ndarray, ut: np.ndarray | None, dx: float) -> float:
    """E(u) = 1/2 int cosh^2 x u_t^2 + u_x^2 + (1-u^2)^2 dx on a full-line x grid.

    ``u`` and ``ut`` are the total field and its velocity on a uniform,
    symmetric x grid with spacing ``dx`` (odd-sector data is reflected by
    the caller, see :meth:`Grid1D.mirror`).
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    x = (np.arange(n) - (n - 1) / 2) * dx
    ux = derivative_x(u, dx)
    density = ux ** 2 + potential_W(u)
    if ut is not None:
        density = density + np.cosh(x) ** 2 * np.asarray(ut, dtype=float) ** 2
    value = 0.5 * float(np.trapezoid(density, dx=dx))
    if not np.isfinite(value):
        raise FloatingPointError("energy is not finite")
    return value


def bogomolnyi_defect(u: np.ndarray, dx: float) -> float:
    """E(u) - 4/3 - 1/2 int (u_x - (1-u^2))^2 dx for a static full-line field."""
    u = np.asarray(u, dtype=float)
    square = (derivative_x(u, dx) - (1.0 - u * u)) ** 2
    return energy(u, None, dx) - KINK_ENERGY - 0.5 * float(np.trapezoid(square, dx=dx))


def kink_energy_density_r(r):
    """Energy density of the kink per unit r: (1+r^2)^(-5/2)."""
    r = np.asarray(r, dtype=float)
    return (1.0 + r * r) ** -2.5
