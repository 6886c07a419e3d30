"""Weights, virial functionals, weighted norms and randomized lemma checks.

All quantities are evaluated on a full-line :class:`~wklab.operators.OperatorGrid`
with trapezoid quadrature in r.  Evolution states (half-line, v-frame) are
converted with :func:`full_line_w`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import model
from . import operators as ops
from .operators import OperatorGrid
from .solver import discrete_energy

K_MIN = math.sqrt(9.0 / 5.0)

# ---------------------------------------------------------------------------
# cutoff


def _smoothstep(t):
    """Septic smoothstep S(t) on [0, 1] and its first three derivatives.

    S has S', S'', S''' vanishing at both ends, so the cutoff is C^3, which
    the third derivative of Psi_{A,B} in the virial rate needs.
    """
    t = np.clip(t, 0.0, 1.0)
    s0 = t ** 4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t ** 3)
    s1 = 140.0 * t ** 3 * (1.0 - t) ** 3
    s2 = 420.0 * t ** 2 * (1.0 - t) ** 2 * (1.0 - 2.0 * t)
    s3 = 840.0 * t * (1.0 - t) * (1.0 - 5.0 * t + 5.0 * t * t)
    return s0, s1, s2, s3


def chi(r, order: int = 0):
    """Even cutoff: 1 on [-1, 1], 0 outside [-2, 2], monotone in between."""
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    s = _smoothstep(a - 1.0)
    inside = (a > 1.0) & (a < 2.0)
    if order == 0:
        return 1.0 - s[0]
    sign = np.sign(r) if order % 2 == 1 else 1.0
    return np.where(inside, -s[order] * sign, 0.0)


# ---------------------------------------------------------------------------
# weights


def sech(z):
    """Overflow-free 1/cosh."""
    e = np.exp(-np.abs(np.asarray(z, dtype=float)))
    return 2.0 * e / (1.0 + e * e)


@dataclass(frozen=True)
class Profile:
    """A weight and the derivatives the virial rate needs."""

    value: np.ndarray
    d1: np.ndarray
    d3: np.ndarray


def _zeta_sq(r, scale):
    """zeta^2 = exp(-2 a/scale) with a = (1 - chi)|r|, and two derivatives."""
    c0, c1, c2 = chi(r), chi(r, 1), chi(r, 2)
    a = (1.0 - c0) * np.abs(r)
    sgn = np.sign(r)
    a1 = (1.0 - c0) * sgn - c1 * np.abs(r)
    a2 = -c2 * np.abs(r) - 2.0 * c1 * sgn
    z = np.exp(-2.0 * a / scale)
    z1 = -2.0 * a1 / scale * z
    z2 = (4.0 * a1 * a1 / scale ** 2 - 2.0 * a2 / scale) * z
    return z, z1, z2


def _odd_primitive(values, r):
    """int_0^r values, by cumulative trapezoid outward from the origin."""
    origin = int(np.flatnonzero(r == 0.0)[0])
    right = cumulative_trapezoid(values[origin:], r[origin:], initial=0.0)
    if origin == 0:
        return right
    return np.concatenate([-right[:0:-1], right])


@dataclass(frozen=True, eq=False)
class WeightFamily:
    A: float
    B: float
    K: float
    eps: float
    grid: OperatorGrid
    zeta_A: np.ndarray = field(repr=False)
    Phi_A: np.ndarray = field(repr=False)
    zeta_B: np.ndarray = field(repr=False)
    Phi_B: np.ndarray = field(repr=False)
    chi_A: np.ndarray = field(repr=False)
    Psi_AB: np.ndarray = field(repr=False)
    sigma_A: np.ndarray = field(repr=False)
    sigma_B: np.ndarray = field(repr=False)
    rho_K: np.ndarray = field(repr=False)
    PhiA_over_r: np.ndarray = field(repr=False)
    phi_profile: Profile = field(repr=False)
    psi_profile: Profile = field(repr=False)
    sandwich: tuple = (0.0, 0.0)


def build_weights(A: float, B: float, K: float, eps: float, grid: OperatorGrid) -> WeightFamily:
    """Weight family on ``grid`` (which must contain the origin)."""
    if not K > K_MIN:
        raise ValueError(f"K = {K} must exceed sqrt(9/5) = {K_MIN:.6f}")
    if not (A > 0 and B > 0 and eps > 0):
        raise ValueError("A, B and eps must be positive")
    if not np.any(grid.node_r == 0.0):
        raise ValueError("weight grid must contain the origin")
    if not (K < B < A):
        warnings.warn(f"weights without the ordering K < B < A (K={K}, B={B}, A={A})", stacklevel=2)
    r = grid.node_r
    zA, zA1, zA2 = _zeta_sq(r, A)
    zB, zB1, zB2 = _zeta_sq(r, B)
    phi_a = _odd_primitive(zA, r)
    phi_b = _odd_primitive(zB, r)

    c = chi(r / A)
    c1, c2, c3 = chi(r / A, 1) / A, chi(r / A, 2) / A ** 2, chi(r / A, 3) / A ** 3
    q1 = 2.0 * c * c1
    q2 = 2.0 * c1 * c1 + 2.0 * c * c2
    q3 = 6.0 * c1 * c2 + 2.0 * c * c3
    psi = c * c * phi_b
    psi1 = q1 * phi_b + c * c * zB
    psi3 = q3 * phi_b + 3.0 * q2 * zB + 3.0 * q1 * zB1 + c * c * zB2

    sigma_a = sech(r / A)
    with np.errstate(invalid="ignore", divide="ignore"):
        over_r = np.where(r == 0.0, 1.0, phi_a / np.where(r == 0.0, 1.0, r))
    live = sigma_a > 1e-150
    ratio = zA[live] / sigma_a[live] ** 2
    arrays = dict(
        zeta_A=np.sqrt(zA), Phi_A=phi_a, zeta_B=np.sqrt(zB), Phi_B=phi_b, chi_A=c, Psi_AB=psi,
        sigma_A=sigma_a, sigma_B=sech(r / B), rho_K=sech(r / K),
        PhiA_over_r=over_r)
    for arr in arrays.values():
        arr.setflags(write=False)
    return WeightFamily(A, B, K, eps, grid, **arrays,
                        phi_profile=Profile(phi_a, zA, zA2),
                        psi_profile=Profile(psi, psi1, psi3),
                        sandwich=(float(ratio.min()), float(ratio.max())))


def hierarchy_report(A: float, B: float, K: float, eps: float, delta: float | None = None,
                     much_less: float = 0.1) -> dict:
    """Proof-side parameter conditions, each read as ratio <= ``much_less``."""
    items = {
        "K/B": K / B,
        "B/A": B / A,
        "eps*B": eps * B,
        "K^3/(eps*B^2)": K ** 3 / (eps * B * B),
        "B/(eps*A)": B / (eps * A),
        "exp(-A/B)/eps^2": math.exp(-A / B) / eps ** 2,
    }
    if delta is not None:
        items["B*delta/eps"] = B * delta / eps
        items["A^4*delta"] = A ** 4 * delta
    return {name: {"value": value, "satisfied": bool(value <= much_less)} for name, value in items.items()}


# ---------------------------------------------------------------------------
# functionals


def _d(a, grid):
    return ops.first_difference(a, grid)


def functional_I(w1, w2, weights: WeightFamily) -> float:
    """int (Phi_A w1_r + Phi_A' w1 / 2) w2."""
    g = weights.grid
    p = weights.phi_profile
    return g.inner(p.value * _d(w1, g) + 0.5 * p.d1 * w1, w2)


def functional_H(w1, w2, weights: WeightFamily) -> float:
    """int sigma_A^2 w1 w2."""
    return weights.grid.inner(weights.sigma_A ** 2 * w1, w2)


def functional_J(u1, u2, weights: WeightFamily) -> float:
    """int (Psi_AB u1_r + Psi_AB' u1 / 2) u2."""
    g = weights.grid
    p = weights.psi_profile
    return g.inner(p.value * _d(u1, g) + 0.5 * p.d1 * u1, u2)


def virial_rate(a1, a2, phi: Profile, p_prime, source, grid: OperatorGrid) -> float:
    """Time derivative of int (Phi a1_r + Phi' a1 / 2) a2.

    For a1_t = a2, a2_t = a1_rr - P a1 + G the rate is
    -int Phi' a1_r^2 + 1/4 int Phi''' a1^2 + 1/2 int Phi P' a1^2
    + int G (Phi a1_r + Phi' a1 / 2).  a2 drops out.
    """
    da = _d(a1, grid)
    integrand = (-phi.d1 * da * da + 0.25 * phi.d3 * a1 * a1 + 0.5 * phi.value * p_prime * a1 * a1
                 + source * (phi.value * da + 0.5 * phi.d1 * a1))
    return float(np.sum(grid.weights * integrand))


# ---------------------------------------------------------------------------
# evolution diagnostics

NORM_COLUMNS = ("norm_sA_drw1", "norm_sA_w1", "norm_sA_w2", "norm_sB2rK2_w1", "phiA_norm")
RUNNING_COLUMNS = ("int_sB2rK2", "int_sA_drw1", "int_sA_w1_A2", "int_sA_w2_A2", "int_phiA")


def local_energy_column(radius: float) -> str:
    return f"localE_{radius:g}"


def series_columns(r_list) -> list:
    """Fixed CSV column order of a diagnostics series."""
    return (["t", "energy", "I", "H", "J", *NORM_COLUMNS]
            + [local_energy_column(R) for R in r_list]
            + ["thm_weight", *RUNNING_COLUMNS, "rate_I", "rate_J"])


@dataclass
class DiagnosticsRecord:
    time: float
    energy: float
    I: float
    Hfun: float
    J: float
    norm_sigmaA_drw1: float
    norm_sigmaA_w1: float
    norm_sigmaA_w2: float
    norm_sigmaB2rhoK2_w1: float
    weight_PhiA_norm: float
    local_energy_R: dict
    thm_weight_norm: float
    running: dict = field(default_factory=lambda: dict.fromkeys(RUNNING_COLUMNS, 0.0))
    rate_I: float = float("nan")
    rate_J: float = float("nan")

    def as_row(self) -> dict:
        row = {"t": self.time, "energy": self.energy, "I": self.I, "H": self.Hfun, "J": self.J,
               "norm_sA_drw1": self.norm_sigmaA_drw1, "norm_sA_w1": self.norm_sigmaA_w1,
               "norm_sA_w2": self.norm_sigmaA_w2, "norm_sB2rK2_w1": self.norm_sigmaB2rhoK2_w1,
               "phiA_norm": self.weight_PhiA_norm}
        for R, val in self.local_energy_R.items():
            row[local_energy_column(R)] = val
        row["thm_weight"] = self.thm_weight_norm
        row.update(self.running)
        row["rate_I"] = self.rate_I
        row["rate_J"] = self.rate_J
        return row

    @classmethod
    def from_row(cls, row: dict, r_list) -> "DiagnosticsRecord":
        return cls(row["t"], row["energy"], row["I"], row["H"], row["J"], row["norm_sA_drw1"],
                   row["norm_sA_w1"], row["norm_sA_w2"], row["norm_sB2rK2_w1"], row["phiA_norm"],
                   {R: row[local_energy_column(R)] for R in r_list}, row["thm_weight"],
                   {k: row[k] for k in RUNNING_COLUMNS}, row["rate_I"], row["rate_J"])


def full_line_w(state: model.WaveState):
    """(grid, w1, w2) on the full line from a half-line v-frame state."""
    grid = state.grid
    factor = (1.0 + grid.node_r ** 2) ** 0.25
    w1 = grid.mirror(state.pos.values * factor, "odd")
    w2 = grid.mirror(state.vel.values * factor, "odd")
    return OperatorGrid.from_grid(grid), w1, w2


def _window_sum(grid: OperatorGrid, integrand, radius: float) -> float:
    r = grid.node_r
    mask = np.abs(r) <= radius * (1 + 1e-12)
    return float(np.trapezoid(integrand[mask], r[mask]))


class Diagnostics:
    """Observer computing one :class:`DiagnosticsRecord` per evolution snapshot.

    J needs S_eps on the full line; it is evaluated on the window
    |r| <= 2A + ``margin`` which contains the support of Psi_AB.
    """

    def __init__(self, grid: model.Grid1D, A: float, B: float, K: float, eps: float,
                 r_list=(1.0, 2.0, 5.0), margin: float = 10.0):
        self.og = OperatorGrid.from_grid(grid)
        self.weights = build_weights(A, B, K, eps, self.og)
        self.r_list = tuple(float(R) for R in r_list)
        r = self.og.node_r
        q = 1.0 + r * r
        self.v_prime = model.potential_V_prime(r)
        self.thm = np.minimum(1.0, 1.0 / np.maximum(np.abs(r), 1e-300)) / q
        self.phiA_weight = self.weights.PhiA_over_r / q
        self.sB2rK2 = (self.weights.sigma_B ** 2 * self.weights.rho_K ** 2) ** 2
        half = min(2.0 * A + margin, r[-1])
        keep = np.abs(r) <= half + 1e-9
        self.win = np.flatnonzero(keep)
        self.wg = OperatorGrid(r[keep])
        self.wweights = build_weights(A, B, K, eps, self.wg) if not np.all(keep) else self.weights
        self.p1_prime = model.potential_P1_prime(self.wg.node_r)
        self.p1 = model.potential_P1(self.wg.node_r)

    def record(self, state: model.WaveState, energy: float) -> DiagnosticsRecord:
        g = self.og
        W = self.weights
        r = g.node_r
        _, w1, w2 = full_line_w(state)
        dw1 = ops.first_difference(w1, g)
        sA2 = W.sigma_A ** 2
        local = {}
        dens = w2 * w2 + dw1 * dw1 + w1 * w1
        for R in self.r_list:
            local[R] = _window_sum(g, dens, R)
        source = model.transformed_nonlinearity(w1, r)
        rate_i = virial_rate(w1, w2, W.phi_profile, self.v_prime, source, g)

        wg, ww = self.wg, self.wweights
        eps = self.weights.eps
        w1w, w2w, srcw = w1[self.win], w2[self.win], source[self.win]
        u1 = ops.apply_Seps(w1w, eps, wg)
        u2 = ops.apply_Seps(w2w, eps, wg)
        uw = ops.apply_U(w1w, wg)
        comm = ops.solve_Xeps(self.p1 * uw, eps, wg) - self.p1 * u1
        src_j = -comm + ops.apply_Seps(srcw, eps, wg)
        rate_j = virial_rate(u1, u2, ww.psi_profile, self.p1_prime, src_j, wg)
        return DiagnosticsRecord(
            time=state.time, energy=energy,
            I=functional_I(w1, w2, W), Hfun=functional_H(w1, w2, W), J=functional_J(u1, u2, ww),
            norm_sigmaA_drw1=g.inner(sA2 * dw1, dw1), norm_sigmaA_w1=g.inner(sA2 * w1, w1),
            norm_sigmaA_w2=g.inner(sA2 * w2, w2), norm_sigmaB2rhoK2_w1=g.inner(self.sB2rK2 * w1, w1),
            weight_PhiA_norm=g.inner(self.phiA_weight * w1, w1), local_energy_R=local,
            thm_weight_norm=g.inner(self.thm * w1, w1), rate_I=rate_i, rate_J=rate_j)

    def __call__(self, state: model.WaveState) -> dict:
        rec = self.record(state, discrete_energy(state))
        row = rec.as_row()
        row["record"] = rec
        return row


def weighted_norms(w1, w2, weights: WeightFamily, r_list) -> dict:
    """Squared weighted norms, local energies and the min(1, 1/r) weight of (w1, w2)."""
    g = weights.grid
    r = g.node_r
    q = 1.0 + r * r
    dw1 = ops.first_difference(w1, g)
    sA2 = weights.sigma_A ** 2
    sBK = (weights.sigma_B ** 2 * weights.rho_K ** 2) ** 2
    thm = np.minimum(1.0, 1.0 / np.maximum(np.abs(r), 1e-300)) / q
    dens = w2 * w2 + dw1 * dw1 + w1 * w1
    return {
        "norm_sA_drw1": g.inner(sA2 * dw1, dw1),
        "norm_sA_w1": g.inner(sA2 * w1, w1),
        "norm_sA_w2": g.inner(sA2 * w2, w2),
        "norm_sB2rK2_w1": g.inner(sBK * w1, w1),
        "phiA_norm": g.inner(weights.PhiA_over_r / q * w1, w1),
        "local_energy": {float(R): _window_sum(g, dens, R) for R in r_list},
        "thm_weight": g.inner(thm * w1, w1),
    }


def add_running_integrals(records, A: float) -> None:
    """Fill ``running`` with trapezoid-in-time integrals from t_0, in place."""
    keys = [("int_sB2rK2", "norm_sigmaB2rhoK2_w1", 1.0), ("int_sA_drw1", "norm_sigmaA_drw1", 1.0),
            ("int_sA_w1_A2", "norm_sigmaA_w1", A ** -2), ("int_sA_w2_A2", "norm_sigmaA_w2", A ** -2),
            ("int_phiA", "weight_PhiA_norm", 1.0)]
    totals = dict.fromkeys(RUNNING_COLUMNS, 0.0)
    prev = None
    for rec in records:
        if prev is not None:
            dt = rec.time - prev.time
            for name, attr, scale in keys:
                totals[name] += 0.5 * dt * scale * (getattr(rec, attr) + getattr(prev, attr))
        rec.running = dict(totals)
        prev = rec


# ---------------------------------------------------------------------------
# randomized lemma checks

LEMMAS = ("xeps", "transfer", "comut1", "coerc", "poincare46")


def random_field(rng: np.random.Generator, r: np.ndarray, parity: str = "odd") -> np.ndarray:
    """Sum of 1-3 random wave packets, symmetrized to the requested parity.

    The field is a function of r, so the same draw can be sampled on any grid.
    """
    out = np.zeros_like(r)
    for _ in range(int(rng.integers(1, 4))):
        amp = rng.normal()
        kappa = rng.uniform(0.0, 8.0)
        width = rng.uniform(2.0, 8.0)
        centre = rng.uniform(-10.0, 10.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += amp * np.exp(-((r - centre) / width) ** 2) * np.cos(kappa * r + phase)
    if parity == "odd":
        out = 0.5 * (out - out[::-1])
    elif parity == "even":
        out = 0.5 * (out + out[::-1])
    out[0] = 0.0
    out[-1] = 0.0
    return out


def _ratio(lhs: float, rhs: float) -> float:
    if lhs == 0.0 and rhs == 0.0:
        return 0.0
    return lhs / rhs


def _forward_norm(g, grid):
    h = np.diff(grid.node_r)
    return float(np.sqrt(np.sum(np.diff(g) ** 2 / h)))


def _lemma_ratios(lemma: str, field_values, W: WeightFamily) -> dict:
    g = W.grid
    eps = W.eps
    r = g.node_r
    f = field_values
    if lemma == "xeps":
        x = ops.solve_Xeps(f, eps, g)
        nf = g.norm(f)
        return {"contraction": _ratio(g.norm(x), nf),
                "d1": _ratio(math.sqrt(eps) * _forward_norm(x, g), nf),
                "d2": _ratio(eps * g.norm(ops.second_difference(x, g)), nf)}
    if lemma == "transfer":
        s = ops.apply_Seps(f, eps, g)
        wgt = W.rho_K * W.sigma_B
        lhs = g.norm(wgt ** 2 * f)
        rhs = W.K * g.norm(wgt * s) + eps * W.K * g.norm(wgt * ops.first_difference(s, g))
        return {"transfer": _ratio(lhs, rhs)}
    if lemma == "comut1":
        # multiplier rho_K; its derivatives in closed form
        K = W.K
        th = np.tanh(r / K)
        mult = W.rho_K
        d1 = -mult * th / K
        d2 = mult * (th * th - (1.0 - th * th)) / K ** 2
        xf = ops.solve_Xeps(f, eps, g)
        lhs = g.norm(mult * xf)
        rhs = (g.norm(ops.solve_Xeps(mult * f, eps, g)) + math.sqrt(eps) * g.norm(d1 * xf)
               + eps * g.norm(d2 * xf))
        return {"comut1": _ratio(lhs, rhs)}
    if lemma == "coerc":
        s = ops.apply_Seps(f, eps, g)
        sa = W.sigma_A
        sbk = W.sigma_B ** 2 * W.rho_K ** 2
        na = g.norm(sa * f)
        return {"S": _ratio(math.sqrt(eps) * g.norm(sa * s), na),
                "dS": _ratio(eps * g.norm(sa * ops.first_difference(s, g)), na),
                "S_BK": _ratio(math.sqrt(eps) * g.norm(sbk * s), g.norm(sbk * f))}
    if lemma == "poincare46":
        K = W.K
        lhs = g.norm(W.rho_K * f) ** 2
        df = ops.first_difference(f, g)
        pot = -W.Phi_B * model.potential_P1_prime(r)
        rhs = K * K * g.inner(df, df) + K * g.inner(pot * f, f)
        return {"poincare46": _ratio(lhs, rhs)}
    raise ValueError(f"unknown lemma {lemma!r}")


LEMMA_PARITY = {"xeps": "none", "transfer": "odd", "comut1": "none", "coerc": "odd",
                "poincare46": "even"}


@dataclass
class LemmaReport:
    lemma: str
    eps: float
    spacing: float
    trials: int
    ratios: dict

    @property
    def bounded(self) -> bool:
        return all(np.isfinite(v) for v in self.ratios.values())


def lemma_check(lemma_id: str, eps: float, weights: WeightFamily, trials: int = 100,
                seed: int = 0, fields=None) -> LemmaReport:
    """Max over trials of LHS/RHS for each bound of one lemma.

    Trial i draws its field from ``default_rng([seed, i])``.  ``eps``
    overrides ``weights.eps``.  ``fields`` replaces the random draws.
    """
    if lemma_id not in LEMMAS:
        raise ValueError(f"unknown lemma {lemma_id!r}")
    if trials < 1:
        raise ValueError("trials must be positive")
    W = weights if eps == weights.eps else replace(weights, eps=eps)
    r = W.grid.node_r
    worst: dict = {}
    for i in range(trials):
        if fields is not None:
            f = np.asarray(fields[i % len(fields)], dtype=float)
        else:
            rng = np.random.default_rng([seed, i])
            parity = LEMMA_PARITY[lemma_id]
            f = random_field(rng, r, "odd" if parity == "none" and i % 2 else
                             ("even" if parity == "none" else parity))
        for name, val in _lemma_ratios(lemma_id, f, W).items():
            worst[name] = max(worst.get(name, -np.inf), val)
    spacing = float(np.max(np.diff(r)))
    return LemmaReport(lemma_id, eps, spacing, trials, worst)
