"""Discrete linear operators: L, L~, L~1, U, U*, X_eps, S_eps and [X_eps, P1].

Fields are arrays on the nodes of an :class:`OperatorGrid`.  The end nodes
are Dirichlet boundary nodes: operators read their values as boundary data
and return 0 there.  Derivatives use 3-point stencils, which on
nonuniform grids are the standard nonuniform formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from . import model


class EigenSolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# grids and tridiagonal systems


@dataclass(frozen=True, eq=False)
class OperatorGrid:
    """Strictly increasing r nodes, full-line symmetric or half-line from 0."""

    node_r: np.ndarray
    boundary: str = "dirichlet"
    h_minus: np.ndarray = field(init=False, repr=False)
    h_plus: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        r = np.array(self.node_r, dtype=float)
        if r.ndim != 1 or r.size < 5:
            raise ValueError("need at least 5 nodes")
        if np.any(np.diff(r) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if self.boundary != "dirichlet":
            raise ValueError("only Dirichlet boundaries are supported")
        if r[0] != 0.0 and not np.allclose(r, -r[::-1], rtol=0, atol=1e-12 * max(1.0, r[-1])):
            raise ValueError("nodes must be symmetric about 0 or start at the origin")
        r.setflags(write=False)
        h = np.diff(r)
        object.__setattr__(self, "node_r", r)
        object.__setattr__(self, "h_minus", h[:-1])
        object.__setattr__(self, "h_plus", h[1:])

    @classmethod
    def uniform(cls, half_extent: float, spacing: float, half_line: bool = False) -> "OperatorGrid":
        n = int(round(half_extent / spacing))
        half = np.arange(n + 1) * spacing
        if half_line:
            return cls(half)
        return cls(np.concatenate([-half[:0:-1], half]))

    @classmethod
    def mapped(cls, half_extent_x: float, dx: float) -> "OperatorGrid":
        """Full-line nodes r = sinh(x) with x uniform."""
        return cls.from_grid(model.Grid1D.from_spacing("x_uniform", half_extent_x, dx))

    @classmethod
    def from_grid(cls, grid: model.Grid1D) -> "OperatorGrid":
        return cls(grid.full_nodes("r"))

    @property
    def n(self) -> int:
        return self.node_r.size

    @property
    def half_line(self) -> bool:
        return self.node_r[0] == 0.0

    @property
    def is_uniform(self) -> bool:
        h = np.diff(self.node_r)
        return bool(np.allclose(h, h[0], rtol=1e-12, atol=0))

    @property
    def spacing(self) -> float:
        if not self.is_uniform:
            raise ValueError("grid is not uniform")
        return float(self.node_r[1] - self.node_r[0])

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        h = np.diff(self.node_r)
        w = np.zeros(self.n)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w

    def norm(self, values) -> float:
        return float(np.sqrt(np.sum(self.weights * np.asarray(values) ** 2)))

    def inner(self, a, b) -> float:
        return float(np.sum(self.weights * np.asarray(a) * np.asarray(b)))


@dataclass(frozen=True, eq=False)
class TridiagonalSystem:
    """Tridiagonal matrix; row i is sub[i-1] x[i-1] + diag[i] x[i] + sup[i] x[i+1]."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        if not (len(self.sub) == len(self.sup) == len(self.diag) - 1):
            raise ValueError("inconsistent tridiagonal bands")

    @property
    def n(self) -> int:
        return len(self.diag)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.sub * x[:-1]
        y[:-1] += self.sup * x[1:]
        return y

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.sup
        ab[1] = self.diag
        ab[2, :-1] = self.sub
        return linalg.solve_banded((1, 1), ab, rhs, check_finite=False)

    def dominance_margin(self) -> np.ndarray:
        """diag - |sub| - |sup| per row."""
        off = np.zeros(self.n)
        off[1:] += np.abs(self.sub)
        off[:-1] += np.abs(self.sup)
        return self.diag - off


def second_difference_matrix(grid: OperatorGrid) -> TridiagonalSystem:
    """D^2 restricted to the interior nodes (Dirichlet ends)."""
    hm, hp = grid.h_minus, grid.h_plus
    lo = 2.0 / (hm * (hm + hp))
    hi = 2.0 / (hp * (hm + hp))
    return TridiagonalSystem(lo[1:], -(lo + hi), hi[:-1])


def second_difference(u, grid: OperatorGrid) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    hm, hp = grid.h_minus, grid.h_plus
    out = np.zeros_like(u)
    out[1:-1] = 2.0 * ((u[2:] - u[1:-1]) / hp - (u[1:-1] - u[:-2]) / hm) / (hm + hp)
    return out


def first_difference(u, grid: OperatorGrid) -> np.ndarray:
    """Second-order centered first derivative (ends set to 0)."""
    u = np.asarray(u, dtype=float)
    hm, hp = grid.h_minus, grid.h_plus
    out = np.zeros_like(u)
    if grid.is_uniform:
        out[1:-1] = (u[2:] - u[:-2]) / (hm + hp)
    else:
        out[1:-1] = (hm * hm * u[2:] - hp * hp * u[:-2] + (hp * hp - hm * hm) * u[1:-1]) / (
            hm * hp * (hm + hp))
    return out


def neighbour_average(u, grid: OperatorGrid) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    out[1:-1] = 0.5 * (u[2:] + u[:-2])
    return out


def _pin(out: np.ndarray) -> np.ndarray:
    out[0] = 0.0
    out[-1] = 0.0
    return out


# ---------------------------------------------------------------------------
# Schrodinger-type operators


def apply_L(v, grid: OperatorGrid) -> np.ndarray:
    """L v = -v_rr - r/(1+r^2) v_r - f'(H)/(1+r^2) v."""
    r = grid.node_r
    q = 1.0 + r * r
    fp = model.nonlinearity_fprime(model.kink_r(r))
    out = -second_difference(v, grid) - r / q * first_difference(v, grid) - fp / q * np.asarray(v)
    return _pin(out)


def apply_tildeL(w, grid: OperatorGrid) -> np.ndarray:
    """-w_rr + V w."""
    out = -second_difference(w, grid) + model.potential_V(grid.node_r) * np.asarray(w)
    return _pin(out)


def apply_L1(w, grid: OperatorGrid) -> np.ndarray:
    """-w_rr + P1 w."""
    out = -second_difference(w, grid) + model.potential_P1(grid.node_r) * np.asarray(w)
    return _pin(out)


def apply_U(w, grid: OperatorGrid) -> np.ndarray:
    """U w = w_r + nu w."""
    out = first_difference(w, grid) + model.darboux_nu(grid.node_r) * np.asarray(w)
    return _pin(out)


def apply_Ustar(w, grid: OperatorGrid) -> np.ndarray:
    """U* w = -w_r + nu w."""
    out = -first_difference(w, grid) + model.darboux_nu(grid.node_r) * np.asarray(w)
    return _pin(out)


# ---------------------------------------------------------------------------
# smoothing operator and the transfer map


def xeps_system(eps: float, grid: OperatorGrid) -> TridiagonalSystem:
    """(1 - eps D^2) on the interior nodes."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    d2 = second_difference_matrix(grid)
    system = TridiagonalSystem(-eps * d2.sub, 1.0 - eps * d2.diag, -eps * d2.sup)
    assert np.all(system.dominance_margin() >= 1.0 - 1e-12), "X_eps system lost diagonal dominance"
    return system


def solve_Xeps(h, eps: float, grid: OperatorGrid) -> np.ndarray:
    """g = X_eps h, i.e. (1 - eps D^2) g = h with g = 0 at the ends."""
    h = np.asarray(h, dtype=float)
    g = np.zeros_like(h)
    g[1:-1] = xeps_system(eps, grid).solve(h[1:-1])
    return g


def apply_Xeps_inverse(g, eps: float, grid: OperatorGrid) -> np.ndarray:
    """Forward operator (1 - eps D^2) g, ends set to 0."""
    g = np.asarray(g, dtype=float)
    return _pin(g - eps * second_difference(g, grid))


def apply_Seps(w, eps: float, grid: OperatorGrid) -> np.ndarray:
    """S_eps w = X_eps U w."""
    return solve_Xeps(apply_U(w, grid), eps, grid)


def commutator_XepsP1(w1, eps: float, grid: OperatorGrid):
    """[X_eps, P1] U w1 computed directly and through the commutator identity.

    With g = S_eps w1 the identity reads
    eps X_eps (2 D P1 . D g + D^2 P1 . A g), where A is the neighbour
    average.  On a uniform grid this is an exact algebraic identity for the
    3-point stencils, so both routes agree to rounding.
    """
    if not grid.is_uniform:
        raise ValueError("the discrete commutator identity needs a uniform grid")
    p1 = model.potential_P1(grid.node_r)
    uw = apply_U(w1, grid)
    g = solve_Xeps(uw, eps, grid)
    direct = solve_Xeps(p1 * uw, eps, grid) - p1 * g
    rhs_inner = (2.0 * first_difference(p1, grid) * first_difference(g, grid)
                 + second_difference(p1, grid) * neighbour_average(g, grid))
    identity_rhs = eps * solve_Xeps(rhs_inner, eps, grid)
    return direct, identity_rhs


# ---------------------------------------------------------------------------
# Darboux residuals


def _interior_norm(values, grid, trim=2):
    w = grid.weights[trim:-trim]
    return float(np.sqrt(np.sum(w * np.asarray(values)[trim:-trim] ** 2)))


def factorization_residual(tests, grid: OperatorGrid) -> float:
    """max over tests of ||L~ phi - U*(U phi)|| / ||phi||, away from the ends."""
    worst = 0.0
    for phi in tests:
        res = apply_tildeL(phi, grid) - apply_Ustar(apply_U(phi, grid), grid)
        worst = max(worst, _interior_norm(res, grid) / grid.norm(phi))
    return worst


def intertwining_residual(tests, grid: OperatorGrid) -> float:
    """max over tests of ||U(L~ phi) - L~1(U phi)|| / ||phi||, away from the ends."""
    worst = 0.0
    for phi in tests:
        res = apply_U(apply_tildeL(phi, grid), grid) - apply_L1(apply_U(phi, grid), grid)
        worst = max(worst, _interior_norm(res, grid, trim=3) / grid.norm(phi))
    return worst


# ---------------------------------------------------------------------------
# spectra

OPERATORS = ("L_tilde_odd", "L_tilde_full", "L1")


def _symmetric_form(grid: OperatorGrid, potential: np.ndarray):
    """Symmetric tridiagonal similar to -D^2 + P on the interior nodes.

    -D^2 + P is symmetric in the inner product weighted by m = (h- + h+)/2;
    conjugating with m^(1/2) gives an ordinary symmetric matrix.
    """
    hm, hp = grid.h_minus, grid.h_plus
    m = 0.5 * (hm + hp)
    diag = (1.0 / hm + 1.0 / hp) / m + potential[1:-1]
    off = -1.0 / (hp[:-1] * np.sqrt(m[:-1] * m[1:]))
    return diag, off, m


def smallest_eigenvalues(operator: str, k: int, grid: OperatorGrid, return_vectors: bool = False):
    """k smallest Dirichlet eigenvalues of L~ (odd sector or full line) or L~1.

    ``L_tilde_odd`` uses only the nodes r >= 0 with w(0) = 0.  Eigenvectors
    are returned on the nodes used (zeros at the Dirichlet ends), normalised
    in the grid L^2 norm.
    """
    if operator not in OPERATORS:
        raise ValueError(f"unknown operator {operator!r}")
    if k < 1:
        raise ValueError("k must be positive")
    if operator == "L_tilde_odd" and not grid.half_line:
        grid = OperatorGrid(grid.node_r[grid.node_r >= 0.0])
    elif operator != "L_tilde_odd" and grid.half_line:
        raise ValueError(f"{operator} needs a full-line grid")
    pot = model.potential_P1 if operator == "L1" else model.potential_V
    diag, off, m = _symmetric_form(grid, pot(grid.node_r))
    if k > diag.size:
        raise ValueError("k exceeds the number of interior nodes")
    try:
        vals, vecs = linalg.eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1),
                                             lapack_driver="stebz")
    except linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from exc
    if not return_vectors:
        return vals
    full = np.zeros((grid.n, k))
    full[1:-1] = vecs / np.sqrt(m)[:, None]
    for j in range(k):
        full[:, j] /= grid.norm(full[:, j])
    return vals, full, grid


@dataclass(frozen=True)
class CoercivityResult:
    mu_l2: float
    mu_h1: float


def odd_coercivity(half_extent_x: float, dx: float) -> CoercivityResult:
    """Coercivity of B(v) = int v_x^2 + (1/2) W''(H) v^2 on odd v.

    The operator is -d_xx + 4 - 6 sech^2 x on the half-line with v(0) = 0.
    ``mu_l2`` is its smallest eigenvalue (3 in the continuum);
    ``mu_h1`` is the best constant in B(v) >= mu ||v||_{H^1}^2, the smallest
    eigenvalue of the pencil (-D^2 + P, 1 - D^2).
    """
    grid = OperatorGrid.uniform(half_extent_x, dx, half_line=True)
    x = grid.node_r
    pot = 0.5 * (12.0 * model.kink(x) ** 2 - 4.0)
    diag, off, _ = _symmetric_form(grid, pot)
    mu_l2 = float(linalg.eigh_tridiagonal(diag, off, select="i", select_range=(0, 0),
                                          eigvals_only=True)[0])
    n = diag.size
    h2 = dx * dx
    lap = sparse.diags([np.full(n - 1, -1.0 / h2), np.full(n, 2.0 / h2), np.full(n - 1, -1.0 / h2)],
                       [-1, 0, 1], format="csc")
    a = lap + sparse.diags(pot[1:-1], format="csc")
    mass = lap + sparse.identity(n, format="csc")
    try:
        val = splinalg.eigsh(a, k=1, M=mass, sigma=0.0, which="LM", return_eigenvectors=False,
                             tol=1e-12)
    except splinalg.ArpackNoConvergence as exc:
        raise EigenSolverError(str(exc)) from exc
    return CoercivityResult(mu_l2, float(val[0]))
