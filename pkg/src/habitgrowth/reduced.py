"""One-dimensional HJB in the log habit/capital ratio.

With m = (1-gamma)(1-sigma), the value function factors as
V(k, h) = k^m w(z), z = ln(h/k).  Writing s = c/k for the consumption rate
and substituting v(x, y) = exp(m x) w(y - x) into the log-coordinate
generator gives, per unit exp(m x),

    theta w = max_{0 < s <= R} [ (m a_x(s) + m^2 beta1^2/2) w
                                 + b(s) w' + (beta1^2 + beta2^2)/2 w''
                                 + u(s, z) ]

    a_x(s) = B - s - beta1^2/2
    b(s)   = a_y(s) - a_x(s) - m beta1^2,   a_y(s) = rho (s e^{-z} - 1) - beta2^2/2
    u(s,z) = s^(1-sigma) e^{gamma (sigma-1) z} / (1 - sigma)

The consumption-dependent part equals g(s; h=e^z, p_k, p_h) with
p_k = m w - w' and p_h = e^{-z} w', i.e. the gradient of k^m w(ln h - ln k)
at k = 1.  The zeroth-order coefficient theta - m a_x - m^2 beta1^2/2 is not
sign-definite (it turns negative for large s), so policy iteration starts
from the finite-value rate s = B exactly as in the 2D solver.

Both ends use a zero-slope ghost node; with upwinding they are outflow
boundaries for the optimal drift, so the ghost only enters through the
diffusion term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hjb import GridSpec, SolverError, solve_linear
from .model import ModelParams, maximize_g_on, validate_params


@dataclass(frozen=True)
class GridSpec1D:
    z_min: float
    z_max: float
    n_z: int

    def __post_init__(self):
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be < z_max")
        if self.n_z < 16:
            raise ValueError("n_z must be >= 16")

    @classmethod
    def matching(cls, grid: GridSpec) -> "GridSpec1D":
        """z-range spanned by a 2D grid, spacing equal to its x spacing."""
        lo, hi = grid.y_min - grid.x_max, grid.y_max - grid.x_min
        n = int(round((hi - lo) / grid.dx)) + 1
        return cls(lo, hi, max(n, 16))

    @property
    def z(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.n_z)

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.n_z - 1)


@dataclass
class ReducedSolution:
    grid: GridSpec1D
    w: np.ndarray
    rate: np.ndarray  # optimal c/k at each z
    residual: float
    converged: bool
    residual_history: list = field(default_factory=list)

    def reconstruct(self, grid2d: GridSpec, params: ModelParams) -> np.ndarray:
        """exp(m x) w(y - x) on a 2D grid (linear interpolation in z)."""
        X, Y = grid2d.mesh()
        w = np.interp(Y - X, self.grid.z, self.w)
        return np.exp(params.homogeneity_degree * X) * w

    def value(self, k, h, params: ModelParams):
        z = np.log(np.asarray(h) / np.asarray(k))
        return np.power(k, params.homogeneity_degree) * np.interp(z, self.grid.z, self.w)


def reduced_coefficients(s, z, params: ModelParams):
    """(zeroth-order, drift, diffusion, utility) coefficients of the 1D operator."""
    p = params
    m = p.homogeneity_degree
    a_x = p.B - s - 0.5 * p.beta1**2
    a_y = p.rho * (s * np.exp(-z) - 1.0) - 0.5 * p.beta2**2
    zeroth = m * a_x + 0.5 * p.beta1**2 * m**2
    drift = a_y - a_x - m * p.beta1**2
    diff = 0.5 * (p.beta1**2 + p.beta2**2)
    util = s ** (1.0 - p.sigma) * np.exp(p.habit_power * z) / (1.0 - p.sigma)
    return zeroth, drift, diff, util


def check_reduction(params: ModelParams, rtol: float = 1e-6) -> float:
    """Compare the 1D operator with the 2D log generator on a smooth test field.

    Uses w(z) = -(1 + e^{z/2}) - 0.1 sin z and exact derivatives of
    v = e^{m x} w(y - x).  Returns the max relative mismatch and raises if it
    exceeds ``rtol``.
    """
    p = params
    m = p.homogeneity_degree
    z = np.linspace(-3.0, 3.0, 13)
    x = 0.37
    y = x + z
    s = 0.05 + 0.02 * np.cos(z)
    w = -(1 + np.exp(z / 2)) - 0.1 * np.sin(z)
    w1 = -0.5 * np.exp(z / 2) - 0.1 * np.cos(z)
    w2 = -0.25 * np.exp(z / 2) + 0.1 * np.sin(z)
    e = np.exp(m * x)
    vx = e * (m * w - w1)
    vy = e * w1
    vxx = e * (m * m * w - 2 * m * w1 + w2)
    vyy = e * w2
    k, h = np.exp(x), np.exp(y)
    c = s * k
    a_x = p.B - c / k - 0.5 * p.beta1**2
    a_y = p.rho * (c / h - 1.0) - 0.5 * p.beta2**2
    u2 = (c / h**p.gamma) ** (1 - p.sigma) / (1 - p.sigma)
    lhs = a_x * vx + a_y * vy + 0.5 * p.beta1**2 * vxx + 0.5 * p.beta2**2 * vyy + u2
    zeroth, drift, diff, util = reduced_coefficients(s, z, p)
    rhs = e * (zeroth * w + drift * w1 + diff * w2 + util)
    err = float(np.max(np.abs(lhs - rhs) / (1 + np.abs(lhs))))
    if err > rtol:
        raise SolverError(f"reduced operator mismatch {err:.3e}")
    return err


def _differences(w: np.ndarray, dz: float):
    wp = np.append(w[1:], w[-1])  # zero-slope ghost at the top
    wm = np.insert(w[:-1], 0, w[0])
    return (wp - w) / dz, (w - wm) / dz, (wp - 2 * w + wm) / dz**2


def _reduced_hamiltonian(w: np.ndarray, grid: GridSpec1D, params: ModelParams):
    p = params
    m = p.homogeneity_degree
    z = grid.z
    h = np.exp(z)
    dp, dm, d2 = _differences(w, grid.dz)
    kappa = p.rho + 0.5 * p.beta2**2 + p.B - 0.5 * p.beta1**2 + m * p.beta1**2
    # drift b(s) = s (1 + rho e^{-z}) - kappa changes sign at s_b
    s_b = np.clip(kappa / (1.0 + p.rho * np.exp(-z)), 0.0, p.R)
    R = np.full_like(z, p.R)
    best_s = np.zeros_like(z)
    best_H = np.full_like(z, -np.inf)
    for lo, hi in ((np.zeros_like(z), s_b), (s_b, R)):
        ok = hi > lo
        if not ok.any():
            continue
        mid = 0.5 * (lo + hi)
        zeroth_mid, drift_mid, _, _ = reduced_coefficients(mid, z, p)
        sel = np.where(drift_mid > 0, dp, dm)
        hi_safe = np.where(ok, hi, R)
        s = np.minimum(maximize_g_on(lo, hi_safe, h, m * w - sel, np.exp(-z) * sel, p), hi_safe)
        zeroth, drift, diff, util = reduced_coefficients(s, z, p)
        val = zeroth * w + drift * np.where(drift > 0, dp, dm) + diff * d2 + util
        take = ok & (val > best_H)
        best_s = np.where(take, s, best_s)
        best_H = np.where(take, val, best_H)
    return best_s, best_H


def _evaluate(rate: np.ndarray, grid: GridSpec1D, params: ModelParams) -> np.ndarray:
    z, dz, n = grid.z, grid.dz, grid.n_z
    zeroth, drift, diff, util = reduced_coefficients(rate, z, params)
    up = diff / dz**2 + np.maximum(drift, 0.0) / dz
    dn = diff / dz**2 + np.maximum(-drift, 0.0) / dz
    diag = params.theta - zeroth + up + dn
    # ghosts fold back onto the end nodes
    diag[0] -= dn[0]
    diag[-1] -= up[-1]
    A = sp.diags([diag, -dn[1:], -up[:-1]], [0, -1, 1], shape=(n, n), format="csr")
    return solve_linear(A, util)


def solve_reduced_1d(gridspec_1d: GridSpec1D, params: ModelParams, tol: float = 1e-6, max_iters: int = 50) -> ReducedSolution:
    """Policy iteration for w(z) with the same monotone upwind machinery as 2D."""
    if not validate_params(params).passed:
        raise ValueError("discount condition fails")
    check_reduction(params)
    g = gridspec_1d
    rate = np.full(g.n_z, params.B if params.B > 0 else min(params.R, 0.25 * params.theta))
    w = _evaluate(rate, g, params)
    if not np.all(w < 0):
        raise SolverError("initial rate has no finite negative value")
    history = []
    converged = False
    for it in range(max_iters + 1):
        rate, H = _reduced_hamiltonian(w, g, params)
        res = float(np.max(np.abs(params.theta * w - H)))
        history.append(res)
        if res <= tol:
            converged = True
            break
        if len(history) > 2 and res > 10 * min(history[1:]):
            raise SolverError("reduced policy iteration diverged", history=history)
        if it == max_iters:
            break
        w = _evaluate(rate, g, params)
    return ReducedSolution(g, w, rate, history[-1], converged, history)
