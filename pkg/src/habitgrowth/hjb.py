"""Policy-iteration solver for the stationary HJB equation on a log grid.

Coordinates are x = ln k and y = ln h.  For a frozen consumption field c the
generator reads

    L_c v = a_x v_x + a_y v_y + (beta1^2/2) v_xx + (beta2^2/2) v_yy
    a_x   = B - c/k - beta1^2/2
    a_y   = rho (c/h - 1) - beta2^2/2

First derivatives are upwinded on the sign of the drift and second
derivatives are centered, so every off-diagonal coefficient is >= 0 and
theta > 0 makes the interior rows strictly diagonally dominant.  There is no
mixed-derivative stencil because the two noises are independent.

Boundary nodes are closed with the homogeneity of the value function:
v(x+s, y+s) = exp(m s) v(x, y), m = (1-gamma)(1-sigma).  A boundary node is
tied to the interior point reached by sliding along the diagonal.  Near the
two corners where the diagonal never enters the interior, the habit/capital
ratio is additionally clamped (zero slope in ln(h/k)); those nodes are
flagged as heuristic.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .model import ModelParams, lower_bound_rhs, maximize_g_on, validate_params

import warnings

DEFAULT_LO = math.log(0.1)
DEFAULT_HI = math.log(10.0)


class SolverError(RuntimeError):
    """Raised on divergence, non-convergence or a non-monotone stencil."""

    def __init__(self, msg, history=None, dump=None):
        super().__init__(msg)
        self.history = list(history or [])
        self.dump = dump


@dataclass(frozen=True)
class GridSpec:
    x_min: float = DEFAULT_LO
    x_max: float = DEFAULT_HI
    n_x: int = 65
    y_min: float = DEFAULT_LO
    y_max: float = DEFAULT_HI
    n_y: int = 65

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be < x_max")
        if not self.y_min < self.y_max:
            raise ValueError("y_min must be < y_max")
        if self.n_x < 16 or self.n_y < 16:
            raise ValueError("n_x and n_y must be >= 16")

    @classmethod
    def square(cls, n: int, lo: float = DEFAULT_LO, hi: float = DEFAULT_HI) -> "GridSpec":
        return cls(lo, hi, n, lo, hi, n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.n_y - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.n_y)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_y)

    def mesh(self):
        """(X, Y) with 'ij' indexing."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def states(self):
        X, Y = self.mesh()
        return np.exp(X), np.exp(Y)

    def interior_mask(self, fraction: float = 1.0) -> np.ndarray:
        """Nodes off the boundary ring, optionally restricted to the central
        ``fraction`` of each axis range."""
        X, Y = self.mesh()
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1] = True
        if fraction < 1.0:
            tx = 0.5 * (1 - fraction) * (self.x_max - self.x_min)
            ty = 0.5 * (1 - fraction) * (self.y_max - self.y_min)
            eps = 1e-12
            m &= (X >= self.x_min + tx - eps) & (X <= self.x_max - tx + eps)
            m &= (Y >= self.y_min + ty - eps) & (Y <= self.y_max - ty + eps)
        return m

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min, "x_max": self.x_max, "n_x": self.n_x,
            "y_min": self.y_min, "y_max": self.y_max, "n_y": self.n_y,
        }


@dataclass
class ValueField:
    grid: GridSpec
    v: np.ndarray
    residual_history: list = field(default_factory=list)
    iterations: int = 0


@dataclass
class PolicyField:
    grid: GridSpec
    c: np.ndarray


@dataclass
class SolveResult:
    value: ValueField
    policy: PolicyField
    residual: float
    converged: bool
    heuristic_nodes: np.ndarray | None = None


# ----------------------------------------------------------------------------
# stencils


def _drifts(grid: GridSpec, c: np.ndarray, params: ModelParams):
    K, H = grid.states()
    a_x = params.B - c / K - 0.5 * params.beta1**2
    a_y = params.rho * (c / H - 1.0) - 0.5 * params.beta2**2
    return a_x, a_y


def stencil_coefficients(grid: GridSpec, c: np.ndarray, params: ModelParams) -> dict:
    """Neighbour weights of L_c at interior nodes, keyed by index offset.

    Arrays have the interior shape (n_x-2, n_y-2).
    """
    a_x, a_y = _drifts(grid, c, params)
    a_x, a_y = a_x[1:-1, 1:-1], a_y[1:-1, 1:-1]
    dx, dy = grid.dx, grid.dy
    dfx = 0.5 * params.beta1**2 / dx**2
    dfy = 0.5 * params.beta2**2 / dy**2
    return {
        (1, 0): dfx + np.maximum(a_x, 0.0) / dx,
        (-1, 0): dfx + np.maximum(-a_x, 0.0) / dx,
        (0, 1): dfy + np.maximum(a_y, 0.0) / dy,
        (0, -1): dfy + np.maximum(-a_y, 0.0) / dy,
    }


def _check_monotone(coef: dict, grid: GridSpec) -> None:
    for off, w in coef.items():
        bad = ~(w >= 0)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise SolverError(
                f"non-monotone stencil at node {(i + 1, j + 1)} offset {off}",
                dump={"node": (int(i + 1), int(j + 1)), "offset": off, "weight": float(w[i, j])},
            )


def discretize_generator(value: ValueField, policy: PolicyField, params: ModelParams) -> np.ndarray:
    """Apply the upwind generator L_c to ``value``; NaN on the boundary ring."""
    grid = value.grid
    coef = stencil_coefficients(grid, policy.c, params)
    _check_monotone(coef, grid)
    v = value.v
    c0 = v[1:-1, 1:-1]
    out = np.full(grid.shape, np.nan)
    acc = np.zeros_like(c0)
    for (di, dj), w in coef.items():
        nb = v[1 + di: v.shape[0] - 1 + di, 1 + dj: v.shape[1] - 1 + dj]
        acc += w * (nb - c0)
    out[1:-1, 1:-1] = acc
    return out


# ----------------------------------------------------------------------------
# boundary closure


@dataclass
class Closure:
    """Each boundary node b satisfies v_b = factor_b * sum_r w_br v_r."""

    nodes: np.ndarray  # flat indices of boundary nodes
    refs: np.ndarray  # (n_b, 4) flat indices of interior nodes
    weights: np.ndarray  # (n_b, 4) bilinear weights
    factor: np.ndarray  # (n_b,)
    rate_factor: np.ndarray  # exp(x_b - x_ref), scales degree-1 fields (consumption)
    heuristic: np.ndarray  # (n_b,) bool, diagonal never reaches the interior


def build_closure(grid: GridSpec, params: ModelParams) -> Closure:
    nx, ny = grid.shape
    dx, dy = grid.dx, grid.dy
    m = params.homogeneity_degree
    nodes, refs, weights, factor, rate, heur = [], [], [], [], [], []
    for i in range(nx):
        for j in range(ny):
            if 0 < i < nx - 1 and 0 < j < ny - 1:
                continue
            lo_x, hi_x = dx * (1 - i), dx * (nx - 2 - i)
            lo_y, hi_y = dy * (1 - j), dy * (ny - 2 - j)
            lo, hi = max(lo_x, lo_y), min(hi_x, hi_y)
            if lo <= hi + 1e-12 * max(dx, dy):
                s = min(max(0.0, lo), hi)
                fi, fj = i + s / dx, j + s / dy
                is_h = False
            else:
                s = min(max(0.0, lo_x), hi_x)
                fi = i + s / dx
                fj = min(max(j + s / dy, 1.0), ny - 2.0)
                is_h = True
            # snap to nodes when the shift is an integer number of cells
            fi = round(fi) if abs(fi - round(fi)) < 1e-9 else fi
            fj = round(fj) if abs(fj - round(fj)) < 1e-9 else fj
            i0 = min(int(math.floor(fi)), nx - 3)
            j0 = min(int(math.floor(fj)), ny - 3)
            ti, tj = fi - i0, fj - j0
            nodes.append(i * ny + j)
            refs.append([i0 * ny + j0, (i0 + 1) * ny + j0, i0 * ny + j0 + 1, (i0 + 1) * ny + j0 + 1])
            weights.append([(1 - ti) * (1 - tj), ti * (1 - tj), (1 - ti) * tj, ti * tj])
            shift_x = (fi - i) * dx
            factor.append(math.exp(-m * shift_x))
            rate.append(math.exp(-shift_x))
            heur.append(is_h)
    return Closure(
        np.array(nodes), np.array(refs), np.array(weights), np.array(factor), np.array(rate), np.array(heur)
    )


def boundary_closure(value: ValueField, params: ModelParams) -> ValueField:
    """Overwrite boundary values from the interior using homogeneity."""
    cl = build_closure(value.grid, params)
    v = value.v.copy().ravel()
    v[cl.nodes] = cl.factor * np.sum(cl.weights * v[cl.refs], axis=1)
    return ValueField(value.grid, v.reshape(value.grid.shape), list(value.residual_history), value.iterations)


def _close_policy(c: np.ndarray, grid: GridSpec, cl: Closure, params: ModelParams) -> np.ndarray:
    flat = c.ravel().copy()
    flat[cl.nodes] = cl.rate_factor * np.sum(cl.weights * flat[cl.refs], axis=1)
    K, _ = grid.states()
    return np.minimum(flat.reshape(grid.shape), params.R * K)


# ----------------------------------------------------------------------------
# policy improvement / evaluation


def _discrete_hamiltonian(v: np.ndarray, grid: GridSpec, params: ModelParams):
    """Exact node-wise maximization of the upwind Hamiltonian.

    Returns (c, H) on the interior, H = max_c [L_c v + u(c, h)].
    """
    p = params
    dx, dy = grid.dx, grid.dy
    K, Hh = grid.states()
    K, Hh = K[1:-1, 1:-1], Hh[1:-1, 1:-1]
    vc = v[1:-1, 1:-1]
    dxp = (v[2:, 1:-1] - vc) / dx
    dxm = (vc - v[:-2, 1:-1]) / dx
    dyp = (v[1:-1, 2:] - vc) / dy
    dym = (vc - v[1:-1, :-2]) / dy
    diff = 0.5 * p.beta1**2 * (dxp - dxm) / dx + 0.5 * p.beta2**2 * (dyp - dym) / dy
    ax0 = p.B - 0.5 * p.beta1**2
    ay0 = p.rho + 0.5 * p.beta2**2
    Rk = p.R * K
    # drift of x changes sign at c = k*ax0, drift of y at c = h*ay0/rho
    b1 = np.clip(K * ax0, 0.0, Rk)
    b2 = np.clip(Hh * ay0 / p.rho, 0.0, Rk)
    lo_b, hi_b = np.minimum(b1, b2), np.maximum(b1, b2)
    best_c = np.zeros_like(vc)
    best_H = np.full_like(vc, -np.inf)
    zero = np.zeros_like(vc)
    for lo, hi in ((zero, lo_b), (lo_b, hi_b), (hi_b, Rk)):
        ok = hi > lo
        if not ok.any():
            continue
        mid = 0.5 * (lo + hi)
        sx = np.where(ax0 - mid / K > 0, dxp, dxm)
        sy = np.where(p.rho * mid / Hh - ay0 > 0, dyp, dym)
        hi_safe = np.where(ok, hi, Rk)
        c = maximize_g_on(lo, hi_safe, Hh, sx / K, sy / Hh, p)
        c = np.minimum(c, hi_safe)
        a_x = ax0 - c / K
        a_y = p.rho * c / Hh - ay0
        val = (
            a_x * np.where(a_x > 0, dxp, dxm)
            + a_y * np.where(a_y > 0, dyp, dym)
            + diff
            - (np.power(Hh, p.gamma) / c) ** (p.sigma - 1) / (p.sigma - 1)
        )
        take = ok & (val > best_H)
        best_c = np.where(take, c, best_c)
        best_H = np.where(take, val, best_H)
    return best_c, best_H


def policy_improvement(value: ValueField, params: ModelParams) -> PolicyField:
    """Greedy consumption for the upwind-discretized Hamiltonian.

    Within each interval of c on which the upwind directions are fixed, the
    one-sided differences give (p_k, p_h) = (v_x/k, v_y/h) and the closed-form
    maximizer applies; the best interval wins.
    """
    grid = value.grid
    c_in, _ = _discrete_hamiltonian(value.v, grid, params)
    c = np.zeros(grid.shape)
    c[1:-1, 1:-1] = c_in
    K, _ = grid.states()
    c = np.where(c > 0, c, params.R * K)
    c = _close_policy(c, grid, build_closure(grid, params), params)
    return PolicyField(grid, c)


def _flat_index(grid: GridSpec):
    nx, ny = grid.shape
    return np.arange(nx * ny).reshape(nx, ny)


def assemble_system(grid: GridSpec, theta: float, coef: dict, closure: Closure) -> sp.csr_matrix:
    """Matrix of (theta I - L) on interior rows and closure rows on the boundary."""
    idx = _flat_index(grid)
    inner = idx[1:-1, 1:-1].ravel()
    rows, cols, vals = [inner], [inner], [np.full(inner.size, float(theta))]
    nx, ny = grid.shape
    for (di, dj), w in coef.items():
        nb = idx[1 + di: nx - 1 + di, 1 + dj: ny - 1 + dj].ravel()
        w = np.asarray(w).ravel()
        rows += [inner, inner]
        cols += [inner, nb]
        vals += [w, -w]
    nb_ = closure.nodes
    rows.append(nb_)
    cols.append(nb_)
    vals.append(np.ones(nb_.size))
    for r in range(4):
        rows.append(nb_)
        cols.append(closure.refs[:, r])
        vals.append(-closure.factor * closure.weights[:, r])
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nx * ny, nx * ny)
    )
    return A.tocsr()


def solve_linear(A: sp.csr_matrix, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Sparse direct solve with an independent residual check."""
    x = spsolve(A.tocsc(), b)
    res = np.max(np.abs(A @ x - b)) if b.size else 0.0
    scale = 1.0 + np.max(np.abs(b))
    if not np.all(np.isfinite(x)) or res > tol * scale:
        raise SolverError(f"linear solve residual {res:.3e} above {tol * scale:.3e}", history=[res])
    return x


def nodal_utility(grid: GridSpec, c: np.ndarray, params: ModelParams) -> np.ndarray:
    _, H = grid.states()
    s = params.sigma
    return -((np.power(H, params.gamma) / c) ** (s - 1)) / (s - 1)


def policy_evaluation(policy: PolicyField, params: ModelParams, tol: float = 1e-9, utility=None) -> ValueField:
    """Solve (theta I - L_c) v = u_c with the homogeneity closure on the boundary."""
    grid = policy.grid
    coef = stencil_coefficients(grid, policy.c, params)
    _check_monotone(coef, grid)
    cl = build_closure(grid, params)
    A = assemble_system(grid, params.theta, coef, cl)
    u = nodal_utility(grid, policy.c, params) if utility is None else np.asarray(utility, dtype=float)
    b = np.zeros(grid.shape)
    b[1:-1, 1:-1] = u[1:-1, 1:-1]
    v = solve_linear(A, b.ravel(), tol)
    return ValueField(grid, v.reshape(grid.shape))


def hjb_residual(value: ValueField, params: ModelParams) -> dict:
    """|theta v - max_c(L_c v + u)| on the interior and the closure defect on the ring."""
    grid = value.grid
    _, Hm = _discrete_hamiltonian(value.v, grid, params)
    field_ = np.zeros(grid.shape)
    field_[1:-1, 1:-1] = np.abs(params.theta * value.v[1:-1, 1:-1] - Hm)
    cl = build_closure(grid, params)
    flat = value.v.ravel()
    ring = np.abs(flat[cl.nodes] - cl.factor * np.sum(cl.weights * flat[cl.refs], axis=1))
    field_.ravel()[cl.nodes] = ring
    return {
        "field": field_,
        "interior": float(field_[1:-1, 1:-1].max()),
        "boundary": float(ring.max()) if ring.size else 0.0,
    }


def initial_value(grid: GridSpec, params: ModelParams) -> ValueField:
    """Nodal lower-bound formula with C = 1: nonpositive, right homogeneity."""
    K, H = grid.states()
    return ValueField(grid, lower_bound_rhs(K, H, 1.0, params))


def initial_policy(grid: GridSpec, params: ModelParams) -> PolicyField:
    """c = B k, the lower-bound strategy written in feedback form.

    Policy iteration must start from a policy of finite value; the first
    greedy step on the lower-bound formula can pick c = R k on large parts of
    the grid, whose value is -inf.
    """
    K, _ = grid.states()
    rate = params.B if params.B > 0 else min(params.R, 0.25 * params.theta)
    return PolicyField(grid, rate * K)


def solve_hjb(
    gridspec: GridSpec,
    params: ModelParams,
    tol: float = 1e-6,
    max_iters: int = 50,
    initial: ValueField | None = None,
) -> SolveResult:
    """Howard policy iteration until the max-norm interior residual <= tol."""
    report = validate_params(params)
    if not report.passed:
        raise ValueError(f"discount condition fails: slack {report.slack:.4g} (case {report.case})")
    if not params.continuity_regime:
        warnings.warn("gamma*(sigma-1) > 1: continuity of the value function is not guaranteed", stacklevel=2)
    if initial is None:
        value = policy_evaluation(initial_policy(gridspec, params), params)
        if not np.all(value.v < 0):
            raise SolverError("initial policy has no finite negative value on this grid")
    else:
        value = initial
    history: list[float] = []
    converged = False
    it = 0
    while True:
        policy = policy_improvement(value, params)
        res = hjb_residual(value, params)["interior"]
        history.append(res)
        if res <= tol:
            converged = True
            break
        if len(history) > 2 and res > 10 * min(history[1:]):
            raise SolverError("policy iteration diverged", history=history)
        if it >= max_iters:
            break
        value = policy_evaluation(policy, params)
        it += 1
    value.residual_history = history
    value.iterations = it
    cl = build_closure(gridspec, params)
    heur = np.zeros(gridspec.shape, dtype=bool)
    heur.ravel()[cl.nodes[cl.heuristic]] = True
    return SolveResult(value, policy, history[-1], converged, heur)


def write_grid_csv(result: SolveResult, params: ModelParams, path) -> None:
    grid = result.value.grid
    K, H = grid.states()
    res = hjb_residual(result.value, params)["field"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "h", "v", "c_star", "residual"])
        for row in zip(K.ravel(), H.ravel(), result.value.v.ravel(), result.policy.c.ravel(), res.ravel()):
            w.writerow([repr(float(x)) for x in row])


def solve_metadata(result: SolveResult, params: ModelParams) -> dict:
    return {
        "iterations": result.value.iterations,
        "residual_history": [float(r) for r in result.value.residual_history],
        "grid": result.value.grid.to_dict(),
        "params": params.to_dict(),
        "converged": bool(result.converged),
        "residual": float(result.residual),
    }


def write_metadata_json(result: SolveResult, params: ModelParams, path, extra: dict | None = None) -> None:
    meta = solve_metadata(result, params)
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
