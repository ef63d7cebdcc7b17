"""Closed-loop simulation and numerical checks of optimality for a solved field.

For a smooth v solving the HJB equation and any admissible control, Ito's
formula on e^{-theta t} v(k_t, h_t) gives, over a finite horizon T,

    J_T(c) + E[e^{-theta T} v(k_T, h_T)] = v(k0, h0) - E int_0^T e^{-theta t} (G - g(c_t)) dt

where g is the consumption part of the Hamiltonian and G its supremum.  The
integrand G - g is >= 0, so it measures how far a control is from the
pointwise argmax.  All gradients are taken from the grid field with central
differences and bilinear interpolation in log coordinates; states outside
the grid are mapped back along the diagonal using homogeneity.

The stochastic integral that Ito's formula drops in expectation is also
accumulated pathwise.  Subtracting it from the identity residual leaves only
discretization error, which is what the refinement study looks at.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .hjb import GridSpec, PolicyField, SolveResult, ValueField, policy_improvement
from .model import ModelParams, State, hamiltonian_G
from .sde import BrownianPair, PathBundle, ControlPath, TimeGrid, brownian_increments, path_admissibility
from .utility_mc import McEstimate


class HomogeneousInterpolant:
    """Bilinear interpolation in (ln k, ln h) of a field homogeneous of a given degree.

    Queries outside the grid box are slid along the diagonal by the smallest
    shift that lands inside and rescaled by exp(-degree * shift).  Queries
    whose ratio ln(h/k) no grid node shares return NaN.
    """

    def __init__(self, grid: GridSpec, values: np.ndarray, degree: float):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)
        self.degree = float(degree)

    def shift(self, x, y):
        g = self.grid
        lo = np.maximum(g.x_min - x, g.y_min - y)
        hi = np.minimum(g.x_max - x, g.y_max - y)
        ok = lo <= hi + 1e-12
        s = np.clip(0.0, lo, hi)
        return np.where(ok, s, np.nan)

    def at_log(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        g = self.grid
        s = self.shift(x, y)
        bad = np.isnan(s)
        s = np.where(bad, 0.0, s)
        fx = np.nan_to_num(np.clip((x + s - g.x_min) / g.dx, 0.0, g.n_x - 1.0))
        fy = np.nan_to_num(np.clip((y + s - g.y_min) / g.dy, 0.0, g.n_y - 1.0))
        i = np.minimum(fx.astype(np.intp), g.n_x - 2)
        j = np.minimum(fy.astype(np.intp), g.n_y - 2)
        tx, ty = fx - i, fy - j
        V = self.values
        out = (
            (1 - tx) * (1 - ty) * V[i, j]
            + tx * (1 - ty) * V[i + 1, j]
            + (1 - tx) * ty * V[i, j + 1]
            + tx * ty * V[i + 1, j + 1]
        )
        if self.degree != 0.0:
            out = out * np.exp(-self.degree * s)
        return np.where(bad, np.nan, out)

    def __call__(self, k, h):
        return self.at_log(np.log(k), np.log(h))


class FeedbackMap:
    """Consumption rule c(k, h) = k * rate(ln k, ln h), clipped to (0, R k]."""

    is_feedback = True

    def __init__(self, grid: GridSpec, c: np.ndarray, params: ModelParams):
        K, _ = grid.states()
        self.grid = grid
        self.params = params
        self.c_nodes = np.asarray(c, dtype=float)
        self.rate = HomogeneousInterpolant(grid, np.minimum(self.c_nodes / K, params.R), 0.0)

    @classmethod
    def from_policy(cls, policy: PolicyField, params: ModelParams) -> "FeedbackMap":
        return cls(policy.grid, policy.c, params)

    def rate_at_log(self, x, y):
        return np.clip(self.rate.at_log(x, y), 0.0, self.params.R)

    def __call__(self, k, h):
        k = np.asarray(k, dtype=float)
        return k * self.rate_at_log(np.log(k), np.log(h))


class ProportionalFeedback:
    """c = rate * k; the closed loop keeps ln k exactly Gaussian."""

    is_feedback = True

    def __init__(self, rate: float, params: ModelParams):
        if not 0 < rate <= params.R:
            raise ValueError("rate must lie in (0, R]")
        self.value = float(rate)

    def rate_at_log(self, x, y):
        return np.full(np.shape(x), self.value)

    def __call__(self, k, h):
        return self.value * np.asarray(k, dtype=float)


@njit(cache=True)
def _grid_rate(V, x, y, x_min, x_max, y_min, y_max, dx, dy):
    lo = max(x_min - x, y_min - y)
    hi = min(x_max - x, y_max - y)
    if not lo <= hi + 1e-12:
        return np.nan
    s = min(max(0.0, lo), hi)
    nx, ny = V.shape
    fx = min(max((x + s - x_min) / dx, 0.0), nx - 1.0)
    fy = min(max((y + s - y_min) / dy, 0.0), ny - 1.0)
    i = min(int(fx), nx - 2)
    j = min(int(fy), ny - 2)
    tx = fx - i
    ty = fy - j
    return ((1 - tx) * (1 - ty) * V[i, j] + tx * (1 - ty) * V[i + 1, j]
            + (1 - tx) * ty * V[i, j + 1] + tx * ty * V[i + 1, j + 1])


@njit(cache=True)
def _closed_loop_block(V, box, x, y, rate, last, truncated, dw1, dw2, start, dt, ax0, ay0, rho, b1, b2, R):
    # steps start .. start + nb - 1 for every path; fills rate at the step start
    n, nb = dw1.shape
    x_min, x_max, y_min, y_max, dx, dy = box
    for p in range(n):
        for j in range(nb):
            t = start + j
            r = _grid_rate(V, x[p, t], y[p, t], x_min, x_max, y_min, y_max, dx, dy)
            if not np.isfinite(r):
                truncated[p] = True
                r = last[p]
            r = min(max(r, 0.0), R)
            last[p] = r
            rate[p, t] = r
            x[p, t + 1] = x[p, t] + (ax0 - r) * dt + b1 * dw1[p, j]
            y[p, t + 1] = y[p, t] + (ay0 + rho * r * np.exp(x[p, t] - y[p, t])) * dt + b2 * dw2[p, j]


def feedback_map(value: ValueField, params: ModelParams) -> tuple[PolicyField, FeedbackMap]:
    policy = policy_improvement(value, params)
    return policy, FeedbackMap.from_policy(policy, params)


def simulate_closed_loop(
    k0: float,
    h0: float,
    policy: FeedbackMap | Callable,
    grid: TimeGrid,
    seed: int,
    params: ModelParams,
    path_indices=0,
    block: int = 4096,
) -> PathBundle:
    """Log-Euler stepping of the closed-loop equations.

    The geometric part is integrated exactly and the consumption term is
    frozen over each step, so k and h stay positive.  ``policy`` may be a
    FeedbackMap or any callable (k, h) -> c.  Paths whose state leaves the
    range the feedback can be evaluated on keep their last rate and are
    flagged in ``flags["truncated"]``.
    """
    if not (k0 > 0 and h0 > 0):
        raise ValueError("initial state must be positive")
    p = params
    scalar = np.ndim(path_indices) == 0
    idx = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    n, N = idx.size, grid.n_steps
    dt = grid.dt
    compiled = isinstance(policy, FeedbackMap)
    if hasattr(policy, "rate_at_log"):
        rate_fn = policy.rate_at_log
    else:
        def rate_fn(x, y):
            k = np.exp(x)
            return policy(k, np.exp(y)) / k
    x = np.empty((n, N + 1))
    y = np.empty((n, N + 1))
    rate = np.empty((n, N + 1))
    dW1 = np.empty((n, N))
    dW2 = np.empty((n, N))
    x[:, 0], y[:, 0] = math.log(k0), math.log(h0)
    last = np.full(n, p.B if p.B > 0 else 0.25 * p.theta)
    truncated = np.zeros(n, dtype=bool)
    ax0 = p.B - 0.5 * p.beta1**2
    ay0 = -p.rho - 0.5 * p.beta2**2
    for start in range(0, N, block):
        nb = min(block, N - start)
        dw1, dw2 = brownian_increments(seed, idx, grid, start, nb)
        dW1[:, start: start + nb] = dw1
        dW2[:, start: start + nb] = dw2
        if compiled:
            g = policy.grid
            box = np.array([g.x_min, g.x_max, g.y_min, g.y_max, g.dx, g.dy])
            _closed_loop_block(
                policy.rate.values, box, x, y, rate, last, truncated, dw1, dw2,
                start, dt, ax0, ay0, p.rho, p.beta1, p.beta2, p.R,
            )
            continue
        for j in range(nb):
            t = start + j
            r = rate_fn(x[:, t], y[:, t])
            miss = ~np.isfinite(r)
            if miss.any():
                truncated |= miss
                r = np.where(miss, last, r)
            r = np.minimum(r, p.R)
            last = r
            rate[:, t] = r
            x[:, t + 1] = x[:, t] + (ax0 - r) * dt + p.beta1 * dw1[:, j]
            y[:, t + 1] = y[:, t] + (ay0 + p.rho * r * np.exp(x[:, t] - y[:, t])) * dt + p.beta2 * dw2[:, j]
    r = rate_fn(x[:, N], y[:, N])
    miss = ~np.isfinite(r)
    truncated |= miss
    rate[:, N] = np.minimum(np.where(miss, last, r), p.R)
    # one cumulative sum over the whole horizon: same W as brownian_pair, bit for bit
    zeros = np.zeros((n, 1))
    w1 = np.concatenate([zeros, np.cumsum(dW1, axis=1)], axis=1)
    w2 = np.concatenate([zeros, np.cumsum(dW2, axis=1)], axis=1)
    k, h = np.exp(x), np.exp(y)
    c = rate * k
    c = np.where(c > 0, c, np.finfo(float).tiny)
    if scalar:
        noise = BrownianPair(grid, w1[0], w2[0], seed, int(idx[0]))
        return PathBundle(grid, noise, ControlPath(c[0], "feedback"), k[0], h[0], {"truncated": truncated[:1]})
    noise = BrownianPair(grid, w1, w2, seed, idx)
    return PathBundle(grid, noise, ControlPath(c, "feedback"), k, h, {"truncated": truncated})


# ----------------------------------------------------------------------------
# fundamental identity


class GradientField:
    """v, v_x, v_y of a grid field as homogeneous interpolants (x = ln k, y = ln h)."""

    def __init__(self, value: ValueField, params: ModelParams):
        g = value.grid
        m = params.homogeneity_degree
        vx, vy = np.gradient(value.v, g.dx, g.dy)
        self.v = HomogeneousInterpolant(g, value.v, m)
        self.vx = HomogeneousInterpolant(g, vx, m)
        self.vy = HomogeneousInterpolant(g, vy, m)

    def costate(self, k, h):
        x, y = np.log(k), np.log(h)
        vx, vy = self.vx.at_log(x, y), self.vy.at_log(x, y)
        return vx / k, vy / h, vx, vy


@dataclass
class IdentityGap:
    v0: float
    gap: np.ndarray  # per path, int e^{-theta t} (G - g) dt
    utility: np.ndarray  # per path, int e^{-theta t} u dt
    terminal: np.ndarray  # per path, e^{-theta T} v(k_T, h_T)
    martingale: np.ndarray  # per path, sum e^{-theta t} (beta1 v_x dW1 + beta2 v_y dW2)

    @property
    def residual(self) -> np.ndarray:
        """Per-path J_T + terminal + gap - v0 - martingale; zero for an exact solution."""
        return self.utility + self.terminal + self.gap - self.v0 - self.martingale

    @staticmethod
    def _stats(a):
        a = a[np.isfinite(a)]
        return float(np.sum(a) / a.size), float(np.std(a, ddof=1) / math.sqrt(a.size))

    def summary(self) -> dict:
        out = {"v0": self.v0}
        for name in ("gap", "utility", "terminal", "martingale", "residual"):
            m, se = self._stats(getattr(self, name))
            out[name] = {"mean": m, "se": se}
        raw = self.utility + self.terminal + self.gap - self.v0
        m, se = self._stats(raw)
        out["residual_raw"] = {"mean": m, "se": se}
        return out


def fundamental_identity_gap(value: ValueField, bundle: PathBundle, t_trunc: float, params: ModelParams) -> IdentityGap:
    """Pathwise terms of the finite-horizon fundamental identity on [0, t_trunc]."""
    p = params
    grid = bundle.grid
    n_nodes = int(round(t_trunc / grid.dt)) + 1
    if n_nodes > grid.n_steps + 1:
        raise ValueError("t_trunc exceeds the bundle horizon")
    k = np.atleast_2d(bundle.k)[:, :n_nodes]
    h = np.atleast_2d(bundle.h)[:, :n_nodes]
    c = np.atleast_2d(bundle.c)[:, :n_nodes]
    w1 = np.atleast_2d(bundle.noise.w1)[:, :n_nodes]
    w2 = np.atleast_2d(bundle.noise.w2)[:, :n_nodes]
    t = grid.times[:n_nodes]
    disc = np.exp(-p.theta * t)
    gf = GradientField(value, p)
    v0 = float(gf.v(k[0, 0], h[0, 0]))
    p_k, p_h, vx, vy = gf.costate(k, h)
    s = p.sigma
    u = -((np.power(h, p.gamma) / c) ** (s - 1.0)) / (s - 1.0)
    g = -c * p_k + p.rho * c * p_h + u
    G = hamiltonian_G(State(k, h), p_k, p_h, p)
    dt = grid.dt

    def trap(f):
        f = f * disc
        return np.sum(0.5 * dt * (f[:, 1:] + f[:, :-1]), axis=1)

    mart = np.sum(disc[:-1] * (p.beta1 * vx[:, :-1] * np.diff(w1, axis=1) + p.beta2 * vy[:, :-1] * np.diff(w2, axis=1)), axis=1)
    terminal = disc[-1] * gf.v(k[:, -1], h[:, -1])
    return IdentityGap(v0, trap(G - g), trap(u), terminal, mart)


# ----------------------------------------------------------------------------
# growth and moment probes


def vt_rate(p: float, params: ModelParams) -> float:
    """p (B + ((2p-1) beta1^2 + 4p beta2^2)/2): theta must exceed this."""
    return p * (params.B + 0.5 * ((2 * p - 1) * params.beta1**2 + 4 * p * params.beta2**2))


@dataclass(frozen=True)
class GrowthProbe:
    p_fit: float  # max of the fitted ray exponents of |v| and |grad v|
    p_used: float  # max(1, p_fit), the growth order fed to the inequality
    slope_v: float
    slope_grad: float
    r2: float
    vt_rate: float
    status: str  # pass | fail | indeterminate
    singular_at_origin: bool

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return asdict(self)


def _ray_slope(logr: np.ndarray, logf: np.ndarray, ray: np.ndarray) -> tuple[float, float]:
    """Common slope with one intercept per ray, and the within-ray R^2."""
    xr = logr.copy()
    yr = logf.copy()
    for r in np.unique(ray):
        sel = ray == r
        xr[sel] -= xr[sel].mean()
        yr[sel] -= yr[sel].mean()
    denom = float(np.dot(xr, xr))
    slope = float(np.dot(xr, yr) / denom)
    ss = float(np.dot(yr, yr))
    r2 = 1.0 - float(np.sum((yr - slope * xr) ** 2)) / ss if ss > 0 else 1.0
    return slope, r2


def growth_probe(value: ValueField, params: ModelParams, fraction: float = 1.0) -> GrowthProbe:
    """Fit the growth exponents of |v| and |grad v| along rays through the origin.

    Grid diagonals are rays (constant ln(h/k)); the fit uses one intercept
    per ray so only the radial dependence is measured.  The inequality is
    evaluated at max(1, p_fit).  A negative exponent means the field blows up
    toward the origin, which no polynomial bound covers; this is reported in
    ``singular_at_origin`` and the status rests on the inequality alone.
    """
    g = value.grid
    X, Y = g.mesh()
    vx, vy = np.gradient(value.v, g.dx, g.dy)
    K, H = np.exp(X), np.exp(Y)
    grad = np.hypot(vx / K, vy / H)
    mask = g.interior_mask(fraction) if fraction < 1 else np.ones(g.shape, dtype=bool)
    mask &= (np.abs(value.v) > 0) & (grad > 0)
    ii, jj = np.indices(g.shape)
    ray = (jj - ii)[mask]
    logr = 0.5 * np.log(K**2 + H**2)[mask]
    keep = np.isin(ray, [r for r in np.unique(ray) if np.count_nonzero(ray == r) >= 3])
    sv, r2v = _ray_slope(logr[keep], np.log(np.abs(value.v[mask]))[keep], ray[keep])
    sg, r2g = _ray_slope(logr[keep], np.log(grad[mask])[keep], ray[keep])
    p_fit = max(sv, sg)
    p_used = max(1.0, p_fit)
    rate = vt_rate(p_used, params)
    r2 = min(r2v, r2g)
    if r2 < 0.9:
        status = "indeterminate"
    else:
        status = "pass" if params.theta > rate else "fail"
    return GrowthProbe(p_fit, p_used, sv, sg, r2, rate, status, bool(p_fit < 0))


@dataclass(frozen=True)
class MomentProbe:
    C: float
    ratios: dict  # (p, t) -> empirical moment / bound without C
    capital_violations: list  # (p, t) where E k^p exceeds the capital bound by > 3 SE
    growth_rates: dict  # p -> fitted d/dt ln E|X|^p
    bound_rates: dict  # p -> exponent rate of the joint bound


def moment_probe(bundle: PathBundle, ps, ts, params: ModelParams) -> MomentProbe:
    """Smallest C for which the joint moment bound holds on the (p, t) lattice."""
    from .sde import capital_moment_bound

    k = np.atleast_2d(bundle.k)
    h = np.atleast_2d(bundle.h)
    k0, h0 = float(k[0, 0]), float(h[0, 0])
    r0 = math.hypot(k0, h0)
    times = bundle.grid.times
    cols = [int(round(t / bundle.grid.dt)) for t in ts]
    ratios, viol, growth, brates = {}, [], {}, {}
    for p in ps:
        logm = []
        for t, col in zip(ts, cols):
            norm_p = np.hypot(k[:, col], h[:, col]) ** p
            bound = (1 + t ** (p - 0.5)) * r0**p * math.exp(vt_rate(p, params) * t)
            ratios[(p, t)] = float(norm_p.mean() / bound)
            kp = k[:, col] ** p
            se = kp.std(ddof=1) / math.sqrt(kp.size)
            if kp.mean() > capital_moment_bound(p, t, k0, params) + 3 * se:
                viol.append((p, t))
            logm.append(math.log(norm_p.mean()))
        tt = np.asarray([times[c] for c in cols])
        growth[p] = float(np.polyfit(tt, logm, 1)[0]) if len(tt) > 1 else float("nan")
        brates[p] = vt_rate(p, params)
    return MomentProbe(max(ratios.values()), ratios, viol, growth, brates)


# ----------------------------------------------------------------------------
# report


@dataclass
class VerificationReport:
    v0: float
    j_feedback: McEstimate
    j_reference: McEstimate
    gap_feedback: dict
    gap_reference: dict
    growth_probe: GrowthProbe
    seeds: list
    dt: float
    grid: dict
    identity_feedback: dict = field(default_factory=dict)
    identity_reference: dict = field(default_factory=dict)
    scheme_tol: float = 0.0

    def checks(self) -> dict:
        gf, gr = self.gap_feedback, self.gap_reference
        # horizon-corrected utilities J_T + e^{-theta T} v(X_T) when available
        jf = self.identity_feedback.get("j_infinite", {"mean": self.j_feedback.mean, "se": self.j_feedback.std_err})
        jr = self.identity_reference.get("j_infinite", {"mean": self.j_reference.mean, "se": self.j_reference.std_err})
        return {
            "gap_feedback_small": gf["mean"] <= 3 * gf["se"] + self.scheme_tol,
            "gap_feedback_nonneg": gf["mean"] >= -3 * gf["se"],
            "gap_reference_positive": gr["mean"] > 3 * gr["se"],
            "dominance": self.v0 >= jr["mean"] - 3 * jr["se"] - self.scheme_tol,
            "feedback_near_optimal": abs(self.v0 - jf["mean"]) <= self.scheme_tol + 3 * jf["se"],
        }

    def to_dict(self) -> dict:
        def est(e: McEstimate):
            return {"mean": e.mean, "se": e.std_err}

        return {
            "v0": self.v0,
            "j_feedback": est(self.j_feedback),
            "j_reference": est(self.j_reference),
            "gap_feedback": {"mean": self.gap_feedback["mean"], "se": self.gap_feedback["se"]},
            "gap_reference": {"mean": self.gap_reference["mean"], "se": self.gap_reference["se"]},
            "growth_probe": {"p": self.growth_probe.p_fit, "pass": self.growth_probe.passed,
                             "status": self.growth_probe.status},
            "seeds": list(self.seeds),
            "dt": self.dt,
            "grid": self.grid,
            "identity_feedback": self.identity_feedback,
            "identity_reference": self.identity_reference,
            "scheme_tol": self.scheme_tol,
            "checks": {k: bool(v) for k, v in self.checks().items()},
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _pooled(parts: list[IdentityGap], name: str) -> np.ndarray:
    if name == "residual":
        return np.concatenate([p.residual for p in parts])
    return np.concatenate([getattr(p, name) for p in parts])


def _mean_se(a: np.ndarray) -> dict:
    return {"mean": float(np.sum(a) / a.size), "se": float(np.std(a, ddof=1) / math.sqrt(a.size))}


def run_identity(
    value: ValueField,
    source,
    k0: float,
    h0: float,
    grid: TimeGrid,
    seed: int,
    params: ModelParams,
    n_paths: int,
    chunk: int = 256,
) -> tuple[dict, McEstimate]:
    """Identity terms for a feedback rule or an open-loop recipe, pooled over chunks."""
    from .sde import brownian_pair, capital_path_exact, habit_path_exact
    from .utility_mc import discounted_utility_integrals

    parts, ok_all, tails = [], [], []
    for start in range(0, n_paths, chunk):
        idx = np.arange(start, min(n_paths, start + chunk))
        if getattr(source, "is_feedback", False) or isinstance(source, PolicyField):
            fmap = FeedbackMap.from_policy(source, params) if isinstance(source, PolicyField) else source
            b = simulate_closed_loop(k0, h0, fmap, grid, seed, params, path_indices=idx)
            trunc = b.flags["truncated"]
        else:
            noise = brownian_pair(seed, grid, idx)
            cp = source(k0, noise, grid, params)
            k = capital_path_exact(k0, cp, noise, grid, params)
            hh = habit_path_exact(h0, cp, noise, grid, params)
            b = PathBundle(grid, noise, cp, k, hh)
            trunc = np.zeros(idx.size, dtype=bool)
        ok = path_admissibility(b.k, b.h, np.broadcast_to(b.c, b.k.shape), params) & ~trunc
        _, tail, _ = discounted_utility_integrals(b.c, b.h, b.k, grid, params)
        parts.append(fundamental_identity_gap(value, b, grid.t_end, params))
        ok_all.append(ok)
        tails.append(tail)
    ok = np.concatenate(ok_all)
    gap = IdentityGap(
        parts[0].v0,
        _pooled(parts, "gap")[ok],
        _pooled(parts, "utility")[ok],
        _pooled(parts, "terminal")[ok],
        _pooled(parts, "martingale")[ok],
    )
    summary = gap.summary()
    summary["n_rejected"] = int((~ok).sum())
    summary["j_infinite"] = _mean_se(gap.utility + gap.terminal)
    u = gap.utility
    tail = np.concatenate(tails)[ok]
    est = McEstimate(
        float(np.sum(u) / u.size), float(np.std(u, ddof=1) / math.sqrt(u.size)), int(u.size),
        grid.t_end, abs(float(np.sum(tail) / u.size)), int((~ok).sum()), 0, grid.dt, seed,
    )
    return summary, est


def verify(
    result: SolveResult,
    params: ModelParams,
    k0: float = 1.0,
    h0: float = 1.0,
    n_paths: int = 10_000,
    dt: float = 1e-2,
    t_trunc: float | None = None,
    seed: int = 42,
    scheme_tol: float = 0.0,
    reference: Callable | None = None,
) -> VerificationReport:
    """Feedback vs the halved-corner reference c = R k / 2 with common random numbers."""
    t_trunc = 10.0 / params.theta if t_trunc is None else t_trunc
    grid = TimeGrid.from_dt(t_trunc, dt)
    value = result.value
    fmap = FeedbackMap.from_policy(result.policy, params)
    reference = ProportionalFeedback(0.5 * params.R, params) if reference is None else reference
    id_f, j_f = run_identity(value, fmap, k0, h0, grid, seed, params, n_paths)
    id_r, j_r = run_identity(value, reference, k0, h0, grid, seed, params, n_paths)
    return VerificationReport(
        v0=id_f["v0"],
        j_feedback=j_f,
        j_reference=j_r,
        gap_feedback=id_f["gap"],
        gap_reference=id_r["gap"],
        growth_probe=growth_probe(value, params),
        seeds=[seed],
        dt=grid.dt,
        grid=value.grid.to_dict(),
        identity_feedback=id_f,
        identity_reference=id_r,
        scheme_tol=scheme_tol,
    )
