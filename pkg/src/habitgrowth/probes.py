"""Empirical regularity probes of F~(Q, p, v, (k, h)) = -theta v + H_max.

Constants are fitted from random samples, never asserted a priori.  Each
probe reports the fit on a sample and on a sample twice as large so callers
can judge stability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CoState, ModelParams, State, f_tilde

DOMAIN = (0.5, 2.0)


def _f(Q, p_k, p_h, v, k, h, params):
    return f_tilde(CoState(p_k, p_h, Q[..., 0, 0], Q[..., 1, 1], Q[..., 0, 1]), v, State(k, h), params)


def lipschitz_bound(params: ModelParams, domain=DOMAIN) -> float:
    """sup over the box of max(|Bk - c|, |rho (c - h)|, theta), 0 < c <= Rk."""
    hi = domain[1]
    p = params
    return max(p.B * hi + p.R * hi, p.rho * (hi + p.R * hi), p.theta)


@dataclass(frozen=True)
class LipschitzFit:
    C: float
    C_doubled: float
    analytic_bound: float

    @property
    def stable(self) -> bool:
        return abs(self.C_doubled - self.C) <= 0.2 * self.C


def _lipschitz_sample(params, n, rng, domain, p_range, v_range):
    lo, hi = domain
    k = rng.uniform(lo, hi, n)
    h = rng.uniform(lo, hi, n)
    Q = rng.normal(size=(2, 2))
    Q = np.broadcast_to(0.5 * (Q + Q.T), (n, 2, 2))
    pk, ph = rng.uniform(*p_range, n), rng.uniform(*p_range, n)
    v = rng.uniform(*v_range, n)
    # half of the pairs are local perturbations, half are far apart
    scale = np.where(np.arange(n) % 2 == 0, 1e-3, 1.0)
    dpk = rng.normal(size=n) * scale
    dph = rng.normal(size=n) * scale
    dv = rng.normal(size=n) * scale
    a = _f(Q, pk, ph, v, k, h, params)
    b = _f(Q, pk + dpk, ph + dph, v + dv, k, h, params)
    return float(np.max(np.abs(a - b) / (np.abs(dpk) + np.abs(dph) + np.abs(dv))))


def lipschitz_probe(params: ModelParams, n: int = 20_000, seed: int = 0, domain=DOMAIN,
                    p_range=(-5.0, 5.0), v_range=(-10.0, 10.0)) -> LipschitzFit:
    """Largest observed |dF~| / (|dp_k| + |dp_h| + |dv|) with Q and (k, h) held fixed."""
    c1 = _lipschitz_sample(params, n, np.random.default_rng([seed, 1]), domain, p_range, v_range)
    c2 = _lipschitz_sample(params, 2 * n, np.random.default_rng([seed, 2]), domain, p_range, v_range)
    return LipschitzFit(c1, c2, lipschitz_bound(params, domain))


@dataclass(frozen=True)
class HolderFit:
    alpha: float
    slope: float  # d ln(seminorm) / d ln(1 + |Q| + |p| + |v|)
    C: float  # max seminorm / (1 + |Q| + |p| + |v|)
    C_doubled: float


def holder_seminorm(values: np.ndarray, pts: np.ndarray, alpha: float) -> float:
    """sup over point pairs of |f(a) - f(b)| / |a - b|^alpha."""
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    df = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(d, np.inf)
    return float(np.max(df / d**alpha))


def _holder_sample(params, n, rng, alpha, n_grid, domain):
    lo, hi = domain
    g = np.linspace(lo, hi, n_grid)
    K, H = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([K.ravel(), H.ravel()])
    sizes, semis = [], []
    for _ in range(n):
        mag = 10 ** rng.uniform(-1, 3)
        Q = rng.normal(size=(2, 2)) * mag
        Q = 0.5 * (Q + Q.T)
        pk, ph, v = rng.normal(size=3) * mag
        f = _f(np.broadcast_to(Q, (pts.shape[0], 2, 2)), pk, ph, v, pts[:, 0], pts[:, 1], params)
        semis.append(holder_seminorm(f, pts, alpha))
        sizes.append(1 + np.abs(Q).sum() + abs(pk) + abs(ph) + abs(v))
    return np.asarray(sizes), np.asarray(semis)


def holder_growth_probe(params: ModelParams, n: int = 60, seed: int = 0, alpha: float = 0.5,
                        n_grid: int = 16, domain=DOMAIN) -> HolderFit:
    """Growth of the spatial Hölder seminorm of F~ with the size of (Q, p, v)."""
    s1, h1 = _holder_sample(params, n, np.random.default_rng([seed, 3]), alpha, n_grid, domain)
    s2, h2 = _holder_sample(params, 2 * n, np.random.default_rng([seed, 4]), alpha, n_grid, domain)
    s, hs = np.concatenate([s1, s2]), np.concatenate([h1, h2])
    slope = float(np.polyfit(np.log(s), np.log(hs), 1)[0])
    return HolderFit(alpha, slope, float(np.max(h1 / s1)), float(np.max(h2 / s2)))


# ----------------------------------------------------------------------------
# matrix pairs for the coupled second-order estimate


def qiq_margin(Q: np.ndarray, Qbar: np.ndarray, alpha: float) -> float:
    """Smallest eigenvalue of 3 alpha [[I, -I], [-I, I]] - diag(Q, -Qbar); >= 0 when the pair is valid."""
    I = np.eye(2)
    J = np.block([[I, -I], [-I, I]])
    Z = np.zeros((2, 2))
    D = np.block([[Q, Z], [Z, -Qbar]])
    return float(np.linalg.eigvalsh(3 * alpha * J - D)[0])


def sample_qiq_pair(alpha: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random (Q, Qbar) with diag(Q, -Qbar) <= 3 alpha [[I, -I], [-I, I]].

    With A = 3 alpha I - Q the condition is A > 0 and
    Qbar + 3 alpha I >= 9 alpha^2 A^{-1} (Schur complement), so draw A and a
    PSD excess P and solve for the pair.
    """
    X = rng.normal(size=(2, 2))
    A = X @ X.T + 0.05 * np.eye(2)
    A *= 3 * alpha * np.exp(rng.uniform(-2, 2))
    Y = rng.normal(size=(2, 2))
    P = Y @ Y.T * alpha * np.exp(rng.uniform(-3, 1))
    Q = 3 * alpha * np.eye(2) - A
    Qbar = 9 * alpha**2 * np.linalg.inv(A) + P - 3 * alpha * np.eye(2)
    return 0.5 * (Q + Q.T), 0.5 * (Qbar + Qbar.T)


@dataclass(frozen=True)
class EstUserFit:
    C: float
    C_doubled: float
    n_pairs: int
    worst_margin: float  # most negative QIQ margin over the sample (>= -1e-9 expected)

    @property
    def stable(self) -> bool:
        return self.C_doubled <= 1.2 * self.C + 1e-12 and self.C <= 1.2 * self.C_doubled + 1e-12


def _est_user_sample(params, n, rng, domain):
    lo, hi = domain
    ratios, margins = [], []
    for _ in range(n):
        alpha = 10 ** rng.uniform(-3, 3)
        k, h, kb, hb = rng.uniform(lo, hi, 4)
        v = rng.uniform(-10, 10)
        Q, Qb = sample_qiq_pair(alpha, rng)
        margins.append(qiq_margin(Q, Qb, alpha) / (1 + alpha))
        dk, dh = k - kb, h - hb
        lhs = _f(Q, alpha * dk, alpha * dh, v, k, h, params) - _f(Qb, alpha * dk, alpha * dh, v, kb, hb, params)
        dist = np.hypot(dk, dh)
        ratios.append(float(lhs) / (alpha * dist**2 + dist))
    return float(max(0.0, max(ratios))), float(min(margins))


def est_user_probe(params: ModelParams, n: int = 4000, seed: int = 0, domain=DOMAIN) -> EstUserFit:
    """Fitted constant of F~(Q, a d, v, x) - F~(Qbar, a d, v, xbar) <= C (a |d|^2 + |d|), d = x - xbar."""
    c1, m1 = _est_user_sample(params, n, np.random.default_rng([seed, 5]), domain)
    c2, m2 = _est_user_sample(params, 2 * n, np.random.default_rng([seed, 6]), domain)
    return EstUserFit(c1, c2, 3 * n, min(m1, m2))
