"""Model constants, running utility and the maximized Hamiltonian.

Everything here is a pure function of its arguments and broadcasts over
numpy arrays, so the grid solver and the Monte Carlo layer can call the same
code node-wise or path-wise.

State variables are capital ``k`` and habit ``h``; the control is the
consumption ``c`` with ``0 < c <= R*k``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

LOW_SLACK = 1e-6


@dataclass(frozen=True)
class ModelParams:
    """Scalar constants of the habit-formation growth model.

    B      : deterministic growth rate of capital (>= 0)
    rho    : habit adjustment speed, in (0, 1)
    beta1  : capital volatility (> 0)
    beta2  : habit volatility (> 0)
    theta  : discount rate (> 0)
    sigma  : risk-aversion exponent (> 1)
    gamma  : weight of habit in utility, in [0, 1)
    R      : cap on the consumption/capital ratio (> 0, >= B)
    """

    B: float
    rho: float
    beta1: float
    beta2: float
    theta: float
    sigma: float
    gamma: float
    R: float

    def __post_init__(self):
        for name in ("B", "rho", "beta1", "beta2", "theta", "sigma", "gamma", "R"):
            val = getattr(self, name)
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise TypeError(f"{name} must be a real number, got {val!r}")
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, float(val))
        checks = [
            ("B", self.B >= 0, "B must be >= 0"),
            ("rho", 0 < self.rho < 1, "rho must be in (0, 1)"),
            ("beta1", self.beta1 > 0, "beta1 must be > 0"),
            ("beta2", self.beta2 > 0, "beta2 must be > 0"),
            ("theta", self.theta > 0, "theta must be > 0"),
            ("sigma", self.sigma > 1, "sigma must be > 1"),
            ("gamma", 0 <= self.gamma < 1, "gamma must be in [0, 1)"),
            ("R", self.R > 0, "R must be > 0"),
            ("R", self.R >= self.B, "R must be >= B"),
        ]
        for field, ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def homogeneity_degree(self) -> float:
        """Degree (1-gamma)(1-sigma) of the value function."""
        return (1.0 - self.gamma) * (1.0 - self.sigma)

    @property
    def habit_power(self) -> float:
        """Exponent gamma*(sigma-1) that habit carries inside the utility."""
        return self.gamma * (self.sigma - 1.0)

    @property
    def continuity_regime(self) -> bool:
        return self.habit_power <= 1.0

    def replace(self, **changes) -> "ModelParams":
        d = asdict(self)
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class State(NamedTuple):
    k: np.ndarray | float
    h: np.ndarray | float


class CoState(NamedTuple):
    """First and second derivatives of a value function at a state."""

    p_k: np.ndarray | float
    p_h: np.ndarray | float
    q_kk: np.ndarray | float = 0.0
    q_hh: np.ndarray | float = 0.0
    q_kh: np.ndarray | float = 0.0


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    case: str  # "i" or "ii"
    threshold: float
    slack: float
    continuity_regime: bool
    low_slack: bool

    def to_dict(self) -> dict:
        return asdict(self)


def discount_threshold(params: ModelParams) -> tuple[str, float]:
    """Return the applicable case and the lower bound theta must exceed."""
    p = params
    if p.gamma == 0.0:
        mult = math.inf
    else:
        mult = max(2.0, 1.0 / (p.gamma * (p.sigma - 1.0)))
    vol = (p.sigma - 1.0) * (p.beta1**2 + p.gamma**2 * p.beta2**2)
    if p.rho + 0.5 * (p.beta2**2 - p.beta1**2) <= 0:
        inner = -p.gamma * p.rho - 0.5 * (p.gamma * p.beta2**2 - p.beta1**2) + mult * vol
        case = "i"
    else:
        inner = 0.5 * p.beta1**2 * (1.0 - p.gamma) + mult * vol
        case = "ii"
    return case, (p.sigma - 1.0) * inner


def validate_params(params: ModelParams) -> ValidationReport:
    """Check the discount condition that guarantees strategies of finite utility.

    Field ranges are enforced when ``ModelParams`` is built; this only
    evaluates the case split on ``rho + (beta2^2 - beta1^2)/2``.
    """
    case, thr = discount_threshold(params)
    slack = params.theta - thr
    passed = bool(slack > 0)
    low = passed and slack < LOW_SLACK
    if low:
        warnings.warn(f"discount condition holds with low slack {slack:.3e}", stacklevel=2)
    return ValidationReport(
        passed=passed,
        case=case,
        threshold=thr,
        slack=slack,
        continuity_regime=params.continuity_regime,
        low_slack=low,
    )


def running_utility(c, h, params: ModelParams):
    """(c / h^gamma)^(1-sigma) / (1-sigma); nonpositive."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise ValueError("consumption must be strictly positive")
    s = params.sigma
    return (c / np.power(h, params.gamma)) ** (1.0 - s) / (1.0 - s)


def _disutility(c, h, params: ModelParams):
    # (h^gamma / c)^(sigma-1) / (sigma-1), no domain checks
    s = params.sigma
    return (np.power(h, params.gamma) / c) ** (s - 1.0) / (s - 1.0)


def hamiltonian_g(c, state: State, p_k, p_h, params: ModelParams):
    """Consumption-dependent part of the Hamiltonian, maximized over (0, R*k]."""
    c = np.asarray(c, dtype=float)
    k, h = state
    if np.any(c <= 0) or np.any(c > params.R * np.asarray(k)):
        raise ValueError("consumption must lie in (0, R*k]")
    return -c * p_k + params.rho * c * p_h - _disutility(c, h, params)


def maximize_g_on(lo, hi, h, p_k, p_h, params: ModelParams):
    """Maximizer of g(.; h, p_k, p_h) over [lo, hi] (lo may be 0, then open).

    g is increasing when p_k - rho*p_h <= 0 and unimodal otherwise, so the
    constrained maximizer is the unconstrained stationary point clipped to
    the interval.
    """
    s = params.sigma
    P = np.asarray(p_k - params.rho * np.asarray(p_h), dtype=float)
    hi = np.asarray(hi, dtype=float)
    hpow = np.power(h, params.habit_power)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inner = np.where(P > 0, (hpow / np.where(P > 0, P, 1.0)) ** (1.0 / s), np.inf)
    # ties at the corner go to hi
    corner = P <= hpow * hi ** (-s)
    c = np.where(corner, hi, inner)
    return np.maximum(c, lo)


def optimal_consumption(state: State, p_k, p_h, params: ModelParams):
    """Pointwise argmax of g over (0, R*k]; returns R*k on the corner branch."""
    k, h = state
    c = maximize_g_on(0.0, params.R * np.asarray(k, dtype=float), h, p_k, p_h, params)
    return c if np.ndim(c) else float(c)


def g_branches(state: State, p_k, p_h, params: ModelParams):
    """Both closed-form branches of G, each evaluated regardless of which applies.

    Returns (corner, interior, corner_active).  The interior branch is NaN
    where p_k - rho p_h <= 0.
    """
    k, h = state
    s = params.sigma
    P = np.asarray(p_k - params.rho * np.asarray(p_h), dtype=float)
    Rk = params.R * np.asarray(k, dtype=float)
    hg = np.power(h, params.gamma)
    active = P <= np.power(h, params.habit_power) * Rk ** (-s)
    corner = -Rk * P - (hg / Rk) ** (s - 1.0) / (s - 1.0)
    with np.errstate(invalid="ignore"):
        interior = -(1.0 + 1.0 / (s - 1.0)) * (hg * P) ** (1.0 - 1.0 / s)
    return corner, interior, active


def hamiltonian_G(state: State, p_k, p_h, params: ModelParams):
    """Closed-form supremum of g over (0, R*k] (two-branch expression)."""
    corner, interior, active = g_branches(state, p_k, p_h, params)
    out = np.where(active, corner, interior)
    return out if np.ndim(out) else float(out)


def generator_terms(state: State, costate: CoState, params: ModelParams):
    """Consumption-free part of the Hamiltonian (drift and diffusion terms)."""
    k, h = state
    p = params
    return (
        p.B * k * costate.p_k
        - p.rho * h * costate.p_h
        + 0.5 * p.beta1**2 * np.square(k) * costate.q_kk
        + 0.5 * p.beta2**2 * np.square(h) * costate.q_hh
    )


def h_max(state: State, costate: CoState, params: ModelParams):
    """Generator terms plus G. The diffusion matrix is diagonal, so q_kh drops out."""
    return generator_terms(state, costate, params) + hamiltonian_G(
        state, costate.p_k, costate.p_h, params
    )


def f_tilde(costate: CoState, v, state: State, params: ModelParams):
    return -params.theta * np.asarray(v, dtype=float) + h_max(state, costate, params)


def lower_bound_rhs(k0, h0, C, params: ModelParams):
    """-C * ((h0^gamma/k0)^(sigma-1) + k0^(-(1-gamma)(sigma-1)))."""
    if C <= 0:
        raise ValueError("C must be positive")
    s, g = params.sigma, params.gamma
    k0 = np.asarray(k0, dtype=float)
    out = -C * ((np.power(h0, g) / k0) ** (s - 1.0) + k0 ** (-(1.0 - g) * (s - 1.0)))
    return out if np.ndim(out) else float(out)
