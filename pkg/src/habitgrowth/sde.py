"""Exact simulation of the capital/habit SDEs.

Both state equations are linear in the state, so for a given consumption
path they are solved by variation of constants with a stochastic exponential
as the integrating factor.  The only discretization is the trapezoidal rule
applied to the integral of ``c / E`` on the simulation grid.

Brownian increments come from a Philox stream keyed on
``(seed, 2*path_index + component)``.  Each uniform consumes exactly one
64-bit draw, so the normal used at step ``n`` of path ``i`` does not depend
on how paths are batched or in which order they are produced.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .model import ModelParams

PROVENANCES = ("constant-rate", "lower-bound-strategy", "feedback", "user")


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ValueError("t_end must be finite and > 0")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be an integer >= 1")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def from_dt(cls, t_end: float, dt: float) -> "TimeGrid":
        return cls(t_end, max(1, int(round(t_end / dt))))

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_steps + 1)


@dataclass
class BrownianPair:
    """Two independent Brownian paths on a grid; leading axes index paths."""

    grid: TimeGrid
    w1: np.ndarray
    w2: np.ndarray
    seed: int
    path_index: np.ndarray | int = 0

    @property
    def dw1(self) -> np.ndarray:
        return np.diff(self.w1, axis=-1)

    @property
    def dw2(self) -> np.ndarray:
        return np.diff(self.w2, axis=-1)

    def path(self, i: int) -> "BrownianPair":
        idx = np.atleast_1d(self.path_index)[i]
        return BrownianPair(self.grid, self.w1[i], self.w2[i], self.seed, int(idx))


@dataclass
class ControlPath:
    c: np.ndarray
    provenance: str = "user"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        self.c = np.asarray(self.c, dtype=float)
        if np.any(~(self.c > 0)):
            raise ValueError("consumption must be strictly positive at every node")

    def scaled(self, alpha: float) -> "ControlPath":
        return ControlPath(alpha * self.c, self.provenance)


@dataclass
class PathBundle:
    grid: TimeGrid
    noise: BrownianPair
    control: ControlPath
    k: np.ndarray
    h: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def c(self) -> np.ndarray:
        return self.control.c


@dataclass(frozen=True)
class AdmissibilityVerdict:
    admissible: bool
    node: int | None = None
    constraint: str | None = None


def _stream_key(seed: int, stream: int) -> int:
    if not (0 <= seed < 2**64):
        raise ValueError("seed must be an unsigned 64-bit integer")
    return (int(seed) << 64) | int(stream)


def standard_normals(seed: int, stream: int, start: int, n: int) -> np.ndarray:
    """Normals number ``start .. start+n-1`` of one counter-keyed stream."""
    block = start // 4
    skip = start - 4 * block
    gen = np.random.Generator(np.random.Philox(key=_stream_key(seed, stream), counter=block))
    u = gen.random(n + skip)[skip:]
    # midpoint of the 2^-53 cell keeps u strictly inside (0, 1)
    u = (np.floor(u * 2.0**53) + 0.5) * 2.0**-53
    return ndtri(u)


def brownian_increments(seed: int, path_indices, grid: TimeGrid, start: int = 0, n: int | None = None):
    """Increments (dW1, dW2) with shape (n_paths, n) for steps ``start..start+n``."""
    n = grid.n_steps - start if n is None else n
    idx = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    sq = math.sqrt(grid.dt)
    dw1 = np.empty((idx.size, n))
    dw2 = np.empty((idx.size, n))
    for row, i in enumerate(idx):
        dw1[row] = sq * standard_normals(seed, 2 * int(i), start, n)
        dw2[row] = sq * standard_normals(seed, 2 * int(i) + 1, start, n)
    return dw1, dw2


def brownian_pair(seed: int, grid: TimeGrid, path_indices: Sequence[int] | int = 0) -> BrownianPair:
    """Brownian paths for the given path indices (one row per index)."""
    scalar = np.ndim(path_indices) == 0
    idx = np.atleast_1d(np.asarray(path_indices, dtype=np.int64))
    dw1, dw2 = brownian_increments(seed, idx, grid)
    zeros = np.zeros((idx.size, 1))
    w1 = np.concatenate([zeros, np.cumsum(dw1, axis=1)], axis=1)
    w2 = np.concatenate([zeros, np.cumsum(dw2, axis=1)], axis=1)
    if scalar:
        return BrownianPair(grid, w1[0], w2[0], seed, int(idx[0]))
    return BrownianPair(grid, w1, w2, seed, idx)


def zero_noise(grid: TimeGrid, n_paths: int | None = None) -> BrownianPair:
    shape = (grid.n_steps + 1,) if n_paths is None else (n_paths, grid.n_steps + 1)
    return BrownianPair(grid, np.zeros(shape), np.zeros(shape), seed=0)


def stochastic_exponential(drift: float, vol: float, noise_path, grid: TimeGrid) -> np.ndarray:
    """exp((a - b^2/2) t + b W_t) evaluated on the grid."""
    t = grid.times
    return np.exp((drift - 0.5 * vol**2) * t + vol * np.asarray(noise_path))


def _cumtrapz(f: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(f)
    out[..., 1:] = np.cumsum(0.5 * dt * (f[..., 1:] + f[..., :-1]), axis=-1)
    return out


def capital_path_exact(k0, control: ControlPath, noise: BrownianPair, grid: TimeGrid, params: ModelParams):
    """Capital from its explicit solution; the result may cross zero."""
    E = stochastic_exponential(params.B, params.beta1, noise.w1, grid)
    k0 = np.asarray(k0, dtype=float)[..., None] if np.ndim(k0) else k0
    return E * (k0 - _cumtrapz(control.c / E, grid.dt))


def habit_path_exact(h0, control: ControlPath, noise: BrownianPair, grid: TimeGrid, params: ModelParams):
    """Habit from its explicit solution; positive whenever c > 0."""
    E = stochastic_exponential(-params.rho, params.beta2, noise.w2, grid)
    h0 = np.asarray(h0, dtype=float)[..., None] if np.ndim(h0) else h0
    return E * (h0 + params.rho * _cumtrapz(control.c / E, grid.dt))


def uncontrolled_paths(k0, h0, noise: BrownianPair, grid: TimeGrid, params: ModelParams):
    """(k, h) with c = 0: pure stochastic exponentials."""
    k = k0 * stochastic_exponential(params.B, params.beta1, noise.w1, grid)
    h = h0 * stochastic_exponential(-params.rho, params.beta2, noise.w2, grid)
    return k, h


def simulate_bundle(k0, h0, control: ControlPath, noise: BrownianPair, params: ModelParams) -> PathBundle:
    grid = noise.grid
    k = capital_path_exact(k0, control, noise, grid, params)
    h = habit_path_exact(h0, control, noise, grid, params)
    return PathBundle(grid, noise, control, k, h)


def admissibility_mask(k, h, c, params: ModelParams) -> dict[str, np.ndarray]:
    """Boolean violation arrays per constraint, same shape as the paths."""
    return {
        "k>0": ~(k > 0),
        "h>0": ~(h > 0),
        "c>0": ~(c > 0),
        "c<=R*k": c > params.R * k,
    }


def is_admissible(bundle: PathBundle, params: ModelParams) -> AdmissibilityVerdict:
    """Node-wise check of positivity and the consumption cap for a single path.

    Crossings strictly between grid nodes are not detected.
    """
    if np.ndim(bundle.k) != 1:
        raise ValueError("is_admissible expects a single path; use path_admissibility for batches")
    viol = admissibility_mask(bundle.k, bundle.h, bundle.c, params)
    first = None
    for name, mask in viol.items():
        hits = np.flatnonzero(mask)
        if hits.size and (first is None or hits[0] < first[0]):
            first = (int(hits[0]), name)
    if first is None:
        return AdmissibilityVerdict(True)
    return AdmissibilityVerdict(False, first[0], first[1])


def path_admissibility(k, h, c, params: ModelParams) -> np.ndarray:
    """Per-path admissibility for batched arrays of shape (n_paths, n_nodes)."""
    viol = admissibility_mask(k, h, c, params)
    bad = np.zeros(np.shape(k), dtype=bool)
    for mask in viol.values():
        bad |= mask
    return ~bad.any(axis=-1)


def constant_rate_feasible(k0: float, nu: float, params: ModelParams) -> bool:
    """Both conditions under which nu*E(beta1 W1) keeps capital positive and capped."""
    if params.B == 0:
        return False
    slack = k0 - nu / params.B
    return bool(slack > 0 and params.R / nu * slack > 1)


def feasible_constant_rate_control(k0, nu, noise: BrownianPair, grid: TimeGrid, params: ModelParams):
    """c = nu * E(beta1 W1); returns (ControlPath, feasible)."""
    if not nu > 0:
        raise ValueError("nu must be > 0")
    c = nu * stochastic_exponential(0.0, params.beta1, noise.w1, grid)
    return ControlPath(c, "constant-rate"), constant_rate_feasible(k0, nu, params)


def lower_bound_strategy(k0, noise: BrownianPair, grid: TimeGrid, params: ModelParams) -> ControlPath:
    """c = B k0 E(beta1 W1): consumes the deterministic growth, so k = c/B."""
    if params.B == 0:
        raise ValueError("lower-bound strategy needs B > 0; use feasible_constant_rate_control")
    k0 = np.asarray(k0, dtype=float)[..., None] if np.ndim(k0) else k0
    c = params.B * k0 * stochastic_exponential(0.0, params.beta1, noise.w1, grid)
    return ControlPath(c, "lower-bound-strategy")


def capital_moment_bound(p: float, t, k0: float, params: ModelParams):
    """k0^p exp(p (B + beta1^2 (p-1)/2) t), valid for any admissible control."""
    if p < 1:
        raise ValueError("moment order must be >= 1")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    out = k0**p * np.exp(p * (params.B + 0.5 * params.beta1**2 * (p - 1.0)) * t)
    return out if np.ndim(out) else float(out)


def write_path_csv(bundle: PathBundle, path) -> None:
    """One row per node: t,w1,w2,c,k,h (repr formatting round-trips doubles)."""
    if np.ndim(bundle.k) != 1:
        raise ValueError("write_path_csv writes a single path")
    write_path_columns(path, bundle.grid.times, bundle.noise.w1, bundle.noise.w2, bundle.c, bundle.k, bundle.h)


def write_path_columns(path, t, w1, w2, c, k, h) -> None:
    cols = [np.broadcast_to(a, np.shape(t)) for a in (t, w1, w2, c, k, h)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "w1", "w2", "c", "k", "h"])
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])


def read_path_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body])
    return {name: data[:, j] for j, name in enumerate(header)}
