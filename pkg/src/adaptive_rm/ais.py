"""Annealed importance sampling for RBMs from a zero-weight base RBM.

The path interpolates the *joint* energies of base and target linearly in
``beta``, so every intermediate distribution is itself an RBM with
parameters ``(beta W, beta a + (1-beta) a0, beta b + (1-beta) b0)`` and the
usual blocked Gibbs sampler leaves it invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .rbm import RbmParams, softplus

EPS_V = 1e-12


@dataclass(frozen=True)
class AnnealSchedule:
    betas: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        if betas.ndim != 1 or betas.size < 2:
            raise ValueError("a schedule needs at least two temperatures")
        if betas[0] != 0.0 or betas[-1] != 1.0:
            raise ValueError("a schedule must start at 0 and end at 1")
        if not (np.diff(betas) > 0).all():
            raise ValueError("a schedule must be strictly increasing")
        object.__setattr__(self, "betas", betas)

    def __len__(self):
        return self.betas.size


def geometric_schedule(b: int, beta_min: float = 1e-3) -> AnnealSchedule:
    """``0`` followed by ``b - 1`` geometrically spaced values from
    ``beta_min`` to 1."""
    if b < 2:
        raise ValueError("need at least two temperatures")
    if not 0.0 < beta_min < 1.0:
        raise ValueError("beta_min must lie in (0, 1)")
    if b == 2:
        return AnnealSchedule(np.array([0.0, 1.0]), "geometric")
    betas = np.concatenate([[0.0], np.geomspace(beta_min, 1.0, b - 1)])
    betas[-1] = 1.0
    return AnnealSchedule(betas, "geometric")


def linear_schedule(b: int) -> AnnealSchedule:
    return AnnealSchedule(np.linspace(0.0, 1.0, b), "linear")


class GeometricPath:
    """Interpolated RBMs between a zero-weight base and a target."""

    def __init__(self, target: RbmParams, base: RbmParams):
        if target.n_visible != base.n_visible:
            raise ValueError(f"visible sizes differ ({target.n_visible} vs {base.n_visible})")
        if base.n_hidden != target.n_hidden:
            if base.w.any() or base.b.any():
                raise ValueError("base RBM must have the target's hidden size or be all-zero")
            base = RbmParams(np.zeros_like(target.w), base.a, np.zeros(target.n_hidden))
        if base.w.any():
            raise ValueError("base RBM must have zero weights")
        self.target, self.base = target, base

    @property
    def log_z_base(self) -> float:
        return float(softplus(self.base.a).sum() + softplus(self.base.b).sum())

    def params(self, beta: float):
        t, b0 = self.target, self.base
        if beta == 1.0:
            return t.w, t.a, t.b
        # written as base + beta * difference so identical endpoints give exact zeros
        return beta * t.w, b0.a + beta * (t.a - b0.a), b0.b + beta * (t.b - b0.b)

    def log_f(self, x: np.ndarray, beta: float) -> np.ndarray:
        w, a, b = self.params(beta)
        return x @ a + softplus(b + x @ w).sum(axis=1)

    def energy(self, x: np.ndarray, beta: float) -> np.ndarray:
        """``d/dbeta log f_beta(x)``."""
        t, b0 = self.target, self.base
        w, _, b = self.params(beta)
        dg = (t.b - b0.b) + x @ t.w
        return x @ (t.a - b0.a) + (expit(b + x @ w) * dg).sum(axis=1)

    def sample_base(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.random((count, self.base.n_visible)) < expit(self.base.a)).astype(float)

    def gibbs(self, x: np.ndarray, beta: float, t: int, rng: np.random.Generator) -> np.ndarray:
        w, a, b = self.params(beta)
        count = x.shape[0]
        for _ in range(t):
            h = (rng.random((count, b.size)) < expit(b + x @ w)).astype(float)
            x = (rng.random(x.shape) < expit(a + h @ w.T)).astype(float)
        return x


@dataclass
class AisResult:
    log_z: float
    log_weights: np.ndarray
    log_z_base: float
    gibbs_unit_ops: int

    def bootstrap_se(self, rng: np.random.Generator, n_boot: int = 1000) -> float:
        lw = self.log_weights
        idx = rng.integers(0, lw.size, (n_boot, lw.size))
        boots = logsumexp(lw[idx], axis=1) - math.log(lw.size)
        return float(boots.std(ddof=1))


def ais_rbm(target: RbmParams, base: RbmParams, schedule: AnnealSchedule, chains: int, t: int,
            rng: np.random.Generator) -> AisResult:
    """Estimate ``log Z`` of ``target`` by annealing ``chains`` independent
    chains from exact base samples along ``schedule``."""
    path = GeometricPath(target, base)
    betas = schedule.betas
    x = path.sample_base(chains, rng)
    log_w = np.zeros(chains)
    prev = path.log_f(x, betas[0])
    for k in range(1, betas.size):
        cur = path.log_f(x, betas[k])
        log_w += cur - prev
        x = path.gibbs(x, betas[k], t, rng)
        if k + 1 < betas.size:
            prev = path.log_f(x, betas[k])
    log_z = path.log_z_base + float(logsumexp(log_w) - math.log(chains))
    ops = chains * t * target.n_hidden * target.n_visible * (betas.size - 1)
    return AisResult(log_z, log_w, path.log_z_base, ops)


@dataclass
class TemperingDiag:
    betas: np.ndarray
    m: np.ndarray
    v: np.ndarray
    delta_beta: np.ndarray

    def rows(self):
        for row in zip(self.betas, self.m, self.v, self.delta_beta):
            yield tuple(float(c) for c in row)


def tempering_diagnostics(target: RbmParams, base: RbmParams, schedule: AnnealSchedule, samples_per_beta: int,
                          rng: np.random.Generator, burn_in: int = 200) -> TemperingDiag:
    """Mean and variance of the energy ``d/dbeta log f`` at each temperature
    and the spacing ``1 / sqrt(V)`` they suggest.

    Samples at each ``beta`` come from ``samples_per_beta`` independent Gibbs
    chains started from exact base draws and run for ``burn_in`` sweeps.
    """
    if samples_per_beta < 100:
        raise ValueError("need at least 100 samples per temperature")
    path = GeometricPath(target, base)
    m, v = [], []
    for beta in schedule.betas:
        x = path.sample_base(samples_per_beta, rng)
        if beta > 0:
            x = path.gibbs(x, beta, burn_in, rng)
        e = path.energy(x, beta)
        m.append(e.mean())
        v.append(e.var(ddof=1))
    v = np.maximum(np.array(v), 0.0)
    return TemperingDiag(schedule.betas.copy(), np.array(m), v, 1.0 / np.sqrt(np.maximum(v, EPS_V)))
