"""Weighted particle sets, log-domain weights, ESS and resampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

NORMALIZED_TOL = 1e-9


class DegenerateWeightsError(ValueError):
    """Raised when every weight in a vector is zero."""


def _as_log_weights(lw) -> np.ndarray:
    lw = np.asarray(lw, dtype=float)
    if lw.ndim != 1:
        raise ValueError("log weights must be a 1-d array")
    if np.isnan(lw).any() or np.isposinf(lw).any():
        raise ValueError("log weights must be finite or -inf")
    return lw


def normalize(lw) -> tuple[np.ndarray, float]:
    """Normalize log weights.

    Returns
    -------
    normalized : ndarray
        ``lw - log_sum`` so that ``exp(normalized).sum() == 1``.
    log_sum : float
        ``log(sum(exp(lw)))`` computed with a max shift.
    """
    lw = _as_log_weights(lw)
    if lw.size == 0 or not np.isfinite(lw).any():
        raise DegenerateWeightsError("degenerate weight vector")
    log_sum = float(logsumexp(lw))
    return lw - log_sum, log_sum


def check_normalized(lw, tol: float = NORMALIZED_TOL) -> np.ndarray:
    lw = _as_log_weights(lw)
    total = np.exp(lw).sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"weights are not normalized (sum={total!r})")
    return lw


def ess(lw_normalized) -> float:
    """Effective sample size ``1 / sum(w**2)`` of normalized log weights."""
    lw = check_normalized(lw_normalized)
    return float(np.exp(-logsumexp(2.0 * lw)))


@dataclass
class ParticleSet:
    """``count`` particles of dimension ``dim`` with normalized log weights.

    ``states`` has shape ``(count, capacity)``; only the first ``dim``
    columns are meaningful. Models may keep extra per-particle caches in
    ``cache`` (rows aligned with ``states``).
    """

    states: np.ndarray
    log_weights: np.ndarray
    dim: int
    cache: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.states.ndim != 2:
            raise ValueError("states must be 2-d")
        if self.states.shape[0] != self.log_weights.shape[0]:
            raise ValueError("number of weights does not match number of states")
        if self.cache is not None and self.cache.shape[0] != self.states.shape[0]:
            raise ValueError("cache rows do not match number of states")

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def take(self, idx: np.ndarray) -> "ParticleSet":
        """Rows ``idx`` with uniform weights."""
        idx = np.asarray(idx, dtype=np.intp)
        cache = None if self.cache is None else self.cache[idx].copy()
        return ParticleSet(
            self.states[idx].copy(),
            np.full(idx.size, -np.log(idx.size)),
            self.dim,
            cache,
        )

    def copy(self) -> "ParticleSet":
        cache = None if self.cache is None else self.cache.copy()
        return ParticleSet(self.states.copy(), self.log_weights.copy(), self.dim, cache)

    def weighted_mean(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def multinomial_counts(lw_normalized, size: int, rng: np.random.Generator) -> np.ndarray:
    """Offspring counts from ``size`` i.i.d. inverse-CDF draws."""
    w = np.exp(check_normalized(lw_normalized))
    cdf = np.cumsum(w)
    last = np.flatnonzero(w > 0)[-1]
    cdf[last:] = 1.0
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    # zero-weight particles share a cdf value with their predecessor and
    # are never hit by side="right"
    return np.bincount(idx, minlength=w.size)


def residual_counts(lw_normalized, size: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic floor counts plus multinomial residual."""
    w = np.exp(check_normalized(lw_normalized))
    scaled = size * w
    counts = np.floor(scaled).astype(np.int64)
    rest = size - int(counts.sum())
    if rest > 0:
        resid = scaled - counts
        resid = np.clip(resid, 0.0, None)
        resid_lw = np.log(resid, where=resid > 0, out=np.full(resid.size, -np.inf))
        resid_lw, _ = normalize(resid_lw)
        counts += multinomial_counts(resid_lw, rest, rng)
    return counts


def counts_to_indices(counts: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(counts.size), counts)


def multinomial_resample(pset: ParticleSet, size: int, rng: np.random.Generator) -> ParticleSet:
    counts = multinomial_counts(pset.log_weights, size, rng)
    return pset.take(counts_to_indices(counts))


def residual_resample(pset: ParticleSet, size: int, rng: np.random.Generator) -> ParticleSet:
    counts = residual_counts(pset.log_weights, size, rng)
    return pset.take(counts_to_indices(counts))


RESAMPLERS = {
    "multinomial": multinomial_resample,
    "residual": residual_resample,
}


def resample(pset: ParticleSet, size: int, rng: np.random.Generator, scheme: str = "residual") -> ParticleSet:
    try:
        fn = RESAMPLERS[scheme]
    except KeyError:
        raise ValueError(f"unknown resampling scheme {scheme!r}") from None
    return fn(pset, size, rng)
