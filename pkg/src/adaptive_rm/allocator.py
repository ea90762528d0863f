"""Optimal particle allocation across iterations and the matching variance
diagnostics computed from a run's per-iteration ESS.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class AllocationResult:
    r_opt: np.ndarray
    v_min: float
    degenerate: bool = False


def optimal_allocation(v: Sequence[float], r_tot: float) -> AllocationResult:
    """Split ``r_tot`` particles in proportion to ``sqrt(v)``.

    ``v[n]`` is the variance of the normalized smooth weight at iteration
    ``n``. The returned ``v_min`` is the variance of ``log Z_hat`` reached
    by this allocation, ``(sum sqrt(v))**2 / r_tot``.

    If every ``v[n]`` is zero the allocation is undefined; a uniform split
    with ``v_min = 0`` is returned and ``degenerate`` is set.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("v must be a non-empty 1-d sequence")
    if (v < 0).any() or not np.isfinite(v).all():
        raise ValueError("variances must be finite and non-negative")
    if r_tot <= 0:
        raise ValueError("r_tot must be positive")
    root = np.sqrt(v)
    total = root.sum()
    if total == 0.0:
        warnings.warn("all variances are zero; returning a uniform split", RuntimeWarning, stacklevel=2)
        return AllocationResult(np.full(v.size, r_tot / v.size), 0.0, degenerate=True)
    return AllocationResult(root / total * r_tot, float(total**2 / r_tot))


def integerize(r_opt: Sequence[float]) -> np.ndarray:
    """Round to integers with the largest-remainder rule, preserving the
    (rounded) total."""
    r = np.asarray(r_opt, dtype=float)
    target = int(round(r.sum()))
    base = np.floor(r).astype(np.int64)
    short = target - int(base.sum())
    if short > 0:
        # stable sort keeps earlier iterations first on equal remainders
        order = np.argsort(-(r - base), kind="stable")
        base[order[:short]] += 1
    return base


def empirical_vhat(r_n: float, ess_n: float) -> float:
    if ess_n > r_n * (1 + 1e-12):
        raise ValueError(f"ess ({ess_n}) exceeds particle count ({r_n})")
    if ess_n <= 0:
        raise ValueError("ess must be positive")
    return max(r_n / ess_n - 1.0, 0.0)


def predicted_min_variance(diags: Iterable) -> float:
    """``(sum_n sqrt(vhat_n))**2 / sum_n r_n`` over a run's iterations.

    ``diags`` holds objects with ``r_n`` and ``ess`` attributes, or
    ``(r_n, ess)`` pairs.
    """
    pairs = [(d.r_n, d.ess) if hasattr(d, "r_n") else tuple(d) for d in diags]
    if not pairs:
        raise ValueError("no iterations to evaluate")
    root = sum(math.sqrt(empirical_vhat(r, e)) for r, e in pairs)
    return root**2 / sum(r for r, _ in pairs)
