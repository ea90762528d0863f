"""Restricted Boltzmann machines built one visible unit at a time.

With the hidden layer summed out, the target after ``n`` visible units is

    f_n(x) = exp(a[:n] . x) * prod_h (1 + exp(b_h + W[:n, h] . x))

Each particle carries ``g = b + x @ W[:n]`` in its cache so that the smooth
weight and the conditional for the next unit cost O(H).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .model import SequentialModel
from .particles import ParticleSet

log = logging.getLogger(__name__)


def softplus(u):
    return np.logaddexp(0.0, u)


@dataclass(frozen=True)
class RbmParams:
    w: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if w.shape != (a.size, b.size):
            raise ValueError(f"w has shape {w.shape}, expected ({a.size}, {b.size})")
        for name, arr in (("w", w), ("a", a), ("b", b)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_visible(self) -> int:
        return self.a.size

    @property
    def n_hidden(self) -> int:
        return self.b.size

    def permuted(self, order) -> "RbmParams":
        order = np.asarray(order, dtype=np.intp)
        return RbmParams(self.w[order], self.a[order], self.b)

    @classmethod
    def random(cls, n: int, h: int, rng: np.random.Generator, scale: float = 0.5) -> "RbmParams":
        """Entries i.i.d. uniform on ``(-scale, scale)``."""
        return cls(rng.uniform(-scale, scale, (n, h)), rng.uniform(-scale, scale, n), rng.uniform(-scale, scale, h))

    @classmethod
    def zeros(cls, n: int, h: int) -> "RbmParams":
        return cls(np.zeros((n, h)), np.zeros(n), np.zeros(h))

    def to_dict(self) -> dict:
        return {"n": self.n_visible, "h": self.n_hidden, "a": self.a.tolist(), "b": self.b.tolist(), "w": self.w.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RbmParams":
        try:
            params = cls(np.array(d["w"], dtype=float).reshape(int(d["n"]), int(d["h"])), d["a"], d["b"])
        except KeyError as exc:
            raise ValueError(f"RBM parameter object lacks field {exc}") from None
        return params


def load_params(path) -> RbmParams:
    with open(path, encoding="utf-8") as fh:
        return RbmParams.from_dict(json.load(fh))


def save_params(params: RbmParams, path) -> None:
    Path(path).write_text(json.dumps(params.to_dict()), encoding="utf-8")


def load_binary_data(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.size and not np.isin(data, (0, 1)).all():
        raise ValueError(f"{path}: dataset entries must be 0 or 1")
    return data


def rbm_log_f(params: RbmParams, x) -> float | np.ndarray:
    """log f_n(x) with the hidden layer summed out; ``n = x.shape[-1]``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    return x @ params.a[:n] + softplus(params.b + x @ params.w[:n]).sum(axis=-1)


def next_unit_logit(params: RbmParams, g: np.ndarray, n: int) -> np.ndarray:
    """log-odds of unit ``n`` (0-based) being on, given cached ``g``."""
    return params.a[n] + (softplus(g + params.w[n]) - softplus(g)).sum(axis=-1)


def rbm_smooth_log_weight(params: RbmParams, g: np.ndarray, n: int) -> np.ndarray:
    """log W for particles of dimension ``n`` with cached ``g``."""
    return softplus(next_unit_logit(params, g, n))


def hidden_input(params: RbmParams, x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    return params.b + x @ params.w[:n]


def rbm_gibbs_move(params: RbmParams, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
    """``t`` blocked Gibbs sweeps (h | x, then x | h) on the first ``n``
    visible units. ``x`` has shape ``(count, n)``; returns the new states."""
    count, n = x.shape
    w = params.w[:n]
    a = params.a[:n]
    for _ in range(t):
        u_h = rng.random((count, params.n_hidden))
        u_x = rng.random((count, n))
        h = (u_h < expit(params.b + x @ w)).astype(float)
        x = (u_x < expit(a + h @ w.T)).astype(float)
    return x


def order_by_activity(data) -> np.ndarray:
    """Column order by decreasing variance; ties keep original order."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("dataset must be 2-d")
    if data.shape[0] == 0:
        log.warning("empty dataset; using identity ordering")
        return np.arange(data.shape[1])
    # round so that p and 1-p columns tie exactly despite float noise
    var = np.round(data.var(axis=0), 12)
    return np.argsort(-var, kind="stable")


def base_rate_params(data, n_hidden: int) -> RbmParams:
    """Zero-weight RBM whose visible biases match the dataset's column means."""
    data = np.asarray(data, dtype=float)
    m = data.shape[0]
    p = np.clip(data.mean(axis=0), 1.0 / m, 1.0 - 1.0 / m)
    return RbmParams(np.zeros((data.shape[1], n_hidden)), np.log(p) - np.log1p(-p), np.zeros(n_hidden))


class RbmModel(SequentialModel):
    """An RBM presented to the engines one visible unit at a time.

    Parameters
    ----------
    params : RbmParams
        Model parameters in file order.
    order : array_like, optional
        Order in which visible units are introduced. Defaults to file order.
    data : ndarray, optional
        Binary training rows (file column order); used for reseeding.
    """

    def __init__(self, params: RbmParams, order=None, data=None):
        self.source = params
        n = params.n_visible
        self.order = np.arange(n) if order is None else np.asarray(order, dtype=np.intp)
        if sorted(self.order.tolist()) != list(range(n)):
            raise ValueError("order must be a permutation of the visible units")
        self.params = params.permuted(self.order)
        self.data = None if data is None else np.asarray(data, dtype=float)[:, self.order]
        self.total_dim = n
        lf = np.array([rbm_log_f(self.params, [0.0]), rbm_log_f(self.params, [1.0])])
        self._log_z1 = float(np.logaddexp(lf[0], lf[1]))
        self._p1 = float(np.exp(lf[1] - self._log_z1))

    @property
    def log_z1(self) -> float:
        return self._log_z1

    def unit_ops(self, n: int, count: int, t: int) -> int:
        return t * self.params.n_hidden * n * count

    def _new_set(self, x: np.ndarray, n: int) -> ParticleSet:
        count = x.shape[0]
        states = np.zeros((count, self.total_dim))
        states[:, :n] = x
        return ParticleSet(states, np.full(count, -np.log(count)), n, hidden_input(self.params, x))

    def initial(self, count, rng):
        x = (rng.random((count, 1)) < self._p1).astype(float)
        return self._new_set(x, 1)

    def move(self, pset, t, rng):
        n = pset.dim
        x = rbm_gibbs_move(self.params, pset.states[:, :n], t, rng)
        pset.states[:, :n] = x
        pset.cache = hidden_input(self.params, x)
        return self.unit_ops(n, pset.count, t)

    def smooth_log_weight(self, pset):
        return rbm_smooth_log_weight(self.params, pset.cache, pset.dim)

    def augment(self, pset, rng):
        n = pset.dim
        logit = next_unit_logit(self.params, pset.cache, n)
        bit = (rng.random(pset.count) < expit(logit)).astype(float)
        pset.states[:, n] = bit
        pset.cache = pset.cache + bit[:, None] * self.params.w[n]
        pset.dim = n + 1

    def seed_states(self, n, count, rng):
        if self.data is not None and self.data.shape[0] > 0:
            rows = rng.integers(0, self.data.shape[0], count)
            x = self.data[rows, :n].copy()
        else:
            x = (rng.random((count, n)) < 0.5).astype(float)
        return self._new_set(x, n)
