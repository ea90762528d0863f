"""Gaussian process classification with the latent ``z = x + noise``
representation, built one data point at a time.

With ``Sigma = K + I`` the target after ``n`` points is a zero-mean Gaussian
on ``z[:n]`` restricted to the orthant ``y_i z_i > 0``; its normalizer is the
marginal likelihood ``p(y[:n])``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_ndtr, ndtri

from .model import SequentialModel
from .particles import ParticleSet

# below this acceptance mass the inverse-CDF sampler loses precision
_TAIL_MASS = 1e-10
_LOG_TAIL_MASS = np.log(_TAIL_MASS)


def rbf_kernel(inputs, ell: float, amp: float) -> tuple[np.ndarray, np.ndarray]:
    """Squared-exponential kernel ``amp**2 exp(-|d|**2 / (2 ell**2))``.

    Returns ``(K, K + I)``.
    """
    if ell <= 0 or amp <= 0:
        raise ValueError("length-scale and amplitude must be positive")
    xi = np.asarray(inputs, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    if not np.isfinite(xi).all():
        raise ValueError("inputs contain non-finite values")
    sq = (xi**2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * xi @ xi.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    k = amp**2 * np.exp(-0.5 * d2 / ell**2)
    return k, k + np.eye(k.shape[0])


def precision_extend(s_n: np.ndarray, sigma: np.ndarray, n: int) -> np.ndarray:
    """Grow ``inv(sigma[:n, :n])`` to ``inv(sigma[:n+1, :n+1])`` in O(n^2)."""
    s_n = np.asarray(s_n, dtype=float)
    if n == 0:
        return np.array([[1.0 / sigma[0, 0]]])
    col = sigma[:n, n]
    s_col = s_n @ col
    denom = sigma[n, n] - col @ s_col
    if not denom > 0:
        raise np.linalg.LinAlgError(
            f"precision update broke down at n={n} (Schur complement {denom!r}); rebuild from a Cholesky factor"
        )
    vs = 1.0 / denom
    s = -vs * s_col
    out = np.empty((n + 1, n + 1))
    out[:n, :n] = s_n + np.outer(s, s) / vs
    out[:n, n] = s
    out[n, :n] = s
    out[n, n] = vs
    return out


def sample_truncated_normal(m, sd, sign, rng: np.random.Generator) -> np.ndarray:
    """Draw ``z ~ N(m, sd**2)`` conditioned on ``sign * z > 0``.

    Works on the standardized variable ``e = sign * (z - m) / sd`` which
    must exceed ``alpha = -sign * m / sd``. Inverse CDF is used while the
    accepted mass is above 1e-10, exponential rejection beyond.
    """
    m, sd = np.broadcast_arrays(np.asarray(m, dtype=float), np.asarray(sd, dtype=float))
    sign = np.broadcast_to(np.asarray(sign, dtype=float), m.shape)
    alpha = -sign * m / sd
    u = rng.random(m.shape)
    log_mass = log_ndtr(-alpha)
    e = np.empty(m.shape)
    easy = log_mass >= _LOG_TAIL_MASS
    # upper-tail inverse: P(E > e) = u * P(E > alpha)
    e[easy] = -ndtri(np.exp(np.log(u[easy]) + log_mass[easy]))
    hard = ~easy
    if hard.any():
        e[hard] = _exp_rejection(alpha[hard], rng)
    e = np.maximum(e, alpha)
    return m + sign * sd * e


def _exp_rejection(alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Standard normal truncated to ``(alpha, inf)`` for large ``alpha``."""
    lam = 0.5 * (alpha + np.sqrt(alpha**2 + 4.0))
    out = np.empty(alpha.shape)
    todo = np.arange(alpha.size)
    while todo.size:
        x = alpha[todo] + rng.exponential(1.0, todo.size) / lam[todo]
        ok = rng.random(todo.size) <= np.exp(-0.5 * (x - lam[todo]) ** 2)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def slice_gibbs_sweep(s: np.ndarray, y: np.ndarray, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Gibbs sweep over all coordinates of every row of ``z``.

    Each coordinate is refreshed from its orthant-truncated Gaussian
    conditional with a slice-sampling step that needs two uniforms and a
    square root. Rows share one random visiting order per sweep.
    """
    count, n = z.shape
    y = np.asarray(y[:n], dtype=float)
    if (y * z < 0).any():
        raise ValueError("state violates the sign constraints y_i z_i >= 0")
    z = z.copy()
    diag = np.diag(s)
    order = rng.permutation(n)
    u = rng.random((n, 2, count))
    for k, i in enumerate(order):
        sii = diag[i]
        mu = -(z @ s[:, i] - sii * z[:, i]) / sii
        v = np.sqrt((z[:, i] - mu) ** 2 - 2.0 * np.log(u[k, 0]) / sii)
        lo = (mu - v) * ((y[i] < 0) | (mu > v))
        hi = (mu + v) * ((y[i] > 0) | (mu < -v))
        z[:, i] = (hi - lo) * u[k, 1] + lo
    return z


class GpcModel(SequentialModel):
    """Probit GP classification evidence ``p(y)`` as a sequential model.

    Parameters
    ----------
    sigma : ndarray
        Latent covariance ``K + I`` (N x N, positive definite).
    y : array_like
        Labels in {-1, +1}.
    """

    def __init__(self, sigma, y):
        sigma = np.asarray(sigma, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        if sigma.shape != (y.size, y.size):
            raise ValueError("sigma must be N x N with N = len(y)")
        if not np.allclose(sigma, sigma.T):
            raise ValueError("sigma must be symmetric")
        np.linalg.cholesky(sigma)
        if not np.isin(y, (-1.0, 1.0)).all():
            raise ValueError("labels must be -1 or +1")
        self.sigma = sigma
        self.y = y
        self.total_dim = y.size
        self._precisions = [precision_extend(None, sigma, 0)]

    @classmethod
    def from_inputs(cls, inputs, y, ell: float, amp: float) -> "GpcModel":
        _, sigma = rbf_kernel(inputs, ell, amp)
        return cls(sigma, y)

    @property
    def log_z1(self) -> float:
        return float(np.log(0.5))

    def precision(self, n: int) -> np.ndarray:
        """``inv(sigma[:n, :n])``, grown incrementally and memoized."""
        while len(self._precisions) < n:
            k = len(self._precisions)
            self._precisions.append(precision_extend(self._precisions[-1], self.sigma, k))
        return self._precisions[n - 1]

    def unit_ops(self, n: int, count: int, t: int) -> int:
        return t * n * n * count

    def _new_set(self, z: np.ndarray, n: int) -> ParticleSet:
        count = z.shape[0]
        states = np.zeros((count, self.total_dim))
        states[:, :n] = z
        return ParticleSet(states, np.full(count, -np.log(count)), n)

    def initial(self, count, rng):
        z = sample_truncated_normal(np.zeros(count), np.sqrt(self.sigma[0, 0]), self.y[0], rng)
        return self._new_set(z[:, None], 1)

    def move(self, pset, t, rng):
        n = pset.dim
        s = self.precision(n)
        z = pset.states[:, :n]
        for _ in range(t):
            z = slice_gibbs_sweep(s, self.y, z, rng)
        pset.states[:, :n] = z
        return self.unit_ops(n, pset.count, t)

    def conditional(self, z: np.ndarray) -> tuple[np.ndarray, float]:
        """Mean and standard deviation of the next latent given rows ``z``."""
        n = z.shape[1]
        s = self.precision(n + 1)
        snn = s[n, n]
        return -(z @ s[:n, n]) / snn, float(1.0 / np.sqrt(snn))

    def smooth_log_weight(self, pset):
        m, sd = self.conditional(pset.states[:, : pset.dim])
        return log_ndtr(self.y[pset.dim] * m / sd)

    def augment(self, pset, rng):
        n = pset.dim
        m, sd = self.conditional(pset.states[:, :n])
        pset.states[:, n] = sample_truncated_normal(m, sd, self.y[n], rng)
        pset.dim = n + 1

    def seed_states(self, n, count, rng):
        z = np.abs(rng.standard_normal((count, n))) * np.sqrt(np.diag(self.sigma)[:n]) * self.y[:n]
        return self._new_set(z, n)


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """CSV with feature columns followed by a label column in {-1, +1}."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    y = data[:, -1]
    if not np.isin(y, (-1, 1)).all():
        raise ValueError(f"{path}: labels must be -1 or +1")
    return data[:, :-1], y
