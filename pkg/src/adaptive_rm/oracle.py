"""Brute-force references.

Everything here is evaluated directly from model definitions (explicit
enumeration, rejection sampling, quadrature, closed forms). Nothing in this
module calls into the estimators or the models' sampling kernels, except
for :func:`checker_for`, whose whole purpose is to exercise those kernels
against the references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats
from scipy.special import logsumexp

MAX_ENUM_BITS = 20
_CHUNK = 1 << 14


class Intractable(ValueError):
    pass


@dataclass(frozen=True)
class OracleReport:
    log_z_exact: float
    method: str
    cost: int
    se: float = 0.0

    def as_dict(self) -> dict:
        return {"log_z_exact": self.log_z_exact, "method": self.method, "cost": self.cost, "se": self.se}


def all_binary(n: int) -> np.ndarray:
    """All ``2**n`` binary vectors, first coordinate varying slowest."""
    if n == 0:
        return np.zeros((1, 0))
    return ((np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(float)


def _chunks(n: int):
    total = 1 << n
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        yield ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(float)


def _log1pexp(u):
    # kept local so the oracle does not import the model's softplus
    return np.where(u > 0, u + np.log1p(np.exp(-np.abs(u))), np.log1p(np.exp(np.minimum(u, 0))))


def rbm_log_z_enumerate(w, a, b, layer: str) -> float:
    """log Z by explicit summation over one layer's ``2**k`` configurations."""
    w, a, b = (np.asarray(v, dtype=float) for v in (w, a, b))
    if layer == "hidden":
        k, inner = b.size, lambda h: h @ b + _log1pexp(a + h @ w.T).sum(axis=1)
    elif layer == "visible":
        k, inner = a.size, lambda x: x @ a + _log1pexp(b + x @ w).sum(axis=1)
    else:
        raise ValueError(layer)
    if k > MAX_ENUM_BITS:
        raise Intractable(f"2**{k} terms")
    parts = [logsumexp(inner(block)) for block in _chunks(k)]
    return float(logsumexp(parts))


def rbm_exact_log_z(params) -> OracleReport:
    n, h = params.n_visible, params.n_hidden
    if min(n, h) > MAX_ENUM_BITS:
        raise Intractable(f"both layers exceed {MAX_ENUM_BITS} units")
    if not params.w.any():
        val = float(_log1pexp(params.a).sum() + _log1pexp(params.b).sum())
        return OracleReport(val, "closed_form", n + h)
    if h <= n:
        return OracleReport(rbm_log_z_enumerate(params.w, params.a, params.b, "hidden"), "enum_hidden", 1 << h)
    return OracleReport(rbm_log_z_enumerate(params.w, params.a, params.b, "visible"), "enum_visible", 1 << n)


def rbm_joint_log_f(params, x) -> np.ndarray:
    """``log sum_h exp(x'W h + a'x + b'h)`` over the first ``x.shape[-1]``
    visible units, by enumerating every hidden configuration."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    if params.n_hidden > 16:
        raise Intractable("too many hidden units to enumerate")
    hs = all_binary(params.n_hidden)
    energy = x @ params.w[:n] @ hs.T + (x @ params.a[:n])[:, None] + (hs @ params.b)[None, :]
    return logsumexp(energy, axis=1)


def rbm_prefix_log_probs(params, n: int) -> tuple[np.ndarray, np.ndarray]:
    """All states of the first ``n`` units and their exact log probabilities
    under ``p_n``."""
    if n > 16:
        raise Intractable(f"2**{n} visible states")
    xs = all_binary(n)
    lf = rbm_joint_log_f(params, xs)
    return xs, lf - logsumexp(lf)


def rbm_exact_sample(params, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    xs, lp = rbm_prefix_log_probs(params, n)
    idx = rng.choice(xs.shape[0], size=count, p=np.exp(lp))
    return xs[idx]


def rbm_exact_smooth_log_weight(params, x) -> np.ndarray:
    """``log [sum_{x'} f_{n+1}(x, x') / f_n(x)]`` by hidden enumeration."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    zero = np.hstack([x, np.zeros((x.shape[0], 1))])
    one = np.hstack([x, np.ones((x.shape[0], 1))])
    return np.logaddexp(rbm_joint_log_f(params, zero), rbm_joint_log_f(params, one)) - rbm_joint_log_f(params, x)


def rbm_exact_next_prob(params, x) -> np.ndarray:
    """``p(x_{n+1} = 1 | x)`` by hidden enumeration."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    one = np.hstack([x, np.ones((x.shape[0], 1))])
    zero = np.hstack([x, np.zeros((x.shape[0], 1))])
    l1, l0 = rbm_joint_log_f(params, one), rbm_joint_log_f(params, zero)
    return np.exp(l1 - np.logaddexp(l0, l1))


# -- Gaussian orthant -----------------------------------------------------

def bivariate_orthant(rho: float) -> float:
    """``P(z1 > 0, z2 > 0)`` for a standard bivariate normal with correlation rho."""
    return 0.25 + math.asin(rho) / (2.0 * math.pi)


def gpc_orthant_log_z(sigma, y, samples: int, rng: np.random.Generator, chunk: int = 1_000_000) -> OracleReport:
    """log of the fraction of ``N(0, sigma)`` draws with ``y_i z_i > 0`` for all i."""
    sigma = np.asarray(sigma, dtype=float)
    y = np.asarray(y, dtype=float)
    chol = np.linalg.cholesky(sigma)
    hits = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        z = rng.standard_normal((m, y.size)) @ chol.T
        hits += int(np.all(z * y > 0, axis=1).sum())
        done += m
    if hits == 0:
        raise ValueError("no draws landed in the orthant; increase the sample count")
    p = hits / samples
    se_p = math.sqrt(p * (1 - p) / samples)
    return OracleReport(math.log(p), "mc_orthant", samples, se_p / p)


def gpc_exact_sample(sigma, y, count: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection sampler for the orthant-truncated Gaussian."""
    sigma = np.asarray(sigma, dtype=float)
    y = np.asarray(y, dtype=float)
    chol = np.linalg.cholesky(sigma)
    out = []
    have = 0
    while have < count:
        z = rng.standard_normal((max(4 * (count - have), 1024), y.size)) @ chol.T
        z = z[np.all(z * y > 0, axis=1)]
        out.append(z)
        have += z.shape[0]
    return np.concatenate(out)[:count]


def gpc_exact_smooth_log_weight(sigma, y, z) -> np.ndarray:
    """Smooth log-weights by Gaussian conditioning (linear solves) and
    numerical integration over the feasible half-line."""
    sigma = np.asarray(sigma, dtype=float)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = z.shape[1]
    gain = np.linalg.solve(sigma[:n, :n], sigma[:n, n])
    var = sigma[n, n] - sigma[:n, n] @ gain
    sd = math.sqrt(var)
    out = []
    for m in z @ gain:
        pdf = lambda u, m=m: math.exp(-0.5 * ((u - m) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        if y[n] > 0:
            val, _ = integrate.quad(pdf, 0.0, np.inf, epsabs=0, epsrel=1e-12)
        else:
            val, _ = integrate.quad(pdf, -np.inf, 0.0, epsabs=0, epsrel=1e-12)
        out.append(math.log(val))
    return np.array(out)


# -- i.i.d. weight simulator -----------------------------------------------

def lognormal_params(v: float) -> tuple[float, float]:
    """(mu, sd) of a lognormal with mean 1 and variance ``v``."""
    s2 = math.log1p(v)
    return -0.5 * s2, math.sqrt(s2)


def iid_weight_runs(v, allocation, reps: int, rng: np.random.Generator, return_samples: bool = False):
    """Sample variance of ``log Z_hat`` when every iteration averages
    independent mean-one lognormal weights of normalized variance ``v[n]``
    over ``allocation[n]`` draws."""
    v = np.asarray(v, dtype=float)
    alloc = np.asarray(allocation, dtype=np.int64)
    if v.shape != alloc.shape:
        raise ValueError("v and allocation must have the same length")
    if (alloc < 2).any():
        raise ValueError("every iteration needs at least 2 particles")
    total = np.zeros(reps)
    for vn, rn in zip(v, alloc):
        if vn == 0:
            continue
        mu, sd = lognormal_params(vn)
        step = max(1, 4_000_000 // int(rn))
        for start in range(0, reps, step):
            stop = min(start + step, reps)
            draws = rng.lognormal(mu, sd, size=(stop - start, int(rn)))
            total[start:stop] += np.log(draws.mean(axis=1))
    var = float(total.var(ddof=1))
    return (var, total) if return_samples else var


# -- kernel checks against the references -----------------------------------

def _check_rbm(model, n, rng, samples, t):
    from .particles import ParticleSet

    params = model.params
    x0 = rbm_exact_sample(params, n, samples, rng)
    states = np.zeros((samples, model.total_dim))
    states[:, :n] = x0
    pset = ParticleSet(states, np.full(samples, -np.log(samples)), n, params.b + x0 @ params.w[:n])
    model.move(pset, t, rng)
    xs, lp = rbm_prefix_log_probs(params, n)
    phi = xs.sum(axis=1)
    mean = float(np.exp(lp) @ phi)
    sd = math.sqrt(max(float(np.exp(lp) @ phi**2) - mean**2, 1e-300))
    z = abs(pset.states[:, :n].sum(axis=1).mean() - mean) / (sd / math.sqrt(samples))

    smooth_err = aug_err = 0.0
    if n < model.total_dim:
        probe = xs if xs.shape[0] <= 256 else xs[rng.choice(xs.shape[0], 256, replace=False)]
        pset = ParticleSet(
            np.hstack([probe, np.zeros((probe.shape[0], model.total_dim - n))]),
            np.full(probe.shape[0], -np.log(probe.shape[0])), n, params.b + probe @ params.w[:n],
        )
        smooth_err = float(np.abs(model.smooth_log_weight(pset) - rbm_exact_smooth_log_weight(params, probe)).max())
        # augment frequencies for one fixed prefix
        reps = samples
        one = ParticleSet(np.repeat(pset.states[:1], reps, axis=0), np.full(reps, -np.log(reps)), n,
                          np.repeat(pset.cache[:1], reps, axis=0))
        model.augment(one, rng)
        p = float(rbm_exact_next_prob(params, probe[:1])[0])
        aug_err = abs(one.states[:, n].mean() - p)
    return z, smooth_err, aug_err, None


def _check_gpc(model, n, rng, samples, t):
    from .particles import ParticleSet

    if n > 8:
        from .model import OracleUnavailable

        raise OracleUnavailable("rejection sampling beyond n=8 is impractical")
    sigma, y = model.sigma, model.y
    z0 = gpc_exact_sample(sigma[:n, :n], y[:n], samples, rng)
    states = np.zeros((samples, model.total_dim))
    states[:, :n] = z0
    pset = ParticleSet(states, np.full(samples, -np.log(samples)), n)
    model.move(pset, t, rng)
    phi0 = z0[:, 0]
    phi1 = pset.states[:, 0]
    z = abs(phi1.mean() - phi0.mean()) / math.sqrt(phi0.var() / samples + phi1.var() / samples)

    smooth_err = aug_err = 0.0
    pval = None
    if n < model.total_dim:
        probe = z0[:32]
        pset = ParticleSet(np.hstack([probe, np.zeros((probe.shape[0], model.total_dim - n))]),
                           np.full(probe.shape[0], -np.log(probe.shape[0])), n)
        smooth_err = float(np.abs(model.smooth_log_weight(pset) - gpc_exact_smooth_log_weight(sigma, y, probe)).max())
        reps = samples
        one = ParticleSet(np.repeat(pset.states[:1], reps, axis=0), np.full(reps, -np.log(reps)), n)
        model.augment(one, rng)
        draws = one.states[:, n]
        gain = np.linalg.solve(sigma[:n, :n], sigma[:n, n])
        m = float(probe[0] @ gain)
        sd = math.sqrt(sigma[n, n] - sigma[:n, n] @ gain)
        lo, hi = (0.0, np.inf) if y[n] > 0 else (-np.inf, 0.0)
        dist = stats.truncnorm((lo - m) / sd, (hi - m) / sd, loc=m, scale=sd)
        edges = dist.ppf(np.linspace(0, 1, 21))
        counts = np.histogram(draws, bins=edges)[0]
        pval = float(stats.chisquare(counts).pvalue)
        aug_err = abs(draws.mean() - dist.mean())
    return z, smooth_err, aug_err, pval


def checker_for(model):
    from .gpc import GpcModel
    from .model import OracleUnavailable, ValidationReport
    from .rbm import RbmModel

    if isinstance(model, RbmModel):
        fn = _check_rbm
    elif isinstance(model, GpcModel):
        fn = _check_gpc
    else:
        raise OracleUnavailable(f"no brute-force reference for {type(model).__name__}")

    def check(model, n, rng, samples, t):
        try:
            z, s_err, a_err, pval = fn(model, n, rng, samples, t)
        except Intractable as exc:
            raise OracleUnavailable(f"oracle unavailable: {exc}") from None
        return ValidationReport(n, float(z), float(s_err), float(a_err), pval)

    return check
