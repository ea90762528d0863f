"""Resample-Move and Adaptive Resample-Move estimators of ``log Z``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from . import streams
from .model import SequentialModel
from .particles import DegenerateWeightsError, ParticleSet, ess, normalize, resample


class Method(str, Enum):
    RM = "rm"
    ARM = "arm"
    ARM_ANTICIPATE = "arm-anticipate"
    ARM_RESEED = "arm-reseed"


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SmcConfig:
    base_r: int = 1000
    ess_resample_fraction: float = 0.7
    gamma_thr: float = 0.7
    i_max: int = 3
    gibbs_steps: int = 10
    method: Method = Method.ARM
    seed: int = 0
    reseed_min: int = 100
    reseed_burn_in: int = 1500
    resample_scheme: str = "residual"

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.base_r < 2:
            raise ValueError("base_r must be at least 2")
        if not 0.0 < self.ess_resample_fraction <= 1.0:
            raise ValueError("ess_resample_fraction must lie in (0, 1]")
        if not 0.0 <= self.gamma_thr <= 1.0:
            raise ValueError("gamma_thr must lie in [0, 1]")
        if self.i_max < 1:
            raise ValueError("i_max must be at least 1")
        if self.gibbs_steps < 0 or self.reseed_burn_in < 0 or self.reseed_min < 1:
            raise ValueError("step and reseed counts must be non-negative")

    def with_seed(self, seed: int) -> "SmcConfig":
        return replace(self, seed=seed)


@dataclass
class IterationDiag:
    n: int
    r_n: int
    ess: float
    gamma_final: float
    generate_iters: int
    resampled: bool
    log_z_increment: float
    gibbs_unit_ops: int


@dataclass
class RunResult:
    log_z: float
    log_z1: float
    diags: list[IterationDiag] = field(default_factory=list)

    @property
    def total_particle_iterations(self) -> int:
        return sum(d.r_n for d in self.diags)

    @property
    def gibbs_unit_ops(self) -> int:
        return sum(d.gibbs_unit_ops for d in self.diags)

    def to_dict(self) -> dict:
        return {
            "log_z": self.log_z,
            "log_z1": self.log_z1,
            "total_particle_iterations": self.total_particle_iterations,
            "diags": [asdict(d) for d in self.diags],
        }


def merge_sets(old: ParticleSet, new: ParticleSet, alpha: float) -> ParticleSet:
    """Concatenate two sets targeting the same distribution, weighting the
    first by ``alpha`` and the second by ``1 - alpha``."""
    if old.dim != new.dim:
        raise ValueError(f"dimension mismatch ({old.dim} vs {new.dim})")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        lw = np.concatenate([old.log_weights + np.log(alpha), new.log_weights + np.log1p(-alpha)])
    lw, _ = normalize(lw)
    cache = None
    if old.cache is not None and new.cache is not None:
        cache = np.concatenate([old.cache, new.cache])
    return ParticleSet(np.concatenate([old.states, new.states]), lw, old.dim, cache)


def anticipate_counts(next_log_weights: np.ndarray) -> np.ndarray:
    """Copies per particle: ``floor(R * w_next)`` where positive, else one."""
    r = next_log_weights.size
    n_r = np.floor(r * np.exp(next_log_weights)).astype(np.int64)
    return np.maximum(n_r, 1)


def anticipate_expand(pset: ParticleSet, next_log_weights) -> ParticleSet:
    """Split particles that are heavy under the next target.

    Particle ``r`` with ``N_r = floor(R * w_next[r]) > 0`` is replaced by
    ``N_r`` copies of weight ``w[r] / N_r``; all other particles are kept
    once. The output still targets the current distribution.
    """
    next_log_weights = np.asarray(next_log_weights, dtype=float)
    if next_log_weights.size != pset.count:
        raise ValueError("next weights must have one entry per particle")
    copies = anticipate_counts(next_log_weights)
    idx = np.repeat(np.arange(pset.count), copies)
    lw = (pset.log_weights - np.log(copies))[idx]
    cache = None if pset.cache is None else pset.cache[idx].copy()
    return ParticleSet(pset.states[idx].copy(), lw, pset.dim, cache)


def reseed_count(gamma: float, cfg: SmcConfig) -> int:
    """Fresh particles to inject: ``max(ceil((1 - gamma/gamma_thr) R), reseed_min)``."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if cfg.gamma_thr == 0.0 or gamma >= cfg.gamma_thr:
        return cfg.reseed_min
    # round off representation noise before the ceiling, e.g. 500.00000000000006
    wanted = math.ceil(round((1.0 - gamma / cfg.gamma_thr) * cfg.base_r, 9))
    return max(wanted, cfg.reseed_min)


def _normalize_at(lw: np.ndarray, n: int) -> tuple[np.ndarray, float]:
    try:
        return normalize(lw)
    except DegenerateWeightsError:
        raise EstimationError(f"all particle weights vanished at iteration n={n}") from None


class _Generator:
    """Produces the new particle sets for one outer iteration's generate-loop."""

    def __init__(self, model: SequentialModel, cfg: SmcConfig, n: int, working: ParticleSet, smooth_lw: np.ndarray):
        self.model, self.cfg, self.n = model, cfg, n
        self.working = working
        self.smooth_lw = smooth_lw

    def __call__(self, i: int, gamma: float) -> tuple[ParticleSet, np.ndarray, int]:
        cfg, model, n = self.cfg, self.model, self.n
        rng = streams.stream(cfg.seed, n, i, streams.MOVE)
        if cfg.method is Method.ARM_ANTICIPATE:
            next_lw, _ = normalize(self.working.log_weights + self.smooth_lw)
            new = anticipate_expand(self.working, next_lw)
            ops = model.move(new, cfg.gibbs_steps, rng)
        elif cfg.method is Method.ARM_RESEED:
            s = reseed_count(gamma, cfg)
            new = model.seed_states(n, s, streams.stream(cfg.seed, n, i, streams.RESEED))
            ops = model.move(new, cfg.reseed_burn_in, rng)
        else:
            ops = model.move(self.working, cfg.gibbs_steps, rng)
            new = self.working.copy()
        return new, model.smooth_log_weight(new), ops


def run(model: SequentialModel, cfg: SmcConfig) -> RunResult:
    """Estimate ``log Z`` of ``model`` with the method named in ``cfg``.

    All randomness is drawn from streams addressed by
    ``(cfg.seed, n, i, stage)``, so a run is a pure function of
    ``(model, cfg)``.
    """
    adaptive = cfg.method is not Method.RM
    r = cfg.base_r
    t = cfg.gibbs_steps
    pset = model.initial(r, streams.stream(cfg.seed, 0, 0, streams.INIT))
    result = RunResult(log_z=model.log_z1, log_z1=model.log_z1)
    log_z = model.log_z1

    for n in range(1, model.total_dim):
        ops = model.move(pset, t, streams.stream(cfg.seed, n, 0, streams.MOVE))
        smooth_lw = model.smooth_log_weight(pset)
        next_lw, inc = _normalize_at(pset.log_weights + smooth_lw, n)
        cur_ess = ess(next_lw)
        gamma = cur_ess / r
        merged, merged_smooth = pset, smooth_lw
        i = 0
        if adaptive and gamma < cfg.gamma_thr:
            generate = _Generator(model, cfg, n, pset, smooth_lw)
            merged = pset.copy()
            while gamma < cfg.gamma_thr and i < cfg.i_max:
                i += 1
                new, new_smooth, new_ops = generate(i, gamma)
                ops += new_ops
                merged = merge_sets(merged, new, merged.count / (merged.count + new.count))
                merged_smooth = np.concatenate([merged_smooth, new_smooth])
                next_lw, inc = _normalize_at(merged.log_weights + merged_smooth, n)
                cur_ess = ess(next_lw)
                gamma = cur_ess / merged.count
        r_n = merged.count
        log_z += inc
        merged.log_weights = next_lw

        do_resample = cur_ess < cfg.ess_resample_fraction * r_n
        if adaptive:
            do_resample = do_resample or gamma < cfg.gamma_thr or r_n > r
        if do_resample:
            pset = resample(merged, r, streams.stream(cfg.seed, n, 0, streams.RESAMPLE), cfg.resample_scheme)
        else:
            pset = merged
        model.augment(pset, streams.stream(cfg.seed, n, 0, streams.AUGMENT))
        result.diags.append(
            IterationDiag(
                n=n,
                r_n=r_n,
                ess=cur_ess,
                gamma_final=gamma,
                generate_iters=i,
                resampled=bool(do_resample),
                log_z_increment=inc,
                gibbs_unit_ops=int(ops),
            )
        )
    result.log_z = log_z
    return result


def rm_estimate(model: SequentialModel, cfg: SmcConfig) -> RunResult:
    if cfg.method is not Method.RM:
        cfg = replace(cfg, method=Method.RM)
    return run(model, cfg)


def arm_estimate(model: SequentialModel, cfg: SmcConfig) -> RunResult:
    if cfg.method is Method.RM:
        raise ValueError("arm_estimate needs an adaptive method")
    return run(model, cfg)
