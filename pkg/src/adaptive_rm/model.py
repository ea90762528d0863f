"""The interface every sequentially-decomposed target implements.

A model describes a chain of unnormalized densities ``f_1, ..., f_N`` on
spaces of growing dimension. The engines only ever talk to a model through
the methods below, operating on whole :class:`ParticleSet` objects so that
models are free to vectorize across particles.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .particles import ParticleSet


class OracleUnavailable(RuntimeError):
    pass


class SequentialModel(ABC):
    #: number of sequential components N
    total_dim: int

    @property
    @abstractmethod
    def log_z1(self) -> float:
        """log normalizer of the one-dimensional first target."""

    @abstractmethod
    def initial(self, count: int, rng: np.random.Generator) -> ParticleSet:
        """``count`` exact draws from the first target, uniformly weighted."""

    @abstractmethod
    def move(self, pset: ParticleSet, t: int, rng: np.random.Generator) -> int:
        """Apply ``t`` sweeps of a kernel leaving the current target
        invariant, in place. Returns the number of unit operations spent."""

    @abstractmethod
    def smooth_log_weight(self, pset: ParticleSet) -> np.ndarray:
        """log of the marginal ratio ``p_{n+1}(x_[n]) / p_n(x_[n])`` per row,
        up to the constant ``Z_{n+1} / Z_n``."""

    @abstractmethod
    def augment(self, pset: ParticleSet, rng: np.random.Generator) -> None:
        """Draw component ``n+1`` of every row from its conditional, in place."""

    def seed_states(self, n: int, count: int, rng: np.random.Generator) -> ParticleSet:
        """Starting points for an independent sampler at dimension ``n``.

        Used by the reseed variant; the engine burns these in with
        :meth:`move` before use.
        """
        raise NotImplementedError(f"{type(self).__name__} cannot produce fresh particles")


@dataclass
class ValidationReport:
    n: int
    stationarity_z: float
    smooth_max_abs_error: float
    augment_max_abs_error: float
    augment_pvalue: float | None = None

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "stationarity_z": self.stationarity_z,
            "smooth_max_abs_error": self.smooth_max_abs_error,
            "augment_max_abs_error": self.augment_max_abs_error,
            "augment_pvalue": self.augment_pvalue,
        }


def validate_model(model: SequentialModel, n: int, rng: np.random.Generator,
                   samples: int = 20000, t: int = 1) -> ValidationReport:
    """Check a model's kernels against brute-force references at dimension ``n``.

    The report holds (a) the z-score of the change in the mean of
    ``sum(x)`` after one move applied to exact samples, (b) the largest
    absolute error of the smooth log-weights and (c) the largest absolute
    error of the augment conditional, estimated from draws.
    """
    from . import oracle  # oracles are kept out of the estimator import graph

    if not 1 <= n <= model.total_dim:
        raise ValueError(f"n must lie in [1, {model.total_dim}]")
    checker = oracle.checker_for(model)
    return checker(model, n, rng, samples=samples, t=t)
