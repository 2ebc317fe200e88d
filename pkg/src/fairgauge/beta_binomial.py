"""Beta-binomial estimator: conjugate per-group posteriors plus posterior
simulation of the group difference.

Uses flat Beta(1, 1) priors by default.  The posterior over a group metric
is Beta(alpha + successes, beta + failures) with counts taken from the
metric's conditional event; a zero-count event leaves the prior unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, GroupPair, MetricKind
from .errors import InvalidPrior
from .frequentist import event_counts

DEFAULT_T = 800  # matches the calibration sampler's pooled draw count


@dataclass(frozen=True)
class BetaPosterior:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise InvalidPrior(f"Beta({self.alpha}, {self.beta}) is improper")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.beta(self.alpha, self.beta, size=size)


@dataclass(frozen=True)
class PosteriorSamples:
    """T aligned draws of per-group metric values and their difference."""

    theta: dict[int, np.ndarray]
    delta: np.ndarray
    T: int
    pair: GroupPair
    skipped: int = 0
    flagged: bool = False

    def __post_init__(self):
        for arr in self.theta.values():
            if arr.shape != (self.T,):
                raise ValueError("theta draw lists must all have length T")
        if self.delta.shape != (self.T,):
            raise ValueError("delta must have length T")


def bb_posterior(labeled: Dataset, metric: MetricKind, group: int,
                 prior: tuple[float, float] = (1.0, 1.0)) -> BetaPosterior:
    """Conjugate update of a Beta prior with the group's event counts."""
    a0, b0 = prior
    if not (a0 > 0 and b0 > 0):
        raise InvalidPrior(f"prior ({a0}, {b0}) must be positive")
    num, den = event_counts(labeled, metric, group)
    return BetaPosterior(a0 + num, b0 + (den - num))


def bb_delta_samples(labeled: Dataset, metric: MetricKind, pair: GroupPair,
                     T: int = DEFAULT_T, seed=0,
                     prior: tuple[float, float] = (1.0, 1.0)) -> PosteriorSamples:
    """Posterior simulation of delta: independent theta draws per group."""
    if T < 1:
        raise ValueError("T must be >= 1")
    pair.validate(labeled)
    rng = np.random.default_rng(seed)
    theta = {}
    for g in (pair.unprivileged, pair.privileged):
        theta[g] = bb_posterior(labeled, metric, g, prior).sample(T, rng)
    delta = theta[pair.unprivileged] - theta[pair.privileged]
    return PosteriorSamples(theta=theta, delta=delta, T=T, pair=pair)
