"""Synthetic population generator with known ground truth.

Generation recipe, per example: draw a group from the mixture weights,
a label y from the group's positive rate, then an honest probability h
from the class-conditional Beta family

    h | y=1, g  ~  Beta(k_g r_g + 1, k_g (1-r_g))
    h | y=0, g  ~  Beta(k_g r_g,     k_g (1-r_g) + 1)

(the size-biased split of a Beta(k r, k(1-r)) mixing density, so that
P(y=1 | h) = h exactly).  The emitted model score is the group's inverse
calibration distortion applied to h, so the spec's per-group "true"
calibration parameters map reported scores back to honest probabilities.
An out-of-family variant distorts through a monotone piecewise-linear map
instead, exercising calibration misspecification.

Population ground truth for any metric is a frequency count over the
fully labeled population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, stats

from .calibration import CalibrationParams, calibrate
from .data import Dataset, GroupPair, MetricKind, clamp_scores
from .errors import InvalidSpec
from .frequentist import freq_metric

Knots = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class SyntheticSpec:
    group_names: tuple[str, ...]
    proportions: tuple[float, ...]
    positive_rates: tuple[float, ...]
    concentrations: tuple[float, ...]
    distortions: Optional[tuple[CalibrationParams, ...]] = None
    population: int = 10_000
    seed: int = 0
    family: str = "beta"                       # "beta" | "piecewise"
    piecewise_knots: Optional[tuple[Knots, ...]] = None

    def __post_init__(self):
        G = len(self.group_names)
        if G < 1:
            raise InvalidSpec("need at least one group")
        for name, vals in (("proportions", self.proportions),
                           ("positive_rates", self.positive_rates),
                           ("concentrations", self.concentrations)):
            if len(vals) != G:
                raise InvalidSpec(f"{name} must have one entry per group")
        if abs(sum(self.proportions) - 1.0) > 1e-9:
            raise InvalidSpec("proportions must sum to 1")
        if min(self.proportions) < 0 or max(self.proportions) > 1:
            raise InvalidSpec("proportions must lie in [0, 1]")
        if min(self.positive_rates) < 0 or max(self.positive_rates) > 1:
            raise InvalidSpec("positive rates must lie in [0, 1]")
        if min(self.concentrations) <= 0:
            raise InvalidSpec("concentrations must be positive")
        if self.population < 1:
            raise InvalidSpec("population must be >= 1")
        if self.family == "beta":
            if self.distortions is None or len(self.distortions) != G:
                raise InvalidSpec("beta family needs one distortion per group")
        elif self.family == "piecewise":
            if self.piecewise_knots is None or len(self.piecewise_knots) != G:
                raise InvalidSpec("piecewise family needs knots per group")
            for knots in self.piecewise_knots:
                xs = [k[0] for k in knots]
                ys = [k[1] for k in knots]
                if (xs[0], ys[0]) != (0.0, 0.0) or (xs[-1], ys[-1]) != (1.0, 1.0):
                    raise InvalidSpec("knots must span (0,0) .. (1,1)")
                if any(b <= a for a, b in zip(xs, xs[1:])) or \
                   any(b <= a for a, b in zip(ys, ys[1:])):
                    raise InvalidSpec("knots must be strictly increasing")
        else:
            raise InvalidSpec(f"unknown distortion family {self.family!r}")

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def true_calibration(self, group: int, scores: np.ndarray) -> np.ndarray:
        """The optimal calibration map: reported score -> P(y=1 | score, group)."""
        if self.family == "beta":
            return np.asarray(calibrate(scores, self.distortions[group]))
        xs = np.array([k[0] for k in self.piecewise_knots[group]])
        ys = np.array([k[1] for k in self.piecewise_knots[group]])
        return np.interp(scores, xs, ys)


def invert_calibration(h: np.ndarray, params: CalibrationParams) -> np.ndarray:
    """Solve calibrate(s) = h for s; closed form when a == b, otherwise
    monotone bisection to ~1e-16 relative interval width."""
    h = np.asarray(h, dtype=np.float64)
    target = np.log(h) - np.log1p(-h)  # logit of the honest probability
    if params.a == params.b:
        z = (target - params.c) / params.a
        return 1.0 / (1.0 + np.exp(-z))
    lo = np.full(h.shape, 1e-15)
    hi = np.full(h.shape, 1.0 - 1e-15)
    for _ in range(54):
        mid = 0.5 * (lo + hi)
        g = params.c + params.a * np.log(mid) - params.b * np.log1p(-mid)
        take = g < target
        lo = np.where(take, mid, lo)
        hi = np.where(take, hi, mid)
    return 0.5 * (lo + hi)


def _distort(spec: SyntheticSpec, group: int, honest: np.ndarray) -> np.ndarray:
    """Reported score such that the group's true calibration recovers honest."""
    if spec.family == "beta":
        return invert_calibration(honest, spec.distortions[group])
    xs = np.array([k[0] for k in spec.piecewise_knots[group]])
    ys = np.array([k[1] for k in spec.piecewise_knots[group]])
    return np.interp(honest, ys, xs)


def sample_examples(spec: SyntheticSpec, n: int, rng: np.random.Generator
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(groups, labels, honest probabilities, reported scores) for n draws."""
    G = spec.n_groups
    g = rng.choice(G, size=n, p=np.asarray(spec.proportions))
    rates = np.asarray(spec.positive_rates)[g]
    y = (rng.random(n) < rates).astype(np.int8)
    conc = np.asarray(spec.concentrations)[g]
    A = conc * rates
    B = conc * (1.0 - rates)
    pos = y == 1
    honest = rng.beta(np.where(pos, A + 1.0, A), np.where(pos, B, B + 1.0))
    honest = np.clip(honest, 1e-12, 1.0 - 1e-12)
    reported = np.empty(n)
    for gi in range(G):
        m = g == gi
        if m.any():
            reported[m] = _distort(spec, gi, honest[m])
    return g.astype(np.int64), y, honest, clamp_scores(reported)


def sample_group_scores(spec: SyntheticSpec, group: int, n: int,
                        rng: np.random.Generator
                        ) -> tuple[np.ndarray, np.ndarray]:
    """(honest, reported) score draws conditioned on one group."""
    rate = spec.positive_rates[group]
    conc = spec.concentrations[group]
    y = rng.random(n) < rate
    A, B = conc * rate, conc * (1.0 - rate)
    honest = rng.beta(np.where(y, A + 1.0, A), np.where(y, B, B + 1.0))
    honest = np.clip(honest, 1e-12, 1.0 - 1e-12)
    return honest, clamp_scores(_distort(spec, group, honest))


def generate(spec: SyntheticSpec) -> Dataset:
    """Fully labeled synthetic population for the spec."""
    return generate_with_truth(spec)[0]


def generate_with_truth(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """Population plus each example's honest probability (for bound checks)."""
    rng = np.random.default_rng(spec.seed)
    g, y, honest, reported = sample_examples(spec, spec.population, rng)
    return Dataset(reported, g, y, spec.group_names), honest


def population_truth(population: Dataset, metric: MetricKind,
                     pair: GroupPair) -> float:
    """Ground-truth delta: frequency counts over the full labeled population."""
    est = freq_metric(population, metric, pair)
    if est.delta is None:
        raise InvalidSpec(f"population cannot define {metric.value} for pair")
    return est.delta


def solve_concentration_for_tpr(positive_rate: float, tpr: float) -> float:
    """Concentration k such that P(s >= 0.5 | y=1) equals the target TPR
    under the honest-score family (identity distortion)."""
    if not (0.0 < tpr < 1.0):
        raise InvalidSpec("target TPR must be inside (0, 1)")

    def gap(log_k: float) -> float:
        k = math.exp(log_k)
        return stats.beta.sf(0.5, positive_rate * k + 1.0,
                             (1.0 - positive_rate) * k) - tpr

    return math.exp(optimize.brentq(gap, -14.0, 10.0, xtol=1e-13))


def required_n_spec(seed: int = 0, population: int = 1_000_000) -> SyntheticSpec:
    """Two-group imbalanced-TPR benchmark: a 20% minority with true TPR 0.90
    and an 80% majority with true TPR 0.95, positive rates 0.20 for both,
    honestly calibrated scores.  The interesting pair has delta TPR +0.05
    with the majority as the unprivileged side."""
    identity = CalibrationParams(1.0, 1.0, 0.0)
    return SyntheticSpec(
        group_names=("minority", "majority"),
        proportions=(0.2, 0.8),
        positive_rates=(0.2, 0.2),
        concentrations=(solve_concentration_for_tpr(0.2, 0.90),
                        solve_concentration_for_tpr(0.2, 0.95)),
        distortions=(identity, identity),
        population=population,
        seed=seed,
    )


def required_n_pair() -> GroupPair:
    return GroupPair(unprivileged=1, privileged=0)


def bundled_specs(population: int = 10_000, seed: int = 0
                  ) -> dict[str, SyntheticSpec]:
    """The miscalibrated benchmark suite used by the experiment harness.

    Four in-family specs with distinct over/under-confidence patterns per
    group, plus one spec whose distortion is outside the calibration
    family (piecewise-linear).
    """
    P = CalibrationParams
    specs = {
        "adult_like": SyntheticSpec(
            group_names=("majority", "minority"),
            proportions=(0.86, 0.14),
            positive_rates=(0.25, 0.25),
            concentrations=(2.5, 2.5),
            distortions=(P(0.65, 0.65, 0.1), P(0.5, 0.8, -0.4)),
            population=population, seed=seed + 1),
        "bank_like": SyntheticSpec(
            group_names=("senior", "junior"),
            proportions=(0.45, 0.55),
            positive_rates=(0.11, 0.11),
            concentrations=(3.0, 3.0),
            distortions=(P(0.7, 0.9, 0.3), P(0.55, 0.6, -0.2)),
            population=population, seed=seed + 2),
        "compas_like": SyntheticSpec(
            group_names=("privileged", "protected"),
            proportions=(0.66, 0.34),
            positive_rates=(0.69, 0.69),
            concentrations=(2.0, 2.0),
            distortions=(P(1.8, 1.5, 0.3), P(1.4, 2.0, -0.5)),
            population=population, seed=seed + 3),
        "german_like": SyntheticSpec(
            group_names=("adult", "young"),
            proportions=(0.63, 0.37),
            positive_rates=(0.30, 0.30),
            concentrations=(2.0, 2.0),
            distortions=(P(0.7, 1.45, 0.45), P(0.85, 1.15, -0.25)),
            population=population, seed=seed + 4),
        "piecewise_outfam": SyntheticSpec(
            group_names=("main", "other"),
            proportions=(0.75, 0.25),
            positive_rates=(0.30, 0.30),
            concentrations=(2.5, 2.5),
            family="piecewise",
            piecewise_knots=(
                ((0.0, 0.0), (0.3, 0.4), (0.55, 0.58), (0.8, 0.83), (1.0, 1.0)),
                ((0.0, 0.0), (0.25, 0.19), (0.5, 0.45), (0.75, 0.73), (1.0, 1.0)),
            ),
            population=population, seed=seed + 5),
    }
    return specs
