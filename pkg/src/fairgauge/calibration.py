"""The three-parameter score calibration family, its hierarchical prior,
and the log density the sampler targets.

calibrate(s; a, b, c) = 1 / (1 + exp(-c - a*log(s) + b*log(1-s))) maps a
raw model score to a recalibrated probability of the positive class; it
is the identity at (a, b, c) = (1, 1, 0) and reduces to log-odds-linear
scaling when a = b.  Per-group parameters (log a_g, log b_g, c_g) share
Normal(mu, sigma) population distributions whose location gets a Normal
hyperprior and whose scale gets a half-Normal hyperprior.

The sampler works in transformed coordinates (log a, log b, c, mu's,
log sigma's); the log-sigma change of variables adds + log sigma per
scale parameter relative to `log_joint`, which is stated over natural
sigma as the model contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels
from .data import Dataset

HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)  # E|N(0,1)|

DEFAULT_BASE_SCALES = (0.4, 0.4, 2.0, 0.15, 0.15, 0.75)


@dataclass(frozen=True)
class CalibrationParams:
    """One group's calibration triple; a and b must stay positive."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError(f"a and b must be positive, got ({self.a}, {self.b})")
        if not all(map(math.isfinite, (self.a, self.b, self.c))):
            raise ValueError("calibration parameters must be finite")


IDENTITY_PARAMS = CalibrationParams(1.0, 1.0, 0.0)


@dataclass(frozen=True)
class HyperParams:
    mu_a: float
    mu_b: float
    mu_c: float
    sigma_a: float
    sigma_b: float
    sigma_c: float

    def __post_init__(self):
        if min(self.sigma_a, self.sigma_b, self.sigma_c) <= 0.0:
            raise ValueError("sigmas must be strictly positive")


@dataclass(frozen=True)
class PriorConfig:
    """Hyperprior scales: (mu_a, mu_b, mu_c, sigma_a, sigma_b, sigma_c)
    base scales, each multiplied by the sensitivity factor alpha."""

    family: str = "beta"
    alpha: float = 1.0
    hierarchical: bool = True
    base_scales: tuple[float, float, float, float, float, float] = DEFAULT_BASE_SCALES

    def __post_init__(self):
        if self.family not in ("beta", "llo"):
            raise ValueError(f"family must be 'beta' or 'llo', got {self.family!r}")
        if not (self.alpha > 0.0):
            raise ValueError("alpha must be positive")
        if len(self.base_scales) != 6 or min(self.base_scales) <= 0.0:
            raise ValueError("base_scales must be 6 positive numbers")

    @property
    def ngd(self) -> int:
        """Sampled dimensions per group: (log a, log b, c) or (log a, c)."""
        return 3 if self.family == "beta" else 2

    @property
    def scaled(self) -> tuple[float, ...]:
        return tuple(s * self.alpha for s in self.base_scales)

    def dim_scales(self) -> tuple[np.ndarray, np.ndarray]:
        """(mu scales, sigma scales) for each sampled group dimension."""
        s = self.scaled
        if self.family == "beta":
            return np.array(s[:3]), np.array(s[3:])
        return np.array([s[0], s[2]]), np.array([s[3], s[5]])

    def frozen_hypers(self) -> tuple[np.ndarray, np.ndarray]:
        """Hyperparameters pinned at their prior means (non-hierarchical runs)."""
        mu_s, sg_s = self.dim_scales()
        return np.zeros_like(mu_s), sg_s * HALF_NORMAL_MEAN


# ---------------------------------------------------------------------
# the calibration map
# ---------------------------------------------------------------------

ArrayLike = Union[float, np.ndarray]


def calibrate(s: ArrayLike, params: CalibrationParams) -> ArrayLike:
    """Recalibrated probability of y=1 for score(s) strictly inside (0, 1)."""
    arr = np.asarray(s, dtype=np.float64)
    eta = params.c + params.a * np.log(arr) - params.b * np.log1p(-arr)
    out = _kernels.sigmoid_np(np.atleast_1d(eta))
    return float(out[0]) if np.isscalar(s) or arr.ndim == 0 else out.reshape(arr.shape)


def latent_accuracy(s: ArrayLike, params: CalibrationParams) -> ArrayLike:
    """Calibrated probability that the hard prediction at score s is correct:
    f(s) where yhat=1 (s >= 0.5), else 1 - f(s)."""
    arr = np.asarray(s, dtype=np.float64)
    f = np.atleast_1d(np.asarray(calibrate(arr, params)))
    z = np.where(np.atleast_1d(arr) >= 0.5, f, 1.0 - f)
    return float(z[0]) if np.isscalar(s) or arr.ndim == 0 else z.reshape(arr.shape)


def llo_constrain(params: CalibrationParams) -> CalibrationParams:
    """Project onto the log-odds-linear sub-family by tying b := a."""
    return CalibrationParams(params.a, params.a, params.c)


# ---------------------------------------------------------------------
# state packing and data preparation for the sampler
# ---------------------------------------------------------------------

def prepare_labeled_arrays(labeled: Dataset) -> tuple[np.ndarray, np.ndarray,
                                                      np.ndarray, np.ndarray]:
    """Group-sorted (log s, log(1-s), y, group offsets) arrays.

    goff has length n_groups + 1; group g's rows span goff[g]:goff[g+1].
    Groups with no labeled rows get an empty span.
    """
    mask = labeled.labeled_mask
    scores = labeled.scores[mask]
    groups = labeled.groups[mask]
    y = labeled.labels[mask].astype(np.float64)
    order = np.argsort(groups, kind="stable")
    scores, groups, y = scores[order], groups[order], y[order]
    goff = np.searchsorted(groups, np.arange(labeled.n_groups + 1)).astype(np.int64)
    return np.log(scores), np.log1p(-scores), y, goff


def state_size(G: int, prior: PriorConfig) -> int:
    return G * prior.ngd + (2 * prior.ngd if prior.hierarchical else 0)


def pack_state(params: dict[int, CalibrationParams],
               hyper: Optional[HyperParams],
               prior: PriorConfig, G: int) -> np.ndarray:
    state = np.empty(state_size(G, prior))
    ngd = prior.ngd
    for g in range(G):
        p = params[g]
        state[g * ngd] = math.log(p.a)
        if prior.family == "beta":
            state[g * ngd + 1] = math.log(p.b)
            state[g * ngd + 2] = p.c
        else:
            if p.b != p.a:
                raise ValueError("llo family requires b == a (use llo_constrain)")
            state[g * ngd + 1] = p.c
    if prior.hierarchical:
        if hyper is None:
            raise ValueError("hierarchical state needs HyperParams")
        base = G * ngd
        if prior.family == "beta":
            mus = (hyper.mu_a, hyper.mu_b, hyper.mu_c)
            sgs = (hyper.sigma_a, hyper.sigma_b, hyper.sigma_c)
        else:
            mus = (hyper.mu_a, hyper.mu_c)
            sgs = (hyper.sigma_a, hyper.sigma_c)
        for k, (mu, sg) in enumerate(zip(mus, sgs)):
            state[base + k] = mu
            state[base + ngd + k] = math.log(sg)
    return state


def unpack_state(state: np.ndarray, prior: PriorConfig,
                 G: int) -> tuple[dict[int, CalibrationParams], HyperParams]:
    ngd = prior.ngd
    params = {}
    for g in range(G):
        a = math.exp(state[g * ngd])
        if prior.family == "beta":
            params[g] = CalibrationParams(a, math.exp(state[g * ngd + 1]),
                                          float(state[g * ngd + 2]))
        else:
            params[g] = CalibrationParams(a, a, float(state[g * ngd + 1]))
    if prior.hierarchical:
        base = G * ngd
        if prior.family == "beta":
            hyper = HyperParams(
                mu_a=float(state[base]), mu_b=float(state[base + 1]),
                mu_c=float(state[base + 2]),
                sigma_a=math.exp(state[base + 3]), sigma_b=math.exp(state[base + 4]),
                sigma_c=math.exp(state[base + 5]))
        else:
            hyper = HyperParams(
                mu_a=float(state[base]), mu_b=float(state[base]),
                mu_c=float(state[base + 1]),
                sigma_a=math.exp(state[base + 2]), sigma_b=math.exp(state[base + 2]),
                sigma_c=math.exp(state[base + 3]))
    else:
        mu, sg = prior.frozen_hypers()
        if prior.family == "beta":
            hyper = HyperParams(mu[0], mu[1], mu[2], sg[0], sg[1], sg[2])
        else:
            hyper = HyperParams(mu[0], mu[0], mu[1], sg[0], sg[0], sg[1])
    return params, hyper


def param_names(prior: PriorConfig, group_names: tuple[str, ...]) -> list[str]:
    names = []
    dims = ("log_a", "log_b", "c") if prior.family == "beta" else ("log_a", "c")
    for name in group_names:
        names.extend(f"{d}[{name}]" for d in dims)
    if prior.hierarchical:
        tags = ("a", "b", "c") if prior.family == "beta" else ("a", "c")
        names.extend(f"mu_{t}" for t in tags)
        names.extend(f"log_sigma_{t}" for t in tags)
    return names


# ---------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------

def transformed_logpdf(state: np.ndarray, labeled: Dataset,
                       prior: PriorConfig) -> float:
    """Sampler target: log joint in transformed coordinates, including the
    log-sigma Jacobian for hierarchical runs."""
    L, M, y, goff = prepare_labeled_arrays(labeled)
    mu_s, sg_s = prior.dim_scales()
    fro_mu, fro_sg = prior.frozen_hypers()
    return _kernels.target_logpdf(state, L, M, y, goff, prior.ngd,
                                  1 if prior.hierarchical else 0,
                                  mu_s, sg_s, fro_mu, fro_sg)


def log_joint(labeled: Dataset, params: dict[int, CalibrationParams],
              hyper: Optional[HyperParams] = None,
              prior: PriorConfig = PriorConfig()) -> float:
    """Model log density over natural parameters: Bernoulli likelihood of
    the labels, Normal group-level densities of (log a_g, log b_g, c_g),
    and Normal / half-Normal hyperpriors (hierarchical runs only)."""
    G = labeled.n_groups
    if prior.family == "llo":
        params = {g: llo_constrain(p) for g, p in params.items()}
    state = pack_state(params, hyper, prior, G)
    val = transformed_logpdf(state, labeled, prior)
    if prior.hierarchical:
        ngd = prior.ngd
        val -= float(np.sum(state[G * ngd + ngd:]))  # remove log-sigma Jacobian
    return val


def transformed_grad(state: np.ndarray, labeled: Dataset,
                     prior: PriorConfig) -> np.ndarray:
    """Analytic gradient of transformed_logpdf w.r.t. the state vector."""
    L, M, y, goff = prepare_labeled_arrays(labeled)
    G = labeled.n_groups
    ngd = prior.ngd
    hier = prior.hierarchical
    mu_scale, sg_scale = prior.dim_scales()
    fro_mu, fro_sg = prior.frozen_hypers()
    base = G * ngd
    grad = np.zeros_like(state)

    def hyper_of(k):
        if hier:
            return state[base + k], math.exp(state[base + ngd + k])
        return fro_mu[k], fro_sg[k]

    for g in range(G):
        lo, hi = goff[g], goff[g + 1]
        Lg, Mg, yg = L[lo:hi], M[lo:hi], y[lo:hi]
        a = math.exp(state[g * ngd])
        if prior.family == "beta":
            b, c = math.exp(state[g * ngd + 1]), state[g * ngd + 2]
            eta = c + a * Lg - b * Mg
        else:
            b, c = a, state[g * ngd + 1]
            eta = c + a * (Lg - Mg)
        r = yg - _kernels.sigmoid_np(eta)
        if prior.family == "beta":
            grad[g * ngd] += float(np.sum(r * a * Lg))
            grad[g * ngd + 1] += float(np.sum(-r * b * Mg))
            grad[g * ngd + 2] += float(np.sum(r))
        else:
            grad[g * ngd] += float(np.sum(r * a * (Lg - Mg)))
            grad[g * ngd + 1] += float(np.sum(r))
        for k in range(ngd):
            mu, sg = hyper_of(k)
            x = state[g * ngd + k]
            grad[g * ngd + k] += -(x - mu) / sg**2
            if hier:
                grad[base + k] += (x - mu) / sg**2
                grad[base + ngd + k] += -1.0 + ((x - mu) / sg) ** 2
    if hier:
        for k in range(ngd):
            sg = math.exp(state[base + ngd + k])
            grad[base + k] += -state[base + k] / mu_scale[k] ** 2
            grad[base + ngd + k] += -(sg / sg_scale[k]) ** 2 + 1.0
    return grad
