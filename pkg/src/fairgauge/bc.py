"""Calibration-based estimator: combine labeled outcomes with calibrated
unlabeled scores, per posterior draw, into group metric draws and reports.

For each posterior draw t and group g:

    accuracy:  theta = (sum_lab I(yhat=y) + sum_unlab z_j) / (n_L,g + n_U,g)
    TPR:       (sum_lab I(yhat=1,y=1) + sum_unlab I(yhat=1) p_j)
               / (sum_lab I(y=1) + sum_unlab p_j)
    FPR:       same with 1-p_j weights and y=0 counts

where p_j = calibrate(s_j) under the draw's group parameters and
z_j = p_j if s_j >= 0.5 else 1－p_j is the latent correctness probability.
With no unlabeled data every draw reduces exactly to the frequentist
estimate.  Draws whose conditional denominator falls below 1e-9 are
skipped and counted; if more than 10% are skipped the result is flagged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .beta_binomial import DEFAULT_T, PosteriorSamples, bb_delta_samples
from .calibration import (CalibrationParams, HyperParams, PriorConfig,
                          calibrate, latent_accuracy)
from .data import Dataset, GroupPair, MetricKind
from .errors import DegenerateDenominator, EmptyGroup
from .frequentist import event_counts, freq_metric, predictions
from .mcmc import CalibrationPosterior, SamplerConfig, sample_posterior

DENOM_EPS = 1e-9
SKIP_FLAG_FRACTION = 0.10
DEFAULT_EPSILON = 0.02

Draw = tuple[dict[int, CalibrationParams], HyperParams]


def method_prior(method: str, prior: PriorConfig) -> PriorConfig:
    """PriorConfig variant for a calibration method name (bc/nhbc/llo)."""
    if method == "bc":
        return prior
    if method == "nhbc":
        return PriorConfig(family=prior.family, alpha=prior.alpha,
                           hierarchical=False, base_scales=prior.base_scales)
    if method == "llo":
        return PriorConfig(family="llo", alpha=prior.alpha,
                           hierarchical=prior.hierarchical,
                           base_scales=prior.base_scales)
    raise ValueError(f"unknown calibration method {method!r}")


def _group_arrays(view: Dataset, group: int):
    mask = view.groups == group
    s = view.scores[mask]
    return np.log(s), np.log1p(-s), predictions(s)


def bc_theta_accuracy(labeled: Dataset, unlabeled: Dataset, draw: Draw,
                      group: int) -> float:
    """Single-draw group accuracy from labeled outcomes plus latent
    correctness of the unlabeled scores."""
    params = draw[0][group]
    correct, n_lab = event_counts(labeled, MetricKind.ACCURACY, group)
    s_unlab = unlabeled.scores[unlabeled.groups == group]
    n_tot = n_lab + s_unlab.size
    if n_tot == 0:
        raise EmptyGroup(f"group {group} has no examples")
    z_sum = float(np.sum(latent_accuracy(s_unlab, params))) if s_unlab.size else 0.0
    return (correct + z_sum) / n_tot


def bc_theta_conditional(labeled: Dataset, unlabeled: Dataset, draw: Draw,
                         group: int, metric: MetricKind) -> float:
    """Single-draw TPR or FPR with unlabeled class counts filled in by the
    draw's calibrated positive-class probabilities."""
    if metric not in (MetricKind.TPR, MetricKind.FPR):
        raise ValueError("conditional metrics are TPR and FPR")
    params = draw[0][group]
    num_lab, den_lab = event_counts(labeled, metric, group)
    s_unlab = unlabeled.scores[unlabeled.groups == group]
    if s_unlab.size:
        p = np.asarray(calibrate(s_unlab, params))
        w = p if metric is MetricKind.TPR else 1.0 - p
        pred = predictions(s_unlab)
        num = num_lab + float(np.sum(w[pred]))
        den = den_lab + float(np.sum(w))
    else:
        num, den = float(num_lab), float(den_lab)
    if den < DENOM_EPS:
        raise DegenerateDenominator(
            f"group {group} {metric.value} denominator {den} below {DENOM_EPS}")
    return num / den


def _theta_draws(labeled: Dataset, unlabeled: Dataset,
                 posterior: CalibrationPosterior, metric: MetricKind,
                 group: int) -> tuple[np.ndarray, np.ndarray]:
    """(theta draws, validity mask) for one group across all T draws."""
    a, b, c = posterior.params_arrays(group)
    L, M, pred = _group_arrays(unlabeled, group)
    if metric is MetricKind.ACCURACY:
        correct, n_lab = event_counts(labeled, metric, group)
        n_tot = n_lab + L.size
        if n_tot == 0:
            raise EmptyGroup(f"group {group} has no examples")
        theta = _kernels.theta_accuracy_draws(a, b, c, L, M, pred,
                                              float(correct), float(n_tot))
        return theta, np.ones(theta.size, dtype=bool)
    num_lab, den_lab = event_counts(labeled, metric, group)
    num_u, den_u = _kernels.conditional_sums_draws(
        a, b, c, L, M, pred, metric is MetricKind.TPR)
    num = num_lab + num_u
    den = den_lab + den_u
    valid = den >= DENOM_EPS
    theta = np.full(num.size, np.nan)
    np.divide(num, den, out=theta, where=valid)
    return theta, valid


def bc_delta_samples(labeled: Dataset, unlabeled: Dataset,
                     posterior: CalibrationPosterior, metric: MetricKind,
                     pair: GroupPair) -> PosteriorSamples:
    """Per-draw group thetas and their difference across the posterior."""
    pair.validate(labeled)
    t_u, ok_u = _theta_draws(labeled, unlabeled, posterior, metric,
                             pair.unprivileged)
    t_p, ok_p = _theta_draws(labeled, unlabeled, posterior, metric,
                             pair.privileged)
    keep = ok_u & ok_p
    skipped = int((~keep).sum())
    if keep.sum() == 0:
        raise DegenerateDenominator(
            f"all {keep.size} draws had denominators below {DENOM_EPS}")
    theta = {pair.unprivileged: t_u[keep], pair.privileged: t_p[keep]}
    delta = theta[pair.unprivileged] - theta[pair.privileged]
    return PosteriorSamples(theta=theta, delta=delta, T=int(keep.sum()),
                            pair=pair, skipped=skipped,
                            flagged=skipped > SKIP_FLAG_FRACTION * keep.size)


# ---------------------------------------------------------------------
# assessment reports
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class AssessmentReport:
    metric: str
    pair: tuple[str, str]          # (unprivileged, privileged) group names
    method: str                    # freq | bb | bc
    point_estimate: Optional[float]
    ci_95: Optional[tuple[float, float]]
    p_delta_positive: Optional[float]
    p_practically_fair: Optional[float]
    epsilon: float
    T: int
    n_L: int
    n_U: int
    skipped_draws: int = 0
    flagged: bool = False

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "pair": {"unprivileged": self.pair[0], "privileged": self.pair[1]},
            "method": self.method,
            "point_estimate": self.point_estimate,
            "ci_95": list(self.ci_95) if self.ci_95 is not None else None,
            "p_delta_positive": self.p_delta_positive,
            "p_practically_fair": self.p_practically_fair,
            "epsilon": self.epsilon,
            "T": self.T,
            "n_L": self.n_L,
            "n_U": self.n_U,
            "skipped_draws": self.skipped_draws,
            "flagged": self.flagged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    CSV_HEADER = ("metric,unprivileged,privileged,method,point_estimate,"
                  "ci_low,ci_high,p_delta_positive,p_practically_fair,"
                  "epsilon,T,n_L,n_U,skipped_draws,flagged")

    def to_csv_row(self) -> str:
        def fmt(v):
            return "" if v is None else repr(v) if isinstance(v, float) else str(v)
        lo, hi = self.ci_95 if self.ci_95 is not None else (None, None)
        cells = [self.metric, self.pair[0], self.pair[1], self.method,
                 fmt(self.point_estimate), fmt(lo), fmt(hi),
                 fmt(self.p_delta_positive), fmt(self.p_practically_fair),
                 fmt(self.epsilon), str(self.T), str(self.n_L), str(self.n_U),
                 str(self.skipped_draws), str(int(self.flagged))]
        return ",".join(cells)


def summarize_samples(samples: PosteriorSamples, epsilon: float) -> dict:
    d = samples.delta
    lo, hi = np.quantile(d, (0.025, 0.975))
    return {
        "point_estimate": float(d.mean()),
        "ci_95": (float(lo), float(hi)),
        "p_delta_positive": float((d > 0).mean()),
        "p_practically_fair": float((np.abs(d) < epsilon).mean()),
    }


def assess(dataset: Dataset, metric: MetricKind, pair: GroupPair,
           method: str = "bc", epsilon: float = DEFAULT_EPSILON,
           T: int = DEFAULT_T, seed=0,
           prior: PriorConfig = PriorConfig(),
           sampler: SamplerConfig = None,
           bb_prior: tuple[float, float] = (1.0, 1.0),
           posterior: CalibrationPosterior = None) -> AssessmentReport:
    """Produce the standard report for one metric/pair under one method.

    Credible intervals are equal-tailed 2.5%/97.5% sample quantiles;
    p_delta_positive is the fraction of draws above zero and
    p_practically_fair the fraction with |delta| < epsilon.
    """
    pair.validate(dataset)
    labeled = dataset.labeled_view()
    names = (dataset.group_names[pair.unprivileged],
             dataset.group_names[pair.privileged])
    common = dict(metric=metric.value, pair=names, epsilon=epsilon,
                  n_L=dataset.n_labeled, n_U=dataset.n_unlabeled)
    if method == "freq":
        est = freq_metric(labeled, metric, pair)
        return AssessmentReport(method="freq", point_estimate=est.delta,
                                ci_95=None, p_delta_positive=None,
                                p_practically_fair=None, T=0, **common)
    if method == "bb":
        samples = bb_delta_samples(labeled, metric, pair, T=T, seed=seed,
                                   prior=bb_prior)
        return AssessmentReport(method="bb", T=samples.T,
                                **summarize_samples(samples, epsilon), **common)
    if method in ("bc", "nhbc", "llo"):
        if method == "nhbc":
            prior = PriorConfig(family=prior.family, alpha=prior.alpha,
                                hierarchical=False, base_scales=prior.base_scales)
        elif method == "llo":
            prior = PriorConfig(family="llo", alpha=prior.alpha,
                                hierarchical=prior.hierarchical,
                                base_scales=prior.base_scales)
        if posterior is None:
            if sampler is None:
                sampler = SamplerConfig(seed=seed)
            posterior = sample_posterior(labeled, prior, sampler)
        samples = bc_delta_samples(labeled, dataset.unlabeled_view(),
                                   posterior, metric, pair)
        return AssessmentReport(method=method, T=samples.T,
                                skipped_draws=samples.skipped,
                                flagged=samples.flagged,
                                **summarize_samples(samples, epsilon), **common)
    raise ValueError(f"unknown method {method!r}")
