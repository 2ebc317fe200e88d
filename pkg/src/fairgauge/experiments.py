"""Repeated-subsampling experiments: estimation error, interval coverage,
required sample size, prior sensitivity, and the hierarchy ablation.

Every experiment derives per-run randomness from (seed, run index), so
runs are independent, reproducible, and shared across methods: two
experiments with the same seed see identical labeled splits regardless of
which estimators they evaluate.  Population ground truth is the frequency
value over the full synthetic population.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .bc import bc_delta_samples, summarize_samples
from .beta_binomial import DEFAULT_T, bb_delta_samples
from .calibration import PriorConfig
from .data import Dataset, GroupPair, MetricKind, split_labeled
from .frequentist import freq_metric
from .mcmc import CalibrationPosterior, SamplerConfig, sample_posterior
from .simulate import (SyntheticSpec, generate_with_truth, population_truth,
                       sample_examples, sample_group_scores)

BAYES_METHODS = ("bb", "bc", "nhbc", "llo")


def _run_seeds(seed: int, run: int) -> tuple[int, int, int]:
    """(split seed, bb seed, sampler seed) for one run."""
    s = np.random.SeedSequence([int(seed), int(run)]).generate_state(3)
    return int(s[0]), int(s[1]), int(s[2])


def _method_prior(method: str, prior: PriorConfig) -> PriorConfig:
    if method == "bc":
        return prior
    if method == "nhbc":
        return PriorConfig(family=prior.family, alpha=prior.alpha,
                           hierarchical=False, base_scales=prior.base_scales)
    if method == "llo":
        return PriorConfig(family="llo", alpha=prior.alpha,
                           hierarchical=prior.hierarchical,
                           base_scales=prior.base_scales)
    raise ValueError(method)


@dataclass(frozen=True)
class ExperimentResult:
    metric: str
    pair: tuple[str, str]
    n_L: int
    runs: int
    truth: float
    mae: dict[str, Optional[float]]
    stderr: dict[str, Optional[float]]
    estimates: dict[str, tuple]
    coverage: Optional[dict[str, float]] = None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "pair": {"unprivileged": self.pair[0], "privileged": self.pair[1]},
            "n_L": self.n_L,
            "runs": self.runs,
            "truth": self.truth,
            "mae": self.mae,
            "stderr": self.stderr,
            "coverage": self.coverage,
            "estimates": {m: list(v) for m, v in self.estimates.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def mae_experiment(population: Dataset, metric: MetricKind, pair: GroupPair,
                   n_L: int, runs: int = 100,
                   methods: Sequence[str] = ("freq", "bb", "bc"),
                   seed: int = 0, T: int = DEFAULT_T,
                   prior: PriorConfig = PriorConfig(),
                   sampler: Optional[SamplerConfig] = None) -> ExperimentResult:
    """Mean absolute error of each method's point estimate against the
    population truth, over `runs` random labeled subsets of size n_L.

    Point estimates are posterior means for the Bayesian methods.  A
    method's MAE is absent if any run's estimate was non-estimable (the
    frequentist case with empty conditioning events).  95% CI coverage is
    recorded for the posterior methods.
    """
    truth = population_truth(population, metric, pair)
    ests: dict[str, list] = {m: [] for m in methods}
    covered: dict[str, list] = {m: [] for m in methods if m in BAYES_METHODS}
    for r in range(runs):
        split_seed, bb_seed, mcmc_seed = _run_seeds(seed, r)
        labeled, unlabeled = split_labeled(population, n_L, split_seed)
        for m in methods:
            if m == "freq":
                ests[m].append(freq_metric(labeled, metric, pair).delta)
                continue
            if m == "bb":
                samples = bb_delta_samples(labeled, metric, pair, T=T,
                                           seed=bb_seed)
            else:
                cfg = sampler if sampler is not None else SamplerConfig()
                cfg = SamplerConfig(chains=cfg.chains, burn_in=cfg.burn_in,
                                    samples_per_chain=cfg.samples_per_chain,
                                    seed=mcmc_seed,
                                    target_accept=cfg.target_accept,
                                    adapt_window=cfg.adapt_window,
                                    prior_refresh=cfg.prior_refresh)
                posterior = sample_posterior(labeled, _method_prior(m, prior), cfg)
                samples = bc_delta_samples(labeled, unlabeled, posterior,
                                           metric, pair)
            ests[m].append(float(samples.delta.mean()))
            lo, hi = np.quantile(samples.delta, (0.025, 0.975))
            covered[m].append(bool(lo <= truth <= hi))
    mae: dict[str, Optional[float]] = {}
    stderr: dict[str, Optional[float]] = {}
    for m in methods:
        vals = ests[m]
        if any(v is None for v in vals):
            mae[m] = stderr[m] = None
        else:
            errs = np.abs(np.asarray(vals, dtype=np.float64) - truth)
            mae[m] = float(errs.mean())
            stderr[m] = float(errs.std(ddof=1) / np.sqrt(runs)) if runs > 1 else 0.0
    coverage = {m: float(np.mean(v)) for m, v in covered.items()} or None
    return ExperimentResult(metric=metric.value,
                            pair=(population.group_names[pair.unprivileged],
                                  population.group_names[pair.privileged]),
                            n_L=n_L, runs=runs, truth=truth, mae=mae,
                            stderr=stderr,
                            estimates={m: tuple(v) for m, v in ests.items()},
                            coverage=coverage)


def coverage_experiment(population: Dataset, metric: MetricKind,
                        pair: GroupPair, n_L: int, runs: int = 1000,
                        methods: Sequence[str] = ("bb", "bc"), seed: int = 0,
                        T: int = DEFAULT_T, prior: PriorConfig = PriorConfig(),
                        sampler: Optional[SamplerConfig] = None
                        ) -> ExperimentResult:
    """Fraction of runs whose 95% credible interval contains the truth."""
    methods = tuple(m for m in methods if m in BAYES_METHODS)
    return mae_experiment(population, metric, pair, n_L, runs=runs,
                          methods=methods, seed=seed, T=T, prior=prior,
                          sampler=sampler)


# ---------------------------------------------------------------------
# required sample size for the frequentist estimator
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class RequiredNResult:
    hits: dict[int, float]
    required_n: Optional[int]
    interval: tuple[float, float]
    confidence: float
    sims: int

    def to_dict(self) -> dict:
        return {"hits": {str(k): v for k, v in self.hits.items()},
                "required_n": self.required_n,
                "interval": list(self.interval),
                "confidence": self.confidence,
                "sims": self.sims}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def required_n_experiment(spec: SyntheticSpec, pair: GroupPair,
                          target_interval: tuple[float, float] = (0.04, 0.06),
                          confidence: float = 0.95, sims: int = 1000,
                          n_grid: Sequence[int] = (12000, 24000, 48000, 96000),
                          seed: int = 0) -> RequiredNResult:
    """Hit fraction of frequentist delta-TPR estimates inside the target
    interval, as a function of the labeled sample size.

    Each simulation draws a fresh labeled sample of size n from the
    generative spec; estimates that do not exist (a group without
    positives) count as misses.  Reports the smallest grid size whose hit
    fraction reaches the confidence level.
    """
    lo, hi = target_interval
    hits: dict[int, float] = {}
    for n in n_grid:
        inside = 0
        for s in range(sims):
            rng = np.random.default_rng(np.random.SeedSequence([seed, n, s]))
            g, y, _, reported = sample_examples(spec, n, rng)
            pred = reported >= 0.5
            d = _freq_tpr_delta(g, y, pred, pair)
            if d is not None and lo <= d <= hi:
                inside += 1
        hits[n] = inside / sims
    required = None
    for n in sorted(hits):
        if hits[n] >= confidence:
            required = n
            break
    return RequiredNResult(hits=hits, required_n=required,
                           interval=(lo, hi), confidence=confidence, sims=sims)


def _freq_tpr_delta(g, y, pred, pair: GroupPair) -> Optional[float]:
    vals = {}
    for side in (pair.unprivileged, pair.privileged):
        m = (g == side) & (y == 1)
        den = int(m.sum())
        if den == 0:
            return None
        vals[side] = float((pred & m).sum()) / den
    return vals[pair.unprivileged] - vals[pair.privileged]


# ---------------------------------------------------------------------
# prior sensitivity and the hierarchy ablation
# ---------------------------------------------------------------------

def sensitivity_sweep(population: Dataset, metric: MetricKind, pair: GroupPair,
                      n_L: int, alphas: Sequence[float] = (0.1, 0.5, 1.0, 2.0, 10.0),
                      runs: int = 100, seed: int = 0,
                      prior: PriorConfig = PriorConfig(),
                      sampler: Optional[SamplerConfig] = None
                      ) -> dict[float, float]:
    """Calibration-method MAE as the hyperprior scales are multiplied by
    alpha; the labeled splits and chain seeds are shared across entries."""
    out = {}
    for alpha in alphas:
        p = PriorConfig(family=prior.family, alpha=alpha,
                        hierarchical=prior.hierarchical,
                        base_scales=prior.base_scales)
        res = mae_experiment(population, metric, pair, n_L, runs=runs,
                             methods=("bc",), seed=seed, prior=p,
                             sampler=sampler)
        out[float(alpha)] = res.mae["bc"]
    return out


def ablation_nhbc(population: Dataset, metric: MetricKind, pair: GroupPair,
                  n_L: int, runs: int = 100, seed: int = 0,
                  prior: PriorConfig = PriorConfig(),
                  sampler: Optional[SamplerConfig] = None) -> ExperimentResult:
    """Side-by-side MAE of the flat-posterior, non-hierarchical, and
    hierarchical estimators on identical splits."""
    return mae_experiment(population, metric, pair, n_L, runs=runs,
                          methods=("bb", "nhbc", "bc"), seed=seed,
                          prior=prior, sampler=sampler)


# ---------------------------------------------------------------------
# empirical check of the calibration-error bound on the delta bias
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class LemmaBoundResult:
    lhs: float                 # |posterior-mean delta - population truth|
    l1: tuple[float, float]    # L1 calibration error bound terms (unpriv, priv)
    mc_stderr: float
    holds: bool

    @property
    def rhs(self) -> float:
        return self.l1[0] + self.l1[1] + 4.0 * self.mc_stderr


def posterior_mean_calibration(posterior: CalibrationPosterior, group: int,
                               scores: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Pointwise posterior-mean calibration curve over the given scores."""
    a, b, c = posterior.params_arrays(group)
    L = np.log(scores)
    M = np.log1p(-scores)
    acc = np.zeros(scores.size)
    for t0 in range(0, a.size, chunk):
        t1 = min(t0 + chunk, a.size)
        eta = (c[t0:t1, None] + a[t0:t1, None] * L[None, :]
               - b[t0:t1, None] * M[None, :])
        acc += _kernels.sigmoid_np(eta).sum(axis=0)
    return acc / a.size


def lemma_bound_check(spec: SyntheticSpec, pair: GroupPair, n_L: int = 40,
                      seed: int = 0, mc_size: int = 100_000,
                      prior: PriorConfig = PriorConfig(),
                      sampler: Optional[SamplerConfig] = None
                      ) -> LemmaBoundResult:
    """Verify that the absolute bias of the posterior-mean accuracy delta
    is within the summed L1 calibration errors of the posterior-mean
    curves, plus four combined Monte Carlo standard errors.

    Requires an in-family spec so the optimal calibration map is known
    exactly.  Error sources combined in quadrature: the finite posterior
    sample (between-chain variation of the delta mean), the two L1
    integrals (fresh score draws from the known per-group score law), and
    the binomial noise in the population labels that define the truth.
    """
    population, honest = generate_with_truth(spec)
    metric = MetricKind.ACCURACY
    truth = population_truth(population, metric, pair)
    split_seed, _, mcmc_seed = _run_seeds(seed, 0)
    labeled, unlabeled = split_labeled(population, n_L, split_seed)
    cfg = sampler if sampler is not None else SamplerConfig()
    cfg = SamplerConfig(chains=cfg.chains, burn_in=cfg.burn_in,
                        samples_per_chain=cfg.samples_per_chain, seed=mcmc_seed,
                        target_accept=cfg.target_accept,
                        adapt_window=cfg.adapt_window,
                        prior_refresh=cfg.prior_refresh)
    posterior = sample_posterior(labeled, prior, cfg)
    samples = bc_delta_samples(labeled, unlabeled, posterior, metric, pair)
    delta_mean = float(samples.delta.mean())
    lhs = abs(delta_mean - truth)

    # between-chain standard error of the posterior-mean delta; accounts
    # for within-chain autocorrelation
    chain_means = []
    for c in range(cfg.chains):
        sel = posterior.chain_index == c
        chain_means.append(float(samples.delta[sel].mean()))
    se_mean = float(np.std(chain_means, ddof=1) / np.sqrt(cfg.chains))

    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    l1 = []
    se_l1sq = 0.0
    for side in (pair.unprivileged, pair.privileged):
        h_mc, s_mc = sample_group_scores(spec, side, mc_size, rng)
        fbar = posterior_mean_calibration(posterior, side, s_mc)
        gaps = np.abs(fbar - spec.true_calibration(side, s_mc))
        l1.append(float(gaps.mean()))
        se_l1sq += float(gaps.var(ddof=1) / mc_size)

    # binomial noise in the population's realized labels
    se_popsq = 0.0
    pred = population.scores >= 0.5
    zstar = np.where(pred, honest, 1.0 - honest)
    for side in (pair.unprivileged, pair.privileged):
        m = population.groups == side
        n_g = int(m.sum())
        se_popsq += float(np.sum(zstar[m] * (1.0 - zstar[m]))) / n_g**2

    mc_stderr = float(np.sqrt(se_mean**2 + se_l1sq + se_popsq))
    rhs = l1[0] + l1[1] + 4.0 * mc_stderr
    return LemmaBoundResult(lhs=lhs, l1=(l1[0], l1[1]), mc_stderr=mc_stderr,
                            holds=lhs <= rhs)


# ---------------------------------------------------------------------
# result serialization helpers (CSV and plot-ready long format)
# ---------------------------------------------------------------------

def result_csv(result: ExperimentResult) -> str:
    lines = ["metric,unprivileged,privileged,n_L,runs,truth,method,mae,stderr,coverage"]
    for m in result.mae:
        cov = "" if not result.coverage or m not in result.coverage \
            else repr(result.coverage[m])
        mae = "" if result.mae[m] is None else repr(result.mae[m])
        se = "" if result.stderr[m] is None else repr(result.stderr[m])
        lines.append(f"{result.metric},{result.pair[0]},{result.pair[1]},"
                     f"{result.n_L},{result.runs},{result.truth!r},{m},{mae},{se},{cov}")
    return "\n".join(lines) + "\n"


def plot_rows(results: Sequence[ExperimentResult]) -> str:
    """Long-format CSV (n_L, method, mae, stderr) for external plotting."""
    lines = ["n_L,method,mae,stderr"]
    for res in results:
        for m in res.mae:
            if res.mae[m] is None:
                continue
            lines.append(f"{res.n_L},{m},{res.mae[m]!r},{res.stderr[m]!r}")
    return "\n".join(lines) + "\n"
