"""Multi-chain adaptive MCMC over the hierarchical calibration posterior.

Each chain composes adaptive random-walk Metropolis-within-Gibbs block
updates (per-group triples, then per-hyperparameter pairs) with
independence refresh proposals drawn from the prior (see _kernels for the
move-by-move description).  Proposal covariances adapt toward the target
acceptance rate during burn-in only and are frozen for the collection
phase, so collected draws come from a fixed, valid kernel.

Chains use independent RNG streams spawned from the master seed, with all
randomness pre-generated, so results are reproducible and independent of
chain scheduling order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .calibration import (CalibrationParams, HyperParams, PriorConfig,
                          param_names, prepare_labeled_arrays, unpack_state)
from .data import Dataset
from .errors import DivergedChain, NonFiniteDensity, TooFewChains

MIN_RW_ACCEPT_RATE = 0.01


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    burn_in: int = 1500
    samples_per_chain: int = 200
    seed: int = 0
    target_accept: float = 0.3
    adapt_window: int = 50
    prior_refresh: bool = True  # include independence refresh proposals

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.samples_per_chain < 1:
            raise ValueError("samples_per_chain must be >= 1")
        if not (0.0 < self.target_accept < 1.0):
            raise ValueError("target_accept must be in (0, 1)")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")

    @property
    def total_draws(self) -> int:
        return self.chains * self.samples_per_chain


@dataclass(frozen=True)
class CalibrationPosterior:
    """Pooled post-burn-in draws in transformed coordinates plus diagnostics."""

    draws: np.ndarray           # (T, n_params)
    chain_index: np.ndarray     # (T,)
    names: tuple[str, ...]
    group_names: tuple[str, ...]
    prior: PriorConfig
    config: SamplerConfig
    diagnostics: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.draws.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def params_arrays(self, group: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Natural-space (a, b, c) draw arrays for one group."""
        ngd = self.prior.ngd
        a = np.exp(self.draws[:, group * ngd])
        if self.prior.family == "beta":
            return a, np.exp(self.draws[:, group * ngd + 1]), self.draws[:, group * ngd + 2].copy()
        return a, a.copy(), self.draws[:, group * ngd + 1].copy()

    def draw(self, t: int) -> tuple[dict[int, CalibrationParams], HyperParams]:
        return unpack_state(self.draws[t], self.prior, self.n_groups)

    def chain_draws(self, c: int) -> np.ndarray:
        return self.draws[self.chain_index == c]


def _block_names(G: int, prior: PriorConfig,
                 group_names: tuple[str, ...]) -> list[str]:
    names = [f"group[{group_names[g]}]" for g in range(G)]
    if prior.hierarchical:
        tags = ("a", "b", "c") if prior.family == "beta" else ("a", "c")
        names.extend(f"hyper[{t}]" for t in tags)
    return names


def _init_state(rng: np.random.Generator, G: int, prior: PriorConfig,
                mu_s: np.ndarray, sg_s: np.ndarray,
                fro_mu: np.ndarray, fro_sg: np.ndarray) -> np.ndarray:
    """Ancestral draw from the prior, in transformed coordinates."""
    ngd = prior.ngd
    n = G * ngd + (2 * ngd if prior.hierarchical else 0)
    state = np.empty(n)
    if prior.hierarchical:
        mus = mu_s * rng.standard_normal(ngd)
        sgs = np.abs(sg_s * rng.standard_normal(ngd))
        sgs = np.maximum(sgs, 1e-300)
        state[G * ngd:G * ngd + ngd] = mus
        state[G * ngd + ngd:] = np.log(sgs)
    else:
        mus, sgs = fro_mu, fro_sg
    for g in range(G):
        state[g * ngd:(g + 1) * ngd] = mus + sgs * rng.standard_normal(ngd)
    return state


def sample_posterior(labeled: Dataset, prior: PriorConfig = PriorConfig(),
                     config: SamplerConfig = SamplerConfig(),
                     allow_empty: bool = False) -> CalibrationPosterior:
    """Run the multi-chain sampler and pool post-burn-in draws.

    `labeled` must contain at least one labeled example unless a
    prior-only run is explicitly requested with allow_empty=True.
    """
    if labeled.n_labeled == 0 and not allow_empty:
        raise ValueError("labeled view is empty; pass allow_empty=True for a "
                         "prior-only run")
    G = labeled.n_groups
    ngd = prior.ngd
    hier = 1 if prior.hierarchical else 0
    L, M, y, goff = prepare_labeled_arrays(labeled)
    mu_s, sg_s = prior.dim_scales()
    fro_mu, fro_sg = prior.frozen_hypers()

    n_group = G * ngd
    n_params = n_group + (2 * ngd if hier else 0)
    n_blocks = G + (ngd if hier else 0)
    n_norm = n_params + 2 * n_group + (4 * ngd if hier else 0)
    n_unif = 1 + 2 * G + (2 * ngd if hier else 0)
    iters = config.burn_in + config.samples_per_chain

    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    all_draws = np.empty((config.total_draws, n_params))
    chain_index = np.empty(config.total_draws, dtype=np.int64)
    rw_rates = np.empty((config.chains, n_blocks))
    ind_rates = np.empty((config.chains, n_blocks))
    aux_rates = np.empty((config.chains, 3))

    for c in range(config.chains):
        rng = np.random.default_rng(seeds[c])
        init = _init_state(rng, G, prior, mu_s, sg_s, fro_mu, fro_sg)
        normals = rng.standard_normal((iters, n_norm))
        uniforms = rng.random((iters, n_unif))
        draws = np.empty((config.samples_per_chain, n_params))
        rw_accept = np.zeros(n_blocks, dtype=np.int64)
        rw_prop = np.zeros(n_blocks, dtype=np.int64)
        ind_accept = np.zeros(n_blocks, dtype=np.int64)
        ind_prop = np.zeros(n_blocks, dtype=np.int64)
        aux_accept = np.zeros(3, dtype=np.int64)
        aux_prop = np.zeros(3, dtype=np.int64)
        status = _kernels.run_chain(
            L, M, y, goff, ngd, hier, mu_s, sg_s, fro_mu, fro_sg,
            config.burn_in, config.samples_per_chain,
            config.target_accept, config.adapt_window,
            1 if config.prior_refresh else 0,
            init, normals, uniforms,
            draws, rw_accept, rw_prop, ind_accept, ind_prop,
            aux_accept, aux_prop)
        if status != 0:
            raise NonFiniteDensity(f"chain {c}: log density evaluated to NaN")
        lo = c * config.samples_per_chain
        all_draws[lo:lo + config.samples_per_chain] = draws
        chain_index[lo:lo + config.samples_per_chain] = c
        rw_rates[c] = rw_accept / np.maximum(rw_prop, 1)
        ind_rates[c] = ind_accept / np.maximum(ind_prop, 1)
        aux_rates[c] = aux_accept / np.maximum(aux_prop, 1)

    blocks = _block_names(G, prior, labeled.group_names)
    for c in range(config.chains):
        for b, bname in enumerate(blocks):
            # a block counts as stuck only if neither its adapted walk nor
            # its prior-refresh proposals move
            if rw_rates[c, b] < MIN_RW_ACCEPT_RATE and \
                    ind_rates[c, b] < MIN_RW_ACCEPT_RATE:
                raise DivergedChain(
                    f"chain {c} block {bname}: post-adaptation acceptance "
                    f"rate {rw_rates[c, b]:.4f} < {MIN_RW_ACCEPT_RATE}")

    posterior = CalibrationPosterior(
        draws=all_draws, chain_index=chain_index,
        names=tuple(param_names(prior, labeled.group_names)),
        group_names=labeled.group_names, prior=prior, config=config)
    diagnostics = {
        "rhat": gelman_rubin(posterior) if config.samples_per_chain >= 4 else {},
        "rw_accept_rates": {b: float(rw_rates[:, i].mean())
                            for i, b in enumerate(blocks)},
        "refresh_accept_rates": {
            "global": float(aux_rates[:, 0].mean()),
            **{b: float(ind_rates[:, i].mean()) for i, b in enumerate(blocks)},
        },
    }
    posterior.diagnostics.update(diagnostics)
    return posterior


# ---------------------------------------------------------------------
# convergence diagnostics
# ---------------------------------------------------------------------

def split_rhat(sequences: list[np.ndarray]) -> float:
    """Potential scale reduction over already-split scalar sequences.

    Zero within- and between-sequence variance is reported as 1.0 by
    convention (degenerate but converged); the estimate is floored at 1.
    """
    m = len(sequences)
    if m < 2:
        raise TooFewChains("need at least 2 split half-chains")
    n = min(len(s) for s in sequences)
    if n < 2:
        raise TooFewChains("split half-chains need at least 2 draws")
    seqs = np.stack([np.asarray(s[:n], dtype=np.float64) for s in sequences])
    means = seqs.mean(axis=1)
    within = seqs.var(axis=1, ddof=1).mean()
    between = means.var(ddof=1)
    if within == 0.0 and between == 0.0:
        return 1.0
    if within == 0.0:
        return math.inf
    var_plus = (n - 1) / n * within + between
    return max(1.0, math.sqrt(var_plus / within))


def gelman_rubin(posterior: CalibrationPosterior) -> dict[str, float]:
    """Split-chain R-hat per scalar parameter over post-burn-in draws."""
    cfg = posterior.config
    if cfg.samples_per_chain < 4:
        raise TooFewChains("samples_per_chain must be >= 4 to split chains")
    out = {}
    half = cfg.samples_per_chain // 2
    for j, name in enumerate(posterior.names):
        seqs = []
        for c in range(cfg.chains):
            x = posterior.draws[posterior.chain_index == c, j]
            seqs.append(x[:half])
            seqs.append(x[half:2 * half])
        out[name] = split_rhat(seqs)
    return out


def dump_draws_csv(posterior: CalibrationPosterior, path) -> None:
    """One row per draw: chain, iteration, then every sampled parameter."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("chain,iteration," + ",".join(posterior.names) + "\n")
        per_chain = posterior.config.samples_per_chain
        for t in range(posterior.T):
            row = [str(int(posterior.chain_index[t])), str(t % per_chain)]
            row.extend(repr(float(v)) for v in posterior.draws[t])
            fh.write(",".join(row) + "\n")
