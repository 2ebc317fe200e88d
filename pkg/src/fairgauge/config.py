"""Flat key = value config files for the CLI.

One `key = value` pair per line; `#` starts a comment.  Lists are
comma-separated.  Unknown keys are rejected to catch typos.  The same file
can carry prior, sampler, synthetic-population, and experiment settings;
each builder reads only its own keys.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .calibration import DEFAULT_BASE_SCALES, CalibrationParams, PriorConfig
from .data import Dataset, GroupPair, MetricKind, ingest_csv
from .mcmc import SamplerConfig
from .simulate import SyntheticSpec, bundled_specs, generate, required_n_spec

KNOWN_KEYS = {
    # prior
    "family", "alpha", "hierarchical", "base_scales",
    # sampler
    "chains", "burn_in", "samples_per_chain", "target_accept", "adapt_window",
    "prior_refresh",
    # synthetic population (or a bundled shortcut / a CSV of scores)
    "bundled", "population", "spec_seed", "groups", "proportions",
    "positive_rates", "concentrations", "calib_a", "calib_b", "calib_c",
    "distortion_family", "knots_0", "knots_1", "knots_2", "knots_3",
    "data_csv",
    # experiment
    "metric", "pair", "n_l", "runs", "methods", "alphas", "n_grid", "sims",
    "target_low", "target_high", "confidence", "epsilon", "samples", "seed",
}


class Config:
    def __init__(self, values: dict[str, str]):
        unknown = set(values) - KNOWN_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        self.values = values

    @classmethod
    def load(cls, path) -> "Config":
        values: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for i, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{i}: expected 'key = value'")
                key, val = line.split("=", 1)
                values[key.strip()] = val.strip()
        return cls(values)

    def has(self, key: str) -> bool:
        return key in self.values

    def str_(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.values.get(key, default)

    def int_(self, key: str, default: Optional[int] = None) -> Optional[int]:
        return int(self.values[key]) if key in self.values else default

    def float_(self, key: str, default: Optional[float] = None) -> Optional[float]:
        return float(self.values[key]) if key in self.values else default

    def bool_(self, key: str, default: bool) -> bool:
        if key not in self.values:
            return default
        return self.values[key].strip().lower() in ("1", "true", "yes", "on")

    def floats(self, key: str, default: Optional[Sequence[float]] = None):
        if key not in self.values:
            return tuple(default) if default is not None else None
        return tuple(float(v) for v in self.values[key].split(","))

    def ints(self, key: str, default: Optional[Sequence[int]] = None):
        if key not in self.values:
            return tuple(default) if default is not None else None
        return tuple(int(v) for v in self.values[key].split(","))

    def strs(self, key: str, default: Optional[Sequence[str]] = None):
        if key not in self.values:
            return tuple(default) if default is not None else None
        return tuple(v.strip() for v in self.values[key].split(","))


def prior_from_config(cfg: Config) -> PriorConfig:
    return PriorConfig(
        family=cfg.str_("family", "beta"),
        alpha=cfg.float_("alpha", 1.0),
        hierarchical=cfg.bool_("hierarchical", True),
        base_scales=cfg.floats("base_scales", DEFAULT_BASE_SCALES),
    )


def sampler_from_config(cfg: Config, seed: int) -> SamplerConfig:
    return SamplerConfig(
        chains=cfg.int_("chains", 4),
        burn_in=cfg.int_("burn_in", 1500),
        samples_per_chain=cfg.int_("samples_per_chain", 200),
        seed=seed,
        target_accept=cfg.float_("target_accept", 0.3),
        adapt_window=cfg.int_("adapt_window", 50),
        prior_refresh=cfg.bool_("prior_refresh", True),
    )


def _parse_knots(raw: str):
    knots = []
    for part in raw.split(","):
        x, _, y = part.partition(":")
        knots.append((float(x), float(y)))
    return tuple(knots)


def synthetic_from_config(cfg: Config) -> SyntheticSpec:
    if cfg.has("bundled"):
        name = cfg.str_("bundled")
        seed = cfg.int_("spec_seed", 0)
        population = cfg.int_("population", 10_000)
        if name == "required_n":
            return required_n_spec(seed=seed,
                                   population=cfg.int_("population", 1_000_000))
        specs = bundled_specs(population=population, seed=seed)
        if name not in specs:
            raise ValueError(f"unknown bundled spec {name!r}; "
                             f"options: {sorted(specs)} or required_n")
        return specs[name]
    groups = cfg.strs("groups")
    if groups is None:
        raise ValueError("config needs either 'bundled' or a full synthetic spec")
    G = len(groups)
    family = cfg.str_("distortion_family", "beta")
    distortions = None
    knots = None
    if family == "beta":
        ca = cfg.floats("calib_a", (1.0,) * G)
        cb = cfg.floats("calib_b", (1.0,) * G)
        cc = cfg.floats("calib_c", (0.0,) * G)
        distortions = tuple(CalibrationParams(a, b, c)
                            for a, b, c in zip(ca, cb, cc))
    else:
        knots = tuple(_parse_knots(cfg.str_(f"knots_{g}")) for g in range(G))
    return SyntheticSpec(
        group_names=groups,
        proportions=cfg.floats("proportions"),
        positive_rates=cfg.floats("positive_rates"),
        concentrations=cfg.floats("concentrations", (2.0,) * G),
        distortions=distortions,
        population=cfg.int_("population", 10_000),
        seed=cfg.int_("spec_seed", 0),
        family=family,
        piecewise_knots=knots,
    )


def population_from_config(cfg: Config) -> Dataset:
    if cfg.has("data_csv"):
        return ingest_csv(cfg.str_("data_csv"))
    return generate(synthetic_from_config(cfg))


def metric_from_config(cfg: Config) -> MetricKind:
    return MetricKind(cfg.str_("metric", "accuracy"))


def pair_from_config(cfg: Config, dataset: Dataset) -> GroupPair:
    raw = cfg.strs("pair")
    if raw is None:
        if dataset.n_groups != 2:
            raise ValueError("config needs 'pair = unprivileged,privileged' "
                             "when the dataset has more than two groups")
        return GroupPair(unprivileged=1, privileged=0)
    if len(raw) != 2:
        raise ValueError("pair must be 'unprivileged,privileged'")
    return GroupPair(unprivileged=dataset.group_id(raw[0]),
                     privileged=dataset.group_id(raw[1]))
