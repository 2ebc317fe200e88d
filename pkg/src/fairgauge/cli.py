"""Command-line interface.

Subcommands: simulate, assess, mae-experiment, coverage-experiment,
required-n, sensitivity, ablation.  All outputs are deterministic given
the seed and config, byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bc import assess
from .config import (Config, metric_from_config, pair_from_config,
                     population_from_config, prior_from_config,
                     sampler_from_config, synthetic_from_config)
from .data import CsvSchema, GroupPair, MetricKind, ingest_csv, write_csv
from .experiments import (ablation_nhbc, mae_experiment,
                          required_n_experiment, result_csv,
                          sensitivity_sweep, plot_rows)
from .mcmc import dump_draws_csv, sample_posterior
from .simulate import generate, required_n_pair


def _write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load_config(args) -> Config:
    if getattr(args, "config", None):
        return Config.load(args.config)
    return Config({})


def _emit(args, json_text: str, csv_text: str = None) -> None:
    if getattr(args, "out_json", None):
        _write(args.out_json, json_text + "\n")
    else:
        print(json_text)
    if csv_text is not None and getattr(args, "out_csv", None):
        _write(args.out_csv, csv_text)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    spec = synthetic_from_config(cfg)
    write_csv(generate(spec), args.out)
    return 0


def cmd_assess(args) -> int:
    cfg = _load_config(args)
    schema = CsvSchema(score=args.score_column, group=args.group_column,
                       label=args.label_column)
    dataset = ingest_csv(args.data, schema=schema)
    metric = MetricKind(args.metric)
    if args.pair:
        u, p = (s.strip() for s in args.pair.split(","))
        pair = GroupPair(dataset.group_id(u), dataset.group_id(p))
    else:
        pair = pair_from_config(cfg, dataset)
    prior = prior_from_config(cfg)
    sampler = sampler_from_config(cfg, seed=args.seed)
    posterior = None
    if args.dump_draws and args.method in ("bc", "nhbc", "llo"):
        posterior = sample_posterior(dataset.labeled_view(),
                                     method_prior(args.method, prior), sampler)
        dump_draws_csv(posterior, args.dump_draws)
    report = assess(dataset, metric, pair, method=args.method,
                    epsilon=args.epsilon, seed=args.seed, prior=prior,
                    sampler=sampler, posterior=posterior)
    csv_text = report.CSV_HEADER + "\n" + report.to_csv_row() + "\n"
    _emit(args, report.to_json(), csv_text)
    return 0


def _experiment_common(args):
    cfg = _load_config(args)
    population = population_from_config(cfg)
    metric = metric_from_config(cfg)
    pair = pair_from_config(cfg, population)
    prior = prior_from_config(cfg)
    sampler = sampler_from_config(cfg, seed=0)
    return cfg, population, metric, pair, prior, sampler


def cmd_mae(args) -> int:
    cfg, population, metric, pair, prior, sampler = _experiment_common(args)
    sizes = cfg.ints("n_l", (10,))
    runs = cfg.int_("runs", 100)
    methods = cfg.strs("methods", ("freq", "bb", "bc"))
    results = [mae_experiment(population, metric, pair, n, runs=runs,
                              methods=methods, seed=args.seed, prior=prior,
                              sampler=sampler)
               for n in sizes]
    json_text = json.dumps([r.to_dict() for r in results], sort_keys=True)
    csv_text = "".join(result_csv(r) if i == 0 else
                       "".join(result_csv(r).splitlines(keepends=True)[1:])
                       for i, r in enumerate(results))
    _emit(args, json_text, csv_text)
    if getattr(args, "plot_csv", None):
        _write(args.plot_csv, plot_rows(results))
    return 0


def cmd_coverage(args) -> int:
    cfg, population, metric, pair, prior, sampler = _experiment_common(args)
    from .experiments import coverage_experiment
    res = coverage_experiment(population, metric, pair, cfg.ints("n_l", (10,))[0],
                              runs=cfg.int_("runs", 1000),
                              methods=cfg.strs("methods", ("bb", "bc")),
                              seed=args.seed, prior=prior, sampler=sampler)
    _emit(args, res.to_json(), result_csv(res))
    return 0


def cmd_required_n(args) -> int:
    cfg = _load_config(args)
    spec = synthetic_from_config(cfg)
    if cfg.has("pair"):
        names = cfg.strs("pair")
        ids = {name: i for i, name in enumerate(spec.group_names)}
        pair = GroupPair(ids[names[0]], ids[names[1]])
    else:
        pair = required_n_pair()
    res = required_n_experiment(
        spec, pair,
        target_interval=(cfg.float_("target_low", 0.04),
                         cfg.float_("target_high", 0.06)),
        confidence=cfg.float_("confidence", 0.95),
        sims=cfg.int_("sims", 1000),
        n_grid=cfg.ints("n_grid", (12000, 24000, 48000, 96000)),
        seed=args.seed)
    csv_text = "n_L,hit_fraction\n" + "".join(
        f"{n},{res.hits[n]!r}\n" for n in sorted(res.hits))
    _emit(args, res.to_json(), csv_text)
    return 0


def cmd_sensitivity(args) -> int:
    cfg, population, metric, pair, prior, sampler = _experiment_common(args)
    n_l = cfg.ints("n_l", (10,))[0]
    runs = cfg.int_("runs", 100)
    alphas = cfg.floats("alphas", (0.1, 0.5, 1.0, 2.0, 10.0))
    table = sensitivity_sweep(population, metric, pair, n_l, alphas=alphas,
                              runs=runs, seed=args.seed, prior=prior,
                              sampler=sampler)
    baseline = mae_experiment(population, metric, pair, n_l, runs=runs,
                              methods=("bb",), seed=args.seed)
    payload = {"alphas": {repr(a): table[a] for a in alphas},
               "bb": baseline.mae["bb"], "n_L": n_l, "runs": runs,
               "metric": metric.value}
    csv_text = "alpha,method,mae\n" + "".join(
        f"{a!r},bc,{table[a]!r}\n" for a in alphas) + \
        f",bb,{baseline.mae['bb']!r}\n"
    _emit(args, json.dumps(payload, sort_keys=True), csv_text)
    return 0


def cmd_ablation(args) -> int:
    cfg, population, metric, pair, prior, sampler = _experiment_common(args)
    res = ablation_nhbc(population, metric, pair, cfg.ints("n_l", (10,))[0],
                        runs=cfg.int_("runs", 100), seed=args.seed,
                        prior=prior, sampler=sampler)
    _emit(args, res.to_json(), result_csv(res))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairgauge",
        description="Group-fairness assessment from small labeled samples "
                    "plus unlabeled scores, with posterior uncertainty.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=False):
        p.add_argument("--config", required=config_required,
                       help="flat key=value config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-json", help="write the JSON result here")
        p.add_argument("--out-csv", help="write the CSV result here")

    p = sub.add_parser("simulate", help="emit a synthetic scored CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("assess", help="one-shot fairness assessment report")
    p.add_argument("data", help="CSV of scores/groups/labels")
    p.add_argument("--metric", choices=[m.value for m in MetricKind],
                   default="accuracy")
    p.add_argument("--method", choices=["freq", "bb", "bc", "nhbc", "llo"],
                   default="bc")
    p.add_argument("--pair", help="UNPRIVILEGED,PRIVILEGED group names")
    p.add_argument("--epsilon", type=float, default=0.02)
    p.add_argument("--score-column", default="score")
    p.add_argument("--group-column", default="group")
    p.add_argument("--label-column", default="label")
    p.add_argument("--dump-draws", help="write posterior draws CSV here")
    add_common(p)
    p.set_defaults(func=cmd_assess)

    for name, fn, help_ in (
            ("mae-experiment", cmd_mae, "repeated-split estimation error"),
            ("coverage-experiment", cmd_coverage, "credible-interval coverage"),
            ("required-n", cmd_required_n, "labeled sample size requirement"),
            ("sensitivity", cmd_sensitivity, "prior-scale sensitivity sweep"),
            ("ablation", cmd_ablation, "hierarchy ablation (bb/nhbc/bc)")):
        p = sub.add_parser(name, help=help_)
        add_common(p, config_required=True)
        if name == "mae-experiment":
            p.add_argument("--plot-csv", help="long-format (n_L, method, mae, "
                                              "stderr) CSV for plotting")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
