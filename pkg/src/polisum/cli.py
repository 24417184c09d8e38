"""Command-line experiment runner.

Subcommands: solve, extract, reconstruct, eval, sweep, cross-matrix,
report.  Options come from a JSON config file plus flag overrides; every
artifact embeds the config hash and master seed.  Exit codes: 0 success,
1 configuration/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass

from . import __version__
from .core import ConfigError, PolisumError, Summary
from .evaluate import (
    CrossMatrix,
    restart_seed,
    run_cross_matrix,
    score_accuracy,
    score_value_diff,
)
from .experiment import DOMAINS, TaggedSummary, make_experiment
from .il import KernelSpec
from .irl import bec_constraints, prune_constraints
from .report import (
    config_hash,
    emit_heatmap,
    provenance_line,
    write_json,
    write_matrix_csv,
)
from .sweep import (
    PAPER_KERNELS,
    PAPER_SIZES,
    PAPER_TRAJ_LENGTHS,
    rank_settings,
    read_sweep_rows,
    run_sweep,
)


@dataclass
class ExperimentConfig:
    domain: str = "gridworld"
    summary_sizes: tuple = PAPER_SIZES
    irl_traj_lengths: tuple = PAPER_TRAJ_LENGTHS
    il_kernels: tuple = PAPER_KERNELS
    n_restarts: int = 75
    master_seed: int = 0
    output_dir: str = "polisum-out"
    baselines: bool = False
    allow_custom_grids: bool = False
    workers: int = 0  # 0 = logical cores
    k: int = 24
    irl_l: int = 4
    il_kernel: str = "poly:0.1:2"
    hiv_train_episodes: int = 30
    hiv_fqi_iters: int = 200

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}")
        self.summary_sizes = tuple(int(v) for v in self.summary_sizes)
        self.irl_traj_lengths = tuple(int(v) for v in self.irl_traj_lengths)
        self.il_kernels = tuple(str(v) for v in self.il_kernels)
        for kernel in self.il_kernels + (self.il_kernel,):
            KernelSpec.parse(kernel)
        if not self.allow_custom_grids:
            if not set(self.summary_sizes) <= set(PAPER_SIZES):
                raise ConfigError(
                    f"summary sizes must lie in {PAPER_SIZES} "
                    "(set allow_custom_grids to override)"
                )
            if not set(self.irl_traj_lengths) <= set(PAPER_TRAJ_LENGTHS):
                raise ConfigError(
                    f"trajectory lengths must lie in {PAPER_TRAJ_LENGTHS} "
                    "(set allow_custom_grids to override)"
                )

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("summary_sizes", "irl_traj_lengths", "il_kernels"):
            doc[key] = list(doc[key])
        return doc

    @classmethod
    def from_sources(cls, path=None, overrides: dict | None = None) -> "ExperimentConfig":
        doc = {}
        if path:
            with open(path) as fh:
                doc.update(json.load(fh))
        doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = cls().__dict__.keys()
        unknown = set(doc) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def domain_kwargs(self) -> dict:
        if self.domain != "hiv":
            return {}
        return {"n_train_episodes": self.hiv_train_episodes,
                "fqi_iters": self.hiv_fqi_iters}

    def resolved_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def out_dir(self, experiment: str) -> str:
        base = os.environ.get("POLISUM_OUT", self.output_dir)
        path = os.path.join(base, self.domain, experiment)
        os.makedirs(path, exist_ok=True)
        return path

    def provenance(self) -> dict:
        doc = self.to_dict()
        for key in ("output_dir", "workers"):  # execution details, not content
            doc.pop(key, None)
        return {
            "config_hash": config_hash(doc),
            "master_seed": self.master_seed,
            "version": __version__,
        }

    def provenance_comment(self) -> str:
        p = self.provenance()
        return provenance_line(p["config_hash"], p["master_seed"], p["version"])


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--domain", choices=DOMAINS)
    parser.add_argument("--seed", type=int, dest="master_seed")
    parser.add_argument("--out", dest="output_dir")
    parser.add_argument("--restarts", type=int, dest="n_restarts")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--k", type=int)
    parser.add_argument("--irl-l", type=int, dest="irl_l")
    parser.add_argument("--il-kernel", dest="il_kernel")
    parser.add_argument("--hiv-train-episodes", type=int, dest="hiv_train_episodes")
    parser.add_argument("--hiv-fqi-iters", type=int, dest="hiv_fqi_iters")
    parser.add_argument("--allow-custom-grids", action="store_const", const=True,
                        dest="allow_custom_grids")
    parser.add_argument("--baselines", action="store_const", const=True)


def build_parser() -> _Parser:
    parser = _Parser(prog="polisum", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, extra in (
        ("solve", ()),
        ("extract", (("--model", dict(choices=("il", "irl"), required=True)),
                     ("--l", dict(type=int, default=None)))),
        ("reconstruct", (("--model", dict(choices=("il", "irl"), required=True)),
                         ("--summary", dict(required=True)),
                         ("--debug-dumps", dict(action="store_true")))),
        ("eval", (("--model", dict(choices=("il", "irl"), required=True)),
                  ("--summary", dict(required=True)))),
        ("sweep", ()),
        ("cross-matrix", ()),
        ("report", (("--from", dict(dest="source_dir", required=True)),)),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        for flag, kwargs in extra:
            p.add_argument(flag, **kwargs)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in ExperimentConfig().__dict__
        if hasattr(args, key)
    }
    return ExperimentConfig.from_sources(args.config, overrides)


def _experiment(cfg: ExperimentConfig):
    return make_experiment(cfg.domain, restart_seed(cfg.master_seed, 0, 0),
                           **cfg.domain_kwargs())


def cmd_solve(cfg: ExperimentConfig) -> int:
    exp = _experiment(cfg)
    policy = exp.cluster_policy if cfg.domain == "hiv" else exp.policy_star
    doc = policy.to_dict(domain=cfg.domain, seed=cfg.master_seed)
    doc["provenance"] = cfg.provenance()
    out = os.path.join(cfg.out_dir("solve"), f"policy_seed{cfg.master_seed}.json")
    write_json(out, doc)
    print(out)
    return 0


def cmd_extract(cfg: ExperimentConfig, model: str, l: int | None) -> int:
    exp = _experiment(cfg)
    if model == "irl":
        l = cfg.irl_l if l is None else l
        tagged = exp.extract_irl(cfg.k, l, restart_seed(cfg.master_seed, 0, 1))
    else:
        tagged = exp.extract_il(cfg.k, KernelSpec.parse(cfg.il_kernel))
    doc = tagged.summary.to_dict(domain=cfg.domain, extractor=model)
    doc["provenance"] = cfg.provenance()
    out = os.path.join(cfg.out_dir("extract"),
                       f"summary_{model}_k{cfg.k}_seed{cfg.master_seed}.json")
    write_json(out, doc)
    print(out)
    return 0


def _load_summary(cfg: ExperimentConfig, path) -> TaggedSummary:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("domain") and doc["domain"] != cfg.domain:
        raise ConfigError(
            f"summary was extracted for {doc['domain']!r}, not {cfg.domain!r}"
        )
    return TaggedSummary(Summary.from_dict(doc), "demo")


def cmd_reconstruct(cfg: ExperimentConfig, model: str, summary_path,
                    debug_dumps: bool) -> int:
    exp = _experiment(cfg)
    tagged = _load_summary(cfg, summary_path)
    out_dir = cfg.out_dir("reconstruct")
    if model == "irl":
        from .irl import maxent_reconstruct

        weights, policy = maxent_reconstruct(exp.mdp, exp.irl_space_summary(tagged),
                                             exp.maxent_config())
        doc = policy.to_dict(domain=cfg.domain, seed=cfg.master_seed)
        doc["provenance"] = cfg.provenance()
        out = os.path.join(out_dir, "reconstruction_irl.json")
        write_json(out, doc)
        if debug_dumps:
            star = exp.cluster_policy if cfg.domain == "hiv" else exp.policy_star
            constraints = prune_constraints(bec_constraints(
                exp.mdp, star, exp.irl_demo if cfg.domain == "hiv" else exp.demo,
                exp.irl_horizon, exp.mdp.discount,
            ))
            write_json(os.path.join(out_dir, "debug_irl.json"), {
                "weights": weights.tolist(),
                "pruned_constraints": [c.normal.tolist() for c in constraints],
                "provenance": cfg.provenance(),
            })
    else:
        unseen = exp.unseen_of(tagged)
        preds, model_fit = exp.reconstruct_il(tagged, KernelSpec.parse(cfg.il_kernel))
        doc = {
            "domain": cfg.domain,
            "seed": cfg.master_seed,
            "unseen_states": [int(s) for s in unseen],
            "predictions": [int(a) for a in preds],
            "provenance": cfg.provenance(),
        }
        out = os.path.join(out_dir, "reconstruction_il.json")
        write_json(out, doc)
        if debug_dumps:
            soft = model_fit.soft
            with open(os.path.join(out_dir, "debug_il.csv"), "w") as fh:
                fh.write(cfg.provenance_comment() + "\n")
                fh.write("state," + ",".join(f"class{c}" for c in
                                             range(soft.shape[1])) + ",hard\n")
                for i, s in enumerate(unseen):
                    scores = ",".join(f"{v:.10g}" for v in soft[i])
                    fh.write(f"{s},{scores},{int(preds[i])}\n")
    print(out)
    return 0


def cmd_eval(cfg: ExperimentConfig, model: str, summary_path) -> int:
    exp = _experiment(cfg)
    tagged = _load_summary(cfg, summary_path)
    unseen = exp.unseen_of(tagged)
    if model == "irl":
        policy = exp.reconstruct_irl(tagged)
        preds = exp.irl_predictions(policy, unseen)
        value = exp.value_of_irl(policy)
    else:
        preds, fit = exp.reconstruct_il(tagged, KernelSpec.parse(cfg.il_kernel))
        value = exp.value_of_il(tagged, preds, unseen, fit)
    doc = {
        "domain": cfg.domain,
        "reconstructor": model,
        "accuracy": score_accuracy(exp.demo_policy, preds, unseen),
        "value_diff_raw": score_value_diff(exp.value_star(), value),
        "n_unseen": len(unseen),
        "provenance": cfg.provenance(),
    }
    out = os.path.join(cfg.out_dir("eval"), f"score_{model}.json")
    write_json(out, doc)
    print(out)
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    out_dir = cfg.out_dir("sweep")
    rows_path = os.path.join(out_dir, "rows.csv")
    log_path = os.path.join(out_dir, "log.txt")
    with open(log_path, "a") as log_fh:
        run_sweep(
            cfg.domain, rows_path, cfg.master_seed,
            sizes=cfg.summary_sizes, traj_lengths=cfg.irl_traj_lengths,
            kernels=cfg.il_kernels, n_restarts=cfg.n_restarts,
            baselines=cfg.baselines, domain_kwargs=cfg.domain_kwargs(),
            provenance=cfg.provenance_comment(),
            log=lambda msg: print(msg, file=log_fh),
        )
    ranked = rank_settings(read_sweep_rows(rows_path))
    write_json(os.path.join(out_dir, "rankings.json"),
               {"rankings": ranked, "provenance": cfg.provenance()})
    print(rows_path)
    return 0


def cmd_cross_matrix(cfg: ExperimentConfig) -> int:
    out_dir = cfg.out_dir("cross_matrix")
    log_path = os.path.join(out_dir, "log.txt")
    with open(log_path, "a") as log_fh:
        matrix = run_cross_matrix(
            cfg.domain, cfg.k, cfg.irl_l, cfg.il_kernel, cfg.n_restarts,
            cfg.master_seed, workers=cfg.resolved_workers(),
            domain_kwargs=cfg.domain_kwargs(),
            log=lambda msg: print(msg, file=log_fh),
        )
    doc = matrix.to_dict()
    doc["provenance"] = cfg.provenance()
    write_json(os.path.join(out_dir, "matrix.json"), doc)
    write_matrix_csv(os.path.join(out_dir, "rows.csv"), matrix,
                     cfg.provenance_comment())
    emit_heatmap(matrix, os.path.join(out_dir, "heatmap.svg"),
                 provenance=cfg.provenance_comment())
    print(os.path.join(out_dir, "matrix.json"))
    return 0


def cmd_report(cfg: ExperimentConfig, source_dir) -> int:
    emitted = []
    matrix_path = os.path.join(source_dir, "matrix.json")
    rows_path = os.path.join(source_dir, "rows.csv")
    if os.path.exists(matrix_path):
        with open(matrix_path) as fh:
            matrix = CrossMatrix.from_dict(json.load(fh))
        out = os.path.join(cfg.out_dir("report"), "heatmap.svg")
        emit_heatmap(matrix, out, provenance=cfg.provenance_comment())
        emitted.append(out)
    elif os.path.exists(rows_path):
        ranked = rank_settings(read_sweep_rows(rows_path))
        out = os.path.join(cfg.out_dir("report"), "rankings.json")
        write_json(out, {"rankings": ranked, "provenance": cfg.provenance()})
        for row in ranked[:10]:
            print(f"{row['mean_accuracy']:.3f}  {row['method']}"
                  f"[{row['hyperparams']}] k={row['summary_size']} n={row['n']}")
        emitted.append(out)
    else:
        raise ConfigError(f"nothing to report in {source_dir!r}")
    print(emitted[0])
    return 0


def cli_main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _config_from_args(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "extract":
            return cmd_extract(cfg, args.model, args.l)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, args.model, args.summary, args.debug_dumps)
        if args.command == "eval":
            return cmd_eval(cfg, args.model, args.summary)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "cross-matrix":
            return cmd_cross_matrix(cfg)
        if args.command == "report":
            return cmd_report(cfg, args.source_dir)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"polisum: configuration error: {exc}", file=sys.stderr)
        return 1
    except PolisumError as exc:
        print(f"polisum: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
