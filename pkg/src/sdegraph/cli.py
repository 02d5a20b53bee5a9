"""Command-line front door: generate, train, evaluate, simulate, intervene.

Every command resolves its configuration (flag > config file > default),
persists the resolved config next to its outputs, and derives all randomness
from one root seed, so reruns with the same arguments are reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from . import datasets as ds
from . import training as tr
from .errors import (DivergenceError, InterventionError, MetricError,
                     ParseError, SdegraphError, TrainingError, ValidationError)
from .interventions import load_intervention_spec, simulate_intervened
from .metrics import auroc, exclude_diagonal_mask, f1_tpr_fdr, write_metrics_report
from .model import Graph, load_edge_probabilities, save_edge_probabilities
from .solver import SdeSpec, em_solve

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_DIVERGENCE = 4
EXIT_METRIC = 5

OUTPUT_ROOT_ENV = "SDEGRAPH_OUTPUT_ROOT"

_GENERATORS = ("lorenz96", "glycolysis", "bimodal")


def _out_dir(args) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV, ".")
    out = args.out if args.out is not None else root
    os.makedirs(out, exist_ok=True)
    return out


def _write_resolved_config(out_dir, command, resolved: dict):
    path = os.path.join(out_dir, "config.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"command": command, **resolved}, fh, indent=2, sort_keys=True)
    return path


def _train_config_from_args(args) -> tr.TrainConfig:
    """flag > config file > built-in default, field by field."""
    base = asdict(tr.TrainConfig())
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as e:
                raise ParseError(f"bad config file: {e}")
        known = {f.name for f in fields(tr.TrainConfig)}
        base.update({k: v for k, v in loaded.items() if k in known})
    for name in base:
        flag = getattr(args, name, None)
        if flag is not None:
            base[name] = flag
    if getattr(args, "no_self_loops", False):
        base["allow_self_loops"] = False
    if getattr(args, "normalize", False):
        base["normalize_data"] = True
    return tr.TrainConfig(**base)


def _add_train_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of config fields")
    p.add_argument("--delta", type=float, help="solver step size")
    p.add_argument("--t-max", dest="t_max", type=float, help="time range end")
    p.add_argument("--sparsity", type=float, help="graph sparsity coefficient")
    p.add_argument("--lr", type=float, help="target learning rate")
    p.add_argument("--warmup-epochs", dest="warmup_epochs", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--tau-start", dest="tau_start", type=float)
    p.add_argument("--tau-end", dest="tau_end", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--obs-scale", dest="obs_scale", type=float,
                   help="Laplace observation noise scale")
    p.add_argument("--no-self-loops", action="store_true",
                   help="clamp diagonal edge probabilities to zero")
    p.add_argument("--normalize", action="store_true",
                   help="z-score the data per dimension before training")
    p.add_argument("--estimator", choices=("pathwise", "score"))
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--feature-dim", dest="feature_dim", type=int)
    p.add_argument("--prior-hidden", dest="prior_hidden", type=int)
    p.add_argument("--gru-hidden", dest="gru_hidden", type=int)
    p.add_argument("--context-dim", dest="context_dim", type=int)
    p.add_argument("--posterior-drift-hidden", dest="posterior_drift_hidden",
                   type=int)


def cmd_generate(args) -> int:
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else 0
    if args.generator == "lorenz96":
        data = ds.gen_lorenz96(args.n, dim=args.dim or 10, n_obs=args.length,
                               forcing=args.forcing, sigma=args.sigma,
                               obs_interval=args.obs_interval, seed=seed)
    elif args.generator == "glycolysis":
        data = ds.gen_glycolysis(args.n, n_obs=args.length, sigma=args.sigma,
                                 obs_interval=args.obs_interval, seed=seed)
        if args.normalize:
            data, _ = ds.normalize(data)
    elif args.generator == "bimodal":
        data = ds.gen_bimodal(args.n, n_obs=args.length,
                              obs_interval=args.obs_interval_bimodal,
                              sigma=args.sigma_bimodal, seed=seed)
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown generator {args.generator}")
    if args.p > 0:
        data = ds.drop_observations(data, args.p, seed=seed)
    path = os.path.join(out, "dataset.csv")
    ds.save_dataset(data, path)
    _write_resolved_config(out, "generate", {
        "generator": args.generator, "n": args.n, "length": args.length,
        "p": args.p, "seed": seed, "normalize": bool(args.normalize),
        "out": out,
    })
    print(f"wrote {path} ({len(data)} series, dim {data.dim})")
    return EXIT_OK


def cmd_train(args) -> int:
    out = _out_dir(args)
    config = _train_config_from_args(args)
    config.validate()
    data = ds.load_dataset(args.dataset)
    _write_resolved_config(out, "train", {"dataset": args.dataset,
                                          "resume": args.resume, "out": out,
                                          **asdict(config)})
    result = tr.train(data, config, resume_from=args.resume,
                      log_every=args.log_every)
    save_edge_probabilities(os.path.join(out, "edge_probabilities.txt"),
                            result.edge_probabilities())
    tr.save_history(os.path.join(out, "history.txt"), result.history)
    tr.save_training_checkpoint(os.path.join(out, "checkpoint.txt"), result,
                                result.optimizer, config.epochs - 1)
    print(f"trained {config.epochs} epochs; outputs in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    scores = load_edge_probabilities(args.scores)
    truth = np.loadtxt(args.truth, ndmin=2)
    mask = exclude_diagonal_mask(scores.shape[0]) if args.exclude_diagonal else None
    report = {"auroc": auroc(scores, truth, mask=mask)}
    f1, tpr, fdr = f1_tpr_fdr(scores, truth, threshold=args.threshold, mask=mask)
    report.update({"f1": f1, "tpr": tpr, "fdr": fdr,
                   "threshold": args.threshold,
                   "cells": int(mask.sum()) if mask is not None
                   else scores.size})
    path = os.path.join(out, "metrics.txt")
    write_metrics_report(path, report)
    _write_resolved_config(out, "evaluate", {
        "scores": args.scores, "truth": args.truth,
        "threshold": args.threshold,
        "exclude_diagonal": bool(args.exclude_diagonal), "out": out,
    })
    for k, v in report.items():
        print(f"{k} {v}")
    return EXIT_OK


def _simulation_spec(args):
    """Build (spec, z0, dim) from either a checkpoint or a named generator."""
    delta = args.delta
    if args.checkpoint is not None:
        prior, _, gposterior, config, _ = tr.load_training_checkpoint(args.checkpoint)
        graph = gposterior.mean_graph()
        dim = prior.dim

        def drift(z, t):
            return prior.drift(graph, z).value

        def diffusion(z, t):
            return prior.diffusion(graph, z).value

        z0 = np.zeros(dim) if args.z0 is None else \
            np.array([float(v) for v in args.z0.split(",")])
    else:
        gen = args.generator
        if gen == "lorenz96":
            dim = args.dim or 10
            drift_np = lambda x: ds.lorenz96_drift(x, args.forcing)
            sigma = args.sigma
        elif gen == "glycolysis":
            dim = 7
            drift_np = ds.glycolysis_drift
            sigma = args.sigma
        elif gen == "bimodal":
            dim = 1
            drift_np = ds.bimodal_drift
            sigma = args.sigma_bimodal
        else:
            raise ValidationError("simulate needs --checkpoint or --generator")
        drift = lambda z, t: drift_np(z)
        diffusion = lambda z, t: np.full(np.shape(z), sigma)
        z0 = np.zeros(dim) if args.z0 is None else \
            np.array([float(v) for v in args.z0.split(",")])
    if len(z0) != dim:
        raise ValidationError(f"--z0 must have dim {dim}")
    spec = SdeSpec(dim=dim, drift=drift, diffusion=diffusion, delta=delta,
                   t0=0.0, t1=args.t_max)
    return spec, z0, dim


def _write_trajectories(out, traj, n_paths, dim):
    path = os.path.join(out, "trajectories.csv")
    values = traj.values()  # (K+1, n_paths, dim)
    header = "series_id,time," + ",".join(f"x_{d}" for d in range(dim))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for p in range(n_paths):
            for k, t in enumerate(traj.times):
                cells = [str(p), repr(float(t))] + \
                    [repr(float(v)) for v in values[k, p]]
                fh.write(",".join(cells) + "\n")
    return path


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    spec, z0, dim = _simulation_spec(args)
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng([seed, 880])
    z0_batch = np.tile(z0, (args.paths, 1))
    traj = em_solve(spec, z0_batch, rng=rng)
    path = _write_trajectories(out, traj, args.paths, dim)
    _write_resolved_config(out, "simulate", {
        "checkpoint": args.checkpoint, "generator": args.generator,
        "paths": args.paths, "delta": args.delta, "t_max": args.t_max,
        "seed": seed, "out": out,
    })
    print(f"wrote {path}")
    return EXIT_OK


def cmd_intervene(args) -> int:
    out = _out_dir(args)
    spec, z0, dim = _simulation_spec(args)
    intervention = load_intervention_spec(args.intervention)
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng([seed, 880])
    z0_batch = np.tile(z0, (args.paths, 1))
    traj = simulate_intervened(spec, intervention, z0_batch, rng=rng)
    path = _write_trajectories(out, traj, args.paths, dim)
    _write_resolved_config(out, "intervene", {
        "checkpoint": args.checkpoint, "generator": args.generator,
        "intervention": args.intervention, "paths": args.paths,
        "delta": args.delta, "t_max": args.t_max, "seed": seed, "out": out,
    })
    print(f"wrote {path}")
    return EXIT_OK


def _add_simulation_flags(p):
    p.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument("--generator", choices=_GENERATORS,
                   help="simulate a known generator instead of a checkpoint")
    p.add_argument("--paths", type=int, default=10)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--t-max", dest="t_max", type=float, default=1.0)
    p.add_argument("--z0", help="comma-separated initial state")
    p.add_argument("--dim", type=int, help="dimension (lorenz96 only)")
    p.add_argument("--forcing", type=float, default=10.0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--sigma-bimodal", dest="sigma_bimodal", type=float,
                   default=0.01)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdegraph",
        description="structure learning for continuous-time stochastic systems")
    parser.add_argument("--threads", type=int, default=1,
                        help="internal parallelism cap (this build always runs "
                             "single-threaded; recorded for provenance)")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("generator", choices=_GENERATORS)
    g.add_argument("--n", type=int, default=100, help="number of series")
    g.add_argument("--length", type=int, default=100, help="observations per series")
    g.add_argument("--p", type=float, default=0.0, help="drop probability")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--dim", type=int, help="dimension (lorenz96 only)")
    g.add_argument("--forcing", type=float, default=10.0)
    g.add_argument("--sigma", type=float, default=0.5)
    g.add_argument("--sigma-bimodal", dest="sigma_bimodal", type=float, default=0.01)
    g.add_argument("--obs-interval", dest="obs_interval", type=float, default=1.0)
    g.add_argument("--obs-interval-bimodal", dest="obs_interval_bimodal",
                   type=float, default=0.1)
    g.add_argument("--normalize", action="store_true")
    g.add_argument("--out")
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train on a dataset file")
    t.add_argument("dataset")
    t.add_argument("--out")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--log-every", dest="log_every", type=int, default=None)
    _add_train_config_flags(t)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("evaluate", help="score an edge-probability file")
    e.add_argument("scores", help="edge-probability matrix file")
    e.add_argument("truth", help="ground-truth adjacency file")
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--exclude-diagonal", action="store_true")
    e.add_argument("--out")
    e.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("simulate", help="sample trajectories")
    _add_simulation_flags(s)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_simulate)

    i = sub.add_parser("intervene", help="sample trajectories under an intervention")
    _add_simulation_flags(i)
    i.add_argument("--intervention", required=True, help="intervention spec file")
    i.add_argument("--out")
    i.set_defaults(fn=cmd_intervene)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PARSE if e.code not in (0, None) else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.fn(args)
    except (DivergenceError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except TrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except MetricError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_METRIC
    except (ParseError, ValidationError, InterventionError, SdegraphError,
            OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


def entry():  # console-script hook
    raise SystemExit(main())
