"""Command-line entry point.

Subcommands: gen-data, train, eval, bench. Every command takes
``--config PATH`` and validates the full configuration before touching
the filesystem. Exit codes: 0 success, 1 usage/config error, 2
runtime/numerical failure.
"""

import argparse
import datetime
import os
import sys

from . import channel as chan
from . import learning, metrics
from .config import ConfigError, load_config, write_manifest
from .solvers import CepnetParams


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _out_dir(cfg, args):
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _load_splits(cfg, out):
    data_dir = os.path.join(out, "data")
    if not os.path.isdir(data_dir):
        raise FileNotFoundError(
            f"dataset directory {data_dir} missing; run gen-data first"
        )
    return chan.load_dataset_container(data_dir)


def _set_threads(n):
    if n is None:
        return
    try:
        import torch

        torch.set_num_threads(n)
    except ImportError:
        pass


def cmd_gen_data(cfg, args):
    started = _now()
    out = _out_dir(cfg, args)
    if args.seed is not None:
        cfg.dataset.seed = args.seed
    mp = cfg.channel.to_multipath()
    splits = chan.build_dataset(cfg.channel.kind, cfg.dataset.sizes, mp, cfg.dataset.seed)
    meta = chan.DatasetMeta(
        kind=cfg.channel.kind,
        nt=cfg.channel.nt,
        nu=cfg.channel.nu,
        paths=cfg.channel.paths,
        spacing_ratio=cfg.channel.spacing_ratio,
        seed=cfg.dataset.seed,
        sizes=cfg.dataset.sizes,
    )
    data_dir = os.path.join(out, "data")
    chan.save_dataset_container(data_dir, splits, meta)
    hashes = {ds.role: ds.content_hash() for ds in splits}
    outputs = [os.path.join(data_dir, f"{r}.csv") for r in ("train", "val", "test")]
    outputs.append(os.path.join(data_dir, "meta.csv"))
    write_manifest(
        os.path.join(out, "manifest_gen-data.json"), cfg, hashes, outputs, started, _now()
    )
    print(f"wrote dataset ({', '.join(f'{r}={h[:12]}' for r, h in hashes.items())}) to {data_dir}")
    return 0


def cmd_train(cfg, args):
    started = _now()
    out = _out_dir(cfg, args)
    splits, _ = _load_splits(cfg, out)
    train_set, val_set, _ = splits
    if args.seed is not None:
        cfg.train.seed = args.seed
    initial = None
    if args.params:
        initial, meta = learning.load_params(args.params)
        if initial.K != cfg.solver.iterations:
            raise ConfigError(
                f"resume parameters have K={initial.K} but config asks "
                f"K={cfg.solver.iterations}"
            )
    cfg.train.x0_policy = cfg.solver.x0_policy
    params, history = learning.train(
        train_set, val_set, cfg.solver.iterations, cfg.train, initial=initial
    )
    params_path = os.path.join(out, "params.csv")
    history_path = os.path.join(out, "history.csv")
    learning.save_params(params_path, params, cfg.solver.x0_policy, cfg.train.seed)
    learning.save_history(history_path, history)
    hashes = {ds.role: ds.content_hash() for ds in (train_set, val_set)}
    write_manifest(
        os.path.join(out, "manifest_train.json"), cfg,
        hashes, [params_path, history_path], started, _now(),
    )
    if history:
        print(f"trained {len(history)} epochs, best val loss {history[-1]['best_val_loss']:.3f} dB")
    else:
        print("0 epochs requested, saved initialization")
    return 0


def _build_precoders(cfg, params):
    precoders = []
    for name in cfg.solver.solvers:
        precoders.append(
            metrics.Precoder(
                name=name,
                K=cfg.solver.iterations,
                armijo=cfg.solver.armijo,
                params=params if name == "cepnet" else None,
                x0_policy=cfg.solver.x0_policy,
            )
        )
    return precoders


def _maybe_load_params(cfg, args, out):
    if "cepnet" not in cfg.solver.solvers:
        return None
    path = args.params or os.path.join(out, "params.csv")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"parameter file {path} missing; run train first")
    params, _ = learning.load_params(path)
    if params.K != cfg.solver.iterations:
        raise ConfigError(
            f"parameter file has K={params.K} but config asks K={cfg.solver.iterations}"
        )
    return params


def cmd_eval(cfg, args):
    started = _now()
    out = _out_dir(cfg, args)
    splits, _ = _load_splits(cfg, out)
    _, _, test_set = splits
    params = _maybe_load_params(cfg, args, out)
    precoders = _build_precoders(cfg, params)
    rng = metrics.SeededRng(cfg.eval.noise_seed)
    snr_report = metrics.rate_vs_snr(
        precoders, test_set, cfg.eval.snr_db, rng,
        min_errors=cfg.eval.min_errors, max_noise_reps=cfg.eval.max_noise_reps,
    )
    sweep_rng = metrics.SeededRng(cfg.eval.noise_seed + 1)
    sweep_report = metrics.robustness_sweep(
        precoders, test_set, cfg.eval.eps_grid, cfg.eval.sweep_snr_db,
        sweep_rng, min_errors=cfg.eval.min_errors,
        max_noise_reps=cfg.eval.max_noise_reps,
    )
    paths = {
        "rate_ber_vs_snr.csv": snr_report,
        "robustness_vs_eps.csv": sweep_report,
    }
    outputs = []
    for fname, report in paths.items():
        path = os.path.join(out, fname)
        report.to_csv(path)
        outputs.append(path)
        print(f"== {fname}")
        print(report.summary())
    write_manifest(
        os.path.join(out, "manifest_eval.json"), cfg,
        {"test": test_set.content_hash()}, outputs, started, _now(),
    )
    return 0


def cmd_bench(cfg, args):
    started = _now()
    out = _out_dir(cfg, args)
    splits, _ = _load_splits(cfg, out)
    _, _, test_set = splits
    params = _maybe_load_params(cfg, args, out)
    precoders = _build_precoders(cfg, params)
    report = metrics.complexity_report(precoders, test_set)
    # op-count ratios for every solver pair
    evals = {
        p.name: report.value(solver=p.name, metric="objective_evals_per_solve")[0]
        for p in precoders
    }
    for a in evals:
        for b in evals:
            if a != b and evals[b] > 0:
                report.add(f"{a}/{b}", "objective_evals_ratio", evals[a] / evals[b], 0.0, len(test_set))
    path = os.path.join(out, "complexity.csv")
    report.to_csv(path)
    print(report.summary())
    write_manifest(
        os.path.join(out, "manifest_bench.json"), cfg,
        {"test": test_set.content_hash()}, [path], started, _now(),
    )
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cepnet",
        description="Constant-envelope precoding experiments: dataset "
        "generation, unfolded-solver training, evaluation, benchmarking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config YAML")
        p.add_argument("--params", default=None, help="trained parameter CSV")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=1, help="compute threads")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ConfigError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _set_threads(args.threads)
    try:
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
