"""Command-line entry point.

Commands: gen, validate, train, eval, noise-sweep, ablate, param-sweep,
grad-check. Exit codes: 0 success, 2 config/usage error, 3 data validation
error, 4 numerical divergence, 5 I/O error, 1 anything else.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import RunConfig, parse_config, save_config
from .data import load_dataset, save_dataset, validate_dataset
from .errors import ConfigError, DataValidationError, NumericsError
from .fixtures import fixture_path
from .noise import KINDS
from .pipeline import (
    dump_graph_csvs,
    evaluate_checkpoint,
    full_gradient_check,
    run_single,
    save_run_artifacts,
)
from .sweeps import ablation_suite, metric_row, param_sweep, robustness_sweep, write_metrics_csv
from .synth import SynthParams, generate_synthetic

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

GRAD_CHECK_TOLERANCE = 1e-4

# flags that override config keys; (flag, config key)
_OVERRIDE_KEYS = [
    "data", "out", "hidden_dim", "pe_dim", "refiner_hidden", "lr_ct", "lr_pt",
    "lr_student", "lambda", "beta", "rho", "final_relu", "kd_reverse_kl",
    "mkd_mask", "pooling", "use_ct", "use_pt", "use_sup", "use_tar", "use_lgpi",
    "noise_kind", "noise_ratio", "noise_scope", "seed", "max_epochs", "patience",
]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    for key in _OVERRIDE_KEYS:
        p.add_argument("--" + key.replace("_", "-"), dest=f"cfg_{key}", default=None)


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for key in _OVERRIDE_KEYS:
        value = getattr(args, f"cfg_{key}")
        if value is not None:
            overrides[key] = value
    return parse_config(args.config, overrides)


def _csv_list(text: str, cast):
    return [cast(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pss", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--news", type=int, required=True)
    g.add_argument("--users", type=int, default=None)
    g.add_argument("--q-in", type=float, default=0.2)
    g.add_argument("--q-out", type=float, default=0.02)
    g.add_argument("--tree-min", type=int, default=3)
    g.add_argument("--tree-max", type=int, default=10)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True, help="output .jsonl path")

    v = sub.add_parser("validate", help="validate a dataset file")
    v.add_argument("data", help="dataset .jsonl path")

    t = sub.add_parser("train", help="train teachers and student, write artifacts")
    _add_config_flags(t)
    t.add_argument("--dump-graph", action="store_true",
                   help="also write a_news/retention/refined as CSV matrices")

    gc = sub.add_parser("grad-check", help="finite-difference check on the bundled fixture")
    _add_config_flags(gc)

    e = sub.add_parser("eval", help="re-evaluate a saved run directory")
    e.add_argument("--run-dir", required=True)
    e.add_argument("--data", default=None, help="override the recorded data path")

    ns = sub.add_parser("noise-sweep", help="robustness grid over kinds x ratios x seeds")
    _add_config_flags(ns)
    ns.add_argument("--kinds", default=",".join(KINDS))
    ns.add_argument("--ratios", default="0.0,0.25,0.5,0.75,0.9")
    ns.add_argument("--seeds", default="1,2,3,4,5")

    ab = sub.add_parser("ablate", help="six-configuration ablation suite")
    _add_config_flags(ab)
    ab.add_argument("--seeds", default="1,2,3,4,5")

    ps = sub.add_parser("param-sweep", help="lambda/beta grid then rho sweep")
    _add_config_flags(ps)
    ps.add_argument("--lambdas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    ps.add_argument("--betas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    ps.add_argument("--rhos", default="1,2,5,7,10")
    ps.add_argument("--seeds", default="1")
    return parser


def cmd_gen(args) -> int:
    params = SynthParams(
        n_news=args.news,
        n_users=args.users if args.users is not None else max(2, args.news * 2),
        q_in=args.q_in,
        q_out=args.q_out,
        tree_size_min=args.tree_min,
        tree_size_max=args.tree_max,
        feature_dim=args.dim,
        feature_noise_std=args.sigma,
        seed=args.seed,
    )
    ds = generate_synthetic(params)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds.samples)} samples ({len(ds.user_index)} engaged users) to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    ds = load_dataset(args.data)  # raises DataValidationError on any violation
    report = validate_dataset(ds)
    for line in report:
        print(line)
    if report:
        return EXIT_VALIDATION
    print(f"ok: {len(ds.samples)} samples, feature_dim={ds.feature_dim}, "
          f"{len(ds.user_index)} engaged users")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.out:
        raise ConfigError("config key 'out': missing output directory")
    ds = load_dataset(cfg.data)
    result = run_single(ds, cfg)
    save_run_artifacts(cfg.out, cfg, result)
    if args.dump_graph:
        dump_graph_csvs(cfg.out, ds, result)
    row = metric_row(f"train-{result.config_hash[:12]}-s{cfg.seed}", cfg, result)
    write_metrics_csv(os.path.join(cfg.out, "metrics.csv"), [row])
    print(f"val_acc={result.val_acc:.6f} val_macro_f1={result.val_macro_f1:.6f} "
          f"test_acc={result.test_acc:.6f} test_macro_f1={result.test_macro_f1:.6f}")
    print(f"artifacts in {cfg.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    acc, f1, _cfg = evaluate_checkpoint(args.run_dir, args.data)
    print(f"test_acc={acc:.6f} test_macro_f1={f1:.6f}")
    metrics_path = os.path.join(args.run_dir, "metrics.csv")
    if os.path.exists(metrics_path):
        with open(metrics_path, encoding="utf-8") as fh:
            recorded = fh.read().splitlines()[1].split(",")
        if recorded[-2] != f"{acc:.6f}" or recorded[-1] != f"{f1:.6f}":
            print(f"mismatch: recorded accuracy={recorded[-2]} macro_f1={recorded[-1]}")
            return EXIT_OTHER
        print("matches recorded metrics.csv")
    return EXIT_OK


def cmd_noise_sweep(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.out:
        raise ConfigError("config key 'out': missing output directory")
    ds = load_dataset(cfg.data)
    kinds = _csv_list(args.kinds, str)
    ratios = _csv_list(args.ratios, float)
    seeds = _csv_list(args.seeds, int)
    rows = robustness_sweep(ds, cfg, ratios, kinds, seeds)
    os.makedirs(cfg.out, exist_ok=True)
    save_config(cfg, os.path.join(cfg.out, "config.json"))
    write_metrics_csv(os.path.join(cfg.out, "metrics.csv"), rows)
    print(f"{len(rows)} rows -> {os.path.join(cfg.out, 'metrics.csv')}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.out:
        raise ConfigError("config key 'out': missing output directory")
    ds = load_dataset(cfg.data)
    seeds = _csv_list(args.seeds, int)
    rows = ablation_suite(ds, cfg, seeds)
    os.makedirs(cfg.out, exist_ok=True)
    save_config(cfg, os.path.join(cfg.out, "config.json"))
    write_metrics_csv(os.path.join(cfg.out, "metrics.csv"), rows)
    print(f"{len(rows)} rows -> {os.path.join(cfg.out, 'metrics.csv')}")
    return EXIT_OK


def cmd_param_sweep(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.out:
        raise ConfigError("config key 'out': missing output directory")
    ds = load_dataset(cfg.data)
    rows, best_lam, best_beta = param_sweep(
        ds, cfg, _csv_list(args.lambdas, float), _csv_list(args.betas, float),
        _csv_list(args.rhos, float), _csv_list(args.seeds, int))
    os.makedirs(cfg.out, exist_ok=True)
    save_config(cfg, os.path.join(cfg.out, "config.json"))
    write_metrics_csv(os.path.join(cfg.out, "metrics.csv"), rows)
    print(f"best lambda={best_lam:g} beta={best_beta:g}; "
          f"{len(rows)} rows -> {os.path.join(cfg.out, 'metrics.csv')}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    if getattr(args, "cfg_data", None) is None:
        setattr(args, "cfg_data", str(fixture_path()))
    cfg = _config_from_args(args)
    ds = load_dataset(cfg.data)
    err = full_gradient_check(ds, cfg)
    print(f"max relative gradient error: {err:.3e} (tolerance {GRAD_CHECK_TOLERANCE:.0e})")
    if err > GRAD_CHECK_TOLERANCE:
        return EXIT_NUMERIC
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "validate": cmd_validate,
    "train": cmd_train,
    "eval": cmd_eval,
    "noise-sweep": cmd_noise_sweep,
    "ablate": cmd_ablate,
    "param-sweep": cmd_param_sweep,
    "grad-check": cmd_grad_check,
}


def dispatch(command: str, args) -> int:
    try:
        return _COMMANDS[command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataValidationError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericsError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OTHER


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return dispatch(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
