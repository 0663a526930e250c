"""Command line interface: ``dpdropout {calibrate,train,evaluate,sweep,report}``.

Exit status is 0 on success, 2 for usage errors (argparse) and 1 for domain
errors, which are reported as a single line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import accountant as acc
from .data import load_bundled_digits, load_digits_csv, load_idx
from .harness import (
    ConfigError,
    load_config,
    privacy_report,
    resolve_datasets,
    run_seeds,
    sweep_sigma_vs_eps,
    sweep_to_csv,
)
from .model import evaluate_accuracy, load_checkpoint, save_checkpoint


def _budget(b: acc.PrivacyBudget) -> dict:
    return {"eps": b.eps, "delta": b.delta}


def _accountant_cfg(args, method=acc.Method.ZCDP) -> acc.AccountantConfig:
    return acc.AccountantConfig(args.iterations, args.sampling_ratio, args.delta_split, method)


def cmd_calibrate(args) -> int:
    cfg = _accountant_cfg(args, acc.Method(args.method))
    sigma = args.sigma if args.sigma is not None else acc.calibrate_sigma(args.epsilon, args.delta, cfg)
    a = acc.account(sigma, args.delta, cfg)
    out = {
        "method": cfg.method.value,
        "sigma": sigma,
        "per_iteration": _budget(a.per_iteration),
        "amplified": _budget(a.amplified),
        "total": _budget(a.total),
        "rho_total": a.rho_total,
        "iterations": cfg.iterations,
        "sampling_ratio": cfg.sampling_ratio,
        "delta_split": cfg.delta_split,
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_sweep(args) -> int:
    grid = [float(x) for x in args.epsilon_list.split(",") if x.strip()]
    rows = sweep_sigma_vs_eps(_accountant_cfg(args), grid, args.delta)
    text = sweep_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for r in rows:
        if r.error:
            print(f"eps={r.eps}: {r.error}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    config = load_config(args.config)
    print(privacy_report(config).to_json())
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config, seed=args.seed)
    train, test = resolve_datasets(config)
    seeds = [config.seed + i for i in range(args.runs)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_seeds(config, seeds, train, test)
    accs = []
    for seed, res in zip(seeds, results):
        stem = out / f"seed{seed}"
        res.trace.to_csv(f"{stem}_trace.csv")
        Path(f"{stem}_report.json").write_text(res.report.to_json() + "\n")
        save_checkpoint(f"{stem}.ckpt", res.params)
        accs.append(res.final_accuracy)
        print(f"seed {seed}: test accuracy {res.final_accuracy:.4f}")
    if len(accs) > 1:
        print(f"mean {np.mean(accs):.4f} +- {np.std(accs, ddof=1):.4f} over {len(accs)} runs")
    return 0


def cmd_evaluate(args) -> int:
    params = load_checkpoint(args.checkpoint)
    if args.images or args.labels:
        if not (args.images and args.labels):
            raise ConfigError("--images and --labels go together")
        data = load_idx(args.images, args.labels)
    elif args.csv:
        data = load_digits_csv(args.csv, args.csv)[0]
    else:
        data = load_bundled_digits()[1]
    print(f"{evaluate_accuracy(params, data):.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpdropout", description="Differentially private dropout training.")
    sub = p.add_subparsers(dest="command", required=True)

    def accountant_flags(sp):
        sp.add_argument("--delta", type=float, default=1e-4)
        sp.add_argument("--iterations", type=int, required=True)
        sp.add_argument("--sampling-ratio", type=float, required=True)
        sp.add_argument("--delta-split", type=float, default=0.5)

    c = sub.add_parser("calibrate", help="noise multiplier and budget breakdown as JSON")
    c.add_argument("--method", choices=["ac", "zcdp"], required=True)
    target = c.add_mutually_exclusive_group(required=True)
    target.add_argument("--epsilon", type=float)
    target.add_argument("--sigma", type=float)
    accountant_flags(c)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("sweep", help="sigma against epsilon for both methods, as CSV")
    s.add_argument("--method", choices=["both"], default="both")
    s.add_argument("--epsilon-list", required=True, help="comma separated, e.g. 0.5,1,10")
    s.add_argument("--out")
    accountant_flags(s)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--runs", type=int, default=1)
    t.add_argument("--out", default="runs")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="accuracy of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--images")
    e.add_argument("--labels")
    e.add_argument("--csv", help="DIGITS CSV file (default: bundled test split)")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="privacy report for a config, without training")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        # domain errors subclass ValueError; keep the diagnostic to one line
        print(f"dpdropout {args.command}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
