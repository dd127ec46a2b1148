"""Command-line entry points for topology/workload generation, training,
evaluation, benchmarking, and the full report pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .env import SfcEnv
from .harness import (ALGOS, RunConfig, bench_inference, derived_rng, evaluate_run,
                      load_policy, make_policy, orchestrate, scenario_substrate,
                      scenario_workload, train_run)
from .metrics import summarize
from .substrate import generate_substrate
from .traffic import save_workload_jsonl


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    if getattr(args, "smoke", False):
        cfg = cfg.smoke()
    return cfg


def _add_common(parser, out_required=True):
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=out_required, help="output path")
    parser.add_argument("--smoke", action="store_true",
                        help="desk scale: 1,000 requests, 3 episodes")


def cmd_generate_topology(args) -> int:
    cfg = _load_config(args)
    net = scenario_substrate(cfg, args.seed)
    Path(args.out).write_text(net.to_json())
    print(f"wrote topology with {net.num_dcs} DCs to {args.out}")
    return 0


def cmd_generate_workload(args) -> int:
    cfg = _load_config(args)
    workload = scenario_workload(cfg, args.seed, count=args.count)
    save_workload_jsonl(args.out, workload)
    print(f"wrote {len(workload)} requests to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    policy, history = train_run(cfg, args.algo, topology_seed=args.seed,
                                run_seed=args.seed, out_dir=args.out)
    if history:
        final = history[-1].get("eval_reward")
        print(f"trained {args.algo}: final eval reward "
              f"{final if final is not None else 'n/a'}")
    else:
        print(f"{args.algo} needs no training; artifacts written to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    net = scenario_substrate(cfg, args.seed)
    if args.checkpoint:
        policy = load_policy(args.algo, args.checkpoint)
    else:
        policy = make_policy(args.algo, cfg, args.seed)
        policy.fit(SfcEnv(net))
    workload = scenario_workload(cfg, derived_rng(args.seed, 303))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = evaluate_run(policy, net, workload, cfg, trace_path=out / "trace.csv")
    summary = summarize(records)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return 0


def cmd_bench_inference(args) -> int:
    cfg = _load_config(args)
    net = scenario_substrate(cfg, args.seed)
    workload = scenario_workload(cfg, derived_rng(args.seed, 404),
                                 count=cfg.bench_requests)
    results = {}
    for algo in (args.algo.split(",") if args.algo else ALGOS):
        policy = make_policy(algo, cfg, args.seed)
        if policy.trainable:
            policy.build(net.num_dcs)
        else:
            policy.fit(SfcEnv(net))
        mean_ns = bench_inference(policy, net, workload, cfg, warmup=cfg.bench_warmup)
        results[algo] = mean_ns / 1e6
        print(f"{algo}: {mean_ns / 1e6:.3f} ms/request")
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=2))
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    report = orchestrate(cfg, args.out)
    for algo, entry in report["algorithms"].items():
        if "error" in entry:
            print(f"{algo}: FAILED ({entry['error']})")
        else:
            print(f"{algo}: acceptance {entry['test_means']['avg_acceptance']:.4f} "
                  f"on topology {entry['selected_topology']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfclab",
        description="Service chain partitioning laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-topology", help="emit a substrate JSON document")
    _add_common(p)
    p.set_defaults(func=cmd_generate_topology)

    p = sub.add_parser("generate-workload", help="emit a request workload (JSON lines)")
    _add_common(p)
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(func=cmd_generate_workload)

    p = sub.add_parser("train", help="train one algorithm on one topology")
    _add_common(p)
    p.add_argument("--algo", required=True, choices=ALGOS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run one algorithm over a test workload")
    _add_common(p)
    p.add_argument("--algo", required=True, choices=ALGOS)
    p.add_argument("--checkpoint", help="load a trained policy instead of a fresh one")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-inference", help="per-request decision-time benchmark")
    _add_common(p, out_required=False)
    p.add_argument("--algo", help="comma-separated subset; default all")
    p.set_defaults(func=cmd_bench_inference)

    p = sub.add_parser("report", help="full pipeline: train, select median topology, test")
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
