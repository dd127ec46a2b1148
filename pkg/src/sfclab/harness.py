"""Experiment orchestration: configs, training/evaluation runs, benchmarks, reports."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .agents.base import BasePolicy, evaluate_policy
from .agents.dqn import DdqnAgent
from .agents.sdac import SdacAgent
from .baselines import GreedyPolicy, IlsPolicy, RailsPolicy
from .env import SfcEnv, Verdict
from .metrics import MetricsRecord, summarize, write_trace_csv
from .substrate import SubstrateNetwork, generate_substrate
from .traffic import generate_workload, modulated_rate

ALGOS = ("gp", "ils", "rails", "paraddqn", "seqddqn", "sdac")

_CAUSE = {
    Verdict.ACCEPTED: "",
    Verdict.REJECTED_CPU: "cpu",
    Verdict.REJECTED_BANDWIDTH: "bandwidth",
    Verdict.REJECTED_SLA: "sla",
}


@dataclass
class RunConfig:
    """Scenario plus run-shape parameters; JSON round-trippable."""

    num_requests: int = 10000
    num_dcs: int = 5
    edge_prob: float = 0.5
    node_choices: list = field(default_factory=lambda: [32, 64, 128, 256])
    load_range: tuple = (0.7, 1.0)
    link_latency: float = 1.0
    base_rate: float = 0.05
    chain_len: tuple = (2, 10)
    demand_range: tuple = (0.05, 0.20)
    lifetime_mean: float = 1000.0
    sla_range: tuple = (2.0, 4.0)
    vlink_bw_range: tuple = (0.01, 0.05)

    episodes: int = 15
    topology_seeds: list = field(default_factory=lambda: list(range(10)))
    test_seeds: list = field(default_factory=lambda: list(range(10)))
    algos: list = field(default_factory=lambda: list(ALGOS))
    # Per-algorithm constructor overrides, e.g. {"sdac": {"batch_size": 32}}.
    agent_params: dict = field(default_factory=dict)
    bench_requests: int = 600
    bench_warmup: int = 100

    def __post_init__(self):
        # JSON has no tuples; normalize the pair-valued fields to lists
        for name in ("load_range", "chain_len", "demand_range", "sla_range",
                     "vlink_bw_range", "node_choices", "topology_seeds",
                     "test_seeds", "algos"):
            setattr(self, name, list(getattr(self, name)))

    def smoke(self) -> "RunConfig":
        """Desk-scale variant: 1,000 requests, 3 episodes, 3 seeds."""
        cfg = RunConfig(**asdict(self))
        cfg.num_requests = 1000
        cfg.episodes = 3
        cfg.topology_seeds = self.topology_seeds[:3]
        cfg.test_seeds = self.test_seeds[:3]
        cfg.bench_requests = 300
        return cfg

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            doc = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def derived_rng(*keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


def scenario_substrate(cfg: RunConfig, seed: int) -> SubstrateNetwork:
    return generate_substrate(cfg.num_dcs, cfg.edge_prob, cfg.node_choices,
                              tuple(cfg.load_range), cfg.link_latency, seed)


def scenario_workload(cfg: RunConfig, rng_or_seed, count: int | None = None,
                      chain_len: tuple | None = None):
    return generate_workload(
        count or cfg.num_requests, cfg.num_dcs, rng_or_seed,
        base_rate=cfg.base_rate,
        chain_len=tuple(chain_len or cfg.chain_len),
        demand_range=tuple(cfg.demand_range),
        lifetime_mean=cfg.lifetime_mean,
        sla_range=tuple(cfg.sla_range),
        vlink_bw_range=tuple(cfg.vlink_bw_range))


def make_policy(algo: str, cfg: RunConfig, seed: int) -> BasePolicy:
    params = dict(cfg.agent_params.get(algo, {}))
    if algo == "gp":
        return GreedyPolicy()
    if algo == "ils":
        return IlsPolicy(seed=seed, **params)
    if algo == "rails":
        return RailsPolicy(seed=seed, **params)
    if algo == "paraddqn":
        return DdqnAgent(sequential=False, episodes=cfg.episodes, seed=seed, **params)
    if algo == "seqddqn":
        return DdqnAgent(sequential=True, episodes=cfg.episodes, seed=seed, **params)
    if algo == "sdac":
        return SdacAgent(episodes=cfg.episodes, seed=seed, **params)
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGOS}")


def load_policy(algo: str, path) -> BasePolicy:
    if algo in ("paraddqn", "seqddqn"):
        return DdqnAgent.load(path)
    if algo == "sdac":
        return SdacAgent.load(path)
    if algo == "rails":
        return RailsPolicy.load(path)
    raise ValueError(f"{algo!r} has no checkpoint form")


def train_run(cfg: RunConfig, algo: str, topology_seed: int, run_seed: int,
              out_dir=None) -> tuple[BasePolicy, list[dict]]:
    """Train (or just build) one policy on one topology; optional artifacts."""
    net = scenario_substrate(cfg, topology_seed)
    env = SfcEnv(net)
    policy = make_policy(algo, cfg, run_seed)
    eval_workload = scenario_workload(cfg, derived_rng(run_seed, 202))
    if policy.trainable:
        workload_fn = lambda ep: scenario_workload(cfg, derived_rng(run_seed, 101, ep))
        env.set_workload(workload_fn(0))
        policy.fit(env, workload_fn=workload_fn, eval_workload=eval_workload)
        history = list(policy.history_)
    else:
        policy.fit(env)
        history = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_learning_csv(out_dir / "learning.csv", history)
        if hasattr(policy, "save"):
            policy.save(out_dir / "checkpoint.npz")
        (out_dir / "meta.json").write_text(json.dumps(
            {"algo": algo, "topology_seed": topology_seed, "run_seed": run_seed},
            indent=2))
    return policy, history


def write_learning_csv(path, history: list[dict]) -> None:
    columns = ["episode", "epsilon", "loss_mean", "critic_loss_mean",
               "actor_loss_mean", "train_acceptance", "eval_reward"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in history:
            writer.writerow([
                "" if row.get(c) is None else row.get(c, "") for c in columns])


def evaluate_run(policy: BasePolicy, net: SubstrateNetwork, workload, cfg: RunConfig,
                 trace_path=None, record_timing: bool = False) -> list[MetricsRecord]:
    """Roll one workload through the env under ``policy``, recording a trace.

    Timing wraps only the policy's decision, not environment bookkeeping.
    """
    env = SfcEnv(net, workload)
    env.reset()
    records = []
    done = False
    index = 0
    total = len(workload)
    while not done:
        obs = env.observe()
        if record_timing:
            start = time.perf_counter_ns()
            targets = policy.predict(obs)
            elapsed = time.perf_counter_ns() - start
        else:
            targets = policy.predict(obs)
            elapsed = 0
        _, _, done = env.step(targets)
        outcome = env.last_outcome
        policy.observe_outcome(obs, targets, outcome)
        used, dc_total = env.utilization()
        records.append(MetricsRecord(
            index=index,
            t_arr=obs.request.t_arr,
            arrival_rate=modulated_rate(index, total, cfg.base_rate),
            verdict="accepted" if outcome.accepted else "rejected",
            cause=_CAUSE[outcome.verdict],
            e2e_latency=outcome.e2e_latency,
            dc_used=[float(u) for u in used],
            dc_total=[float(t) for t in dc_total],
            inference_ns=elapsed,
        ))
        index += 1
    if trace_path is not None:
        write_trace_csv(trace_path, records, net.num_dcs)
    return records


def bench_inference(policy: BasePolicy, net: SubstrateNetwork, workload,
                    cfg: RunConfig, warmup: int = 100) -> float:
    """Mean nanoseconds per decision, first ``warmup`` requests excluded."""
    records = evaluate_run(policy, net, workload, cfg, record_timing=True)
    timings = [r.inference_ns for r in records[warmup:]]
    if not timings:
        raise ValueError("workload shorter than the warmup span")
    return float(np.mean(timings))


def _run_score(cfg: RunConfig, algo: str, policy: BasePolicy, history: list[dict],
               net: SubstrateNetwork, run_seed: int) -> float:
    """Average evaluation reward of one training run."""
    rewards = [h["eval_reward"] for h in history if "eval_reward" in h]
    if rewards:
        return float(np.mean(rewards))
    env = SfcEnv(net)
    workload = scenario_workload(cfg, derived_rng(run_seed, 202))
    return evaluate_policy(env, policy, workload)


def orchestrate(cfg: RunConfig, out_dir) -> dict:
    """Full pipeline: train per topology, pick the median one, run test seeds.

    Per algorithm: one training run per topology seed, selection of the
    topology whose average evaluation reward is the (lower central) median,
    then one evaluation per test seed on that topology with aggregate means.
    Failures are recorded per algorithm without aborting the rest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report: dict = {"config": json.loads(cfg.to_json()), "algorithms": {}}
    for algo in cfg.algos:
        try:
            report["algorithms"][algo] = _orchestrate_algo(cfg, algo, out_dir)
        except Exception as err:  # keep the other algorithms running
            report["algorithms"][algo] = {"error": f"{type(err).__name__}: {err}"}
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    return report


def _orchestrate_algo(cfg: RunConfig, algo: str, out_dir: Path) -> dict:
    scores = []
    policies = {}
    for topo_seed in cfg.topology_seeds:
        run_dir = out_dir / "runs" / algo / f"topo{topo_seed}"
        policy, history = train_run(cfg, algo, topo_seed, topo_seed, out_dir=run_dir)
        net = scenario_substrate(cfg, topo_seed)
        scores.append(_run_score(cfg, algo, policy, history, net, topo_seed))
        policies[topo_seed] = policy
    order = np.argsort(scores, kind="stable")
    selected = cfg.topology_seeds[int(order[(len(order) - 1) // 2])]
    trained = policies[selected]
    net = scenario_substrate(cfg, selected)
    summaries = []
    for test_seed in cfg.test_seeds:
        if trained.trainable:
            policy = trained
        else:
            # Online/stochastic baselines restart per test seed.
            policy = make_policy(algo, cfg, test_seed)
            policy.fit(SfcEnv(net))
        workload = scenario_workload(cfg, derived_rng(test_seed, 303))
        trace = out_dir / "runs" / algo / f"test{test_seed}.csv"
        records = evaluate_run(policy, net, workload, cfg, trace_path=trace)
        summaries.append(summarize(records))
    means = {
        key: float(np.mean([s[key] for s in summaries]))
        for key in summaries[0]
        if summaries[0][key] is not None
    }
    return {
        "scores": [float(s) for s in scores],
        "median_score": float(np.median(scores)),
        "selected_topology": int(selected),
        "test_means": means,
        "test_runs": summaries,
    }
