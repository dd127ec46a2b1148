"""sfclab: a multi-domain service function chain partitioning laboratory."""

from .substrate import (CapacityError, DataCenter, GenerationError, Link,
                        SubstrateNetwork, all_pairs_latency, allocate_sfc,
                        generate_substrate, release)
from .traffic import SfcRequest, Vnf, generate_workload, modulated_rate
from .env import AdmissionOutcome, Observation, SfcEnv, Verdict, e2e_latency, encode_state
from .agents import BasePolicy, DdqnAgent, SdacAgent, arn_normalize, epsilon_lope, evaluate_policy
from .baselines import GreedyPolicy, IlsPolicy, RailsPolicy, gp_assign, ils_solve
from .harness import RunConfig, bench_inference, evaluate_run, orchestrate, train_run
from .metrics import (MetricsRecord, acceptance_over_time, average_acceptance,
                      avg_utilization, load_perplexity, violation_breakdown)

__version__ = "0.1.0"

__all__ = [
    "SubstrateNetwork", "DataCenter", "Link", "GenerationError", "CapacityError",
    "generate_substrate", "all_pairs_latency", "allocate_sfc", "release",
    "SfcRequest", "Vnf", "generate_workload", "modulated_rate",
    "SfcEnv", "Observation", "AdmissionOutcome", "Verdict", "encode_state", "e2e_latency",
    "BasePolicy", "DdqnAgent", "SdacAgent", "arn_normalize", "epsilon_lope",
    "evaluate_policy",
    "GreedyPolicy", "IlsPolicy", "RailsPolicy", "gp_assign", "ils_solve",
    "RunConfig", "train_run", "evaluate_run", "bench_inference", "orchestrate",
    "MetricsRecord", "average_acceptance", "acceptance_over_time",
    "violation_breakdown", "avg_utilization", "load_perplexity",
    "__version__",
]
