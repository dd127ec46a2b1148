"""Common estimator surface for all partitioning policies."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ..env import Observation, SfcEnv


class BasePolicy(BaseEstimator):
    """fit/predict-style policy over admission observations.

    ``predict`` maps one :class:`Observation` to an integer assignment vector
    (one target DC per VNF).  Trainable agents override ``fit``; online
    methods may additionally react to admission verdicts through
    ``observe_outcome``.
    """

    algo = "base"
    trainable = False

    def fit(self, env: SfcEnv, workload_fn=None, eval_workload=None):
        return self

    def predict(self, obs: Observation) -> np.ndarray:
        raise NotImplementedError

    def observe_outcome(self, obs: Observation, targets: np.ndarray, outcome) -> None:
        pass


def evaluate_policy(env: SfcEnv, policy: BasePolicy, workload) -> float:
    """Greedy rollout of ``policy`` over ``workload``; returns acceptance rate."""
    env.set_workload(workload)
    env.reset()
    accepted = 0
    done = False
    while not done:
        obs = env.observe()
        targets = policy.predict(obs)
        reward, _, done = env.step(targets)
        policy.observe_outcome(obs, targets, env.last_outcome)
        accepted += reward
    return accepted / len(workload)
