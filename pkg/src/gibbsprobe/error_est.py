"""Replicate-based estimate of finite-sample reconstruction error.

Given a reference model, draw ``R`` independent sets of ``M`` samples from
its exact distribution, relearn each, and summarize the deviations
``reference - learned`` per term. The significance threshold is three times
the average per-term standard deviation.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .iso import ConvergenceError, DegenerateDataError, LearnConfig, learn_model
from .model import GibbsModel, exact_distribution
from .sampler import child_seeds, sample_exact

log = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.10


class ReplicateFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ErrorReport:
    keys: list
    mean: np.ndarray
    sigma: np.ndarray
    R: int
    M: int
    n_failed: int = 0

    @property
    def threshold(self) -> float:
        return 3.0 * float(np.mean(self.sigma))

    def term(self, key):
        i = self.keys.index(tuple(key))
        return float(self.mean[i]), float(self.sigma[i])

    def to_dict(self) -> dict:
        return {
            "R": self.R, "M": self.M, "n_failed": self.n_failed, "threshold": self.threshold,
            "terms": [{"spins": list(k), "mean": float(m), "sigma": float(s)}
                      for k, m, s in zip(self.keys, self.mean, self.sigma)],
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["term", "mean", "sigma"])
            for k, m, s in zip(self.keys, self.mean, self.sigma):
                w.writerow(["-".join(map(str, k)), repr(float(m)), repr(float(s))])


def all_keys(n_spins, order):
    return [c for r in range(1, order + 1) for c in combinations(range(n_spins), r)]


def estimate_error(reference: GibbsModel, M: int, R: int, config: LearnConfig = LearnConfig(),
                   seed=None, workers: int | None = None) -> ErrorReport:
    """Run ``R`` sample-and-relearn replicates against ``reference``.

    Replicate ``r`` uses the ``r``-th stream spawned from ``seed``, so the
    report does not depend on execution order. Failed replicates are dropped
    and counted; more than 10% failures is an error.
    """
    if R < 2:
        raise ValueError("at least two replicates are needed")
    dist = exact_distribution(reference)
    keys = all_keys(reference.n_spins, config.order)
    ref = np.array([reference[k] for k in keys])
    seeds = child_seeds(seed, R)

    def replicate(r):
        samples = sample_exact(dist, M, seeds[r])
        try:
            learned = learn_model(samples, config)
        except (ConvergenceError, DegenerateDataError) as exc:
            log.warning("replicate %d failed: %s", r, exc)
            return None
        return ref - np.array([learned[k] for k in keys])

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            devs = list(pool.map(replicate, range(R)))
    else:
        devs = [replicate(r) for r in range(R)]
    good = [d for d in devs if d is not None]
    n_failed = R - len(good)
    if n_failed > MAX_FAILED_FRACTION * R or len(good) < 2:
        raise ReplicateFailure(f"{n_failed} of {R} replicates failed to converge")
    devs = np.array(good)
    return ErrorReport(keys, devs.mean(axis=0), devs.std(axis=0, ddof=1), R, int(M), n_failed)


def significance_mask(learned: GibbsModel, report: ErrorReport) -> set:
    """Terms whose magnitude is strictly above the report's threshold."""
    thr = report.threshold
    return {k for k, v in learned.terms.items() if abs(v) > thr}
