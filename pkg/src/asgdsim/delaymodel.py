"""Per-worker communication delays and computation times.

Each worker gets a fixed exponential rate for its message latency, with the
log-rates drawn once from Normal(0, delay_variance). Computation times are
uniform on a small support, modeling a homogeneous cluster. A scripted source
replaces the stochastic draws in golden tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import (RngStream, STREAM_PROFILES, sample_exponential,
                     sample_uniform)


@dataclass(frozen=True)
class DelayConfig:
    """Knobs of the delay model.

    delay_variance is the variance of ln(rate) -- the paper's delay-side
    sigma-squared, deliberately named apart from any gradient variance.
    """

    delay_variance: float = 0.1
    compute_lo: float = 0.9
    compute_hi: float = 1.1
    seed: int = 0

    def __post_init__(self):
        if self.delay_variance < 0:
            raise ValueError("delay_variance must be non-negative")
        if not 0 <= self.compute_lo <= self.compute_hi:
            raise ValueError("need 0 <= compute_lo <= compute_hi")


@dataclass(frozen=True)
class WorkerTimingProfile:
    worker_id: int
    rate: float  # exponential rate of this worker's comm delays, fixed per run

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")


def build_profiles(cfg: DelayConfig, n_workers: int) -> list[WorkerTimingProfile]:
    """Draw each worker's rate = exp(Normal(0, delay_variance)), independently."""
    if n_workers < 1:
        raise ValueError("need at least one worker")
    rng = RngStream(cfg.seed, STREAM_PROFILES)
    sd = float(np.sqrt(cfg.delay_variance))
    rates = np.exp(rng.generator.normal(0.0, sd, size=n_workers)) if sd > 0 \
        else np.ones(n_workers)
    return [WorkerTimingProfile(i, float(r)) for i, r in enumerate(rates)]


def next_comm_delay(profile: WorkerTimingProfile, rng: RngStream) -> float:
    return sample_exponential(rng, profile.rate)


def next_compute_time(cfg: DelayConfig, rng: RngStream) -> float:
    return sample_uniform(rng, cfg.compute_lo, cfg.compute_hi)


class ScriptedDelaySource:
    """Deterministic comm delays for golden tests; compute time is zero.

    The script is a sequence of (worker_id, delay) pairs, consumed per worker
    in order. Running past a worker's scripted entries is an error.
    """

    def __init__(self, pairs: list[tuple[int, float]]):
        self._queues: dict[int, list[float]] = {}
        for wid, delay in pairs:
            self._queues.setdefault(int(wid), []).append(float(delay))
        for q in self._queues.values():
            q.reverse()  # pop from the end

    @classmethod
    def from_file(cls, path: str) -> "ScriptedDelaySource":
        """Parse 'worker_id delay' pairs, one per line; '#' starts a comment."""
        pairs = []
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                parts = body.split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'worker_id delay'")
                pairs.append((int(parts[0]), float(parts[1])))
        return cls(pairs)

    def comm_delay(self, worker_id: int) -> float:
        q = self._queues.get(worker_id)
        if not q:
            raise ValueError(f"scripted delays exhausted for worker {worker_id}")
        return q.pop()

    def compute_time(self, worker_id: int) -> float:
        return 0.0
