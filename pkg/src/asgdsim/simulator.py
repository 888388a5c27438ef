"""The discrete-event engine: worker/PS timelines and staleness accounting.

One run is a single-threaded, totally ordered event loop. Every worker starts
at t=0 holding the initial model, computes a mini-batch gradient on its held
copy (uniform compute time), and its message lands at the server after an
exponential communication delay. On arrival the server applies the update,
producing version n from n-1 with a gradient of version k, records staleness
n-1-k, and the sender instantly receives the fresh model and starts over.
Identical config and seed give bit-identical results.

Budget semantics: "shared" stops after a total number of applied updates
(workers never retire; in-flight messages at the end are dropped);
"per_worker" gives each worker an equal slice of the budget and retires it
when its slice is exhausted, mirroring per-worker delay/update sequences.
"""

from __future__ import annotations

import heapq
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, build_objective
from .delaymodel import (DelayConfig, WorkerTimingProfile, build_profiles,
                         next_comm_delay, next_compute_time)
from .metrics import MuEstimate, RunRecord, update_mu
from .numkit import (RngStream, STREAM_DATA, STREAM_INIT, norm_sq,
                     worker_stream)
from .objectives import Objective, sample_minibatch
from .optimizer import UpdateRule, apply_update, lr_at
from .sparsifier import MemoryState, rho_to_k


@dataclass(frozen=True)
class Event:
    """A gradient arrival at the parameter server."""

    time: float
    worker_id: int
    model_version_used: int


@dataclass(frozen=True)
class StalenessRecord:
    update_index: int   # n, 1-based version produced by this update
    staleness: int      # n - 1 - k
    arrival_time: float


@dataclass
class PsState:
    version: int
    x: np.ndarray
    update_rule: UpdateRule


@dataclass
class WorkerSimState:
    worker_id: int
    held_version: int
    held_x: np.ndarray
    timing: WorkerTimingProfile
    memory: MemoryState | None = None
    quota: int | None = None           # per_worker mode only
    # in-flight gradient bookkeeping
    pending_gradient: np.ndarray | None = None
    pending_loss: float = 0.0
    pending_version: int = 0


@dataclass
class RunResult:
    config: RunConfig
    final_x: np.ndarray
    records: list
    staleness_records: list
    profiles: list
    mu: MuEstimate
    max_staleness: int
    final_loss: float
    accuracy: float | None = None
    runtime_s: float = 0.0
    iterates: list | None = None


def staleness_histogram(records) -> dict[int, int]:
    """Counts per staleness value; counts sum to the number of PS updates."""
    values = _staleness_values(records)
    hist: dict[int, int] = {}
    for v in values:
        hist[int(v)] = hist.get(int(v), 0) + 1
    return hist


def avg_staleness(records) -> float:
    values = _staleness_values(records)
    if values.size == 0:
        raise ValueError("no staleness records")
    return float(values.mean())


def _staleness_values(records) -> np.ndarray:
    if isinstance(records, RunResult):
        records = records.staleness_records
    if isinstance(records, np.ndarray):
        return records
    out = []
    for r in records:
        out.append(r.staleness)
    return np.asarray(out, dtype=np.int64)


def run_simulation(config: RunConfig, objective: Objective | None = None,
                   test_data=None, delay_source=None,
                   retain_iterates: bool = False) -> RunResult:
    """Execute one full run; see the module docstring for the semantics."""
    wall_start = _time.perf_counter()
    if objective is None:
        objective, built_test = build_objective(config)
        if test_data is None:
            test_data = built_test
    n = objective.n_samples
    d = objective.dim
    budget = config.total_budget(n)
    n_workers = config.workers
    if n_workers < 1:
        raise ValueError("zero workers")
    if budget < 1:
        raise ValueError("zero update budget")

    delay_cfg = DelayConfig(delay_variance=config.delay_variance,
                            compute_lo=config.compute_lo,
                            compute_hi=config.compute_hi, seed=config.seed)
    profiles = build_profiles(delay_cfg, n_workers)
    schedule = config.schedule()
    k = d if config.variant == "asgd" else rho_to_k(config.rho, d)
    rule = UpdateRule(variant=config.variant, k=k, momentum=config.momentum)

    init_rng = RngStream(config.seed, STREAM_INIT)
    data_rng = RngStream(config.seed, STREAM_DATA)
    worker_rngs = [worker_stream(config.seed, i) for i in range(n_workers)]

    x0 = objective.init_point(init_rng)
    ps = PsState(version=0, x=x0, update_rule=rule)

    quotas = None
    if config.budget_mode == "per_worker":
        quotas = [budget // n_workers] * n_workers
        for i in range(budget % n_workers):
            quotas[i] += 1

    workers = []
    for i in range(n_workers):
        workers.append(WorkerSimState(
            worker_id=i, held_version=0, held_x=x0, timing=profiles[i],
            memory=MemoryState.zeros(d) if config.variant == "phimemsgd" else None,
            quota=None if quotas is None else quotas[i]))

    heap: list[tuple[float, int, int]] = []
    push_seq = 0

    def draw_batch():
        if config.batch_size >= n:
            return np.arange(n, dtype=np.int64)
        return sample_minibatch(data_rng, n, config.batch_size).indices

    def start_gradient(w: WorkerSimState, now: float):
        nonlocal push_seq
        idx = draw_batch()
        w.pending_loss, w.pending_gradient = _loss_and_gradient(objective, w.held_x, idx)
        w.pending_version = w.held_version
        if delay_source is not None:
            compute = delay_source.compute_time(w.worker_id)
            comm = delay_source.comm_delay(w.worker_id)
        else:
            rng = worker_rngs[w.worker_id]
            compute = next_compute_time(delay_cfg, rng)
            comm = next_comm_delay(w.timing, rng)
        heapq.heappush(heap, (now + compute + comm, w.worker_id, push_seq))
        push_seq += 1

    for w in workers:
        if w.quota is None or w.quota > 0:
            start_gradient(w, 0.0)

    records: list[RunRecord] = []
    stal_records: list[StalenessRecord] = []
    mu_est = MuEstimate()
    iterates = [x0.copy()] if retain_iterates else None
    sample_period = config.sample_period
    applied = 0
    max_tau = 0

    while applied < budget and heap:
        now, wid, _ = heapq.heappop(heap)
        w = workers[wid]
        g = w.pending_gradient
        t_index = ps.version                    # this update produces version t+1
        tau = t_index - w.pending_version       # n - 1 - k
        eta = lr_at(schedule, t_index)

        sampled = sample_period > 0 and t_index % sample_period == 0
        full_grad = fg_sq = stale_sq = None
        if sampled:
            full_grad = objective.full_gradient(ps.x)
            fg_sq = norm_sq(full_grad)
            stale_sq = fg_sq if tau == 0 else norm_sq(objective.full_gradient(w.held_x))

        x_next, transmitted, mem_next = apply_update(rule, ps.x, g, w.memory, eta)

        cos_t = None
        if sampled:
            mu_est, cos_t = update_mu(mu_est, transmitted, full_grad)

        records.append(RunRecord(
            t=t_index, staleness=tau, eta=eta, train_loss=w.pending_loss,
            mb_grad_norm_sq=norm_sq(g), sim_time=now,
            full_grad_norm_sq=fg_sq, stale_grad_norm_sq=stale_sq,
            cos_t=cos_t, mu_hat=mu_est.mu_hat if sampled else None))

        ps.version += 1
        ps.x = x_next
        applied += 1
        max_tau = max(max_tau, tau)
        stal_records.append(StalenessRecord(ps.version, tau, now))
        if retain_iterates:
            iterates.append(ps.x.copy())

        w.held_version = ps.version
        w.held_x = ps.x
        w.memory = mem_next
        w.pending_gradient = None

        if w.quota is not None:
            w.quota -= 1
            if w.quota > 0:
                start_gradient(w, now)
        elif applied < budget:
            start_gradient(w, now)

    if applied < budget:
        raise RuntimeError(f"budget {budget} not reached: only {applied} updates "
                           "(scripted delays exhausted?)")

    acc = None
    if test_data is not None and hasattr(objective, "predict"):
        from .objectives import accuracy as _accuracy
        acc = _accuracy(objective, ps.x, test_data)

    return RunResult(config=config, final_x=ps.x, records=records,
                     staleness_records=stal_records, profiles=profiles,
                     mu=mu_est, max_staleness=max_tau,
                     final_loss=objective.loss(ps.x), accuracy=acc,
                     runtime_s=_time.perf_counter() - wall_start,
                     iterates=iterates)


def _loss_and_gradient(objective: Objective, x: np.ndarray, idx: np.ndarray):
    fused = getattr(objective, "loss_and_gradient", None)
    if fused is not None:
        return fused(x, idx)
    return objective.loss(x, idx), objective.minibatch_gradient(x, idx)
