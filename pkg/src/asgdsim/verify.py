"""Reusable property/golden check suites behind `asgdsim verify`.

Each suite returns (passed, details). The acceptance tests reuse these
helpers at their full sizes; the CLI runs them at fast sizes by default.
"""

from __future__ import annotations

import math

import numpy as np

from .config import RunConfig
from .delaymodel import ScriptedDelaySource
from .metrics import BoundInputs, constant_schedule, corollary_bound, theorem_bound
from .numkit import RngStream
from .objectives import synthetic_quadratic
from .optimizer import LrSchedule
from .simulator import run_simulation
from .sparsifier import (MemoryState, check_k_contraction, check_lower_bound,
                         memory_combine, top_k, top_k_indices)

DELAY_GRID = (0.1, 1.0, 3.0)


def top_k_oracle_indices(u: np.ndarray, k: int) -> np.ndarray:
    """Reference O(d log d) selection: full stable sort by (|u| desc, index asc)."""
    order = np.lexsort((np.arange(u.shape[0]), -np.abs(u)))
    return np.sort(order[:k])


def sparsifier_laws(n_vectors: int, dims=(1, 2, 7, 64, 256), seed: int = 0,
                    rel_slack: float = 1e-12):
    """Contraction + lower-bound laws and oracle agreement over a (d, k) grid.

    Returns (passed, n_checked, first_failure_description).
    """
    gen = RngStream(seed, 0).generator
    checked = 0
    for d in dims:
        ks = sorted({1, math.ceil(d / 4), math.ceil(d / 2), d})
        mats = gen.normal(0.0, 1.0, size=(n_vectors, d))
        # sprinkle exact ties and zeros to stress the tie rule
        mats[:: max(1, n_vectors // 7), : max(1, d // 2)] = 1.0
        mats[1:: max(1, n_vectors // 11), -1] = 0.0
        for k in ks:
            frac = k / d
            for row in mats:
                idx = top_k_indices(row, k)
                oracle = top_k_oracle_indices(row, k)
                if not np.array_equal(idx, oracle):
                    return False, checked, f"oracle mismatch d={d} k={k}"
                total = float(np.dot(row, row))
                kept = row[idx]
                kept_sq = float(np.dot(kept, kept))
                resid = total - kept_sq
                if resid > (1.0 - frac) * total + rel_slack * max(1.0, total):
                    return False, checked, f"contraction violated d={d} k={k}"
                if kept_sq < frac * total - rel_slack * max(1.0, total):
                    return False, checked, f"lower bound violated d={d} k={k}"
                checked += 1
    return True, checked, ""


def memory_conservation(steps: int = 1000, dim: int = 64, k: int = 7, seed: int = 1):
    """densify(update) + m_{t+1} == m_t + g_t bit-exactly at every step."""
    gen = RngStream(seed, 0).generator
    mem = MemoryState.zeros(dim)
    for _ in range(steps):
        g = gen.normal(0.0, 1.0, size=dim) * gen.uniform(0.1, 10.0)
        combined = mem.m + g
        update, mem = memory_combine(mem, g, k)
        if not np.array_equal(update.densify() + mem.m, combined):
            return False, "conservation broken"
        if update.nnz() != k:
            return False, f"expected {k} transmitted entries, got {update.nnz()}"
    return True, ""


def memory_identity_matches_asgd(budget: int = 60, seed: int = 5):
    """With k = d the memory stays zero and iterates match plain asgd bit-for-bit."""
    base = dict(objective="quadratic", dim=12, n_train=64, workers=3,
                budget=budget, batch_size=8, lr=0.05, seed=seed, sample_period=0)
    res_asgd = run_simulation(RunConfig(variant="asgd", **base))
    res_mem = run_simulation(RunConfig(variant="phimemsgd", rho=1.0, **base))
    res_phi = run_simulation(RunConfig(variant="phisgd", rho=1.0, **base))
    same_mem = np.array_equal(res_asgd.final_x, res_mem.final_x)
    same_phi = np.array_equal(res_asgd.final_x, res_phi.final_x)
    return same_mem and same_phi, f"mem={same_mem} phi={same_phi}"


def appendix_b_sequence(script_path: str | None = None):
    """Scripted 3-worker run reproducing the worked-example staleness 0,1,2,2,2."""
    if script_path:
        src = ScriptedDelaySource.from_file(script_path)
    else:
        src = ScriptedDelaySource([(0, 1.0), (1, 2.0), (2, 2.5),
                                   (0, 3.0), (1, 3.0), (0, 10.0), (2, 10.0)])
    cfg = RunConfig(objective="quadratic", dim=4, n_train=16, workers=3,
                    budget=5, batch_size=4, sample_period=0, seed=7)
    res = run_simulation(cfg, delay_source=src)
    got = [r.staleness for r in res.records]
    return got == [0, 1, 2, 2, 2], f"got {got}"


class _ConstantDelaySource:
    """Equal deterministic delays: the homogeneous round-robin regime."""

    def __init__(self, delay: float = 1.0, compute: float = 0.0):
        self.delay = delay
        self.compute = compute

    def comm_delay(self, worker_id: int) -> float:
        return self.delay

    def compute_time(self, worker_id: int) -> float:
        return self.compute


def homogeneous_staleness(n_workers: int, budget: int = 120):
    """After warmup, staleness is exactly n_workers - 1 on every update."""
    cfg = RunConfig(objective="quadratic", dim=4, n_train=16, workers=n_workers,
                    budget=budget, batch_size=4, sample_period=0, seed=2)
    res = run_simulation(cfg, delay_source=_ConstantDelaySource())
    taus = [r.staleness for r in res.records]
    warmup, steady = taus[:n_workers], taus[n_workers:]
    ok = all(t == n_workers - 1 for t in steady) and \
        all(t <= n_workers - 1 for t in warmup)
    return ok, f"steady={sorted(set(steady))} warmup={warmup}"


def single_worker_staleness(budget: int = 50):
    cfg = RunConfig(objective="quadratic", dim=4, n_train=16, workers=1,
                    budget=budget, batch_size=4, sample_period=0, seed=2)
    res = run_simulation(cfg)
    taus = {r.staleness for r in res.records}
    return taus == {0}, f"staleness values {taus}"


def staleness_study(n_workers: int = 8, budget: int = 4687, seeds=range(5),
                    budget_mode: str = "shared", variances=DELAY_GRID):
    """Seed-averaged mean staleness per delay variance."""
    out = {}
    for var in variances:
        vals = []
        for s in seeds:
            cfg = RunConfig(objective="quadratic", dim=2, n_train=8,
                            workers=n_workers, budget=budget, batch_size=2,
                            delay_variance=var, seed=1000 + s,
                            budget_mode=budget_mode, sample_period=0, lr=1e-4)
            res = run_simulation(cfg)
            vals.append(float(np.mean([r.staleness for r in res.records])))
        out[var] = float(np.mean(vals))
    return out


def bound_formula_checks():
    """Plug-in values plus theorem/corollary agreement for constant schedules."""
    # worked plug-in: constant eta = 1/sqrt(T), T = 4
    inputs = BoundInputs(lipschitz=1.0, grad_variance=2.0, mu=1.0, rho=1.0,
                         big_lambda=1.0, delayed_const=0.0, horizon=4)
    sched = LrSchedule(kind="theorem_constant", rho=1.0, mu=1.0, lipschitz=1.0,
                       horizon=4)
    got = theorem_bound(inputs, sched)
    if abs(got - 4.0 / 3.0) > 1e-12:
        return False, f"plug-in theorem bound {got} != 4/3"
    got_c = corollary_bound(inputs)
    if abs(got_c - 4.0 / 3.0) > 1e-12:
        return False, f"plug-in corollary bound {got_c} != 4/3"
    zero = BoundInputs(lipschitz=1.0, grad_variance=0.0, mu=1.0, rho=1.0,
                       big_lambda=0.0, delayed_const=0.0, horizon=4)
    if theorem_bound(zero, sched) != 0.0 or corollary_bound(zero) != 0.0:
        return False, "zero numerator should give a zero bound"
    for T in (4, 100, 10_000):
        inp = BoundInputs(lipschitz=2.5, grad_variance=1.7, mu=0.6, rho=0.3,
                          big_lambda=3.0, delayed_const=0.4, horizon=T)
        th = theorem_bound(inp, constant_schedule(inp))
        co = corollary_bound(inp)
        if abs(th - co) > 1e-9 * max(1.0, abs(co)):
            return False, f"theorem/corollary disagree at T={T}: {th} vs {co}"
    return True, ""


def gradient_checks(points: int = 5, coords: int = 20, h: float = 1e-5,
                    tol: float = 1e-5, seed: int = 3):
    """Central finite differences vs analytic gradients for every kind."""
    from .datasets import synthetic_blobs, synthetic_image_task
    from .objectives import LogisticObjective, MlpObjective

    objs = [
        synthetic_quadratic(10, 32, (0.5, 1.0, 4.0), seed=seed),
        synthetic_quadratic(10, 32, (0.1, 2.0), seed=seed, eps=0.5),
        LogisticObjective(synthetic_blobs(2, 48, 6, 1.0, seed)),
        MlpObjective(synthetic_image_task(40, seed, p=20), hidden=8),
    ]
    gen = RngStream(seed, 1).generator
    worst = 0.0
    for obj in objs:
        for _ in range(points):
            x = gen.normal(0.0, 0.5, size=obj.dim)
            idx = gen.integers(0, obj.n_samples, size=min(16, obj.n_samples))
            g = obj.minibatch_gradient(x, idx)
            for j in gen.choice(obj.dim, size=min(coords, obj.dim), replace=False):
                xp = x.copy(); xp[j] += h
                xm = x.copy(); xm[j] -= h
                fd = (obj.loss(xp, idx) - obj.loss(xm, idx)) / (2 * h)
                rel = abs(g[j] - fd) / max(abs(g[j]), abs(fd), 1e-4)
                worst = max(worst, rel)
                if rel > tol:
                    return False, f"{obj.kind}: coord {j} rel err {rel:.2e}", worst
    return True, "", worst
