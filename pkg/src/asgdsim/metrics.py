"""Online analysis quantities and the convergence-bound evaluators.

Tracks the alignment ratio between transmitted (sparsified, stale) gradients
and the true full gradient, evaluates the ergodic-convergence bound for both
the decreasing and the constant learning-rate schedules, and owns the CSV
schema every run emits.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .numkit import norm_sq
from .optimizer import LrSchedule, lr_at
from .sparsifier import SparseUpdate

CSV_COLUMNS = ["run_id", "variant", "rho", "workers", "delay_variance", "seed",
               "t", "staleness", "eta", "train_loss", "mb_grad_norm_sq",
               "full_grad_norm_sq", "cos_t", "mu_hat"]


class BoundInapplicableError(RuntimeError):
    """The bound denominator is not positive for the supplied schedule."""


@dataclass(frozen=True)
class RunRecord:
    """One row per PS update; full-gradient fields only at sampled indices."""

    t: int
    staleness: int
    eta: float
    train_loss: float
    mb_grad_norm_sq: float
    sim_time: float
    full_grad_norm_sq: float | None = None
    stale_grad_norm_sq: float | None = None  # internal; not part of the CSV schema
    cos_t: float | None = None
    mu_hat: float | None = None


@dataclass(frozen=True)
class MuEstimate:
    """Ratio-of-expectations alignment estimate.

    mu_hat = (mean of <u, grad f>) / (mean of ||u|| * ||grad f||) over the
    window (cumulative when window is None). Updates against a zero full
    gradient are skipped and counted.
    """

    num: float = 0.0
    den: float = 0.0
    count: int = 0
    skipped: int = 0
    window: int | None = None
    history: deque = field(default_factory=deque, repr=False, compare=False)

    @property
    def mu_hat(self) -> float | None:
        return self.num / self.den if self.den > 0 else None


def update_mu(est: MuEstimate, sparse_g: SparseUpdate | np.ndarray,
              full_grad: np.ndarray) -> tuple[MuEstimate, float | None]:
    """Fold one update into the estimate; returns (new_estimate, cos_t)."""
    u = sparse_g.densify() if isinstance(sparse_g, SparseUpdate) else sparse_g
    fg_norm = float(np.linalg.norm(full_grad))
    if fg_norm == 0.0:
        return replace(est, skipped=est.skipped + 1), None
    u_norm = float(np.linalg.norm(u))
    num_i = float(np.dot(u, full_grad))
    den_i = u_norm * fg_norm
    cos_t = num_i / den_i if den_i > 0 else 0.0
    num, den, count = est.num + num_i, est.den + den_i, est.count + 1
    hist = est.history
    if est.window is not None:
        hist = deque(est.history)
        hist.append((num_i, den_i))
        while len(hist) > est.window:
            old_num, old_den = hist.popleft()
            num -= old_num
            den -= old_den
            count -= 1
    return MuEstimate(num, den, count, est.skipped, est.window, hist), cos_t


@dataclass(frozen=True)
class BoundInputs:
    """Measured/analytic constants feeding the convergence bounds."""

    lipschitz: float
    grad_variance: float
    mu: float
    rho: float
    big_lambda: float       # f(x_0) - inf f
    delayed_const: float    # the extra mass carried by delayed-gradient sums
    horizon: int

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")
        if not 0.0 < self.mu <= 1.0:
            raise ValueError("mu must be in (0, 1]")
        for name in ("lipschitz", "grad_variance", "big_lambda", "delayed_const"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


def theorem_bound(inputs: BoundInputs, lr_schedule: LrSchedule) -> float:
    """General-schedule bound on min_t E||grad f(x_t)||^2.

    (sum_t eta_t^2 L sigma^2 / 2 + Lambda + C) / sum_t (eta_t rho mu - eta_t^2 L / 2),
    summed over t = 0..T-1. Raises if the denominator is not positive.
    """
    L, s2 = inputs.lipschitz, inputs.grad_variance
    num = inputs.big_lambda + inputs.delayed_const
    den = 0.0
    for t in range(inputs.horizon):
        eta = lr_at(lr_schedule, t)
        num += 0.5 * eta * eta * L * s2
        den += eta * inputs.rho * inputs.mu - 0.5 * eta * eta * L
    if den <= 0:
        raise BoundInapplicableError(
            f"bound denominator {den} <= 0; schedule too aggressive for L={L}")
    return num / den


def corollary_bound(inputs: BoundInputs) -> float:
    """Constant-schedule bound with eta = rho*mu/(L*sqrt(T)).

    Uses the exact sqrt(T) - 1/2 denominator (pre-simplification form), so it
    agrees with theorem_bound under the matching constant schedule.
    """
    rm = inputs.rho * inputs.mu
    lead = 0.5 * inputs.grad_variance + \
        (inputs.big_lambda + inputs.delayed_const) * inputs.lipschitz / (rm * rm)
    return lead / (np.sqrt(float(inputs.horizon)) - 0.5)


def theorem_schedule(inputs: BoundInputs) -> LrSchedule:
    """The decreasing schedule rho*mu/(L*sqrt(t+1)) from the bound's inputs."""
    return LrSchedule(kind="inverse_sqrt", rho=inputs.rho, mu=inputs.mu,
                      lipschitz=inputs.lipschitz)


def constant_schedule(inputs: BoundInputs) -> LrSchedule:
    """The constant schedule rho*mu/(L*sqrt(T)) from the bound's inputs."""
    return LrSchedule(kind="theorem_constant", rho=inputs.rho, mu=inputs.mu,
                      lipschitz=inputs.lipschitz, horizon=inputs.horizon)


def sampled_norms(records) -> tuple[np.ndarray, np.ndarray]:
    """(t, ||grad f(x_t)||^2) pairs at the sampled indices of one run."""
    ts, vals = [], []
    for r in records:
        if r.full_grad_norm_sq is not None:
            ts.append(r.t)
            vals.append(r.full_grad_norm_sq)
    return np.asarray(ts, dtype=np.int64), np.asarray(vals)


def min_grad_norm_sq(records_by_seed) -> float:
    """Min over sampled t of the seed-averaged full-gradient norm^2.

    Accepts a single run's records or a list of runs (seed repeats); repeats
    are averaged index-wise before the min, as an expectation proxy.
    """
    if not records_by_seed:
        raise ValueError("no records")
    if not isinstance(records_by_seed[0], (list, tuple)):
        records_by_seed = [records_by_seed]
    series = []
    ref_ts = None
    for records in records_by_seed:
        ts, vals = sampled_norms(records)
        if vals.size == 0:
            raise ValueError("run has no sampled full-gradient norms")
        if ref_ts is None:
            ref_ts = ts
        elif not np.array_equal(ref_ts, ts):
            raise ValueError("seed repeats sampled different indices")
        series.append(vals)
    return float(np.mean(series, axis=0).min())


def estimate_C(records, lr_schedule: LrSchedule, sample_period: int) -> float:
    """Empirical delayed-gradient constant.

    max(0, sum_t eta_t^2 (||grad f(x_tau_t)||^2 - ||grad f(x_t)||^2)) over the
    sampled indices, scaled by the sampling period to cover the full horizon.
    """
    if sample_period < 1:
        raise ValueError("sample_period must be >= 1")
    acc = 0.0
    seen = False
    for r in records:
        if r.full_grad_norm_sq is None or r.stale_grad_norm_sq is None:
            continue
        seen = True
        eta = lr_at(lr_schedule, r.t)
        acc += eta * eta * (r.stale_grad_norm_sq - r.full_grad_norm_sq)
    if not seen:
        raise ValueError("records carry no sampled stale/current gradient norms")
    return max(0.0, acc * sample_period)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_csv(path: str, meta: dict, records) -> None:
    """Write one run's records under the fixed schema; header is mandatory."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([
                _fmt(meta.get("run_id", "")), _fmt(meta.get("variant", "")),
                _fmt(meta.get("rho", "")), _fmt(meta.get("workers", "")),
                _fmt(meta.get("delay_variance", "")), _fmt(meta.get("seed", "")),
                _fmt(r.t), _fmt(r.staleness), _fmt(r.eta), _fmt(r.train_loss),
                _fmt(r.mb_grad_norm_sq), _fmt(r.full_grad_norm_sq),
                _fmt(r.cos_t), _fmt(r.mu_hat),
            ])
