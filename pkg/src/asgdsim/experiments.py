"""Experiment protocols: bound verification and desk-scale training studies.

The bound study instruments runs of the analytic non-convex objective with
everything the convergence bound needs: exact smoothness constant and global
infimum, Monte-Carlo gradient variance, a pilot-run alignment constant, and
the empirical delayed-gradient constant. The training study drives the MLP
task across variants, sparsification levels, and seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig, build_objective
from .datasets import Dataset, find_mnist, synthetic_image_task
from .metrics import (BoundInputs, estimate_C, sampled_norms, theorem_bound,
                      theorem_schedule)
from .numkit import RngStream, STREAM_INIT
from .objectives import MlpObjective, estimate_gradient_variance
from .simulator import run_simulation

BOUND_DIM = 50
BOUND_SPECTRUM = (0.1, 5.0)
BOUND_EPS = 0.5
BOUND_SPREAD = 5.0
BOUND_INIT_SCALE = 0.15
BOUND_BATCH = 4
BOUND_SAMPLE_PERIOD = 10


def bound_run_config(workers: int, rho: float, horizon: int, seed: int) -> RunConfig:
    """Memory-less sparsified run on the verification objective (d = 50)."""
    return RunConfig(objective="perturbed_quadratic", dim=BOUND_DIM,
                     n_train=256, spectrum=BOUND_SPECTRUM, eps=BOUND_EPS,
                     center_spread=BOUND_SPREAD, init_scale=BOUND_INIT_SCALE,
                     variant="phisgd", rho=rho, workers=workers,
                     delay_variance=0.1, batch_size=BOUND_BATCH,
                     budget=horizon, seed=seed,
                     sample_period=BOUND_SAMPLE_PERIOD,
                     lr_schedule="inverse_sqrt", lr_mu=1.0, momentum=0.0)


def pilot_mu(cfg: RunConfig, percentile: float = 10.0) -> float:
    """Alignment constant from a pilot run: the stated percentile of the
    running ratio estimate, measured under the provisional schedule (mu = 1)."""
    res = run_simulation(replace(cfg, lr_mu=1.0))
    series = [r.mu_hat for r in res.records if r.mu_hat is not None]
    if not series:
        raise RuntimeError("pilot run sampled no alignment values")
    mu = float(np.percentile(series, percentile))
    if mu <= 0:
        raise RuntimeError(f"pilot alignment percentile is non-positive ({mu})")
    return min(1.0, mu)


@dataclass(frozen=True)
class BoundCase:
    """One (horizon, evidence) pair of a bound family."""

    horizon: int
    min_grad_norm: float
    delayed_const: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.min_grad_norm <= self.bound


@dataclass(frozen=True)
class BoundFamily:
    """All horizons of one (workers, rho) configuration.

    The decreasing schedule is horizon-free, so a single seed family run to
    the largest horizon yields every shorter horizon as a prefix: exactly the
    min-over-prefix quantity the rate claim is about. mu comes from one pilot
    at the largest horizon; the delayed-gradient constant is estimated per
    prefix; the bound's sums use each prefix's own horizon.
    """

    workers: int
    rho: float
    mu: float
    lipschitz: float
    grad_variance: float
    big_lambda: float
    cases: tuple

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.cases)

    def minima(self) -> list[float]:
        return [c.min_grad_norm for c in self.cases]

    def horizons(self) -> list[int]:
        return [c.horizon for c in self.cases]


def run_bound_family(workers: int, rho: float,
                     horizons=(100, 1000, 10_000), seeds: int = 16,
                     pilot_seed: int = 777) -> BoundFamily:
    """Measure every bound input and evaluate all horizons of one config."""
    horizons = sorted(horizons)
    base = bound_run_config(workers, rho, horizons[-1], seed=pilot_seed)
    objective, _ = build_objective(base)
    L = objective.exact_lipschitz()
    x0 = objective.init_point(RngStream(base.seed, STREAM_INIT))
    lam = objective.loss(x0) - objective.infimum()
    sigma2 = estimate_gradient_variance(objective, x0, base.batch_size,
                                        draws=300, rng=RngStream(base.seed, 9))
    mu = pilot_mu(replace(base, lr_lipschitz=L))

    runs = [run_simulation(replace(base, seed=2000 + s, lr_mu=mu, lr_lipschitz=L))
            for s in range(seeds)]
    ts, first = sampled_norms(runs[0].records)
    mean_series = np.vstack([sampled_norms(r.records)[1] for r in runs]).mean(axis=0)

    cases = []
    for T in horizons:
        inputs = BoundInputs(lipschitz=L, grad_variance=sigma2, mu=mu, rho=rho,
                             big_lambda=lam, delayed_const=0.0, horizon=T)
        schedule = theorem_schedule(inputs)
        c_hat = float(np.mean([
            estimate_C([rec for rec in r.records if rec.t < T], schedule,
                       base.sample_period) for r in runs]))
        inputs = replace(inputs, delayed_const=c_hat)
        cases.append(BoundCase(horizon=T,
                               min_grad_norm=float(mean_series[ts < T].min()),
                               delayed_const=c_hat,
                               bound=theorem_bound(inputs, schedule)))
    return BoundFamily(workers=workers, rho=rho, mu=mu, lipschitz=L,
                       grad_variance=sigma2, big_lambda=lam, cases=tuple(cases))


def loglog_slope(horizons, values) -> float:
    """Least-squares slope of log(value) against log(horizon)."""
    lx = np.log(np.asarray(horizons, dtype=np.float64))
    ly = np.log(np.asarray(values, dtype=np.float64))
    return float(np.polyfit(lx, ly, 1)[0])


def training_dataset(rows: int = 10_000, seed: int = 424242) -> tuple[Dataset, Dataset, str]:
    """MNIST when IDX files are available, else the deterministic stand-in.

    Returns (train, test, source_name); the train split has `rows` rows.
    """
    mnist = find_mnist()
    if mnist is not None:
        train = mnist.subset(np.arange(rows))
        test = mnist.subset(np.arange(rows, min(mnist.n, rows + 2000)))
        return train, test, "mnist"
    train = synthetic_image_task(rows, seed)
    test = synthetic_image_task(2000, seed + 1)
    return train, test, "synthetic"


@dataclass(frozen=True)
class TrainOutcome:
    variant: str
    rho: float
    seed: int
    accuracy: float
    mu_hat: float | None
    final_loss: float
    avg_staleness: float


def run_training(train: Dataset, test: Dataset, variant: str, rho: float,
                 seed: int, epochs: float = 2.0, workers: int = 8,
                 delay_variance: float = 0.1, lr: float = 0.01,
                 momentum: float = 0.5, batch_size: int = 64,
                 hidden: int = 128, sample_period: int = 50) -> TrainOutcome:
    """One MLP training run under the experimental defaults."""
    cfg = RunConfig(objective="mlp", hidden=hidden, variant=variant, rho=rho,
                    workers=workers, delay_variance=delay_variance,
                    batch_size=batch_size, epochs=epochs, seed=seed,
                    lr=lr, momentum=momentum, sample_period=sample_period)
    obj = MlpObjective(train, hidden=hidden)
    res = run_simulation(cfg, objective=obj, test_data=test)
    taus = [r.staleness for r in res.records]
    return TrainOutcome(variant=variant, rho=rho, seed=seed,
                        accuracy=res.accuracy, mu_hat=res.mu.mu_hat,
                        final_loss=res.final_loss,
                        avg_staleness=float(np.mean(taus)))


def seed_mean(outcomes, attr: str) -> float:
    return float(np.mean([getattr(o, attr) for o in outcomes]))
