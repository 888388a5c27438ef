"""Parameter-server update rules and learning-rate schedules.

Three variants: plain asynchronous SGD (dense), memory-less sparsified SGD
(top-k of the gradient), and sparsified SGD with per-worker error feedback.
Momentum, when enabled, is applied server-side to the densified transmission
so the wire payload stays sparse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sparsifier import MemoryState, SparseUpdate, memory_combine, top_k

VARIANTS = ("asgd", "phisgd", "phimemsgd")


@dataclass
class LrSchedule:
    """Learning-rate sequence.

    kind "constant" with a plain base, or the analysis schedules built from
    (rho, mu, lipschitz): "inverse_sqrt" gives rho*mu/(L*sqrt(t+1)) and
    "theorem_constant" gives rho*mu/(L*sqrt(T)) for a fixed horizon T.
    """

    kind: str = "constant"
    base: float = 0.01
    rho: float = 1.0
    mu: float = 1.0
    lipschitz: float = 1.0
    horizon: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "inverse_sqrt", "theorem_constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "theorem_constant" and self.horizon < 1:
            raise ValueError("theorem_constant schedule needs horizon >= 1")


def lr_at(s: LrSchedule, t: int) -> float:
    """Rate for update index t >= 0; always positive."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if s.kind == "constant":
        eta = s.base
    elif s.kind == "inverse_sqrt":
        eta = s.rho * s.mu / (s.lipschitz * np.sqrt(t + 1.0))
    else:  # theorem_constant
        eta = s.rho * s.mu / (s.lipschitz * np.sqrt(float(s.horizon)))
    if not eta > 0:
        raise ValueError(f"schedule produced non-positive rate {eta}")
    return float(eta)


@dataclass
class UpdateRule:
    """Server-side optimizer state for one simulation run."""

    variant: str
    k: int = 0                      # coordinates kept; unused for asgd
    momentum: float = 0.0
    velocity: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


def apply_update(rule: UpdateRule, x: np.ndarray, g: np.ndarray,
                 mem: MemoryState | None, eta: float):
    """One PS step: sparsify (per variant), apply momentum, descend.

    Returns (x_next, transmitted, mem_next) where transmitted is the worker's
    wire payload (SparseUpdate for sparsified variants, the dense gradient for
    asgd) and mem_next is the worker's new memory (phimemsgd only).
    """
    if x.shape != g.shape:
        raise ValueError(f"model/gradient length mismatch: {x.shape} vs {g.shape}")
    if rule.variant == "phimemsgd":
        if mem is None:
            raise ValueError("phimemsgd requires a memory state")
        update, mem_next = memory_combine(mem, g, rule.k)
        direction = update.densify()
        transmitted: SparseUpdate | np.ndarray = update
    elif rule.variant == "phisgd":
        update = top_k(g, rule.k)
        direction = update.densify()
        transmitted = update
        mem_next = mem
    else:  # asgd
        direction = g
        transmitted = g
        mem_next = mem

    if rule.momentum > 0.0:
        if rule.velocity is None:
            rule.velocity = np.zeros_like(x)
        rule.velocity = rule.momentum * rule.velocity + direction
        step = rule.velocity
    else:
        step = direction
    return x - eta * step, transmitted, mem_next
