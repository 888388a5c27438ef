"""Top-k sparsification, its contraction laws, and error-feedback memory.

The top-k operator keeps the k largest-magnitude coordinates of a vector and
zeroes the rest. Ties between equal magnitudes keep the lower index, which
makes every result unique and golden-testable. The memory accumulator carries
the coordinates suppressed by top-k into future steps; combination is done by
masking so that transmitted + remembered reconstructs the input bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SparseUpdate:
    """A (index, value) sparse view of a d-dimensional update, |entries| <= k."""

    indices: np.ndarray  # int64, strictly increasing, each in [0, dim)
    values: np.ndarray   # float64, same length as indices
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-D and equal-length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError("sparse index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("sparse indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    def densify(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        out[self.indices] = self.values
        return out

    def nnz(self) -> int:
        return int(self.indices.size)

    def to_log_string(self) -> str:
        """Diagnostic "idx:val;idx:val" form for CSV embedding."""
        return ";".join(f"{i}:{v!r}" for i, v in zip(self.indices, self.values))


@dataclass(frozen=True)
class MemoryState:
    """Per-worker error-feedback accumulator; starts at zero."""

    m: np.ndarray

    @staticmethod
    def zeros(dim: int) -> "MemoryState":
        return MemoryState(np.zeros(dim, dtype=np.float64))


def rho_to_k(rho: float, dim: int) -> int:
    """Map a sparsification fraction to a coordinate count, at least 1."""
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    return max(1, int(round(rho * dim)))


def top_k_indices(u: np.ndarray, k: int) -> np.ndarray:
    """Indices kept by top-k, ascending. Ties keep the lower index.

    Partial selection: argpartition on magnitude, then the boundary magnitude
    is resolved by index so the result matches a full stable sort.
    """
    d = u.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    if k == d:
        return np.arange(d, dtype=np.int64)
    mag = np.abs(u)
    part = np.argpartition(mag, d - k)
    kept = part[d - k:]
    boundary = mag[kept].min()
    sure = np.flatnonzero(mag > boundary)
    ties = np.flatnonzero(mag == boundary)
    need = k - sure.size
    # ties are already in ascending index order; keep the lowest-index ones
    chosen = np.concatenate([sure, ties[:need]])
    chosen.sort()
    return chosen.astype(np.int64)


def top_k(u: np.ndarray, k: int) -> SparseUpdate:
    """Keep the k largest-magnitude entries of u, zeroing the rest."""
    idx = top_k_indices(u, k)
    return SparseUpdate(indices=idx, values=u[idx].copy(), dim=u.shape[0])


def check_k_contraction(u: np.ndarray, k: int, rel_slack: float = 1e-12) -> bool:
    """||u - topk(u)||^2 <= (1 - k/d) ||u||^2, with relative slack."""
    d = u.shape[0]
    residual = u.copy()
    residual[top_k_indices(u, k)] = 0.0
    lhs = float(np.dot(residual, residual))
    rhs = (1.0 - k / d) * float(np.dot(u, u))
    return lhs <= rhs + rel_slack * max(1.0, abs(rhs))


def check_lower_bound(u: np.ndarray, k: int, rel_slack: float = 1e-12) -> bool:
    """||topk(u)||^2 >= (k/d) ||u||^2, with relative slack."""
    d = u.shape[0]
    kept = u[top_k_indices(u, k)]
    lhs = float(np.dot(kept, kept))
    rhs = (k / d) * float(np.dot(u, u))
    return lhs >= rhs - rel_slack * max(1.0, abs(rhs))


def memory_combine(mem: MemoryState, g: np.ndarray, k: int) -> tuple[SparseUpdate, MemoryState]:
    """Error-feedback step: transmit topk(m + g), remember the rest.

    The split is a pure mask of the combined vector, so
    densify(update) + new_mem.m == mem.m + g holds bit-exactly.
    """
    if mem.m.shape != g.shape:
        raise ValueError(f"memory/gradient length mismatch: {mem.m.shape} vs {g.shape}")
    combined = mem.m + g
    idx = top_k_indices(combined, k)
    update = SparseUpdate(indices=idx, values=combined[idx].copy(), dim=combined.shape[0])
    remainder = combined.copy()
    remainder[idx] = 0.0
    return update, MemoryState(remainder)
