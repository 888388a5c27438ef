"""Deterministic numeric substrate: seeded RNG streams, samplers, vector ops.

All randomness flows through named Philox streams keyed by (seed, stream_id),
so a run is reproducible bit-for-bit across platforms and worker counts never
perturb each other's draw sequences. Vectors are plain float64 numpy arrays.
"""

from __future__ import annotations

import numpy as np

# Fixed stream ids. One stream per simulated worker plus dedicated streams
# for weight initialization, mini-batch sampling, and delay-profile draws.
STREAM_INIT = 0
STREAM_DATA = 1
STREAM_PROFILES = 2
STREAM_WORKER_BASE = 16


class RngStream:
    """A named, independent random stream.

    Philox is counter-based: identical (seed, stream_id) reproduce the same
    sequence on every platform, and distinct stream ids are statistically
    independent. OS entropy is never consulted.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def worker_stream(seed: int, worker_id: int) -> RngStream:
    """The per-worker stream used for compute-time and comm-delay draws."""
    return RngStream(seed, STREAM_WORKER_BASE + worker_id)


def sample_exponential(rng: RngStream, rate: float) -> float:
    """Draw from Exp(rate); mean 1/rate."""
    if not rate > 0:
        raise ValueError(f"exponential rate must be positive, got {rate}")
    return float(rng.generator.exponential(1.0 / rate))


def sample_lognormal(rng: RngStream, mean_log: float, var_log: float) -> float:
    """Draw exp(Z) with Z ~ Normal(mean_log, var_log); var_log=0 is degenerate."""
    if var_log < 0:
        raise ValueError(f"log-variance must be non-negative, got {var_log}")
    if var_log == 0:
        return float(np.exp(mean_log))
    z = rng.generator.normal(mean_log, np.sqrt(var_log))
    return float(np.exp(z))


def sample_uniform(rng: RngStream, lo: float, hi: float) -> float:
    """Draw uniformly from [lo, hi]; lo == hi is degenerate."""
    if lo > hi:
        raise ValueError(f"uniform bounds out of order: lo={lo} > hi={hi}")
    if lo == hi:
        return float(lo)
    return float(rng.generator.uniform(lo, hi))


def as_vector(values) -> np.ndarray:
    """Coerce to a fresh 1-D float64 vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return v.copy()


def _check_same_length(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise ValueError(f"vector length mismatch: {u.shape} vs {v.shape}")


def dot(u: np.ndarray, v: np.ndarray) -> float:
    _check_same_length(u, v)
    return float(np.dot(u, v))


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return a*x + y without mutating the inputs."""
    _check_same_length(x, y)
    return a * x + y


def norm_sq(u: np.ndarray) -> float:
    return float(np.dot(u, u))


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    _check_same_length(u, v)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    c = float(np.dot(u, v) / (nu * nv))
    # guard against rounding just outside [-1, 1]
    return min(1.0, max(-1.0, c))
