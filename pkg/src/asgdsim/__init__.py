"""Simulation and analysis toolkit for sparsified asynchronous SGD.

Submodules:
  numkit      seeded random streams, samplers, vector ops
  sparsifier  top-k operator, contraction checks, error-feedback memory
  objectives  finite-sum objectives with exact manual gradients
  datasets    dataset container, MNIST IDX parsing, synthetic generators
  optimizer   update rules (asgd / phisgd / phimemsgd) and lr schedules
  delaymodel  per-worker delay profiles and samplers
  simulator   the discrete-event parameter-server engine
  metrics     alignment estimator, convergence bounds, CSV schema
  config      flat typed run/grid configuration files
  cli         simulate / grid / verify / staleness-hist subcommands
"""

from .config import ConfigError, GridSpec, RunConfig
from .datasets import Dataset, IdxFormatError, load_mnist_idx, synthetic_blobs
from .metrics import BoundInputs, MuEstimate, RunRecord, corollary_bound, theorem_bound
from .numkit import RngStream
from .objectives import Minibatch, Objective
from .optimizer import LrSchedule, UpdateRule, apply_update, lr_at
from .simulator import RunResult, avg_staleness, run_simulation, staleness_histogram
from .sparsifier import MemoryState, SparseUpdate, memory_combine, top_k

__all__ = [
    "BoundInputs", "ConfigError", "Dataset", "GridSpec", "IdxFormatError",
    "LrSchedule", "MemoryState", "Minibatch", "MuEstimate", "Objective",
    "RngStream", "RunConfig", "RunRecord", "RunResult", "SparseUpdate",
    "UpdateRule", "apply_update", "avg_staleness", "corollary_bound",
    "load_mnist_idx", "lr_at", "memory_combine", "run_simulation",
    "staleness_histogram", "synthetic_blobs", "theorem_bound", "top_k",
]

__version__ = "0.1.0"
