"""Dataset container, MNIST IDX parsing, and synthetic data generators."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .numkit import RngStream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Raised when an IDX file violates the binary format contract."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer labels in [0, classes)."""

    features: np.ndarray  # (n, p) float64
    labels: np.ndarray    # (n,) int64
    classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError("row count must equal label count")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        if y.size and (y.min() < 0 or y.max() >= self.classes):
            raise ValueError(f"labels outside [0, {self.classes})")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.features[rows], self.labels[rows], self.classes)


def _read_exact(f, count: int, what: str) -> bytes:
    buf = f.read(count)
    if len(buf) != count:
        raise IdxFormatError(f"truncated IDX file while reading {what}: "
                             f"wanted {count} bytes, got {len(buf)}")
    return buf


def load_mnist_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse the MNIST IDX binary pair into a Dataset.

    Images are normalized to [0, 1]; labels must lie in [0, 9]. Magic numbers,
    dimension headers, and payload sizes are all checked.
    """
    with open(images_path, "rb") as f:
        magic, n_img = struct.unpack(">II", _read_exact(f, 8, "image header"))
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(f"bad magic in image file: 0x{magic:08x}, "
                                 f"expected 0x{IDX_IMAGES_MAGIC:08x}")
        rows, cols = struct.unpack(">II", _read_exact(f, 8, "image dims"))
        payload = _read_exact(f, n_img * rows * cols, "image payload")
        extra = f.read(1)
        if extra:
            raise IdxFormatError("image file has trailing bytes beyond declared size")
    with open(labels_path, "rb") as f:
        magic, n_lab = struct.unpack(">II", _read_exact(f, 8, "label header"))
        if magic != IDX_LABELS_MAGIC:
            raise IdxFormatError(f"bad magic in label file: 0x{magic:08x}, "
                                 f"expected 0x{IDX_LABELS_MAGIC:08x}")
        lab = _read_exact(f, n_lab, "label payload")
    if n_img != n_lab:
        raise IdxFormatError(f"image/label count mismatch: {n_img} images vs {n_lab} labels")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(n_img, rows * cols)
    labels = np.frombuffer(lab, dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise IdxFormatError(f"label value {labels.max()} outside [0, 9]")
    return Dataset(images.astype(np.float64) / 255.0, labels, classes=10)


def find_mnist(data_dir: str | None = None) -> Dataset | None:
    """Load the standard MNIST training pair if present, else None.

    Looks under `data_dir`, $ASGDSIM_MNIST_DIR, then ./data/mnist.
    """
    candidates = []
    if data_dir:
        candidates.append(data_dir)
    env = os.environ.get("ASGDSIM_MNIST_DIR")
    if env:
        candidates.append(env)
    candidates.append(os.path.join("data", "mnist"))
    for root in candidates:
        img = os.path.join(root, "train-images-idx3-ubyte")
        lab = os.path.join(root, "train-labels-idx1-ubyte")
        if os.path.exists(img) and os.path.exists(lab):
            return load_mnist_idx(img, lab)
    return None


def synthetic_blobs(classes: int, n: int, p: int, separation: float,
                    seed: int) -> Dataset:
    """Gaussian class blobs with controllable separation.

    separation = 0 collapses all class centers to the origin, so no classifier
    can beat 1/classes. Same seed reproduces the dataset bit-for-bit.
    """
    if classes < 2 or n < classes or p < 1:
        raise ValueError("need classes >= 2, n >= classes, p >= 1")
    rng = RngStream(seed, 0).generator
    centers = rng.normal(0.0, 1.0, size=(classes, p)) * separation
    labels = np.arange(n, dtype=np.int64) % classes
    noise = rng.normal(0.0, 1.0, size=(n, p))
    features = centers[labels] + noise
    return Dataset(features, labels, classes)


def synthetic_image_task(n: int, seed: int, classes: int = 10, p: int = 784,
                         separation: float = 0.45) -> Dataset:
    """Deterministic MNIST-shaped stand-in (784 features, 10 classes).

    Class structure lives in random low-dimensional directions with
    anisotropic within-class noise, which keeps the task learnable but not
    trivially separable, so optimizer variants remain distinguishable.
    """
    rng = RngStream(seed, 0).generator
    centers = rng.normal(0.0, 1.0, size=(classes, p)) * separation
    warp = rng.normal(0.0, 1.0, size=(classes, p)) * 0.35
    labels = rng.integers(0, classes, size=n).astype(np.int64)
    noise = rng.normal(0.0, 1.0, size=(n, p))
    features = centers[labels] + noise * (1.0 + warp[labels] ** 2)
    # squash into a bounded, image-like range
    features = 0.5 + 0.5 * np.tanh(0.35 * features)
    return Dataset(features, labels, classes)
