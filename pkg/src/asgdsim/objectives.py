"""Differentiable finite-sum training objectives with exact manual gradients.

Every objective is an average f(x) = (1/n) sum_i f(x, i) over n samples,
continuously differentiable and bounded below. full_gradient is literally
minibatch_gradient over all n indices, so full-batch consistency is bit-exact
by construction. The training path never calls full_gradient; only metrics do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .datasets import Dataset
from .numkit import RngStream


@dataclass(frozen=True)
class Minibatch:
    """A uniformly sampled index set into {0..n-1} (with replacement)."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 1:
            raise ValueError("minibatch needs at least one index")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)


def sample_minibatch(rng: RngStream, n: int, size: int) -> Minibatch:
    if size < 1 or n < 1:
        raise ValueError("need n >= 1 and size >= 1")
    return Minibatch(rng.generator.integers(0, n, size=size))


class Objective:
    """Interface shared by all objective kinds."""

    dim: int
    n_samples: int
    kind: str

    def loss(self, x: np.ndarray, indices: np.ndarray | None = None) -> float:
        raise NotImplementedError

    def minibatch_gradient(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.minibatch_gradient(x, np.arange(self.n_samples, dtype=np.int64))

    def init_point(self, rng: RngStream) -> np.ndarray:
        raise NotImplementedError

    def lower_bound(self) -> float:
        """A value f never goes below."""
        return 0.0

    def exact_lipschitz(self) -> float | None:
        """Exact smoothness constant when analytically available."""
        return None

    def _check_x(self, x: np.ndarray) -> None:
        if x.shape != (self.dim,):
            raise ValueError(f"parameter vector must have shape ({self.dim},), got {x.shape}")


class QuadraticObjective(Objective):
    """f(x, i) = 1/2 (x - c_i)' A (x - c_i) - K_i with diagonal A.

    The constants K_i recenter the finite-sum average so the full loss is
    exactly 0 at the minimizer x* = mean(c_i).
    """

    kind = "quadratic"

    def __init__(self, spectrum: np.ndarray, centers: np.ndarray,
                 init_scale: float = 1.0):
        spectrum = np.asarray(spectrum, dtype=np.float64)
        centers = np.asarray(centers, dtype=np.float64)
        if spectrum.ndim != 1 or np.any(spectrum <= 0):
            raise ValueError("spectrum must be a 1-D positive vector")
        if centers.ndim != 2 or centers.shape[1] != spectrum.shape[0]:
            raise ValueError("centers must be (n, dim)")
        self.spectrum = spectrum
        self.centers = centers
        self.init_scale = float(init_scale)
        self.dim = spectrum.shape[0]
        self.n_samples = centers.shape[0]
        self.minimizer = centers.mean(axis=0)
        dev = centers - self.minimizer
        self._offsets = 0.5 * np.einsum("ij,j,ij->i", dev, spectrum, dev)

    def loss(self, x, indices=None):
        self._check_x(x)
        idx = np.arange(self.n_samples) if indices is None else np.asarray(indices)
        diff = x[None, :] - self.centers[idx]
        per = 0.5 * np.einsum("ij,j,ij->i", diff, self.spectrum, diff) - self._offsets[idx]
        return float(per.mean())

    def minibatch_gradient(self, x, indices):
        self._check_x(x)
        idx = np.asarray(indices, dtype=np.int64)
        return self.spectrum * (x - self.centers[idx].mean(axis=0))

    def init_point(self, rng):
        return rng.generator.normal(0.0, self.init_scale, size=self.dim)

    def exact_lipschitz(self):
        return float(self.spectrum.max())

    def gradient_variance_analytic(self, batch_size: int) -> float:
        """E||g - grad f||^2 at any x, for sampling with replacement."""
        dev = (self.centers - self.minimizer) * self.spectrum
        return float(np.sum(dev * dev) / self.n_samples / batch_size)


class PerturbedQuadraticObjective(QuadraticObjective):
    """Quadratic plus eps * sum_j sin(x_j): the non-convex bound-verification
    objective. With eps above the smallest curvature the Hessian is indefinite
    somewhere, yet L = max(spectrum) + eps stays analytic, and the separable
    form gives the exact global minimum by per-coordinate scalar search.
    """

    kind = "perturbed_quadratic"

    def __init__(self, spectrum, centers, eps: float, init_scale: float = 1.0):
        super().__init__(spectrum, centers, init_scale)
        if eps < 0:
            raise ValueError("eps must be non-negative")
        self.eps = float(eps)
        self._inf_value: float | None = None

    def loss(self, x, indices=None):
        base = super().loss(x, indices)
        return base + self.eps * float(np.sin(x).sum())

    def minibatch_gradient(self, x, indices):
        return super().minibatch_gradient(x, indices) + self.eps * np.cos(x)

    def exact_lipschitz(self):
        return float(self.spectrum.max()) + self.eps

    def lower_bound(self):
        return self.infimum()

    def infimum(self) -> float:
        """Exact global minimum of the full loss (separable when centered)."""
        if self._inf_value is None:
            shift = self.minimizer
            total = 0.0
            for lam, s in zip(self.spectrum, shift):
                def phi(u, lam=lam, s=s):
                    return 0.5 * lam * (u - s) ** 2 + self.eps * np.sin(u)
                radius = self.eps / lam + abs(s) + 2.0 * np.pi
                grid = np.linspace(s - radius, s + radius, 4001)
                vals = phi(grid)
                j = int(np.argmin(vals))
                lo = grid[max(0, j - 1)]
                hi = grid[min(grid.size - 1, j + 1)]
                res = optimize.minimize_scalar(phi, bounds=(lo, hi), method="bounded",
                                               options={"xatol": 1e-14})
                total += min(float(res.fun), float(vals[j]))
            self._inf_value = total
        return self._inf_value


class LogisticObjective(Objective):
    """Binary logistic regression with a bias term; d = p + 1."""

    kind = "logistic_regression"

    def __init__(self, data: Dataset):
        if data.classes != 2:
            raise ValueError("logistic regression needs a binary dataset")
        self.data = data
        self.dim = data.p + 1
        self.n_samples = data.n
        self._sign = 2.0 * data.labels.astype(np.float64) - 1.0  # {-1, +1}

    def _margins(self, x, idx):
        X = self.data.features[idx]
        z = X @ x[:-1] + x[-1]
        return self._sign[idx] * z

    def loss(self, x, indices=None):
        self._check_x(x)
        idx = np.arange(self.n_samples) if indices is None else np.asarray(indices)
        m = self._margins(x, idx)
        # log(1 + exp(-m)) computed stably
        return float(np.logaddexp(0.0, -m).mean())

    def minibatch_gradient(self, x, indices):
        self._check_x(x)
        idx = np.asarray(indices, dtype=np.int64)
        m = self._margins(x, idx)
        coeff = -self._sign[idx] / (1.0 + np.exp(m))  # d loss / d z
        X = self.data.features[idx]
        g = np.empty(self.dim)
        g[:-1] = X.T @ coeff / idx.size
        g[-1] = coeff.mean()
        return g

    def init_point(self, rng):
        return np.zeros(self.dim)

    def predict(self, x, features):
        z = features @ x[:-1] + x[-1]
        return (z > 0).astype(np.int64)


class MlpObjective(Objective):
    """One-hidden-layer MLP: tanh hidden activation, softmax cross-entropy.

    Parameters live in a single flat vector (W1, b1, W2, b2), gradients are
    exact manual backprop in float64.
    """

    kind = "mlp"

    def __init__(self, data: Dataset, hidden: int = 128):
        self.data = data
        self.p = data.p
        self.hidden = hidden
        self.classes = data.classes
        self.dim = self.p * hidden + hidden + hidden * self.classes + self.classes
        self.n_samples = data.n
        h, p, c = hidden, self.p, self.classes
        self._s1 = slice(0, p * h)
        self._s2 = slice(p * h, p * h + h)
        self._s3 = slice(p * h + h, p * h + h + h * c)
        self._s4 = slice(p * h + h + h * c, self.dim)

    def _unpack(self, x):
        h, p, c = self.hidden, self.p, self.classes
        return (x[self._s1].reshape(p, h), x[self._s2],
                x[self._s3].reshape(h, c), x[self._s4])

    def _forward(self, x, idx):
        W1, b1, W2, b2 = self._unpack(x)
        X = self.data.features[idx]
        H = np.tanh(X @ W1 + b1)
        logits = H @ W2 + b2
        shifted = logits - logits.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        probs = expz / expz.sum(axis=1, keepdims=True)
        logprobs = shifted - np.log(expz.sum(axis=1, keepdims=True))
        return X, H, probs, logprobs

    def loss(self, x, indices=None):
        self._check_x(x)
        idx = np.arange(self.n_samples) if indices is None else np.asarray(indices)
        _, _, _, logprobs = self._forward(x, idx)
        y = self.data.labels[idx]
        return float(-logprobs[np.arange(idx.size), y].mean())

    def minibatch_gradient(self, x, indices):
        self._check_x(x)
        idx = np.asarray(indices, dtype=np.int64)
        W1, b1, W2, b2 = self._unpack(x)
        X, H, probs, _ = self._forward(x, idx)
        y = self.data.labels[idx]
        b = idx.size
        dlogits = probs.copy()
        dlogits[np.arange(b), y] -= 1.0
        dlogits /= b
        g = np.empty(self.dim)
        g[self._s3] = (H.T @ dlogits).ravel()
        g[self._s4] = dlogits.sum(axis=0)
        dH = dlogits @ W2.T
        dZ = dH * (1.0 - H * H)
        g[self._s1] = (X.T @ dZ).ravel()
        g[self._s2] = dZ.sum(axis=0)
        return g

    def init_point(self, rng):
        """Glorot-uniform layer weights, zero biases, from the init stream."""
        gen = rng.generator
        x = np.zeros(self.dim)
        lim1 = np.sqrt(6.0 / (self.p + self.hidden))
        lim2 = np.sqrt(6.0 / (self.hidden + self.classes))
        x[self._s1] = gen.uniform(-lim1, lim1, size=self.p * self.hidden)
        x[self._s3] = gen.uniform(-lim2, lim2, size=self.hidden * self.classes)
        return x

    def loss_and_gradient(self, x, indices):
        """Fused forward/backward sharing one forward pass."""
        self._check_x(x)
        idx = np.asarray(indices, dtype=np.int64)
        W1, b1, W2, b2 = self._unpack(x)
        X, H, probs, logprobs = self._forward(x, idx)
        y = self.data.labels[idx]
        b = idx.size
        loss = float(-logprobs[np.arange(b), y].mean())
        dlogits = probs
        dlogits[np.arange(b), y] -= 1.0
        dlogits /= b
        g = np.empty(self.dim)
        g[self._s3] = (H.T @ dlogits).ravel()
        g[self._s4] = dlogits.sum(axis=0)
        dH = dlogits @ W2.T
        dZ = dH * (1.0 - H * H)
        g[self._s1] = (X.T @ dZ).ravel()
        g[self._s2] = dZ.sum(axis=0)
        return loss, g

    def predict(self, x, features):
        W1, b1, W2, b2 = self._unpack(x)
        H = np.tanh(features @ W1 + b1)
        return np.argmax(H @ W2 + b2, axis=1).astype(np.int64)


def synthetic_quadratic(dim: int, n: int, spectrum, seed: int,
                        center_spread: float = 1.0, eps: float = 0.0,
                        init_scale: float = 1.0) -> QuadraticObjective:
    """Reproducible quadratic (or sinusoid-perturbed) instance.

    The spectrum is tiled/truncated to length dim; per-sample centers are
    Gaussian with the stated spread and exactly zero mean, so the quadratic
    part's minimizer is the origin.
    """
    spec = np.resize(np.asarray(spectrum, dtype=np.float64), dim)
    gen = RngStream(seed, 0).generator
    centers = gen.normal(0.0, center_spread, size=(n, dim))
    centers -= centers.mean(axis=0)
    if eps > 0:
        return PerturbedQuadraticObjective(spec, centers, eps, init_scale)
    return QuadraticObjective(spec, centers, init_scale)


def minibatch_gradient(obj: Objective, x: np.ndarray, batch: Minibatch) -> np.ndarray:
    return obj.minibatch_gradient(x, batch.indices)


def full_gradient(obj: Objective, x: np.ndarray) -> np.ndarray:
    return obj.full_gradient(x)


def loss(obj: Objective, x: np.ndarray, batch: Minibatch | None = None) -> float:
    return obj.loss(x, None if batch is None else batch.indices)


def estimate_lipschitz(obj: Objective, probes: int, rng: RngStream,
                       exact: bool | None = None) -> float:
    """Max of ||grad f(x) - grad f(y)|| / ||x - y|| over sampled pairs.

    A lower bound on L in general; objectives with a known matrix report the
    exact constant unless exact=False forces the probe path.
    """
    if exact is not False:
        known = obj.exact_lipschitz()
        if known is not None:
            return known
    if probes < 2:
        raise ValueError("need at least 2 probes")
    gen = rng.generator
    best = 0.0
    for _ in range(probes):
        x = gen.normal(0.0, 1.0, size=obj.dim)
        y = x + gen.normal(0.0, 1.0, size=obj.dim) * gen.uniform(1e-3, 1.0)
        gx = obj.full_gradient(x)
        gy = obj.full_gradient(y)
        denom = float(np.linalg.norm(x - y))
        if denom > 0:
            best = max(best, float(np.linalg.norm(gx - gy)) / denom)
    return best


def estimate_gradient_variance(obj: Objective, x: np.ndarray, batch_size: int,
                               draws: int, rng: RngStream) -> float:
    """Monte-Carlo estimate of E||g(x, xi) - grad f(x)||^2."""
    if draws < 1 or batch_size < 1:
        raise ValueError("need draws >= 1 and batch_size >= 1")
    ref = obj.full_gradient(x)
    acc = 0.0
    for _ in range(draws):
        batch = sample_minibatch(rng, obj.n_samples, batch_size)
        diff = obj.minibatch_gradient(x, batch.indices) - ref
        acc += float(np.dot(diff, diff))
    return acc / draws


def accuracy(obj: Objective, x: np.ndarray, test: Dataset) -> float:
    """Fraction of test rows the model classifies correctly."""
    if test.n == 0:
        raise ValueError("empty test set")
    if not hasattr(obj, "predict"):
        raise ValueError(f"objective kind {obj.kind!r} does not classify")
    pred = obj.predict(x, test.features)
    return float((pred == test.labels).mean())
