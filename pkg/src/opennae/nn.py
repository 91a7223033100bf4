"""Dense ReLU networks with exact backpropagation and momentum SGD.

Convention: a layer maps ``x -> x @ W + b`` with ``W`` of shape
``(fan_in, fan_out)``.  Hidden layers use ReLU, the output layer is linear
and returns raw logits; softmax lives in the losses.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .losses import NEGATIVE, effective_margin, get_loss


@dataclass
class DenseNet:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int | None = None

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"invalid layer dims {self.layer_dims}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("parameter count does not match layer dims")
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != shape or b.shape != shape[1:]:
                raise ValueError(f"layer {i}: expected {shape}, got {w.shape} / {b.shape}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        """Parameters in update order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(self.layer_dims, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.seed)

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)


def init_net(layer_dims, seed: int = 0) -> DenseNet:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights and zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"invalid layer dims {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(dims, weights, biases, seed)


def _check_input(net: DenseNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"input width {x.shape[-1]} does not match net input {net.input_dim}")
    return x


def forward_cache(net: DenseNet, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Logits plus the per-layer inputs and pre-activations backward needs."""
    x = _check_input(net, x)
    cache = [x]
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        if i == last:
            return z, cache
        cache.append(z)
        a = np.maximum(z, 0.0)
        cache.append(a)
    raise AssertionError("unreachable")


def forward(net: DenseNet, x) -> np.ndarray:
    """Raw logits, one row per input row."""
    return forward_cache(net, x)[0]


def backward(net: DenseNet, x, grad_logits, cache=None) -> list[np.ndarray]:
    """Gradients of a scalar loss w.r.t. all parameters, in :meth:`DenseNet.params` order.

    ``grad_logits`` is dLoss/dlogits for the batch ``x``.
    """
    if cache is None:
        _, cache = forward_cache(net, x)
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.shape != (cache[0].shape[0], net.output_dim):
        raise ValueError(f"gradient shape {g.shape} does not match logits "
                         f"{(cache[0].shape[0], net.output_dim)}")
    n_layers = len(net.weights)
    grads: list[np.ndarray] = [None] * (2 * n_layers)
    for i in range(n_layers - 1, -1, -1):
        a_in = cache[2 * i]
        grads[2 * i] = a_in.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i:
            g = (g @ net.weights[i].T) * (cache[2 * i - 1] > 0.0)
    return grads


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    negative_ratio: float = 1.0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if not self.negative_ratio > 0:
            raise ValueError("negative_ratio must be positive")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})


class MomentumSGD:
    """Classical momentum: ``v <- mu * v - lr * g``; ``p <- p + v``."""

    def __init__(self, config: TrainConfig):
        self.lr = config.learning_rate
        self.mu = config.momentum
        self.velocity: list[np.ndarray] | None = None

    def step(self, net: DenseNet, grads) -> DenseNet:
        params = net.params()
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise ValueError("gradients do not match network parameters")
        for i, g in enumerate(grads):
            if not np.isfinite(g).all():
                raise FloatingPointError(f"non-finite gradient in parameter {i}")
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, v, g in zip(params, self.velocity, grads):
            v *= self.mu
            v -= self.lr * g
            p += v
        return net


def sgd_step(net: DenseNet, grads, config: TrainConfig, optimizer: MomentumSGD | None = None) -> DenseNet:
    """Apply one update; pass ``optimizer`` to carry velocity across steps."""
    return (optimizer or MomentumSGD(config)).step(net, grads)


def epoch_batches(rng: np.random.Generator, n_known: int, n_neg: int,
                  config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Row order and batch boundaries for one epoch.

    Known rows ``0..n_known-1`` are shuffled and cut into chunks of
    ``batch_size``; each chunk is followed by ``round(negative_ratio * len)``
    negatives (rows ``n_known..``), drawn cyclically from a fresh shuffle.
    """
    known = rng.permutation(n_known)
    neg = n_known + rng.permutation(n_neg) if n_neg else None
    order, bounds = [], [0]
    ptr = 0
    for lo in range(0, n_known, config.batch_size):
        chunk = known[lo:lo + config.batch_size]
        order.append(chunk)
        if neg is not None:
            take = max(1, int(round(config.negative_ratio * chunk.size)))
            idx = (ptr + np.arange(take)) % n_neg
            ptr = (ptr + take) % n_neg
            order.append(neg[idx])
        bounds.append(bounds[-1] + chunk.size + (0 if neg is None else take))
    return np.concatenate(order).astype(np.int64), np.asarray(bounds, dtype=np.int64)


def fit(net: DenseNet, x, targets, negatives=None, loss: str = "mel", margin: float = 0.3,
        config: TrainConfig | None = None, use_kernel: bool = True, impl=None) -> list[float]:
    """Train ``net`` in place; returns the mean batch loss of every epoch.

    Parameters
    ----------
    x, targets : known training rows and their class indices.
    negatives : optional (k, D) matrix of rows tagged ``NEGATIVE``; ignored for ``cel``.
    use_kernel : route single-hidden-layer nets through :mod:`opennae.kernels`.
    """
    config = config or TrainConfig()
    x = _check_input(net, x)
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (x.shape[0],) or x.shape[0] == 0:
        raise ValueError("need at least one known row and one target per row")
    if negatives is None or loss == "cel":
        negatives = np.empty((0, net.input_dim))
    negatives = _check_input(net, negatives) if len(negatives) else np.empty((0, net.input_dim))
    xs = np.ascontiguousarray(np.vstack([x, negatives]))
    ts = np.concatenate([targets, np.full(len(negatives), NEGATIVE, dtype=np.int64)])
    m = effective_margin(loss, margin)
    get_loss(loss, margin)  # validates the name
    rng = np.random.default_rng(config.seed)
    history = []

    if use_kernel and len(net.weights) == 2:
        params = net.params()
        velocity = [np.zeros_like(p) for p in params]
        for _ in range(config.epochs):
            order, bounds = epoch_batches(rng, len(x), len(negatives), config)
            history.append(kernels.sgd_epoch(xs, ts, order, bounds, params, velocity,
                                             config.learning_rate, config.momentum, m, impl=impl))
        return history

    loss_fn = get_loss("mel", m)
    opt = MomentumSGD(config)
    for _ in range(config.epochs):
        order, bounds = epoch_batches(rng, len(x), len(negatives), config)
        total = 0.0
        for k in range(len(bounds) - 1):
            rows = order[bounds[k]:bounds[k + 1]]
            logits, cache = forward_cache(net, xs[rows])
            value, g = loss_fn(logits, ts[rows])
            opt.step(net, backward(net, None, g, cache))
            total += value
        history.append(total / (len(bounds) - 1))
    return history


def net_to_arrays(net: DenseNet, prefix: str = "") -> dict:
    out = {f"{prefix}layer_dims": np.asarray(net.layer_dims, dtype=np.int64),
           f"{prefix}seed": np.asarray(-1 if net.seed is None else net.seed, dtype=np.int64)}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out[f"{prefix}W{i}"] = w
        out[f"{prefix}b{i}"] = b
    return out


def net_from_arrays(arrays, prefix: str = "") -> DenseNet:
    dims = tuple(int(d) for d in arrays[f"{prefix}layer_dims"])
    seed = int(arrays[f"{prefix}seed"])
    n = len(dims) - 1
    return DenseNet(dims, [np.array(arrays[f"{prefix}W{i}"]) for i in range(n)],
                    [np.array(arrays[f"{prefix}b{i}"]) for i in range(n)],
                    None if seed < 0 else seed)


def save_net(net: DenseNet, path) -> None:
    """Write an ``.npz`` archive holding layer dims, seed and all parameters."""
    with Path(path).open("wb") as fh:
        np.savez(fh, format=np.asarray("opennae.densenet/1"), **net_to_arrays(net))


def load_net(path) -> DenseNet:
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != "opennae.densenet/1":
            raise ValueError(f"{path}: not a serialized DenseNet")
        return net_from_arrays(data)
