"""Minimal feed-forward network: manual gradients, SGD, checkpoints.

The model class p_w(y|x) is an MLP with ReLU hidden layers and a softmax
output. Losses are totals in NATS (sums over the dataset, not means), so
they plug directly into the complexity Lagrangians. Everything is plain
numpy with explicit backpropagation; training is a deterministic function
of (data, architecture, config, init).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import stream
from .tasks import Dataset, RealSpace

__all__ = [
    "Architecture",
    "MlpParams",
    "SgdConfig",
    "TrainingDiverged",
    "TrainResult",
    "init_params",
    "flatten_params",
    "unflatten_params",
    "forward",
    "forward_batch",
    "dataset_loss",
    "gradient",
    "gradient_arrays",
    "sgd_train",
    "save_loss_trace_csv",
    "save_params",
    "load_params",
]


@dataclass(frozen=True)
class Architecture:
    """Layer widths from input dimension through hidden layers to K."""

    layer_widths: tuple[int, ...]

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ValueError("architecture needs at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        object.__setattr__(self, "layer_widths", tuple(self.layer_widths))

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def num_labels(self) -> int:
        return self.layer_widths[-1]

    @property
    def num_params(self) -> int:
        k = 0
        for n_in, n_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            k += n_in * n_out + n_out
        return k


@dataclass(frozen=True)
class MlpParams:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.asarray(b, dtype=np.float64) for b in self.biases)
        if len(ws) != len(bs):
            raise ValueError("one bias vector per weight matrix")
        for w, b in zip(ws, bs):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError("weight/bias shape mismatch")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def architecture(self) -> Architecture:
        widths = (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)
        return Architecture(widths)

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def init_params(arch: Architecture, seed: int) -> MlpParams:
    """Glorot-uniform weights in [-a, a], a = sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = stream(seed, "mlp-init")
    ws, bs = [], []
    for n_in, n_out in zip(arch.layer_widths[:-1], arch.layer_widths[1:]):
        a = math.sqrt(6.0 / (n_in + n_out))
        ws.append(rng.uniform(-a, a, size=(n_in, n_out)))
        bs.append(np.zeros(n_out))
    return MlpParams(tuple(ws), tuple(bs))


def flatten_params(p: MlpParams) -> np.ndarray:
    return np.concatenate([a.ravel() for pair in zip(p.weights, p.biases)
                           for a in pair])


def unflatten_params(vec: np.ndarray, arch: Architecture) -> MlpParams:
    ws, bs = [], []
    pos = 0
    for n_in, n_out in zip(arch.layer_widths[:-1], arch.layer_widths[1:]):
        ws.append(vec[pos:pos + n_in * n_out].reshape(n_in, n_out))
        pos += n_in * n_out
        bs.append(vec[pos:pos + n_out])
        pos += n_out
    if pos != vec.size:
        raise ValueError("parameter vector length does not match architecture")
    return MlpParams(tuple(ws), tuple(bs))


def _log_softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_batch(p: MlpParams, x: np.ndarray) -> np.ndarray:
    """Probabilities (N, K) for a batch of inputs (N, d)."""
    h = x
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    z = h @ p.weights[-1] + p.biases[-1]
    return np.exp(_log_softmax(z))


def forward(p: MlpParams, x: np.ndarray) -> np.ndarray:
    """Probability vector over K labels for a single input."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("invalid input: non-finite entries")
    return forward_batch(p, x[None, :])[0]


def _as_xy(d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(d.space, RealSpace):
        raise ValueError("networks consume real-vector tasks "
                         "(see tasks.as_real_vectors)")
    return d.inputs, d.labels


def dataset_loss(p: MlpParams, d: Dataset) -> float:
    """Total cross-entropy over the dataset in NATS."""
    x, y = _as_xy(d)
    if d.n == 0:
        return 0.0
    logp = _log_softmax(_logits(p, x)[0])
    return float(-logp[np.arange(d.n), y].sum())


def _logits(p: MlpParams, x: np.ndarray):
    """Returns (logits, list of post-ReLU activations per hidden layer)."""
    hs = [x]
    h = x
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        hs.append(h)
    return h @ p.weights[-1] + p.biases[-1], hs


def gradient_arrays(p: MlpParams, x: np.ndarray, y: np.ndarray
                    ) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]]:
    """Backprop gradient of the summed cross-entropy over (x, y)."""
    z, hs = _logits(p, x)
    probs = np.exp(_log_softmax(z))
    delta = probs
    delta[np.arange(len(y)), y] -= 1.0         # d(total loss)/d logits
    gws = [None] * len(p.weights)
    gbs = [None] * len(p.biases)
    for layer in range(len(p.weights) - 1, -1, -1):
        gws[layer] = hs[layer].T @ delta
        gbs[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ p.weights[layer].T) * (hs[layer] > 0)
    return tuple(gws), tuple(gbs)


def gradient(p: MlpParams, batch) -> MlpParams:
    """Gradient of the summed batch loss, in parameter layout."""
    if isinstance(batch, Dataset):
        x, y = _as_xy(batch)
    else:
        x, y = batch
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("gradient needs a nonempty batch")
    gws, gbs = gradient_arrays(p, x, y)
    return MlpParams(gws, gbs)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training; carries the last finite state."""

    def __init__(self, message, last_params=None, trace=()):
        super().__init__(message)
        self.last_params = last_params
        self.trace = tuple(trace)


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float
    batch_size: int
    epochs: int
    weight_decay: float = 0.0
    decay_epochs: tuple[int, ...] = ()   # lr *= decay_factor at these epochs
    decay_factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass(frozen=True)
class TrainResult:
    params: MlpParams
    loss_trace: tuple[float, ...]      # full-dataset loss after each epoch


def sgd_train(d: Dataset, arch: Architecture, cfg: SgdConfig,
              init: MlpParams | int = 0) -> TrainResult:
    """Minibatch SGD: w <- w - eta * (grad L_batch + gamma w).

    Deterministic given (d, arch, cfg, init): the per-epoch shuffle comes
    from the config seed. The last partial batch is kept. Raises
    TrainingDiverged (with the last finite state) if the loss leaves the
    finite range.
    """
    x, y = _as_xy(d)
    if arch.input_dim != d.inputs.shape[1] or arch.num_labels < d.num_labels:
        raise ValueError("architecture incompatible with dataset")
    params = init if isinstance(init, MlpParams) else init_params(arch, init)
    batch = min(cfg.batch_size, max(1, d.n))
    lr = cfg.learning_rate
    trace = []
    # overflow shows up as non-finite state and is reported as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            if epoch in cfg.decay_epochs:
                lr *= cfg.decay_factor
            order = stream(cfg.seed, "sgd-shuffle", epoch).permutation(d.n)
            for start in range(0, d.n, batch):
                idx = order[start:start + batch]
                gws, gbs = gradient_arrays(params, x[idx], y[idx])
                ws = tuple(w - lr * (gw + cfg.weight_decay * w)
                           for w, gw in zip(params.weights, gws))
                bs = tuple(b - lr * (gb + cfg.weight_decay * b)
                           for b, gb in zip(params.biases, gbs))
                if any(not np.isfinite(a).all() for a in ws + bs):
                    raise TrainingDiverged(
                        f"training diverged at epoch {epoch}",
                        last_params=params, trace=trace)
                params = MlpParams(ws, bs)
            loss = dataset_loss(params, d)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"training diverged at epoch {epoch}",
                    last_params=params, trace=trace)
            trace.append(loss)
    return TrainResult(params=params, loss_trace=tuple(trace))


def save_loss_trace_csv(trace, path) -> None:
    """Per-epoch loss trace as CSV (epoch, loss_nats)."""
    lines = ["# taskinfo-loss-trace v1", "epoch,loss_nats"]
    for epoch, loss in enumerate(trace):
        lines.append(f"{epoch},{float(loss)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Checkpoints: versioned text, layer shapes then row-major entries.


def save_params(p: MlpParams, path, extra: dict | None = None) -> None:
    lines = ["# taskinfo-params v1",
             "widths=" + ",".join(str(w) for w in p.architecture.layer_widths)]
    for key, vec in (extra or {}).items():
        lines.append(f"{key}=" + ";".join(repr(float(v)) for v in vec))
    for layer, (w, b) in enumerate(zip(p.weights, p.biases)):
        lines.append(f"W{layer}=" + ";".join(repr(float(v)) for v in w.ravel()))
        lines.append(f"b{layer}=" + ";".join(repr(float(v)) for v in b))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path) -> tuple[MlpParams, dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != "# taskinfo-params v1":
        raise ValueError(f"{path}: not a taskinfo-params v1 file")
    fields = dict(ln.partition("=")[::2] for ln in lines[1:])
    widths = tuple(int(w) for w in fields.pop("widths").split(","))
    arch = Architecture(widths)
    ws, bs = [], []
    for layer, (n_in, n_out) in enumerate(
            zip(arch.layer_widths[:-1], arch.layer_widths[1:])):
        w = np.array([float(v) for v in fields.pop(f"W{layer}").split(";")])
        b = np.array([float(v) for v in fields.pop(f"b{layer}").split(";")])
        ws.append(w.reshape(n_in, n_out))
        bs.append(b)
    extra = {key: np.array([float(v) for v in val.split(";")])
             for key, val in fields.items()}
    return MlpParams(tuple(ws), tuple(bs)), extra
