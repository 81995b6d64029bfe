"""Stacked network: greedy pretraining, softmax head, supervised fine-tuning."""

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .rng import derive, derive_seed
from .sda import (
    NO_SPARSITY,
    AutoencoderLayer,
    CorruptionSpec,
    SparsitySpec,
    TrainingDivergedError,
    encode,
    pretrain_layer,
)
from .siggen import N_FAMILIES
from .whiten import WhiteningFilter, apply as whiten

log = logging.getLogger(__name__)


class UnknownArchitectureError(KeyError):
    pass


@dataclass(frozen=True)
class ArchitectureSpec:
    """An architecture preset.

    ``sparsity_targets`` entries of ``None`` mean that layer is trained without
    a sparsity penalty. ``pretrain=False`` gives randomly initialised hidden
    layers (the MLP baseline).
    """

    name: str
    hidden_sizes: tuple = ()
    sparsity_targets: tuple = ()
    corruption: tuple = ()
    l2: float = 0.0
    dropout: float = 0.0
    pretrain: bool = True

    def __post_init__(self):
        n = len(self.hidden_sizes)
        if self.pretrain and (len(self.sparsity_targets) != n or len(self.corruption) != n):
            raise ValueError(f"{self.name}: per-layer settings must have {n} entries")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def n_layers(self):
        return len(self.hidden_sizes)

    def sparsity(self, layer, weight):
        target = self.sparsity_targets[layer]
        return NO_SPARSITY if target is None else SparsitySpec(target, weight)

    def scaled(self, scale, floor=128):
        """Shrink layer widths for desk-scale runs.

        Each width becomes ``round(width * scale)`` but never less than
        ``min(width, floor)``, so 500-unit layers become 128 at scale 0.1.
        """
        sizes = tuple(min(w, max(round(w * scale), floor)) for w in self.hidden_sizes)
        return dataclasses.replace(self, hidden_sizes=sizes)

    def describe(self):
        return {
            "arch": self.name,
            "hidden_sizes": "/".join(map(str, self.hidden_sizes)) or "-",
            "sparsity_targets": "/".join("-" if t is None else repr(t) for t in self.sparsity_targets) or "-",
            "corruption": "/".join(map(repr, self.corruption)) or "-",
            "l2": repr(self.l2),
            "dropout": repr(self.dropout),
            "pretrain": str(self.pretrain).lower(),
        }


# corruption for layers >= 3 of E is not given anywhere; 0.3 is reused
PRESETS = {
    "Softmax": ArchitectureSpec("Softmax"),
    "MLP": ArchitectureSpec("MLP", (500, 500), (None, None), (0.0, 0.0), l2=1.0, dropout=0.5, pretrain=False),
    "A": ArchitectureSpec("A", (500,), (0.05,), (0.2,), l2=0.0),
    "B": ArchitectureSpec("B", (500,), (0.05,), (0.2,), l2=1.0),
    "C": ArchitectureSpec("C", (500, 500), (0.05, None), (0.2, 0.3), l2=0.0),
    "D": ArchitectureSpec("D", (500, 500), (0.05, 0.0), (0.2, 0.3), l2=1.0),
    "E": ArchitectureSpec(
        "E", (500, 500, 250, 250, 100), (0.05, 0.0, 0.10, 0.0, 0.25), (0.2, 0.3, 0.3, 0.3, 0.3), l2=1.0
    ),
}


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownArchitectureError(
            f"unknown architecture {name!r}; choose from {', '.join(PRESETS)}"
        ) from None


@dataclass
class StackedNetwork:
    whitening: WhiteningFilter
    layers: list
    head_weights: np.ndarray  # (classes, last hidden size)
    head_bias: np.ndarray
    spec: ArchitectureSpec = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.head_weights = np.ascontiguousarray(self.head_weights, dtype=np.float64)
        self.head_bias = np.ascontiguousarray(self.head_bias, dtype=np.float64)
        dim = self.whitening.dim
        for i, layer in enumerate(self.layers):
            if layer.n_visible != dim:
                raise ValueError(f"layer {i + 1} expects {layer.n_visible} inputs, previous layer gives {dim}")
            dim = layer.n_hidden
        if self.head_weights.shape != (self.head_bias.shape[0], dim):
            raise ValueError(f"head weights {self.head_weights.shape} do not fit {dim} features")

    @property
    def input_dim(self):
        return self.whitening.dim

    @property
    def n_classes(self):
        return self.head_bias.shape[0]

    def weight_matrices(self):
        return [layer.weights for layer in self.layers] + [self.head_weights]

    def copy(self):
        return StackedNetwork(
            self.whitening, [l.copy() for l in self.layers],
            self.head_weights.copy(), self.head_bias.copy(), self.spec, dict(self.metadata),
        )


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def features(net, x):
    """Clean hidden activations of the last layer for whitened input ``x``."""
    a = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        a = encode(layer, a)
    return a


def logits_whitened(net, x):
    return features(net, x) @ net.head_weights.T + net.head_bias


def forward_whitened(net, x):
    return softmax(logits_whitened(net, x))


def forward(net, s):
    """Class probabilities for raw interleaved vector(s) ``s``."""
    return forward_whitened(net, whiten(net.whitening, s))


def predict(net, s, batch_size=10000):
    """Most probable class per vector; ties go to the lowest index."""
    s = np.asarray(s)
    if s.ndim == 1:
        return int(np.argmax(forward(net, s)))
    out = np.empty(len(s), dtype=np.int64)
    for i in range(0, len(s), batch_size):
        out[i : i + batch_size] = np.argmax(forward(net, s[i : i + batch_size]), axis=1)
    return out


# ---------------------------------------------------------------------------
# pretraining
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PretrainSettings:
    epochs: int = 15
    batch_size: int = 100
    lr: float = 0.01
    eps: float = 1e-8
    sparsity_weight: float = 0.3
    corruption_mode: str = "mask"


def pretrain_stack(spec, x, whitening, seed=0, settings=PretrainSettings(), n_classes=N_FAMILIES):
    """Greedy layer-wise pretraining; returns ``(net, histories)``.

    Layer ``l`` is trained on the clean activations of the already trained
    layer ``l - 1``. The softmax head starts at zero.
    """
    a = np.asarray(x, dtype=np.float64)
    layers, histories = [], []
    for i, width in enumerate(spec.hidden_sizes):
        layer_seed = derive_seed(seed, "pretrain", i)
        if spec.pretrain:
            layer, hist = pretrain_layer(
                a, width,
                CorruptionSpec(spec.corruption[i], settings.corruption_mode),
                spec.sparsity(i, settings.sparsity_weight),
                epochs=settings.epochs, batch_size=settings.batch_size,
                lr=settings.lr, eps=settings.eps, seed=layer_seed, layer_index=i + 1,
            )
            histories.append(hist)
        else:
            layer = AutoencoderLayer.initialize(a.shape[1], width, derive(layer_seed, "init"))
        layers.append(layer)
        if i + 1 < spec.n_layers:
            a = encode(layer, a)
    last = spec.hidden_sizes[-1] if spec.hidden_sizes else whitening.dim
    net = StackedNetwork(whitening, layers, np.zeros((n_classes, last)), np.zeros(n_classes), spec)
    return net, histories


# ---------------------------------------------------------------------------
# fine-tuning
# ---------------------------------------------------------------------------

def _onehot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def finetune_loss(net, x, labels, l2=0.0, dropout_masks=None):
    """Mean negative log-likelihood plus ``l2 * sum of squared weights``.

    The L2 sum covers every weight matrix, head included, and no biases.
    ``dropout_masks`` (one per hidden layer, already divided by the keep
    probability) are multiplied onto the hidden activations.
    """
    a = np.asarray(x, dtype=np.float64)
    for i, layer in enumerate(net.layers):
        a = np.tanh(a @ layer.weights.T + layer.hidden_bias)
        if dropout_masks is not None:
            a = a * dropout_masks[i]
    z = a @ net.head_weights.T + net.head_bias
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    nll = -np.mean(logp[np.arange(len(labels)), labels])
    reg = sum(float(np.sum(w * w)) for w in net.weight_matrices())
    return nll + l2 * reg


def finetune_gradients(net, x, labels, dropout_masks=None):
    """Gradients of the mean NLL (no L2 term) and the NLL itself.

    Returns ``(nll, layer_grads, head_grads)`` with ``layer_grads`` a list of
    ``(dW, db)`` pairs and ``head_grads = (dW, db)``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    acts, tanhs = [x], []
    a = x
    for i, layer in enumerate(net.layers):
        h = np.tanh(a @ layer.weights.T + layer.hidden_bias)
        tanhs.append(h)
        a = h * dropout_masks[i] if dropout_masks is not None else h
        acts.append(a)
    z = a @ net.head_weights.T + net.head_bias
    p = softmax(z)
    rows = np.arange(n)
    nll = -np.mean(np.log(np.maximum(p[rows, labels], np.finfo(float).tiny)))

    d = p
    d[rows, labels] -= 1.0
    d /= n
    head = (d.T @ acts[-1], d.sum(axis=0))
    d_a = d @ net.head_weights
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        if dropout_masks is not None:
            d_a *= dropout_masks[i]
        kernels.tanh_backward(d_a, tanhs[i])
        grads[i] = (d_a.T @ acts[i], d_a.sum(axis=0))
        if i:
            d_a = d_a @ net.layers[i].weights
    return nll, grads, head


@dataclass(frozen=True)
class FinetuneSettings:
    """``l2_unit`` converts an architecture's L2 switch into a coefficient.

    ``None`` means one over the number of training vectors, which makes the
    penalty a prior on the summed (rather than averaged) likelihood.
    """

    epochs: int = 150
    batch_size: int = 100
    lr: float = 0.02
    l2_unit: float = None


def effective_l2(arch_l2, settings, n_train):
    unit = 1.0 / n_train if settings.l2_unit is None else settings.l2_unit
    return arch_l2 * unit


@dataclass
class FinetuneHistory:
    nll: list = field(default_factory=list)
    loss: list = field(default_factory=list)


def _dropout_masks(net, n, p, rng):
    keep = 1.0 - p
    return [(rng.random((n, l.n_hidden)) < keep) / keep for l in net.layers]


def finetune(net, x, labels, l2=0.0, settings=FinetuneSettings(), seed=0, dropout=0.0):
    """Mini-batch SGD on the regularised NLL; returns ``(tuned_net, history)``.

    The input network is left untouched.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= net.n_classes):
        raise ValueError(f"labels must lie in 0..{net.n_classes - 1}")
    if len(x) != len(labels) or len(x) == 0:
        raise ValueError("need equally many (>0) vectors and labels")
    net = net.copy()
    shuffle_rng = derive(seed, "finetune-shuffle")
    drop_rng = derive(seed, "dropout")
    decay = 2.0 * l2
    history = FinetuneHistory()
    for epoch in range(1, settings.epochs + 1):
        perm = shuffle_rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), settings.batch_size):
            idx = perm[start : start + settings.batch_size]
            masks = _dropout_masks(net, len(idx), dropout, drop_rng) if dropout else None
            nll, grads, head = finetune_gradients(net, x[idx], labels[idx], masks)
            total += nll * len(idx)
            for layer, (g_w, g_b) in zip(net.layers, grads):
                kernels.sgd_update(layer.weights, g_w, settings.lr, decay)
                kernels.sgd_update(layer.hidden_bias, g_b, settings.lr)
            kernels.sgd_update(net.head_weights, head[0], settings.lr, decay)
            kernels.sgd_update(net.head_bias, head[1], settings.lr)
        mean_nll = total / len(x)
        reg = sum(float(np.sum(w * w)) for w in net.weight_matrices())
        if not np.isfinite(mean_nll) or not np.isfinite(reg):
            raise TrainingDivergedError(f"fine-tuning diverged at epoch {epoch}", epoch)
        history.nll.append(mean_nll)
        history.loss.append(mean_nll + l2 * reg)
        log.info("finetune epoch %d/%d nll %.6f loss %.6f", epoch, settings.epochs, mean_nll, history.loss[-1])
    return net, history


def finetune_mlp_baseline(spec, x, labels, whitening, dropout=0.5, l2=1.0, settings=FinetuneSettings(), seed=0):
    """Randomly initialised MLP trained with inverted dropout on every hidden layer."""
    if spec.pretrain:
        spec = dataclasses.replace(spec, pretrain=False)
    net, _ = pretrain_stack(spec, x, whitening, seed=seed)
    return finetune(net, x, labels, l2=l2, settings=settings, seed=seed, dropout=dropout)
