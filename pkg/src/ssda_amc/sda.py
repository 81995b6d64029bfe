"""Tied-weight sparse denoising autoencoder layer.

Encoder ``y = tanh(W c(x) + b_v)``, decoder ``z = tanh(W.T y + b_h)`` with a
single weight matrix ``W`` of shape ``(hidden, visible)``. The layer cost is
the squared reconstruction error against the *uncorrupted* input (summed per
vector, averaged over the batch) plus
``weight * sum_k KL(target, rho_k)``, where ``rho_k`` is the batch mean of
the hidden activation rescaled from (-1, 1) onto (0, 1).
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .rng import derive

log = logging.getLogger(__name__)

RHO_CLAMP = 1e-6
PARAM_NAMES = ("weights", "hidden_bias", "visible_bias")


class TrainingDivergedError(RuntimeError):
    def __init__(self, message, epoch=None, layer=None):
        super().__init__(message)
        self.epoch = epoch
        self.layer = layer


@dataclass
class AutoencoderLayer:
    """Parameters of one layer.

    ``hidden_bias`` is the encoder bias (b_v in the usual notation of this
    model) and ``visible_bias`` the decoder bias (b_h).
    """

    weights: np.ndarray
    hidden_bias: np.ndarray
    visible_bias: np.ndarray

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.hidden_bias = np.ascontiguousarray(self.hidden_bias, dtype=np.float64)
        self.visible_bias = np.ascontiguousarray(self.visible_bias, dtype=np.float64)
        h, v = self.weights.shape
        if self.hidden_bias.shape != (h,) or self.visible_bias.shape != (v,):
            raise ValueError(
                f"bias shapes {self.hidden_bias.shape}/{self.visible_bias.shape} "
                f"do not match weights {self.weights.shape}"
            )

    @property
    def n_hidden(self):
        return self.weights.shape[0]

    @property
    def n_visible(self):
        return self.weights.shape[1]

    @classmethod
    def initialize(cls, n_visible, n_hidden, rng):
        bound = np.sqrt(6.0 / (n_visible + n_hidden))
        w = rng.uniform(-bound, bound, size=(n_hidden, n_visible))
        return cls(w, np.zeros(n_hidden), np.zeros(n_visible))

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return AutoencoderLayer(self.weights.copy(), self.hidden_bias.copy(), self.visible_bias.copy())

    def is_finite(self):
        return all(np.isfinite(p).all() for p in self.params().values())


@dataclass(frozen=True)
class CorruptionSpec:
    """Per-component corruption.

    ``mode="mask"`` zeroes a component with probability ``p``;
    ``mode="flip"`` negates it instead.
    """

    p: float = 0.0
    mode: str = "mask"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"corruption probability {self.p} outside [0, 1]")
        if self.mode not in ("mask", "flip"):
            raise ValueError(f"unknown corruption mode {self.mode!r}")

    def multiplier(self, shape, rng):
        """Draw the elementwise factor that ``corrupt`` multiplies by."""
        hit = rng.random(shape) < self.p
        if self.mode == "mask":
            return (~hit).astype(np.float64)
        return np.where(hit, -1.0, 1.0)


@dataclass(frozen=True)
class SparsitySpec:
    target: float = 0.05
    weight: float = 3.0

    def __post_init__(self):
        if not 0.0 <= self.target < 1.0:
            raise ValueError(f"sparsity target {self.target} outside [0, 1)")
        if self.weight < 0:
            raise ValueError("sparsity weight must be >= 0")


NO_SPARSITY = SparsitySpec(0.0, 0.0)


def corrupt(x, spec, rng):
    x = np.asarray(x, dtype=np.float64)
    if spec.p == 0.0:
        return x.copy()
    return x * spec.multiplier(x.shape, rng)


def _check_dim(x, n, what):
    if x.shape[-1] != n:
        raise ValueError(f"{what} length {x.shape[-1]} does not match layer dimension {n}")


def encode(layer, x):
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, layer.n_visible, "input")
    return np.tanh(x @ layer.weights.T + layer.hidden_bias)


def decode(layer, y):
    y = np.asarray(y, dtype=np.float64)
    _check_dim(y, layer.n_hidden, "hidden")
    return np.tanh(y @ layer.weights + layer.visible_bias)


def kl_divergence(rho, rho_k):
    """Bernoulli KL(rho || rho_k), natural log, with 0 log 0 = 0."""
    rho = np.asarray(rho, dtype=np.float64)
    rho_k = np.asarray(rho_k, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(rho > 0, rho * np.log(rho / rho_k), 0.0)
        b = np.where(rho < 1, (1 - rho) * np.log((1 - rho) / (1 - rho_k)), 0.0)
    out = a + b
    return float(out) if out.ndim == 0 else out


def mean_rescaled_activation(y):
    """Per-unit batch mean of ``(1 + y) / 2``, clamped away from 0 and 1."""
    return np.clip(np.mean((1.0 + y) / 2.0, axis=0), RHO_CLAMP, 1.0 - RHO_CLAMP)


def _resolve_multiplier(batch, corr, rng, multiplier):
    if multiplier is not None:
        return np.asarray(multiplier, dtype=np.float64)
    if corr is None or corr.p == 0.0:
        return None
    if rng is None:
        raise ValueError("corruption needs an rng or a fixed multiplier")
    return corr.multiplier(batch.shape, rng)


def _forward(layer, batch, mult):
    xc = batch if mult is None else batch * mult
    y = np.tanh(xc @ layer.weights.T + layer.hidden_bias)
    z = np.tanh(y @ layer.weights + layer.visible_bias)
    return xc, y, z


def _cost_terms(batch, y, z, sp):
    recon = np.sum((z - batch) ** 2) / batch.shape[0]
    if sp is None or sp.weight == 0.0:
        return recon, 0.0
    rho_k = mean_rescaled_activation(y)
    return recon, sp.weight * float(np.sum(kl_divergence(sp.target, rho_k)))


def layer_cost(layer, batch, corr=None, sp=None, rng=None, multiplier=None):
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    _check_dim(batch, layer.n_visible, "input")
    mult = _resolve_multiplier(batch, corr, rng, multiplier)
    _, y, z = _forward(layer, batch, mult)
    recon, sparse = _cost_terms(batch, y, z, sp)
    return recon + sparse


def layer_gradients(layer, batch, corr=None, sp=None, rng=None, multiplier=None):
    """Cost and exact gradients ``{"weights", "hidden_bias", "visible_bias"}``.

    Pass a fixed ``multiplier`` (see ``CorruptionSpec.multiplier``) to make the
    cost a deterministic function of the parameters.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    n = batch.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    _check_dim(batch, layer.n_visible, "input")
    mult = _resolve_multiplier(batch, corr, rng, multiplier)
    xc, y, z = _forward(layer, batch, mult)
    recon, sparse = _cost_terms(batch, y, z, sp)

    d_out = (2.0 / n) * (z - batch)
    kernels.tanh_backward(d_out, z)
    g_visible = d_out.sum(axis=0)
    g_w = y.T @ d_out  # decoder path
    d_hidden = d_out @ layer.weights.T
    if sp is not None and sp.weight != 0.0:
        raw = np.mean((1.0 + y) / 2.0, axis=0)
        rho_k = np.clip(raw, RHO_CLAMP, 1.0 - RHO_CLAMP)
        d_rho = sp.weight * ((1.0 - sp.target) / (1.0 - rho_k) - sp.target / rho_k)
        d_rho[(raw < RHO_CLAMP) | (raw > 1.0 - RHO_CLAMP)] = 0.0  # flat where clamped
        d_hidden += d_rho / (2.0 * n)
    kernels.tanh_backward(d_hidden, y)
    g_hidden = d_hidden.sum(axis=0)
    g_w += d_hidden.T @ xc  # encoder path
    grads = {"weights": g_w, "hidden_bias": g_hidden, "visible_bias": g_visible}
    return recon + sparse, grads


@dataclass
class AdaGradState:
    lr: float = 0.01
    eps: float = 1e-8
    accum: dict = field(default_factory=dict)


def adagrad_step(state, params, grads):
    """Update ``params`` (dict of arrays) in place; returns ``params``."""
    for name, p in params.items():
        g = np.ascontiguousarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        acc = state.accum.get(name)
        if acc is None:
            acc = state.accum[name] = np.zeros_like(p)
        kernels.adagrad_update(p, acc, g, state.lr, state.eps)
    return params


@dataclass
class PretrainHistory:
    train_cost: list = field(default_factory=list)
    monitor_cost: list = field(default_factory=list)  # index 0 is before training


def pretrain_layer(
    inputs,
    n_hidden,
    corr=CorruptionSpec(),
    sp=NO_SPARSITY,
    epochs=15,
    batch_size=100,
    lr=0.01,
    eps=1e-8,
    seed=0,
    monitor_fraction=0.05,
    layer_index=None,
):
    """Unsupervised AdaGrad training of one layer on ``inputs``.

    A slice of ``monitor_fraction`` of the inputs (at most 1000 vectors) is
    held out and its cost, under a frozen corruption draw, is logged before
    training and after every epoch.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("inputs must be a non-empty (n, d) array")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    tag = "" if layer_index is None else f"layer {layer_index}: "

    order = derive(seed, "monitor").permutation(len(x))
    n_mon = min(1000, int(len(x) * monitor_fraction)) if len(x) > 1 else 0
    monitor, train = x[order[:n_mon]], x[order[n_mon:]]
    mon_mult = corr.multiplier(monitor.shape, derive(seed, "monitor-mask")) if n_mon and corr.p else None

    layer = AutoencoderLayer.initialize(x.shape[1], n_hidden, derive(seed, "init"))
    shuffle_rng = derive(seed, "shuffle")
    corrupt_rng = derive(seed, "corrupt")
    state = AdaGradState(lr, eps)
    params = layer.params()
    history = PretrainHistory()
    if n_mon:
        history.monitor_cost.append(layer_cost(layer, monitor, sp=sp, multiplier=mon_mult))

    for epoch in range(1, epochs + 1):
        perm = shuffle_rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(train), batch_size):
            batch = train[perm[start : start + batch_size]]
            cost, grads = layer_gradients(layer, batch, corr, sp, rng=corrupt_rng)
            total += cost * len(batch)
            adagrad_step(state, params, grads)
        if not layer.is_finite():
            raise TrainingDivergedError(f"{tag}non-finite parameters after epoch {epoch}", epoch, layer_index)
        history.train_cost.append(total / len(train))
        if n_mon:
            history.monitor_cost.append(layer_cost(layer, monitor, sp=sp, multiplier=mon_mult))
        log.info(
            "%spretrain epoch %d/%d cost %.6f monitor %s",
            tag, epoch, epochs, history.train_cost[-1],
            f"{history.monitor_cost[-1]:.6f}" if n_mon else "-",
        )
    if n_mon and history.monitor_cost[-1] > history.monitor_cost[0]:
        log.warning("%smonitor cost rose from %.6f to %.6f", tag, history.monitor_cost[0], history.monitor_cost[-1])
    return layer, history
