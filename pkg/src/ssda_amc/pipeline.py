"""End-to-end training from an ``ExperimentConfig``."""

import logging

import numpy as np

from .rng import derive_seed
from .stack import effective_l2, finetune, pretrain_stack
from .whiten import apply, fit_zca

log = logging.getLogger(__name__)


def _floats(values):
    return ",".join(f"{v:.9g}" for v in values) or "-"


def train_model(cfg, train):
    """Whiten, pretrain and fine-tune on ``train``; returns the network.

    Training metadata (settings, seeds and per-epoch costs) is attached to
    ``net.metadata`` and travels with the saved model.
    """
    spec = cfg.architecture()
    pre, fine = cfg.pretrain_settings(), cfg.finetune_settings()
    filt = fit_zca(train, cfg.whiten_epsilon)
    x = apply(filt, train.samples)
    labels = np.asarray(train.labels, dtype=np.int64)

    pretrain_seed = derive_seed(cfg.seed, "train-pretrain")
    finetune_seed = derive_seed(cfg.seed, "train-finetune")
    log.info("architecture %s, hidden %s, %d training vectors", spec.name, spec.hidden_sizes or "-", len(x))
    net, histories = pretrain_stack(spec, x, filt, seed=pretrain_seed, settings=pre)
    l2 = effective_l2(spec.l2, fine, len(x))
    net, fh = finetune(net, x, labels, l2=l2, settings=fine, seed=finetune_seed, dropout=spec.dropout)

    meta = {
        "seed": cfg.seed,
        "pretrain_seed": pretrain_seed,
        "finetune_seed": finetune_seed,
        "scale": repr(cfg.scale),
        "whiten_epsilon": repr(cfg.whiten_epsilon),
        "pretrain_epochs": pre.epochs,
        "pretrain_batch_size": pre.batch_size,
        "pretrain_lr": repr(pre.lr),
        "adagrad_eps": repr(pre.eps),
        "sparsity_weight": repr(pre.sparsity_weight),
        "corruption_mode": pre.corruption_mode,
        "finetune_epochs": fine.epochs,
        "finetune_batch_size": fine.batch_size,
        "finetune_lr": repr(fine.lr),
        "l2_effective": repr(l2),
        "train_vectors": len(x),
        "finetune_nll": _floats(fh.nll),
        "finetune_loss": _floats(fh.loss),
    }
    for i, h in enumerate(histories, 1):
        meta[f"pretrain_cost_layer{i}"] = _floats(h.train_cost)
        meta[f"monitor_cost_layer{i}"] = _floats(h.monitor_cost)
    net.metadata.update({k: str(v) for k, v in meta.items()})
    return net
