"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin. The numba versions are used unless the
environment variable ``SSDA_AMC_NO_NUMBA`` is set to a non-empty value other
than ``0``, or numba cannot be imported. Both paths produce bit-identical
results (no fastmath, same operation order), which the test-suite checks.
"""

import os

import numpy as np

_DISABLED = os.environ.get("SSDA_AMC_NO_NUMBA", "") not in ("", "0")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
except ImportError:  # pragma: no cover - exercised via the env flag
    njit = None

BACKEND = "numpy" if njit is None else "numba"


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------

def np_adagrad_update(param, accum, grad, lr, eps):
    accum += grad * grad
    param -= lr * grad / (np.sqrt(accum) + eps)


def np_sgd_update(param, grad, lr, decay):
    # decay is 2*lambda for an L2 term lambda*sum(W**2)
    param -= lr * (grad + decay * param)


def np_tanh_backward(delta, y):
    delta *= 1.0 - y * y


def np_confusion_counts(pred, truth, n_classes):
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    return counts


def np_phase_accumulate(increments, start):
    out = np.cumsum(np.concatenate(([start], increments)))[1:]
    return out


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if njit is not None:

    @njit(cache=True)
    def nb_adagrad_update(param, accum, grad, lr, eps):
        p = param.ravel()
        a = accum.ravel()
        g = grad.ravel()
        for i in range(p.size):
            a[i] += g[i] * g[i]
            p[i] -= lr * g[i] / (np.sqrt(a[i]) + eps)

    @njit(cache=True)
    def nb_sgd_update(param, grad, lr, decay):
        p = param.ravel()
        g = grad.ravel()
        for i in range(p.size):
            p[i] -= lr * (g[i] + decay * p[i])

    @njit(cache=True)
    def nb_tanh_backward(delta, y):
        d = delta.ravel()
        t = y.ravel()
        for i in range(d.size):
            d[i] *= 1.0 - t[i] * t[i]

    @njit(cache=True)
    def nb_confusion_counts(pred, truth, n_classes):
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        for i in range(pred.size):
            counts[truth[i], pred[i]] += 1
        return counts

    @njit(cache=True)
    def nb_phase_accumulate(increments, start):
        out = np.empty(increments.size, dtype=np.float64)
        acc = start
        for i in range(increments.size):
            acc += increments[i]
            out[i] = acc
        return out

    _adagrad_update = nb_adagrad_update
    _sgd_update = nb_sgd_update
    _tanh_backward = nb_tanh_backward
    _confusion_counts = nb_confusion_counts
    _phase_accumulate = nb_phase_accumulate
else:
    _adagrad_update = np_adagrad_update
    _sgd_update = np_sgd_update
    _tanh_backward = np_tanh_backward
    _confusion_counts = np_confusion_counts
    _phase_accumulate = np_phase_accumulate


def _inplace_target(a):
    if not (a.flags.c_contiguous and a.flags.writeable and a.dtype == np.float64):
        raise ValueError("in-place kernels need writeable C-contiguous float64 arrays")
    return a


def adagrad_update(param, accum, grad, lr, eps):
    """In-place AdaGrad step on C-contiguous float64 arrays."""
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    _adagrad_update(_inplace_target(param), _inplace_target(accum), grad, float(lr), float(eps))


def sgd_update(param, grad, lr, decay=0.0):
    """In-place ``param -= lr * (grad + decay * param)``."""
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    _sgd_update(_inplace_target(param), grad, float(lr), float(decay))


def tanh_backward(delta, y):
    """In-place ``delta *= 1 - y**2`` where ``y = tanh(a)``."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    _tanh_backward(_inplace_target(delta), y)


def confusion_counts(pred, truth, n_classes):
    pred = np.ascontiguousarray(pred, dtype=np.int64)
    truth = np.ascontiguousarray(truth, dtype=np.int64)
    return _confusion_counts(pred, truth, int(n_classes))


def phase_accumulate(increments, start=0.0):
    """Running sum ``start + cumsum(increments)`` evaluated strictly left to right."""
    increments = np.ascontiguousarray(increments, dtype=np.float64)
    return _phase_accumulate(increments, float(start))
