"""Confusion matrices, per-family metrics and SNR sweeps."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .channel import add_awgn
from .siggen import FAMILY_NAMES, N_FAMILIES


class UndefinedClassError(ValueError):
    """A metric needs samples of a class that has none."""


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i, j]``: samples of true class ``i`` predicted as ``j``."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or (c < 0).any():
            raise ValueError("counts must be a square non-negative matrix")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @property
    def n_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    def row_totals(self):
        return self.counts.sum(axis=1)

    def normalized(self):
        """Row-normalised matrix, an estimate of P(predicted | true); empty rows are NaN."""
        rows = self.row_totals().astype(np.float64)[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, self.counts / rows, np.nan)


def confusion(predictions, truths, n_classes=N_FAMILIES):
    pred = np.asarray(predictions)
    truth = np.asarray(truths)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"predictions {pred.shape} and truths {truth.shape} must be equal-length 1-d")
    for name, a in (("prediction", pred), ("truth", truth)):
        if a.size and (a.min() < 0 or a.max() >= n_classes):
            raise ValueError(f"{name} label outside 0..{n_classes - 1}")
    return ConfusionMatrix(kernels.confusion_counts(pred, truth, n_classes))


def sensitivity(m, k):
    """Fraction of true class-``k`` samples predicted as ``k`` (recall)."""
    row = int(m.counts[k].sum())
    if row == 0:
        raise UndefinedClassError(f"no samples of class {k}")
    return m.counts[k, k] / row


def precision(m, k):
    """Fraction of class-``k`` predictions that are correct; ``None`` if nothing was predicted as ``k``."""
    col = int(m.counts[:, k].sum())
    if col == 0:
        return None
    return m.counts[k, k] / col


def pcc(m):
    """Macro average of per-class correct fractions."""
    return sum(sensitivity(m, k) for k in range(m.n_classes)) / m.n_classes


def accuracy(m):
    if m.total == 0:
        raise UndefinedClassError("empty confusion matrix")
    return np.trace(m.counts) / m.total


@dataclass(frozen=True)
class SweepPoint:
    snr_db: float
    pcc: float
    accuracy: float
    precision: tuple
    sensitivity: tuple
    confusion: ConfusionMatrix


def evaluate(net, dataset):
    from .stack import predict

    m = confusion(predict(net, dataset.samples), dataset.labels, net.n_classes)
    return m


def point_from_confusion(snr_db, m):
    return SweepPoint(
        float(snr_db), pcc(m), accuracy(m),
        tuple(precision(m, k) for k in range(m.n_classes)),
        tuple(sensitivity(m, k) for k in range(m.n_classes)),
        m,
    )


def noise_seed(seed, snr_db):
    """Noise stream seed for one SNR point; depends only on the seed and the SNR value."""
    key = 0x7FFFFFFF if math.isinf(snr_db) else int(round(snr_db * 1000)) & 0xFFFFFFFF
    return (int(seed) * 1_000_003 + key) & ((1 << 64) - 1)


def snr_sweep(net, test, snrs, seed=0):
    """Evaluate ``net`` on freshly noised copies of ``test`` at every SNR in ``snrs``.

    ``snrs`` must be strictly monotone; results come back in the given order.
    """
    snrs = [float(s) for s in snrs]
    if not snrs:
        raise ValueError("empty SNR list")
    diffs = np.diff(snrs)
    if len(snrs) > 1 and not ((diffs > 0).all() or (diffs < 0).all()):
        raise ValueError("SNR points must be strictly increasing or strictly decreasing")
    out = []
    for snr in snrs:
        noised = add_awgn(test, snr, seed=noise_seed(seed, snr))
        out.append(point_from_confusion(snr, evaluate(net, noised)))
    return out


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def sweep_header(names=FAMILY_NAMES):
    return ["snr_db", "pcc"] + [f"precision_{n}" for n in names] + [f"sensitivity_{n}" for n in names]


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_sweep_csv(points, path, names=FAMILY_NAMES):
    """One row per SNR point; an undefined precision is written as an empty field."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(sweep_header(names))
        for p in points:
            w.writerow([_fmt(p.snr_db), _fmt(p.pcc)] + [_fmt(v) for v in p.precision] + [_fmt(v) for v in p.sensitivity])


def write_confusion_csv(m, path, names=FAMILY_NAMES):
    """Counts block, blank line, then the row-normalised block."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["counts"] + list(names))
        for name, row in zip(names, m.counts):
            w.writerow([name] + [int(v) for v in row])
        w.writerow([])
        w.writerow(["normalized"] + list(names))
        for name, row in zip(names, m.normalized()):
            w.writerow([name] + ["" if np.isnan(v) else repr(float(v)) for v in row])
