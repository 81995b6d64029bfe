"""Additive white Gaussian noise calibrated per modulation family."""

import math
from dataclasses import dataclass

import numpy as np

from .rng import derive
from .siggen import FAMILIES, Dataset


def mean_power(vectors):
    """Mean over vectors of the mean squared interleaved component."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.size == 0:
        raise ValueError("mean_power of an empty set")
    x = np.atleast_2d(x)
    return float(np.mean(np.mean(x * x, axis=1)))


def calibrate_beta(snr_db):
    """Noise-to-signal power ratio for a target SNR in dB (0 for +inf)."""
    snr_db = float(snr_db)
    if math.isnan(snr_db):
        raise ValueError("SNR must not be NaN")
    if snr_db == math.inf:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class NoiseRecord:
    """What ``add_awgn`` injected, per family (indexed by family value)."""

    snr_db: float
    signal_power: tuple
    noise_power: tuple  # calibrated variance per component
    injected_power: tuple  # empirical mean square of the drawn noise

    def measured_snr_db(self):
        return tuple(
            math.inf if n == 0 else 10.0 * math.log10(s / n)
            for s, n in zip(self.signal_power, self.injected_power)
        )


def add_awgn(test, snr_db, seed=0, return_record=False):
    """Add AWGN to a labelled dataset so every family sits at ``snr_db``.

    For each family the noise variance per interleaved component is
    ``calibrate_beta(snr_db) * mean_power(family vectors)``; each family draws
    from its own seeded stream. Labels and order are preserved.
    """
    beta = calibrate_beta(snr_db)
    x = test.samples.astype(np.float64)
    sig, var, inj = [], [], []
    for fam in FAMILIES:
        rows = np.flatnonzero(test.labels == int(fam))
        if rows.size == 0:
            sig.append(0.0), var.append(0.0), inj.append(0.0)
            continue
        p_sig = mean_power(x[rows])
        p_noise = beta * p_sig
        if p_noise > 0:
            noise = derive(seed, "awgn", int(fam)).normal(0.0, math.sqrt(p_noise), size=(rows.size, x.shape[1]))
            x[rows] += noise
            inj.append(float(np.mean(noise * noise)))
        else:
            inj.append(0.0)
        sig.append(p_sig)
        var.append(p_noise)
    noised = Dataset(test.split, x, test.labels)
    if return_record:
        return noised, NoiseRecord(float(snr_db), tuple(sig), tuple(var), tuple(inj))
    return noised
