"""ZCA whitening."""

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_EPSILON = 1e-5


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class WhiteningFilter:
    """Symmetric whitening transform ``x = Z (s - mean)``.

    ``epsilon`` is the absolute eigenvalue regulariser that was used when
    fitting (the relative value times the mean covariance eigenvalue).
    """

    matrix: np.ndarray
    mean: np.ndarray
    epsilon: float

    def __post_init__(self):
        z = np.ascontiguousarray(self.matrix, dtype=np.float64)
        mu = np.ascontiguousarray(self.mean, dtype=np.float64)
        if z.ndim != 2 or z.shape[0] != z.shape[1] or mu.shape != (z.shape[0],):
            raise ValueError(f"inconsistent filter shapes {z.shape} / {mu.shape}")
        z.flags.writeable = False
        mu.flags.writeable = False
        object.__setattr__(self, "matrix", z)
        object.__setattr__(self, "mean", mu)

    @property
    def dim(self):
        return self.mean.shape[0]

    def __call__(self, s):
        return apply(self, s)

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim), np.zeros(dim), 0.0)


def fit_zca(samples, epsilon=DEFAULT_EPSILON):
    """Fit a ZCA filter on the rows of ``samples`` (or a ``Dataset``).

    ``epsilon`` is relative to the mean eigenvalue of the sample covariance.
    """
    x = np.asarray(getattr(samples, "samples", samples), dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) array")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    n, d = x.shape
    if n < d:
        warnings.warn(
            f"{n} vectors for {d} dimensions: covariance is rank deficient, "
            "relying on epsilon regularisation",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / n
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals, 0.0, None)
    eps = epsilon * max(evals.mean(), np.finfo(float).tiny)
    z = (evecs * (1.0 / np.sqrt(evals + eps))) @ evecs.T
    z = 0.5 * (z + z.T)
    return WhiteningFilter(z, mu, float(eps))


def apply(filt, s):
    """Whiten one vector ``(d,)`` or a batch ``(n, d)``."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[-1] != filt.dim:
        raise ValueError(f"vector length {s.shape[-1]} does not match filter dimension {filt.dim}")
    return (s - filt.mean) @ filt.matrix.T
