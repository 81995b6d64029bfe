"""Synthetic I/Q datasets for six digital modulation families.

Each family gets its own random payload, is modulated to complex baseband at
``samples_per_symbol`` samples per symbol and cut into fixed-length vectors of
interleaved I/Q amplitudes. Vectors start at random offsets relative to the
symbol clock and get a random carrier phase, so they are aligned neither in
time nor in phase; both splits are then shuffled.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import kernels
from .rng import derive, derive_seed


class ModulationFamily(IntEnum):
    OOK = 0
    GFSK = 1
    GMSK = 2
    DBPSK = 3
    DQPSK = 4
    OFDM = 5


FAMILIES = tuple(ModulationFamily)
N_FAMILIES = len(FAMILIES)
FAMILY_NAMES = tuple(f.name for f in FAMILIES)


class ConfigError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ModemParams:
    """Per-family modulator settings."""

    ook_amplitude: float = 1.0
    rrc_rolloff: float = 0.35
    rrc_span: int = 8  # symbols
    gfsk_index: float = 1.0
    gfsk_bt: float = 0.35
    gmsk_index: float = 0.5
    gmsk_bt: float = 0.3
    gaussian_span: int = 4  # symbols
    ofdm_fft_size: int = 16
    ofdm_cp_length: int = 4
    # signed subcarrier indices; everything else (DC, band edges) is null
    ofdm_data_carriers: tuple = (-7, -6, -4, -3, -2, -1, 1, 2, 3, 4, 6, 7)
    ofdm_pilot_carriers: tuple = (-5, 5)


@dataclass(frozen=True)
class GenConfig:
    samples_per_symbol: int = 10
    samples_per_vector: int = 100
    train_vectors_per_mod: int = 10000
    test_vectors_total: int = 10000
    seed: int = 0
    random_phase: bool = True
    # each vector starts 0..timing_jitter-1 samples after the end of a gap of
    # timing_jitter samples; 0 gives plain consecutive windows
    timing_jitter: int = 20
    normalize_power: bool = True
    modem: ModemParams = field(default_factory=ModemParams)

    @property
    def vector_length(self):
        return 2 * self.samples_per_vector

    @property
    def test_vectors_per_mod(self):
        return self.test_vectors_total // N_FAMILIES

    @property
    def train_vectors_total(self):
        return N_FAMILIES * self.train_vectors_per_mod

    def validate(self):
        sps, spv = self.samples_per_symbol, self.samples_per_vector
        if sps < 1 or spv < 1:
            raise ConfigError("samples_per_symbol and samples_per_vector must be positive")
        if spv % sps:
            raise ConfigError(
                f"samples_per_vector ({spv}) must be a multiple of samples_per_symbol ({sps})"
            )
        if self.train_vectors_per_mod < 1:
            raise ConfigError("train_vectors_per_mod must be >= 1")
        if self.timing_jitter < 0:
            raise ConfigError("timing_jitter must be >= 0")
        if self.test_vectors_total < N_FAMILIES:
            raise ConfigError(f"test_vectors_total must be >= {N_FAMILIES}")
        m = self.modem
        if not 0.0 < m.rrc_rolloff <= 1.0:
            raise ConfigError("rrc_rolloff must lie in (0, 1]")
        n = m.ofdm_fft_size
        used = list(m.ofdm_data_carriers) + list(m.ofdm_pilot_carriers)
        if len(set(used)) != len(used) or any(k == 0 or abs(k) >= n // 2 + (n % 2) for k in used):
            raise ConfigError("OFDM carriers must be distinct, non-DC and inside the FFT")
        if not m.ofdm_data_carriers:
            raise ConfigError("OFDM needs at least one data carrier")
        return self

    def scaled(self, scale):
        """Shrink dataset sizes by ``scale`` (desk-scale runs)."""
        if scale <= 0:
            raise ConfigError("scale must be positive")
        return dataclasses.replace(
            self,
            train_vectors_per_mod=max(1, round(self.train_vectors_per_mod * scale)),
            test_vectors_total=max(N_FAMILIES, round(self.test_vectors_total * scale)),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled vectors of interleaved I/Q samples.

    ``samples`` is float32 with shape ``(n, 2 * samples_per_vector)``;
    ``labels`` holds ``ModulationFamily`` indices as uint8.
    """

    split: str
    samples: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if samples.ndim != 2 or labels.shape != (samples.shape[0],):
            raise ValueError("samples must be (n, d) and labels (n,)")
        if labels.size and labels.max() >= N_FAMILIES:
            raise ValueError("label out of range")
        samples.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def vector_length(self):
        return self.samples.shape[1]

    def family_counts(self):
        return np.bincount(self.labels, minlength=N_FAMILIES)

    def family(self, fam):
        """Samples of one family, in dataset order."""
        return self.samples[self.labels == int(fam)]


# ---------------------------------------------------------------------------
# payload
# ---------------------------------------------------------------------------

def generate_bytes(seed, n):
    """``n`` uniform random bytes from the payload stream of ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return derive(seed, "payload").integers(0, 256, size=n, dtype=np.uint8)


def _bits(payload):
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.size == 0:
        raise ValueError("payload must be non-empty")
    return np.unpackbits(payload)  # MSB first


# ---------------------------------------------------------------------------
# pulse shapes
# ---------------------------------------------------------------------------

def rrc_taps(rolloff, sps, span):
    """Root-raised-cosine impulse response, unit energy, ``span * sps + 1`` taps."""
    t = np.arange(-span * sps // 2, span * sps // 2 + 1) / sps
    a = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if ti == 0.0:
            h[i] = 1.0 - a + 4 * a / np.pi
        elif a > 0 and abs(abs(ti) - 1.0 / (4 * a)) < 1e-12:
            h[i] = (a / np.sqrt(2)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * a))
                + (1 - 2 / np.pi) * np.cos(np.pi / (4 * a))
            )
        else:
            num = np.sin(np.pi * ti * (1 - a)) + 4 * a * ti * np.cos(np.pi * ti * (1 + a))
            den = np.pi * ti * (1 - (4 * a * ti) ** 2)
            h[i] = num / den
    return h / np.sqrt(np.sum(h * h))


def gaussian_taps(bt, sps, span):
    """Gaussian frequency-shaping filter normalised to unit DC gain."""
    t = np.arange(-span * sps // 2, span * sps // 2 + 1) / sps
    alpha = np.sqrt(np.log(2) / 2) / bt
    h = np.exp(-((np.pi * t / alpha) ** 2))
    return h / h.sum()


def _filter_centered(x, taps):
    # full convolution trimmed back to len(x), compensating the group delay
    delay = (len(taps) - 1) // 2
    return np.convolve(x, taps)[delay : delay + len(x)]


# ---------------------------------------------------------------------------
# modulators
# ---------------------------------------------------------------------------

def _ook(bits, cfg):
    amp = cfg.modem.ook_amplitude * bits.astype(np.float64)
    return np.repeat(amp, cfg.samples_per_symbol).astype(np.complex128)


def _linear_psk(phase_steps, cfg):
    phases = kernels.phase_accumulate(phase_steps)
    symbols = np.exp(1j * phases)
    sps = cfg.samples_per_symbol
    up = np.zeros(len(symbols) * sps, dtype=np.complex128)
    up[::sps] = symbols
    taps = rrc_taps(cfg.modem.rrc_rolloff, sps, cfg.modem.rrc_span)
    return _filter_centered(up, taps) * np.sqrt(sps)


def _dbpsk(bits, cfg):
    # 0 -> no phase change, 1 -> pi
    return _linear_psk(np.pi * bits.astype(np.float64), cfg)


# Gray-coded dibit -> phase increment in units of pi/2
_DQPSK_STEPS = {(0, 0): 0, (0, 1): 1, (1, 1): 2, (1, 0): 3}


def _dqpsk(bits, cfg):
    pairs = bits[: len(bits) // 2 * 2].reshape(-1, 2)
    lut = np.zeros((2, 2))
    for (b0, b1), k in _DQPSK_STEPS.items():
        lut[b0, b1] = k
    steps = lut[pairs[:, 0], pairs[:, 1]] * (np.pi / 2)
    return _linear_psk(steps, cfg)


def _gaussian_fsk(bits, cfg, index, bt):
    sps = cfg.samples_per_symbol
    nrz = np.repeat(2.0 * bits.astype(np.float64) - 1.0, sps)
    freq = _filter_centered(nrz, gaussian_taps(bt, sps, cfg.modem.gaussian_span))
    phase = kernels.phase_accumulate(np.pi * index * freq / sps)
    return np.exp(1j * phase)


def _gfsk(bits, cfg):
    return _gaussian_fsk(bits, cfg, cfg.modem.gfsk_index, cfg.modem.gfsk_bt)


def _gmsk(bits, cfg):
    return _gaussian_fsk(bits, cfg, cfg.modem.gmsk_index, cfg.modem.gmsk_bt)


def ofdm_bits_per_symbol(cfg):
    return 2 * len(cfg.modem.ofdm_data_carriers)


def _ofdm(bits, cfg):
    m = cfg.modem
    n_fft = m.ofdm_fft_size
    per_sym = ofdm_bits_per_symbol(cfg)
    n_sym = len(bits) // per_sym
    if n_sym == 0:
        raise InsufficientDataError(f"OFDM needs at least {per_sym} bits per symbol")
    b = bits[: n_sym * per_sym].reshape(n_sym, -1, 2).astype(np.float64)
    qpsk = ((1 - 2 * b[..., 0]) + 1j * (1 - 2 * b[..., 1])) / np.sqrt(2)
    grid = np.zeros((n_sym, n_fft), dtype=np.complex128)
    grid[:, np.asarray(m.ofdm_data_carriers) % n_fft] = qpsk
    grid[:, np.asarray(m.ofdm_pilot_carriers) % n_fft] = 1.0
    body = np.fft.ifft(grid, axis=1) * np.sqrt(n_fft)
    cp = m.ofdm_cp_length
    symbols = np.concatenate([body[:, n_fft - cp :], body], axis=1) if cp else body
    return symbols.ravel()


_MODULATORS = {
    ModulationFamily.OOK: _ook,
    ModulationFamily.GFSK: _gfsk,
    ModulationFamily.GMSK: _gmsk,
    ModulationFamily.DBPSK: _dbpsk,
    ModulationFamily.DQPSK: _dqpsk,
    ModulationFamily.OFDM: _ofdm,
}


def modulate(family, payload, cfg=None):
    """Modulate ``payload`` bytes (MSB first) into a complex baseband stream."""
    cfg = (cfg or GenConfig()).validate()
    try:
        fn = _MODULATORS[ModulationFamily(family)]
    except (ValueError, KeyError):
        raise ConfigError(f"unsupported modulation family: {family!r}") from None
    return fn(_bits(payload), cfg)


def samples_per_bit(family, cfg):
    family = ModulationFamily(family)
    if family is ModulationFamily.OFDM:
        m = cfg.modem
        return (m.ofdm_fft_size + m.ofdm_cp_length) / ofdm_bits_per_symbol(cfg)
    if family is ModulationFamily.DQPSK:
        return cfg.samples_per_symbol / 2
    return cfg.samples_per_symbol


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------

def windows(stream, samples_per_vector):
    """Consecutive non-overlapping complex windows; the remainder is dropped."""
    stream = np.asarray(stream)
    n = len(stream) // samples_per_vector
    if n == 0:
        raise InsufficientDataError(
            f"stream of {len(stream)} samples is shorter than one vector ({samples_per_vector})"
        )
    return stream[: n * samples_per_vector].reshape(n, samples_per_vector)


def interleave(win):
    """(n, N) complex -> (n, 2N) real as I0, Q0, I1, Q1, ..."""
    win = np.atleast_2d(win)
    out = np.empty((win.shape[0], 2 * win.shape[1]), dtype=np.float64)
    out[:, 0::2] = win.real
    out[:, 1::2] = win.imag
    return out


def deinterleave(vectors):
    vectors = np.atleast_2d(vectors)
    return vectors[:, 0::2] + 1j * vectors[:, 1::2]


def segment(stream, cfg=None):
    """Cut a stream into vectors of ``2 * samples_per_vector`` interleaved reals."""
    cfg = cfg or GenConfig()
    return interleave(windows(stream, cfg.samples_per_vector))


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

def _warmup_samples(cfg):
    # skip filter start-up so the first vector is already in steady state
    return cfg.modem.rrc_span * cfg.samples_per_symbol


def jittered_windows(stream, n_vectors, samples_per_vector, jitter, rng):
    """Cut ``n_vectors`` windows, each at a random offset inside its own slot.

    Slot ``i`` spans ``samples_per_vector + jitter`` samples; the window
    starts ``rng.integers(jitter)`` samples into the slot, so windows never
    overlap and their alignment to symbol boundaries is random.
    """
    slot = samples_per_vector + jitter
    if len(stream) < n_vectors * slot:
        raise InsufficientDataError(
            f"stream of {len(stream)} samples is too short for {n_vectors} jittered vectors"
        )
    starts = np.arange(n_vectors) * slot + rng.integers(0, jitter, size=n_vectors)
    return np.asarray(stream)[starts[:, None] + np.arange(samples_per_vector)]


def family_windows(family, n_vectors, cfg):
    """``n_vectors`` complex windows of one family from its own payload stream."""
    family = ModulationFamily(family)
    warm = _warmup_samples(cfg)
    slot = cfg.samples_per_vector + cfg.timing_jitter
    n_samples = warm + n_vectors * slot
    n_bits = math.ceil(n_samples / samples_per_bit(family, cfg))
    n_bits += ofdm_bits_per_symbol(cfg) if family is ModulationFamily.OFDM else 2
    payload = generate_bytes(derive_seed(cfg.seed, "payload", int(family)), math.ceil(n_bits / 8))
    stream = modulate(family, payload, cfg)[warm:]
    if cfg.timing_jitter:
        rng = derive(cfg.seed, "timing", int(family))
        return jittered_windows(stream, n_vectors, cfg.samples_per_vector, cfg.timing_jitter, rng)
    win = windows(stream, cfg.samples_per_vector)
    if len(win) < n_vectors:
        raise InsufficientDataError(f"{family.name}: produced {len(win)} < {n_vectors} vectors")
    return win[:n_vectors]


def build_dataset(cfg=None):
    """Build ``(train, test)`` datasets for all six families.

    Train vectors come from the first part of each family's payload stream and
    test vectors from the part after it, so the splits never share payload.
    """
    cfg = (cfg or GenConfig()).validate()
    n_train, n_test = cfg.train_vectors_per_mod, cfg.test_vectors_per_mod
    train_parts, test_parts = [], []
    for fam in FAMILIES:
        win = family_windows(fam, n_train + n_test, cfg)
        if cfg.random_phase:
            phi = derive(cfg.seed, "phase", int(fam)).uniform(0.0, 2 * np.pi, size=len(win))
            win = win * np.exp(1j * phi)[:, None]
        if cfg.normalize_power and fam is not ModulationFamily.OOK:
            power = np.mean(np.abs(win[:n_train]) ** 2)
            win = win / np.sqrt(power)
        vec = interleave(win)
        train_parts.append(vec[:n_train])
        test_parts.append(vec[n_train:])

    def assemble(parts, split, key):
        x = np.concatenate(parts)
        y = np.repeat(np.arange(N_FAMILIES, dtype=np.uint8), [len(p) for p in parts])
        perm = derive(cfg.seed, "shuffle", key).permutation(len(x))
        return Dataset(split, x[perm], y[perm])

    return assemble(train_parts, "train", 0), assemble(test_parts, "test", 1)
