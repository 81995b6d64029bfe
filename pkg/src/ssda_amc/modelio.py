"""Binary persistence for datasets and trained networks, receptive-field export.

All binary layouts are little-endian.

Dataset file ("IQD1")::

    offset  size        field
    0       4           magic b"IQDS"
    4       2   u16     version (1)
    6       4   u32     vector count n
    10      4   u32     vector length d (2 * samples per vector)
    14      1   u8      family count (6)
    15      n   u8      labels
    15+n    4*n*d f32   samples, vector-major

Model file ("SSDA")::

    0       4           magic b"SSDA"
    4       2   u16     version (1)
    6       4   u32     metadata length m
    10      m           UTF-8 key=value lines (architecture echo, seeds,
                        hyperparameters, epoch logs)
    then    4   u32     whitening dimension d
            8   f64     whitening epsilon
            8*d f64     mean
            8*d*d f64   whitening matrix, row-major
            4   u32     hidden layer count L
    L times 4+4 u32     hidden units h, visible units v
            8*h*v f64   weights (h, v) row-major
            8*h f64     encoder bias
            8*v f64     decoder bias
    then    4+4 u32     classes c, head inputs k
            8*c*k f64   head weights (c, k) row-major
            8*c f64     head bias
"""

import struct

import numpy as np

from .sda import AutoencoderLayer
from .siggen import N_FAMILIES, Dataset
from .stack import ArchitectureSpec, StackedNetwork
from .whiten import WhiteningFilter

DATASET_MAGIC = b"IQDS"
DATASET_VERSION = 1
MODEL_MAGIC = b"SSDA"
MODEL_VERSION = 1


class FormatError(ValueError):
    pass


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    def __init__(self, section):
        super().__init__(f"file truncated in {section}")
        self.section = section


class DimensionMismatchError(FormatError):
    pass


# ---------------------------------------------------------------------------
# key=value text blocks
# ---------------------------------------------------------------------------

def format_kv(items):
    lines = []
    for key, value in items.items():
        key, value = str(key), str(value)
        if "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"cannot encode metadata entry {key!r}")
        lines.append(f"{key}={value}\n")
    return "".join(lines)


def parse_kv(text):
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

def dataset_bytes(ds):
    n, d = ds.samples.shape
    head = DATASET_MAGIC + struct.pack("<HIIB", DATASET_VERSION, n, d, N_FAMILIES)
    return head + ds.labels.tobytes() + ds.samples.astype("<f4").tobytes()


def save_dataset(ds, path, metadata=None):
    """Write ``ds`` in IQD1 format; ``metadata`` goes to the ``.meta`` sidecar."""
    with open(path, "wb") as fh:
        fh.write(dataset_bytes(ds))
    if metadata is not None:
        write_sidecar(path, metadata)


def sidecar_path(path):
    return f"{path}.meta"


def write_sidecar(path, metadata):
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        fh.write(format_kv(metadata))


def read_sidecar(path):
    with open(sidecar_path(path), encoding="utf-8") as fh:
        return parse_kv(fh.read())


def dataset_from_bytes(buf, split="unknown"):
    if len(buf) < 4:
        raise TruncatedFileError("magic")
    if buf[:4] != DATASET_MAGIC:
        raise BadMagicError(f"not an IQD1 dataset (magic {bytes(buf[:4])!r})")
    if len(buf) < 15:
        raise TruncatedFileError("header")
    version, n, d, fams = struct.unpack_from("<HIIB", buf, 4)
    if version != DATASET_VERSION:
        raise VersionMismatchError(f"dataset version {version}, expected {DATASET_VERSION}")
    if fams != N_FAMILIES:
        raise DimensionMismatchError(f"dataset has {fams} families, expected {N_FAMILIES}")
    off = 15
    if len(buf) < off + n:
        raise TruncatedFileError("labels")
    labels = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off)
    off += n
    if len(buf) < off + 4 * n * d:
        raise TruncatedFileError("samples")
    if len(buf) > off + 4 * n * d:
        raise FormatError("trailing data after samples")
    samples = np.frombuffer(buf, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    return Dataset(split, samples.astype(np.float32), labels.copy())


def load_dataset(path, split=None):
    with open(path, "rb") as fh:
        buf = fh.read()
    if split is None:
        try:
            split = read_sidecar(path).get("split", "unknown")
        except FileNotFoundError:
            split = "unknown"
    return dataset_from_bytes(buf, split)


def read_dataset_header(path):
    with open(path, "rb") as fh:
        buf = fh.read(15)
    if buf[:4] != DATASET_MAGIC:
        raise BadMagicError(f"not an IQD1 dataset (magic {buf[:4]!r})")
    if len(buf) < 15:
        raise TruncatedFileError("header")
    version, n, d, fams = struct.unpack_from("<HIIB", buf, 4)
    return {"format": "IQD1", "version": version, "vectors": n, "vector_length": d, "families": fams}


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class _Writer:
    def __init__(self):
        self.parts = []

    def u32(self, v):
        self.parts.append(struct.pack("<I", v))

    def f64(self, v):
        self.parts.append(struct.pack("<d", v))

    def array(self, a):
        self.parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())

    def bytes(self):
        return b"".join(self.parts)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.off = 0

    def _take(self, n, section):
        if self.off + n > len(self.buf):
            raise TruncatedFileError(section)
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def u16(self, section):
        return struct.unpack("<H", self._take(2, section))[0]

    def u32(self, section):
        return struct.unpack("<I", self._take(4, section))[0]

    def f64(self, section):
        return struct.unpack("<d", self._take(8, section))[0]

    def array(self, shape, section):
        count = int(np.prod(shape))
        raw = self._take(8 * count, section)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def spec_from_metadata(meta):
    if "arch" not in meta:
        return None

    def floats(key, none_token=None):
        raw = meta.get(key, "-")
        if raw == "-":
            return ()
        return tuple(None if v == none_token else float(v) for v in raw.split("/"))

    sizes = meta.get("hidden_sizes", "-")
    return ArchitectureSpec(
        meta["arch"],
        () if sizes == "-" else tuple(int(v) for v in sizes.split("/")),
        floats("sparsity_targets", "-"),
        floats("corruption"),
        float(meta.get("l2", 0.0)),
        float(meta.get("dropout", 0.0)),
        meta.get("pretrain", "true") == "true",
    )


def model_bytes(net, metadata=None):
    meta = {}
    if net.spec is not None:
        meta.update(net.spec.describe())
    meta.update(net.metadata)
    meta.update(metadata or {})
    text = format_kv(meta).encode("utf-8")

    w = _Writer()
    w.u32(len(text))
    w.parts.append(text)
    wf = net.whitening
    w.u32(wf.dim)
    w.f64(wf.epsilon)
    w.array(wf.mean)
    w.array(wf.matrix)
    w.u32(len(net.layers))
    for layer in net.layers:
        w.u32(layer.n_hidden)
        w.u32(layer.n_visible)
        w.array(layer.weights)
        w.array(layer.hidden_bias)
        w.array(layer.visible_bias)
    c, k = net.head_weights.shape
    w.u32(c)
    w.u32(k)
    w.array(net.head_weights)
    w.array(net.head_bias)
    return MODEL_MAGIC + struct.pack("<H", MODEL_VERSION) + w.bytes()


def save_model(net, path, metadata=None):
    with open(path, "wb") as fh:
        fh.write(model_bytes(net, metadata))


def model_from_bytes(buf):
    if len(buf) < 4:
        raise TruncatedFileError("magic")
    if buf[:4] != MODEL_MAGIC:
        raise BadMagicError(f"not an SSDA model (magic {bytes(buf[:4])!r})")
    r = _Reader(buf)
    r.off = 4
    version = r.u16("header")
    if version != MODEL_VERSION:
        raise VersionMismatchError(f"model version {version}, expected {MODEL_VERSION}")
    meta_len = r.u32("header")
    meta = parse_kv(r._take(meta_len, "metadata").decode("utf-8"))

    dim = r.u32("whitening filter")
    eps = r.f64("whitening filter")
    mean = r.array((dim,), "whitening filter")
    z = r.array((dim, dim), "whitening filter")
    whitening = WhiteningFilter(z, mean, eps)

    n_layers = r.u32("layer count")
    layers = []
    prev = dim
    for i in range(1, n_layers + 1):
        section = f"layer {i}"
        h = r.u32(section)
        v = r.u32(section)
        if v != prev:
            raise DimensionMismatchError(f"layer {i} has {v} inputs but receives {prev}")
        w = r.array((h, v), section)
        bv = r.array((h,), section)
        bh = r.array((v,), section)
        layers.append(AutoencoderLayer(w, bv, bh))
        prev = h
    c = r.u32("softmax head")
    k = r.u32("softmax head")
    if k != prev:
        raise DimensionMismatchError(f"softmax head has {k} inputs but receives {prev}")
    hw = r.array((c, k), "softmax head")
    hb = r.array((c,), "softmax head")
    if r.off != len(buf):
        raise FormatError(f"{len(buf) - r.off} trailing bytes after softmax head")
    return StackedNetwork(whitening, layers, hw, hb, spec_from_metadata(meta), meta)


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def read_model_header(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    net = model_from_bytes(buf)
    return {
        "format": "SSDA",
        "version": MODEL_VERSION,
        "input_dim": net.input_dim,
        "layers": "/".join(str(l.n_hidden) for l in net.layers) or "-",
        "classes": net.n_classes,
        **net.metadata,
    }


# ---------------------------------------------------------------------------
# receptive fields
# ---------------------------------------------------------------------------

def receptive_fields(net, layer):
    """Input-space weights of every unit of hidden layer ``layer`` (1-based).

    For layer 1 these are the rows of its weight matrix. Deeper layers are
    projected through the weight matrices below them (``W_l ... W_1``), the
    linear part of the path from the input.
    """
    if not 1 <= layer <= len(net.layers):
        raise IndexError(f"layer {layer} does not exist (network has {len(net.layers)})")
    fields = net.layers[0].weights
    for l in net.layers[1:layer]:
        fields = l.weights @ fields
    return fields


def _tile(values):
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


def receptive_field_image(fields, tiles_per_row=10, gap=1):
    """Grey-level grid, one 2-row tile per unit (I row above Q row)."""
    n, d = fields.shape
    width = d // 2
    cols = min(tiles_per_row, n)
    rows = -(-n // cols)
    tile_h, tile_w = 2, width
    img = np.zeros((rows * (tile_h + gap) - gap, cols * (tile_w + gap) - gap), dtype=np.uint8)
    for i, f in enumerate(fields):
        norm = _tile(np.asarray(f, dtype=np.float64))
        tile = np.vstack([norm[0::2], norm[1::2]])
        r, c = divmod(i, cols)
        y0, x0 = r * (tile_h + gap), c * (tile_w + gap)
        img[y0 : y0 + tile_h, x0 : x0 + tile_w] = np.rint(tile * 255).astype(np.uint8)
    return img


def write_pgm(img, path):
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise FormatError("not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def export_receptive_fields(net, layer, csv_path, pgm_path=None, tiles_per_row=10):
    """Write one CSV row per unit (index then raw weights) and a PGM grid."""
    fields = receptive_fields(net, layer)
    with open(csv_path, "w", encoding="ascii") as fh:
        fh.write("neuron," + ",".join(f"w{j}" for j in range(fields.shape[1])) + "\n")
        for i, row in enumerate(fields):
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n")
    if pgm_path is not None:
        write_pgm(receptive_field_image(fields, tiles_per_row), pgm_path)
    return fields
