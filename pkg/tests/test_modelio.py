import numpy as np
import pytest

from ssda_amc.modelio import (
    BadMagicError,
    DimensionMismatchError,
    FormatError,
    TruncatedFileError,
    VersionMismatchError,
    dataset_bytes,
    export_receptive_fields,
    load_dataset,
    load_model,
    model_bytes,
    model_from_bytes,
    read_pgm,
    read_sidecar,
    receptive_fields,
    save_dataset,
    save_model,
)
from ssda_amc.sda import AutoencoderLayer
from ssda_amc.siggen import GenConfig, build_dataset
from ssda_amc.stack import StackedNetwork, forward, preset
from ssda_amc.whiten import fit_zca


def make_net(sizes=(200, 16, 8), seed=0, spec=None):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((400, sizes[0]))
    layers = [
        AutoencoderLayer(rng.standard_normal((h, v)) * 0.1, rng.standard_normal(h), rng.standard_normal(v))
        for v, h in zip(sizes[:-1], sizes[1:])
    ]
    return StackedNetwork(fit_zca(x), layers, rng.standard_normal((6, sizes[-1])), rng.standard_normal(6), spec)


@pytest.fixture(scope="module")
def small_sets():
    return build_dataset(GenConfig(train_vectors_per_mod=20, test_vectors_total=12, seed=2))


def test_dataset_roundtrip_bytes(tmp_path, small_sets):
    train, _ = small_sets
    path = tmp_path / "train.iqd"
    save_dataset(train, path, {"split": "train", "seed": 2})
    back = load_dataset(path)
    assert back.split == "train"
    np.testing.assert_array_equal(back.samples, train.samples)
    np.testing.assert_array_equal(back.labels, train.labels)
    assert dataset_bytes(back) == path.read_bytes()
    assert read_sidecar(path)["seed"] == "2"


def test_dataset_layout_offsets(small_sets):
    train, _ = small_sets
    buf = dataset_bytes(train)
    assert buf[:4] == b"IQDS"
    assert int.from_bytes(buf[4:6], "little") == 1
    assert int.from_bytes(buf[6:10], "little") == len(train)
    assert int.from_bytes(buf[10:14], "little") == 200
    assert buf[14] == 6
    assert buf[15 : 15 + len(train)] == train.labels.tobytes()
    first = np.frombuffer(buf, "<f4", count=200, offset=15 + len(train))
    np.testing.assert_array_equal(first, train.samples[0])


def test_dataset_errors(tmp_path, small_sets):
    buf = bytearray(dataset_bytes(small_sets[0]))
    p = tmp_path / "d.iqd"
    p.write_bytes(b"XXXX" + bytes(buf[4:]))
    with pytest.raises(BadMagicError):
        load_dataset(p)
    bad = bytearray(buf)
    bad[4] = 9
    p.write_bytes(bytes(bad))
    with pytest.raises(VersionMismatchError):
        load_dataset(p)
    p.write_bytes(bytes(buf[:-3]))
    with pytest.raises(TruncatedFileError) as err:
        load_dataset(p)
    assert err.value.section == "samples"


def test_model_roundtrip_bit_exact(tmp_path):
    net = make_net(spec=preset("D"))
    net.metadata["seed"] = "5"
    path = tmp_path / "m.ssda"
    save_model(net, path)
    back = load_model(path)
    np.testing.assert_array_equal(back.whitening.matrix, net.whitening.matrix)
    np.testing.assert_array_equal(back.whitening.mean, net.whitening.mean)
    assert back.whitening.epsilon == net.whitening.epsilon
    for a, b in zip(net.layers, back.layers):
        for name in ("weights", "hidden_bias", "visible_bias"):
            assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    s = np.random.default_rng(1).standard_normal((100, 200))
    assert forward(back, s).tobytes() == forward(net, s).tobytes()
    assert back.spec == preset("D")
    assert back.metadata["seed"] == "5"
    assert model_bytes(back) == path.read_bytes()


def test_softmax_only_model_roundtrip():
    net = make_net(sizes=(200,))
    back = model_from_bytes(model_bytes(net))
    assert back.layers == []
    np.testing.assert_array_equal(back.head_weights, net.head_weights)


def test_model_errors():
    buf = model_bytes(make_net())
    with pytest.raises(BadMagicError):
        model_from_bytes(b"SSDX" + buf[4:])
    with pytest.raises(VersionMismatchError):
        model_from_bytes(buf[:4] + b"\x02\x00" + buf[6:])
    with pytest.raises(FormatError):
        model_from_bytes(buf + b"\x00")


def test_truncation_names_layer():
    net = make_net()
    buf = model_bytes(net)
    head = 6 * 8 + 6 * 8 + 8
    layer2 = 8 + 8 * 16 * 8 + 8 * 8 + 8 * 16
    cut = len(buf) - head - layer2 // 2
    with pytest.raises(TruncatedFileError) as err:
        model_from_bytes(buf[:cut])
    assert err.value.section == "layer 2"
    with pytest.raises(TruncatedFileError) as err:
        model_from_bytes(buf[: len(buf) - 10])
    assert err.value.section == "softmax head"


def test_dimension_inconsistency_detected():
    net = make_net()
    buf = bytearray(model_bytes(net))
    # layer 2 visible count sits right after layer 1's parameters
    meta_len = int.from_bytes(buf[6:10], "little")
    off = 10 + meta_len + 4 + 8 + 8 * 200 + 8 * 200 * 200 + 4
    off += 8 + 8 * (16 * 200 + 16 + 200)
    assert int.from_bytes(buf[off + 4 : off + 8], "little") == 16
    buf[off + 4 : off + 8] = (17).to_bytes(4, "little")
    with pytest.raises(DimensionMismatchError):
        model_from_bytes(bytes(buf))


def test_receptive_fields_csv_and_pgm(tmp_path):
    net = make_net()
    csv_path, pgm_path = tmp_path / "rf.csv", tmp_path / "rf.pgm"
    export_receptive_fields(net, 1, csv_path, pgm_path)
    rows = csv_path.read_text().splitlines()
    assert len(rows) == 1 + 16
    values = np.array([[float(v) for v in r.split(",")[1:]] for r in rows[1:]])
    np.testing.assert_array_equal(values, net.layers[0].weights)
    img = read_pgm(pgm_path)
    tile = img[0:2, 0:100]
    w = net.layers[0].weights[0]
    expect_i = np.rint((w[0::2] - w.min()) / np.ptp(w) * 255)
    np.testing.assert_array_equal(tile[0], expect_i)
    assert tile.min() == 0 and tile.max() == 255


def test_receptive_fields_deeper_layer_and_errors(tmp_path):
    net = make_net()
    np.testing.assert_allclose(receptive_fields(net, 2), net.layers[1].weights @ net.layers[0].weights)
    with pytest.raises(IndexError):
        receptive_fields(net, 3)
    with pytest.raises(IndexError):
        receptive_fields(net, 0)


def test_zero_weights_give_mid_grey(tmp_path):
    net = make_net()
    net.layers[0].weights[:] = 0.0
    export_receptive_fields(net, 1, tmp_path / "z.csv", tmp_path / "z.pgm", tiles_per_row=4)
    img = read_pgm(tmp_path / "z.pgm")
    # every tile pixel is 128; separators are 0
    tiles = img[np.arange(img.shape[0]) % 3 != 2][:, np.arange(img.shape[1]) % 101 != 100]
    assert (tiles == 128).all()


def test_preset_d_layer_one_has_500_rows(tmp_path):
    rng = np.random.default_rng(3)
    layers = [
        AutoencoderLayer(rng.standard_normal((500, 200)), np.zeros(500), np.zeros(200)),
        AutoencoderLayer(rng.standard_normal((500, 500)), np.zeros(500), np.zeros(500)),
    ]
    net = StackedNetwork(fit_zca(rng.standard_normal((400, 200))), layers, np.zeros((6, 500)), np.zeros(6), preset("D"))
    export_receptive_fields(net, 1, tmp_path / "d.csv")
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 501
