import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssda_amc.metrics import (
    ConfusionMatrix,
    UndefinedClassError,
    accuracy,
    confusion,
    noise_seed,
    pcc,
    precision,
    sensitivity,
    sweep_header,
    write_confusion_csv,
    write_sweep_csv,
    point_from_confusion,
)


def test_diagonal_and_single_entry():
    m = confusion(np.arange(6), np.arange(6))
    np.testing.assert_array_equal(m.counts, np.eye(6, dtype=int))
    m = confusion([5], [2])
    assert m.counts[2, 5] == 1 and m.total == 1


def test_bad_inputs():
    with pytest.raises(ValueError):
        confusion([0, 1], [0])
    with pytest.raises(ValueError):
        confusion([6], [0])
    with pytest.raises(ValueError):
        confusion([0], [-1])


def test_uniform_random_cells():
    rng = np.random.default_rng(0)
    truths = np.repeat(np.arange(6), 100)
    m = confusion(rng.integers(0, 6, 600), truths)
    # binomial(100, 1/6): sd ~3.7, allow 5 sd
    assert np.abs(m.counts - 100 / 6).max() < 19


def test_two_family_toy():
    m = ConfusionMatrix([[9, 1], [5, 5]])
    assert math.isclose(pcc(m), 0.7)


def test_precision_and_sensitivity_examples():
    m = ConfusionMatrix([[8, 0, 0], [2, 0, 0], [0, 0, 1]])
    assert math.isclose(precision(m, 0), 0.8)
    assert precision(m, 1) is None
    m2 = ConfusionMatrix([[1, 9], [0, 3]])
    assert math.isclose(sensitivity(m2, 0), 0.1)
    d = ConfusionMatrix(np.eye(6, dtype=int) * 3)
    assert pcc(d) == 1.0
    assert all(precision(d, k) == 1.0 and sensitivity(d, k) == 1.0 for k in range(6))


def test_empty_row_is_undefined():
    m = ConfusionMatrix([[1, 0], [0, 0]])
    with pytest.raises(UndefinedClassError):
        sensitivity(m, 1)
    with pytest.raises(UndefinedClassError):
        pcc(m)


def _recount(pred, truth, n):
    counts = [[0] * n for _ in range(n)]
    for p, t in zip(pred, truth):
        counts[t][p] += 1
    return counts


def test_brute_force_recount_oracle():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        truth = rng.integers(0, 6, n)
        pred = rng.integers(0, 6, n)
        m = confusion(pred, truth)
        ref = _recount(pred, truth, 6)
        assert m.counts.tolist() == ref
        assert m.total == n
        for k in range(6):
            col = sum(ref[i][k] for i in range(6))
            row = sum(ref[k])
            p = precision(m, k)
            assert (p is None) if col == 0 else p == ref[k][k] / col
            if row:
                assert sensitivity(m, k) == ref[k][k] / row
        assert accuracy(m) == sum(ref[k][k] for k in range(6)) / n
        if all(sum(r) for r in ref):
            sens = [sensitivity(m, k) for k in range(6)]
            assert pcc(m) == sum(sens) / 6


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=50))
@settings(max_examples=200, deadline=None)
def test_count_conservation(pairs):
    pred = [p for p, _ in pairs]
    truth = [t for _, t in pairs]
    m = confusion(pred, truth)
    assert m.total == len(pairs)
    np.testing.assert_array_equal(m.row_totals(), np.bincount(truth, minlength=6))


def test_normalized_rows():
    m = ConfusionMatrix([[1, 3], [0, 0]])
    n = m.normalized()
    np.testing.assert_allclose(n[0], [0.25, 0.75])
    assert np.isnan(n[1]).all()


def test_noise_seed_depends_on_snr_only():
    assert noise_seed(0, 10.0) == noise_seed(0, 10.0)
    assert noise_seed(0, 10.0) != noise_seed(0, 7.5)
    assert noise_seed(0, 10.0) != noise_seed(1, 10.0)
    assert noise_seed(0, math.inf) != noise_seed(0, 0.0)


def test_csv_layouts(tmp_path):
    m = ConfusionMatrix([[2, 0, 0, 0, 0, 0]] + [[0] * k + [1] + [0] * (5 - k) for k in range(1, 5)] + [[1, 0, 0, 0, 0, 0]])
    p = point_from_confusion(-2.5, m)
    path = tmp_path / "sweep.csv"
    write_sweep_csv([p], path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == sweep_header()
    assert len(rows[0]) == 14
    assert rows[1][0] == "-2.5"
    assert rows[1][2 + 5] == ""  # nothing predicted as OFDM
    cpath = tmp_path / "conf.csv"
    write_confusion_csv(m, cpath)
    rows = list(csv.reader(open(cpath)))
    assert rows[0][0] == "counts" and rows[7] == [] and rows[8][0] == "normalized"
    assert rows[1][1:] == ["2", "0", "0", "0", "0", "0"]
