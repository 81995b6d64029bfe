"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat N]

Also times one full pretraining epoch of a 200 -> 128 layer with each
backend, by re-importing the package with SSDA_AMC_NO_NUMBA set.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ssda_amc import kernels


def cases(rng):
    w = rng.standard_normal((500, 200))
    g = rng.standard_normal((500, 200))
    y = np.tanh(rng.standard_normal((100, 500)))
    d = rng.standard_normal((100, 500))
    pred = rng.integers(0, 6, 10000)
    truth = rng.integers(0, 6, 10000)
    inc = rng.standard_normal(100000)
    return {
        "adagrad_update 500x200": lambda f: f(w.copy(), np.zeros_like(w), g, 0.01, 1e-8),
        "sgd_update 500x200": lambda f: f(w.copy(), g, 0.01, 2e-5),
        "tanh_backward 100x500": lambda f: f(d.copy(), y),
        "confusion_counts 10k": lambda f: f(pred, truth, 6),
        "phase_accumulate 100k": lambda f: f(inc, 0.0),
    }


PAIRS = {
    "adagrad_update 500x200": "adagrad_update",
    "sgd_update 500x200": "sgd_update",
    "tanh_backward 100x500": "tanh_backward",
    "confusion_counts 10k": "confusion_counts",
    "phase_accumulate 100k": "phase_accumulate",
}

EPOCH_SNIPPET = """
import time, numpy as np
from ssda_amc import kernels
from ssda_amc.sda import CorruptionSpec, SparsitySpec, pretrain_layer
x = np.tanh(np.random.default_rng(0).standard_normal((6000, 200)))
pretrain_layer(x[:200], 128, CorruptionSpec(0.2), SparsitySpec(0.05, 0.3), epochs=1)
t = time.perf_counter()
pretrain_layer(x, 128, CorruptionSpec(0.2), SparsitySpec(0.05, 0.3), epochs=3)
print(kernels.BACKEND, (time.perf_counter() - t) / 3)
"""


def epoch_time(disable_numba):
    env = dict(os.environ)
    env.pop("SSDA_AMC_NO_NUMBA", None)
    if disable_numba:
        env["SSDA_AMC_NO_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True, check=True)
    backend, seconds = out.stdout.split()
    return backend, float(seconds)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if kernels.BACKEND != "numba":
        sys.exit("numba is disabled or missing; unset SSDA_AMC_NO_NUMBA to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for label, call in cases(rng).items():
        name = PAIRS[label]
        np_f, nb_f = getattr(kernels, "np_" + name), getattr(kernels, "nb_" + name)
        call(nb_f)  # compile
        t_np = min(timeit.repeat(lambda: call(np_f), number=1, repeat=args.repeat)) * 1e6
        t_nb = min(timeit.repeat(lambda: call(nb_f), number=1, repeat=args.repeat)) * 1e6
        print(f"{label:28s} {t_np:10.1f} {t_nb:10.1f} {t_np / t_nb:8.2f}")

    print()
    for disabled in (False, True):
        backend, sec = epoch_time(disabled)
        print(f"pretraining epoch 6000x200->128 [{backend}]: {sec:.3f} s")


if __name__ == "__main__":
    main()
