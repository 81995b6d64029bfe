"""Command-line driver: ``ssda-amc {gen,train,eval,sweep,export-rf,inspect}``.

Settings come from defaults, then ``--config FILE`` (key=value lines), then
individual flags; later sources win. Exit status is 0 on success, 1 on a
runtime failure and 2 on a usage or configuration error.
"""

import argparse
import datetime
import logging
import os
import platform
import sys

import numpy as np

from . import __version__, kernels
from .channel import add_awgn
from .config import ConfigFileError, ExperimentConfig, load_config, parse_snr_grid
from .metrics import (
    evaluate,
    noise_seed,
    point_from_confusion,
    snr_sweep,
    write_confusion_csv,
    write_sweep_csv,
)
from .modelio import (
    DimensionMismatchError,
    FormatError,
    export_receptive_fields,
    load_dataset,
    load_model,
    read_dataset_header,
    read_model_header,
    save_dataset,
    save_model,
)
from .pipeline import train_model
from .rng import RNG_NAME
from .sda import TrainingDivergedError
from .siggen import FAMILY_NAMES, ConfigError, build_dataset
from .stack import UnknownArchitectureError

log = logging.getLogger("ssda_amc")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _out(cfg, name):
    return os.path.join(cfg.out, name)


def _default_paths(cfg, args):
    return {
        "train": args.train or _out(cfg, "train.iqd"),
        "test": args.test or _out(cfg, "test.iqd"),
        "model": args.model or _out(cfg, f"model_{cfg.arch}.ssda"),
    }


def _versions():
    import numba

    return {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
        "kernel_backend": kernels.BACKEND,
        "rng": RNG_NAME,
    }


def write_provenance(cfg, command, argv, extra=None):
    """Config echo, seeds, versions and the command line for one run."""
    os.makedirs(cfg.out, exist_ok=True)
    path = _out(cfg, f"provenance_{command}.log")
    lines = [
        f"# ssda-amc {command}",
        f"# started {datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')}",
        "argv=" + " ".join(argv),
    ]
    lines += [f"{k}={v}" for k, v in _versions().items()]
    lines += [f"{k}={v}" for k, v in (extra or {}).items()]
    lines.append("# config")
    lines.append(cfg.dumps().rstrip("\n"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _check_dims(net, ds):
    if net.input_dim != ds.vector_length:
        raise DimensionMismatchError(
            f"model expects vectors of length {net.input_dim}, dataset has {ds.vector_length}"
        )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(cfg, args):
    gen = cfg.gen_config()
    train, test = build_dataset(gen)
    paths = _default_paths(cfg, args)
    os.makedirs(cfg.out, exist_ok=True)
    for ds, path in ((train, paths["train"]), (test, paths["test"])):
        meta = {"split": ds.split, "vectors": len(ds), "seed": gen.seed, "scale": repr(cfg.scale)}
        meta.update({f"count_{n}": int(c) for n, c in zip(FAMILY_NAMES, ds.family_counts())})
        meta.update({k: v for k, v in cfg.to_items().items() if k in _GEN_KEYS})
        save_dataset(ds, path, meta)
        print(f"wrote {path}: {len(ds)} vectors of length {ds.vector_length}")
    return {"train_path": paths["train"], "test_path": paths["test"]}


_GEN_KEYS = (
    "samples_per_symbol", "samples_per_vector", "train_vectors_per_mod", "test_vectors_total",
    "random_phase", "timing_jitter", "normalize_power",
)


def cmd_train(cfg, args):
    paths = _default_paths(cfg, args)
    train = load_dataset(paths["train"])
    net = train_model(cfg, train)
    save_model(net, paths["model"])
    print(f"wrote {paths['model']}")
    if os.path.exists(paths["test"]):
        test = load_dataset(paths["test"])
        _check_dims(net, test)
        point = point_from_confusion(np.inf, evaluate(net, test))
        print(f"clean test P_cc {point.pcc:.4f}")
    return {"model_path": paths["model"]}


def cmd_eval(cfg, args):
    paths = _default_paths(cfg, args)
    net = load_model(paths["model"])
    test = load_dataset(args.data or paths["test"])
    _check_dims(net, test)
    seed = noise_seed(cfg.noise_seed, cfg.snr)
    noised = add_awgn(test, cfg.snr, seed=seed)
    point = point_from_confusion(cfg.snr, evaluate(net, noised))
    tag = "clean" if np.isinf(cfg.snr) else f"snr{cfg.snr:g}dB"
    metrics_path, confusion_path = _out(cfg, f"metrics_{tag}.csv"), _out(cfg, f"confusion_{tag}.csv")
    write_sweep_csv([point], metrics_path)
    write_confusion_csv(point.confusion, confusion_path)
    print(f"P_cc {point.pcc:.4f} ({tag}); wrote {metrics_path}, {confusion_path}")
    return {"noise_seed": seed}


def cmd_sweep(cfg, args):
    paths = _default_paths(cfg, args)
    net = load_model(paths["model"])
    test = load_dataset(args.data or paths["test"])
    _check_dims(net, test)
    points = snr_sweep(net, test, cfg.snr_grid, seed=cfg.noise_seed)
    path = _out(cfg, "sweep.csv")
    write_sweep_csv(points, path)
    for p in points:
        print(f"{p.snr_db:8.2f} dB  P_cc {p.pcc:.4f}")
    print(f"wrote {path}")
    return {}


def cmd_export_rf(cfg, args):
    paths = _default_paths(cfg, args)
    net = load_model(paths["model"])
    if not 1 <= args.layer <= len(net.layers):
        raise UsageError(f"layer {args.layer} does not exist (model has {len(net.layers)} hidden layers)")
    csv_path, pgm_path = _out(cfg, f"rf_layer{args.layer}.csv"), _out(cfg, f"rf_layer{args.layer}.pgm")
    fields = export_receptive_fields(net, args.layer, csv_path, pgm_path)
    print(f"wrote {csv_path} ({fields.shape[0]} neurons) and {pgm_path}")
    return {}


def cmd_inspect(cfg, args):
    for path in args.paths:
        with open(path, "rb") as fh:
            magic = fh.read(4)
        header = read_model_header(path) if magic == b"SSDA" else read_dataset_header(path)
        print(f"# {path}")
        for k, v in header.items():
            print(f"{k}={v}")
    return {}


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "export-rf": cmd_export_rf,
    "inspect": cmd_inspect,
}


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--arch", help="architecture preset (Softmax, MLP, A-E)")
    common.add_argument("--snr", type=float, help="evaluation SNR in dB (default: clean)")
    common.add_argument("--snr-grid", help="start:stop:step or comma list, in dB")
    common.add_argument("--scale", type=float, help="shrink dataset sizes and layer widths")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("--train", help="training dataset path")
    common.add_argument("--test", help="test dataset path")
    common.add_argument("--model", help="model file path")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress per-epoch logging")

    parser = argparse.ArgumentParser(prog="ssda-amc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate train/test datasets")
    sub.add_parser("train", parents=[common], help="train a network")
    for name, text in (("eval", "evaluate at one SNR"), ("sweep", "evaluate over an SNR grid")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--data", help="dataset to evaluate (default: the test set)")
    p = sub.add_parser("export-rf", parents=[common], help="export receptive fields")
    p.add_argument("--layer", type=int, default=1)
    p = sub.add_parser("inspect", parents=[common], help="print dataset or model headers")
    p.add_argument("paths", nargs="+")
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigFileError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for key in ("seed", "arch", "snr", "scale", "out"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.snr_grid is not None:
        try:
            overrides["snr_grid"] = parse_snr_grid(args.snr_grid)
        except ValueError as exc:
            raise ConfigFileError(f"--snr-grid: {exc}") from exc
    return cfg.with_updates(overrides).validate()


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(message)s", stream=sys.stderr, force=True,
    )
    try:
        cfg = resolve_config(args)
    except (ConfigFileError, ConfigError, UnknownArchitectureError) as exc:
        print(f"ssda-amc: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ssda-amc: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        extra = COMMANDS[args.command](cfg, args) or {}
        write_provenance(cfg, args.command, ["ssda-amc"] + argv, extra)
    except UsageError as exc:
        print(f"ssda-amc: {exc}", file=sys.stderr)
        return 2
    except (OSError, FormatError, TrainingDivergedError, ValueError) as exc:
        print(f"ssda-amc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
