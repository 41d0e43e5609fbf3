"""Command line entry point: ``onebitml <subcommand> [flags]``.

Every flag has a config-file equivalent: a flat ``key = value`` file whose
keys are the flag names without the leading dashes (``mod-order = 16``;
underscores are accepted too). Flags given on the command line override the
file. Exit codes: 0 success, 1 configuration error, 2 runtime or I/O error.
"""

import argparse
import logging
import sys
import time

import numpy as np

from .core import SystemConfig
from .exceptions import ConfigurationError, ContractError
from .harness import (
    CSV_COLUMNS,
    ExperimentSpec,
    emit_csv,
    expand_detectors,
    run_ser_sweep,
    run_undertrained_sweep,
    write_csv,
)
from .learning import TrainConfig

log = logging.getLogger("onebitml")

# key -> (type, default); None default means "not set"
OPTIONS = {
    "nr": (int, 32),
    "nu": (int, 4),
    "mod-order": (int, 4),
    "rho": (float, 1.0),
    "ntr": (int, 30),
    "subblocks": (str, "3"),
    "dither-step": (float, None),
    "dl-dither": (float, None),
    "snr-start": (float, -10.0),
    "snr-stop": (float, 30.0),
    "snr-step": (float, 2.5),
    "trials": (int, 200),
    "min-trials": (int, 0),
    "data-symbols": (int, 500),
    "min-errors": (int, 100),
    "seed": (int, 0),
    "snr-mode": (str, "oracle"),
    "mlp-file": (str, None),
    "detectors": (str, "naive,dl,idl,zf,csi"),
    "ser-mode": (str, "user"),
    "workers": (int, 1),
    "samples-per-point": (int, 500),
    "epochs": (int, 150),
    "hidden": (str, "64,64"),
    "out": (str, None),
}


def parse_config_file(path):
    """Read ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("_", "-")
            if not sep or not key:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            if key not in OPTIONS:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _convert(key, value.strip())
    return values


def _convert(key, text):
    kind = OPTIONS[key][0]
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {text!r}") from exc


def resolve_options(args):
    """Defaults, then the config file, then explicit command-line flags."""
    values = {key: default for key, (_, default) in OPTIONS.items()}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for key in OPTIONS:
        given = getattr(args, key.replace("-", "_"), None)
        if given is not None:
            values[key] = given
    return values


def _int_list(text, name):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError as exc:
        raise ConfigurationError(f"{name} must be a comma-separated list of integers") from exc


def snr_grid(values):
    start, stop, step = values["snr-start"], values["snr-stop"], values["snr-step"]
    if step <= 0:
        raise ConfigurationError("snr-step must be positive")
    if stop < start:
        raise ConfigurationError("snr-stop must not be below snr-start")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(float(round(start + i * step, 10)) for i in range(count))


def build_spec(values):
    rho = values["rho"]
    system = SystemConfig(values["nr"], values["nu"], values["mod-order"], rho, rho)
    step = values["dither-step"] if values["dither-step"] is not None else rho / 2.0
    train = TrainConfig(values["ntr"], 1, step)
    detectors = tuple(d.strip() for d in values["detectors"].split(",") if d.strip())
    return ExperimentSpec(
        system=system,
        train=train,
        snr_grid_db=snr_grid(values),
        detectors=detectors,
        subblocks=_int_list(values["subblocks"], "subblocks"),
        dl_dither_var=values["dl-dither"],
        num_channel_realizations=values["trials"],
        min_trials=values["min-trials"],
        data_symbols_per_channel=values["data-symbols"],
        min_errors=values["min-errors"],
        master_seed=values["seed"],
        snr_mode=values["snr-mode"],
        mlp_file=values["mlp-file"],
        ser_mode=values["ser-mode"],
        workers=values["workers"],
    )


def _print_rows(snr_db, rows):
    for row in rows:
        ser = "" if row.ser is None else f" ser={row.ser:.3e}"
        under = "" if row.avg_undertrained is None else f" undertrained={row.avg_undertrained:.2f}"
        log.info("snr=%6.2f dB %-12s errors=%d/%d%s%s", snr_db, row.detector, row.errors,
                 row.decisions, ser, under)


def _write(result, out):
    if out:
        emit_csv(result, out)
        log.info("wrote %s", out)
    else:
        write_csv(result, sys.stdout)


def cmd_sweep_ser(values):
    spec = build_spec(values)
    _write(run_ser_sweep(spec, progress=_print_rows), values["out"])


def cmd_sweep_undertrained(values):
    spec = build_spec(values)
    _write(run_undertrained_sweep(spec, progress=_print_rows), values["out"])


def cmd_train_snr(values):
    from .snr import fit_snr_estimator, generate_snr_dataset, save_mlp, snr_features, mlp_forward, \
        dataset_arrays

    target = values["mlp-file"] or values["out"]
    if not target:
        raise ConfigurationError("train-snr needs --mlp-file (or --out) for the parameter file")
    spec = build_spec({**values, "snr-mode": "oracle", "mlp-file": None,
                       "detectors": "idl"})
    n = spec.subblocks[0]
    train = spec.idl_train(n)
    grid = spec.snr_grid_db
    rng = np.random.default_rng(np.random.SeedSequence(spec.master_seed, spawn_key=(7,)))
    start = time.perf_counter()
    samples = generate_snr_dataset(spec.system, train, grid, values["samples-per-point"], rng)
    hidden = _int_list(values["hidden"], "hidden")
    params = fit_snr_estimator(samples, train.subblock_length, hidden=hidden,
                               epochs=values["epochs"], seed=spec.master_seed)
    held = generate_snr_dataset(spec.system, train, grid, max(1, values["samples-per-point"] // 5),
                                np.random.default_rng(np.random.SeedSequence(spec.master_seed,
                                                                             spawn_key=(8,))))
    X, y = dataset_arrays(held)
    rmse = float(np.sqrt(np.mean((mlp_forward(params, snr_features(X)) - y) ** 2)))
    save_mlp(params, target, comment=(
        f"trained on snr grid {grid[0]}..{grid[-1]} dB, {values['samples-per-point']} samples/point, "
        f"nr={values['nr']} nu={values['nu']} M={values['mod-order']} ntr={values['ntr']} "
        f"subblocks={n}; held-out rmse {rmse:.3f} dB"
    ))
    log.info("trained SNR MLP in %.1fs; held-out RMSE %.2f dB; wrote %s",
             time.perf_counter() - start, rmse, target)


def cmd_show_config(values):
    spec = build_spec(values)
    for key in OPTIONS:
        value = values[key]
        if value is not None:
            print(f"{key} = {value}")
    print(f"# K = {spec.system.num_symbol_vectors}")
    print(f"# training slots N_t = K * N_tr = {spec.training_slots}")
    print(f"# coherence slots N_c = N_t + N_d = {spec.coherence_slots}")
    print(f"# detectors = {','.join(expand_detectors(spec))}")
    print(f"# snr grid (dB) = {','.join(f'{v:g}' for v in spec.snr_grid_db)}")
    print(f"# csv columns = {','.join(CSV_COLUMNS)}")


COMMANDS = {
    "sweep-ser": (cmd_sweep_ser, "SER versus SNR for each detector"),
    "sweep-undertrained": (cmd_sweep_undertrained, "average undertrained likelihood count versus SNR"),
    "train-snr": (cmd_train_snr, "train the SNR-estimation MLP and write its parameter file"),
    "show-config": (cmd_show_config, "print the resolved configuration in config-file format"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="onebitml", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.add_argument("-v", "--verbose", action="store_true")
        for key, (kind, _) in OPTIONS.items():
            extra = {"choices": ("oracle", "estimated")} if key == "snr-mode" else {}
            if key == "ser-mode":
                extra = {"choices": ("user", "vector")}
            p.add_argument(f"--{key}", type=kind, default=None, **extra)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        values = resolve_options(args)
        COMMANDS[args.command][0](values)
    except (ConfigurationError, ContractError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
