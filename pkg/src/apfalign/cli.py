"""Command-line interface wiring the library into reproducible experiments.

Exit codes: 0 ok, 2 configuration error, 3 numeric failure (NaN abort),
4 I/O error.  Failures print a single machine-parsable line to stderr:
``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import loss as loss_mod
from . import metrics as metrics_mod
from . import nn as nn_mod
from . import train as train_mod
from .filters import (FilterError, RCFilter, SectionSpec, frequency_response,
                      impulse_response)
from .signals import (ParameterError, Signal, WavFormatError,
                      generate_log_sweep, read_wav, write_wav)
from .train import CoefficientBundle, TrainConfig, TrainError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _config_error(msg):
    return CliError("config", msg, EXIT_CONFIG)


def _io_error(msg):
    return CliError("io", msg, EXIT_IO)


# ---------------------------------------------------------------------------
# Experiment configuration files (TOML)
# ---------------------------------------------------------------------------

_TRAIN_KEYS = {
    "learning_rate", "batch_size", "max_epochs", "seed", "loss", "model",
    "sample_rate", "seq_len", "shuffle", "plateau_patience",
    "plateau_min_delta", "chunk_size", "num_workers", "spec_power",
    "naive_init_raw", "omega0", "b0_dim", "hidden",
}
_TOP_KEYS = _TRAIN_KEYS | {"input", "target", "output_dir", "sections",
                           "bounds", "resolutions"}


def load_experiment_config(path) -> dict:
    import tomli
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise _io_error(f"cannot read config {path}: {exc}")
    except tomli.TOMLDecodeError as exc:
        raise _config_error(f"malformed config {path}: {exc}")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise _config_error(f"unknown config keys: {sorted(unknown)}")
    return raw


def train_config_from_dict(raw: dict, overrides: dict | None = None) -> TrainConfig:
    merged = {k: v for k, v in raw.items() if k in _TRAIN_KEYS}
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    if "hidden" in merged:
        merged["hidden"] = tuple(merged["hidden"])
    if "sections" in raw:
        try:
            merged["specs"] = tuple(
                SectionSpec(int(s["order"]), bool(s.get("warped", True)))
                for s in raw["sections"])
        except (KeyError, TypeError, FilterError) as exc:
            raise _config_error(f"bad sections entry: {exc}")
    if "bounds" in raw:
        merged["bounds"] = {k: tuple(v) for k, v in raw["bounds"].items()}
    if "resolutions" in raw:
        try:
            merged["stft_resolutions"] = tuple(
                (int(r["fft_size"]), int(r["hop"]), int(r["win_length"]))
                for r in raw["resolutions"])
        except (KeyError, TypeError) as exc:
            raise _config_error(f"bad resolutions entry: {exc}")
    try:
        return TrainConfig(**merged)
    except (TrainError, TypeError) as exc:
        raise _config_error(str(exc))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_sweep(args):
    try:
        sig = generate_log_sweep(args.f1, args.f2, args.duration,
                                 args.sample_rate, args.amp)
    except ParameterError as exc:
        raise _config_error(str(exc))
    _write_wav_checked(args.out, sig, args.bit_depth)
    print(f"wrote {args.out}: {len(sig)} samples at {sig.sample_rate} Hz")
    return EXIT_OK


def _cmd_rc_sim(args):
    sig = _read_wav_checked(args.input)
    rc = RCFilter(sig.sample_rate, resistance=args.r_ohms,
                  capacitance=args.c_farads,
                  paper_literal_rho=args.paper_literal_rho)
    out = rc.process(sig)
    _write_wav_checked(args.out, out, args.bit_depth)
    print(f"wrote {args.out}: rho={rc.rho:.6g}")
    return EXIT_OK


def _cmd_train(args):
    raw = load_experiment_config(args.config)
    overrides = {"seed": args.seed, "sample_rate": args.sample_rate}
    cfg = train_config_from_dict(raw, overrides)
    input_path = args.input or raw.get("input")
    target_path = args.target or raw.get("target")
    if not input_path or not target_path:
        raise _config_error("input and target WAV paths are required "
                            "(flags or config keys)")
    x = _read_wav_checked(input_path)
    y = _read_wav_checked(target_path)
    try:
        result = train_mod.train(x, y, cfg)
    except TrainError as exc:
        raise _config_error(str(exc))
    out_dir = args.output_dir or raw.get("output_dir", ".")
    import os
    os.makedirs(out_dir, exist_ok=True)
    bundle_path = os.path.join(out_dir, "bundle.json")
    curve_path = os.path.join(out_dir, "loss_curve.csv")
    ckpt_path = os.path.join(out_dir, "checkpoint.npz")
    result.bundle.save(bundle_path)
    with open(curve_path, "w") as fh:
        fh.write(result.loss_curve_csv())
    nn_mod.save_checkpoint(ckpt_path, result.model,
                           extra={"config_hash": cfg.config_hash()})
    if result.aborted:
        print(f"error: numeric: NaN loss at batch {result.abort_batch}; "
              f"last-good checkpoint written to {ckpt_path}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {bundle_path}, {curve_path}, {ckpt_path}; "
          f"best loss {result.best_loss:.6g} after "
          f"{len(result.epoch_losses)} epochs")
    return EXIT_OK


def _load_bundle_checked(path) -> CoefficientBundle:
    try:
        return CoefficientBundle.load(path)
    except OSError as exc:
        raise _io_error(f"cannot read bundle {path}: {exc}")
    except (TrainError, json.JSONDecodeError, KeyError) as exc:
        raise _config_error(f"bad bundle {path}: {exc}")


def _cmd_apply(args):
    bundle = _load_bundle_checked(args.bundle)
    sig = _read_wav_checked(args.input)
    try:
        out = train_mod.apply(bundle, sig)
    except TrainError as exc:
        raise _config_error(str(exc))
    _write_wav_checked(args.out, out, args.bit_depth)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_eval(args):
    bundle = _load_bundle_checked(args.bundle)
    x = _read_wav_checked(args.input)
    y = _read_wav_checked(args.target)
    try:
        report = metrics_mod.evaluate(bundle, x, y, n_segments=args.segments)
    except (metrics_mod.MetricError, TrainError) as exc:
        raise _config_error(str(exc))
    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(report.to_json())
            fh.write("\n")
    print(report.to_table())
    return EXIT_OK


def _cmd_export_response(args):
    bundle = _load_bundle_checked(args.bundle)
    try:
        cascade = train_mod.cascade_from_bundle(bundle)
    except TrainError as exc:
        raise _config_error(str(exc))
    n = args.n_fft
    ir = impulse_response(cascade, n)
    freqs, h = frequency_response(cascade, n, bundle.sample_rate)
    mag = np.abs(h)
    phase = np.unwrap(np.angle(h))
    import os
    os.makedirs(args.output_dir, exist_ok=True)
    hash_line = f"# config_hash={bundle.provenance.get('config_hash', 'n/a')}\n"
    with open(os.path.join(args.output_dir, "impulse.csv"), "w") as fh:
        fh.write(hash_line + "sample,value\n")
        for i, v in enumerate(ir):
            fh.write(f"{i},{float(v)!r}\n")
    with open(os.path.join(args.output_dir, "magnitude.csv"), "w") as fh:
        fh.write(hash_line + "freq_hz,magnitude\n")
        for f, v in zip(freqs, mag):
            fh.write(f"{float(f)!r},{float(v)!r}\n")
    with open(os.path.join(args.output_dir, "phase.csv"), "w") as fh:
        fh.write(hash_line + "freq_hz,phase_rad\n")
        for f, v in zip(freqs, phase):
            fh.write(f"{float(f)!r},{float(v)!r}\n")
    print(f"wrote impulse.csv, magnitude.csv, phase.csv to {args.output_dir}")
    return EXIT_OK


def _read_wav_checked(path) -> Signal:
    try:
        return read_wav(path)
    except OSError as exc:
        raise _io_error(f"cannot read {path}: {exc}")
    except (WavFormatError, ParameterError) as exc:
        raise _io_error(f"{exc}")


def _write_wav_checked(path, sig: Signal, bit_depth: int):
    try:
        write_wav(path, sig, bit_depth)
    except OSError as exc:
        raise _io_error(f"cannot write {path}: {exc}")
    except WavFormatError as exc:
        raise _config_error(str(exc))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apfalign",
        description="Train and apply phase-aligning all-pass filter cascades.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="generate a logarithmic sine sweep WAV")
    p.add_argument("--f1", type=float, default=20.0)
    p.add_argument("--f2", type=float, default=20000.0)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--sample-rate", type=int, default=192000)
    p.add_argument("--amp", type=float, default=0.5)
    p.add_argument("--bit-depth", type=int, default=32, choices=(16, 24, 32))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("rc-sim", help="run the RC low-pass reference over a WAV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--r-ohms", type=float, default=120.0)
    p.add_argument("--c-farads", type=float, default=68e-9)
    p.add_argument("--paper-literal-rho", action="store_true")
    p.add_argument("--bit-depth", type=int, default=32, choices=(16, 24, 32))
    p.set_defaults(func=_cmd_rc_sim)

    p = sub.add_parser("train", help="run a training experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--input", help="override config input WAV")
    p.add_argument("--target", help="override config target WAV")
    p.add_argument("--output-dir", help="override config output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--sample-rate", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("apply", help="apply a coefficient bundle to a WAV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bit-depth", type=int, default=32, choices=(16, 24, 32))
    p.set_defaults(func=_cmd_apply)

    p = sub.add_parser("eval", help="metric report for bundle/input/target")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--segments", type=int, default=0)
    p.add_argument("--json-out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export-response",
                       help="impulse/magnitude/phase CSVs of a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--n-fft", type=int, default=8192)
    p.set_defaults(func=_cmd_export_response)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.code
    except (ParameterError, FilterError, TrainError,
            loss_mod.LossError, nn_mod.ModelConfigError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
