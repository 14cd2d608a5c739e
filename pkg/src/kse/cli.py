"""Command-line interface: mix, autotune, train, enhance, evaluate.

Exit codes: 0 success, 2 configuration, 3 data, 4 numeric, 5 I/O.
"""
from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, KseError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kse",
        description="Subband kernel regression for single-channel speech "
        "enhancement",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap BLAS and worker threads (default: library defaults)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(sp):
        sp.add_argument("--config", required=True, type=Path, help="JSON run config")
        sp.add_argument("--subbands", type=int, help="override subband count")
        sp.add_argument(
            "--snr", type=str, help="override SNR list, e.g. --snr -5,0,5"
        )
        sp.add_argument("--seed", type=int, help="override the run seed")
        sp.add_argument("--mask", choices=("irm", "ibm"), help="override mask kind")
        sp.add_argument("--out", type=Path, help="override output directory")

    add_config_args(sub.add_parser("mix", help="write the mixed corpus as WAVs"))
    add_config_args(
        sub.add_parser("autotune", help="kernel parameter selection only")
    )
    add_config_args(sub.add_parser("train", help="tune, train, and save a model"))

    ev = sub.add_parser("evaluate", help="score a model on the test split")
    add_config_args(ev)
    ev.add_argument("--model", type=Path, help="trained model file")
    ev.add_argument(
        "--oracle",
        action="store_true",
        help="evaluate the oracle mask instead of a model",
    )

    en = sub.add_parser("enhance", help="enhance a WAV file with a model")
    en.add_argument("--model", required=True, type=Path)
    en.add_argument("--in", dest="wav_in", required=True, type=Path)
    en.add_argument("--out", dest="wav_out", required=True, type=Path)
    return parser


def _load_with_overrides(args):
    from .pipeline import load_config

    cfg = load_config(args.config)
    if args.subbands is not None:
        cfg = replace(cfg, subbands=args.subbands)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.mask is not None:
        cfg = replace(cfg, mask_kind=args.mask)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if args.snr is not None:
        try:
            snrs = [float(s) for s in args.snr.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse --snr '{args.snr}'") from None
        names = list(dict.fromkeys(name for name, _ in cfg.noise_settings))
        cfg = replace(
            cfg,
            noise_settings=tuple((n, s) for n in names for s in snrs),
        )
    if args.threads is not None:
        cfg = replace(cfg, workers=min(cfg.workers, args.threads))
    cfg.validate()
    return cfg


def _dispatch(args) -> int:
    from . import pipeline

    if args.command == "enhance":
        out = pipeline.cmd_enhance(args.model, args.wav_in, args.wav_out)
        print(f"wrote {out}")
        return 0

    cfg = _load_with_overrides(args)
    if args.command == "mix":
        manifest = pipeline.cmd_mix(cfg)
        print(f"wrote {manifest}")
    elif args.command == "autotune":
        results, report = pipeline.cmd_autotune(cfg)
        print(report.read_text(), end="")
        print(f"wrote {report}")
    elif args.command == "train":
        model_path, report = pipeline.cmd_train(cfg)
        print(f"wrote {model_path}")
        print(f"wrote {report}")
    elif args.command == "evaluate":
        if not args.oracle and args.model is None:
            raise ConfigError("evaluate needs --model (or --oracle)")
        reports, summary = pipeline.cmd_evaluate(
            args.model, cfg, oracle=args.oracle
        )
        print(summary.read_text(), end="")
        print(f"wrote {summary}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("kse: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            limiter = threadpool_limits(limits=args.threads)
        else:
            limiter = nullcontext()
        with limiter:
            return _dispatch(args)
    except KseError as exc:
        print(f"kse: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
