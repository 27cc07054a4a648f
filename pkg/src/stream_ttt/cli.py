"""Command-line entry point: ``stream-ttt <subcommand> [options]``.

Subcommands map to experiment modes:

* ``gen-stream``: write the configured stream to a stream file
* ``run``: ``online``, ``fixed`` or ``offline-all-frames`` modes
* ``sweep``: ``theorem-sweep``
* ``ablate``: ``ablation-suite``
* ``lemma``: ``lemma-check``
* ``report``: plot-ready CSVs from an existing bundle

Exit status: 0 on success, 1 for invalid input, 2 when a run fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, config_from_dict
from .presets import PRESETS, preset

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
SEED_ENV = "STREAM_TTT_SEED"

_MODES_FOR = {
    "run": ("online", "fixed", "offline-all-frames"),
    "sweep": ("theorem-sweep",),
    "ablate": ("ablation-suite",),
    "lemma": ("lemma-check",),
    "gen-stream": ("online", "fixed", "offline-all-frames", "ablation-suite"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stream-ttt", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs=True):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="JSON experiment configuration file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="shipped configuration")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        if runs:
            p.add_argument("--jobs", type=int, default=1,
                           help="parallel worker processes for independent runs")

    p = sub.add_parser("gen-stream", help="write a stream file")
    common(p, runs=False)
    p.add_argument("--repeat", type=int, default=0, help="which repeat's stream to write")
    helps = {"run": "one online, fixed or offline run per repeat",
             "ablate": "the full ablation table and window curve"}
    for name in ("run", "ablate"):
        p = sub.add_parser(name, help=helps[name])
        common(p)
        p.add_argument("--stream-file", help="use this stream instead of generating one")
        p.add_argument("--init-checkpoint", help="skip joint training and load this model")
        if name == "run":
            p.add_argument("--mode", choices=_MODES_FOR["run"], help="override the config mode")
    p = sub.add_parser("sweep", help="bias-variance window sweep")
    common(p)
    p = sub.add_parser("lemma", help="randomized lemma check")
    common(p)
    p = sub.add_parser("report", help="plot-ready CSVs from a bundle directory")
    p.add_argument("bundle", help="directory holding summary.json")
    return parser


def _load(args) -> dict:
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config} ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc})") from None
    elif args.preset:
        data = preset(args.preset)
    elif args.command == "lemma":
        data = {"mode": "lemma-check"}
    else:
        raise ConfigError("config: pass --config or --preset")
    if not isinstance(data, dict):
        raise ConfigError("config: must be a JSON object")
    if getattr(args, "mode", None):
        data["mode"] = args.mode
    if args.seed is not None:
        data["seed"] = args.seed
    elif "seed" not in data and os.environ.get(SEED_ENV):
        try:
            data["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV}: must be an integer") from None
    return data


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "report":
        from .harness import report_figures

        try:
            files = report_figures(args.bundle)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        for name, path in files.items():
            print(f"{name}: {path}")
        return EXIT_OK
    try:
        cfg = config_from_dict(_load(args))
        if cfg.mode not in _MODES_FOR[args.command]:
            raise ConfigError(f"mode: {cfg.mode!r} cannot be run by '{args.command}' "
                              f"(expected one of {_MODES_FOR[args.command]})")
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs: must be >= 1")
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out or cfg.output_dir)

    if args.command == "gen-stream":
        from .harness import build_model, stream_spec
        from .streamgen import gen_stream, write_stream

        try:
            stream = gen_stream(stream_spec(cfg, args.repeat, build_model(cfg)))
        except ValueError as exc:
            print(f"invalid configuration: {exc}", file=sys.stderr)
            return EXIT_INVALID
        out.mkdir(parents=True, exist_ok=True)
        write_stream(stream, out / "stream.txt")
        print(out / "stream.txt")
        return EXIT_OK

    from .harness import execute

    for name in ("stream_file", "init_checkpoint"):
        path = getattr(args, name, None)
        if path is not None and not Path(path).exists():
            print(f"invalid input: --{name.replace('_', '-')} {path} does not exist", file=sys.stderr)
            return EXIT_INVALID
    bundle = execute(cfg, out, jobs=args.jobs, stream_file=getattr(args, "stream_file", None),
                     init_checkpoint=getattr(args, "init_checkpoint", None))
    print(bundle.summary_path)
    if not bundle.valid:
        print(f"run failed: {bundle.summary.get('error', 'non-finite values; see summary.json')}",
              file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
