"""Command-line entry point: ``rfauth {generate,run,sweep-auth,sweep-known,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .experiment import (ConfigError, ExperimentConfig, InfeasibleError, MissingDataError, report,
                         run_realization, sweep_authorized, sweep_known, write_results)
from .io import CorpusFormatError, write_corpus, write_json
from .simulate import ImpairmentRanges, generate_corpus

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_MISSING = 0, 2, 3, 4


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    if getattr(args, "realizations", None) is not None:
        d["n_realizations"] = args.realizations
    if getattr(args, "output", None) is not None:
        d["output_dir"] = args.output
    if getattr(args, "corpus", None) is not None:
        d["corpus"] = {**d["corpus"], "path": args.corpus}
    if getattr(args, "seed", None) is not None:
        d["base_seed"] = args.seed
    return ExperimentConfig.from_dict(d)


def cmd_generate(args) -> int:
    ranges = ImpairmentRanges()
    if args.ranges:
        try:
            ranges = ImpairmentRanges.from_dict(json.loads(Path(args.ranges).read_text()))
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad impairment ranges file {args.ranges}: {exc}") from exc
    try:
        corpus = generate_corpus(args.n_tx, tuple(args.frames), args.snr_db, args.seed, ranges.scaled(args.scale),
                                 waveform=args.waveform, layout=args.layout)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_corpus(corpus, args.out)
    print(f"wrote {len(corpus.tx_ids)} transmitters, {sum(corpus.frame_counts().values())} frames to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir) / f"run_r{args.realization:03d}"
    res = run_realization(cfg, args.realization, out_dir=out)
    write_results([res], out)
    for arch, r in sorted(res.archs.items()):
        print(f"{arch}: auc={r.auc:.4f} balanced_accuracy={r.balanced_accuracy:.4f} "
              f"closed_set_accuracy={r.closed_set_accuracy:.4f} n_params={r.n_params}")
    return EXIT_OK


def _cmd_sweep(fn, args) -> int:
    cfg = _load_config(args)
    values = args.values if args.values else None
    results = fn(cfg, values)
    write_json(Path(cfg.output_dir) / "config.json", asdict(cfg))
    print(f"{len(results)} realizations written to {Path(cfg.output_dir) / 'realizations.csv'}")
    if not args.no_report:
        report(cfg.output_dir)
    return EXIT_OK


def cmd_report(args) -> int:
    for path in report(args.results_dir):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfauth", description="Open-set transmitter authorization experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic IQ corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--n-tx", type=int, default=71)
    g.add_argument("--frames", type=int, nargs=2, default=(200, 1500), metavar=("MIN", "MAX"))
    g.add_argument("--snr-db", type=float, default=20.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scale", type=float, default=1.0, help="multiply every impairment range")
    g.add_argument("--ranges", help="JSON file of impairment ranges")
    g.add_argument("--waveform", default="qpsk-preamble", choices=("qpsk-preamble", "constant-envelope-chirp"))
    g.add_argument("--layout", default="random", choices=("random", "spread"),
                   help="independent profile draws, or evenly spread well-separated profiles")
    g.set_defaults(func=cmd_generate)

    def common(sp):
        sp.add_argument("--config", help="ExperimentConfig JSON file")
        sp.add_argument("--corpus", help="corpus directory (overrides the config)")
        sp.add_argument("--output", help="results directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="base seed (overrides the config)")

    r = sub.add_parser("run", help="run a single realization")
    common(r)
    r.add_argument("--realization", type=int, default=0)
    r.set_defaults(func=cmd_run)

    for name, fn, help_ in (("sweep-auth", sweep_authorized, "sweep |A|"), ("sweep-known", sweep_known, "sweep |K|")):
        s = sub.add_parser(name, help=help_)
        common(s)
        s.add_argument("--realizations", type=int, help="realizations per sweep point")
        s.add_argument("--values", type=int, nargs="+", help="sweep grid (overrides the config)")
        s.add_argument("--no-report", action="store_true", help="skip plots")
        s.set_defaults(func=lambda a, fn=fn: _cmd_sweep(fn, a))

    rep = sub.add_parser("report", help="summarize and plot a results directory")
    rep.add_argument("results_dir")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (MissingDataError, CorpusFormatError, FileNotFoundError) as exc:
        print(f"missing data: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
