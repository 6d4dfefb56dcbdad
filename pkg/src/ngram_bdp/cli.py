"""``ngram-bdp`` command line.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

from . import __version__
from .config import load_config
from .counts import (build_vocabulary, ingest, read_corpus_records, read_vocabulary,
                     write_counts, write_public_counts, write_vocabulary)
from .errors import ConfigError, DataError, NumericalError

log = logging.getLogger("ngram_bdp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


def _with_output_dir(cfg, args):
    if getattr(args, "output_dir", None):
        cfg.output_dir = os.path.abspath(args.output_dir)
    return cfg


def cmd_ingest(args):
    vocab = read_vocabulary(args.vocab)
    db = ingest(read_corpus_records(args.corpus), vocab)
    write_counts(args.output, db)
    log.info("wrote counts for %d users to %s", len(db), args.output)


def cmd_vocab(args):
    with open(args.corpus, encoding="utf-8") as f:
        texts = [line for line in f if line.strip()]
    vocab, alpha = build_vocabulary(texts, args.n, args.max_size)
    if len(vocab) == 0:
        raise DataError(f"{args.corpus}: no {args.n}-grams found")
    write_vocabulary(args.output, vocab)
    if args.public_counts:
        write_public_counts(args.public_counts, vocab, alpha)
    log.info("wrote %d entries to %s", len(vocab), args.output)


def _report(manifest):
    for name, path in sorted(manifest.artifacts.items()):
        print(f"{name}\t{path}")


def cmd_release(args):
    from .experiments import run_experiment

    cfg = _with_output_dir(load_config(args.config), args)
    _report(run_experiment(cfg, tune=False))


def cmd_tune(args):
    from .experiments import run_experiment

    cfg = _with_output_dir(load_config(args.config), args)
    _report(run_experiment(cfg, tune=True))


def cmd_eval(args):
    from .experiments import (evaluate_release, load_dataset, metric_rows, read_release,
                              write_csv)

    cfg = load_config(args.config)
    if args.perplexity:
        cfg.eval.perplexity = True
    release = read_release(args.release)
    data = load_dataset(cfg)
    if release.theta.shape != (len(data.vocabulary),):
        raise DataError("release does not match the configured vocabulary")
    rows = metric_rows(release, evaluate_release(release, data, cfg), release.seed)
    if args.output:
        write_csv(args.output, rows)
    else:
        print("mechanism,epsilon,delta,seed,metric,value")
        for row in rows:
            print(",".join("" if v is None else str(v) for v in row))


def cmd_attack(args):
    from .config import AttackConfig
    from .experiments import run_attack

    cfg = _with_output_dir(load_config(args.config), args)
    if cfg.attack is None:
        cfg.attack = AttackConfig()
    if args.trials is not None:
        cfg.attack.trials = args.trials
    _report(run_attack(cfg))


def cmd_sweep(args):
    from .config import SweepConfig
    from .experiments import run_sweep

    cfg = _with_output_dir(load_config(args.config), args)
    if cfg.sweep is None:
        cfg.sweep = SweepConfig()
    _report(run_sweep(cfg))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ngram-bdp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="per-user corpus -> counts file")
    s.add_argument("corpus", help="user_id<TAB>text per line")
    s.add_argument("--vocab", required=True)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("vocab", help="public corpus -> vocabulary and public counts")
    s.add_argument("corpus", help="one sentence per line")
    s.add_argument("-n", type=int, default=3)
    s.add_argument("--max-size", type=int, default=None)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--public-counts", default=None)
    s.set_defaults(func=cmd_vocab)

    for name, func, text in (("release", cmd_release, "run one mechanism"),
                             ("tune", cmd_tune, "tune (S, rho) privately and release"),
                             ("attack", cmd_attack, "membership inference sweep"),
                             ("sweep", cmd_sweep, "utility sweep with figures")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)
        s.add_argument("--output-dir", default=None)
        if name == "attack":
            s.add_argument("--trials", type=int, default=None)
        s.set_defaults(func=func)

    s = sub.add_parser("eval", help="score a release file")
    s.add_argument("--config", required=True)
    s.add_argument("--release", required=True)
    s.add_argument("--perplexity", action="store_true")
    s.add_argument("-o", "--output", default=None)
    s.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
