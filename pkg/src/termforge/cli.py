"""Command-line entry point: ``termforge <stage> --config pipeline.json``."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, validate_config
from .constraints import Constraint
from .evaluation import TOKENIZERS, bleu, term_recall

log = logging.getLogger("termforge")

# stage-specific flags -> config keys
STAGE_FLAGS = {
    "filter-train": [("--trees", int, "filter.trees"), ("--depth", int, "filter.max_depth"), ("--seed", int, "seed")],
    "filter-select": [("--round-size", int, "filter.round_size")],
    "filter-apply": [("--threshold", float, "filter.threshold")],
    "bpe-learn": [("--merges", int, "bpe.merges")],
    "lm-train": [("--order", int, "lm.order"), ("--discount", float, "lm.discount")],
    "phrasex": [("--top-k", int, "phrasex.top_k"), ("--prob-threshold", float, "phrasex.prob_threshold")],
    "copy-candidates": [("--min-count", int, "constraints.min_count")],
    "backtranslate": [
        ("--mono", str, "data.bt_mono"),
        ("--constraints", str, "data.constraints"),
        ("--top", int, "backtranslate.top_n"),
        ("--mode", str, "backtranslate.mode"),
        ("--beam", int, None),  # routed to the beam of the chosen mode
        ("--stats-out", str, None),  # copy of bt/stats.json
    ],
}


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="pipeline JSON config")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config value, e.g. --set filter.threshold=0.8 (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    from .pipeline import STAGES

    parser = argparse.ArgumentParser(prog="termforge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        _add_config_args(p)
        for flag, typ, _ in STAGE_FLAGS.get(name, []):
            p.add_argument(flag, type=typ)

    p = sub.add_parser("pipeline", help="run every stage in order")
    _add_config_args(p)

    p = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    _add_config_args(p)

    p = sub.add_parser("toy-data", help="write deterministic toy corpora and a config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bleu", help="corpus BLEU of a hypothesis file against a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--tok", choices=TOKENIZERS, default="13a")
    p.add_argument("hyp", nargs="?", help="hypothesis file (default: stdin)")

    p = sub.add_parser("decode", help="translate tokenized lines with the toy scorer of a pipeline run")
    _add_config_args(p)
    p.add_argument("--input", help="one tokenized source sentence per line (default: stdin)")
    p.add_argument("--beam", type=int, default=None, help="default: 20 with constraints, 5 without")
    p.add_argument("--max-len", type=int, default=None, help="default: from backtranslate.max_len_*")
    p.add_argument("--constraints", help="constraints TSV; 'always' entries apply on every match")
    p.add_argument("--ne-gated", action="store_true", help="also apply ne_gated entries inside tagged names")

    p = sub.add_parser("ml-select", help="lowest Moore-Lewis lines of a tokenized corpus")
    p.add_argument("--in-lm", required=True)
    p.add_argument("--out-lm", required=True)
    p.add_argument("--top", type=int, required=True)
    p.add_argument("corpus", nargs="?", help="default: stdin")

    p = sub.add_parser("term-recall", help="terminology recall from a backtranslation log")
    p.add_argument("--constraints-log", required=True, help="JSON lines with 'hyp' and 'constraints'")
    return parser


def _overrides(args) -> list:
    items = list(args.overrides)
    mode = None
    for flag, _, key in STAGE_FLAGS.get(args.command, []):
        value = getattr(args, flag.lstrip("-").replace("-", "_"))
        if value is None:
            continue
        if flag == "--mode":
            mode = value
        if key is None:
            continue
        if key.startswith("data."):
            value = str(Path(value).resolve())  # flags are relative to the cwd, not the config
        items.append((key, value))
    beam = getattr(args, "beam", None)
    if beam is not None:
        items.append((f"backtranslate.beam_{mode or 'constrained'}", beam))
    return items


def _read(path: str) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise SystemExit(f"termforge: cannot read {path}: {err.strerror}")


def cmd_bleu(args) -> int:
    refs = _read(args.ref)
    hyps = _read(args.hyp) if args.hyp else sys.stdin.read().splitlines()
    print(bleu(hyps, refs, args.tok).format())
    return 0


def cmd_term_recall(args) -> int:
    hyps, applied = [], []
    for lineno, line in enumerate(_read(args.constraints_log), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            hyps.append(rec["hyp"].split())
            applied.append([Constraint(tuple(s.split()), tuple(t.split()), m) for s, t, m in rec["constraints"]])
        except (ValueError, KeyError, TypeError) as err:
            raise SystemExit(f"termforge: {args.constraints_log}:{lineno}: bad record ({err})")
    result = term_recall(hyps, applied)
    print(json.dumps(result.to_dict(), indent=2, sort_keys=True, ensure_ascii=False))
    return 0


def cmd_ml_select(args) -> int:
    from .ngram_lm import NGramModel, select_top

    lines = _read(args.corpus) if args.corpus else sys.stdin.read().splitlines()
    for line in select_top(lines, NGramModel.load(args.in_lm), NGramModel.load(args.out_lm), args.top):
        print(line)
    return 0


def cmd_decode(args, cfg) -> int:
    from .align import TranslationTable
    from .backtranslate import max_length, translate_line
    from .constraints import NeTagger, applicable, load_constraints
    from .decoder import DecodeError, ToyScorer
    from .ngram_lm import NGramModel

    out = cfg.output_dir
    try:
        scorer = ToyScorer(
            TranslationTable.load(out / "align/lex.s2t.tsv"),
            NGramModel.load(out / "lm/news.tgt.lm"),
            cfg["backtranslate.lm_weight"],
        )
        constraints = list(load_constraints(args.constraints)) if args.constraints else []
        tagger = None
        if args.ne_gated:
            gaz = out / "prep/gazetteer.src"
            tagger = NeTagger(line.split() for line in _read(str(gaz))) if gaz.is_file() else NeTagger()
    except (OSError, ValueError) as err:
        print(f"termforge: {err}", file=sys.stderr)
        return 1
    lines = _read(args.input) if args.input else sys.stdin.read().splitlines()
    status = 0
    for i, line in enumerate(lines):
        src = line.split()
        applied = applicable(src, constraints, tagger)
        beam = args.beam or (cfg["backtranslate.beam_constrained"] if applied else cfg["backtranslate.beam_unconstrained"])
        max_len = args.max_len or max_length(
            src, cfg["backtranslate.max_len_ratio"], cfg["backtranslate.max_len_extra"]
        )
        try:
            hyp, _ = translate_line(src, scorer, applied, beam, max_len)
        except DecodeError as err:
            print(f"termforge: line {i}: {err}", file=sys.stderr)
            status = 1
            continue
        print(f"{i}\t{' '.join(hyp.tokens)}\t{len(applied)}")
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "bleu":
        return cmd_bleu(args)
    if args.command == "term-recall":
        return cmd_term_recall(args)
    if args.command == "ml-select":
        return cmd_ml_select(args)
    if args.command == "toy-data":
        from .toydata import write_toy_data

        print(write_toy_data(args.out, args.seed))
        return 0

    from .pipeline import PIPELINE, StageError, run_stage

    try:
        cfg = validate_config(args.config, _overrides(args))
    except ConfigError as err:
        print(f"termforge: config error: {err}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(json.dumps(cfg.values, indent=2, sort_keys=True))
        return 0
    if args.command == "decode":
        return cmd_decode(args, cfg)
    stages = PIPELINE if args.command == "pipeline" else (args.command,)
    for name in stages:
        try:
            manifest = run_stage(name, cfg)
        except (StageError, OSError, ValueError) as err:
            print(f"termforge: stage {name} failed: {err}", file=sys.stderr)
            return 1
        print(f"{name}: {len(manifest['outputs'])} artifacts")
    if getattr(args, "stats_out", None):
        shutil.copyfile(cfg.output_dir / "bt/stats.json", args.stats_out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
