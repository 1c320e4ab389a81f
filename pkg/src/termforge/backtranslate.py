"""Backtranslation of selected monolingual text, with or without terminology
constraints, into a synthetic parallel corpus."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .constraints import Constraint, NeTagger, applicable
from .decoder import DecodeError, InfeasibleConstraints, Scorer, beam_search, constrained_beam_search
from .evaluation import contains
from .ngram_lm import NGramModel, select_top

log = logging.getLogger(__name__)

MODES = ("constrained", "unconstrained")
BEAM_CONSTRAINED = 20
BEAM_UNCONSTRAINED = 5


@dataclass(frozen=True)
class SyntheticPair:
    synthetic_source: tuple[str, ...]
    original_target: tuple[str, ...]
    applied_constraints: tuple[Constraint, ...] = ()
    constrained: bool = False


@dataclass
class Stats:
    lines_selected: int = 0
    lines_decoded: int = 0
    lines_with_constraints: int = 0
    constraints_matched: int = 0
    constraints_satisfied: int = 0
    infeasible: int = 0
    warned: int = 0
    failed: int = 0
    failed_lines: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def max_length(source: Sequence[str], ratio: float, extra: int) -> int:
    return int(ratio * len(source)) + extra


def decoding_targets(constraints: Sequence[Constraint]) -> list[tuple[str, ...]]:
    """Distinct target phrases to force, dropping any phrase that occurs inside
    another one (producing the longer phrase satisfies both)."""
    targets = sorted({c.target for c in constraints})
    return [
        t for t in targets
        if not any(u != t and len(u) > len(t) and contains(u, t) for u in targets)
    ]


def translate_line(
    source: Sequence[str],
    scorer: Scorer,
    constraints: Sequence[Constraint],
    beam: int,
    max_len: int,
):
    """Decode one line; returns (hypothesis, constrained?).  A line whose
    constraints cannot fit the length budget is decoded unconstrained."""
    if constraints:
        try:
            hyp = constrained_beam_search(scorer, source, decoding_targets(constraints), beam, max_len)
            return hyp, True
        except InfeasibleConstraints:
            log.info("constraints infeasible for %r; decoding unconstrained", " ".join(source))
            return beam_search(scorer, source, beam, max_len), False
    return beam_search(scorer, source, beam, max_len), False


def run_backtranslation(
    mono: Iterable[str],
    in_lm: NGramModel,
    out_lm: NGramModel,
    n: int,
    scorer: Scorer,
    constraint_set: Iterable[Constraint],
    tagger: NeTagger | None,
    mode: str = "constrained",
    beam: int | None = None,
    max_len_ratio: float = 2.0,
    max_len_extra: int = 3,
    tokenize: Callable[[str], Sequence[str]] = str.split,
) -> tuple[list[SyntheticPair], Stats]:
    """Select the top-`n` Moore-Lewis lines and backtranslate each.

    Each selected line becomes (decoded output, original line).  Lines that
    fail to decode are skipped and listed in the stats.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if beam is None:
        beam = BEAM_CONSTRAINED if mode == "constrained" else BEAM_UNCONSTRAINED
    constraint_set = list(constraint_set)
    selected = select_top(mono, in_lm, out_lm, n, tokenize)
    stats = Stats(lines_selected=len(selected))
    pairs = []
    for idx, line in enumerate(selected):
        source = list(tokenize(line))
        applied = applicable(source, constraint_set, tagger)
        if applied:
            stats.lines_with_constraints += 1
        stats.constraints_matched += len(applied)
        budget = max_length(source, max_len_ratio, max_len_extra)
        try:
            hyp, used = translate_line(
                source, scorer, applied if mode == "constrained" else [], beam, budget
            )
        except DecodeError as err:
            log.warning("line %d failed to decode: %s", idx, err)
            stats.failed += 1
            stats.failed_lines.append(idx)
            continue
        if mode == "constrained" and applied and not used:
            stats.infeasible += 1
        stats.warned += hyp.warning
        stats.lines_decoded += 1
        stats.constraints_satisfied += sum(contains(hyp.tokens, c.target) for c in applied)
        pairs.append(SyntheticPair(tuple(hyp.tokens), tuple(source), tuple(applied), used))
    return pairs, stats


def emit_corpus(pairs: Sequence[SyntheticPair], out_src_path: str | Path, out_tgt_path: str | Path) -> None:
    """Write line-aligned synthetic-source and real-target files."""
    src_text = "".join(" ".join(p.synthetic_source) + "\n" for p in pairs)
    tgt_text = "".join(" ".join(p.original_target) + "\n" for p in pairs)
    for path, text in ((out_src_path, src_text), (out_tgt_path, tgt_text)):
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as err:
            raise OSError(f"cannot write {path}: {err}") from err
