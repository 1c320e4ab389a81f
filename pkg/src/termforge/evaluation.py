"""Corpus BLEU with SacreBLEU-style 13a tokenization, and terminology recall."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .constraints import Constraint

MAX_ORDER = 4
TOKENIZERS = ("13a", "none")

# Same regex cascade as the reference 13a tokenizer.
_13A_RULES = [
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
]


def tokenize_13a(line: str) -> list[str]:
    line = line.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    if "&" in line:
        line = (
            line.replace("&quot;", '"').replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">")
        )
    line = f" {line} "
    for pattern, repl in _13A_RULES:
        line = pattern.sub(repl, line)
    return line.split()


def _tokenizer(name: str):
    if name == "13a":
        return tokenize_13a
    if name == "none":
        return str.split
    raise ValueError(f"unknown tokenization {name!r}; expected one of {TOKENIZERS}")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class BleuScore:
    score: float
    precisions: tuple[float, ...]  # percentages
    bp: float
    sys_len: int
    ref_len: int
    correct: tuple[int, ...] = ()
    total: tuple[int, ...] = ()

    @property
    def ratio(self) -> float:
        return self.sys_len / self.ref_len if self.ref_len else 0.0

    def format(self) -> str:
        p = "/".join(f"{x:.1f}" for x in self.precisions)
        return f"BLEU = {self.score:.2f} ({p}, BP={self.bp:.3f}, ratio={self.ratio:.3f})"


def bleu(hyps: Sequence[str], refs: Sequence[str], tokenization: str = "13a") -> BleuScore:
    """Corpus-level 4-gram BLEU with clipped counts and no smoothing: a zero
    match count at any order gives a score of 0."""
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} references")
    if not hyps:
        raise ValueError("BLEU needs at least one line")
    tok = _tokenizer(tokenization)
    correct = [0] * MAX_ORDER
    total = [0] * MAX_ORDER
    sys_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        h, r = tok(hyp), tok(ref)
        sys_len += len(h)
        ref_len += len(r)
        for n in range(1, MAX_ORDER + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            correct[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[n - 1] += max(0, len(h) - n + 1)

    precisions = tuple(100.0 * c / t if t else 0.0 for c, t in zip(correct, total))
    if sys_len == 0:
        bp = 0.0
    elif sys_len < ref_len:
        bp = math.exp(1.0 - ref_len / sys_len)
    else:
        bp = 1.0
    if min(correct) == 0:
        score = 0.0
    else:
        log_avg = sum(math.log(c / t) for c, t in zip(correct, total)) / MAX_ORDER
        score = 100.0 * bp * math.exp(log_avg)
    return BleuScore(score, precisions, bp, sys_len, ref_len, tuple(correct), tuple(total))


def format_bleu(score: BleuScore) -> str:
    return score.format()


def contains(tokens: Sequence[str], phrase: Sequence[str]) -> bool:
    k = len(phrase)
    phrase = tuple(phrase)
    return any(tuple(tokens[i:i + k]) == phrase for i in range(len(tokens) - k + 1))


@dataclass
class TermRecall:
    hits: int
    applied: int
    per_constraint: dict[str, tuple[int, int]] = field(default_factory=dict)  # key -> (hits, applied)

    @property
    def vacuous(self) -> bool:
        return self.applied == 0

    @property
    def recall(self) -> float:
        return 1.0 if self.applied == 0 else self.hits / self.applied

    def to_dict(self) -> dict:
        return {
            "recall": self.recall,
            "hits": self.hits,
            "applied": self.applied,
            "vacuous": self.vacuous,
            "per_constraint": {k: list(v) for k, v in sorted(self.per_constraint.items())},
        }


def term_recall(hyps: Sequence[Sequence[str]], applied: Sequence[Sequence[Constraint]]) -> TermRecall:
    """Share of applied constraints whose target phrase occurs contiguously in
    the hypothesis of the same line.  No applied constraints counts as 1.0."""
    if len(hyps) != len(applied):
        raise ValueError(f"{len(hyps)} hypotheses but {len(applied)} constraint lists")
    hits = n = 0
    per: dict[str, list[int]] = {}
    for hyp, cons in zip(hyps, applied):
        for c in cons:
            key = f"{' '.join(c.source)} => {' '.join(c.target)}"
            ok = contains(hyp, c.target)
            slot = per.setdefault(key, [0, 0])
            slot[0] += ok
            slot[1] += 1
            hits += ok
            n += 1
    return TermRecall(hits, n, {k: (v[0], v[1]) for k, v in per.items()})
