"""Constraint inventory, source-side matching, a rule-based NE tagger and
copy-candidate extraction from monolingual corpora."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

MODES = ("always", "ne_gated")
DEFAULT_COPY_MIN_COUNT = 9

Phrase = tuple[str, ...]
Span = tuple[int, int]  # [start, end)


class ConstraintFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Constraint:
    source: Phrase
    target: Phrase
    mode: str = "always"

    def __post_init__(self):
        if not self.source or not self.target:
            raise ValueError("constraint sides must be non-empty")
        if self.mode not in MODES:
            raise ValueError(f"unknown constraint mode {self.mode!r}")

    def to_line(self) -> str:
        return f"{' '.join(self.source)}\t{' '.join(self.target)}\t{self.mode}"


class ConstraintSet:
    """Ordered, duplicate-free collection of constraints."""

    def __init__(self, constraints: Iterable[Constraint] = ()):
        seen = set()
        self.constraints: list[Constraint] = []
        for c in constraints:
            if c not in seen:
                seen.add(c)
                self.constraints.append(c)

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self) -> Iterator[Constraint]:
        return iter(self.constraints)

    def __add__(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet([*self, *other])

    def by_mode(self, mode: str) -> list[Constraint]:
        return [c for c in self.constraints if c.mode == mode]

    def dumps(self) -> str:
        return "".join(c.to_line() + "\n" for c in self.constraints)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def parse_constraints(lines: Iterable[str], origin: str = "<string>") -> ConstraintSet:
    out = []
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ConstraintFormatError(f"{origin}:{lineno}: expected source<TAB>target<TAB>mode")
        src, tgt, mode = (p.strip() for p in parts)
        if mode not in MODES:
            raise ConstraintFormatError(f"{origin}:{lineno}: unknown mode {mode!r}")
        if not src.split() or not tgt.split():
            raise ConstraintFormatError(f"{origin}:{lineno}: empty constraint side")
        out.append(Constraint(tuple(src.split()), tuple(tgt.split()), mode))
    return ConstraintSet(out)


def load_constraints(path: str | Path) -> ConstraintSet:
    with open(path, encoding="utf-8") as fh:
        return parse_constraints(fh, str(path))


def find_spans(sentence: Sequence[str], phrase: Sequence[str]) -> list[Span]:
    """Every start position where `phrase` occurs contiguously (overlaps included)."""
    n, k = len(sentence), len(phrase)
    phrase = tuple(phrase)
    return [(i, i + k) for i in range(n - k + 1) if tuple(sentence[i:i + k]) == phrase]


def match_always(sentence: Sequence[str], constraints: Iterable[Constraint]) -> list[Constraint]:
    """Every `always` constraint, once per distinct match span of its source."""
    hits = []
    for c in constraints:
        if c.mode != "always":
            continue
        for span in find_spans(sentence, c.source):
            hits.append((span, c))
    hits.sort(key=lambda h: h[0])
    return [c for _, c in hits]


class NeTagger:
    """Gazetteer lookup first (longest match), then capitalization patterns.

    A pattern span is a maximal run of capitalized tokens; the sentence-initial
    token only counts when it is covered by a gazetteer entry.
    """

    def __init__(self, gazetteer: Iterable[Sequence[str]] = ()):
        self.gazetteer = frozenset(tuple(g) for g in gazetteer if g)
        self.max_len = max((len(g) for g in self.gazetteer), default=0)

    @classmethod
    def load(cls, path: str | Path) -> "NeTagger":
        with open(path, encoding="utf-8") as fh:
            return cls(line.split() for line in fh if line.strip())

    @staticmethod
    def capitalized(token: str) -> bool:
        return token[:1].isupper()

    def tag(self, sentence: Sequence[str]) -> list[Span]:
        n = len(sentence)
        covered = [False] * n
        spans: list[Span] = []
        i = 0
        while i < n:
            for k in range(min(self.max_len, n - i), 0, -1):
                if tuple(sentence[i:i + k]) in self.gazetteer:
                    spans.append((i, i + k))
                    for p in range(i, i + k):
                        covered[p] = True
                    i += k
                    break
            else:
                i += 1
        i = 1
        while i < n:
            if not covered[i] and self.capitalized(sentence[i]):
                j = i
                while j < n and not covered[j] and self.capitalized(sentence[j]):
                    j += 1
                spans.append((i, j))
                i = j
            else:
                i += 1
        return sorted(spans)


def ne_tag(sentence: Sequence[str], tagger: NeTagger) -> list[Span]:
    return tagger.tag(sentence)


def match_ne_gated(
    sentence: Sequence[str], constraints: Iterable[Constraint], tagger: NeTagger
) -> list[Constraint]:
    """`ne_gated` constraints whose match span lies inside some NE span."""
    ne_spans = tagger.tag(sentence)
    hits = []
    for c in constraints:
        if c.mode != "ne_gated":
            continue
        for start, end in find_spans(sentence, c.source):
            if any(a <= start and end <= b for a, b in ne_spans):
                hits.append(((start, end), c))
    hits.sort(key=lambda h: h[0])
    return [c for _, c in hits]


def applicable(
    sentence: Sequence[str], constraints: Iterable[Constraint], tagger: NeTagger | None = None
) -> list[Constraint]:
    """All constraints to enforce for one sentence, one entry per match span."""
    constraints = list(constraints)
    hits = match_always(sentence, constraints)
    if tagger is not None:
        hits += match_ne_gated(sentence, constraints, tagger)
    return hits


def count_ne_phrases(corpus: Iterable[Sequence[str]], tagger: NeTagger) -> Counter[Phrase]:
    """How often each phrase is tagged as a named entity across a corpus."""
    counts: Counter[Phrase] = Counter()
    for sentence in corpus:
        for a, b in tagger.tag(sentence):
            counts[tuple(sentence[a:b])] += 1
    return counts


def extract_copy_candidates(
    src_counts: Mapping[Phrase, int],
    tgt_counts: Mapping[Phrase, int],
    min_count: int = DEFAULT_COPY_MIN_COUNT,
) -> list[Constraint]:
    """NE phrases frequent on both sides, assumed to translate as themselves."""
    return [
        Constraint(p, p, "ne_gated")
        for p in sorted(src_counts)
        if src_counts[p] >= min_count and tgt_counts.get(p, 0) >= min_count
    ]


def save_counts(counts: Mapping[Phrase, int], path: str | Path) -> None:
    Path(path).write_text(
        "".join(f"{' '.join(p)}\t{c}\n" for p, c in sorted(counts.items())), encoding="utf-8"
    )


def load_counts(path: str | Path) -> Counter[Phrase]:
    counts: Counter[Phrase] = Counter()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            phrase, sep, count = line.rstrip("\n").rpartition("\t")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected phrase<TAB>count")
            counts[tuple(phrase.split())] = int(count)
    return counts
