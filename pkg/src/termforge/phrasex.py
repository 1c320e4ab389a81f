"""Phrase-pair extraction from word-aligned bitext and the constraint filters:
conditional probability, domain relevance, and target-side occurrence."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .ngram_lm import NGramModel, moore_lewis

log = logging.getLogger(__name__)

Phrase = tuple[str, ...]
Box = tuple[int, int, int, int]  # src_start, src_end, tgt_start, tgt_end (inclusive)
DEFAULT_MAX_LEN = 7


@dataclass(frozen=True, order=True)
class PhrasePair:
    source: Phrase
    target: Phrase
    count: int
    prob: float


class PhraseTable:
    """Source phrase -> candidate translations, each with count and p(target|source)."""

    def __init__(self, entries: dict[Phrase, list[PhrasePair]] | None = None):
        self.entries: dict[Phrase, list[PhrasePair]] = {
            src: sorted(pairs) for src, pairs in sorted((entries or {}).items()) if pairs
        }

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def __iter__(self) -> Iterator[PhrasePair]:
        for pairs in self.entries.values():
            yield from pairs

    def __eq__(self, other) -> bool:
        return isinstance(other, PhraseTable) and self.entries == other.entries

    def targets(self, source: Sequence[str]) -> list[PhrasePair]:
        return self.entries.get(tuple(source), [])

    @classmethod
    def from_pairs(cls, pairs: Iterable[PhrasePair]) -> "PhraseTable":
        entries: dict[Phrase, list[PhrasePair]] = defaultdict(list)
        for pp in pairs:
            entries[pp.source].append(pp)
        return cls(dict(entries))

    def dumps(self) -> str:
        return "".join(
            f"{' '.join(pp.source)}\t{' '.join(pp.target)}\t{pp.count}\t{pp.prob!r}\n" for pp in self
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PhraseTable":
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
                pairs.append(
                    PhrasePair(tuple(parts[0].split()), tuple(parts[1].split()), int(parts[2]), float(parts[3]))
                )
        return cls.from_pairs(pairs)

    def save_constraints(self, path: str | Path, mode: str = "always") -> None:
        """Export as a constraints TSV (source, target, mode)."""
        Path(path).write_text(
            "".join(f"{' '.join(pp.source)}\t{' '.join(pp.target)}\t{mode}\n" for pp in self),
            encoding="utf-8",
        )


def extract_boxes(
    src_len: int, tgt_len: int, alignment: Iterable[tuple[int, int]], max_len: int = DEFAULT_MAX_LEN
) -> list[Box]:
    """All consistent phrase boxes: at least one link inside and no link
    crossing the box boundary; unaligned target words at the edges extend the
    box.  Enumerated in (src_start, src_end, tgt_start, tgt_end) order."""
    links = set(alignment)
    tgt_aligned = [False] * tgt_len
    by_src: dict[int, list[int]] = defaultdict(list)
    by_tgt: dict[int, list[int]] = defaultdict(list)
    for i, j in links:
        tgt_aligned[j] = True
        by_src[i].append(j)
        by_tgt[j].append(i)

    boxes: list[Box] = []
    for s1 in range(src_len):
        t_min, t_max = tgt_len, -1
        for s2 in range(s1, min(s1 + max_len, src_len)):
            for j in by_src.get(s2, ()):
                t_min = min(t_min, j)
                t_max = max(t_max, j)
            if t_max < 0 or t_max - t_min >= max_len:
                continue
            # the tightest target span must not link outside [s1, s2]
            if any(not s1 <= i <= s2 for j in range(t_min, t_max + 1) for i in by_tgt.get(j, ())):
                continue
            t1 = t_min
            while t1 >= 0 and (t1 == t_min or not tgt_aligned[t1]):
                t2 = t_max
                while t2 < tgt_len and (t2 == t_max or not tgt_aligned[t2]) and t2 - t1 < max_len:
                    boxes.append((s1, s2, t1, t2))
                    t2 += 1
                t1 -= 1
    return sorted(boxes)


def extract_phrases(
    pair: tuple[Sequence[str], Sequence[str]],
    alignment: Iterable[tuple[int, int]],
    max_len: int = DEFAULT_MAX_LEN,
) -> set[tuple[Phrase, Phrase]]:
    src, tgt = pair
    return {
        (tuple(src[s1:s2 + 1]), tuple(tgt[t1:t2 + 1]))
        for s1, s2, t1, t2 in extract_boxes(len(src), len(tgt), alignment, max_len)
    }


def build_phrase_table(
    bitext: Sequence[tuple[Sequence[str], Sequence[str]]],
    alignments: Sequence[Iterable[tuple[int, int]]],
    max_len: int = DEFAULT_MAX_LEN,
) -> PhraseTable:
    """Counts every extracted box; p(target|source) by relative frequency."""
    if len(bitext) != len(alignments):
        raise ValueError(f"{len(bitext)} sentence pairs but {len(alignments)} alignments")
    joint: Counter[tuple[Phrase, Phrase]] = Counter()
    for (src, tgt), links in zip(bitext, alignments):
        for s1, s2, t1, t2 in extract_boxes(len(src), len(tgt), links, max_len):
            joint[tuple(src[s1:s2 + 1]), tuple(tgt[t1:t2 + 1])] += 1
    marginal: Counter[Phrase] = Counter()
    for (s, _), c in joint.items():
        marginal[s] += c
    return PhraseTable.from_pairs(
        PhrasePair(s, t, c, c / marginal[s]) for (s, t), c in joint.items()
    )


def filter_by_prob(table: PhraseTable, threshold: float = 0.5) -> PhraseTable:
    """Keep pairs with p(target|source) strictly above `threshold`.  At 0.5
    this leaves at most one target per source phrase (exact 0.5 ties drop)."""
    return PhraseTable.from_pairs(pp for pp in table if pp.prob > threshold)


def filter_by_domain(
    table: PhraseTable, in_lm: NGramModel, out_lm: NGramModel, k: int = 2000
) -> PhraseTable:
    """Keep the `k` pairs whose source side has the lowest Moore-Lewis score."""
    if k < 0:
        raise ValueError("K must be >= 0")
    if k > len(table):
        log.warning("K=%d exceeds table size %d; keeping the whole table", k, len(table))
    scored = sorted(
        (moore_lewis(in_lm, out_lm, pp.source), pp.source, pp.target, pp) for pp in table
    )
    return PhraseTable.from_pairs(item[-1] for item in scored[:k])


def count_ngrams(corpus: Iterable[Sequence[str]], phrases: Iterable[Phrase]) -> Counter[Phrase]:
    """Contiguous occurrences of each phrase; matches never span two lines."""
    wanted = set(phrases)
    counts: Counter[Phrase] = Counter({p: 0 for p in wanted})
    lengths = sorted({len(p) for p in wanted})
    for sentence in corpus:
        toks = tuple(sentence)
        for n in lengths:
            for i in range(len(toks) - n + 1):
                gram = toks[i:i + n]
                if gram in wanted:
                    counts[gram] += 1
    return counts


def filter_by_occurrence(
    table: PhraseTable, target_mono: Iterable[Sequence[str]], min_count: int = 1
) -> PhraseTable:
    counts = count_ngrams(target_mono, {pp.target for pp in table})
    return PhraseTable.from_pairs(pp for pp in table if counts[pp.target] >= min_count)
