"""Word alignment: IBM Model 1 EM, a diagonal-prior variant, Viterbi links and
bidirectional symmetrization."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

NULL = "<null>"

SentencePair = tuple[Sequence[str], Sequence[str]]
Alignment = frozenset[tuple[int, int]]

HEURISTICS = ("intersection", "union", "grow-diag-final-and")
DEFAULT_NULL_PROB = 0.08
_NEIGHBOURS = ((-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


@dataclass
class TranslationTable:
    """p(target | source) over co-occurring pairs; the NULL source is included."""

    probs: dict[str, dict[str, float]]
    log_likelihoods: list[float] = field(default_factory=list)
    null_prob: float | None = DEFAULT_NULL_PROB

    def __post_init__(self):
        self.target_vocab = frozenset(t for row in self.probs.values() for t in row)

    def prob(self, target: str, source: str) -> float:
        row = self.probs.get(source)
        if row is None or target not in self.target_vocab:
            return 1.0 / (len(self.target_vocab) + 1)
        return row.get(target, 0.0)

    def dumps(self) -> str:
        return "".join(
            f"{s}\t{t}\t{p!r}\n"
            for s in sorted(self.probs)
            for t, p in sorted(self.probs[s].items())
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TranslationTable":
        probs: dict[str, dict[str, float]] = defaultdict(dict)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected src<TAB>tgt<TAB>p")
                probs[parts[0]][parts[1]] = float(parts[2])
        return cls(dict(probs))


@dataclass
class DiagonalModel:
    table: TranslationTable
    tension: float
    null_prob: float | None = DEFAULT_NULL_PROB

    def prob(self, target: str, source: str) -> float:
        return self.table.prob(target, source)


def _check_bitext(bitext: Sequence[SentencePair]) -> None:
    if not bitext:
        raise ValueError("empty bitext")


def _position_weights(m: int, j: int, n: int, tension: float, null_prob: float | None) -> list[float]:
    """Prior over [real source positions..., NULL] for target position j.

    NULL gets ``null_prob`` (None: 1/(m+1), the textbook uniform prior); the
    real positions share the rest in proportion to exp(-tension * |i/m - j/n|).
    """
    if m == 0:
        return [1.0]
    p0 = 1.0 / (m + 1) if null_prob is None else null_prob
    raw = [math.exp(-tension * abs(i / m - j / n)) for i in range(m)]
    z = sum(raw)
    return [(1.0 - p0) * r / z for r in raw] + [p0]


def _init_table(bitext: Sequence[SentencePair]) -> dict[str, dict[str, float]]:
    cooc: dict[str, set[str]] = defaultdict(set)
    for src, tgt in bitext:
        for s in list(src) + [NULL]:
            cooc[s].update(tgt)
    return {s: {t: 1.0 / len(ts) for t in sorted(ts)} for s, ts in sorted(cooc.items()) if ts}


def _log_likelihood(probs, bitext, tension: float, null_prob: float | None) -> float:
    total = 0.0
    for src, tgt in bitext:
        sources = list(src) + [NULL]
        m, n = len(src), len(tgt)
        for j, t in enumerate(tgt):
            w = _position_weights(m, j, n, tension, null_prob)
            total += math.log(sum(w[i] * probs[s].get(t, 0.0) for i, s in enumerate(sources)))
    return total


def _em(
    bitext: Sequence[SentencePair], iterations: int, tension: float, null_prob: float | None
) -> TranslationTable:
    _check_bitext(bitext)
    if null_prob is not None and not 0.0 < null_prob < 1.0:
        raise ValueError("null_prob must lie in (0, 1)")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if tension < 0:
        raise ValueError("tension must be >= 0")
    probs = _init_table(bitext)
    history = [_log_likelihood(probs, bitext, tension, null_prob)]
    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        for src, tgt in bitext:
            sources = list(src) + [NULL]
            m, n = len(src), len(tgt)
            for j, t in enumerate(tgt):
                w = _position_weights(m, j, n, tension, null_prob)
                scores = [w[i] * probs[s].get(t, 0.0) for i, s in enumerate(sources)]
                z = sum(scores)
                if z == 0.0:
                    continue
                for s, sc in zip(sources, scores):
                    counts[s][t] += sc / z
        probs = {}
        for s in sorted(counts):
            row = counts[s]
            z = sum(row.values())
            probs[s] = {t: c / z for t, c in sorted(row.items()) if c > 0}
        history.append(_log_likelihood(probs, bitext, tension, null_prob))
    return TranslationTable(probs, history, null_prob)


def train_model1(
    bitext: Sequence[SentencePair], iterations: int = 5, null_prob: float | None = DEFAULT_NULL_PROB
) -> TranslationTable:
    """IBM Model 1 EM.

    The NULL word has its own translation row, re-estimated like any source
    word; only its share of the alignment prior is fixed.  ``log_likelihoods``
    holds the corpus log-likelihood before the first iteration and after each.
    """
    return _em(bitext, iterations, 0.0, null_prob)


def train_diag(
    bitext: Sequence[SentencePair],
    iterations: int = 5,
    tension: float = 4.0,
    null_prob: float | None = DEFAULT_NULL_PROB,
) -> DiagonalModel:
    """EM with a fixed diagonal position prior multiplied into the Model 1 posterior."""
    return DiagonalModel(_em(bitext, iterations, tension, null_prob), tension, null_prob)


def posteriors(model: TranslationTable | DiagonalModel, src: Sequence[str], tgt: Sequence[str], j: int) -> list[float]:
    """Unnormalized alignment scores of target position j over [source..., NULL]."""
    tension = model.tension if isinstance(model, DiagonalModel) else 0.0
    w = _position_weights(len(src), j, len(tgt), tension, model.null_prob)
    t = tgt[j]
    return [w[i] * model.prob(t, s) for i, s in enumerate(list(src) + [NULL])]


def viterbi_align(model: TranslationTable | DiagonalModel, pair: SentencePair) -> Alignment:
    """Best source position per target token.  NULL sits after the real
    positions, so an exact tie prefers a real link; ties among real positions
    go to the smallest index."""
    src, tgt = pair
    links = set()
    for j in range(len(tgt)):
        scores = posteriors(model, src, tgt, j)
        best = max(range(len(scores)), key=lambda i: (scores[i], -i))
        if best < len(src) and scores[best] > 0:
            links.add((best, j))
    return frozenset(links)


def invert(alignment: Iterable[tuple[int, int]]) -> Alignment:
    return frozenset((j, i) for i, j in alignment)


def _check_bounds(alignment, src_len: int, tgt_len: int) -> None:
    for i, j in alignment:
        if not (0 <= i < src_len and 0 <= j < tgt_len):
            raise IndexError(f"link {i}-{j} outside a {src_len}x{tgt_len} sentence pair")


def symmetrize(
    forward: Iterable[tuple[int, int]],
    reverse: Iterable[tuple[int, int]],
    heuristic: str = "grow-diag-final-and",
    src_len: int | None = None,
    tgt_len: int | None = None,
) -> Alignment:
    """Combine two directional alignments, both given as (source, target) links."""
    fwd, rev = frozenset(forward), frozenset(reverse)
    union = fwd | rev
    if src_len is None:
        src_len = max((i for i, _ in union), default=-1) + 1
    if tgt_len is None:
        tgt_len = max((j for _, j in union), default=-1) + 1
    _check_bounds(union, src_len, tgt_len)
    if heuristic == "intersection":
        return fwd & rev
    if heuristic == "union":
        return union
    if heuristic != "grow-diag-final-and":
        raise ValueError(f"unknown heuristic {heuristic!r}; expected one of {HEURISTICS}")

    alignment = set(fwd & rev)
    src_aligned = {i for i, _ in alignment}
    tgt_aligned = {j for _, j in alignment}

    def add(i, j):
        alignment.add((i, j))
        src_aligned.add(i)
        tgt_aligned.add(j)

    # grow-diag: repeat sweeps until a sweep adds nothing
    added = True
    while added:
        added = False
        for i in range(src_len):
            for j in range(tgt_len):
                if (i, j) not in alignment:
                    continue
                for di, dj in _NEIGHBOURS:
                    ni, nj = i + di, j + dj
                    if (ni, nj) in union and (ni, nj) not in alignment and (
                        ni not in src_aligned or nj not in tgt_aligned
                    ):
                        add(ni, nj)
                        added = True
    # final-and: each direction in turn, only links joining two unaligned words
    for direction in (fwd, rev):
        for i in range(src_len):
            for j in range(tgt_len):
                if (i, j) in direction and i not in src_aligned and j not in tgt_aligned:
                    add(i, j)
    return frozenset(alignment)


def format_pharaoh(alignment: Iterable[tuple[int, int]]) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(alignment))


def parse_pharaoh(line: str) -> Alignment:
    links = set()
    for item in line.split():
        i, sep, j = item.partition("-")
        if not sep:
            raise ValueError(f"malformed alignment link {item!r}")
        links.add((int(i), int(j)))
    return frozenset(links)
