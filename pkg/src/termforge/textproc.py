"""Normalization, tokenization, truecasing and byte-pair encoding.

Every other module consumes text through these functions, so all of them are
deterministic and the models they produce are immutable once trained.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

Token = str

# Typographic punctuation folded to ASCII by normalize().
PUNCT_TABLE: dict[str, str] = {
    "«": '"',  # «
    "»": '"',  # »
    "“": '"',
    "”": '"',
    "„": '"',  # „
    "‟": '"',
    "″": '"',
    "‹": "'",  # ‹
    "›": "'",  # ›
    "‘": "'",
    "’": "'",
    "‚": "'",
    "‛": "'",
    "′": "'",
    "´": "'",
    "‐": "-",
    "‑": "-",
    "‒": "-",
    "–": "-",  # en dash
    "—": "-",  # em dash
    "―": "-",
    "−": "-",  # minus sign
    "…": "...",
}
_PUNCT_TRANS = str.maketrans(PUNCT_TABLE)
_WS_RE = re.compile(r"\s+")

# Detokenization: no space before these, no space after those.
_NO_SPACE_BEFORE = frozenset(",.;:!?)]}%")
_NO_SPACE_AFTER = frozenset("([{")


class TextDecodeError(ValueError):
    """Raised when input bytes are not valid UTF-8."""

    def __init__(self, offset: int, reason: str):
        super().__init__(f"invalid UTF-8 at byte offset {offset}: {reason}")
        self.offset = offset


def normalize(text: str | bytes) -> str:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as err:
            raise TextDecodeError(err.start, err.reason) from None
    text = unicodedata.normalize("NFC", text)
    text = unicodedata.normalize("NFC", text.translate(_PUNCT_TRANS))
    return _WS_RE.sub(" ", text).strip()


def is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def _glued(chunk: str, i: int) -> bool:
    """True if the punctuation char at chunk[i] stays inside its word."""
    if i == 0 or i == len(chunk) - 1:
        return False
    prev, ch, nxt = chunk[i - 1], chunk[i], chunk[i + 1]
    if ch == "-":
        return prev.isalnum() and nxt.isalnum()
    if ch in ".,":
        return prev.isdigit() and nxt.isdigit()
    return False


def tokenize(text: str) -> list[Token]:
    """Split on whitespace, then detach punctuation characters.

    Hyphens between alphanumerics ("Dupont-Aignan") and decimal separators
    between digits ("1,701", "3.5") stay attached.
    """
    tokens: list[Token] = []
    for chunk in text.split():
        word: list[str] = []
        for i, ch in enumerate(chunk):
            if is_punct(ch) and not _glued(chunk, i):
                if word:
                    tokens.append("".join(word))
                    word = []
                tokens.append(ch)
            else:
                word.append(ch)
        if word:
            tokens.append("".join(word))
    return tokens


def detokenize(tokens: Sequence[Token]) -> str:
    out: list[str] = []
    for i, tok in enumerate(tokens):
        if i > 0 and tok not in _NO_SPACE_BEFORE and tokens[i - 1] not in _NO_SPACE_AFTER:
            out.append(" ")
        out.append(tok)
    return "".join(out)


def preprocess(line: str) -> list[Token]:
    return tokenize(normalize(line))


# ---------------------------------------------------------------------------
# Truecasing


@dataclass(frozen=True)
class TruecaseModel:
    casing_map: Mapping[str, tuple[str, int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.casing_map)

    def best(self, token: Token) -> Token | None:
        entry = self.casing_map.get(token.lower())
        return entry[0] if entry else None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def dumps(self) -> str:
        return "".join(
            f"{low}\t{cased}\t{count}\n"
            for low, (cased, count) in sorted(self.casing_map.items())
        )

    @classmethod
    def load(cls, path: str | Path) -> "TruecaseModel":
        casing: dict[str, tuple[str, int]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
                low, cased, count = parts
                if cased.lower() != low or int(count) < 1:
                    raise ValueError(f"{path}:{lineno}: inconsistent truecase entry")
                casing[low] = (cased, int(count))
        return cls(casing)


def truecase_train(corpus: Iterable[Sequence[Token]]) -> TruecaseModel:
    """Most frequent surface form per lowercased word, ignoring sentence-initial tokens."""
    counts: dict[str, Counter[str]] = defaultdict(Counter)
    for sentence in corpus:
        for tok in sentence[1:]:
            counts[tok.lower()][tok] += 1
    casing = {}
    for low, forms in counts.items():
        cased, n = min(forms.items(), key=lambda kv: (-kv[1], kv[0]))
        casing[low] = (cased, n)
    return TruecaseModel(dict(sorted(casing.items())))


def truecase_apply(model: TruecaseModel, sentence: Sequence[Token]) -> list[Token]:
    out = list(sentence)
    if out:
        best = model.best(out[0])
        if best is not None:
            out[0] = best
    return out


# ---------------------------------------------------------------------------
# Byte-pair encoding

EOW = "</w>"
BPE_HEADER = "#bpe-v1"


@dataclass(frozen=True)
class BpeModel:
    merges: tuple[tuple[str, str], ...]
    end_of_word_marker: str = EOW

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge in BPE model")

    @property
    def ranks(self) -> dict[tuple[str, str], int]:
        return {pair: i for i, pair in enumerate(self.merges)}

    def dumps(self) -> str:
        return BPE_HEADER + "\n" + "".join(f"{a} {b}\n" for a, b in self.merges)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "BpeModel":
        lines = text.split("\n")
        if not lines or lines[0] != BPE_HEADER:
            raise ValueError(f"missing {BPE_HEADER} header")
        merges = []
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'left right'")
            merges.append((parts[0], parts[1]))
        return cls(tuple(merges))

    @classmethod
    def load(cls, path: str | Path) -> "BpeModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _check_word(word: str, marker: str = EOW) -> None:
    if marker in word:
        raise ValueError(f"word {word!r} contains the reserved marker {marker!r}")
    if not word:
        raise ValueError("empty word")


def _merge_pair(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    """Replace occurrences of `pair`, scanning left to right without overlap."""
    a, b = pair
    out: list[str] = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def _pairs(symbols: tuple[str, ...]) -> Counter[tuple[str, str]]:
    return Counter(zip(symbols, symbols[1:]))


def bpe_learn(corpus: Mapping[str, int], n_merges: int) -> BpeModel:
    """Greedy most-frequent-pair merging.

    Pair statistics count every adjacent position (so "aaab" holds ("a", "a")
    twice); ties go to the lexicographically smallest pair; learning stops once
    the best pair occurs fewer than two times.
    """
    if n_merges < 0:
        raise ValueError("n_merges must be >= 0")
    words: list[tuple[str, ...]] = []
    freqs: list[int] = []
    for word, freq in sorted(corpus.items()):
        _check_word(word)
        if freq <= 0:
            continue
        words.append(tuple(word) + (EOW,))
        freqs.append(freq)

    stats: Counter[tuple[str, str]] = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for idx, syms in enumerate(words):
        for pair, c in _pairs(syms).items():
            stats[pair] += c * freqs[idx]
            where[pair].add(idx)

    merges: list[tuple[str, str]] = []
    while len(merges) < n_merges and stats:
        best, count = min(stats.items(), key=lambda kv: (-kv[1], kv[0]))
        if count < 2:
            break
        merges.append(best)
        for idx in sorted(where.pop(best, ())):
            old = words[idx]
            new = _merge_pair(old, best)
            if new == old:
                continue
            for pair, c in _pairs(old).items():
                stats[pair] -= c * freqs[idx]
                if stats[pair] <= 0:
                    del stats[pair]
                    where.pop(pair, None)
                elif pair != best:
                    where[pair].discard(idx)
            for pair, c in _pairs(new).items():
                stats[pair] += c * freqs[idx]
                where[pair].add(idx)
            words[idx] = new
        stats.pop(best, None)
    return BpeModel(tuple(merges))


class _Segmenter:
    def __init__(self, model: BpeModel):
        self.ranks = model.ranks
        self.cache: dict[str, tuple[str, ...]] = {}

    def __call__(self, word: str) -> tuple[str, ...]:
        hit = self.cache.get(word)
        if hit is not None:
            return hit
        _check_word(word)
        symbols = tuple(word) + (EOW,)
        ranks = self.ranks
        while len(symbols) > 1:
            ranked = [(ranks[p], p) for p in zip(symbols, symbols[1:]) if p in ranks]
            if not ranked:
                break
            symbols = _merge_pair(symbols, min(ranked)[1])
        self.cache[word] = symbols
        return symbols


def bpe_apply(model: BpeModel, sentence: Sequence[Token]) -> list[Token]:
    """Segment each token; the final symbol of every word carries the end-of-word marker."""
    seg = _Segmenter(model)
    out: list[Token] = []
    for tok in sentence:
        out.extend(seg(tok))
    return out


def bpe_decode(symbols: Sequence[Token]) -> list[Token]:
    words: list[Token] = []
    buf: list[str] = []
    for sym in symbols:
        if sym.endswith(EOW):
            buf.append(sym[: -len(EOW)])
            words.append("".join(buf))
            buf = []
        else:
            buf.append(sym)
    if buf:
        raise ValueError("symbol sequence ends inside a word (missing end-of-word marker)")
    return words


def word_frequencies(corpus: Iterable[Sequence[Token]]) -> Counter[str]:
    freqs: Counter[str] = Counter()
    for sentence in corpus:
        freqs.update(sentence)
    return freqs
