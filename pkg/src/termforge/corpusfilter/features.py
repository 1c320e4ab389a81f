"""Monolingual and bilingual sentence-pair features.

Every feature is finite for any input, including empty sides.  The order of
FEATURE_NAMES is the column order of feature matrices and TSV files.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..ngram_lm import NGramModel, cross_entropy
from ..textproc import is_punct
from .langid import LangId

FEATURE_NAMES = (
    "total_len",
    "len_ratio",
    "avg_tok_len",
    "upper_cmp",
    "punct_cmp",
    "num_cmp",
    "langid_src",
    "langid_tgt",
    "cognate",
    "lm_src",
    "lm_tgt",
    "zipporah",
    "hunalign",
)
ZIPPORAH_EPS = 1e-6
HUNALIGN_SIGMA = 0.5
COGNATE_PREFIX = 4

_NUMBER_RE = re.compile(r"[0-9]+(?:[.,][0-9]+)*")

Dictionary = Mapping[str, Mapping[str, float]]  # source word -> {target word: p(target|source)}


@dataclass(frozen=True)
class Resources:
    src_lm: NGramModel
    tgt_lm: NGramModel
    dictionary: Dictionary
    reverse_dictionary: Dictionary
    langid: LangId
    src_lang: str
    tgt_lang: str

    def swapped(self) -> "Resources":
        return replace(
            self,
            src_lm=self.tgt_lm,
            tgt_lm=self.src_lm,
            dictionary=self.reverse_dictionary,
            reverse_dictionary=self.dictionary,
            src_lang=self.tgt_lang,
            tgt_lang=self.src_lang,
        )


def multiset_jaccard(a: Counter, b: Counter) -> float:
    """|a ∩ b| / |a ∪ b| on multisets; two empty multisets are identical (1.0)."""
    union = sum((a | b).values())
    if union == 0:
        return 1.0
    return sum((a & b).values()) / union


def _punct(tokens: Sequence[str]) -> Counter:
    return Counter(ch for tok in tokens for ch in tok if is_punct(ch))


def _numbers(tokens: Sequence[str]) -> Counter:
    return Counter(tok for tok in tokens if _NUMBER_RE.fullmatch(tok))


def _upper(tokens: Sequence[str]) -> int:
    return sum(ch.isupper() for tok in tokens for ch in tok)


def cognate_ratio(src: Sequence[str], tgt: Sequence[str], prefix: int = COGNATE_PREFIX) -> float:
    """Share of source tokens with a target token sharing the same lowercased
    `prefix`-character start (shorter tokens must match whole)."""
    if not src:
        return 0.0
    heads = {t.lower()[:prefix] for t in tgt}
    return sum(s.lower()[:prefix] in heads for s in src) / len(src)


def _translation_xent(src: Sequence[str], tgt: Sequence[str], dictionary: Dictionary) -> float:
    if not tgt:
        return 0.0
    total = 0.0
    for t in tgt:
        p = sum(dictionary.get(s, {}).get(t, 0.0) for s in src) / len(src) if src else 0.0
        total += math.log(p + ZIPPORAH_EPS)
    return -total / len(tgt)


def zipporah_score(src, tgt, dictionary: Dictionary, reverse_dictionary: Dictionary) -> float:
    """Bag-of-words translation cross-entropy, averaged over both directions:
    -(1/|t|) Σ_t log(Σ_s p(t|s)/|s| + ε).  Lower is more adequate."""
    return 0.5 * (
        _translation_xent(src, tgt, dictionary) + _translation_xent(tgt, src, reverse_dictionary)
    )


def hunalign_score(src, tgt, dictionary: Dictionary, reverse_dictionary: Dictionary) -> float:
    """Dictionary coverage of both sides times a Gaussian penalty on the log
    character-length ratio."""
    n = len(src) + len(tgt)
    if n == 0:
        return 0.0
    tgt_set, src_set = set(tgt), set(src)
    covered = sum(any(t in tgt_set for t in dictionary.get(s, ())) for s in src)
    covered += sum(any(s in src_set for s in reverse_dictionary.get(t, ())) for t in tgt)
    chars_s = sum(map(len, src))
    chars_t = sum(map(len, tgt))
    r = math.log((chars_s + 1) / (chars_t + 1))
    return covered / n * math.exp(-(r * r) / (2 * HUNALIGN_SIGMA ** 2))


def extract_features(src: Sequence[str], tgt: Sequence[str], resources: Resources) -> np.ndarray:
    r = resources
    n_s, n_t = len(src), len(tgt)
    n_chars = sum(map(len, src)) + sum(map(len, tgt))
    up_s, up_t = _upper(src), _upper(tgt)
    values = (
        float(n_s + n_t),
        max(1, n_s) / max(1, n_t),
        n_chars / max(1, n_s + n_t),
        abs(up_s - up_t) / max(1, up_s, up_t),
        multiset_jaccard(_punct(src), _punct(tgt)),
        multiset_jaccard(_numbers(src), _numbers(tgt)),
        r.langid.log_odds(" ".join(src), r.src_lang, r.tgt_lang),
        r.langid.log_odds(" ".join(tgt), r.tgt_lang, r.src_lang),
        cognate_ratio(src, tgt),
        cross_entropy(r.src_lm, src),
        cross_entropy(r.tgt_lm, tgt),
        zipporah_score(src, tgt, r.dictionary, r.reverse_dictionary),
        hunalign_score(src, tgt, r.dictionary, r.reverse_dictionary),
    )
    return np.array(values, dtype=float)


def feature_matrix(pairs: Iterable[tuple[Sequence[str], Sequence[str]]], resources: Resources) -> np.ndarray:
    rows = [extract_features(s, t, resources) for s, t in pairs]
    if not rows:
        return np.zeros((0, len(FEATURE_NAMES)))
    return np.vstack(rows)


def save_features(matrix: np.ndarray, path: str | Path) -> None:
    lines = ["\t".join(FEATURE_NAMES)]
    lines += ["\t".join(repr(float(v)) for v in row) for row in matrix]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_features(path: str | Path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split("\t")) != FEATURE_NAMES:
        raise ValueError(f"{path}: missing or unexpected feature header")
    rows = [[float(v) for v in line.split("\t")] for line in lines[1:] if line]
    return np.array(rows, dtype=float).reshape(len(rows), len(FEATURE_NAMES))
