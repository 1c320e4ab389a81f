"""Character n-gram Naive Bayes language identifier."""

from __future__ import annotations

import json
import math
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping

DEFAULT_ORDERS = (1, 2, 3)


def char_ngrams(text: str, orders=DEFAULT_ORDERS) -> Counter[str]:
    padded = f" {text} "
    grams: Counter[str] = Counter()
    for n in orders:
        for i in range(len(padded) - n + 1):
            grams[padded[i:i + n]] += 1
    return grams


class LangId:
    """Multinomial NB over character n-grams with add-one smoothing.

    The vocabulary is shared across languages, plus one slot for unseen grams.
    """

    def __init__(self, profiles: Mapping[str, Mapping[str, int]], orders=DEFAULT_ORDERS):
        if len(profiles) < 2:
            raise ValueError("need at least two language profiles")
        self.orders = tuple(orders)
        self.profiles = {lang: dict(c) for lang, c in sorted(profiles.items())}
        vocab = set()
        for c in self.profiles.values():
            vocab.update(c)
        v = len(vocab) + 1
        self._logp = {}
        self._unseen = {}
        for lang, c in self.profiles.items():
            denom = sum(c.values()) + v
            self._logp[lang] = {g: math.log((k + 1) / denom) for g, k in c.items()}
            self._unseen[lang] = math.log(1 / denom)

    @classmethod
    def train(cls, texts: Mapping[str, Iterable[str]], orders=DEFAULT_ORDERS) -> "LangId":
        profiles = {}
        for lang, lines in texts.items():
            c: Counter[str] = Counter()
            for line in lines:
                c.update(char_ngrams(line, orders))
            profiles[lang] = c
        return cls(profiles, orders)

    @property
    def languages(self) -> list[str]:
        return list(self.profiles)

    def log_likelihood(self, text: str, lang: str) -> float:
        table, unseen = self._logp[lang], self._unseen[lang]
        return sum(k * table.get(g, unseen) for g, k in char_ngrams(text, self.orders).items())

    def log_odds(self, text: str, lang: str, other: str) -> float:
        """Per-n-gram log-likelihood ratio of `lang` over `other`; 0 for empty text."""
        if not text:
            return 0.0
        n = sum(char_ngrams(text, self.orders).values())
        return (self.log_likelihood(text, lang) - self.log_likelihood(text, other)) / n

    def classify(self, text: str) -> str:
        return max(self.languages, key=lambda lang: (self.log_likelihood(text, lang), lang))

    def dumps(self) -> str:
        return json.dumps(
            {"orders": list(self.orders), "profiles": {k: dict(sorted(v.items())) for k, v in self.profiles.items()}},
            ensure_ascii=False, sort_keys=True,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LangId":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["profiles"], data["orders"])
