"""Shared oracles for the test suite: a random scorer and exhaustive search."""

import itertools
import math
import random

from termforge.ngram_lm import EOS


class RandomScorer:
    """Deterministic random next-token distributions keyed on the last two
    prefix tokens, so the scorer has genuine context dependence."""

    def __init__(self, vocab, seed, context=2):
        self.outcomes = list(vocab) + [EOS]
        self.rng = random.Random(seed)
        self.context = context
        self.cache = {}

    def next_logprobs(self, source, prefix):
        key = tuple(prefix[-self.context:]) if self.context else ()
        if key not in self.cache:
            w = [self.rng.random() ** 2 + 1e-3 for _ in self.outcomes]
            z = sum(w)
            self.cache[key] = {t: math.log(x / z) for t, x in zip(self.outcomes, w)}
        return self.cache[key]


def contains(seq, phrase):
    phrase = tuple(phrase)
    k = len(phrase)
    return any(tuple(seq[i:i + k]) == phrase for i in range(len(seq) - k + 1))


def sequence_score(scorer, seq):
    s = 0.0
    for i in range(len(seq)):
        s += scorer.next_logprobs((), seq[:i])[seq[i]]
    return s + scorer.next_logprobs((), seq)[EOS]


def brute_force(scorer, vocab, max_len, constraints=()):
    """Argmax over every finished sequence of <= max_len tokens containing all
    constraints, by score / (tokens + EOS), ties to the smaller sequence."""
    best = None
    for n in range(max_len + 1):
        for seq in itertools.product(vocab, repeat=n):
            if not all(contains(seq, c) for c in constraints):
                continue
            key = (-sequence_score(scorer, seq) / (n + 1), seq)
            if best is None or key < best:
                best = key
    return None if best is None else best[1]


def full_beam(vocab_size, max_len):
    """A beam wide enough to never prune anything."""
    return 2 * sum(vocab_size ** k for k in range(max_len + 2))


def brute_force_boxes(n, m, links, max_len=7):
    """All consistent boxes by direct enumeration of the definition."""
    out = set()
    for s1 in range(n):
        for s2 in range(s1, min(n, s1 + max_len)):
            for t1 in range(m):
                for t2 in range(t1, min(m, t1 + max_len)):
                    inside = [(i, j) for i, j in links if s1 <= i <= s2 and t1 <= j <= t2]
                    if not inside:
                        continue
                    crossing = any(
                        (s1 <= i <= s2) != (t1 <= j <= t2) for i, j in links
                    )
                    if crossing:
                        continue
                    out.add((s1, s2, t1, t2))
    return out
