"""Interpolated absolute-discounting n-gram models and Moore-Lewis selection.

An interpolated absolute-discounting model is exactly representable as a
backoff table: a seen n-gram stores its full interpolated probability, and an
unseen continuation of a seen context costs ``backoff(context)`` times the
lower-order probability.  Models are compiled to that form at training time,
which makes the text serialization lossless.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

log = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
MODEL_HEADER = "#ngram-lm-v1"
DEFAULT_DISCOUNT = 0.4
DEFAULT_ORDER = 3

Context = tuple[str, ...]


@dataclass(frozen=True)
class NGramModel:
    order: int
    discount: float
    vocab: frozenset[str]
    logprobs: dict[Context, float]  # full n-gram (context + token) -> ln p
    backoffs: dict[Context, float]  # seen context -> ln lambda(context)

    def predictable(self) -> list[str]:
        """The outcome space: training vocabulary plus UNK and EOS."""
        return sorted(self.vocab) + [UNK, EOS]

    def logprob(self, token: str, context: Sequence[str]) -> float:
        if token not in self.vocab and token != EOS:
            token = UNK
        ctx = tuple(context)[len(context) - (self.order - 1):] if self.order > 1 else ()
        ctx = tuple(c if c in self.vocab or c == BOS else UNK for c in ctx)
        total = 0.0
        while True:
            lp = self.logprobs.get(ctx + (token,))
            if lp is not None:
                return total + lp
            total += self.backoffs.get(ctx, 0.0)
            if not ctx:
                # Only reachable for a token absent from every level.
                raise KeyError(token)
            ctx = ctx[1:]

    def prob(self, token: str, context: Sequence[str]) -> float:
        return math.exp(self.logprob(token, context))

    def dumps(self) -> str:
        lines = [f"{MODEL_HEADER}\torder={self.order}\tdiscount={self.discount!r}"]
        for ngram in sorted(self.logprobs, key=lambda g: (len(g), g)):
            bo = self.backoffs.get(ngram)
            lines.append(
                "\t".join([" ".join(ngram), repr(self.logprobs[ngram]), "" if bo is None else repr(bo)])
            )
        # Contexts that back off but were never scored themselves (e.g. BOS prefixes).
        for ctx in sorted(set(self.backoffs) - set(self.logprobs), key=lambda g: (len(g), g)):
            lines.append("\t".join([" ".join(ctx) if ctx else "", "", repr(self.backoffs[ctx])]))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NGramModel":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        head = lines[0].split("\t")
        if head[0] != MODEL_HEADER:
            raise ValueError(f"{path}: not a {MODEL_HEADER} file")
        params = dict(kv.split("=", 1) for kv in head[1:])
        logprobs: dict[Context, float] = {}
        backoffs: dict[Context, float] = {}
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected ngram<TAB>logprob<TAB>backoff")
            gram = tuple(parts[0].split(" ")) if parts[0] else ()
            if parts[1]:
                logprobs[gram] = float(parts[1])
            if parts[2]:
                backoffs[gram] = float(parts[2])
        vocab = frozenset(g[0] for g in logprobs if len(g) == 1 and g[0] not in (UNK, EOS))
        return cls(int(params["order"]), float(params["discount"]), vocab, logprobs, backoffs)


def _padded(sentence: Sequence[str], order: int) -> list[str]:
    return [BOS] * (order - 1) + list(sentence) + [EOS]


def lm_train(
    corpus: Iterable[Sequence[str]], order: int = DEFAULT_ORDER, discount: float = DEFAULT_DISCOUNT
) -> NGramModel:
    """p(w|c) = max(n(c,w) - d, 0) / n(c) + d * N1+(c.) / n(c) * p(w|c[1:]),
    bottoming out in a uniform distribution over vocab + UNK + EOS."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    counts: list[dict[Context, Counter[str]]] = [defaultdict(Counter) for _ in range(order)]
    vocab: set[str] = set()
    n_sentences = 0
    for sentence in corpus:
        n_sentences += 1
        for tok in sentence:
            if tok in (BOS, EOS, UNK):
                raise ValueError(f"reserved token {tok!r} in training data")
        vocab.update(sentence)
        padded = _padded(sentence, order)
        for pos in range(order - 1, len(padded)):
            w = padded[pos]
            for k in range(order):  # k = context length
                counts[k][tuple(padded[pos - k:pos])][w] += 1
    if n_sentences == 0:
        raise ValueError("empty training corpus")

    outcomes = sorted(vocab) + [UNK, EOS]
    uniform = -math.log(len(outcomes))
    logprobs: dict[Context, float] = {}
    backoffs: dict[Context, float] = {}
    # lower[k] gives ln p for every outcome under contexts of length k; built bottom-up.
    for k in range(order):
        for ctx, followers in counts[k].items():
            total = sum(followers.values())
            lam = discount * len(followers) / total
            backoffs[ctx] = math.log(lam)
            for w, c in followers.items():
                lower = _lookup(logprobs, backoffs, ctx[1:], w, uniform) if k else uniform
                p = (c - discount) / total + lam * math.exp(lower)
                logprobs[ctx + (w,)] = math.log(p)
        if k == 0:
            lam0 = math.exp(backoffs[()])
            for w in outcomes:
                if (w,) not in logprobs:
                    logprobs[(w,)] = math.log(lam0) + uniform
            del backoffs[()]
    return NGramModel(order, discount, frozenset(vocab), logprobs, backoffs)


def _lookup(logprobs, backoffs, ctx: Context, w: str, uniform: float) -> float:
    total = 0.0
    while True:
        lp = logprobs.get(ctx + (w,))
        if lp is not None:
            return total + lp
        total += backoffs.get(ctx, 0.0)
        if not ctx:
            return total + uniform
        ctx = ctx[1:]


def cross_entropy(model: NGramModel, sentence: Sequence[str]) -> float:
    """Per-token cross-entropy in nats, counting the EOS transition."""
    padded = _padded(sentence, model.order)
    n = model.order - 1
    total = 0.0
    for pos in range(n, len(padded)):
        total += model.logprob(padded[pos], padded[pos - n:pos])
    return -total / (len(sentence) + 1)


def moore_lewis(in_lm: NGramModel, out_lm: NGramModel, sentence: Sequence[str]) -> float:
    """In-domain minus out-of-domain cross-entropy; lower means more in-domain."""
    return cross_entropy(in_lm, sentence) - cross_entropy(out_lm, sentence)


def select_top(
    corpus: Iterable[str],
    in_lm: NGramModel,
    out_lm: NGramModel,
    n: int,
    tokenize: Callable[[str], Sequence[str]] = str.split,
) -> list[str]:
    """The `n` lines with the lowest Moore-Lewis score, in their original order."""
    if n < 0:
        raise ValueError("N must be >= 0")
    lines = list(corpus)
    if n > len(lines):
        log.warning("requested top %d of a %d-line corpus; returning all lines", n, len(lines))
    ranked = sorted(
        (moore_lewis(in_lm, out_lm, tokenize(line)), idx) for idx, line in enumerate(lines)
    )
    keep = sorted(idx for _, idx in ranked[:n])
    return [lines[i] for i in keep]
