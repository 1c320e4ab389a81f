"""Beam search and lexically constrained beam search with dynamic beam allocation.

The target-side constraints are compiled into an Aho-Corasick automaton.  A
hypothesis carries an immutable :class:`ConstraintState` (the automaton node
plus the set of constraints already produced), and candidates are grouped into
banks by how many constraint tokens they have covered.  The beam is split
across the non-empty banks so that hypotheses which have made progress on the
constraints are never crowded out by higher-scoring unconstrained ones.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Protocol, Sequence

from .align import NULL, TranslationTable
from .ngram_lm import BOS, EOS, UNK, NGramModel

log = logging.getLogger(__name__)

# Log-probability given to a forced constraint token the scorer does not know.
FORCED_OOV_LOGPROB = -30.0
DISTRIBUTION_TOL = 1e-6


class DecodeError(RuntimeError):
    pass


class InfeasibleConstraints(DecodeError):
    pass


class Scorer(Protocol):
    def next_logprobs(self, source: Sequence[str], prefix: Sequence[str]) -> Mapping[str, float]:
        """Log-probabilities over the target vocabulary plus EOS."""


# ---------------------------------------------------------------------------
# Constraint tracking


class ConstraintTrie:
    """Aho-Corasick automaton over the token sequences of a constraint list."""

    def __init__(self, constraints: Sequence[Sequence[str]]):
        uniq: list[tuple[str, ...]] = []
        for c in constraints:
            c = tuple(c)
            if not c:
                raise ValueError("empty constraint")
            if c not in uniq:
                uniq.append(c)
        self.constraints = tuple(uniq)
        self.total_tokens = sum(len(c) for c in uniq)

        self.children: list[dict[str, int]] = [{}]
        self.depth = [0]
        self.terminal: list[int | None] = [None]
        for cid, phrase in enumerate(uniq):
            node = 0
            for tok in phrase:
                nxt = self.children[node].get(tok)
                if nxt is None:
                    nxt = len(self.children)
                    self.children[node][tok] = nxt
                    self.children.append({})
                    self.depth.append(self.depth[node] + 1)
                    self.terminal.append(None)
                node = nxt
            self.terminal[node] = cid

        # failure links and, per node, every constraint ending there or at a suffix
        self.fail = [0] * len(self.children)
        self.outputs: list[frozenset[int]] = [frozenset()] * len(self.children)
        # constraints for which a node is a proper prefix (or the whole phrase)
        self.prefix_of: list[set[int]] = [set() for _ in self.children]
        for cid, phrase in enumerate(uniq):
            node = 0
            for tok in phrase:
                node = self.children[node][tok]
                self.prefix_of[node].add(cid)
        order = deque(self.children[0].values())
        while order:
            node = order.popleft()
            own = {self.terminal[node]} if self.terminal[node] is not None else set()
            self.outputs[node] = frozenset(own | self.outputs[self.fail[node]])
            for tok, child in self.children[node].items():
                f = self.fail[node]
                while f and tok not in self.children[f]:
                    f = self.fail[f]
                self.fail[child] = self.children[f].get(tok, 0) if node else 0
                order.append(child)

    def step(self, node: int, token: str) -> int:
        while node and token not in self.children[node]:
            node = self.fail[node]
        return self.children[node].get(token, 0)

    def chain(self, node: int):
        while node:
            yield node
            node = self.fail[node]


@dataclass(frozen=True)
class ConstraintState:
    trie: ConstraintTrie = field(compare=False, repr=False)
    node: int = 0
    satisfied: frozenset[int] = frozenset()

    @property
    def tokens_met(self) -> int:
        """Tokens of fully produced constraints (credit on completion)."""
        return sum(len(self.trie.constraints[c]) for c in self.satisfied)

    @property
    def partial_depth(self) -> int:
        """Length of the longest current suffix that is a prefix of an unmet constraint."""
        for n in self.trie.chain(self.node):
            if self.trie.prefix_of[n] - self.satisfied:
                return self.trie.depth[n]
        return 0

    @property
    def bank(self) -> int:
        """Bank index: completed tokens plus the in-progress partial match."""
        return self.tokens_met + self.partial_depth

    @property
    def all_met(self) -> bool:
        return len(self.satisfied) == len(self.trie.constraints)

    def forced_tokens(self) -> list[str]:
        """Tokens that advance some unmet constraint from this state."""
        unmet = set(range(len(self.trie.constraints))) - self.satisfied
        out = set()
        for n in list(self.trie.chain(self.node)) + [0]:
            for tok, child in self.trie.children[n].items():
                if self.trie.prefix_of[child] & unmet:
                    out.add(tok)
        return sorted(out)


def initial_state(constraints: Sequence[Sequence[str]]) -> ConstraintState:
    return ConstraintState(ConstraintTrie(constraints))


def advance_constraint_state(state: ConstraintState, token: str) -> ConstraintState:
    """Follow `token` in the automaton; constraints completed here (including
    ones ending at a suffix of the match) become satisfied for good."""
    trie = state.trie
    node = trie.step(state.node, token)
    done = trie.outputs[node]
    satisfied = state.satisfied | done if done - state.satisfied else state.satisfied
    return ConstraintState(trie, node, satisfied)


# ---------------------------------------------------------------------------
# Hypotheses


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[str, ...]
    score: float
    state: ConstraintState | None = None
    finished: bool = False
    # set when no hypothesis finished within max_len and a live one is returned
    warning: bool = field(default=False, compare=False)

    @property
    def length(self) -> int:
        """Decoding steps taken: output tokens plus the EOS step if finished."""
        return len(self.tokens) + (1 if self.finished else 0)

    @property
    def normalized_score(self) -> float:
        return self.score / self.length if self.length else self.score


def _rank_key(hyp: Hypothesis) -> tuple[float, tuple[str, ...]]:
    return (-hyp.score, hyp.tokens)


def _final_key(hyp: Hypothesis) -> tuple[float, tuple[str, ...]]:
    return (-hyp.normalized_score, hyp.tokens)


def _checked(dist: Mapping[str, float], step: int) -> Mapping[str, float]:
    total = math.fsum(math.exp(v) for v in dist.values())
    if abs(total - 1.0) > DISTRIBUTION_TOL or any(math.isnan(v) or v > 1e-12 for v in dist.values()):
        raise DecodeError(f"scorer returned a non-distribution at step {step} (mass {total!r})")
    return dist


def _pick(finished: list[Hypothesis], live: list[Hypothesis]) -> Hypothesis:
    if finished:
        return min(finished, key=_final_key)
    log.warning("no hypothesis finished within max_len; returning the best unfinished one")
    return replace(min(live, key=_final_key), warning=True)


def beam_search(
    scorer: Scorer, source: Sequence[str], beam: int = 5, max_len: int = 50, check: bool = True
) -> Hypothesis:
    """Length-capped beam search.

    Each step expands every live hypothesis with every token; the best `beam`
    candidates survive and those ending in EOS retire to the finished list.
    Hypotheses never exceed `max_len` output tokens.  The result is the
    finished hypothesis with the best per-step score (cumulative log-prob over
    length, EOS included); ties go to the lexicographically smaller output.
    """
    if beam < 1 or max_len < 1:
        raise ValueError("beam and max_len must be >= 1")
    live = [Hypothesis((), 0.0)]
    finished: list[Hypothesis] = []
    step = 0
    while live:
        candidates = []
        for hyp in live:
            dist = scorer.next_logprobs(source, hyp.tokens)
            if check:
                _checked(dist, step)
            for tok, lp in dist.items():
                if tok == EOS:
                    candidates.append(Hypothesis(hyp.tokens, hyp.score + lp, None, True))
                elif len(hyp.tokens) < max_len:
                    candidates.append(Hypothesis(hyp.tokens + (tok,), hyp.score + lp))
        if not candidates:
            break
        survivors = heapq.nsmallest(beam, candidates, key=_rank_key)
        finished.extend(h for h in survivors if h.finished)
        live = [h for h in survivors if not h.finished]
        step += 1
    return _pick(finished, live)


def allocate(bank_sizes: Mapping[int, int], beam: int) -> dict[int, int]:
    """Split `beam` slots across non-empty banks as evenly as possible, the
    remainder going to the highest banks; slots a bank cannot fill are handed
    on to the other banks, highest first."""
    banks = sorted(b for b, n in bank_sizes.items() if n > 0)
    if not banks:
        return {}
    if len(banks) > beam:
        return {b: 1 for b in banks[-beam:]}
    base, rem = divmod(beam, len(banks))
    alloc = {b: base + (1 if i >= len(banks) - rem else 0) for i, b in enumerate(banks)}
    spare = 0
    for b in banks:
        if alloc[b] > bank_sizes[b]:
            spare += alloc[b] - bank_sizes[b]
            alloc[b] = bank_sizes[b]
    for b in reversed(banks):
        if spare == 0:
            break
        extra = min(spare, bank_sizes[b] - alloc[b])
        alloc[b] += extra
        spare -= extra
    return alloc


def constrained_beam_search(
    scorer: Scorer,
    source: Sequence[str],
    constraints: Sequence[Sequence[str]],
    beam: int = 20,
    max_len: int = 50,
    check: bool = True,
    trace: list | None = None,
) -> Hypothesis:
    """Dynamic beam allocation over banks of constraint progress.

    Candidates are every scorer continuation of every live hypothesis plus the
    tokens that advance an unmet constraint.  EOS is only allowed once every
    constraint has been produced.  With no constraints this is token-for-token
    the same search as :func:`beam_search`.  If `trace` is a list, the
    surviving hypotheses of each step are appended to it.
    """
    if beam < 1 or max_len < 1:
        raise ValueError("beam and max_len must be >= 1")
    start = initial_state(constraints)
    if start.trie.total_tokens > max_len:
        raise InfeasibleConstraints("constraints exceed length budget")

    live = [Hypothesis((), 0.0, start)]
    finished: list[Hypothesis] = []
    step = 0
    while live:
        banks: dict[int, list[Hypothesis]] = {}
        for hyp in live:
            dist = scorer.next_logprobs(source, hyp.tokens)
            if check:
                _checked(dist, step)
            for cand in _expand(hyp, dist, beam, max_len):
                banks.setdefault(cand.state.bank, []).append(cand)
        if not banks:
            break
        alloc = allocate({b: len(c) for b, c in banks.items()}, beam)
        survivors = []
        for b, slots in alloc.items():
            survivors.extend(heapq.nsmallest(slots, banks[b], key=_rank_key))
        survivors.sort(key=_rank_key)
        if trace is not None:
            trace.append(survivors)
        finished.extend(h for h in survivors if h.finished)
        live = [h for h in survivors if not h.finished]
        step += 1

    if not finished:
        live = [h for h in live if h.state.all_met]
        if not live:
            raise DecodeError("constrained search found no hypothesis satisfying all constraints")
    return _pick(finished, live)


def _expand(hyp: Hypothesis, dist: Mapping[str, float], beam: int, max_len: int):
    """Candidate continuations of one hypothesis.

    Tokens outside the automaton's current reach all lead to the same next
    state, hence the same bank; at most `beam` of them can survive, so only
    the best `beam` are generated.  This is exactly equivalent to expanding all.
    """
    state = hyp.state
    eos = dist.get(EOS)
    if eos is not None and state.all_met:
        yield Hypothesis(hyp.tokens, hyp.score + eos, state, True)
    if len(hyp.tokens) >= max_len:
        return
    trie = state.trie
    special: set[str] = set()
    for n in list(trie.chain(state.node)) + [0]:
        special.update(trie.children[n])
    forced = None
    for tok in sorted(special):
        lp = dist.get(tok)
        if lp is None:
            if forced is None:
                forced = set(state.forced_tokens())
            if tok not in forced:
                continue
            lp = FORCED_OOV_LOGPROB
        yield Hypothesis(hyp.tokens + (tok,), hyp.score + lp, advance_constraint_state(state, tok))
    reset = None
    plain = ((lp, tok) for tok, lp in dist.items() if tok != EOS and tok not in special)
    for lp, tok in heapq.nsmallest(beam, plain, key=lambda x: (-x[0], x[1])):
        if reset is None:
            reset = advance_constraint_state(state, tok)
        yield Hypothesis(hyp.tokens + (tok,), hyp.score + lp, reset)


# ---------------------------------------------------------------------------
# Toy scorer


class ToyScorer:
    """λ·p_LM(w | prefix) + (1-λ)·p_lex(w | source) over the target vocabulary + EOS.

    p_lex averages p(w|s) over the source tokens, with add-`smoothing` mass on
    every outcome so EOS stays reachable when λ = 0.
    """

    def __init__(
        self,
        lexicon: TranslationTable,
        target_lm: NGramModel,
        lm_weight: float = 0.5,
        smoothing: float = 1e-3,
    ):
        if not 0.0 <= lm_weight <= 1.0:
            raise ValueError("lm_weight (λ) must lie in [0, 1]")
        self.lexicon = lexicon
        self.lm = target_lm
        self.lm_weight = lm_weight
        self.smoothing = smoothing
        vocab = set(target_lm.vocab) | set(lexicon.target_vocab)
        vocab.discard(NULL)
        self.outcomes = sorted(vocab) + [EOS]
        self._lex_cache: dict[tuple[str, ...], dict[str, float]] = {}
        self._lm_cache: dict[tuple[str, ...], dict[str, float]] = {}

    def _lex(self, source: Sequence[str]) -> dict[str, float]:
        key = tuple(source)
        hit = self._lex_cache.get(key)
        if hit is None:
            raw = dict.fromkeys(self.outcomes, 0.0)
            srcs = [s for s in key if s in self.lexicon.probs]
            for s in srcs:
                for t, p in self.lexicon.probs[s].items():
                    if t in raw:
                        raw[t] += p / len(srcs)
            total = sum(raw.values()) + self.smoothing * len(self.outcomes)
            hit = {w: (v + self.smoothing) / total for w, v in raw.items()}
            self._lex_cache[key] = hit
        return hit

    def _lm(self, prefix: Sequence[str]) -> dict[str, float]:
        n = self.lm.order - 1
        ctx = tuple(([BOS] * n + list(prefix))[-n:]) if n else ()
        hit = self._lm_cache.get(ctx)
        if hit is None:
            raw = {w: self.lm.prob(w, ctx) for w in self.outcomes}
            z = sum(raw.values())
            hit = {w: p / z for w, p in raw.items()}
            self._lm_cache[ctx] = hit
        return hit

    def next_logprobs(self, source: Sequence[str], prefix: Sequence[str]) -> dict[str, float]:
        lam = self.lm_weight
        lex = self._lex(source)
        lm = self._lm(prefix)
        return {w: math.log(lam * lm[w] + (1.0 - lam) * lex[w]) for w in self.outcomes}


def toy_scorer(lexicon: TranslationTable, target_lm: NGramModel, lm_weight: float = 0.5) -> ToyScorer:
    return ToyScorer(lexicon, target_lm, lm_weight)
