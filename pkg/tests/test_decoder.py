import math
import random

import pytest

from helpers import RandomScorer, brute_force, contains, full_beam, sequence_score
from termforge.align import TranslationTable
from termforge.decoder import (
    ConstraintTrie,
    DecodeError,
    InfeasibleConstraints,
    ToyScorer,
    advance_constraint_state,
    allocate,
    beam_search,
    constrained_beam_search,
    initial_state,
)
from termforge.ngram_lm import EOS, lm_train


class ForcedScorer:
    """Probability 1 on the next token of a fixed sequence, then EOS."""

    def __init__(self, seq):
        self.seq = list(seq)

    def next_logprobs(self, source, prefix):
        i = len(prefix)
        return {self.seq[i] if i < len(self.seq) else EOS: 0.0}


class TableScorer:
    """Fixed next-token table keyed on the previous token (None at the start)."""

    def __init__(self, table):
        self.table = table

    def next_logprobs(self, source, prefix):
        prev = prefix[-1] if prefix else None
        return {t: math.log(p) for t, p in self.table[prev].items()}


# constraint state

def walk(constraints, tokens):
    state = initial_state(constraints)
    out = []
    for tok in tokens:
        state = advance_constraint_state(state, tok)
        out.append(state)
    return out


def test_state_completion_credit():
    states = walk([["a", "b"]], ["a", "b"])
    assert [s.tokens_met for s in states] == [0, 2]
    assert [s.partial_depth for s in states] == [1, 0]
    assert [s.bank for s in states] == [1, 2]
    assert states[-1].all_met


def test_state_abort():
    (s1, s2) = walk([["a", "b"]], ["a", "c"])
    assert s2.tokens_met == 0 and s2.partial_depth == 0 and s2.node == 0


def test_state_overlap_via_failure_links():
    states = walk([["a", "b"], ["b", "c"]], ["a", "b", "c"])
    assert states[1].satisfied == {0}
    assert states[1].partial_depth == 1  # "b" also starts [b, c]
    assert states[2].all_met and states[2].tokens_met == 4


def test_state_suffix_fallback():
    # "a a b": the second "a" restarts the match rather than aborting it
    assert walk([["a", "b"]], ["a", "a", "b"])[-1].all_met
    # a constraint ending inside a longer match is credited too
    assert walk([["x", "b", "c"], ["b"]], ["x", "b"])[-1].satisfied == {1}


def test_satisfied_never_reactivated():
    states = walk([["a"]], ["a", "z", "z"])
    assert all(s.all_met for s in states)


def test_trie_dedup_and_errors():
    trie = ConstraintTrie([["a", "b"], ["a", "b"], ["c"]])
    assert trie.constraints == (("a", "b"), ("c",))
    assert trie.total_tokens == 3
    with pytest.raises(ValueError):
        ConstraintTrie([[]])


# allocation

def test_allocate():
    assert allocate({}, 5) == {}
    assert allocate({0: 10, 1: 10, 2: 10}, 10) == {0: 3, 1: 3, 2: 4}
    assert allocate({0: 10, 1: 10}, 5) == {0: 2, 1: 3}
    assert allocate({0: 100, 1: 1}, 10) == {0: 9, 1: 1}  # unused slots handed on
    assert allocate({0: 1, 1: 1, 2: 1, 3: 5}, 2) == {2: 1, 3: 1}
    assert allocate({0: 0, 2: 4}, 3) == {2: 3}


def test_allocate_never_exceeds_beam():
    rng = random.Random(0)
    for _ in range(500):
        sizes = {b: rng.randint(0, 6) for b in range(rng.randint(0, 6))}
        beam = rng.randint(1, 12)
        alloc = allocate(sizes, beam)
        assert sum(alloc.values()) == min(beam, sum(sizes.values()))
        assert all(0 <= alloc[b] <= sizes[b] for b in alloc)


# unconstrained search

@pytest.mark.parametrize("beam", [1, 3, 20])
def test_forced_sequence(beam):
    hyp = beam_search(ForcedScorer("abc"), (), beam, max_len=10)
    assert hyp.tokens == tuple("abc") and hyp.finished and hyp.score == 0.0


def greedy(scorer, max_len):
    seq = []
    while True:
        dist = scorer.next_logprobs((), seq)
        options = dist if len(seq) < max_len else {EOS: dist[EOS]}
        tok = max(options, key=lambda t: options[t])
        if tok == EOS:
            return tuple(seq)
        seq.append(tok)


@pytest.mark.parametrize("seed", range(30))
def test_beam_one_is_greedy(seed):
    scorer = RandomScorer(list("abcd"), seed)
    assert beam_search(scorer, (), 1, max_len=6).tokens == greedy(scorer, 6)


@pytest.mark.parametrize("seed", range(20))
def test_full_beam_matches_brute_force(seed):
    vocab = list("abc")
    scorer = RandomScorer(vocab, 100 + seed)
    hyp = beam_search(scorer, (), full_beam(3, 4), 4)
    assert hyp.tokens == brute_force(scorer, vocab, 4)
    assert hyp.score == pytest.approx(sequence_score(scorer, hyp.tokens))


def test_non_distribution_error():
    bad = TableScorer({None: {"a": 0.5, EOS: 0.2}})
    with pytest.raises(DecodeError, match="step 0"):
        beam_search(bad, (), 2, 3)
    with pytest.raises(DecodeError, match="step 0"):
        constrained_beam_search(bad, (), [["a"]], 2, 3)


def test_argument_errors():
    with pytest.raises(ValueError):
        beam_search(ForcedScorer("a"), (), 0, 3)
    with pytest.raises(ValueError):
        constrained_beam_search(ForcedScorer("a"), (), [], 1, 0)


# constrained search

def test_infeasible_budget():
    with pytest.raises(InfeasibleConstraints, match="constraints exceed length budget"):
        constrained_beam_search(ForcedScorer("a"), (), [["a", "b"], ["c"]], 5, max_len=2)
    # duplicates collapse before the budget check
    assert constrained_beam_search(ForcedScorer("a"), (), [["a"], ["a"]], 5, max_len=1).tokens == ("a",)


def test_terminology_constraint_wins_over_literal():
    # the scorer prefers the literal "gelbe Westen"; the constraint forces the term
    table = {
        None: {"die": 0.9, "gelbe": 0.05, "Gelbwesten": 0.01, "Westen": 0.02, EOS: 0.02},
        "die": {"gelbe": 0.9, "Gelbwesten": 0.02, "Westen": 0.03, "die": 0.01, EOS: 0.04},
        "gelbe": {"Westen": 0.95, "gelbe": 0.01, "die": 0.01, "Gelbwesten": 0.01, EOS: 0.02},
        "Westen": {EOS: 0.9, "die": 0.05, "gelbe": 0.02, "Westen": 0.02, "Gelbwesten": 0.01},
        "Gelbwesten": {EOS: 0.9, "die": 0.05, "gelbe": 0.02, "Westen": 0.02, "Gelbwesten": 0.01},
    }
    scorer = TableScorer(table)
    free = beam_search(scorer, (), 5, 6)
    forced = constrained_beam_search(scorer, (), [["Gelbwesten"]], 20, 6)
    assert free.tokens == ("die", "gelbe", "Westen")
    assert "Gelbwesten" in forced.tokens and forced.finished
    vocab = ["die", "gelbe", "Westen", "Gelbwesten"]
    assert forced.tokens == brute_force(scorer, vocab, 6, [["Gelbwesten"]])


def test_forced_token_unknown_to_scorer():
    hyp = constrained_beam_search(ForcedScorer("ab"), (), [["zz"]], 5, 4)
    assert contains(hyp.tokens, ["zz"])


def test_no_eos_returns_flagged_unfinished():
    scorer = TableScorer({None: {"a": 0.6, "b": 0.4}, "a": {"a": 0.6, "b": 0.4}, "b": {"a": 0.6, "b": 0.4}})
    hyp = constrained_beam_search(scorer, (), [["b"]], 4, max_len=3)
    assert hyp.warning and not hyp.finished and contains(hyp.tokens, ["b"])
    assert beam_search(scorer, (), 4, 3).warning


@pytest.mark.parametrize("seed", range(25))
def test_bank_accounting_and_scores(seed):
    rng = random.Random(seed)
    vocab = [f"w{i}" for i in range(8)]
    scorer = RandomScorer(vocab, seed)
    cons = [[rng.choice(vocab) for _ in range(rng.randint(1, 3))] for _ in range(rng.randint(1, 3))]
    beam = rng.randint(2, 10)
    trace = []
    hyp = constrained_beam_search(scorer, (), cons, beam, sum(map(len, cons)) + 4, trace=trace)
    assert all(contains(hyp.tokens, c) for c in cons)
    for step in trace:
        assert len(step) <= beam
        for h in step:
            st = h.state
            assert st.bank == st.tokens_met + st.partial_depth
            assert 0 <= st.tokens_met <= st.trie.total_tokens
            assert h.score <= 0 and math.isfinite(h.score)
            if h.finished:
                assert st.all_met
    assert hyp.score == pytest.approx(sequence_score(scorer, hyp.tokens))


@pytest.mark.parametrize("seed", range(15))
def test_constrained_matches_brute_force(seed):
    rng = random.Random(seed)
    vocab = list("abc")
    scorer = RandomScorer(vocab, 500 + seed)
    cons = [[rng.choice(vocab) for _ in range(rng.randint(1, 2))] for _ in range(rng.randint(1, 2))]
    got = constrained_beam_search(scorer, (), cons, full_beam(3, 5), 5).tokens
    assert got == brute_force(scorer, vocab, 5, cons)


def test_empty_constraints_reduce_to_beam_search():
    for seed in range(40):
        scorer = RandomScorer(list("abcdef"), seed)
        assert constrained_beam_search(scorer, (), [], 4, 7).tokens == beam_search(scorer, (), 4, 7).tokens


def test_deterministic():
    scorer = RandomScorer(list("abcdef"), 3)
    a = constrained_beam_search(scorer, (), [["b", "c"], ["e"]], 8, 8)
    b = constrained_beam_search(scorer, (), [["b", "c"], ["e"]], 8, 8)
    assert a == b


# toy scorer

def toy_parts():
    lex = TranslationTable({"a": {"x": 1.0}, "b": {"y": 0.5, "z": 0.5}})
    lm = lm_train([["y", "z"], ["z", "y", "z"], ["x"]], order=2)
    return lex, lm


def test_toy_scorer_rejects_bad_lambda():
    lex, lm = toy_parts()
    with pytest.raises(ValueError):
        ToyScorer(lex, lm, 1.5)
    with pytest.raises(ValueError):
        ToyScorer(lex, lm, -0.1)


def test_toy_scorer_normalized():
    lex, lm = toy_parts()
    rng = random.Random(1)
    for lam in (0.0, 0.3, 1.0):
        scorer = ToyScorer(lex, lm, lam)
        for _ in range(1000 // 3):
            src = [rng.choice("abq") for _ in range(rng.randint(0, 3))]
            prefix = [rng.choice("xyz") for _ in range(rng.randint(0, 3))]
            dist = scorer.next_logprobs(src, prefix)
            assert math.fsum(math.exp(v) for v in dist.values()) == pytest.approx(1.0, abs=1e-6)


def test_toy_scorer_pure_lm():
    lex, lm = toy_parts()
    scorer = ToyScorer(lex, lm, 1.0)
    dist = scorer.next_logprobs(["a"], ["y"])
    assert dist == scorer.next_logprobs(["b", "b"], ["y"])  # the source is ignored
    z = sum(lm.prob(w, ["y"]) for w in scorer.outcomes)
    for w in scorer.outcomes:
        assert math.exp(dist[w]) == pytest.approx(lm.prob(w, ["y"]) / z, abs=1e-12)
    vocab = scorer.outcomes[:-1]
    assert beam_search(scorer, ["a"], full_beam(len(vocab), 3), 3).tokens == brute_force(scorer, vocab, 3)


def test_toy_scorer_pure_lexicon():
    lex, lm = toy_parts()
    scorer = ToyScorer(lex, lm, 0.0)
    for prefix in ([], ["y"], ["x", "x"], ["z", "y", "x"]):
        dist = scorer.next_logprobs(["a"], prefix)
        assert max((v, w) for w, v in dist.items() if w != EOS)[1] == "x"
