import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from termforge.corpusfilter import (
    FEATURE_NAMES,
    Forest,
    LangId,
    Resources,
    apply_filter,
    extract_features,
    feature_matrix,
    feedback_round,
    load_features,
    read_labels,
    save_features,
    select_uncertain,
    train_forest,
    write_candidates,
)
from termforge.corpusfilter.features import (
    ZIPPORAH_EPS,
    cognate_ratio,
    hunalign_score,
    multiset_jaccard,
    zipporah_score,
)
from termforge.corpusfilter.forest import Tree, best_split, gini
from termforge.corpusfilter.langid import char_ngrams
from termforge.ngram_lm import lm_train

F = {name: i for i, name in enumerate(FEATURE_NAMES)}


@pytest.fixture(scope="module")
def resources():
    fr = ["les gilets jaunes manifestent à Paris", "le gouvernement critique les électeurs", "la France vote"]
    de = ["die Gelbwesten demonstrieren in Paris", "die Regierung kritisiert die Wähler", "Frankreich wählt"]
    return Resources(
        src_lm=lm_train([s.split() for s in fr], 2),
        tgt_lm=lm_train([s.split() for s in de], 2),
        dictionary={"les": {"die": 1.0}, "Paris": {"Paris": 1.0}, "gilets": {"Gelbwesten": 1.0}},
        reverse_dictionary={"die": {"les": 0.5, "la": 0.5}, "Paris": {"Paris": 1.0}},
        langid=LangId.train({"fr": fr, "de": de}),
        src_lang="fr",
        tgt_lang="de",
    )


def P(s):
    return s.split()


# features

def test_feature_names():
    assert len(FEATURE_NAMES) == 13 and len(set(FEATURE_NAMES)) == 13


def test_identical_pair(resources):
    f = extract_features(P("a b ."), P("a b ."), resources)
    assert f[F["len_ratio"]] == 1.0
    assert f[F["punct_cmp"]] == 1.0
    assert f[F["num_cmp"]] == 1.0
    assert f[F["cognate"]] == 1.0
    assert f[F["upper_cmp"]] == 0.0


def test_disjoint_numbers(resources):
    assert extract_features(P("1 2 3"), P("eins"), resources)[F["num_cmp"]] == 0.0


def test_simple_features(resources):
    f = extract_features(P("Le 3,5 % !"), P("Die 3,5 Prozent"), resources)
    assert f[F["total_len"]] == 7
    assert f[F["len_ratio"]] == 4 / 3
    assert f[F["avg_tok_len"]] == pytest.approx((2 + 3 + 1 + 1 + 3 + 3 + 7) / 7)
    assert f[F["upper_cmp"]] == pytest.approx(1 / 2)  # "L" vs "D", "P"
    assert f[F["num_cmp"]] == 1.0
    # punctuation characters: {",", "%", "!"} vs {","}
    assert f[F["punct_cmp"]] == pytest.approx(1 / 3)


def test_empty_sides_are_finite(resources):
    for src, tgt in [([], []), (P("a"), []), ([], P("b"))]:
        f = extract_features(src, tgt, resources)
        assert np.all(np.isfinite(f))
    f = extract_features([], [], resources)
    assert f[F["total_len"]] == 0 and f[F["len_ratio"]] == 1.0 and f[F["cognate"]] == 0.0


def test_multiset_jaccard():
    from collections import Counter

    assert multiset_jaccard(Counter(), Counter()) == 1.0
    assert multiset_jaccard(Counter("aab"), Counter("ab")) == pytest.approx(2 / 3)


def test_cognates():
    # lowercased 4-character prefixes: "parl" and "euro" match, "gouv" does not
    assert cognate_ratio(P("Parlement européen gouvernement"), P("Parlament europäischen Regierung")) == 2 / 3
    assert cognate_ratio(P("Gelbwesten"), P("gelbe")) == 1.0
    assert cognate_ratio(P("ab"), P("ab")) == 1.0
    assert cognate_ratio(P("ab"), P("abc")) == 0.0  # short tokens must match whole
    assert cognate_ratio([], P("x")) == 0.0


def test_zipporah_hand_arithmetic():
    fwd = {"a": {"x": 0.8, "y": 0.2}, "b": {"y": 1.0}}  # three entries
    src, tgt = P("a b"), P("x y")
    # t=x: (0.8 + 0)/2 = 0.4; t=y: (0.2 + 1.0)/2 = 0.6
    forward = -(math.log(0.4 + ZIPPORAH_EPS) + math.log(0.6 + ZIPPORAH_EPS)) / 2
    # empty reverse dictionary: every source word costs -log(eps)
    backward = -math.log(ZIPPORAH_EPS)
    assert zipporah_score(src, tgt, fwd, {}) == pytest.approx(0.5 * (forward + backward), abs=1e-12)
    assert zipporah_score(src, tgt, fwd, {}) == pytest.approx(7.264533, abs=1e-6)


def test_hunalign_hand_arithmetic():
    fwd = {"a": {"x": 0.8, "y": 0.2}, "b": {"y": 1.0}}
    # both source words covered, no target word covered: 2/4, equal char lengths
    assert hunalign_score(P("a b"), P("x y"), fwd, {}) == 0.5
    # only "a" is covered now (1/4); chars 2 vs 5: log ratio ln(3/6), sigma 0.5
    expected = 0.25 * math.exp(-math.log(3 / 6) ** 2 / 0.5)
    assert hunalign_score(P("a b"), P("x yyyy"), fwd, {}) == pytest.approx(expected)
    assert hunalign_score([], [], fwd, {}) == 0.0


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.sampled_from(["les", "Gelbwesten", "Paris", "3", "!", "die", "x"]), max_size=6),
    st.lists(st.sampled_from(["les", "Gelbwesten", "Paris", "3", "!", "die", "y"]), max_size=6),
)
def test_swap_symmetry(resources, src, tgt):
    a = extract_features(src, tgt, resources)
    b = extract_features(tgt, src, resources.swapped())
    for name in ("total_len", "avg_tok_len", "upper_cmp", "punct_cmp", "num_cmp", "zipporah", "hunalign"):
        assert a[F[name]] == pytest.approx(b[F[name]], abs=1e-12), name
    assert a[F["len_ratio"]] == pytest.approx(1 / b[F["len_ratio"]])
    assert a[F["langid_src"]] == b[F["langid_tgt"]]
    assert a[F["lm_src"]] == b[F["lm_tgt"]]


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=40), st.text(max_size=40))
def test_features_never_nan(resources, s, t):
    f = extract_features(s.split(), t.split(), resources)
    assert f.shape == (13,) and np.all(np.isfinite(f))


def test_feature_tsv_round_trip(resources, tmp_path):
    m = feature_matrix([(P("a b"), P("c")), (P("x"), [])], resources)
    save_features(m, tmp_path / "f.tsv")
    assert (tmp_path / "f.tsv").read_text().splitlines()[0] == "\t".join(FEATURE_NAMES)
    assert np.array_equal(load_features(tmp_path / "f.tsv"), m)
    assert feature_matrix([], resources).shape == (0, 13)
    (tmp_path / "bad.tsv").write_text("x\ty\n")
    with pytest.raises(ValueError, match="header"):
        load_features(tmp_path / "bad.tsv")


# langid

def test_char_ngrams():
    assert char_ngrams("ab", (1, 2)) == {" ": 2, "a": 1, "b": 1, " a": 1, "ab": 1, "b ": 1}


def test_langid(tmp_path):
    model = LangId.train({
        "fr": ["les gilets jaunes", "le gouvernement français", "la rue et les élections"],
        "de": ["die Gelbwesten", "die deutsche Regierung", "auf der Straße und die Wahlen"],
    })
    assert model.classify("les élections") == "fr"
    assert model.classify("die Straße") == "de"
    assert model.log_odds("les gilets", "fr", "de") > 0 > model.log_odds("die Wahlen", "fr", "de")
    assert model.log_odds("", "fr", "de") == 0.0
    model.save(tmp_path / "lid.json")
    loaded = LangId.load(tmp_path / "lid.json")
    assert loaded.dumps() == model.dumps()
    assert loaded.log_odds("la rue", "fr", "de") == model.log_odds("la rue", "fr", "de")
    with pytest.raises(ValueError):
        LangId({"fr": {}})


# forest

def separable(seed, n, f=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, f))
    return X, (X[:, 0] > 0).astype(int)


def test_separable_accuracy():
    X, y = separable(0, 200)
    Xt, yt = separable(1, 200)
    forest = train_forest(X, y, n_trees=30, max_depth=6, seed=3)
    assert np.mean((forest.predict_many(Xt) > 0.5) == yt) >= 0.95
    scores = forest.predict_many(Xt)
    assert np.all((scores >= 0) & (scores <= 1))


def test_stump_on_informative_feature():
    # feature 1 separates perfectly; feature 0 is noise
    X = np.array([[0.3, 1.0], [0.9, 2.0], [0.1, 3.0], [0.5, 10.0], [0.7, 11.0], [0.2, 12.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    forest = train_forest(X, y, n_trees=1, max_depth=1, feature_subsample="all", bootstrap=False)
    tree = forest.trees[0]
    assert tree.feature[0] == 1 and tree.threshold[0] == 6.5
    assert tree.depth == 1
    assert forest.predict([0.0, 0.0]) == 0.0 and forest.predict([0.0, 20.0]) == 1.0


def test_best_split_gini_arithmetic():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    f, thr, imp = best_split(X, y, [0])
    # candidates 1.5 / 2.5 / 3.5 give 1/3, 1/2, 1/3 by hand: the first wins
    assert (f, thr) == (0, 1.5)
    assert imp == pytest.approx(0.75 * gini(1, 3))
    assert best_split(np.ones((3, 1)), np.array([0.0, 1.0, 0.0]), [0]) is None


def test_two_trees_average():
    leaf = lambda v: Tree(feature=[-1], threshold=[0.0], left=[-1], right=[-1], value=[v])
    forest = Forest([leaf(1.0), leaf(0.0)], seed=0)
    assert forest.predict([0.0]) == 0.5
    assert Forest([leaf(0.0), leaf(1.0)], seed=0).predict([0.0]) == 0.5


def test_pure_region_scores_one():
    X, y = separable(2, 100)
    forest = train_forest(X, y, n_trees=10, feature_subsample="all", seed=1)
    assert forest.predict([5.0, 0, 0, 0, 0]) == 1.0
    assert forest.predict([-5.0, 0, 0, 0, 0]) == 0.0


def test_deterministic_and_serializable(tmp_path):
    X, y = separable(3, 80)
    a = train_forest(X, y, n_trees=5, seed=7)
    b = train_forest(X, y, n_trees=5, seed=7)
    assert a.dumps() == b.dumps()
    assert train_forest(X, y, n_trees=5, seed=8).dumps() != a.dumps()
    a.save(tmp_path / "f.json")
    loaded = Forest.load(tmp_path / "f.json")
    assert loaded.dumps() == a.dumps()
    assert np.array_equal(loaded.predict_many(X), a.predict_many(X))
    with pytest.raises(ValueError, match="not a"):
        Forest.loads('{"format": "other"}')


def test_training_errors():
    X, _ = separable(0, 10)
    with pytest.raises(ValueError, match="degenerate labels"):
        train_forest(X, np.ones(10))
    with pytest.raises(ValueError):
        train_forest(X[:1], [1])
    with pytest.raises(ValueError):
        train_forest(X, np.arange(10))
    with pytest.raises(ValueError):
        train_forest(X, (X[:, 0] > 0).astype(int), feature_subsample=99)


def test_uncertainty_sampling():
    assert select_uncertain([0.1, 0.49, 0.9], 1) == [1]
    assert select_uncertain([0.1, 0.49, 0.9], 0) == []
    assert select_uncertain([0.4, 0.6, 0.5], 10) == [2, 0, 1]  # ties by index, k > n gives all
    X, y = separable(4, 60)
    forest = train_forest(X, y, n_trees=5, seed=0)
    picked = feedback_round(forest, X, 7)
    assert len(picked) == 7 and len(set(picked)) == 7


def active_learning(seed, rounds=3, k=20):
    rng = np.random.default_rng(seed)

    def gen(n):
        X = rng.normal(size=(n, 6))
        return X, ((X[:, 0] + X[:, 1]) > 0).astype(int)

    Xp, yp = gen(600)
    Xt, yt = gen(1000)
    labeled = list(range(20))
    pool = list(range(20, 600))
    accs = []
    for r in range(rounds + 1):
        forest = train_forest(Xp[labeled], yp[labeled], n_trees=25, max_depth=6, seed=seed)
        accs.append(float(np.mean((forest.predict_many(Xt) > 0.5) == yt)))
        if r == rounds:
            return accs
        chosen = [pool[i] for i in feedback_round(forest, Xp[pool], k)]
        labeled += chosen
        pool = [i for i in pool if i not in set(chosen)]


def improvements(accs):
    return sum(b > a for a, b in zip(accs, accs[1:]))


def test_feedback_rounds_improve_accuracy():
    assert improvements(active_learning(0)) >= 2
    # across seeds the 2-of-3 property is typical rather than guaranteed
    assert sum(improvements(active_learning(s)) >= 2 for s in range(10)) >= 8


def test_apply_filter():
    items = ["a", "b", "c", "d"]
    scores = [0.9, 0.5, 0.81, 0.2]
    kept, report = apply_filter(items, scores, 0.5)
    assert kept == ["a", "c"] and (report.kept, report.total) == (2, 4)
    assert apply_filter(items, scores, 0.8)[0] == ["a", "c"]
    assert apply_filter(items, scores, 1.0)[0] == []
    with pytest.raises(ValueError):
        apply_filter(items, scores[:2], 0.5)


@given(st.lists(st.floats(0, 1), max_size=30), st.floats(0, 1), st.floats(0, 1))
def test_threshold_monotone(scores, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    items = list(range(len(scores)))
    assert set(apply_filter(items, scores, hi)[0]) <= set(apply_filter(items, scores, lo)[0])


def test_candidates_and_labels(tmp_path):
    bitext = [(P("a b"), P("x")), (P("c"), P("y z"))]
    write_candidates(tmp_path / "cand.tsv", [1, 0], bitext)
    assert (tmp_path / "cand.tsv").read_text() == "1\tc\ty z\n0\ta b\tx\n"
    (tmp_path / "labels.tsv").write_text("1\t1\n\n0\t0\n")
    assert read_labels(tmp_path / "labels.tsv") == {1: 1, 0: 0}
    (tmp_path / "bad.tsv").write_text("1\t1\n2\tyes\n")
    with pytest.raises(ValueError, match="bad.tsv:2"):
        read_labels(tmp_path / "bad.tsv")
