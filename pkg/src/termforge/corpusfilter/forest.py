"""Random forest of CART trees (Gini impurity) on dense numpy features."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT = "termforge-forest"
VERSION = 1


@dataclass
class Tree:
    # Flat node arrays; a leaf has feature == -1.
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def _node(self, feature=-1, threshold=0.0, value=0.0) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def leaf_value(self, x) -> float:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.value[node]

    @property
    def depth(self) -> int:
        def walk(n):
            return 0 if self.feature[n] < 0 else 1 + max(walk(self.left[n]), walk(self.right[n]))
        return walk(0)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("feature", "threshold", "left", "right", "value")}


@dataclass
class Forest:
    trees: list[Tree]
    seed: int
    params: dict = field(default_factory=dict)

    def predict(self, x) -> float:
        """Mean positive fraction over the trees' leaves."""
        return math.fsum(t.leaf_value(x) for t in self.trees) / len(self.trees)

    def predict_many(self, X) -> np.ndarray:
        return np.array([self.predict(row) for row in np.asarray(X, dtype=float)])

    def dumps(self) -> str:
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "seed": self.seed,
            "params": self.params,
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Forest":
        doc = json.loads(text)
        if doc.get("format") != FORMAT or doc.get("version") != VERSION:
            raise ValueError(f"not a {FORMAT} v{VERSION} model")
        return cls([Tree(**t) for t in doc["trees"]], doc["seed"], doc["params"])

    @classmethod
    def load(cls, path: str | Path) -> "Forest":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def gini(pos: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 2.0 * p * (1.0 - p)


def best_split(X: np.ndarray, y: np.ndarray, features: Sequence[int]):
    """(feature, threshold, weighted child impurity) of the lowest-impurity
    split among midpoints of consecutive distinct values, or None.  Ties keep
    the first candidate in (feature, threshold) order."""
    n = len(y)
    best = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        cut = np.nonzero(xs[:-1] < xs[1:])[0]
        if cut.size == 0:
            continue
        pos = np.cumsum(ys)[cut]
        n_l = cut + 1.0
        n_r = n - n_l
        pos_r = ys.sum() - pos
        imp = (2 * pos * (n_l - pos) / n_l + 2 * pos_r * (n_r - pos_r) / n_r) / n
        k = int(np.argmin(imp))
        if best is None or imp[k] < best[2]:
            lo, hi = float(xs[cut[k]]), float(xs[cut[k] + 1])
            thr = (lo + hi) / 2.0
            if not lo <= thr < hi:  # midpoint rounded up onto hi
                thr = lo
            best = (int(f), thr, float(imp[k]))
    return best


def _n_features(spec, total: int) -> int:
    if spec is None or spec == "all":
        return total
    if spec == "sqrt":
        return max(1, int(math.sqrt(total)))
    k = int(spec)
    if not 1 <= k <= total:
        raise ValueError(f"feature_subsample must lie in [1, {total}]")
    return k


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_depth: int,
    n_features: int,
    min_samples_split: int = 2,
) -> Tree:
    tree = Tree()
    total = X.shape[1]

    def grow(idx: np.ndarray, depth: int) -> int:
        ys = y[idx]
        pos = float(ys.sum())
        node = tree._node(value=pos / len(idx))
        if depth >= max_depth or len(idx) < min_samples_split or pos in (0.0, float(len(idx))):
            return node
        feats = np.sort(rng.choice(total, n_features, replace=False))
        split = best_split(X[idx], ys, feats)
        if split is None or gini(pos, len(idx)) - split[2] <= 1e-12:
            return node
        f, thr, _ = split
        mask = X[idx, f] <= thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = grow(idx[mask], depth + 1)
        tree.right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return tree


def train_forest(
    X,
    y,
    n_trees: int = 50,
    max_depth: int = 8,
    feature_subsample="sqrt",
    seed: int = 0,
    bootstrap: bool = True,
    min_samples_split: int = 2,
) -> Forest:
    """Bagged CART trees; tree t draws from its own SeedSequence child, so the
    forest is a pure function of (data, order, params, seed)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, F) with one label per row")
    if len(y) < 2 or not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("need at least 2 examples labelled 0/1")
    if y.min() == y.max():
        raise ValueError("degenerate labels: both classes must be present")
    if n_trees < 1 or max_depth < 0:
        raise ValueError("n_trees must be >= 1 and max_depth >= 0")
    k = _n_features(feature_subsample, X.shape[1])
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, len(y), len(y)) if bootstrap else np.arange(len(y))
        trees.append(build_tree(X[idx], y[idx], rng, max_depth, k, min_samples_split))
    params = {
        "n_trees": n_trees,
        "max_depth": max_depth,
        "feature_subsample": feature_subsample,
        "bootstrap": bootstrap,
        "min_samples_split": min_samples_split,
    }
    return Forest(trees, seed, params)


def select_uncertain(scores: Sequence[float], k: int = 20) -> list[int]:
    """Indices of the k scores closest to 0.5, ties by index, in ranked order."""
    if k < 0:
        raise ValueError("k must be >= 0")
    ranked = sorted(range(len(scores)), key=lambda i: (abs(scores[i] - 0.5), i))
    return ranked[:k]


def feedback_round(forest: Forest, X, k: int = 20) -> list[int]:
    """Uncertainty sampling: rows whose predicted score is nearest 0.5."""
    return select_uncertain(list(forest.predict_many(X)), k)


@dataclass(frozen=True)
class FilterReport:
    kept: int
    total: int
    threshold: float


def apply_filter(bitext: Sequence, scores: Sequence[float], threshold: float):
    """Pairs scoring strictly above `threshold`, in input order."""
    if len(bitext) != len(scores):
        raise ValueError(f"{len(bitext)} pairs but {len(scores)} scores")
    kept = [pair for pair, s in zip(bitext, scores) if s > threshold]
    return kept, FilterReport(len(kept), len(bitext), threshold)


def write_candidates(path: str | Path, indices: Sequence[int], bitext: Sequence) -> None:
    """Candidate file for offline labelling: index<TAB>source<TAB>target."""
    Path(path).write_text(
        "".join(f"{i}\t{' '.join(bitext[i][0])}\t{' '.join(bitext[i][1])}\n" for i in indices),
        encoding="utf-8",
    )


def read_labels(path: str | Path) -> dict[int, int]:
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: expected index<TAB>0|1")
            labels[int(parts[0])] = int(parts[1])
    return labels
