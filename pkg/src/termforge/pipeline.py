"""Pipeline stages.

Each stage reads config data files and earlier artifacts, writes into a
private staging directory, and only on success moves its outputs into the
output directory and records a manifest (content hashes of inputs and
outputs plus the parameters used).  A failing stage leaves nothing behind.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .align import invert, format_pharaoh, parse_pharaoh, symmetrize, train_diag, train_model1, viterbi_align, TranslationTable
from .backtranslate import emit_corpus, run_backtranslation, translate_line, max_length
from .config import PipelineConfig, atomic_write_text, sha256_file
from .constraints import (
    Constraint,
    ConstraintSet,
    NeTagger,
    applicable,
    count_ne_phrases,
    extract_copy_candidates,
    load_constraints,
    save_counts,
)
from .corpusfilter import (
    LangId,
    Resources,
    apply_filter,
    feature_matrix,
    load_features,
    read_labels,
    save_features,
    select_uncertain,
    train_forest,
    write_candidates,
    Forest,
)
from .decoder import DecodeError, ToyScorer
from .evaluation import bleu, term_recall
from .ngram_lm import NGramModel, lm_train
from .phrasex import build_phrase_table, count_ngrams, filter_by_domain, filter_by_occurrence, filter_by_prob
from .textproc import (
    BpeModel,
    TextDecodeError,
    bpe_apply,
    bpe_decode,
    bpe_learn,
    normalize,
    tokenize,
    truecase_apply,
    truecase_train,
    word_frequencies,
)

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    pass


class StageContext:
    def __init__(self, cfg: PipelineConfig, name: str, staging: Path):
        self.cfg = cfg
        self.name = name
        self.staging = staging
        self.out_dir = cfg.output_dir
        self.seed = cfg.stage_seed(name)
        self.inputs: dict[str, dict] = {}
        self.outputs: list[str] = []

    # inputs
    def data(self, key: str, required: bool = True) -> Path | None:
        path = self.cfg.data_path(key)
        if path is None:
            if required:
                raise StageError(f"stage {self.name} needs data.{key}")
            return None
        self.inputs[f"data.{key}"] = {"path": self.cfg["data"][key], "sha256": sha256_file(path)}
        return path

    def artifact(self, rel: str) -> Path:
        path = self.out_dir / rel
        if not path.is_file():
            raise StageError(f"stage {self.name} needs {rel}; run {PRODUCERS.get(rel, 'an earlier stage')} first")
        self.inputs[rel] = {"sha256": sha256_file(path)}
        return path

    # outputs
    def output(self, rel: str) -> Path:
        path = self.staging / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.outputs:
            self.outputs.append(rel)
        return path

    def write_text(self, rel: str, text: str) -> None:
        self.output(rel).write_text(text, encoding="utf-8")

    def write_lines(self, rel: str, lines) -> None:
        self.write_text(rel, "".join(line + "\n" for line in lines))

    def write_json(self, rel: str, obj) -> None:
        self.write_text(rel, json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def read_lines(path: Path) -> list[str]:
    return path.read_text(encoding="utf-8").splitlines()


def read_tokens(path: Path) -> list[list[str]]:
    return [line.split() for line in read_lines(path)]


def join(sentences) -> list[str]:
    return [" ".join(s) for s in sentences]


# ---------------------------------------------------------------------------
# stages

PREP_FILES = {
    "bitext_src": ("prep/bitext.src", "src"),
    "bitext_tgt": ("prep/bitext.tgt", "tgt"),
    "mono_src": ("prep/mono.src", "src"),
    "mono_tgt": ("prep/mono.tgt", "tgt"),
    "dev_src": ("prep/dev.src", "src"),
    "dev_ref": ("prep/dev.tgt", "tgt"),
}


def _tokenize_file(path: Path) -> list[list[str]]:
    out = []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            try:
                out.append(tokenize(normalize(raw)))
            except TextDecodeError as err:
                raise StageError(f"{path}:{lineno}: invalid UTF-8 at byte {err.offset}") from err
    return out


def stage_preprocess(ctx: StageContext) -> None:
    tokenized = {key: _tokenize_file(ctx.data(key)) for key in PREP_FILES}
    if ctx.cfg["preprocess.truecase"]:
        for side in ("src", "tgt"):
            keys = [k for k, (_, s) in PREP_FILES.items() if s == side]
            model = truecase_train(s for k in keys if not k.startswith("dev") for s in tokenized[k])
            ctx.write_text(f"prep/truecase.{side}.tsv", model.dumps())
            for k in keys:
                tokenized[k] = [truecase_apply(model, s) for s in tokenized[k]]
    for key, (rel, _) in PREP_FILES.items():
        ctx.write_lines(rel, join(tokenized[key]))
    gaz = ctx.data("gazetteer", required=False)
    entries = sorted({" ".join(tokenize(normalize(line))) for line in read_lines(gaz)} - {""}) if gaz else []
    ctx.write_lines("prep/gazetteer.src", entries)


def _resources(ctx: StageContext, bitext) -> Resources:
    order, discount = ctx.cfg["lm.order"], ctx.cfg["lm.discount"]
    src_lang, tgt_lang = ctx.cfg["languages.src"], ctx.cfg["languages.tgt"]
    mono_src = read_tokens(ctx.artifact("prep/mono.src"))
    mono_tgt = read_tokens(ctx.artifact("prep/mono.tgt"))
    s2t = train_model1(bitext, iterations=5)
    t2s = train_model1([(t, s) for s, t in bitext], iterations=5)
    seeds = {}
    for lang, key, fallback in ((src_lang, "langid_src", mono_src), (tgt_lang, "langid_tgt", mono_tgt)):
        path = ctx.data(key, required=False)
        seeds[lang] = read_lines(path) if path else join(fallback)
    return Resources(
        src_lm=lm_train(mono_src, order, discount),
        tgt_lm=lm_train(mono_tgt, order, discount),
        dictionary=_without_null(s2t),
        reverse_dictionary=_without_null(t2s),
        langid=LangId.train(seeds),
        src_lang=src_lang,
        tgt_lang=tgt_lang,
    )


def _without_null(table: TranslationTable) -> dict:
    return {s: row for s, row in table.probs.items() if s != "<null>"}


def _bitext(ctx: StageContext, prefix: str) -> list[tuple[list[str], list[str]]]:
    src = read_tokens(ctx.artifact(f"{prefix}.src"))
    tgt = read_tokens(ctx.artifact(f"{prefix}.tgt"))
    if len(src) != len(tgt):
        raise StageError(f"{prefix}: {len(src)} source vs {len(tgt)} target lines")
    return list(zip(src, tgt))


def stage_filter_features(ctx: StageContext) -> None:
    bitext = _bitext(ctx, "prep/bitext")
    resources = _resources(ctx, bitext)
    X = feature_matrix(bitext, resources)
    save_features(X, ctx.output("filter/features.tsv"))
    resources.langid.save(ctx.output("filter/langid.json"))


def _forest(ctx: StageContext, X, y) -> Forest:
    f = ctx.cfg
    return train_forest(
        X, y, f["filter.trees"], f["filter.max_depth"], f["filter.feature_subsample"], seed=ctx.seed
    )


def stage_filter_train(ctx: StageContext) -> None:
    """Train on an initial labelled set, then run feedback rounds: each round
    writes the most uncertain unlabelled pairs and takes their labels from the
    labels file (the expert's answers)."""
    X = load_features(ctx.artifact("filter/features.tsv"))
    bitext = _bitext(ctx, "prep/bitext")
    labels = read_labels(ctx.data("labels"))
    if any(not 0 <= i < len(X) for i in labels):
        raise StageError("labels file refers to pairs outside the bitext")
    labelled = sorted(labels)[: ctx.cfg["filter.initial_labels"]]
    history = []

    def fit_and_score(round_no):
        y = np.array([labels[i] for i in labelled])
        forest = _forest(ctx, X[labelled], y)
        held = [i for i in sorted(labels) if i not in set(labelled)]
        acc = None
        if held:
            pred = forest.predict_many(X[held]) > 0.5
            acc = float(np.mean(pred == np.array([labels[i] == 1 for i in held])))
        history.append({"round": round_no, "labelled": len(labelled), "heldout_accuracy": acc})
        return forest

    forest = fit_and_score(0)
    for r in range(1, ctx.cfg["filter.rounds"] + 1):
        pool = [i for i in range(len(X)) if i not in set(labelled)]
        if not pool:
            break
        scores = forest.predict_many(X[pool])
        picked = [pool[p] for p in select_uncertain(list(scores), ctx.cfg["filter.round_size"])]
        write_candidates(ctx.output(f"filter/round{r}.candidates.tsv"), picked, bitext)
        answered = [i for i in picked if i in labels]
        if len(answered) < len(picked):
            log.warning("round %d: %d candidates have no label", r, len(picked) - len(answered))
        labelled = sorted(set(labelled) | set(answered))
        forest = fit_and_score(r)
    forest.save(ctx.output("filter/forest.json"))
    ctx.write_json("filter/rounds.json", history)


def stage_filter_select(ctx: StageContext) -> None:
    X = load_features(ctx.artifact("filter/features.tsv"))
    forest = Forest.load(ctx.artifact("filter/forest.json"))
    bitext = _bitext(ctx, "prep/bitext")
    path = ctx.data("labels", required=False)
    known = set(read_labels(path)) if path else set()
    pool = [i for i in range(len(X)) if i not in known]
    scores = forest.predict_many(X[pool]) if pool else []
    picked = [pool[p] for p in select_uncertain(list(scores), ctx.cfg["filter.round_size"])]
    write_candidates(ctx.output("filter/candidates.tsv"), picked, bitext)


def stage_filter_apply(ctx: StageContext) -> None:
    X = load_features(ctx.artifact("filter/features.tsv"))
    forest = Forest.load(ctx.artifact("filter/forest.json"))
    bitext = _bitext(ctx, "prep/bitext")
    scores = forest.predict_many(X)
    ctx.write_lines("filter/scores.txt", [repr(float(s)) for s in scores])
    report = {}
    for name, rel in (("threshold", "filter/bitext"), ("strict_threshold", "filter/bitext.strict")):
        t = ctx.cfg[f"filter.{name}"]
        kept, rep = apply_filter(bitext, list(scores), t)
        ctx.write_lines(f"{rel}.src", join(s for s, _ in kept))
        ctx.write_lines(f"{rel}.tgt", join(t for _, t in kept))
        report[name] = {"threshold": t, "kept": rep.kept, "total": rep.total}
    if not report["threshold"]["kept"]:
        raise StageError("the filter kept no sentence pairs")
    ctx.write_json("filter/report.json", report)


def stage_bpe_learn(ctx: StageContext) -> None:
    corpus = [s for pair in _bitext(ctx, "filter/bitext") for s in pair]
    model = bpe_learn(word_frequencies(corpus), ctx.cfg["bpe.merges"])
    model.save(ctx.output("bpe/codes.bpe"))


def stage_bpe_apply(ctx: StageContext) -> None:
    model = BpeModel.load(ctx.artifact("bpe/codes.bpe"))
    for side in ("src", "tgt"):
        out = []
        for sent in read_tokens(ctx.artifact(f"filter/bitext.{side}")):
            pieces = bpe_apply(model, sent)
            if bpe_decode(pieces) != sent:
                raise StageError(f"BPE round trip failed on {' '.join(sent)!r}")
            out.append(" ".join(pieces))
        ctx.write_lines(f"bpe/bitext.{side}", out)


LM_FILES = {
    "lm/news.src.lm": "prep/mono.src",  # in-domain for phrase selection
    "lm/parallel.src.lm": "filter/bitext.src",  # out-of-domain
    "lm/dev.src.lm": "prep/dev.src",  # topic model for backtranslation selection
    "lm/news.tgt.lm": "prep/mono.tgt",  # target LM of the toy scorer
}


def stage_lm_train(ctx: StageContext) -> None:
    for rel, source in LM_FILES.items():
        model = lm_train(read_tokens(ctx.artifact(source)), ctx.cfg["lm.order"], ctx.cfg["lm.discount"])
        model.save(ctx.output(rel))


def stage_align(ctx: StageContext) -> None:
    """Align the filtered bitext concatenated with the dev set, both directions."""
    pairs = _bitext(ctx, "filter/bitext") + _bitext(ctx, "prep/dev")
    a = ctx.cfg
    kw = {"iterations": a["align.iterations"], "null_prob": a["align.null_prob"]}
    if a["align.model"] == "diag":
        fwd = train_diag(pairs, tension=a["align.tension"], **kw)
        rev = train_diag([(t, s) for s, t in pairs], tension=a["align.tension"], **kw)
        tables = (fwd.table, rev.table)
    else:
        fwd = train_model1(pairs, **kw)
        rev = train_model1([(t, s) for s, t in pairs], **kw)
        tables = (fwd, rev)
    links = []
    for s, t in pairs:
        f = viterbi_align(fwd, (s, t))
        r = invert(viterbi_align(rev, (t, s)))
        links.append(format_pharaoh(symmetrize(f, r, a["align.heuristic"], len(s), len(t))))
    ctx.write_lines("align/all.align", links)
    tables[0].save(ctx.output("align/lex.s2t.tsv"))
    tables[1].save(ctx.output("align/lex.t2s.tsv"))
    ctx.write_json(
        "align/loglik.json", {"s2t": tables[0].log_likelihoods, "t2s": tables[1].log_likelihoods}
    )


def stage_phrasex(ctx: StageContext) -> None:
    """Phrase table from the dev set (the terminology source), then the
    probability, domain and target-occurrence filters."""
    dev = _bitext(ctx, "prep/dev")
    links = [parse_pharaoh(line) for line in read_lines(ctx.artifact("align/all.align"))]
    dev_links = links[len(links) - len(dev):]
    p = ctx.cfg
    table = build_phrase_table(dev, dev_links, p["phrasex.max_len"])
    table.save(ctx.output("phrasex/table.tsv"))
    by_prob = filter_by_prob(table, p["phrasex.prob_threshold"])
    in_lm = NGramModel.load(ctx.artifact("lm/news.src.lm"))
    out_lm = NGramModel.load(ctx.artifact("lm/parallel.src.lm"))
    by_domain = filter_by_domain(by_prob, in_lm, out_lm, p["phrasex.top_k"])
    mono_tgt = read_tokens(ctx.artifact("prep/mono.tgt"))
    final = filter_by_occurrence(by_domain, mono_tgt, p["phrasex.min_occurrence"])
    final.save_constraints(ctx.output("phrasex/constraints.tsv"), "always")
    ctx.write_json(
        "phrasex/report.json",
        {"extracted": len(table), "prob": len(by_prob), "domain": len(by_domain), "occurrence": len(final)},
    )


def _tagger(ctx: StageContext) -> NeTagger:
    return NeTagger(line.split() for line in read_lines(ctx.artifact("prep/gazetteer.src")))


def stage_copy_candidates(ctx: StageContext) -> None:
    tagger = _tagger(ctx)
    src_counts = count_ne_phrases(read_tokens(ctx.artifact("prep/mono.src")), tagger)
    tgt_counts = count_ngrams(read_tokens(ctx.artifact("prep/mono.tgt")), src_counts)
    save_counts(src_counts, ctx.output("constraints/ne_counts.src.tsv"))
    save_counts(tgt_counts, ctx.output("constraints/counts.tgt.tsv"))
    copies = ConstraintSet(extract_copy_candidates(src_counts, tgt_counts, ctx.cfg["constraints.min_count"]))
    copies.save(ctx.output("constraints/copy.tsv"))
    phrases = load_constraints(ctx.artifact("phrasex/constraints.tsv"))
    (phrases + copies).save(ctx.output("constraints/all.tsv"))


def _scorer(ctx: StageContext) -> ToyScorer:
    lex = TranslationTable.load(ctx.artifact("align/lex.s2t.tsv"))
    return ToyScorer(lex, NGramModel.load(ctx.artifact("lm/news.tgt.lm")), ctx.cfg["backtranslate.lm_weight"])


def _applied_log(pairs) -> list[str]:
    return [
        json.dumps(
            {
                "hyp": " ".join(p.synthetic_source),
                "constrained": p.constrained,
                "constraints": [[" ".join(c.source), " ".join(c.target), c.mode] for c in p.applied_constraints],
            },
            ensure_ascii=False,
            sort_keys=True,
        )
        for p in pairs
    ]


def stage_backtranslate(ctx: StageContext) -> None:
    b = ctx.cfg
    mode = b["backtranslate.mode"]
    # an explicit (already tokenized) corpus or constraint file wins over the artifacts
    mono = ctx.data("bt_mono", required=False) or ctx.artifact("prep/mono.src")
    constraints = ctx.data("constraints", required=False) or ctx.artifact("constraints/all.tsv")
    pairs, stats = run_backtranslation(
        read_lines(mono),
        NGramModel.load(ctx.artifact("lm/dev.src.lm")),
        NGramModel.load(ctx.artifact("lm/parallel.src.lm")),
        b["backtranslate.top_n"],
        _scorer(ctx),
        load_constraints(constraints),
        _tagger(ctx),
        mode=mode,
        beam=b[f"backtranslate.beam_{mode}"],
        max_len_ratio=b["backtranslate.max_len_ratio"],
        max_len_extra=b["backtranslate.max_len_extra"],
    )
    emit_corpus(pairs, ctx.output("bt/synthetic.src"), ctx.output("bt/real.tgt"))
    stats.save(ctx.output("bt/stats.json"))
    ctx.write_lines("bt/applied.jsonl", _applied_log(pairs))


def stage_evaluate(ctx: StageContext) -> None:
    """Decode the dev set with and without constraints; BLEU and term recall,
    plus term recall of the backtranslated corpus on its constrained lines."""
    b = ctx.cfg
    scorer = _scorer(ctx)
    constraints = list(load_constraints(ctx.artifact("constraints/all.tsv")))
    tagger = _tagger(ctx)
    dev_src = read_tokens(ctx.artifact("prep/dev.src"))
    refs = read_lines(ctx.artifact("prep/dev.tgt"))
    applied = [applicable(s, constraints, tagger) for s in dev_src]
    report = {}
    for mode in ("constrained", "unconstrained"):
        hyps = []
        for src, cons in zip(dev_src, applied):
            budget = max_length(src, b["backtranslate.max_len_ratio"], b["backtranslate.max_len_extra"])
            try:
                hyp, _ = translate_line(
                    src, scorer, cons if mode == "constrained" else [], b[f"backtranslate.beam_{mode}"], budget
                )
                hyps.append(list(hyp.tokens))
            except DecodeError as err:
                log.warning("dev decode failed: %s", err)
                hyps.append([])
        ctx.write_lines(f"eval/dev.{mode}.hyp", join(hyps))
        score = bleu(join(hyps), refs, b["eval.tokenize"])
        report[mode] = {
            "bleu": score.score,
            "bleu_line": score.format(),
            "term_recall": term_recall(hyps, applied).to_dict(),
        }
    bt = [json.loads(line) for line in read_lines(ctx.artifact("bt/applied.jsonl"))]
    feasible = [r for r in bt if r["constrained"]]
    bt_recall = term_recall(
        [r["hyp"].split() for r in feasible],
        [[_constraint(c) for c in r["constraints"]] for r in feasible],
    )
    report["backtranslation"] = {"term_recall": bt_recall.to_dict(), "lines": len(bt), "constrained_lines": len(feasible)}
    ctx.write_json("eval/report.json", report)


def _constraint(fields) -> Constraint:
    src, tgt, mode = fields
    return Constraint(tuple(src.split()), tuple(tgt.split()), mode)


# ---------------------------------------------------------------------------
# runner

STAGES: dict[str, tuple[Callable[[StageContext], None], tuple[str, ...]]] = {
    "preprocess": (stage_preprocess, ("languages", "preprocess")),
    "filter-features": (stage_filter_features, ("languages", "lm")),
    "filter-train": (stage_filter_train, ("filter",)),
    "filter-select": (stage_filter_select, ("filter",)),
    "filter-apply": (stage_filter_apply, ("filter",)),
    "bpe-learn": (stage_bpe_learn, ("bpe",)),
    "bpe-apply": (stage_bpe_apply, ("bpe",)),
    "lm-train": (stage_lm_train, ("lm",)),
    "align": (stage_align, ("align",)),
    "phrasex": (stage_phrasex, ("phrasex",)),
    "copy-candidates": (stage_copy_candidates, ("constraints",)),
    "backtranslate": (stage_backtranslate, ("backtranslate",)),
    "evaluate": (stage_evaluate, ("backtranslate", "eval")),
}

PIPELINE = (
    "preprocess",
    "filter-features",
    "filter-train",
    "filter-apply",
    "bpe-learn",
    "bpe-apply",
    "lm-train",
    "align",
    "phrasex",
    "copy-candidates",
    "backtranslate",
    "evaluate",
)

# first stage producing each artifact, for error messages
PRODUCERS = {
    **{rel: "preprocess" for rel, _ in PREP_FILES.values()},
    "prep/gazetteer.src": "preprocess",
    "filter/features.tsv": "filter-features",
    "filter/forest.json": "filter-train",
    "filter/bitext.src": "filter-apply",
    "filter/bitext.tgt": "filter-apply",
    "bpe/codes.bpe": "bpe-learn",
    **{rel: "lm-train" for rel in LM_FILES},
    "align/all.align": "align",
    "align/lex.s2t.tsv": "align",
    "phrasex/constraints.tsv": "phrasex",
    "constraints/all.tsv": "copy-candidates",
    "bt/applied.jsonl": "backtranslate",
}


def manifest_path(cfg: PipelineConfig, stage: str) -> Path:
    return cfg.output_dir / "manifests" / f"{stage}.json"


def run_stage(name: str, cfg: PipelineConfig) -> dict:
    """Run one stage; returns its manifest.  Raises StageError (or the
    underlying error) on failure, leaving no partial outputs."""
    if name not in STAGES:
        raise KeyError(f"unknown stage {name!r}; expected one of {sorted(STAGES)}")
    fn, sections = STAGES[name]
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".staging-{name}-", dir=out))
    try:
        ctx = StageContext(cfg, name, staging)
        log.info("stage %s: start", name)
        fn(ctx)
        outputs = {}
        for rel in sorted(ctx.outputs):
            src = staging / rel
            outputs[rel] = sha256_file(src)
            dest = out / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dest)
        manifest = {
            "stage": name,
            "version": __version__,
            "seed": ctx.seed,
            "params": {s: cfg.values[s] for s in sections},
            "inputs": dict(sorted(ctx.inputs.items())),
            "outputs": outputs,
        }
        atomic_write_text(manifest_path(cfg, name), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        log.info("stage %s: wrote %d artifacts", name, len(outputs))
        return manifest
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def run_pipeline(cfg: PipelineConfig, stages=PIPELINE) -> list[dict]:
    return [run_stage(name, cfg) for name in stages]
