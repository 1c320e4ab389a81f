"""Pipeline configuration: a single JSON document with per-stage blocks.

Unknown keys, duplicate keys and out-of-range values are rejected before any
stage runs.  Relative data paths are resolved against the config file's
directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .align import HEURISTICS
from .backtranslate import MODES
from .evaluation import TOKENIZERS


class ConfigError(ValueError):
    pass


REQUIRED_PATHS = ("bitext_src", "bitext_tgt", "mono_src", "mono_tgt", "dev_src", "dev_ref")
# bt_mono / constraints override the backtranslate inputs derived by earlier stages
OPTIONAL_PATHS = ("labels", "gazetteer", "langid_src", "langid_tgt", "bt_mono", "constraints")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output_dir": "run",
    "data": {k: None for k in REQUIRED_PATHS + OPTIONAL_PATHS},
    "languages": {"src": "fr", "tgt": "de"},
    "preprocess": {"truecase": True},
    "filter": {
        "trees": 50,
        "max_depth": 8,
        "feature_subsample": "sqrt",
        "threshold": 0.5,
        "strict_threshold": 0.8,
        "initial_labels": 40,
        "rounds": 3,
        "round_size": 20,
    },
    "bpe": {"merges": 30000},
    "lm": {"order": 3, "discount": 0.4},
    "align": {
        "model": "diag",
        "iterations": 5,
        "tension": 4.0,
        "null_prob": 0.08,
        "heuristic": "grow-diag-final-and",
    },
    "phrasex": {"max_len": 7, "prob_threshold": 0.5, "top_k": 2000, "min_occurrence": 1},
    "constraints": {"min_count": 9},
    "backtranslate": {
        "top_n": 2_000_000,
        "mode": "constrained",
        "beam_constrained": 20,
        "beam_unconstrained": 5,
        "lm_weight": 0.5,
        "max_len_ratio": 2.0,
        "max_len_extra": 3,
    },
    "eval": {"tokenize": "13a"},
}


def _unit(x):
    return 0.0 <= x <= 1.0


def _open_unit(x):
    return 0.0 < x < 1.0


def _at_least(n):
    return lambda x: x >= n


def _one_of(options):
    return lambda x: x in options


# key path -> (accepted types, predicate, description)
CHECKS: dict[str, tuple[tuple[type, ...], Callable[[Any], bool], str]] = {
    "seed": ((int,), _at_least(0), ">= 0"),
    "output_dir": ((str,), bool, "non-empty"),
    "languages.src": ((str,), bool, "non-empty"),
    "languages.tgt": ((str,), bool, "non-empty"),
    "preprocess.truecase": ((bool,), lambda x: True, "a boolean"),
    "filter.trees": ((int,), _at_least(1), ">= 1"),
    "filter.max_depth": ((int,), _at_least(1), ">= 1"),
    "filter.feature_subsample": ((str, int), lambda x: x in ("sqrt", "all") or (isinstance(x, int) and x >= 1), "'sqrt', 'all' or >= 1"),
    "filter.threshold": ((int, float), _unit, "in [0, 1]"),
    "filter.strict_threshold": ((int, float), _unit, "in [0, 1]"),
    "filter.initial_labels": ((int,), _at_least(2), ">= 2"),
    "filter.rounds": ((int,), _at_least(0), ">= 0"),
    "filter.round_size": ((int,), _at_least(0), ">= 0"),
    "bpe.merges": ((int,), _at_least(0), ">= 0"),
    "lm.order": ((int,), _at_least(1), ">= 1"),
    "lm.discount": ((int, float), _open_unit, "in (0, 1)"),
    "align.model": ((str,), _one_of(("model1", "diag")), "'model1' or 'diag'"),
    "align.iterations": ((int,), _at_least(1), ">= 1"),
    "align.tension": ((int, float), _at_least(0), ">= 0"),
    "align.null_prob": ((int, float), _open_unit, "in (0, 1)"),
    "align.heuristic": ((str,), _one_of(HEURISTICS), f"one of {HEURISTICS}"),
    "phrasex.max_len": ((int,), _at_least(1), ">= 1"),
    "phrasex.prob_threshold": ((int, float), _unit, "in [0, 1]"),
    "phrasex.top_k": ((int,), _at_least(0), ">= 0"),
    "phrasex.min_occurrence": ((int,), _at_least(0), ">= 0"),
    "constraints.min_count": ((int,), _at_least(1), ">= 1"),
    "backtranslate.top_n": ((int,), _at_least(0), ">= 0"),
    "backtranslate.mode": ((str,), _one_of(MODES), f"one of {MODES}"),
    "backtranslate.beam_constrained": ((int,), _at_least(1), ">= 1"),
    "backtranslate.beam_unconstrained": ((int,), _at_least(1), ">= 1"),
    "backtranslate.lm_weight": ((int, float), _unit, "in [0, 1]"),
    "backtranslate.max_len_ratio": ((int, float), lambda x: x > 0, "> 0"),
    "backtranslate.max_len_extra": ((int,), _at_least(0), ">= 0"),
    "eval.tokenize": ((str,), _one_of(TOKENIZERS), f"one of {TOKENIZERS}"),
}


def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError(f"duplicate key {key!r}")
        out[key] = value
    return out


def loads_strict(text: str) -> dict:
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _merge(defaults: dict, given: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown key {path!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be an object")
            out[key] = _merge(defaults[key], value, path + ".")
        else:
            out[key] = value
    return out


def get_path(doc: dict, dotted: str):
    node = doc
    for part in dotted.split("."):
        node = node[part]
    return node


def set_path(doc: dict, dotted: str, value) -> None:
    *parents, last = dotted.split(".")
    node = doc
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted!r}: {part!r} is not an object")
    node[last] = value


def parse_override(item: str) -> tuple[str, Any]:
    """`key.path=value`; the value is read as JSON, falling back to a string."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


@dataclass(frozen=True)
class PipelineConfig:
    values: dict
    base_dir: Path

    def __getitem__(self, dotted: str):
        return get_path(self.values, dotted)

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def output_dir(self) -> Path:
        return (self.base_dir / self.values["output_dir"]).resolve()

    def data_path(self, key: str) -> Path | None:
        rel = self.values["data"][key]
        return None if rel is None else (self.base_dir / rel).resolve()

    def stage_seed(self, stage: str) -> int:
        return stage_seed(self.seed, stage)


def stage_seed(seed: int, stage: str) -> int:
    """Per-stage seed from the global seed and the stage name (stable across runs)."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def validate(doc: dict, base_dir: str | Path = ".", check_paths: bool = True) -> PipelineConfig:
    values = _merge(DEFAULTS, doc)
    for key, (types, ok, desc) in CHECKS.items():
        v = get_path(values, key)
        # bool is an int subclass; only accept it where a bool is expected
        if (isinstance(v, bool) and bool not in types) or not isinstance(v, types) or not ok(v):
            raise ConfigError(f"{key}: expected {desc}, got {v!r}")
    base = Path(base_dir)
    for key in REQUIRED_PATHS + OPTIONAL_PATHS:
        rel = values["data"][key]
        if rel is None:
            if key in REQUIRED_PATHS:
                raise ConfigError(f"missing required path data.{key}")
            continue
        if not isinstance(rel, str):
            raise ConfigError(f"data.{key}: expected a path string")
        if check_paths and not (base / rel).is_file():
            raise ConfigError(f"data.{key}: no such file {rel!r}")
    return PipelineConfig(values, base)


def validate_config(path: str | Path, overrides=(), check_paths: bool = True) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    doc = loads_strict(text)
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        set_path(doc, key, value)
    return validate(doc, path.parent, check_paths)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
