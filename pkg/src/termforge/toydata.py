"""Deterministic French/German toy corpora for exercising the whole pipeline.

Sentences are built from aligned chunks (subject, verb, object, adjunct), so
every clean pair has a known word-level correspondence.  The election domain
carries the terminology ("gilets jaunes" -> "Gelbwesten") and the names used
by copy-candidate extraction: "Dupont-Aignan" is written the same in both
languages, "Poutine" becomes "Putin" in German.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .config import atomic_write_text, stage_seed

# (french, german, plural?)
NEWS_SUBJECTS = [
    ("les gilets jaunes", "die Gelbwesten", True),
    ("les manifestants", "die Demonstranten", True),
    ("le gouvernement", "die Regierung", False),
    ("la France Insoumise", "die France Insoumise", False),
    ("Nicolas Dupont-Aignan", "Nicolas Dupont-Aignan", False),
    ("Emmanuel Macron", "Emmanuel Macron", False),
    ("Poutine", "Putin", False),
    ("le président", "der Präsident", False),
    ("les électeurs", "die Wähler", True),
    ("le parlement européen", "das Europäische Parlament", False),
]
NEWS_VERBS = [
    (("critique", "kritisiert"), ("critiquent", "kritisieren")),
    (("soutient", "unterstützt"), ("soutiennent", "unterstützen")),
    (("rencontre", "trifft"), ("rencontrent", "treffen")),
    (("défend", "verteidigt"), ("défendent", "verteidigen")),
    (("dénonce", "verurteilt"), ("dénoncent", "verurteilen")),
]
NEWS_ADJUNCTS = [
    ("à Paris", "in Paris"),
    ("à Bruxelles", "in Brüssel"),
    ("avant les élections européennes", "vor den Europawahlen"),
    ("samedi", "am Samstag"),
    ("dans la rue", "auf der Straße"),
    ("pendant la campagne", "während des Wahlkampfs"),
]
OTHER_SUBJECTS = [
    ("le chef", "der Koch", False),
    ("les joueurs", "die Spieler", True),
    ("le restaurant", "das Restaurant", False),
    ("les enfants", "die Kinder", True),
    ("la cuisinière", "die Köchin", False),
]
OTHER_VERBS = [
    (("mange", "isst"), ("mangent", "essen")),
    (("gagne", "gewinnt"), ("gagnent", "gewinnen")),
    (("aime", "liebt"), ("aiment", "lieben")),
    (("prépare", "bereitet"), ("préparent", "bereiten")),
]
OTHER_OBJECTS = [
    ("le match", "das Spiel"),
    ("la soupe", "die Suppe"),
    ("le fromage", "den Käse"),
    ("la finale", "das Finale"),
    ("le dessert", "das Dessert"),
    ("les maillots jaunes", "die gelben Trikots"),
]
OTHER_ADJUNCTS = [
    ("ce soir", "heute Abend"),
    ("au stade", "im Stadion"),
    ("en cuisine", "in der Küche"),
    ("avec du pain", "mit Brot"),
]
NEW_TERMS = ("les gilets jaunes",)
GAZETTEER = ["Nicolas Dupont-Aignan", "Emmanuel Macron", "France Insoumise"]


def _capitalize(text: str) -> str:
    return text[:1].upper() + text[1:]


def _sentence(rng: random.Random, news: bool, exclude=()) -> tuple[str, str]:
    if news:
        subjects = [s for s in NEWS_SUBJECTS if s[0] not in exclude]
        verbs, adjuncts = NEWS_VERBS, NEWS_ADJUNCTS
        objects = [(f, g) for f, g, _ in subjects]
    else:
        subjects, verbs, adjuncts, objects = OTHER_SUBJECTS, OTHER_VERBS, OTHER_ADJUNCTS, OTHER_OBJECTS
    s_fr, s_de, plural = rng.choice(subjects)
    v_fr, v_de = rng.choice(verbs)[plural]
    o_fr, o_de = rng.choice([o for o in objects if o[0] != s_fr])
    fr, de = [s_fr, v_fr, o_fr], [s_de, v_de, o_de]
    if rng.random() < 0.6:
        a_fr, a_de = rng.choice(adjuncts)
        fr.append(a_fr)
        de.append(a_de)
    return _capitalize(" ".join(fr)) + " .", _capitalize(" ".join(de)) + " ."


def _corrupt(rng: random.Random, src: str, tgt: str, others: list[str]) -> str:
    kind = rng.randrange(3)
    if kind == 0:
        return rng.choice([o for o in others if o != tgt])  # misaligned
    if kind == 1:
        return src  # untranslated copy
    words = tgt.split()
    return " ".join(words[: max(1, len(words) // 3)])  # truncated


def generate(seed: int = 0, n_bitext: int = 400, n_mono: int = 300, n_dev: int = 30, noise: float = 0.25):
    """Toy corpora as a dict of name -> list of lines."""
    rng = random.Random(stage_seed(seed, "toy-data"))
    # The parallel data predates the new term, as in the real setting.
    bitext = [_sentence(rng, rng.random() < 0.4, exclude=NEW_TERMS) for _ in range(n_bitext)]
    tgt_lines = [t for _, t in bitext]
    src_out, tgt_out, labels = [], [], []
    for i, (s, t) in enumerate(bitext):
        if rng.random() < noise:
            t = _corrupt(rng, s, t, tgt_lines)
            labels.append(f"{i}\t0")
        else:
            labels.append(f"{i}\t1")
        src_out.append(s)
        tgt_out.append(t)
    mono = [_sentence(rng, rng.random() < 0.5) for _ in range(n_mono)]
    dev = [_sentence(rng, True) for _ in range(n_dev)]
    return {
        "bitext.fr": src_out,
        "bitext.de": tgt_out,
        "labels.tsv": labels,
        "mono.fr": [f for f, _ in mono],
        # German news is drawn independently so it is not a translation of mono.fr
        "mono.de": [_sentence(rng, rng.random() < 0.5)[1] for _ in range(n_mono)],
        "dev.fr": [f for f, _ in dev],
        "dev.de": [g for _, g in dev],
        "gazetteer.fr": list(GAZETTEER),
    }


def toy_config(output_dir: str = "run", seed: int = 0) -> dict:
    return {
        "seed": seed,
        "output_dir": output_dir,
        "data": {
            "bitext_src": "bitext.fr",
            "bitext_tgt": "bitext.de",
            "mono_src": "mono.fr",
            "mono_tgt": "mono.de",
            "dev_src": "dev.fr",
            "dev_ref": "dev.de",
            "labels": "labels.tsv",
            "gazetteer": "gazetteer.fr",
        },
        "filter": {"trees": 25, "max_depth": 6},
        "bpe": {"merges": 200},
        "phrasex": {"top_k": 60},
        "backtranslate": {"top_n": 40},
    }


def write_toy_data(directory: str | Path, seed: int = 0, **sizes) -> Path:
    """Write the toy corpora and a matching config.json; returns the config path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, lines in generate(seed, **sizes).items():
        atomic_write_text(directory / name, "".join(line + "\n" for line in lines))
    config = directory / "config.json"
    atomic_write_text(config, json.dumps(toy_config(seed=seed), indent=2, sort_keys=True) + "\n")
    return config
