"""Triple-to-text datasets: JSONL loading and a synthetic agglutinative corpus.

One JSON object per line::

    {"subject": ..., "relation": ..., "object": ..., "references": [...],
     "split": "train"|"valid"|"test", "category": ..., "translations": {...}}

``category`` and ``translations`` (entity -> translated surface form) are
optional.  A directory holding ``train.jsonl``/``valid.jsonl``/``test.jsonl``
is accepted as well; there the file name supplies the default split.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPLITS = ("train", "valid", "test")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str

    def __post_init__(self):
        for name in ("subject", "relation", "object"):
            if not getattr(self, name).strip():
                raise DatasetError(f"empty {name} field")


@dataclass
class Example:
    triple: Triple
    references: list[str]
    split: str = "train"
    category: str | None = None
    translations: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.references:
            raise DatasetError("example has no references")
        if any(not r.strip() for r in self.references):
            raise DatasetError("empty reference string")
        if self.split not in SPLITS:
            raise DatasetError(f"unknown split {self.split!r}")

    def to_json(self) -> dict:
        obj = {"subject": self.triple.subject, "relation": self.triple.relation,
               "object": self.triple.object, "references": list(self.references), "split": self.split}
        if self.category is not None:
            obj["category"] = self.category
        if self.translations:
            obj["translations"] = dict(self.translations)
        return obj


@dataclass
class Dataset:
    examples: dict[str, list[Example]] = field(default_factory=lambda: {s: [] for s in SPLITS})

    @property
    def train(self) -> list[Example]:
        return self.examples["train"]

    @property
    def valid(self) -> list[Example]:
        return self.examples["valid"]

    @property
    def test(self) -> list[Example]:
        return self.examples["test"]

    def counts(self) -> dict[str, dict[str, int]]:
        return {s: {"triples": len(exs), "verbalisations": sum(len(e.references) for e in exs)}
                for s, exs in self.examples.items()}

    def categories(self) -> set[str]:
        return {e.category for exs in self.examples.values() for e in exs if e.category is not None}

    def all_examples(self) -> list[Example]:
        return [e for s in SPLITS for e in self.examples[s]]


def training_pairs(examples: list[Example]) -> list[tuple[Triple, str]]:
    """One (triple, text) pair per reference."""
    return [(e.triple, ref) for e in examples for ref in e.references]


def parse_example(obj: dict, default_split: str = "train") -> Example:
    if not isinstance(obj, dict):
        raise DatasetError("record is not a JSON object")
    try:
        triple = Triple(str(obj["subject"]), str(obj["relation"]), str(obj["object"]))
        refs = obj["references"]
    except KeyError as exc:
        raise DatasetError(f"missing field {exc.args[0]!r}") from None
    if not isinstance(refs, list):
        raise DatasetError("references must be a list")
    return Example(triple=triple, references=[str(r) for r in refs], split=obj.get("split", default_split),
                   category=obj.get("category"), translations=dict(obj.get("translations") or {}))


def _read_jsonl(path: Path, dataset: Dataset, default_split: str):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                ex = parse_example(json.loads(line), default_split)
            except (json.JSONDecodeError, DatasetError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            dataset.examples[ex.split].append(ex)


def load_dataset(path) -> Dataset:
    path = Path(path)
    dataset = Dataset()
    if path.is_dir():
        found = False
        for split in SPLITS:
            f = path / f"{split}.jsonl"
            if f.exists():
                _read_jsonl(f, dataset, split)
                found = True
        if not found:
            raise DatasetError(f"{path}: no train/valid/test.jsonl files")
    elif path.exists():
        _read_jsonl(path, dataset, "train")
    else:
        raise FileNotFoundError(path)
    return dataset


def dump_examples(examples: list[Example]) -> str:
    return "".join(json.dumps(e.to_json(), ensure_ascii=False, sort_keys=True) + "\n" for e in examples)


def write_dataset(dataset: Dataset, path) -> None:
    """Write a directory of per-split JSONL files (or a single file for a ``.jsonl`` path)."""
    path = Path(path)
    if path.suffix == ".jsonl":
        path.write_text(dump_examples(dataset.all_examples()), encoding="utf-8")
        return
    path.mkdir(parents=True, exist_ok=True)
    for split in SPLITS:
        (path / f"{split}.jsonl").write_text(dump_examples(dataset.examples[split]), encoding="utf-8")


# -- synthetic data -----------------------------------------------------------

_SYLLABLES = ["ka", "to", "be", "li", "sa", "nu", "ri", "po", "de", "la", "mo", "zi",
              "ta", "ne", "bu", "fe", "go", "wa", "si", "ku", "me", "ro", "ha", "vi"]
_ONSETS = ["a", "e", "i", "o", "u"]

# English name -> isiXhosa-style surface form; identical forms are copied verbatim.
COUNTRIES = {
    "South Africa": "Mzantsi Afrika", "Germany": "Jamani", "France": "Fransi", "England": "Ngilane",
    "Canada": "Khanada", "Spain": "Speyini", "Italy": "Ithali", "Greece": "Grisi", "Egypt": "Ijiphutha",
    "Japan": "Japhani", "Ireland": "Ayalende", "Sweden": "Swideni", "China": "Tshayina", "India": "Indiya",
    "Russia": "Rashiya", "Mexico": "Meksiko", "Scotland": "Skotlani", "Australia": "Ostreliya",
    "Ethiopia": "Ethiopia", "Kenya": "Kenya", "Brazil": "Brazil", "Portugal": "Portugal",
    "Zimbabwe": "Zimbabwe", "Botswana": "Botswana", "Lesotho": "Lesotho", "Norway": "Norway",
    "Argentina": "Argentina", "Uganda": "Uganda",
}
LANGUAGES = {
    "English": "Ngesi", "French": "Fulentshi", "German": "Jamani", "Spanish": "Speyini",
    "Greek": "Grike", "Japanese": "Japhani", "Arabic": "Arabhu", "Swedish": "Swidishi",
    "Portuguese": "Phuthukezi", "Russian": "Rashiya", "Chinese": "Tshayina", "Italian": "Ithali",
}

# (relation, subject kind, object kind, paraphrase templates).  "{pre:S}" fuses
# the prefix onto the subject's surface form ("yase" + "Jamani" -> "yaseJamani",
# "yase" + "Ethiopia" -> "yase-Ethiopia"); "{S}" inserts it bare.
_RELATIONS = [
    ("leaderName", "country", "person",
     ["{U:O} yinkokheli {yase:S}.", "Inkokheli {yase:S} {ngu:O}.", "{U:O} ukhokela {i:S}."]),
    ("capital", "country", "city", ["Ikomkhulu {lo:S} {li:O}.", "{I:O} likomkhulu {lase:S}."]),
    ("birthPlace", "person", "city", ["{U:S} wazalelwa {e:O}.", "{U:S} wazalwa {e:O}."]),
    ("language", "country", "language",
     ["{Isi:O} lulwimi oluthethwa {e:S}.", "{E:S} kuthethwa {isi:O}."]),
    ("club", "person", "city", ["{U:S} udlalela {i:O}.", "{U:S} ulidlala kwiqela {la:O}."]),
    ("nationality", "person", "country", ["{U:S} ngummi {wase:O}.", "{U:S} uvela {e:O}."]),
    ("birthYear", "person", "year", ["{U:S} wazalwa ngo-{O}.", "{U:S} wazalwa ngonyaka ka-{O}."]),
]
COPY_KINDS = {"person", "city", "year"}
_SLOT = re.compile(r"\{(?:([^:{}]+):)?([SO])\}")


def fuse(prefix: str, form: str) -> str:
    """Attach a class/locative prefix; vowel-initial forms take a hyphen."""
    if not prefix:
        return form
    return f"{prefix}-{form}" if form[0].lower() in "aeiou" else prefix + form


def realise(template: str, subj: str, obj: str) -> str:
    return _SLOT.sub(lambda m: fuse(m.group(1) or "", subj if m.group(2) == "S" else obj), template)


def _name(rng: np.random.Generator, words: int) -> str:
    parts = []
    for _ in range(words):
        first = _ONSETS[rng.integers(len(_ONSETS))] if rng.random() < 0.25 else _SYLLABLES[rng.integers(len(_SYLLABLES))]
        parts.append((first + _SYLLABLES[rng.integers(len(_SYLLABLES))]).capitalize())
    return " ".join(parts)


def _name_pool(rng: np.random.Generator, n: int, words: int, exclude: set[str]) -> list[str]:
    out: list[str] = []
    seen = set(exclude)
    while len(out) < n:
        name = _name(rng, words)
        if name not in seen:
            seen.add(name)
            out.append(name)
    return out


def make_synthetic(seed: int = 0, n_train: int = 1000, n_eval: int = 200) -> Dataset:
    """Synthetic triples verbalised with paraphrase templates and fused prefixes.

    Person names, city names and years are always copied verbatim behind a
    fused prefix ("uKato Lime", "e-Ato"); a country or language is either
    translated through a fixed dictionary or, for some countries, copied.
    Training examples carry one or two references, evaluation examples
    every paraphrase.  Validation and test draw person, city and year values
    from pools disjoint from training, so those copy targets are unseen.
    """
    if n_train < 1 or n_eval < 1:
        raise ValueError("make_synthetic: n_train and n_eval must be >= 1")
    rng = np.random.default_rng(seed)
    years = [str(y) for y in range(1900, 2021)]
    held_years = set(years[5::6])
    pools = {
        "train": {"person": _name_pool(rng, max(8, n_train // 3), 2, set()),
                  "city": _name_pool(rng, max(8, n_train // 6), 1, set()),
                  "year": [y for y in years if y not in held_years]},
    }
    taken = set(pools["train"]["person"]) | set(pools["train"]["city"])
    pools["eval"] = {"person": _name_pool(rng, max(8, n_eval), 2, taken),
                     "city": _name_pool(rng, max(8, n_eval // 2), 1, taken),
                     "year": sorted(held_years)}
    countries = sorted(COUNTRIES)
    languages = sorted(LANGUAGES)

    def entity(kind: str, pool: dict) -> tuple[str, str]:
        if kind == "country":
            e = countries[rng.integers(len(countries))]
            return e, COUNTRIES[e]
        if kind == "language":
            e = languages[rng.integers(len(languages))]
            return e, LANGUAGES[e]
        names = pool[kind]
        e = names[rng.integers(len(names))]
        return e, e

    dataset = Dataset()
    for split, n in (("train", n_train), ("valid", n_eval), ("test", n_eval)):
        pool = pools["train" if split == "train" else "eval"]
        for _ in range(n):
            rel, sk, ok, templates = _RELATIONS[rng.integers(len(_RELATIONS))]
            subj, subj_form = entity(sk, pool)
            obj, obj_form = entity(ok, pool)
            if split == "train":
                chosen = rng.permutation(len(templates))[:1 + int(rng.random() < 0.4)]
                templates = [templates[i] for i in sorted(chosen)]
            refs = [realise(t, subj_form, obj_form) for t in templates]
            translations = {e: f for e, f in ((subj, subj_form), (obj, obj_form)) if e != f}
            dataset.examples[split].append(Example(
                triple=Triple(subj, rel, obj), references=refs, split=split,
                category=f"{sk}-{ok}", translations=translations))
    return dataset
