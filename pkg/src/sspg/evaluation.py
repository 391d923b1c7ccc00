"""Surface metrics and the extractive copy/translate evaluation."""

from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import Example, Triple

# -- chrF / chrF++ ------------------------------------------------------------

_PUNCT = re.compile(r"([^\w\s])")


def char_ngrams(text: str, n: int) -> Counter:
    s = "".join(text.split())
    return Counter(s[i:i + n] for i in range(len(s) - n + 1))


def word_ngrams(text: str, n: int) -> Counter:
    words = _PUNCT.sub(r" \1 ", text).split()
    return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


def chrf_stats(hyp: str, ref: str, char_n: int = 6, word_n: int = 0) -> np.ndarray:
    """Per-order (hyp count, ref count, matches), character orders first."""
    rows = []
    for n in range(1, char_n + 1):
        h, r = char_ngrams(hyp, n), char_ngrams(ref, n)
        rows.append((sum(h.values()), sum(r.values()), sum((h & r).values())))
    for n in range(1, word_n + 1):
        h, r = word_ngrams(hyp, n), word_ngrams(ref, n)
        rows.append((sum(h.values()), sum(r.values()), sum((h & r).values())))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def chrf_from_stats(stats: np.ndarray, beta: float = 2.0) -> float:
    """Precision and recall are averaged over the orders with n-grams on both
    sides, then combined into one F-beta."""
    prec = rec = 0.0
    orders = 0
    for n_hyp, n_ref, n_match in stats:
        if n_hyp > 0 and n_ref > 0:
            prec += n_match / n_hyp
            rec += n_match / n_ref
            orders += 1
    if orders == 0:
        return 0.0
    prec, rec = prec / orders, rec / orders
    b2 = beta * beta
    denom = b2 * prec + rec
    return 0.0 if denom == 0 else 100.0 * (1 + b2) * prec * rec / denom


def _best_ref_stats(hyp: str, refs: list[str], char_n: int, word_n: int, beta: float):
    if not refs:
        raise ValueError("at least one reference required")
    best = None
    for ref in refs:
        stats = chrf_stats(hyp, ref, char_n, word_n)
        score = chrf_from_stats(stats, beta)
        if best is None or score > best[0]:
            best = (score, stats)
    return best


def chrf(hyp: str, refs, char_n: int = 6, word_n: int = 0, beta: float = 2.0) -> float:
    """Sentence chrF (``word_n=2`` for chrF++); the best reference wins."""
    refs = [refs] if isinstance(refs, str) else list(refs)
    return _best_ref_stats(hyp, refs, char_n, word_n, beta)[0]


def corpus_chrf(hyps: list[str], refs: list[list[str]], char_n: int = 6, word_n: int = 0,
                beta: float = 2.0) -> float:
    """Statistics summed over sentences, each against its best reference."""
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} reference sets")
    if not hyps:
        raise ValueError("empty corpus")
    total = sum(_best_ref_stats(h, r, char_n, word_n, beta)[1] for h, r in zip(hyps, refs))
    return chrf_from_stats(total, beta)


# -- BLEU -----------------------------------------------------------------------

def bleu_tokenize(text: str) -> list[str]:
    return _PUNCT.sub(r" \1 ", text).split()


def bleu(hyps: list[str], refs: list[list[str]], max_n: int = 4) -> float:
    """Corpus BLEU with clipped counts, closest-reference length and brevity
    penalty.  Orders with no hypothesis n-grams anywhere in the corpus are
    left out of the geometric mean."""
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} reference sets")
    if not hyps:
        raise ValueError("empty corpus")
    matches = np.zeros(max_n)
    totals = np.zeros(max_n)
    hyp_len = ref_len = 0
    for hyp, rs in zip(hyps, refs):
        if not rs:
            raise ValueError("at least one reference required")
        h = bleu_tokenize(hyp)
        toks = [bleu_tokenize(r) for r in rs]
        hyp_len += len(h)
        ref_len += min((abs(len(t) - len(h)), len(t)) for t in toks)[1]
        for n in range(1, max_n + 1):
            hc = Counter(tuple(h[i:i + n]) for i in range(len(h) - n + 1))
            clip = Counter()
            for t in toks:
                clip |= Counter(tuple(t[i:i + n]) for i in range(len(t) - n + 1))
            matches[n - 1] += sum((hc & clip).values())
            totals[n - 1] += sum(hc.values())
    used = totals > 0
    if hyp_len == 0 or not used.any() or (matches[used] == 0).any():
        return 0.0
    log_prec = np.mean(np.log(matches[used] / totals[used]))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / hyp_len)
    return float(100.0 * bp * math.exp(log_prec))


# -- extractive evaluation --------------------------------------------------------

def normalize(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).split())


@dataclass(frozen=True)
class CopyDecision:
    entity_role: str
    decision: str                 # "copy" | "translate"
    matched_reference_index: int | None = None


def _decide(role: str, entity: str, references: list[str]) -> CopyDecision:
    e = normalize(entity)
    for i, ref in enumerate(references):
        if e in normalize(ref):
            return CopyDecision(role, "copy", i)
    return CopyDecision(role, "translate", None)


def gold_copy_decision(triple: Triple, references: list[str]) -> tuple[CopyDecision, CopyDecision]:
    """Copy when the entity string occurs verbatim in some reference."""
    if not references:
        raise ValueError("at least one reference required")
    return _decide("subject", triple.subject, references), _decide("object", triple.object, references)


def longest_common_substring(a: str, b: str) -> str:
    best, end = 0, 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
                if cur[j] > best:
                    best, end = cur[j], i
        prev = cur
    return a[end - best:end]


def translated_form(entity: str, example: Example) -> tuple[str | None, bool]:
    """Gold surface form of a translated entity and whether it was guessed.

    The example's translation table is authoritative; otherwise the longest
    substring shared by the entity and any reference (at least two
    characters) is taken, which is only a heuristic.
    """
    if entity in example.translations:
        return normalize(example.translations[entity]), False
    best = ""
    for ref in example.references:
        cand = longest_common_substring(normalize(entity), normalize(ref)).strip()
        if len(cand) > len(best):
            best = cand
    return (best if len(best) >= 2 else None), True


@dataclass
class PRF:
    p: float
    r: float
    f1: float

    @classmethod
    def from_counts(cls, correct: int, asserted: int, total: int) -> "PRF":
        p = 100.0 * correct / asserted if asserted else 0.0
        r = 100.0 * correct / total if total else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f1)


def judge_entity(role: str, entity: str, generation: str, example: Example) -> dict:
    """Decide whether one generation verbalises one entity correctly.

    A generation asserts an entity when it contains either the raw entity
    or its gold translated form.  It is correct when it follows the gold
    decision: copy-gold needs the raw string, translate-gold needs the
    translated form and no raw string.
    """
    gold = _decide(role, entity, example.references)
    gen = normalize(generation)
    raw = normalize(entity) in gen
    form, heuristic = (None, False) if gold.decision == "copy" else translated_form(entity, example)
    has_form = form is not None and form in gen
    if gold.decision == "copy":
        correct = raw
    elif form is None:
        # nothing to look for: any nonempty output without the raw string counts
        correct = bool(gen) and not raw
    else:
        correct = has_form and not raw
    return {"role": role, "entity": entity, "gold": gold.decision, "asserted": raw or has_form or correct,
            "correct": correct, "translated_form": form, "heuristic": heuristic}


def entity_prf(generations: list[str], examples: list[Example]) -> dict:
    """Per-role precision (correct / asserted), recall (correct / all) and F1."""
    if len(generations) != len(examples):
        raise ValueError(f"{len(generations)} generations for {len(examples)} examples")
    judgments = []
    counts = {"subject": [0, 0, 0], "object": [0, 0, 0]}
    for gen, ex in zip(generations, examples):
        pair = [judge_entity("subject", ex.triple.subject, gen, ex),
                judge_entity("object", ex.triple.object, gen, ex)]
        for j in pair:
            c = counts[j["role"]]
            c[0] += j["correct"]
            c[1] += j["asserted"]
            c[2] += 1
        judgments.append(pair)
    return {"subject": PRF.from_counts(*counts["subject"]),
            "object": PRF.from_counts(*counts["object"]),
            "judgments": judgments}


def copy_gold_f1(generations: list[str], examples: list[Example]) -> float:
    """F1 over copy-gold entities only: precision over generations that
    contain the entity, recall over all copy-gold entities."""
    correct = asserted = total = 0
    for gen, ex in zip(generations, examples):
        for role, entity in (("subject", ex.triple.subject), ("object", ex.triple.object)):
            if _decide(role, entity, ex.references).decision != "copy":
                continue
            j = judge_entity(role, entity, gen, ex)
            total += 1
            asserted += j["asserted"]
            correct += j["correct"]
    return PRF.from_counts(correct, asserted, total).f1


# -- relation classifier ------------------------------------------------------------

class RelationClassifier:
    """Multinomial logistic regression on character 1-4 gram counts."""

    def __init__(self, c: float = 1.0, seed: int = 0):
        from sklearn.feature_extraction.text import CountVectorizer
        from sklearn.linear_model import LogisticRegression

        self.vectorizer = CountVectorizer(analyzer="char", ngram_range=(1, 4), lowercase=False)
        self.model = LogisticRegression(C=c, max_iter=2000, random_state=seed)

    def fit(self, texts: list[str], labels: list[str]) -> "RelationClassifier":
        if len(set(labels)) < 2:
            raise ValueError("relation classifier needs at least two classes")
        if len(set(texts)) < 2:
            raise ValueError("relation classifier needs at least two distinct texts")
        try:
            X = self.vectorizer.fit_transform(texts)
        except ValueError as exc:
            raise ValueError(f"no usable character features: {exc}") from exc
        self.model.fit(X, labels)
        return self

    def predict(self, texts: list[str]) -> list[str]:
        return list(self.model.predict(self.vectorizer.transform(texts)))


def train_relation_classifier(examples: list[Example], seed: int = 0) -> RelationClassifier:
    texts, labels = [], []
    for ex in examples:
        for ref in ex.references:
            texts.append(ref)
            labels.append(ex.triple.relation)
    return RelationClassifier(seed=seed).fit(texts, labels)


def relation_accuracy(classifier: RelationClassifier, generations: list[str], relations: list[str]) -> float:
    if len(generations) != len(relations):
        raise ValueError(f"{len(generations)} generations for {len(relations)} relations")
    if not generations:
        return 0.0
    pred = classifier.predict(generations)
    return 100.0 * float(np.mean([p == g for p, g in zip(pred, relations)]))


# -- report -----------------------------------------------------------------------

def evaluate(generations: list[str], examples: list[Example],
             classifier: RelationClassifier | None = None) -> dict:
    """Full report: surface metrics, per-role entity scores, relation accuracy."""
    if len(generations) != len(examples):
        raise ValueError(f"{len(generations)} generations for {len(examples)} examples")
    if not examples:
        raise ValueError("empty evaluation set")
    refs = [ex.references for ex in examples]
    ent = entity_prf(generations, examples)
    rel = (relation_accuracy(classifier, generations, [ex.triple.relation for ex in examples])
           if classifier is not None else None)
    per_example = []
    for gen, ex, pair in zip(generations, examples, ent["judgments"]):
        per_example.append({"generation": gen, "chrf_pp": chrf(gen, ex.references, word_n=2),
                            "subject": pair[0], "object": pair[1]})
    return {
        "bleu": bleu(generations, refs),
        "chrf": corpus_chrf(generations, refs),
        "chrf_pp": corpus_chrf(generations, refs, word_n=2),
        "subject": asdict(ent["subject"]),
        "object": asdict(ent["object"]),
        "relation_acc": rel,
        "heuristic_alignment": any(j["heuristic"] for pair in ent["judgments"] for j in pair),
        "per_example": per_example,
    }
