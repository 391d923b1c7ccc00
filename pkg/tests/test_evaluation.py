import math
from collections import Counter

import pytest

from sspg.corpus import Example, Triple, make_synthetic
from sspg.evaluation import (RelationClassifier, bleu, chrf, copy_gold_f1, corpus_chrf, entity_prf, evaluate,
                             gold_copy_decision, longest_common_substring, relation_accuracy,
                             train_relation_classifier, translated_form)

# -- independent formula-level oracles ------------------------------------------


def oracle_counts(seq, n):
    out = {}
    for i in range(len(seq) - n + 1):
        key = tuple(seq[i:i + n])
        out[key] = out.get(key, 0) + 1
    return out


def oracle_words(text):
    out = []
    for tok in text.split():
        cur = ""
        for ch in tok:
            if ch.isalnum() or ch == "_":
                cur += ch
            else:
                if cur:
                    out.append(cur)
                out.append(ch)
                cur = ""
        if cur:
            out.append(cur)
    return out


def oracle_chrf(hyp, ref, char_n=6, word_n=0, beta=2.0):
    hc, rc = list(hyp.replace(" ", "")), list(ref.replace(" ", ""))
    hw, rw = oracle_words(hyp), oracle_words(ref)
    precs, recs = [], []
    for seqs, top in (((hc, rc), char_n), ((hw, rw), word_n)):
        for n in range(1, top + 1):
            h, r = oracle_counts(seqs[0], n), oracle_counts(seqs[1], n)
            th, tr = sum(h.values()), sum(r.values())
            if th == 0 or tr == 0:
                continue
            m = sum(min(c, r.get(g, 0)) for g, c in h.items())
            precs.append(m / th)
            recs.append(m / tr)
    if not precs:
        return 0.0
    p, r = sum(precs) / len(precs), sum(recs) / len(recs)
    if p == 0 and r == 0:
        return 0.0
    return 100 * (1 + beta ** 2) * p * r / (beta ** 2 * p + r)


def oracle_bleu(hyps, refsets):
    match, total = [0] * 4, [0] * 4
    c = r = 0
    for hyp, refs in zip(hyps, refsets):
        h = oracle_words(hyp)
        rs = [oracle_words(x) for x in refs]
        c += len(h)
        r += sorted(rs, key=lambda t: (abs(len(t) - len(h)), len(t)))[0].__len__()
        for n in range(1, 5):
            hc = oracle_counts(h, n)
            for g, k in hc.items():
                match[n - 1] += min(k, max(oracle_counts(t, n).get(g, 0) for t in rs))
            total[n - 1] += sum(hc.values())
    if any(m == 0 for m, t in zip(match, total) if t > 0):
        return 0.0
    logs = [math.log(m / t) for m, t in zip(match, total) if t > 0]
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return 100 * bp * math.exp(sum(logs) / len(logs))


PAIRS = [
    ("abcd", "abce"),
    ("the cat sat on the mat", "the cat sat on a mat"),
    ("UKato Lime wazalelwa eBeza.", "UKato Lime wazalelwa eBeza."),
    ("Ikomkhulu loMzantsi Afrika liKapa.", "Ikomkhulu laseMzantsi Afrika liKapa."),
    ("I-Cape Town likomkhulu laseSouth Africa.", "Ikomkhulu loMzantsi Afrika liKapa."),
    ("a b c", "c b a"),
    ("hello, world!", "hello world"),
    ("xyz", "abc"),
    ("short", "a much longer reference sentence"),
    ("aaaa aaaa", "aaa"),
    ("Inkokheli yaseJamani nguTabe Niso.", "UTabe Niso yinkokheli yaseJamani."),
    ("one two three four five", "one two three four six"),
]


@pytest.mark.parametrize("hyp,ref", PAIRS)
def test_chrf_and_chrfpp_match_oracle(hyp, ref):
    assert abs(chrf(hyp, [ref]) - oracle_chrf(hyp, ref)) < 1e-4
    assert abs(chrf(hyp, [ref], word_n=2) - oracle_chrf(hyp, ref, word_n=2)) < 1e-4


def test_chrf_hand_value():
    # unigrams 3/4 both ways, bigrams 2/3 both ways -> P = R = 17/24
    assert chrf("abcd", ["abce"], char_n=2) == pytest.approx(100 * 17 / 24, abs=1e-12)


def test_chrf_perfect_disjoint_empty():
    assert chrf("UKato wazalwa.", ["UKato wazalwa."]) == 100.0
    assert chrf("UKato wazalwa.", ["UKato wazalwa."], word_n=2) == 100.0
    assert chrf("abc", ["xyz"]) == 0.0
    assert chrf("", ["xyz"]) == 0.0


def test_chrf_multi_reference_takes_best():
    refs = ["completely different", "the cat sat"]
    assert chrf("the cat sat", refs) == 100.0
    assert chrf("the cat sat", refs) == chrf("the cat sat", refs[::-1])


def test_corpus_chrf_sums_statistics():
    hyps = [h for h, _ in PAIRS]
    refs = [[r] for _, r in PAIRS]
    # independent: sum counts per order over sentences, then average
    tot = {}
    for h, r in PAIRS:
        for n in range(1, 7):
            hc, rc = oracle_counts(list(h.replace(" ", "")), n), oracle_counts(list(r.replace(" ", "")), n)
            t = tot.setdefault(n, [0, 0, 0])
            t[0] += sum(hc.values())
            t[1] += sum(rc.values())
            t[2] += sum(min(c, rc.get(g, 0)) for g, c in hc.items())
    ps = [m / a for a, b, m in tot.values() if a and b]
    rs = [m / b for a, b, m in tot.values() if a and b]
    p, r = sum(ps) / len(ps), sum(rs) / len(rs)
    expected = 100 * 5 * p * r / (4 * p + r)
    assert abs(corpus_chrf(hyps, refs) - expected) < 1e-4
    assert corpus_chrf([r[0] for r in refs], refs, word_n=2) == 100.0
    with pytest.raises(ValueError):
        corpus_chrf(hyps, refs[:-1])


def test_bleu_matches_oracle():
    hyps = ["the cat sat on the mat .", "UKato Lime wazalelwa eBeza.", "a b c d e f g",
            "Ikomkhulu loMzantsi Afrika liKapa.", "one two three four five six"]
    refs = [["the cat sat on a mat ."], ["UKato Lime wazalwa eBeza.", "UKato Lime wazalelwa eBeza."],
            ["a b c d e f"], ["Ikomkhulu laseMzantsi Afrika liKapa ."], ["one two three four five seven", "x"]]
    assert abs(bleu(hyps, refs) - oracle_bleu(hyps, refs)) < 1e-4


def test_bleu_perfect_and_brevity():
    refs = [["the quick brown fox jumps over the dog"], ["a b c d e"]]
    assert bleu([r[0] for r in refs], refs) == 100.0
    short = ["the quick brown fox jumps", "a b c d"]
    assert 0 < bleu(short, refs) < 100.0
    with pytest.raises(ValueError):
        bleu([], [])
    assert bleu(["zzz qqq"], [["a b"]]) == 0.0


# -- extractive evaluation ------------------------------------------------------

WORKED_EXAMPLES = {
    "a": (Triple("South Africa", "capital", "Cape Town"), ["Ikomkhulu loMzantsi Afrika liKapa."],
          ("translate", "translate")),
    "b": (Triple("Christian Panucci", "club", "Inter Milan"), ["UChristian Panucci udlalela i-Inter Milan."],
          ("copy", "copy")),
    "c": (Triple("Ethiopia", "leaderName", "Mulatu Teshome"),
          ["UMulatu Teshome yinkokheli yase-Ethiopia.", "Igama lenkokheli e-Ethiopia nguMulatu Teshome."],
          ("copy", "copy")),
    "d": (Triple("Canada", "language", "English"),
          ["IsiNgesi lulwimi oluthethwa eKhanada.", "Ulwimi lwesiNgesi luthethwa eKhanada."],
          ("translate", "translate")),
}


@pytest.mark.parametrize("key", sorted(WORKED_EXAMPLES))
def test_gold_decisions_on_worked_examples(key):
    triple, refs, expected = WORKED_EXAMPLES[key]
    subj, obj = gold_copy_decision(triple, refs)
    assert (subj.decision, obj.decision) == expected
    assert (subj.entity_role, obj.entity_role) == ("subject", "object")
    rev = gold_copy_decision(triple, refs[::-1])
    assert (rev[0].decision, rev[1].decision) == expected


def test_gold_decision_normalisation():
    t = Triple("Café Bar", "r", "x")
    subj, obj = gold_copy_decision(t, ["Café   Bar x"])
    assert subj.decision == "copy" and obj.decision == "copy"
    assert gold_copy_decision(Triple("x", "r", "Y"), ["x y"])[1].decision == "translate"
    assert gold_copy_decision(Triple("whole", "r", "whole"), ["whole"])[0].decision == "copy"
    with pytest.raises(ValueError):
        gold_copy_decision(t, [])


def example(key, translations=None):
    triple, refs, _ = WORKED_EXAMPLES[key]
    return Example(triple, refs, "test", translations=translations or {})


def test_overcopying_judged_incorrect():
    for ex in (example("a"), example("a", {"South Africa": "Mzantsi Afrika", "Cape Town": "Kapa"})):
        res = entity_prf(["I-Cape Town likomkhulu laseSouth Africa."], [ex])
        assert [j["correct"] for j in res["judgments"][0]] == [False, False]
        assert res["subject"].p == 0 and res["object"].r == 0


def test_mixed_outcome_translated_subject_missed():
    ex = example("d", {"Canada": "Khanada", "English": "Ngesi"})
    res = entity_prf(["eCanada kuthetwa isiNgesi."], [ex])
    subj, obj = res["judgments"][0]
    assert (subj["correct"], obj["correct"]) == (False, True)
    assert not subj["heuristic"]


def test_misspelt_copy_is_wrong():
    res = entity_prf(["UChristian Puucci udlalela i-Indter Milan."], [example("b")])
    assert res["subject"].r == 0 and res["object"].r == 0


def test_identity_generations_are_perfect():
    exs = [example(k) for k in sorted(WORKED_EXAMPLES)]
    res = entity_prf([e.references[0] for e in exs], exs)
    for role in ("subject", "object"):
        assert (res[role].p, res[role].r, res[role].f1) == (100.0, 100.0, 100.0)


def test_empty_generations_zero_recall():
    exs = [example(k) for k in sorted(WORKED_EXAMPLES)]
    res = entity_prf([""] * len(exs), exs)
    assert res["subject"].r == 0 and res["object"].r == 0
    with pytest.raises(ValueError):
        entity_prf([""], exs)


def test_heuristic_translated_form():
    ex = example("a")
    form, heuristic = translated_form("South Africa", ex)
    assert heuristic and form == "Afri"
    assert longest_common_substring("banana", "ananas") == "anana"
    assert translated_form("Canada", example("d", {"Canada": "Khanada"})) == ("Khanada", False)


def test_copy_gold_f1():
    ds = make_synthetic(0, 50, 20)
    assert copy_gold_f1([e.references[0] for e in ds.test], ds.test) == 100.0
    assert copy_gold_f1(["nothing"] * len(ds.test), ds.test) == 0.0


def test_relation_classifier_accuracy_on_synthetic():
    ds = make_synthetic(1, 600, 100)
    clf = train_relation_classifier(ds.train)
    train_texts = [r for e in ds.train for r in e.references]
    train_labels = [e.triple.relation for e in ds.train for _ in e.references]
    assert relation_accuracy(clf, train_texts, train_labels) >= 95.0
    heldout = [e.references[0] for e in ds.test]
    assert relation_accuracy(clf, heldout, [e.triple.relation for e in ds.test]) >= 90.0


def test_relation_classifier_degenerate_inputs():
    with pytest.raises(ValueError):
        RelationClassifier().fit(["a b", "c d"], ["x", "x"])
    with pytest.raises(ValueError):
        RelationClassifier().fit(["same", "same"], ["x", "y"])


def test_report_schema():
    ds = make_synthetic(2, 80, 10)
    clf = train_relation_classifier(ds.train)
    report = evaluate([e.references[0] for e in ds.test], ds.test, clf)
    assert set(report) >= {"bleu", "chrf", "chrf_pp", "subject", "object", "relation_acc", "per_example"}
    assert report["bleu"] == report["chrf"] == report["chrf_pp"] == 100.0
    assert report["subject"] == {"p": 100.0, "r": 100.0, "f1": 100.0}
    assert len(report["per_example"]) == len(ds.test)
    empty = evaluate([""] * len(ds.test), ds.test, clf)
    assert empty["bleu"] == empty["chrf_pp"] == 0.0 and empty["object"]["r"] == 0.0
    for key in ("subject", "object"):
        for v in empty[key].values():
            assert 0 <= v <= 100
