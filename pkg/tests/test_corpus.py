import json

import pytest

from sspg.corpus import (COPY_KINDS, DatasetError, Example, Triple, dump_examples, fuse, load_dataset,
                         make_synthetic, realise, training_pairs, write_dataset)
from sspg.evaluation import gold_copy_decision


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")


def test_single_line_file(tmp_path):
    f = tmp_path / "d.jsonl"
    write_lines(f, [{"subject": "a", "relation": "r", "object": "b", "references": ["a r b"]}])
    ds = load_dataset(f)
    assert ds.counts()["train"] == {"triples": 1, "verbalisations": 1}
    assert ds.train[0].triple == Triple("a", "r", "b")


def test_empty_object_rejected_with_line_number(tmp_path):
    f = tmp_path / "d.jsonl"
    write_lines(f, [{"subject": "a", "relation": "r", "object": "b", "references": ["x"]},
                    {"subject": "a", "relation": "r", "object": "  ", "references": ["x"]}])
    with pytest.raises(DatasetError, match=r"d\.jsonl:2: empty object"):
        load_dataset(f)


@pytest.mark.parametrize("bad", [
    {"subject": "a", "relation": "r", "object": "b", "references": []},
    {"subject": "a", "relation": "r", "object": "b", "references": [""]},
    {"subject": "a", "relation": "r", "object": "b"},
    {"subject": "a", "relation": "r", "object": "b", "references": ["x"], "split": "dev"},
])
def test_invalid_records(tmp_path, bad):
    f = tmp_path / "d.jsonl"
    write_lines(f, [bad])
    with pytest.raises(DatasetError, match=":1:"):
        load_dataset(f)


def test_malformed_json_line(tmp_path):
    f = tmp_path / "d.jsonl"
    f.write_text('{"subject": "a"\n', encoding="utf-8")
    with pytest.raises(DatasetError, match=":1:"):
        load_dataset(f)


def test_directory_layout_and_round_trip(tmp_path):
    ds = make_synthetic(seed=3, n_train=20, n_eval=5)
    write_dataset(ds, tmp_path / "data")
    assert sorted(p.name for p in (tmp_path / "data").iterdir()) == ["test.jsonl", "train.jsonl", "valid.jsonl"]
    again = load_dataset(tmp_path / "data")
    assert again.counts() == ds.counts()
    assert dump_examples(again.all_examples()) == dump_examples(ds.all_examples())
    write_dataset(again, tmp_path / "one.jsonl")
    assert dump_examples(load_dataset(tmp_path / "one.jsonl").all_examples()) == dump_examples(ds.all_examples())


def test_missing_path():
    with pytest.raises(FileNotFoundError):
        load_dataset("/nonexistent/data.jsonl")


def test_training_pairs_explode_references():
    ex = Example(Triple("a", "r", "b"), ["one", "two", "three"])
    assert training_pairs([ex]) == [(ex.triple, "one"), (ex.triple, "two"), (ex.triple, "three")]


def test_synthetic_is_deterministic():
    a, b = make_synthetic(7, 50, 10), make_synthetic(7, 50, 10)
    assert dump_examples(a.all_examples()) == dump_examples(b.all_examples())
    assert dump_examples(make_synthetic(8, 50, 10).all_examples()) != dump_examples(a.all_examples())


def test_prefix_fusion():
    assert realise("{u:O} yi{S}", "Mzantsi Afrika", "Cyril Ramaphosa") == "uCyril Ramaphosa yiMzantsi Afrika"
    assert fuse("yase", "Ethiopia") == "yase-Ethiopia"
    assert fuse("yase", "Jamani") == "yaseJamani"
    assert fuse("", "Kapa") == "Kapa"


def test_synthetic_fused_prefix_copy():
    ds = make_synthetic(0, 200, 20)
    ex = next(e for e in ds.test if e.triple.relation == "leaderName" and e.triple.subject in e.translations)
    ref = ex.references[0]
    assert ref.startswith(fuse("U", ex.triple.object) + " ")
    assert ex.triple.subject not in ref and ex.translations[ex.triple.subject] in ref


def test_synthetic_heldout_entities_are_unseen():
    ds = make_synthetic(0, 500, 100)
    seen = {e for ex in ds.train for e in (ex.triple.subject, ex.triple.object)}
    held = [e for ex in ds.test for e, kind in zip((ex.triple.subject, ex.triple.object), ex.category.split("-"))]
    unseen = [e for e in held if e not in seen]
    assert len(unseen) / len(held) >= 0.3
    copy_entities = [e for ex in ds.test for e, kind in zip((ex.triple.subject, ex.triple.object),
                                                              ex.category.split("-")) if kind in COPY_KINDS]
    assert all(e not in seen for e in copy_entities)


def test_synthetic_decisions_balanced_and_recoverable():
    ds = make_synthetic(0, 600, 100)
    decisions = []
    for ex in ds.all_examples():
        subj, obj = gold_copy_decision(ex.triple, ex.references)
        for d, e, kind in ((subj, ex.triple.subject, ex.category.split("-")[0]),
                           (obj, ex.triple.object, ex.category.split("-")[1])):
            assert (d.decision == "translate") == (e in ex.translations)
            if kind in COPY_KINDS:
                assert d.decision == "copy"
            decisions.append(d.decision)
    share = decisions.count("copy") / len(decisions)
    assert 0.25 <= share <= 0.75


def test_synthetic_reference_counts():
    ds = make_synthetic(0, 300, 30)
    assert all(1 <= len(e.references) <= 2 for e in ds.train)
    assert all(2 <= len(e.references) <= 3 for e in ds.test)
    assert any(len(e.references) == 2 for e in ds.train)


def test_synthetic_rejects_nonpositive_sizes():
    with pytest.raises(ValueError):
        make_synthetic(0, 0, 5)
