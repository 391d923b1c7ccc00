import numpy as np
import pytest

from sspg.autodiff import Adam, NonFiniteError, grad_check
from sspg.segmental import (batch_loss, brute_force_marginal, log_marginal, segmentation_logprob, segmentations,
                            train_step, viterbi_segment)

from toys import TOY_TRIPLE, randomize, toy_model


def setup(L=3, seed=0, kind="sspg", scale=1.0, texts=("ab ca", "abc", "ba")):
    rng = np.random.default_rng(seed)
    m = randomize(toy_model(kind=kind, L=L, texts=list(texts)), rng, scale)
    ids = m.source_ids(TOY_TRIPLE)
    return m, ids, m.encode(ids)


def test_single_character_target():
    m, ids, enc = setup()
    st = m.init_state(enc)
    expected = m.mixture_next_subword(st, enc, "a")
    st = m.advance_text(st, "a")
    expected += m.eos_logprob(st, m.mixture(st, enc))
    assert abs(log_marginal(m, ids, "a") - expected) < 1e-10


def test_two_character_target_is_two_term_sum():
    m, ids, enc = setup()
    st0 = m.init_state(enc)
    whole = m.mixture_next_subword(st0, enc, "ab")
    st1 = m.advance_text(st0, "a")
    split = m.mixture_next_subword(st0, enc, "a") + m.mixture_next_subword(st1, enc, "b")
    st2 = m.advance_text(st1, "b")
    eos = m.eos_logprob(st2, m.mixture(st2, enc))
    assert abs(log_marginal(m, ids, "ab") - (np.logaddexp(whole, split) + eos)) < 1e-10


def test_four_chars_two_max_has_five_segmentations():
    m, ids, enc = setup(L=2)
    segs = list(segmentations("abca", 2))
    assert len(segs) == 5
    total = np.logaddexp.reduce([segmentation_logprob(m, enc, s) for s in segs])
    assert abs(log_marginal(m, ids, "abca") - total) < 1e-10


def test_space_forces_boundary():
    segs = list(segmentations("ab ca", 3))
    assert all(" " in s for s in segs)
    assert all(any(x == " " for x in s) for s in segs)
    assert len(segs) == 4


def test_max_len_one_single_segmentation():
    m, ids, enc = setup(L=1)
    assert list(segmentations("abc", 1)) == [["a", "b", "c"]]
    assert abs(log_marginal(m, ids, "abc") - brute_force_marginal(m, ids, "abc")) < 1e-10


@pytest.mark.parametrize("kind", ["sspg", "ssd"])
@pytest.mark.parametrize("L", [1, 2, 3, 5])
def test_dp_matches_enumeration(kind, L):
    rng = np.random.default_rng(L)
    m, ids, _ = setup(L=L, seed=L, kind=kind)
    for _ in range(4):
        n = int(rng.integers(1, 9))
        y = "".join(rng.choice(list("abc "), size=n))
        y = y.strip() or "a"
        assert abs(log_marginal(m, ids, y) - brute_force_marginal(m, ids, y)) < 1e-6


def test_brute_force_guard():
    m, ids, _ = setup()
    with pytest.raises(ValueError):
        brute_force_marginal(m, ids, "a" * 13)
    with pytest.raises(ValueError):
        log_marginal(m, ids, "")


def test_viterbi_single_chars_when_l_is_one():
    m, ids, _ = setup(L=1)
    assert viterbi_segment(m, ids, "abc a") == ["a", "b", "c", " ", "a"]


def test_viterbi_matches_enumeration_and_bounded():
    for seed in range(6):
        m, ids, enc = setup(seed=seed, scale=1.5)
        for y in ("abca", "ab cb", "cab"):
            best = viterbi_segment(m, ids, y)
            assert "".join(best) == y
            scored = [(segmentation_logprob(m, enc, s), s) for s in segmentations(y, 3)]
            top = max(s for s, _ in scored)
            assert abs(segmentation_logprob(m, enc, best) - top) < 1e-9
            assert segmentation_logprob(m, enc, best) <= log_marginal(m, ids, y) + 1e-12


def test_grad_check_full_objective():
    for kind in ("sspg", "ssd", "pg"):
        m = toy_model(kind=kind, L=3, seed=1)
        pairs = [(m.source_ids(TOY_TRIPLE), "abc" if kind != "pg" else "ab c")]
        assert grad_check(lambda G: batch_loss(m, G, pairs), m.params, n_samples=60, seed=1) < 1e-4


def test_loss_non_increasing_on_repeated_pair():
    m = toy_model(seed=0, emb=6, hidden=6)
    pairs = [(m.source_ids(TOY_TRIPLE), "abc")] * 4
    opt = Adam(m.params, lr=1e-3)
    losses = [train_step(m, pairs, opt, seed=0) for _ in range(50)]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_zero_lr_is_fixed_point():
    m = toy_model(seed=0)
    pairs = [(m.source_ids(TOY_TRIPLE), "abc")]
    opt = Adam(m.params, lr=0.0)
    losses = [train_step(m, pairs, opt, seed=0) for _ in range(3)]
    assert losses[0] == losses[1] == losses[2]


def test_non_finite_loss_raises():
    m = toy_model(seed=0)
    m.params["gate_W"][0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        train_step(m, [(m.source_ids(TOY_TRIPLE), "abc")], Adam(m.params))
    with pytest.raises(ValueError):
        train_step(m, [], Adam(m.params))


def test_gate_forced_to_char_model_gives_pure_char_marginal():
    m, ids, enc = setup(seed=4)
    m.params["gate_b"][...] = 800.0
    y = "ab ca"
    terms = []
    for segs in segmentations(y, 3):
        st, total = m.init_state(enc), 0.0
        for s in segs:
            total += m.segment_logprob_char(st, m.mixture(st, enc), s)
            st = m.advance_text(st, s)
        mix = m.mixture(st, enc)
        total += m.char_step(st.h, mix.ctx)[m.chars.eos_id]
        terms.append(total)
    assert abs(log_marginal(m, ids, y) - np.logaddexp.reduce(terms)) < 1e-9
