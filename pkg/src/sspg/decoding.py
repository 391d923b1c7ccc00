"""Generation: unmixed greedy/beam and dynamic decoding for segmental models,
token-level beam search for the pointer-generator baseline.

No length normalisation is applied anywhere, so a hypothesis score only
decreases as it grows; every search stops once the best finished hypothesis
outscores everything still open.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DecoderState, EncoderStates, MixtureOutput, Seq2Seq

COMPONENTS = ("char", "gen", "copy")
_ORDER = {c: i for i, c in enumerate(COMPONENTS)}
DEFAULT_MAX_CHARS = 256


@dataclass(frozen=True)
class Candidate:
    segment: str | None      # None is end-of-sequence
    logp: float
    component: str

    def key(self, prefix: str = "", base: float = 0.0):
        return (-(base + self.logp), _ORDER[self.component], prefix + (self.segment or ""))


@dataclass
class Hypothesis:
    chars: str
    logscore: float
    state: DecoderState
    last_component: str | None = None
    done: bool = False
    segments: list = field(default_factory=list)   # (segment, component, logp)


@dataclass
class DecodeResult:
    text: str
    score: float
    segments: list
    truncated: bool = False

    def component_counts(self) -> dict:
        counts = {c: 0 for c in COMPONENTS}
        for _, comp, _ in self.segments:
            counts[comp] += 1
        return counts


def eos_allowed(text: str) -> bool:
    """End of sequence only closes a nonempty output that ends inside a word."""
    return bool(text) and not text[-1].isspace()


def _source(model: Seq2Seq, x):
    return model.source_ids(x) if hasattr(x, "subject") else list(x)


# -- per-component candidates -------------------------------------------------

def char_candidates(model: Seq2Seq, state: DecoderState, mix: MixtureOutput, k: int,
                    top_m: int = 8, allow_eos: bool = True) -> list[Candidate]:
    """Top ``k`` segments under ``g * p_char``, found by depth-limited best-first
    expansion keeping ``top_m`` prefixes per depth (exact when ``top_m`` covers
    every prefix)."""
    chars = model.chars
    L = model.config.max_seg_len
    itos = chars.itos
    real = np.arange(len(itos) - len(chars.chars), len(itos))
    space = np.array([itos[i].isspace() for i in real], dtype=bool)
    lp0 = model.char_step(state.h, mix.ctx)
    done: list[tuple[str | None, float]] = []
    if allow_eos:
        done.append((None, float(lp0[chars.eos_id])))
    frontier = [("", 0.0, state.h, state.c, lp0)]
    for depth in range(L):
        children = []
        for prefix, lp, sh, sc, nxt in frontier:
            ids = real if depth == 0 else real[~space]
            scores = nxt[ids]
            order = np.lexsort((ids, -scores))[:top_m]
            for i in order:
                children.append((prefix + itos[ids[i]], lp + float(scores[i]), sh, sc, int(ids[i])))
        children.sort(key=lambda ch: (-ch[1], ch[0]))
        children = children[:top_m]
        if not children:
            break
        sh = np.stack([ch[2] for ch in children])
        sc = np.stack([ch[3] for ch in children])
        nh, nc = model.char_feed(sh, sc, mix.ctx, np.array([ch[4] for ch in children]))
        lps = model.char_step(nh, mix.ctx)
        frontier = []
        for i, (seg, lp, *_rest) in enumerate(children):
            done.append((seg, lp + float(lps[i, chars.eoseg_id])))
            if depth + 1 < L and not seg.isspace():
                frontier.append((seg, lp, nh[i], nc[i], lps[i]))
    done.sort(key=lambda d: (-d[1], d[0] or ""))
    return [Candidate(seg, mix.log_g + lp, "char") for seg, lp in done[:k]]


def gen_candidates(model: Seq2Seq, mix: MixtureOutput, k: int) -> list[Candidate]:
    base = mix.log_1mg + mix.log_z0
    if not np.isfinite(base):
        return []
    segs = model.lexicon.segments
    order = sorted(range(len(segs)), key=lambda v: (-mix.log_gen[v], segs[v]))[:k]
    return [Candidate(segs[v], base + float(mix.log_gen[v]), "gen") for v in order]


def copy_candidates(model: Seq2Seq, mix: MixtureOutput, k: int) -> list[Candidate]:
    base = mix.log_1mg + mix.log_z1
    if not np.isfinite(base):
        return []
    L = model.config.max_seg_len
    items = sorted(((s, lp) for s, lp in mix.log_copy.items() if len(s) <= L and np.isfinite(lp)),
                   key=lambda it: (-it[1], it[0]))[:k]
    return [Candidate(s, base + lp, "copy") for s, lp in items]


def unmixed_candidates(model: Seq2Seq, state: DecoderState, mix: MixtureOutput, k: int,
                       top_m: int = 8, allow_eos: bool = True) -> list[Candidate]:
    """Top ``k`` from each component (3k total), ranked by unmixed probability."""
    cands = (char_candidates(model, state, mix, k, top_m, allow_eos)
             + gen_candidates(model, mix, k) + copy_candidates(model, mix, k))
    return sorted(cands, key=lambda c: c.key())


def _check_segmental(model: Seq2Seq, name: str):
    if not model.config.segmental:
        raise ValueError(f"{name} needs a segmental model (sspg or ssd), got {model.config.kind}")


# -- unmixed decoding ---------------------------------------------------------

def unmixed_greedy(model: Seq2Seq, x, max_chars: int = DEFAULT_MAX_CHARS, top_m: int = 8) -> DecodeResult:
    _check_segmental(model, "unmixed decoding")
    enc = model.encode(_source(model, x))
    state = model.init_state(enc)
    text, score, segments = "", 0.0, []
    while True:
        mix = model.mixture(state, enc)
        best = unmixed_candidates(model, state, mix, 1, top_m, allow_eos=eos_allowed(text))[0]
        score = score + best.logp
        if best.segment is None:
            return DecodeResult(text, score, segments)
        text += best.segment
        segments.append((best.segment, best.component, best.logp))
        state = model.advance_text(state, best.segment)
        if len(text) >= max_chars:
            return DecodeResult(text, score, segments, truncated=True)


def _finish(pool: list[Hypothesis], active: list[Hypothesis]) -> DecodeResult:
    if not pool:
        pool = [h for h in active]
        for h in pool:
            h.done = False
    best = min(pool, key=lambda h: (-h.logscore, h.chars))
    return DecodeResult(best.chars, best.logscore, list(best.segments), truncated=not best.done)


def unmixed_beam(model: Seq2Seq, x, k: int, max_chars: int = DEFAULT_MAX_CHARS, top_m: int = 8) -> DecodeResult:
    """Beam search over unmixed candidates: 3k proposals per hypothesis, keep top k."""
    _check_segmental(model, "unmixed decoding")
    if k < 1:
        raise ValueError("beam size must be >= 1")
    enc = model.encode(_source(model, x))
    active = [Hypothesis("", 0.0, model.init_state(enc))]
    pool: list[Hypothesis] = []
    while active:
        ext = []
        for h in active:
            mix = model.mixture(h.state, enc)
            for c in unmixed_candidates(model, h.state, mix, k, top_m, allow_eos=eos_allowed(h.chars)):
                ext.append((c.key(h.chars, h.logscore), h, c))
        ext.sort(key=lambda e: e[0])
        active = []
        for _, h, c in ext[:k]:
            score = h.logscore + c.logp
            if c.segment is None:
                pool.append(Hypothesis(h.chars, score, h.state, c.component, True, h.segments))
                continue
            chars = h.chars + c.segment
            new = Hypothesis(chars, score, model.advance_text(h.state, c.segment), c.component, False,
                             h.segments + [(c.segment, c.component, c.logp)])
            (pool if len(chars) >= max_chars else active).append(new)
        if pool and active and max(p.logscore for p in pool) >= max(a.logscore for a in active):
            break
    return _finish(pool, active)


# -- dynamic decoding -----------------------------------------------------------

def dynamic_beam(model: Seq2Seq, x, k: int, max_chars: int = DEFAULT_MAX_CHARS, top_m: int = 8) -> DecodeResult:
    """Character-synchronous beam over surface strings scored by the mixed
    (summed) segment probabilities.

    Hypotheses are keyed by their character string: every segmentation that
    reaches the same string is merged by log-sum-exp, so a string's score is
    its forward probability over the segmentations explored.  Strings are
    expanded in order of length and each length keeps its top ``k``.

    Unlike unmixed scores, a forward score can grow with the string (a long
    segment may outweigh the short ones it spans), so the search stops only
    when the best finished string beats the total mass of the kept strings
    in the last ``max_seg_len`` lengths: every unfinished continuation passes
    through one of them.
    """
    _check_segmental(model, "dynamic decoding")
    if k < 1:
        raise ValueError("beam size must be >= 1")
    L = model.config.max_seg_len
    enc = model.encode(_source(model, x))
    layers: dict[int, dict[str, float]] = {0: {"": 0.0}}
    kept_mass: dict[int, float] = {}
    origin: dict[str, tuple[str, str]] = {}
    states: dict[str, DecoderState] = {"": model.init_state(enc)}
    finished: list[tuple[float, str]] = []
    truncated: list[tuple[float, str]] = []

    def state_of(s: str) -> DecoderState:
        if s not in states:
            parent, seg = origin[s]
            states[s] = model.advance_text(state_of(parent), seg)
        return states[s]

    for length in range(max_chars + 1):
        layer = layers.pop(length, None)
        if not layer:
            continue
        kept = sorted(layer.items(), key=lambda it: (-it[1], it[0]))[:k]
        kept_mass[length] = float(np.logaddexp.reduce([a for _, a in kept]))
        if finished:
            window = [m for j, m in kept_mass.items() if j > length - L]
            if max(f[0] for f in finished) >= float(np.logaddexp.reduce(window)):
                break
        for s, alpha in kept:
            state = state_of(s)
            mix = model.mixture(state, enc)
            if eos_allowed(s):
                finished.append((alpha + model.eos_logprob(state, mix), s))
            if length == max_chars:
                truncated.append((alpha, s))
                continue
            proposals = {c.segment for c in char_candidates(model, state, mix, k, top_m, allow_eos=False)}
            proposals |= {c.segment for c in gen_candidates(model, mix, k)}
            proposals |= {c.segment for c in copy_candidates(model, mix, k)}
            for seg in sorted(proposals):
                t = s + seg
                if len(t) > max_chars:
                    continue
                lp = alpha + model.mixture_next_subword(state, enc, seg, mix)
                bucket = layers.setdefault(len(t), {})
                bucket[t] = float(np.logaddexp(bucket[t], lp)) if t in bucket else lp
                origin.setdefault(t, (s, seg))
    if finished:
        score, text = min(finished, key=lambda f: (-f[0], f[1]))
        return DecodeResult(text, score, _attribute(model, enc, text))
    score, text = min(truncated, key=lambda f: (-f[0], f[1]))
    return DecodeResult(text, score, _attribute(model, enc, text), truncated=True)


def _attribute(model: Seq2Seq, enc: EncoderStates, text: str) -> list:
    """Viterbi-style component attribution of a dynamically decoded string."""
    from .segmental import viterbi_segment  # local: segmental imports model only

    out = []
    if not text:
        return out
    state = model.init_state(enc)
    for seg in viterbi_segment(model, enc.ids, text):
        mix = model.mixture(state, enc)
        parts = {"char": mix.log_g + model.segment_logprob_char(state, mix, seg)}
        lid = model.lexicon.id(seg)
        if lid >= 0:
            parts["gen"] = mix.log_1mg + mix.log_z0 + float(mix.log_gen[lid])
        if seg in mix.log_copy:
            parts["copy"] = mix.log_1mg + mix.log_z1 + mix.log_copy[seg]
        comp = min(parts, key=lambda c: (-parts[c], _ORDER[c]))
        out.append((seg, comp, model.mixture_next_subword(state, enc, seg, mix)))
        state = model.advance_text(state, seg)
    return out


# -- pointer-generator baseline -------------------------------------------------

def _pg_check(model: Seq2Seq):
    if model.config.kind != "pg":
        raise ValueError(f"pg decoding needs a pg model, got {model.config.kind}")


def _pg_allowed(model: Seq2Seq) -> np.ndarray:
    v = model.src_vocab
    return np.array([t not in v.specials or i == v.eos_id for i, t in enumerate(v.tokens)])


def _pg_component(model: Seq2Seq, state, enc, token: int) -> str:
    mix = model.mixture(state, enc)
    gen = np.exp(mix.log_z0 + mix.log_gen[token])
    copy = np.exp(mix.log_z1) * float(mix.copy_attn[enc.ids == token].sum())
    return "copy" if copy > gen else "gen"


def pg_beam(model: Seq2Seq, x, k: int, max_tokens: int = 100) -> DecodeResult:
    _pg_check(model)
    if k < 1:
        raise ValueError("beam size must be >= 1")
    vocab = model.src_vocab
    allowed = _pg_allowed(model)
    enc = model.encode(_source(model, x))
    active = [(0.0, [], model.init_state(enc), [])]
    pool = []
    while active:
        ext = []
        for score, toks, state, comps in active:
            with np.errstate(divide="ignore"):
                logp = np.log(model.pg_step(state, enc))
            logp[~allowed] = -np.inf
            top = np.lexsort((np.arange(len(logp)), -logp))[:k]
            for t in top:
                if np.isfinite(logp[t]):
                    ext.append((score + float(logp[t]), toks + [int(t)], state, comps))
        ext.sort(key=lambda e: (-e[0], e[1]))
        active = []
        for score, toks, state, comps in ext[:k]:
            tok = toks[-1]
            comps = comps + [_pg_component(model, state, enc, tok)]
            if tok == vocab.eos_id:
                pool.append((score, toks[:-1], comps[:-1], True))
            elif len(toks) >= max_tokens:
                pool.append((score, toks, comps, False))
            else:
                active.append((score, toks, model.advance(state, tok), comps))
        if pool and active and max(p[0] for p in pool) >= max(a[0] for a in active):
            break
    score, toks, comps, done = min(pool, key=lambda p: (-p[0], p[1]))
    segments = [(vocab.token(t), c, 0.0) for t, c in zip(toks, comps)]
    return DecodeResult(vocab.decode(toks), score, segments, truncated=not done)


def pg_greedy(model: Seq2Seq, x, max_tokens: int = 100) -> DecodeResult:
    """Argmax token chain."""
    _pg_check(model)
    vocab = model.src_vocab
    allowed = _pg_allowed(model)
    enc = model.encode(_source(model, x))
    state = model.init_state(enc)
    toks, comps, score = [], [], 0.0
    while True:
        with np.errstate(divide="ignore"):
            logp = np.log(model.pg_step(state, enc))
        logp[~allowed] = -np.inf
        tok = int(np.argmax(logp))
        score += float(logp[tok])
        if tok == vocab.eos_id:
            return DecodeResult(vocab.decode(toks), score, [(vocab.token(t), c, 0.0) for t, c in zip(toks, comps)])
        comps.append(_pg_component(model, state, enc, tok))
        toks.append(tok)
        state = model.advance(state, tok)
        if len(toks) >= max_tokens:
            return DecodeResult(vocab.decode(toks), score,
                                [(vocab.token(t), c, 0.0) for t, c in zip(toks, comps)], truncated=True)


def decode(model: Seq2Seq, x, decoder: str = "unmixed", k: int = 1, max_chars: int = DEFAULT_MAX_CHARS) -> DecodeResult:
    """Dispatch on decoder name; rejects decoder/model combinations that do not apply."""
    if decoder == "unmixed":
        return unmixed_greedy(model, x, max_chars) if k == 1 else unmixed_beam(model, x, k, max_chars)
    if decoder == "dynamic":
        return dynamic_beam(model, x, k, max_chars)
    if decoder == "beam":
        return pg_beam(model, x, k)
    raise ValueError(f"unknown decoder {decoder!r}")
