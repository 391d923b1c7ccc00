"""Encoder-decoder architectures: the subword segmental pointer generator
(``sspg``), its copy-free variant (``ssd``), and a BPE pointer generator
baseline (``pg``).

Every model has two evaluation paths over the same parameters:

* a batched graph path (:meth:`Seq2Seq.sspg_loglik` / :meth:`Seq2Seq.pg_loglik`)
  used for training, which scores all candidate segments of a target string at
  once and feeds them to the segmentation lattice;
* an incremental numpy path (:meth:`Seq2Seq.encode`, :meth:`Seq2Seq.advance`,
  :meth:`Seq2Seq.mixture`, ...) used for decoding and for the enumeration
  oracle.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Graph, ParamStore, Tensor, glorot
from .tokenization import (
    WORD_MARK,
    BpeVocab,
    CharVocab,
    Lexicon,
    flatten_triple,
)

NEG_INF = -np.inf
MODEL_KINDS = ("sspg", "ssd", "pg")


@dataclass
class ModelConfig:
    kind: str = "sspg"
    emb: int = 128
    hidden: int = 128
    layers: int = 1
    dropout: float = 0.5
    max_seg_len: int = 5

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.layers != 1:
            raise ValueError("only single-layer LSTMs are supported")
        if min(self.emb, self.hidden, self.max_seg_len) < 1:
            raise ValueError("sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def copy(self) -> bool:
        return self.kind in ("sspg", "pg")

    @property
    def segmental(self) -> bool:
        return self.kind in ("sspg", "ssd")


def copy_string(token: str, vocab: BpeVocab) -> str | None:
    """Output-side string a source token can be copied as, or None."""
    if token in vocab.specials:
        return None
    s = token.replace(WORD_MARK, "")
    return s or None


# -- numpy helpers ------------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _log_softmax(x):
    z = x - np.max(x, axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _softmax(x):
    z = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _lstm_np(W, b, x, h, c):
    z = np.concatenate([x, h], axis=-1) @ W + b
    H = h.shape[-1]
    s = _sigmoid(z)
    c = s[..., H:2 * H] * c + s[..., :H] * np.tanh(z[..., 2 * H:3 * H])
    return s[..., 3 * H:] * np.tanh(c), c


def _lstm_graph(G: Graph, W, b, x, h, c):
    z = G.concat([x, h], axis=-1) @ W + b
    H = h.shape[-1]
    s = G.sigmoid(z)
    g = G.tanh(z[..., 2 * H:3 * H])
    c = s[..., H:2 * H] * c + s[..., :H] * g
    return s[..., 3 * H:] * G.tanh(c), c


# -- inference-path containers -------------------------------------------------

@dataclass
class EncoderStates:
    ids: np.ndarray           # (Tx,) source token ids
    states: np.ndarray        # (Tx, 2H)
    keys: np.ndarray          # (Tx, H) attention keys
    h0: np.ndarray
    c0: np.ndarray
    copy_strings: list        # per position: str | None
    copy_bias: np.ndarray     # (Tx,) 0 on copyable positions, -inf elsewhere


@dataclass
class DecoderState:
    h: np.ndarray
    c: np.ndarray
    length: int = 0


@dataclass
class MixtureOutput:
    log_g: float
    log_1mg: float
    log_z0: float
    log_z1: float
    attn: np.ndarray               # attention over all source positions
    ctx: np.ndarray
    feat: np.ndarray
    log_gen: np.ndarray | None     # (V,) over the lexicon, or over BPE tokens for pg
    copy_attn: np.ndarray | None   # attention restricted to copyable positions
    log_copy: dict = field(default_factory=dict)   # copy string -> log mass

    @property
    def g(self) -> float:
        return float(np.exp(self.log_g))

    @property
    def z1(self) -> float:
        return float(np.exp(self.log_z1))


# -- batching for the graph path ----------------------------------------------

@dataclass
class Batch:
    src: np.ndarray          # (B, Tx) int, padded
    src_len: np.ndarray      # (B,)
    src_rev_pos: np.ndarray  # (B, Tx) positions into the reversed run
    src_rev: np.ndarray      # (B, Tx) reversed, left-aligned ids
    att_bias: np.ndarray     # (B, 1, Tx) 0 / -inf
    copy_bias: np.ndarray    # (B, 1, Tx) 0 / -inf
    tgt: np.ndarray          # (B, Ty) chars (segmental) or tokens (pg)
    tgt_len: np.ndarray
    extra: dict


class Seq2Seq:
    """Parameters, vocabularies and both evaluation paths of one model."""

    def __init__(self, config: ModelConfig, src_vocab: BpeVocab, chars: CharVocab | None = None,
                 lexicon: Lexicon | None = None, params: ParamStore | None = None, seed: int = 0):
        self.config = config
        self.src_vocab = src_vocab
        self.chars = chars
        self.lexicon = lexicon
        if config.segmental and (chars is None or lexicon is None):
            raise ValueError("segmental models need a character vocabulary and a lexicon")
        if config.segmental and lexicon.max_len != config.max_seg_len:
            raise ValueError("lexicon max_len differs from max_seg_len")
        self.params = params if params is not None else self.init_params(seed)
        self._copyable = np.array([copy_string(t, src_vocab) is not None for t in src_vocab.tokens])

    # -- parameters --------------------------------------------------------
    def init_params(self, seed: int) -> ParamStore:
        cfg = self.config
        E, H = cfg.emb, cfg.hidden
        rng = np.random.default_rng(seed)
        P = ParamStore()

        def lstm(name, n_in):
            P.add(name + "_W", glorot(rng, n_in + H, 4 * H))
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0
            P.add(name + "_b", b)

        def dense(name, n_in, n_out):
            P.add(name + "_W", glorot(rng, n_in, n_out))
            P.add(name + "_b", np.zeros(n_out))

        P.add("src_emb", glorot(rng, len(self.src_vocab), E))
        lstm("enc_fwd", E)
        lstm("enc_bwd", E)
        dense("init", 2 * H, H)
        P.add("att_W", glorot(rng, 2 * H, H))
        if cfg.copy:
            dense("copy", 3 * H, 1)
        if cfg.segmental:
            P.add("char_emb", glorot(rng, len(self.chars), E))
            lstm("hist", E)
            dense("gate", 3 * H, 1)
            dense("lex_hid", 3 * H, H)
            dense("lex_out", H, len(self.lexicon))
            lstm("seg", E + 2 * H)
            dense("seg_hid", 3 * H, H)
            dense("char_out", H, len(self.chars))
        else:
            P.add("tgt_emb", glorot(rng, len(self.src_vocab), E))
            lstm("dec", E)
            dense("out_hid", 3 * H, H)
            dense("out", H, len(self.src_vocab))
        return P

    def _p(self, name):
        return self.params.values[name]

    # -- preprocessing -----------------------------------------------------
    def source_ids(self, triple) -> list[int]:
        return flatten_triple(triple, self.src_vocab)

    def target_ids(self, text: str) -> list[int]:
        if self.config.segmental:
            return self.chars.encode(text)
        return self.src_vocab.encode(text) + [self.src_vocab.eos_id]

    def make_batch(self, pairs) -> Batch:
        """``pairs``: list of (source id list, target text)."""
        B = len(pairs)
        if B == 0:
            raise ValueError("empty batch")
        srcs = [np.asarray(s, dtype=np.int64) for s, _ in pairs]
        for s in srcs:
            if len(s) == 0:
                raise ValueError("empty source sequence")
            if s.min() < 0 or s.max() >= len(self.src_vocab):
                raise IndexError("source token id outside the encoder vocabulary")
        texts = [t for _, t in pairs]
        tgts = [np.asarray(self.target_ids(t), dtype=np.int64) for t in texts]
        if any(len(t) == 0 for t in tgts):
            raise ValueError("empty target sequence")
        Tx = max(len(s) for s in srcs)
        Ty = max(len(t) for t in tgts)
        pad = self.src_vocab.pad_id
        src = np.full((B, Tx), pad, dtype=np.int64)
        rev = np.full((B, Tx), pad, dtype=np.int64)
        rev_pos = np.zeros((B, Tx), dtype=np.int64)
        att_bias = np.full((B, 1, Tx), NEG_INF)
        copy_bias = np.full((B, 1, Tx), NEG_INF)
        tgt_pad = self.chars.pad_id if self.config.segmental else self.src_vocab.pad_id
        tgt = np.full((B, Ty), tgt_pad, dtype=np.int64)
        for b, (s, t) in enumerate(zip(srcs, tgts)):
            n = len(s)
            src[b, :n] = s
            rev[b, :n] = s[::-1]
            rev_pos[b, :n] = np.arange(n - 1, -1, -1)
            att_bias[b, 0, :n] = 0.0
            ok = self._copyable[s]
            if ok.any():
                copy_bias[b, 0, :n][ok] = 0.0
            else:
                copy_bias[b, 0, :n] = 0.0
            tgt[b, :len(t)] = t
        batch = Batch(src=src, src_len=np.array([len(s) for s in srcs]), src_rev_pos=rev_pos,
                      src_rev=rev, att_bias=att_bias, copy_bias=copy_bias, tgt=tgt,
                      tgt_len=np.array([len(t) for t in tgts]), extra={})
        if self.config.segmental:
            self._segment_tables(batch, srcs, texts)
        else:
            self._pg_tables(batch, srcs, tgts)
        return batch

    def _segment_tables(self, batch: Batch, srcs, texts):
        L = self.config.max_seg_len
        B, Ty = batch.tgt.shape
        Tx = batch.src.shape[1]
        J = Ty + 1
        seg_in = np.full((B, J, L), self.chars.pad_id, dtype=np.int64)
        valid = np.zeros((B, J, L), dtype=bool)
        lex_ids = np.zeros((B, J, L), dtype=np.int64)
        has_lex = np.zeros((B, J, L))
        copy_match = np.zeros((B, J, L, Tx))
        for b, text in enumerate(texts):
            n = len(text)
            ids = batch.tgt[b]
            strings = {}
            for i, tok in enumerate(srcs[b]):
                s = copy_string(self.src_vocab.token(int(tok)), self.src_vocab)
                if s is not None and len(s) <= L:
                    strings.setdefault(s, []).append(i)
            for j in range(J):
                for t in range(L):
                    if j + t < Ty:
                        seg_in[b, j, t] = ids[j + t]
                for k in range(1, L + 1):
                    if j + k > n:
                        # Beyond the target: keep single steps alive so the lattice stays finite.
                        valid[b, j, k - 1] = k == 1 and j < Ty
                        continue
                    seg = text[j:j + k]
                    if any(ch.isspace() for ch in seg):
                        valid[b, j, k - 1] = k == 1
                        continue
                    valid[b, j, k - 1] = True
                    lid = self.lexicon.id(seg)
                    if lid >= 0:
                        lex_ids[b, j, k - 1] = lid
                        has_lex[b, j, k - 1] = 1.0
                    for i in strings.get(seg, ()):
                        copy_match[b, j, k - 1, i] = 1.0
        batch.extra.update(seg_in=seg_in, valid=valid, lex_ids=lex_ids, has_lex=has_lex,
                           copy_match=copy_match)

    def _pg_tables(self, batch: Batch, srcs, tgts):
        B, T = batch.tgt.shape
        Tx = batch.src.shape[1]
        match = np.zeros((B, T, Tx))
        mask = np.zeros((B, T))
        for b, t in enumerate(tgts):
            mask[b, :len(t)] = 1.0
            ok = self._copyable[srcs[b]]
            for pos, tok in enumerate(t):
                match[b, pos, :len(srcs[b])] = (srcs[b] == tok) & ok
        batch.extra.update(copy_match=match, mask=mask)

    # -- graph path ----------------------------------------------------------
    def _encode_graph(self, G: Graph, batch: Batch):
        p = self.config.dropout
        B, Tx = batch.src.shape
        H = self.config.hidden
        emb = G.param("src_emb")
        runs = []
        for name, ids in (("enc_fwd", batch.src), ("enc_bwd", batch.src_rev)):
            W, bias = G.param(name + "_W"), G.param(name + "_b")
            h = G.const(np.zeros((B, H)))
            c = G.const(np.zeros((B, H)))
            hs = []
            for t in range(Tx):
                x = G.dropout(G.gather(emb, ids[:, t]), p)
                h, c = _lstm_graph(G, W, bias, x, h, c)
                hs.append(h)
            runs.append(G.stack(hs, axis=1))
        fwd, rev = runs
        rows = np.arange(B)[:, None]
        bwd = G.index(rev, (rows, batch.src_rev_pos))
        enc = G.concat([fwd, bwd], axis=-1)
        last = batch.src_len - 1
        summary = G.concat([G.index(fwd, (np.arange(B), last)), G.index(rev, (np.arange(B), last))], axis=-1)
        h0 = G.tanh(summary @ G.param("init_W") + G.param("init_b"))
        c0 = G.const(np.zeros((B, H)))
        return enc, h0, c0

    def _attend_graph(self, G: Graph, enc, queries, batch: Batch):
        keys = enc @ G.param("att_W")                                 # (B, Tx, H)
        scores = queries @ G.transpose(keys, (0, 2, 1))               # (B, J, Tx)
        attn = G.softmax(scores + batch.att_bias, axis=-1)
        ctx = attn @ enc
        copy_attn = G.softmax(scores + batch.copy_bias, axis=-1) if self.config.copy else None
        return attn, ctx, copy_attn

    def segment_scores(self, G: Graph, batch: Batch):
        """Batched log p(segment | history, source) for every start and length.

        Returns ``(seg, eos)``: ``seg`` is (B, Ty+1, L) with -inf at invalid
        (start, length) cells and ``eos`` is (B, Ty+1) holding the mixed
        log-probability of ending the sequence at each position.
        """
        cfg = self.config
        L, p = cfg.max_seg_len, cfg.dropout
        B, Ty = batch.tgt.shape
        J = Ty + 1
        ex = batch.extra
        enc, h, c = self._encode_graph(G, batch)

        cemb = G.param("char_emb")
        W, bias = G.param("hist_W"), G.param("hist_b")
        hs, cs = [h], [c]
        for t in range(Ty):
            x = G.dropout(G.gather(cemb, batch.tgt[:, t]), p)
            h, c = _lstm_graph(G, W, bias, x, h, c)
            hs.append(h)
            cs.append(c)
        Hs = G.stack(hs, axis=1)                                      # (B, J, H)
        Cs = G.stack(cs, axis=1)
        attn, ctx, copy_attn = self._attend_graph(G, enc, Hs, batch)
        feat = G.concat([Hs, ctx], axis=-1)

        gate = (feat @ G.param("gate_W") + G.param("gate_b"))[..., 0]
        log_g, log_1mg = G.log_sigmoid(gate), G.log_sigmoid(-gate)

        lex_h = G.dropout(G.tanh(feat @ G.param("lex_hid_W") + G.param("lex_hid_b")), p)
        log_gen = G.log_softmax(lex_h @ G.param("lex_out_W") + G.param("lex_out_b"), axis=-1)

        # Character model over segments, one batched LSTM step per segment offset.
        sW, sb = G.param("seg_W"), G.param("seg_b")
        qW, qb = G.param("seg_hid_W"), G.param("seg_hid_b")
        oW, ob = G.param("char_out_W"), G.param("char_out_b")
        sh, sc = Hs, Cs
        step_lp = []
        for t in range(L + 1):
            q = G.dropout(G.tanh(G.concat([sh, ctx], axis=-1) @ qW + qb), p)
            step_lp.append(G.log_softmax(q @ oW + ob, axis=-1))      # (B, J, C)
            if t < L:
                x = G.dropout(G.gather(cemb, ex["seg_in"][:, :, t]), p)
                sh, sc = _lstm_graph(G, sW, sb, G.concat([x, ctx], axis=-1), sh, sc)
        eoseg = self.chars.eoseg_id
        prefix = None
        log_char = []
        for k in range(1, L + 1):
            lp = G.pick(step_lp[k - 1], ex["seg_in"][:, :, k - 1])
            prefix = lp if prefix is None else prefix + lp
            log_char.append(prefix + step_lp[k][..., eoseg])
        log_char = G.stack(log_char, axis=-1)                         # (B, J, L)

        char_term = log_char + G.reshape(log_g, (B, J, 1))
        gen = G.pick(log_gen, ex["lex_ids"])                          # (B, J, L)
        if cfg.copy:
            copy_mass = G.sum(G.reshape(copy_attn, (B, J, 1, -1)) * ex["copy_match"], axis=-1)
            z = (feat @ G.param("copy_W") + G.param("copy_b"))[..., 0]
            z1 = G.sigmoid(z)
            z0 = 1.0 - z1
            p_lex = (G.exp(gen) * ex["has_lex"] * G.reshape(z0, (B, J, 1))
                     + copy_mass * G.reshape(z1, (B, J, 1)))
            log_lex = G.log(p_lex)
        else:
            with np.errstate(divide="ignore"):
                log_lex = gen + np.log(ex["has_lex"])
        lex_term = log_lex + G.reshape(log_1mg, (B, J, 1))
        seg = G.logsumexp(G.stack([char_term, lex_term], axis=-1), axis=-1)
        with np.errstate(divide="ignore"):
            seg = seg + np.log(ex["valid"].astype(float))
        eos = log_g + step_lp[0][..., self.chars.eos_id]
        return seg, eos

    def sspg_loglik(self, G: Graph, batch: Batch) -> Tensor:
        """Per-example log p(y | x), marginalised over segmentations."""
        seg, eos = self.segment_scores(G, batch)
        return lattice_forward(G, seg, eos, batch.tgt_len)

    def pg_loglik(self, G: Graph, batch: Batch) -> Tensor:
        cfg = self.config
        p = cfg.dropout
        B, T = batch.tgt.shape
        enc, h, c = self._encode_graph(G, batch)
        emb = G.param("tgt_emb")
        W, bias = G.param("dec_W"), G.param("dec_b")
        hs = [h]
        for t in range(T - 1):
            x = G.dropout(G.gather(emb, batch.tgt[:, t]), p)
            h, c = _lstm_graph(G, W, bias, x, h, c)
            hs.append(h)
        Hs = G.stack(hs, axis=1)
        attn, ctx, copy_attn = self._attend_graph(G, enc, Hs, batch)
        feat = G.concat([Hs, ctx], axis=-1)
        o = G.dropout(G.tanh(feat @ G.param("out_hid_W") + G.param("out_hid_b")), p)
        probs = G.softmax(o @ G.param("out_W") + G.param("out_b"), axis=-1)
        z1 = G.sigmoid((feat @ G.param("copy_W") + G.param("copy_b"))[..., 0])
        gen = G.pick(probs, batch.tgt)
        copy = G.sum(copy_attn * batch.extra["copy_match"], axis=-1)
        tok = (1.0 - z1) * gen + z1 * copy
        return G.sum(G.log(tok) * batch.extra["mask"], axis=1)

    def loglik(self, G: Graph, batch: Batch) -> Tensor:
        return self.sspg_loglik(G, batch) if self.config.segmental else self.pg_loglik(G, batch)

    # -- incremental path --------------------------------------------------
    def encode(self, src_ids) -> EncoderStates:
        ids = np.asarray(src_ids, dtype=np.int64)
        if len(ids) == 0:
            raise ValueError("empty source sequence")
        if ids.min() < 0 or ids.max() >= len(self.src_vocab):
            raise IndexError("source token id outside the encoder vocabulary")
        H = self.config.hidden
        emb = self._p("src_emb")[ids]
        runs = []
        for name, order in (("enc_fwd", range(len(ids))), ("enc_bwd", range(len(ids) - 1, -1, -1))):
            W, b = self._p(name + "_W"), self._p(name + "_b")
            h, c = np.zeros(H), np.zeros(H)
            out = np.zeros((len(ids), H))
            for t in order:
                h, c = _lstm_np(W, b, emb[t], h, c)
                out[t] = h
            runs.append((out, h))
        (fwd, hf), (bwd, hb) = runs
        states = np.concatenate([fwd, bwd], axis=-1)
        h0 = np.tanh(np.concatenate([hf, hb]) @ self._p("init_W") + self._p("init_b"))
        strings = [copy_string(self.src_vocab.token(int(i)), self.src_vocab) for i in ids]
        ok = self._copyable[ids]
        bias = np.where(ok, 0.0, NEG_INF) if ok.any() else np.zeros(len(ids))
        return EncoderStates(ids=ids, states=states, keys=states @ self._p("att_W"), h0=h0,
                             c0=np.zeros(H), copy_strings=strings, copy_bias=bias)

    def init_state(self, enc: EncoderStates) -> DecoderState:
        return DecoderState(enc.h0.copy(), enc.c0.copy(), 0)

    def advance(self, state: DecoderState, symbol: int) -> DecoderState:
        """Feed one output symbol (a character, or a BPE token for pg)."""
        if self.config.segmental:
            x, prefix = self._p("char_emb")[symbol], "hist"
        else:
            x, prefix = self._p("tgt_emb")[symbol], "dec"
        h, c = _lstm_np(self._p(prefix + "_W"), self._p(prefix + "_b"), x, state.h, state.c)
        return DecoderState(h, c, state.length + 1)

    def advance_text(self, state: DecoderState, text: str) -> DecoderState:
        for ch in text:
            state = self.advance(state, self.chars.id(ch))
        return state

    def history_state(self, enc: EncoderStates, text: str) -> DecoderState:
        """Decoder state after reading ``text`` (depends only on ``text`` and the source)."""
        return self.advance_text(self.init_state(enc), text)

    def attend(self, h: np.ndarray, enc: EncoderStates):
        scores = enc.keys @ h
        attn = _softmax(scores)
        copy_attn = _softmax(scores + enc.copy_bias) if self.config.copy else None
        return attn @ enc.states, attn, copy_attn

    def mixture(self, state: DecoderState, enc: EncoderStates) -> MixtureOutput:
        ctx, attn, copy_attn = self.attend(state.h, enc)
        feat = np.concatenate([state.h, ctx])
        if self.config.copy:
            z = float(feat @ self._p("copy_W")[:, 0] + self._p("copy_b")[0])
            z1 = _sigmoid(z)
            with np.errstate(divide="ignore"):
                log_z1, log_z0 = float(np.log(z1)), float(np.log(1.0 - z1))
        else:
            log_z1, log_z0 = NEG_INF, 0.0
        log_copy = {}
        if copy_attn is not None:
            masses: dict[str, float] = {}
            for s, a in zip(enc.copy_strings, copy_attn):
                if s is not None:
                    masses[s] = masses.get(s, 0.0) + a
            with np.errstate(divide="ignore"):
                log_copy = {s: float(np.log(m)) for s, m in masses.items()}
        if self.config.segmental:
            a = float(feat @ self._p("gate_W")[:, 0] + self._p("gate_b")[0])
            log_g, log_1mg = float(_log_sigmoid(a)), float(_log_sigmoid(-a))
            hid = np.tanh(feat @ self._p("lex_hid_W") + self._p("lex_hid_b"))
            log_gen = _log_softmax(hid @ self._p("lex_out_W") + self._p("lex_out_b"))
        else:
            log_g, log_1mg = NEG_INF, 0.0
            hid = np.tanh(feat @ self._p("out_hid_W") + self._p("out_hid_b"))
            log_gen = _log_softmax(hid @ self._p("out_W") + self._p("out_b"))
        return MixtureOutput(log_g=log_g, log_1mg=log_1mg, log_z0=log_z0, log_z1=log_z1, attn=attn,
                             ctx=ctx, feat=feat, log_gen=log_gen, copy_attn=copy_attn, log_copy=log_copy)

    # character model inside a segment
    def char_step(self, sh: np.ndarray, ctx: np.ndarray) -> np.ndarray:
        """Log distribution over characters (incl. end markers); batched over rows of ``sh``."""
        ctx = np.broadcast_to(ctx, sh.shape[:-1] + ctx.shape[-1:])
        q = np.tanh(np.concatenate([sh, ctx], axis=-1) @ self._p("seg_hid_W") + self._p("seg_hid_b"))
        return _log_softmax(q @ self._p("char_out_W") + self._p("char_out_b"))

    def char_feed(self, sh, sc, ctx, char_ids):
        ctx = np.broadcast_to(ctx, sh.shape[:-1] + ctx.shape[-1:])
        x = self._p("char_emb")[char_ids]
        return _lstm_np(self._p("seg_W"), self._p("seg_b"), np.concatenate([x, ctx], axis=-1), sh, sc)

    def segment_logprob_char(self, state: DecoderState, mix: MixtureOutput, segment: str) -> float:
        """log p_char(segment | history, source), including the end-of-segment event."""
        L = self.config.max_seg_len
        if not 1 <= len(segment) <= L:
            raise ValueError(f"segment length {len(segment)} outside [1, {L}]")
        sh, sc = state.h, state.c
        total = 0.0
        for ch in segment:
            cid = self.chars.id(ch)
            total += self.char_step(sh, mix.ctx)[cid]
            sh, sc = self.char_feed(sh, sc, mix.ctx, cid)
        return float(total + self.char_step(sh, mix.ctx)[self.chars.eoseg_id])

    def lexicon_logprob(self, mix: MixtureOutput, segment: str) -> float:
        """log p_lex(segment) = log(p(z=0) p_gen + p(z=1) p_copy)."""
        if any(ch.isspace() for ch in segment):
            return NEG_INF
        lid = self.lexicon.id(segment)
        terms = []
        if lid >= 0:
            terms.append(mix.log_z0 + mix.log_gen[lid])
        if segment in mix.log_copy and len(segment) <= self.config.max_seg_len:
            terms.append(mix.log_z1 + mix.log_copy[segment])
        return float(np.logaddexp.reduce(terms)) if terms else NEG_INF

    def mixture_next_subword(self, state: DecoderState, enc: EncoderStates, segment: str,
                             mix: MixtureOutput | None = None) -> float:
        """log p(segment | history, source) under the char/lexicon/copy mixture."""
        if len(segment) > 1 and any(ch.isspace() for ch in segment):
            raise ValueError("segments may not contain whitespace")
        mix = mix if mix is not None else self.mixture(state, enc)
        char = mix.log_g + self.segment_logprob_char(state, mix, segment)
        lex = mix.log_1mg + self.lexicon_logprob(mix, segment)
        return float(np.logaddexp(char, lex))

    def eos_logprob(self, state: DecoderState, mix: MixtureOutput) -> float:
        return float(mix.log_g + self.char_step(state.h, mix.ctx)[self.chars.eos_id])

    # pg
    def pg_step(self, state: DecoderState, enc: EncoderStates) -> np.ndarray:
        """Next-token distribution (probabilities) with conditional copying."""
        mix = self.mixture(state, enc)
        probs = np.exp(mix.log_z0) * np.exp(mix.log_gen)
        np.add.at(probs, enc.ids, np.exp(mix.log_z1) * mix.copy_attn)
        return probs

    # -- misc ----------------------------------------------------------------
    def describe(self) -> dict:
        return {"config": asdict(self.config), "num_params": self.params.num_scalars()}


def lattice_forward(G: Graph, seg: Tensor, eos: Tensor, lengths: np.ndarray) -> Tensor:
    """Forward pass over the segmentation lattice.

    ``alpha[j] = logsumexp_k alpha[j-k] + seg[j-k, k-1]``; the result is
    ``alpha[n] + eos[n]`` per example.
    """
    B, J, L = seg.shape
    alphas = [G.const(np.zeros(B))]
    for j in range(1, J):
        ks = np.arange(1, min(L, j) + 1)
        prev = G.stack([alphas[j - k] for k in ks], axis=1)           # (B, K)
        cand = G.index(seg, (slice(None), j - ks, ks - 1))            # (B, K)
        alphas.append(G.logsumexp(prev + cand, axis=1))
    alpha = G.stack(alphas, axis=1)                                    # (B, J)
    rows = np.arange(B)
    return G.index(alpha, (rows, lengths)) + G.index(eos, (rows, lengths))
