"""Data-side BPE, the output character vocabulary, and the segment lexicon."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

WORD_MARK = "▁"

PAD, UNK, EOS = "<pad>", "<unk>", "</s>"
SUBJ_OPEN, SUBJ_CLOSE = "<s", "s>"
REL_OPEN, REL_CLOSE = "<r", "r>"
OBJ_OPEN, OBJ_CLOSE = "<o", "o>"
DELIMITERS = (SUBJ_OPEN, SUBJ_CLOSE, REL_OPEN, REL_CLOSE, OBJ_OPEN, OBJ_CLOSE)
BPE_SPECIALS = (PAD, UNK, EOS) + DELIMITERS


def _split_words(text: str) -> list[str]:
    # Single-space split keeps runs of spaces recoverable as empty words.
    return text.split(" ") if text else []


def _word_symbols(word: str) -> list[str]:
    return [WORD_MARK] + list(word)


@dataclass
class BpeVocab:
    merges: list[tuple[str, str]]
    tokens: list[str]
    specials: tuple[str, ...] = BPE_SPECIALS
    _ids: dict[str, int] = field(default_factory=dict, repr=False)
    _ranks: dict[tuple[str, str], int] = field(default_factory=dict, repr=False)
    _cache: dict[str, list[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.merges = [tuple(m) for m in self.merges]
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        self._ranks = {m: r for r, m in enumerate(self.merges)}

    def __len__(self):
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def unk_id(self) -> int:
        return self._ids[UNK]

    @property
    def eos_id(self) -> int:
        return self._ids[EOS]

    def is_special(self, idx: int) -> bool:
        return self.tokens[idx] in self.specials

    def segment_word(self, word: str) -> list[str]:
        if word in self._cache:
            return self._cache[word]
        symbols = _word_symbols(word)
        while len(symbols) > 1:
            best = None
            for i in range(len(symbols) - 1):
                rank = self._ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best is None or rank < best[0]):
                    best = (rank, i)
            if best is None:
                break
            pair = self.merges[best[0]]
            merged, i = [], 0
            while i < len(symbols):
                if i < len(symbols) - 1 and (symbols[i], symbols[i + 1]) == pair:
                    merged.append(symbols[i] + symbols[i + 1])
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        self._cache[word] = symbols
        return symbols

    def tokenize(self, text: str) -> list[str]:
        out = []
        for word in _split_words(text):
            out.extend(self.segment_word(word))
        return out

    def encode(self, text: str) -> list[int]:
        out = []
        for tok in self.tokenize(text):
            if tok in self._ids:
                out.append(self._ids[tok])
            else:
                # Unmerged symbols outside the vocabulary fall back per character.
                out.extend(self.id(ch) for ch in tok)
        return out

    def decode(self, ids) -> str:
        text = "".join(self.tokens[i] for i in ids if self.tokens[i] not in (PAD, EOS))
        text = text.replace(WORD_MARK, " ")
        return text[1:] if text.startswith(" ") else text

    def to_json(self) -> dict:
        return {"merges": [list(m) for m in self.merges], "tokens": self.tokens, "specials": list(self.specials)}

    @classmethod
    def from_json(cls, obj: dict) -> "BpeVocab":
        return cls(merges=[tuple(m) for m in obj["merges"]], tokens=list(obj["tokens"]),
                   specials=tuple(obj["specials"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BpeVocab":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def bpe_train(corpus: list[str], num_merges: int) -> BpeVocab:
    """Greedy pair merging; ties go to the lexicographically smallest merged string."""
    if not corpus:
        raise ValueError("bpe_train: empty corpus")
    if num_merges < 0:
        raise ValueError("bpe_train: num_merges must be >= 0")
    word_freq = Counter(w for line in corpus for w in _split_words(line))
    words = {w: tuple(_word_symbols(w)) for w in word_freq}
    alphabet = sorted({s for syms in words.values() for s in syms})
    specials = set(BPE_SPECIALS)

    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pairs: Counter = Counter()
        for w, syms in words.items():
            f = word_freq[w]
            for a, b in zip(syms, syms[1:]):
                pairs[(a, b)] += f
        candidates = [(-c, a + b, (a, b)) for (a, b), c in pairs.items() if a + b not in specials]
        if not candidates:
            break
        _, _, best = min(candidates)
        merges.append(best)
        joined = best[0] + best[1]
        for w, syms in words.items():
            if len(syms) < 2:
                continue
            out, i = [], 0
            while i < len(syms):
                if i < len(syms) - 1 and (syms[i], syms[i + 1]) == best:
                    out.append(joined)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            words[w] = tuple(out)

    tokens = list(BPE_SPECIALS) + alphabet
    seen = set(tokens)
    for a, b in merges:
        if a + b not in seen:
            tokens.append(a + b)
            seen.add(a + b)
    return BpeVocab(merges=merges, tokens=tokens)


def flatten_triple(triple, vocab: BpeVocab) -> list[int]:
    """``<s subject s> <r relation r> <o object o>`` as token ids."""
    fields = (
        (SUBJ_OPEN, triple.subject, SUBJ_CLOSE),
        (REL_OPEN, triple.relation, REL_CLOSE),
        (OBJ_OPEN, triple.object, OBJ_CLOSE),
    )
    out = []
    for open_, text, close in fields:
        if not text or not text.strip():
            raise ValueError(f"flatten_triple: empty field in {triple!r}")
        out.append(vocab.id(open_))
        out.extend(vocab.encode(text))
        out.append(vocab.id(close))
    return out


def render_tokens(ids, vocab: BpeVocab) -> str:
    return " ".join(vocab.token(i) for i in ids)


# -- output side ------------------------------------------------------------

CHAR_PAD, CHAR_UNK, END_SEG, END_SEQ = "<pad>", "<unk>", "</seg>", "</s>"
CHAR_SPECIALS = (CHAR_PAD, CHAR_UNK, END_SEG, END_SEQ)


@dataclass
class CharVocab:
    chars: list[str]
    _ids: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._ids = {c: i for i, c in enumerate(self.itos)}

    @property
    def itos(self) -> list[str]:
        return list(CHAR_SPECIALS) + self.chars

    def __len__(self):
        return len(CHAR_SPECIALS) + len(self.chars)

    pad_id = 0
    unk_id = 1
    eoseg_id = 2
    eos_id = 3

    def id(self, ch: str) -> int:
        return self._ids.get(ch, self.unk_id) if ch not in CHAR_SPECIALS else self.unk_id

    def encode(self, text: str) -> list[int]:
        return [self.id(c) for c in text]

    def char(self, idx: int) -> str:
        return self.itos[idx]

    def to_json(self) -> dict:
        return {"chars": self.chars}

    @classmethod
    def from_json(cls, obj: dict) -> "CharVocab":
        return cls(chars=list(obj["chars"]))


def build_char_vocab(corpus: list[str]) -> CharVocab:
    if not corpus:
        raise ValueError("build_char_vocab: empty corpus")
    return CharVocab(chars=sorted({c for line in corpus for c in line}))


@dataclass
class Lexicon:
    segments: list[str]
    max_len: int
    size: int
    counts: dict[str, int] = field(default_factory=dict)
    _ids: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._ids = {s: i for i, s in enumerate(self.segments)}

    def __len__(self):
        return len(self.segments)

    def __contains__(self, seg: str) -> bool:
        return seg in self._ids

    def id(self, seg: str) -> int:
        """Lexicon index, or -1 when ``seg`` is not a lexicon entry."""
        return self._ids.get(seg, -1)

    def to_json(self) -> dict:
        return {"segments": [[s, self.counts.get(s, 0)] for s in self.segments],
                "max_len": self.max_len, "size": self.size}

    @classmethod
    def from_json(cls, obj: dict) -> "Lexicon":
        segs = [s for s, _ in obj["segments"]]
        return cls(segments=segs, max_len=obj["max_len"], size=obj["size"],
                   counts={s: c for s, c in obj["segments"]})

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Lexicon":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def count_ngrams(corpus: list[str], max_len: int) -> Counter:
    counts: Counter = Counter()
    for line in corpus:
        for chunk in line.split():
            for n in range(1, max_len + 1):
                for i in range(len(chunk) - n + 1):
                    counts[chunk[i:i + n]] += 1
    return counts


def build_lexicon(corpus: list[str], size: int, max_len: int, chars: CharVocab | None = None) -> Lexicon:
    """Top ``size`` character n-grams that do not cross whitespace.

    Every non-whitespace single character is kept regardless of frequency and
    counts against ``size``; ranking is (count desc, length asc, string asc).
    """
    if not corpus:
        raise ValueError("build_lexicon: empty corpus")
    if size < 1 or max_len < 1:
        raise ValueError("build_lexicon: size and max_len must be >= 1")
    counts = count_ngrams(corpus, max_len)
    forced = {s for s in counts if len(s) == 1}
    if chars is not None:
        forced |= {c for c in chars.chars if not c.isspace()}
    ranked = sorted((s for s in counts if s not in forced), key=lambda s: (-counts[s], len(s), s))
    keep = sorted(forced, key=lambda s: (-counts.get(s, 0), s))
    keep += ranked[: max(0, size - len(keep))]
    return Lexicon(segments=keep, max_len=max_len, size=size, counts={s: counts.get(s, 0) for s in keep})
