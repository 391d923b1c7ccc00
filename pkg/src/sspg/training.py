"""Run configuration, vocabulary building, the training loop and model files."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import Adam
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Dataset, Example, training_pairs
from .decoding import decode
from .evaluation import corpus_chrf
from .model import MODEL_KINDS, ModelConfig, Seq2Seq
from .segmental import train_step
from .tokenization import BpeVocab, CharVocab, Lexicon, bpe_train, build_char_vocab, build_lexicon

DECODERS = ("unmixed", "dynamic", "beam")


@dataclass
class Config:
    """Flat run configuration; defaults are the final SSPG settings."""

    model: str = "sspg"
    lr: float = 1e-3
    dropout: float = 0.5
    batch_size: int = 4
    bpe_merges: int = 1000
    lexicon_size: int = 1000
    max_seg_len: int = 5
    emb: int = 128
    hidden: int = 128
    layers: int = 1
    beam_k: int = 5
    decoder: str = "unmixed"
    max_chars: int = 256
    epochs: int = 30
    patience: int = 5
    valid_limit: int = 0          # 0 = decode the whole validation split each epoch
    seed: int = 0
    data: str = ""
    out: str = ""

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model!r}")
        if self.decoder not in DECODERS:
            raise ValueError(f"unknown decoder {self.decoder!r}")
        sizes = {k: getattr(self, k) for k in ("batch_size", "emb", "hidden", "layers", "beam_k",
                                                "max_chars", "max_seg_len", "epochs", "patience")}
        bad = [k for k, v in sizes.items() if v < 1]
        if self.model != "pg" and self.lexicon_size < 1:
            bad.append("lexicon_size")
        if bad:
            raise ValueError(f"must be positive: {', '.join(bad)}")
        if self.lr < 0 or not 0 <= self.dropout < 1 or self.bpe_merges < 0 or self.valid_limit < 0:
            raise ValueError("lr, bpe_merges and valid_limit must be >= 0; dropout in [0, 1)")

    @classmethod
    def defaults(cls, model: str = "sspg", **overrides) -> "Config":
        base = {"model": model}
        if model == "pg":
            base.update(dropout=0.3, bpe_merges=500, decoder="beam")
        base.update(overrides)
        return cls(**base)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "Config":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Config":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def model_config(self) -> ModelConfig:
        return ModelConfig(kind=self.model, emb=self.emb, hidden=self.hidden, layers=self.layers,
                           dropout=self.dropout, max_seg_len=self.max_seg_len)


def source_corpus(examples: list[Example]) -> list[str]:
    return [" ".join((ex.triple.subject, ex.triple.relation, ex.triple.object)) for ex in examples]


def build_model(config: Config, train: list[Example]) -> Seq2Seq:
    """Fit vocabularies on the training split and initialise parameters."""
    if not train:
        raise ValueError("empty training split")
    refs = [r for ex in train for r in ex.references]
    src = source_corpus(train)
    if config.model == "pg":
        # one vocabulary shared by encoder and decoder so tokens can be copied
        return Seq2Seq(config.model_config(), bpe_train(src + refs, config.bpe_merges), seed=config.seed)
    chars = build_char_vocab(refs + src)
    lexicon = build_lexicon(refs, config.lexicon_size, config.max_seg_len, chars)
    return Seq2Seq(config.model_config(), bpe_train(src, config.bpe_merges), chars, lexicon, seed=config.seed)


def greedy_decoder(model: Seq2Seq) -> str:
    return "unmixed" if model.config.segmental else "beam"


def generate(model: Seq2Seq, examples: list[Example], decoder: str | None = None, k: int = 1,
             max_chars: int = 256):
    decoder = decoder or greedy_decoder(model)
    return [decode(model, ex.triple, decoder, k, max_chars) for ex in examples]


@dataclass
class TrainResult:
    model: Seq2Seq
    history: list[dict]
    best_epoch: int


def train(config: Config, dataset: Dataset, log_path=None, verbose: bool = False) -> TrainResult:
    """Mini-batch Adam with model selection on validation chrF++ (greedy decoding)."""
    model = build_model(config, dataset.train)
    model.config.dropout = config.dropout
    rng = np.random.default_rng(config.seed)
    pairs = [(model.source_ids(t), text) for t, text in training_pairs(dataset.train)]
    valid = dataset.valid[:config.valid_limit] if config.valid_limit else dataset.valid
    opt = Adam(model.params, lr=config.lr)
    history: list[dict] = []
    best_score, best_epoch, best_params = -1.0, 0, model.params.copy()
    log = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            start = time.time()
            order = rng.permutation(len(pairs))
            losses = []
            for i in range(0, len(order), config.batch_size):
                batch = [pairs[j] for j in order[i:i + config.batch_size]]
                losses.append(train_step(model, batch, opt, seed=int(rng.integers(2**31))))
            row = {"epoch": epoch, "loss": float(np.mean(losses))}
            if valid:
                hyps = [r.text for r in generate(model, valid, k=1, max_chars=config.max_chars)]
                row["valid_chrf_pp"] = corpus_chrf(hyps, [ex.references for ex in valid], word_n=2)
            else:
                row["valid_chrf_pp"] = -row["loss"]
            row["seconds"] = round(time.time() - start, 3)
            history.append(row)
            if log:
                log.write(json.dumps(row) + "\n")
                log.flush()
            if verbose:
                print(json.dumps(row), flush=True)
            if row["valid_chrf_pp"] > best_score:
                best_score, best_epoch, best_params = row["valid_chrf_pp"], epoch, model.params.copy()
            elif epoch - best_epoch >= config.patience:
                break
    finally:
        if log:
            log.close()
    model.params = best_params
    return TrainResult(model, history, best_epoch)


def save_model(path, model: Seq2Seq, config: Config | None = None, history: list | None = None) -> None:
    extra = {"model_config": asdict(model.config), "bpe": model.src_vocab.to_json()}
    if model.chars is not None:
        extra["chars"] = model.chars.to_json()
        extra["lexicon"] = model.lexicon.to_json()
    if history is not None:
        extra["history"] = history
    save_checkpoint(path, model.params, config.to_json() if config else {}, extra)


def load_model(path) -> tuple[Seq2Seq, Config | None]:
    params, config, extra = load_checkpoint(path)
    mc = ModelConfig(**extra["model_config"])
    chars = CharVocab.from_json(extra["chars"]) if "chars" in extra else None
    lexicon = Lexicon.from_json(extra["lexicon"]) if "lexicon" in extra else None
    model = Seq2Seq(mc, BpeVocab.from_json(extra["bpe"]), chars, lexicon, params=params)
    return model, (Config.from_json(config) if config else None)
