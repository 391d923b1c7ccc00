"""Subword segmental pointer-generator for data-to-text generation, on numpy."""

from .autodiff import Adam, Graph, NonFiniteError, ParamStore, Tensor, grad_check
from .corpus import Dataset, DatasetError, Example, Triple, load_dataset, make_synthetic
from .decoding import DecodeResult, decode, dynamic_beam, pg_beam, pg_greedy, unmixed_beam, unmixed_greedy
from .evaluation import (bleu, chrf, corpus_chrf, entity_prf, evaluate, gold_copy_decision,
                         relation_accuracy, train_relation_classifier)
from .model import ModelConfig, Seq2Seq
from .segmental import brute_force_marginal, log_marginal, viterbi_segment
from .tokenization import BpeVocab, CharVocab, Lexicon, bpe_train, build_char_vocab, build_lexicon, flatten_triple
from .training import Config, build_model, load_model, save_model, train

__version__ = "0.1.0"
