"""Marginal likelihood over latent segmentations, its enumeration oracle,
Viterbi segmentation, and the optimisation step."""

from __future__ import annotations

import numpy as np

from .autodiff import Adam, Graph, NonFiniteError
from .model import Seq2Seq

MAX_BRUTE_FORCE_LEN = 12


def _source(model: Seq2Seq, x):
    return model.source_ids(x) if hasattr(x, "subject") else list(x)


def log_marginal(model: Seq2Seq, x, y: str) -> float:
    """log p(y | x) summed over every segmentation of ``y`` (lattice DP)."""
    if not y:
        raise ValueError("empty target")
    G = Graph(model.params, record=False)
    return float(model.sspg_loglik(G, model.make_batch([(_source(model, x), y)])).data[0])


def segmentations(y: str, max_len: int):
    """Every split of ``y`` into segments of length <= max_len that keep
    whitespace characters as singleton segments."""
    if not y:
        yield []
        return
    for k in range(1, min(max_len, len(y)) + 1):
        head = y[:k]
        if k > 1 and any(ch.isspace() for ch in head):
            break
        for rest in segmentations(y[k:], max_len):
            yield [head] + rest


def segmentation_logprob(model: Seq2Seq, enc, segs: list[str]) -> float:
    """Exact log-probability of one segmentation, end of sequence included."""
    state = model.init_state(enc)
    total = 0.0
    for s in segs:
        total += model.mixture_next_subword(state, enc, s)
        state = model.advance_text(state, s)
    return total + model.eos_logprob(state, model.mixture(state, enc))


def brute_force_marginal(model: Seq2Seq, x, y: str) -> float:
    """Enumerate segmentations and sum their probabilities in log space."""
    if len(y) > MAX_BRUTE_FORCE_LEN:
        raise ValueError(f"brute force limited to {MAX_BRUTE_FORCE_LEN} characters")
    enc = model.encode(_source(model, x))
    terms = [segmentation_logprob(model, enc, segs)
             for segs in segmentations(y, model.config.max_seg_len)]
    return float(np.logaddexp.reduce(terms))


def viterbi_segment(model: Seq2Seq, x, y: str) -> list[str]:
    """Highest-probability segmentation; ties prefer the longer final segment."""
    if not y:
        return []
    G = Graph(model.params, record=False)
    batch = model.make_batch([(_source(model, x), y)])
    seg = model.segment_scores(G, batch)[0].data[0]
    n, L = len(y), seg.shape[1]
    best = np.full(n + 1, -np.inf)
    back = np.zeros(n + 1, dtype=int)
    best[0] = 0.0
    for j in range(1, n + 1):
        for k in range(1, min(L, j) + 1):
            score = best[j - k] + seg[j - k, k - 1]
            if score > best[j] or (score == best[j] and k > back[j]):
                best[j], back[j] = score, k
    out = []
    j = n
    while j > 0:
        out.append(y[j - back[j]:j])
        j -= back[j]
    return out[::-1]


def batch_loss(model: Seq2Seq, G: Graph, pairs):
    """Mean negative log-likelihood over (source ids, text) pairs."""
    ll = model.loglik(G, model.make_batch(pairs))
    return -(G.sum(ll) * (1.0 / len(pairs)))


def train_step(model: Seq2Seq, pairs, optimizer: Adam, seed: int | None = None) -> float:
    """One Adam update on ``pairs``; returns the batch loss before the update."""
    if not pairs:
        raise ValueError("empty batch")
    G = Graph(model.params, train=model.config.dropout > 0, seed=seed)
    try:
        loss = batch_loss(model, G, pairs)
    except NonFiniteError as exc:
        raise NonFiniteError(f"non-finite loss in training step: {exc}") from exc
    value = loss.item()
    if not np.isfinite(value):
        raise NonFiniteError(f"non-finite loss {value} (batch of {len(pairs)})")
    model.params.zero_grad()
    G.backward(loss)
    optimizer.step()
    return value
