"""Attention-based GRU decoder with greedy search.

Each step scores every source annotation against the previous decoder
state (additive attention reduced to a scalar by a learned vector),
softmax-normalizes the scores into weights, takes the weighted sum as the
context vector, and feeds [context : previous-word-embedding] through a
GRU; an affine readout over the new state gives the word distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import BOS, EOS, Batch
from .encoder import Annotations, GRUParams, gru_cell, init_gru, _weight, _zeros
from .tensor import Tensor


@dataclass
class DecoderParams:
    tgt_emb: Tensor    # (V_tgt, d_y)
    attn_w1: Tensor    # (H_d, A)
    attn_b1: Tensor    # (A,)
    attn_w2: Tensor    # (2H, A)
    attn_b2: Tensor    # (A,)
    attn_v: Tensor     # (A,) scoring vector
    gru: GRUParams     # input 2H + d_y, hidden H_d
    out_w: Tensor      # (H_d, V_tgt)
    out_b: Tensor      # (V_tgt,)
    init_w: Tensor     # (2H, H_d)
    init_b: Tensor     # (H_d,)

    @property
    def hidden_size(self) -> int:
        return self.gru.hidden_size

    @property
    def vocab_size(self) -> int:
        return self.out_w.shape[1]


def init_decoder(rng: np.random.Generator, vocab_size: int, enc_hidden: int,
                 dec_hidden: int, attn_dim: int, tgt_emb_dim: int) -> DecoderParams:
    two_h = 2 * enc_hidden
    return DecoderParams(
        tgt_emb=_weight(rng, vocab_size, tgt_emb_dim),
        attn_w1=_weight(rng, dec_hidden, attn_dim), attn_b1=_zeros(attn_dim),
        attn_w2=_weight(rng, two_h, attn_dim), attn_b2=_zeros(attn_dim),
        attn_v=_weight(rng, attn_dim),
        gru=init_gru(rng, two_h + tgt_emb_dim, dec_hidden),
        out_w=_weight(rng, dec_hidden, vocab_size), out_b=_zeros(vocab_size),
        init_w=_weight(rng, two_h, dec_hidden), init_b=_zeros(dec_hidden))


@dataclass
class DecodeState:
    h: Tensor                # (B, H_d)
    prev_token: np.ndarray   # (B,) ids fed into the next step
    step: int = 0


def attention_scores(params: DecoderParams, h_prev: Tensor, ann: Annotations) -> Tensor:
    """Additive attention scores, (B, T); padded positions pushed to -1e30."""
    if ann.e.shape[1] == 0:
        raise ValueError("attention over empty annotations")
    if np.any(ann.mask.sum(axis=1) == 0):
        raise ValueError("attention: a batch row has every position masked")
    batch, steps, _ = ann.e.shape
    attn_dim = params.attn_v.shape[0]
    query = T.reshape(T.add(T.matmul(h_prev, params.attn_w1), params.attn_b1),
                      (batch, 1, attn_dim))
    keys = T.add(T.matmul(ann.e, params.attn_w2), params.attn_b2)
    scores = T.matmul(T.tanh(T.add(query, keys)), T.reshape(params.attn_v, (attn_dim, 1)))
    return T.add(T.reshape(scores, (batch, steps)), Tensor(ann.attn_penalty))


def attention_weights(scores: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over source positions; rows must keep one unmasked entry."""
    if mask is not None and np.any(np.asarray(mask).sum(axis=-1) == 0):
        raise ValueError("attention: all positions masked")
    return T.softmax(scores, axis=-1)


def context_vector(alpha: Tensor, ann: Annotations) -> Tensor:
    """Attention-weighted sum of annotations, (B, 2H)."""
    batch, steps = alpha.shape
    if steps != ann.e.shape[1]:
        raise T.ShapeError(f"context: {steps} weights vs {ann.e.shape[1]} annotations")
    return T.tsum(T.mul(T.reshape(alpha, (batch, steps, 1)), ann.e), axis=1)


def init_state(params: DecoderParams, ann: Annotations) -> DecodeState:
    """Start state from the ends of the bidirectional annotations.

    h_0 = tanh(W [forward-at-last-real-step : backward-at-step-1] + b),
    with BOS queued as the first input token.
    """
    if ann.e.shape[1] == 0 or min(ann.lengths) < 1:
        raise ValueError("cannot initialize a decoder over an empty source")
    batch, steps, two_h = ann.e.shape
    enc_h = two_h // 2
    last = np.zeros((batch, steps, 1))
    last[np.arange(batch), np.asarray(ann.lengths) - 1, 0] = 1.0
    fwd_end = T.tsum(T.mul(T.narrow(ann.e, 2, 0, enc_h), Tensor(last)), axis=1)
    bwd_start = T.reshape(T.narrow(T.narrow(ann.e, 2, enc_h, enc_h), 1, 0, 1), (batch, enc_h))
    ends = T.concat(fwd_end, bwd_start, axis=1)
    h0 = T.tanh(T.add(T.matmul(ends, params.init_w), params.init_b))
    return DecodeState(h=h0, prev_token=np.full(batch, BOS, dtype=np.int64), step=0)


def _step_logits(params: DecoderParams, h: Tensor, prev_ids: np.ndarray,
                 ann: Annotations) -> tuple[Tensor, Tensor]:
    alpha = attention_weights(attention_scores(params, h, ann), ann.mask)
    context = context_vector(alpha, ann)
    y_prev = T.embedding_lookup(params.tgt_emb, prev_ids)
    h_new = gru_cell(params.gru, T.concat(context, y_prev, axis=1), h)
    logits = T.add(T.matmul(h_new, params.out_w), params.out_b)
    return h_new, logits


def decode_step(params: DecoderParams, state: DecodeState,
                ann: Annotations) -> tuple[Tensor, Tensor]:
    """One prediction step: (new hidden state, word distribution)."""
    h_new, logits = _step_logits(params, state.h, state.prev_token, ann)
    return h_new, T.softmax(logits, axis=-1)


def teacher_forced_logits(params: DecoderParams, batch: Batch, ann: Annotations) -> Tensor:
    """Logits for every target step, conditioning on gold history only.

    Step i sees gold tokens y_1..y_{i-1} (BOS included), never model
    samples; output shape is (B, M_max - 1, V_tgt) aligned with
    tgt_ids[:, 1:].
    """
    state = init_state(params, ann)
    h = state.h
    per_step = []
    for j in range(1, batch.tgt_ids.shape[1]):
        h, logits = _step_logits(params, h, batch.tgt_ids[:, j - 1], ann)
        per_step.append(logits)
    return T.stack(per_step, axis=1)


def greedy_decode(params: DecoderParams, ann: Annotations, max_len: int = 50) -> list[int]:
    """Argmax decoding for a single sentence (batch of one).

    Feeds each argmax token back in until EOS or max_len; EOS is dropped
    from the result. np.argmax breaks ties toward the lowest token id.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    if ann.e.shape[0] != 1:
        raise ValueError(f"greedy_decode expects a single sentence, got batch {ann.e.shape[0]}")
    state = init_state(params, ann)
    out: list[int] = []
    for _ in range(max_len):
        h, dist = decode_step(params, state, ann)
        token = int(np.argmax(dist.data[0]))
        if token == EOS:
            break
        out.append(token)
        state = DecodeState(h=h, prev_token=np.array([token], dtype=np.int64),
                            step=state.step + 1)
    return out
