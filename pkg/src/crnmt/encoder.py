"""Convolutional-recurrent encoder.

Word + position embeddings feed a stack of width-n convolutions with
per-layer skip connections; the stack output is summed back onto the
embeddings through a residual connection, layer-normalized, and scanned by
a bidirectional GRU whose concatenated states are the per-token
annotations consumed by the decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .corpus import Batch
from .tensor import Tensor

INIT_SCALE = 0.08


def _weight(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape), requires_grad=True)


def _zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


@dataclass
class GRUParams:
    """Gate weights acting on the concatenation [x : h]."""
    w_z: Tensor
    w_r: Tensor
    w_h: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[1]


def init_gru(rng: np.random.Generator, input_size: int, hidden_size: int) -> GRUParams:
    n_in = input_size + hidden_size
    return GRUParams(
        w_z=_weight(rng, n_in, hidden_size), w_r=_weight(rng, n_in, hidden_size),
        w_h=_weight(rng, n_in, hidden_size),
        b_z=_zeros(hidden_size), b_r=_zeros(hidden_size), b_h=_zeros(hidden_size))


def gru_cell(params: GRUParams, x: Tensor, h_prev: Tensor) -> Tensor:
    """One GRU step: update/reset gates, candidate state, convex blend."""
    xh = T.concat(x, h_prev, axis=1)
    z = T.sigmoid(T.add(T.matmul(xh, params.w_z), params.b_z))
    r = T.sigmoid(T.add(T.matmul(xh, params.w_r), params.b_r))
    xrh = T.concat(x, T.mul(r, h_prev), axis=1)
    h_tilde = T.tanh(T.add(T.matmul(xrh, params.w_h), params.b_h))
    return T.add(T.mul(T.sub(1.0, z), h_prev), T.mul(z, h_tilde))


@dataclass
class ConvLayer:
    kernel: Tensor  # (n, d, d)
    bias: Tensor    # (d,)


@dataclass
class EncoderParams:
    word_emb: Tensor          # (V_src, d)
    pos_emb: Tensor           # (P_max, d)
    conv_layers: list[ConvLayer]
    ln_gain: Tensor           # (d,)
    ln_bias: Tensor           # (d,)
    gru_fwd: GRUParams
    gru_bwd: GRUParams
    ln_eps: float = 1e-5

    @property
    def emb_dim(self) -> int:
        return self.word_emb.shape[1]

    @property
    def max_pos(self) -> int:
        return self.pos_emb.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.gru_fwd.hidden_size


def init_encoder(rng: np.random.Generator, vocab_size: int, emb_dim: int, max_pos: int,
                 layers: int, kernel_width: int, hidden_size: int,
                 position_embedding: bool = True, ln_eps: float = 1e-5) -> EncoderParams:
    """Fresh encoder parameters; pos_emb starts at zero when disabled."""
    if not 0 <= layers <= 5:
        raise ValueError(f"conv depth must be in 0..5, got {layers}")
    pos = _weight(rng, max_pos, emb_dim) if position_embedding else _zeros(max_pos, emb_dim)
    conv = [ConvLayer(kernel=_weight(rng, kernel_width, emb_dim, emb_dim), bias=_zeros(emb_dim))
            for _ in range(layers)]
    return EncoderParams(
        word_emb=_weight(rng, vocab_size, emb_dim), pos_emb=pos, conv_layers=conv,
        ln_gain=Tensor(np.ones(emb_dim), requires_grad=True), ln_bias=_zeros(emb_dim),
        gru_fwd=init_gru(rng, emb_dim, hidden_size),
        gru_bwd=init_gru(rng, emb_dim, hidden_size), ln_eps=ln_eps)


@dataclass
class Annotations:
    """Per-token encoder outputs e_t = [forward_t : backward_t]."""
    e: Tensor                 # (B, T, 2H)
    lengths: list[int]
    mask: np.ndarray          # (B, T) floats, 1 on real tokens
    attn_penalty: np.ndarray = field(init=False)  # added to scores pre-softmax

    def __post_init__(self):
        # -1e30 underflows to exactly 0 after softmax's exp, keeping
        # forward values finite while masked weights stay below 1e-12
        self.attn_penalty = (1.0 - self.mask) * -1e30


def embed(params: EncoderParams, src_ids: np.ndarray) -> Tensor:
    """Word embedding plus learned position embedding, (B, T, d)."""
    steps = src_ids.shape[1]
    if steps > params.max_pos:
        raise ValueError(
            f"sentence length {steps} exceeds the position-embedding limit {params.max_pos}")
    words = T.embedding_lookup(params.word_emb, src_ids)
    positions = T.narrow(params.pos_emb, 0, 0, steps)
    return T.add(words, positions)


def conv_stack(params: EncoderParams, a: Tensor, mask: np.ndarray) -> Tensor:
    """Stacked convolutions, each wrapped in tanh plus a skip connection.

    Padded positions are zeroed before every convolution so PAD content
    never leaks into real tokens. Zero layers degenerate to the identity.
    """
    mask3 = Tensor(mask[:, :, None])
    x = a
    for layer in params.conv_layers:
        xm = T.mul(x, mask3)
        x = T.add(T.tanh(T.conv1d(xm, layer.kernel, layer.bias)), xm)
    return x


def residual_layernorm(params: EncoderParams, c: Tensor, a: Tensor) -> Tensor:
    """Sum the conv output back onto the embeddings, then layer-normalize."""
    if c.shape != a.shape:
        raise T.ShapeError(f"residual: shapes differ, {c.shape} vs {a.shape}")
    return T.layer_norm(T.add(c, a), params.ln_gain, params.ln_bias, params.ln_eps)


def _scan(gru: GRUParams, steps: list[Tensor], step_masks: list[np.ndarray],
          batch: int) -> list[Tensor]:
    """Run a GRU over per-step inputs, freezing state on masked steps."""
    h = Tensor(np.zeros((batch, gru.hidden_size)))
    outputs = []
    for x_t, m_t in zip(steps, step_masks):
        keep = Tensor(m_t[:, None])
        h_new = gru_cell(gru, x_t, h)
        h = T.add(T.mul(h_new, keep), T.mul(h, T.sub(1.0, keep)))
        outputs.append(h)
    return outputs


def bigru_encode(params: EncoderParams, c_prime: Tensor, lengths: list[int]) -> Annotations:
    """Forward and backward GRU passes, concatenated per position.

    Initial hidden states are zero; state updates are gated by the padding
    mask so annotations are invariant to trailing PAD, and positions
    beyond each sentence length come out exactly zero.
    """
    batch, steps, _ = c_prime.shape
    mask = (np.arange(steps)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)
    xs = [T.reshape(T.narrow(c_prime, 1, t, 1), (batch, -1)) for t in range(steps)]
    fwd = _scan(params.gru_fwd, xs, [mask[:, t] for t in range(steps)], batch)
    bwd_rev = _scan(params.gru_bwd, xs[::-1], [mask[:, t] for t in reversed(range(steps))], batch)
    bwd = bwd_rev[::-1]
    e = T.concat(T.stack(fwd, axis=1), T.stack(bwd, axis=1), axis=2)
    e = T.mul(e, Tensor(mask[:, :, None]))
    return Annotations(e=e, lengths=list(lengths), mask=mask)


def encode(params: EncoderParams, batch: Batch) -> Annotations:
    """Full encoder pipeline: embed, conv stack, residual + LN, BiGRU."""
    a = embed(params, batch.src_ids)
    c = conv_stack(params, a, batch.src_mask)
    c_prime = residual_layernorm(params, c, a)
    return bigru_encode(params, c_prime, batch.src_lengths)
