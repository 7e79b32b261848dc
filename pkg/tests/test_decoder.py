"""Decoder tests: attention, context, decode steps, teacher forcing, greedy."""

import numpy as np
import pytest

import crnmt.tensor as T
from crnmt.corpus import BOS, EOS, Batch
from crnmt.decoder import (attention_scores, attention_weights,
                           context_vector, decode_step, greedy_decode,
                           init_decoder, init_state, teacher_forced_logits)
from crnmt.encoder import Annotations
from crnmt.tensor import Tensor
from gradcheck import assert_grads_close

ENC_H = 3          # annotations are 2 * ENC_H wide


def tiny_decoder(seed=0, vocab=9, dec_hidden=4, attn=5, emb=4):
    return init_decoder(np.random.default_rng(seed), vocab, ENC_H, dec_hidden, attn, emb)


def annotations_for(batch=1, steps=4, lengths=None, seed=1):
    rng = np.random.default_rng(seed)
    lengths = lengths or [steps] * batch
    mask = (np.arange(steps)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)
    e = rng.standard_normal((batch, steps, 2 * ENC_H)) * mask[:, :, None]
    return Annotations(e=Tensor(e), lengths=list(lengths), mask=mask)


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

def test_zero_scoring_vector_gives_uniform_attention():
    dec = tiny_decoder()
    dec.attn_v.data[:] = 0.0
    ann = annotations_for(steps=5)
    scores = attention_scores(dec, Tensor(np.zeros((1, 4))), ann)
    alpha = attention_weights(scores, ann.mask)
    assert np.allclose(alpha.data, 0.2, atol=1e-12)


def test_identical_annotations_get_equal_scores():
    dec = tiny_decoder(seed=2)
    row = np.random.default_rng(3).standard_normal(2 * ENC_H)
    ann = Annotations(e=Tensor(np.tile(row, (1, 4, 1))), lengths=[4], mask=np.ones((1, 4)))
    scores = attention_scores(dec, Tensor(np.zeros((1, 4))), ann)
    assert np.allclose(scores.data, scores.data[0, 0], atol=1e-12)


def test_masked_positions_get_no_weight():
    dec = tiny_decoder(seed=4)
    ann = annotations_for(batch=2, steps=6, lengths=[6, 2], seed=5)
    h = Tensor(np.random.default_rng(6).standard_normal((2, 4)))
    alpha = attention_weights(attention_scores(dec, h, ann), ann.mask)
    assert np.all(alpha.data[1, 2:] < 1e-12)
    assert np.all(np.abs(alpha.data.sum(axis=1) - 1.0) < 1e-12)


def test_attention_weights_single_position_and_example():
    assert np.array_equal(attention_weights(Tensor([[3.7]])).data, [[1.0]])
    alpha = attention_weights(Tensor([[0.0, np.log(2.0)]]))
    assert np.allclose(alpha.data, [[1 / 3, 2 / 3]], atol=1e-15)


def test_attention_shift_invariance():
    scores = np.random.default_rng(7).standard_normal((2, 5))
    a = attention_weights(Tensor(scores))
    b = attention_weights(Tensor(scores + 42.0))
    assert np.all(np.abs(a.data - b.data) < 1e-12)


def test_attention_all_masked_is_error():
    dec = tiny_decoder()
    ann = annotations_for(steps=3)
    ann.mask[:] = 0.0
    with pytest.raises(ValueError, match="masked"):
        attention_scores(dec, Tensor(np.zeros((1, 4))), ann)
    with pytest.raises(ValueError, match="masked"):
        attention_weights(Tensor(np.zeros((1, 3))), np.zeros((1, 3)))


# ---------------------------------------------------------------------------
# context vector
# ---------------------------------------------------------------------------

def test_context_one_hot_selects_annotation():
    ann = annotations_for(steps=4, seed=8)
    alpha = np.zeros((1, 4))
    alpha[0, 2] = 1.0
    ctx = context_vector(Tensor(alpha), ann)
    assert np.array_equal(ctx.data[0], ann.e.data[0, 2])


def test_context_uniform_over_identical_rows():
    row = np.random.default_rng(9).standard_normal(2 * ENC_H)
    ann = Annotations(e=Tensor(np.tile(row, (1, 5, 1))), lengths=[5], mask=np.ones((1, 5)))
    ctx = context_vector(Tensor(np.full((1, 5), 0.2)), ann)
    assert np.allclose(ctx.data[0], row, atol=1e-12)


def test_context_stays_in_convex_hull():
    rng = np.random.default_rng(10)
    for _ in range(10):
        ann = annotations_for(steps=6, seed=rng.integers(1 << 30))
        raw = rng.standard_normal((1, 6))
        alpha = np.exp(raw) / np.exp(raw).sum()
        ctx = context_vector(Tensor(alpha), ann).data[0]
        low = ann.e.data[0].min(axis=0) - 1e-12
        high = ann.e.data[0].max(axis=0) + 1e-12
        assert np.all(ctx >= low) and np.all(ctx <= high)


# ---------------------------------------------------------------------------
# init_state / decode_step
# ---------------------------------------------------------------------------

def test_init_state_deterministic_and_bounded():
    dec = tiny_decoder(seed=11)
    ann = annotations_for(batch=2, steps=5, lengths=[5, 3], seed=12)
    a, b = init_state(dec, ann), init_state(dec, ann)
    assert np.array_equal(a.h.data, b.h.data)
    assert np.all(np.abs(a.h.data) < 1.0)
    assert np.all(a.prev_token == BOS)
    assert a.step == 0


def test_init_state_empty_source_is_error():
    dec = tiny_decoder()
    empty = Annotations(e=Tensor(np.zeros((1, 0, 2 * ENC_H))), lengths=[0],
                        mask=np.zeros((1, 0)))
    with pytest.raises(ValueError, match="empty"):
        init_state(dec, empty)


def test_init_state_gradient_reaches_annotations():
    dec = tiny_decoder(seed=13)
    e = Tensor(np.random.default_rng(14).standard_normal((1, 3, 2 * ENC_H)),
               requires_grad=True)
    ann = Annotations(e=e, lengths=[3], mask=np.ones((1, 3)))
    assert_grads_close(lambda: T.tsum(init_state(dec, ann).h), [e], tol=1e-5)


def test_decode_step_distribution_contract():
    dec = tiny_decoder(seed=15)
    ann = annotations_for(steps=4, seed=16)
    state = init_state(dec, ann)
    h1, dist1 = decode_step(dec, state, ann)
    h2, dist2 = decode_step(dec, state, ann)
    assert abs(dist1.data.sum() - 1.0) < 1e-12
    assert np.all(dist1.data > 0.0)
    assert np.array_equal(dist1.data, dist2.data)
    assert np.array_equal(h1.data, h2.data)


def test_decode_step_gradients_match_fd():
    dec = tiny_decoder(seed=17)
    e = Tensor(np.random.default_rng(18).standard_normal((1, 3, 2 * ENC_H)),
               requires_grad=True)
    ann = Annotations(e=e, lengths=[3], mask=np.ones((1, 3)))
    leaves = [e, dec.tgt_emb, dec.attn_w1, dec.attn_w2, dec.attn_v, dec.gru.w_h,
              dec.out_w, dec.out_b, dec.init_w]

    def loss():
        state = init_state(dec, ann)
        _, dist = decode_step(dec, state, ann)
        return T.tsum(T.mul(dist, dist))

    assert_grads_close(loss, leaves)


# ---------------------------------------------------------------------------
# teacher forcing
# ---------------------------------------------------------------------------

def target_batch(tgt_rows, lengths):
    tgt = np.asarray(tgt_rows, dtype=np.int64)
    mask = (np.arange(tgt.shape[1])[None, :] < np.asarray(lengths)[:, None]).astype(float)
    return Batch(src_ids=np.zeros((tgt.shape[0], 1), dtype=np.int64),
                 src_lengths=[1] * tgt.shape[0], tgt_ids=tgt, tgt_mask=mask)


def test_teacher_forced_logits_shape():
    dec = tiny_decoder(seed=19, vocab=9)
    ann = annotations_for(batch=2, steps=4, seed=20)
    batch = target_batch([[BOS, 4, 5, EOS], [BOS, 6, EOS, 0]], [4, 3])
    logits = teacher_forced_logits(dec, batch, ann)
    assert logits.shape == (2, 3, 9)


def test_teacher_forcing_causality():
    dec = tiny_decoder(seed=21)
    ann = annotations_for(batch=1, steps=4, seed=22)
    batch_a = target_batch([[BOS, 4, 5, EOS]], [4])
    batch_b = target_batch([[BOS, 4, 7, EOS]], [4])  # only y_2 differs
    la = teacher_forced_logits(dec, batch_a, ann)
    lb = teacher_forced_logits(dec, batch_b, ann)
    assert np.array_equal(la.data[0, 0], lb.data[0, 0])  # step 1 blind to y_2
    assert np.array_equal(la.data[0, 1], lb.data[0, 1])  # step 2 sees only y_1
    assert not np.allclose(la.data[0, 2], lb.data[0, 2])


def test_teacher_forcing_pad_steps_masked_in_loss():
    dec = tiny_decoder(seed=23)
    ann = annotations_for(batch=1, steps=3, seed=24)
    batch = target_batch([[BOS, 4, EOS, 0, 0]], [3])
    logits = teacher_forced_logits(dec, batch, ann)
    full = T.nll_loss(logits, batch.tgt_ids[:, 1:], batch.tgt_mask[:, 1:])
    trimmed_batch = target_batch([[BOS, 4, EOS]], [3])
    trimmed = T.nll_loss(teacher_forced_logits(dec, trimmed_batch, ann),
                         trimmed_batch.tgt_ids[:, 1:], trimmed_batch.tgt_mask[:, 1:])
    assert abs(full.item() - trimmed.item()) < 1e-12


# ---------------------------------------------------------------------------
# greedy decoding
# ---------------------------------------------------------------------------

def test_greedy_immediate_eos_gives_empty():
    dec = tiny_decoder(seed=25)
    dec.out_w.data[:] = 0.0
    dec.out_b.data[:] = 0.0
    dec.out_b.data[EOS] = 10.0
    ann = annotations_for(steps=3, seed=26)
    assert greedy_decode(dec, ann, max_len=10) == []


def test_greedy_respects_max_len_and_determinism():
    dec = tiny_decoder(seed=27)
    dec.out_b.data[EOS] = -100.0  # EOS never wins
    ann = annotations_for(steps=3, seed=28)
    out1 = greedy_decode(dec, ann, max_len=7)
    out2 = greedy_decode(dec, ann, max_len=7)
    assert len(out1) == 7
    assert out1 == out2
    with pytest.raises(ValueError):
        greedy_decode(dec, ann, max_len=0)
