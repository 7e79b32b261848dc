"""Whole-model assembly: parameters, batch loss, parameter enumeration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .corpus import Batch, Vocabulary
from .decoder import DecoderParams, init_decoder, teacher_forced_logits
from .encoder import EncoderParams, encode, init_encoder
from .tensor import Tensor


@dataclass
class Model:
    cfg: TrainConfig
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    encoder: EncoderParams
    decoder: DecoderParams

    @classmethod
    def build(cls, cfg: TrainConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> "Model":
        """Initialize all trainable arrays from cfg.seed."""
        rng = np.random.default_rng(cfg.seed)
        enc = init_encoder(rng, len(src_vocab), cfg.emb_dim, cfg.max_pos,
                           cfg.conv_layers, cfg.kernel_width, cfg.hidden_size,
                           position_embedding=cfg.position_embedding, ln_eps=cfg.ln_eps)
        dec = init_decoder(rng, len(tgt_vocab), cfg.hidden_size, cfg.dec_hidden,
                           cfg.attn_dim, cfg.tgt_emb_dim)
        return cls(cfg=cfg, src_vocab=src_vocab, tgt_vocab=tgt_vocab, encoder=enc, decoder=dec)

    def parameters(self) -> list[tuple[str, Tensor]]:
        """All named parameter tensors in a fixed, checkpoint-stable order."""
        enc, dec = self.encoder, self.decoder
        named = [("encoder.word_emb", enc.word_emb), ("encoder.pos_emb", enc.pos_emb)]
        for i, layer in enumerate(enc.conv_layers):
            named += [(f"encoder.conv.{i}.kernel", layer.kernel),
                      (f"encoder.conv.{i}.bias", layer.bias)]
        named += [("encoder.ln_gain", enc.ln_gain), ("encoder.ln_bias", enc.ln_bias)]
        for tag, gru in (("encoder.gru_fwd", enc.gru_fwd), ("encoder.gru_bwd", enc.gru_bwd),
                         ("decoder.gru", dec.gru)):
            named += [(f"{tag}.w_z", gru.w_z), (f"{tag}.w_r", gru.w_r), (f"{tag}.w_h", gru.w_h),
                      (f"{tag}.b_z", gru.b_z), (f"{tag}.b_r", gru.b_r), (f"{tag}.b_h", gru.b_h)]
        named += [("decoder.tgt_emb", dec.tgt_emb),
                  ("decoder.attn_w1", dec.attn_w1), ("decoder.attn_b1", dec.attn_b1),
                  ("decoder.attn_w2", dec.attn_w2), ("decoder.attn_b2", dec.attn_b2),
                  ("decoder.attn_v", dec.attn_v),
                  ("decoder.out_w", dec.out_w), ("decoder.out_b", dec.out_b),
                  ("decoder.init_w", dec.init_w), ("decoder.init_b", dec.init_b)]
        return named

    def trainable_parameters(self) -> list[tuple[str, Tensor]]:
        """Parameters the optimizer may touch; pos_emb stays frozen when disabled."""
        skip = set() if self.cfg.position_embedding else {"encoder.pos_emb"}
        return [(n, t) for n, t in self.parameters() if n not in skip]

    def loss_on_batch(self, batch: Batch) -> tuple[Tensor, int]:
        """Masked mean NLL over a teacher-forced batch, plus the token count."""
        ann = encode(self.encoder, batch)
        logits = teacher_forced_logits(self.decoder, batch, ann)
        targets = batch.tgt_ids[:, 1:]
        mask = batch.tgt_mask[:, 1:]
        loss = T.nll_loss(logits, targets, mask)
        return loss, int(mask.sum())
