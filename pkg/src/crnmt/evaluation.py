"""Corpus-level BLEU-4 scoring, batch translation, and the ablation sweep.

BLEU here is corpus-level with clipped modified n-gram precision and
brevity penalty min(1, e^(1 - r/h)); a zero precision is floored at
1 / (2 * hypothesis n-gram count) so the score is always finite. The exact
variant is stated in the report header so numbers stay comparable across
runs of this toolkit.
"""

from __future__ import annotations

import dataclasses
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .corpus import (PAD, Batch, SentencePair, build_vocab, make_batches,
                     split_dataset, tokenize)
from .decoder import greedy_decode
from .encoder import Annotations, encode
from .model import Model
from .tensor import Tensor
from .training import fit, validate

BLEU_VARIANT = "corpus BLEU-4, clipped precisions, BP=min(1, e^(1-r/h)), zero-p floor 1/(2n)"

# full-scale reference scores for the depth-3 configuration; desk-scale
# runs are not expected to approach these
FULL_SCALE_BLEU_POS_ON = 30.6
FULL_SCALE_BLEU_POS_OFF = 27.9


@dataclass
class BleuReport:
    bleu: float
    precisions: list[float]      # p_1..p_4
    brevity_penalty: float
    hyp_tokens: int
    ref_tokens: int

    def lines(self) -> list[str]:
        ps = "  ".join(f"p{i + 1}={p:.4f}" for i, p in enumerate(self.precisions))
        return [f"BLEU = {self.bleu:.2f}  ({BLEU_VARIANT})",
                f"{ps}  BP={self.brevity_penalty:.4f}",
                f"hyp tokens = {self.hyp_tokens}  ref tokens = {self.ref_tokens}"]


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_corpus(hypotheses: list[list[str]], references: list[list[str]]) -> BleuReport:
    """Corpus-level BLEU-4 of token-list hypotheses against references."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypothesis/reference counts differ: {len(hypotheses)} vs {len(references)}")
    if not hypotheses:
        raise ValueError("bleu_corpus needs at least one sentence")
    matched = [0] * 4
    total = [0] * 4
    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    for hyp, ref in zip(hypotheses, references):
        for n in range(1, 5):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            total[n - 1] += max(len(hyp) - n + 1, 0)
            matched[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    precisions = []
    for n in range(4):
        if matched[n] > 0:
            precisions.append(matched[n] / total[n])
        else:
            precisions.append(1.0 / (2.0 * max(total[n], 1)))
    if hyp_len == 0:
        bp = 0.0
    else:
        bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    bleu = bp * math.exp(sum(math.log(p) for p in precisions) / 4.0) * 100.0
    return BleuReport(bleu=bleu, precisions=precisions, brevity_penalty=bp,
                      hyp_tokens=hyp_len, ref_tokens=ref_len)


def _encode_chunk(model: Model, token_lists: list[list[str]]):
    # built by hand: make_batches sorts by length, but here row order must
    # stay aligned with the caller's sentence order
    rows = [model.src_vocab.encode(tokens) for tokens in token_lists]
    t_max = max(len(r) for r in rows)
    src = np.full((len(rows), t_max), PAD, dtype=np.int64)
    for r, ids in enumerate(rows):
        src[r, :len(ids)] = ids
    batch = Batch(src_ids=src, src_lengths=[len(r) for r in rows],
                  tgt_ids=np.full((len(rows), 2), PAD, dtype=np.int64),
                  tgt_mask=np.zeros((len(rows), 2)))
    return encode(model.encoder, batch), batch


def translate_corpus(model: Model, sentences: list[str], max_len: int | None = None) -> list[list[str]]:
    """Greedy translations (surface tokens) of raw source sentences.

    Sentences are tokenized with the training tokenizer, OOV tokens map to
    UNK, and empty inputs translate to empty outputs.
    """
    if max_len is None:
        max_len = model.cfg.max_decode_len
    results: list[list[str]] = [[] for _ in sentences]
    todo = [(i, tokenize(s)) for i, s in enumerate(sentences)]
    todo = [(i, tokens) for i, tokens in todo if tokens]
    chunk_size = max(model.cfg.batch_size, 1)
    for start in range(0, len(todo), chunk_size):
        chunk = todo[start:start + chunk_size]
        ann, batch = _encode_chunk(model, [tokens for _, tokens in chunk])
        for row, (i, _) in enumerate(chunk):
            length = batch.src_lengths[row]
            single = Annotations(e=Tensor(ann.e.data[row:row + 1, :length]),
                                 lengths=[length], mask=ann.mask[row:row + 1, :length])
            ids = greedy_decode(model.decoder, single, max_len=max_len)
            results[i] = model.tgt_vocab.decode(ids)
    return results


def evaluate_pairs(model: Model, pairs: list[SentencePair],
                   max_len: int | None = None) -> BleuReport:
    """Translate the source side of pairs and score against the targets."""
    sources = [" ".join(p.source) for p in pairs]
    hyps = translate_corpus(model, sources, max_len=max_len)
    refs = [p.target for p in pairs]
    return bleu_corpus(hyps, refs)


def ablation_sweep(pairs: list[SentencePair], depths: list[int], pos_options: list[bool],
                   cfg: TrainConfig, log_progress: bool = False) -> list[dict]:
    """Train one model per (depth, position-embedding) cell, shared split.

    Every run reuses the same seed and the same train/val/test partition;
    rows report the effective config, final validation loss, and test BLEU.
    """
    train, val, test = split_dataset(pairs, 1.0 - cfg.val_frac - cfg.test_frac,
                                     cfg.val_frac, seed=cfg.seed)
    src_vocab = build_vocab(train, "source", cfg.vocab_size, cfg.min_freq)
    tgt_vocab = build_vocab(train, "target", cfg.vocab_size, cfg.min_freq)
    rows = []
    for depth in depths:
        for pos in pos_options:
            run_cfg = dataclasses.replace(cfg, conv_layers=depth, position_embedding=pos)
            model = Model.build(run_cfg, src_vocab, tgt_vocab)
            history = fit(model, train, val, run_cfg, checkpoint_dir=None,
                          log_progress=log_progress)
            val_batches = make_batches(val, src_vocab, tgt_vocab, run_cfg.batch_size,
                                       shuffle_seed=run_cfg.seed)
            report = evaluate_pairs(model, test)
            row = {
                "conv_layers": depth,
                "position_embedding": pos,
                "seed": run_cfg.seed,
                "epochs_run": len(history),
                "val_loss": validate(model, val_batches),
                "test_bleu": report.bleu,
            }
            # reproducibility contract: each row carries its full config
            row.update({f"config.{k}": v for k, v in run_cfg.as_dict().items()})
            rows.append(row)
    return rows


def format_ablation_table(rows: list[dict]) -> str:
    """Human-readable sweep table with the full-scale reference up top."""
    out = [f"full-scale reference (depth 3): BLEU {FULL_SCALE_BLEU_POS_ON} with "
           f"position embedding, {FULL_SCALE_BLEU_POS_OFF} without",
           f"{'depth':>5}  {'pos_emb':>7}  {'seed':>4}  {'epochs':>6}  "
           f"{'val_loss':>8}  {'test_bleu':>9}"]
    for r in rows:
        out.append(f"{r['conv_layers']:>5}  {str(r['position_embedding']):>7}  "
                   f"{r['seed']:>4}  {r['epochs_run']:>6}  "
                   f"{r['val_loss']:>8.4f}  {r['test_bleu']:>9.2f}")
    return "\n".join(out)
