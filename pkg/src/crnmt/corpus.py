"""Parallel-corpus ingestion: TSV loading, tokenization, vocabularies, batching.

The input format is the Tatoeba tab-separated export: one example per line,
target-language text first, then source-language text, then an optional
attribution column that is ignored.
"""

from __future__ import annotations

import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED_TOKENS = ["<pad>", "<bos>", "<eos>", "<unk>"]


class CorpusFormatError(ValueError):
    """The corpus file exists but contains no usable examples."""


@dataclass
class SentencePair:
    source: list[str]
    target: list[str]


def tokenize(text: str) -> list[str]:
    """Lowercased, NFC-normalized tokens with punctuation split off.

    Whitespace delimits tokens; every punctuation character (Unicode
    category P*) becomes a token of its own.
    """
    text = unicodedata.normalize("NFC", text).lower()
    tokens: list[str] = []
    word: list[str] = []
    for ch in text:
        if ch.isspace():
            if word:
                tokens.append("".join(word))
                word = []
        elif unicodedata.category(ch).startswith("P"):
            if word:
                tokens.append("".join(word))
                word = []
            tokens.append(ch)
        else:
            word.append(ch)
    if word:
        tokens.append("".join(word))
    return tokens


def load_tsv(path, swap_columns: bool = False) -> list[SentencePair]:
    """Read target<TAB>source[<TAB>attribution] lines into sentence pairs.

    Malformed lines (fewer than two fields, or a side that tokenizes to
    nothing) are skipped and counted in a single warning. swap_columns
    reverses which column is read as source vs target.
    """
    pairs: list[SentencePair] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                skipped += 1
                continue
            tgt_text, src_text = fields[0], fields[1]
            if swap_columns:
                tgt_text, src_text = src_text, tgt_text
            source, target = tokenize(src_text), tokenize(tgt_text)
            if not source or not target:
                skipped += 1
                continue
            pairs.append(SentencePair(source=source, target=target))
    if skipped:
        log.warning("skipped %d unusable line(s) in %s", skipped, path)
    if not pairs:
        raise CorpusFormatError(f"no usable sentence pairs in {path}")
    return pairs


class Vocabulary:
    """Bijection between surface tokens and ids, with ids 0-3 reserved."""

    def __init__(self, tokens: list[str]) -> None:
        self.id_to_token = list(RESERVED_TOKENS) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: list[str]) -> list[int]:
        get = self.token_to_id.get
        return [get(t, UNK) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]


def build_vocab(pairs: list[SentencePair], side: str, max_size: int = 20000,
                min_freq: int = 2) -> Vocabulary:
    """Most-frequent-first vocabulary; ties break lexicographically."""
    if max_size < 5:
        raise ValueError(f"max_size must be at least 5, got {max_size}")
    if side not in ("source", "target"):
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")
    counts: Counter[str] = Counter()
    for pair in pairs:
        counts.update(pair.source if side == "source" else pair.target)
    ranked = sorted((t for t, c in counts.items() if c >= min_freq),
                    key=lambda t: (-counts[t], t))
    return Vocabulary(ranked[:max_size - len(RESERVED_TOKENS)])


@dataclass
class Batch:
    """Padded id matrices for one mini-batch.

    src_ids: (B, T_max) source ids, PAD-filled beyond each length.
    tgt_ids: (B, M_max) BOS-prefixed, EOS-suffixed target ids, PAD-filled.
    tgt_mask[i, t] = 1 iff t is a real (non-PAD) target position.
    """
    src_ids: np.ndarray
    src_lengths: list[int]
    tgt_ids: np.ndarray
    tgt_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.src_ids.shape[0]

    @property
    def src_mask(self) -> np.ndarray:
        t_max = self.src_ids.shape[1]
        return (np.arange(t_max)[None, :] < np.asarray(self.src_lengths)[:, None]).astype(np.float64)


def make_batches(pairs: list[SentencePair], vocab_src: Vocabulary, vocab_tgt: Vocabulary,
                 batch_size: int, shuffle_seed: int = 0) -> list[Batch]:
    """Length-bucketed batches covering every pair exactly once.

    Pairs are sorted by source length (stable), grouped into batches, and
    the batch order is shuffled deterministically from shuffle_seed.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = sorted(range(len(pairs)), key=lambda i: (len(pairs[i].source), i))
    groups = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    rng = np.random.default_rng(shuffle_seed)
    batches = []
    for gi in rng.permutation(len(groups)):
        members = [pairs[i] for i in groups[gi]]
        src_rows = [vocab_src.encode(p.source) for p in members]
        tgt_rows = [[BOS] + vocab_tgt.encode(p.target) + [EOS] for p in members]
        t_max = max(len(r) for r in src_rows)
        m_max = max(len(r) for r in tgt_rows)
        src = np.full((len(members), t_max), PAD, dtype=np.int64)
        tgt = np.full((len(members), m_max), PAD, dtype=np.int64)
        mask = np.zeros((len(members), m_max))
        for r, (s, t) in enumerate(zip(src_rows, tgt_rows)):
            src[r, :len(s)] = s
            tgt[r, :len(t)] = t
            mask[r, :len(t)] = 1.0
        batches.append(Batch(src_ids=src, src_lengths=[len(r) for r in src_rows],
                             tgt_ids=tgt, tgt_mask=mask))
    return batches


def split_dataset(pairs: list[SentencePair], train_frac: float, val_frac: float,
                  seed: int = 0, test_size: int | None = None):
    """Deterministic shuffled (train, val, test) partition.

    Fractions must be positive and sum to at most 1; the test split takes
    the remainder unless an explicit test_size pins it.
    """
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac > 1:
        raise ValueError(
            f"fractions must be positive with sum <= 1, got {train_frac}/{val_frac}")
    order = np.random.default_rng(seed).permutation(len(pairs))
    if test_size is not None:
        if not 0 <= test_size <= len(pairs):
            raise ValueError(f"test_size {test_size} out of range for {len(pairs)} pairs")
        n_test = test_size
        n_val = int(val_frac * (len(pairs) - n_test))
        n_train = len(pairs) - n_test - n_val
    else:
        n_train = int(train_frac * len(pairs))
        n_val = int(val_frac * len(pairs))
        n_test = len(pairs) - n_train - n_val
    train = [pairs[i] for i in order[:n_train]]
    val = [pairs[i] for i in order[n_train:n_train + n_val]]
    test = [pairs[i] for i in order[n_train + n_val:]]
    return train, val, test
