"""Adadelta training loop with validation, early stopping, and checkpoints.

Checkpoints are directories: a text `manifest` (format version, config
key-values, vocabulary file names, then one `name<TAB>dtype<TAB>dims<TAB>
byte_offset` line per parameter), a `params.bin` of concatenated row-major
little-endian float32 arrays at those offsets, and `vocab.src`/`vocab.tgt`
with one token per line (line number = id).
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os

import numpy as np

from .config import TrainConfig
from .corpus import SentencePair, Vocabulary, make_batches
from .model import Model
from .tensor import Tape, Tensor, backward

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest"
PARAMS_NAME = "params.bin"
VOCAB_FILES = {"vocab_src": "vocab.src", "vocab_tgt": "vocab.tgt"}


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


class CheckpointError(ValueError):
    """A checkpoint directory is missing, corrupt, or incompatible."""


def adadelta_update(x: np.ndarray, g: np.ndarray, eg2: np.ndarray, edx2: np.ndarray,
                    lr: float, rho: float, eps: float) -> None:
    """One in-place Adadelta step on a single parameter array.

    E[g^2] <- rho E[g^2] + (1-rho) g^2
    dx     = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2]<- rho E[dx^2] + (1-rho) dx^2
    x      <- x + lr * dx
    """
    eg2 *= rho
    eg2 += (1.0 - rho) * g * g
    dx = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * g
    edx2 *= rho
    edx2 += (1.0 - rho) * dx * dx
    x += lr * dx


class Adadelta:
    """Adadelta over named parameters, with per-parameter accumulators."""

    def __init__(self, params: list[tuple[str, Tensor]], lr: float = 0.1,
                 rho: float = 0.95, eps: float = 1e-6) -> None:
        self.params = params
        self.lr, self.rho, self.eps = lr, rho, eps
        self.state = {name: (np.zeros_like(t.data), np.zeros_like(t.data))
                      for name, t in params}

    def step(self) -> None:
        for name, t in self.params:
            if t.grad is None:
                continue
            eg2, edx2 = self.state[name]
            adadelta_update(t.data, t.grad, eg2, edx2, self.lr, self.rho, self.eps)

    def zero_grad(self) -> None:
        for _, t in self.params:
            t.grad = None


def clip_gradients(params: list[tuple[str, Tensor]], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    total = 0.0
    for _, t in params:
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    norm = math.sqrt(total)
    factor = 1.0 if norm <= max_norm else max_norm / norm
    if factor != 1.0:
        for _, t in params:
            if t.grad is not None:
                t.grad *= factor
    return factor


def train_epoch(model: Model, batches, optimizer: Adadelta, cfg: TrainConfig) -> float:
    """One pass over the batches; returns the token-weighted mean loss."""
    total_loss = 0.0
    total_tokens = 0
    for index, batch in enumerate(batches):
        with Tape():
            loss, n_tokens = model.loss_on_batch(batch)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError(f"non-finite loss {value} on batch {index}")
            backward(loss)
        clip_gradients(optimizer.params, cfg.grad_clip_norm)
        optimizer.step()
        optimizer.zero_grad()
        total_loss += value * n_tokens
        total_tokens += n_tokens
    return total_loss / max(total_tokens, 1)


def validate(model: Model, batches) -> float:
    """Forward-only token-weighted mean loss; parameters are untouched."""
    total_loss = 0.0
    total_tokens = 0
    for batch in batches:
        loss, n_tokens = model.loss_on_batch(batch)
        total_loss += loss.item() * n_tokens
        total_tokens += n_tokens
    return total_loss / max(total_tokens, 1)


def fit(model: Model, train_pairs: list[SentencePair], val_pairs: list[SentencePair],
        cfg: TrainConfig, checkpoint_dir=None, log_progress: bool = True) -> list[dict]:
    """Train with per-epoch validation, early stopping, best-model saving.

    Batches are re-bucketed each epoch from a seed derived from cfg.seed,
    so runs with equal seeds are bit-identical. Returns per-epoch history
    rows (epoch, train_loss, val_loss).
    """
    optimizer = Adadelta(model.trainable_parameters(), lr=cfg.adadelta_lr,
                         rho=cfg.adadelta_rho, eps=cfg.adadelta_eps)
    val_batches = make_batches(val_pairs, model.src_vocab, model.tgt_vocab,
                               cfg.batch_size, shuffle_seed=cfg.seed)
    history: list[dict] = []
    best_val = math.inf
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        batches = make_batches(train_pairs, model.src_vocab, model.tgt_vocab,
                               cfg.batch_size, shuffle_seed=cfg.seed + epoch)
        train_loss = train_epoch(model, batches, optimizer, cfg)
        val_loss = validate(model, val_batches)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if log_progress:
            log.info("epoch %d: train %.4f val %.4f", epoch, train_loss, val_loss)
        improved = val_loss < best_val - cfg.min_delta
        if val_loss < best_val:
            best_val = val_loss
            if checkpoint_dir is not None:
                save_checkpoint(model, checkpoint_dir, epoch=epoch, best_val_loss=best_val)
        if improved:
            stale = 0
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                if log_progress:
                    log.info("early stop after epoch %d (best val %.4f)", epoch, best_val)
                break
    return history


def _write_vocab(path, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token in vocab.id_to_token:
            fh.write(token + "\n")


def _read_vocab(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    while tokens and tokens[-1] == "":
        tokens.pop()
    return Vocabulary(tokens[4:])


def save_checkpoint(model: Model, path, epoch: int = 0, best_val_loss: float = math.inf) -> None:
    """Write manifest, params.bin, and vocab files into directory `path`."""
    os.makedirs(path, exist_ok=True)
    header = [("format_version", str(FORMAT_VERSION))]
    for key, value in model.cfg.as_dict().items():
        header.append((f"config.{key}", repr(value) if isinstance(value, float) else str(value)))
    header += [("vocab_src", VOCAB_FILES["vocab_src"]), ("vocab_tgt", VOCAB_FILES["vocab_tgt"]),
               ("epoch", str(epoch)), ("best_val_loss", repr(best_val_loss))]
    lines = ["\t".join(entry) for entry in header]
    offset = 0
    blobs = []
    for name, t in model.parameters():
        raw = t.data.astype("<f4").tobytes()
        dims = ",".join(str(d) for d in t.data.shape)
        lines.append(f"{name}\tfloat32\t{dims}\t{offset}")
        blobs.append(raw)
        offset += len(raw)
    with open(os.path.join(path, PARAMS_NAME), "wb") as fh:
        for blob in blobs:
            fh.write(blob)
    _write_vocab(os.path.join(path, VOCAB_FILES["vocab_src"]), model.src_vocab)
    _write_vocab(os.path.join(path, VOCAB_FILES["vocab_tgt"]), model.tgt_vocab)
    with open(os.path.join(path, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_manifest(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw_lines = [line.rstrip("\n") for line in fh if line.strip()]
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint manifest: {exc}") from exc
    if not raw_lines:
        raise CheckpointError("empty checkpoint manifest")
    first = raw_lines[0].split("\t")
    if first[0] != "format_version" or len(first) != 2:
        raise CheckpointError("not a checkpoint manifest (missing format_version header)")
    try:
        version = int(first[1])
    except ValueError:
        raise CheckpointError(f"unreadable format_version {first[1]!r}") from None
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} not supported (expected {FORMAT_VERSION})")
    header: dict[str, str] = {}
    entries: list[tuple[str, str, tuple[int, ...], int]] = []
    for line in raw_lines[1:]:
        fields = line.split("\t")
        if len(fields) == 2:
            header[fields[0]] = fields[1]
        elif len(fields) == 4:
            name, dtype, dims, off = fields
            try:
                shape = tuple(int(d) for d in dims.split(",")) if dims else ()
                entries.append((name, dtype, shape, int(off)))
            except ValueError:
                raise CheckpointError(f"unreadable parameter line {line!r}") from None
        else:
            raise CheckpointError(f"malformed manifest line {line!r}")
    return header, entries


def load_checkpoint(path) -> Model:
    """Rebuild a Model (config, vocabularies, parameters) from a directory."""
    manifest = os.path.join(path, MANIFEST_NAME)
    if not os.path.isdir(path) or not os.path.exists(manifest):
        raise CheckpointError(f"no checkpoint at {path}")
    header, entries = _parse_manifest(manifest)
    cfg_values = {}
    for field in dataclasses.fields(TrainConfig):
        key = f"config.{field.name}"
        if key not in header:
            raise CheckpointError(f"manifest missing {key}")
        raw = header[key]
        if field.type == "bool":
            cfg_values[field.name] = raw == "True"
        elif field.type == "int":
            cfg_values[field.name] = int(raw)
        elif field.type == "float":
            cfg_values[field.name] = float(raw)
        else:
            cfg_values[field.name] = raw
    cfg = TrainConfig(**cfg_values)
    src_vocab = _read_vocab(os.path.join(path, header.get("vocab_src", VOCAB_FILES["vocab_src"])))
    tgt_vocab = _read_vocab(os.path.join(path, header.get("vocab_tgt", VOCAB_FILES["vocab_tgt"])))
    model = Model.build(cfg, src_vocab, tgt_vocab)
    named = dict(model.parameters())
    if set(named) != {name for name, _, _, _ in entries}:
        raise CheckpointError("manifest parameters do not match the model layout")
    params_path = os.path.join(path, PARAMS_NAME)
    try:
        blob = open(params_path, "rb").read()
    except OSError as exc:
        raise CheckpointError(f"cannot read {params_path}: {exc}") from exc
    for name, dtype, shape, offset in entries:
        if dtype != "float32":
            raise CheckpointError(f"unsupported dtype {dtype!r} for {name}")
        target = named[name]
        if shape != target.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: manifest {shape}, model {target.data.shape}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 4 * count
        if end > len(blob):
            raise CheckpointError(f"params.bin truncated: {name} needs bytes up to {end}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        target.data = arr.astype(np.float64).reshape(shape)
    return model
