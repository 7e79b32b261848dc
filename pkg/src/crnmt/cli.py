"""Command-line entry point: train, translate, evaluate, ablate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
The effective configuration (flags over config file over preset over
defaults) is echoed to stderr before any work starts.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PRESETS, TrainConfig, read_config_file, resolve_config
from .corpus import CorpusFormatError, build_vocab, load_tsv, split_dataset
from .evaluation import (ablation_sweep, evaluate_pairs,
                         format_ablation_table, translate_corpus)
from .model import Model
from .training import (CheckpointError, NumericalError, fit, load_checkpoint,
                       save_checkpoint)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# the full Tatoeba de-en export, whose held-out test size is fixed at 3900
TATOEBA_FULL_SIZE = 176692
TATOEBA_TEST_SIZE = 3900

log = logging.getLogger("crnmt")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file of 'key = value' lines")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named size preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float, dest="adadelta_lr")
    p.add_argument("--rho", type=float, dest="adadelta_rho")
    p.add_argument("--eps", type=float, dest="adadelta_eps")
    p.add_argument("--grad-clip", type=float, dest="grad_clip_norm")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int, help="early-stopping patience; 0 disables")
    p.add_argument("--conv-layers", type=int, dest="conv_layers")
    p.add_argument("--kernel-width", type=int, dest="kernel_width")
    p.add_argument("--no-position-embedding", action="store_const", const=False,
                   dest="position_embedding", default=None)
    p.add_argument("--emb-dim", type=int, dest="emb_dim")
    p.add_argument("--hidden-size", type=int, dest="hidden_size")
    p.add_argument("--dec-hidden", type=int, dest="dec_hidden")
    p.add_argument("--attn-dim", type=int, dest="attn_dim")
    p.add_argument("--tgt-emb-dim", type=int, dest="tgt_emb_dim")
    p.add_argument("--max-pos", type=int, dest="max_pos")
    p.add_argument("--vocab-size", type=int, dest="vocab_size")
    p.add_argument("--min-freq", type=int, dest="min_freq")
    p.add_argument("--max-sentence-len", type=int, dest="max_sentence_len")
    p.add_argument("--max-decode-len", type=int, dest="max_decode_len")
    p.add_argument("--val-frac", type=float, dest="val_frac",
                   help="validation fraction; 0 validates on the training data")
    p.add_argument("--test-frac", type=float, dest="test_frac")


def _resolve(args) -> TrainConfig:
    flag_values = {name: getattr(args, name, None) for name in TrainConfig().as_dict()}
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    return resolve_config(getattr(args, "preset", None), file_values, flag_values)


def _echo_config(cfg: TrainConfig, extras: dict | None = None) -> None:
    for key, value in cfg.as_dict().items():
        sys.stderr.write(f"config: {key} = {value}\n")
    for key, value in (extras or {}).items():
        sys.stderr.write(f"config: {key} = {value}\n")
    sys.stderr.flush()


def _load_pairs(cfg: TrainConfig, path, swap: bool):
    pairs = load_tsv(path, swap_columns=swap)
    kept = [p for p in pairs
            if len(p.source) <= cfg.max_sentence_len and len(p.target) <= cfg.max_sentence_len]
    if len(kept) < len(pairs):
        log.warning("dropped %d pair(s) longer than %d tokens",
                    len(pairs) - len(kept), cfg.max_sentence_len)
    if not kept:
        raise CorpusFormatError(f"no pairs within the {cfg.max_sentence_len}-token limit")
    return kept


def cmd_train(args) -> int:
    from . import reporting

    cfg = _resolve(args)
    _echo_config(cfg, {"data": args.data, "out": args.out, "swap_columns": args.swap_columns})
    pairs = _load_pairs(cfg, args.data, args.swap_columns)
    if cfg.val_frac == 0.0:
        train, val, test = pairs, pairs, []
        log.info("val_frac 0: validating on the %d training pairs", len(train))
    else:
        test_size = args.test_size
        if test_size is None and len(pairs) == TATOEBA_FULL_SIZE:
            test_size = TATOEBA_TEST_SIZE
        train, val, test = split_dataset(pairs, 1.0 - cfg.val_frac - cfg.test_frac,
                                         cfg.val_frac, seed=cfg.seed, test_size=test_size)
    log.info("split: %d train / %d val / %d test", len(train), len(val), len(test))
    src_vocab = build_vocab(train, "source", cfg.vocab_size, cfg.min_freq)
    tgt_vocab = build_vocab(train, "target", cfg.vocab_size, cfg.min_freq)
    log.info("vocab: %d source / %d target", len(src_vocab), len(tgt_vocab))
    model = Model.build(cfg, src_vocab, tgt_vocab)
    history = fit(model, train, val, cfg, checkpoint_dir=args.out)
    if not history:
        save_checkpoint(model, args.out)
    reporting.write_history(args.out, history)
    return EXIT_OK


def cmd_translate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    _echo_config(model.cfg, {"checkpoint": args.checkpoint})
    if args.input:
        with open(args.input, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = sys.stdin.read().splitlines()
    translations = translate_corpus(model, lines, max_len=args.max_len)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for tokens in translations:
            out.write(" ".join(tokens) + "\n")
    finally:
        if args.output:
            out.close()
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from . import reporting

    model = load_checkpoint(args.checkpoint)
    _echo_config(model.cfg, {"checkpoint": args.checkpoint, "data": args.data})
    pairs = _load_pairs(model.cfg, args.data, args.swap_columns)
    report = evaluate_pairs(model, pairs, max_len=args.max_len)
    for line in report.lines():
        print(line)
    if args.csv:
        fields = {"checkpoint": str(args.checkpoint), "data": str(args.data),
                  "conv_layers": model.cfg.conv_layers,
                  "position_embedding": model.cfg.position_embedding,
                  "seed": model.cfg.seed}
        reporting.append_bleu_row(args.csv, fields, report)
    return EXIT_OK


def cmd_ablate(args) -> int:
    from . import reporting

    cfg = _resolve(args)
    depths = [int(d) for d in args.depths.split(",") if d.strip()]
    for depth in depths:
        if not 1 <= depth <= 5:
            raise ValueError(f"--depths entries must be in 1..5, got {depth}")
    pos_options = []
    for token in args.pos_emb.split(","):
        token = token.strip().lower()
        if token not in ("on", "off"):
            raise ValueError(f"--pos-emb entries must be 'on' or 'off', got {token!r}")
        pos_options.append(token == "on")
    _echo_config(cfg, {"data": args.data, "out": args.out,
                       "depths": depths, "pos_emb": pos_options})
    pairs = _load_pairs(cfg, args.data, args.swap_columns)
    rows = ablation_sweep(pairs, depths, pos_options, cfg, log_progress=True)
    print(format_ablation_table(rows))
    reporting.write_ablation(args.out, rows)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="crnmt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and checkpoint the best")
    p_train.add_argument("--data", required=True, help="parallel TSV corpus")
    p_train.add_argument("--out", required=True, help="checkpoint directory")
    p_train.add_argument("--swap-columns", action="store_true")
    p_train.add_argument("--test-size", type=int, default=None,
                         help="held-out test count (defaults to 3900 on the full Tatoeba file)")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_tr = sub.add_parser("translate", help="translate one sentence per line")
    p_tr.add_argument("--checkpoint", required=True)
    p_tr.add_argument("--input", help="source file; stdin when omitted")
    p_tr.add_argument("--output", help="target file; stdout when omitted")
    p_tr.add_argument("--max-len", type=int, default=None)
    p_tr.set_defaults(func=cmd_translate)

    p_ev = sub.add_parser("evaluate", help="corpus BLEU of a checkpoint on a test TSV")
    p_ev.add_argument("--checkpoint", required=True)
    p_ev.add_argument("--data", required=True)
    p_ev.add_argument("--swap-columns", action="store_true")
    p_ev.add_argument("--max-len", type=int, default=None)
    p_ev.add_argument("--csv", help="append a CSV row (figure rendered alongside)")
    p_ev.set_defaults(func=cmd_evaluate)

    p_ab = sub.add_parser("ablate", help="depth x position-embedding sweep")
    p_ab.add_argument("--data", required=True)
    p_ab.add_argument("--out", required=True, help="directory for table, CSV, and figure")
    p_ab.add_argument("--swap-columns", action="store_true")
    p_ab.add_argument("--depths", default="1,2,3,4,5")
    p_ab.add_argument("--pos-emb", default="on,off", dest="pos_emb")
    _add_config_flags(p_ab)
    p_ab.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericalError as exc:
        sys.stderr.write(f"crnmt: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except (CorpusFormatError, CheckpointError, FileNotFoundError, OSError) as exc:
        sys.stderr.write(f"crnmt: data error: {exc}\n")
        return EXIT_DATA
    except ValueError as exc:
        sys.stderr.write(f"crnmt: invalid configuration: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
