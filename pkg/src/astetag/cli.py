"""Command-line entry point: ``astetag <command> [flags]``.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import analysis, gts, llm
from .checkpoint import load_checkpoint
from .dataset import corpus_stats, format_stats, load_split, parse_line
from .errors import AsteError
from .metrics import format_table
from .tagging import decode_matrix, dump_matrix, encode_triplets, load_matrix, scheme_fidelity
from .training import (TrainConfig, coerce, evaluate_split, hidden_states, model_from_checkpoint,
                       read_config_file, train)

log = logging.getLogger("astetag")

TRAIN_KEYS = [f.name for f in fields(TrainConfig)]
LLM_KEYS = ["llm_base_url", "llm_model"]
CHOICES = {"scheme": ("ours", "gts"), "head": ("literal", "extended"),
           "roles": ("three", "sentiment5"), "contrastive_reduction": ("mean", "sum")}


class UsageError(Exception):
    pass


def _add_train_flags(p):
    for f in fields(TrainConfig):
        kind = {"int": int, "float": float}.get(f.type if isinstance(f.type, str) else f.type.__name__, str)
        p.add_argument(f"--{f.name}", type=kind, default=argparse.SUPPRESS,
                       choices=CHOICES.get(f.name), help=f"(default: {f.default!r})")


def _merged(args, keys, cls=TrainConfig):
    """Config-file values for ``keys``, overridden by flags that were given."""
    out = {}
    if getattr(args, "config", None):
        raw = read_config_file(args.config)
        unknown = set(raw) - set(TRAIN_KEYS) - set(LLM_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for k, v in raw.items():
            if k in keys:
                out[k] = coerce(cls, k, v) if k in TRAIN_KEYS else v
    for k in keys:
        if hasattr(args, k):
            out[k] = getattr(args, k)
    return out


def _triplet_list(triplets) -> str:
    items = ", ".join(f"({list(t.aspect.indices())}, {list(t.opinion.indices())}, "
                      f"'{t.sentiment.value}')" for t in triplets)
    return f"[{items}]"


def _read_text(path):
    return sys.stdin.read() if path in (None, "-") else Path(path).read_text(encoding="utf-8")


# ------------------------------------------------------------------ commands


def cmd_stats(args, out):
    rows = [(Path(p).name, corpus_stats(load_split(p))) for p in args.paths]
    print(format_stats(rows), file=out)


def cmd_encode(args, out):
    if args.line is not None:
        lines = [args.line]
    else:
        lines = [ln for ln in _read_text(args.input).splitlines() if ln.strip()]
    dumps = []
    for no, line in enumerate(lines, 1):
        s = parse_line(line, line_no=no)
        n = len(s.words)
        if args.scheme == "ours":
            dumps.append(dump_matrix(encode_triplets(s.triplets, n, lenient=args.lenient)))
        else:
            dumps.append(gts.dump_gts(gts.gts_encode(s.triplets, n)))
    out.write("\n".join(dumps))


def cmd_decode(args, out):
    text = _read_text(args.input)
    blocks, cur = [], []
    for ln in text.splitlines():
        if ln.startswith("n=") and cur:
            blocks.append("\n".join(cur))
            cur = []
        if ln.strip():
            cur.append(ln)
    if cur:
        blocks.append("\n".join(cur))
    for b in blocks:
        if args.scheme == "ours":
            trips = decode_matrix(load_matrix(b))
        else:
            trips = gts.gts_decode(gts.load_gts(b))
        print(_triplet_list(trips), file=out)


def cmd_fidelity(args, out):
    for p in args.paths:
        split = load_split(p)
        print(f"{Path(p).name}\t{len(split)}\t{scheme_fidelity(split):.6f}", file=out)


def cmd_train(args, out):
    cfg = TrainConfig(**_merged(args, TRAIN_KEYS))
    if not cfg.train:
        raise UsageError("train: --train (or train= in --config) is required")
    if not cfg.out_dir:
        cfg = cfg.replace(out_dir="run")
    best, _ = train(cfg, out=out)
    print(f"# best dev ASTE F1 {best.best_dev_f1:.6f} at epoch {best.epoch}; "
          f"checkpoint {Path(cfg.out_dir) / 'best.ckpt'}", file=out)
    if cfg.test:
        print(format_table(evaluate_split(best, load_split(cfg.test, "test"))), file=out)


def cmd_eval(args, out):
    ckpt = load_checkpoint(args.checkpoint)
    print(format_table(evaluate_split(ckpt, load_split(args.split))), file=out)


def cmd_pca(args, out):
    ckpt = load_checkpoint(args.checkpoint)
    model, vocab, cfg = model_from_checkpoint(ckpt)
    path = args.split or cfg.dev or cfg.train
    if not path:
        raise UsageError("pca: no --split given and the checkpoint names no dev split")
    split = load_split(path)
    X, roles, words, sids = analysis.collect_states(hidden_states(model, vocab, split), split,
                                                    cfg.roles)
    res = analysis.pca_2d(X, roles, words, sids, seed=args.seed)
    analysis.write_pca_csv(res.points, args.out)
    l1, l2 = res.explained_ratio
    print(f"explained_variance_ratio\t{l1:.6f}\t{l2:.6f}", file=out)
    try:
        rho = analysis.role_distance_ratio(X, roles)
        print(f"role_distance_ratio\t{rho:.6f}", file=out)
    except AsteError as e:
        print(f"role_distance_ratio\tnan\t# {e}", file=out)
    print(f"wrote {len(res.points)} points to {args.out}", file=out)


def cmd_llm(args, out):
    merged = _merged(args, LLM_KEYS + ["train", "seed"])
    cfg = llm.LlmConfig(llm_base_url=merged.get("llm_base_url", llm.LlmConfig.llm_base_url),
                        llm_model=merged.get("llm_model", llm.LlmConfig.llm_model),
                        workers=args.workers)
    train_split = load_split(merged["train"], "train") if merged.get("train") else None
    if args.mode == "few" and train_split is None:
        raise UsageError("llm --mode few needs --train for shot selection")
    report, _ = llm.run_llm_eval(load_split(args.split), args.mode, args.shots, cfg,
                                 journal=args.journal, train=train_split,
                                 seed=merged.get("seed", 0), replay=args.replay)
    print(format_table({"ASTE": report}), file=out)


# ------------------------------------------------------------------ parser


def build_parser():
    p = argparse.ArgumentParser(prog="astetag", description="Triplet extraction toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    s = sub.add_parser("stats", help="per-split corpus statistics")
    s.add_argument("paths", nargs="+")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("encode", help="benchmark line(s) -> tag matrix dump")
    s.add_argument("--scheme", choices=("ours", "gts"), default="ours")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--line", help="a single benchmark line")
    src.add_argument("--input", help="file of benchmark lines ('-' for stdin)")
    s.add_argument("--lenient", action="store_true", help="later sentiments overwrite colliding cells instead of failing")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", help="tag matrix dump(s) -> triplet lists")
    s.add_argument("--scheme", choices=("ours", "gts"), default="ours")
    s.add_argument("--input", default="-", help="dump file ('-' for stdin)")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("fidelity", help="fraction of sentences whose gold set round-trips")
    s.add_argument("paths", nargs="+")
    s.set_defaults(func=cmd_fidelity)

    s = sub.add_parser("train", help="train a tagger; epoch log on stdout")
    s.add_argument("--config", help="flat key=value file; flags override it")
    _add_train_flags(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="P/R/F1 table of a checkpoint on a split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("pca", help="2-D projection of hidden states to CSV")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", help="defaults to the checkpoint's dev split")
    s.add_argument("--out", default="pca.csv")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_pca)

    s = sub.add_parser("llm", help="prompted extraction through a chat endpoint")
    s.add_argument("--config", help="flat key=value file; flags override it")
    s.add_argument("--mode", choices=("zero", "few"), default="zero")
    s.add_argument("--shots", type=int, default=llm.DEFAULT_SHOTS)
    s.add_argument("--split", required=True)
    s.add_argument("--train", default=argparse.SUPPRESS, help="train split for few-shot examples")
    s.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    s.add_argument("--llm_base_url", default=argparse.SUPPRESS)
    s.add_argument("--llm_model", default=argparse.SUPPRESS)
    s.add_argument("--journal", default="llm_journal.jsonl")
    s.add_argument("--replay", action="store_true", help="answer only from the journal")
    s.add_argument("--workers", type=int, default=llm.DEFAULT_WORKERS)
    s.set_defaults(func=cmd_llm)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args, out)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"astetag: error: {e}", file=sys.stderr)
        return 2
    except (AsteError, OSError) as e:
        print(f"astetag: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        # invalid config values that escaped argparse validation
        print(f"astetag: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
