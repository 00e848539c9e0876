"""End-to-end training loop, dev-set model selection and evaluation."""
from __future__ import annotations

import dataclasses
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint, save_checkpoint
from .dataset import DatasetSplit, Vocabulary, build_vocab, load_split
from .errors import FormatError, NonFiniteLoss
from .gts import NUM_GTS_LABELS, gts_decode, gts_encode, upper_mask
from .losses import assign_roles, build_mask, contrastive_loss, focal_loss
from .metrics import all_reports
from .model import EncoderConfig, TaggerModel
from .tagging import NUM_LABELS, decode_matrix, encode_triplets, validate_wellformed

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    seed: int = 13
    epochs: int = 300
    lr_encoder: float = 1e-3
    lr_head: float = 3e-3
    alpha: float = 0.1
    d: float = 1.0
    gamma: float = 2.0
    contrastive_reduction: str = "mean"
    scheme: str = "ours"
    head: str = "extended"
    roles: str = "three"
    dim: int = 64
    max_len: int = 128
    train: str = ""
    dev: str = ""
    test: str = ""
    out_dir: str = ""
    # stop once dev F1 reaches this value; 0 disables
    target_f1: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (self.lr_encoder > 0 and self.lr_head > 0):
            raise ValueError("learning rates must be positive")
        if self.scheme not in ("ours", "gts"):
            raise ValueError(f"scheme must be 'ours' or 'gts', got {self.scheme!r}")
        if self.roles not in ("three", "sentiment5"):
            raise ValueError(f"roles must be 'three' or 'sentiment5', got {self.roles!r}")
        if self.contrastive_reduction not in ("mean", "sum"):
            raise ValueError("contrastive_reduction must be 'mean' or 'sum'")
        if self.alpha < 0 or self.gamma < 0 or self.d <= 0:
            raise ValueError("need alpha >= 0, gamma >= 0, d > 0")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def as_dict(self):
        return dataclasses.asdict(self)


def coerce(cls, key, raw):
    """Convert a config-file / CLI string to the declared field type."""
    types = {f.name: f.type for f in fields(cls)}
    if key not in types:
        raise KeyError(key)
    t = types[key]
    if t in ("int", int):
        return int(raw)
    if t in ("float", float):
        return float(raw)
    if t in ("bool", bool):
        return str(raw).lower() in ("1", "true", "yes", "on")
    return str(raw)


def read_config_file(path) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"expected key=value, got {line!r}", line_no=no)
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# ------------------------------------------------------------------ per-sentence prep


@dataclass
class Example:
    ids: list[int]
    gold: np.ndarray
    weights: np.ndarray | None
    mask: np.ndarray
    triplets: tuple


def prepare(sentence, vocab, cfg: TrainConfig) -> Example:
    n = len(sentence.words)
    if cfg.scheme == "ours":
        problem = validate_wellformed(sentence.triplets, n)
        if problem is not None:
            log.warning("non-representable gold set (%s); using lenient encode: %s",
                        problem, sentence.text)
        gold = encode_triplets(sentence.triplets, n, lenient=True, quiet=True)
        weights = None
    else:
        gold = gts_encode(sentence.triplets, n)
        weights = upper_mask(n).astype(np.float64)
    mask = build_mask(assign_roles(sentence.triplets, n, cfg.roles))
    return Example(vocab.ids(sentence.words), gold.astype(np.int64), weights, mask,
                   sentence.triplets)


def build_model(cfg: TrainConfig, vocab_size) -> TaggerModel:
    n_labels = NUM_LABELS if cfg.scheme == "ours" else NUM_GTS_LABELS
    return TaggerModel(EncoderConfig(vocab_size=vocab_size, dim=cfg.dim, max_len=cfg.max_len,
                                     seed=cfg.seed, head=cfg.head, n_labels=n_labels))


def decode_scores(scores, scheme):
    labels = np.argmax(scores, axis=-1)
    return decode_matrix(labels) if scheme == "ours" else gts_decode(labels)


def predict(model, vocab, words, scheme="ours"):
    with ad.no_grad():
        _, scores = model.forward(vocab.ids(words))
    return decode_scores(scores.data, scheme)


def evaluate_model(model, vocab, split, scheme="ours"):
    preds = [predict(model, vocab, s.words, scheme) for s in split]
    gold = [s.triplets for s in split]
    return all_reports(preds, gold)


def step_losses(model, ex: Example, cfg: TrainConfig):
    """Forward one sentence; returns ``(loss, focal, contrastive)`` tensors."""
    H, scores = model.forward(ex.ids)
    contr = contrastive_loss(H, ex.mask, cfg.d, cfg.contrastive_reduction)
    focal = focal_loss(scores, ex.gold, cfg.gamma, ex.weights)
    loss = focal if cfg.alpha == 0 else focal + cfg.alpha * contr
    return loss, focal, contr


def snapshot(model, vocab, cfg, best_f1, epoch) -> Checkpoint:
    return Checkpoint(config=cfg.as_dict(), vocab=list(vocab.itos),
                      tensors={k: p.data.copy() for k, p in model.named_parameters().items()},
                      best_dev_f1=best_f1, epoch=epoch)


@dataclass
class EpochLog:
    epoch: int
    focal: float
    contrastive: float
    total: float
    dev_f1: float

    def line(self):
        return (f"{self.epoch}\t{self.focal:.10f}\t{self.contrastive:.10f}\t"
                f"{self.total:.10f}\t{self.dev_f1:.6f}")


LOG_HEADER = "epoch\tfocal\tcontrastive\ttotal\tdev_f1"


def train(cfg: TrainConfig, train_split=None, dev_split=None, out=sys.stdout,
          step_hook=None):
    """Run the loop; returns ``(best Checkpoint, [EpochLog, ...])``.

    Splits default to loading ``cfg.train`` / ``cfg.dev``; with no dev split
    the train split is used for model selection.  ``step_hook(epoch, step,
    loss, focal, contrastive)`` is called after every loss computation.
    """
    cfg.validate()
    if train_split is None:
        train_split = load_split(cfg.train, "train")
    if dev_split is None:
        dev_split = load_split(cfg.dev, "dev") if cfg.dev else train_split
    vocab = build_vocab(train_split)
    model = build_model(cfg, len(vocab))
    groups = model.param_groups(cfg.lr_encoder, cfg.lr_head)
    examples = [prepare(s, vocab, cfg) for s in train_split]
    rng = np.random.default_rng(cfg.seed)

    run_dir = Path(cfg.out_dir) if cfg.out_dir else None
    log_fh = None
    if run_dir:
        run_dir.mkdir(parents=True, exist_ok=True)
        log_fh = (run_dir / "log.tsv").open("w", encoding="utf-8")
        log_fh.write(LOG_HEADER + "\n")

    history = []
    best = None
    try:
        for epoch in range(1, cfg.epochs + 1):
            sums = np.zeros(3)
            order = rng.permutation(len(examples))
            for step, k in enumerate(order):
                ex = examples[k]
                with ad.tape():
                    loss, focal, contr = step_losses(model, ex, cfg)
                    lv = float(loss.data)
                    if not math.isfinite(lv):
                        raise NonFiniteLoss(f"loss {lv} on train sentence {k} "
                                            f"(epoch {epoch})")
                    ad.backward(loss)
                sums += (float(focal.data), float(contr.data), lv)
                if step_hook is not None:
                    step_hook(epoch, step, lv, float(focal.data), float(contr.data))
                ad.adam_step(groups)
            dev_f1 = evaluate_model(model, vocab, dev_split, cfg.scheme)["ASTE"].f1
            count = max(len(examples), 1)
            entry = EpochLog(epoch, *(sums / count), dev_f1)
            history.append(entry)
            if out is not None:
                print(entry.line(), file=out, flush=True)
            if log_fh:
                log_fh.write(entry.line() + "\n")
                log_fh.flush()
            if best is None or dev_f1 > best.best_dev_f1:
                best = snapshot(model, vocab, cfg, dev_f1, epoch)
                if run_dir:
                    save_checkpoint(best, run_dir / "best.ckpt")
            if cfg.target_f1 and dev_f1 >= cfg.target_f1:
                break
    finally:
        if log_fh:
            log_fh.close()
    return best, history


def model_from_checkpoint(ckpt: Checkpoint):
    known = {f.name for f in fields(TrainConfig)}
    cfg = TrainConfig(**{k: v for k, v in ckpt.config.items() if k in known})
    vocab = Vocabulary()
    vocab.itos = list(ckpt.vocab)
    vocab.stoi = {w: i for i, w in enumerate(vocab.itos)}
    model = build_model(cfg, len(vocab))
    model.load_arrays(ckpt.tensors)
    return model, vocab, cfg


def evaluate_split(ckpt: Checkpoint, split: DatasetSplit):
    """ASTE / AE / OE / AOPE reports of a checkpoint on a split."""
    model, vocab, cfg = model_from_checkpoint(ckpt)
    return evaluate_model(model, vocab, split, cfg.scheme)


def hidden_states(ckpt_or_model, vocab, split):
    """Per-sentence ``(n, D)`` hidden-state arrays (inference only)."""
    model = ckpt_or_model
    out = []
    with ad.no_grad():
        for s in split:
            out.append(model.encode(vocab.ids(s.words)).data.copy())
    return out
