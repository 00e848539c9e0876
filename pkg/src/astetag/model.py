"""Toy contextual encoder and the pairwise tagging head.

The encoder is one post-LN transformer block over word-level tokens, so the
number of hidden states equals the number of words.  The head scores every
ordered word pair ``(i, j)`` from ``concat(H_i, H_j)``: row ``i`` is the aspect
candidate and column ``j`` the opinion candidate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter
from .errors import ShapeMismatch, TooLong


@dataclass
class EncoderConfig:
    vocab_size: int
    dim: int = 64
    heads: int = 1
    max_len: int = 128
    seed: int = 0
    ffn_dim: int | None = None
    head: str = "literal"  # or "extended"
    head_hidden: int = 128
    n_labels: int = 5

    def __post_init__(self):
        if self.dim % 2:
            raise ValueError(f"dim must be even, got {self.dim}")
        if self.heads != 1:
            raise ValueError("only single-head attention is implemented")
        if self.head not in ("literal", "extended"):
            raise ValueError(f"head must be 'literal' or 'extended', got {self.head!r}")
        if self.ffn_dim is None:
            self.ffn_dim = 2 * self.dim


class TaggerModel:
    INIT_STD = 0.02

    def __init__(self, config: EncoderConfig):
        self.config = c = config
        rng = np.random.default_rng(c.seed)

        def normal(*shape):
            return rng.normal(0.0, self.INIT_STD, size=shape)

        D, F = c.dim, c.ffn_dim
        enc = {
            "tok_emb": normal(c.vocab_size, D),
            "pos_emb": normal(c.max_len, D),
            "wq": normal(D, D), "bq": np.zeros(D),
            "wk": normal(D, D),  # no key bias: softmax cancels it exactly
            "wv": normal(D, D), "bv": np.zeros(D),
            "wo": normal(D, D), "bo": np.zeros(D),
            "ln1_g": np.ones(D), "ln1_b": np.zeros(D),
            "ff1_w": normal(D, F), "ff1_b": np.zeros(F),
            "ff2_w": normal(F, D), "ff2_b": np.zeros(D),
            "ln2_g": np.ones(D), "ln2_b": np.zeros(D),
        }
        if c.head == "literal":
            head = {"cls_w": normal(2 * D, c.n_labels), "cls_b": np.zeros(c.n_labels)}
        else:
            head = {"hid_w": normal(2 * D, c.head_hidden), "hid_b": np.zeros(c.head_hidden),
                    "cls_w": normal(c.head_hidden, c.n_labels), "cls_b": np.zeros(c.n_labels)}
        head["cls_ln_g"] = np.ones(c.n_labels)
        head["cls_ln_b"] = np.zeros(c.n_labels)
        self.encoder = {k: Parameter(v, "encoder." + k) for k, v in enc.items()}
        self.head = {k: Parameter(v, "head." + k) for k, v in head.items()}

    # parameters -----------------------------------------------------------

    def named_parameters(self):
        out = {p.name: p for p in self.encoder.values()}
        out.update({p.name: p for p in self.head.values()})
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def param_groups(self, lr_encoder, lr_head):
        return [(list(self.encoder.values()), lr_encoder),
                (list(self.head.values()), lr_head)]

    def load_arrays(self, arrays):
        params = self.named_parameters()
        if set(arrays) != set(params):
            missing = sorted(set(params) - set(arrays))
            extra = sorted(set(arrays) - set(params))
            raise ShapeMismatch(f"parameter names differ: missing {missing}, extra {extra}")
        for name, arr in arrays.items():
            p = params[name]
            if p.shape != tuple(arr.shape):
                raise ShapeMismatch(f"{name}: expected {p.shape}, got {arr.shape}")
            p.data[...] = arr

    # forward --------------------------------------------------------------

    def encode(self, ids):
        """Hidden states ``(n, D)`` for a sequence of vocabulary ids."""
        n = len(ids)
        if n > self.config.max_len:
            raise TooLong(f"{n} words exceeds max_len={self.config.max_len}")
        p = self.encoder
        x = ad.gather_rows(p["tok_emb"], ids) + ad.gather_rows(p["pos_emb"], np.arange(n))
        q = x @ p["wq"] + p["bq"]
        k = x @ p["wk"]
        v = x @ p["wv"] + p["bv"]
        a = ad.attention(q, k, v) @ p["wo"] + p["bo"]
        h = ad.layer_norm(x + a) * p["ln1_g"] + p["ln1_b"]
        f = ad.gelu(h @ p["ff1_w"] + p["ff1_b"]) @ p["ff2_w"] + p["ff2_b"]
        # pooling hook: subword-to-word pooling would go here for a subword encoder
        return ad.layer_norm(h + f) * p["ln2_g"] + p["ln2_b"]

    def encode_words(self, words, vocab):
        return self.encode(vocab.ids(words))

    def scores(self, H):
        return classification_head(pair_features(H), self.head, self.config.head)

    def forward(self, ids):
        H = self.encode(ids)
        return H, self.scores(H)


def pair_features(H):
    """``(n, n, 2D)`` grid whose cell ``(i, j)`` is ``concat(H_i, H_j)``."""
    H = ad.as_tensor(H)
    n, D = H.shape
    rows = ad.broadcast_to(ad.reshape(H, (n, 1, D)), (n, n, D))
    cols = ad.broadcast_to(ad.reshape(H, (1, n, D)), (n, n, D))
    return ad.concat([rows, cols], axis=-1)


def classification_head(features, params, kind="literal"):
    """Linear -> LayerNorm -> GELU over the label axis.

    ``kind="extended"`` inserts a GELU hidden layer before the final linear
    map.  The output is used as unnormalised scores by the focal loss.
    """
    features = ad.as_tensor(features)
    w = params["cls_w"]
    width = params["hid_w"].shape[0] if kind == "extended" else w.shape[0]
    if features.shape[-1] != width:
        raise ShapeMismatch(f"head expects last axis {width}, got features {features.shape}")
    x = features
    if kind == "extended":
        x = ad.gelu(x @ params["hid_w"] + params["hid_b"])
    z = x @ w + params["cls_b"]
    z = ad.layer_norm(z) * params["cls_ln_g"] + params["cls_ln_b"]
    return ad.gelu(z)
