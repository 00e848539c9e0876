"""Token-level margin contrastive loss and focal tag loss."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import NonPositiveMargin, ShapeMismatch
from .tagging import Sentiment

log = logging.getLogger(__name__)


class Role(enum.IntEnum):
    OTHER = 0
    ASPECT = 1
    OPINION = 2
    # finer opinion classes, used only with roles="sentiment5"
    OPINION_POS = 3
    OPINION_NEU = 4
    OPINION_NEG = 5


_OPINION_BY_SENT = {Sentiment.POS: Role.OPINION_POS, Sentiment.NEU: Role.OPINION_NEU,
                    Sentiment.NEG: Role.OPINION_NEG}


def assign_roles(triplets, n, scheme="three"):
    """Per-word roles from gold triplets; ASPECT wins over OPINION."""
    if scheme not in ("three", "sentiment5"):
        raise ValueError(f"unknown role scheme {scheme!r}")
    roles = [Role.OTHER] * n
    ordered = sorted(set(triplets), key=lambda t: t.sort_key())
    for t in ordered:
        t.aspect.check(n)
        t.opinion.check(n)
        op_role = Role.OPINION if scheme == "three" else _OPINION_BY_SENT[t.sentiment]
        for i in t.opinion.indices():
            if roles[i] == Role.OTHER:
                roles[i] = op_role
            elif roles[i] != op_role and roles[i] != Role.ASPECT:
                log.debug("word %d: opinion role %s kept over %s", i, roles[i].name, op_role.name)
    aspect_words = {i for t in ordered for i in t.aspect.indices()}
    for i in sorted(aspect_words):
        if roles[i] != Role.OTHER:
            log.warning("word %d is both aspect and opinion; treating as ASPECT", i)
        roles[i] = Role.ASPECT
    return roles


def similarity_matrix(H):
    """``Sim[i, j] = -||H_i - H_j||^2`` as a differentiable ``(n, n)`` tensor."""
    H = ad.as_tensor(H)
    n, D = H.shape
    rows = ad.broadcast_to(ad.reshape(H, (n, 1, D)), (n, n, D))
    cols = ad.broadcast_to(ad.reshape(H, (1, n, D)), (n, n, D))
    diff = rows - cols
    return -ad.tsum(diff * diff, axis=-1)


def build_mask(roles):
    """+1 above the diagonal where roles agree, -1 where they differ, 0 elsewhere."""
    r = np.asarray([int(x) for x in roles])
    n = len(r)
    same = np.where(r[:, None] == r[None, :], 1, -1).astype(np.int8)
    return np.triu(same, 1) if n else np.zeros((0, 0), dtype=np.int8)


def _check_reduction(reduction):
    if reduction not in ("mean", "sum"):
        raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")


def contrastive_loss(H, mask, d=1.0, reduction="mean"):
    """Sum over pulled pairs of ``max(dist2, d)`` minus sum over pushed pairs of
    ``min(dist2, d)``, pairs taken from the strict upper triangle of ``mask``.

    ``reduction="mean"`` divides by the number of counted pairs.  Runs on the
    fused kernel; :func:`contrastive_loss_reference` is the same quantity
    composed from autodiff primitives.
    """
    if not d > 0:
        raise NonPositiveMargin(f"margin d must be positive, got {d}")
    _check_reduction(reduction)
    H = ad.as_tensor(H)
    mask = np.ascontiguousarray(mask, dtype=np.int8)
    if mask.shape != (H.shape[0], H.shape[0]):
        raise ShapeMismatch(f"mask {mask.shape} does not match H {H.shape}")
    value, grad = kernels.contrastive_fwd_bwd(
        np.ascontiguousarray(H.data), mask, float(d), reduction == "mean")
    return ad.custom((H,), np.asarray(value), lambda g: (g * grad,))


def contrastive_loss_reference(H, mask, d=1.0, reduction="mean"):
    if not d > 0:
        raise NonPositiveMargin(f"margin d must be positive, got {d}")
    _check_reduction(reduction)
    mask = np.triu(np.asarray(mask, dtype=np.float64), 1)
    dist = -similarity_matrix(H)
    pos = (mask > 0).astype(np.float64)
    neg = (mask < 0).astype(np.float64)
    total = ad.tsum(ad.maximum_const(dist, d) * pos) - ad.tsum(ad.minimum_const(dist, d) * neg)
    count = pos.sum() + neg.sum()
    if reduction == "mean":
        return total * (1.0 / count) if count else total * 0.0
    return total


def _flatten_scores(scores, gold, weights):
    scores = ad.as_tensor(scores)
    gold = np.asarray(gold)
    if scores.shape[:-1] != gold.shape:
        raise ShapeMismatch(f"scores {scores.shape} do not match gold {gold.shape}")
    c = scores.shape[-1]
    if weights is None:
        w = np.ones(gold.size)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.size != gold.size:
            raise ShapeMismatch(f"weights {np.shape(weights)} do not match gold {gold.shape}")
    return scores, np.ascontiguousarray(gold.reshape(-1), dtype=np.int64), w, c


def focal_loss(scores, gold, gamma=2.0, weights=None):
    """Mean over cells of ``-(1 - p_t)^gamma * log p_t`` with a softmax over labels.

    ``weights`` (same shape as ``gold``) turns the mean into a weighted mean;
    the grid ablation uses it to ignore the lower triangle.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    scores, g, w, c = _flatten_scores(scores, gold, weights)
    flat = np.ascontiguousarray(scores.data.reshape(-1, c))
    value, grad = kernels.focal_fwd_bwd(flat, g, w, float(gamma))
    shape = scores.shape
    return ad.custom((scores,), np.asarray(value), lambda gr: (gr * grad.reshape(shape),))


def focal_loss_reference(scores, gold, gamma=2.0, weights=None):
    scores, g, w, c = _flatten_scores(scores, gold, weights)
    p = ad.softmax(ad.reshape(scores, (-1, c)))
    onehot = np.zeros((g.size, c))
    onehot[np.arange(g.size), g] = 1.0
    pt = ad.tsum(p * onehot, axis=-1)
    per_cell = -(ad.power_const(1.0 - pt, gamma) * ad.log(pt)) if gamma else -ad.log(pt)
    return ad.tsum(per_cell * w) * (1.0 / w.sum())


def cross_entropy(scores, gold):
    """Plain mean cross-entropy in numpy; the ``gamma=0`` oracle for focal_loss."""
    z = np.asarray(scores, dtype=np.float64)
    z = z.reshape(-1, z.shape[-1])
    g = np.asarray(gold).reshape(-1)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(g.size), g].mean())


@dataclass
class LossReport:
    focal: float
    contrastive: float
    total: float
    alpha: float
    d: float


def total_loss(focal, contrastive, alpha, d=1.0):
    """Weighted sum; ``alpha == 0`` drops the contrastive term entirely."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    focal, contrastive = float(focal), float(contrastive)
    total = focal if alpha == 0 else focal + alpha * contrastive
    return LossReport(focal, contrastive, total, alpha, d)
