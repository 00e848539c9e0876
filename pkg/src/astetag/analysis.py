"""Geometry diagnostics for hidden word representations."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateData, InsufficientData
from .losses import Role, assign_roles

log = logging.getLogger(__name__)

PCA_TOL = 1e-9
PCA_MAX_ITER = 10_000
CSV_HEADER = ("x", "y", "role", "word", "sentence_id")


class ProjectedPoint(NamedTuple):
    x: float
    y: float
    role: str
    word: str
    sentence_id: int


@dataclass
class PcaResult:
    components: np.ndarray          # (2, D), rows orthonormal (second row zero if degenerate)
    explained_variance: tuple       # (lambda1, lambda2), descending
    explained_ratio: tuple
    mean: np.ndarray
    coords: np.ndarray              # (N, 2)
    points: list = field(default_factory=list)
    degenerate: bool = False
    iterations: tuple = (0, 0)


def _power_iteration(C, rng):
    v = rng.normal(size=C.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, PCA_MAX_ITER + 1):
        w = C @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v, 0.0, it
        w /= norm
        # sign-insensitive convergence test
        delta = min(np.linalg.norm(w - v), np.linalg.norm(w + v))
        v = w
        lam = float(v @ C @ v)
        if delta < PCA_TOL:
            return v, lam, it
    log.warning("power iteration hit %d iterations without converging", PCA_MAX_ITER)
    return v, lam, PCA_MAX_ITER


def pca_2d(X, roles=None, words=None, sentence_ids=None, seed=0, strict=False) -> PcaResult:
    """Project rows of ``X`` onto their top two principal directions.

    Power iteration with deflation on the covariance matrix.  When the
    covariance has rank < 2 the second component is zero-filled and the
    result is flagged ``degenerate``; ``strict=True`` raises instead.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3 or X.shape[1] < 2:
        raise InsufficientData(f"need >= 3 vectors of dimension >= 2, got shape {X.shape}")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / X.shape[0]
    total = float(np.trace(C))
    rng = np.random.default_rng(seed)
    scale = max(total, 1e-300)

    v1, l1, it1 = _power_iteration(C, rng)
    degenerate = l1 <= 1e-12 * max(scale, 1.0)
    C2 = C - l1 * np.outer(v1, v1)
    v2, l2, it2 = _power_iteration(C2, rng)
    # re-orthogonalise against the first direction
    v2 = v2 - (v2 @ v1) * v1
    nv2 = np.linalg.norm(v2)
    if degenerate or l2 <= 1e-12 * scale or nv2 < 1e-12:
        degenerate = True
        v2 = np.zeros_like(v1)
        l2 = 0.0
    else:
        v2 /= nv2
    if degenerate:
        msg = f"covariance rank < 2 (eigenvalues {l1:.3g}, {l2:.3g})"
        if strict:
            raise DegenerateData(msg)
        log.warning(msg)

    comps = np.stack([v1, v2])
    coords = Xc @ comps.T
    ratio = (l1 / total, l2 / total) if total > 0 else (0.0, 0.0)
    n = X.shape[0]
    roles = list(roles) if roles is not None else [""] * n
    words = list(words) if words is not None else [""] * n
    sids = list(sentence_ids) if sentence_ids is not None else [0] * n
    points = [ProjectedPoint(float(x), float(y), _role_name(r), w, int(s))
              for (x, y), r, w, s in zip(coords, roles, words, sids)]
    return PcaResult(comps, (l1, l2), ratio, mean, coords, points, degenerate, (it1, it2))


def _role_name(r):
    return r.name if isinstance(r, Role) else str(r)


def role_distance_ratio(X, roles) -> float:
    """Mean within-role pairwise squared distance over mean across-role one.

    Uses ``sum_{i<j} |x_i - x_j|^2 = n * sum |x_i|^2 - |sum x_i|^2`` per group,
    so the cost is linear in the number of points.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = [int(r) if isinstance(r, (int, np.integer)) else r for r in roles]
    if X.ndim != 2 or len(labels) != X.shape[0]:
        raise InsufficientData(f"{len(labels)} roles for {X.shape[0] if X.ndim else 0} vectors")
    groups = {}
    for k, r in enumerate(labels):
        groups.setdefault(r, []).append(k)
    if len(groups) < 2:
        raise InsufficientData("need at least two roles with members")

    def pair_sum(rows):
        return len(rows) * float((rows * rows).sum()) - float((rows.sum(axis=0) ** 2).sum())

    n = X.shape[0]
    all_sum = pair_sum(X)
    within_sum = 0.0
    within_pairs = 0
    for idx in groups.values():
        within_sum += pair_sum(X[idx])
        within_pairs += len(idx) * (len(idx) - 1) // 2
    across_pairs = n * (n - 1) // 2 - within_pairs
    across_sum = all_sum - within_sum
    if within_pairs == 0:
        raise InsufficientData("no role has two members")
    within_mean = max(within_sum, 0.0) / within_pairs
    across_mean = max(across_sum, 0.0) / across_pairs
    if across_mean <= 0.0 or not math.isfinite(across_mean):
        raise InsufficientData("across-role distances are all zero")
    return within_mean / across_mean


def collect_states(hidden, split, role_scheme="three"):
    """Flatten per-sentence hidden states into ``(X, roles, words, sentence_ids)``."""
    X, roles, words, sids = [], [], [], []
    for sid, (H, s) in enumerate(zip(hidden, split)):
        r = assign_roles(s.triplets, len(s.words), role_scheme)
        X.append(np.asarray(H))
        roles.extend(r)
        words.extend(s.words)
        sids.extend([sid] * len(s.words))
    if not X:
        raise InsufficientData("no sentences")
    return np.concatenate(X, axis=0), roles, words, sids


def write_pca_csv(points, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in points:
            w.writerow([repr(p.x), repr(p.y), p.role, p.word, p.sentence_id])
