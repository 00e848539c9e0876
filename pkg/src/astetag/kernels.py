"""Hot inner loops, each in two flavours.

Every kernel exists as a vectorised numpy function (``*_np``) and as an
explicit-loop function compiled with ``numba.njit`` (``*_nb``).  The public
names (``decode_scan``, ``contrastive_fwd_bwd``, ...) point at the numba
versions unless ``ASTETAG_DISABLE_NUMBA=1`` is set in the environment or numba
cannot be imported, in which case they point at the numpy versions.  Both
flavours are importable regardless so tests and ``benchmarks/`` can compare
them directly.
"""
from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("ASTETAG_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED


def _jit(fn):
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# --------------------------------------------------------------------------
# table decode: row-major scan, walk down the column and right along the row


def decode_scan_np(m, ctd, first_sentiment):
    n = m.shape[0]
    rows, cols = np.nonzero(m >= first_sentiment)
    out = np.empty((len(rows), 5), dtype=np.int64)
    for k in range(len(rows)):
        i, j = rows[k], cols[k]
        below = m[i + 1:, j] != ctd
        a_end = i + (int(np.argmax(below)) if below.any() else n - 1 - i)
        right = m[i, j + 1:] != ctd
        o_end = j + (int(np.argmax(right)) if right.any() else n - 1 - j)
        out[k] = (i, a_end, j, o_end, m[i, j])
    return out


def _decode_scan_loops(m, ctd, first_sentiment):
    n = m.shape[0]
    count = 0
    for i in range(n):
        for j in range(n):
            if m[i, j] >= first_sentiment:
                count += 1
    out = np.empty((count, 5), dtype=np.int64)
    k = 0
    for i in range(n):
        for j in range(n):
            lab = m[i, j]
            if lab < first_sentiment:
                continue
            a_end = i
            while a_end + 1 < n and m[a_end + 1, j] == ctd:
                a_end += 1
            o_end = j
            while o_end + 1 < n and m[i, o_end + 1] == ctd:
                o_end += 1
            out[k, 0] = i
            out[k, 1] = a_end
            out[k, 2] = j
            out[k, 3] = o_end
            out[k, 4] = lab
            k += 1
    return out


decode_scan_nb = _jit(_decode_scan_loops)


# --------------------------------------------------------------------------
# pairwise margin contrastive loss and its gradient w.r.t. H


def contrastive_fwd_bwd_np(h, mask, d, mean):
    diff = h[:, None, :] - h[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    upper = np.triu(np.ones_like(dist, dtype=bool), 1)
    pos = upper & (mask > 0)
    neg = upper & (mask < 0)
    loss = np.maximum(dist[pos], d).sum() - np.minimum(dist[neg], d).sum()
    # subgradient 0 on the clamped side, including the kink itself
    coef = np.zeros_like(dist)
    coef[pos & (dist > d)] = 1.0
    coef[neg & (dist < d)] = -1.0
    sym = coef + coef.T
    grad = 2.0 * (sym.sum(axis=1)[:, None] * h - sym @ h)
    if mean:
        count = int(pos.sum() + neg.sum())
        if count == 0:
            return 0.0, np.zeros_like(h)
        loss /= count
        grad /= count
    return float(loss), grad


def _contrastive_loops(h, mask, d, mean):
    n, dim = h.shape
    grad = np.zeros_like(h)
    loss = 0.0
    count = 0
    for i in range(n):
        for j in range(i + 1, n):
            s = mask[i, j]
            if s == 0:
                continue
            count += 1
            dist = 0.0
            for k in range(dim):
                t = h[i, k] - h[j, k]
                dist += t * t
            c = 0.0
            if s > 0:
                if dist > d:
                    loss += dist
                    c = 1.0
                else:
                    loss += d
            else:
                if dist < d:
                    loss -= dist
                    c = -1.0
                else:
                    loss -= d
            if c != 0.0:
                for k in range(dim):
                    g = 2.0 * c * (h[i, k] - h[j, k])
                    grad[i, k] += g
                    grad[j, k] -= g
    if mean:
        if count == 0:
            return 0.0, grad
        loss /= count
        for i in range(n):
            for k in range(dim):
                grad[i, k] /= count
    return loss, grad


contrastive_fwd_bwd_nb = _jit(_contrastive_loops)


# --------------------------------------------------------------------------
# focal loss over flattened cells: logits (N, C), gold (N,), weights (N,)


def focal_fwd_bwd_np(logits, gold, weights, gamma):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(len(gold))
    pt = p[rows, gold]
    logpt = z[rows, gold] - np.log(e.sum(axis=1))
    q = 1.0 - pt
    per_cell = -(q ** gamma) * logpt
    wsum = weights.sum()
    if wsum == 0:
        return 0.0, np.zeros_like(logits)
    loss = float((weights * per_cell).sum() / wsum)
    if gamma == 0:
        dfdp_p = -np.ones_like(pt)
    else:
        # d(-(1-p)^g log p)/dp * p, finite at p -> 1 because log p -> 0 first
        with np.errstate(divide="ignore", invalid="ignore"):
            qpow = np.where(q > 0, q ** (gamma - 1.0), 0.0)
        dfdp_p = gamma * qpow * pt * logpt - q ** gamma
    onehot = np.zeros_like(p)
    onehot[rows, gold] = 1.0
    grad = (dfdp_p * weights / wsum)[:, None] * (onehot - p)
    return loss, grad


def _focal_loops(logits, gold, weights, gamma):
    n, c = logits.shape
    grad = np.zeros_like(logits)
    wsum = 0.0
    for r in range(n):
        wsum += weights[r]
    if wsum == 0.0:
        return 0.0, grad
    loss = 0.0
    p = np.empty(c)
    for r in range(n):
        w = weights[r]
        if w == 0.0:
            continue
        mx = logits[r, 0]
        for k in range(1, c):
            if logits[r, k] > mx:
                mx = logits[r, k]
        s = 0.0
        for k in range(c):
            p[k] = np.exp(logits[r, k] - mx)
            s += p[k]
        for k in range(c):
            p[k] /= s
        t = gold[r]
        pt = p[t]
        logpt = logits[r, t] - mx - np.log(s)
        q = 1.0 - pt
        loss += w * (-(q ** gamma) * logpt)
        if gamma == 0.0:
            dfdp_p = -1.0
        else:
            qpow = 0.0
            if q > 0.0:
                qpow = q ** (gamma - 1.0)
            dfdp_p = gamma * qpow * pt * logpt - q ** gamma
        scale = dfdp_p * w / wsum
        for k in range(c):
            ind = 1.0 if k == t else 0.0
            grad[r, k] = scale * (ind - p[k])
    return loss / wsum, grad


focal_fwd_bwd_nb = _jit(_focal_loops)


# --------------------------------------------------------------------------
# Adam, in place; step is the 1-based update count


def adam_update_np(value, grad, m, v, lr, b1, b2, eps, step):
    m *= b1
    m += (1.0 - b1) * grad
    v *= b2
    v += (1.0 - b2) * grad * grad
    mhat = m / (1.0 - b1 ** step)
    vhat = v / (1.0 - b2 ** step)
    value -= lr * mhat / (np.sqrt(vhat) + eps)


def _adam_loops(value, grad, m, v, lr, b1, b2, eps, step):
    fv = value.reshape(-1)
    fg = grad.reshape(-1)
    fm = m.reshape(-1)
    fs = v.reshape(-1)
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    for k in range(fv.size):
        g = fg[k]
        fm[k] = b1 * fm[k] + (1.0 - b1) * g
        fs[k] = b2 * fs[k] + (1.0 - b2) * g * g
        fv[k] -= lr * (fm[k] / c1) / (np.sqrt(fs[k] / c2) + eps)


adam_update_nb = _jit(_adam_loops)


if USE_NUMBA:
    decode_scan = decode_scan_nb
    contrastive_fwd_bwd = contrastive_fwd_bwd_nb
    focal_fwd_bwd = focal_fwd_bwd_nb
    adam_update = adam_update_nb
else:
    decode_scan = decode_scan_np
    contrastive_fwd_bwd = contrastive_fwd_bwd_np
    focal_fwd_bwd = focal_fwd_bwd_np
    adam_update = adam_update_np

BACKEND = "numba" if USE_NUMBA else "numpy"
