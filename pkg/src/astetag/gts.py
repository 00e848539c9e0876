"""Six-label grid tagging (GTS-style), kept as the tagging-scheme ablation.

Only the upper triangle ``i <= j`` is meaningful.  Matrices are stored as a
full ``n x n`` int8 array whose lower triangle stays ``N``; training masks it
out of the loss and decoding never reads it.
"""
from __future__ import annotations

import enum
import logging
from collections import Counter

import numpy as np

from .errors import FormatError
from .tagging import Sentiment, Span, Triplet

log = logging.getLogger(__name__)


class GtsLabel(enum.IntEnum):
    N = 0
    A = 1
    O = 2  # noqa: E741
    POS = 3
    NEU = 4
    NEG = 5


NUM_GTS_LABELS = len(GtsLabel)
_SENT = {Sentiment.POS: GtsLabel.POS, Sentiment.NEU: GtsLabel.NEU,
         Sentiment.NEG: GtsLabel.NEG}
_SENT_BACK = {v: k for k, v in _SENT.items()}
# conflict precedence: sentiment > A > O > N
_RANK = {GtsLabel.N: 0, GtsLabel.O: 1, GtsLabel.A: 2,
         GtsLabel.POS: 3, GtsLabel.NEU: 3, GtsLabel.NEG: 3}
# majority-vote tie-break
_TIE_ORDER = (Sentiment.POS, Sentiment.NEG, Sentiment.NEU)

DUMP_TOKENS = {GtsLabel.N: "N", GtsLabel.A: "A", GtsLabel.O: "O",
               GtsLabel.POS: "P", GtsLabel.NEU: "U", GtsLabel.NEG: "G"}


def upper_mask(n):
    return np.triu(np.ones((n, n), dtype=bool))


def _put(m, i, j, lab):
    if i > j:
        i, j = j, i
    have = GtsLabel(m[i, j])
    if have == lab:
        return
    if _RANK[lab] > _RANK[have] or (_RANK[lab] == _RANK[have] == 3):
        if have != GtsLabel.N:
            log.debug("gts cell (%d, %d): %s replaces %s", i, j, lab.name, have.name)
        m[i, j] = lab
    else:
        log.debug("gts cell (%d, %d): keeping %s over %s", i, j, have.name, lab.name)


def gts_encode(triplets, n):
    m = np.zeros((n, n), dtype=np.int8)
    ordered = sorted(set(triplets), key=Triplet.sort_key)
    for t in ordered:
        t.aspect.check(n)
        t.opinion.check(n)
    for t in ordered:
        for span, lab in ((t.aspect, GtsLabel.A), (t.opinion, GtsLabel.O)):
            for i in span.indices():
                for j in range(i, span.end + 1):
                    _put(m, i, j, lab)
    for t in ordered:
        lab = _SENT[t.sentiment]
        for i in t.aspect.indices():
            for j in t.opinion.indices():
                _put(m, i, j, lab)
    return m


def _runs(m, lab):
    n = m.shape[0]
    spans = []
    i = 0
    while i < n:
        if m[i, i] != lab:
            i += 1
            continue
        k = i
        while k + 1 < n and all(m[p, k + 1] == lab for p in range(i, k + 2)):
            k += 1
        spans.append(Span(i, k))
        i = k + 1
    return spans


def gts_decode(m):
    m = np.asarray(m)
    out = []
    aspects = _runs(m, GtsLabel.A)
    opinions = _runs(m, GtsLabel.O)
    for a in aspects:
        for o in opinions:
            votes = Counter()
            for i in a.indices():
                for j in o.indices():
                    lab = GtsLabel(m[min(i, j), max(i, j)])
                    if lab in _SENT_BACK:
                        votes[_SENT_BACK[lab]] += 1
            if not votes:
                continue
            top = max(votes.values())
            sent = next(s for s in _TIE_ORDER if votes[s] == top)
            out.append(Triplet(a, o, sent))
    return out


def dump_gts(m):
    n = m.shape[0]
    lines = [f"n={n}"]
    for i in range(n):
        lines.append(" ".join("." if j < i else DUMP_TOKENS[GtsLabel(m[i, j])]
                              for j in range(n)))
    return "\n".join(lines) + "\n"


def load_gts(text):
    tokens = {v: int(k) for k, v in DUMP_TOKENS.items()}
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n="):
        raise FormatError("matrix dump must start with 'n=<int>'", line_no=1)
    n = int(lines[0][2:])
    if len(lines) - 1 != n:
        raise FormatError(f"expected {n} rows, got {len(lines) - 1}")
    m = np.zeros((n, n), dtype=np.int8)
    for i, ln in enumerate(lines[1:]):
        cells = ln.split(" ")
        if len(cells) != n:
            raise FormatError(f"row has {len(cells)} cells, expected {n}", line_no=i + 2)
        for j, tok in enumerate(cells):
            if j < i:
                continue
            if tok not in tokens:
                raise FormatError(f"unknown cell token {tok!r}", line_no=i + 2)
            m[i, j] = tokens[tok]
    return m
