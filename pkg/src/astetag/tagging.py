"""Five-label full-matrix table filling.

Rows index aspect candidates, columns index opinion candidates.  A triplet
occupies the rectangle ``aspect rows x opinion columns``: its top-left cell
carries the sentiment (which doubles as the beginning marker) and every other
cell of the rectangle carries ``CTD``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import kernels
from .errors import CollisionError, FormatError, OutOfBounds

log = logging.getLogger(__name__)


class Sentiment(str, enum.Enum):
    POS = "POS"
    NEU = "NEU"
    NEG = "NEG"

    def __str__(self):
        return self.value


class Span(NamedTuple):
    """Word span, both ends inclusive."""

    start: int
    end: int

    def check(self, n=None):
        if not 0 <= self.start <= self.end:
            raise OutOfBounds(f"bad span {tuple(self)}")
        if n is not None and self.end >= n:
            raise OutOfBounds(f"span {tuple(self)} exceeds sentence length {n}")

    def __contains__(self, i):
        return self.start <= i <= self.end

    def __len__(self):
        return self.end - self.start + 1

    def indices(self):
        return range(self.start, self.end + 1)


class Triplet(NamedTuple):
    aspect: Span
    opinion: Span
    sentiment: Sentiment

    @classmethod
    def of(cls, aspect, opinion, sentiment):
        """Convenience constructor: ``Triplet.of((1, 2), (4, 4), "POS")``."""
        return cls(Span(*aspect), Span(*opinion), Sentiment(sentiment))

    def sort_key(self):
        return (self.aspect.start, self.opinion.start,
                self.aspect.end, self.opinion.end, self.sentiment.value)


class TagLabel(enum.IntEnum):
    NULL = 0
    CTD = 1
    POS = 2
    NEU = 3
    NEG = 4


LABELS = tuple(TagLabel)
NUM_LABELS = len(LABELS)
SENTIMENT_TAG = {Sentiment.POS: TagLabel.POS, Sentiment.NEU: TagLabel.NEU,
                 Sentiment.NEG: TagLabel.NEG}
TAG_SENTIMENT = {v: k for k, v in SENTIMENT_TAG.items()}

DUMP_TOKENS = {TagLabel.NULL: "N", TagLabel.CTD: "C", TagLabel.POS: "P",
               TagLabel.NEU: "U", TagLabel.NEG: "G"}


def encode_triplets(triplets: Iterable[Triplet], n: int, lenient=False,
                    quiet=False) -> np.ndarray:
    """Fill an ``n x n`` int8 label matrix from a triplet set.

    Strict mode raises :class:`CollisionError` on any cell that two triplets
    disagree about.  With ``lenient=True`` a sentiment overwrites ``CTD`` and
    later sentiments (in sorted triplet order) overwrite earlier ones; every
    such overwrite is logged (at debug level when ``quiet``).
    """
    note = log.debug if quiet else log.warning
    m = np.zeros((n, n), dtype=np.int8)
    ordered = sorted(set(triplets), key=Triplet.sort_key)
    for t in ordered:
        t.aspect.check(n)
        t.opinion.check(n)
    for t in ordered:
        tag = SENTIMENT_TAG[t.sentiment]
        for i in t.aspect.indices():
            for j in t.opinion.indices():
                want = tag if (i, j) == (t.aspect.start, t.opinion.start) else TagLabel.CTD
                have = m[i, j]
                if have == TagLabel.NULL or have == want:
                    m[i, j] = want
                    continue
                if not lenient:
                    raise CollisionError((i, j), TagLabel(have).name, want.name)
                if want != TagLabel.CTD:
                    note("cell (%d, %d): %s overwrites %s", i, j,
                         want.name, TagLabel(have).name)
                    m[i, j] = want
                else:
                    note("cell (%d, %d): keeping %s over CTD", i, j,
                         TagLabel(have).name)
    return m


def decode_matrix(m) -> list[Triplet]:
    """Recover triplets from a label matrix, in row-major scan order.

    Each sentiment cell starts a triplet; the aspect extends down its column
    and the opinion right along its row for as long as the cells read ``CTD``.
    Rectangle interiors are never inspected.
    """
    m = np.ascontiguousarray(m, dtype=np.int8)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"tag matrix must be square, got shape {m.shape}")
    rows = kernels.decode_scan(m, np.int8(TagLabel.CTD), np.int8(TagLabel.POS))
    return [Triplet(Span(int(i), int(ae)), Span(int(j), int(oe)),
                    TAG_SENTIMENT[TagLabel(int(lab))])
            for i, ae, j, oe, lab in rows]


@dataclass
class Discrepancy:
    """Why a triplet set fails to survive encode -> decode."""

    collision: tuple | None = None
    missing: frozenset = frozenset()
    spurious: frozenset = frozenset()

    def __bool__(self):
        # a Discrepancy is "truthy" only when something is actually wrong
        return bool(self.collision or self.missing or self.spurious)


def validate_wellformed(triplets, n):
    """Return ``None`` when the set round-trips exactly, else a Discrepancy.

    On a strict-mode collision the report carries the colliding cell and, in
    addition, the set difference observed after a lenient encode, which shows
    what a model trained on that gold matrix would actually learn.
    """
    triplets = set(triplets)
    collision = None
    try:
        m = encode_triplets(triplets, n)
    except CollisionError as e:
        collision = e.cell
        m = encode_triplets(triplets, n, lenient=True, quiet=True)
    back = set(decode_matrix(m))
    if back == triplets and collision is None:
        return None
    return Discrepancy(collision=collision,
                       missing=frozenset(triplets - back),
                       spurious=frozenset(back - triplets))


def scheme_fidelity(sentences) -> float:
    """Fraction of sentences whose gold set round-trips (1.0 for no sentences)."""
    sentences = list(sentences)
    if not sentences:
        return 1.0
    ok = sum(validate_wellformed(s.triplets, len(s.words)) is None for s in sentences)
    return ok / len(sentences)


def dump_matrix(m, tokens=None) -> str:
    tokens = tokens or {int(k): v for k, v in DUMP_TOKENS.items()}
    lines = [f"n={m.shape[0]}"]
    for row in m:
        lines.append(" ".join(tokens[int(c)] for c in row))
    return "\n".join(lines) + "\n"


def load_matrix(text: str, tokens=None) -> np.ndarray:
    tokens = tokens or {v: int(k) for k, v in DUMP_TOKENS.items()}
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n="):
        raise FormatError("matrix dump must start with 'n=<int>'", line_no=1)
    try:
        n = int(lines[0][2:])
    except ValueError:
        raise FormatError(f"bad header {lines[0]!r}", line_no=1) from None
    if len(lines) - 1 != n:
        raise FormatError(f"expected {n} rows, got {len(lines) - 1}")
    m = np.zeros((n, n), dtype=np.int8)
    for i, ln in enumerate(lines[1:]):
        cells = ln.split(" ")
        if len(cells) != n:
            raise FormatError(f"row has {len(cells)} cells, expected {n}", line_no=i + 2)
        for j, tok in enumerate(cells):
            if tok not in tokens:
                raise FormatError(f"unknown cell token {tok!r}", line_no=i + 2)
            m[i, j] = tokens[tok]
    return m
