"""Reading the ``sentence####[([a..], [o..], 'POS'), ...]`` benchmark files."""
from __future__ import annotations

import ast
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BadSentiment, EmptyCorpus, FormatError, NonContiguousSpan
from .tagging import Sentiment, Span, Triplet

log = logging.getLogger(__name__)

SEP = "####"
SPLIT_NAMES = ("train", "dev", "test")
UNK, PAD = "<unk>", "<pad>"


@dataclass
class RawSentence:
    words: list[str]
    triplets: tuple[Triplet, ...]

    @property
    def text(self):
        return " ".join(self.words)

    def surface(self, span):
        return " ".join(self.words[span.start:span.end + 1])


@dataclass
class DatasetSplit:
    name: str
    sentences: list[RawSentence] = field(default_factory=list)

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise ValueError(f"split name must be one of {SPLIT_NAMES}, got {self.name!r}")

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


def _span(indices, line_no, offset):
    if not isinstance(indices, (list, tuple)) or not indices:
        raise FormatError(f"expected a non-empty index list, got {indices!r}",
                          line_no, offset)
    if not all(isinstance(i, int) and i >= 0 for i in indices):
        raise FormatError(f"indices must be non-negative ints: {indices!r}",
                          line_no, offset)
    lo, hi = min(indices), max(indices)
    if sorted(set(indices)) != list(range(lo, hi + 1)):
        raise NonContiguousSpan(f"index list {list(indices)} has gaps", line_no, offset)
    return Span(lo, hi)


def parse_line(line: str, line_no=None) -> RawSentence:
    line = line.rstrip("\r\n")
    cut = line.find(SEP)
    if cut < 0:
        raise FormatError(f"missing {SEP!r} separator", line_no, len(line.encode()))
    sentence, annotation = line[:cut], line[cut + len(SEP):]
    ann_offset = len(sentence.encode()) + len(SEP)
    words = sentence.split()
    if not words:
        raise FormatError("empty sentence", line_no, 0)
    try:
        raw = ast.literal_eval(annotation)
    except (SyntaxError, ValueError) as e:
        col = getattr(e, "offset", None) or 1
        off = ann_offset + len(annotation[:col - 1].encode())
        raise FormatError(f"unreadable triplet list: {e.__class__.__name__}",
                          line_no, off) from None
    if not isinstance(raw, list):
        raise FormatError("annotation must be a list of triplets", line_no, ann_offset)
    triplets = []
    for item in raw:
        if not (isinstance(item, tuple) and len(item) == 3):
            raise FormatError(f"triplet must be a 3-tuple, got {item!r}", line_no, ann_offset)
        a_idx, o_idx, pol = item
        aspect = _span(a_idx, line_no, ann_offset)
        opinion = _span(o_idx, line_no, ann_offset)
        try:
            sent = Sentiment(pol)
        except ValueError:
            raise BadSentiment(f"unknown sentiment {pol!r}", line_no, ann_offset) from None
        for sp in (aspect, opinion):
            if sp.end >= len(words):
                raise FormatError(f"span {tuple(sp)} beyond {len(words)} words",
                                  line_no, ann_offset)
        if aspect.start <= opinion.end and opinion.start <= aspect.end:
            log.warning("line %s: aspect %s overlaps opinion %s", line_no,
                        tuple(aspect), tuple(opinion))
        triplets.append(Triplet(aspect, opinion, sent))
    return RawSentence(words, tuple(triplets))


def format_line(s: RawSentence) -> str:
    items = ", ".join(
        f"({list(t.aspect.indices())}, {list(t.opinion.indices())}, '{t.sentiment.value}')"
        for t in s.triplets)
    return f"{s.text}{SEP}[{items}]"


def split_name_for(path) -> str:
    stem = Path(path).name.lower()
    for name in SPLIT_NAMES:
        if name in stem:
            return name
    return "train"


def load_split(path, name=None) -> DatasetSplit:
    path = Path(path)
    name = name or split_name_for(path)
    sentences = []
    with path.open(encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            sentences.append(parse_line(line, line_no=no))
    if not sentences:
        log.warning("%s: empty split", path)
    return DatasetSplit(name, sentences)


@dataclass
class CorpusStats:
    sentences: int = 0
    aspects: int = 0
    opinions: int = 0
    pos: int = 0
    neu: int = 0
    neg: int = 0
    triplets: int = 0
    # distinct lowercased surface strings over the whole split
    aspect_strings: int = 0
    opinion_strings: int = 0


def corpus_stats(split) -> CorpusStats:
    st = CorpusStats()
    a_text, o_text = set(), set()
    for s in split:
        st.sentences += 1
        st.aspects += len({t.aspect for t in s.triplets})
        st.opinions += len({t.opinion for t in s.triplets})
        for t in s.triplets:
            st.triplets += 1
            if t.sentiment is Sentiment.POS:
                st.pos += 1
            elif t.sentiment is Sentiment.NEU:
                st.neu += 1
            else:
                st.neg += 1
            a_text.add(s.surface(t.aspect).lower())
            o_text.add(s.surface(t.opinion).lower())
    st.aspect_strings = len(a_text)
    st.opinion_strings = len(o_text)
    return st


STATS_HEADER = ("#S", "#A", "#O", "#S1", "#S2", "#S3", "#T")


def format_stats(rows) -> str:
    """``rows`` is a list of ``(label, CorpusStats)``; one table line each."""
    width = max([len("split")] + [len(lbl) for lbl, _ in rows])
    head = f"{'split':<{width}}  " + "  ".join(f"{h:>6}" for h in STATS_HEADER)
    head += "  " + f"{'#A_str':>7}  {'#O_str':>7}"
    out = [head]
    for lbl, st in rows:
        vals = (st.sentences, st.aspects, st.opinions, st.pos, st.neu, st.neg, st.triplets)
        line = f"{lbl:<{width}}  " + "  ".join(f"{v:>6}" for v in vals)
        line += f"  {st.aspect_strings:>7}  {st.opinion_strings:>7}"
        out.append(line)
    return "\n".join(out)


class Vocabulary:
    """Lowercased word -> id, first-occurrence order after ``<unk>``=0, ``<pad>``=1."""

    def __init__(self, words=()):
        self.itos = [UNK, PAD]
        self.stoi = {UNK: 0, PAD: 1}
        for w in words:
            self.add(w)

    def add(self, word):
        w = word.lower()
        if w not in self.stoi:
            self.stoi[w] = len(self.itos)
            self.itos.append(w)
        return self.stoi[w]

    def __len__(self):
        return len(self.itos)

    def __getitem__(self, word):
        return self.stoi.get(word.lower(), 0)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def ids(self, words):
        return [self[w] for w in words]


def build_vocab(split) -> Vocabulary:
    sentences = list(split)
    if not sentences:
        raise EmptyCorpus("cannot build a vocabulary from an empty split")
    return Vocabulary(w for s in sentences for w in s.words)
