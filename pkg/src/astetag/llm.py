"""Prompted triplet extraction through a chat-completion HTTP endpoint.

Responses are parsed leniently, scored by exact (lowercased) surface strings
and journaled as JSON lines so a run can be resumed or replayed offline.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import requests

from .errors import HttpError, NoShotsAvailable, RateLimited, ReplayMiss
from .metrics import MetricReport, prf_sets

log = logging.getLogger(__name__)

API_KEY_ENV = "LLM_API_KEY"
DEFAULT_SHOTS = 5
DEFAULT_WORKERS = 4
MAX_ATTEMPTS = 5

HEAD = ("Perform aspect-based sentiment analysis on the provided text and return "
        "triplets as [Aspect, Opinion, Sentiment].")
TAIL = ("You only need to provide the triplets, no additional explanations are "
        "required. The provided text: {sentence}")

_WORD_OF = {"POS": "positive", "NEU": "neutral", "NEG": "negative"}
_SENT_OF = {"positive": "POS", "pos": "POS", "neutral": "NEU", "neu": "NEU",
            "negative": "NEG", "neg": "NEG"}


class StringTriplet(NamedTuple):
    aspect: str
    opinion: str
    sentiment: str  # POS / NEU / NEG

    def key(self):
        return (self.aspect.lower(), self.opinion.lower(), self.sentiment)


@dataclass(frozen=True)
class PromptTemplate:
    mode: str
    k: int
    text: str


# ------------------------------------------------------------------ prompts


def format_triplets(triplets) -> str:
    return ", ".join(f"[{a}, {o}, {_WORD_OF[str(s)]}]" for a, o, s in triplets)


def gold_strings(sentence) -> list[StringTriplet]:
    return [StringTriplet(sentence.surface(t.aspect), sentence.surface(t.opinion), str(t.sentiment))
            for t in sorted(sentence.triplets, key=lambda t: t.sort_key())]


def select_shots(train, k, seed=0):
    """Deterministic sample of ``k`` training sentences (without replacement)."""
    pool = list(train)
    if k < 1 or not pool:
        raise NoShotsAvailable(f"few-shot prompting needs k >= 1 shots from a non-empty "
                               f"train split (k={k}, {len(pool)} sentences)")
    if k > len(pool):
        raise NoShotsAvailable(f"asked for {k} shots, train split has {len(pool)} sentences")
    idx = np.random.default_rng(seed).choice(len(pool), size=k, replace=False)
    return [pool[i] for i in sorted(idx)]


def render_prompt(mode, sentence: str, shots=()) -> PromptTemplate:
    """Instantiate the zero- or few-shot template.

    ``shots`` holds training sentences (objects with ``text`` and
    ``triplets``/``surface``) or ``(text, triplet strings)`` pairs.
    """
    if mode == "zero":
        return PromptTemplate("zero", 0, f"{HEAD} {TAIL.format(sentence=sentence)}")
    if mode != "few":
        raise ValueError(f"mode must be 'zero' or 'few', got {mode!r}")
    shots = list(shots)
    if not shots:
        raise NoShotsAvailable("few-shot prompt with no shots")
    blocks = []
    for s in shots:
        if isinstance(s, tuple):
            text, trip = s
        else:
            text, trip = s.text, format_triplets(gold_strings(s))
        blocks.append(f"input: {text} output: {trip}")
    body = f"{HEAD} For example: {', '.join(blocks)}. {TAIL.format(sentence=sentence)}"
    return PromptTemplate("few", len(shots), body)


# ------------------------------------------------------------------ parsing


@dataclass
class ParseResult:
    triplets: set
    diagnostics: list = field(default_factory=list)


_BRACKET = re.compile(r"\[([^\[\]]*)\]")
_PAREN = re.compile(r"\(([^()]*)\)")
_QUOTES = " \t\r\n\"'`“”‘’"


def _group(raw, diags):
    fields = [f.strip(_QUOTES) for f in raw.split(",")]
    if len(fields) != 3:
        diags.append(f"dropped group with {len(fields)} fields: {raw.strip()!r}")
        return None
    a, o, s = fields
    sent = _SENT_OF.get(s.lower().strip(" .;:"))
    if sent is None:
        diags.append(f"dropped group with unknown sentiment {s!r}")
        return None
    if not a or not o:
        diags.append(f"dropped group with empty text: {raw.strip()!r}")
        return None
    return StringTriplet(a, o, sent)


def parse_with_diagnostics(text) -> ParseResult:
    """Total parser: never raises, records why groups were dropped."""
    diags = []
    if not isinstance(text, str):
        return ParseResult(set(), [f"non-text response of type {type(text).__name__}"])
    groups = _BRACKET.findall(text)
    if not groups:
        groups = _PAREN.findall(text)
    if not groups:
        # bare "a, o, s" items on separate lines
        groups = [ln.strip(" -*\t") for ln in text.splitlines() if ln.count(",") == 2]
    out = set()
    for g in groups:
        t = _group(g, diags)
        if t is not None:
            out.add(t)
    if not out:
        diags.append("no triplets found in response")
    for d in diags:
        log.debug("parse: %s", d)
    return ParseResult(out, diags)


def parse_response(text) -> set:
    return parse_with_diagnostics(text).triplets


def score_strings(pred, gold) -> MetricReport:
    """Micro P/R/F1 where a match is equal lowercased aspect, opinion and sentiment."""
    return prf_sets([{t.key() for t in p} for p in pred], [{t.key() for t in g} for g in gold])


# ------------------------------------------------------------------ transport


@dataclass
class LlmConfig:
    llm_base_url: str = "http://localhost:8000/v1"
    llm_model: str = "gpt-4"
    timeout: float = 60.0
    max_attempts: int = MAX_ATTEMPTS
    backoff: float = 1.0
    workers: int = DEFAULT_WORKERS


class ChatClient:
    """Minimal chat-completion client (model, messages, temperature 0)."""

    def __init__(self, cfg: LlmConfig, api_key=None, session=None, sleep=time.sleep):
        self.cfg = cfg
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.session = session or requests.Session()
        self.sleep = sleep

    def complete(self, prompt: str) -> str:
        url = self.cfg.llm_base_url.rstrip("/") + "/chat/completions"
        payload = {"model": self.cfg.llm_model,
                   "messages": [{"role": "user", "content": prompt}],
                   "temperature": 0}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last = None
        for attempt in range(self.cfg.max_attempts):
            if attempt:
                self.sleep(self.cfg.backoff * 2 ** (attempt - 1))
            try:
                r = self.session.post(url, json=payload, headers=headers, timeout=self.cfg.timeout)
            except requests.RequestException as e:
                last = HttpError(f"request failed: {e}")
                continue
            if r.status_code == 429:
                last = RateLimited(f"rate limited by {url}", 429)
                continue
            if r.status_code >= 500:
                last = HttpError(f"server error {r.status_code} from {url}", r.status_code)
                continue
            if r.status_code >= 400:
                raise HttpError(f"HTTP {r.status_code} from {url}: {r.text[:200]}", r.status_code)
            try:
                return r.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise HttpError(f"malformed completion body: {e}", r.status_code) from e
        log.error("giving up after %d attempts", self.cfg.max_attempts)
        raise last


# ------------------------------------------------------------------ journal


def prompt_key(model, prompt) -> str:
    return hashlib.sha256(f"{model}\n{prompt}".encode("utf-8")).hexdigest()


class Journal:
    """Append-only JSON-lines record of request/response pairs."""

    def __init__(self, path):
        self.path = Path(path) if path else None
        self.records = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            for no, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self.records[rec["key"]] = rec
                except (ValueError, KeyError):
                    log.warning("%s:%d: skipping unreadable journal line", self.path, no)

    def get(self, key):
        return self.records.get(key)

    def append(self, rec):
        with self._lock:
            self.records[rec["key"]] = rec
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def run_llm_eval(split, mode="zero", k=DEFAULT_SHOTS, cfg=None, client=None, journal=None,
                 train=None, seed=0, replay=False):
    """Render, request, parse and score every sentence of ``split``.

    Already-journaled prompts are not re-sent, so an interrupted run resumes
    where it stopped; ``replay=True`` never touches the network.  Returns
    ``(MetricReport, records)`` with records in split order.
    """
    cfg = cfg or LlmConfig()
    journal = journal if isinstance(journal, Journal) else Journal(journal)
    shots = select_shots(train if train is not None else [], k, seed) if mode == "few" else ()
    sentences = list(split)
    prompts = [render_prompt(mode, s.text, shots) for s in sentences]
    if not replay and client is None:
        client = ChatClient(cfg)

    def one(i):
        key = prompt_key(cfg.llm_model, prompts[i].text)
        rec = journal.get(key)
        if rec is None:
            if replay:
                raise ReplayMiss(f"sentence {i}: no journaled response")
            started = time.time()
            raw = client.complete(prompts[i].text)
            parsed = parse_with_diagnostics(raw)
            rec = {"key": key, "sentence_id": i, "mode": mode, "k": prompts[i].k,
                   "model": cfg.llm_model, "prompt": prompts[i].text, "response": raw,
                   "parsed": sorted(list(t) for t in parsed.triplets),
                   "diagnostics": parsed.diagnostics,
                   "started": started, "finished": time.time()}
            journal.append(rec)
        return rec

    if replay or cfg.workers <= 1:
        records = [one(i) for i in range(len(sentences))]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(one, range(len(sentences))))
    # scores always come from re-parsing the raw text, so replays match live runs
    pred = [parse_response(r["response"]) for r in records]
    gold = [gold_strings(s) for s in sentences]
    return score_strings(pred, gold), records
