"""Exact-match micro precision / recall / F1."""
from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import LengthMismatch

log = logging.getLogger(__name__)

TASKS = ("ASTE", "AE", "OE", "AOPE")


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    tp: int
    n_pred: int
    n_gold: int
    # set when there were no predictions at all (precision reported as 0)
    empty_pred: bool = False

    @classmethod
    def from_counts(cls, tp, n_pred, n_gold):
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_gold if n_gold else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f, tp, n_pred, n_gold, n_pred == 0)


def _check(pred, gold):
    pred, gold = list(pred), list(gold)
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    return pred, gold


def prf_sets(pred, gold) -> MetricReport:
    """Micro P/R/F1 over per-sentence collections of hashable items."""
    pred, gold = _check(pred, gold)
    tp = n_pred = n_gold = 0
    for p, g in zip(pred, gold):
        p, g = set(p), set(g)
        tp += len(p & g)
        n_pred += len(p)
        n_gold += len(g)
    return MetricReport.from_counts(tp, n_pred, n_gold)


def prf_triplets(pred, gold) -> MetricReport:
    return prf_sets(pred, gold)


def project(triplets, task):
    if task == "ASTE":
        return {tuple(t) for t in triplets}
    if task == "AE":
        return {t[0] for t in triplets}
    if task == "OE":
        return {t[1] for t in triplets}
    if task == "AOPE":
        return {(t[0], t[1]) for t in triplets}
    raise ValueError(f"unknown task {task!r}")


def prf_subtask(pred, gold, task) -> MetricReport:
    pred, gold = _check(pred, gold)
    return prf_sets([project(p, task) for p in pred], [project(g, task) for g in gold])


def all_reports(pred, gold) -> dict[str, MetricReport]:
    pred, gold = _check(pred, gold)
    if not gold:
        log.warning("evaluating an empty split; all metrics are 0")
    return {task: prf_subtask(pred, gold, task) for task in TASKS}


def brute_force_prf(pred, gold) -> MetricReport:
    """Independent oracle for :func:`prf_triplets`: lists and pairwise
    comparison only."""
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    tp = n_pred = n_gold = 0
    for k in range(len(pred)):
        ps, gs = [], []
        for x in pred[k]:
            if x not in ps:
                ps.append(x)
        for x in gold[k]:
            if x not in gs:
                gs.append(x)
        n_pred += len(ps)
        n_gold += len(gs)
        for x in ps:
            for y in gs:
                if x[0] == y[0] and x[1] == y[1] and x[2] == y[2]:
                    tp += 1
                    break
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return MetricReport(p, r, f, tp, n_pred, n_gold, n_pred == 0)


def format_table(reports) -> str:
    lines = [f"{'task':<6}{'P':>8}{'R':>8}{'F1':>8}"]
    for task in TASKS:
        if task in reports:
            r = reports[task]
            lines.append(f"{task:<6}{100 * r.precision:>8.2f}{100 * r.recall:>8.2f}"
                         f"{100 * r.f1:>8.2f}")
    return "\n".join(lines)
