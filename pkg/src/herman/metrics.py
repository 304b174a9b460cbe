"""Evaluation metrics: ROUGE, per-tag scores, verdict accuracy and quantity statistics."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

from .quantities import QuantityType, tag_quantities
from .synth import TAG_NAMES, Tag, Verdict


def f1(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: int, cand_total: int, ref_total: int) -> "RougeScore":
        r = overlap / ref_total if ref_total else 0.0
        p = overlap / cand_total if cand_total else 0.0
        return cls(r, p, f1(p, r))


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int = 1) -> RougeScore:
    """Clipped n-gram overlap."""
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    cand, ref = ngrams(candidate, n), ngrams(reference, n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


def rouge_all(candidate: Sequence[str], reference: Sequence[str]) -> dict[str, RougeScore]:
    return {"R1": rouge_n(candidate, reference, 1), "R2": rouge_n(candidate, reference, 2),
            "RL": rouge_l(candidate, reference)}


def corpus_rouge(pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> dict[str, dict[str, float]]:
    """Mean R/P/F1 per variant over (candidate, reference) pairs, in percent."""
    totals = {k: [0.0, 0.0, 0.0] for k in ("R1", "R2", "RL")}
    for cand, ref in pairs:
        for k, s in rouge_all(cand, ref).items():
            totals[k][0] += s.recall
            totals[k][1] += s.precision
            totals[k][2] += s.f1
    n = max(len(pairs), 1)
    return {k: {"recall": pct(v[0] / n), "precision": pct(v[1] / n), "f1": pct(v[2] / n)}
            for k, v in totals.items()}


# -- tagging and verdicts ------------------------------------------------------------------

@dataclass(frozen=True)
class LabelScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class TagReport:
    labels: dict[str, LabelScore]
    z_accuracy: float
    z_f1: float

    def to_json(self) -> dict:
        return {"labels": {k: asdict(v) for k, v in self.labels.items()},
                "z_accuracy": self.z_accuracy, "z_f1": self.z_f1}


def pct(x: float) -> float:
    return round(100.0 * x, 2)


def _as_bool_verdict(v) -> bool:
    if isinstance(v, Verdict):
        return v == Verdict.VERIFIED
    if isinstance(v, str):
        return Verdict(v) == Verdict.VERIFIED
    return bool(v)


def tag_report(pred: Sequence[Sequence[int]], gold: Sequence[Sequence[int]],
               pred_z: Sequence, gold_z: Sequence) -> TagReport:
    """Token-level P/R/F1 per tag and verdict accuracy/F1 (VERIFIED positive), in percent."""
    if len(pred) != len(gold) or len(pred_z) != len(gold_z) or len(pred) != len(pred_z):
        raise ValueError("prediction and gold collections differ in length")
    tp, fp, fn, support = Counter(), Counter(), Counter(), Counter()
    for p_seq, g_seq in zip(pred, gold):
        if len(p_seq) != len(g_seq):
            raise ValueError(f"sequence lengths differ: {len(p_seq)} vs {len(g_seq)}")
        for p, g in zip(p_seq, g_seq):
            p, g = int(p), int(g)
            support[g] += 1
            if p == g:
                tp[g] += 1
            else:
                fp[p] += 1
                fn[g] += 1
    labels = {}
    for tag in Tag:
        prec = tp[tag] / (tp[tag] + fp[tag]) if tp[tag] + fp[tag] else 0.0
        rec = tp[tag] / (tp[tag] + fn[tag]) if tp[tag] + fn[tag] else 0.0
        labels[TAG_NAMES[tag]] = LabelScore(pct(prec), pct(rec), pct(f1(prec, rec)), support[tag])
    pz = [_as_bool_verdict(v) for v in pred_z]
    gz = [_as_bool_verdict(v) for v in gold_z]
    correct = sum(p == g for p, g in zip(pz, gz))
    ztp = sum(p and g for p, g in zip(pz, gz))
    zp = ztp / sum(pz) if sum(pz) else 0.0
    zr = ztp / sum(gz) if sum(gz) else 0.0
    acc = correct / len(gz) if gz else 0.0
    return TagReport(labels, pct(acc), pct(f1(zp, zr)))


# -- quantity statistics ---------------------------------------------------------------------

def avg_q(summaries: Sequence[Sequence]) -> float:
    """Mean number of quantity spans per summary."""
    if not summaries:
        return 0.0
    return sum(len(tag_quantities(s)) for s in summaries) / len(summaries)


def type_counts(summaries: Sequence[Sequence]) -> dict[str, int]:
    """Number of summaries containing at least one span of each type."""
    counts = {t.value: 0 for t in QuantityType}
    for s in summaries:
        for qtype in {span.qtype for span in tag_quantities(s)}:
            counts[qtype.value] += 1
    return counts


def pct_diff(original: float, updated: float) -> float | None:
    """Relative change ``(updated - original) / original`` in percent; None when undefined."""
    if original == 0:
        return None
    return round(100.0 * (updated - original) / original, 2)
