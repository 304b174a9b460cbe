"""Choosing a summary from a beam of candidates by verification score."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quantities import tag_quantities
from .synth import Tag
from .text import Token, tokenize

SCORERS = ("global", "local", "shortest", "max-overlap")


@dataclass(frozen=True)
class BeamCandidate:
    text: str
    beam_rank: int
    model_score: float | None = None

    @property
    def tokens(self) -> list[Token]:
        return tokenize(self.text)

    def to_json(self) -> dict:
        out = {"text": self.text, "beam_rank": self.beam_rank}
        if self.model_score is not None:
            out["model_score"] = self.model_score
        return out


@dataclass
class RankedBeam:
    candidates: list[BeamCandidate]
    scores: list[float]
    selected: int
    scorer: str
    id: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def chosen(self) -> BeamCandidate:
        return self.candidates[self.selected]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "scorer": self.scorer,
            "selected": self.selected,
            "summary": self.chosen.text,
            "candidates": [dict(c.to_json(), score=s) for c, s in zip(self.candidates, self.scores)],
        }


def check_beam(beam: Sequence[BeamCandidate]) -> None:
    if not beam:
        raise ValueError("empty beam")
    ranks = [c.beam_rank for c in beam]
    if len(set(ranks)) != len(ranks):
        raise ValueError(f"duplicate beam ranks {ranks}")


def select(beam: Sequence[BeamCandidate], scores: Sequence[float]) -> int:
    """Index of the highest score; ties go to the lower beam rank."""
    check_beam(beam)
    if len(scores) != len(beam):
        raise ValueError("one score per candidate required")
    return min(range(len(beam)), key=lambda i: (-scores[i], beam[i].beam_rank))


# -- verification scores ---------------------------------------------------------------

def score_global(output) -> float:
    return float(output.z_prob)


def score_local(output, m: Sequence[int] | None = None) -> float:
    """Mean over entity tokens of p(B-V) + p(I-V) - p(B-U) - p(I-U); 0 without entities."""
    m = output.m if m is None else m
    probs = np.asarray(output.tag_marginals)
    if len(m) != probs.shape[0]:
        raise ValueError(f"mask length {len(m)} != output length {probs.shape[0]}")
    rows = probs[np.asarray(m, dtype=bool)]
    if rows.shape[0] == 0:
        return 0.0
    contrib = rows[:, Tag.B_V] + rows[:, Tag.I_V] - rows[:, Tag.B_U] - rows[:, Tag.I_U]
    return float(contrib.mean())


def score_local_viterbi(output, m: Sequence[int] | None = None) -> float:
    """Local score from the decoded path instead of marginals (+1 per V tag, -1 per U tag)."""
    m = output.m if m is None else m
    vals = [1.0 if t in (Tag.B_V, Tag.I_V) else -1.0
            for t, mj in zip(output.tag_sequence, m) if mj]
    return float(np.mean(vals)) if vals else 0.0


# -- baselines ---------------------------------------------------------------------------

def baseline_shortest(beam: Sequence[BeamCandidate]) -> int:
    check_beam(beam)
    return select(beam, [-float(len(c.tokens)) for c in beam])


def entity_keys(tokens) -> list[tuple[str, str]]:
    return [(s.qtype.value, s.normalized) for s in tag_quantities(tokens)]


def overlap_count(candidate_tokens, article_keys: set[tuple[str, str]]) -> int:
    return sum(key in article_keys for key in entity_keys(candidate_tokens))


def baseline_max_overlap(beam: Sequence[BeamCandidate], article) -> int:
    """Candidate with the most quantity spans whose (type, value) occurs in the article."""
    check_beam(beam)
    article_tokens = tokenize(article) if isinstance(article, str) else article
    keys = set(entity_keys(article_tokens))
    return select(beam, [float(overlap_count(c.tokens, keys)) for c in beam])


# -- driver ------------------------------------------------------------------------------

def rerank(beam: Sequence[BeamCandidate], article, scorer: str = "global", model=None,
           local_fn: Callable = score_local, beam_id: str = "") -> RankedBeam:
    """Score every candidate and select the best under the chosen scorer."""
    check_beam(beam)
    beam = list(beam)
    article_tokens = tokenize(article) if isinstance(article, str) else list(article)
    if scorer == "shortest":
        scores = [-float(len(c.tokens)) for c in beam]
    elif scorer == "max-overlap":
        keys = set(entity_keys(article_tokens))
        scores = [float(overlap_count(c.tokens, keys)) for c in beam]
    elif scorer in ("global", "local"):
        if model is None:
            raise ValueError(f"scorer {scorer!r} needs a trained model")
        outputs = [model.verify(article_tokens, c.tokens) for c in beam]
        if scorer == "global":
            scores = [score_global(o) for o in outputs]
        else:
            scores = [local_fn(o) for o in outputs]
    else:
        raise ValueError(f"unknown scorer {scorer!r}; expected one of {SCORERS}")
    return RankedBeam(beam, scores, select(beam, scores), scorer, beam_id)
