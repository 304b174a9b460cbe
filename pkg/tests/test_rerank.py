from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from herman import rerank as rr
from herman.model import HermanOutput
from herman.rerank import BeamCandidate, RankedBeam


def beam_of(*texts: str) -> list[BeamCandidate]:
    return [BeamCandidate(t, i) for i, t in enumerate(texts)]


def output(marginal_rows, m, z=0.5) -> HermanOutput:
    probs = np.asarray(marginal_rows, dtype=float)
    return HermanOutput([4] * len(m), probs, z, list(m))


class FixedScoreModel:
    """Stands in for a trained model: z_prob is looked up by candidate text."""

    def __init__(self, by_text: dict[str, float]):
        self.by_text = by_text

    def verify(self, article, summary):
        text = " ".join(t.text for t in summary)
        n = len(summary)
        return HermanOutput([4] * n, np.tile([0, 0, 0, 0, 1.0], (n, 1)), self.by_text[text], [0] * n)


class TestScores:
    @pytest.mark.parametrize("z", [0.9, 0.0, 1.0])
    def test_global_is_z(self, z):
        assert rr.score_global(output([[0, 0, 0, 0, 1]], [0], z)) == z

    def test_local_no_entities(self):
        assert rr.score_local(output([[0, 0, 0, 0, 1]] * 3, [0, 0, 0])) == 0.0

    def test_local_single_token(self):
        out = output([[0.8, 0.0, 0.1, 0.0, 0.1]], [1])
        assert rr.score_local(out) == pytest.approx(0.7, abs=1e-15)

    def test_local_averages_over_entity_tokens(self):
        rows = [[0, 0, 0, 0, 1], [1, 0, 0, 0, 0], [0, 0, 0, 1, 0]]
        assert rr.score_local(output(rows, [0, 1, 1])) == pytest.approx(0.0)
        assert rr.score_local(output(rows, [0, 1, 0])) == pytest.approx(1.0)

    def test_local_mask_length_checked(self):
        with pytest.raises(ValueError):
            rr.score_local(output([[0, 0, 0, 0, 1]], [0]), [0, 1])

    def test_local_viterbi_variant(self):
        out = HermanOutput([0, 1, 2, 4], np.zeros((4, 5)), 0.5, [1, 1, 1, 0])
        assert rr.score_local_viterbi(out) == pytest.approx(1 / 3)


class TestSelect:
    def test_argmax(self):
        assert rr.select(beam_of("a", "b", "c"), [0.2, 0.9, 0.5]) == 1

    def test_all_equal_keeps_top(self):
        assert rr.select(beam_of("a", "b", "c"), [0.4, 0.4, 0.4]) == 0

    def test_tie_uses_beam_rank_not_position(self):
        beam = [BeamCandidate("x", 3), BeamCandidate("y", 1)]
        assert rr.select(beam, [1.0, 1.0]) == 1

    def test_empty_beam(self):
        with pytest.raises(ValueError):
            rr.select([], [])

    def test_duplicate_ranks(self):
        with pytest.raises(ValueError):
            rr.check_beam([BeamCandidate("a", 0), BeamCandidate("b", 0)])

    @settings(max_examples=100, deadline=None)
    # scores on a coarse grid so the transform stays strictly increasing in float64
    @given(st.lists(st.integers(-20, 20).map(lambda k: k / 4), min_size=1, max_size=8))
    def test_invariant_under_monotone_transform(self, scores):
        beam = [BeamCandidate(str(i), i) for i in range(len(scores))]
        transformed = [np.exp(s) * 3 + 1 for s in scores]
        assert rr.select(beam, scores) == rr.select(beam, transformed)


class TestBaselines:
    def test_shortest(self):
        beam = beam_of(" ".join(["w"] * 12), " ".join(["w"] * 9), " ".join(["w"] * 15))
        assert rr.baseline_shortest(beam) == 1

    def test_shortest_tie(self):
        assert rr.baseline_shortest(beam_of(" ".join(["w"] * 9), " ".join(["v"] * 9))) == 0

    def test_shortest_single(self):
        assert rr.baseline_shortest(beam_of("only one")) == 0

    def test_shortest_empty(self):
        with pytest.raises(ValueError):
            rr.baseline_shortest([])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(1, 20), min_size=1, max_size=6))
    def test_shortest_is_minimal(self, lengths):
        beam = beam_of(*(" ".join(["w"] * n) for n in lengths))
        chosen = rr.baseline_shortest(beam)
        assert all(len(beam[chosen].tokens) <= len(c.tokens) for c in beam)

    def test_max_overlap_prefers_matching(self):
        article = "The council spent £4,000 on 14 June 2016 for the repairs."
        beam = beam_of("Repairs cost £9,999 last year.", "The council spent £4,000 on 14 June 2016.")
        assert rr.baseline_max_overlap(beam, article) == 1

    def test_max_overlap_counts_normalised_value(self):
        article = "A fine of £4,000 was issued."
        keys = set(rr.entity_keys(rr.tokenize(article)))
        assert rr.overlap_count(rr.tokenize("They paid £4000."), keys) == 1

    def test_max_overlap_none_matching(self):
        beam = beam_of("It was 7 feet tall.", "Nine people came.")
        assert rr.baseline_max_overlap(beam, "No numbers here.") == 0


class TestRerank:
    def test_global_with_model(self):
        beam = beam_of("a", "b", "c")
        ranked = rr.rerank(beam, "article", "global", FixedScoreModel({"a": 0.2, "b": 0.9, "c": 0.5}))
        assert ranked.selected == 1 and ranked.scores == [0.2, 0.9, 0.5]
        assert ranked.chosen.text == "b"

    def test_model_required(self):
        with pytest.raises(ValueError):
            rr.rerank(beam_of("a"), "article", "local")

    def test_unknown_scorer(self):
        with pytest.raises(ValueError):
            rr.rerank(beam_of("a"), "article", "longest")

    def test_preserves_beam_and_does_not_mutate(self):
        beam = beam_of("one 1", "two 2", "three 3")
        before = [BeamCandidate(c.text, c.beam_rank) for c in beam]
        ranked = rr.rerank(beam, "one 1 two", "max-overlap", beam_id="x")
        assert beam == before and ranked.candidates == beam
        assert isinstance(ranked, RankedBeam)

    def test_to_json(self):
        ranked = rr.rerank(beam_of("a b", "c"), "z", "shortest", beam_id="k")
        js = ranked.to_json()
        assert js["id"] == "k" and js["selected"] == 1 and js["summary"] == "c"
        assert [c["score"] for c in js["candidates"]] == [-2.0, -1.0]
