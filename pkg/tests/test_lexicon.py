"""Tests for contingency counting, concept scoring, and ranking evaluation.

Scoring checks compare against an independent 50-digit mpmath oracle; the
frozen constants below were produced by that oracle and are asserted at
1e-9 so any formula drift is caught immediately.
"""

from __future__ import annotations

import datetime as dt
import random

import pytest
from mpmath import mp, mpf

from ssikit import data_path
from ssikit.corpus import ClinicalNote, Section, SurgicalCase, make_cohort
from ssikit.lexicon import (
    ACCEPTED_ANY,
    ACCEPTED_HIGH,
    ACCEPTED_HIGH_MEDIUM,
    ContingencyCounts,
    ExpertJudgment,
    LexiconError,
    RANKING_CSV_HEADER,
    RankedConcept,
    count_contingency,
    inequality_score,
    precision_at_k,
    precision_table,
    precision_table_to_csv,
    rank_concepts,
    ranking_to_csv,
    read_judgments_csv,
    read_ranking_csv,
    write_judgments_csv,
    write_ranking_csv,
)
from ssikit.tagger import ConceptMention


def oracle_score(n_total: int, n_c: int, n_o: int, n_co: int) -> float:
    """Independent high-precision version of the ranking score."""
    with mp.workdps(50):
        log2 = lambda x: mp.log(x) / mp.log(2)  # noqa: E731
        bracket = log2((n_co + mpf(0.01)) / n_o) - log2(mpf(n_c) / n_total)
        return float(log2(n_co) * bracket)


def _counts(n_total, n_c, n_o, n_co, concept_id="x"):
    return ContingencyCounts(
        concept_id=concept_id, n_total=n_total, n_c=n_c, n_o=n_o, n_co=n_co
    )


class TestContingencyCounts:
    def test_rejects_negative(self):
        with pytest.raises(LexiconError):
            _counts(10, 2, -1, 0)

    def test_rejects_overlap_exceeding_either_margin(self):
        with pytest.raises(LexiconError):
            _counts(10, 2, 5, 3)  # n_co > n_c
        with pytest.raises(LexiconError):
            _counts(10, 5, 2, 3)  # n_co > n_o

    def test_rejects_margin_exceeding_total(self):
        with pytest.raises(LexiconError):
            _counts(10, 11, 2, 1)

    def test_accepts_boundary_values(self):
        _counts(10, 10, 10, 10)
        _counts(10, 0, 0, 0)


def _mention(case_id, concept_id, day=5):
    return ConceptMention(
        concept_id=concept_id,
        matched_text=concept_id,
        note_id=f"n_{case_id}_{day}",
        case_id=case_id,
        section_heading="Subjective",
        day=day,
        char_start=0,
        char_end=len(concept_id),
        negated=False,
        experiencer="patient",
    )


def _cohort(labels):
    """labels: dict case_id -> label; one dummy note per case."""
    cases = [
        SurgicalCase(cid, dt.date(2008, 1, 1), label) for cid, label in labels.items()
    ]
    notes = [
        ClinicalNote(
            note_id=f"note_{cid}",
            case_id=cid,
            note_date=dt.date(2008, 1, 3),
            sections=(Section("Subjective", "routine visit."),),
        )
        for cid in labels
    ]
    return make_cohort(cases, notes)


class TestCountContingency:
    def test_case_level_presence_dedupes_repeat_mentions(self):
        cohort = _cohort({"a": "SSI", "b": "NonSSI"})
        mentions = [
            _mention("a", "wound", day=1),
            _mention("a", "wound", day=2),
            _mention("b", "wound", day=3),
        ]
        (counts,) = count_contingency(mentions, cohort)
        assert counts == _counts(2, 1, 2, 1, concept_id="wound")

    def test_counts_every_mentioned_concept(self):
        cohort = _cohort({"a": "SSI", "b": "NonSSI", "c": "NonSSI"})
        mentions = [_mention("a", "wound"), _mention("b", "fever"), _mention("c", "fever")]
        result = {c.concept_id: c for c in count_contingency(mentions, cohort)}
        assert result["wound"] == _counts(3, 1, 1, 1, concept_id="wound")
        assert result["fever"] == _counts(3, 1, 2, 0, concept_id="fever")

    def test_target_label_flips_the_positive_class(self):
        cohort = _cohort({"a": "SSI", "b": "NonSSI"})
        mentions = [_mention("b", "fever")]
        (counts,) = count_contingency(mentions, cohort, target_label="NonSSI")
        assert (counts.n_c, counts.n_co) == (1, 1)

    def test_case_subset_restricts_totals_and_mentions(self):
        cohort = _cohort({"a": "SSI", "b": "NonSSI", "c": "SSI"})
        mentions = [_mention("a", "wound"), _mention("b", "wound"), _mention("c", "wound")]
        (counts,) = count_contingency(mentions, cohort, case_ids=["a", "b"])
        assert counts == _counts(2, 1, 2, 1, concept_id="wound")

    def test_unknown_subset_id_raises(self):
        cohort = _cohort({"a": "SSI"})
        with pytest.raises(LexiconError, match="unknown case ids"):
            count_contingency([], cohort, case_ids=["a", "ghost"])

    def test_mention_of_unknown_case_raises(self):
        cohort = _cohort({"a": "SSI"})
        with pytest.raises(LexiconError, match="unknown case"):
            count_contingency([_mention("ghost", "wound")], cohort)

    def test_bad_target_label_raises(self):
        cohort = _cohort({"a": "SSI"})
        with pytest.raises(LexiconError, match="target label"):
            count_contingency([], cohort, target_label="Positive")

    def test_no_mentions_yields_empty_list(self):
        cohort = _cohort({"a": "SSI"})
        assert count_contingency([], cohort) == []


class TestInequalityScore:
    def test_frozen_value_strong_association(self):
        # Oracle: n_total=100, n_c=20, n_o=10, n_co=8.
        assert inequality_score(_counts(100, 20, 10, 8)) == pytest.approx(
            6.005406727901956, abs=1e-9
        )

    def test_frozen_value_near_independence(self):
        # Oracle: n_total=1000, n_c=50, n_o=100, n_co=5 -> tiny positive score.
        assert inequality_score(_counts(1000, 50, 100, 5)) == pytest.approx(
            0.006692977546806203, abs=1e-9
        )

    def test_single_cooccurrence_scores_zero(self):
        # log2(1) = 0 kills the whole product regardless of the bracket.
        assert inequality_score(_counts(100, 20, 10, 1)) == 0.0

    def test_zero_cooccurrence_raises(self):
        with pytest.raises(LexiconError, match="n_co=0"):
            inequality_score(_counts(100, 20, 10, 0))

    def test_matches_high_precision_oracle_on_random_counts(self):
        rng = random.Random(20240817)
        for _ in range(1000):
            n_total = rng.randint(2, 2000)
            n_c = rng.randint(1, n_total)
            n_o = rng.randint(1, n_total)
            n_co = rng.randint(1, min(n_c, n_o))
            got = inequality_score(_counts(n_total, n_c, n_o, n_co))
            want = oracle_score(n_total, n_c, n_o, n_co)
            assert got == pytest.approx(want, abs=1e-9), (n_total, n_c, n_o, n_co)

    def test_invariant_under_prevalence_preserving_scaling(self):
        # Doubling n_c and n_total together keeps the class prior fixed, so
        # the score only sees the concept's own statistics.
        a = inequality_score(_counts(100, 20, 10, 8))
        b = inequality_score(_counts(200, 40, 10, 8))
        assert a == pytest.approx(b, abs=1e-12)

    def test_monotone_in_cooccurrence(self):
        scores = [inequality_score(_counts(100, 20, 10, n_co)) for n_co in range(2, 11)]
        assert scores == sorted(scores)
        assert scores[0] < scores[-1]


class TestRankConcepts:
    def test_orders_by_score_descending(self):
        counts = [
            _counts(100, 20, 10, 8, concept_id="strong"),
            _counts(100, 20, 50, 8, concept_id="weak"),
            _counts(100, 20, 10, 4, concept_id="middle"),
        ]
        ranking = rank_concepts(counts)
        assert [rc.concept_id for rc in ranking] == ["strong", "middle", "weak"]
        assert [rc.rank for rc in ranking] == [1, 2, 3]

    def test_drops_concepts_without_cooccurrence(self):
        counts = [
            _counts(100, 20, 10, 8, concept_id="kept"),
            _counts(100, 20, 10, 0, concept_id="dropped"),
        ]
        assert [rc.concept_id for rc in rank_concepts(counts)] == ["kept"]

    def test_ties_break_lexicographically(self):
        # Identical counts give identical scores.
        counts = [
            _counts(100, 20, 10, 8, concept_id="zeta"),
            _counts(100, 20, 10, 8, concept_id="alpha"),
        ]
        assert [rc.concept_id for rc in rank_concepts(counts)] == ["alpha", "zeta"]

    def test_scores_are_full_precision(self):
        (rc,) = rank_concepts([_counts(100, 20, 10, 8)])
        assert rc.score == pytest.approx(6.005406727901956, abs=1e-9)


class TestPrecisionAtK:
    def _ranking(self, ids):
        return [RankedConcept(cid, 10.0 - i, i + 1) for i, cid in enumerate(ids)]

    def test_counts_accepted_degrees(self):
        ranking = self._ranking(["a", "b", "c", "d"])
        judgments = {"a": "h", "b": "m", "c": "n", "d": "l"}
        assert precision_at_k(ranking, judgments, 4, ACCEPTED_HIGH) == 0.25
        assert precision_at_k(ranking, judgments, 4, ACCEPTED_HIGH_MEDIUM) == 0.5
        assert precision_at_k(ranking, judgments, 4, ACCEPTED_ANY) == 0.75

    def test_k_out_of_range_raises(self):
        ranking = self._ranking(["a"])
        with pytest.raises(LexiconError):
            precision_at_k(ranking, {"a": "h"}, 0, ACCEPTED_HIGH)
        with pytest.raises(LexiconError):
            precision_at_k(ranking, {"a": "h"}, 2, ACCEPTED_HIGH)

    def test_missing_judgment_raises(self):
        ranking = self._ranking(["a", "b"])
        with pytest.raises(LexiconError, match="no judgment"):
            precision_at_k(ranking, {"a": "h"}, 2, ACCEPTED_HIGH)

    def test_accepts_judgment_objects(self):
        ranking = self._ranking(["a"])
        judgments = [ExpertJudgment("a", "h")]
        assert precision_at_k(ranking, judgments, 1, ACCEPTED_HIGH) == 1.0

    def test_widening_accepted_set_never_lowers_precision(self):
        rng = random.Random(99)
        ids = [f"c{i}" for i in range(30)]
        judgments = {cid: rng.choice("hmln") for cid in ids}
        ranking = self._ranking(ids)
        for k in (5, 10, 30):
            p_h = precision_at_k(ranking, judgments, k, ACCEPTED_HIGH)
            p_hm = precision_at_k(ranking, judgments, k, ACCEPTED_HIGH_MEDIUM)
            p_any = precision_at_k(ranking, judgments, k, ACCEPTED_ANY)
            assert p_h <= p_hm <= p_any


class TestShippedFixture:
    """The packaged 30-concept ranking and its expert judgments."""

    def test_precision_grid(self):
        ranking = read_ranking_csv(data_path("reference_ranking.csv"))
        judgments = read_judgments_csv(data_path("reference_judgments.csv"))
        rows = {row["k"]: row for row in precision_table(ranking, judgments)}
        expected = {
            10: (0.40, 0.60, 0.90),
            20: (0.45, 0.65, 0.85),
            30: (0.53, 0.67, 0.80),
        }
        for k, (high, high_medium, any_rel) in expected.items():
            assert round(rows[k]["high"], 2) == high
            assert round(rows[k]["high_medium"], 2) == high_medium
            assert round(rows[k]["any"], 2) == any_rel

    def test_fixture_shape(self):
        ranking = read_ranking_csv(data_path("reference_ranking.csv"))
        assert len(ranking) == 30
        assert [rc.rank for rc in ranking] == list(range(1, 31))
        scores = [rc.score for rc in ranking]
        assert scores == sorted(scores, reverse=True)
        assert ranking[0].concept_id == "wound infection"


class TestCsvFormats:
    def test_ranking_roundtrip_with_counts(self, tmp_path):
        counts = [
            _counts(100, 20, 10, 8, concept_id="strong"),
            _counts(100, 20, 10, 4, concept_id="middle"),
        ]
        ranking = rank_concepts(counts)
        path = tmp_path / "ranking.csv"
        write_ranking_csv(ranking, path, counts)
        text = path.read_text(encoding="utf-8")
        assert text.splitlines()[0] == RANKING_CSV_HEADER
        assert text.splitlines()[1] == "1,strong,6.01,8,10,20,100"
        loaded = read_ranking_csv(path)
        assert [(rc.rank, rc.concept_id) for rc in loaded] == [
            (1, "strong"), (2, "middle"),
        ]

    def test_ranking_csv_without_counts_leaves_columns_empty(self):
        ranking = rank_concepts([_counts(100, 20, 10, 8, concept_id="solo")])
        line = ranking_to_csv(ranking).splitlines()[1]
        assert line == "1,solo,6.01,,,,"

    def test_read_ranking_rejects_rank_gap(self, tmp_path):
        path = tmp_path / "ranking.csv"
        path.write_text(
            RANKING_CSV_HEADER + "\n1,a,5.00,,,,\n3,b,4.00,,,,\n", encoding="utf-8"
        )
        with pytest.raises(LexiconError):
            read_ranking_csv(path)

    def test_judgments_roundtrip(self, tmp_path):
        judgments = [ExpertJudgment("a", "h"), ExpertJudgment("b", "n")]
        path = tmp_path / "judgments.csv"
        write_judgments_csv(judgments, path)
        assert read_judgments_csv(path) == judgments

    def test_judgments_reject_duplicates(self, tmp_path):
        path = tmp_path / "judgments.csv"
        path.write_text("concept_id,degree\na,h\na,m\n", encoding="utf-8")
        with pytest.raises(LexiconError, match="duplicate"):
            read_judgments_csv(path)

    def test_judgments_reject_bad_degree(self, tmp_path):
        path = tmp_path / "judgments.csv"
        path.write_text("concept_id,degree\na,x\n", encoding="utf-8")
        with pytest.raises(LexiconError):
            read_judgments_csv(path)

    def test_precision_table_csv(self):
        rows = [{"k": 10, "high": 0.4, "high_medium": 0.6, "any": 0.9}]
        text = precision_table_to_csv(rows)
        assert text.splitlines() == ["k,high,high_medium,any", "10,0.40,0.60,0.90"]


class TestEndToEnd:
    def test_count_rank_and_evaluate(self):
        # Concept present in most positive cases ranks above one spread evenly.
        labels = {f"p{i}": "SSI" for i in range(5)}
        labels.update({f"n{i}": "NonSSI" for i in range(15)})
        cohort = _cohort(labels)
        mentions = []
        for i in range(4):
            mentions.append(_mention(f"p{i}", "signal"))
        for cid in ("p0", "n0", "n1", "n2"):
            mentions.append(_mention(cid, "noise"))
        ranking = rank_concepts(count_contingency(mentions, cohort))
        assert [rc.concept_id for rc in ranking] == ["signal", "noise"]
        p = precision_at_k(ranking, {"signal": "h", "noise": "n"}, 1, ACCEPTED_HIGH)
        assert p == 1.0
