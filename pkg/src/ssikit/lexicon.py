"""Case-level association scoring and ranking of tagged concepts.

For each concept the module builds case-level contingency counts (how many
cases mention it, and how many of those carry the positive label), scores it
with a smoothed, co-occurrence-weighted pointwise-mutual-information measure,
and ranks concepts by score. Rankings can be evaluated against expert
relevance judgments with precision@k.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .corpus import LABELS, SSI, Cohort
from .tagger import ConceptMention

SMOOTHING = 0.01

DEGREE_HIGH = "h"
DEGREE_MEDIUM = "m"
DEGREE_LOW = "l"
DEGREE_NONE = "n"
DEGREES = (DEGREE_HIGH, DEGREE_MEDIUM, DEGREE_LOW, DEGREE_NONE)

# Acceptance thresholds used in the standard precision table: a concept
# counts as relevant if its judged degree falls in the set.
ACCEPTED_HIGH = frozenset({DEGREE_HIGH})
ACCEPTED_HIGH_MEDIUM = frozenset({DEGREE_HIGH, DEGREE_MEDIUM})
ACCEPTED_ANY = frozenset({DEGREE_HIGH, DEGREE_MEDIUM, DEGREE_LOW})

RANKING_CSV_HEADER = "rank,concept_id,score,n_co,n_o,n_c,n_total"


class LexiconError(ValueError):
    """Invalid counts, ranking, or judgment data."""


@dataclass(frozen=True)
class ContingencyCounts:
    """Case-level counts for one concept against the positive label."""

    concept_id: str
    n_total: int  # number of cases
    n_c: int      # cases with the positive label
    n_o: int      # cases with >=1 mention of the concept
    n_co: int     # positive cases with >=1 mention

    def __post_init__(self) -> None:
        if min(self.n_total, self.n_c, self.n_o, self.n_co) < 0:
            raise LexiconError(f"{self.concept_id}: negative count")
        if self.n_co > min(self.n_c, self.n_o) or max(self.n_c, self.n_o) > self.n_total:
            raise LexiconError(f"{self.concept_id}: inconsistent counts {self}")


@dataclass(frozen=True)
class RankedConcept:
    concept_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class ExpertJudgment:
    concept_id: str
    degree: str

    def __post_init__(self) -> None:
        if self.degree not in DEGREES:
            raise LexiconError(
                f"{self.concept_id}: degree must be one of {DEGREES}, got {self.degree!r}"
            )


def count_contingency(mentions: Iterable[ConceptMention], cohort: Cohort,
                      target_label: str = SSI,
                      case_ids: Iterable[str] | None = None) -> list[ContingencyCounts]:
    """Case-level presence counts per concept.

    A concept counts once per case no matter how many mentions it has there.
    ``mentions`` should already be window- and heuristic-filtered. Every
    concept with at least one mention gets an entry; n_total and n_c are the
    same for all of them. ``case_ids`` restricts counting to a case subset
    (mentions of other cases are ignored), which cross-validation uses to
    keep selection inside the training split.
    """
    if target_label not in LABELS:
        raise LexiconError(f"unknown target label {target_label!r}")
    all_ids = sorted(c.case_id for c in cohort.cases)
    if case_ids is None:
        kept_ids = all_ids
    else:
        subset = set(case_ids)
        unknown = subset - set(all_ids)
        if unknown:
            raise LexiconError(f"unknown case ids: {sorted(unknown)[:5]}")
        kept_ids = [cid for cid in all_ids if cid in subset]
    case_row = {cid: i for i, cid in enumerate(kept_ids)}
    labels = cohort.labels
    kept_mentions = []
    for m in mentions:
        if m.case_id not in labels:
            raise LexiconError(f"mention references unknown case {m.case_id!r}")
        if m.case_id in case_row:
            kept_mentions.append(m)
    concept_ids = sorted({m.concept_id for m in kept_mentions})
    concept_col = {cid: j for j, cid in enumerate(concept_ids)}

    rows = []
    cols = []
    for m in kept_mentions:
        rows.append(case_row[m.case_id])
        cols.append(concept_col[m.concept_id])
    presence = _kernels.presence_matrix(
        np.asarray(rows, dtype=np.int64),
        np.asarray(cols, dtype=np.int64),
        len(kept_ids),
        len(concept_ids),
    )
    positive = np.asarray([labels[cid] == target_label for cid in kept_ids], dtype=bool)
    n_o = presence.sum(axis=0, dtype=np.int64)
    n_co = presence[positive].sum(axis=0, dtype=np.int64)
    n_total = len(kept_ids)
    n_c = int(positive.sum())
    return [
        ContingencyCounts(
            concept_id=cid, n_total=n_total, n_c=n_c,
            n_o=int(n_o[j]), n_co=int(n_co[j]),
        )
        for j, cid in enumerate(concept_ids)
    ]


def inequality_score(counts: ContingencyCounts) -> float:
    """Smoothed PMI weighted by log co-occurrence, in double precision.

    score = log2(n_co) * (log2((n_co + 0.01)/n_o) - log2(n_c/n_total))

    n_co = 0 has no defined score (the concept is simply dropped from
    rankings), so it raises.
    """
    if counts.n_co < 1:
        raise LexiconError(f"{counts.concept_id}: score undefined for n_co=0")
    if counts.n_o < 1 or counts.n_c < 1 or counts.n_total < 1:
        raise LexiconError(f"{counts.concept_id}: counts must be >= 1, got {counts}")
    bracket = math.log2((counts.n_co + SMOOTHING) / counts.n_o) - math.log2(
        counts.n_c / counts.n_total
    )
    return math.log2(counts.n_co) * bracket


def rank_concepts(all_counts: Iterable[ContingencyCounts]) -> list[RankedConcept]:
    """Concepts with n_co >= 1 sorted by score descending, ties lexicographic."""
    scored = [
        (c.concept_id, inequality_score(c)) for c in all_counts if c.n_co >= 1
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return [
        RankedConcept(concept_id=cid, score=score, rank=i)
        for i, (cid, score) in enumerate(scored, start=1)
    ]


def precision_at_k(ranking: Sequence[RankedConcept],
                   judgments: Iterable[ExpertJudgment] | Mapping[str, str],
                   k: int, accepted: frozenset[str] | set[str]) -> float:
    """Fraction of the top-k concepts whose judged degree is in ``accepted``."""
    if k < 1 or k > len(ranking):
        raise LexiconError(f"k={k} out of range for ranking of {len(ranking)}")
    if not isinstance(judgments, Mapping):
        judgments = {j.concept_id: j.degree for j in judgments}
    hits = 0
    for rc in ranking[:k]:
        degree = judgments.get(rc.concept_id)
        if degree is None:
            raise LexiconError(f"no judgment for top-{k} concept {rc.concept_id!r}")
        if degree in accepted:
            hits += 1
    return hits / k


def precision_table(ranking: Sequence[RankedConcept],
                    judgments: Iterable[ExpertJudgment],
                    ks: Sequence[int] = (10, 20, 30)) -> list[dict[str, float | int]]:
    """Rows of precision@k for the high / high+medium / any-relation sets."""
    jmap = {j.concept_id: j.degree for j in judgments}
    rows = []
    for k in ks:
        rows.append(
            {
                "k": k,
                "high": precision_at_k(ranking, jmap, k, ACCEPTED_HIGH),
                "high_medium": precision_at_k(ranking, jmap, k, ACCEPTED_HIGH_MEDIUM),
                "any": precision_at_k(ranking, jmap, k, ACCEPTED_ANY),
            }
        )
    return rows


# -- CSV wire formats ---------------------------------------------------------

def ranking_to_csv(ranking: Sequence[RankedConcept],
                   counts: Iterable[ContingencyCounts] = ()) -> str:
    by_id = {c.concept_id: c for c in counts}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RANKING_CSV_HEADER.split(","))
    for rc in ranking:
        c = by_id.get(rc.concept_id)
        # Reports round scores to 2 decimals; ranking order itself is
        # computed at full precision before this point.
        writer.writerow(
            [
                rc.rank, rc.concept_id, f"{rc.score:.2f}",
                c.n_co if c else "", c.n_o if c else "",
                c.n_c if c else "", c.n_total if c else "",
            ]
        )
    return buf.getvalue()


def write_ranking_csv(ranking: Sequence[RankedConcept], path: str | Path,
                      counts: Iterable[ContingencyCounts] = ()) -> None:
    Path(path).write_text(ranking_to_csv(ranking, counts), encoding="utf-8", newline="\n")


def read_ranking_csv(path: str | Path) -> list[RankedConcept]:
    """Read a ranking; count columns are optional and ignored here."""
    ranking = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"rank", "concept_id", "score"} <= set(
            reader.fieldnames
        ):
            raise LexiconError(f"{path}: expected columns rank,concept_id,score")
        for row in reader:
            ranking.append(
                RankedConcept(
                    concept_id=row["concept_id"],
                    score=float(row["score"]),
                    rank=int(row["rank"]),
                )
            )
    ranking.sort(key=lambda rc: rc.rank)
    expected = list(range(1, len(ranking) + 1))
    if [rc.rank for rc in ranking] != expected:
        raise LexiconError(f"{path}: ranks must be consecutive from 1")
    return ranking


def read_judgments_csv(path: str | Path) -> list[ExpertJudgment]:
    judgments = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"concept_id", "degree"} <= set(
            reader.fieldnames
        ):
            raise LexiconError(f"{path}: expected columns concept_id,degree")
        for row in reader:
            if row["concept_id"] in seen:
                raise LexiconError(f"{path}: duplicate judgment for {row['concept_id']!r}")
            seen.add(row["concept_id"])
            judgments.append(ExpertJudgment(row["concept_id"], row["degree"]))
    return judgments


def write_judgments_csv(judgments: Iterable[ExpertJudgment], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["concept_id", "degree"])
    for j in judgments:
        writer.writerow([j.concept_id, j.degree])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def precision_table_to_csv(rows: Sequence[dict[str, float | int]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "high", "high_medium", "any"])
    for row in rows:
        writer.writerow(
            [row["k"], f"{row['high']:.2f}", f"{row['high_medium']:.2f}", f"{row['any']:.2f}"]
        )
    return buf.getvalue()
