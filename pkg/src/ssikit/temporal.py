"""Day-level views of tagged concepts over the 31-day postsurgical window.

Builds per-concept frequency-by-day arrays split by outcome group, derives
day-level co-occurrence pairs (two concepts "co-occur" on a day when both
appear among that day's most frequent concepts), and summarizes three
periods (days 0-10, 11-21, 22-30) with top-5 concept totals.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .corpus import LABELS, Cohort
from .tagger import ConceptMention

WINDOW_DAYS = 31  # days 0..30 inclusive

PERIODS: tuple[tuple[str, int, int], ...] = (
    ("0-10", 0, 10),
    ("11-21", 11, 21),
    ("22-30", 22, 30),
)

DISTRIBUTION_CSV_HEADER = "group,concept_id,day,freq"
PAIRS_CSV_HEADER = "group,concept_a,days_a,concept_b,days_b,co_days"
PERIODS_CSV_HEADER = "group,period,rank,concept_id,total_freq"


class TemporalError(ValueError):
    """Invalid distribution or mention data."""


@dataclass(frozen=True)
class DayDistribution:
    group: str
    concept_id: str
    freq_by_day: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.freq_by_day) != WINDOW_DAYS:
            raise TemporalError(
                f"{self.concept_id}: freq_by_day must have {WINDOW_DAYS} entries"
            )
        if any(f < 0 for f in self.freq_by_day):
            raise TemporalError(f"{self.concept_id}: negative frequency")

    @property
    def total(self) -> int:
        return sum(self.freq_by_day)


@dataclass(frozen=True)
class CooccurrencePair:
    concept_a: str
    concept_b: str
    days_a: int
    days_b: int
    co_days: int

    def __post_init__(self) -> None:
        if not self.concept_a < self.concept_b:
            raise TemporalError(
                f"pair must be ordered concept_a < concept_b: {self.concept_a!r}, "
                f"{self.concept_b!r}"
            )
        if self.co_days > min(self.days_a, self.days_b) or self.days_a > WINDOW_DAYS \
                or self.days_b > WINDOW_DAYS:
            raise TemporalError(f"inconsistent pair counts: {self}")


@dataclass(frozen=True)
class PeriodSummary:
    group: str
    period: str
    top: tuple[tuple[str, int], ...]  # (concept_id, total freq), length <= 5

    def __post_init__(self) -> None:
        totals = [t for _, t in self.top]
        if any(a < b for a, b in zip(totals, totals[1:])):
            raise TemporalError(f"{self.period}: top frequencies must be non-increasing")


def day_frequencies(mentions: Iterable[ConceptMention], cohort: Cohort, group: str,
                    selected: Iterable[str]) -> list[DayDistribution]:
    """Mention-level frequency per day for each selected concept in one group.

    Mentions must already be window-filtered to days 0-30. Concepts never
    mentioned get an all-zero array; output is sorted by concept_id.
    """
    if group not in LABELS:
        raise TemporalError(f"unknown group {group!r}")
    concept_ids = sorted(set(selected))
    concept_row = {cid: i for i, cid in enumerate(concept_ids)}
    labels = cohort.labels
    rows = []
    cols = []
    for m in mentions:
        if not 0 <= m.day < WINDOW_DAYS:
            raise TemporalError(
                f"mention day {m.day} outside [0, {WINDOW_DAYS - 1}]; window-filter first"
            )
        if m.concept_id not in concept_row or labels.get(m.case_id) != group:
            continue
        rows.append(concept_row[m.concept_id])
        cols.append(m.day)
    counts = _kernels.count_matrix(
        np.asarray(rows, dtype=np.int64),
        np.asarray(cols, dtype=np.int64),
        len(concept_ids),
        WINDOW_DAYS,
    )
    return [
        DayDistribution(group=group, concept_id=cid,
                        freq_by_day=tuple(int(v) for v in counts[i]))
        for i, cid in enumerate(concept_ids)
    ]


def appeared_days(dist: DayDistribution) -> int:
    """Number of days on which the concept appeared at least once."""
    return sum(1 for f in dist.freq_by_day if f > 0)


def cooccurrence_pairs(dists: Sequence[DayDistribution], daily_top_n: int = 5,
                       all_pairs: bool = False) -> list[CooccurrencePair]:
    """Day-level co-occurrence among each day's most frequent concepts.

    Per day, the daily_top_n concepts with the highest nonzero frequency
    (ties lexicographic) are considered present together; every unordered
    pair among them gets one co-day. ``all_pairs`` lifts the top-n cut so any
    two concepts appearing the same day pair up. Output is sorted by co_days
    descending, then pair lexicographic; pairs that never co-occur are absent.
    """
    if daily_top_n < 2:
        raise TemporalError("daily_top_n must be >= 2")
    if len({d.group for d in dists}) > 1:
        raise TemporalError("distributions must belong to a single group")
    days_by_concept = {d.concept_id: appeared_days(d) for d in dists}
    co_days: dict[tuple[str, str], int] = {}
    for day in range(WINDOW_DAYS):
        present = [(d.concept_id, d.freq_by_day[day]) for d in dists
                   if d.freq_by_day[day] > 0]
        present.sort(key=lambda pair: (-pair[1], pair[0]))
        if not all_pairs:
            present = present[:daily_top_n]
        ids = sorted(cid for cid, _ in present)
        for a, b in combinations(ids, 2):
            co_days[(a, b)] = co_days.get((a, b), 0) + 1
    pairs = [
        CooccurrencePair(
            concept_a=a, concept_b=b,
            days_a=days_by_concept[a], days_b=days_by_concept[b],
            co_days=n,
        )
        for (a, b), n in co_days.items()
    ]
    pairs.sort(key=lambda p: (-p.co_days, p.concept_a, p.concept_b))
    return pairs


def period_summary(dists: Sequence[DayDistribution], group: str,
                   top_n: int = 5) -> list[PeriodSummary]:
    """Top concepts by summed frequency in each of the three periods.

    Zero totals are dropped, so sparse periods may list fewer than top_n
    concepts; ties break lexicographically.
    """
    summaries = []
    for period, lo, hi in PERIODS:
        totals = [
            (cid_total, d.concept_id)
            for d in dists
            if (cid_total := sum(d.freq_by_day[lo : hi + 1])) > 0
        ]
        totals.sort(key=lambda pair: (-pair[0], pair[1]))
        top = tuple((cid, total) for total, cid in totals[:top_n])
        summaries.append(PeriodSummary(group=group, period=period, top=top))
    return summaries


# -- CSV wire formats ---------------------------------------------------------

def distributions_to_csv(dists: Sequence[DayDistribution]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DISTRIBUTION_CSV_HEADER.split(","))
    for d in dists:
        for day, freq in enumerate(d.freq_by_day):
            writer.writerow([d.group, d.concept_id, day, freq])
    return buf.getvalue()


def write_distributions_csv(dists: Sequence[DayDistribution], path: str | Path) -> None:
    Path(path).write_text(distributions_to_csv(dists), encoding="utf-8", newline="\n")


def pairs_to_csv(pairs: Sequence[CooccurrencePair], group: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PAIRS_CSV_HEADER.split(","))
    for p in pairs:
        writer.writerow([group, p.concept_a, p.days_a, p.concept_b, p.days_b, p.co_days])
    return buf.getvalue()


def write_pairs_csv(pairs: Sequence[CooccurrencePair], group: str,
                    path: str | Path) -> None:
    Path(path).write_text(pairs_to_csv(pairs, group), encoding="utf-8", newline="\n")


def periods_to_csv(summaries: Sequence[PeriodSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PERIODS_CSV_HEADER.split(","))
    for s in summaries:
        for rank, (cid, total) in enumerate(s.top, start=1):
            writer.writerow([s.group, s.period, rank, cid, total])
    return buf.getvalue()


def write_periods_csv(summaries: Sequence[PeriodSummary], path: str | Path) -> None:
    Path(path).write_text(periods_to_csv(summaries), encoding="utf-8", newline="\n")


def read_pairs_csv(path: str | Path) -> list[tuple[str, CooccurrencePair]]:
    """Read pairs back as (group, pair) tuples."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                (
                    row["group"],
                    CooccurrencePair(
                        concept_a=row["concept_a"], concept_b=row["concept_b"],
                        days_a=int(row["days_a"]), days_b=int(row["days_b"]),
                        co_days=int(row["co_days"]),
                    ),
                )
            )
    return out
