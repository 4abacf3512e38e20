"""Cohort data model, JSONL ingestion, postsurgical-day arithmetic, and a
seeded synthetic-cohort generator.

A cohort is a set of surgical cases (each with a surgery date and a binary
SSI/NonSSI outcome label) plus dated clinical notes made of heading/text
sections. The synthetic generator plants known concept mentions with
per-label probabilities and records the ground truth in a sidecar, so that
downstream tagging, ranking, and classification can be validated end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SSI = "SSI"
NONSSI = "NonSSI"
LABELS = (SSI, NONSSI)

# Day 0 is the surgery date; the one-month window spans 31 day indices.
DEFAULT_WINDOW = (0, 30)

# The six note sections whose concepts are kept by the default filter config.
DEFAULT_ALLOWED_SECTIONS = (
    "Hospital Summary",
    "Impression/Report/Plan",
    "Subjective",
    "Diagnosis",
    "Secondary Diagnoses",
    "Problem Oriented Hospital Course",
)

# Sections generated into synthetic notes that the default filter drops.
EXCLUDED_SECTIONS = (
    "Family History",
    "Medications",
    "Allergies",
    "Review of Systems",
)


class CohortError(ValueError):
    """Malformed cohort file or violated cohort invariant."""


@dataclass(frozen=True)
class Section:
    heading: str
    text: str


@dataclass(frozen=True)
class ClinicalNote:
    note_id: str
    case_id: str
    note_date: date
    sections: tuple[Section, ...]


@dataclass(frozen=True)
class SurgicalCase:
    case_id: str
    surgery_date: date
    label: str


@dataclass(frozen=True)
class Cohort:
    """Immutable case/note collection; share freely across threads."""

    cases: tuple[SurgicalCase, ...]
    notes: tuple[ClinicalNote, ...]

    @cached_property
    def case_index(self) -> dict[str, SurgicalCase]:
        return {c.case_id: c for c in self.cases}

    @cached_property
    def labels(self) -> dict[str, str]:
        return {c.case_id: c.label for c in self.cases}

    def notes_for(self, case_id: str) -> list[ClinicalNote]:
        return [n for n in self.notes if n.case_id == case_id]


@dataclass(frozen=True)
class CohortStats:
    case_count: int
    positive_count: int
    note_count: int
    notes_per_day: dict[int, int]


@dataclass(frozen=True)
class PlantedMention:
    """Sidecar ground-truth record for one generated mention."""

    note_id: str
    term: str
    negated: bool
    family: bool
    char_start: int
    section_heading: str


def _validate(cases: Sequence[SurgicalCase], notes: Sequence[ClinicalNote]) -> None:
    seen_cases: set[str] = set()
    for c in cases:
        if c.case_id in seen_cases:
            raise CohortError(f"duplicate case_id {c.case_id!r}")
        seen_cases.add(c.case_id)
        if c.label not in LABELS:
            raise CohortError(f"case {c.case_id!r}: label must be one of {LABELS}, got {c.label!r}")
    seen_notes: set[str] = set()
    for n in notes:
        if n.note_id in seen_notes:
            raise CohortError(f"duplicate note_id {n.note_id!r}")
        seen_notes.add(n.note_id)
        if n.case_id not in seen_cases:
            raise CohortError(f"note {n.note_id!r} references unknown case {n.case_id!r}")
        if not n.sections:
            raise CohortError(f"note {n.note_id!r} has no sections")


def make_cohort(cases: Iterable[SurgicalCase], notes: Iterable[ClinicalNote]) -> Cohort:
    """Build a validated cohort (duplicate ids and dangling case refs raise)."""
    cases = tuple(cases)
    notes = tuple(notes)
    _validate(cases, notes)
    return Cohort(cases=cases, notes=notes)


def _parse_date(value: str, where: str) -> date:
    try:
        return date.fromisoformat(value)
    except (TypeError, ValueError) as exc:
        raise CohortError(f"{where}: bad date {value!r}") from exc


def load_cohort(path: str | Path) -> Cohort:
    """Read a JSONL cohort file (one ``case`` or ``note`` record per line).

    Record order is free; referential validation runs as a second pass.
    Malformed lines raise ``CohortError`` naming the line number.
    """
    cases: list[SurgicalCase] = []
    notes: list[ClinicalNote] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CohortError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            kind = rec.get("kind")
            try:
                if kind == "case":
                    cases.append(
                        SurgicalCase(
                            case_id=str(rec["case_id"]),
                            surgery_date=_parse_date(rec["surgery_date"], f"{path}:{lineno}"),
                            label=rec["label"],
                        )
                    )
                elif kind == "note":
                    sections = tuple(
                        Section(heading=str(s["heading"]), text=str(s["text"]))
                        for s in rec["sections"]
                    )
                    notes.append(
                        ClinicalNote(
                            note_id=str(rec["note_id"]),
                            case_id=str(rec["case_id"]),
                            note_date=_parse_date(rec["note_date"], f"{path}:{lineno}"),
                            sections=sections,
                        )
                    )
                else:
                    raise CohortError(f"{path}:{lineno}: unknown record kind {kind!r}")
            except KeyError as exc:
                raise CohortError(f"{path}:{lineno}: missing field {exc}") from exc
    try:
        return make_cohort(cases, notes)
    except CohortError as exc:
        raise CohortError(f"{path}: {exc}") from exc


def cohort_to_jsonl(cohort: Cohort) -> str:
    """Serialize a cohort to its JSONL wire format (cases first, then notes)."""
    lines = []
    for c in cohort.cases:
        lines.append(
            json.dumps(
                {
                    "kind": "case",
                    "case_id": c.case_id,
                    "surgery_date": c.surgery_date.isoformat(),
                    "label": c.label,
                },
                ensure_ascii=False,
            )
        )
    for n in cohort.notes:
        lines.append(
            json.dumps(
                {
                    "kind": "note",
                    "note_id": n.note_id,
                    "case_id": n.case_id,
                    "note_date": n.note_date.isoformat(),
                    "sections": [{"heading": s.heading, "text": s.text} for s in n.sections],
                },
                ensure_ascii=False,
            )
        )
    return "".join(line + "\n" for line in lines)


def write_cohort(cohort: Cohort, path: str | Path) -> None:
    Path(path).write_text(cohort_to_jsonl(cohort), encoding="utf-8", newline="\n")


def sidecar_to_jsonl(records: Sequence[PlantedMention]) -> str:
    lines = []
    for r in sorted(records, key=lambda r: (r.note_id, r.section_heading, r.char_start)):
        lines.append(
            json.dumps(
                {
                    "note_id": r.note_id,
                    "term": r.term,
                    "planted": True,
                    "negated": r.negated,
                    "family": r.family,
                    "char_start": r.char_start,
                    "section_heading": r.section_heading,
                },
                ensure_ascii=False,
            )
        )
    return "".join(line + "\n" for line in lines)


def write_sidecar(records: Sequence[PlantedMention], path: str | Path) -> None:
    Path(path).write_text(sidecar_to_jsonl(records), encoding="utf-8", newline="\n")


def load_sidecar(path: str | Path) -> list[PlantedMention]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            records.append(
                PlantedMention(
                    note_id=rec["note_id"],
                    term=rec["term"],
                    negated=bool(rec["negated"]),
                    family=bool(rec["family"]),
                    char_start=int(rec["char_start"]),
                    section_heading=rec["section_heading"],
                )
            )
    return records


def postsurgical_day(note: ClinicalNote, case: SurgicalCase) -> int:
    """Whole-day offset of the note from the surgery date (negative = before)."""
    return (note.note_date - case.surgery_date).days


def window_filter(cohort: Cohort, min_day: int = 0, max_day: int = 30) -> Cohort:
    """Keep every case but only notes whose postsurgical day is in [min_day, max_day]."""
    if min_day > max_day:
        raise ValueError(f"min_day {min_day} > max_day {max_day}")
    index = cohort.case_index
    kept = tuple(
        n for n in cohort.notes if min_day <= postsurgical_day(n, index[n.case_id]) <= max_day
    )
    return Cohort(cases=cohort.cases, notes=kept)


def cohort_stats(cohort: Cohort) -> CohortStats:
    index = cohort.case_index
    per_day: dict[int, int] = {}
    for n in cohort.notes:
        d = postsurgical_day(n, index[n.case_id])
        per_day[d] = per_day.get(d, 0) + 1
    return CohortStats(
        case_count=len(cohort.cases),
        positive_count=sum(1 for c in cohort.cases if c.label == SSI),
        note_count=len(cohort.notes),
        notes_per_day=dict(sorted(per_day.items())),
    )


# ---------------------------------------------------------------------------
# Synthetic cohort generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConceptSpec:
    term: str
    p_positive: float
    p_negative: float


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int
    n_cases: int
    n_positive: int
    signal_concepts: tuple[ConceptSpec, ...]
    distractor_concepts: tuple[ConceptSpec, ...]
    negation_rate: float = 0.0
    family_mention_rate: float = 0.0
    notes_per_case_range: tuple[int, int] = (1, 3)
    day_range: tuple[int, int] = (0, 30)

    def validate(self) -> None:
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.n_cases < 1 or not 0 <= self.n_positive <= self.n_cases:
            raise ValueError("need 0 <= n_positive <= n_cases and n_cases >= 1")
        for cs in self.signal_concepts + self.distractor_concepts:
            if not cs.term or cs.term != " ".join(cs.term.lower().split()):
                raise ValueError(f"term {cs.term!r} must be lowercase and single-spaced")
            if not (0.0 <= cs.p_positive <= 1.0 and 0.0 <= cs.p_negative <= 1.0):
                raise ValueError(f"term {cs.term!r}: probabilities must lie in [0, 1]")
        terms = [cs.term for cs in self.signal_concepts + self.distractor_concepts]
        if len(set(terms)) != len(terms):
            raise ValueError("concept terms must be unique")
        if not 0.0 <= self.negation_rate <= 1.0 or not 0.0 <= self.family_mention_rate <= 1.0:
            raise ValueError("rates must lie in [0, 1]")
        if self.negation_rate + self.family_mention_rate > 1.0:
            raise ValueError("negation_rate + family_mention_rate must not exceed 1")
        lo, hi = self.notes_per_case_range
        if lo < 1 or lo > hi:
            raise ValueError("notes_per_case_range must satisfy 1 <= lo <= hi")
        lo, hi = self.day_range
        if lo > hi or lo < 0 or hi > 30:
            raise ValueError("day_range must lie within [0, 30]")

    @property
    def all_concepts(self) -> tuple[ConceptSpec, ...]:
        return self.signal_concepts + self.distractor_concepts

    @staticmethod
    def from_json(path: str | Path) -> "SyntheticSpec":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))

        def concepts(key: str) -> tuple[ConceptSpec, ...]:
            return tuple(
                ConceptSpec(term=c["term"], p_positive=c["p_positive"], p_negative=c["p_negative"])
                for c in raw.get(key, [])
            )

        return SyntheticSpec(
            seed=int(raw["seed"]),
            n_cases=int(raw["n_cases"]),
            n_positive=int(raw["n_positive"]),
            signal_concepts=concepts("signal_concepts"),
            distractor_concepts=concepts("distractor_concepts"),
            negation_rate=float(raw.get("negation_rate", 0.0)),
            family_mention_rate=float(raw.get("family_mention_rate", 0.0)),
            notes_per_case_range=tuple(raw.get("notes_per_case_range", (1, 3))),  # type: ignore[arg-type]
            day_range=tuple(raw.get("day_range", (0, 30))),  # type: ignore[arg-type]
        )


_FILLER_SENTENCES = (
    "patient resting comfortably",
    "vital signs reviewed and stable",
    "continue current plan of care",
    "tolerating oral intake well",
    "ambulating in the hallway",
    "discussed plan with care team",
    "labs reviewed this morning",
    "follow up scheduled next week",
    "overall status unchanged today",
    "will reassess at next visit",
)

_MENTION_TEMPLATES = (
    "{term} noted on exam",
    "patient reports {term}",
    "assessment shows {term}",
    "{term} observed today",
)
_NEGATION_TEMPLATE = "no evidence of {term}"
_FAMILY_TEMPLATE = "mother had {term}"

# Chance that a planted case/term pair also drops a decoy mention into an
# excluded section of the same note (exercises the section filter without
# changing per-case presence).
_EXCLUDED_DECOY_RATE = 0.2


def _term_tokens(concepts: Iterable[ConceptSpec]) -> set[str]:
    toks: set[str] = set()
    for c in concepts:
        toks.update(c.term.split())
    return toks


@dataclass
class _SectionDraft:
    heading: str
    sentences: list[str] = field(default_factory=list)
    # (sentence index, offset within sentence, term, negated, family)
    planted: list[tuple[int, int, str, bool, bool]] = field(default_factory=list)

    def add_plain(self, sentence: str) -> None:
        self.sentences.append(sentence)

    def add_mention(self, template: str, term: str, negated: bool, family: bool) -> None:
        sentence = template.format(term=term)
        offset = template.index("{term}")
        self.planted.append((len(self.sentences), offset, term, negated, family))
        self.sentences.append(sentence)

    def render(self) -> tuple[str, list[tuple[int, str, bool, bool]]]:
        """Join sentences and map planted offsets into the final text.

        The final text capitalizes each sentence's first letter, which keeps
        offsets valid for both the raw and the lowercase-normalized form.
        """
        starts: list[int] = []
        cursor = 0
        rendered = []
        for s in self.sentences:
            starts.append(cursor)
            rendered.append(s[:1].upper() + s[1:])
            cursor += len(s) + 2  # ". " separator
        text = ". ".join(rendered) + "." if rendered else ""
        mentions = [
            (starts[i] + off, term, neg, fam) for (i, off, term, neg, fam) in self.planted
        ]
        return text, mentions


def generate_synthetic(spec: SyntheticSpec) -> tuple[Cohort, list[PlantedMention]]:
    """Generate a deterministic cohort plus its ground-truth sidecar.

    Per case and concept, presence is a single Bernoulli draw at the
    label-specific probability; a present concept materializes as one or two
    mentions in allowed sections (wrapped in a negation or family template at
    the configured rates). All randomness comes from the spec seed, so equal
    specs produce byte-identical files.
    """
    spec.validate()
    rng = np.random.default_rng(np.random.PCG64(spec.seed))

    term_toks = _term_tokens(spec.all_concepts)
    fillers = [
        s for s in _FILLER_SENTENCES if not any(tok in term_toks for tok in s.split())
    ] or ["reviewed"]

    positive_idx = set(rng.permutation(spec.n_cases)[: spec.n_positive].tolist())
    base = date(2008, 1, 1)
    width = max(5, len(str(spec.n_cases)))

    cases: list[SurgicalCase] = []
    drafts: dict[str, tuple[date, list[_SectionDraft]]] = {}  # note_id -> (date, sections)
    note_ids_by_case: list[list[str]] = []

    lo_n, hi_n = spec.notes_per_case_range
    lo_d, hi_d = spec.day_range
    for i in range(spec.n_cases):
        case_id = f"case{i:0{width}d}"
        label = SSI if i in positive_idx else NONSSI
        surgery = base + timedelta(days=int(rng.integers(0, 2000)))
        cases.append(SurgicalCase(case_id=case_id, surgery_date=surgery, label=label))

        note_ids: list[str] = []
        n_notes = int(rng.integers(lo_n, hi_n + 1))
        for j in range(n_notes):
            note_id = f"{case_id}-n{j}"
            day = int(rng.integers(lo_d, hi_d + 1))
            n_allowed = 1 + int(rng.random() < 0.5)
            headings = [
                DEFAULT_ALLOWED_SECTIONS[k]
                for k in sorted(rng.choice(len(DEFAULT_ALLOWED_SECTIONS), size=n_allowed, replace=False))
            ]
            if rng.random() < 0.5:
                headings.append(EXCLUDED_SECTIONS[int(rng.integers(0, len(EXCLUDED_SECTIONS)))])
            sections = [_SectionDraft(heading=h) for h in headings]
            for sec in sections:
                for _ in range(1 + int(rng.integers(0, 2))):
                    sec.add_plain(fillers[int(rng.integers(0, len(fillers)))])
            drafts[note_id] = (surgery + timedelta(days=day), sections)
            note_ids.append(note_id)
        note_ids_by_case.append(note_ids)

    allowed_set = set(DEFAULT_ALLOWED_SECTIONS)
    for concept in spec.all_concepts:
        for i, case in enumerate(cases):
            p = concept.p_positive if case.label == SSI else concept.p_negative
            if rng.random() >= p:
                continue
            n_mentions = 1 + int(rng.random() < 0.35)
            for _ in range(n_mentions):
                note_id = note_ids_by_case[i][int(rng.integers(0, len(note_ids_by_case[i])))]
                _, sections = drafts[note_id]
                allowed = [s for s in sections if s.heading in allowed_set]
                target = allowed[int(rng.integers(0, len(allowed)))]
                u = rng.random()
                if u < spec.negation_rate:
                    target.add_mention(_NEGATION_TEMPLATE, concept.term, True, False)
                elif u < spec.negation_rate + spec.family_mention_rate:
                    target.add_mention(_FAMILY_TEMPLATE, concept.term, False, True)
                else:
                    tpl = _MENTION_TEMPLATES[int(rng.integers(0, len(_MENTION_TEMPLATES)))]
                    target.add_mention(tpl, concept.term, False, False)
                excluded = [s for s in sections if s.heading not in allowed_set]
                if excluded and rng.random() < _EXCLUDED_DECOY_RATE:
                    excluded[0].add_mention(_MENTION_TEMPLATES[0], concept.term, False, False)

    notes: list[ClinicalNote] = []
    sidecar: list[PlantedMention] = []
    for i, case in enumerate(cases):
        for note_id in note_ids_by_case[i]:
            note_date, sections = drafts[note_id]
            rendered = []
            for sec in sections:
                text, planted = sec.render()
                rendered.append(Section(heading=sec.heading, text=text))
                for char_start, term, negated, family in planted:
                    sidecar.append(
                        PlantedMention(
                            note_id=note_id,
                            term=term,
                            negated=negated,
                            family=family,
                            char_start=char_start,
                            section_heading=sec.heading,
                        )
                    )
            notes.append(
                ClinicalNote(
                    note_id=note_id, case_id=case.case_id, note_date=note_date,
                    sections=tuple(rendered),
                )
            )
    return make_cohort(cases, notes), sidecar
