"""Dictionary tagging of sectioned notes with negation and experiencer rules.

Section text is lowercased and whitespace-collapsed, then matched against a
term dictionary using leftmost-longest lookup at token boundaries. Each hit
gets a negation flag (trigger phrase within a token window, bounded by
sentence breaks) and an experiencer attribute (patient unless a family
trigger precedes it in the same sentence). The filtered view keeps mentions
that sit in an allowed section, are not negated, and concern the patient.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import DEFAULT_ALLOWED_SECTIONS, Cohort, postsurgical_day

EXPERIENCER_PATIENT = "patient"
EXPERIENCER_OTHER = "other"

MENTION_CSV_HEADER = (
    "case_id,note_id,day,section,concept_id,char_start,char_end,negated,experiencer"
)

_WS_RE = re.compile(r"\s+")
_TOKEN_RE = re.compile(r"\w+")
_SENTENCE_BREAKS = frozenset(".!?;")


class DictionaryError(ValueError):
    """Malformed dictionary entry or file."""


def normalize(text: str) -> str:
    """Lowercase and collapse every whitespace run to a single space.

    Offsets in mentions refer to positions in this normalized string.
    """
    return _WS_RE.sub(" ", text.lower())


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int
    sentence: int


def tokenize(text: str) -> list[Token]:
    """Word tokens with offsets and a sentence index (split on . ! ? ;)."""
    tokens = []
    sentence = 0
    cursor = 0
    for m in _TOKEN_RE.finditer(text):
        for ch in text[cursor : m.start()]:
            if ch in _SENTENCE_BREAKS:
                sentence += 1
        cursor = m.start()
        tokens.append(Token(text=m.group(), start=m.start(), end=m.end(), sentence=sentence))
    return tokens


class Dictionary:
    """Immutable term -> concept_id lookup with a token trie for matching.

    Terms must be non-empty, lowercase, and single-space-normalized; several
    terms may share one concept_id (synonyms), but a term appears once.
    """

    def __init__(self, entries: Iterable[tuple[str, str]]):
        term_to_concept: dict[str, str] = {}
        for term, concept_id in entries:
            if not term or term != " ".join(term.lower().split()):
                raise DictionaryError(
                    f"term {term!r} must be non-empty, lowercase, single-spaced"
                )
            if term in term_to_concept:
                raise DictionaryError(f"duplicate term {term!r}")
            if not concept_id:
                raise DictionaryError(f"term {term!r} has empty concept_id")
            term_to_concept[term] = concept_id
        self._term_to_concept = term_to_concept
        # Token trie; the None key marks a terminal and holds (term, concept).
        trie: dict = {}
        for term, concept_id in term_to_concept.items():
            node = trie
            for tok in term.split(" "):
                node = node.setdefault(tok, {})
            node[None] = (term, concept_id)
        self._trie = trie

    @property
    def terms(self) -> dict[str, str]:
        return dict(self._term_to_concept)

    def __len__(self) -> int:
        return len(self._term_to_concept)

    def __contains__(self, term: str) -> bool:
        return term in self._term_to_concept

    @staticmethod
    def from_file(path: str | Path) -> "Dictionary":
        """Load ``term<TAB>concept_id`` lines; '#' lines are comments."""
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DictionaryError(f"{path}:{lineno}: expected 'term<TAB>concept_id'")
                entries.append((parts[0], parts[1]))
        return Dictionary(entries)

    @staticmethod
    def from_terms(terms: Iterable[str]) -> "Dictionary":
        """Dictionary where each term is its own concept_id."""
        return Dictionary((t, t) for t in terms)


@dataclass(frozen=True)
class RawMatch:
    concept_id: str
    term: str
    char_start: int
    char_end: int
    first_token: int
    last_token: int


def match_concepts(section_text: str, dictionary: Dictionary,
                   tokens: list[Token] | None = None) -> list[RawMatch]:
    """Leftmost-longest non-overlapping dictionary lookup at token boundaries.

    At each token the longest term anchored there wins and matching resumes
    after its end; multi-token terms require exactly one space between
    adjacent tokens, so the text must already be normalized.
    """
    if tokens is None:
        tokens = tokenize(section_text)
    trie = dictionary._trie
    matches: list[RawMatch] = []
    i = 0
    n = len(tokens)
    while i < n:
        node = trie.get(tokens[i].text)
        best: tuple[int, str, str] | None = None  # (last token index, term, concept)
        j = i
        while node is not None:
            hit = node.get(None)
            if hit is not None:
                best = (j, hit[0], hit[1])
            j += 1
            if j >= n or tokens[j].start != tokens[j - 1].end + 1 \
                    or section_text[tokens[j - 1].end] != " ":
                break
            node = node.get(tokens[j].text)
        if best is None:
            i += 1
            continue
        last, term, concept_id = best
        matches.append(
            RawMatch(
                concept_id=concept_id,
                term=term,
                char_start=tokens[i].start,
                char_end=tokens[last].end,
                first_token=i,
                last_token=last,
            )
        )
        i = last + 1
    return matches


@dataclass(frozen=True)
class FilterConfig:
    """Heuristic filter configuration (all triggers are lowercase phrases)."""

    allowed_sections: tuple[str, ...] = DEFAULT_ALLOWED_SECTIONS
    negation_pre_triggers: tuple[str, ...] = (
        "no", "not", "without", "denies", "denied",
        "negative for", "no evidence of", "ruled out", "free of",
    )
    negation_post_triggers: tuple[str, ...] = ("was ruled out", "is ruled out")
    negation_window: int = 5
    family_triggers: tuple[str, ...] = (
        "mother", "father", "brother", "sister", "family history", "family hx",
    )
    family_window: int = 8

    def __post_init__(self) -> None:
        if self.negation_window < 1 or self.family_window < 1:
            raise ValueError("trigger windows must be >= 1")

    def section_allowed(self, heading: str) -> bool:
        return heading.strip().casefold() in {
            h.strip().casefold() for h in self.allowed_sections
        }

    @staticmethod
    def from_json(path: str | Path) -> "FilterConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return FilterConfig(
            allowed_sections=tuple(raw["allowed_sections"]),
            negation_pre_triggers=tuple(raw["negation_pre_triggers"]),
            negation_post_triggers=tuple(raw["negation_post_triggers"]),
            negation_window=int(raw["negation_window"]),
            family_triggers=tuple(raw["family_triggers"]),
            family_window=int(raw["family_window"]),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "allowed_sections": list(self.allowed_sections),
                "negation_pre_triggers": list(self.negation_pre_triggers),
                "negation_post_triggers": list(self.negation_post_triggers),
                "negation_window": self.negation_window,
                "family_triggers": list(self.family_triggers),
                "family_window": self.family_window,
            },
            indent=2,
        )


def _trigger_spans(tokens: Sequence[Token], triggers: Sequence[str]) -> list[tuple[int, int]]:
    """All (first, last) token-index spans where a trigger phrase occurs."""
    spans = []
    phrases = [t.split(" ") for t in triggers]
    for i in range(len(tokens)):
        for phrase in phrases:
            j = i + len(phrase)
            if j > len(tokens):
                continue
            if all(tokens[i + k].text == phrase[k] for k in range(len(phrase))):
                spans.append((i, j - 1))
    return spans


def detect_negation(mention: RawMatch, tokens: Sequence[Token], config: FilterConfig) -> bool:
    """True iff a negation trigger sits within the token window of the mention.

    A pre-trigger must end at most ``negation_window`` tokens before the
    mention's first token; a post-trigger must begin at most that many tokens
    after its last token. Triggers in another sentence never apply.
    """
    m_first, m_last = mention.first_token, mention.last_token
    sent_first = tokens[m_first].sentence
    sent_last = tokens[m_last].sentence
    for t_first, t_last in _trigger_spans(tokens, config.negation_pre_triggers):
        if t_last < m_first and m_first - t_last <= config.negation_window \
                and tokens[t_last].sentence == sent_first:
            return True
    for t_first, t_last in _trigger_spans(tokens, config.negation_post_triggers):
        if t_first > m_last and t_first - m_last <= config.negation_window \
                and tokens[t_first].sentence == sent_last:
            return True
    return False


def attribute_experiencer(mention: RawMatch, tokens: Sequence[Token],
                          config: FilterConfig) -> str:
    """"other" iff a family trigger precedes the mention in-window and in-sentence."""
    m_first = mention.first_token
    sent = tokens[m_first].sentence
    for t_first, t_last in _trigger_spans(tokens, config.family_triggers):
        if t_last < m_first and m_first - t_last <= config.family_window \
                and tokens[t_last].sentence == sent:
            return EXPERIENCER_OTHER
    return EXPERIENCER_PATIENT


@dataclass(frozen=True)
class ConceptMention:
    concept_id: str
    matched_text: str
    note_id: str
    case_id: str
    section_heading: str
    day: int
    char_start: int
    char_end: int
    negated: bool
    experiencer: str


def tag_note_section(section_text: str, dictionary: Dictionary,
                     config: FilterConfig) -> list[tuple[RawMatch, bool, str]]:
    """Match one section (already normalized) and annotate each hit."""
    tokens = tokenize(section_text)
    out = []
    for m in match_concepts(section_text, dictionary, tokens):
        negated = detect_negation(m, tokens, config)
        experiencer = attribute_experiencer(m, tokens, config)
        out.append((m, negated, experiencer))
    return out


def tag_cohort(cohort: Cohort, dictionary: Dictionary,
               config: FilterConfig | None = None) -> list[ConceptMention]:
    """Tag every section of every note; returns the full annotated view.

    All sections are matched (section filtering happens in
    ``apply_filters``), and the result is sorted by (case_id, note_id,
    section order, char_start) so it does not depend on input note order.
    """
    if config is None:
        config = FilterConfig()
    index = cohort.case_index
    mentions: list[tuple[tuple, ConceptMention]] = []
    for note in cohort.notes:
        case = index[note.case_id]
        day = postsurgical_day(note, case)
        for sec_idx, section in enumerate(note.sections):
            text = normalize(section.text)
            for m, negated, experiencer in tag_note_section(text, dictionary, config):
                mention = ConceptMention(
                    concept_id=m.concept_id,
                    matched_text=text[m.char_start : m.char_end],
                    note_id=note.note_id,
                    case_id=note.case_id,
                    section_heading=section.heading,
                    day=day,
                    char_start=m.char_start,
                    char_end=m.char_end,
                    negated=negated,
                    experiencer=experiencer,
                )
                mentions.append(((note.case_id, note.note_id, sec_idx, m.char_start), mention))
    mentions.sort(key=lambda pair: pair[0])
    return [m for _, m in mentions]


def apply_filters(mentions: Iterable[ConceptMention],
                  config: FilterConfig | None = None) -> list[ConceptMention]:
    """Keep mentions in allowed sections, not negated, experienced by the patient."""
    if config is None:
        config = FilterConfig()
    return [
        m for m in mentions
        if config.section_allowed(m.section_heading)
        and not m.negated
        and m.experiencer == EXPERIENCER_PATIENT
    ]


# -- mention CSV wire format -------------------------------------------------

def mentions_to_csv(mentions: Iterable[ConceptMention]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MENTION_CSV_HEADER.split(","))
    for m in mentions:
        writer.writerow(
            [
                m.case_id, m.note_id, m.day, m.section_heading, m.concept_id,
                m.char_start, m.char_end,
                "true" if m.negated else "false", m.experiencer,
            ]
        )
    return buf.getvalue()


def write_mentions_csv(mentions: Iterable[ConceptMention], path: str | Path) -> None:
    Path(path).write_text(mentions_to_csv(mentions), encoding="utf-8", newline="\n")


def read_mentions_csv(path: str | Path) -> list[ConceptMention]:
    """Read mentions back; matched_text is not stored in the CSV."""
    mentions = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            mentions.append(
                ConceptMention(
                    concept_id=row["concept_id"],
                    matched_text="",
                    note_id=row["note_id"],
                    case_id=row["case_id"],
                    section_heading=row["section"],
                    day=int(row["day"]),
                    char_start=int(row["char_start"]),
                    char_end=int(row["char_end"]),
                    negated=row["negated"] == "true",
                    experiencer=row["experiencer"],
                )
            )
    return mentions
