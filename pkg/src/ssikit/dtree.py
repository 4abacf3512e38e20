"""Decision-tree induction over binary case features, with cross-validation.

Trees are grown greedily on information gain (ties to the lowest attribute
index, each attribute used at most once per path), with a minimum-leaf-size
rule that rejects splits producing undersized children. Pruning is bottom-up
subtree replacement driven by the one-sided pessimistic error estimate at a
given confidence. Evaluation is stratified k-fold cross-validation where
concept features are re-selected inside each training split; a fixed set of
expert regex features is the baseline.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Sequence, Union

import numpy as np

from . import _kernels
from .corpus import LABELS, NONSSI, SSI, Cohort, postsurgical_day
from .lexicon import count_contingency, rank_concepts
from .tagger import ConceptMention, FilterConfig

KIND_CONCEPT = "concept"
KIND_REGEX = "regex"

FEATURES_PMI = "pmi"
FEATURES_EXPERT = "expert"

REPORT_CSV_HEADER = "feature_source,k,fold,tp,fp,fn,tn,precision,recall,f1"


class DTreeError(ValueError):
    """Invalid feature spec, instance data, or tree construction input."""


# -- feature specs and instances ----------------------------------------------

@dataclass(frozen=True)
class FeatureSpec:
    """One binary case feature: concept presence or a regex over note text."""

    kind: str
    id: str
    concept_id: str | None = None
    pattern: str | None = None

    def __post_init__(self) -> None:
        if self.kind == KIND_CONCEPT:
            if not self.concept_id:
                raise DTreeError(f"feature {self.id!r}: concept_id required")
        elif self.kind == KIND_REGEX:
            if not self.pattern:
                raise DTreeError(f"feature {self.id!r}: pattern required")
            try:
                re.compile(self.pattern)
            except re.error as exc:
                raise DTreeError(f"feature {self.id!r}: bad pattern: {exc}") from exc
        else:
            raise DTreeError(f"feature {self.id!r}: unknown kind {self.kind!r}")


def concept_features(concept_ids: Iterable[str]) -> list[FeatureSpec]:
    return [
        FeatureSpec(kind=KIND_CONCEPT, id=cid, concept_id=cid) for cid in concept_ids
    ]


def load_feature_specs(path: str | Path) -> list[FeatureSpec]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise DTreeError(f"{path}: expected a JSON list of feature specs")
    specs = []
    for rec in raw:
        specs.append(
            FeatureSpec(
                kind=rec["kind"],
                id=rec["id"],
                concept_id=rec.get("concept_id"),
                pattern=rec.get("pattern"),
            )
        )
    return specs


def save_feature_specs(specs: Sequence[FeatureSpec], path: str | Path) -> None:
    records = []
    for s in specs:
        rec: dict[str, str] = {"kind": s.kind, "id": s.id}
        if s.concept_id is not None:
            rec["concept_id"] = s.concept_id
        if s.pattern is not None:
            rec["pattern"] = s.pattern
        records.append(rec)
    Path(path).write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8",
                          newline="\n")


@dataclass(frozen=True)
class Instance:
    case_id: str
    features: tuple[bool, ...]
    label: str


def build_instances(cohort: Cohort, mentions: Iterable[ConceptMention],
                    feature_specs: Sequence[FeatureSpec],
                    filters: FilterConfig | None = None,
                    min_day: int = 0, max_day: int = 30) -> list[Instance]:
    """One instance per case, features in spec order, sorted by case_id.

    Concept features are true when the case has at least one of the given
    (already filtered) mentions of the concept. Regex features are true when
    the pattern matches the lowercased raw text of any allowed section of any
    in-window note of the case.
    """
    if filters is None:
        filters = FilterConfig()
    present: set[tuple[str, str]] = set()
    for m in mentions:
        present.add((m.case_id, m.concept_id))

    regex_specs = [(i, re.compile(s.pattern)) for i, s in enumerate(feature_specs)
                   if s.kind == KIND_REGEX]
    regex_hits: dict[str, set[int]] = {}
    if regex_specs:
        index = cohort.case_index
        for note in cohort.notes:
            day = postsurgical_day(note, index[note.case_id])
            if not min_day <= day <= max_day:
                continue
            hits = regex_hits.setdefault(note.case_id, set())
            remaining = [(i, rx) for i, rx in regex_specs if i not in hits]
            if not remaining:
                continue
            for section in note.sections:
                if not filters.section_allowed(section.heading):
                    continue
                text = section.text.lower()
                for i, rx in remaining:
                    if i not in hits and rx.search(text):
                        hits.add(i)

    instances = []
    for case in sorted(cohort.cases, key=lambda c: c.case_id):
        values = []
        for i, spec in enumerate(feature_specs):
            if spec.kind == KIND_CONCEPT:
                values.append((case.case_id, spec.concept_id) in present)
            else:
                values.append(i in regex_hits.get(case.case_id, ()))
        instances.append(
            Instance(case_id=case.case_id, features=tuple(values), label=case.label)
        )
    return instances


# -- tree model ----------------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    label: str
    class_counts: tuple[int, int]  # (n positive, n negative)


@dataclass(frozen=True)
class Internal:
    attribute_index: int
    false_child: "TreeNode"
    true_child: "TreeNode"


TreeNode = Union[Leaf, Internal]


def classify(tree: TreeNode, features: Sequence[bool]) -> str:
    node = tree
    while isinstance(node, Internal):
        node = node.true_child if features[node.attribute_index] else node.false_child
    return node.label


def node_count(tree: TreeNode) -> int:
    if isinstance(tree, Leaf):
        return 1
    return 1 + node_count(tree.false_child) + node_count(tree.true_child)


def tree_depth(tree: TreeNode) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(tree_depth(tree.false_child), tree_depth(tree.true_child))


# -- entropy and information gain -----------------------------------------------

def entropy(class_counts: Sequence[float]) -> float:
    """Shannon entropy in bits of a count vector; empty or pure sets give 0."""
    if any(c < 0 for c in class_counts):
        raise DTreeError("class counts must be non-negative")
    total = sum(class_counts)
    if total == 0:
        return 0.0
    h = 0.0
    for c in class_counts:
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return h


def gains_from_counts(counts: np.ndarray) -> np.ndarray:
    """Information gain from split-count rows; shared by all gain callers.

    counts[..., 4] holds (value=0 & neg, value=0 & pos, value=1 & neg,
    value=1 & pos) per attribute. Empty nodes give gain 0.
    """
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    rows = counts.reshape(-1, 4)
    return _kernels.split_gains(rows).reshape(counts.shape[:-1])


def _encode_instances(instances: Sequence[Instance]) -> tuple[np.ndarray, np.ndarray]:
    if not instances:
        raise DTreeError("no instances")
    width = len(instances[0].features)
    for inst in instances:
        if len(inst.features) != width:
            raise DTreeError(
                f"{inst.case_id}: feature vector length {len(inst.features)} != {width}"
            )
        if inst.label not in LABELS:
            raise DTreeError(f"{inst.case_id}: unknown label {inst.label!r}")
    X = np.array([inst.features for inst in instances], dtype=np.uint8)
    if X.ndim == 1:  # zero-width feature vectors
        X = X.reshape(len(instances), 0)
    y = np.array([1 if inst.label == SSI else 0 for inst in instances], dtype=np.uint8)
    return X, y


def information_gain(instances: Sequence[Instance], attribute_index: int) -> float:
    """Gain of one attribute over the full instance list."""
    X, y = _encode_instances(instances)
    if not 0 <= attribute_index < X.shape[1]:
        raise DTreeError(f"attribute index {attribute_index} out of range")
    counts = _kernels.node_split_counts(
        X, y, np.arange(len(instances), dtype=np.int64),
        np.asarray([attribute_index], dtype=np.int64),
    )
    return float(gains_from_counts(counts)[0])


# -- induction -------------------------------------------------------------------

def _majority(n_pos: int, n_neg: int) -> str:
    # Ties go to the negative class (the overall majority in this domain).
    return SSI if n_pos > n_neg else NONSSI


def _grow(X: np.ndarray, y: np.ndarray, idx: np.ndarray, feats: np.ndarray,
          min_leaf: int, parent_majority: str, n_pos: int) -> TreeNode:
    n = idx.size
    if n == 0:
        return Leaf(label=parent_majority, class_counts=(0, 0))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        return Leaf(label=SSI if n_pos else NONSSI, class_counts=(n_pos, n_neg))
    majority = _majority(n_pos, n_neg)
    if feats.size == 0:
        return Leaf(label=majority, class_counts=(n_pos, n_neg))
    counts = _kernels.node_split_counts(X, y, idx, feats)
    gains = _kernels.split_gains(counts)
    j = int(np.argmax(gains))  # first maximum, so ties pick the lowest index
    attr = int(feats[j])
    n_v1 = int(counts[j, 2] + counts[j, 3])
    n_v0 = n - n_v1
    if 0 < n_v0 < min_leaf or 0 < n_v1 < min_leaf:
        return Leaf(label=majority, class_counts=(n_pos, n_neg))
    mask = X[idx, attr] == 1
    rest = np.delete(feats, j)
    return Internal(
        attribute_index=attr,
        false_child=_grow(X, y, idx[~mask], rest, min_leaf, majority,
                          int(counts[j, 1])),
        true_child=_grow(X, y, idx[mask], rest, min_leaf, majority,
                         int(counts[j, 3])),
    )


def dtc_from_arrays(X: np.ndarray, y: np.ndarray, min_leaf: int = 2,
                    features: Sequence[int] | None = None) -> TreeNode:
    """Grow a tree from an already-encoded (uint8 matrix, 0/1 labels) dataset."""
    X = np.ascontiguousarray(X, dtype=np.uint8)
    y = np.ascontiguousarray(y, dtype=np.uint8)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DTreeError("X must be 2-D and aligned with 1-D y")
    if X.shape[0] == 0:
        raise DTreeError("empty training set")
    if min_leaf < 1:
        raise DTreeError("min_leaf must be >= 1")
    if features is None:
        feats = np.arange(X.shape[1], dtype=np.int64)
    else:
        feats = np.asarray(sorted(features), dtype=np.int64)
        if len(set(features)) != feats.size or (
            feats.size and (feats[0] < 0 or feats[-1] >= X.shape[1])
        ):
            raise DTreeError("features must be distinct valid column indices")
    return _grow(X, y, np.arange(X.shape[0], dtype=np.int64), feats, min_leaf,
                 parent_majority=NONSSI, n_pos=int(y.sum()))


def dtc(training: Sequence[Instance], features: Sequence[int] | None = None,
        min_leaf: int = 2) -> TreeNode:
    """Grow an unpruned tree.

    Recursion: pure data or an empty attribute set ends in a (majority) leaf;
    otherwise the max-gain attribute splits the data and is removed from the
    attribute set below. A split whose child would get between 1 and
    min_leaf-1 instances is rejected and the node becomes a majority leaf.
    An empty branch becomes a leaf labeled with its parent's majority.
    """
    X, y = _encode_instances(training)
    return dtc_from_arrays(X, y, min_leaf=min_leaf, features=features)


# -- pruning ---------------------------------------------------------------------

def pessimistic_errors(n_errors: float, n: float, z: float) -> float:
    """Estimated errors: n times the one-sided upper bound on the error rate.

    Upper bound of a binomial proportion under the normal approximation:
    U = (f + z^2/2n + z*sqrt(f(1-f)/n + z^2/4n^2)) / (1 + z^2/n), f = errors/n.
    Empty nodes contribute no errors.
    """
    if n <= 0:
        return 0.0
    f = n_errors / n
    z2 = z * z
    u = (f + z2 / (2 * n) + z * math.sqrt(f * (1 - f) / n + z2 / (4 * n * n))) / (
        1 + z2 / n
    )
    return n * u


def _prune_rec(node: TreeNode, X: np.ndarray, y: np.ndarray, idx: np.ndarray,
               z: float) -> tuple[TreeNode, float]:
    n = idx.size
    n_pos = int(y[idx].sum())
    n_neg = n - n_pos
    if isinstance(node, Leaf):
        errors = n_neg if node.label == SSI else n_pos
        return node, pessimistic_errors(errors, n, z)
    mask = X[idx, node.attribute_index] == 1
    false_child, false_est = _prune_rec(node.false_child, X, y, idx[~mask], z)
    true_child, true_est = _prune_rec(node.true_child, X, y, idx[mask], z)
    children_est = false_est + true_est
    majority = _majority(n_pos, n_neg)
    leaf_errors = n_neg if majority == SSI else n_pos
    leaf_est = pessimistic_errors(leaf_errors, n, z)
    if leaf_est <= children_est:
        return Leaf(label=majority, class_counts=(n_pos, n_neg)), leaf_est
    return Internal(node.attribute_index, false_child, true_child), children_est


def prune(tree: TreeNode, training: Sequence[Instance],
          confidence: float = 0.25) -> TreeNode:
    """Bottom-up subtree replacement using the pessimistic error estimate.

    Training instances are routed down the tree; a subtree collapses into a
    majority leaf when the leaf's estimated errors do not exceed the sum of
    its children's estimates.
    """
    if not 0 < confidence < 0.5:
        raise DTreeError("confidence must be in (0, 0.5)")
    z = NormalDist().inv_cdf(1 - confidence)
    X, y = _encode_instances(training)
    pruned, _ = _prune_rec(tree, X, y, np.arange(len(training), dtype=np.int64), z)
    return pruned


# -- stratified folds --------------------------------------------------------------

def stratified_kfold(instances: Sequence, k: int, seed: int) -> list[list[int]]:
    """Split items (anything with a .label) into k index folds, stratified.

    Per label, indices are shuffled and dealt round-robin, so per-label fold
    counts differ by at most one. Deterministic for a fixed seed.
    """
    if k < 2:
        raise DTreeError("k must be >= 2")
    if k > len(instances):
        raise DTreeError(f"k={k} exceeds instance count {len(instances)}")
    by_label: dict[str, list[int]] = {}
    for i, inst in enumerate(instances):
        if inst.label not in LABELS:
            raise DTreeError(f"unknown label {inst.label!r}")
        by_label.setdefault(inst.label, []).append(i)
    rng = np.random.default_rng(np.random.PCG64(seed))
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in LABELS:
        members = by_label.get(label, [])
        if 0 < len(members) < k:
            warnings.warn(
                f"label {label!r} has only {len(members)} members for {k} folds; "
                "some folds will lack it",
                stacklevel=2,
            )
        order = rng.permutation(len(members))
        for j in range(k):
            folds[j].extend(members[int(p)] for p in order[j::k])
    return [sorted(f) for f in folds]


# -- cross-validation ----------------------------------------------------------------

def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """P/R/F1 for the positive class; zero denominators give 0 by convention."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall) if precision + recall else 0.0
    )
    return precision, recall, f1


@dataclass(frozen=True)
class FoldResult:
    fold: int  # 1-based; 0 marks the pooled row
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    zero_predicted: bool


def _fold_result(fold: int, tp: int, fp: int, fn: int, tn: int) -> FoldResult:
    precision, recall, f1 = precision_recall_f1(tp, fp, fn)
    return FoldResult(
        fold=fold, tp=tp, fp=fp, fn=fn, tn=tn,
        precision=precision, recall=recall, f1=f1,
        zero_predicted=(tp + fp == 0),
    )


@dataclass(frozen=True)
class CVConfig:
    folds: int = 10
    seed: int = 0
    confidence: float = 0.25
    min_leaf: int = 2
    global_ranking: bool = False
    min_day: int = 0
    max_day: int = 30

    def __post_init__(self) -> None:
        if self.folds < 2:
            raise DTreeError("folds must be >= 2")
        if not 0 < self.confidence < 0.5:
            raise DTreeError("confidence must be in (0, 0.5)")
        if self.min_leaf < 1:
            raise DTreeError("min_leaf must be >= 1")


@dataclass(frozen=True)
class CVReport:
    feature_source: str
    k_features: int
    folds: tuple[FoldResult, ...]
    pooled: FoldResult
    macro_precision: float
    macro_recall: float
    macro_f1: float
    selected_features: tuple[tuple[str, ...], ...]  # per fold, feature ids


def select_top_concepts(mentions: Iterable[ConceptMention], cohort: Cohort, k: int,
                        target_label: str = SSI,
                        case_ids: Iterable[str] | None = None) -> list[str]:
    """Top-k concept ids by association score over the given case subset."""
    if k < 1:
        raise DTreeError("k must be >= 1")
    counts = count_contingency(mentions, cohort, target_label, case_ids=case_ids)
    ranking = rank_concepts(counts)
    return [rc.concept_id for rc in ranking[:k]]


def cross_validate(cohort: Cohort, mentions: Sequence[ConceptMention],
                   k_features: int = 10, feature_source: str = FEATURES_PMI,
                   expert_specs: Sequence[FeatureSpec] | None = None,
                   config: CVConfig | None = None,
                   filters: FilterConfig | None = None) -> CVReport:
    """Stratified k-fold evaluation of grown-and-pruned trees.

    With the concept-score source, the top k features are re-selected inside
    each fold's training split (or once on the full cohort when
    ``config.global_ranking`` is set). With the expert source the fixed regex
    specs are used for every fold. Confusion counts are pooled over folds for
    the headline metrics; fold-averaged (macro) metrics are also reported.
    """
    if config is None:
        config = CVConfig()
    if filters is None:
        filters = FilterConfig()
    if feature_source not in (FEATURES_PMI, FEATURES_EXPERT):
        raise DTreeError(f"unknown feature source {feature_source!r}")
    if feature_source == FEATURES_EXPERT:
        if not expert_specs:
            raise DTreeError("expert feature source requires expert_specs")
        fixed_specs: Sequence[FeatureSpec] | None = list(expert_specs)
    elif config.global_ranking:
        fixed_specs = concept_features(
            select_top_concepts(mentions, cohort, k_features)
        )
    else:
        fixed_specs = None

    cases = sorted(cohort.cases, key=lambda c: c.case_id)
    folds = stratified_kfold(cases, k=config.folds, seed=config.seed)
    fixed_instances = (
        build_instances(cohort, mentions, fixed_specs, filters,
                        config.min_day, config.max_day)
        if fixed_specs is not None
        else None
    )

    fold_results = []
    selected: list[tuple[str, ...]] = []
    totals = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    for fold_no, test_idx in enumerate(folds, start=1):
        test_ids = {cases[i].case_id for i in test_idx}
        if fixed_instances is not None:
            specs = list(fixed_specs)  # type: ignore[arg-type]
            instances = fixed_instances
        else:
            train_ids = [c.case_id for c in cases if c.case_id not in test_ids]
            train_mentions = [m for m in mentions if m.case_id in set(train_ids)]
            specs = concept_features(
                select_top_concepts(train_mentions, cohort, k_features,
                                    case_ids=train_ids)
            )
            instances = build_instances(cohort, mentions, specs, filters,
                                        config.min_day, config.max_day)
        selected.append(tuple(s.id for s in specs))
        train_instances = [inst for inst in instances if inst.case_id not in test_ids]
        test_instances = [inst for inst in instances if inst.case_id in test_ids]
        tree = prune(
            dtc(train_instances, min_leaf=config.min_leaf),
            train_instances,
            confidence=config.confidence,
        )
        tp = fp = fn = tn = 0
        for inst in test_instances:
            predicted = classify(tree, inst.features)
            if predicted == SSI:
                if inst.label == SSI:
                    tp += 1
                else:
                    fp += 1
            elif inst.label == SSI:
                fn += 1
            else:
                tn += 1
        fold_results.append(_fold_result(fold_no, tp, fp, fn, tn))
        totals["tp"] += tp
        totals["fp"] += fp
        totals["fn"] += fn
        totals["tn"] += tn

    pooled = _fold_result(0, totals["tp"], totals["fp"], totals["fn"], totals["tn"])
    n_folds = len(fold_results)
    return CVReport(
        feature_source=feature_source,
        k_features=k_features if feature_source == FEATURES_PMI else len(fixed_specs),
        folds=tuple(fold_results),
        pooled=pooled,
        macro_precision=sum(f.precision for f in fold_results) / n_folds,
        macro_recall=sum(f.recall for f in fold_results) / n_folds,
        macro_f1=sum(f.f1 for f in fold_results) / n_folds,
        selected_features=tuple(selected),
    )


# -- report wire formats --------------------------------------------------------------

def report_to_csv(report: CVReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_CSV_HEADER.split(","))
    for fr in report.folds + (report.pooled,):
        writer.writerow(
            [
                report.feature_source, report.k_features,
                "pooled" if fr.fold == 0 else fr.fold,
                fr.tp, fr.fp, fr.fn, fr.tn,
                f"{fr.precision:.4f}", f"{fr.recall:.4f}", f"{fr.f1:.4f}",
            ]
        )
    return buf.getvalue()


def write_report_csv(report: CVReport, path: str | Path) -> None:
    Path(path).write_text(report_to_csv(report), encoding="utf-8", newline="\n")


def report_to_json(report: CVReport) -> str:
    def fold_dict(fr: FoldResult) -> dict:
        return {
            "fold": fr.fold, "tp": fr.tp, "fp": fr.fp, "fn": fr.fn, "tn": fr.tn,
            "precision": fr.precision, "recall": fr.recall, "f1": fr.f1,
            "zero_predicted": fr.zero_predicted,
        }

    payload = {
        "feature_source": report.feature_source,
        "k_features": report.k_features,
        "folds": [fold_dict(fr) for fr in report.folds],
        "pooled": fold_dict(report.pooled),
        "macro": {
            "precision": report.macro_precision,
            "recall": report.macro_recall,
            "f1": report.macro_f1,
        },
        "selected_features": [list(s) for s in report.selected_features],
    }
    return json.dumps(payload, indent=2) + "\n"


def write_report_json(report: CVReport, path: str | Path) -> None:
    Path(path).write_text(report_to_json(report), encoding="utf-8", newline="\n")
