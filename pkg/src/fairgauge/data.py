"""Core domain types and CSV ingestion.

Scores live in the open interval (0, 1): ingestion clamps raw values into
[1e-6, 1 - 1e-6] because the calibration map takes log s and log(1 - s).
Groups are arbitrary strings mapped to dense integer ids in declaration
order.  A Dataset is immutable after construction and safe to share
read-only across workers.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyDataset, MalformedRow, NTooLarge, UnknownGroupLabel

SCORE_EPS = 1e-6
UNLABELED = -1  # sentinel in the label array


class MetricKind(enum.Enum):
    ACCURACY = "accuracy"
    TPR = "tpr"
    FPR = "fpr"


@dataclass(frozen=True)
class ScoredExample:
    """One instance: model score, dense group id, optional binary label."""

    score: float
    group: int
    label: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.group < 0:
            raise ValueError("group id must be non-negative")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0, 1 or None, got {self.label}")


@dataclass(frozen=True)
class GroupPair:
    """Ordered pair for delta = theta[unprivileged] - theta[privileged]."""

    unprivileged: int
    privileged: int

    def __post_init__(self):
        if self.unprivileged == self.privileged:
            raise ValueError("pair groups must differ")

    def validate(self, dataset: "Dataset") -> None:
        for g in (self.unprivileged, self.privileged):
            if not (0 <= g < dataset.n_groups):
                raise UnknownGroupLabel(f"group id {g} not declared in dataset")

    def swapped(self) -> "GroupPair":
        return GroupPair(self.privileged, self.unprivileged)


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for ingestion; label column may be absent."""

    score: str = "score"
    group: str = "group"
    label: str = "label"


def clamp_scores(scores: np.ndarray) -> np.ndarray:
    return np.clip(scores, SCORE_EPS, 1.0 - SCORE_EPS)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of scored examples with declared groups.

    labels uses -1 for unlabeled rows.  Labeled examples are exactly the
    rows with label in {0, 1}.
    """

    scores: np.ndarray
    groups: np.ndarray
    labels: np.ndarray
    group_names: tuple[str, ...]

    def __post_init__(self):
        scores = np.ascontiguousarray(np.asarray(self.scores, dtype=np.float64))
        groups = np.ascontiguousarray(np.asarray(self.groups, dtype=np.int64))
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int8))
        if not (scores.shape == groups.shape == labels.shape) or scores.ndim != 1:
            raise ValueError("scores, groups, labels must be equal-length 1-d arrays")
        if scores.size and (scores.min() < SCORE_EPS or scores.max() > 1.0 - SCORE_EPS):
            raise ValueError("scores must be clamped into [1e-6, 1-1e-6]")
        if groups.size:
            if groups.min() < 0 or groups.max() >= len(self.group_names):
                raise ValueError("group id outside declared range")
        bad = ~np.isin(labels, (-1, 0, 1))
        if bad.any():
            raise ValueError("labels must be -1 (unlabeled), 0 or 1")
        for arr, name in ((scores, "scores"), (groups, "groups"), (labels, "labels")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "group_names", tuple(self.group_names))

    # -- basic facts ---------------------------------------------------

    def __len__(self) -> int:
        return self.scores.size

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def n_labeled(self) -> int:
        return int(self.labeled_mask.sum())

    @property
    def n_unlabeled(self) -> int:
        return len(self) - self.n_labeled

    @property
    def examples(self) -> list[ScoredExample]:
        return [
            ScoredExample(float(s), int(g), None if l < 0 else int(l))
            for s, g, l in zip(self.scores, self.groups, self.labels)
        ]

    def group_id(self, name: str) -> int:
        try:
            return self.group_names.index(name)
        except ValueError:
            raise UnknownGroupLabel(f"group {name!r} not declared") from None

    # -- views ---------------------------------------------------------

    def subset(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.scores[index], self.groups[index], self.labels[index],
                       self.group_names)

    def labeled_view(self) -> "Dataset":
        return self.subset(np.flatnonzero(self.labeled_mask))

    def unlabeled_view(self) -> "Dataset":
        return self.subset(np.flatnonzero(~self.labeled_mask))

    def mask_labels(self) -> "Dataset":
        return Dataset(self.scores, self.groups,
                       np.full(len(self), UNLABELED, dtype=np.int8), self.group_names)


def from_examples(examples: Iterable[ScoredExample],
                  group_names: Sequence[str]) -> Dataset:
    rows = list(examples)
    return Dataset(
        clamp_scores(np.array([e.score for e in rows], dtype=np.float64)),
        np.array([e.group for e in rows], dtype=np.int64),
        np.array([UNLABELED if e.label is None else e.label for e in rows],
                 dtype=np.int8),
        tuple(group_names),
    )


def ingest_csv(path, schema: CsvSchema = CsvSchema(),
               groups: Optional[Sequence[str]] = None) -> Dataset:
    """Read a scored-example CSV into a validated Dataset.

    The file must have a header row naming at least the score and group
    columns.  The label column is optional; an empty cell means unlabeled.
    Scores are clamped into [1e-6, 1-1e-6].  When `groups` is given, rows
    with other group values raise UnknownGroupLabel; otherwise group ids
    are assigned in order of first appearance.
    """
    declared = list(groups) if groups is not None else None
    ids: dict[str, int] = {name: i for i, name in enumerate(declared)} if declared else {}
    scores, gids, labels = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyDataset(f"{path}: no header row")
        for col in (schema.score, schema.group):
            if col not in reader.fieldnames:
                raise MalformedRow(1, f"missing required column {col!r}")
        has_label_col = schema.label in reader.fieldnames
        for row in reader:
            line = reader.line_num
            raw_score = (row.get(schema.score) or "").strip()
            raw_group = (row.get(schema.group) or "").strip()
            if not raw_score:
                raise MalformedRow(line, "missing score")
            if not raw_group:
                raise MalformedRow(line, "missing group")
            try:
                score = float(raw_score)
            except ValueError:
                raise MalformedRow(line, f"bad score {raw_score!r}") from None
            if not np.isfinite(score) or not (0.0 <= score <= 1.0):
                raise MalformedRow(line, f"score {score} outside [0, 1]")
            if raw_group not in ids:
                if declared is not None:
                    raise UnknownGroupLabel(
                        f"line {line}: group {raw_group!r} not in {declared}")
                ids[raw_group] = len(ids)
            raw_label = (row.get(schema.label) or "").strip() if has_label_col else ""
            if raw_label == "":
                label = UNLABELED
            elif raw_label in ("0", "1"):
                label = int(raw_label)
            else:
                raise MalformedRow(line, f"bad label {raw_label!r}")
            scores.append(score)
            gids.append(ids[raw_group])
            labels.append(label)
    if not scores:
        raise EmptyDataset(f"{path}: no data rows")
    names = declared if declared is not None else \
        [name for name, _ in sorted(ids.items(), key=lambda kv: kv[1])]
    return Dataset(clamp_scores(np.array(scores)), np.array(gids, dtype=np.int64),
                   np.array(labels, dtype=np.int8), tuple(names))


def write_csv(dataset: Dataset, path, schema: CsvSchema = CsvSchema()) -> None:
    """Write a Dataset back out; re-ingesting yields identical examples."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([schema.score, schema.group, schema.label])
        for s, g, l in zip(dataset.scores, dataset.groups, dataset.labels):
            writer.writerow([repr(float(s)), dataset.group_names[g],
                             "" if l < 0 else int(l)])


def split_labeled(dataset: Dataset, n: int, seed) -> tuple[Dataset, Dataset]:
    """Split a fully labeled dataset into (labeled, unlabeled) views.

    Picks a uniformly random without-replacement subset of size n that
    keeps its labels; the remaining examples have labels masked and become
    the unlabeled pool.  Deterministic given the seed.
    """
    if dataset.n_unlabeled:
        raise ValueError("split_labeled requires a fully labeled dataset")
    total = len(dataset)
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > total:
        raise NTooLarge(f"n={n} exceeds dataset size {total}")
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(total, size=n, replace=False))
    mask = np.zeros(total, dtype=bool)
    mask[keep] = True
    labeled = dataset.subset(keep)
    unlabeled = dataset.subset(np.flatnonzero(~mask)).mask_labels()
    return labeled, unlabeled
