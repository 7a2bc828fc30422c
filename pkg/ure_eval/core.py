"""Domain types shared by every module: catalog, labeled exposures,
predictions and per-user rankings.

Item ids are dense, 1-based (`1..item_count`); external ids are remapped at
ingestion (see dataio). All types are immutable once built, so they can be
shared across worker threads.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional

import numpy as np

from ure_eval.errors import (
    DuplicatePair,
    IncompleteFullExposure,
    InvalidItem,
    InvalidLabel,
    InvalidScore,
    InvalidSpec,
    MissingPrediction,
)
from ure_eval.schemas import ValidationIssue, ValidationSummary


class ExposureKind(str, Enum):
    FULL = "full"
    RANDOM = "random"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Catalog:
    item_count: int

    def __post_init__(self):
        if int(self.item_count) < 1:
            raise InvalidSpec(f"item_count must be >= 1, got {self.item_count}")

    @property
    def item_ids(self) -> np.ndarray:
        return np.arange(1, self.item_count + 1, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class LabeledExposure:
    """One user's labeled items: every catalog item (FULL) or a random subset (RANDOM)."""

    user: int
    items: np.ndarray
    labels: np.ndarray
    kind: ExposureKind
    catalog: Catalog

    def __post_init__(self):
        items = np.asarray(self.items, dtype=np.int64).ravel()
        labels = np.asarray(self.labels).ravel()
        if items.shape != labels.shape:
            raise InvalidSpec(f"user={self.user}: {items.size} items but {labels.size} labels")

        bad = (labels != 0) & (labels != 1)
        if bad.any():
            raise InvalidLabel(labels[bad][0].item())
        outside = (items < 1) | (items > self.catalog.item_count)
        if outside.any():
            raise InvalidItem(int(items[outside][0]))

        order = np.argsort(items, kind="stable")
        items, labels = items[order], labels[order].astype(np.int8)
        repeated = np.flatnonzero(np.diff(items) == 0)
        if repeated.size:
            raise DuplicatePair(self.user, int(items[repeated[0]]))

        if self.kind is ExposureKind.FULL and items.size != self.catalog.item_count:
            raise IncompleteFullExposure(self.user, int(items.size), self.catalog.item_count)
        if self.kind is ExposureKind.RANDOM and items.size < 1:
            raise InvalidSpec(f"user={self.user}: a random exposure needs at least one item")

        object.__setattr__(self, "items", _frozen(items))
        object.__setattr__(self, "labels", _frozen(labels))

    @classmethod
    def from_mapping(
        cls, user: int, labels: Mapping[int, int], catalog: Catalog, kind: ExposureKind
    ) -> "LabeledExposure":
        items = np.fromiter(labels.keys(), dtype=np.int64, count=len(labels))
        values = np.fromiter(labels.values(), dtype=np.int64, count=len(labels))
        return cls(user=user, items=items, labels=values, kind=kind, catalog=catalog)

    @property
    def size(self) -> int:
        """N̄ for a random exposure, item_count for a full one."""
        return int(self.items.size)

    @property
    def positives(self) -> np.ndarray:
        return self.items[self.labels == 1]

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    def as_dict(self) -> Dict[int, int]:
        return {int(i): int(l) for i, l in zip(self.items, self.labels)}


@dataclass(frozen=True, eq=False)
class PredictionTable:
    """Model scores ŷ for one user; `scores[i - 1]` is the score of item i."""

    user: int
    scores: np.ndarray

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64).ravel()
        bad = ~np.isfinite(scores)
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise InvalidScore(self.user, idx + 1, float(scores[idx]))
        object.__setattr__(self, "scores", _frozen(scores))

    @classmethod
    def from_mapping(cls, user: int, scores: Mapping[int, float], catalog: Catalog) -> "PredictionTable":
        values = np.empty(catalog.item_count, dtype=np.float64)
        for item in range(1, catalog.item_count + 1):
            if item not in scores:
                raise MissingPrediction(user, item)
            values[item - 1] = scores[item]
        extra = set(scores) - set(range(1, catalog.item_count + 1))
        if extra:
            raise InvalidItem(min(extra))
        return cls(user=user, scores=values)


@dataclass(frozen=True, eq=False)
class RankedCatalog:
    """Total order over the catalog for one user.

    `order[p - 1]` is the item at rank p; `ranks[i - 1]` is the rank of item i.
    """

    user: int
    order: np.ndarray
    ranks: np.ndarray

    @property
    def item_count(self) -> int:
        return int(self.order.size)

    def rank_of(self, item: int) -> int:
        return int(self.ranks[item - 1])

    def ranks_of(self, items: np.ndarray) -> np.ndarray:
        return self.ranks[np.asarray(items, dtype=np.int64) - 1]


def rank_order(item_ids: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Positions that sort `item_ids` by descending score, ties by ascending id."""
    # lexsort keys run from least to most significant
    return np.lexsort((item_ids, -scores))


def build_ranked_catalog(preds: PredictionTable, catalog: Catalog) -> RankedCatalog:
    n = catalog.item_count
    if preds.scores.size < n:
        raise MissingPrediction(preds.user, int(preds.scores.size) + 1)
    if preds.scores.size > n:
        raise InvalidItem(n + 1)

    ids = catalog.item_ids
    idx = rank_order(ids, preds.scores)
    ranks = np.empty(n, dtype=np.int64)
    ranks[idx] = np.arange(1, n + 1, dtype=np.int64)
    return RankedCatalog(user=preds.user, order=_frozen(ids[idx]), ranks=_frozen(ranks))


# -------- raw rows and validation --------
@dataclass(frozen=True, eq=False)
class ExposureRows:
    """Parsed `user_id,item_id,label` rows before any invariant is enforced."""

    users: np.ndarray
    items: np.ndarray
    labels: np.ndarray
    lines: Optional[np.ndarray] = None

    def line(self, row: int) -> Optional[int]:
        return None if self.lines is None else int(self.lines[row])


def validate_dataset(
    rows: ExposureRows, catalog: Catalog, kind: Optional[ExposureKind] = None
) -> ValidationSummary:
    """Report duplicate pairs, out-of-range items, non-binary labels and, for
    fully-exposed data, users missing catalog items. Never raises."""
    users = np.asarray(rows.users, dtype=np.int64)
    items = np.asarray(rows.items, dtype=np.int64)
    labels = np.asarray(rows.labels, dtype=np.int64)
    summary = ValidationSummary()
    if users.size == 0:
        return summary

    def issue(kind_: str, row: int, **extra) -> ValidationIssue:
        return ValidationIssue(kind=kind_, user=int(users[row]), line=rows.line(row), **extra)

    outside = np.flatnonzero((items < 1) | (items > catalog.item_count))
    summary.out_of_range = [issue("out_of_range", r, item=int(items[r])) for r in outside]

    bad_labels = np.flatnonzero((labels != 0) & (labels != 1))
    summary.invalid_labels = [issue("invalid_label", r, item=int(items[r]), label=int(labels[r])) for r in bad_labels]

    pairs = np.stack([users, items], axis=1)
    _, first, inverse = np.unique(pairs, axis=0, return_index=True, return_inverse=True)
    repeats = np.flatnonzero(first[inverse.ravel()] != np.arange(users.size))
    summary.duplicates = [issue("duplicate", r, item=int(items[r])) for r in repeats]

    if kind is ExposureKind.FULL:
        valid = (items >= 1) & (items <= catalog.item_count)
        for user in np.unique(users):
            labeled = np.unique(items[(users == user) & valid]).size
            if labeled != catalog.item_count:
                summary.incomplete_users.append(ValidationIssue(kind="incomplete", user=int(user)))
    return summary


def group_exposures(rows: ExposureRows, catalog: Catalog, kind: ExposureKind) -> Dict[int, LabeledExposure]:
    """Split validated rows into one LabeledExposure per user, keyed by user id in ascending order."""
    users = np.asarray(rows.users, dtype=np.int64)
    items = np.asarray(rows.items, dtype=np.int64)
    labels = np.asarray(rows.labels, dtype=np.int64)
    order = np.argsort(users, kind="stable")
    users, items, labels = users[order], items[order], labels[order]
    bounds = np.flatnonzero(np.diff(users)) + 1
    out: Dict[int, LabeledExposure] = {}
    for u_items, u_labels, u in zip(np.split(items, bounds), np.split(labels, bounds), np.split(users, bounds)):
        if u.size == 0:
            continue
        user = int(u[0])
        out[user] = LabeledExposure(user=user, items=u_items, labels=u_labels, kind=kind, catalog=catalog)
    return out
