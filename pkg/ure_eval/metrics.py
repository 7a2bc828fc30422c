"""The three evaluation schemes.

- gold:        Recall@K on the fully-exposed labels, full-catalog ranking.
- traditional: the same formula on the ranking restricted to the randomly
               exposed items, cutoff K̄ ≤ N̄.
- URE:         full-catalog ranking, the (K+1)-th item as threshold, and the
               share m/n of observed positives ranked above it.

All thresholds are rank based. Under the deterministic tie-break of
core.build_ranked_catalog "rank ≤ K" is exactly "strictly above the
(K+1)-th item", so equal scores never make a value ambiguous.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ure_eval import config
from ure_eval.core import (
    Catalog,
    ExposureKind,
    LabeledExposure,
    PredictionTable,
    RankedCatalog,
    build_ranked_catalog,
    rank_order,
)
from ure_eval.errors import (
    EmptyEvaluation,
    InvalidCutoff,
    InvalidSpec,
    MissingPrediction,
    NoObservedPositives,
    NoPositives,
)
from ure_eval.schemas import EvalReport, Scheme, SkipPolicy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UreUserOutcome:
    n: int
    m: int

    @property
    def value(self) -> float:
        if self.n == 0:
            raise NoObservedPositives()
        return self.m / self.n


def _cutoffs(cutoffs: Iterable[int], low: int, high: int) -> np.ndarray:
    ks = np.asarray(list(cutoffs), dtype=np.int64)
    for k in ks:
        if not low <= k <= high:
            raise InvalidCutoff(int(k), low, high)
    return ks


def _share_within(positive_ranks: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """Fraction of positive ranks ≤ k, for every k."""
    ranks = np.sort(positive_ranks)
    return np.searchsorted(ranks, ks, side="right") / ranks.size


# -------- gold standard --------
def recall_curve(ranked: RankedCatalog, full: LabeledExposure, cutoffs: Iterable[int]) -> np.ndarray:
    if full.kind is not ExposureKind.FULL:
        raise InvalidSpec(f"user={full.user}: gold recall needs a fully-exposed dataset")
    ks = _cutoffs(cutoffs, 1, ranked.item_count)
    positives = full.positives
    if positives.size == 0:
        raise NoPositives(full.user)
    return _share_within(ranked.ranks_of(positives), ks)


def recall_at_k(ranked: RankedCatalog, full: LabeledExposure, k: int) -> float:
    """|{p ∈ Rank_u+ : p ≤ K}| / |Rank_u+| over the full ranking."""
    return float(recall_curve(ranked, full, [k])[0])


# -------- traditional scheme on D_rand --------
def restricted_ranks(preds: PredictionTable, rand: LabeledExposure) -> np.ndarray:
    """Rank of each exposed item (aligned with rand.items) within the exposed items only."""
    scores = preds.scores[rand.items - 1]
    idx = rank_order(rand.items, scores)
    ranks = np.empty(rand.size, dtype=np.int64)
    ranks[idx] = np.arange(1, rand.size + 1, dtype=np.int64)
    return ranks


def traditional_recall_curve(preds: PredictionTable, rand: LabeledExposure, cutoffs: Iterable[int]) -> np.ndarray:
    ks = _cutoffs(cutoffs, 1, rand.size)
    if rand.n_pos == 0:
        raise NoPositives(rand.user)
    if rand.items[-1] > preds.scores.size:
        raise MissingPrediction(preds.user, int(rand.items[-1]))
    ranks = restricted_ranks(preds, rand)
    return _share_within(ranks[rand.labels == 1], ks)


def traditional_recall_on_rand(preds: PredictionTable, rand: LabeledExposure, kbar: int) -> float:
    return float(traditional_recall_curve(preds, rand, [kbar])[0])


# -------- URE --------
def ure_counts(ranked: RankedCatalog, rand: LabeledExposure, cutoffs: Iterable[int]) -> Tuple[int, np.ndarray]:
    """n and m(K) for every K; K = item_count is rejected (no (K+1)-th item)."""
    ks = _cutoffs(cutoffs, 1, ranked.item_count - 1)
    positives = rand.positives
    if positives.size == 0:
        raise NoObservedPositives(rand.user)
    ranks = np.sort(ranked.ranks_of(positives))
    return int(positives.size), np.searchsorted(ranks, ks, side="right")


def ure_curve(ranked: RankedCatalog, rand: LabeledExposure, cutoffs: Iterable[int]) -> np.ndarray:
    n, m = ure_counts(ranked, rand, cutoffs)
    return m / n


def ure_estimate(ranked: RankedCatalog, rand: LabeledExposure, k: int) -> UreUserOutcome:
    n, m = ure_counts(ranked, rand, [k])
    return UreUserOutcome(n=n, m=int(m[0]))


# -------- macro evaluation --------
Datasets = Union[Mapping[int, LabeledExposure], Iterable[LabeledExposure]]
Predictions = Union[Mapping[int, PredictionTable], Iterable[PredictionTable]]


def _by_user(items) -> Dict:
    if isinstance(items, Mapping):
        return dict(items)
    return {x.user: x for x in items}


def user_curve(
    scheme: Scheme, exposure: LabeledExposure, preds: PredictionTable, cutoffs: Sequence[int], catalog: Catalog
) -> np.ndarray:
    """Per-user metric values over `cutoffs` under `scheme`."""
    if scheme is Scheme.TRADITIONAL_RAND:
        if preds.scores.size != catalog.item_count:
            raise MissingPrediction(preds.user, int(preds.scores.size) + 1)
        return traditional_recall_curve(preds, exposure, cutoffs)
    ranked = build_ranked_catalog(preds, catalog)
    if scheme is Scheme.GOLD_FULL:
        return recall_curve(ranked, exposure, cutoffs)
    return ure_curve(ranked, exposure, cutoffs)


def evaluate_scheme_grid(
    scheme: Scheme,
    datasets: Datasets,
    preds: Predictions,
    cutoffs: Sequence[int],
    catalog: Catalog,
    skip_policy: SkipPolicy = SkipPolicy.SKIP,
    workers: Optional[int] = None,
) -> List[EvalReport]:
    """One macro-averaged EvalReport per cutoff, sharing the ranking work per user.

    Users without positives in the relevant dataset are skipped (and counted
    per reason) or, under SkipPolicy.ZERO, scored 0.
    """
    scheme = Scheme(scheme)
    skip_policy = SkipPolicy(skip_policy)
    exposures = _by_user(datasets)
    tables = _by_user(preds)
    cutoffs = [int(k) for k in cutoffs]
    users = sorted(exposures)

    for user in users:
        if user not in tables:
            raise MissingPrediction(user, "*")

    def run(user: int) -> Tuple[int, Optional[np.ndarray], Optional[str]]:
        try:
            return user, user_curve(scheme, exposures[user], tables[user], cutoffs, catalog), None
        except NoPositives as e:
            return user, None, e.reason

    workers = workers or config.default_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, users))
    else:
        outcomes = [run(u) for u in users]

    per_user: Dict[int, np.ndarray] = {}
    skipped: Dict[str, List[int]] = {}
    zero_filled = 0
    for user, values, reason in outcomes:
        if values is not None:
            per_user[user] = values
        elif skip_policy is SkipPolicy.ZERO:
            per_user[user] = np.zeros(len(cutoffs))
            zero_filled += 1
        else:
            skipped.setdefault(reason, []).append(user)

    if not per_user:
        raise EmptyEvaluation(f"scheme={scheme.value}: all {len(users)} users skipped ({', '.join(sorted(skipped))})")

    matrix = np.vstack([per_user[u] for u in per_user])
    reports = []
    for j, k in enumerate(cutoffs):
        reports.append(
            EvalReport(
                scheme=scheme,
                k=k,
                per_user={u: float(matrix[i, j]) for i, u in enumerate(per_user)},
                macro_mean=float(matrix[:, j].mean()),
                skipped_users={reason: len(ids) for reason, ids in skipped.items()},
                skipped_user_ids=skipped,
                zero_filled=zero_filled,
                skip_policy=skip_policy,
            )
        )

    logger.debug(
        f"scheme={scheme.value} cutoffs={cutoffs} users={len(users)} scored={len(per_user)} "
        f"skipped={sum(len(v) for v in skipped.values())} zero_filled={zero_filled}"
    )
    return reports


def evaluate_scheme(
    scheme: Scheme,
    datasets: Datasets,
    preds: Predictions,
    k: int,
    catalog: Catalog,
    skip_policy: SkipPolicy = SkipPolicy.SKIP,
    workers: Optional[int] = None,
) -> EvalReport:
    return evaluate_scheme_grid(scheme, datasets, preds, [k], catalog, skip_policy, workers)[0]
