"""Exact oracles for the random-ranking identity and the URE unbiasedness
identity, plus a seeded Monte Carlo driver for instances too large to
enumerate.

All oracle arithmetic is rational (fractions.Fraction over Python ints) and
equalities are checked exactly.

Sufficiency of placements: Recall@K and Recall@K̄ depend on a permutation only
through the ranks occupied by positive items, and every placement of N⁺
positives among N ranks is produced by the same number (N⁺!·N⁻!) of
permutations. Averaging over the C(N, N⁺) placements therefore equals
averaging over all N! permutations.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import chain, combinations, islice
from math import comb, sqrt
from typing import Callable, Dict, Iterator, Optional

import numpy as np

from ure_eval import config
from ure_eval.core import Catalog, ExposureKind, LabeledExposure, PredictionTable, build_ranked_catalog
from ure_eval.errors import (
    EmptyEvaluation,
    EnumerationTooLarge,
    IncompatibleCutoffs,
    InvalidCutoff,
    InvalidSpec,
    InvalidTrials,
    NoPositives,
)
from ure_eval.schemas import (
    ConditionalCheck,
    EnumerationSpec,
    ExactValue,
    HypergeomCheck,
    HypergeomSweepResult,
    SkipPolicy,
    Theorem1Result,
    Theorem2Result,
)

logger = logging.getLogger(__name__)

# rows of the placement x subset product materialized at once
CHUNK_PAIRS = 1 << 21
# subsets enumerated per chunk
CHUNK_ROWS = 1 << 15
# Monte Carlo draws x items materialized per batch
CHUNK_DRAWS = 1 << 21


def binomial(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    return comb(n, k)


def hypergeom_pmf(x: int, draws: int, n_pos: int, item_count: int) -> ExactValue:
    """P(x positives among `draws` items drawn from item_count items holding n_pos positives)."""
    if not (0 <= n_pos <= item_count and 0 <= draws <= item_count):
        raise InvalidSpec(f"hypergeometric arguments out of range: draws={draws} n_pos={n_pos} item_count={item_count}")
    p = Fraction(binomial(n_pos, x) * binomial(item_count - n_pos, draws - x), binomial(item_count, draws))
    return ExactValue.of(p)


def expected_recall_random_ranking(spec: EnumerationSpec) -> ExactValue:
    """E over all rankings of Recall@K = Σ_x (x/N⁺)·PMF(x); equals K/N."""
    if spec.n_pos == 0:
        raise NoPositives()
    k = spec.cutoff_full
    total = sum(
        (Fraction(x, spec.n_pos) * hypergeom_pmf(x, k, spec.n_pos, spec.item_count).value
         for x in range(1, min(k, spec.n_pos) + 1)),
        Fraction(0),
    )
    return ExactValue.of(total)


def hypergeom_check(item_count: int, n_pos: int, cutoff: int) -> HypergeomCheck:
    spec = EnumerationSpec(
        item_count=item_count, n_pos=n_pos, sample_size=item_count, cutoff_full=cutoff, cutoff_rand=cutoff
    )
    expected = expected_recall_random_ranking(spec)
    pmf_total = sum(
        (hypergeom_pmf(x, cutoff, n_pos, item_count).value for x in range(0, min(cutoff, n_pos) + 1)),
        Fraction(0),
    )
    target = Fraction(cutoff, item_count)
    return HypergeomCheck(
        item_count=item_count,
        n_pos=n_pos,
        cutoff=cutoff,
        expected_recall=expected,
        target=ExactValue.of(target),
        pmf_total=ExactValue.of(pmf_total),
        ok=expected.value == target and pmf_total == 1,
    )


def hypergeom_sweep(max_items: int) -> HypergeomSweepResult:
    """Check E[Recall@K] = K/N for every N ≤ max_items, N⁺ ∈ [1..N], K ∈ [1..N]."""
    checked = 0
    failures = []
    for n in range(1, max_items + 1):
        for n_pos in range(1, n + 1):
            for k in range(1, n + 1):
                check = hypergeom_check(n, n_pos, k)
                checked += 1
                if not check.ok:
                    failures.append(check)
    logger.info(f"hypergeom sweep max_items={max_items} checked={checked} failures={len(failures)}")
    return HypergeomSweepResult(max_items=max_items, checked=checked, failures=failures, ok=not failures)


# -------- enumeration --------
def combination_chunks(n: int, k: int, rows: Optional[int] = None) -> Iterator[np.ndarray]:
    """The C(n, k) subsets of range(n) in lexicographic order, as sorted index arrays of at most `rows` rows."""
    rows = rows or CHUNK_ROWS
    combos = combinations(range(n), k)
    remaining = comb(n, k)
    while remaining:
        size = min(rows, remaining)
        flat = np.fromiter(chain.from_iterable(islice(combos, size)), dtype=np.int64, count=size * k)
        remaining -= size
        yield flat.reshape(size, k)


def index_masks(idx: np.ndarray, n: int) -> np.ndarray:
    masks = np.zeros((idx.shape[0], n), dtype=bool)
    if idx.shape[1]:
        np.put_along_axis(masks, idx, True, axis=1)
    return masks


def combination_masks(n: int, k: int) -> np.ndarray:
    """All C(n, k) subsets of range(n) as a read-only boolean matrix, lexicographic order."""
    masks = np.vstack([index_masks(idx, n) for idx in combination_chunks(n, k)])
    masks.setflags(write=False)
    return masks


def _check_budget(cost: int, budget: Optional[int]) -> None:
    budget = budget or config.enumeration_budget()
    if cost > budget:
        raise EnumerationTooLarge(cost, budget)


def _ratio_sum(tally: Counter, convention: SkipPolicy):
    """Exact Σ count·a/b over tallied (a, b) pairs, and the number of pairs averaged over."""
    total = Fraction(0)
    used = 0
    for (a, b), count in tally.items():
        if b == 0:
            if convention is SkipPolicy.ZERO:
                used += count
            continue
        total += Fraction(a * count, b)
        used += count
    return total, used


def _tally(a: np.ndarray, b: np.ndarray, width: int) -> Counter:
    """Counter of (a, b) pairs; partial tallies from separate chunks add up."""
    keys = (a.astype(np.int64) * width + b.astype(np.int64)).ravel()
    counts = np.bincount(keys, minlength=width * width)
    return Counter({(int(key) // width, int(key) % width): int(c) for key, c in zip(np.flatnonzero(counts), counts[counts > 0])})


def coupled_spec(item_count: int, n_pos: int, sample_size: int, cutoff_full: int) -> EnumerationSpec:
    """Spec with K̄ = N̄·K/N; the coupling must give a positive integer."""
    kbar = Fraction(sample_size * cutoff_full, item_count)
    if kbar.denominator != 1 or kbar < 1:
        raise IncompatibleCutoffs(
            f"K̄ = N̄·K/N = {sample_size}·{cutoff_full}/{item_count} = {kbar} is not a positive integer"
        )
    try:
        return EnumerationSpec(
            item_count=item_count, n_pos=n_pos, sample_size=sample_size, cutoff_full=cutoff_full, cutoff_rand=int(kbar)
        )
    except ValueError as e:
        raise InvalidSpec(str(e))


def theorem1_identity_check(
    spec: EnumerationSpec, convention: SkipPolicy = SkipPolicy.SKIP, budget: Optional[int] = None
) -> Theorem1Result:
    """E over placements of (E over subsets of Recall@K̄ − Recall@K), enumerated exactly.

    Under the skip convention subsets without positives are left out of the
    inner mean. Every placement has the same number of such subsets
    (C(N⁻, N̄)), so the pair-level mean equals the nested mean.
    """
    if spec.cutoff_rand * spec.item_count != spec.sample_size * spec.cutoff_full:
        raise IncompatibleCutoffs(
            f"K̄={spec.cutoff_rand} differs from N̄·K/N = {spec.sample_size}·{spec.cutoff_full}/{spec.item_count}"
        )
    if spec.n_pos == 0:
        raise NoPositives()
    _check_budget(spec.cost, budget)

    n = spec.item_count
    placements = combination_masks(n, spec.n_pos)

    tally: Counter = Counter()
    for idx in combination_chunks(n, spec.sample_size):
        # index j is rank j + 1; the first K̄ sampled ranks form the restricted top-K̄
        subsets_f = index_masks(idx, n).T.astype(np.float32)
        top_f = index_masks(idx[:, :spec.cutoff_rand], n).T.astype(np.float32)
        step = max(1, CHUNK_PAIRS // idx.shape[0])
        for start in range(0, placements.shape[0], step):
            chunk = placements[start:start + step].astype(np.float32)
            tally += _tally(np.rint(chunk @ top_f), np.rint(chunk @ subsets_f), n + 1)

    rand_sum, used = _ratio_sum(tally, convention)
    pairs = spec.cost
    mean_rand = rand_sum / used if used else Fraction(0)
    hits_full = int(placements[:, :spec.cutoff_full].sum())
    mean_full = Fraction(hits_full, spec.n_pos * placements.shape[0])
    difference = mean_rand - mean_full

    logger.info(
        f"theorem1 N={n} N+={spec.n_pos} Nbar={spec.sample_size} K={spec.cutoff_full} Kbar={spec.cutoff_rand} "
        f"convention={convention.value} pairs={pairs} difference={difference}"
    )
    return Theorem1Result(
        spec=spec,
        convention=convention,
        pairs=pairs,
        skipped_pairs=pairs - used,
        mean_recall_rand=ExactValue.of(mean_rand),
        mean_recall_full=ExactValue.of(mean_full),
        difference=ExactValue.of(difference),
        ok=difference == 0,
    )


def theorem2_ranking(item_count: int, n_pos: int, m_above: int, cutoff: Optional[int] = None):
    """Catalog, full labels and ranking with exactly `m_above` positives at ranks ≤ K.

    Items are ranked by id. Positives sit at ranks 1..M and at the tail of
    the list; K defaults to max(M, 1).
    """
    if not 0 <= m_above <= n_pos <= item_count:
        raise InvalidSpec(f"need 0 ≤ M ≤ n_pos ≤ item_count, got M={m_above} n_pos={n_pos} item_count={item_count}")
    below = n_pos - m_above
    k = max(m_above, 1) if cutoff is None else cutoff
    if not 1 <= k <= item_count - 1:
        raise InvalidCutoff(k, 1, item_count - 1)
    if not m_above <= k <= item_count - below:
        raise InvalidSpec(f"no ranking puts exactly {m_above} of {n_pos} positives in the top {k} of {item_count}")

    catalog = Catalog(item_count)
    labels = np.zeros(item_count, dtype=np.int8)
    labels[:m_above] = 1
    if below:
        labels[item_count - below:] = 1
    full = LabeledExposure(user=1, items=catalog.item_ids, labels=labels, kind=ExposureKind.FULL, catalog=catalog)
    preds = PredictionTable(user=1, scores=-catalog.item_ids.astype(np.float64))
    return catalog, full, build_ranked_catalog(preds, catalog), k


def theorem2_unbiasedness_check(
    item_count: int,
    n_pos: int,
    m_above: int,
    sample_size: int,
    cutoff: Optional[int] = None,
    convention: SkipPolicy = SkipPolicy.SKIP,
    budget: Optional[int] = None,
) -> Theorem2Result:
    """Average of the URE value m/n over every size-N̄ subset against M/N⁺,
    overall and conditional on each observed positive count n′ ≥ 1."""
    if n_pos == 0:
        raise NoPositives()
    if not 1 <= sample_size <= item_count:
        raise InvalidSpec(f"sample_size must be in [1, {item_count}], got {sample_size}")
    _check_budget(comb(item_count, sample_size), budget)

    _, full, ranked, k = theorem2_ranking(item_count, n_pos, m_above, cutoff)
    positive = (full.labels == 1).astype(np.int64)
    above = positive * (ranked.ranks <= k)

    tally: Counter = Counter()
    for idx in combination_chunks(item_count, sample_size):
        tally += _tally(above[idx].sum(axis=1), positive[idx].sum(axis=1), item_count + 1)

    total, used = _ratio_sum(tally, convention)
    mean = total / used if used else Fraction(0)
    target = Fraction(m_above, n_pos)

    by_n: Dict[int, list] = {}
    for (m, n), count in tally.items():
        if n >= 1:
            by_n.setdefault(n, []).append((m, count))
    conditional = []
    for n in sorted(by_n):
        count_n = sum(c for _, c in by_n[n])
        mean_n = sum((Fraction(m * c, n) for m, c in by_n[n]), Fraction(0)) / count_n
        conditional.append(
            ConditionalCheck(n_observed=n, subsets=count_n, mean_estimate=ExactValue.of(mean_n), ok=mean_n == target)
        )

    difference = mean - target
    subsets_total = comb(item_count, sample_size)
    logger.info(
        f"theorem2 N={item_count} N+={n_pos} M={m_above} Nbar={sample_size} K={k} "
        f"convention={convention.value} subsets={subsets_total} difference={difference}"
    )
    return Theorem2Result(
        item_count=item_count,
        n_pos=n_pos,
        m_above=m_above,
        sample_size=sample_size,
        cutoff=k,
        convention=convention,
        subsets=subsets_total,
        skipped_subsets=subsets_total - used,
        mean_estimate=ExactValue.of(mean),
        target=ExactValue.of(target),
        difference=ExactValue.of(difference),
        conditional=conditional,
        ok=difference == 0 and all(c.ok for c in conditional),
    )


# -------- Monte Carlo --------
@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    trials: int
    skipped: int

    def within(self, exact: float, sigmas: float = 4.0) -> bool:
        return abs(self.mean - exact) <= sigmas * self.stderr


BatchSampler = Callable[[np.random.Generator, int], np.ndarray]
BatchMetric = Callable[[np.ndarray], np.ndarray]


def monte_carlo_expectation(
    metric: BatchMetric, sampler: BatchSampler, trials: int, seed: int, batch: int = 1 << 12
) -> MonteCarloEstimate:
    """Sample mean and standard error of `metric(sampler(rng, size))` over `trials` draws.

    The sampler returns one draw per row; the metric maps rows to values,
    NaN marking an undefined draw (e.g. no observed positive). Undefined
    draws are skipped and counted.
    """
    if trials < 2:
        raise InvalidTrials(f"trials must be >= 2, got {trials}")
    rng = np.random.default_rng(seed)
    parts = []
    for start in range(0, trials, batch):
        parts.append(np.asarray(metric(sampler(rng, min(batch, trials - start))), dtype=np.float64))
    values = np.concatenate(parts)
    values = values[~np.isnan(values)]
    used = values.size
    if used < 2:
        raise EmptyEvaluation(f"only {used} of {trials} draws defined the metric")
    stderr = float(values.std(ddof=1)) / sqrt(used)
    return MonteCarloEstimate(mean=float(values.mean()), stderr=stderr, trials=trials, skipped=trials - used)


def _batch_rows(item_count: int) -> int:
    return max(1, CHUNK_DRAWS // item_count)


def random_subsets(rng: np.random.Generator, size: int, item_count: int, sample_size: int) -> np.ndarray:
    """`size` independent uniform size-N̄ subsets of range(item_count), one per row, sorted."""
    if sample_size == item_count:
        return np.broadcast_to(np.arange(item_count), (size, item_count)).copy()
    keys = rng.random((size, item_count))
    return np.sort(np.argpartition(keys, sample_size, axis=1)[:, :sample_size], axis=1)


def subset_sampler(item_count: int, sample_size: int) -> BatchSampler:
    """Uniform size-N̄ item subsets (1-based ids) without replacement, one per row."""
    if not 1 <= sample_size <= item_count:
        raise InvalidSpec(f"sample_size must be in [1, {item_count}], got {sample_size}")

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        return random_subsets(rng, size, item_count, sample_size) + 1

    return draw


def ure_metric(ranked, full: LabeledExposure, k: int) -> BatchMetric:
    """URE value m/n on the random exposures that rows of item ids induce from `full`; NaN when n = 0."""
    positive = (full.labels == 1).astype(np.int64)
    above = positive * (ranked.ranks <= k)

    def metric(items: np.ndarray) -> np.ndarray:
        n = positive[items - 1].sum(axis=1)
        m = above[items - 1].sum(axis=1)
        out = np.full(n.shape, np.nan)
        np.divide(m, n, out=out, where=n > 0)
        return out

    return metric


def theorem2_monte_carlo(
    item_count: int, n_pos: int, m_above: int, sample_size: int, trials: int, seed: int, cutoff: Optional[int] = None
) -> MonteCarloEstimate:
    """Monte Carlo counterpart of theorem2_unbiasedness_check for large instances."""
    _, full, ranked, k = theorem2_ranking(item_count, n_pos, m_above, cutoff)
    return monte_carlo_expectation(
        ure_metric(ranked, full, k), subset_sampler(item_count, sample_size), trials, seed, _batch_rows(item_count)
    )


def theorem1_monte_carlo(spec: EnumerationSpec, trials: int, seed: int) -> MonteCarloEstimate:
    """Monte Carlo estimate of E[Recall@K̄ − Recall@K] over random (placement, subset) pairs.

    Draws without an observed positive are skipped, as in the exact check.
    """
    if spec.n_pos == 0:
        raise NoPositives()
    n = spec.item_count

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        # row: positive ranks, then sampled ranks
        positive = random_subsets(rng, size, n, spec.n_pos)
        sampled = random_subsets(rng, size, n, spec.sample_size)
        return np.hstack([positive, sampled])

    def metric(pairs: np.ndarray) -> np.ndarray:
        positive = index_masks(pairs[:, :spec.n_pos], n)
        sampled = pairs[:, spec.n_pos:]
        observed = np.take_along_axis(positive, sampled, axis=1)
        n_obs = observed.sum(axis=1)
        recall_rand = np.full(n_obs.shape, np.nan)
        np.divide(observed[:, :spec.cutoff_rand].sum(axis=1), n_obs, out=recall_rand, where=n_obs > 0)
        recall_full = positive[:, :spec.cutoff_full].sum(axis=1) / spec.n_pos
        return recall_rand - recall_full

    return monte_carlo_expectation(metric, draw, trials, seed, _batch_rows(n))
