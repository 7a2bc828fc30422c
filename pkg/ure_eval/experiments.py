"""Correlation analyses across a family of models.

A family is evaluated once into a ModelFamilyResult (macro metric per model
per cutoff under each scheme); curves and matrices are Pearson correlations
between columns of that result, taken across models.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ure_eval import config
from ure_eval.core import Catalog, LabeledExposure, PredictionTable
from ure_eval.errors import EmptyCurve, InvalidSpec, UndefinedCorrelation
from ure_eval.metrics import evaluate_scheme_grid
from ure_eval.schemas import (
    ComparisonRow,
    ComparisonTable,
    CorrelationCurve,
    CorrelationMatrix,
    Scheme,
    SkipPolicy,
)
from ure_eval.synth import ScorerSpec, SyntheticWorld, make_family, sample_random_exposure

logger = logging.getLogger(__name__)

DEFAULT_K_GRID = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 30, 50, 75, 100, 150, 200, 300, 500)
DEFAULT_MATRIX_TARGETS = (3, 10, 30, 100, 300)

Family = Mapping[str, Mapping[int, PredictionTable]]


def default_k_grid(item_count: int) -> List[int]:
    return [k for k in DEFAULT_K_GRID if k <= item_count]


def parse_metric(metric: str) -> Tuple[Scheme, int]:
    """'rand@5' -> (TRADITIONAL_RAND, 5); scheme names follow the CLI (full|rand|ure)."""
    try:
        name, k = metric.split("@")
        return Scheme(name), int(k)
    except ValueError:
        raise InvalidSpec(f"metric id must look like full@50, rand@5 or ure@30, got {metric!r}")


@dataclass(frozen=True, eq=False)
class ModelFamilyResult:
    """Macro metric values, one row per model (family order)."""

    labels: List[str]
    k_grid: List[int]
    kbar_grid: List[int]
    gold: np.ndarray
    traditional: np.ndarray
    ure: np.ndarray
    nbar: Optional[int] = None

    def column(self, metric: str) -> np.ndarray:
        scheme, k = parse_metric(metric)
        grid = self.kbar_grid if scheme is Scheme.TRADITIONAL_RAND else self.k_grid
        if k not in grid:
            raise InvalidSpec(f"{metric} not evaluated; grid is {grid}")
        table = {Scheme.GOLD_FULL: self.gold, Scheme.TRADITIONAL_RAND: self.traditional, Scheme.URE: self.ure}[scheme]
        return table[:, grid.index(k)]


def evaluate_family(
    family: Family,
    rand: Mapping[int, LabeledExposure],
    catalog: Catalog,
    k_grid: Sequence[int],
    kbar_grid: Sequence[int],
    full: Optional[Mapping[int, LabeledExposure]] = None,
    nbar: Optional[int] = None,
    workers: Optional[int] = None,
) -> ModelFamilyResult:
    """Macro Recall@K (gold, when D_full is given), Recall@K̄ and URE@K for every model.

    URE is undefined at K = item_count (no (K+1)-th item); that column is NaN.
    """
    k_grid = sorted(set(int(k) for k in k_grid))
    kbar_grid = sorted(set(int(k) for k in kbar_grid))
    ure_grid = [k for k in k_grid if k < catalog.item_count]

    def run(label: str):
        preds = family[label]
        gold = np.full(len(k_grid), np.nan)
        if full is not None:
            gold = np.array([r.macro_mean for r in evaluate_scheme_grid(Scheme.GOLD_FULL, full, preds, k_grid, catalog, workers=1)])
        trad = np.array([r.macro_mean for r in evaluate_scheme_grid(Scheme.TRADITIONAL_RAND, rand, preds, kbar_grid, catalog, workers=1)])
        ure = np.full(len(k_grid), np.nan)
        if ure_grid:
            values = [r.macro_mean for r in evaluate_scheme_grid(Scheme.URE, rand, preds, ure_grid, catalog, workers=1)]
            ure[: len(ure_grid)] = values
        return gold, trad, ure

    labels = list(family)
    workers = workers or config.default_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, labels))
    else:
        rows = [run(label) for label in labels]

    logger.info(f"family models={len(labels)} nbar={nbar} k_grid={k_grid} kbar_grid={kbar_grid}")
    return ModelFamilyResult(
        labels=labels,
        k_grid=k_grid,
        kbar_grid=kbar_grid,
        gold=np.vstack([r[0] for r in rows]),
        traditional=np.vstack([r[1] for r in rows]),
        ure=np.vstack([r[2] for r in rows]),
        nbar=nbar,
    )


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation; zero variance raises UndefinedCorrelation."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InvalidSpec(f"pearson needs two equal-length vectors of length >= 2, got {x.shape} and {y.shape}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise UndefinedCorrelation("non-finite value in correlation input")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelation("zero variance")
    return float(stats.pearsonr(x, y).statistic)


def _maybe_pearson(xs, ys) -> Optional[float]:
    try:
        return pearson(xs, ys)
    except UndefinedCorrelation:
        return None


def _argmax_k(grid: Sequence[int], values: Sequence[Optional[float]]) -> Optional[int]:
    """K of the largest defined value; ties go to the smallest K."""
    best_k, best = None, None
    for k, v in zip(grid, values):
        if v is not None and (best is None or v > best):
            best_k, best = k, v
    return best_k


def _curve(fixed: str, grid: List[int], values: List[Optional[float]], nbar: Optional[int]) -> CorrelationCurve:
    k_max = _argmax_k(grid, values)
    if k_max is None:
        raise EmptyCurve(f"every point of the {fixed} curve is undefined")
    return CorrelationCurve(fixed=fixed, nbar=nbar, k_grid=grid, pearson_r=values, k_max=k_max)


def correlation_sweep(family: ModelFamilyResult, fixed: str, k_grid: Optional[Sequence[int]] = None) -> CorrelationCurve:
    """r(fixed metric, Recall@K) across models for every K on the grid."""
    grid = list(k_grid) if k_grid is not None else list(family.k_grid)
    anchor = family.column(fixed)
    if np.isfinite(anchor).all() and np.ptp(anchor) == 0:
        raise UndefinedCorrelation(f"{fixed} has zero variance across the family")
    values = [_maybe_pearson(anchor, family.column(f"full@{k}")) for k in grid]
    curve = _curve(fixed, grid, values, family.nbar)
    logger.info(f"curve fixed={fixed} nbar={family.nbar} k_max={curve.k_max} r_max={curve.r_at(curve.k_max):.4f}")
    return curve


def scheme_contrast(
    family: ModelFamilyResult, kbar_values: Sequence[int], k_grid: Optional[Sequence[int]] = None
) -> List[CorrelationCurve]:
    """Per K: r(URE@K, Recall@K) (curve 'ure@K'), then r(Recall@K̄, Recall@K) for each K̄."""
    grid = list(k_grid) if k_grid is not None else list(family.k_grid)
    diagonal = [_maybe_pearson(family.column(f"ure@{k}"), family.column(f"full@{k}")) for k in grid]
    curves = [_curve("ure@K", grid, diagonal, family.nbar)]
    curves += [correlation_sweep(family, f"rand@{kbar}", grid) for kbar in kbar_values]
    return curves


def ure_vs_gold_matrix(family: ModelFamilyResult, k_targets: Sequence[int]) -> CorrelationMatrix:
    """r(URE@K_i, Recall@K_j) for every pair of targets, with each row's argmax column."""
    targets = list(k_targets)
    values = [
        [_maybe_pearson(family.column(f"ure@{ki}"), family.column(f"full@{kj}")) for kj in targets] for ki in targets
    ]
    return CorrelationMatrix(
        row_metrics=[f"ure@{k}" for k in targets],
        col_k=targets,
        values=values,
        row_argmax=[_argmax_k(targets, row) for row in values],
    )


# -------- synthetic pipelines --------
def synthetic_family_result(
    world: SyntheticWorld,
    specs: Sequence[ScorerSpec],
    nbar: int,
    k_grid: Sequence[int],
    kbar_grid: Sequence[int],
    seed: int,
    predictions: Optional[Family] = None,
    workers: Optional[int] = None,
) -> ModelFamilyResult:
    predictions = predictions if predictions is not None else make_family(world, list(specs))
    rand = sample_random_exposure(world.full, nbar, seed)
    return evaluate_family(predictions, rand, world.catalog, k_grid, kbar_grid, full=world.full, nbar=nbar, workers=workers)


def nbar_sweep(
    world: SyntheticWorld,
    specs: Sequence[ScorerSpec],
    nbar_values: Sequence[int],
    kbar: int,
    seed: int,
    k_grid: Optional[Sequence[int]] = None,
    workers: Optional[int] = None,
) -> List[CorrelationCurve]:
    """One r(Recall@K̄, Recall@K) curve per N̄, K̄ fixed, same scorer family throughout."""
    grid = list(k_grid) if k_grid is not None else default_k_grid(world.catalog.item_count)
    predictions = make_family(world, list(specs))
    curves = []
    for nbar in nbar_values:
        family = synthetic_family_result(world, specs, nbar, grid, [kbar], seed, predictions, workers)
        curves.append(correlation_sweep(family, f"rand@{kbar}", grid))
    logger.info(f"nbar sweep kbar={kbar} nbar={list(nbar_values)} k_max={[c.k_max for c in curves]}")
    return curves


def kbar_sweep(
    world: SyntheticWorld,
    specs: Sequence[ScorerSpec],
    nbar: int,
    kbar_values: Sequence[int],
    seed: int,
    k_grid: Optional[Sequence[int]] = None,
    workers: Optional[int] = None,
) -> List[CorrelationCurve]:
    """One curve per K̄ on a single D_rand sample of size N̄."""
    grid = list(k_grid) if k_grid is not None else default_k_grid(world.catalog.item_count)
    family = synthetic_family_result(world, specs, nbar, grid, kbar_values, seed, workers=workers)
    curves = [correlation_sweep(family, f"rand@{kbar}", grid) for kbar in kbar_values]
    logger.info(f"kbar sweep nbar={nbar} kbar={list(kbar_values)} k_max={[c.k_max for c in curves]}")
    return curves


def ure_vs_gold_report(
    world: SyntheticWorld,
    specs: Sequence[ScorerSpec],
    k_targets: Sequence[int],
    nbar: int,
    seed: int,
    workers: Optional[int] = None,
) -> CorrelationMatrix:
    family = synthetic_family_result(world, specs, nbar, k_targets, [1], seed, workers=workers)
    matrix = ure_vs_gold_matrix(family, sorted(set(k_targets)))
    logger.info(f"ure matrix targets={matrix.col_k} row_argmax={matrix.row_argmax}")
    return matrix


# -------- model comparison --------
def _kendall(xs: np.ndarray, ys: np.ndarray) -> Optional[float]:
    if xs.size < 2 or np.ptp(xs) == 0 or np.ptp(ys) == 0:
        return None
    tau = stats.kendalltau(xs, ys).statistic
    return None if np.isnan(tau) else float(tau)


def compare_models(
    family: Family,
    rand: Mapping[int, LabeledExposure],
    catalog: Catalog,
    k: int,
    kbar: int,
    full: Optional[Mapping[int, LabeledExposure]] = None,
    skip_policy: SkipPolicy = SkipPolicy.SKIP,
) -> ComparisonTable:
    """Per-model traditional Recall@K̄, gold Recall@K (when D_full is given) and URE@K,
    the model order under each scheme, and each order's Kendall τ against the
    gold order (or the URE order when there is no D_full)."""
    columns: Dict[str, Dict[str, float]] = {"rand": {}, "ure": {}}
    if full is not None:
        columns["full"] = {}
    for label, preds in family.items():
        columns["rand"][label] = evaluate_scheme_grid(Scheme.TRADITIONAL_RAND, rand, preds, [kbar], catalog, skip_policy)[0].macro_mean
        columns["ure"][label] = evaluate_scheme_grid(Scheme.URE, rand, preds, [k], catalog, skip_policy)[0].macro_mean
        if full is not None:
            columns["full"][label] = evaluate_scheme_grid(Scheme.GOLD_FULL, full, preds, [k], catalog, skip_policy)[0].macro_mean

    labels = list(family)
    reference = "full" if full is not None else "ure"
    ref_values = np.array([columns[reference][m] for m in labels])
    order = {name: sorted(labels, key=lambda m: (-values[m], m)) for name, values in columns.items()}
    tau = {name: _kendall(np.array([values[m] for m in labels]), ref_values) for name, values in columns.items()}

    rows = [
        ComparisonRow(
            model=m,
            traditional=columns["rand"][m],
            gold=columns["full"][m] if full is not None else None,
            ure=columns["ure"][m],
        )
        for m in labels
    ]
    logger.info(f"compare models={len(labels)} k={k} kbar={kbar} reference={reference} tau={tau}")
    return ComparisonTable(k=k, kbar=kbar, rows=rows, order=order, kendall_tau=tau, reference=reference)
