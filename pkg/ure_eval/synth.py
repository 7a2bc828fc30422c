"""Synthetic fully-exposed worlds, random exposure sampling, and scorer
families of varying quality standing in for separately trained models.

Every draw comes from its own RNG stream keyed by (seed, purpose, ...,
user), so results do not depend on generation order and adding users leaves
existing users untouched.
"""

import logging
from dataclasses import dataclass
from math import ceil
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ure_eval.core import Catalog, ExposureKind, LabeledExposure, PredictionTable
from ure_eval.errors import InvalidSampleSize

logger = logging.getLogger(__name__)

# stream purposes
_RATE, _LATENT, _LABELS, _EXPOSURE, _NOISE, _POPULARITY = range(1, 7)


def _rng(seed: int, purpose: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(purpose, *keys)))


class WorldSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    user_count: int = Field(..., ge=1)
    item_count: int = Field(..., ge=1)
    positive_rate: float = Field(0.2, gt=0.0, le=1.0, description="expected share of positive items per user")
    positive_rate_range: Optional[Tuple[float, float]] = Field(
        None, description="draw each user's rate uniformly from this range instead"
    )
    popularity_sigma: float = Field(1.5, ge=0.0, description="log-scale spread of item popularity")
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _rate_range(self):
        if self.positive_rate_range is not None:
            low, high = self.positive_rate_range
            if not 0.0 < low <= high <= 1.0:
                raise ValueError(f"positive_rate_range must satisfy 0 < low <= high <= 1, got {self.positive_rate_range}")
        return self


class ScorerSpec(BaseModel):
    """score = α·latent + (1−α)·noise_sd·z + β·popularity, z i.i.d. standard normal."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., ge=0.0, le=1.0, description="fidelity to the latent preference")
    noise_sd: float = Field(1.0, ge=0.0)
    popularity_weight: float = Field(0.0, ge=0.0, description="β, pull towards globally popular items")
    seed: int = Field(0, ge=0)

    @property
    def label(self) -> str:
        return f"a{self.alpha:.3f}_sd{self.noise_sd:g}_b{self.popularity_weight:g}_s{self.seed}"


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    spec: WorldSpec
    catalog: Catalog
    full: Dict[int, LabeledExposure]
    latent: np.ndarray
    popularity: np.ndarray


def generate_full(world: WorldSpec) -> SyntheticWorld:
    """Fully-exposed labels plus the latent preferences they were cut from.

    Each user draws a positive count from Binomial(N, rate) and labels the
    items with the highest latent preference positive; this is the same
    distribution as independent Bernoulli(rate) labels, and keeps α=1
    scorers perfect rankers.
    """
    n = world.item_count
    catalog = Catalog(n)
    latent = np.empty((world.user_count, n), dtype=np.float64)
    full: Dict[int, LabeledExposure] = {}

    for user in range(1, world.user_count + 1):
        rate = world.positive_rate
        if world.positive_rate_range is not None:
            rate = float(_rng(world.seed, _RATE, user).uniform(*world.positive_rate_range))
        prefs = _rng(world.seed, _LATENT, user).standard_normal(n)
        n_pos = int(_rng(world.seed, _LABELS, user).binomial(n, rate))

        labels = np.zeros(n, dtype=np.int8)
        labels[np.argsort(-prefs, kind="stable")[:n_pos]] = 1
        latent[user - 1] = prefs
        full[user] = LabeledExposure(user=user, items=catalog.item_ids, labels=labels, kind=ExposureKind.FULL, catalog=catalog)

    popularity = np.exp(world.popularity_sigma * _rng(world.seed, _POPULARITY).standard_normal(n))
    latent.setflags(write=False)
    popularity.setflags(write=False)
    logger.info(f"world users={world.user_count} items={n} rate={world.positive_rate} seed={world.seed}")
    return SyntheticWorld(spec=world, catalog=catalog, full=full, latent=latent, popularity=popularity)


def sample_random_exposure(
    full: Dict[int, LabeledExposure], nbar: int, seed: int
) -> Dict[int, LabeledExposure]:
    """Per user, N̄ distinct items drawn uniformly without replacement, labels copied from D_full.

    Streams are keyed by N̄ as well, so samples for different N̄ are independent.
    """
    out: Dict[int, LabeledExposure] = {}
    for user, exposure in sorted(full.items()):
        n = exposure.catalog.item_count
        if not 1 <= nbar <= n:
            raise InvalidSampleSize(f"N̄={nbar} outside [1, {n}]")
        items = _rng(seed, _EXPOSURE, nbar, user).choice(n, size=nbar, replace=False) + 1
        out[user] = LabeledExposure(
            user=user, items=items, labels=exposure.labels[items - 1], kind=ExposureKind.RANDOM, catalog=exposure.catalog
        )
    return out


def make_scorer(world: SyntheticWorld, spec: ScorerSpec) -> Dict[int, PredictionTable]:
    n = world.catalog.item_count
    tables: Dict[int, PredictionTable] = {}
    for user in range(1, world.spec.user_count + 1):
        noise = _rng(spec.seed, _NOISE, user).standard_normal(n) * spec.noise_sd
        scores = spec.alpha * world.latent[user - 1] + (1.0 - spec.alpha) * noise
        if spec.popularity_weight:
            scores = scores + spec.popularity_weight * world.popularity
        tables[user] = PredictionTable(user=user, scores=scores)
    return tables


def make_family(world: SyntheticWorld, specs: List[ScorerSpec]) -> Dict[str, Dict[int, PredictionTable]]:
    """Predictions per scorer, keyed by label, in spec order."""
    return {spec.label: make_scorer(world, spec) for spec in specs}


def default_family(size: int = 60, seed: int = 0) -> List[ScorerSpec]:
    """Grid over (α, noise_sd, β): 10 α levels x 2 noise levels x 3 popularity weights at size 60."""
    noise_levels = (0.5, 1.0)
    popularity_weights = (0.0, 0.05, 0.2)
    per_alpha = len(noise_levels) * len(popularity_weights)
    alphas = np.linspace(0.05, 0.95, max(1, ceil(size / per_alpha)))

    specs = []
    for alpha in alphas:
        for noise_sd in noise_levels:
            for beta in popularity_weights:
                specs.append(
                    ScorerSpec(alpha=float(alpha), noise_sd=noise_sd, popularity_weight=beta, seed=seed + len(specs))
                )
    return specs[:size]


def random_family(size: int, seed: int = 0) -> List[ScorerSpec]:
    """α=0 scorers: rankings independent of the labels."""
    return [ScorerSpec(alpha=0.0, noise_sd=1.0, seed=seed + i) for i in range(size)]


class SimulationManifest(BaseModel):
    """Index of a world written to disk: the specs that regenerate it and the files holding it."""

    world: WorldSpec
    nbar: int
    sample_seed: int
    scorers: List[ScorerSpec]
    files: Dict[str, str] = Field(..., description="role or scorer label -> path relative to the output directory")
