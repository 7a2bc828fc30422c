import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure repo root is on sys.path before importing ure_eval
ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

from ure_eval.core import Catalog, ExposureKind, LabeledExposure, PredictionTable  # noqa: E402


@pytest.fixture(autouse=True)
def _quiet_env(monkeypatch):
    for name in ("URE_BUDGET", "URE_LOG_LEVEL", "URE_WORKERS"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def catalog6():
    return Catalog(6)


@pytest.fixture
def ranked_by_id_preds():
    """Scores that rank a 6-item catalog by ascending id."""
    return PredictionTable(user=1, scores=-np.arange(1, 7, dtype=np.float64))


def full_exposure(user, positives, catalog):
    labels = np.zeros(catalog.item_count, dtype=np.int8)
    labels[np.asarray(list(positives), dtype=np.int64) - 1] = 1
    return LabeledExposure(user=user, items=catalog.item_ids, labels=labels, kind=ExposureKind.FULL, catalog=catalog)


def rand_exposure(user, labels, catalog):
    return LabeledExposure.from_mapping(user, labels, catalog, ExposureKind.RANDOM)
