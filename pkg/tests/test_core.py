import numpy as np
import pytest

from conftest import full_exposure
from ure_eval.core import (
    Catalog,
    ExposureKind,
    ExposureRows,
    LabeledExposure,
    PredictionTable,
    build_ranked_catalog,
    group_exposures,
    validate_dataset,
)
from ure_eval.errors import (
    DuplicatePair,
    IncompleteFullExposure,
    InvalidItem,
    InvalidLabel,
    InvalidScore,
    InvalidSpec,
    MissingPrediction,
)


def _ranked(scores):
    catalog = Catalog(len(scores))
    preds = PredictionTable.from_mapping(1, scores, catalog)
    return build_ranked_catalog(preds, catalog)


class TestBuildRankedCatalog:
    def test_distinct_scores(self):
        assert _ranked({1: 0.9, 2: 0.5, 3: 0.7}).order.tolist() == [1, 3, 2]

    def test_full_tie_falls_back_to_id(self):
        assert _ranked({1: 0.5, 2: 0.5, 3: 0.5}).order.tolist() == [1, 2, 3]

    def test_partial_tie(self):
        assert _ranked({1: 0.5, 2: 0.9, 3: 0.5}).order.tolist() == [2, 1, 3]

    def test_rank_of_inverts_order(self):
        rng = np.random.default_rng(3)
        catalog = Catalog(50)
        ranked = build_ranked_catalog(PredictionTable(1, rng.integers(0, 5, 50).astype(float)), catalog)
        assert sorted(ranked.order.tolist()) == list(range(1, 51))
        for position, item in enumerate(ranked.order, start=1):
            assert ranked.rank_of(int(item)) == position

    def test_comparator(self):
        rng = np.random.default_rng(11)
        scores = rng.integers(0, 4, 40).astype(float)
        ranked = build_ranked_catalog(PredictionTable(1, scores), Catalog(40))
        for a, b in zip(ranked.order[:-1], ranked.order[1:]):
            sa, sb = scores[a - 1], scores[b - 1]
            assert sa > sb or (sa == sb and a < b)

    def test_deterministic(self):
        preds = PredictionTable(1, np.random.default_rng(0).standard_normal(100))
        a = build_ranked_catalog(preds, Catalog(100))
        b = build_ranked_catalog(preds, Catalog(100))
        np.testing.assert_array_equal(a.order, b.order)

    def test_invariant_under_monotone_transform(self):
        scores = np.random.default_rng(5).standard_normal(200)
        scores[::7] = scores[0]
        base = build_ranked_catalog(PredictionTable(1, scores), Catalog(200)).order
        for transformed in (np.exp(scores), 3.0 * scores + 11.0, np.arctan(scores)):
            again = build_ranked_catalog(PredictionTable(1, transformed), Catalog(200)).order
            np.testing.assert_array_equal(base, again)

    def test_missing_score(self):
        with pytest.raises(MissingPrediction) as e:
            PredictionTable.from_mapping(4, {1: 0.1, 3: 0.2}, Catalog(3))
        assert (e.value.user, e.value.item) == (4, 2)

    def test_short_table(self):
        with pytest.raises(MissingPrediction):
            build_ranked_catalog(PredictionTable(1, [0.1, 0.2]), Catalog(3))

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), float("-inf")])
    def test_non_finite_score(self, bad):
        with pytest.raises(InvalidScore) as e:
            PredictionTable(2, [0.1, bad, 0.3])
        assert e.value.item == 2

    def test_scores_are_read_only(self):
        preds = PredictionTable(1, [0.3, 0.1])
        with pytest.raises(ValueError):
            preds.scores[0] = 1.0


class TestLabeledExposure:
    def test_full_needs_every_item(self):
        catalog = Catalog(3)
        with pytest.raises(IncompleteFullExposure):
            LabeledExposure.from_mapping(1, {1: 1, 2: 0}, catalog, ExposureKind.FULL)

    def test_items_sorted(self):
        catalog = Catalog(5)
        exposure = LabeledExposure.from_mapping(1, {4: 1, 2: 0, 5: 1}, catalog, ExposureKind.RANDOM)
        assert exposure.items.tolist() == [2, 4, 5]
        assert exposure.labels.tolist() == [0, 1, 1]
        assert exposure.positives.tolist() == [4, 5]
        assert exposure.n_pos == 2 and exposure.size == 3

    def test_rejects_bad_label(self):
        with pytest.raises(InvalidLabel):
            LabeledExposure(1, np.array([1, 2]), np.array([0, 2]), ExposureKind.RANDOM, Catalog(2))

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidItem):
            LabeledExposure(1, np.array([1, 7]), np.array([0, 1]), ExposureKind.RANDOM, Catalog(6))

    def test_rejects_duplicates(self):
        with pytest.raises(DuplicatePair):
            LabeledExposure(1, np.array([3, 3]), np.array([0, 1]), ExposureKind.RANDOM, Catalog(6))

    def test_random_needs_an_item(self):
        with pytest.raises(InvalidSpec):
            LabeledExposure(1, np.array([], dtype=np.int64), np.array([]), ExposureKind.RANDOM, Catalog(6))

    def test_as_dict(self, catalog6):
        assert full_exposure(1, [2], catalog6).as_dict() == {1: 0, 2: 1, 3: 0, 4: 0, 5: 0, 6: 0}


class TestValidateDataset:
    def test_duplicate(self):
        rows = ExposureRows(users=[1, 1, 1], items=[3, 2, 3], labels=[1, 0, 0], lines=np.array([2, 3, 4]))
        summary = validate_dataset(rows, Catalog(5))
        assert len(summary.duplicates) == 1
        assert summary.duplicates[0].line == 4
        assert not summary.ok

    def test_invalid_label(self):
        rows = ExposureRows(users=[1, 1], items=[1, 2], labels=[2, 0])
        summary = validate_dataset(rows, Catalog(5))
        assert len(summary.invalid_labels) == 1
        assert summary.invalid_labels[0].label == 2

    def test_clean(self):
        rows = ExposureRows(users=[1, 1, 2], items=[1, 2, 1], labels=[1, 0, 0])
        summary = validate_dataset(rows, Catalog(2))
        assert summary.ok
        assert summary.issues() == []

    def test_out_of_range(self):
        rows = ExposureRows(users=[1, 1], items=[0, 9], labels=[1, 0])
        assert len(validate_dataset(rows, Catalog(5)).out_of_range) == 2

    def test_incomplete_full(self):
        rows = ExposureRows(users=[1, 1, 2, 2, 2], items=[1, 2, 1, 2, 3], labels=[1, 0, 0, 0, 1])
        summary = validate_dataset(rows, Catalog(3), ExposureKind.FULL)
        assert [i.user for i in summary.incomplete_users] == [1]
        assert validate_dataset(rows, Catalog(3), ExposureKind.RANDOM).ok

    def test_passing_rows_group_cleanly(self):
        rows = ExposureRows(users=[2, 1, 2, 1], items=[1, 2, 2, 1], labels=[0, 1, 1, 0])
        catalog = Catalog(2)
        assert validate_dataset(rows, catalog, ExposureKind.FULL).ok
        grouped = group_exposures(rows, catalog, ExposureKind.FULL)
        assert list(grouped) == [1, 2]
        assert grouped[1].as_dict() == {1: 0, 2: 1}
        assert grouped[2].as_dict() == {1: 0, 2: 1}
