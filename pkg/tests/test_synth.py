import numpy as np
import pytest

from ure_eval.core import Catalog, build_ranked_catalog
from ure_eval.errors import InvalidSampleSize
from ure_eval.metrics import evaluate_scheme_grid
from ure_eval.schemas import Scheme
from ure_eval.synth import (
    ScorerSpec,
    WorldSpec,
    default_family,
    generate_full,
    make_family,
    make_scorer,
    random_family,
    sample_random_exposure,
)


@pytest.fixture(scope="module")
def small_world():
    return generate_full(WorldSpec(user_count=40, item_count=60, positive_rate=0.2, seed=5))


class TestGenerateFull:
    def test_every_item_labeled(self, small_world):
        assert len(small_world.full) == 40
        for exposure in small_world.full.values():
            assert exposure.items.tolist() == list(range(1, 61))
            assert set(exposure.labels.tolist()) <= {0, 1}

    def test_rate_one_is_all_positive(self):
        world = generate_full(WorldSpec(user_count=3, item_count=10, positive_rate=1.0, seed=2))
        assert all(e.n_pos == 10 for e in world.full.values())

    def test_same_seed_same_world(self):
        spec = WorldSpec(user_count=10, item_count=30, seed=11)
        a, b = generate_full(spec), generate_full(spec)
        np.testing.assert_array_equal(a.latent, b.latent)
        np.testing.assert_array_equal(a.popularity, b.popularity)
        for user in a.full:
            np.testing.assert_array_equal(a.full[user].labels, b.full[user].labels)

    def test_different_seed_differs(self):
        a = generate_full(WorldSpec(user_count=5, item_count=30, seed=1))
        b = generate_full(WorldSpec(user_count=5, item_count=30, seed=2))
        assert not np.array_equal(a.latent, b.latent)

    def test_adding_users_keeps_existing_ones(self):
        small = generate_full(WorldSpec(user_count=5, item_count=20, seed=4))
        large = generate_full(WorldSpec(user_count=8, item_count=20, seed=4))
        np.testing.assert_array_equal(small.latent, large.latent[:5])
        for user in range(1, 6):
            assert small.full[user].as_dict() == large.full[user].as_dict()

    def test_positive_count_matches_binomial(self):
        world = generate_full(WorldSpec(user_count=200, item_count=500, positive_rate=0.2, seed=7))
        total = sum(e.n_pos for e in world.full.values())
        trials = 200 * 500
        assert abs(total - 0.2 * trials) <= 4 * np.sqrt(trials * 0.2 * 0.8)

    def test_rate_range(self):
        world = generate_full(WorldSpec(user_count=60, item_count=200, positive_rate_range=(0.05, 0.5), seed=3))
        counts = [e.n_pos for e in world.full.values()]
        assert max(counts) - min(counts) > 30
        assert all(c <= 0.5 * 200 + 4 * np.sqrt(200 * 0.25) for c in counts)

    def test_rejects_inverted_rate_range(self):
        with pytest.raises(ValueError):
            WorldSpec(user_count=1, item_count=5, positive_rate_range=(0.5, 0.2))

    def test_arrays_read_only(self, small_world):
        with pytest.raises(ValueError):
            small_world.latent[0, 0] = 1.0


class TestSampleRandomExposure:
    def test_distinct_items_and_copied_labels(self, small_world):
        rand = sample_random_exposure(small_world.full, 12, seed=0)
        for user, exposure in rand.items():
            assert exposure.size == 12
            assert len(set(exposure.items.tolist())) == 12
            np.testing.assert_array_equal(exposure.labels, small_world.full[user].labels[exposure.items - 1])

    def test_whole_catalog_equals_full(self, small_world):
        rand = sample_random_exposure(small_world.full, 60, seed=9)
        for user, exposure in rand.items():
            assert exposure.as_dict() == small_world.full[user].as_dict()

    def test_deterministic(self, small_world):
        a = sample_random_exposure(small_world.full, 10, seed=3)
        b = sample_random_exposure(small_world.full, 10, seed=3)
        assert all(a[u].as_dict() == b[u].as_dict() for u in a)

    def test_inclusion_is_uniform(self):
        world = generate_full(WorldSpec(user_count=1, item_count=20, seed=0))
        draws = 10_000
        counts = np.zeros(21, dtype=np.int64)
        for seed in range(draws):
            counts[sample_random_exposure(world.full, 5, seed)[1].items] += 1
        p = 5 / 20
        tolerance = 4 * np.sqrt(draws * p * (1 - p))
        assert np.all(np.abs(counts[1:] - draws * p) <= tolerance)

    @pytest.mark.parametrize("nbar", [0, 61])
    def test_rejects_sample_size(self, small_world, nbar):
        with pytest.raises(InvalidSampleSize):
            sample_random_exposure(small_world.full, nbar, seed=0)


class TestScorers:
    def test_alpha_one_is_a_perfect_ranker(self, small_world):
        preds = make_scorer(small_world, ScorerSpec(alpha=1.0, popularity_weight=0.0))
        for user, exposure in small_world.full.items():
            if exposure.n_pos == 0:
                continue
            ranked = build_ranked_catalog(preds[user], small_world.catalog)
            assert ranked.ranks_of(exposure.positives).max() == exposure.n_pos

    def test_same_spec_same_scores(self, small_world):
        spec = ScorerSpec(alpha=0.4, noise_sd=0.5, popularity_weight=0.05, seed=8)
        a, b = make_scorer(small_world, spec), make_scorer(small_world, spec)
        for user in a:
            np.testing.assert_array_equal(a[user].scores, b[user].scores)

    def test_family_keyed_by_label(self, small_world):
        specs = default_family(size=6)
        family = make_family(small_world, specs)
        assert list(family) == [s.label for s in specs]

    def test_default_family_grid(self):
        specs = default_family()
        assert len(specs) == 60
        assert len({s.label for s in specs}) == 60
        assert {s.noise_sd for s in specs} == {0.5, 1.0}
        assert {s.popularity_weight for s in specs} == {0.0, 0.05, 0.2}
        assert len({s.alpha for s in specs}) == 10

    def test_default_family_truncates(self):
        assert len(default_family(size=7)) == 7

    def test_random_family_recall_is_k_over_n(self):
        world = generate_full(WorldSpec(user_count=100, item_count=200, seed=12))
        family = make_family(world, random_family(30, seed=100))
        ks = [10, 50, 100]
        means = np.array(
            [
                [r.macro_mean for r in evaluate_scheme_grid(Scheme.GOLD_FULL, world.full, preds, ks, world.catalog)]
                for preds in family.values()
            ]
        )
        for j, k in enumerate(ks):
            column = means[:, j]
            stderr = column.std(ddof=1) / np.sqrt(column.size)
            assert abs(column.mean() - k / 200) <= 4 * stderr

    def test_catalog_shared(self, small_world):
        assert small_world.catalog == Catalog(60)

    def test_higher_alpha_never_lowers_median_recall(self):
        world = generate_full(WorldSpec(user_count=200, item_count=200, positive_rate=0.2, seed=21))
        alphas = [0.0, 0.25, 0.5, 0.75, 1.0]
        medians = []
        for alpha in alphas:
            preds = make_scorer(world, ScorerSpec(alpha=alpha, noise_sd=0.5, seed=3))
            (report,) = evaluate_scheme_grid(Scheme.GOLD_FULL, world.full, preds, [20], world.catalog)
            medians.append(float(np.median(list(report.per_user.values()))))
        assert medians == sorted(medians)
        assert medians[0] < medians[-1]
