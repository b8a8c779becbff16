import math

import numpy as np
import pytest

from src.adoption.dataset import AdoptionEvent, UserMeta, build_dataset
from src.adoption.errors import DegenerateSplitError
from src.adoption.evaluation import (
    MODEL_TAGS,
    assign_folds,
    activity_buckets,
    activity_trend,
    candidate_items,
    cross_validate,
    decompose_items,
    recall_at_x,
)
from src.adoption.model import ModelState, fit
from src.adoption.synthetic import generate_synthetic
from src.services.config_schema import HyperParams, SurfingParams, SyntheticParams

XS = (1, 3, 5, 10)


@pytest.mark.parametrize(
    "ranked,adopted,X,expected",
    [
        ([0, 1, 2], {0, 1, 2}, 3, 1.0),
        ([0, 1, 2, 3], {3}, 3, 0.0),
        ([0, 1, 2, 3], {0, 3}, 3, 0.5),
        ([7], {7, 8}, 3, 0.5),
    ],
)
def test_recall_at_x_examples(ranked, adopted, X, expected):
    assert recall_at_x(ranked, adopted, X) == expected


def test_recall_at_x_rejects_empty_adoptions_and_bad_x():
    with pytest.raises(ValueError):
        recall_at_x([1, 2], set(), 1)
    with pytest.raises(ValueError):
        recall_at_x([1, 2], {1}, 0)


def test_fold_partition_is_exact_and_seeded(synthetic_small):
    dataset, _ = synthetic_small
    split = assign_folds(dataset, 5, seed=3)
    again = assign_folds(dataset, 5, seed=3)
    for i in range(dataset.n_users):
        sizes = split.fold_sizes(i)
        assert sizes.sum() == dataset.adopted_items(i).size
        assert sizes.max() - sizes.min() <= 1
        np.testing.assert_array_equal(split.assignment[i], again.assignment[i])


def test_fold_count_must_allow_a_split(tiny_dataset):
    with pytest.raises(ValueError):
        assign_folds(tiny_dataset, 1, seed=0)


def test_candidates_never_contain_training_adoptions(tiny_dataset):
    # alice holds out i2; i1 stays in training
    cands = candidate_items(tiny_dataset, 0, np.array([1]))
    assert cands.tolist() == [1, 2]
    # carol's unexposed adoption can still be a test item
    assert candidate_items(tiny_dataset, 2, np.array([3])).tolist() == [1, 2, 3]


def test_degenerate_fold_is_an_error(tiny_dataset, hyper, surfing):
    # two adoptions per user cannot fill five folds
    with pytest.raises(DegenerateSplitError, match="fold 2"):
        cross_validate(tiny_dataset, hyper, surfing, ["random"], XS, seed=0)


def test_unknown_model_tag(tiny_dataset, hyper, surfing):
    with pytest.raises(ValueError, match="popularity"):
        cross_validate(tiny_dataset, hyper, surfing, ["popularity"], XS, seed=0)


@pytest.fixture(scope="module")
def small_reports():
    params = SyntheticParams(n_users=30, n_items=40, K=3, exposure_density=0.3)
    dataset, _ = generate_synthetic(params, SurfingParams(), seed=7)
    hyper = HyperParams(
        K=3, lambda_u=0.1, lambda_theta=0.1, lambda_eta=1.0, max_iters=30
    )
    reports = cross_validate(
        dataset, hyper, SurfingParams(), list(MODEL_TAGS), XS, seed=5, fold_count=3
    )
    return dataset, hyper, reports


def test_reports_cover_every_model(small_reports):
    _, _, reports = small_reports
    assert [r.model_tag for r in reports] == ["vip", "random", "fitness", "relevance"]
    for report in reports:
        assert sorted(report.recall_at) == list(XS)


def test_recall_bounds_and_monotone_in_x(small_reports):
    _, _, reports = small_reports
    for report in reports:
        values = [report.recall_at[X] for X in XS]
        assert all(0.0 <= v <= 1.0 for v in values)
        assert values == sorted(values)


def test_global_mean_is_mean_of_users(small_reports):
    dataset, _, reports = small_reports
    for report in reports:
        per_user = [s.recalls[1] for s in report.per_user.values()]
        assert report.recall_at[3] == pytest.approx(np.mean(per_user))
        assert len(report.per_user) + report.skipped_users == dataset.n_users


def test_cross_validation_is_deterministic(small_reports):
    dataset, hyper, reports = small_reports
    again = cross_validate(
        dataset, hyper, SurfingParams(), list(MODEL_TAGS), XS, seed=5, fold_count=3
    )
    threaded = cross_validate(
        dataset,
        hyper,
        SurfingParams(),
        list(MODEL_TAGS),
        XS,
        seed=5,
        fold_count=3,
        threads=3,
    )
    for a, b, c in zip(reports, again, threaded):
        assert a.recall_at == b.recall_at == c.recall_at
        assert a.records == b.records == c.records


def test_one_bucket_equals_global_mean(small_reports):
    _, _, reports = small_reports
    for report in reports:
        (bucket,) = activity_buckets(report, [0], X=3)
        assert bucket.n_users == len(report.per_user)
        assert bucket.mean == pytest.approx(report.recall_at[3])
        assert bucket.label == "[0,inf)"


def test_empty_buckets_are_kept(small_reports):
    _, _, reports = small_reports
    buckets = activity_buckets(reports[0], [1000, 2000], X=3)
    assert [b.label for b in buckets] == ["[0,1000)", "[1000,2000)", "[2000,inf)"]
    assert buckets[1].n_users == 0
    assert buckets[1].mean is None and buckets[1].std is None
    assert reports[0].activity_buckets, "cross_validate fills default buckets"


def test_bucket_arguments_are_validated(small_reports):
    _, _, reports = small_reports
    with pytest.raises(ValueError, match="increasing"):
        activity_buckets(reports[0], [4, 2], X=3)
    with pytest.raises(ValueError, match="recall@7"):
        activity_buckets(reports[0], [1, 2], X=7)


def test_missing_bucket_recall_is_logged(synthetic_small, hyper, surfing, caplog):
    dataset, _ = synthetic_small
    with caplog.at_level("WARNING", logger="src.adoption.evaluation"):
        (report,) = cross_validate(
            dataset, hyper, surfing, ["random"], [1], seed=0, bucket_x=3
        )
    assert report.activity_buckets == []
    assert "random: no activity buckets, recall@3 was not computed" in caplog.text


def test_activity_trend_uses_non_empty_buckets(small_reports):
    _, _, reports = small_reports
    buckets = activity_buckets(reports[0], [0, 1000], X=3)
    assert math.isnan(activity_trend(buckets))


def test_decomposition_single_adopter():
    dataset = build_dataset(
        [AdoptionEvent("u", "i", 0, True)], [UserMeta("u", 1, 1)], [("u", "j")]
    )
    state = ModelState(
        U=np.array([[1.0]]),
        Theta=np.array([[0.2, 0.7]]),
        eta=np.array([0.1, 0.9]),
        v=np.array([0.4]),
    )
    result = decompose_items(state, dataset)
    # "j" was only seen, never adopted
    (row,) = result.items
    assert row.item_id == "i"
    assert row.cascade_size == 1
    assert row.expected_visibility == pytest.approx(0.4)
    assert row.expected_relevance == pytest.approx(0.2)
    assert row.expected_fitness == pytest.approx(0.1)
    assert row.expected_quality == pytest.approx(0.3)
    assert math.isnan(result.fitness_correlation)


def test_decomposition_averages_over_adopters(tiny_dataset):
    rng = np.random.default_rng(0)
    state = ModelState(
        U=rng.normal(size=(2, 3)),
        Theta=rng.normal(size=(2, 4)),
        eta=np.array([0.5, 0.2, -0.1, 0.0]),
        v=np.array([0.9, 0.6, 0.3]),
    )
    result = decompose_items(state, tiny_dataset)
    assert [d.item_id for d in result.items] == ["i1", "i2", "i3", "i4"]
    assert [d.cascade_size for d in result.items] == [2, 2, 1, 1]
    # i1 and i2 have adopters {alice, carol} and {alice, bob}
    assert result.items[0].expected_visibility == pytest.approx(0.6)
    assert result.items[1].expected_visibility == pytest.approx(0.75)


def test_identical_adopter_sets_share_visibility():
    events = [AdoptionEvent(u, j, 0, True) for u in ("a", "b") for j in ("x", "y")]
    dataset = build_dataset(events, [UserMeta("a", 1, 1), UserMeta("b", 9, 1)])
    rng = np.random.default_rng(1)
    state = ModelState(
        U=rng.normal(size=(2, 2)),
        Theta=rng.normal(size=(2, 2)),
        eta=np.zeros(2),
        v=np.array([0.8, 0.2]),
    )
    first, second = decompose_items(state, dataset).items
    assert first.expected_visibility == second.expected_visibility


# Acceptance-scale checks on generator data


ACCEPT_HYPER = HyperParams(
    K=5,
    lambda_u=0.5,
    lambda_theta=0.5,
    lambda_eta=0.25,
    conf_b=0.3,
    tol=1e-5,
    max_iters=100,
)


@pytest.mark.slow
def test_vip_beats_relevance_beats_random():
    params = SyntheticParams(
        n_users=200, n_items=500, K=5, rho_max=100.0, topic_strength=1.0
    )
    means = {tag: [] for tag in ("vip", "relevance", "random")}
    for seed in range(3):
        dataset, _ = generate_synthetic(params, SurfingParams(), seed=seed)
        reports = cross_validate(
            dataset, ACCEPT_HYPER, SurfingParams(), list(means), [3], seed=seed
        )
        for report in reports:
            means[report.model_tag].append(report.recall_at[3])
    vip, rel, rnd = (float(np.mean(means[t])) for t in ("vip", "relevance", "random"))
    assert vip > rel > rnd
    assert vip >= 2 * rnd


@pytest.mark.slow
def test_activity_trend_of_vip_and_random():
    params = SyntheticParams(n_users=200, n_items=500, K=5)
    dataset, _ = generate_synthetic(params, SurfingParams(), seed=11)
    vip, rnd = cross_validate(
        dataset,
        ACCEPT_HYPER,
        SurfingParams(),
        ["vip", "random"],
        [3],
        seed=11,
        boundaries=list(range(1, 60)),
    )
    assert sum(b.n_users > 0 for b in rnd.activity_buckets) >= 10
    assert activity_trend(vip.activity_buckets) > 0
    assert abs(activity_trend(rnd.activity_buckets)) <= 0.3


@pytest.mark.slow
def test_learned_fitness_tracks_cascade_size():
    params = SyntheticParams(
        n_users=200, n_items=500, K=5, lambda_u=100.0, lambda_eta=0.25
    )
    dataset, _ = generate_synthetic(params, SurfingParams(), seed=5)
    state = fit(dataset, ACCEPT_HYPER, SurfingParams(), seed=5).state
    result = decompose_items(state, dataset)
    assert result.fitness_correlation > 0
