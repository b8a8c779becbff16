import numpy as np
import pytest
from pydantic import ValidationError

from src.adoption.dataset import load_events, write_event_log
from src.adoption.distributions import visibility
from src.adoption.synthetic import adoption_rate, generate_synthetic
from src.services.config_schema import SurfingParams, SyntheticParams

SURF = SurfingParams()


def test_same_seed_gives_identical_data(synthetic_small):
    dataset, truth = synthetic_small
    params = SyntheticParams(n_users=30, n_items=40, K=3, exposure_density=0.3)
    again, truth_again = generate_synthetic(params, SURF, seed=7)
    assert again.same_as(dataset)
    np.testing.assert_array_equal(truth.U, truth_again.U)
    np.testing.assert_array_equal(truth.eta, truth_again.eta)


def test_other_seed_gives_other_data(synthetic_small):
    dataset, _ = synthetic_small
    params = SyntheticParams(n_users=30, n_items=40, K=3, exposure_density=0.3)
    other, _ = generate_synthetic(params, SURF, seed=8)
    assert not other.same_as(dataset)


def test_truth_matches_dataset_shape_and_invariants(synthetic_small):
    dataset, truth = synthetic_small
    assert (truth.n_users, truth.n_items, truth.K) == (30, 40, 3)
    assert truth.is_valid()
    assert dataset.shape == (30, 40)
    assert np.all((dataset.rho >= 0) & (dataset.rho <= 100))
    assert truth.v[0] == pytest.approx(visibility(dataset.rho[0], SURF))
    # every adoption was exposed and every item reached someone
    assert dataset.adoptions.multiply(dataset.exposure).nnz == dataset.adoptions.nnz
    assert np.all(np.diff(dataset.exposure.tocsc().indptr) >= 1)


def test_strong_user_prior_leaves_fitness_in_charge():
    params = SyntheticParams(
        n_users=50,
        n_items=30,
        K=2,
        lambda_u=1e12,
        exposure_density=0.5,
        noise_precision=1e8,
    )
    dataset, truth = generate_synthetic(params, SURF, seed=2)
    assert np.max(np.abs(truth.U)) < 1e-4
    adopted = np.flatnonzero(dataset.cascade_sizes() > 0)
    assert np.all(truth.eta[adopted] > 0)


def test_adoption_rate_lies_in_the_target_band():
    params = SyntheticParams(n_users=200, n_items=500, K=5)
    low, high = params.adoption_band
    rates = [
        adoption_rate(generate_synthetic(params, SURF, seed=s)[0]) for s in range(4)
    ]
    assert all(low <= rate <= high for rate in rates)
    # re-running the sampler lands close to the Monte-Carlo mean
    fresh = adoption_rate(generate_synthetic(params, SURF, seed=99)[0])
    assert abs(fresh - np.mean(rates)) < 0.05


def test_rate_outside_the_band_is_logged(caplog):
    params = SyntheticParams(n_users=20, n_items=20, adoption_cut=1e9)
    with caplog.at_level("WARNING", logger="src.adoption.synthetic"):
        dataset, _ = generate_synthetic(params, SURF, seed=0)
    assert adoption_rate(dataset) == 0.0
    assert "outside the target band [0.01, 0.9]" in caplog.text


def test_planted_topics_lift_on_topic_pairs():
    params = SyntheticParams(
        n_users=12, n_items=9, K=3, lambda_u=1e6, lambda_theta=1e6, topic_strength=2.0
    )
    _, truth = generate_synthetic(params, SURF, seed=3)
    relevance = truth.U.T @ truth.Theta
    on_topic = np.arange(12)[:, None] % 3 == np.arange(9)[None, :] % 3
    np.testing.assert_allclose(relevance[on_topic], 4.0, atol=0.05)
    np.testing.assert_allclose(relevance[~on_topic], 0.0, atol=0.05)


def test_topic_strength_leaves_other_draws_alone():
    plain = SyntheticParams(n_users=10, n_items=12, K=2)
    _, base = generate_synthetic(plain, SURF, seed=5)
    _, lifted = generate_synthetic(
        plain.model_copy(update={"topic_strength": 1.5}), SURF, seed=5
    )
    np.testing.assert_array_equal(lifted.eta, base.eta)
    np.testing.assert_array_equal(lifted.v, base.v)
    shift = lifted.U - base.U
    assert np.allclose(shift[np.arange(10) % 2, np.arange(10)], 1.5)
    assert np.allclose(shift.sum(axis=0), 1.5)


def test_planted_items_carry_high_fitness():
    params = SyntheticParams(n_users=40, n_items=30, planted_items=4)
    _, truth = generate_synthetic(params, SURF, seed=1)
    assert np.sum(truth.eta == params.planted_fitness) == 4


def test_event_log_round_trip(synthetic_small, tmp_path):
    dataset, _ = synthetic_small
    paths = write_event_log(dataset, tmp_path)
    assert load_events(paths["events"], paths["meta"], paths["exposures"]).same_as(
        dataset
    )


@pytest.mark.parametrize(
    "overrides",
    [
        {"exposure_density": 0.0},
        {"rho_min": 5.0, "rho_max": 1.0},
        {"n_users": 0},
        {"topic_strength": -1.0},
        {"adoption_band": (0.6, 0.2)},
    ],
)
def test_degenerate_generator_settings_are_rejected(overrides):
    with pytest.raises(ValidationError):
        SyntheticParams(**overrides)
