import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bandit_ew import (BanditConfig, BanditExpWeights, WeightState, configure_bandit, configure_bandit_finite,
                       corollary_regret_bound, estimate_adversary)
from design import DiscreteDistribution, action_covariance, invert_covariance
from errors import HorizonTooShortError, IllConditionedCovarianceError, InputError, PreconditionError
from harness import _explicit_basis, best_in_hindsight
from kernel import LINEAR, AdversaryAction, KernelSpec
from mercer_proxy import EXPONENTIAL_DECAY, POLYNOMIAL_DECAY, EigendecayProfile, effective_dimension
from utils import make_rng

LINEAR_KERNEL = KernelSpec(LINEAR)


def _unit_rows(rng, count, d):
    x = rng.standard_normal((count, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _player(actions, eta, gamma, n, **kwargs):
    basis = _explicit_basis(LINEAR_KERNEL, actions)
    config = BanditConfig(eta, gamma, basis.m, 0.0, n)
    return BanditExpWeights(LINEAR_KERNEL, actions, basis, config, **kwargs)


def test_configure_bandit_schedule():
    profile = EigendecayProfile(EXPONENTIAL_DECAY, 1.0, 1.0, 1.0)
    config = configure_bandit(profile, 10000, 20)
    eps = math.log(20) / 20000
    assert_allclose(config.eps, eps, rtol=1e-12)
    assert config.m == effective_dimension(profile, eps)
    assert_allclose(config.eta, math.sqrt(eps / (10 * config.m)), rtol=1e-12)
    assert_allclose(config.gamma, 4 * config.eta * config.m, rtol=1e-12)


def test_configure_bandit_short_horizon():
    profile = EigendecayProfile(EXPONENTIAL_DECAY, 1.0, 1.0, 1.0)
    with pytest.raises(HorizonTooShortError) as info:
        configure_bandit(profile, 2, 7)
    assert info.value.exit_code == 3

    with pytest.raises(PreconditionError):
        configure_bandit(profile, 2, 7, G=0.1)
    with pytest.raises(InputError):
        configure_bandit(profile, 1, 7)


def test_configure_bandit_finite():
    config = configure_bandit_finite(3, 20000, 20)
    expected = math.sqrt(math.log(20) / ((16 + math.e - 2) * 3 * 20000))
    assert_allclose(config.eta, expected, rtol=1e-12)
    assert_allclose(config.gamma, 4 * expected * 3, rtol=1e-12)
    assert config.eps == 0.0

    # eps = 0 drops the approximation terms from the bound
    bound = 4 * config.gamma * 20000 + (math.e - 2) * config.eta * 3 * 20000 + math.log(20) / config.eta
    assert_allclose(config.regret_bound(1.0, 20), bound, rtol=1e-12)


def test_bandit_config_validation():
    with pytest.raises(InputError):
        BanditConfig(0.0, 0.5, 2, 0.0, 10)
    with pytest.raises(InputError):
        BanditConfig(0.1, 1.5, 2, 0.0, 10)
    with pytest.raises(InputError):
        BanditConfig(0.1, 0.5, 0, 0.0, 10)


def test_corollary_bound_is_sublinear():
    for profile in (EigendecayProfile(EXPONENTIAL_DECAY, 1.0, 1.0, 1.0),
                    EigendecayProfile(POLYNOMIAL_DECAY, 1.0, 3.0, 1.0)):
        small = corollary_regret_bound(profile, 10000, 20)
        large = corollary_regret_bound(profile, 40000, 20)
        assert 0 < small < large < 4 * small


def test_weight_state():
    state = WeightState.uniform(4)
    assert_allclose(state.probabilities(), np.full(4, 0.25))
    state = state.update([0.0, 1.0, 2.0, 3.0], 0.5)
    assert state.round == 1
    probs = state.probabilities()
    assert_allclose(probs[0] / probs[1], math.exp(0.5))
    assert_allclose(np.sum(probs), 1.0)

    with pytest.raises(InputError):
        WeightState([0.0, np.inf])


def test_weight_state_survives_huge_losses():
    state = WeightState.uniform(3).update([1e6, 0.0, 2e6], 1.0)
    assert_allclose(state.probabilities(), [0.0, 1.0, 0.0], atol=1e-300)


def test_largest_loss_loses_relative_weight(rng):
    state = WeightState.uniform(5)
    ratio = 1.0
    for _ in range(50):
        losses = rng.standard_normal(5)
        losses[0] = np.max(losses[1:]) + 1.0
        state = state.update(losses, 0.1)
        probs = state.probabilities()
        new_ratio = probs[0] / np.max(probs[1:])
        assert new_ratio < ratio
        ratio = new_ratio


def test_estimate_adversary_examples():
    assert_array_equal(estimate_adversary(np.eye(2), [1.0, 0.0], 0.0), [0.0, 0.0])
    assert_allclose(estimate_adversary(np.eye(2), [1.0, 0.0], 0.5), [0.5, 0.0])
    with pytest.raises(InputError):
        estimate_adversary(np.eye(3), [1.0, 0.0], 0.5)


def test_estimator_is_unbiased():
    rng = np.random.default_rng(5)
    for _ in range(100):
        features = rng.standard_normal((10, 3))
        p = DiscreteDistribution(rng.dirichlet(np.ones(10)))
        w = rng.standard_normal(3)
        sigma_inv = invert_covariance(action_covariance(p, features), 0.0)
        total = sum(p.weights[i] * estimate_adversary(sigma_inv, features[i], features[i] @ w)
                    for i in range(10))
        assert np.max(np.abs(total - w)) <= 1e-8


def test_single_round_single_action():
    actions = np.array([[0.6, 0.8]])
    player = _player(actions, 0.5, 0.5, 1)
    w = AdversaryAction.explicit([1.0, 0.0])
    state, records = player.run([w], make_rng(0, 'player'))
    assert records[0].action_index == 0
    assert_allclose(records[0].loss, 0.6)
    _, best = best_in_hindsight(LINEAR_KERNEL, actions, [w])
    assert_allclose(records[0].loss - best, 0.0, atol=1e-12)

    with pytest.raises(InputError):
        player.bandit_round(state, w, make_rng(0, 'player'))


def test_full_exploration_follows_design():
    actions = np.eye(2)
    player = _player(actions, 0.1, 1.0, 4000)
    w = AdversaryAction.explicit([1.0, 0.0])
    _, records = player.run([w] * 4000, make_rng(3, 'player'))
    played = np.mean([record.action_index for record in records])
    assert_allclose(player.exploration.weights, [0.5, 0.5], atol=1e-9)
    assert abs(played - 0.5) <= 0.05


def test_mass_moves_to_better_action():
    actions = np.eye(2)
    w = AdversaryAction.explicit([1.0, 0.0])
    masses = []
    for seed in range(50):
        player = _player(actions, 0.1, 0.2, 500)
        state, _ = player.run([w] * 500, make_rng(seed, 'player'))
        masses.append(state.probabilities()[1])
    assert np.mean(masses) > 0.95


def test_estimated_losses_stay_bounded():
    rng = np.random.default_rng(9)
    actions = _unit_rows(rng, 20, 3)
    basis = _explicit_basis(LINEAR_KERNEL, actions)
    config = configure_bandit_finite(basis.m, 300, 20)
    player = BanditExpWeights(LINEAR_KERNEL, actions, basis, config)
    schedule = [AdversaryAction.explicit(w) for w in _unit_rows(rng, 300, 3)]
    _, records = player.run(schedule, make_rng(1, 'player'))
    assert max(record.est_max for record in records) <= 1.0 + 1e-9
    assert min(record.min_eig for record in records) >= config.gamma / config.m - 1e-9


def test_exact_proxy_has_no_bias(rng):
    actions = _unit_rows(rng, 8, 3)
    player = _player(actions, 0.05, 0.3, 20, track_bias=True)
    schedule = [AdversaryAction.rank_one(actions[i % 8]) for i in range(20)]
    _, records = player.run(schedule, make_rng(2, 'player'))
    assert max(record.bias_norm for record in records) <= 1e-8


def test_whitened_coordinates_preserve_losses(rng):
    actions = _unit_rows(rng, 8, 3)
    player = _player(actions, 0.05, 0.3, 20)
    assert_allclose(player.proxy_features(actions), player.features, atol=1e-10)
    for y in _unit_rows(rng, 5, 3):
        assert_allclose(player.proxy_features(actions) @ player.adversary_features(y), actions @ y, atol=1e-10)


def test_runs_are_deterministic(rng):
    actions = _unit_rows(rng, 6, 2)
    schedule = [AdversaryAction.explicit(w) for w in _unit_rows(rng, 50, 2)]
    first = _player(actions, 0.1, 0.3, 50).run(schedule, make_rng(7, 'player'))
    second = _player(actions, 0.1, 0.3, 50).run(schedule, make_rng(7, 'player'))
    assert_array_equal(first[0].log_weights, second[0].log_weights)
    assert [r.action_index for r in first[1]] == [r.action_index for r in second[1]]


def test_sampled_covariance_below_floor():
    player = _player(np.eye(2), 0.1, 0.5, 10, covariance='sampled', covariance_samples=1)
    with pytest.raises(IllConditionedCovarianceError):
        player.bandit_round(player.initial_state(), AdversaryAction.explicit([1.0, 0.0]), make_rng(0, 'player'))


def test_exploration_must_span():
    with pytest.raises(InputError):
        _player(np.eye(2), 0.1, 0.5, 10, exploration=DiscreteDistribution.point_mass(2, 0))
    with pytest.raises(InputError):
        _player(np.eye(2), 0.1, 0.5, 10, covariance='sampled')


def test_hoeffding_inequality():
    # log E exp(-l X) <= (e - 2) l^2 E[X^2] - l E[X] whenever l X >= -1
    rng = np.random.default_rng(11)
    for _ in range(100):
        size = int(rng.integers(2, 10))
        p = rng.dirichlet(np.ones(size))
        lam = rng.uniform(0.01, 2.0)
        x = rng.uniform(-1.0 / lam, 3.0, size)
        lhs = math.log(np.sum(p * np.exp(-lam * x)))
        rhs = (math.e - 2) * lam ** 2 * np.sum(p * x ** 2) - lam * np.sum(p * x)
        assert lhs <= rhs + 1e-12


@pytest.mark.slow
def test_linear_bandit_regret_within_bound():
    rng = np.random.default_rng(4)
    actions = _unit_rows(rng, 20, 3)
    n = 20000
    basis = _explicit_basis(LINEAR_KERNEL, actions)
    config = configure_bandit_finite(basis.m, n, 20)
    schedule = [AdversaryAction.explicit(w) for w in _unit_rows(make_rng(0, 'adversary'), n, 3)]
    _, best = best_in_hindsight(LINEAR_KERNEL, actions, schedule)

    regrets = []
    for seed in range(20):
        player = BanditExpWeights(LINEAR_KERNEL, actions, basis, config)
        _, records = player.run(schedule, make_rng(seed, 'player'))
        regrets.append(sum(record.loss for record in records) - best)
    assert np.mean(regrets) <= config.regret_bound(1.0, 20)
