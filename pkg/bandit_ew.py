"""Exponential weights for kernel losses under bandit feedback."""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import softmax
from tqdm import tqdm

from design import (DiscreteDistribution, action_covariance, centering_offset, d_optimal_design,
                    invert_covariance, mix_distributions, reduce_to_span, sample_covariance, whiten)
from errors import HorizonTooShortError, InputError, PreconditionError
from hparams import hparams
from kernel import as_points, loss_eval, loss_vector
from mercer_proxy import effective_dimension
from utils import normalize_log_weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BanditConfig:
    eta: float
    gamma: float
    m: int
    eps: float
    n: int

    def __post_init__(self):
        if not self.eta > 0:
            raise InputError('eta must be positive, got {}'.format(self.eta))
        if not 0 < self.gamma <= 1:
            raise InputError('gamma must lie in (0, 1], got {}'.format(self.gamma))
        if self.m < 1 or self.n < 1 or self.eps < 0:
            raise InputError('Need m >= 1, n >= 1 and eps >= 0')

    def regret_bound(self, G, num_actions):
        """Upper bound of the main bandit regret theorem at these parameters."""
        eta, gamma, m, eps, n = self.eta, self.gamma, self.m, self.eps, self.n
        return (4.0 * gamma * G ** 2 * n + (math.e - 2.0) * G ** 4 * eta * m * n + 2.0 * eps * n
                + 2.0 * eps * n / (G ** 2 * eta) + math.log(num_actions) / eta)

    def to_dict(self):
        return {'eta': self.eta, 'gamma': self.gamma, 'm': self.m, 'eps': self.eps, 'n': self.n}


def _check_horizon(n, num_actions):
    if n < 2 or num_actions < 2:
        raise InputError('Need n >= 2 and at least two actions, got n={} and |A|={}'.format(n, num_actions))


def _mixing_coefficient(eta, G, m, n):
    gamma = 4.0 * eta * G ** 4 * m
    if gamma > 1.0:
        raise HorizonTooShortError('Mixing coefficient gamma = 4 eta G^4 m = {:.4g} exceeds 1; the regret '
                                   'theorem needs gamma <= 1, increase the horizon n (now {})'.format(gamma, n))
    return gamma


def configure_bandit(profile, n, num_actions, G=1.0):
    """Corollary schedule: eps = log|A| / 2n, m from the eigendecay, eta = sqrt(eps / 10m)."""
    _check_horizon(n, num_actions)
    eps = math.log(num_actions) / (2.0 * n)
    if eps > G ** 2:
        raise PreconditionError('eps = {:.4g} exceeds G^2 = {:.4g}; the regret theorem needs eps <= G^2'.format(
            eps, G ** 2))
    if not profile.supports_corollary:
        logger.warning('Polynomial eigendecay with beta = %.3g <= 2: the corollary rate does not apply',
                       profile.beta)
    if G != 1.0:
        logger.info('G = %.4g != 1: using the general theorem schedule, corollary constants are not checked', G)

    m = effective_dimension(profile, eps)
    eta = math.sqrt(eps / (10.0 * m))
    gamma = _mixing_coefficient(eta, G, m, n)
    config = BanditConfig(eta, gamma, m, eps, n)
    logger.info('Bandit schedule: %s', config.to_dict())
    return config


def configure_bandit_finite(m, n, num_actions, G=1.0):
    """Schedule for exact finite features (eps = 0) minimizing the theorem's bound over eta."""
    _check_horizon(n, num_actions)
    eta = math.sqrt(math.log(num_actions) / ((16.0 * G ** 6 + (math.e - 2.0) * G ** 4) * m * n))
    gamma = _mixing_coefficient(eta, G, m, n)
    return BanditConfig(eta, gamma, m, 0.0, n)


def corollary_regret_bound(profile, n, num_actions):
    """Closed-form corollary rates (stated for G = 1)."""
    log_a = math.log(num_actions)
    C, beta, B = profile.C, profile.beta, profile.eigfn_bound
    if profile.kind == 'polynomial':
        return (math.sqrt(160.0) * (2.0 ** (beta + 2) * C * B ** 2 / (beta - 1.0)) ** (1.0 / (2.0 * (beta - 1.0)))
                * log_a ** ((beta - 2.0) / (2.0 * (beta - 1.0))) * n ** (beta / (2.0 * (beta - 1.0))))
    return math.sqrt(320.0 * log_a / beta * math.log(40.0 * C * B ** 2 * n / (beta * log_a)) * n)


@dataclass(frozen=True, eq=False)
class WeightState:
    log_weights: np.ndarray
    round: int = 0

    def __post_init__(self):
        log_weights = np.array(self.log_weights, dtype=np.float64).ravel()
        if not np.all(np.isfinite(log_weights)):
            raise InputError('Log weights must be finite')
        log_weights.setflags(write=False)
        object.__setattr__(self, 'log_weights', log_weights)

    @classmethod
    def uniform(cls, size):
        return cls(np.zeros(size))

    def probabilities(self):
        return softmax(self.log_weights)

    def distribution(self):
        return DiscreteDistribution(self.probabilities())

    def update(self, losses, eta):
        log_weights = self.log_weights - eta * np.asarray(losses, dtype=np.float64)
        return WeightState(normalize_log_weights(log_weights), self.round + 1)


@dataclass(frozen=True, eq=False)
class RoundRecord:
    action_index: int
    action: np.ndarray
    loss: float
    min_eig: float = float('nan')
    est_norm: float = float('nan')
    est_max: float = float('nan')
    bias_norm: float = float('nan')
    num_atoms: int = 0


def estimate_adversary(sigma_inv, phi_a, observed_loss):
    sigma_inv = np.asarray(sigma_inv, dtype=np.float64)
    phi_a = np.asarray(phi_a, dtype=np.float64)
    if sigma_inv.shape != (phi_a.shape[0], phi_a.shape[0]):
        raise InputError('Covariance inverse {} does not match feature dimension {}'.format(
            sigma_inv.shape, phi_a.shape[0]))
    return observed_loss * (sigma_inv @ phi_a)


class BanditExpWeights:
    """Exponential weights over a finite action set with proxy features.

    Proxy features are reduced to their span and whitened once so that the
    exploration design has covariance I / m; every covariance built from a
    gamma-mixture then has its smallest eigenvalue at or above gamma / m.
    """
    def __init__(self, kernel, actions, basis, config, exploration=None, covariance='exact',
                 covariance_samples=None, track_bias=False):
        self._kernel = kernel
        self._actions = as_points(actions)
        self._basis = basis
        self._config = config
        self._covariance = covariance
        self._covariance_samples = covariance_samples
        self._track_bias = track_bias

        if covariance not in ('exact', 'sampled'):
            raise InputError('covariance must be "exact" or "sampled", got {}'.format(covariance))
        if covariance == 'sampled' and not covariance_samples:
            raise InputError('Sampled covariance needs covariance_samples')

        features, self._span = reduce_to_span(basis.features(self._actions))
        if features.shape[1] < basis.m:
            logger.warning('Proxy features span only %d of %d dimensions; m reduced', features.shape[1], basis.m)

        self._exploration = d_optimal_design(features) if exploration is None else exploration
        if len(self._exploration) != self._actions.shape[0]:
            raise InputError('Exploration design covers {} actions, action set has {}'.format(
                len(self._exploration), self._actions.shape[0]))
        self._features, self._transform = whiten(features, self._exploration)
        self._floor = hparams.floor_fraction * config.gamma / self.m

        offset = centering_offset(self._features, self._exploration)
        if offset > 1e-6:
            logger.info('Exploration design is not centered: weighted feature mean has norm %.3g', offset)

    @property
    def m(self):
        return self._features.shape[1]

    @property
    def features(self):
        return self._features

    @property
    def exploration(self):
        return self._exploration

    @property
    def actions(self):
        return self._actions

    def proxy_features(self, X):
        """Span-reduced, whitened proxy features of arbitrary points."""
        return self._basis.features(X) @ self._span @ self._transform.T

    def adversary_features(self, y):
        """Coordinates of the rank-one action Phi(y) in the whitened space.

        Whitening is not orthogonal, so the adversary transforms by T^{-T} to keep
        <proxy_features(a), adversary_features(y)> equal to the proxy kernel value.
        """
        reduced = self._basis.features(np.asarray(y, dtype=np.float64).reshape(1, -1))[0] @ self._span
        return linalg.solve(self._transform.T, reduced)

    def initial_state(self):
        return WeightState.uniform(self._actions.shape[0])

    def bandit_round(self, state, adversary_action, rng):
        if state.round >= self._config.n:
            raise InputError('Round {} is past the horizon n = {}'.format(state.round, self._config.n))

        q = state.distribution()
        p = mix_distributions(q, self._exploration, self._config.gamma)
        index = p.sample(rng)
        action = self._actions[index]
        loss = loss_eval(self._kernel, action, adversary_action)

        if self._covariance == 'exact':
            sigma = action_covariance(p, self._features)
        else:
            sigma = sample_covariance(p, self._features, self._covariance_samples, rng)
        sigma_inv = invert_covariance(sigma, self._floor)
        estimate = estimate_adversary(sigma_inv, self._features[index], loss)
        estimated_losses = self._features @ estimate

        bias_norm = float('nan')
        if self._track_bias and adversary_action.is_rank_one:
            losses = loss_vector(self._kernel, self._actions, adversary_action)
            expected = sigma_inv @ (self._features.T @ (p.weights * losses))
            target = self.adversary_features(adversary_action.vector)
            bias_norm = float(np.linalg.norm(expected - target))

        record = RoundRecord(index, action, loss, min_eig=sigma.min_eig, est_norm=float(np.linalg.norm(estimate)),
                             est_max=float(self._config.eta * np.max(np.abs(estimated_losses))),
                             bias_norm=bias_norm)
        return state.update(estimated_losses, self._config.eta), record

    def __call__(self, state, adversary_action, rng):
        return self.bandit_round(state, adversary_action, rng)

    def run(self, schedule, rng, progress=False):
        state = self.initial_state()
        records = []
        for adversary_action in tqdm(schedule, disable=not progress):
            state, record = self.bandit_round(state, adversary_action, rng)
            records.append(record)
        return state, records
