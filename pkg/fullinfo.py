"""Full-information algorithms: exponential weights, conditional gradient and the FTRL reference."""
import logging
import math
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from bandit_ew import RoundRecord, WeightState
from errors import InputError, ToleranceNotMetError
from hparams import hparams
from kernel import LINEAR, QUADRATIC, adversary_vector, as_point, as_points, feature_map, feature_matrix, \
    loss_eval, loss_vector
from quadprog import QuadraticObjective, quad_ew_sample, trs_minimize
from utils import sample_index

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnitBall:
    dim: int


def fullinfo_eta(num_actions, G, n):
    # log|A| stands in for log vol(A) on finite sets
    return math.sqrt(math.log(num_actions) / (math.e - 2.0)) / (G ** 2 * math.sqrt(n))


def fullinfo_regret_bound(num_actions, G, n):
    return math.sqrt((math.e - 2.0) * math.log(num_actions)) * G ** 2 * math.sqrt(n)


def full_info_round(state, eta, kernel, actions, w_t, rng):
    """Samples from the pre-update distribution, then charges every action its loss."""
    actions = as_points(actions)
    index = sample_index(state.probabilities(), rng)
    losses = loss_vector(kernel, actions, w_t)
    record = RoundRecord(index, actions[index], float(losses[index]))
    return state.update(losses, eta), record


class FullInfoExpWeights:
    def __init__(self, kernel, actions, eta):
        self._kernel = kernel
        self._actions = as_points(actions)
        self._eta = eta

    def initial_state(self):
        return WeightState.uniform(self._actions.shape[0])

    def __call__(self, state, w_t, rng):
        return full_info_round(state, self._eta, self._kernel, self._actions, w_t, rng)

    def run(self, schedule, rng, progress=False):
        state = self.initial_state()
        records = []
        for w_t in tqdm(schedule, disable=not progress):
            state, record = self(state, w_t, rng)
            records.append(record)
        return state, records


class QuadraticBallExpWeights:
    """Exponential weights over the unit ball for quadratic losses a^T A a + b^T a.

    The player keeps the cumulative (A, b) and samples q_t(a) ~ exp(-eta (a^T A a + b^T a))
    with the hit-and-run sampler, continuing the chain from its previous sample.
    """
    def __init__(self, kernel, dim, eta, burn_in=None, steps_per_round=None):
        if kernel.variant != QUADRATIC:
            raise InputError('Unit-ball exponential weights needs the quadratic kernel, got {}'.format(kernel.variant))
        self._kernel = kernel
        self._dim = dim
        self._eta = eta
        self._burn_in = hparams.burn_in_per_dim * dim if burn_in is None else burn_in
        self._steps_per_round = 20 * dim if steps_per_round is None else steps_per_round
        self._A = np.zeros((dim, dim))
        self._b = np.zeros(dim)
        self._last = None

    def __call__(self, w_t, rng):
        objective = QuadraticObjective(-self._eta * self._A, -self._eta * self._b)
        burn_in = self._burn_in if self._last is None else self._steps_per_round
        action = quad_ew_sample(objective, 1, burn_in, rng, start=self._last)[0]
        self._last = action
        loss = loss_eval(self._kernel, action, w_t)

        vector = adversary_vector(self._kernel, w_t)
        d = self._dim
        self._A += 0.5 * (vector[:d * d].reshape(d, d) + vector[:d * d].reshape(d, d).T)
        self._b += vector[d * d:]
        return RoundRecord(-1, action, loss)

    def run(self, schedule, rng, progress=False):
        return [self(w_t, rng) for w_t in tqdm(schedule, disable=not progress)]


@dataclass(frozen=True, eq=False)
class ConvexCombination:
    atoms: np.ndarray
    weights: np.ndarray
    indices: np.ndarray = None

    def __post_init__(self):
        atoms = as_points(self.atoms)
        weights = np.array(self.weights, dtype=np.float64).ravel()
        if weights.shape[0] != atoms.shape[0]:
            raise InputError('{} atoms but {} weights'.format(atoms.shape[0], weights.shape[0]))
        if np.any(weights < 0) or abs(np.sum(weights) - 1.0) > 1e-12:
            raise InputError('Convex weights must be nonnegative and sum to 1')
        indices = np.full(atoms.shape[0], -1, dtype=int) if self.indices is None else \
            np.asarray(self.indices, dtype=int)
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'indices', indices)

    @classmethod
    def single(cls, point, index=-1):
        return cls(as_point(point)[np.newaxis, :], np.ones(1), np.array([index]))

    def __len__(self):
        return self.weights.shape[0]

    def mean_feature(self, kernel):
        return self.weights @ feature_matrix(kernel, self.atoms)

    def sample(self, rng):
        """Draws an atom from D_t; returns (atom position, action index or -1)."""
        position = sample_index(self.weights, rng)
        return position, int(self.indices[position])

    def mix(self, point, gamma, index=-1, prune=None):
        """(1 - gamma) X + gamma Phi(point), merging equal atoms and pruning tiny weights."""
        prune = hparams.atom_prune if prune is None else prune
        point = as_point(point)
        weights = (1.0 - gamma) * self.weights
        atoms, indices = self.atoms, self.indices

        matches = np.flatnonzero(np.all(atoms == point, axis=1))
        if matches.shape[0]:
            weights[matches[0]] += gamma
        else:
            atoms = np.vstack([atoms, point])
            weights = np.append(weights, gamma)
            indices = np.append(indices, index)

        keep = weights >= prune
        weights = weights[keep]
        return ConvexCombination(atoms[keep], weights / np.sum(weights), indices[keep])


@dataclass(frozen=True)
class CGConfig:
    eta: float
    n: int

    @classmethod
    def from_theorem(cls, n):
        return cls(1.0 / (2.0 * n ** 0.75), n)

    @staticmethod
    def gamma(t):
        return min(1.0, 2.0 / math.sqrt(t))

    def regret_bound(self, G):
        return 8.0 * G ** 2 * self.n ** 0.75


def _split_quadratic(gradient, d):
    B = gradient[:d * d].reshape(d, d)
    return 0.5 * (B + B.T), gradient[d * d:]


def linear_min_oracle(kernel, gradient, action_set, tol=None):
    """argmin over the action set of <gradient, Phi(a)>."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if isinstance(action_set, UnitBall):
        d = action_set.dim
        if kernel.variant == LINEAR:
            norm = np.linalg.norm(gradient)
            return np.zeros(d) if norm == 0 else -gradient / norm
        if kernel.variant == QUADRATIC:
            B, b = _split_quadratic(gradient, d)
            point, _ = trs_minimize(QuadraticObjective(B, b), hparams.trs_tol if tol is None else tol)
            return point
        raise InputError('No unit-ball linear minimization oracle for the {} kernel'.format(kernel.variant))

    actions = as_points(action_set)
    if not kernel.has_feature_map:
        raise InputError('No linear minimization oracle for the {} kernel'.format(kernel.variant))
    return actions[int(np.argmin(feature_matrix(kernel, actions) @ gradient))]


def cg_round(X, config, kernel, cumulative, t, rng, action_set, x1_feature, w_t=None):
    """One round of online conditional gradient.

    cumulative is sum_{s<t} w_s in the explicit feature space and x1_feature is Phi(a_1).
    """
    if t < 1:
        raise InputError('Rounds are 1-based, got t={}'.format(t))
    position, index = X.sample(rng)
    action = X.atoms[position]
    loss = loss_eval(kernel, action, w_t) if w_t is not None else float('nan')

    gradient = config.eta * cumulative + 2.0 * (X.mean_feature(kernel) - x1_feature)
    v = linear_min_oracle(kernel, gradient, action_set)
    if not isinstance(action_set, UnitBall):
        v_index = int(np.flatnonzero(np.all(as_points(action_set) == v, axis=1))[0])
    else:
        v_index = -1

    X_next = X.mix(v, config.gamma(t), index=v_index)
    return X_next, RoundRecord(index, action, loss, num_atoms=len(X_next))


class ConditionalGradient:
    def __init__(self, kernel, action_set, config):
        if not kernel.has_feature_map:
            raise InputError('Conditional gradient needs an explicit feature map, {} has none'.format(kernel.variant))
        if isinstance(action_set, UnitBall) and kernel.variant not in (LINEAR, QUADRATIC):
            raise InputError('Unit-ball conditional gradient supports linear and quadratic kernels only')
        self._kernel = kernel
        self._action_set = action_set if isinstance(action_set, UnitBall) else as_points(action_set)
        self._config = config

        first = np.zeros(action_set.dim) if isinstance(action_set, UnitBall) else self._action_set[0]
        self._x1 = ConvexCombination.single(first, -1 if isinstance(action_set, UnitBall) else 0)
        self._x1_feature = feature_map(kernel, first)

    @property
    def initial(self):
        return self._x1

    @property
    def x1_feature(self):
        return self._x1_feature

    def run(self, schedule, rng, progress=False, callback=None):
        """Plays the schedule; callback(t, X_t, cumulative) is invoked before each round."""
        X = self._x1
        cumulative = np.zeros_like(self._x1_feature)
        records = []
        for t, w_t in enumerate(tqdm(schedule, disable=not progress), start=1):
            if callback is not None:
                callback(t, X, cumulative)
            X, record = cg_round(X, self._config, self._kernel, cumulative, t, rng, self._action_set,
                                 self._x1_feature, w_t)
            cumulative = cumulative + adversary_vector(self._kernel, w_t)
            records.append(record)
        return X, records


def _history_sum(kernel, history, dim):
    if isinstance(history, np.ndarray):
        return history.astype(np.float64)
    total = np.zeros(dim)
    for w in history:
        total = total + adversary_vector(kernel, w)
    return total


def ftrl_objective(features, cumulative, eta, weights, center=None):
    X = weights @ features
    center = np.zeros_like(X) if center is None else center
    return float(eta * cumulative @ X + np.sum((X - center) ** 2))


def ftrl_oracle(history, eta, kernel, actions, tol=None, center=None, max_iter=None):
    """argmin over conv(Phi(A)) of eta <sum w_s, X> + ||X - center||^2.

    Solved over the simplex of atom weights by Frank-Wolfe with away steps and
    exact line search; stops when the Frank-Wolfe gap is at most tol.
    """
    tol = hparams.ftrl_tol if tol is None else tol
    max_iter = hparams.ftrl_max_iter if max_iter is None else max_iter
    actions = as_points(actions)
    features = feature_matrix(kernel, actions)
    cumulative = _history_sum(kernel, history, features.shape[1])
    center = np.zeros(features.shape[1]) if center is None else np.asarray(center, dtype=np.float64)

    k = features.shape[0]
    weights = np.zeros(k)
    weights[0] = 1.0
    X = features[0].copy()
    gap = np.inf
    for iteration in range(max_iter):
        direction_grad = eta * cumulative + 2.0 * (X - center)
        scores = features @ direction_grad
        toward = int(np.argmin(scores))
        gap = float(weights @ scores - scores[toward])
        if gap <= tol:
            break

        support = np.flatnonzero(weights > 0)
        away = support[int(np.argmax(scores[support]))]
        if weights @ scores - scores[toward] >= scores[away] - weights @ scores or weights[away] >= 1.0:
            D = features[toward] - X
            step_max = 1.0
            vertex, sign = toward, 1.0
        else:
            D = X - features[away]
            step_max = weights[away] / (1.0 - weights[away])
            vertex, sign = away, -1.0

        norm_sq = D @ D
        if norm_sq == 0:
            break
        step = min(max(-(direction_grad @ D) / (2.0 * norm_sq), 0.0), step_max)
        if sign > 0:
            weights = (1.0 - step) * weights
            weights[vertex] += step
        else:
            weights = (1.0 + step) * weights
            weights[vertex] -= step
            if step == step_max:
                weights[vertex] = 0.0
        weights = np.maximum(weights, 0.0)
        weights /= np.sum(weights)
        X = weights @ features
    else:
        raise ToleranceNotMetError(gap, tol)

    logger.debug('FTRL oracle: gap %.3e after %d iterations', gap, iteration)
    support = np.flatnonzero(weights > 0)
    return ConvexCombination(actions[support], weights[support], support)
