"""Exploration design, mixtures and action covariances."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from errors import IllConditionedCovarianceError, InputError, RankDeficiencyError, ToleranceNotMetError
from hparams import hparams
from utils import format_float, sample_index, symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64).ravel()
        if weights.shape[0] == 0 or np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InputError('Distribution weights must be finite and nonnegative')
        total = np.sum(weights)
        if abs(total - 1.0) > 1e-9:
            raise InputError('Distribution weights sum to {}, expected 1'.format(total))
        weights = weights / total
        weights.setflags(write=False)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, size):
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def point_mass(cls, size, index):
        weights = np.zeros(size)
        weights[index] = 1.0
        return cls(weights)

    def __len__(self):
        return self.weights.shape[0]

    def sample(self, rng):
        return sample_index(self.weights, rng)


@dataclass(frozen=True, eq=False)
class Covariance:
    matrix: np.ndarray
    min_eig: float = None

    def __post_init__(self):
        matrix = symmetrize(self.matrix)
        matrix.setflags(write=False)
        object.__setattr__(self, 'matrix', matrix)
        if self.min_eig is None:
            object.__setattr__(self, 'min_eig', float(linalg.eigh(matrix, eigvals_only=True)[0]))


def _as_features(features):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, np.newaxis]
    return features


def leverage_scores(features, weights):
    """phi_i^T Sigma_w^{-1} phi_i for every action."""
    features = _as_features(features)
    sigma = features.T @ (features * weights[:, np.newaxis])
    solved = linalg.solve(symmetrize(sigma), features.T, assume_a='pos')
    return np.einsum('ij,ji->i', features, solved)


def d_optimal_design(features, max_iter=None, tol=None):
    """D-optimal design by Frank-Wolfe with away steps on log det Sigma_w.

    At the optimum max_i phi_i^T Sigma_w^{-1} phi_i = m (Kiefer-Wolfowitz), so
    the iteration stops once the largest leverage score is within m * tol of m.
    """
    max_iter = hparams.design_max_iter if max_iter is None else max_iter
    tol = hparams.design_tol if tol is None else tol
    features = _as_features(features)
    n, m = features.shape

    rank = np.linalg.matrix_rank(features)
    if rank < m:
        raise RankDeficiencyError(rank, m)

    u = np.full(n, 1.0 / n)
    gap = np.inf
    for iteration in range(max_iter):
        g = leverage_scores(features, u)
        toward = int(np.argmax(g))
        gap = g[toward] - m
        if gap <= m * tol:
            logger.debug('D-optimal design converged in %d iterations (gap %.3e)', iteration, gap)
            return DiscreteDistribution(u)

        support = np.flatnonzero(u > 0)
        away = support[np.argmin(g[support])]
        if gap >= m - g[away] or u[away] >= 1.0:
            # u <- (1 - tau) u + tau e_j with the exact log-det line search
            tau = gap / (m * (g[toward] - 1.0))
            u = (1.0 - tau) * u
            u[toward] += tau
        else:
            # negative tau moves mass away from the least useful support point
            tau_min = -u[away] / (1.0 - u[away])
            if g[away] > 1.0:
                tau = max((g[away] - m) / (m * (g[away] - 1.0)), tau_min)
            else:
                tau = tau_min
            u = (1.0 - tau) * u
            u[away] += tau
            if tau == tau_min:
                u[away] = 0.0
        u = np.maximum(u, 0.0)
        u /= np.sum(u)

    raise ToleranceNotMetError(gap, m * tol)


def reduce_to_span(features, rel_tol=1e-10):
    """Projects features onto their span; returns (reduced features, orthonormal basis)."""
    features = _as_features(features)
    _, s, vt = linalg.svd(features, full_matrices=False)
    rank = int(np.sum(s > rel_tol * max(s[0], 0.0))) if s.shape[0] else 0
    if rank < features.shape[1]:
        logger.info('Features span %d of %d dimensions; projecting onto the span', rank, features.shape[1])
    basis = vt[:rank].T
    return features @ basis, basis


def whiten(features, design):
    """Linear map T with Sigma_design = I / m after phi -> T phi; returns (features T^T, T)."""
    features = _as_features(features)
    m = features.shape[1]
    sigma = action_covariance(design, features).matrix
    values, vectors = linalg.eigh(m * sigma)
    if not values[0] > 1e-12 * max(values[-1], 0.0):
        raise RankDeficiencyError(int(np.sum(values > 1e-12 * max(values[-1], 0.0))), m)
    transform = (vectors / np.sqrt(values)) @ vectors.T
    return features @ transform.T, transform


def centering_offset(features, design):
    """Norm of the design-weighted feature mean (zero for a centered John ellipsoid)."""
    features = _as_features(features)
    return float(np.linalg.norm(design.weights @ features))


def mix_distributions(q, nu, gamma):
    if not 0.0 <= gamma <= 1.0:
        raise InputError('gamma must lie in [0, 1], got {}'.format(gamma))
    if len(q) != len(nu):
        raise InputError('Distributions have different lengths: {} vs {}'.format(len(q), len(nu)))
    if gamma == 0.0:
        return q
    if gamma == 1.0:
        return nu
    return DiscreteDistribution((1.0 - gamma) * q.weights + gamma * nu.weights)


def action_covariance(p, features):
    features = _as_features(features)
    if len(p) != features.shape[0]:
        raise InputError('Distribution over {} actions, {} feature rows'.format(len(p), features.shape[0]))
    return Covariance(features.T @ (features * p.weights[:, np.newaxis]))


def sample_covariance(p, features, r, rng):
    if r < 1:
        raise InputError('Need r >= 1 samples, got {}'.format(r))
    features = _as_features(features)
    index = rng.choice(len(p), size=r, p=p.weights)
    sampled = features[index]
    return Covariance(sampled.T @ sampled / r)


def invert_covariance(c, floor):
    if c.min_eig < floor:
        raise IllConditionedCovarianceError(c.min_eig, floor)
    values, vectors = linalg.eigh(c.matrix)
    return symmetrize((vectors / values) @ vectors.T)


def write_design(design, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write('action_index,weight\n')
        for index, weight in enumerate(design.weights):
            f.write('{},{}\n'.format(index, format_float(weight)))
