"""Kernels, kernel losses and explicit feature maps."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import comb

from errors import InputError, NormBoundError
from hparams import hparams

logger = logging.getLogger(__name__)

LINEAR = 'linear'
QUADRATIC = 'quadratic'
GAUSSIAN = 'gaussian'
POLYNOMIAL = 'polynomial'
VARIANTS = (LINEAR, QUADRATIC, GAUSSIAN, POLYNOMIAL)


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    norm_bound: float = 1.0
    sigma: float = 1.0
    degree: int = 2
    offset: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError('Unknown kernel variant: {}'.format(self.variant))
        if not self.norm_bound > 0:
            raise InputError('norm_bound must be positive, got {}'.format(self.norm_bound))
        if self.variant == GAUSSIAN and not self.sigma > 0:
            raise InputError('Gaussian sigma must be positive, got {}'.format(self.sigma))
        if self.variant == POLYNOMIAL and (int(self.degree) != self.degree or self.degree < 1):
            raise InputError('Polynomial degree must be a positive integer, got {}'.format(self.degree))
        if self.variant == POLYNOMIAL and self.offset < 0:
            raise InputError('Polynomial offset must be nonnegative, got {}'.format(self.offset))

    @classmethod
    def parse(cls, text, norm_bound=1.0):
        """'linear', 'quadratic', 'gaussian:0.5', 'polynomial:2:1.0'."""
        parts = text.strip().lower().split(':')
        try:
            if parts[0] == GAUSSIAN:
                return cls(GAUSSIAN, norm_bound, sigma=float(parts[1]) if len(parts) > 1 else 1.0)
            if parts[0] == POLYNOMIAL:
                degree = int(parts[1]) if len(parts) > 1 else 2
                offset = float(parts[2]) if len(parts) > 2 else 0.0
                return cls(POLYNOMIAL, norm_bound, degree=degree, offset=offset)
        except ValueError as e:
            raise InputError('Cannot parse kernel "{}": {}'.format(text, e))
        return cls(parts[0], norm_bound)

    @property
    def has_feature_map(self):
        if self.variant == GAUSSIAN:
            return False
        if self.variant == POLYNOMIAL:
            return self.degree <= hparams.max_explicit_degree
        return True

    def feature_dim(self, d):
        if self.variant == LINEAR:
            return d
        if self.variant == QUADRATIC:
            return d * d + d
        if self.variant == POLYNOMIAL and self.has_feature_map:
            return sum(d ** j for j in range(self.degree + 1))
        raise InputError('{} kernel has no explicit finite feature map'.format(self.variant))

    def to_dict(self):
        return {'variant': self.variant, 'norm_bound': self.norm_bound, 'sigma': self.sigma,
                'degree': self.degree, 'offset': self.offset}

    @classmethod
    def from_dict(cls, values):
        return cls(values['variant'], values.get('norm_bound', 1.0), values.get('sigma', 1.0),
                   values.get('degree', 2), values.get('offset', 0.0))


@dataclass(frozen=True, eq=False)
class AdversaryAction:
    """Either an explicit feature-space vector or a rank-one action Phi(y)."""
    kind: str
    vector: np.ndarray

    EXPLICIT = 'explicit'
    RANK_ONE = 'rank_one'

    @classmethod
    def explicit(cls, w):
        return cls(cls.EXPLICIT, np.asarray(w, dtype=np.float64).ravel())

    @classmethod
    def rank_one(cls, y):
        return cls(cls.RANK_ONE, as_point(y))

    @classmethod
    def quadratic(cls, A, b):
        """Explicit action (A, b) for the quadratic kernel, loss a^T A a + b^T a."""
        A = np.asarray(A, dtype=np.float64)
        if not np.allclose(A, A.T, atol=1e-12):
            raise InputError('Quadratic adversary matrix must be symmetric')
        return cls.explicit(np.concatenate([A.ravel(), np.asarray(b, dtype=np.float64).ravel()]))

    @property
    def is_rank_one(self):
        return self.kind == self.RANK_ONE

    def hilbert_norm(self, spec):
        if self.is_rank_one:
            return float(np.sqrt(max(kernel_eval(spec, self.vector, self.vector), 0.0)))
        return float(np.linalg.norm(self.vector))

    def validate(self, spec, d=None):
        if not self.is_rank_one:
            if not spec.has_feature_map:
                raise InputError('Explicit adversary actions are not allowed with the {} kernel '
                                 '(degree {}); use rank-one actions'.format(spec.variant, spec.degree))
            if d is not None and self.vector.shape[0] != spec.feature_dim(d):
                raise InputError('Explicit action has dimension {}, feature space has {}'.format(
                    self.vector.shape[0], spec.feature_dim(d)))
        norm = self.hilbert_norm(spec)
        if norm > spec.norm_bound + hparams.kernel_tol:
            raise NormBoundError('Adversary action has Hilbert norm {:.6g} > G = {:.6g}'.format(
                norm, spec.norm_bound))
        return self


def as_point(x, unit_ball=False):
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise InputError('Point has non-finite coordinates: {}'.format(x))
    if unit_ball and np.linalg.norm(x) > 1.0 + hparams.kernel_tol:
        raise InputError('Point {} lies outside the unit ball'.format(x))
    return x


def as_points(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, np.newaxis]
    if points.ndim != 2 or points.shape[0] == 0:
        raise InputError('Expected a nonempty list of points, got shape {}'.format(points.shape))
    if not np.all(np.isfinite(points)):
        raise InputError('Points have non-finite coordinates')
    return points


def _check_dims(x, y):
    if x.shape[-1] != y.shape[-1]:
        raise InputError('Dimension mismatch: {} vs {}'.format(x.shape[-1], y.shape[-1]))


def kernel_matrix(spec, X, Y):
    """K(X_i, Y_j) for all pairs of rows."""
    X = as_points(X)
    Y = as_points(Y)
    _check_dims(X, Y)

    if spec.variant == GAUSSIAN:
        return np.exp(-cdist(X, Y, 'sqeuclidean') / (2.0 * spec.sigma ** 2))

    inner = X @ Y.T
    if spec.variant == LINEAR:
        return inner
    if spec.variant == QUADRATIC:
        return inner ** 2 + inner
    return (spec.offset + inner) ** spec.degree


def kernel_eval(spec, x, y):
    x = as_point(x)
    y = as_point(y)
    _check_dims(x, y)

    if spec.variant == GAUSSIAN:
        return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * spec.sigma ** 2)))

    inner = float(np.dot(x, y))
    if spec.variant == LINEAR:
        return inner
    if spec.variant == QUADRATIC:
        return inner ** 2 + inner
    return (spec.offset + inner) ** spec.degree


def kernel_diagonal(spec, X):
    X = as_points(X)
    if spec.variant == GAUSSIAN:
        return np.ones(X.shape[0])

    sq = np.einsum('ij,ij->i', X, X)
    if spec.variant == LINEAR:
        return sq
    if spec.variant == QUADRATIC:
        return sq ** 2 + sq
    return (spec.offset + sq) ** spec.degree


def feature_matrix(spec, X):
    """Rows Phi(X_i) of the explicit feature map."""
    X = as_points(X)
    if not spec.has_feature_map:
        raise InputError('{} kernel has no explicit finite feature map'.format(spec.variant))

    if spec.variant == LINEAR:
        return X.copy()
    if spec.variant == QUADRATIC:
        outer = np.einsum('ni,nj->nij', X, X).reshape(X.shape[0], -1)
        return np.hstack([outer, X])

    # (c + x.y)^k = sum_j C(k, j) c^(k-j) <x^(x)j, y^(x)j>
    n, d = X.shape
    blocks = []
    for j in range(spec.degree + 1):
        scale = np.sqrt(comb(spec.degree, j, exact=True) * spec.offset ** (spec.degree - j))
        tensor = np.ones((n, 1))
        for _ in range(j):
            tensor = np.einsum('na,nb->nab', tensor, X).reshape(n, -1)
        blocks.append(scale * tensor)
    return np.hstack(blocks)


def feature_map(spec, x):
    return feature_matrix(spec, as_point(x)[np.newaxis, :])[0]


def gram_matrix(spec, points, scale=1.0):
    if not scale > 0:
        raise InputError('Gram scale must be positive, got {}'.format(scale))
    points = as_points(points)
    K = kernel_matrix(spec, points, points)
    return scale * 0.5 * (K + K.T)


def adversary_vector(spec, w, d=None):
    """Feature-space representation of an adversary action (explicit kernels only)."""
    if w.is_rank_one:
        return feature_map(spec, w.vector)
    if not spec.has_feature_map:
        raise InputError('Explicit adversary actions are not allowed with the {} kernel'.format(spec.variant))
    return w.vector


def loss_vector(spec, actions, w):
    """<Phi(a), w> for every row a of actions."""
    actions = as_points(actions)
    if w.is_rank_one:
        return kernel_matrix(spec, actions, w.vector[np.newaxis, :])[:, 0]
    if not spec.has_feature_map:
        raise InputError('Explicit adversary actions are not allowed with the {} kernel'.format(spec.variant))
    features = feature_matrix(spec, actions)
    if features.shape[1] != w.vector.shape[0]:
        raise InputError('Explicit action has dimension {}, feature space has {}'.format(
            w.vector.shape[0], features.shape[1]))
    return features @ w.vector


def loss_eval(spec, a, w):
    return float(loss_vector(spec, as_point(a)[np.newaxis, :], w)[0])


def check_norm_bound(spec, actions):
    """Raises unless G >= sup_a sqrt(K(a, a)) over the finite action set."""
    diag = kernel_diagonal(spec, actions)
    sup = float(np.sqrt(np.max(np.maximum(diag, 0.0))))
    if sup > spec.norm_bound + hparams.kernel_tol:
        raise NormBoundError('Declared G = {:.6g} is below sup sqrt(K(a, a)) = {:.6g}'.format(
            spec.norm_bound, sup))
    logger.debug('Norm bound check: sup sqrt(K(a,a)) = %.6g <= G = %.6g', sup, spec.norm_bound)
    return sup

