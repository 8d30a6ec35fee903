"""Finite-dimensional proxy kernels built by kernel PCA on a sampled Gram matrix."""
import json
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from errors import DegenerateSpectrumWarning, InputError
from hparams import hparams
from kernel import KernelSpec, as_points, feature_matrix, gram_matrix, kernel_matrix

logger = logging.getLogger(__name__)

POLYNOMIAL_DECAY = 'polynomial'
EXPONENTIAL_DECAY = 'exponential'


def _readonly(array):
    array = np.array(array, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SampleBasis:
    kernel: KernelSpec
    sample_points: np.ndarray
    eig_coeffs: np.ndarray
    eigenvalues: np.ndarray
    normalizers: np.ndarray
    requested_m: int = None

    def __post_init__(self):
        object.__setattr__(self, 'sample_points', _readonly(as_points(self.sample_points)))
        object.__setattr__(self, 'eig_coeffs', _readonly(self.eig_coeffs).reshape(-1, self.sample_points.shape[0]))
        object.__setattr__(self, 'eigenvalues', _readonly(self.eigenvalues))
        object.__setattr__(self, 'normalizers', _readonly(self.normalizers))
        if self.requested_m is None:
            object.__setattr__(self, 'requested_m', self.m)

    @property
    def m(self):
        return self.eigenvalues.shape[0]

    @property
    def p(self):
        return self.sample_points.shape[0]

    @property
    def dim(self):
        return self.sample_points.shape[1]

    def features(self, X):
        """Rows Phi_m(X_i) = sum_k w_jk K(x_k, X_i) / ||sum_k w_jk Phi(x_k)||."""
        X = as_points(X)
        if self.m == 0:
            return np.zeros((X.shape[0], 0))
        K = kernel_matrix(self.kernel, X, self.sample_points)
        return (K @ self.eig_coeffs.T) / self.normalizers

    def __call__(self, x):
        return proxy_feature(self, x)

    def to_dict(self):
        return {
            'kernel': self.kernel.to_dict(),
            'points': self.sample_points.tolist(),
            'eig_coeffs': self.eig_coeffs.tolist(),
            'eigenvalues': self.eigenvalues.tolist(),
            'normalizers': self.normalizers.tolist(),
        }

    @classmethod
    def from_dict(cls, values):
        eigenvalues = np.asarray(values['eigenvalues'], dtype=np.float64)
        points = np.asarray(values['points'], dtype=np.float64)
        return cls(KernelSpec.from_dict(values['kernel']), points,
                   np.asarray(values['eig_coeffs'], dtype=np.float64).reshape(eigenvalues.shape[0], points.shape[0]),
                   eigenvalues, np.asarray(values['normalizers'], dtype=np.float64))

    def save(self, path):
        # repr-based float output round-trips exactly (at most 17 significant digits)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path, encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class EigendecayProfile:
    kind: str
    C: float
    beta: float
    eigfn_bound: float = 1.0

    def __post_init__(self):
        if self.kind not in (POLYNOMIAL_DECAY, EXPONENTIAL_DECAY):
            raise InputError('Unknown eigendecay kind: {}'.format(self.kind))
        if not self.C > 0 or not self.eigfn_bound > 0:
            raise InputError('Eigendecay C and B must be positive')
        if self.kind == POLYNOMIAL_DECAY and not self.beta > 1:
            raise InputError('Polynomial eigendecay needs beta > 1, got {}'.format(self.beta))
        if self.kind == EXPONENTIAL_DECAY and not self.beta > 0:
            raise InputError('Exponential eigendecay needs beta > 0, got {}'.format(self.beta))

    @property
    def supports_corollary(self):
        # the polynomial regret rate needs beta > 2
        return self.kind == EXPONENTIAL_DECAY or self.beta > 2


def discrete_sampler(actions, weights=None):
    """Sampler drawing i.i.d. rows of actions (uniform unless weights are given)."""
    actions = as_points(actions)
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        weights = weights / np.sum(weights)

    def sample(rng, count):
        index = rng.choice(actions.shape[0], size=count, p=weights)
        return actions[index]

    return sample


def box_sampler(low, high, dim=1):
    def sample(rng, count):
        return rng.uniform(low, high, size=(count, dim))

    return sample


def gram_spectrum(kernel, points):
    """Eigenvalues of K/p in descending order."""
    points = as_points(points)
    gram = gram_matrix(kernel, points, scale=1.0 / points.shape[0])
    return linalg.eigh(gram, eigvals_only=True)[::-1]


def covariance_spectrum(kernel, points):
    """Eigenvalues of (1/p) sum Phi(x_i) Phi(x_i)^T for explicit-feature kernels, descending."""
    features = feature_matrix(kernel, points)
    covariance = features.T @ features / features.shape[0]
    return linalg.eigh(0.5 * (covariance + covariance.T), eigvals_only=True)[::-1]


def proxy_from_points(kernel, points, m, eig_floor=None):
    points = as_points(points)
    p = points.shape[0]
    if m < 0 or p < m:
        raise InputError('Need p >= m >= 0, got p={} and m={}'.format(p, m))

    K = gram_matrix(kernel, points)
    values, vectors = linalg.eigh(K / p)
    order = np.argsort(values, kind='stable')[::-1]
    values = values[order][:m]
    vectors = vectors[:, order][:, :m]

    if eig_floor is None:
        top = values[0] if m > 0 else 0.0
        eig_floor = hparams.eig_floor_rel * max(top, 0.0)
    keep = values > max(eig_floor, 0.0)
    if np.count_nonzero(keep) < m:
        message = 'Only {} of {} eigenvalues exceed the floor {:.3e}; reducing m to {}'.format(
            np.count_nonzero(keep), m, eig_floor, np.count_nonzero(keep))
        logger.warning(message)
        warnings.warn(message, DegenerateSpectrumWarning)

    coeffs = vectors[:, keep].T
    # Sign convention: the largest-magnitude coefficient of each eigenvector is positive
    pivots = np.argmax(np.abs(coeffs), axis=1)
    signs = np.sign(coeffs[np.arange(coeffs.shape[0]), pivots])
    coeffs = coeffs * signs[:, np.newaxis]

    normalizers = np.sqrt(np.einsum('jk,kl,jl->j', coeffs, K, coeffs))
    return SampleBasis(kernel, points, coeffs, values[keep], normalizers, requested_m=m)


def build_proxy(kernel, sampler, m, p, eig_floor=None, rng=None):
    if p < m:
        raise InputError('Need p >= m, got p={} and m={}'.format(p, m))
    rng = np.random.default_rng() if rng is None else rng
    points = as_points(sampler(rng, p))
    basis = proxy_from_points(kernel, points, m, eig_floor)
    logger.debug('Built proxy kernel: p=%d, m=%d (requested %d), top eigenvalue %.4g',
                 basis.p, basis.m, m, basis.eigenvalues[0] if basis.m else 0.0)
    return basis


def proxy_feature(basis, x):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != basis.dim:
        raise InputError('Point has dimension {}, basis samples have {}'.format(x.shape[0], basis.dim))
    return basis.features(x[np.newaxis, :])[0]


def effective_dimension(profile, eps):
    if not eps > 0:
        raise InputError('eps must be positive, got {}'.format(eps))

    scale = 4.0 * profile.C * profile.eigfn_bound ** 2
    if profile.kind == POLYNOMIAL_DECAY:
        value = (scale / ((profile.beta - 1.0) * eps)) ** (1.0 / (profile.beta - 1.0))
    else:
        value = math.log(scale / (profile.beta * eps)) / profile.beta
    # absorb floating point noise before taking the ceiling
    m = math.ceil(value - 1e-9 * max(1.0, abs(value)))
    return max(1, m)


def fit_eigendecay(eigenvalues, kind=EXPONENTIAL_DECAY, floor_rel=None):
    """Least-squares fit of (C, beta) over the top half of the significant spectrum.

    Returns (C, beta, count) where count is the number of eigenvalues used.
    """
    floor_rel = hparams.eig_floor_rel if floor_rel is None else floor_rel
    eigenvalues = np.sort(np.asarray(eigenvalues, dtype=np.float64))[::-1]
    significant = eigenvalues[eigenvalues > floor_rel * max(eigenvalues[0], 0.0)]
    count = max(2, significant.shape[0] // 2)
    if significant.shape[0] < 2:
        raise InputError('Need at least two significant eigenvalues to fit a decay profile')

    index = np.arange(1, count + 1, dtype=np.float64)
    x = np.log(index) if kind == POLYNOMIAL_DECAY else index
    slope, intercept = np.polyfit(x, np.log(significant[:count]), 1)
    return float(np.exp(intercept)), float(-slope), count


def estimate_eigfn_bound(basis, probes, count=None):
    """max over probes of |phi_j(x)| with phi_j = Phi_m(x)_j / sqrt(mu_j)."""
    count = basis.m if count is None else min(count, basis.m)
    features = basis.features(probes)[:, :count]
    return float(np.max(np.abs(features / np.sqrt(basis.eigenvalues[:count]))))


def fit_profile(kernel, points, probes, kind=EXPONENTIAL_DECAY):
    """Eigendecay profile (C, beta, B) fitted to the Gram spectrum of the sample points."""
    C, beta, count = fit_eigendecay(gram_spectrum(kernel, points), kind)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', DegenerateSpectrumWarning)
        basis = proxy_from_points(kernel, points, count)
    bound = estimate_eigfn_bound(basis, probes, count)
    profile = EigendecayProfile(kind, C, beta, bound)
    logger.info('Fitted %s eigendecay over %d eigenvalues: C=%.4g beta=%.4g B=%.4g',
                kind, count, C, beta, bound)
    return profile


def approximation_sup_error(kernel, basis, probe_points):
    probe_points = as_points(probe_points)
    if probe_points.shape[0] < 2:
        raise InputError('Need at least two probe points')
    K = kernel_matrix(kernel, probe_points, probe_points)
    features = basis.features(probe_points)
    return float(np.max(np.abs(K - features @ features.T)))
