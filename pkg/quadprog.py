"""Quadratic losses on the unit ball: trust-region oracle and the exponential-weights sampler."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.optimize import brentq

from errors import DegenerateStartError, InputError, NumericalError
from hparams import hparams
from utils import format_float, symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """a -> a^T B a + b^T a."""
    B: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=np.float64, ndmin=2)
        b = np.array(self.b, dtype=np.float64).ravel()
        if B.shape != (b.shape[0], b.shape[0]):
            raise InputError('B has shape {}, b has length {}'.format(B.shape, b.shape[0]))
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(b))):
            raise InputError('Quadratic objective must be finite')
        if np.max(np.abs(B - B.T), initial=0.0) > 1e-12:
            raise InputError('B must be symmetric')
        object.__setattr__(self, 'B', symmetrize(B))
        object.__setattr__(self, 'b', b)

    @classmethod
    def from_feature_vector(cls, vector, d):
        """Splits a quadratic-kernel feature vector (row-major A, then b)."""
        vector = np.asarray(vector, dtype=np.float64).ravel()
        if vector.shape[0] != d * d + d:
            raise InputError('Expected {} entries for d={}, got {}'.format(d * d + d, d, vector.shape[0]))
        return cls(symmetrize(vector[:d * d].reshape(d, d)), vector[d * d:])

    @property
    def dim(self):
        return self.b.shape[0]

    def value(self, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 1:
            return float(a @ self.B @ a + self.b @ a)
        return np.einsum('ni,ij,nj->n', a, self.B, a) + a @ self.b


def _complete_to_boundary(alpha, index):
    # adds the missing norm along one eigen-coordinate
    alpha = alpha.copy()
    alpha[index] = np.sqrt(max(1.0 - alpha @ alpha + alpha[index] ** 2, 0.0))
    return alpha


def trs_minimize(obj, tol=None):
    """Global minimizer of a^T B a + b^T a over ||a|| <= 1.

    Works in the eigenbasis of B. The boundary multiplier nu solves the secular
    equation ||alpha(nu)|| = 1 with alpha_i(nu) = -g_i / (2 (lambda_i + nu)),
    g = V^T b. The hard case (g orthogonal to the bottom eigenspace) is finished by
    moving along the bottom eigenvector onto the sphere.
    """
    tol = hparams.trs_tol if tol is None else tol
    lam, V = linalg.eigh(obj.B)
    g = V.T @ obj.b
    scale = max(1.0, float(np.max(np.abs(lam))), float(np.linalg.norm(g)))

    if lam[0] > 0:
        alpha = -g / (2.0 * lam)
        if alpha @ alpha <= 1.0:
            logger.debug('TRS: interior solution')
            return _finish(obj, V @ alpha)

    bottom = lam - lam[0] <= 1e-12 * scale
    shift = max(0.0, -lam[0])
    if np.linalg.norm(g[bottom]) <= 1e-12 * scale and lam[0] <= 0:
        alpha = np.zeros_like(g)
        alpha[~bottom] = -g[~bottom] / (2.0 * (lam[~bottom] + shift))
        if alpha @ alpha <= 1.0:
            logger.debug('TRS: hard case, completing along the bottom eigenvector')
            return _finish(obj, V @ _complete_to_boundary(alpha, 0))

    def secular(nu):
        return float(np.linalg.norm(g / (2.0 * (lam + nu)))) - 1.0

    lo = shift + 1e-15 * scale
    hi = shift + 0.5 * float(np.linalg.norm(g)) + 1.0
    with np.errstate(divide='ignore', invalid='ignore'):
        at_lo = secular(lo)
    if not at_lo > 0:
        # root lies within rounding of the shift
        alpha = np.where(bottom, 0.0, -g / (2.0 * (lam + lo)))
        logger.debug('TRS: near-hard case at nu=%.3e', lo)
        return _finish(obj, V @ _complete_to_boundary(alpha, 0))

    nu = brentq(secular, lo, hi, xtol=1e-15 * scale, rtol=4.0 * np.finfo(float).eps, maxiter=500)
    alpha = -g / (2.0 * (lam + nu))
    alpha /= np.linalg.norm(alpha)
    logger.debug('TRS: boundary solution, nu=%.6g', nu)
    return _finish(obj, V @ alpha)


def _finish(obj, a):
    return a, obj.value(a)


def trs_multiplier(obj, a):
    """nu = -a^T (2Ba + b) / (2 ||a||^2), the boundary multiplier implied by a."""
    a = np.asarray(a, dtype=np.float64)
    norm_sq = a @ a
    if norm_sq == 0:
        return 0.0
    return float(-(a @ (2.0 * obj.B @ a + obj.b)) / (2.0 * norm_sq))


def trs_certificate(obj, a, tol):
    """Checks the global optimality conditions of the trust-region subproblem at a.

    Returns (holds, nu).
    """
    a = np.asarray(a, dtype=np.float64)
    grad = 2.0 * obj.B @ a + obj.b
    norm = float(np.linalg.norm(a))
    if norm < 1.0 - tol:
        return bool(np.linalg.norm(grad) <= tol), 0.0
    if norm > 1.0 + tol:
        return False, float('nan')

    nu = trs_multiplier(obj, a)
    lam_min = float(linalg.eigh(obj.B, eigvals_only=True)[0])
    stationary = np.linalg.norm(grad + 2.0 * nu * a) <= tol * max(1.0, abs(nu))
    return bool(stationary and nu >= -tol and lam_min + nu >= -tol), nu


def _slice_sample(grid, log_values, rng):
    """One draw from the density exp(log_values) on grid via the piecewise-linear inverse CDF."""
    top = np.max(log_values)
    if not np.isfinite(top):
        raise NumericalError('Log density is not finite along the chord')
    density = np.exp(log_values - top)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(grid))])
    return float(np.interp(rng.random() * cdf[-1], cdf, grid))


def hit_and_run(log_density, membership, chord_bounds, start, steps, rng, grid_size=None, on_step=None):
    """Hit-and-run over a convex body.

    log_density maps an array of points (k, d) to k log densities, membership(x)
    tests feasibility and chord_bounds(x, u) gives the feasible interval of s on
    x + s u. on_step(x, rng) may return a modified state after each move.
    Returns the visited points, one row per step.
    """
    grid_size = hparams.chord_grid if grid_size is None else grid_size
    x = np.array(start, dtype=np.float64).ravel()
    if not membership(x):
        raise DegenerateStartError('Hit-and-run start {} is infeasible'.format(x))

    d = x.shape[0]
    points = np.empty((steps, d))
    for step in range(steps):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        lo, hi = chord_bounds(x, u)
        if not hi > lo:
            raise DegenerateStartError('Zero-length chord at {} (step {})'.format(x, step))

        grid = np.linspace(lo, hi, grid_size)
        s = _slice_sample(grid, log_density(x + grid[:, np.newaxis] * u), rng)
        x = x + s * u
        if on_step is not None:
            x = on_step(x, rng)
        points[step] = x
    return points


def ball_chord(x, u):
    """Interval of s with ||x + s u|| <= 1 for a unit direction u."""
    xu = float(x @ u)
    disc = max(xu * xu - float(x @ x) + 1.0, 0.0)
    root = np.sqrt(disc)
    return -xu - root, -xu + root


def _in_ball(x):
    return float(np.linalg.norm(x)) <= 1.0 + hparams.kernel_tol


def _eigen_parts(obj):
    lam, V = linalg.eigh(obj.B)
    gamma = V.T @ obj.b
    linear = np.abs(lam) < hparams.near_zero_eig
    lam = np.where(linear, 0.0, lam)
    return lam, V, gamma, linear


def quad_ew_sample(obj, count, burn_in, rng, start=None):
    """Samples from q(a) proportional to exp(a^T B a + b^T a) on the unit ball.

    Hit-and-run runs in the eigen-coordinates alpha = V^T a, where the log density
    is sum_i lambda_i alpha_i^2 + gamma_i alpha_i. Coordinates with gamma_i = 0 are
    sign-symmetric under the target and get an independent Rademacher flip after
    every move. Near-zero eigenvalues are treated as exactly zero.
    """
    if count < 1 or burn_in < 0:
        raise InputError('Need count >= 1 and burn_in >= 0, got {} and {}'.format(count, burn_in))
    lam, V, gamma, _ = _eigen_parts(obj)
    symmetric = np.abs(gamma) <= hparams.near_zero_eig

    def log_density(alphas):
        return alphas ** 2 @ lam + alphas @ gamma

    def flip(alpha, rng):
        if not np.any(symmetric):
            return alpha
        signs = 2.0 * rng.integers(0, 2, size=alpha.shape[0]) - 1.0
        return np.where(symmetric, alpha * signs, alpha)

    alpha0 = np.zeros(obj.dim) if start is None else V.T @ np.asarray(start, dtype=np.float64).ravel()
    chain = hit_and_run(log_density, _in_ball, ball_chord, alpha0, burn_in + count, rng, on_step=flip)
    samples = chain[burn_in:] @ V.T
    if count > 1:
        logger.debug('Quadratic sampler: lag-1 autocorrelation %s',
                     np.array2string(lag_autocorrelation(samples, 1), precision=3))
    return samples


@dataclass(frozen=True, eq=False)
class SurrogateRegion:
    """The change of variables beta_i = (alpha_i + c_i)^2 with c_i = gamma_i / (2 lambda_i).

    Eigenvectors are oriented so that every c_i >= 0, which is what makes
    {beta : beta_i >= 0, sum_i (sqrt(beta_i) - c_i)^2 <= 1} convex. Coordinates with
    a zero eigenvalue stay linear (beta_i = alpha_i).
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    gamma: np.ndarray
    centers: np.ndarray
    linear: np.ndarray

    def _radius_sq(self, beta):
        beta = np.atleast_2d(beta)
        roots = np.sqrt(np.maximum(beta, 0.0))
        curved = np.where(self.linear, 0.0, (roots - self.centers) ** 2)
        flat = np.where(self.linear, beta ** 2, 0.0)
        return np.sum(curved + flat, axis=1)

    def contains(self, beta, tol=1e-12):
        beta = np.asarray(beta, dtype=np.float64)
        nonnegative = np.all(np.where(self.linear, 0.0, beta) >= -tol, axis=-1)
        return bool(np.all(nonnegative & (self._radius_sq(beta) <= 1.0 + tol)))

    def log_density(self, betas):
        return np.atleast_2d(betas) @ np.where(self.linear, self.gamma, self.eigenvalues)

    def chord_bounds(self, beta, u):
        curved = ~self.linear
        lo, hi = -np.inf, np.inf
        with np.errstate(divide='ignore', invalid='ignore'):
            limits = -beta / u
        up = curved & (u > 0)
        down = curved & (u < 0)
        if np.any(up):
            lo = max(lo, float(np.max(limits[up])))
        if np.any(down):
            hi = min(hi, float(np.min(limits[down])))
        return -self._reach(beta, -u, -lo), self._reach(beta, u, hi)

    def _reach(self, beta, u, limit):
        def excess(s):
            return float(self._radius_sq(beta + s * u)[0]) - 1.0

        if limit <= 0:
            return 0.0
        t = min(1.0, limit)
        while excess(t) <= 0 and t < limit:
            t = min(2.0 * t, limit)
        if excess(t) <= 0:
            return t
        return brentq(excess, 0.0, t) if excess(0.0) <= 0 else 0.0

    def to_ball(self, beta):
        """Maps surrogate points back to the ball on the branch alpha_i >= -c_i."""
        beta = np.atleast_2d(beta)
        alpha = np.where(self.linear, beta, np.sqrt(np.maximum(beta, 0.0)) - self.centers)
        return alpha @ self.eigenvectors.T

    def from_ball(self, a):
        """Maps ball points into the region; inverse of to_ball where alpha_i >= -c_i."""
        alpha = np.atleast_2d(a) @ self.eigenvectors
        return np.where(self.linear, alpha, (alpha + self.centers) ** 2)


def surrogate_region(obj):
    lam, V, gamma, linear = _eigen_parts(obj)
    with np.errstate(divide='ignore', invalid='ignore'):
        centers = np.where(linear, 0.0, gamma / (2.0 * lam))
    orientation = np.where(centers < 0, -1.0, 1.0)
    return SurrogateRegion(lam, V * orientation, gamma * orientation, np.abs(centers), linear)


def lag_autocorrelation(samples, lag=1):
    """Per-coordinate autocorrelation of a chain at the given lag."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, np.newaxis]
    if not 0 < lag < samples.shape[0]:
        raise InputError('Lag must lie in [1, {}), got {}'.format(samples.shape[0], lag))
    centered = samples - np.mean(samples, axis=0)
    var = np.sum(centered ** 2, axis=0)
    cov = np.sum(centered[lag:] * centered[:-lag], axis=0)
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(var > 0, cov / var, 0.0)


def write_samples(samples, path):
    samples = np.atleast_2d(samples)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(','.join('a{}'.format(i) for i in range(samples.shape[1])) + '\n')
        for row in samples:
            f.write(','.join(format_float(v) for v in row) + '\n')
