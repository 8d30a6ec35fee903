import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import factorial

from errors import DegenerateSpectrumWarning, InputError
from kernel import GAUSSIAN, LINEAR, POLYNOMIAL, QUADRATIC, KernelSpec, kernel_eval, kernel_matrix
from mercer_proxy import (EXPONENTIAL_DECAY, POLYNOMIAL_DECAY, EigendecayProfile, SampleBasis,
                          approximation_sup_error, box_sampler, build_proxy, covariance_spectrum, discrete_sampler,
                          effective_dimension, estimate_eigfn_bound, fit_eigendecay, fit_profile, gram_spectrum,
                          proxy_feature, proxy_from_points)
from utils import make_rng

GAUSSIAN_HALF = KernelSpec(GAUSSIAN, sigma=0.5)


def _gaussian_basis(rng, m=8, p=200):
    return build_proxy(GAUSSIAN_HALF, box_sampler(0.0, 1.0), m, p, rng=rng)


def test_linear_proxy_is_exact(rng):
    spec = KernelSpec(LINEAR, 2.0)
    basis = build_proxy(spec, box_sampler(-1.0, 1.0, 3), 3, 50, rng=rng)
    assert basis.m == 3
    probes = rng.uniform(-1, 1, (100, 3))
    assert approximation_sup_error(spec, basis, probes) <= 1e-8


def test_single_repeated_point():
    x0 = np.array([0.3])
    basis = proxy_from_points(GAUSSIAN_HALF, np.tile(x0, (10, 1)), 1)
    assert basis.m == 1
    for y in (0.0, 0.5, 0.9):
        expected = kernel_eval(GAUSSIAN_HALF, x0, [y]) / math.sqrt(kernel_eval(GAUSSIAN_HALF, x0, x0))
        assert_allclose(proxy_feature(basis, [y]), [expected], atol=1e-10)


def test_sample_basis_invariants(rng):
    basis = _gaussian_basis(rng)
    assert np.all(basis.eigenvalues > 0)
    assert np.all(np.diff(basis.eigenvalues) <= 0)
    assert_allclose(basis.normalizers ** 2, basis.p * basis.eigenvalues, rtol=1e-8)
    assert_allclose(basis.eig_coeffs @ basis.eig_coeffs.T, np.eye(basis.m), atol=1e-8)
    assert not basis.eig_coeffs.flags.writeable


def test_gaussian_spectrum_matches_taylor_features(rng):
    # exp(-(x-y)^2 / 2s^2) = e^{-x^2/2s^2} e^{-y^2/2s^2} sum_k (xy/s^2)^k / k!
    points = rng.uniform(0, 1, (200, 1))
    s = GAUSSIAN_HALF.sigma
    k = np.arange(26)
    features = np.exp(-points ** 2 / (2 * s ** 2)) * points ** k / (s ** k * np.sqrt(factorial(k)))
    covariance = features.T @ features / points.shape[0]
    expected = np.sort(np.linalg.eigvalsh(covariance))[::-1][:8]

    basis = proxy_from_points(GAUSSIAN_HALF, points, 8)
    assert_allclose(basis.eigenvalues, expected, atol=1e-4)


@pytest.mark.parametrize('spec', [KernelSpec(LINEAR), KernelSpec(QUADRATIC),
                                  KernelSpec(POLYNOMIAL, degree=3, offset=1.0)])
def test_gram_covariance_spectral_equivalence(spec):
    rng = np.random.default_rng(8)
    for _ in range(34):
        p = int(rng.integers(2, 21))
        points = rng.uniform(-1, 1, (p, 3))
        gram = gram_spectrum(spec, points)
        covariance = covariance_spectrum(spec, points)
        count = min(gram.shape[0], covariance.shape[0])
        assert_allclose(gram[:count], covariance[:count], atol=1e-8)


def test_proxy_feature_recovers_norm_on_samples(rng):
    spec = KernelSpec(LINEAR, 2.0)
    points = rng.uniform(-1, 1, (20, 3))
    basis = proxy_from_points(spec, points, 3)
    for x in points[:5]:
        assert_allclose(np.linalg.norm(proxy_feature(basis, x)), np.linalg.norm(x), atol=1e-8)


def test_proxy_feature_contracts(rng):
    basis = _gaussian_basis(rng, m=5)
    probes = rng.uniform(-0.5, 1.5, (1000, 1))
    squared = np.sum(basis.features(probes) ** 2, axis=1)
    assert np.all(squared <= 1.0 + 1e-8)


def test_proxy_feature_dimension_mismatch(rng):
    basis = _gaussian_basis(rng, m=3)
    with pytest.raises(InputError):
        proxy_feature(basis, [0.1, 0.2])


def test_degenerate_spectrum_reduces_m(rng):
    points = rng.uniform(-1, 1, (30, 2))
    with pytest.warns(DegenerateSpectrumWarning):
        basis = proxy_from_points(KernelSpec(LINEAR, 2.0), points, 3)
    assert basis.m == 2
    assert basis.requested_m == 3


def test_p_below_m_rejected(rng):
    with pytest.raises(InputError):
        build_proxy(GAUSSIAN_HALF, box_sampler(0.0, 1.0), 5, 4, rng=rng)


def test_zero_dimensional_basis_error_is_kernel_max(rng):
    points = rng.uniform(0, 1, (10, 1))
    basis = proxy_from_points(GAUSSIAN_HALF, points, 0)
    probes = np.linspace(0, 1, 7)[:, np.newaxis]
    assert basis.m == 0
    assert_allclose(approximation_sup_error(GAUSSIAN_HALF, basis, probes),
                    np.max(np.abs(kernel_matrix(GAUSSIAN_HALF, probes, probes))))


def test_approximation_needs_two_probes(rng):
    basis = _gaussian_basis(rng, m=3)
    with pytest.raises(InputError):
        approximation_sup_error(GAUSSIAN_HALF, basis, [[0.5]])


def test_sup_error_monotone_in_m(rng):
    points = rng.uniform(0, 1, (150, 1))
    probes = np.linspace(0, 1, 40)[:, np.newaxis]
    errors = [approximation_sup_error(GAUSSIAN_HALF, proxy_from_points(GAUSSIAN_HALF, points, m), probes)
              for m in range(1, 11)]
    assert np.all(np.diff(errors) <= 1e-10)


def test_projection_idempotence(rng):
    basis = _gaussian_basis(rng, m=5, p=100)
    projected = basis.features(basis.sample_points)
    again = proxy_from_points(KernelSpec(LINEAR, 10.0), projected, 5)
    assert approximation_sup_error(KernelSpec(LINEAR, 10.0), again, projected) <= 1e-8


def test_effective_dimension_examples():
    assert effective_dimension(EigendecayProfile(POLYNOMIAL_DECAY, 1.0, 3.0, 1.0), 0.5) == 2
    assert effective_dimension(EigendecayProfile(EXPONENTIAL_DECAY, 1.0, 1.0, 1.0), 4.0 / math.e) == 1
    assert effective_dimension(EigendecayProfile(EXPONENTIAL_DECAY, 1.0, 2.0, 1.0), 100.0) == 1
    assert effective_dimension(EigendecayProfile(POLYNOMIAL_DECAY, 1.0, 3.0, 1.0), 100.0) == 1


def test_eigendecay_profile_validation():
    with pytest.raises(InputError):
        EigendecayProfile(POLYNOMIAL_DECAY, 1.0, 1.0)
    with pytest.raises(InputError):
        effective_dimension(EigendecayProfile(EXPONENTIAL_DECAY, 1.0, 1.0), 0.0)
    assert not EigendecayProfile(POLYNOMIAL_DECAY, 1.0, 1.5).supports_corollary
    assert EigendecayProfile(POLYNOMIAL_DECAY, 1.0, 2.5).supports_corollary


def test_fit_eigendecay_recovers_exact_profiles():
    index = np.arange(1, 21)
    C, beta, count = fit_eigendecay(3.0 * np.exp(-0.7 * index), EXPONENTIAL_DECAY)
    assert_allclose((C, beta), (3.0, 0.7), rtol=1e-8)
    assert count == 10

    C, beta, _ = fit_eigendecay(2.0 * index ** -2.5, POLYNOMIAL_DECAY)
    assert_allclose((C, beta), (2.0, 2.5), rtol=1e-8)


def test_estimate_eigfn_bound_linear():
    # on {e1, e2} with the linear kernel phi_j are sqrt(2)-scaled indicators
    points = np.eye(2)
    basis = proxy_from_points(KernelSpec(LINEAR), points, 2)
    assert_allclose(estimate_eigfn_bound(basis, points), math.sqrt(2.0), rtol=1e-10)


def test_basis_json_round_trip(rng, tmp_path):
    basis = _gaussian_basis(rng, m=4, p=30)
    path = tmp_path / 'basis.json'
    basis.save(str(path))
    loaded = SampleBasis.load(str(path))
    assert loaded.kernel == basis.kernel
    assert_array_equal(loaded.sample_points, basis.sample_points)
    assert_array_equal(loaded.eig_coeffs, basis.eig_coeffs)
    assert_array_equal(loaded.eigenvalues, basis.eigenvalues)
    assert_array_equal(loaded.normalizers, basis.normalizers)


def test_discrete_sampler_draws_rows(rng):
    actions = np.array([[0.0], [1.0], [2.0]])
    draws = discrete_sampler(actions, [0.0, 1.0, 0.0])(rng, 20)
    assert_array_equal(draws, np.ones((20, 1)))


@pytest.mark.slow
def test_proxy_certified_for_fitted_dimension():
    eps = 0.05
    probes = np.linspace(0, 1, 50)[:, np.newaxis]
    sampler = box_sampler(0.0, 1.0)
    certified = 0
    for seed in range(100):
        points = sampler(make_rng(seed, 'proxy'), 400)
        profile = fit_profile(GAUSSIAN_HALF, points, probes)
        m = effective_dimension(profile, eps)
        basis = proxy_from_points(GAUSSIAN_HALF, points, min(m, 400))
        certified += approximation_sup_error(GAUSSIAN_HALF, basis, probes) <= eps
    assert certified >= 95
