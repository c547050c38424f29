"""
Unit tests for interaction kernels
"""
import logging
import pytest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from shared.errors import ConfigError, DimensionMismatchError, SingularKernelError
from shared.kernels import (Coulomb, CoulombRegularized, CountingKernel, Gaussian, RieszRegularized, diag_sup,
                            kernel_eval, kernel_grad2, kernel_label, parse_kernel)


@pytest.fixture
def riesz():
    """Regularized Riesz kernel with s = 1, eps = 0.1"""
    return RieszRegularized(1.0, 0.1)


def test_riesz_value(riesz):
    """Test K(0, e1) = (1 + eps^2)^(-1/2)"""
    assert kernel_eval(riesz, [0, 0, 0], [1, 0, 0]) == pytest.approx((1.0 + 0.01) ** -0.5)


def test_riesz_diagonal_is_sup(riesz):
    """Test K(x, x) = eps^-s"""
    assert kernel_eval(riesz, [0.3, 0.1, 0.2], [0.3, 0.1, 0.2]) == pytest.approx(10.0)
    assert diag_sup(riesz) == pytest.approx(10.0)


def test_kernel_symmetry(riesz):
    """Test K(x, y) = K(y, x)"""
    x, y = [0.1, -0.2, 0.4], [1.0, 0.5, -0.3]
    assert kernel_eval(riesz, x, y) == kernel_eval(riesz, y, x)


def test_coulomb_diagonal_is_infinite():
    """Test the Coulomb kernel is +inf on the diagonal"""
    assert kernel_eval(Coulomb(3), [1, 2, 3], [1, 2, 3]) == np.inf
    assert diag_sup(Coulomb(3)) == np.inf


def test_coulomb_value():
    """Test g(x, y) = 1/|x - y| in R^3"""
    assert kernel_eval(Coulomb(3), [0, 0, 0], [0, 0, 2]) == pytest.approx(0.5)


def test_coulomb_gradient_on_diagonal():
    """Test the singular gradient is rejected"""
    with pytest.raises(SingularKernelError):
        kernel_grad2(Coulomb(3), [0, 0, 0], [0, 0, 0])


def test_gradient_matches_finite_differences(riesz):
    """Test grad2 against central differences"""
    x = np.array([0.2, -0.1, 0.3])
    y = np.array([-0.4, 0.5, 0.1])
    h = 1e-6
    numeric = np.array([
        (kernel_eval(riesz, x, y + h * e) - kernel_eval(riesz, x, y - h * e)) / (2 * h)
        for e in np.eye(3)
    ])
    assert np.allclose(kernel_grad2(riesz, x, y), numeric, rtol=1e-6, atol=1e-8)


def test_regularized_coulomb_diagonal():
    """Test K_zeta(x, x) = n^(zeta (d - 2))"""
    kernel = CoulombRegularized(3, 0.05, 100)
    assert kernel.smoothing == pytest.approx(100 ** -0.1)
    assert kernel_eval(kernel, [0, 0, 0], [0, 0, 0]) == pytest.approx(100 ** 0.05)
    assert diag_sup(kernel) == pytest.approx(100 ** 0.05)


def test_regularized_coulomb_below_coulomb():
    """Test the regularization lowers the kernel off the diagonal"""
    kernel = CoulombRegularized(3, 0.05, 100)
    assert kernel_eval(kernel, [0, 0, 0], [0.5, 0, 0]) < kernel_eval(Coulomb(3), [0, 0, 0], [0.5, 0, 0])


def test_zeta_beyond_constraint_warns(caplog):
    """Test zeta >= 1/d^2 logs a warning"""
    with caplog.at_level(logging.WARNING, logger='shared.kernels'):
        CoulombRegularized(3, 0.2, 10)
    assert 'theoretical constraint' in caplog.text


def test_coulomb_requires_d3():
    """Test d < 3 Coulomb kernels are rejected"""
    with pytest.raises(ConfigError):
        Coulomb(2)
    with pytest.raises(ConfigError) as excinfo:
        parse_kernel('coulomb_reg(d=2,zeta=0.05,n=10)')
    assert 'log-gas kernel out of scope' in str(excinfo.value)


def test_dimension_mismatch():
    """Test points of the wrong dimension are rejected"""
    with pytest.raises(DimensionMismatchError):
        kernel_eval(Coulomb(3), [0.0, 0.0], [1.0, 1.0])
    with pytest.raises(DimensionMismatchError):
        kernel_eval(Gaussian(1.0), [0.0, 0.0], [1.0, 1.0, 1.0])


def test_parse_kernel_specs():
    """Test spec strings build the expected kernels"""
    assert parse_kernel('riesz(s=1,eps=0.1)') == RieszRegularized(1.0, 0.1)
    assert parse_kernel('gaussian(h=0.5)') == Gaussian(0.5)
    assert parse_kernel('coulomb(d=3)') == Coulomb(3)
    assert parse_kernel('coulomb_reg(d=3,zeta=0.05)', n=200) == CoulombRegularized(3, 0.05, 200)


def test_parse_kernel_rejects_bad_specs():
    """Test unknown kernels, unknown parameters and missing parameters"""
    for text in ('laplace(h=1)', 'riesz(s=1,eps=0.1,p=2)', 'riesz(s=1)', 'riesz s=1'):
        with pytest.raises(ConfigError):
            parse_kernel(text)


def test_kernel_label_inverts_parse():
    """Test kernel_label produces a spec parse_kernel accepts"""
    for kernel in (RieszRegularized(1.0, 0.1), Gaussian(0.25), Coulomb(4), CoulombRegularized(3, 0.05, 64),
                   RieszRegularized(1.0, 0.123456789), Gaussian(1.0 / 3.0), CoulombRegularized(3, 0.0123456789, 64)):
        assert parse_kernel(kernel_label(kernel)) == kernel


def test_pair_values_match_matrix(riesz):
    """Test condensed pair values are the upper triangle of the kernel matrix"""
    X = np.random.default_rng(0).normal(size=(5, 3))
    rows, cols = np.triu_indices(5, k=1)
    assert np.allclose(riesz.pair_values(X), riesz.matrix(X, X)[rows, cols])


def test_grad1_sum_matches_pointwise(riesz):
    """Test the vectorized weighted gradient in the first argument"""
    generator = np.random.default_rng(1)
    X, Y = generator.normal(size=(4, 3)), generator.normal(size=(6, 3))
    weights = generator.random(6)
    # grad_1 K(x, y) is the gradient of K(y, x) in its second argument
    expected = np.array([sum(w * kernel_grad2(riesz, y, x) for w, y in zip(weights, Y)) for x in X])
    assert np.allclose(riesz.grad1_sum(X, Y, weights), expected)


def test_counting_kernel(riesz):
    """Test the counting wrapper counts evaluations and delegates"""
    kernel = CountingKernel(riesz)
    X = np.zeros((3, 3))
    values = kernel.matrix(X, X)
    assert kernel.evaluations == 9
    assert np.allclose(values, 10.0)
    assert kernel.eps == 0.1
    kernel.reset()
    assert kernel.evaluations == 0


@pytest.mark.parametrize('kernel', [RieszRegularized(1.0, 0.1), Gaussian(0.5)])
def test_quadratic_form_nonnegative_on_zero_charge(kernel):
    """Test sum_ij c_i c_j K(x_i, x_j) >= 0 for signed charges summing to zero"""
    generator = np.random.default_rng(3)
    for _ in range(50):
        size = int(generator.integers(2, 12))
        X = generator.normal(size=(size, 3))
        charges = generator.normal(size=size)
        charges -= charges.mean()
        assert charges @ kernel.matrix(X, X) @ charges >= -1e-10


def test_regularized_coulomb_approaches_coulomb():
    """Test K_zeta at n = 1e6 is within 1e-4 of the Coulomb kernel off the diagonal"""
    generator = np.random.default_rng(4)
    kernel = CoulombRegularized(3, 0.5, 10 ** 6)
    for _ in range(10):
        x = generator.normal(size=3)
        direction = generator.normal(size=3)
        y = x + generator.uniform(0.5, 2.0) * direction / np.linalg.norm(direction)
        exact = kernel_eval(Coulomb(3), x, y)
        assert abs(kernel_eval(kernel, x, y) - exact) < 1e-4 * exact
