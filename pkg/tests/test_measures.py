"""
Unit tests for weighted samples and importance weights
"""
import pytest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from shared.errors import ConfigError, DegenerateWeightsError, DimensionMismatchError, EmptySampleError
from shared.measures import (WeightedSample, as_signed_difference, importance_weights, load_weighted_sample,
                             save_weighted_sample, uniform_empirical)
from shared.targets import QuadraticCoulomb, TruncatedGaussian, UniformBall


@pytest.fixture
def points():
    """Three atoms in R^3"""
    return [[0.0, 0.0, 0.0], [0.1, 0.2, 0.3], [-0.4, 0.0, 0.2]]


def test_uniform_empirical_weights(points):
    """Test every atom gets weight 1/n and order is preserved"""
    sample = uniform_empirical(points)
    assert sample.size == 3
    assert sample.dim == 3
    assert np.allclose(sample.weights, 1.0 / 3.0)
    assert np.array_equal(sample.points, np.array(points))


def test_uniform_empirical_single_point():
    """Test a one-atom sample has weight 1"""
    sample = uniform_empirical([[1.0, 2.0]])
    assert sample.weights.tolist() == [1.0]


def test_empty_sample_rejected():
    """Test an empty point list raises EmptySampleError"""
    with pytest.raises(EmptySampleError):
        uniform_empirical([])


def test_ragged_points_rejected():
    """Test points of different dimensions raise DimensionMismatchError"""
    with pytest.raises(DimensionMismatchError):
        uniform_empirical([[0.0, 0.0], [1.0]])


def test_weights_must_sum_to_one(points):
    """Test unnormalized weights are rejected"""
    with pytest.raises(ConfigError):
        WeightedSample(points, [0.5, 0.5, 0.5])


def test_negative_weights_rejected(points):
    """Test negative weights are rejected"""
    with pytest.raises(ConfigError):
        WeightedSample(points, [1.5, -0.25, -0.25])


def test_sample_is_read_only(points):
    """Test atoms cannot be modified in place"""
    sample = uniform_empirical(points)
    with pytest.raises(ValueError):
        sample.points[0, 0] = 5.0


def test_expectation_and_effective_size():
    """Test weighted mean and Kish effective size"""
    sample = WeightedSample([[1.0], [3.0]], [0.25, 0.75])
    assert sample.expectation(lambda X: X[:, 0]) == pytest.approx(2.5)
    assert sample.effective_size() == pytest.approx(1.0 / (0.25 ** 2 + 0.75 ** 2))
    assert uniform_empirical([[0.0], [1.0], [2.0], [3.0]]).effective_size() == pytest.approx(4.0)


def test_importance_weights_follow_density_ratio():
    """Test weights are proportional to the target over a uniform equilibrium"""
    target = TruncatedGaussian(3, 0.5)
    equilibrium = QuadraticCoulomb(3, 2.5)
    X = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 1.0, 0.0]])

    sample = importance_weights(X, target, equilibrium)

    unnormalized = np.exp(-np.sum(X ** 2, axis=1) / (2 * 0.25))
    assert np.allclose(sample.weights, unnormalized / unnormalized.sum())
    assert sample.weights.sum() == pytest.approx(1.0)


def test_importance_weights_zero_outside_target():
    """Test atoms outside the target support get weight exactly 0"""
    target = UniformBall(3, 1.0)
    equilibrium = QuadraticCoulomb(3, 2.0)
    X = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.5, 0.0, 0.0]])

    sample = importance_weights(X, target, equilibrium)

    assert sample.weights[2] == 0.0
    assert sample.weights[0] == pytest.approx(0.5)
    assert sample.weights[1] == pytest.approx(0.5)


def test_importance_weights_degenerate():
    """Test all atoms outside the target support raise DegenerateWeightsError"""
    target = UniformBall(3, 0.5)
    equilibrium = QuadraticCoulomb(3, 2.0)
    with pytest.raises(DegenerateWeightsError):
        importance_weights([[1.0, 0.0, 0.0], [0.0, 1.5, 0.0]], target, equilibrium)


def test_signed_difference_has_zero_charge(points):
    """Test a - b concatenates atoms with opposite signs"""
    a = uniform_empirical(points)
    b = WeightedSample([[1.0, 1.0, 1.0]], [1.0])
    difference = as_signed_difference(a, b)
    assert difference.points.shape == (4, 3)
    assert difference.total_charge == pytest.approx(0.0, abs=1e-15)


def test_signed_difference_dimension_mismatch(points):
    """Test measures in different dimensions cannot be subtracted"""
    with pytest.raises(DimensionMismatchError):
        as_signed_difference(uniform_empirical(points), uniform_empirical([[0.0, 0.0]]))


def test_weighted_sample_csv(tmp_path):
    """Test the w,x1,...,xd CSV keeps every digit"""
    sample = WeightedSample([[0.1, 1.0 / 3.0], [2.0 / 7.0, -1e-9]], [0.3, 0.7])
    path = tmp_path / 'sample.csv'
    save_weighted_sample(sample, path)

    assert path.read_text().splitlines()[0] == 'w,x1,x2'
    loaded = load_weighted_sample(path)
    assert np.array_equal(loaded.points, sample.points)
    assert np.array_equal(loaded.weights, sample.weights)


class ScaledDensity:
    """A density multiplied by a positive constant"""

    def __init__(self, base, factor):
        self.base = base
        self.factor = factor

    def log_density(self, points):
        return self.base.log_density(points) + np.log(self.factor)


def test_importance_weights_ignore_density_scale():
    """Test scaling the target density by a constant leaves the weights unchanged"""
    target = TruncatedGaussian(3, 0.5)
    equilibrium = QuadraticCoulomb(3, 2.5)
    X = np.random.default_rng(7).uniform(-0.8, 0.8, size=(40, 3))
    reference = importance_weights(X, target, equilibrium).weights
    for factor in (1e-6, 3.0, 1e6):
        scaled = importance_weights(X, ScaledDensity(target, factor), equilibrium).weights
        assert np.max(np.abs(scaled - reference)) < 1e-12


def test_flat_points_are_one_dimensional():
    """Test a flat list and a flat array both read as n points in R^1"""
    for flat in ([1.0, 2.0, 3.0], np.array([1.0, 2.0, 3.0])):
        sample = uniform_empirical(flat)
        assert sample.size == 3
        assert sample.dim == 1


def test_empty_and_dimensionless_points_rejected():
    """Test empty samples and points without coordinates are refused"""
    with pytest.raises(EmptySampleError):
        uniform_empirical(np.array([]))
    with pytest.raises(EmptySampleError):
        uniform_empirical([])
    with pytest.raises(DimensionMismatchError):
        uniform_empirical(np.zeros((3, 0)))


def test_load_weighted_sample_reports_bad_files(tmp_path):
    """Test a missing or malformed sample file is a configuration error"""
    with pytest.raises(ConfigError):
        load_weighted_sample(tmp_path / 'absent.csv')
    path = tmp_path / 'broken.csv'
    path.write_text('w,x1\n0.5,abc\n')
    with pytest.raises(ConfigError):
        load_weighted_sample(path)
