"""
Unit tests for the Diagnostics Service
"""
import math
import pytest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from services.diagnostics.metrics import (KernelTestFunction, coverage_interval, cross_energy,
                                          effective_sample_size, interaction_energy, quantile, shell_interaction_energy,
                                          shifted_energy, simultaneous_coverage, variance_linear_statistic,
                                          worst_case_error, worst_case_error_sq)
from services.diagnostics.report import DiagnosticsReport, compute_stat
from shared.errors import (ConfigError, DimensionMismatchError, EmptySampleError, InvalidConfigurationError,
                           SingularKernelError)
from shared.kernels import Coulomb, CoulombRegularized, RieszRegularized
from shared.measures import SignedAtomicMeasure, WeightedSample, as_signed_difference, uniform_empirical


@pytest.fixture
def riesz():
    return RieszRegularized(1.0, 0.1)


def _random_sample(generator, size, d=3):
    weights = generator.random(size)
    return WeightedSample(generator.uniform(-1.0, 1.0, size=(size, d)), weights / weights.sum())


def test_interaction_energy_of_dirac(riesz):
    """Test I_K(delta_x) = K(x, x)"""
    assert interaction_energy(riesz, uniform_empirical([[0.2, 0.3, 0.4]])) == pytest.approx(10.0)


def test_interaction_energy_matches_double_sum(riesz):
    """Test the blocked energy against the explicit double sum"""
    sample = _random_sample(np.random.default_rng(0), 12)
    K = riesz.matrix(sample.points, sample.points)
    expected = sample.weights @ K @ sample.weights
    assert interaction_energy(riesz, sample) == pytest.approx(expected, rel=1e-12)
    assert interaction_energy(riesz, sample, block_size=5) == pytest.approx(expected, rel=1e-12)


def test_singular_energy_needs_off_diagonal():
    """Test the Coulomb energy drops the diagonal and refuses coincident atoms"""
    m = uniform_empirical([[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]])
    with pytest.raises(SingularKernelError):
        interaction_energy(Coulomb(3), m)
    assert interaction_energy(Coulomb(3), m, off_diagonal=True) == pytest.approx(2 * 0.25 * 0.5)
    with pytest.raises(InvalidConfigurationError):
        interaction_energy(Coulomb(3), uniform_empirical([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]), off_diagonal=True)


def test_cross_energy(riesz):
    """Test I_K(a, b) is the weighted cross sum and symmetric"""
    generator = np.random.default_rng(1)
    a, b = _random_sample(generator, 7), _random_sample(generator, 9)
    expected = a.weights @ riesz.matrix(a.points, b.points) @ b.weights
    assert cross_energy(riesz, a, b) == pytest.approx(expected, rel=1e-12)
    assert cross_energy(riesz, a, b, block_size=2) == pytest.approx(cross_energy(riesz, b, a), rel=1e-12)
    with pytest.raises(DimensionMismatchError):
        cross_energy(riesz, a, uniform_empirical([[0.0, 0.0]]))


def test_worst_case_error_vanishes_on_itself(riesz):
    """Test MMD(mu, mu) = 0 up to rounding"""
    sample = _random_sample(np.random.default_rng(2), 10)
    assert worst_case_error_sq(riesz, sample, sample) == pytest.approx(0.0, abs=1e-10)
    assert worst_case_error(riesz, sample, sample) < 1e-5


def test_worst_case_error_is_nonnegative(riesz):
    """Test the squared MMD is >= -1e-10 on 200 random pairs"""
    generator = np.random.default_rng(3)
    for _ in range(200):
        mu = _random_sample(generator, int(generator.integers(1, 15)))
        ref = _random_sample(generator, int(generator.integers(1, 15)))
        assert worst_case_error_sq(riesz, mu, ref) >= -1e-10


def test_shifted_energy_plus_constant(riesz):
    """Test the shifted energy differs from the squared MMD by I_K(ref)"""
    generator = np.random.default_rng(4)
    mu, ref = _random_sample(generator, 8), _random_sample(generator, 20)
    assert shifted_energy(riesz, mu, ref) + interaction_energy(riesz, ref) == pytest.approx(
        worst_case_error_sq(riesz, mu, ref), rel=1e-12)


def test_worst_case_error_needs_bounded_kernel():
    """Test the Coulomb kernel is refused"""
    m = uniform_empirical([[0.0, 0.0, 0.0]])
    with pytest.raises(SingularKernelError) as excinfo:
        worst_case_error_sq(Coulomb(3), m, m)
    assert 'MMD requires bounded kernel' in str(excinfo.value)


def test_rkhs_duality_bound(riesz):
    """Test |E_mu f - E_ref f| <= ||f|| MMD for unit-norm kernel test functions"""
    generator = np.random.default_rng(5)
    mu, ref = _random_sample(generator, 15), _random_sample(generator, 25)
    mmd = worst_case_error(riesz, mu, ref)
    for _ in range(20):
        f = KernelTestFunction.draw(riesz, 3, 6, generator)
        norm = math.sqrt(f.coefficients @ riesz.matrix(f.centers, f.centers) @ f.coefficients)
        gap = abs(mu.expectation(f) - ref.expectation(f)) / norm
        assert gap <= mmd + 1e-10


@pytest.mark.parametrize('zeta', [0.01, 0.05])
@pytest.mark.parametrize('n', [10, 100])
def test_energy_dominance_on_smeared_measures(zeta, n):
    """Test I_{K_zeta}(m) <= I_g(m) for 200 signed differences smeared on small spheres"""
    generator = np.random.default_rng(6)
    regularized = CoulombRegularized(3, zeta, n)
    violations = 0
    for _ in range(200):
        a = _random_sample(generator, int(generator.integers(1, 8)))
        b = _random_sample(generator, int(generator.integers(1, 8)))
        m = as_signed_difference(a, b)
        smooth = shell_interaction_energy(regularized, m, 0.1)
        singular = shell_interaction_energy(Coulomb(3), m, 0.1)
        violations += int(smooth > singular + 1e-10)
    assert violations == 0


def test_shell_energy_of_single_shell():
    """Test a unit charge on a sphere of radius r has Coulomb energy 1/r"""
    m = SignedAtomicMeasure([[0.0, 0.0, 0.0]], [1.0])
    assert shell_interaction_energy(Coulomb(3), m, 0.25) == pytest.approx(4.0)
    with pytest.raises(DimensionMismatchError):
        shell_interaction_energy(Coulomb(4), SignedAtomicMeasure([[0.0, 0.0, 0.0, 0.0]], [1.0]), 0.25)


def test_quantile_order_statistic():
    """Test the lower empirical quantile"""
    values = list(range(1, 11))
    assert quantile(values, 0.9) == 9
    assert quantile(values, 0.5) == 5
    assert quantile(values, 0.0) == 1
    assert quantile(values, 1.0) == 10
    assert quantile([3.0], 0.9) == 3.0
    with pytest.raises(EmptySampleError):
        quantile([], 0.9)
    with pytest.raises(ConfigError):
        quantile(values, 1.5)


def test_simultaneous_coverage():
    """Test the fraction of replicates within delta on every test point"""
    estimates = np.array([[0.5, 0.5], [0.5, 0.7], [0.45, 0.52]])
    references = np.array([0.5, 0.5])
    assert simultaneous_coverage(estimates, references, 0.1) == pytest.approx(2.0 / 3.0)
    assert simultaneous_coverage(estimates, references, 1.0) == 1.0
    with pytest.raises(DimensionMismatchError):
        simultaneous_coverage(estimates, [0.5, 0.5, 0.5], 0.1)


def test_variance_linear_statistic():
    """Test the unbiased variance of sum_i w_i f(x_i) across replicates"""
    replicates = [uniform_empirical([[1.0]]), uniform_empirical([[3.0]]), uniform_empirical([[0.0], [4.0]])]
    assert variance_linear_statistic(replicates, lambda X: X[:, 0]) == pytest.approx(np.var([1.0, 3.0, 2.0], ddof=1))
    with pytest.raises(ConfigError):
        variance_linear_statistic(replicates[:1], lambda X: X[:, 0])


def test_kernel_test_function(riesz):
    """Test centers and coefficients are drawn in [-1, 1] and serialized"""
    f = KernelTestFunction.draw(riesz, 3, 10, np.random.default_rng(7))
    assert f.centers.shape == (10, 3)
    assert np.all(np.abs(f.centers) <= 1.0)
    assert np.all(np.abs(f.coefficients) <= 1.0)
    x = np.array([0.1, 0.2, 0.3])
    expected = sum(a * riesz.evaluate(x, z) for a, z in zip(f.coefficients, f.centers))
    assert f(x)[0] == pytest.approx(expected)
    assert len(f.to_dict()['centers']) == 10
    with pytest.raises(ConfigError):
        KernelTestFunction(riesz, np.zeros((2, 3)), [1.0])


def test_effective_sample_size():
    """Test ESS is about n for white noise and much smaller for a sticky AR(1) chain"""
    generator = np.random.default_rng(8)
    noise = generator.standard_normal(20000)
    assert 0.6 * 20000 < effective_sample_size(noise) < 1.6 * 20000

    chain = np.empty(20000)
    chain[0] = 0.0
    for t in range(1, 20000):
        chain[t] = 0.9 * chain[t - 1] + noise[t]
    assert 500 < effective_sample_size(chain) < 2000

    assert effective_sample_size(np.ones(50)) == 50.0
    assert effective_sample_size(np.column_stack([noise, chain])).shape == (2,)


def test_coverage_interval():
    """Test the Gaussian interval and its Bonferroni widening"""
    low, high = coverage_interval(0.5, 100)
    assert high - low == pytest.approx(2 * 1.959964 * 0.05, rel=1e-5)
    wide_low, wide_high = coverage_interval(0.5, 100, comparisons=5)
    assert wide_high - wide_low > high - low
    assert coverage_interval(1.0, 50) == (1.0, 1.0)


def test_compute_stat():
    """Test aggregate statistics by name"""
    values = [0.01, 0.03, 0.05, 0.2]
    assert compute_stat(values, 'quantile_90') == 0.2
    assert compute_stat(values, 'median') == pytest.approx(0.04)
    assert compute_stat(values, 'mean') == pytest.approx(0.0725)
    assert compute_stat(values, 'variance') == pytest.approx(np.var(values, ddof=1))
    assert compute_stat(values, 'coverage@0.04') == pytest.approx(0.5)
    low = compute_stat(values, 'coverage_lo@0.04')
    high = compute_stat(values, 'coverage_hi@0.04')
    assert low < 0.5 < high
    with pytest.raises(ConfigError):
        compute_stat(values, 'mode')


def test_report_orders_and_aggregates(tmp_path):
    """Test canonical record order, aggregates from records and CSV round trip"""
    report = DiagnosticsReport('mmd-decay', plan={'shifted_energy': ['quantile_90', 'median']})
    for seed, value in ((9, 0.3), (2, 0.1), (5, 0.2)):
        report.add('shifted_energy', 'mcmc', 100, seed, value)
    report.add('shifted_energy', 'gibbs', 100, (1 << 64) - 1, -0.5)
    report.add('shifted_energy', 'gibbs', 50, 4, 1.0 / 3.0)

    records, aggregates = report.to_frames()
    assert records[['method', 'n']].values.tolist() == [['gibbs', 50], ['gibbs', 100], ['mcmc', 100],
                                                         ['mcmc', 100], ['mcmc', 100]]
    assert records['seed'].tolist()[2:] == [2, 5, 9]
    assert len(aggregates) == 6
    mcmc = aggregates[(aggregates['method'] == 'mcmc') & (aggregates['stat'] == 'quantile_90')]
    assert mcmc['value'].tolist() == [0.3]

    report.write(tmp_path)
    loaded_records, loaded_aggregates = DiagnosticsReport.read(tmp_path)
    assert loaded_records['value'].tolist() == records['value'].tolist()
    assert loaded_records['seed'].tolist() == records['seed'].tolist()
    assert loaded_aggregates['stat'].tolist() == aggregates['stat'].tolist()


def test_report_summary():
    """Test the summary pivots stats into columns"""
    report = DiagnosticsReport('variance', plan={'linear_statistic': ['variance']})
    report.extend([
        {'metric': 'linear_statistic', 'method': 'gibbs', 'n': 50, 'seed': 1, 'value': 1.0},
        {'metric': 'linear_statistic', 'method': 'gibbs', 'n': 50, 'seed': 2, 'value': 3.0},
    ])
    summary = report.summary()
    assert summary.loc[('linear_statistic', 'gibbs', 50), 'variance'] == pytest.approx(2.0)


def test_report_uses_supplied_aggregates():
    """Test a supplied value replaces the computed stat and unplanned stats are refused"""
    report = DiagnosticsReport('variance', plan={'linear_statistic': ['variance', 'median']})
    for seed, value in ((1, 1.0), (2, 3.0)):
        report.add('linear_statistic', 'gibbs', 50, seed, value)
    report.set_aggregate('linear_statistic', 'gibbs', 50, 'variance', 0.5)
    aggregates = report.aggregate().set_index('stat')['value']
    assert aggregates['variance'] == 0.5
    assert aggregates['median'] == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        report.set_aggregate('linear_statistic', 'gibbs', 50, 'quantile_90', 1.0)
