"""
Diagnostics Service - Energies, worst-case errors and replicate statistics
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm

from services.potentials.fields import regularization_length, shell_pair_average
from shared.config import BLOCK_SIZE
from shared.errors import (ConfigError, DimensionMismatchError, EmptySampleError, InvalidConfigurationError,
                           SingularKernelError)
from shared.measures import SignedAtomicMeasure
from shared.validators import as_points, validate_positive

logger = logging.getLogger(__name__)

MIN_GAP = 1e-12


def _atoms(m):
    """(points, charges) of a WeightedSample or SignedAtomicMeasure"""
    if isinstance(m, SignedAtomicMeasure):
        return m.points, m.charges
    return m.points, m.weights


def interaction_energy(kernel, m, off_diagonal=False, block_size=None):
    """I_K(m) = sum_{i,j} c_i c_j K(x_i, x_j), row-blocked.

    With off_diagonal=True the i == j terms are dropped; singular kernels
    require it, along with pairwise distinct atoms (gap >= 1e-12).
    """
    X, c = _atoms(m)
    kernel.check_dim(X.shape[1])
    if kernel.singular and not off_diagonal:
        raise SingularKernelError('singular kernel: interaction energy needs the off-diagonal convention')

    block_size = block_size or BLOCK_SIZE
    partials = []
    for start in range(0, X.shape[0], block_size):
        stop = min(start + block_size, X.shape[0])
        sq_dist = cdist(X[start:stop], X, 'sqeuclidean')
        rows, cols = np.arange(stop - start), np.arange(start, stop)
        if kernel.singular:
            sq_dist[rows, cols] = np.inf
            if np.min(sq_dist) < MIN_GAP ** 2:
                raise InvalidConfigurationError('coincident atoms under a singular kernel')
        block = kernel.profile(sq_dist)
        if off_diagonal:
            block[rows, cols] = 0.0
        partials.append(float(c[start:stop] @ block @ c))
    return math.fsum(partials)


def cross_energy(kernel, a, b, block_size=None):
    """I_K(a, b) = sum_{i,j} a_i b_j K(x_i, y_j), row-blocked over a"""
    X, ca = _atoms(a)
    Y, cb = _atoms(b)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError()
    kernel.check_dim(X.shape[1])

    block_size = block_size or BLOCK_SIZE
    partials = []
    for start in range(0, X.shape[0], block_size):
        block = kernel.matrix(X[start:start + block_size], Y)
        if not np.all(np.isfinite(block)):
            raise InvalidConfigurationError('coincident atoms under a singular kernel')
        partials.append(float(ca[start:start + block_size] @ block @ cb))
    return math.fsum(partials)


def _require_bounded(kernel):
    if kernel.singular:
        raise SingularKernelError('MMD requires bounded kernel')


def shifted_energy(kernel, mu, reference):
    """I_K(mu) - 2 I_K(mu, reference): the squared MMD minus the constant I_K(reference)"""
    _require_bounded(kernel)
    return interaction_energy(kernel, mu) - 2.0 * cross_energy(kernel, mu, reference)


def worst_case_error_sq(kernel, mu, reference, reference_energy=None):
    """Plug-in squared MMD I_K(mu) - 2 I_K(mu, ref) + I_K(ref)"""
    _require_bounded(kernel)
    if mu.dim != reference.dim:
        raise DimensionMismatchError()
    if reference_energy is None:
        reference_energy = interaction_energy(kernel, reference)
    return shifted_energy(kernel, mu, reference) + reference_energy


def worst_case_error(kernel, mu, reference, reference_energy=None):
    """MMD, with negative rounding of the square clipped to 0"""
    return math.sqrt(max(worst_case_error_sq(kernel, mu, reference, reference_energy), 0.0))


def variance_linear_statistic(replicate_samples, f):
    """Unbiased variance across replicates of sum_i w_i f(x_i)"""
    replicate_samples = list(replicate_samples)
    if len(replicate_samples) < 2:
        raise ConfigError('variance needs at least 2 replicates')
    statistics = np.array([sample.expectation(f) for sample in replicate_samples])
    return float(np.var(statistics, ddof=1))


def simultaneous_coverage(estimates, references, delta):
    """Fraction of replicates whose estimates are all within delta of the references"""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    references = np.asarray(references, dtype=float).reshape(-1)
    if estimates.shape[1] != references.shape[0]:
        raise DimensionMismatchError(
            f"dimension mismatch: {estimates.shape[1]} estimates per replicate, {references.shape[0]} references"
        )
    worst = np.max(np.abs(estimates - references[None, :]), axis=1)
    return float(np.mean(worst <= delta))


def quantile(values, q):
    """Lower empirical quantile: order statistic ceil(q N) - 1, clamped"""
    values = sorted(float(v) for v in values)
    if not values:
        raise EmptySampleError('empty sample: quantile of no values')
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"quantile level must lie in [0, 1], got {q}")
    index = math.ceil(q * len(values) - 1e-9) - 1
    return values[min(max(index, 0), len(values) - 1)]


def shell_interaction_energy(kernel, m, radius):
    """I_K of the measure obtained by spreading every atom uniformly on a sphere of the given radius.

    Exact closed form in R^3 for kernels (|x - y|^2 + a^2)^(-1/2): Coulomb,
    regularized Coulomb and Riesz with s = 1. The Coulomb energy is finite.
    """
    validate_positive('radius', radius)
    X, c = _atoms(m)
    if X.shape[1] != 3:
        raise DimensionMismatchError('dimension mismatch: shell energies are available in 3-d only')
    a = regularization_length(kernel)

    distances = cdist(X, X)
    values = shell_pair_average(distances, radius, radius, a)
    return float(c @ values @ c)


@dataclass(frozen=True, eq=False)
class KernelTestFunction:
    """f(x) = sum_i a_i K(x, z_i)"""
    kernel: object
    centers: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        centers = as_points(self.centers)
        coefficients = np.array(self.coefficients, dtype=float).reshape(-1)
        if coefficients.shape[0] != centers.shape[0]:
            raise ConfigError('centers and coefficients must have the same length')
        coefficients.setflags(write=False)
        object.__setattr__(self, 'centers', centers)
        object.__setattr__(self, 'coefficients', coefficients)

    @classmethod
    def draw(cls, kernel, d, n_centers, generator):
        """Centers uniform on [-1, 1]^d, coefficients uniform on [-1, 1]"""
        centers = generator.uniform(-1.0, 1.0, size=(n_centers, d))
        coefficients = generator.uniform(-1.0, 1.0, size=n_centers)
        return cls(kernel, centers, coefficients)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.kernel.matrix(X, self.centers) @ self.coefficients

    def to_dict(self):
        return {
            'centers': self.centers.tolist(),
            'coefficients': self.coefficients.tolist(),
        }


def _autocorrelation(x):
    n = x.shape[0]
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centred, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n]
    if acov[0] <= 0:
        return None
    return acov / acov[0]


def effective_sample_size(chain):
    """Autocorrelation ESS with the initial positive sequence truncation, per coordinate"""
    chain = np.asarray(chain, dtype=float)
    single = chain.ndim == 1
    chain = chain.reshape(chain.shape[0], -1)
    n = chain.shape[0]
    if n < 2:
        raise EmptySampleError('empty sample: ESS needs at least 2 states')

    sizes = np.empty(chain.shape[1])
    for k in range(chain.shape[1]):
        rho = _autocorrelation(chain[:, k])
        if rho is None:
            sizes[k] = float(n)
            continue
        tau = -1.0
        for lag in range(0, n - 1, 2):
            pair = rho[lag] + rho[lag + 1]
            if pair <= 0:
                break
            tau += 2.0 * pair
        sizes[k] = n / max(tau, 1.0 / n)
    return float(sizes[0]) if single else sizes


def coverage_interval(p, count, alpha=0.05, comparisons=1):
    """Gaussian interval for a proportion, Bonferroni-corrected over `comparisons`"""
    if count < 1:
        raise ConfigError('coverage interval needs at least one replicate')
    z = norm.ppf(1.0 - alpha / (2.0 * comparisons))
    half_width = z * math.sqrt(p * (1.0 - p) / count)
    return max(0.0, p - half_width), min(1.0, p + half_width)
