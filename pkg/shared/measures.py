"""
Finitely supported measures on R^d

WeightedSample is the common currency of the toolkit: empirical measures,
backgrounds and quadrature rules are all atoms plus normalized weights.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from shared.errors import ConfigError, DegenerateWeightsError, DimensionMismatchError
from shared.validators import as_points

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class WeightedSample:
    """Atoms with nonnegative weights summing to one"""
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = as_points(self.points)
        weights = np.array(self.weights, dtype=float).reshape(-1)

        if weights.shape[0] != points.shape[0]:
            raise ConfigError('points and weights must have the same length')
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ConfigError('weights must be finite and nonnegative')
        if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise ConfigError(f"weights must sum to 1, got {weights.sum()!r}")

        weights.setflags(write=False)
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'weights', weights)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    def __len__(self):
        return self.size

    def expectation(self, f):
        """Weighted mean of a vectorized function f: (m, d) -> (m,)"""
        values = np.asarray(f(self.points), dtype=float).reshape(-1)
        return float(values @ self.weights)

    def effective_size(self):
        """Kish effective sample size"""
        return float(1.0 / np.sum(self.weights ** 2))


@dataclass(frozen=True)
class SignedAtomicMeasure:
    """Atoms with arbitrary signed charges, only used to evaluate energies"""
    points: np.ndarray
    charges: np.ndarray

    def __post_init__(self):
        points = as_points(self.points)
        charges = np.array(self.charges, dtype=float).reshape(-1)
        if charges.shape[0] != points.shape[0]:
            raise ConfigError('points and charges must have the same length')
        charges.setflags(write=False)
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'charges', charges)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def total_charge(self):
        return math.fsum(self.charges.tolist())


def uniform_empirical(points):
    """Empirical measure (1/n) sum of Dirac masses, order preserved"""
    points = as_points(points)
    n = points.shape[0]
    return WeightedSample(points, np.full(n, 1.0 / n))


def importance_weights(points, target_density, equilibrium_density):
    """Reweight atoms by the density ratio target / equilibrium.

    Atoms where the target density vanishes get weight exactly 0. Both
    densities may be unnormalized: the normalization cancels.
    """
    points = as_points(points)
    log_target = np.asarray(target_density.log_density(points), dtype=float)
    log_equilibrium = np.asarray(equilibrium_density.log_density(points), dtype=float)

    interior = np.isfinite(log_target) & np.isfinite(log_equilibrium)
    if not np.any(interior):
        raise DegenerateWeightsError()

    outside_equilibrium = np.isfinite(log_target) & ~np.isfinite(log_equilibrium)
    if np.any(outside_equilibrium):
        logger.warning(f"{int(outside_equilibrium.sum())} atoms lie outside the equilibrium support; weight set to 0")

    log_weights = np.full(points.shape[0], -np.inf)
    log_weights[interior] = log_target[interior] - log_equilibrium[interior]
    weights = softmax(log_weights)
    weights[~interior] = 0.0

    positive = int(np.count_nonzero(weights))
    if positive < math.sqrt(points.shape[0]):
        logger.warning(f"effective sample size collapse: {positive} of {points.shape[0]} atoms carry weight")

    return WeightedSample(points, weights)


def as_signed_difference(a, b):
    """Signed measure a - b with concatenated atoms"""
    if a.dim != b.dim:
        raise DimensionMismatchError()
    points = np.vstack([a.points, b.points])
    charges = np.concatenate([a.weights, -b.weights])
    return SignedAtomicMeasure(points, charges)


def save_weighted_sample(sample, path):
    """Write `w,x1,...,xd` CSV with 17 significant digits"""
    header = ','.join(['w'] + [f"x{k + 1}" for k in range(sample.dim)])
    table = np.column_stack([sample.weights, sample.points])
    np.savetxt(path, table, delimiter=',', header=header, comments='', fmt='%.17g')


def load_weighted_sample(path):
    """Read a CSV written by save_weighted_sample"""
    try:
        table = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read weighted sample {path}: {e}") from e
    if table.shape[1] < 2:
        raise ConfigError(f"{path}: expected columns w,x1,...,xd")
    return WeightedSample(table[:, 1:], table[:, 0])
