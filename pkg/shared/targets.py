"""
Compactly supported target densities and the Coulomb equilibrium

Densities are unnormalized; normalizing constants never enter the pipeline.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln, log_expit

from shared.errors import ConfigError, DimensionMismatchError
from shared.validators import (as_point, as_points, parse_call_spec, reject_unknown, take_number,
                               validate_dimension, validate_positive)


def _rows(points, dim):
    """(m, d) view of one point or a batch"""
    array = np.asarray(points, dtype=float)
    single = array.ndim == 1
    array = np.atleast_2d(array)
    if array.shape[1] != dim:
        raise DimensionMismatchError(f"dimension mismatch: expected {dim}, got {array.shape[1]}")
    return array, single


def log_ball_volume(d, R):
    """log vol(B(0, R)) in R^d"""
    return 0.5 * d * math.log(math.pi) + d * math.log(R) - gammaln(0.5 * d + 1.0)


class TargetDensity:
    """Unnormalized density supported in the closed ball B(0, support_radius())"""
    dim = None

    def support_radius(self):
        raise NotImplementedError

    def _log_inside(self, X):
        raise NotImplementedError

    def _grad_inside(self, X):
        raise NotImplementedError

    def log_density(self, points):
        """Vectorized log density, -inf outside the support"""
        X, single = _rows(points, self.dim)
        inside = np.einsum('ij,ij->i', X, X) <= self.support_radius() ** 2
        values = np.full(X.shape[0], -np.inf)
        if np.any(inside):
            values[inside] = self._log_inside(X[inside])
        return values[0] if single else values

    def density(self, points):
        return np.exp(self.log_density(points))

    def grad_log_density(self, points):
        """Gradient of the log density on the interior of the support"""
        X, single = _rows(points, self.dim)
        grads = self._grad_inside(X)
        return grads[0] if single else grads


@dataclass(frozen=True)
class TruncatedGaussian(TargetDensity):
    """exp(-|x|^2 / (2 sigma^2)) restricted to |x| <= cutoff_radius (default 5 sigma)"""
    d: int
    sigma: float
    cutoff_radius: float = None

    def __post_init__(self):
        validate_dimension(self.d)
        validate_positive('sigma', self.sigma)
        if self.cutoff_radius is None:
            object.__setattr__(self, 'cutoff_radius', 5.0 * self.sigma)
        validate_positive('cutoff_radius', self.cutoff_radius)

    @property
    def dim(self):
        return self.d

    def support_radius(self):
        return self.cutoff_radius

    def _log_inside(self, X):
        return -np.einsum('ij,ij->i', X, X) / (2.0 * self.sigma ** 2)

    def _grad_inside(self, X):
        return -X / self.sigma ** 2


@dataclass(frozen=True)
class UniformBall(TargetDensity):
    """Constant density on B(0, radius)"""
    d: int
    radius: float

    def __post_init__(self):
        validate_dimension(self.d)
        validate_positive('radius', self.radius)

    @property
    def dim(self):
        return self.d

    def support_radius(self):
        return self.radius

    def _log_inside(self, X):
        return np.zeros(X.shape[0])

    def _grad_inside(self, X):
        return np.zeros_like(X)


@dataclass(frozen=True, eq=False)
class LogisticPosterior(TargetDensity):
    """Posterior of binary logistic regression under a truncated Gaussian prior.

    The parameter y lives in R^(p+1) for p features: the last coordinate is the
    intercept. The support is the prior's ball of radius prior_cutoff.
    """
    features: np.ndarray
    labels: np.ndarray
    prior_sigma: float = 0.5
    prior_cutoff: float = None
    design: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        features = as_points(self.features)
        labels = np.array(self.labels, dtype=float).reshape(-1)
        if labels.shape[0] != features.shape[0]:
            raise ConfigError('features and labels must have the same length')
        if not np.all((labels == 0) | (labels == 1)):
            raise ConfigError('labels must be 0 or 1')
        validate_positive('prior_sigma', self.prior_sigma)
        if self.prior_cutoff is None:
            object.__setattr__(self, 'prior_cutoff', 5.0 * self.prior_sigma)
        validate_positive('prior_cutoff', self.prior_cutoff)

        labels.setflags(write=False)
        design = np.column_stack([features, np.ones(features.shape[0])])
        design.setflags(write=False)
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'design', design)

    @property
    def dim(self):
        return self.design.shape[1]

    def support_radius(self):
        return self.prior_cutoff

    def log_likelihood(self, points):
        X, single = _rows(points, self.dim)
        logits = X @ self.design.T
        values = log_expit(logits) @ self.labels + log_expit(-logits) @ (1.0 - self.labels)
        return values[0] if single else values

    def grad_log_likelihood(self, points):
        X, single = _rows(points, self.dim)
        residuals = self.labels[None, :] - expit(X @ self.design.T)
        grads = residuals @ self.design
        return grads[0] if single else grads

    def _log_inside(self, X):
        return self.log_likelihood(X) - np.einsum('ij,ij->i', X, X) / (2.0 * self.prior_sigma ** 2)

    def _grad_inside(self, X):
        return self.grad_log_likelihood(X) - X / self.prior_sigma ** 2


@dataclass(frozen=True)
class QuadraticCoulomb:
    """Coulomb equilibrium for V(x) = ((d-2) / (2 R^d)) |x|^2: uniform measure on B(0, R)"""
    d: int
    R: float

    def __post_init__(self):
        validate_dimension(self.d, minimum=3)
        validate_positive('R', self.R)

    @property
    def dim(self):
        return self.d

    @property
    def log_volume(self):
        return log_ball_volume(self.d, self.R)

    @property
    def density_constant(self):
        """c = 1 / vol(B(0, R))"""
        return math.exp(-self.log_volume)

    def support_radius(self):
        return self.R

    def potential(self, points):
        X, single = _rows(points, self.d)
        values = (self.d - 2) / (2.0 * self.R ** self.d) * np.einsum('ij,ij->i', X, X)
        return values[0] if single else values

    def potential_grad(self, points):
        X, single = _rows(points, self.d)
        grads = (self.d - 2) / self.R ** self.d * X
        return grads[0] if single else grads

    def log_density(self, points):
        X, single = _rows(points, self.d)
        inside = np.einsum('ij,ij->i', X, X) <= self.R ** 2
        values = np.where(inside, -self.log_volume, -np.inf)
        return values[0] if single else values

    def density(self, points):
        return np.exp(self.log_density(points))


EquilibriumSpec = QuadraticCoulomb


def log_unnorm_density(t, x):
    """log pi'(x) up to an additive constant; -inf outside the support"""
    return float(t.log_density(as_point(x, t.dim)))


def density_ratio_ready(t, x):
    """exp(log_unnorm_density), 0 outside the support"""
    return float(np.exp(log_unnorm_density(t, x)))


def logistic_predictive(y, z):
    """p(t = 1 | z, y) = sigmoid(y . [z, 1])"""
    y, z = as_point(y), as_point(z)
    return float(expit(y @ np.append(z, 1.0)))


def predictive_matrix(Y, Z):
    """p(t = 1 | Z_j, Y_i) for every parameter row i and test point j"""
    Z = np.atleast_2d(Z)
    design = np.column_stack([Z, np.ones(Z.shape[0])])
    return expit(np.atleast_2d(Y) @ design.T)


def synthesize_classification_data(n_train, n_test, separation=4.0, seed=0):
    """Balanced mixture of two unit-variance Gaussians in R^2; labels are component memberships"""
    if n_train < 1 or n_test < 1:
        raise ConfigError('n_train and n_test must be >= 1')
    rng = np.random.default_rng(seed)
    direction = np.array([1.0, 1.0]) / math.sqrt(2.0)
    means = np.stack([-0.5 * separation * direction, 0.5 * separation * direction])

    labels = rng.permutation(np.arange(n_train) % 2)
    features = means[labels] + rng.standard_normal((n_train, 2))

    test_components = rng.permutation(np.arange(n_test) % 2)
    test_points = means[test_components] + rng.standard_normal((n_test, 2))

    return features, labels.astype(int), test_points


def save_training_csv(features, labels, path):
    """Write `z1,z2,t`"""
    table = np.column_stack([features, labels])
    header = ','.join([f"z{k + 1}" for k in range(features.shape[1])] + ['t'])
    np.savetxt(path, table, delimiter=',', header=header, comments='', fmt='%.17g')


def load_training_csv(path):
    try:
        table = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read training data {path}: {e}") from e
    if table.shape[1] < 2:
        raise ConfigError(f"{path}: expected columns z1,...,zp,t")
    if not np.all(np.isin(table[:, -1], (0.0, 1.0))):
        raise ConfigError(f"{path}: labels in column t must be 0 or 1")
    return table[:, :-1], table[:, -1].astype(int)


def parse_target(text, data=None):
    """Build a target from `trunc_gaussian(d=3,sigma=0.5)`, `uniform_ball(d=2,R=1)` or `logistic(train=path.csv,prior_sigma=0.5)`.

    A logistic spec without `train` takes (features, labels) from data.
    """
    name, params = parse_call_spec(text)

    if name == 'trunc_gaussian':
        d = take_number(params, 'd', kind=int, spec=text)
        sigma = take_number(params, 'sigma', spec=text)
        cutoff = take_number(params, 'cutoff', default=5.0 * sigma, spec=text)
        target = TruncatedGaussian(d, sigma, cutoff)
    elif name == 'uniform_ball':
        target = UniformBall(take_number(params, 'd', kind=int, spec=text), take_number(params, 'R', spec=text))
    elif name == 'logistic':
        prior_sigma = take_number(params, 'prior_sigma', default=0.5, spec=text)
        prior_cutoff = take_number(params, 'prior_cutoff', default=5.0 * prior_sigma, spec=text)
        if 'train' in params:
            features, labels = load_training_csv(params.pop('train'))
        elif data is not None:
            features, labels = data
        else:
            raise ConfigError(f"logistic target needs train=path.csv or synthesized data: {text!r}")
        target = LogisticPosterior(features, labels, prior_sigma, prior_cutoff)
    else:
        raise ConfigError(f"unknown target {name!r}")

    reject_unknown(params, text)
    return target
