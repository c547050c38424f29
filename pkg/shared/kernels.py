"""
Interaction kernels

Every kernel here is radial: K(x, y) = k(|x - y|^2). Subclasses provide the
profile k and its derivative k'; evaluation, gradients and pairwise matrices
are shared.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from shared.errors import ConfigError, DimensionMismatchError, SingularKernelError
from shared.validators import (as_point, parse_call_spec, reject_unknown, take_number,
                               validate_dimension, validate_positive)

logger = logging.getLogger(__name__)


class Kernel:
    """Radial interaction kernel"""
    singular = False
    dim = None

    def profile(self, sq_dist):
        raise NotImplementedError

    def profile_derivative(self, sq_dist):
        raise NotImplementedError

    def diag_sup(self):
        raise NotImplementedError

    def check_dim(self, d):
        if self.dim is not None and d != self.dim:
            raise DimensionMismatchError(f"dimension mismatch: kernel is {self.dim}-d, points are {d}-d")

    def evaluate(self, x, y):
        x, y = as_point(x), as_point(y)
        if x.shape != y.shape:
            raise DimensionMismatchError()
        self.check_dim(x.shape[0])
        return float(self.profile(np.array([np.sum((x - y) ** 2)]))[0])

    def grad2(self, x, y):
        """Gradient of K(x, y) with respect to y"""
        x, y = as_point(x), as_point(y)
        if x.shape != y.shape:
            raise DimensionMismatchError()
        self.check_dim(x.shape[0])
        sq_dist = np.sum((x - y) ** 2)
        if self.singular and sq_dist == 0.0:
            raise SingularKernelError('singular gradient')
        slope = self.profile_derivative(np.array([sq_dist]))[0]
        return 2.0 * slope * (y - x)

    def matrix(self, X, Y):
        """Kernel matrix K(X_i, Y_j)"""
        self.check_dim(X.shape[1])
        return self.profile(cdist(X, Y, 'sqeuclidean'))

    def pair_values(self, X):
        """K(X_i, X_j) for i < j in lexicographic (condensed) order"""
        self.check_dim(X.shape[1])
        return self.profile(pdist(X, 'sqeuclidean'))

    def grad1_sum(self, X, Y, weights):
        """Rows sum_j w_j grad_1 K(X_i, Y_j)"""
        self.check_dim(X.shape[1])
        slopes = self.profile_derivative(cdist(X, Y, 'sqeuclidean')) * weights[None, :]
        return 2.0 * (X * slopes.sum(axis=1)[:, None] - slopes @ Y)


@dataclass(frozen=True)
class Coulomb(Kernel):
    """g(x, y) = |x - y|^-(d-2), singular on the diagonal"""
    d: int
    singular = True

    def __post_init__(self):
        validate_dimension(self.d, minimum=3)

    @property
    def dim(self):
        return self.d

    def profile(self, sq_dist):
        with np.errstate(divide='ignore'):
            return np.power(sq_dist, -(self.d - 2) / 2.0)

    def profile_derivative(self, sq_dist):
        with np.errstate(divide='ignore'):
            return -(self.d - 2) / 2.0 * np.power(sq_dist, -self.d / 2.0)

    def diag_sup(self):
        return math.inf


@dataclass(frozen=True)
class CoulombRegularized(Kernel):
    """K_zeta(x, y) = (|x - y|^2 + n^(-2 zeta))^-((d-2)/2); carries the particle count n"""
    d: int
    zeta: float
    n: int

    def __post_init__(self):
        validate_dimension(self.d, minimum=3)
        validate_positive('zeta', self.zeta)
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        if self.zeta >= 1.0 / self.d ** 2:
            logger.warning(f"zeta={self.zeta} is beyond the theoretical constraint zeta < 1/d^2 = {1.0 / self.d ** 2:.4g}")

    @property
    def dim(self):
        return self.d

    @property
    def smoothing(self):
        """Squared regularization n^(-2 zeta)"""
        return float(self.n) ** (-2.0 * self.zeta)

    def profile(self, sq_dist):
        return np.power(sq_dist + self.smoothing, -(self.d - 2) / 2.0)

    def profile_derivative(self, sq_dist):
        return -(self.d - 2) / 2.0 * np.power(sq_dist + self.smoothing, -self.d / 2.0)

    def diag_sup(self):
        return float(self.n) ** (self.zeta * (self.d - 2))


@dataclass(frozen=True)
class RieszRegularized(Kernel):
    """K_{s,eps}(x, y) = (|x - y|^2 + eps^2)^(-s/2)"""
    s: float
    eps: float

    def __post_init__(self):
        validate_positive('s', self.s)
        validate_positive('eps', self.eps)

    def profile(self, sq_dist):
        return np.power(sq_dist + self.eps ** 2, -self.s / 2.0)

    def profile_derivative(self, sq_dist):
        return -self.s / 2.0 * np.power(sq_dist + self.eps ** 2, -self.s / 2.0 - 1.0)

    def diag_sup(self):
        return self.eps ** (-self.s)


@dataclass(frozen=True)
class Gaussian(Kernel):
    """exp(-|x - y|^2 / (2 h^2))"""
    bandwidth: float

    def __post_init__(self):
        validate_positive('bandwidth', self.bandwidth)

    def profile(self, sq_dist):
        return np.exp(-sq_dist / (2.0 * self.bandwidth ** 2))

    def profile_derivative(self, sq_dist):
        return -np.exp(-sq_dist / (2.0 * self.bandwidth ** 2)) / (2.0 * self.bandwidth ** 2)

    def diag_sup(self):
        return 1.0


class CountingKernel(Kernel):
    """Instrumentation wrapper counting profile evaluations"""

    def __init__(self, base):
        self.base = base
        self.evaluations = 0

    def __getattr__(self, name):
        if name == 'base':
            raise AttributeError(name)
        return getattr(self.base, name)

    @property
    def singular(self):
        return self.base.singular

    @property
    def dim(self):
        return self.base.dim

    def profile(self, sq_dist):
        self.evaluations += np.size(sq_dist)
        return self.base.profile(sq_dist)

    def profile_derivative(self, sq_dist):
        return self.base.profile_derivative(sq_dist)

    def diag_sup(self):
        return self.base.diag_sup()

    def reset(self):
        self.evaluations = 0


def kernel_eval(spec, x, y):
    """K(x, y); +inf on the diagonal of the Coulomb kernel"""
    return spec.evaluate(x, y)


def kernel_grad2(spec, x, y):
    """Gradient of K(x, y) in y"""
    return spec.grad2(x, y)


def diag_sup(spec):
    """sup_x K(x, x)"""
    return spec.diag_sup()


def parse_kernel(text, n=None):
    """Build a kernel from `coulomb(d=3)`, `coulomb_reg(d=3,zeta=0.05,n=500)`, `riesz(s=1,eps=0.1)`, `gaussian(h=0.5)`"""
    name, params = parse_call_spec(text)
    if name in ('coulomb', 'coulomb_reg'):
        d = take_number(params, 'd', kind=int, spec=text)
        if d < 3:
            raise ConfigError('log-gas kernel out of scope (d<3 regularized Coulomb undefined)')

    if name == 'coulomb':
        kernel = Coulomb(d)
    elif name == 'coulomb_reg':
        zeta = take_number(params, 'zeta', spec=text)
        count = take_number(params, 'n', default=n, kind=int, spec=text)
        kernel = CoulombRegularized(d, zeta, count)
    elif name == 'riesz':
        kernel = RieszRegularized(take_number(params, 's', spec=text), take_number(params, 'eps', spec=text))
    elif name == 'gaussian':
        kernel = Gaussian(take_number(params, 'h', spec=text))
    else:
        raise ConfigError(f"unknown kernel {name!r}")

    reject_unknown(params, text)
    return kernel


def kernel_label(kernel):
    """Inverse of parse_kernel"""
    if isinstance(kernel, Coulomb):
        return f"coulomb(d={kernel.d})"
    if isinstance(kernel, CoulombRegularized):
        return f"coulomb_reg(d={kernel.d},zeta={float(kernel.zeta)!r},n={kernel.n})"
    if isinstance(kernel, RieszRegularized):
        return f"riesz(s={float(kernel.s)!r},eps={float(kernel.eps)!r})"
    if isinstance(kernel, Gaussian):
        return f"gaussian(h={float(kernel.bandwidth)!r})"
    return type(kernel).__name__
