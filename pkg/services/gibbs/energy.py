"""
Gibbs Service - Quenched Gibbs energy and its gradient

H_n(y) = (1 / 2n^2) sum_{i != j} K(y_i, y_j) + (1 / n) sum_i V(y_i)

Pair sums use the condensed i < j distance vector and are accumulated with
math.fsum, so the energy is exactly rounded and does not depend on particle
order.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from shared.errors import ConfigError, SingularKernelError
from shared.kernels import CoulombRegularized
from shared.validators import as_points, parse_call_spec, reject_unknown, take_number, validate_dimension

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerLawSchedule:
    """beta_n = u * n^exponent, with exponent > 1 (low-temperature regime)"""
    u: float = 1.0
    exponent: float = 2.0

    def __post_init__(self):
        if not (np.isfinite(self.u) and self.u > 0):
            raise ConfigError(f"beta scale u must be positive, got {self.u}")
        if not self.exponent > 1:
            raise ConfigError(f"beta exponent must be > 1 so that beta_n / n grows, got {self.exponent}")

    def beta(self, n):
        return self.u * float(n) ** self.exponent

    @property
    def label(self):
        return f"power(u={self.u:g},exp={self.exponent:g})"


BETA_PRESETS = {
    'n2': PowerLawSchedule(1.0, 2.0),
    'n3': PowerLawSchedule(1.0, 3.0),
}


def parse_beta(text):
    """`n2`, `n3` or `power(u=1,exp=2)`"""
    key = (text or '').strip()
    if key in BETA_PRESETS:
        return BETA_PRESETS[key]

    name, params = parse_call_spec(key)
    if name != 'power':
        raise ConfigError(f"unknown beta schedule {text!r}")
    schedule = PowerLawSchedule(take_number(params, 'u', default=1.0, spec=text),
                                take_number(params, 'exp', default=2.0, spec=text))
    reject_unknown(params, text)
    return schedule


def _embedded_n(kernel):
    kernel = getattr(kernel, 'base', kernel)
    if isinstance(kernel, CoulombRegularized):
        return kernel.n
    return None


@dataclass(frozen=True, eq=False)
class GibbsConfig:
    """Interacting-particle system: n particles, inverse temperature, kernel and confinement"""
    n: int
    beta_schedule: PowerLawSchedule
    kernel: object
    potential: object
    dim: int
    beta: float = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        validate_dimension(self.dim)
        self.kernel.check_dim(self.dim)
        if getattr(self.potential, 'dim', self.dim) != self.dim:
            raise ConfigError(f"potential is {self.potential.dim}-d, configuration is {self.dim}-d")

        # K_zeta depends on the particle count; it must be built for this n
        for kernel in (self.kernel, getattr(self.potential, 'kernel', None)):
            embedded = _embedded_n(kernel)
            if embedded is not None and embedded != self.n:
                raise ConfigError(f"regularized Coulomb kernel built for n={embedded}, Gibbs system has n={self.n}")

        if self.n == 1:
            logger.debug('n=1 Gibbs system: interaction sum is empty')
        object.__setattr__(self, 'beta', self.beta_schedule.beta(self.n))


@dataclass(frozen=True)
class ParticleConfiguration:
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'points', as_points(self.points))

    def __len__(self):
        return self.points.shape[0]


def _positions(cfg, x):
    X = x.points if isinstance(x, ParticleConfiguration) else np.asarray(x, dtype=float)
    if X.shape != (cfg.n, cfg.dim):
        raise ConfigError(f"configuration shape {X.shape} does not match n={cfg.n}, d={cfg.dim}")
    return X


def pair_term(cfg, x):
    """(1 / 2n^2) sum_{i != j} K(y_i, y_j); +inf for coincident points under a singular kernel"""
    X = _positions(cfg, x)
    if cfg.n < 2:
        return 0.0
    values = cfg.kernel.pair_values(X)
    if not np.all(np.isfinite(values)):
        return math.inf
    return math.fsum(values.tolist()) / cfg.n ** 2


def confinement_term(cfg, x):
    """(1 / n) sum_i V(y_i)"""
    X = _positions(cfg, x)
    return math.fsum(np.asarray(cfg.potential.value(X), dtype=float).tolist()) / cfg.n


def hnq_energy(cfg, x):
    pair = pair_term(cfg, x)
    if math.isinf(pair):
        logger.warning('coincident particles under a singular kernel: energy is +inf')
        return math.inf
    return pair + confinement_term(cfg, x)


def _pair_grad(X, slopes_condensed, n):
    slopes = squareform(slopes_condensed)
    return 2.0 * (X * slopes.sum(axis=1)[:, None] - slopes @ X) / n ** 2


def hnq_grad(cfg, x):
    """Per-particle gradient (1/n^2) sum_{j != i} grad_1 K(y_i, y_j) + (1/n) grad V(y_i)"""
    X = _positions(cfg, x)
    grads = np.asarray(cfg.potential.grad(X), dtype=float) / cfg.n
    if cfg.n < 2:
        return grads

    sq_dist = pdist(X, 'sqeuclidean')
    if cfg.kernel.singular and np.any(sq_dist == 0.0):
        raise SingularKernelError('singular gradient')
    return grads + _pair_grad(X, cfg.kernel.profile_derivative(sq_dist), cfg.n)


def hnq_energy_grad(cfg, x):
    """Energy and gradient from one pair-distance pass; the gradient is None when the energy is +inf"""
    X = _positions(cfg, x)
    if hasattr(cfg.potential, 'value_and_grad'):
        values, potential_grad = cfg.potential.value_and_grad(X)
    else:
        values, potential_grad = cfg.potential.value(X), cfg.potential.grad(X)
    confinement = math.fsum(np.asarray(values, dtype=float).tolist()) / cfg.n
    grads = np.asarray(potential_grad, dtype=float) / cfg.n
    if cfg.n < 2:
        return confinement, grads

    sq_dist = pdist(X, 'sqeuclidean')
    if cfg.kernel.singular and np.any(sq_dist == 0.0):
        return math.inf, None

    pair_values = cfg.kernel.profile(sq_dist)
    energy = math.fsum(pair_values.tolist()) / cfg.n ** 2 + confinement
    return energy, grads + _pair_grad(X, cfg.kernel.profile_derivative(sq_dist), cfg.n)
