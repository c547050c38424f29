"""
Potentials Service - Confinement, quenched potentials and reference fields

A field is anything callable on an (m, d) array returning m values. The
quenched potential V_n, the kernel embedding of a weighted sample and the
analytic ball potentials all follow that convention so they can be compared
on a grid by potential_sup_error.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.spatial.distance import cdist

from shared.config import BLOCK_SIZE
from shared.errors import AnalyticFormError, ConfigError, EmptySampleError, SingularKernelError
from shared.kernels import Coulomb, CoulombRegularized, RieszRegularized
from shared.validators import parse_call_spec, reject_unknown, take_number, validate_positive

logger = logging.getLogger(__name__)


def _rows(z):
    array = np.asarray(z, dtype=float)
    single = array.ndim == 1
    return np.atleast_2d(array), single


def confinement_phi(z, R):
    """Phi(z) = [|z|^2 - R^2]_+"""
    validate_positive('R', R)
    Z, single = _rows(z)
    values = np.maximum(np.einsum('ij,ij->i', Z, Z) - R ** 2, 0.0)
    return float(values[0]) if single else values


def confinement_phi_grad(z, R):
    """2z outside B(0, R), 0 inside and on the sphere"""
    Z, single = _rows(z)
    outside = np.einsum('ij,ij->i', Z, Z) > R ** 2
    grads = np.where(outside[:, None], 2.0 * Z, 0.0)
    return grads[0] if single else grads


@dataclass(frozen=True, eq=False)
class KernelEmbedding:
    """z -> sum_i w_i K(z, x_i) for a weighted sample"""
    sample: object
    kernel: object

    def __post_init__(self):
        self.kernel.check_dim(self.sample.dim)

    @property
    def dim(self):
        return self.sample.dim

    def __call__(self, z):
        Z, single = _rows(z)
        values = (self.kernel.matrix(Z, self.sample.points) * self.sample.weights).sum(axis=1)
        return float(values[0]) if single else values

    def grad(self, z):
        Z, single = _rows(z)
        grads = self.kernel.grad1_sum(Z, self.sample.points, self.sample.weights)
        return grads[0] if single else grads


@dataclass(frozen=True, eq=False)
class QuenchedPotential:
    """V_n(z) = -sum_i w_i K(z, x_i) + Phi(z) built on a realized background"""
    background: object
    kernel: object
    R: float

    def __post_init__(self):
        if self.kernel.singular:
            raise SingularKernelError('quenched potential needs a non-singular kernel, got a singular one')
        validate_positive('R', self.R)
        self.kernel.check_dim(self.background.dim)

    @property
    def dim(self):
        return self.background.dim

    @property
    def embedding(self):
        return KernelEmbedding(self.background, self.kernel)

    def value(self, z):
        Z, single = _rows(z)
        values = confinement_phi(Z, self.R) - self.embedding(Z)
        return float(values[0]) if single else values

    def grad(self, z):
        Z, single = _rows(z)
        grads = confinement_phi_grad(Z, self.R) - self.embedding.grad(Z)
        return grads[0] if single else grads

    def value_and_grad(self, Z):
        """Batch values and gradients from a single background distance matrix"""
        sq_dist = cdist(Z, self.background.points, 'sqeuclidean')
        weights = self.background.weights
        values = confinement_phi(Z, self.R) - (self.kernel.profile(sq_dist) * weights).sum(axis=1)
        slopes = self.kernel.profile_derivative(sq_dist) * weights
        embedding_grad = 2.0 * (Z * slopes.sum(axis=1)[:, None] - slopes @ self.background.points)
        return values, confinement_phi_grad(Z, self.R) - embedding_grad

    __call__ = value


def quenched_v(p, z):
    return p.value(np.asarray(z, dtype=float).reshape(-1))


def quenched_v_grad(p, z):
    return p.grad(np.asarray(z, dtype=float).reshape(-1))


@dataclass(frozen=True, eq=False)
class EquilibriumPotential:
    """Analytic external potential V of a Coulomb gas, with the kernel left to the Gibbs config"""
    equilibrium: object

    @property
    def dim(self):
        return self.equilibrium.dim

    def value(self, z):
        return self.equilibrium.potential(z)

    def grad(self, z):
        return self.equilibrium.potential_grad(z)

    def value_and_grad(self, Z):
        return self.equilibrium.potential(Z), self.equilibrium.potential_grad(Z)

    __call__ = value


def analytic_uniform_ball_potential(R, z, d=3):
    """Newtonian potential of the uniform probability measure on B(0, R) in R^3"""
    if d != 3:
        raise AnalyticFormError()
    validate_positive('R', R)
    Z, single = _rows(z)
    if Z.shape[1] != 3:
        raise AnalyticFormError(f"analytic form unavailable for {Z.shape[1]}-d points")

    radii = np.sqrt(np.einsum('ij,ij->i', Z, Z))
    inside = radii <= R
    with np.errstate(divide='ignore'):
        values = np.where(inside, (3.0 * R ** 2 - radii ** 2) / (2.0 * R ** 3), 1.0 / radii)
    return float(values[0]) if single else values


# Closed forms for the kernel (|x - y|^2 + a^2)^(-1/2) in R^3 averaged over spheres.
# P and Q are antiderivatives: P'(u) = u / P(u), Q'(u) = P(u).

def _P(u, a):
    return np.sqrt(u ** 2 + a ** 2)


def _Q(u, a):
    if a == 0.0:
        return 0.5 * u * np.abs(u)
    return 0.5 * (u * np.sqrt(u ** 2 + a ** 2) + a ** 2 * np.arcsinh(u / a))


def sphere_average(t, r, a=0.0):
    """Mean of the kernel between a point at distance t from a centre and the sphere of radius r around it"""
    t = np.asarray(t, dtype=float)
    near = t <= 1e-9 * r
    safe = np.where(near, 1.0, t)
    values = (_P(safe + r, a) - _P(safe - r, a)) / (2.0 * r * safe)
    return np.where(near, 1.0 / _P(r, a), values)


def shell_pair_average(D, r1, r2, a=0.0):
    """Mean kernel value between two spheres of radii r1, r2 whose centres are D apart"""
    D = np.asarray(D, dtype=float)
    near = D <= 1e-9 * min(r1, r2)
    safe = np.where(near, 1.0, D)

    def W(t):
        return _Q(t + r2, a) - _Q(t - r2, a)

    values = (W(safe + r1) - W(np.abs(safe - r1))) / (4.0 * r1 * r2 * safe)
    centred = (_P(r1 + r2, a) - _P(r1 - r2, a)) / (2.0 * r1 * r2)
    return np.where(near, centred, values)


def regularized_uniform_ball_potential(R, z, a):
    """Potential of the uniform ball for (|x - y|^2 + a^2)^(-1/2) in R^3; a = 0 gives the Coulomb case"""
    validate_positive('R', R)
    if a < 0:
        raise ConfigError(f"a must be nonnegative, got {a}")
    Z, single = _rows(z)
    if Z.shape[1] != 3:
        raise AnalyticFormError(f"analytic form unavailable for {Z.shape[1]}-d points")

    radii = np.sqrt(np.einsum('ij,ij->i', Z, Z))
    unique, inverse = np.unique(radii, return_inverse=True)
    values = np.empty(unique.shape[0])
    for k, rho in enumerate(unique):
        def integrand(r):
            if r == 0.0:
                return 0.0
            return float(sphere_average(rho, r, a)) * 3.0 * r ** 2 / R ** 3

        breaks = [rho] if 0.0 < rho < R else None
        values[k], _ = quad(integrand, 0.0, R, points=breaks, epsabs=1e-13, epsrel=1e-12, limit=200)

    values = values[inverse]
    return float(values[0]) if single else values


def regularization_length(kernel):
    """a such that the kernel equals (|x - y|^2 + a^2)^(-1/2) in R^3, when it has that form"""
    kernel = getattr(kernel, 'base', kernel)
    if isinstance(kernel, Coulomb) and kernel.d == 3:
        return 0.0
    if isinstance(kernel, CoulombRegularized) and kernel.d == 3:
        return float(np.sqrt(kernel.smoothing))
    if isinstance(kernel, RieszRegularized) and kernel.s == 1:
        return float(kernel.eps)
    raise AnalyticFormError(f"analytic form unavailable for {kernel!r}")


@dataclass(frozen=True)
class GridSpec:
    """Lattice over [-extent R, extent R]^d restricted to B(0, extent R)"""
    extent: float = 1.2
    pts_per_axis: int = 20

    def __post_init__(self):
        validate_positive('extent', self.extent)
        if int(self.pts_per_axis) != self.pts_per_axis or self.pts_per_axis < 2:
            raise ConfigError(f"pts_per_axis must be an integer >= 2, got {self.pts_per_axis}")

    def points(self, R, d):
        half = self.extent * R
        axis = np.linspace(-half, half, int(self.pts_per_axis))
        mesh = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
        keep = np.einsum('ij,ij->i', mesh, mesh) <= half ** 2 * (1.0 + 1e-12)
        return mesh[keep]


def parse_grid(text):
    """`grid(extent=1.2,pts_per_axis=20)`"""
    name, params = parse_call_spec(text)
    if name != 'grid':
        raise ConfigError(f"unknown grid {name!r}")
    grid = GridSpec(take_number(params, 'extent', default=1.2, spec=text),
                    take_number(params, 'pts_per_axis', default=20, kind=int, spec=text))
    reject_unknown(params, text)
    return grid


def potential_sup_error(approx, reference, grid, block_size=None):
    """max over the grid of |approx(z) - reference(z)|, evaluated in blocks"""
    Z = np.atleast_2d(np.asarray(grid, dtype=float))
    if Z.shape[0] == 0 or Z.size == 0:
        raise EmptySampleError('empty grid')

    block_size = block_size or BLOCK_SIZE
    worst = 0.0
    for start in range(0, Z.shape[0], block_size):
        block = Z[start:start + block_size]
        gap = np.abs(np.asarray(approx(block), dtype=float) - np.asarray(reference(block), dtype=float))
        worst = max(worst, float(np.max(gap)))
    logger.debug(f"sup error {worst:.6g} over {Z.shape[0]} grid points")
    return worst
