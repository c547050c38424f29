"""
Samplers Service - Background measures for the quenched potential

Two constructions: the thinned history of a random-walk chain on the target,
and a Coulomb gas with quadratic confinement whose atoms are reweighted by
the ratio between the target and the uniform equilibrium density.
"""
import logging

from services.gibbs.energy import GibbsConfig
from services.potentials.fields import EquilibriumPotential
from services.samplers.mcmc import mala_gibbs, rwmh_chain
from shared.errors import ConfigError, DimensionMismatchError, SupportError
from shared.kernels import Coulomb
from shared.measures import importance_weights, uniform_empirical

logger = logging.getLogger(__name__)

SUPPORT_TOLERANCE = 1e-12


def build_background_mcmc(target, M_n, burn_in, subsample, rng, step_size=None):
    """Uniform weights over M_n post-burn-in states, thinned every `subsample` steps when given"""
    if int(M_n) != M_n or M_n < 1:
        raise ConfigError(f"background size must be a positive integer, got {M_n}")
    history, diagnostics = rwmh_chain(target, int(burn_in) + int(M_n), int(burn_in), rng, step_size)
    if subsample:
        if int(subsample) != subsample or subsample < 1:
            raise ConfigError(f"subsample must be a positive integer, got {subsample}")
        history = history[::int(subsample)]

    logger.debug(f"mcmc background: {history.shape[0]} atoms, acceptance {diagnostics.acceptance_rate:.3f}")
    return uniform_empirical(history)


def build_background_coulomb(eq, target, n, beta_schedule, T, rng, alpha0=1.0):
    """Coulomb gas of n particles in V(x) = ((d-2)/(2R^d))|x|^2, importance-weighted toward the target"""
    if target.dim != eq.d:
        raise DimensionMismatchError(f"dimension mismatch: target is {target.dim}-d, equilibrium is {eq.d}-d")
    if target.support_radius() > eq.R * (1.0 + SUPPORT_TOLERANCE):
        raise SupportError(
            f"target escapes equilibrium support: radius {target.support_radius():g} > R={eq.R:g}"
        )

    cfg = GibbsConfig(n, beta_schedule, Coulomb(eq.d), EquilibriumPotential(eq), eq.d)
    configuration, diagnostics = mala_gibbs(cfg, T, alpha0, rng, init='uniform-ball')
    logger.debug(f"coulomb background n={n}: acceptance {diagnostics.acceptance_rate:.3f}")
    return importance_weights(configuration.points, target, eq)
