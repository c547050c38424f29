"""
Samplers Service - Metropolis chains

rwmh_chain samples a target density with isotropic Gaussian random-walk
proposals. LangevinSampler runs Metropolis-adjusted Langevin updates of the
whole n-particle configuration against exp(-beta_n H_n). Both tune their step
with a Robbins-Monro rule during an initial phase and then freeze it.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from services.gibbs.energy import ParticleConfiguration, hnq_energy_grad
from shared.errors import ConfigError, InvalidConfigurationError
from shared.measures import uniform_empirical
from shared.rng import RngStream, generator_state, restore_generator

logger = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.5
ADAPTATION_DECAY = 0.6


@dataclass
class ChainDiagnostics:
    """Acceptance is measured on the frozen-step phase only"""
    acceptance_rate: float
    steps: int
    final_step_size: float
    accepted: int = 0
    proposed: int = 0

    def to_dict(self):
        return asdict(self)


class StepSizeAdapter:
    """Robbins-Monro on the log step: log a <- log a + t^-0.6 (acceptance - 0.5)"""

    def __init__(self, step_size, target=TARGET_ACCEPTANCE, decay=ADAPTATION_DECAY):
        if not (np.isfinite(step_size) and step_size > 0):
            raise ConfigError(f"step size must be positive, got {step_size}")
        self._step_size = float(step_size)
        self.target = target
        self.decay = decay
        self.t = 0

    @property
    def step_size(self):
        return self._step_size

    def update(self, acceptance_probability):
        self.t += 1
        log_step = math.log(self._step_size) + self.t ** (-self.decay) * (acceptance_probability - self.target)
        self._step_size = math.exp(log_step)
        return self.step_size


def as_generator(rng):
    """Accept an RngStream or an already-positioned numpy Generator"""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ConfigError(f"expected an RngStream or numpy Generator, got {type(rng).__name__}")


def sample_uniform_ball(generator, count, d, R):
    """count i.i.d. points uniform in B(0, R)"""
    directions = generator.standard_normal((count, d))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    radii = R * generator.random(count) ** (1.0 / d)
    return directions * radii[:, None]


def _log_acceptance(log_ratio):
    return 0.0 if log_ratio >= 0 else log_ratio


def _warn_if_poorly_tuned(kind, rate):
    if abs(rate - TARGET_ACCEPTANCE) > 0.3:
        logger.warning(f"{kind} acceptance rate {rate:.3f} is far from {TARGET_ACCEPTANCE}")


def rwmh_chain(target, steps, burn_in, rng, step_size=None):
    """Random-walk Metropolis with N(0, alpha I) proposals; returns the post-burn-in history.

    alpha (a variance) adapts during burn-in and is frozen afterwards. The
    initial state is uniform in the support ball.
    """
    if not (isinstance(steps, (int, np.integer)) and isinstance(burn_in, (int, np.integer))):
        raise ConfigError('steps and burn_in must be integers')
    if not steps > burn_in >= 0:
        raise ConfigError(f"need steps > burn_in >= 0, got steps={steps}, burn_in={burn_in}")

    generator = as_generator(rng)
    d, radius = target.dim, target.support_radius()
    adapter = StepSizeAdapter(step_size if step_size is not None else (radius / 5.0) ** 2)

    x = sample_uniform_ball(generator, 1, d, radius)[0]
    log_p = float(target.log_density(x))
    while not np.isfinite(log_p):
        x = sample_uniform_ball(generator, 1, d, radius)[0]
        log_p = float(target.log_density(x))

    noise = generator.standard_normal((steps, d))
    uniforms = 1.0 - generator.random(steps)
    history = np.empty((steps - burn_in, d))
    accepted = 0

    for t in range(steps):
        proposal = x + math.sqrt(adapter.step_size) * noise[t]
        log_q = float(target.log_density(proposal))
        log_ratio = log_q - log_p if np.isfinite(log_q) else -math.inf
        take = math.log(uniforms[t]) <= log_ratio

        if take:
            x, log_p = proposal, log_q
        if t < burn_in:
            adapter.update(math.exp(_log_acceptance(log_ratio)))
        else:
            accepted += int(take)
            history[t - burn_in] = x

    proposed = steps - burn_in
    diagnostics = ChainDiagnostics(accepted / proposed, steps, adapter.step_size, accepted, proposed)
    logger.debug(f"rwmh: acceptance {diagnostics.acceptance_rate:.3f}, step variance {adapter.step_size:.4g}")
    _warn_if_poorly_tuned('rwmh', diagnostics.acceptance_rate)
    history.setflags(write=False)
    return history, diagnostics


def mcmc_quadrature(target, n, burn_in, rng, step_size=None):
    """MCMC baseline: uniform weights over n post-burn-in states"""
    history, _ = rwmh_chain(target, burn_in + n, burn_in, rng, step_size)
    return uniform_empirical(history)


def _confinement_radius(potential):
    if hasattr(potential, 'R'):
        return potential.R
    equilibrium = getattr(potential, 'equilibrium', None)
    if equilibrium is not None:
        return equilibrium.support_radius()
    raise ConfigError('cannot infer a confinement radius from the potential')


def initial_configuration(cfg, init, generator):
    """Starting positions: explicit array, `background-subsample` or `uniform-ball`"""
    if isinstance(init, (np.ndarray, ParticleConfiguration, list, tuple)):
        X = init.points if isinstance(init, ParticleConfiguration) else np.asarray(init, dtype=float)
        if X.shape != (cfg.n, cfg.dim):
            raise ConfigError(f"initial configuration shape {X.shape} does not match n={cfg.n}, d={cfg.dim}")
        return np.array(X, dtype=float)

    R = _confinement_radius(cfg.potential)
    if init == 'background-subsample':
        background = getattr(cfg.potential, 'background', None)
        if background is None:
            raise ConfigError('background-subsample init needs a quenched potential')
        picks = generator.choice(background.size, size=cfg.n, replace=True, p=background.weights)
        return background.points[picks] + 0.01 * R * generator.standard_normal((cfg.n, cfg.dim))
    if init == 'uniform-ball':
        return sample_uniform_ball(generator, cfg.n, cfg.dim, R)
    raise ConfigError(f"unknown init {init!r}; expected background-subsample, uniform-ball or an array")


class LangevinSampler:
    """Whole-configuration MALA chain targeting exp(-beta_n H_n).

    Proposal: y' = y - alpha0 grad H(y) + sqrt(2 alpha0 / beta_n) xi, that is
    mean y - alpha beta_n grad H and covariance 2 alpha I with alpha = alpha0 / beta_n.
    """

    def __init__(self, cfg, alpha0, rng, init='background-subsample', adapt_steps=0):
        self.cfg = cfg
        self.generator = as_generator(rng)
        self.adapter = StepSizeAdapter(alpha0)
        self.adapt_steps = int(adapt_steps)
        self.step_count = 0
        self.accepted = 0
        self.proposed = 0

        state = initial_configuration(cfg, init, self.generator)
        energy, grad = hnq_energy_grad(cfg, state) if np.all(np.isfinite(state)) else (math.inf, None)
        if not np.isfinite(energy):
            raise InvalidConfigurationError()
        self.state, self.energy, self.grad = state, energy, grad

    @property
    def alpha0(self):
        return self.adapter.step_size

    @property
    def alpha(self):
        return self.alpha0 / self.cfg.beta

    def _log_ratio(self, proposal, mean):
        if not np.all(np.isfinite(proposal)):
            return -math.inf, None, None
        energy, grad = hnq_energy_grad(self.cfg, proposal)
        if not np.isfinite(energy):
            return -math.inf, None, None

        reverse_mean = proposal - self.alpha0 * grad
        variance = 2.0 * self.alpha
        log_q_forward = -np.sum((proposal - mean) ** 2) / (2.0 * variance)
        log_q_backward = -np.sum((self.state - reverse_mean) ** 2) / (2.0 * variance)
        log_ratio = -self.cfg.beta * (energy - self.energy) + log_q_backward - log_q_forward
        return float(log_ratio), energy, grad

    def step(self):
        """One Metropolis-adjusted Langevin update; returns True when the proposal is accepted"""
        noise = self.generator.standard_normal(self.state.shape)
        u = 1.0 - self.generator.random()
        with np.errstate(over='ignore', invalid='ignore'):
            mean = self.state - self.alpha0 * self.grad
            proposal = mean + math.sqrt(2.0 * self.alpha) * noise
        log_ratio, energy, grad = self._log_ratio(proposal, mean)

        take = math.log(u) <= log_ratio
        if take:
            self.state, self.energy, self.grad = proposal, energy, grad

        self.step_count += 1
        if self.step_count <= self.adapt_steps:
            self.adapter.update(math.exp(_log_acceptance(log_ratio)) if log_ratio > -math.inf else 0.0)
        else:
            self.proposed += 1
            self.accepted += int(take)
        return take

    def run(self, steps, trace=None):
        """Advance the chain; append (step, energy) pairs to trace when given"""
        for _ in range(steps):
            self.step()
            if trace is not None:
                trace.append((self.step_count, self.energy))
        return self.diagnostics()

    def diagnostics(self):
        rate = self.accepted / self.proposed if self.proposed else 0.0
        return ChainDiagnostics(rate, self.step_count, self.alpha0, self.accepted, self.proposed)

    def checkpoint(self, path):
        save_checkpoint(self, path)

    @classmethod
    def restore(cls, cfg, path, adapt_steps=0):
        """Resume a chain from save_checkpoint output; the step is frozen unless adapt_steps > step"""
        points, meta = load_checkpoint(path)
        sampler = cls(cfg, meta['step_size'], restore_generator(meta['rng_state']), init=points,
                      adapt_steps=adapt_steps)
        sampler.step_count = int(meta['step'])
        return sampler


def mala_gibbs(cfg, T, alpha0, rng, init='background-subsample'):
    """Run T MALA steps, adapting alpha0 during the first T/5, and return the final configuration"""
    if int(T) != T or T < 1:
        raise ConfigError(f"T must be a positive integer, got {T}")
    if not (np.isfinite(alpha0) and alpha0 > 0):
        raise ConfigError(f"alpha0 must be positive, got {alpha0}")

    sampler = LangevinSampler(cfg, alpha0, rng, init=init, adapt_steps=int(T) // 5)
    diagnostics = sampler.run(int(T))
    logger.debug(f"mala n={cfg.n}: acceptance {diagnostics.acceptance_rate:.3f}, alpha0 {diagnostics.final_step_size:.4g}")
    _warn_if_poorly_tuned('mala', diagnostics.acceptance_rate)
    return ParticleConfiguration(sampler.state), diagnostics


def _sidecar(path):
    return Path(path).with_suffix('.json')


def save_checkpoint(sampler, path):
    """Configuration CSV `x1,...,xd` plus a JSON sidecar {step, step_size, rng_state}"""
    path = Path(path)
    header = ','.join(f"x{k + 1}" for k in range(sampler.state.shape[1]))
    np.savetxt(path, sampler.state, delimiter=',', header=header, comments='', fmt='%.17g')
    meta = {
        'step': sampler.step_count,
        'step_size': sampler.alpha0,
        'rng_state': generator_state(sampler.generator),
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2), encoding='utf-8')


def load_checkpoint(path):
    points = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    meta = json.loads(_sidecar(path).read_text(encoding='utf-8'))
    return points, meta
