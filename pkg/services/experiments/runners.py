"""
Experiments Service - Experiment runners

Each runner is a pure function of its ExperimentConfig: every random draw
comes from a stream keyed by (experiment, method, n, replicate), replicates
may run on a process pool, and records are written in canonical order.
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from services.diagnostics.metrics import (KernelTestFunction, interaction_energy, shifted_energy,
                                          simultaneous_coverage, variance_linear_statistic)
from services.diagnostics.report import DiagnosticsReport
from services.experiments.config import CoulombBackgroundSpec, MCMCBackgroundSpec
from services.gibbs.energy import GibbsConfig, PowerLawSchedule
from services.potentials.fields import (KernelEmbedding, QuenchedPotential, analytic_uniform_ball_potential,
                                        potential_sup_error, regularized_uniform_ball_potential)
from services.samplers.background import build_background_coulomb, build_background_mcmc
from services.samplers.mcmc import LangevinSampler, mala_gibbs, mcmc_quadrature, rwmh_chain
from shared.errors import ConfigError, ExperimentError, GibbsQuadError
from shared.kernels import CoulombRegularized, parse_kernel
from shared.measures import save_weighted_sample, uniform_empirical
from shared.rng import RngStream, StreamRegistry, stream_id_for
from shared.targets import (QuadraticCoulomb, predictive_matrix, save_training_csv,
                            synthesize_classification_data)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MethodSpec:
    """One quadrature method of an experiment; `kind` selects the draw function in METHODS"""
    name: str
    kind: str
    target: object
    kernel_spec: str = None
    beta: PowerLawSchedule = None
    T: int = 0
    alpha0: float = 1.0
    init: str = 'background-subsample'
    burn_in: int = 0
    background: object = None


def draw_mcmc(method, n, stream, background=None):
    return mcmc_quadrature(method.target, n, method.burn_in, stream)


def draw_gibbs(method, n, stream, background):
    target = method.target
    kernel = parse_kernel(method.kernel_spec, n=n)
    potential = QuenchedPotential(background, kernel, target.support_radius())
    cfg = GibbsConfig(n, method.beta, kernel, potential, target.dim)
    configuration, _ = mala_gibbs(cfg, method.T, method.alpha0, stream, init=method.init)
    return uniform_empirical(configuration.points)


# Quadrature methods by kind. A kernel-thinning baseline plugs in here as
# METHODS['kt'] = draw_function(method, n, stream, background) -> WeightedSample.
METHODS = {
    'mcmc': draw_mcmc,
    'gibbs': draw_gibbs,
}


def _beta_label(spec_text, schedule):
    text = spec_text.strip()
    if text.isalnum():
        return text
    return f"beta{schedule.u:g}n{schedule.exponent:g}"


def expand_methods(cfg, target):
    """Method specs for the configured methods; gibbs expands over backgrounds and beta schedules"""
    methods = []
    for name in cfg.methods:
        if name == 'gibbs':
            sweep_backgrounds = len(cfg.backgrounds) > 1
            sweep_betas = len(cfg.betas) > 1
            for background in cfg.backgrounds:
                for beta_text, beta in zip(cfg.beta_specs, cfg.betas):
                    parts = ['gibbs']
                    if sweep_backgrounds:
                        parts.append(background.label)
                    if sweep_betas:
                        parts.append(_beta_label(beta_text, beta))
                    methods.append(MethodSpec('-'.join(parts), 'gibbs', target, cfg.kernel_spec, beta, cfg.T,
                                              cfg.alpha0, cfg.init, cfg.mcmc_burnin, background))
        elif name == 'mcmc':
            methods.append(MethodSpec('mcmc', 'mcmc', target, burn_in=cfg.mcmc_burnin))
        elif name in METHODS:
            methods.append(MethodSpec(name, name, target, cfg.kernel_spec, cfg.betas[0], cfg.T, cfg.alpha0,
                                      cfg.init, cfg.mcmc_burnin))
        else:
            raise ConfigError(f"unknown method {name!r}; available: {sorted(METHODS)}")
    return methods


class BackgroundCache:
    """Backgrounds are built once per method (and per n when their size follows n)"""

    def __init__(self, cfg, registry):
        self.cfg = cfg
        self.registry = registry
        self._built = {}

    def get(self, method, n):
        spec = method.background
        if spec is None:
            return None
        size = spec.size if spec.size is not None else n
        key = (method.name, size)
        if key not in self._built:
            stream = self.registry.stream(self.cfg.experiment, f"background:{method.name}", size, 0)
            self._built[key] = build_background(spec, method.target, size, stream, self.cfg.alpha0)
        return self._built[key]


def build_background(spec, target, size, stream, alpha0=1.0):
    if isinstance(spec, MCMCBackgroundSpec):
        thin = spec.thin if spec.thin > 1 else None
        return build_background_mcmc(target, size, spec.burn_in, thin, stream)
    if isinstance(spec, CoulombBackgroundSpec):
        equilibrium = QuadraticCoulomb(target.dim, spec.R)
        return build_background_coulomb(equilibrium, target, size, PowerLawSchedule(1.0, spec.exponent), spec.T,
                                        stream, alpha0=alpha0)
    raise ConfigError(f"unsupported background {spec!r}")


def _replicate(method, n, stream, background, scorer):
    """Draw one quadrature and score it; runs in a worker process"""
    sample = METHODS[method.kind](method, n, stream, background)
    return scorer(sample, n)


def execute(jobs, threads):
    """Run (context, fn, args) jobs, in-process for threads == 1, results in job order"""
    if threads <= 1:
        results = []
        for context, fn, args in jobs:
            logger.debug(f"running {context}")
            try:
                results.append(fn(*args))
            except ExperimentError:
                raise
            except GibbsQuadError as e:
                raise ExperimentError(context, e) from e
        return results

    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [(context, pool.submit(fn, *args)) for context, fn, args in jobs]
        results = []
        for context, future in futures:
            try:
                results.append(future.result())
                logger.debug(f"finished {context}")
            except GibbsQuadError as e:
                raise ExperimentError(context, e) from e
        return results


def _replicate_jobs(cfg, methods, registry, backgrounds, scorer, n_for):
    jobs, keys = [], []
    for method in methods:
        for n in n_for(method):
            background = backgrounds.get(method, n)
            for replicate in range(cfg.replicates):
                stream = registry.stream(cfg.experiment, method.name, n, replicate)
                context = f"{cfg.experiment} method={method.name} n={n} replicate={replicate}"
                jobs.append((context, _replicate, (method, n, stream, background, scorer)))
                keys.append((method.name, n, stream.stream_id))
    return jobs, keys


def _output_dir(cfg):
    directory = Path(cfg.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_config_json(cfg, directory):
    path = Path(directory) / 'config.json'
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True), encoding='utf-8')
    return path


def write_gnuplot_script(cfg, directory, methods=()):
    """Plot script reading the emitted CSVs"""
    lines = ['set datafile separator ","', 'set key outside']
    if cfg.experiment == 'sample':
        lines += [
            'set size square',
            'plot "particles.csv" skip 1 using 1:2 with points pt 7 ps 0.5 title "gibbs", \\',
            '     "mcmc_sample.csv" skip 1 using 2:3 with points pt 6 ps 0.5 title "mcmc"',
        ]
    else:
        stat = {'mmd-decay': 'quantile_90', 'variance': 'variance',
                'potential-convergence': 'median'}.get(cfg.experiment)
        if stat is None:
            stat = f"coverage@{cfg.deltas[0]:g}"
        lines.append('set logscale x')
        plots = [
            f"\"< awk -F, '$2==\\\"{name}\\\" && $4==\\\"{stat}\\\"' aggregates.csv\" using 3:5 with linespoints "
            f"title \"{name}\""
            for name in methods
        ]
        lines.append('plot ' + ', \\\n     '.join(plots))
    path = Path(directory) / 'plot.gp'
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


def _mmd_scores(kernel_spec, reference, reference_energies, sample, n):
    kernel = parse_kernel(kernel_spec, n=n)
    shifted = shifted_energy(kernel, sample, reference)
    scores = [('shifted_energy', shifted)]
    if reference_energies is not None:
        scores.append(('mmd_sq', shifted + reference_energies[n]))
    return scores, None


def _reference_sample(cfg, target, registry):
    spec = cfg.reference
    history, diagnostics = rwmh_chain(target, spec.burn_in + spec.size, spec.burn_in,
                                      registry.stream(cfg.experiment, 'reference', spec.size, 0))
    logger.info(f"{cfg.experiment}: reference chain of {history.shape[0]} states, "
                f"acceptance {diagnostics.acceptance_rate:.3f}")
    return uniform_empirical(history[::spec.thin] if spec.thin > 1 else history)


def run_mmd_decay(cfg):
    """Shifted energy I_K(mu_n) - 2 I_K(mu_n, ref) per replicate, for each method and n"""
    target = cfg.build_target()
    registry = StreamRegistry(cfg.base_seed)
    methods = expand_methods(cfg, target)
    reference = _reference_sample(cfg, target, registry)

    reference_energies = None
    if cfg.full_square:
        reference_energies = {n: interaction_energy(cfg.build_kernel(n), reference) for n in cfg.n_values}

    scorer = partial(_mmd_scores, cfg.kernel_spec, reference, reference_energies)
    backgrounds = BackgroundCache(cfg, registry)
    jobs, keys = _replicate_jobs(cfg, methods, registry, backgrounds, scorer, lambda method: cfg.n_values)
    results = execute(jobs, cfg.threads)

    stats = ['quantile_90', 'median']
    report = DiagnosticsReport(cfg.experiment, plan={'shifted_energy': stats, 'mmd_sq': stats})
    for (method, n, seed), (scores, _) in zip(keys, results):
        for metric, value in scores:
            report.add(metric, method, n, seed, value)

    directory = _output_dir(cfg)
    report.write(directory)
    write_config_json(cfg, directory)
    if cfg.gnuplot:
        write_gnuplot_script(cfg, directory, [method.name for method in methods])
    return report


def _linear_scores(test_function, sample, n):
    return [('linear_statistic', sample.expectation(test_function))], sample


def run_variance(cfg):
    """Replicate variance of the weighted mean of a random kernel test function"""
    target = cfg.build_target()
    registry = StreamRegistry(cfg.base_seed)
    methods = expand_methods(cfg, target)
    if cfg.replicates < 2:
        raise ConfigError('variance needs at least 2 replicates')

    function_stream = RngStream(cfg.base_seed, stream_id_for(cfg.experiment, 'test-function'))
    test_kernel = cfg.build_kernel(cfg.n_values[0])
    test_function = KernelTestFunction.draw(test_kernel, target.dim, cfg.n_centers, function_stream.generator())

    scorer = partial(_linear_scores, test_function)
    backgrounds = BackgroundCache(cfg, registry)
    jobs, keys = _replicate_jobs(cfg, methods, registry, backgrounds, scorer, lambda method: cfg.n_values)
    results = execute(jobs, cfg.threads)

    report = DiagnosticsReport(cfg.experiment, plan={'linear_statistic': ['variance']})
    samples = {}
    for (method, n, seed), (scores, sample) in zip(keys, results):
        for metric, value in scores:
            report.add(metric, method, n, seed, value)
        samples.setdefault((method, n), []).append(sample)

    for (method, n), replicate_samples in samples.items():
        variance = variance_linear_statistic(replicate_samples, test_function)
        report.set_aggregate('linear_statistic', method, n, 'variance', variance)
        logger.info(f"variance: method={method} n={n} var={variance:.4g}")

    directory = _output_dir(cfg)
    report.write(directory)
    write_config_json(cfg, directory)
    (directory / 'test_function.json').write_text(json.dumps(test_function.to_dict(), indent=2), encoding='utf-8')
    if cfg.gnuplot:
        write_gnuplot_script(cfg, directory, [method.name for method in methods])
    return report


def _potential_error(spec, target, n, zeta, grid_points, alpha0, stream):
    equilibrium = QuadraticCoulomb(3, spec.R)
    background = build_background_coulomb(equilibrium, target, spec.size or n, PowerLawSchedule(1.0, spec.exponent),
                                          spec.T, stream, alpha0=alpha0)
    field = KernelEmbedding(background, CoulombRegularized(3, zeta, n))
    return potential_sup_error(field, partial(analytic_uniform_ball_potential, spec.R), grid_points)


def run_potential_convergence(cfg):
    """Sup-norm gap between the regularized potential of a Coulomb gas and the ball's Coulomb potential"""
    target = cfg.build_target()
    if target.dim != 3:
        raise ConfigError(f"potential-convergence needs d=3, got d={target.dim}")
    spec = cfg.backgrounds[0]
    if not isinstance(spec, CoulombBackgroundSpec):
        raise ConfigError('potential-convergence needs a coulomb(R=..,T=..) background')

    registry = StreamRegistry(cfg.base_seed)
    grid_points = cfg.grid.points(spec.R, 3)
    jobs, keys = [], []
    for n in cfg.n_values:
        for replicate in range(cfg.replicates):
            stream = registry.stream(cfg.experiment, 'coulomb', n, replicate)
            context = f"{cfg.experiment} n={n} replicate={replicate}"
            jobs.append((context, _potential_error, (spec, target, n, cfg.zeta, grid_points, cfg.alpha0, stream)))
            keys.append((n, stream.stream_id))
    results = execute(jobs, cfg.threads)

    report = DiagnosticsReport(cfg.experiment, plan={'sup_potential_error': ['median']})
    for (n, seed), value in zip(keys, results):
        report.add('sup_potential_error', 'coulomb', n, seed, value)

    analytic = partial(analytic_uniform_ball_potential, spec.R)
    for n in cfg.n_values:
        a = float(np.sqrt(CoulombRegularized(3, cfg.zeta, n).smoothing))
        gap = potential_sup_error(lambda Z: regularized_uniform_ball_potential(spec.R, Z, a), analytic, grid_points)
        report.add('regularization_gap', 'coulomb', n, 0, gap)
        logger.info(f"potential-convergence: n={n} regularization gap {gap:.4g}")

    directory = _output_dir(cfg)
    report.write(directory)
    write_config_json(cfg, directory)
    if cfg.gnuplot:
        write_gnuplot_script(cfg, directory, ['coulomb'])
    return report


def _predictive_scores(test_points, reference_predictive, sample, n):
    estimates = sample.weights @ predictive_matrix(sample.points, test_points)
    return [('sup_predictive_error', float(np.max(np.abs(estimates - reference_predictive))))], estimates


def run_bayes_classify(cfg):
    """Simultaneous coverage of posterior predictive estimates on held-out points"""
    data_stream = RngStream(cfg.base_seed, stream_id_for(cfg.experiment, 'data'))
    features, labels, test_points = synthesize_classification_data(cfg.n_train, cfg.n_test, cfg.separation,
                                                                   seed=data_stream.generator())
    target = cfg.build_target(data=(features, labels))
    registry = StreamRegistry(cfg.base_seed)
    methods = expand_methods(cfg, target)

    reference = _reference_sample(cfg, target, registry)
    reference_predictive = reference.weights @ predictive_matrix(reference.points, test_points)

    scorer = partial(_predictive_scores, test_points, reference_predictive)
    backgrounds = BackgroundCache(cfg, registry)
    mcmc_n = cfg.mcmc_n or cfg.n_values
    jobs, keys = _replicate_jobs(cfg, methods, registry, backgrounds, scorer,
                                 lambda method: mcmc_n if method.kind == 'mcmc' else cfg.n_values)
    results = execute(jobs, cfg.threads)

    stats = []
    for delta in cfg.deltas:
        stats += [f"coverage@{delta:g}", f"coverage_lo@{delta:g}", f"coverage_hi@{delta:g}"]
    report = DiagnosticsReport(cfg.experiment, plan={'sup_predictive_error': stats}, comparisons=len(cfg.deltas))
    estimates = {}
    for (method, n, seed), (scores, estimate) in zip(keys, results):
        for metric, value in scores:
            report.add(metric, method, n, seed, value)
        estimates.setdefault((method, n), []).append(estimate)

    for (method, n), rows in estimates.items():
        coverage = [simultaneous_coverage(np.array(rows), reference_predictive, delta) for delta in cfg.deltas]
        for delta, value in zip(cfg.deltas, coverage):
            report.set_aggregate('sup_predictive_error', method, n, f"coverage@{delta:g}", value)
        logger.info(f"bayes-classify: method={method} n={n} coverage {np.round(coverage, 3).tolist()}")

    directory = _output_dir(cfg)
    report.write(directory)
    write_config_json(cfg, directory)
    save_training_csv(features, labels, directory / 'training.csv')
    header = ','.join([f"z{k + 1}" for k in range(test_points.shape[1])] + ['p_ref'])
    np.savetxt(directory / 'reference_predictive.csv', np.column_stack([test_points, reference_predictive]),
               delimiter=',', header=header, comments='', fmt='%.17g')
    if cfg.gnuplot:
        write_gnuplot_script(cfg, directory, sorted({method for method, _ in estimates}))
    return report


def run_sample(cfg):
    """One Gibbs configuration and one MCMC sample of the same size, for plotting"""
    if len(cfg.n_values) != 1:
        raise ConfigError(f"sample takes a single n, got {list(cfg.n_values)}")
    n = cfg.n_values[0]
    target = cfg.build_target()
    registry = StreamRegistry(cfg.base_seed)
    directory = _output_dir(cfg)

    try:
        background_stream = registry.stream(cfg.experiment, 'background:gibbs', n, 0)
        background = build_background(cfg.backgrounds[0], target, cfg.backgrounds[0].size or n, background_stream,
                                      cfg.alpha0)
        kernel = cfg.build_kernel(n)
        potential = QuenchedPotential(background, kernel, target.support_radius())
        gibbs = GibbsConfig(n, cfg.betas[0], kernel, potential, target.dim)

        sampler = LangevinSampler(gibbs, cfg.alpha0, registry.stream(cfg.experiment, 'gibbs', n, 0), init=cfg.init,
                                  adapt_steps=cfg.T // 5)
        gibbs_diagnostics = sampler.run(cfg.T)
        history, mcmc_diagnostics = rwmh_chain(target, cfg.mcmc_burnin + n, cfg.mcmc_burnin,
                                               registry.stream(cfg.experiment, 'mcmc', n, 0))
    except ExperimentError:
        raise
    except GibbsQuadError as e:
        raise ExperimentError(f"sample n={n}", e) from e

    header = ','.join(f"x{k + 1}" for k in range(target.dim))
    paths = {
        'particles': directory / 'particles.csv',
        'mcmc_sample': directory / 'mcmc_sample.csv',
        'chain': directory / 'chain.json',
        'checkpoint': directory / 'checkpoint.csv',
    }
    np.savetxt(paths['particles'], sampler.state, delimiter=',', header=header, comments='', fmt='%.17g')
    save_weighted_sample(uniform_empirical(history), paths['mcmc_sample'])
    chain = {'gibbs': gibbs_diagnostics.to_dict(), 'mcmc': mcmc_diagnostics.to_dict(), 'beta': gibbs.beta,
             'energy': sampler.energy}
    paths['chain'].write_text(json.dumps(chain, indent=2), encoding='utf-8')
    sampler.checkpoint(paths['checkpoint'])
    paths['config'] = write_config_json(cfg, directory)
    if cfg.gnuplot:
        paths['plot'] = write_gnuplot_script(cfg, directory)

    logger.info(f"sample: n={n} gibbs acceptance {gibbs_diagnostics.acceptance_rate:.3f}, "
                f"mcmc acceptance {mcmc_diagnostics.acceptance_rate:.3f}")
    return paths


RUNNERS = {
    'sample': run_sample,
    'mmd-decay': run_mmd_decay,
    'variance': run_variance,
    'potential-convergence': run_potential_convergence,
    'bayes-classify': run_bayes_classify,
}


def run_experiment(cfg):
    """Dispatch to the runner for cfg.experiment"""
    runner = RUNNERS.get(cfg.experiment)
    if runner is None:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")

    logger.info(f"{cfg.experiment}: n={list(cfg.n_values)} replicates={cfg.replicates} seed={cfg.base_seed} "
                f"threads={cfg.threads} out={cfg.output_dir}")
    try:
        result = runner(cfg)
    except ExperimentError:
        raise
    except GibbsQuadError as e:
        raise ExperimentError(cfg.experiment, e) from e
    logger.info(f"{cfg.experiment}: done")
    return result
