"""
Experiments Service - Experiment configuration, schemas and presets

A configuration is five sections ([run] [target] [kernel] [gibbs]
[background]) of raw values, validated by one marshmallow schema per section
and then resolved into an ExperimentConfig holding parsed specs.
"""
import copy
import logging
from dataclasses import asdict, dataclass

from marshmallow import RAISE, Schema, ValidationError, fields, validates
from marshmallow.validate import OneOf, Range

from services.gibbs.energy import parse_beta
from services.potentials.fields import parse_grid
from shared import config as env
from shared.errors import ConfigError
from shared.kernels import parse_kernel
from shared.targets import parse_target
from shared.validators import parse_call_spec, reject_unknown, take_number

logger = logging.getLogger(__name__)

EXPERIMENTS = ('sample', 'mmd-decay', 'variance', 'potential-convergence', 'bayes-classify')
INITS = ('background-subsample', 'uniform-ball')
MAX_SEED = (1 << 64) - 1


class DelimitedList(fields.List):
    """List field that also accepts a delimited string such as `50, 100, 200`"""

    def __init__(self, cls_or_instance, delimiter=',', **kwargs):
        super().__init__(cls_or_instance, **kwargs)
        self.delimiter = delimiter

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str):
            value = [item.strip() for item in value.split(self.delimiter) if item.strip()]
        elif not isinstance(value, (list, tuple)):
            value = [value]
        return super()._deserialize(list(value), attr, data, **kwargs)


class RunSchema(Schema):
    class Meta:
        unknown = RAISE

    experiment = fields.String(validate=OneOf(EXPERIMENTS), load_default=None)
    n = DelimitedList(fields.Integer(validate=Range(min=1)), load_default=None)
    replicates = fields.Integer(validate=Range(min=1), load_default=20)
    base_seed = fields.Integer(validate=Range(min=0, max=MAX_SEED), load_default=None)
    output_dir = fields.String(load_default=None)
    threads = fields.Integer(validate=Range(min=1), load_default=None)
    methods = DelimitedList(fields.String(), load_default=None)
    mcmc_burnin = fields.Integer(validate=Range(min=0), load_default=5000)
    reference = fields.String(load_default='mcmc(M=9000,burnin=1000)')
    grid = fields.String(load_default='grid(extent=1.2,pts_per_axis=20)')
    full_square = fields.Boolean(load_default=False)
    n_centers = fields.Integer(validate=Range(min=1), load_default=10)
    deltas = DelimitedList(fields.Float(validate=Range(min=0)), load_default=[0.02, 0.04, 0.06, 0.08, 0.10])
    mcmc_n = DelimitedList(fields.Integer(validate=Range(min=1)), load_default=None)
    n_train = fields.Integer(validate=Range(min=1), load_default=50)
    n_test = fields.Integer(validate=Range(min=1), load_default=10)
    separation = fields.Float(validate=Range(min=0), load_default=4.0)
    gnuplot = fields.Boolean(load_default=False)

    @validates('n')
    def validate_n(self, value, **kwargs):
        if value is not None and any(b <= a for a, b in zip(value, value[1:])):
            raise ValidationError('n list must be strictly increasing')


class TargetSchema(Schema):
    class Meta:
        unknown = RAISE

    spec = fields.String(load_default=None)


class KernelSchema(Schema):
    class Meta:
        unknown = RAISE

    spec = fields.String(load_default=None)


class GibbsSchema(Schema):
    class Meta:
        unknown = RAISE

    beta = DelimitedList(fields.String(), delimiter=';', load_default=['n2'])
    T = fields.Integer(validate=Range(min=1), load_default=2000)
    alpha0 = fields.Float(validate=Range(min=0, min_inclusive=False), load_default=1.0)
    init = fields.String(validate=OneOf(INITS), load_default='background-subsample')
    zeta = fields.Float(validate=Range(min=0, min_inclusive=False), load_default=0.05)


class BackgroundSchema(Schema):
    class Meta:
        unknown = RAISE

    spec = DelimitedList(fields.String(), delimiter=';', load_default=['mcmc(M=1000,burnin=5000)'])


SCHEMAS = {
    'run': RunSchema,
    'target': TargetSchema,
    'kernel': KernelSchema,
    'gibbs': GibbsSchema,
    'background': BackgroundSchema,
}


@dataclass(frozen=True)
class MCMCBackgroundSpec:
    """History of a random-walk chain; size None means the background has n atoms"""
    size: int = 1000
    burn_in: int = 5000
    thin: int = 1

    @property
    def label(self):
        size = 'n' if self.size is None else self.size
        return f"mcmc{size}" if self.thin == 1 else f"mcmc{size}t{self.thin}"


@dataclass(frozen=True)
class CoulombBackgroundSpec:
    """Reweighted Coulomb gas on B(0, R); size None means n particles"""
    R: float
    T: int = 2000
    exponent: float = 2.0
    size: int = None

    @property
    def label(self):
        size = 'n' if self.size is None else self.size
        return f"coulomb{size}"


def _size(params, spec):
    raw = params.pop('M', None)
    if raw is None or raw.strip() == 'n':
        return None
    params['M'] = raw
    return take_number(params, 'M', kind=int, spec=spec)


def parse_background(text):
    """`mcmc(M=1000,burnin=5000,thin=1)` or `coulomb(R=2.5,T=2000,exp=2,M=n)`"""
    name, params = parse_call_spec(text)
    if name == 'mcmc':
        size = _size(params, text) if 'M' in params else 1000
        spec = MCMCBackgroundSpec(size,
                                  take_number(params, 'burnin', default=5000, kind=int, spec=text),
                                  take_number(params, 'thin', default=1, kind=int, spec=text))
        if (spec.size is not None and spec.size < 1) or spec.burn_in < 0 or spec.thin < 1:
            raise ConfigError(f"invalid mcmc background {text!r}")
    elif name == 'coulomb':
        spec = CoulombBackgroundSpec(take_number(params, 'R', spec=text),
                                     take_number(params, 'T', default=2000, kind=int, spec=text),
                                     take_number(params, 'exp', default=2.0, spec=text),
                                     _size(params, text) if 'M' in params else None)
        if spec.R <= 0 or spec.T < 1:
            raise ConfigError(f"invalid coulomb background {text!r}")
        parse_beta(f"power(u=1,exp={spec.exponent})")
    else:
        raise ConfigError(f"unknown background {name!r}")
    reject_unknown(params, text)
    return spec


def parse_reference(text):
    """`mcmc(M=90000,burnin=10000)`: reference chain for the target"""
    spec = parse_background(text)
    if not isinstance(spec, MCMCBackgroundSpec) or spec.size is None:
        raise ConfigError(f"reference must be mcmc(M=..,burnin=..), got {text!r}")
    return spec


EXPERIMENT_DEFAULTS = {
    'sample': {
        'run': {'n': [500]},
        'target': {'spec': 'trunc_gaussian(d=3,sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
    },
    'mmd-decay': {
        'run': {'n': [50, 100, 200], 'methods': ['mcmc', 'gibbs']},
        'target': {'spec': 'trunc_gaussian(d=3,sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
    },
    'variance': {
        'run': {'n': [50, 100], 'methods': ['mcmc', 'gibbs']},
        'target': {'spec': 'trunc_gaussian(d=3,sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
    },
    'potential-convergence': {
        'run': {'n': [64, 256, 1024], 'replicates': 5, 'methods': ['coulomb']},
        'target': {'spec': 'uniform_ball(d=3,R=1)'},
        'background': {'spec': ['coulomb(R=1,T=2000,exp=2)']},
    },
    'bayes-classify': {
        'run': {'n': [100], 'mcmc_n': [100, 1000, 10000], 'methods': ['mcmc', 'gibbs'], 'mcmc_burnin': 500,
                'reference': 'mcmc(M=20000,burnin=1000)'},
        'target': {'spec': 'logistic(prior_sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
        'background': {'spec': ['mcmc(M=10000,burnin=500,thin=10)']},
    },
}

PAPER_SCALE = {
    'sample': {'gibbs': {'T': 50000}},
    'mmd-decay': {'run': {'replicates': 100, 'reference': 'mcmc(M=90000,burnin=10000)'}, 'gibbs': {'T': 10000}},
    'variance': {'run': {'replicates': 100}, 'gibbs': {'T': 10000}},
    'potential-convergence': {'background': {'spec': ['coulomb(R=1,T=10000,exp=2)']}},
    'bayes-classify': {'run': {'replicates': 50, 'reference': 'mcmc(M=100000,burnin=10000)'},
                       'gibbs': {'T': 10000}},
}

PRESETS = {
    'paper-fig1a': {
        'run': {'experiment': 'sample', 'n': [500], 'mcmc_burnin': 5000, 'gnuplot': True},
        'target': {'spec': 'trunc_gaussian(d=3,sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
        'gibbs': {'beta': ['n2'], 'T': 2000},
        'background': {'spec': ['mcmc(M=1000,burnin=5000)']},
    },
    # the log-gas interaction of the 2-d picture is out of scope; a Gaussian kernel stands in
    'paper-fig1c': {
        'run': {'experiment': 'sample', 'n': [500], 'gnuplot': True},
        'target': {'spec': 'uniform_ball(d=2,R=1)'},
        'kernel': {'spec': 'gaussian(h=0.25)'},
        'gibbs': {'beta': ['n2'], 'T': 5000},
        'background': {'spec': ['mcmc(M=1000,burnin=5000)']},
    },
    'paper-fig4a-desk': {
        'run': {'experiment': 'mmd-decay', 'n': [50, 100, 200], 'replicates': 20, 'methods': ['mcmc', 'gibbs'],
                'mcmc_burnin': 5000, 'reference': 'mcmc(M=9000,burnin=1000)'},
        'target': {'spec': 'trunc_gaussian(d=3,sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
        'gibbs': {'beta': ['n2'], 'T': 2000},
        'background': {'spec': ['mcmc(M=1000,burnin=5000)']},
    },
    'paper-fig4b-desk': {
        'run': {'experiment': 'bayes-classify', 'n': [100], 'mcmc_n': [100, 1000, 10000], 'replicates': 20,
                'methods': ['mcmc', 'gibbs'], 'mcmc_burnin': 500, 'reference': 'mcmc(M=20000,burnin=1000)',
                'deltas': [0.02, 0.04, 0.06, 0.08, 0.10], 'n_train': 50, 'n_test': 10},
        'target': {'spec': 'logistic(prior_sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
        'gibbs': {'beta': ['n2'], 'T': 2000},
        'background': {'spec': ['mcmc(M=10000,burnin=500,thin=10)']},
    },
    'variance-desk': {
        'run': {'experiment': 'variance', 'n': [50, 100], 'replicates': 20, 'methods': ['mcmc', 'gibbs'],
                'n_centers': 10},
        'target': {'spec': 'trunc_gaussian(d=3,sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
        'gibbs': {'beta': ['n2'], 'T': 2000},
        'background': {'spec': ['mcmc(M=1000,burnin=5000)']},
    },
    'potential-convergence-desk': {
        'run': {'experiment': 'potential-convergence', 'n': [64, 256, 1024], 'replicates': 5,
                'grid': 'grid(extent=1.2,pts_per_axis=20)'},
        'target': {'spec': 'uniform_ball(d=3,R=1)'},
        'gibbs': {'beta': ['n2'], 'zeta': 0.05},
        'background': {'spec': ['coulomb(R=1,T=2000,exp=2)']},
    },
    # background-size and temperature sweeps of the quenched measure
    'background-sweep-desk': {
        'run': {'experiment': 'mmd-decay', 'n': [50, 100, 200], 'replicates': 20, 'methods': ['gibbs']},
        'target': {'spec': 'trunc_gaussian(d=3,sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
        'gibbs': {'beta': ['n2'], 'T': 2000},
        'background': {'spec': ['mcmc(M=n,burnin=5000)', 'mcmc(M=1000,burnin=5000)', 'mcmc(M=5000,burnin=5000)',
                                'coulomb(R=2.5,T=2000,exp=2)']},
    },
    'temperature-sweep-desk': {
        'run': {'experiment': 'mmd-decay', 'n': [50, 100, 200], 'replicates': 20, 'methods': ['gibbs']},
        'target': {'spec': 'trunc_gaussian(d=3,sigma=0.5)'},
        'kernel': {'spec': 'riesz(s=1,eps=0.1)'},
        'gibbs': {'beta': ['n2', 'power(u=1,exp=2.5)', 'n3'], 'T': 2000},
        'background': {'spec': ['mcmc(M=1000,burnin=5000)']},
    },
}


def _merge(base, extra):
    merged = copy.deepcopy(base)
    for section, values in (extra or {}).items():
        merged.setdefault(section, {}).update(copy.deepcopy(values))
    return merged


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment: validated section values plus parsed specs"""
    experiment: str
    n_values: tuple
    replicates: int
    base_seed: int
    output_dir: str
    threads: int
    methods: tuple
    mcmc_burnin: int
    reference: MCMCBackgroundSpec
    grid: object
    full_square: bool
    n_centers: int
    deltas: tuple
    mcmc_n: tuple
    n_train: int
    n_test: int
    separation: float
    gnuplot: bool
    target_spec: str
    kernel_spec: str
    betas: tuple
    beta_specs: tuple
    T: int
    alpha0: float
    init: str
    zeta: float
    backgrounds: tuple
    background_specs: tuple
    preset: str = None
    paper_scale: bool = False

    def build_target(self, data=None):
        return parse_target(self.target_spec, data=data)

    def build_kernel(self, n):
        if self.kernel_spec is None:
            raise ConfigError(f"{self.experiment} needs a [kernel] spec")
        return parse_kernel(self.kernel_spec, n=n)

    def to_dict(self):
        """JSON-friendly resolved configuration"""
        values = asdict(self)
        values['reference'] = asdict(self.reference)
        values['grid'] = asdict(self.grid)
        values['backgrounds'] = [dict(asdict(spec), kind=type(spec).__name__) for spec in self.backgrounds]
        values['betas'] = [schedule.label for schedule in self.betas]
        for key in ('n_values', 'methods', 'deltas', 'mcmc_n', 'beta_specs', 'background_specs'):
            values[key] = list(values[key]) if values[key] is not None else None
        return values


def _load_section(name, values):
    try:
        return SCHEMAS[name]().load(values or {})
    except ValidationError as e:
        raise ConfigError(f"[{name}] {e.messages}")


def _validate_specs(cfg):
    if cfg.target_spec is None:
        raise ConfigError(f"{cfg.experiment} needs a [target] spec")
    if not cfg.target_spec.strip().startswith('logistic'):
        d = cfg.build_target().dim
    elif 'train' in parse_call_spec(cfg.target_spec)[1]:
        d = cfg.build_target().dim
    else:
        d = 3
    if cfg.kernel_spec is not None:
        kernel = cfg.build_kernel(cfg.n_values[0])
        kernel.check_dim(d)
    for spec in cfg.backgrounds:
        if isinstance(spec, CoulombBackgroundSpec) and d < 3:
            raise ConfigError('coulomb background needs d >= 3')
    if cfg.experiment == 'potential-convergence' and d != 3:
        raise ConfigError(f"potential-convergence needs d=3, got d={d}")


def build_experiment_config(sections, preset=None, paper_scale=False):
    """Validate raw sections and resolve them into an ExperimentConfig"""
    unknown = [name for name in sections if name not in SCHEMAS]
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}")
    loaded = {name: _load_section(name, sections.get(name)) for name in SCHEMAS}
    run, gibbs = loaded['run'], loaded['gibbs']
    if run['experiment'] is None:
        raise ConfigError('[run] experiment is required')
    if not run['n']:
        raise ConfigError('[run] n is required')

    methods = tuple(run['methods'] or ())
    cfg = ExperimentConfig(
        experiment=run['experiment'],
        n_values=tuple(run['n']),
        replicates=run['replicates'],
        base_seed=run['base_seed'] if run['base_seed'] is not None else env.BASE_SEED,
        output_dir=run['output_dir'] or env.OUTPUT_DIR,
        threads=run['threads'] or env.THREADS,
        methods=methods,
        mcmc_burnin=run['mcmc_burnin'],
        reference=parse_reference(run['reference']),
        grid=parse_grid(run['grid']),
        full_square=run['full_square'],
        n_centers=run['n_centers'],
        deltas=tuple(run['deltas']),
        mcmc_n=tuple(run['mcmc_n']) if run['mcmc_n'] else None,
        n_train=run['n_train'],
        n_test=run['n_test'],
        separation=run['separation'],
        gnuplot=run['gnuplot'],
        target_spec=loaded['target']['spec'],
        kernel_spec=loaded['kernel']['spec'],
        betas=tuple(parse_beta(text) for text in gibbs['beta']),
        beta_specs=tuple(gibbs['beta']),
        T=gibbs['T'],
        alpha0=gibbs['alpha0'],
        init=gibbs['init'],
        zeta=gibbs['zeta'],
        backgrounds=tuple(parse_background(text) for text in loaded['background']['spec']),
        background_specs=tuple(loaded['background']['spec']),
        preset=preset,
        paper_scale=paper_scale,
    )
    _validate_specs(cfg)
    return cfg


def load_experiment_config(experiment=None, path=None, preset=None, paper_scale=False, seed=None, out=None,
                           threads=None):
    """Layer experiment defaults, a preset, a config file, paper-scale values and CLI overrides"""
    file_sections = env.read_config_file(path) if path else {}
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
    preset_sections = PRESETS.get(preset, {})

    name = experiment or file_sections.get('run', {}).get('experiment') or preset_sections.get('run', {}).get(
        'experiment')
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {list(EXPERIMENTS)}")
    for source, sections in (('preset', preset_sections), ('config file', file_sections)):
        declared = sections.get('run', {}).get('experiment')
        if declared is not None and declared != name:
            raise ConfigError(f"{source} is for experiment {declared!r}, not {name!r}")

    sections = _merge(EXPERIMENT_DEFAULTS[name], preset_sections)
    sections = _merge(sections, file_sections)
    if paper_scale:
        sections = _merge(sections, PAPER_SCALE[name])
    sections.setdefault('run', {})['experiment'] = name

    overrides = {'base_seed': seed, 'output_dir': out, 'threads': threads}
    sections['run'].update({key: value for key, value in overrides.items() if value is not None})

    logger.debug(f"resolved sections for {name}: {sections}")
    return build_experiment_config(sections, preset=preset, paper_scale=paper_scale)
