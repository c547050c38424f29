"""
Shared configuration: environment defaults and config-file reading
"""
import configparser
import logging
import os

from dotenv import load_dotenv

from shared.errors import ConfigError

load_dotenv()

OUTPUT_DIR = os.getenv('GIBBSQUAD_OUTPUT_DIR', 'results')
THREADS = int(os.getenv('GIBBSQUAD_THREADS', '1'))
BASE_SEED = int(os.getenv('GIBBSQUAD_SEED', '0'))
LOG_LEVEL = os.getenv('GIBBSQUAD_LOG_LEVEL', 'INFO')
BLOCK_SIZE = int(os.getenv('GIBBSQUAD_BLOCK_SIZE', '2048'))

SECTIONS = ('run', 'target', 'kernel', 'gibbs', 'background')


def configure_logging(level=None):
    """Configure root logging once for command-line use"""
    logging.basicConfig(
        level=(level or LOG_LEVEL).upper(),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )


def read_config_file(path):
    """Parse `key = value` lines grouped in [run] [target] [kernel] [gibbs] [background]"""
    parser = configparser.ConfigParser(
        inline_comment_prefixes=('#',),
        comment_prefixes=('#',),
        interpolation=None,
        delimiters=('=',)
    )
    parser.optionxform = str

    try:
        with open(path, encoding='utf-8') as handle:
            parser.read_file(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}")

    unknown = [name for name in parser.sections() if name not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}; expected {list(SECTIONS)}")

    return {name: dict(parser.items(name)) for name in parser.sections()}
