"""
Shared validation utilities
"""
import re

import numpy as np

from shared.errors import ConfigError, DimensionMismatchError, EmptySampleError

SPEC_PATTERN = re.compile(r'^\s*([A-Za-z_][A-Za-z0-9_\-]*)\s*(?:\((.*)\))?\s*$')


def as_points(points, dim=None):
    """Coerce a list of points into a read-only (n, d) float array.

    A flat sequence, list or 1-d array alike, is read as n points in R^1.
    """
    if isinstance(points, np.ndarray):
        array = np.array(points, dtype=float)
        if array.ndim == 1:
            array = array[:, None]
    else:
        points = list(points)
        if not points:
            raise EmptySampleError()
        lengths = {len(np.atleast_1d(p)) for p in points}
        if len(lengths) > 1:
            raise DimensionMismatchError()
        array = np.array([np.atleast_1d(p) for p in points], dtype=float)

    if array.ndim != 2:
        raise DimensionMismatchError()
    if array.shape[0] == 0:
        raise EmptySampleError()
    if array.shape[1] == 0:
        raise DimensionMismatchError('dimension mismatch: points have no coordinates')
    if dim is not None and array.shape[1] != dim:
        raise DimensionMismatchError(f"dimension mismatch: expected {dim}, got {array.shape[1]}")
    if not np.all(np.isfinite(array)):
        raise ConfigError('points must have finite coordinates')

    array.setflags(write=False)
    return array


def as_point(x, dim=None):
    """Coerce a single point into a 1-d float array"""
    point = np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and point.shape[0] != dim:
        raise DimensionMismatchError(f"dimension mismatch: expected {dim}, got {point.shape[0]}")
    return point


def validate_positive(name, value):
    """Require a strictly positive finite number"""
    if not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def validate_dimension(d, minimum=1):
    """Ambient dimension must be an integer >= minimum"""
    if int(d) != d or d < minimum:
        raise ConfigError(f"dimension must be an integer >= {minimum}, got {d}")
    return int(d)


def parse_call_spec(text):
    """Split `name(k=v,...)` into the name and a dict of raw string values"""
    match = SPEC_PATTERN.match(text or '')
    if not match:
        raise ConfigError(f"malformed spec string: {text!r}")

    name, body = match.group(1), match.group(2)
    params = {}
    if body and body.strip():
        for item in body.split(','):
            if '=' not in item:
                raise ConfigError(f"expected key=value in {text!r}, got {item.strip()!r}")
            key, value = item.split('=', 1)
            params[key.strip()] = value.strip()
    return name, params


def take_number(params, key, default=None, kind=float, spec=''):
    """Pop a numeric parameter out of a parsed spec"""
    if key not in params:
        if default is None:
            raise ConfigError(f"missing parameter {key!r} in {spec!r}")
        return default
    raw = params.pop(key)
    try:
        value = kind(float(raw)) if kind is int else kind(raw)
    except ValueError:
        raise ConfigError(f"parameter {key!r} in {spec!r} is not a number: {raw!r}")
    if kind is int and value != float(raw):
        raise ConfigError(f"parameter {key!r} in {spec!r} must be an integer")
    return value


def reject_unknown(params, spec):
    """Fail on leftover spec parameters"""
    if params:
        raise ConfigError(f"unknown parameters {sorted(params)} in {spec!r}")
