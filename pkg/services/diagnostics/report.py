"""
Diagnostics Service - Replicate records and their aggregates

Records are one row per (metric, method, n, replicate). Aggregates are
computed from the records on demand unless a runner supplies the value
through set_aggregate.
"""
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from services.diagnostics.metrics import coverage_interval, quantile
from shared.errors import ConfigError

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ['metric', 'method', 'n', 'seed', 'value']
AGGREGATE_COLUMNS = ['metric', 'method', 'n', 'stat', 'value']
RECORD_ORDER = ['method', 'n', 'seed', 'metric']
FLOAT_FORMAT = '%.17g'


def _coverage_stats(values, stat, comparisons):
    name, _, level = stat.partition('@')
    delta = float(level)
    p = float(np.mean(np.asarray(values) <= delta))
    if name == 'coverage':
        return p
    low, high = coverage_interval(p, len(values), comparisons=comparisons)
    return low if name == 'coverage_lo' else high


def compute_stat(values, stat, comparisons=1):
    """quantile_90, median, mean, variance, coverage@delta, coverage_lo@delta, coverage_hi@delta"""
    if stat.startswith('quantile_'):
        return quantile(values, int(stat.split('_', 1)[1]) / 100.0)
    if stat == 'median':
        return float(np.median(values))
    if stat == 'mean':
        return float(np.mean(values))
    if stat == 'variance':
        if len(values) < 2:
            raise ConfigError('variance needs at least 2 replicates')
        return float(np.var(values, ddof=1))
    if stat.split('@')[0] in ('coverage', 'coverage_lo', 'coverage_hi'):
        return _coverage_stats(values, stat, comparisons)
    raise ConfigError(f"unknown aggregate stat {stat!r}")


class DiagnosticsReport:
    """Per-replicate records plus a plan of which stats to aggregate for each metric"""

    def __init__(self, experiment, plan=None, comparisons=1):
        self.experiment = experiment
        self.plan = dict(plan or {})
        self.comparisons = comparisons
        self.records = []
        self.supplied = {}

    def add(self, metric, method, n, seed, value):
        self.records.append({
            'metric': metric,
            'method': method,
            'n': int(n),
            'seed': int(seed),
            'value': float(value),
        })

    def extend(self, rows):
        for row in rows:
            self.add(**row)

    def set_aggregate(self, metric, method, n, stat, value):
        """Use value for this planned stat instead of computing it from the records"""
        if stat not in self.plan.get(metric, []):
            raise ConfigError(f"stat {stat!r} is not planned for metric {metric!r}")
        self.supplied[(metric, method, int(n), stat)] = float(value)

    def records_frame(self):
        frame = pd.DataFrame(self.records, columns=RECORD_COLUMNS)
        frame = frame.astype({'n': 'int64', 'seed': 'uint64', 'value': 'float64'})
        return frame.sort_values(RECORD_ORDER, kind='mergesort').reset_index(drop=True)

    def aggregate(self):
        """Aggregate rows computed from the records according to the plan"""
        records = self.records_frame()
        rows = []
        for (metric, method, n), group in records.groupby(['metric', 'method', 'n'], sort=True):
            values = group['value'].tolist()
            for stat in self.plan.get(metric, []):
                key = (metric, method, int(n), stat)
                value = self.supplied[key] if key in self.supplied else compute_stat(values, stat, self.comparisons)
                rows.append({
                    'metric': metric,
                    'method': method,
                    'n': int(n),
                    'stat': stat,
                    'value': value,
                })
        frame = pd.DataFrame(rows, columns=AGGREGATE_COLUMNS)
        return frame.astype({'n': 'int64', 'value': 'float64'})

    def to_frames(self):
        return self.records_frame(), self.aggregate()

    def write(self, directory):
        """Write records.csv and aggregates.csv; returns their paths"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        records, aggregates = self.to_frames()
        records_path = directory / 'records.csv'
        aggregates_path = directory / 'aggregates.csv'
        records.to_csv(records_path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        aggregates.to_csv(aggregates_path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        logger.info(f"{self.experiment}: wrote {len(records)} records and {len(aggregates)} aggregates to {directory}")
        return records_path, aggregates_path

    @staticmethod
    def read(directory):
        """(records, aggregates) frames as written by write"""
        directory = Path(directory)
        records = pd.read_csv(directory / 'records.csv', dtype={'metric': str, 'method': str, 'n': 'int64',
                                                                 'seed': 'uint64', 'value': 'float64'})
        aggregates = pd.read_csv(directory / 'aggregates.csv', dtype={'metric': str, 'method': str, 'n': 'int64',
                                                                      'stat': str, 'value': 'float64'})
        return records, aggregates

    def summary(self):
        """Aggregates pivoted to one row per (metric, method, n)"""
        aggregates = self.aggregate()
        if aggregates.empty:
            return aggregates
        return aggregates.pivot_table(index=['metric', 'method', 'n'], columns='stat', values='value')
