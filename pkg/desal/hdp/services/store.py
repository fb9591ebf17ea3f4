"""
Reports and plot-ready data written by the command line.

CSV files carry six significant digits and 1-based hours; JSON files carry
full precision with sorted keys, so identical runs give identical bytes.
"""

import hashlib
import json
import os
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, \
    Tuple

import numpy as np
import pandas as pd
from arxiv.base.globals import get_application_config as config
from arxiv.base import logging

from ..domain import ErrorMap, FlexibilityMode, FopSet, RunManifest, \
    Scenario, Schedule, TdcsoResult, VerifiedReport

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.6g'
MANIFEST = 'manifest.json'


class ScheduleFormatError(ValueError):
    """A schedule file lacks the columns needed to rebuild it."""


SUMMARY_ROWS: Tuple[Tuple[str, str], ...] = (
    ('scheduled_cost', 'Scheduled cost ($)'),
    ('verified_cost', 'Verified cost ($)'),
    ('prorated_cost', 'Prorated cost ($)'),
    ('scheduled_production', 'Scheduled water production (m3)'),
    ('verified_production', 'Verified water production (m3)'),
    ('end_tds', 'Tank TDS at end (kg/m3)'),
    ('max_outflow_tds', 'Max outflow TDS (kg/m3)'),
)
"""Summary quantities and their row labels, in table order."""

TRAJECTORIES = Schedule._fields[1:Schedule._fields.index('grid_sell') + 1]
"""Hourly schedule columns, from ``on`` to ``grid_sell``."""
OPTIONAL = ('tank_tds', 'outflow_tds')


class ReportEncoder(json.JSONEncoder):
    """JSON encoder for arrays, numpy scalars and enums."""

    def default(self, obj: Any) -> Any:
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.generic):
            return obj.item()
        if isinstance(obj, Enum):
            return obj.value
        return super().default(obj)


def _dump_json(data: Any, path: str) -> str:
    with open(path, 'w') as f:
        json.dump(data, f, cls=ReportEncoder, sort_keys=True, indent=2)
        f.write('\n')
    logger.debug('Wrote %s', path)
    return path


def _write_csv(frame: pd.DataFrame, path: str, **kwargs: Any) -> str:
    frame.to_csv(path, float_format=FLOAT_FORMAT, **kwargs)
    logger.debug('Wrote %s', path)
    return path


def schedule_frame(sched: Schedule) -> pd.DataFrame:
    """Hourly trajectories of a schedule, one row per hour."""
    columns: Dict[str, Any] = {'hour': np.arange(1, sched.horizon + 1)}
    for name in TRAJECTORIES:
        values = getattr(sched, name)
        columns[name] = np.full(sched.horizon, np.nan) if values is None \
            else np.asarray(values)
    return pd.DataFrame(columns)


def write_schedule(sched: Schedule, path: str) -> str:
    return _write_csv(schedule_frame(sched), path, index=False, na_rep='')


def report_data(report: VerifiedReport) -> Dict[str, Any]:
    """A verified report as plain data."""
    return {
        'verified_cost': report.verified_cost,
        'prorated_cost': report.prorated_cost,
        'verified_production': report.verified_production,
        'scheduled_production': report.scheduled_production,
        'required_production': report.required_production,
        'production_delta': report.production_delta,
        'end_tds': report.end_tds,
        'min_vsq': report.min_vsq,
        'hourly': {
            'hps_power': report.hps_power,
            'hdp_power': report.hdp_power,
            'flush_water': report.flush_water,
            'cost': report.hourly_cost,
            'outflow_tds': report.outflow_tds,
            'permeate_flow': [s.permeate_flow for s in report.states],
            'permeate_tds': [s.permeate_tds for s in report.states],
            'feed_head': [s.feed_head for s in report.states],
            'tank_volume': [s.volume for s in report.tanks[1:]],
            'tank_tds': [s.tds for s in report.tanks[1:]],
        },
        'violations': [
            {'hour': None if v.hour is None else v.hour + 1,
             'quantity': v.quantity, 'value': v.value, 'bound': v.bound,
             'sense': v.sense}
            for v in report.violations
        ],
        'manifest': MANIFEST,
    }


def write_verified_report(report: VerifiedReport, path: str) -> str:
    return _dump_json(report_data(report), path)


def write_error_map(emap: ErrorMap, path: str) -> str:
    """Long-format error map: one row per (flow, speed) point."""
    flows, speeds = np.meshgrid(emap.flows, emap.speeds, indexing='ij')
    frame = pd.DataFrame({
        'flow': flows.ravel(), 'speed': speeds.ravel(),
        'dfpe': emap.dfpe.ravel(), 'dspe': emap.dspe.ravel(),
        'feasible': emap.feasible.ravel().astype(int),
    })
    return _write_csv(frame, path, index=False, na_rep='')


def write_scenarios(scenarios: Sequence[Scenario], path: str) -> str:
    return _dump_json({
        'scenarios': [{'index': s.index, 'probability': s.probability,
                       'pv': s.pv, 'buy_price': s.buy_price,
                       'sell_price': s.sell_price} for s in scenarios],
        'manifest': MANIFEST,
    }, path)


def load_scenarios(path: str) -> List[Scenario]:
    """Read scenarios written by :func:`write_scenarios`."""
    with open(path) as f:
        data = json.load(f)
    return [Scenario(pv=np.asarray(s['pv'], dtype=float),
                     buy_price=np.asarray(s['buy_price'], dtype=float),
                     sell_price=np.asarray(s['sell_price'], dtype=float),
                     probability=float(s['probability']),
                     index=int(s['index']))
            for s in data['scenarios']]


def write_tdcso(result: TdcsoResult, path: str) -> str:
    return _dump_json({
        'commitment': {'on': result.commitment.on,
                       'shut': result.commitment.shut,
                       'start': result.commitment.start},
        'step1_cost': result.step1_cost,
        'expected_cost': result.expected_cost,
        'scenarios': [{'index': sched.scenario, 'probability': p,
                       'cost': sched.cost, 'status': sched.status,
                       'production': sched.production()}
                      for sched, p in zip(result.schedules,
                                          result.probabilities)],
        'timings': result.timings,
        'manifest': MANIFEST,
    }, path)


def write_fop_points(fops: FopSet, path: str) -> str:
    frame = pd.DataFrame([p._asdict() for p in fops.points])
    frame['permeate_tds'] = [p.permeate_tds for p in fops.points]
    return _write_csv(frame, path, index=False)


def write_sweep(demands: Sequence[float], heads: Sequence[float],
                matrices: Mapping[str, np.ndarray], path: str) -> str:
    """Sweep deltas in long format; infeasible cells are left blank."""
    grid_d, grid_h = np.meshgrid(demands, heads, indexing='ij')
    columns: Dict[str, Any] = {'demand': grid_d.ravel(),
                               'head': grid_h.ravel()}
    for name, values in matrices.items():
        columns[name] = np.asarray(values).ravel()
    return _write_csv(pd.DataFrame(columns), path, index=False, na_rep='')


def summary_frame(runs: Mapping[str, Tuple[Schedule, VerifiedReport]]) \
        -> pd.DataFrame:
    """Scheduled, verified and prorated figures with one column per mode."""
    table: Dict[str, List[float]] = {}
    for mode, (sched, report) in runs.items():
        outflow = report.outflow_tds
        values = {
            'scheduled_cost': sched.cost,
            'verified_cost': report.verified_cost,
            'prorated_cost': report.prorated_cost,
            'scheduled_production': report.scheduled_production,
            'verified_production': report.verified_production,
            'end_tds': report.end_tds,
            'max_outflow_tds': float(np.max(outflow)) if len(outflow)
            else float('nan'),
        }
        table[mode] = [values[key] for key, _ in SUMMARY_ROWS]
    return pd.DataFrame(table, index=[label for _, label in SUMMARY_ROWS])


def write_summary(runs: Mapping[str, Tuple[Schedule, VerifiedReport]],
                  path: str) -> str:
    return _write_csv(summary_frame(runs), path, index_label='quantity')


def content_hash(path: str) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def make_manifest(command: str, inputs: Iterable[str],
                  seed: Optional[int], solver: Dict[str, Any],
                  outputs: Iterable[str],
                  timings: Optional[Dict[str, float]] = None) -> RunManifest:
    """Describe a run: what went in, with content hashes, and what came out."""
    return RunManifest(
        command=command,
        version=str(config().get('APP_VERSION', '0.1')),
        inputs={path: content_hash(path) for path in sorted(set(inputs))},
        seed=seed,
        solver=solver,
        outputs=sorted(os.path.basename(path) for path in outputs),
        timings=timings or {},
    )


def write_manifest(manifest: RunManifest, directory: str) -> str:
    return _dump_json(manifest, os.path.join(directory, MANIFEST))


def load_schedule(path: str, mode: FlexibilityMode) -> Schedule:
    """
    Read a schedule written by :func:`write_schedule`.

    Missing trajectory columns read as zeros, or as ``None`` for the tank
    TDS columns. The file holds no cost, so the cost is NaN.
    """
    frame = pd.read_csv(path)
    missing = {'hour', 'on', 'speed', 'feed_flow'} - set(frame.columns)
    if missing:
        raise ScheduleFormatError(f'{path}: missing columns {sorted(missing)}')
    fields: Dict[str, Any] = {}
    for name in TRAJECTORIES:
        if name not in frame.columns or frame[name].isna().all():
            fields[name] = None if name in OPTIONAL \
                else np.zeros(len(frame))
        else:
            fields[name] = frame[name].fillna(0.0).to_numpy(dtype=float)
    for name in ('on', 'shut', 'start'):
        fields[name] = np.round(fields[name]).astype(int)
    return Schedule(mode=mode, cost=float('nan'), status='loaded', **fields)
