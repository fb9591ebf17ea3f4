"""API for loading a scheduling case: config document, series and feeder."""

import os
from functools import lru_cache as memoize
from typing import Any, Dict, IO, List, Optional, Tuple, Type, Union

import numpy as np
import pandas as pd
import yaml
from dateutil import parser as dateparser
from arxiv.base import logging

from ..domain import Case, CaseConfig, FlushConfig, GridConfig, \
    MarketSeries, NetworkModel, PlantConfig, PumpLimits, PumpSection, \
    PwlConfig, ScenarioConfig, SeriesPaths, SolverSettings, TankConfig, \
    TimeGrid
from ..grid import build_tree, make_line
from ..pump import fit_pump_curves

logger = logging.getLogger(__name__)

CsvSource = Union[str, IO[str]]

SECTIONS: Dict[str, Type] = {
    'time': TimeGrid,
    'plant': PlantConfig,
    'tank': TankConfig,
    'flush': FlushConfig,
    'grid': GridConfig,
    'series': SeriesPaths,
    'pwl': PwlConfig,
    'scenarios': ScenarioConfig,
    'solver': SolverSettings,
}
REQUIRED = ('plant', 'tank', 'flush', 'pump', 'grid', 'series')
PUMP_KEYS = ('curve', 'n_stages')


class ConfigError(Exception):
    """The case document cannot be turned into a valid configuration."""


class MissingKey(ConfigError):
    """A required section or field is absent."""


class ConfigValidationError(ConfigError):
    """A field is present but violates a bound."""


class SeriesError(Exception):
    """An hourly series or tabular input is malformed."""


class TruncationError(ValueError):
    """The requested horizon is not a prefix of the case horizon."""


def _coerce(value: Any, kind: Any, where: str) -> Any:
    """Cast a YAML scalar to the annotated field type."""
    optional = getattr(kind, '__args__', None)
    if optional and type(None) in optional:
        if value is None:
            return None
        kind = [k for k in optional if k is not type(None)][0]
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError(f'expected true/false, got {value!r}')
            return value
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError(f'expected an integer, got {value!r}')
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError(f'expected a number, got {value!r}')
            return float(value)
        if kind is str:
            return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigValidationError(f'{where}: {e}') from e
    return value


def _build(name: str, cls: Type, data: Optional[Dict[str, Any]],
           required: bool = True) -> Any:
    if data is None:
        if required:
            raise MissingKey(f'Missing section: {name}')
        data = {}
    if not isinstance(data, dict):
        raise ConfigValidationError(f'{name}: expected a mapping')
    unknown = set(data) - set(cls._fields)
    if unknown:
        raise ConfigValidationError(
            f'{name}: unknown keys {", ".join(sorted(unknown))}'
        )
    values = {}
    for field in cls._fields:
        if field in data:
            values[field] = _coerce(data[field], cls.__annotations__[field],
                                    f'{name}.{field}')
        elif field not in cls._field_defaults:
            raise MissingKey(f'Missing key: {name}.{field}')
    return cls(**values)


def load_config(document: Union[str, IO[str]],
                base_path: str = '.') -> CaseConfig:
    """
    Parse and validate a case document.

    Parameters
    ----------
    document : str or stream
        YAML text with the sections ``time``, ``plant``, ``tank``,
        ``flush``, ``pump``, ``grid``, ``series``, ``pwl``, ``scenarios``
        and ``solver``.
    base_path : str
        Directory that file references in the document are relative to.

    Returns
    -------
    :class:`.CaseConfig`

    Raises
    ------
    :class:`MissingKey`
        If a required section or field is absent.
    :class:`ConfigValidationError`
        If a value has the wrong type or violates a bound.

    """
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as e:
        raise ConfigError(f'Cannot parse case document: {e}') from e
    if not isinstance(doc, dict):
        raise ConfigError('Case document must be a mapping')
    unknown = set(doc) - set(SECTIONS) - {'pump'}
    if unknown:
        raise ConfigValidationError(
            f'Unknown sections: {", ".join(sorted(unknown))}'
        )
    for name in REQUIRED:
        if name not in doc:
            raise MissingKey(f'Missing section: {name}')

    tank_doc = dict(doc['tank'] or {})
    if 'flush_tds_estimate' not in tank_doc and 'initial_tds' in tank_doc:
        tank_doc['flush_tds_estimate'] = tank_doc['initial_tds']

    pump_doc = dict(doc['pump'] or {})
    for key in PUMP_KEYS:
        if key not in pump_doc:
            raise MissingKey(f'Missing key: pump.{key}')
    limits = _build('pump', PumpLimits,
                    {k: v for k, v in pump_doc.items() if k not in PUMP_KEYS})
    pump = PumpSection(curve=str(pump_doc['curve']),
                       n_stages=_coerce(pump_doc['n_stages'], int,
                                        'pump.n_stages'),
                       limits=limits)

    case = CaseConfig(
        plant=_build('plant', PlantConfig, doc['plant']),
        tank=_build('tank', TankConfig, tank_doc),
        flush=_build('flush', FlushConfig, doc['flush']),
        pump=pump,
        grid=_build('grid', GridConfig, doc['grid']),
        time=_build('time', TimeGrid, doc.get('time'), required=False),
        series=_build('series', SeriesPaths, doc['series']),
        pwl=_build('pwl', PwlConfig, doc.get('pwl'), required=False),
        scenarios=_build('scenarios', ScenarioConfig, doc.get('scenarios'),
                         required=False),
        solver=_build('solver', SolverSettings, doc.get('solver'),
                      required=False),
        base_path=base_path
    )
    problems = validate(case)
    if problems:
        raise ConfigValidationError('; '.join(problems))
    return case


def validate(case: CaseConfig) -> List[str]:
    """Describe every bound the configuration violates."""
    plant, tank, flush = case.plant, case.tank, case.flush
    limits, grid = case.limits, case.grid
    checks: List[Tuple[bool, str]] = [
        (case.time.horizon_steps >= 1, 'time.horizon_steps must be >= 1'),
        (case.time.step_hours > 0, 'time.step_hours must be > 0'),
        (0 < plant.recovery_min <= plant.recovery_max < 1,
         f'plant.recovery_min={plant.recovery_min} and recovery_max='
         f'{plant.recovery_max} must satisfy 0 < min <= max < 1'),
        (plant.feed_pressure_min <= plant.feed_pressure_max,
         f'plant.feed_pressure_min={plant.feed_pressure_min} exceeds '
         f'feed_pressure_max={plant.feed_pressure_max}'),
        (0 < plant.feed_flow_min <= plant.feed_flow_max,
         f'plant.feed_flow_min={plant.feed_flow_min} must be in '
         f'(0, {plant.feed_flow_max}]'),
        (plant.permeate_tds_max >= 0, 'plant.permeate_tds_max must be >= 0'),
        (plant.outflow_tds_max > 0, 'plant.outflow_tds_max must be > 0'),
        (plant.seawater_tds <= plant.brine_tds_max,
         f'plant.seawater_tds={plant.seawater_tds} exceeds brine_tds_max='
         f'{plant.brine_tds_max}'),
        (0 < plant.friction_coeff <= 1,
         'plant.friction_coeff must be in (0, 1]'),
        (0 <= tank.min_level <= tank.initial_level <= tank.capacity,
         f'tank levels must satisfy 0 <= min_level ({tank.min_level}) <= '
         f'initial_level ({tank.initial_level}) <= capacity '
         f'({tank.capacity})'),
        (tank.initial_tds >= 0 and tank.flush_tds_estimate >= 0,
         'tank TDS values must be >= 0'),
        (min(flush.water_shutdown, flush.water_restart,
             flush.energy_shutdown, flush.energy_restart) >= 0,
         'flush quantities must be >= 0'),
        (flush.min_off_hours >= 1, 'flush.min_off_hours must be >= 1'),
        (case.pump.n_stages >= 1, 'pump.n_stages must be >= 1'),
        (0 < limits.speed_min < limits.speed_max,
         f'pump speeds must satisfy 0 < speed_min ({limits.speed_min}) < '
         f'speed_max ({limits.speed_max})'),
        (0 < limits.motor_eff <= 1 and 0 < limits.vfd_eff <= 1,
         'pump.motor_eff and pump.vfd_eff must be in (0, 1]'),
        (limits.flow_max_nominal > 0 and limits.power_max > 0,
         'pump.flow_max_nominal and pump.power_max must be > 0'),
        (limits.q_over_p >= 0, 'pump.q_over_p must be >= 0'),
        (0 < grid.v_min < grid.v_max,
         f'grid.v_min={grid.v_min} must be below v_max={grid.v_max}'),
        (grid.base_kv > 0 and grid.base_kva > 0,
         'grid bases must be > 0'),
        (grid.pv_rating >= 0 and grid.pv_forecast_eps >= 0,
         'grid.pv_rating and grid.pv_forecast_eps must be >= 0'),
        (case.series.sell_ratio >= 0, 'series.sell_ratio must be >= 0'),
        (min(case.pwl) > 0, 'pwl steps must be > 0'),
        (case.scenarios.count >= 1, 'scenarios.count must be >= 1'),
        (1 <= case.scenarios.reduced <= case.scenarios.count,
         f'scenarios.reduced={case.scenarios.reduced} must be in '
         f'[1, {case.scenarios.count}]'),
        (case.scenarios.pv_range >= 0 and case.scenarios.price_range >= 0,
         'scenario deviation ranges must be >= 0'),
        (-1 <= case.scenarios.rank_correlation <= 1,
         'scenarios.rank_correlation must be in [-1, 1]'),
        (0 <= case.scenarios.autocorrelation < 1,
         'scenarios.autocorrelation must be in [0, 1)'),
        (case.solver.mip_gap > 0, 'solver.mip_gap must be > 0'),
    ]
    return [message for ok, message in checks if not ok]


def dump_config(case: CaseConfig) -> str:
    """Serialize a configuration back to a case document."""
    pump: Dict[str, Any] = {'curve': case.pump.curve,
                            'n_stages': case.pump.n_stages}
    pump.update(case.limits._asdict())
    doc: Dict[str, Any] = {}
    for name in SECTIONS:
        doc[name] = dict(getattr(case, name)._asdict())
        if name == 'flush':
            doc['pump'] = pump
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def _hours(column: pd.Series) -> np.ndarray:
    """Hour stamps as numbers; timestamps are converted to hours."""
    numeric = pd.to_numeric(column, errors='coerce')
    if not numeric.isna().any():
        return numeric.to_numpy(dtype=float)
    try:
        stamps = [dateparser.isoparse(str(v)) for v in column]
    except ValueError as e:
        raise SeriesError(f'Bad time stamp: {e}') from e
    return np.array([(s - stamps[0]).total_seconds() / 3600.0
                     for s in stamps])


def load_timeseries(source: CsvSource, expected_len: int,
                    column: str = 'value') -> np.ndarray:
    """
    Load an ``hour,value`` series.

    The ``hour`` column may hold integers or ISO timestamps. Stamps must
    increase strictly and evenly, and the file must hold exactly
    ``expected_len`` rows.
    """
    label = source if isinstance(source, str) else 'series'
    frame = pd.read_csv(source, dtype=str, skipinitialspace=True)
    for required in ('hour', column):
        if required not in frame.columns:
            raise SeriesError(f'{label}: missing column {required}')
    values = pd.to_numeric(frame[column], errors='coerce')
    if values.isna().any():
        row = int(np.flatnonzero(values.isna().to_numpy())[0])
        raise SeriesError(f'{label}: non-numeric value '
                          f'{frame[column].iloc[row]!r} in row {row + 1}')
    hours = _hours(frame['hour'])
    steps = np.diff(hours)
    if np.any(steps <= 0):
        row = int(np.flatnonzero(steps <= 0)[0]) + 2
        raise SeriesError(f'{label}: hours not strictly increasing at '
                          f'row {row}')
    if len(steps) and not np.allclose(steps, steps[0]):
        raise SeriesError(f'{label}: uneven hour spacing (gap in series)')
    if len(values) != expected_len:
        raise SeriesError(f'{label}: expected {expected_len} rows, '
                          f'got {len(values)}')
    return values.to_numpy(dtype=float)


def _resolve(case: CaseConfig, path: str) -> str:
    return os.path.join(case.base_path, path)


@memoize()
def load_pump_points(path: str) -> Tuple[Tuple[float, float, float], ...]:
    """Nominal-speed ``flow_m3hr,head_kpa,power_kw`` samples."""
    frame = pd.read_csv(path)
    missing = {'flow_m3hr', 'head_kpa', 'power_kw'} - set(frame.columns)
    if missing:
        raise SeriesError(f'{path}: missing columns {sorted(missing)}')
    rows = frame[['flow_m3hr', 'head_kpa', 'power_kw']]
    if rows.isna().any().any():
        raise SeriesError(f'{path}: empty or non-numeric cells')
    return tuple(tuple(float(v) for v in row)
                 for row in rows.itertuples(index=False))


def load_network(path: str, grid: GridConfig) -> NetworkModel:
    """
    Load the feeder from ``from,to,r_ohm,x_ohm,s_max_kva`` rows.

    The topology is checked for radiality before it is returned.
    """
    frame = pd.read_csv(path)
    missing = {'from', 'to', 'r_ohm', 'x_ohm', 's_max_kva'} \
        - set(frame.columns)
    if missing:
        raise SeriesError(f'{path}: missing columns {sorted(missing)}')
    lines = tuple(
        make_line(int(row['from']), int(row['to']), float(row['r_ohm']),
                  float(row['x_ohm']), float(row['s_max_kva']),
                  grid.base_kv, grid.base_kva)
        for _, row in frame.iterrows()
    )
    nodes = tuple(sorted({line.from_node for line in lines}
                         | {line.to_node for line in lines}))
    net = NetworkModel(nodes=nodes, lines=lines,
                       substation=grid.substation_node,
                       hdp_node=grid.hdp_node, vsq_min=grid.v_min ** 2,
                       vsq_max=grid.v_max ** 2,
                       vsq_sub=grid.v_substation ** 2,
                       base_kva=grid.base_kva)
    if grid.hdp_node not in nodes:
        raise ConfigValidationError(f'grid.hdp_node {grid.hdp_node} is not '
                                    f'a node of {path}')
    build_tree(net)
    logger.debug('Loaded %i nodes and %i lines from %s', len(nodes),
                 len(lines), path)
    return net


def load_base_load(case: CaseConfig, net: NetworkModel) \
        -> Tuple[np.ndarray, np.ndarray]:
    """
    Hourly base load per node, kW and kvar, shape (T, nodes).

    ``series.base_load`` gives an ``hour,node,p_kw,q_kvar`` table.
    Without it, the peak loads are scaled by the load profile.
    """
    horizon = case.time.horizon_steps
    shape = (horizon, len(net.nodes))
    if case.series.base_load:
        path = _resolve(case, case.series.base_load)
        frame = pd.read_csv(path)
        p, q = np.zeros(shape), np.zeros(shape)
        hours = sorted(frame['hour'].unique())
        if len(hours) != horizon:
            raise SeriesError(f'{path}: expected {horizon} hours, '
                              f'got {len(hours)}')
        for _, row in frame.iterrows():
            t = hours.index(row['hour'])
            j = net.node_index(int(row['node']))
            p[t, j] += float(row['p_kw'])
            q[t, j] += float(row['q_kvar'])
        return p, q

    profile = load_timeseries(_resolve(case, case.grid.load_profile),
                              horizon)
    peak = pd.read_csv(_resolve(case, case.grid.peak_load))
    p_peak, q_peak = np.zeros(len(net.nodes)), np.zeros(len(net.nodes))
    for _, row in peak.iterrows():
        j = net.node_index(int(row['node']))
        p_peak[j] = float(row['p_kw'])
        q_peak[j] = float(row['q_kvar'])
    return np.outer(profile, p_peak), np.outer(profile, q_peak)


def load_series(case: CaseConfig, net: NetworkModel) -> MarketSeries:
    """Load prices, PV forecast, demand and base load for a case."""
    horizon = case.time.horizon_steps
    paths = case.series
    buy = load_timeseries(_resolve(case, paths.buy_price), horizon)
    if paths.sell_price:
        sell = load_timeseries(_resolve(case, paths.sell_price), horizon)
    else:
        sell = paths.sell_ratio * buy
    pv = load_timeseries(_resolve(case, paths.pv_forecast), horizon)
    demand = load_timeseries(_resolve(case, paths.water_demand), horizon)
    base_p, base_q = load_base_load(case, net)

    if np.any(buy < 0) or np.any(sell < 0):
        raise SeriesError('Prices must be non-negative')
    if np.any(sell > buy):
        t = int(np.flatnonzero(sell > buy)[0])
        raise SeriesError(f'Sell price exceeds buy price in hour {t + 1}')
    if np.any(demand < 0):
        raise SeriesError('Water demand must be non-negative')
    rating = case.grid.pv_rating * (1 + case.grid.pv_forecast_eps)
    if np.any(pv < 0) or np.any(pv > rating):
        raise SeriesError(f'PV forecast must lie in [0, {rating:g}] kW')
    return MarketSeries(buy_price=buy, sell_price=sell, pv_forecast=pv,
                        base_load_p=base_p, base_load_q=base_q,
                        water_demand=demand)


def load_case(path: str, series_overrides: Optional[Dict[str, str]] = None) \
        -> Case:
    """
    Load a complete case from a document on disk.

    ``series_overrides`` replaces entries of the ``series`` section with
    paths relative to the working directory.
    """
    with open(path) as f:
        cfg = load_config(f, base_path=os.path.dirname(os.path.abspath(path)))
    if series_overrides:
        cfg = cfg._replace(series=cfg.series._replace(**{
            key: os.path.abspath(value)
            for key, value in series_overrides.items()
        }))
    net = load_network(_resolve(cfg, cfg.grid.network), cfg.grid)
    series = load_series(cfg, net)
    points = load_pump_points(_resolve(cfg, cfg.pump.curve))
    curve = fit_pump_curves(points, cfg.pump.n_stages)
    logger.info('Loaded case %s: %i hours, %i feeder nodes', path,
                cfg.time.horizon_steps, len(net.nodes))
    return Case(config=cfg, series=series, network=net, curve=curve)


def input_paths(case: Case) -> Dict[str, str]:
    """Every file a case was loaded from, by role."""
    cfg = case.config
    found = {
        'pump_curve': _resolve(cfg, cfg.pump.curve),
        'network': _resolve(cfg, cfg.grid.network),
    }
    for key in ('buy_price', 'pv_forecast', 'water_demand', 'sell_price',
                'base_load'):
        value = getattr(cfg.series, key)
        if value:
            found[key] = _resolve(cfg, value)
    if not cfg.series.base_load:
        found['peak_load'] = _resolve(cfg, cfg.grid.peak_load)
        found['load_profile'] = _resolve(cfg, cfg.grid.load_profile)
    return found


def truncate(case: Case, hours: int) -> Case:
    """Keep the first ``hours`` hours of a case."""
    if not 1 <= hours <= case.config.time.horizon_steps:
        raise TruncationError(f'Cannot truncate to {hours} hours')
    s = case.series
    series = MarketSeries(
        buy_price=s.buy_price[:hours], sell_price=s.sell_price[:hours],
        pv_forecast=s.pv_forecast[:hours], base_load_p=s.base_load_p[:hours],
        base_load_q=s.base_load_q[:hours],
        water_demand=s.water_demand[:hours]
    )
    cfg = case.config._replace(
        time=case.config.time._replace(horizon_steps=hours)
    )
    return case._replace(config=cfg, series=series)


def scale_demand(case: Case, daily_total: float) -> Case:
    """Rescale the demand profile to a new total over the horizon."""
    demand = case.series.water_demand
    total = float(np.sum(demand) * case.config.time.step_hours)
    factor = daily_total / total if total > 0 else 0.0
    return case._replace(series=case.series._replace(
        water_demand=demand * factor
    ))
