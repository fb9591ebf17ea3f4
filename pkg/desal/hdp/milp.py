"""
Day-ahead scheduling MILP for the desalination plant and its feeder.

The plant uses the simplified RO relations. Every nonlinear relation is
replaced by a triangular PWL block, so the model is linear apart from its
binaries. Each hour carries three blocks:

- ``pump``: feed head and shaft power over (F^fd, ω);
- ``ro``: brine TDS and concentrate-side TDS over (F^fd, F^br);
- ``tank``: stored salt mass over (W^tk, TDS headroom), in mixing modes.

PV dispatch, the HDP grid exchange and LinDistFlow are indexed by scenario.
Plant and commitment variables are shared by all scenarios.
"""

from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pyomo.environ as pyo
from arxiv.base import logging

from . import pwl
from .commitment import derive_indicators, flush_consumption
from .domain import Case, CommitmentPlan, FlexibilityMode, FopSet, \
    Scenario, Schedule
from .grid import SQRT2, line_children
from .pump import eval_head, eval_power
from .services.solver import SolverInterface

logger = logging.getLogger(__name__)

HANDLES: Dict[str, str] = {
    'U^on': 'on',
    'U^shut': 'shut',
    'U^start': 'start',
    'ω': 'speed',
    'F^fd': 'feed_flow',
    'F^pe': 'permeate_flow',
    'F^br': 'brine_flow',
    'S^br': 'brine_tds',
    'S^ro': 'conc_tds',
    'M^Spe': 'salt_rate',
    'H^fd': 'feed_head',
    'P^hpp': 'pump_power',
    'W^tk': 'volume',
    'S^tk': 'tds',
    'M^Stk': 'salt',
    'P^pv': 'pv_p',
    'Q^pv': 'pv_q',
    'P^hdp+': 'buy',
    'P^hdp-': 'sell',
}
"""Model component for each plant and grid quantity."""

BLOCK_TOLERANCE = 1e-5
"""Weight below which a PWL vertex counts as unused."""


class InfeasibleCase(Exception):
    """The case is infeasible before any solve."""


class ExtractionError(Exception):
    """A solution cannot be read back into a schedule."""


class PlantSurfaces(NamedTuple):
    """Tabulated plant relations for the PWL blocks."""

    pump_head: pwl.PwlSurface
    pump_power: pwl.PwlSurface
    brine_tds: pwl.PwlSurface
    conc_tds: pwl.PwlSurface
    tank_salt: pwl.PwlSurface
    """Salt mass over (volume, S^out_max − TDS)."""


class MilpModel(NamedTuple):
    """A built scheduling model and what it was built from."""

    model: pyo.ConcreteModel
    case: Case
    mode: FlexibilityMode
    scenarios: List[Scenario]
    kind: str = 'pwl'
    """``pwl`` for the linearized plant, ``fop`` for point selection."""
    fops: Optional[FopSet] = None
    fixed_commitment: Optional[CommitmentPlan] = None

    def component(self, symbol: str) -> pyo.Component:
        """Look up a model component by its symbol, e.g. ``F^fd``."""
        try:
            return getattr(self.model, HANDLES[symbol])
        except (KeyError, AttributeError) as e:
            raise ExtractionError(f'No component for {symbol}') from e

    def counts(self) -> Dict[str, int]:
        binaries = sum(1 for v in self.model.component_data_objects(pyo.Var)
                       if v.is_binary())
        return {'variables': self.model.nvariables(), 'binaries': binaries,
                'constraints': self.model.nconstraints()}


def _speed_window(case: Case, flows: np.ndarray) -> tuple:
    """Speeds at which some feed flow reaches the feed-pressure window."""
    curve, plant = case.curve, case.config.plant
    limits = case.config.limits
    n = curve.n_stages
    samples = np.linspace(flows[0], flows[-1], 201)

    def speed_for(head: float) -> np.ndarray:
        b = curve.a1 * samples
        c = curve.a2 * samples ** 2 - head / n
        return (-b + np.sqrt(b ** 2 - 4 * curve.a0 * c)) / (2 * curve.a0)

    lo = float(np.min(speed_for(plant.feed_pressure_min)))
    hi = float(np.max(speed_for(plant.feed_pressure_max)))
    step = case.config.pwl.speed_step
    lo = limits.speed_min \
        + np.floor((lo - limits.speed_min) / step + 1e-9) * step
    hi = limits.speed_min \
        + np.ceil((hi - limits.speed_min) / step - 1e-9) * step
    return (max(limits.speed_min, lo), min(limits.speed_max, hi))


def default_surfaces(case: Case) -> PlantSurfaces:
    """
    Tabulate the plant relations on the configured breakpoint spacing.

    Speed breakpoints only cover speeds at which the pump can reach the
    feed-pressure window somewhere in the flow range.
    """
    cfg = case.config
    plant, limits, steps = cfg.plant, cfg.limits, cfg.pwl
    curve = case.curve
    flow_hi = min(plant.feed_flow_max,
                  limits.flow_max_nominal * limits.speed_max)
    flows = pwl.breakpoints(plant.feed_flow_min, flow_hi, steps.flow_step)
    speed_lo, speed_hi = _speed_window(case, flows)
    if speed_hi <= speed_lo:
        raise InfeasibleCase('The pump cannot reach the feed-pressure '
                             'window at any allowed speed')
    speeds = pwl.breakpoints(speed_lo, speed_hi, steps.speed_step)
    brines = pwl.breakpoints(plant.feed_flow_min * (1 - plant.recovery_max),
                             plant.feed_flow_max * (1 - plant.recovery_min),
                             steps.brine_step)
    volumes = pwl.breakpoints(cfg.tank.min_level, cfg.tank.capacity,
                              steps.volume_step)
    cap = plant.outflow_tds_max
    headroom = pwl.breakpoints(0.0, cap, steps.tds_step)
    s_fd = plant.seawater_tds

    surfaces = PlantSurfaces(
        pump_head=pwl.tabulate(lambda f, w: eval_head(curve, f, w),
                               flows, speeds, 'pump head'),
        pump_power=pwl.tabulate(lambda f, w: eval_power(curve, f, w),
                                flows, speeds, 'pump power'),
        brine_tds=pwl.tabulate(lambda f, b: s_fd * f / b, flows, brines,
                               'brine TDS'),
        conc_tds=pwl.tabulate(lambda f, b: 2 * s_fd * f / (f + b),
                              flows, brines, 'concentrate TDS'),
        # Over headroom the triangulation underestimates the product.
        tank_salt=pwl.tabulate(lambda w, h: w * (cap - h), volumes,
                               headroom, 'tank salt'),
    )
    logger.info('PWL breakpoints: pump %ix%i, RO %ix%i, tank %ix%i',
                len(flows), len(speeds), len(flows), len(brines),
                len(volumes), len(headroom))
    return surfaces


def forecast_scenario(case: Case) -> Scenario:
    s = case.series
    return Scenario(pv=s.pv_forecast, buy_price=s.buy_price,
                    sell_price=s.sell_price, probability=1.0, index=0)


def check_case(case: Case) -> None:
    """
    Reject cases whose demand cannot be met whatever the schedule.

    Raises
    ------
    :class:`InfeasibleCase`

    """
    cfg = case.config
    dt = cfg.time.step_hours
    demand = float(np.sum(case.series.water_demand) * dt)
    # The end-volume closure leaves the tank no net contribution.
    most = cfg.plant.permeate_flow_max * cfg.time.horizon_steps * dt
    if demand > most:
        raise InfeasibleCase(f'Demand {demand:.6g} m³ exceeds the most the '
                             f'plant can produce ({most:.6g} m³)')


def _base_model(case: Case, scenarios: Sequence[Scenario]) \
        -> pyo.ConcreteModel:
    cfg = case.config
    model = pyo.ConcreteModel(name='hdp')
    model.T = pyo.RangeSet(0, cfg.time.horizon_steps - 1)
    model.S = pyo.RangeSet(0, len(scenarios) - 1)
    model.hour = pyo.Block(model.T)
    return model


def _add_commitment(model: pyo.ConcreteModel, case: Case,
                    fixed: Optional[CommitmentPlan]) -> None:
    cfg = case.config
    flush = cfg.flush
    horizon = cfg.time.horizon_steps
    model.on = pyo.Var(model.T, within=pyo.Binary)
    model.shut = pyo.Var(model.T, within=pyo.Binary)
    model.start = pyo.Var(model.T, within=pyo.Binary)

    if fixed is not None:
        if len(fixed.on) != horizon:
            raise InfeasibleCase(f'Commitment covers {len(fixed.on)} hours, '
                                 f'horizon is {horizon}')
        for t in model.T:
            model.on[t].fix(fixed.on[t])
            model.shut[t].fix(fixed.shut[t])
            model.start[t].fix(fixed.start[t])
        water, energy = flush_consumption(fixed, flush, cfg.time)
        model.flush_water = pyo.Param(
            model.T, initialize=lambda m, t: float(water[t]))
        model.flush_energy = pyo.Param(
            model.T, initialize=lambda m, t: float(energy[t]))
        return

    def previous(m, t):
        return m.on[t - 1] if t > 0 else int(flush.initial_on)

    model.transition = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.start[t] - m.shut[t] == m.on[t] - previous(m, t))
    model.start_on = pyo.Constraint(
        model.T, rule=lambda m, t: m.start[t] <= m.on[t])
    model.shut_off = pyo.Constraint(
        model.T, rule=lambda m, t: m.shut[t] <= 1 - m.on[t])

    model.min_off = pyo.ConstraintList()
    for t in model.T:
        for k in range(1, flush.min_off_hours):
            if t + k < horizon:
                model.min_off.add(model.on[t + k] <= 1 - model.shut[t])

    def _restart_next(m, t):
        return m.start[t + 1] if t + 1 < horizon else 0
    model.flush_water = pyo.Expression(
        model.T, rule=lambda m, t: flush.water_shutdown * m.shut[t]
        + flush.water_restart * _restart_next(m, t))
    model.flush_energy = pyo.Expression(
        model.T, rule=lambda m, t: flush.energy_shutdown * m.shut[t]
        + flush.energy_restart * _restart_next(m, t))


def _add_plant_variables(model: pyo.ConcreteModel, case: Case) -> None:
    cfg = case.config
    plant, limits = cfg.plant, cfg.limits
    model.feed_flow = pyo.Var(model.T, bounds=(0, plant.feed_flow_max))
    model.speed = pyo.Var(model.T, bounds=(0, limits.speed_max))
    model.feed_head = pyo.Var(model.T, bounds=(0, plant.feed_pressure_max))
    model.pump_power = pyo.Var(model.T, bounds=(0, limits.power_max))
    model.permeate_flow = pyo.Var(model.T,
                                  bounds=(0, plant.permeate_flow_max))
    model.brine_flow = pyo.Var(model.T, bounds=(0, plant.feed_flow_max))
    model.brine_tds = pyo.Var(model.T, bounds=(0, plant.brine_tds_max))
    model.salt_rate = pyo.Var(model.T, within=pyo.NonNegativeReals)

    efficiency = limits.motor_eff * limits.vfd_eff
    model.hps_power = pyo.Expression(
        model.T, rule=lambda m, t: m.pump_power[t] / efficiency)
    model.hps_reactive = pyo.Expression(
        model.T, rule=lambda m, t: limits.q_over_p * m.hps_power[t])


def _add_plant_pwl(model: pyo.ConcreteModel, case: Case,
                   mode: FlexibilityMode, surfaces: PlantSurfaces) -> None:
    cfg = case.config
    plant, limits = cfg.plant, cfg.limits
    cap = mode.permeate_cap(plant)
    model.conc_tds = pyo.Var(model.T, within=pyo.NonNegativeReals)

    for t in model.T:
        hour, on = model.hour[t], model.on[t]
        pump = pwl.emit_milp_block((surfaces.pump_head, surfaces.pump_power),
                                   on, hour, 'pump')
        ro = pwl.emit_milp_block((surfaces.brine_tds, surfaces.conc_tds),
                                 on, hour, 'ro')
        hour.links = pyo.ConstraintList()
        for lhs, rhs in ((model.feed_flow[t], pump.x),
                         (model.speed[t], pump.y),
                         (model.feed_head[t], pump.z[0]),
                         (model.pump_power[t], pump.z[1]),
                         (model.feed_flow[t], ro.x),
                         (model.brine_flow[t], ro.y),
                         (model.brine_tds[t], ro.z[0]),
                         (model.conc_tds[t], ro.z[1])):
            hour.links.add(lhs == rhs)

    u = model.on
    model.water_balance = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.feed_flow[t] == m.permeate_flow[t] + m.brine_flow[t])
    model.head_min = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.feed_head[t] >= plant.feed_pressure_min * u[t])
    model.head_max = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.feed_head[t] <= plant.feed_pressure_max * u[t])
    model.power_max = pyo.Constraint(
        model.T, rule=lambda m, t: m.pump_power[t] <= limits.power_max * u[t])
    model.pump_flow_max = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.feed_flow[t] <= limits.flow_max_nominal * m.speed[t])
    model.speed_min = pyo.Constraint(
        model.T, rule=lambda m, t: m.speed[t] >= limits.speed_min * u[t])
    model.speed_max = pyo.Constraint(
        model.T, rule=lambda m, t: m.speed[t] <= limits.speed_max * u[t])

    model.dp_membrane = pyo.Expression(
        model.T, rule=lambda m, t:
        (1 + plant.friction_coeff) / 2 * m.feed_head[t]
        - plant.permeate_pressure_set * u[t])
    k_osm = plant.cp_factor * plant.osmotic_coeff
    model.dosmotic = pyo.Expression(
        model.T, rule=lambda m, t:
        k_osm * (plant.seawater_tds * u[t] + m.brine_tds[t]) / 2)
    model.permeate_production = pyo.Constraint(
        model.T, rule=lambda m, t: m.permeate_flow[t]
        == plant.water_perm_coeff * (m.dp_membrane[t] - m.dosmotic[t]))
    model.salt_transport = pyo.Constraint(
        model.T, rule=lambda m, t: m.salt_rate[t]
        == plant.salt_perm_coeff * m.conc_tds[t])

    model.brine_tds_min = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.brine_tds[t] >= plant.seawater_tds * u[t])
    model.brine_tds_max = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.brine_tds[t] <= plant.brine_tds_max * u[t])
    model.recovery_min = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.permeate_flow[t] >= plant.recovery_min * m.feed_flow[t])
    model.recovery_max = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.permeate_flow[t] <= plant.recovery_max * m.feed_flow[t])
    model.feed_min = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.feed_flow[t] >= plant.feed_flow_min * u[t])
    model.feed_max = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.feed_flow[t] <= plant.feed_flow_max * u[t])
    model.permeate_quality = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.salt_rate[t] <= cap * m.permeate_flow[t])
    model.permeate_quality_off = pyo.Constraint(
        model.T, rule=lambda m, t:
        m.salt_rate[t] <= cap * plant.permeate_flow_max * u[t])


def _add_plant_fop(model: pyo.ConcreteModel, case: Case,
                   mode: FlexibilityMode, fops: FopSet) -> FopSet:
    cap = mode.permeate_cap(case.config.plant)
    points = [p for p in fops.points if p.permeate_tds <= cap + 1e-12]
    if not points:
        raise InfeasibleCase(f'No operating point meets the permeate TDS '
                             f'cap {cap:g}')
    model.P = pyo.RangeSet(0, len(points) - 1)
    model.select = pyo.Var(model.T, model.P, within=pyo.Binary)
    model.one_point = pyo.Constraint(
        model.T, rule=lambda m, t:
        sum(m.select[t, p] for p in m.P) == m.on[t])

    def _tie(name: str, field: str) -> None:
        values = [getattr(p, field) for p in points]
        model.add_component(f'{name}_selected', pyo.Constraint(
            model.T, rule=lambda m, t: getattr(m, name)[t]
            == sum(values[p] * m.select[t, p] for p in m.P)))

    for name, field in (('feed_flow', 'flow'), ('speed', 'speed'),
                        ('feed_head', 'head'), ('pump_power', 'power'),
                        ('permeate_flow', 'permeate_flow'),
                        ('brine_flow', 'brine_flow'),
                        ('brine_tds', 'brine_tds'),
                        ('salt_rate', 'permeate_salt_rate')):
        _tie(name, field)
    return fops._replace(points=points)


def _add_tank(model: pyo.ConcreteModel, case: Case, mode: FlexibilityMode,
              surfaces: Optional[PlantSurfaces]) -> None:
    cfg = case.config
    tank, plant = cfg.tank, cfg.plant
    dt = cfg.time.step_hours
    demand = case.series.water_demand
    last = cfg.time.horizon_steps - 1

    model.volume = pyo.Var(model.T, bounds=(tank.min_level, tank.capacity))
    model.tank_water = pyo.Constraint(
        model.T, rule=lambda m, t: m.volume[t]
        == (m.volume[t - 1] if t > 0 else tank.initial_level)
        + m.permeate_flow[t] * dt - float(demand[t]) * dt
        - m.flush_water[t])
    model.end_volume = pyo.Constraint(
        expr=model.volume[last] >= tank.initial_level)
    if not mode.tank_mixing:
        return
    if surfaces is None:
        surfaces = default_surfaces(case)

    cap = plant.outflow_tds_max
    model.tds = pyo.Var(model.T, bounds=(0, cap))
    model.salt = pyo.Var(model.T, bounds=(0, tank.capacity * cap))
    for t in model.T:
        hour = model.hour[t]
        mix = pwl.emit_milp_block(surfaces.tank_salt, 1, hour, 'tank')
        hour.tank_links = pyo.ConstraintList()
        hour.tank_links.add(model.volume[t] == mix.x)
        hour.tank_links.add(model.tds[t] == cap - mix.y)
        hour.tank_links.add(model.salt[t] == mix.z[0])

    def _prev_tds(m, t):
        return m.tds[t - 1] if t > 0 else tank.initial_tds

    model.outflow_tds = pyo.Expression(
        model.T, rule=lambda m, t: (m.tds[t] + _prev_tds(m, t)) / 2)
    model.outflow_quality = pyo.Constraint(
        model.T, rule=lambda m, t: m.outflow_tds[t] <= cap)
    model.tank_salt = pyo.Constraint(
        model.T, rule=lambda m, t: m.salt[t]
        == (m.salt[t - 1] if t > 0 else tank.initial_salt)
        + m.salt_rate[t] * dt - float(demand[t]) * dt * m.outflow_tds[t]
        - tank.flush_tds_estimate * m.flush_water[t])
    if mode.end_tds_closure:
        model.end_tds = pyo.Constraint(
            expr=model.tds[last] <= tank.initial_tds)


def _add_grid(model: pyo.ConcreteModel, case: Case,
              scenarios: Sequence[Scenario]) -> None:
    cfg = case.config
    net = case.network
    rating = cfg.grid.pv_rating
    dt = cfg.time.step_hours
    base = net.base_kva
    base_p, base_q = case.series.base_load_p, case.series.base_load_q
    hdp = net.hdp_node
    children = line_children(net)
    parents = [line.to_node if child == line.from_node else line.from_node
               for line, child in zip(net.lines, children)]
    outgoing: Dict[int, List[int]] = {node: [] for node in net.nodes}
    for k, parent in enumerate(parents):
        outgoing[parent].append(k)

    model.L = pyo.RangeSet(0, len(net.lines) - 1)
    model.Nodes = pyo.Set(initialize=net.nodes, ordered=True)
    model.pv_p = pyo.Var(model.S, model.T, within=pyo.NonNegativeReals)
    model.pv_q = pyo.Var(model.S, model.T, bounds=(0, rating))
    model.buy = pyo.Var(model.S, model.T, within=pyo.NonNegativeReals)
    model.sell = pyo.Var(model.S, model.T, bounds=(0, rating))
    for s, scenario in enumerate(scenarios):
        for t in model.T:
            model.pv_p[s, t].setub(float(scenario.pv[t]))

    model.pv_octagon_lo = pyo.Constraint(
        model.S, model.T, rule=lambda m, s, t:
        m.pv_q[s, t] >= m.pv_p[s, t] - SQRT2 * rating)
    model.pv_octagon_hi = pyo.Constraint(
        model.S, model.T, rule=lambda m, s, t:
        m.pv_q[s, t] <= -m.pv_p[s, t] + SQRT2 * rating)
    model.hdp_p = pyo.Expression(
        model.S, model.T, rule=lambda m, s, t:
        m.hps_power[t] - m.pv_p[s, t] + m.flush_energy[t] / dt)
    model.hdp_q = pyo.Expression(
        model.S, model.T, rule=lambda m, s, t:
        m.hps_reactive[t] - m.pv_q[s, t])
    model.exchange = pyo.Constraint(
        model.S, model.T, rule=lambda m, s, t:
        m.hdp_p[s, t] == m.buy[s, t] - m.sell[s, t])

    model.p_line = pyo.Var(model.S, model.T, model.L)
    model.q_line = pyo.Var(model.S, model.T, model.L)
    model.vsq = pyo.Var(model.S, model.T, model.Nodes,
                        bounds=(net.vsq_min, net.vsq_max))

    def _load(m, s, t, node, reactive):
        j = net.node_index(node)
        value = float((base_q if reactive else base_p)[t, j]) / base
        if node == hdp:
            value = value + (m.hdp_q[s, t] if reactive
                             else m.hdp_p[s, t]) / base
        return value

    def _balance(m, s, t, k, reactive):
        node = children[k]
        flows = m.q_line if reactive else m.p_line
        return flows[s, t, k] == _load(m, s, t, node, reactive) \
            + sum(flows[s, t, kk] for kk in outgoing[node])

    model.p_balance = pyo.Constraint(
        model.S, model.T, model.L,
        rule=lambda m, s, t, k: _balance(m, s, t, k, False))
    model.q_balance = pyo.Constraint(
        model.S, model.T, model.L,
        rule=lambda m, s, t, k: _balance(m, s, t, k, True))

    def _drop(m, s, t, k):
        line = net.lines[k]
        upstream = parents[k]
        return m.vsq[s, t, children[k]] == m.vsq[s, t, upstream] \
            - 2 * (line.r * m.p_line[s, t, k] + line.x * m.q_line[s, t, k])
    model.voltage_drop = pyo.Constraint(model.S, model.T, model.L,
                                        rule=_drop)
    for s in model.S:
        for t in model.T:
            model.vsq[s, t, net.substation].fix(net.vsq_sub)

    model.line_octagon = pyo.ConstraintList()
    for s in model.S:
        for t in model.T:
            for k in model.L:
                s_max = net.lines[k].s_max
                p, q = model.p_line[s, t, k], model.q_line[s, t, k]
                for expr, bound in ((p, s_max), (q, s_max),
                                    (p + q, SQRT2 * s_max),
                                    (p - q, SQRT2 * s_max)):
                    model.line_octagon.add(pyo.inequality(-bound, expr,
                                                          bound))


def _add_objective(model: pyo.ConcreteModel, case: Case,
                   scenarios: Sequence[Scenario]) -> None:
    dt = case.config.time.step_hours
    model.scenario_cost = pyo.Expression(
        model.S, rule=lambda m, s: sum(
            (float(scenarios[s].buy_price[t]) * m.buy[s, t]
             - float(scenarios[s].sell_price[t]) * m.sell[s, t]) * dt
            for t in m.T))
    model.cost = pyo.Objective(
        expr=sum(scenarios[s].probability * model.scenario_cost[s]
                 for s in model.S),
        sense=pyo.minimize)


def _scenarios(case: Case, scenarios: Optional[Sequence[Scenario]]) \
        -> List[Scenario]:
    found = list(scenarios) if scenarios else [forecast_scenario(case)]
    total = sum(s.probability for s in found)
    if abs(total - 1.0) > 1e-9:
        raise InfeasibleCase(f'Scenario probabilities sum to {total:.12g}')
    horizon = case.config.time.horizon_steps
    for s in found:
        if len(s.pv) != horizon or len(s.buy_price) != horizon:
            raise InfeasibleCase(f'Scenario {s.index} does not cover '
                                 f'{horizon} hours')
    return found


def build(case: Case, mode: FlexibilityMode,
          surfaces: Optional[PlantSurfaces] = None,
          scenarios: Optional[Sequence[Scenario]] = None,
          commitment: Optional[CommitmentPlan] = None) -> MilpModel:
    """
    Build the linearized scheduling model.

    Parameters
    ----------
    case : :class:`.Case`
    mode : :class:`.FlexibilityMode`
        Selects tank mixing, the end-TDS closure and the permeate cap.
    surfaces : :class:`PlantSurfaces`
        Defaults to :func:`default_surfaces`.
    scenarios : sequence of :class:`.Scenario`
        PV and price trajectories with probabilities. Defaults to the
        forecast with probability 1.
    commitment : :class:`.CommitmentPlan`
        Fixes on/off status. Flushing then enters as constants and the
        indicator and minimum-off constraints are left out.

    Raises
    ------
    :class:`InfeasibleCase`
        If demand exceeds what the plant and tank can deliver.

    """
    check_case(case)
    found = _scenarios(case, scenarios)
    if surfaces is None:
        surfaces = default_surfaces(case)
    model = _base_model(case, found)
    _add_commitment(model, case, commitment)
    _add_plant_variables(model, case)
    _add_plant_pwl(model, case, mode, surfaces)
    _add_tank(model, case, mode, surfaces)
    _add_grid(model, case, found)
    _add_objective(model, case, found)
    milp = MilpModel(model=model, case=case, mode=mode, scenarios=found,
                     fixed_commitment=commitment)
    logger.info('Built %s model: %s', mode.value, milp.counts())
    return milp


def build_fop(case: Case, mode: FlexibilityMode, fops: FopSet,
              scenarios: Optional[Sequence[Scenario]] = None,
              commitment: Optional[CommitmentPlan] = None) -> MilpModel:
    """
    Build the point-selection model over enumerated operating points.

    Each on hour selects exactly one point; plant quantities are the
    selected point's values. Tank, grid and commitment parts are the same
    as in :func:`build`.
    """
    check_case(case)
    found = _scenarios(case, scenarios)
    model = _base_model(case, found)
    _add_commitment(model, case, commitment)
    _add_plant_variables(model, case)
    kept = _add_plant_fop(model, case, mode, fops)
    _add_tank(model, case, mode, None)
    _add_grid(model, case, found)
    _add_objective(model, case, found)
    milp = MilpModel(model=model, case=case, mode=mode, scenarios=found,
                     kind='fop', fops=kept, fixed_commitment=commitment)
    logger.info('Built %s FOP model over %i points: %s', mode.value,
                len(kept.points), milp.counts())
    return milp


def _values(var: pyo.Var, horizon: int) -> np.ndarray:
    return np.array([var[t].value or 0.0 for t in range(horizon)])


def _scenario_values(var: pyo.Var, scenarios: int, horizon: int) \
        -> np.ndarray:
    return np.array([[var[s, t].value or 0.0 for t in range(horizon)]
                     for s in range(scenarios)])


def check_blocks(milp: MilpModel) -> List[str]:
    """Convex-combination problems in the solved PWL blocks."""
    problems = []
    for t in milp.model.T:
        hour = milp.model.hour[t]
        on = float(round(milp.model.on[t].value or 0.0))
        for name, expected in (('pump', on), ('ro', on), ('tank', 1.0)):
            blk = hour.component(name)
            if blk is None:
                continue
            problem = pwl.check_block_solution(blk, expected,
                                               BLOCK_TOLERANCE)
            if problem:
                problems.append(problem)
    return problems


def extract_schedule(milp: MilpModel, scenario: Optional[int] = None,
                     status: str = 'optimal',
                     gap: Optional[float] = None) -> Schedule:
    """
    Read a solved model back into a :class:`.Schedule`.

    ``scenario`` picks the grid trajectories of one scenario. ``None``
    gives probability-weighted grid trajectories and the expected cost,
    which is the only choice for models with several scenarios that are
    read as a whole.

    Raises
    ------
    :class:`ExtractionError`
        If a variable has no value or a PWL block is not a valid convex
        combination on one triangle.

    """
    model = milp.model
    cfg = milp.case.config
    horizon = cfg.time.horizon_steps
    dt = cfg.time.step_hours
    if model.on[0].value is None:
        raise ExtractionError('Model has no solution loaded')
    if milp.kind == 'pwl':
        problems = check_blocks(milp)
        if problems:
            raise ExtractionError('; '.join(problems))

    on = np.round(_values(model.on, horizon)).astype(int)
    plan = derive_indicators(on, cfg.flush.initial_on)

    def plant(name: str) -> np.ndarray:
        return np.where(on == 1, _values(getattr(model, name), horizon), 0.0)

    if milp.fixed_commitment is not None:
        flush_water = np.array([pyo.value(model.flush_water[t])
                                for t in range(horizon)])
        flush_energy = np.array([pyo.value(model.flush_energy[t])
                                 for t in range(horizon)])
    else:
        flush_water, flush_energy = flush_consumption(plan, cfg.flush,
                                                      cfg.time)
    pump_power = plant('pump_power')
    limits = cfg.limits
    hps = pump_power / (limits.motor_eff * limits.vfd_eff)

    n = len(milp.scenarios)
    weights = np.array([s.probability for s in milp.scenarios])
    grids = {name: _scenario_values(getattr(model, name), n, horizon)
             for name in ('pv_p', 'pv_q', 'buy', 'sell')}
    if scenario is None:
        picked = {name: weights @ values for name, values in grids.items()}
        cost = float(pyo.value(model.cost))
    else:
        if not 0 <= scenario < n:
            raise ExtractionError(f'No scenario {scenario}')
        picked = {name: values[scenario] for name, values in grids.items()}
        cost = float(pyo.value(model.scenario_cost[scenario]))
    index = milp.scenarios[scenario].index if scenario is not None \
        else None

    tank_tds = outflow_tds = None
    if milp.mode.tank_mixing:
        tank_tds = _values(model.tds, horizon)
        outflow_tds = np.array([pyo.value(model.outflow_tds[t])
                                for t in range(horizon)])
    return Schedule(
        mode=milp.mode, on=on, shut=np.array(plan.shut),
        start=np.array(plan.start), speed=plant('speed'),
        feed_flow=plant('feed_flow'), permeate_flow=plant('permeate_flow'),
        brine_flow=plant('brine_flow'), brine_tds=plant('brine_tds'),
        permeate_salt_rate=plant('salt_rate'), feed_head=plant('feed_head'),
        pump_power=pump_power, hps_power=hps, flush_water=flush_water,
        flush_energy=flush_energy, tank_volume=_values(model.volume, horizon),
        tank_tds=tank_tds, outflow_tds=outflow_tds,
        pv_power=picked['pv_p'], pv_reactive=picked['pv_q'],
        hdp_power=hps - picked['pv_p'] + flush_energy / dt,
        grid_buy=picked['buy'], grid_sell=picked['sell'], cost=cost,
        status=status, gap=gap, scenario=index
    )


def solve(milp: MilpModel, solver: Optional[SolverInterface] = None,
          scenario: Optional[int] = None) -> Schedule:
    """
    Solve a built model and extract its schedule.

    Raises
    ------
    :class:`.NoIncumbent`
        If the model is infeasible or no solution was found in time.

    """
    solver = solver or SolverInterface()
    result = solver.solve(milp.model)
    if scenario is None and len(milp.scenarios) == 1:
        scenario = 0
    return extract_schedule(milp, scenario, result.status, result.gap)


def relaxation_bound(milp: MilpModel,
                     solver: Optional[SolverInterface] = None) -> float:
    """Optimal cost of the continuous relaxation of a built model."""
    solver = solver or SolverInterface()
    relaxed = milp.model.clone()
    pyo.TransformationFactory('core.relax_integer_vars').apply_to(relaxed)
    return solver.solve(relaxed).objective


def dump_lp(milp: MilpModel, path: str) -> str:
    """Write the model in LP format with readable names."""
    milp.model.write(path, io_options={'symbolic_solver_labels': True})
    logger.info('Wrote LP model to %s', path)
    return path
