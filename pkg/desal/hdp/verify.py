"""
Execute schedules through the full plant model.

The scheduled feed flow and pump speed of every on hour are the controls.
Flows, pressures, TDS values and power are re-derived from them with the
full RO model. The tank and feeder are re-simulated with those values.
"""

from typing import Dict, List, Optional, Sequence

import numpy as np
from arxiv.base import logging

from . import tank as tank_model
from .commitment import check_min_off, derive_indicators, flush_consumption
from .domain import Case, ErrorMap, PumpPoint, ROState, Scenario, Schedule, \
    TankState, VerifiedReport, Violation
from .grid import check_network_limits, lindistflow_solve, nodal_load, \
    pv_check
from .pump import check_operating_point, hps_power, operating_point
from .ro import ConvergenceError, InfeasibleOperatingPoint, \
    check_ro_bounds, full_solve, simplified_solve

logger = logging.getLogger(__name__)


class HorizonMismatch(ValueError):
    """A schedule and a case cover different horizons."""


def _plant_state(sched: Schedule, case: Case, t: int,
                 found: List[Violation]) -> ROState:
    cfg = case.config
    flow, speed = float(sched.feed_flow[t]), float(sched.speed[t])
    try:
        return full_solve(flow, speed, case.curve, cfg.plant)
    except (ConvergenceError, InfeasibleOperatingPoint) as e:
        logger.warning('Hour %i: full model failed (%s); using the '
                       'simplified model', t + 1, e)
        found.append(Violation(t, 'full model', flow, 0.0, 'eq'))
    try:
        return simplified_solve(flow, None, speed, case.curve, cfg.plant)
    except (InfeasibleOperatingPoint, ValueError):
        found.append(Violation(t, 'plant operating point', flow, 0.0, 'eq'))
        return ROState()


def verify(sched: Schedule, case: Case,
           scenario: Optional[Scenario] = None) -> VerifiedReport:
    """
    Verify a schedule against the full plant, tank and feeder models.

    Parameters
    ----------
    sched : :class:`.Schedule`
    case : :class:`.Case`
    scenario : :class:`.Scenario`
        PV forecast and prices to verify against. Defaults to the case
        forecast.

    Returns
    -------
    :class:`.VerifiedReport`
        Bound and logic failures are listed as violations; nothing here
        raises for an infeasible trajectory.

    """
    cfg = case.config
    plant, limits, dt = cfg.plant, cfg.limits, cfg.time.step_hours
    horizon = cfg.time.horizon_steps
    if sched.horizon != horizon:
        raise HorizonMismatch(f'Schedule covers {sched.horizon} hours, '
                              f'case covers {horizon}')
    series = case.series
    pv_forecast = series.pv_forecast if scenario is None else scenario.pv
    buy = series.buy_price if scenario is None else scenario.buy_price
    sell = series.sell_price if scenario is None else scenario.sell_price
    cap = sched.mode.permeate_cap(plant)
    found: List[Violation] = []

    plan = derive_indicators(sched.on, cfg.flush.initial_on)
    found.extend(check_min_off(plan, cfg.flush.min_off_hours))
    flush_water, flush_energy = flush_consumption(plan, cfg.flush, cfg.time)

    states: List[ROState] = []
    p_hps, q_hps = np.zeros(horizon), np.zeros(horizon)
    for t in range(horizon):
        on = bool(plan.on[t])
        if not on:
            states.append(ROState())
            found.extend(check_operating_point(
                case.curve, limits, plant, PumpPoint(0.0, 0.0, 0.0, 0.0),
                False, t))
            continue
        state = _plant_state(sched, case, t, found)
        states.append(state)
        point = operating_point(case.curve, float(sched.feed_flow[t]),
                                float(sched.speed[t]))
        found.extend(check_operating_point(case.curve, limits, plant, point,
                                           True, t))
        found.extend(check_ro_bounds(state, plant, cap, t))
        p_hps[t], q_hps[t] = hps_power(max(point.power, 0.0), limits)

    tank_cfg = cfg.tank
    tanks = [TankState.from_tds(tank_cfg.initial_level,
                                tank_cfg.initial_tds)]
    outflow_tds: List[float] = []
    for t in range(horizon):
        try:
            nxt, s_out = tank_model.step(
                tanks[-1], states[t].permeate_flow,
                states[t].permeate_salt_rate, float(series.water_demand[t]),
                float(flush_water[t]), tank_cfg.flush_tds_estimate, dt)
        except (tank_model.TankEmptied, tank_model.SaltUnderflow) as e:
            logger.warning('Hour %i: %s', t + 1, e)
            found.append(Violation(t, 'tank emptied', tanks[-1].volume,
                                   0.0, 'min'))
            break
        tanks.append(nxt)
        outflow_tds.append(s_out)
    tank_found = tank_model.check_bounds(tanks, tank_cfg, outflow_tds,
                                         sched.mode, plant.outflow_tds_max)
    for v in tank_found:
        if v.quantity == 'tank volume' and v.sense == 'max':
            logger.warning('Tank overflows: %s', v)
    found.extend(tank_found)

    hdp_p = p_hps - sched.pv_power + flush_energy / dt
    hdp_q = q_hps - sched.pv_reactive
    loads = nodal_load(case.network, series.base_load_p, series.base_load_q,
                       hdp_p, hdp_q)
    flows = lindistflow_solve(case.network, loads['p'], loads['q'])
    found.extend(check_network_limits(flows, case.network))
    for t in range(horizon):
        found.extend(pv_check(float(sched.pv_power[t]),
                              float(sched.pv_reactive[t]),
                              float(pv_forecast[t]), cfg.grid.pv_rating, t))

    hourly = (buy * np.maximum(hdp_p, 0.0)
              - sell * np.maximum(-hdp_p, 0.0)) * dt
    verified_cost = float(np.sum(hourly))
    production = float(sum(s.permeate_flow for s in states) * dt)
    required = float(np.sum(series.water_demand) * dt
                     + np.sum(sched.flush_water))
    prorated = verified_cost * required / production if production > 0 \
        else verified_cost
    if found:
        logger.info('Verification found %i violations', len(found))
    return VerifiedReport(
        states=states, tanks=tanks, outflow_tds=np.array(outflow_tds),
        hps_power=p_hps, hdp_power=hdp_p, flush_water=flush_water,
        hourly_cost=hourly, verified_cost=verified_cost,
        prorated_cost=float(prorated), verified_production=production,
        scheduled_production=sched.production(dt),
        required_production=required, end_tds=tanks[-1].tds,
        min_vsq=float(np.min(flows.vsq)), violations=found
    )


def audit(report: VerifiedReport, case: Case) -> Dict[str, float]:
    """
    Relative conservation residuals of a verified trajectory.

    ``water`` and ``salt`` compare the final tank contents with the
    initial contents plus every inflow and outflow. ``cost`` compares the
    verified cost with the sum of its hourly terms.
    """
    cfg = case.config
    dt = cfg.time.step_hours
    steps = len(report.tanks) - 1
    demand = case.series.water_demand[:steps]
    inflow = np.array([s.permeate_flow for s in report.states[:steps]])
    salt_in = np.array([s.permeate_salt_rate
                        for s in report.states[:steps]])
    flush = report.flush_water[:steps]
    first, last = report.tanks[0], report.tanks[-1]

    water_terms = np.concatenate([inflow * dt, demand * dt, flush])
    water = last.volume - first.volume \
        - np.sum(inflow * dt - demand * dt - flush)
    salt_out = report.outflow_tds[:steps] * demand * dt
    salt_flush = cfg.tank.flush_tds_estimate * flush
    salt_terms = np.concatenate([salt_in * dt, salt_out, salt_flush,
                                 [first.salt_mass]])
    salt = last.salt_mass - first.salt_mass \
        - np.sum(salt_in * dt - salt_out - salt_flush)
    cost = report.verified_cost - float(np.sum(report.hourly_cost))
    return {
        'water': abs(water) / max(np.sum(np.abs(water_terms)),
                                  first.volume, 1e-12),
        'salt': abs(salt) / max(np.sum(np.abs(salt_terms)), 1e-12),
        'cost': abs(cost) / max(float(np.sum(np.abs(report.hourly_cost))),
                                1e-12),
    }


def model_error_sweep(case: Case, flow_grid: Sequence[float],
                      speed_grid: Sequence[float],
                      permeate_tds_max: Optional[float] = None) -> ErrorMap:
    """
    Simplified-minus-full permeate flow and TDS over a flow/speed grid.

    A point is feasible when the full-model state passes the RO bounds,
    with ``permeate_tds_max`` as the permeate cap, and the pump point
    passes the operating envelope. Points where either model fails get
    NaN errors and are infeasible.
    """
    cfg = case.config
    flows = np.asarray(flow_grid, dtype=float)
    speeds = np.asarray(speed_grid, dtype=float)
    shape = (len(flows), len(speeds))
    dfpe, dspe = np.full(shape, np.nan), np.full(shape, np.nan)
    feasible = np.zeros(shape, dtype=bool)
    failed = 0
    for i, flow in enumerate(flows):
        for j, speed in enumerate(speeds):
            try:
                full = full_solve(flow, speed, case.curve, cfg.plant)
                simple = simplified_solve(flow, None, speed, case.curve,
                                          cfg.plant)
            except (ConvergenceError, InfeasibleOperatingPoint,
                    ValueError):
                failed += 1
                continue
            dfpe[i, j] = simple.permeate_flow - full.permeate_flow
            dspe[i, j] = simple.permeate_tds - full.permeate_tds
            point = operating_point(case.curve, flow, speed)
            feasible[i, j] = not (
                check_ro_bounds(full, cfg.plant, permeate_tds_max)
                or check_operating_point(case.curve, cfg.limits, cfg.plant,
                                         point, True))
    if failed:
        logger.warning('%i of %i sweep points did not solve', failed,
                       dfpe.size)
    return ErrorMap(flows=flows, speeds=speeds, dfpe=dfpe, dspe=dspe,
                    feasible=feasible)
