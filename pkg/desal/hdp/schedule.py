"""
Scheduling runs built from the MILP, the verifier and the scenario engine.

- :func:`schedule_deterministic` solves one forecast and verifies it.
- :func:`tdcso` fixes the commitment against a scenario set, then
  dispatches every scenario with mixing flexibility enabled.
- :func:`fop_enumerate` and :func:`fop_schedule` give the
  point-selection cross-check.
- :func:`sensitivity_sweep` compares MixFlexIni with MixIni over a grid
  of daily demands and nominal heads.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from arxiv.base.globals import get_application_config as config
from arxiv.base import logging

from . import milp
from .commitment import derive_indicators
from .domain import Case, CommitmentPlan, FlexibilityMode, FopPoint, \
    FopSet, Scenario, Schedule, TdcsoResult, VerifiedReport
from .pump import check_operating_point, eval_power, max_flow, \
    operating_point
from .pwl import PwlDomainError
from .ro import ConvergenceError, InfeasibleOperatingPoint, \
    check_ro_bounds, full_solve, simplified_solve
from .services import source
from .services.solver import NoIncumbent, SolverInterface
from .verify import verify

logger = logging.getLogger(__name__)


class ScenarioInfeasible(Exception):
    """One or more scenarios could not be dispatched."""

    def __init__(self, failures: Dict[int, str]) -> None:
        listed = '; '.join(f'scenario {k}: {v}'
                           for k, v in sorted(failures.items()))
        super().__init__(f'{len(failures)} scenarios failed: {listed}')
        self.failures = failures


class CommitmentMismatch(Exception):
    """A dispatched schedule does not follow the fixed commitment."""


class EmptyFopSet(Exception):
    """No grid point passes the pump and RO checks."""


class InvalidGrid(ValueError):
    """An enumeration step or sweep grid is empty or non-positive."""


class SweepResult(NamedTuple):
    """MixFlexIni minus MixIni over demand × nominal head; NaN is blank."""

    demands: np.ndarray
    heads: np.ndarray
    cost_delta: np.ndarray
    """Prorated cost change in percent of the MixIni prorated cost."""
    production_delta: np.ndarray
    """Verified production change, m³."""
    end_tds_delta: np.ndarray
    """Verified end-of-horizon tank TDS change, kg/m³."""
    failures: Dict[Tuple[int, int], str]


def diagnose(case: Case) -> List[str]:
    """Capacity and quality margins that commonly make a case infeasible."""
    cfg = case.config
    plant, tank = cfg.plant, cfg.tank
    dt = cfg.time.step_hours
    demand = case.series.water_demand * dt
    most = plant.permeate_flow_max * dt
    found = []
    total = float(np.sum(demand))
    capacity = most * cfg.time.horizon_steps
    found.append(f'demand {total:.6g} m³ against plant capacity '
                 f'{capacity:.6g} m³')
    usable = tank.initial_level - tank.min_level
    cumulative = np.cumsum(demand) - most * np.arange(1, len(demand) + 1)
    worst = int(np.argmax(cumulative))
    if cumulative[worst] > usable:
        found.append(f'by hour {worst + 1} demand exceeds stored water and '
                     f'full production by {cumulative[worst] - usable:.6g} m³')
    if tank.initial_tds > plant.outflow_tds_max:
        found.append(f'initial tank TDS {tank.initial_tds:g} above the '
                     f'outflow cap {plant.outflow_tds_max:g}')
    return found


def schedule_deterministic(case: Case, mode: FlexibilityMode,
                           solver: Optional[SolverInterface] = None,
                           surfaces: Optional[milp.PlantSurfaces] = None,
                           dump_lp_path: Optional[str] = None) \
        -> Tuple[Schedule, VerifiedReport]:
    """
    Schedule the forecast in one flexibility mode and verify the result.

    Raises
    ------
    :class:`.NoIncumbent`
        The message carries the capacity margins from :func:`diagnose`.

    """
    model = milp.build(case, mode, surfaces)
    if dump_lp_path:
        milp.dump_lp(model, dump_lp_path)
    try:
        sched = milp.solve(model, solver)
    except NoIncumbent as e:
        margins = diagnose(case)
        for line in margins:
            logger.error('%s: %s', mode.value, line)
        raise NoIncumbent(f'{e}; ' + '; '.join(margins),
                          e.termination) from e
    report = verify(sched, case)
    logger.info('%s: scheduled cost %.6g, verified %.6g, prorated %.6g, '
                '%i violations', mode.value, sched.cost, report.verified_cost,
                report.prorated_cost, len(report.violations))
    return sched, report


def _dispatch_one(case: Case, mode: FlexibilityMode,
                  surfaces: Optional[milp.PlantSurfaces], scenario: Scenario,
                  plan: CommitmentPlan,
                  solver: SolverInterface) -> Schedule:
    model = milp.build(case, mode, surfaces,
                       [scenario._replace(probability=1.0)], plan)
    return milp.solve(model, solver)


def dispatch(case: Case, mode: FlexibilityMode,
             scenarios: Sequence[Scenario], plan: CommitmentPlan,
             solver: Optional[SolverInterface] = None,
             surfaces: Optional[milp.PlantSurfaces] = None) -> List[Schedule]:
    """
    Solve every scenario on its own under a fixed commitment.

    Runs in a process pool of ``HDP_WORKERS`` processes when that is more
    than one. Schedules come back in scenario order.

    Raises
    ------
    :class:`ScenarioInfeasible`
        Listing every scenario that failed, after all were attempted.

    """
    solver = solver or SolverInterface()
    if surfaces is None:
        surfaces = milp.default_surfaces(case)
    workers = int(config().get('HDP_WORKERS', 1))
    failures: Dict[int, str] = {}
    schedules: List[Optional[Schedule]] = [None] * len(scenarios)
    if workers > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_dispatch_one, case, mode, surfaces, s,
                                   plan, solver) for s in scenarios]
            for k, future in enumerate(futures):
                try:
                    schedules[k] = future.result()
                except (NoIncumbent, milp.InfeasibleCase,
                        milp.ExtractionError) as e:
                    failures[scenarios[k].index] = str(e)
    else:
        for k, s in enumerate(scenarios):
            try:
                schedules[k] = _dispatch_one(case, mode, surfaces, s, plan,
                                             solver)
            except (NoIncumbent, milp.InfeasibleCase,
                    milp.ExtractionError) as e:
                failures[s.index] = str(e)
    if failures:
        raise ScenarioInfeasible(failures)
    return [s for s in schedules if s is not None]


def tdcso(case: Case, scenarios: Sequence[Scenario],
          solver: Optional[SolverInterface] = None,
          step1_mode: FlexibilityMode = FlexibilityMode.MixIni,
          step2_mode: FlexibilityMode = FlexibilityMode.MixFlexIni) \
        -> TdcsoResult:
    """
    Two-step commitment and dispatch over a weighted scenario set.

    Step 1 solves one model whose plant variables and commitment are
    shared by every scenario, with the permeate cap at the outflow cap.
    Its on/off plan, with the flushing it implies, is then fixed and each
    scenario is dispatched on its own in ``step2_mode``.

    Raises
    ------
    :class:`.NoIncumbent`
        If Step 1 has no solution.
    :class:`ScenarioInfeasible`
        If any Step-2 dispatch fails.

    """
    solver = solver or SolverInterface()
    started = time.monotonic()
    surfaces = milp.default_surfaces(case)
    step1 = milp.build(case, step1_mode, surfaces, scenarios)
    committed = milp.solve(step1, solver)
    plan = derive_indicators(committed.on, case.config.flush.initial_on)
    step1_time = time.monotonic() - started
    logger.info('Step 1 (%s): cost %.6g, %i on hours, %i shutdowns',
                step1_mode.value, committed.cost, sum(plan.on),
                sum(plan.shut))

    schedules = dispatch(case, step2_mode, scenarios, plan, solver, surfaces)
    for sched in schedules:
        if tuple(int(u) for u in sched.on) != plan.on:
            raise CommitmentMismatch(f'Scenario {sched.scenario} departs '
                                     'from the Step-1 commitment')
    probabilities = [float(s.probability) for s in scenarios]
    expected = float(sum(p * sched.cost
                         for p, sched in zip(probabilities, schedules)))
    total = time.monotonic() - started
    logger.info('Step 2 (%s): expected cost %.6g over %i scenarios',
                step2_mode.value, expected, len(schedules))
    return TdcsoResult(
        commitment=plan, schedules=schedules, probabilities=probabilities,
        expected_cost=expected, step1_cost=committed.cost,
        timings={'step1': step1_time, 'step2': total - step1_time,
                 'total': total}
    )


def verify_scenarios(result: TdcsoResult, case: Case,
                     scenarios: Sequence[Scenario]) -> List[VerifiedReport]:
    """Verify each Step-2 schedule against its own scenario."""
    return [verify(sched, case, scenario)
            for sched, scenario in zip(result.schedules, scenarios)]


def _grid(lower: float, upper: float, step: float) -> np.ndarray:
    if step <= 0:
        raise InvalidGrid(f'Step must be positive, got {step}')
    if upper < lower:
        return np.array([])
    count = int(np.floor((upper - lower) / step + 1e-9))
    return lower + step * np.arange(count + 1, dtype=float)


def _dominated(points: List[FopPoint]) -> np.ndarray:
    power = np.array([p.power for p in points])
    water = np.array([p.permeate_flow for p in points])
    salt = np.array([p.permeate_salt_rate for p in points])
    no_worse = (power[None, :] <= power[:, None]) \
        & (water[None, :] >= water[:, None]) \
        & (salt[None, :] <= salt[:, None])
    better = (power[None, :] < power[:, None]) \
        | (water[None, :] > water[:, None]) \
        | (salt[None, :] < salt[:, None])
    return np.any(no_worse & better, axis=1)


def fop_enumerate(case: Case, flow_step: float, speed_step: float,
                  permeate_cap: Optional[float] = None,
                  use_full: bool = False, prune: bool = False) -> FopSet:
    """
    Enumerate feasible operating points on a flow/speed grid.

    Each grid point is evaluated with the simplified model, its brine flow
    closing the water balance, or with the full model if ``use_full``.
    Points that fail the pump envelope or the RO bounds are dropped.

    Parameters
    ----------
    permeate_cap : float
        Permeate TDS cap for the RO check. Defaults to the plant's
        flexible cap, the loosest any mode applies.
    prune : bool
        Drop points another point beats on power, permeate flow and
        permeate salt together.

    Raises
    ------
    :class:`EmptyFopSet`

    """
    cfg = case.config
    plant, limits, curve = cfg.plant, cfg.limits, case.curve
    cap = plant.permeate_tds_max if permeate_cap is None else permeate_cap
    flows = _grid(plant.feed_flow_min,
                  min(plant.feed_flow_max,
                      limits.flow_max_nominal * limits.speed_max), flow_step)
    speeds = _grid(limits.speed_min, limits.speed_max, speed_step)
    points: List[FopPoint] = []
    for speed in speeds:
        reach = max_flow(curve, limits, speed)
        for flow in flows:
            if flow > reach + 1e-9:
                break
            try:
                state = full_solve(flow, speed, curve, plant) if use_full \
                    else simplified_solve(flow, None, speed, curve, plant)
            except (ConvergenceError, InfeasibleOperatingPoint, ValueError):
                continue
            pump = operating_point(curve, flow, speed)
            if check_operating_point(curve, limits, plant, pump, True) \
                    or check_ro_bounds(state, plant, cap):
                continue
            points.append(FopPoint(
                flow=float(flow), speed=float(speed), head=pump.head,
                power=pump.power, permeate_flow=state.permeate_flow,
                brine_flow=state.brine_flow, brine_tds=state.brine_tds,
                permeate_salt_rate=state.permeate_salt_rate
            ))
    if not points:
        raise EmptyFopSet(f'No feasible point on the {flow_step:g} m³/hr × '
                          f'{speed_step:g} grid')
    enumerated = len(points)
    if prune:
        mask = _dominated(points)
        points = [p for p, drop in zip(points, mask) if not drop]
    logger.info('Enumerated %i feasible points of %i grid points (%i kept)',
                enumerated, len(flows) * len(speeds), len(points))
    return FopSet(points=points, flow_step=flow_step, speed_step=speed_step,
                  permeate_cap=cap)


def fop_power_error(case: Case, fops: FopSet, speed: float = 1.0,
                    samples: int = 400) -> float:
    """
    Largest relative power error of snapping to the nearest point.

    Flows between the smallest and largest enumerated flow at the speed
    row nearest ``speed`` are each replaced by the nearest enumerated
    flow on that row.
    """
    speeds = np.array(sorted({p.speed for p in fops.points}))
    row = float(speeds[np.argmin(np.abs(speeds - speed))])
    flows = np.array(sorted(p.flow for p in fops.points
                            if abs(p.speed - row) < 1e-12))
    if len(flows) < 2:
        return 0.0
    grid = np.linspace(flows[0], flows[-1], samples)
    nearest = flows[np.argmin(np.abs(grid[:, None] - flows[None, :]),
                              axis=1)]
    exact = np.array([eval_power(case.curve, f, row) for f in grid])
    snapped = np.array([eval_power(case.curve, f, row) for f in nearest])
    return float(np.max(np.abs(snapped - exact) / exact))


def fop_schedule(case: Case, mode: FlexibilityMode, fops: FopSet,
                 solver: Optional[SolverInterface] = None) -> Schedule:
    """Schedule the forecast choosing one enumerated point per on hour."""
    model = milp.build_fop(case, mode, fops)
    return milp.solve(model, solver)


def _with_nominal_head(case: Case, head: float) -> Case:
    plant = case.config.plant
    half = (plant.feed_pressure_max - plant.feed_pressure_min) / 2
    plant = plant._replace(feed_pressure_min=head - half,
                           feed_pressure_max=head + half)
    return case._replace(config=case.config._replace(plant=plant))


def sensitivity_sweep(case: Case, demands: Sequence[float],
                      heads: Sequence[float],
                      solver: Optional[SolverInterface] = None) \
        -> SweepResult:
    """
    MixFlexIni against MixIni over daily demand × nominal head.

    Each cell rescales the demand profile to the daily total and moves the
    feed-pressure window to centre on the nominal head. Cells where either
    mode is infeasible stay blank.
    """
    if not len(demands) or not len(heads):
        raise InvalidGrid('Sweep needs at least one demand and one head')
    shape = (len(demands), len(heads))
    cost, production, end_tds = (np.full(shape, np.nan) for _ in range(3))
    failures: Dict[Tuple[int, int], str] = {}
    for i, demand in enumerate(demands):
        for j, head in enumerate(heads):
            cell = _with_nominal_head(source.scale_demand(case, demand),
                                      head)
            try:
                _, base = schedule_deterministic(cell, FlexibilityMode.MixIni,
                                                 solver)
                _, flex = schedule_deterministic(
                    cell, FlexibilityMode.MixFlexIni, solver)
            except (milp.InfeasibleCase, milp.ExtractionError, NoIncumbent,
                    PwlDomainError) as e:
                logger.warning('Sweep cell demand %g, head %g: %s',
                               demand, head, e)
                failures[(i, j)] = str(e)
                continue
            cost[i, j] = 100 * (flex.prorated_cost - base.prorated_cost) \
                / max(abs(base.prorated_cost), 1e-12)
            production[i, j] = flex.verified_production \
                - base.verified_production
            end_tds[i, j] = flex.end_tds - base.end_tds
    return SweepResult(demands=np.asarray(demands, dtype=float),
                       heads=np.asarray(heads, dtype=float),
                       cost_delta=cost, production_delta=production,
                       end_tds_delta=end_tds, failures=failures)
