"""
Command-line front end.

Every command reads a case document, writes its reports to ``--out`` and
finishes with ``manifest.json`` naming the inputs, with content hashes,
and the outputs. For example:

.. code-block:: bash

   hdp schedule case.yaml --mode MixIni --mode MixFlexIni -o out/
   hdp tdcso case.yaml --scenarios 2000 --reduce 10 --seed 7 -o out/
   hdp fop case.yaml --flow-step 5 --speed-step 0.002 --hours 6 -o out/

Missing input files exit with status 2. Any other error while loading,
building, solving or verifying exits with status 1 after a message on
stderr. With ``--strict``, violations found by verification also exit
with status 1.
"""

import functools
import os
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
from arxiv.base import logging

from . import milp, scenarios as scenario_engine, schedule
from .domain import Case, FlexibilityMode, VerifiedReport
from .grid import NetworkTopologyError
from .pump import PumpFitError
from .pwl import PwlDomainError
from .ro import ConvergenceError, InfeasibleOperatingPoint
from .services import source, store
from .services.solver import SolverError, SolverInterface
from .verify import HorizonMismatch, model_error_sweep, verify

logger = logging.getLogger(__name__)

MODES = [mode.value for mode in FlexibilityMode]

ERRORS = (source.ConfigError, source.SeriesError, source.TruncationError,
          store.ScheduleFormatError, PumpFitError, NetworkTopologyError,
          PwlDomainError, ConvergenceError, InfeasibleOperatingPoint,
          milp.InfeasibleCase, milp.ExtractionError, SolverError,
          scenario_engine.InvalidCorrelation,
          scenario_engine.InvalidScenarioCount,
          scenario_engine.UnknownReducer, HorizonMismatch,
          schedule.ScenarioInfeasible, schedule.CommitmentMismatch,
          schedule.EmptyFopSet, schedule.InvalidGrid)
"""Package errors reported as a diagnostic and exit status 1."""


class StrictFailure(Exception):
    """Verification found violations and ``--strict`` was given."""


def _reports_errors(command: Callable) -> Callable:
    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            command(*args, **kwargs)
        except FileNotFoundError as e:
            click.echo(f'Missing input: {e.filename or e}', err=True)
            sys.exit(2)
        except StrictFailure as e:
            click.echo(f'Verification failed: {e}', err=True)
            sys.exit(1)
        except ERRORS as e:
            logger.debug('Command failed', exc_info=True)
            click.echo(f'{type(e).__name__}: {e}', err=True)
            sys.exit(1)
    return wrapper


def _solver_options(command: Callable) -> Callable:
    command = click.option('--time-limit', type=float, default=None,
                           help='Solver wall-time limit, seconds')(command)
    command = click.option('--gap', type=float, default=None,
                           help='Relative MIP gap')(command)
    command = click.option('--out', '-o', default='.',
                           type=click.Path(file_okay=False),
                           help='Output directory')(command)
    return command


STRICT = click.option('--strict', is_flag=True,
                      help='Exit 1 on any verification violation')


def _case(path: str, hours: Optional[int] = None) -> Case:
    case = source.load_case(path)
    if hours:
        case = source.truncate(case, hours)
    return case


def _solver(case: Case, gap: Optional[float],
            time_limit: Optional[float]) -> SolverInterface:
    return SolverInterface.from_settings(case.config.solver, gap, time_limit)


def _named(stem: str, ext: str, tag: str, several: bool) -> str:
    return f'{stem}_{tag}.{ext}' if several else f'{stem}.{ext}'


def _check_strict(strict: bool, reports: Sequence[Tuple[str,
                                                        VerifiedReport]]) \
        -> None:
    for label, report in reports:
        for v in report.violations:
            logger.warning('%s: %s', label, v)
    if strict and any(report.violations for _, report in reports):
        raise StrictFailure(', '.join(
            f'{label} has {len(report.violations)} violations'
            for label, report in reports if report.violations))


def _finish(command: str, case_path: str, case: Case, out: str,
            outputs: List[str], seed: Optional[int],
            solver: Optional[SolverInterface],
            timings: Dict[str, float]) -> None:
    inputs = [os.path.abspath(case_path)] + list(
        source.input_paths(case).values())
    manifest = store.make_manifest(
        command, inputs, seed, solver.describe() if solver else {}, outputs,
        timings)
    store.write_manifest(manifest, out)
    click.echo(f'Wrote {len(outputs)} files and the manifest to {out}')


@click.group()
def cli() -> None:
    """Day-ahead scheduling of a desalination plant on a feeder."""


@cli.command('schedule')
@click.argument('case_path', metavar='CASE')
@click.option('--mode', '-m', 'modes', multiple=True,
              type=click.Choice(MODES), help='Flexibility mode; repeatable')
@click.option('--hours', type=int, default=None,
              help='Schedule only the first hours of the case')
@click.option('--dump-lp', is_flag=True, help='Write each model as LP')
@STRICT
@_solver_options
@_reports_errors
def cmd_schedule(case_path: str, modes: Tuple[str, ...],
                 hours: Optional[int], dump_lp: bool, out: str,
                 strict: bool, gap: Optional[float],
                 time_limit: Optional[float]) -> None:
    """Schedule and verify a case in one or more modes."""
    do_schedule(case_path, modes or tuple(MODES), hours, dump_lp, out,
                strict, gap, time_limit)


def do_schedule(case_path: str, modes: Sequence[str], hours: Optional[int],
                dump_lp: bool, out: str, strict: bool, gap: Optional[float],
                time_limit: Optional[float]) -> None:
    started = time.monotonic()
    case = _case(case_path, hours)
    solver = _solver(case, gap, time_limit)
    os.makedirs(out, exist_ok=True)
    several = len(modes) > 1
    surfaces = milp.default_surfaces(case)
    runs, outputs, timings = {}, [], {}
    for name in modes:
        mode = FlexibilityMode(name)
        lp_path = os.path.join(out, f'model_{name}.lp') if dump_lp else None
        begun = time.monotonic()
        sched, report = schedule.schedule_deterministic(
            case, mode, solver, surfaces, lp_path)
        timings[name] = time.monotonic() - begun
        runs[name] = (sched, report)
        if lp_path:
            outputs.append(lp_path)
        outputs.append(store.write_schedule(sched, os.path.join(
            out, _named('schedule', 'csv', name, several))))
        outputs.append(store.write_verified_report(report, os.path.join(
            out, _named('verified_report', 'json', name, several))))
    outputs.append(store.write_summary(runs, os.path.join(out,
                                                          'summary.csv')))
    timings['total'] = time.monotonic() - started
    _finish('schedule', case_path, case, out, outputs, None, solver,
            timings)
    _check_strict(strict, [(name, report)
                           for name, (_, report) in runs.items()])


@cli.command('verify')
@click.argument('case_path', metavar='CASE')
@click.argument('schedule_path', metavar='SCHEDULE')
@click.option('--mode', '-m', type=click.Choice(MODES), default='MixIni',
              help='Mode the schedule was made in')
@STRICT
@click.option('--out', '-o', default='.', type=click.Path(file_okay=False))
@_reports_errors
def cmd_verify(case_path: str, schedule_path: str, mode: str, strict: bool,
               out: str) -> None:
    """Verify a schedule CSV against the full plant model."""
    case = _case(case_path)
    sched = store.load_schedule(schedule_path, FlexibilityMode(mode))
    if sched.horizon < case.config.time.horizon_steps:
        case = source.truncate(case, sched.horizon)
    os.makedirs(out, exist_ok=True)
    started = time.monotonic()
    report = verify(sched, case)
    outputs = [store.write_verified_report(
        report, os.path.join(out, 'verified_report.json'))]
    _finish('verify', case_path, case, out, outputs, None, None,
            {'total': time.monotonic() - started})
    _check_strict(strict, [(mode, report)])


@cli.command('error-map')
@click.argument('case_path', metavar='CASE')
@click.option('--points', type=int, default=50,
              help='Grid points along flow and along speed')
@click.option('--permeate-cap', type=float, default=None,
              help='Permeate TDS cap for the feasibility mask, kg/m3')
@click.option('--out', '-o', default='.', type=click.Path(file_okay=False))
@_reports_errors
def cmd_error_map(case_path: str, points: int,
                  permeate_cap: Optional[float], out: str) -> None:
    """Simplified-minus-full model errors over the flow/speed range."""
    case = _case(case_path)
    plant, limits = case.config.plant, case.config.limits
    started = time.monotonic()
    flows = np.linspace(plant.feed_flow_min, plant.feed_flow_max, points)
    speeds = np.linspace(limits.speed_min, limits.speed_max, points)
    emap = model_error_sweep(case, flows, speeds, permeate_cap)
    os.makedirs(out, exist_ok=True)
    outputs = [store.write_error_map(emap, os.path.join(out,
                                                        'error_map.csv'))]
    feasible = emap.feasible
    if np.any(feasible):
        click.echo(f'Feasible region: dF^pe in '
                   f'[{np.nanmin(emap.dfpe[feasible]):.4g}, '
                   f'{np.nanmax(emap.dfpe[feasible]):.4g}] m3/hr, dS^pe in '
                   f'[{np.nanmin(emap.dspe[feasible]):.4g}, '
                   f'{np.nanmax(emap.dspe[feasible]):.4g}] kg/m3')
    _finish('error-map', case_path, case, out, outputs, None, None,
            {'total': time.monotonic() - started})


def _scenario_set(case: Case, count: Optional[int], reduce: Optional[int],
                  seed: Optional[int]) -> Tuple[list, int]:
    cfg = case.config.scenarios
    seed = cfg.seed if seed is None else seed
    drawn = scenario_engine.from_case(case, count, seed)
    k = cfg.reduced if reduce is None else reduce
    if k and k < len(drawn):
        drawn, _ = scenario_engine.reduce(drawn, k, seed)
    return drawn, seed


@cli.command('scenarios')
@click.argument('case_path', metavar='CASE')
@click.option('--scenarios', 'count', type=int, default=None,
              help='Scenarios to draw')
@click.option('--reduce', type=int, default=None,
              help='Medoids to keep; 0 keeps every scenario')
@click.option('--seed', type=int, default=None)
@click.option('--out', '-o', default='.', type=click.Path(file_okay=False))
@_reports_errors
def cmd_scenarios(case_path: str, count: Optional[int],
                  reduce: Optional[int], seed: Optional[int],
                  out: str) -> None:
    """Draw PV/price scenarios and reduce them to weighted medoids."""
    case = _case(case_path)
    started = time.monotonic()
    drawn, seed = _scenario_set(case, count, reduce, seed)
    os.makedirs(out, exist_ok=True)
    outputs = [store.write_scenarios(drawn, os.path.join(out,
                                                         'scenarios.json'))]
    _finish('scenarios', case_path, case, out, outputs, seed, None,
            {'total': time.monotonic() - started})


@cli.command('tdcso')
@click.argument('case_path', metavar='CASE')
@click.option('--scenarios', 'count', type=int, default=None,
              help='Scenarios to draw')
@click.option('--reduce', type=int, default=None,
              help='Medoids to keep; 0 keeps every scenario')
@click.option('--seed', type=int, default=None)
@click.option('--scenario-file', type=click.Path(dir_okay=False),
              default=None, help='Use scenarios from a scenarios.json')
@click.option('--step1-mode', type=click.Choice(['MixIni', 'MixFlexIni']),
              default='MixIni', help='Mode of the commitment step')
@click.option('--hours', type=int, default=None)
@STRICT
@_solver_options
@_reports_errors
def cmd_tdcso(case_path: str, count: Optional[int], reduce: Optional[int],
              seed: Optional[int], scenario_file: Optional[str],
              step1_mode: str, hours: Optional[int], out: str, strict: bool,
              gap: Optional[float], time_limit: Optional[float]) -> None:
    """Two-step commitment and per-scenario dispatch."""
    case = _case(case_path, hours)
    solver = _solver(case, gap, time_limit)
    if scenario_file:
        drawn = store.load_scenarios(scenario_file)
    else:
        drawn, seed = _scenario_set(case, count, reduce, seed)
    os.makedirs(out, exist_ok=True)
    result = schedule.tdcso(case, drawn, solver,
                            step1_mode=FlexibilityMode(step1_mode))
    reports = schedule.verify_scenarios(result, case, drawn)
    outputs = [store.write_scenarios(drawn, os.path.join(out,
                                                         'scenarios.json')),
               store.write_tdcso(result, os.path.join(out,
                                                      'tdcso_result.json'))]
    for sched, report in zip(result.schedules, reports):
        outputs.append(store.write_schedule(sched, os.path.join(
            out, f'schedule_s{sched.scenario}.csv')))
        outputs.append(store.write_verified_report(report, os.path.join(
            out, f'verified_report_s{sched.scenario}.json')))
    click.echo(f'Step 1 cost {result.step1_cost:.6g}, expected Step 2 cost '
               f'{result.expected_cost:.6g}')
    _finish('tdcso', case_path, case, out, outputs, seed, solver,
            result.timings)
    _check_strict(strict, [(f'scenario {s.scenario}', r)
                           for s, r in zip(result.schedules, reports)])


@cli.command('fop')
@click.argument('case_path', metavar='CASE')
@click.option('--flow-step', type=float, default=5.0,
              help='Feed-flow segmentation, m3/hr')
@click.option('--speed-step', type=float, default=0.002,
              help='Speed segmentation')
@click.option('--mode', '-m', type=click.Choice(MODES), default='MixIni')
@click.option('--hours', type=int, default=None)
@click.option('--prune', is_flag=True, help='Drop dominated points')
@click.option('--full', 'use_full', is_flag=True,
              help='Evaluate points with the full RO model')
@click.option('--compare/--no-compare', default=True,
              help='Also solve the linearized model and its relaxation')
@STRICT
@_solver_options
@_reports_errors
def cmd_fop(case_path: str, flow_step: float, speed_step: float, mode: str,
            hours: Optional[int], prune: bool, use_full: bool,
            compare: bool, out: str, strict: bool, gap: Optional[float],
            time_limit: Optional[float]) -> None:
    """Schedule from enumerated operating points and cross-check."""
    started = time.monotonic()
    case = _case(case_path, hours)
    solver = _solver(case, gap, time_limit)
    flex = FlexibilityMode(mode)
    fops = schedule.fop_enumerate(case, flow_step, speed_step,
                                  use_full=use_full, prune=prune)
    os.makedirs(out, exist_ok=True)
    outputs = [store.write_fop_points(fops, os.path.join(out,
                                                         'fop_points.csv'))]
    sched = schedule.fop_schedule(case, flex, fops, solver)
    report = verify(sched, case)
    runs = {f'{mode} FOP': (sched, report)}
    outputs.append(store.write_schedule(sched, os.path.join(
        out, 'schedule_fop.csv')))
    outputs.append(store.write_verified_report(report, os.path.join(
        out, 'verified_report_fop.json')))
    error = schedule.fop_power_error(case, fops)
    click.echo(f'{len(fops.points)} points, nearest-point power error '
               f'{100 * error:.3g}%, FOP cost {sched.cost:.6g}')
    if compare:
        model = milp.build(case, flex)
        bound = milp.relaxation_bound(model, solver)
        linearized, checked = schedule.schedule_deterministic(case, flex,
                                                              solver)
        runs[mode] = (linearized, checked)
        delta = (linearized.cost - sched.cost) / max(abs(sched.cost), 1e-12)
        click.echo(f'Linearized cost {linearized.cost:.6g} '
                   f'({100 * delta:+.3g}% of FOP), relaxation bound '
                   f'{bound:.6g}')
    outputs.append(store.write_summary(runs, os.path.join(out,
                                                          'summary.csv')))
    _finish('fop', case_path, case, out, outputs, None, solver,
            {'total': time.monotonic() - started})
    _check_strict(strict, [(label, r) for label, (_, r) in runs.items()])


@cli.command('sweep')
@click.argument('case_path', metavar='CASE')
@click.option('--demand', 'demands', type=float, multiple=True,
              required=True, help='Daily demand, m3; repeatable')
@click.option('--head', 'heads', type=float, multiple=True, required=True,
              help='Nominal feed head, kPa; repeatable')
@click.option('--hours', type=int, default=None)
@_solver_options
@_reports_errors
def cmd_sweep(case_path: str, demands: Tuple[float, ...],
              heads: Tuple[float, ...], hours: Optional[int], out: str,
              gap: Optional[float], time_limit: Optional[float]) -> None:
    """MixFlexIni against MixIni over daily demand × nominal head."""
    started = time.monotonic()
    case = _case(case_path, hours)
    solver = _solver(case, gap, time_limit)
    result = schedule.sensitivity_sweep(case, demands, heads, solver)
    os.makedirs(out, exist_ok=True)
    outputs = [store.write_sweep(result.demands, result.heads, {
        'cost_delta_pct': result.cost_delta,
        'production_delta': result.production_delta,
        'end_tds_delta': result.end_tds_delta,
    }, os.path.join(out, 'sweep.csv'))]
    click.echo(f'{len(result.failures)} of {result.cost_delta.size} cells '
               'infeasible')
    _finish('sweep', case_path, case, out, outputs, None, solver,
            {'total': time.monotonic() - started})


if __name__ == '__main__':
    cli()
