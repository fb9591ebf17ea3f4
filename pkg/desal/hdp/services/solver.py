"""Binding between scheduling models and a Pyomo MILP back end."""

import time
from typing import Any, Dict, NamedTuple, Optional, Tuple

import pyomo.environ as pyo
from pyomo.opt import SolverStatus, TerminationCondition
from arxiv.base.globals import get_application_config as config
from arxiv.base import logging

from ..domain import SolverSettings

logger = logging.getLogger(__name__)

OPTION_NAMES: Dict[str, Tuple[str, str]] = {
    'appsi_highs': ('mip_rel_gap', 'time_limit'),
    'highs': ('mip_rel_gap', 'time_limit'),
    'cbc': ('ratioGap', 'seconds'),
    'glpk': ('mipgap', 'tmlim'),
    'gurobi': ('MIPGap', 'TimeLimit'),
    'gurobi_direct': ('MIPGap', 'TimeLimit'),
    'cplex': ('mipgap', 'timelimit'),
}
"""Relative-gap and time-limit option names per back end."""

FEASIBLE = (TerminationCondition.optimal, TerminationCondition.feasible,
            TerminationCondition.locallyOptimal,
            TerminationCondition.globallyOptimal,
            TerminationCondition.maxTimeLimit,
            TerminationCondition.maxIterations,
            TerminationCondition.maxEvaluations)


class SolverError(Exception):
    """A solve failed for a reason other than the model itself."""


class SolverUnavailable(SolverError):
    """The configured back end is not installed or not licensed."""


class NoIncumbent(SolverError):
    """The solve ended without a feasible solution."""

    def __init__(self, message: str, termination: str = 'unknown') -> None:
        super().__init__(message)
        self.termination = termination


class SolveResult(NamedTuple):
    """Outcome of a solve that produced a solution."""

    status: str
    """``optimal`` or the termination condition that stopped the search."""
    objective: float
    gap: Optional[float]
    wall_time: float


class SolverInterface:
    """
    A MILP back end with a gap target and a time limit.

    Parameters
    ----------
    name : str
        Pyomo solver name. Defaults to ``HDP_SOLVER``.
    mip_gap : float
        Relative gap target. Defaults to ``HDP_MIP_GAP``.
    time_limit : float
        Wall-time limit in seconds. Defaults to ``HDP_TIME_LIMIT``; ``None``
        means no limit.

    """

    binaries = True
    sos = False
    """Triangle selection uses explicit binaries, never SOS declarations."""

    def __init__(self, name: Optional[str] = None,
                 mip_gap: Optional[float] = None,
                 time_limit: Optional[float] = None,
                 tee: bool = False) -> None:
        self.name = name or str(config().get('HDP_SOLVER', 'appsi_highs'))
        if mip_gap is None:
            mip_gap = float(config().get('HDP_MIP_GAP', 1e-4))
        if time_limit is None:
            limit = config().get('HDP_TIME_LIMIT')
            time_limit = float(limit) if limit not in (None, '') else None
        if mip_gap <= 0:
            raise SolverError(f'MIP gap must be positive, got {mip_gap}')
        if time_limit is not None and time_limit <= 0:
            raise SolverError(f'Time limit must be positive, got '
                              f'{time_limit}')
        self.mip_gap = float(mip_gap)
        self.time_limit = time_limit
        self.tee = tee

    @classmethod
    def from_settings(cls, settings: SolverSettings,
                      mip_gap: Optional[float] = None,
                      time_limit: Optional[float] = None) -> 'SolverInterface':
        """
        Solver for a case document's ``solver`` section.

        A solver named in the document wins over ``HDP_SOLVER`` unless it
        is the default name. ``mip_gap`` and ``time_limit`` override the
        document.
        """
        name = settings.name if settings.name != SolverSettings().name \
            else None
        return cls(name=name,
                   mip_gap=settings.mip_gap if mip_gap is None else mip_gap,
                   time_limit=settings.time_limit if time_limit is None
                   else time_limit)

    def describe(self) -> Dict[str, Any]:
        return {'name': self.name, 'mip_gap': self.mip_gap,
                'time_limit': self.time_limit}

    def options(self) -> Dict[str, float]:
        gap_key, time_key = OPTION_NAMES.get(self.name,
                                             ('mip_rel_gap', 'time_limit'))
        opts = {gap_key: self.mip_gap}
        if self.time_limit is not None:
            opts[time_key] = self.time_limit
        return opts

    def available(self) -> bool:
        try:
            return bool(pyo.SolverFactory(self.name)
                        .available(exception_flag=False))
        except Exception:   # Unknown plugin names raise on lookup.
            return False

    def solve(self, model: pyo.Block) -> SolveResult:
        """
        Solve ``model`` and load the incumbent into its variables.

        Raises
        ------
        :class:`SolverUnavailable`
            If the back end cannot be used.
        :class:`NoIncumbent`
            If the model is infeasible or unbounded, or the time limit
            was reached before any feasible solution was found.

        """
        if not self.available():
            raise SolverUnavailable(f'Solver {self.name} is not available')
        solver = pyo.SolverFactory(self.name)
        for key, value in self.options().items():
            solver.options[key] = value
        logger.info('Solving with %s: %i variables, %i constraints',
                    self.name, model.nvariables(), model.nconstraints())
        started = time.monotonic()
        try:
            results = solver.solve(model, tee=self.tee)
        except RuntimeError as e:
            # Persistent interfaces refuse to load a missing solution.
            raise NoIncumbent(f'{self.name} found no feasible solution: '
                              f'{e}', 'infeasible') from e
        except ValueError as e:
            raise SolverError(f'{self.name} failed: {e}') from e
        elapsed = time.monotonic() - started

        termination = results.solver.termination_condition
        if termination not in FEASIBLE \
                or results.solver.status in (SolverStatus.error,
                                             SolverStatus.aborted):
            raise NoIncumbent(f'{self.name} stopped with {termination}',
                              str(termination))
        objective = _active_objective(model)
        value = pyo.value(objective.expr, exception=False)
        if value is None:
            raise NoIncumbent(f'{self.name} stopped with {termination} and '
                              'no incumbent', str(termination))
        gap = _relative_gap(results, float(value))
        status = 'optimal' if termination == TerminationCondition.optimal \
            else str(termination)
        logger.info('%s finished: %s, objective %.6g, gap %s, %.2f s',
                    self.name, status, value,
                    'n/a' if gap is None else f'{gap:.3g}', elapsed)
        return SolveResult(status=status, objective=float(value), gap=gap,
                           wall_time=elapsed)


def _active_objective(model: pyo.Block) -> pyo.Objective:
    objectives = list(model.component_data_objects(pyo.Objective,
                                                   active=True))
    if len(objectives) != 1:
        raise SolverError(f'Expected one active objective, found '
                          f'{len(objectives)}')
    return objectives[0]


def _relative_gap(results: Any, objective: float) -> Optional[float]:
    try:
        lower = float(results.problem.lower_bound)
        upper = float(results.problem.upper_bound)
    except (AttributeError, TypeError, ValueError):
        return None
    if not (abs(lower) < float('inf') and abs(upper) < float('inf')):
        return None
    return abs(upper - lower) / max(abs(objective), 1e-10)
