"""
Permeate storage tank: water volume and dissolved salt.

The tank is fully mixed. Outflow leaves at the mean of the TDS at the two
ends of the hour, so the new TDS and the outflow TDS are solved together.
"""

from typing import List, Optional, Sequence, Tuple

from arxiv.base.globals import get_application_config as config
from arxiv.base import logging

from .domain import FlexibilityMode, TankConfig, TankState, Violation

logger = logging.getLogger(__name__)

SALT_TOLERANCE = 1e-9


class TankEmptied(Exception):
    """A step would leave the tank with no water."""


class SaltUnderflow(Exception):
    """A step withdraws more salt than the tank holds."""


def step(state: TankState, permeate_flow: float, permeate_salt_rate: float,
         outflow: float, flush_water: float, flush_tds: float,
         dt: float = 1.0) -> Tuple[TankState, float]:
    """
    Advance the tank by one step.

    Parameters
    ----------
    state : :class:`.TankState`
        Contents at the start of the step.
    permeate_flow, permeate_salt_rate : float
        Inflow in m³/hr and kg/hr.
    outflow : float
        Water delivered to consumers, m³/hr.
    flush_water : float
        Water drawn for flushing during the step, m³.
    flush_tds : float
        TDS assumed for the flushing water.
    dt : float
        Step length in hours.

    Returns
    -------
    tuple
        The new :class:`.TankState` and the outflow TDS of the step.

    """
    if min(permeate_flow, permeate_salt_rate, outflow, flush_water) < 0:
        raise ValueError('Tank inputs must be non-negative')
    volume = state.volume + (permeate_flow - outflow) * dt - flush_water
    if volume <= 0:
        raise TankEmptied(f'Tank volume would reach {volume:.6g} m³')

    # M' = M + in - S_out·F_out·dt - flush, with S_out = (S + M'/W') / 2.
    drawn = outflow * dt
    salt = (state.salt_mass + permeate_salt_rate * dt
            - flush_tds * flush_water - state.tds * drawn / 2) \
        / (1 + drawn / (2 * volume))
    if salt < 0:
        if salt < -SALT_TOLERANCE * max(1.0, state.salt_mass):
            raise SaltUnderflow(f'Tank salt mass would reach {salt:.6g} kg')
        salt = 0.0
    tds = salt / volume
    return TankState(volume, tds, salt), (state.tds + tds) / 2


def run(initial: TankState, permeate_flow: Sequence[float],
        permeate_salt_rate: Sequence[float], outflow: Sequence[float],
        flush_water: Sequence[float], flush_tds: float,
        dt: float = 1.0) -> Tuple[List[TankState], List[float]]:
    """Step the tank through a whole trajectory, initial state included."""
    states = [initial]
    outflow_tds: List[float] = []
    for inflow, salt, out, flush in zip(permeate_flow, permeate_salt_rate,
                                        outflow, flush_water):
        nxt, s_out = step(states[-1], inflow, salt, out, flush, flush_tds,
                          dt)
        states.append(nxt)
        outflow_tds.append(s_out)
    return states, outflow_tds


def check_bounds(traj: Sequence[TankState], tank_cfg: TankConfig,
                 outflow_tds: Sequence[float], mode: FlexibilityMode,
                 tds_max: float) -> List[Violation]:
    """
    Check a tank trajectory (initial state first) against its bounds.

    Volume and TDS bounds apply at every boundary including the initial
    one. The final volume may not fall below the initial volume, and in
    modes with end-TDS closure the final TDS may not exceed the initial
    TDS.
    """
    tol = float(config().get('HDP_FLOW_TOL', 1e-6))
    found: List[Violation] = []
    for k, state in enumerate(traj):
        hour: Optional[int] = k - 1 if k > 0 else None
        if state.volume < tank_cfg.min_level - tol:
            found.append(Violation(hour, 'tank volume', state.volume,
                                   tank_cfg.min_level, 'min'))
        elif state.volume > tank_cfg.capacity + tol:
            found.append(Violation(hour, 'tank volume', state.volume,
                                   tank_cfg.capacity, 'max'))
        if state.tds > tds_max + tol:
            found.append(Violation(hour, 'tank TDS', state.tds, tds_max,
                                   'max'))
    for t, s_out in enumerate(outflow_tds):
        if s_out > tds_max + tol:
            found.append(Violation(t, 'outflow TDS', s_out, tds_max, 'max'))

    final = traj[-1]
    if final.volume < tank_cfg.initial_level - tol:
        found.append(Violation(None, 'end volume', final.volume,
                               tank_cfg.initial_level, 'min'))
    if mode.end_tds_closure and final.tds > tank_cfg.initial_tds + tol:
        found.append(Violation(None, 'end TDS', final.tds,
                               tank_cfg.initial_tds, 'max'))
    return found
