"""
Steady-state physics of the reverse-osmosis train.

Two models map an operating point (feed flow, pump speed) to flows,
pressures and TDS values.

The full model keeps the permeate TDS in the salt balance and in the
osmotic pressure difference. It is a coupled nonlinear system in
(F^pe, F^br, S^br, S^pe, Δπ) and is solved by damped Newton iteration.

The simplified model drops the permeate-side salt terms. Brine TDS then
follows directly from the feed, and the remaining relations are explicit.
Compared with the full model it predicts slightly less permeate at a
slightly higher TDS, which makes it a safe basis for scheduling.
"""

from typing import List, Optional

import numpy as np
from scipy import optimize
from arxiv.base.globals import get_application_config as config
from arxiv.base import logging

from .domain import PlantConfig, PumpCurve, ROState, Violation
from .pump import eval_head

logger = logging.getLogger(__name__)

BRINE_FLOW_EPS = 1e-6
"""Smallest brine flow used as a divisor, m³/hr."""


class ConvergenceError(Exception):
    """The full-model iteration did not reach the residual tolerance."""


class InfeasibleOperatingPoint(Exception):
    """Net driving pressure cannot push a non-negative permeate flow."""


def _pressures(feed_flow: float, speed: float, curve: PumpCurve,
               cfg: PlantConfig) -> tuple:
    feed_head = eval_head(curve, feed_flow, speed)
    brine_head = cfg.friction_coeff * feed_head
    permeate_head = cfg.permeate_pressure_set
    dp_membrane = (feed_head + brine_head) / 2 - permeate_head
    return feed_head, brine_head, permeate_head, dp_membrane


def simplified_solve(feed_flow: float, brine_flow: Optional[float],
                     speed: float, curve: PumpCurve,
                     cfg: PlantConfig) -> ROState:
    """
    Evaluate the simplified RO relations.

    Parameters
    ----------
    feed_flow : float
        F^fd, m³/hr.
    brine_flow : float or None
        F^br, m³/hr. If ``None`` the brine flow that closes the water
        balance F^fd = F^br + F^pe is found by root bracketing.
    speed : float
        Normalized pump speed.

    Returns
    -------
    :class:`.ROState`
        ``permeate_tds`` carries the implied value M^Spe/F^pe and
        ``residual`` the water-balance residual F^fd − F^br − F^pe.

    Raises
    ------
    :class:`InfeasibleOperatingPoint`
        If the net driving pressure is negative.

    """
    if feed_flow <= 0:
        raise ValueError('Feed flow must be positive')
    feed_head, brine_head, permeate_head, dp_membrane = \
        _pressures(feed_flow, speed, curve, cfg)
    if brine_flow is None:
        brine_flow = _consistent_brine_flow(feed_flow, dp_membrane, cfg)

    flags = ()
    if brine_flow < BRINE_FLOW_EPS:
        logger.warning('Brine flow %.3g clamped to %g', brine_flow,
                       BRINE_FLOW_EPS)
        brine_flow = BRINE_FLOW_EPS
        flags = ('brine_flow_clamped',)

    s_fd = cfg.seawater_tds
    brine_tds = s_fd * feed_flow / brine_flow
    dosmotic = cfg.cp_factor * cfg.osmotic_coeff * (s_fd + brine_tds) / 2
    permeate_flow = cfg.water_perm_coeff * (dp_membrane - dosmotic)
    if permeate_flow < 0:
        raise InfeasibleOperatingPoint(
            f'Driving pressure {dp_membrane:.1f} kPa below osmotic '
            f'difference {dosmotic:.1f} kPa'
        )
    conc_side_tds = 2 * s_fd * feed_flow / (feed_flow + brine_flow)
    salt_rate = cfg.salt_perm_coeff * conc_side_tds
    permeate_tds = salt_rate / permeate_flow if permeate_flow > 0 else np.inf
    return ROState(
        on=True, feed_flow=feed_flow, permeate_flow=permeate_flow,
        brine_flow=brine_flow, feed_head=feed_head, brine_head=brine_head,
        permeate_head=permeate_head, dp_membrane=dp_membrane,
        dosmotic=dosmotic, feed_osm=cfg.osmotic_coeff * s_fd,
        brine_osm=cfg.osmotic_coeff * brine_tds, permeate_osm=0.0,
        brine_tds=brine_tds, permeate_tds=permeate_tds,
        conc_side_tds=conc_side_tds, permeate_salt_rate=salt_rate,
        speed=speed, residual=feed_flow - brine_flow - permeate_flow,
        flags=flags
    )


def _consistent_brine_flow(feed_flow: float, dp_membrane: float,
                           cfg: PlantConfig) -> float:
    """Brine flow that closes the simplified water balance."""
    s_fd = cfg.seawater_tds
    k_osm = cfg.cp_factor * cfg.osmotic_coeff

    def gap(brine: float) -> float:
        brine_tds = s_fd * feed_flow / brine
        permeate = cfg.water_perm_coeff \
            * (dp_membrane - k_osm * (s_fd + brine_tds) / 2)
        return feed_flow - brine - permeate

    # gap falls monotonically in the brine flow; it is large and positive
    # near zero brine flow.
    if gap(feed_flow) > 0:
        raise InfeasibleOperatingPoint(
            f'Driving pressure {dp_membrane:.1f} kPa cannot overcome the '
            f'feed osmotic pressure at F^fd={feed_flow:.3g}'
        )
    lower = feed_flow * 1e-9
    return float(optimize.brentq(gap, lower, feed_flow, xtol=1e-12,
                                 rtol=1e-14, maxiter=200))


def _residual(x: np.ndarray, feed_flow: float, dp_membrane: float,
              cfg: PlantConfig) -> np.ndarray:
    permeate, brine, brine_tds, permeate_tds, dosmotic = x
    s_fd, k_os, cp = cfg.seawater_tds, cfg.osmotic_coeff, cfg.cp_factor
    conc = (s_fd * feed_flow + brine_tds * brine) / (feed_flow + brine)
    salt_in = s_fd * feed_flow
    return np.array([
        (feed_flow - brine - permeate) / feed_flow,
        (permeate - cfg.water_perm_coeff * (dp_membrane - dosmotic))
        / feed_flow,
        (dosmotic - (cp * k_os * (s_fd + brine_tds) / 2
                     - k_os * permeate_tds)) / (k_os * s_fd),
        (salt_in - brine_tds * brine - permeate_tds * permeate) / salt_in,
        (permeate_tds * permeate
         - cfg.salt_perm_coeff * (cp * conc - permeate_tds)) / salt_in,
    ])


def _jacobian(x: np.ndarray, feed_flow: float, cfg: PlantConfig) \
        -> np.ndarray:
    permeate, brine, brine_tds, permeate_tds, _ = x
    s_fd, k_os, cp = cfg.seawater_tds, cfg.osmotic_coeff, cfg.cp_factor
    k_w, k_s = cfg.water_perm_coeff, cfg.salt_perm_coeff
    total = feed_flow + brine
    dconc_dbrine = feed_flow * (brine_tds - s_fd) / total ** 2
    dconc_dtds = brine / total
    salt_in = s_fd * feed_flow
    jac = np.array([
        [-1.0, -1.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, k_w],
        [0.0, 0.0, -cp * k_os / 2, k_os, 1.0],
        [-permeate_tds, -brine_tds, -brine, -permeate, 0.0],
        [permeate_tds, -k_s * cp * dconc_dbrine, -k_s * cp * dconc_dtds,
         permeate + k_s, 0.0],
    ])
    scale = np.array([feed_flow, feed_flow, k_os * s_fd, salt_in, salt_in])
    return jac / scale[:, None]


def full_solve(feed_flow: float, speed: float, curve: PumpCurve,
               cfg: PlantConfig, on: bool = True) -> ROState:
    """
    Solve the full RO model at (``feed_flow``, ``speed``).

    Damped Newton on the scaled residual of the water balance, permeate
    production, osmotic difference, salt balance and salt transport,
    started from the consistent simplified solution.

    Raises
    ------
    :class:`ConvergenceError`
        If the residual does not fall below ``HDP_NEWTON_TOL`` within
        ``HDP_NEWTON_MAXITER`` iterations.
    :class:`InfeasibleOperatingPoint`
        If the solution has a negative permeate flow or driving pressure.

    """
    if not on:
        return ROState()
    tol = float(config().get('HDP_NEWTON_TOL', 1e-10))
    max_iter = int(config().get('HDP_NEWTON_MAXITER', 100))

    start = simplified_solve(feed_flow, None, speed, curve, cfg)
    feed_head, brine_head, permeate_head, dp_membrane = \
        _pressures(feed_flow, speed, curve, cfg)
    x = np.array([start.permeate_flow, start.brine_flow, start.brine_tds,
                  start.permeate_tds, start.dosmotic])

    norm = np.max(np.abs(_residual(x, feed_flow, dp_membrane, cfg)))
    for iteration in range(max_iter):
        if norm < tol:
            break
        step = np.linalg.solve(_jacobian(x, feed_flow, cfg),
                               -_residual(x, feed_flow, dp_membrane, cfg))
        damping = 1.0
        while damping > 1e-6:
            trial = x + damping * step
            if trial[1] > 0 and trial[2] > 0 and trial[3] >= 0:
                trial_norm = np.max(np.abs(
                    _residual(trial, feed_flow, dp_membrane, cfg)))
                if trial_norm < norm or trial_norm < tol:
                    break
            damping /= 2
        else:
            raise ConvergenceError(
                f'Line search stalled at F^fd={feed_flow:.4g}, '
                f'ω={speed:.4g} (residual {norm:.3g})'
            )
        x, norm = trial, trial_norm
    else:
        if norm >= tol:
            raise ConvergenceError(
                f'No convergence in {max_iter} iterations at '
                f'F^fd={feed_flow:.4g}, ω={speed:.4g} (residual {norm:.3g})'
            )

    permeate, brine, brine_tds, permeate_tds, dosmotic = x
    # The water balance is linear; restate it exactly.
    permeate = feed_flow - brine
    if permeate < 0 or dp_membrane < dosmotic:
        raise InfeasibleOperatingPoint(
            f'Negative permeate flow at F^fd={feed_flow:.4g}, ω={speed:.4g}'
        )
    k_os = cfg.osmotic_coeff
    conc = (cfg.seawater_tds * feed_flow + brine_tds * brine) \
        / (feed_flow + brine)
    return ROState(
        on=True, feed_flow=feed_flow, permeate_flow=permeate,
        brine_flow=brine, feed_head=feed_head, brine_head=brine_head,
        permeate_head=permeate_head, dp_membrane=dp_membrane,
        dosmotic=dosmotic, feed_osm=k_os * cfg.seawater_tds,
        brine_osm=k_os * brine_tds, permeate_osm=k_os * permeate_tds,
        brine_tds=brine_tds, permeate_tds=permeate_tds, conc_side_tds=conc,
        permeate_salt_rate=permeate_tds * permeate, speed=speed,
        residual=float(norm)
    )


def check_ro_bounds(s: ROState, cfg: PlantConfig,
                    permeate_tds_max: Optional[float] = None,
                    hour: Optional[int] = None) -> List[Violation]:
    """
    Check an RO state against the plant bounds.

    ``permeate_tds_max`` overrides the configured cap, so callers can
    apply the cap of a flexibility mode.
    """
    tol = float(config().get('HDP_FLOW_TOL', 1e-6))
    ptol = float(config().get('HDP_PRESSURE_TOL', 1e-4))
    cap = cfg.permeate_tds_max if permeate_tds_max is None \
        else permeate_tds_max
    on = 1.0 if s.on else 0.0
    found: List[Violation] = []

    def _check(name: str, value: float, lo: float, hi: float,
               eps: float = tol) -> None:
        if value < lo - eps:
            found.append(Violation(hour, name, value, lo, 'min'))
        elif value > hi + eps:
            found.append(Violation(hour, name, value, hi, 'max'))

    if s.on:
        _check('recovery', s.recovery, cfg.recovery_min, cfg.recovery_max)
    _check('feed flow', s.feed_flow, cfg.feed_flow_min * on,
           cfg.feed_flow_max * on)
    _check('brine TDS', s.brine_tds, cfg.seawater_tds * on,
           cfg.brine_tds_max * on)
    _check('permeate TDS', s.permeate_tds, 0.0, cap * on)
    _check('brine flow', s.brine_flow, 0.0, s.feed_flow)
    if s.on and s.permeate_head > s.brine_head + ptol:
        found.append(Violation(hour, 'permeate head', s.permeate_head,
                               s.brine_head, 'max'))
    return found
