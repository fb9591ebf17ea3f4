"""
Variable-speed multistage high-pressure pump.

The pump is characterized at nominal speed by quadratic head and power
curves. Other speeds follow the affinity laws: flow scales with speed,
head with its square and shaft power with its cube, which is why
:func:`eval_head` and :func:`eval_power` are homogeneous of degree two and
three in (flow, speed).
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from arxiv.base.globals import get_application_config as config
from arxiv.base import logging

from .domain import PlantConfig, PumpCurve, PumpLimits, PumpPoint, Violation

logger = logging.getLogger(__name__)

KPA_M3HR_PER_KW = 3600.0
"""Hydraulic power in kW is flow [m³/hr] times head [kPa] over this."""

MIN_DISTINCT_FLOWS = 4
"""Fewest distinct nominal flows accepted by the curve fit."""


class PumpFitError(Exception):
    """The nominal-speed samples cannot support a quadratic fit."""


def fit_pump_curves(nominal_points: Sequence[Tuple[float, float, float]],
                    n_stages: int,
                    max_residual: Optional[float] = None) -> PumpCurve:
    """
    Fit per-stage head and power polynomials to nominal-speed samples.

    Parameters
    ----------
    nominal_points : sequence
        ``(flow, head, power)`` triples measured at ω = 1, for the whole
        pump (all stages).
    n_stages : int
        Number of pump stages; coefficients are returned per stage.
    max_residual : float
        Largest relative residual accepted. Defaults to
        ``HDP_PUMP_FIT_RESIDUAL``.

    Returns
    -------
    :class:`.PumpCurve`

    Raises
    ------
    :class:`PumpFitError`
        If fewer than four distinct flows are given, a flow is negative,
        or the residual exceeds the threshold.

    """
    if n_stages < 1:
        raise PumpFitError(f'n_stages must be at least 1, got {n_stages}')
    if max_residual is None:
        max_residual = float(config().get('HDP_PUMP_FIT_RESIDUAL', 0.05))
    data = np.asarray(nominal_points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise PumpFitError('Expected (flow, head, power) triples')
    flow, head, power = data.T
    if np.any(flow < 0):
        raise PumpFitError('Pump curve flows must be non-negative')

    distinct = len(np.unique(flow))
    if distinct < MIN_DISTINCT_FLOWS:
        raise PumpFitError(f'Need at least {MIN_DISTINCT_FLOWS} distinct '
                           f'flows, got {distinct}')
    design = np.column_stack([flow ** 2, flow, np.ones_like(flow)])
    head_coef, *_ = np.linalg.lstsq(design, head, rcond=None)
    power_coef, *_ = np.linalg.lstsq(design, power, rcond=None)

    residual = max(_max_relative(design @ head_coef, head),
                   _max_relative(design @ power_coef, power))
    logger.debug('Pump fit over %i points, residual %.4g',
                 len(flow), residual)
    if residual > max_residual:
        raise PumpFitError(f'Fit residual {residual:.4g} exceeds '
                           f'{max_residual:.4g}')

    a2, a1, a0 = head_coef / n_stages
    b2, b1, b0 = power_coef / n_stages
    return PumpCurve(a2=float(a2), a1=float(a1), a0=float(a0),
                     b2=float(b2), b1=float(b1), b0=float(b0),
                     n_stages=n_stages, residual=float(residual))


def _max_relative(fitted: np.ndarray, observed: np.ndarray) -> float:
    scale = np.maximum(np.abs(observed), np.finfo(float).tiny)
    return float(np.max(np.abs(fitted - observed) / scale))


def affinity_scale(p: PumpPoint, target_speed: float) -> PumpPoint:
    """Move ``p`` along its affinity parabola to ``target_speed``."""
    if p.speed <= 0 or target_speed <= 0:
        raise ValueError('Affinity scaling needs positive speeds')
    r = target_speed / p.speed
    return PumpPoint(flow=p.flow * r, head=p.head * r ** 2,
                     power=p.power * r ** 3, speed=target_speed)


def eval_head(curve: PumpCurve, flow: float, speed: float) -> float:
    """Pump head in kPa at ``flow`` and normalized ``speed``."""
    return curve.n_stages * (curve.a2 * flow ** 2 + curve.a1 * flow * speed
                             + curve.a0 * speed ** 2)


def eval_power(curve: PumpCurve, flow: float, speed: float) -> float:
    """Shaft power in kW at ``flow`` and normalized ``speed``."""
    return curve.n_stages * (curve.b2 * flow ** 2 * speed
                             + curve.b1 * flow * speed ** 2
                             + curve.b0 * speed ** 3)


def operating_point(curve: PumpCurve, flow: float, speed: float) -> PumpPoint:
    return PumpPoint(flow=flow, head=eval_head(curve, flow, speed),
                     power=eval_power(curve, flow, speed), speed=speed)


def check_operating_point(curve: PumpCurve, limits: PumpLimits,
                          plant: PlantConfig, p: PumpPoint, on: bool,
                          hour: Optional[int] = None) -> List[Violation]:
    """
    Check a pump point against the operating envelope.

    The head window comes from the plant's feed-pressure range. When the
    pump is on, the point must also sit on the pump curve.
    """
    tol = float(config().get('HDP_FLOW_TOL', 1e-6))
    ptol = float(config().get('HDP_PRESSURE_TOL', 1e-4))
    found: List[Violation] = []

    def _check(name: str, value: float, lo: float, hi: float,
               eps: float) -> None:
        if value < lo - eps:
            found.append(Violation(hour, name, value, lo, 'min'))
        elif value > hi + eps:
            found.append(Violation(hour, name, value, hi, 'max'))

    if not on:
        for name in ('flow', 'head', 'power', 'speed'):
            value = getattr(p, name)
            if abs(value) > tol:
                found.append(Violation(hour, f'pump {name}', value, 0.0,
                                       'eq'))
        return found

    _check('pump speed', p.speed, limits.speed_min, limits.speed_max, tol)
    _check('pump flow', p.flow, 0.0, limits.flow_max_nominal * p.speed, tol)
    _check('pump head', p.head, plant.feed_pressure_min,
           plant.feed_pressure_max, ptol)
    _check('pump power', p.power, 0.0, limits.power_max, tol)

    expected = operating_point(curve, p.flow, p.speed)
    if abs(expected.head - p.head) > ptol * max(1.0, abs(expected.head)):
        found.append(Violation(hour, 'pump head on curve', p.head,
                               expected.head, 'eq'))
    if abs(expected.power - p.power) > tol * max(1.0, abs(expected.power)):
        found.append(Violation(hour, 'pump power on curve', p.power,
                               expected.power, 'eq'))
    return found


def hps_power(p_hpp: float, limits: PumpLimits) -> Tuple[float, float]:
    """Electrical active and reactive power of pump, motor and drive."""
    if p_hpp < 0:
        raise ValueError('Shaft power must be non-negative')
    p_hps = p_hpp / (limits.motor_eff * limits.vfd_eff)
    return p_hps, limits.q_over_p * p_hps


def efficiency(curve: PumpCurve, flow: float, speed: float) -> float:
    """
    Hydraulic efficiency, hydraulic power over shaft power.

    Head is a pressure in kPa here, so hydraulic power is F·H/3600 kW and
    fluid density does not enter.
    """
    if flow == 0:
        return 0.0
    shaft = eval_power(curve, flow, speed)
    if shaft <= 0:
        raise ValueError(f'No shaft power at flow={flow}, speed={speed}')
    return flow * eval_head(curve, flow, speed) / KPA_M3HR_PER_KW / shaft


def max_flow(curve: PumpCurve, limits: PumpLimits, speed: float) -> float:
    """
    Largest flow the pump delivers at ``speed`` with positive head.

    This is the hydraulic envelope, F ≤ F^hpp_max·ω cut by the shutoff
    flow of the head curve; the power rating is not applied.
    """
    if speed <= 0:
        return 0.0
    roots = np.roots([curve.a2, curve.a1, curve.a0])
    shutoff = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0]
    per_speed = limits.flow_max_nominal
    if shutoff:
        per_speed = min(per_speed, max(shutoff))
    return per_speed * speed
