"""On/off logic of the plant: shutdown and restart indicators, flushing."""

from typing import List, Sequence, Tuple

import numpy as np

from .domain import CommitmentPlan, FlushConfig, TimeGrid, Violation


def derive_indicators(on: Sequence[int], initial_on: bool) -> CommitmentPlan:
    """
    Derive shutdown and restart indicators from an on/off sequence.

    ``shut[t]`` marks the first off hour after an on hour and ``start[t]``
    the first on hour after an off hour; the hour before the horizon has
    status ``initial_on``.
    """
    status = tuple(int(round(u)) for u in on)
    previous = (int(initial_on),) + status[:-1]
    shut = tuple(p * (1 - u) for p, u in zip(previous, status))
    start = tuple(u * (1 - p) for p, u in zip(previous, status))
    return CommitmentPlan(on=status, shut=shut, start=start)


def flush_consumption(plan: CommitmentPlan, fc: FlushConfig,
                      grid: TimeGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    Flushing water (m³) and energy (kWh) booked in each hour.

    The shutdown flush is booked in the shutdown hour; the restart flush
    in the hour before the restart. A restart after the horizon books
    nothing.
    """
    shut = np.asarray(plan.shut, dtype=float)
    start_next = np.append(np.asarray(plan.start[1:], dtype=float), 0.0)
    water = fc.water_shutdown * shut + fc.water_restart * start_next
    energy = fc.energy_shutdown * shut + fc.energy_restart * start_next
    return water[:grid.horizon_steps], energy[:grid.horizon_steps]


def check_min_off(plan: CommitmentPlan,
                  min_off_hours: int) -> List[Violation]:
    """Every shutdown must be followed by ``min_off_hours`` off hours."""
    found: List[Violation] = []
    horizon = len(plan.on)
    for t, shut in enumerate(plan.shut):
        if not shut:
            continue
        window = plan.on[t:min(t + min_off_hours, horizon)]
        if any(window):
            off_hours = window.index(1) if 1 in window else len(window)
            found.append(Violation(t, 'off duration', off_hours,
                                   min_off_hours, 'min'))
    return found
