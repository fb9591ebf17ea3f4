"""
Domain classes for the desalination plant scheduler.

Units are fixed throughout the package: flows in m³/hr, pressures and
heads in kPa, TDS in kg/m³, salt rates in kg/hr, power in kW (reactive
power in kvar), energy in kWh, prices in $/kWh. Network quantities inside
:class:`NetworkModel` are per unit on ``base_kva``.
"""

from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from mypy_extensions import TypedDict


class TimeGrid(NamedTuple):
    """Scheduling horizon: ``horizon_steps`` steps of ``step_hours``."""

    horizon_steps: int = 24
    step_hours: float = 1.0


class PlantConfig(NamedTuple):
    """RO train parameters."""

    seawater_tds: float
    """S^fd, kg/m³."""
    feed_pressure_min: float
    """H^fd_min, kPa."""
    feed_pressure_max: float
    permeate_pressure_set: float
    friction_coeff: float
    """Brine-side pressure retained along the vessel (k^fric_H)."""
    osmotic_coeff: float
    """k^os, kPa per kg/m³."""
    cp_factor: float
    """Concentration polarization factor C^cp."""
    water_perm_coeff: float
    """k^ro_W, m³/hr per kPa (temperature factor folded in)."""
    salt_perm_coeff: float
    """k^ro_S, m³/hr (temperature factor folded in)."""
    recovery_min: float
    recovery_max: float
    feed_flow_min: float
    feed_flow_max: float
    brine_tds_max: float
    permeate_tds_max: float
    """Permeate TDS cap when mixing flexibility is enabled."""
    outflow_tds_max: float

    @property
    def permeate_flow_max(self) -> float:
        """Largest permeate flow, F^fd_max · R^rec_max."""
        return self.feed_flow_max * self.recovery_max


class TankConfig(NamedTuple):
    """Permeate storage tank."""

    capacity: float
    min_level: float
    initial_level: float
    initial_tds: float
    flush_tds_estimate: float
    """TDS assumed for water drawn for flushing."""

    @property
    def initial_salt(self) -> float:
        return self.initial_level * self.initial_tds


class FlushConfig(NamedTuple):
    """Flushing quantities and the minimum off duration."""

    water_shutdown: float
    water_restart: float
    energy_shutdown: float = 25.0
    energy_restart: float = 25.0
    min_off_hours: int = 2
    initial_on: bool = True
    """Plant status in the hour before the horizon."""


class PumpCurve(NamedTuple):
    """
    Per-stage pump polynomials at nominal speed.

    Head is ``n_stages * (a2 F² + a1 F ω + a0 ω²)`` and shaft power is
    ``n_stages * (b2 F² ω + b1 F ω² + b0 ω³)``.
    """

    a2: float
    a1: float
    a0: float
    b2: float
    b1: float
    b0: float
    n_stages: int = 1
    residual: float = 0.0
    """Largest relative residual of the fit that produced the curve."""


class PumpLimits(NamedTuple):
    """Operating envelope of the high-pressure pump system."""

    flow_max_nominal: float
    speed_min: float
    speed_max: float
    power_max: float
    motor_eff: float
    vfd_eff: float
    q_over_p: float


class PumpPoint(NamedTuple):
    """An operating point of the high-pressure pump."""

    flow: float
    head: float
    power: float
    speed: float


class ROState(NamedTuple):
    """Steady state of the RO train in one hour."""

    on: bool = False
    feed_flow: float = 0.0
    permeate_flow: float = 0.0
    brine_flow: float = 0.0
    feed_head: float = 0.0
    brine_head: float = 0.0
    permeate_head: float = 0.0
    dp_membrane: float = 0.0
    dosmotic: float = 0.0
    feed_osm: float = 0.0
    brine_osm: float = 0.0
    permeate_osm: float = 0.0
    brine_tds: float = 0.0
    permeate_tds: float = 0.0
    conc_side_tds: float = 0.0
    permeate_salt_rate: float = 0.0
    speed: float = 0.0
    residual: float = 0.0
    """Largest scaled equation residual at the returned state."""
    flags: Tuple[str, ...] = ()

    @property
    def recovery(self) -> float:
        if self.feed_flow <= 0:
            return 0.0
        return self.permeate_flow / self.feed_flow


class TankState(NamedTuple):
    """Tank contents at an hour boundary."""

    volume: float
    tds: float
    salt_mass: float

    @classmethod
    def from_tds(cls, volume: float, tds: float) -> 'TankState':
        return cls(volume, tds, volume * tds)


class CommitmentPlan(NamedTuple):
    """On/off status with shutdown and restart indicators."""

    on: Tuple[int, ...]
    shut: Tuple[int, ...]
    start: Tuple[int, ...]


class Violation(NamedTuple):
    """A bound or logic check that failed."""

    hour: Optional[int]
    quantity: str
    value: float
    bound: float
    sense: str
    """``min``, ``max`` or ``eq``."""

    def __str__(self) -> str:
        where = 'horizon' if self.hour is None else f'hour {self.hour + 1}'
        return (f'{where}: {self.quantity}={self.value:.6g} violates '
                f'{self.sense} {self.bound:.6g}')


class Line(NamedTuple):
    """A distribution line, impedance in per unit."""

    from_node: int
    to_node: int
    r: float
    x: float
    s_max: float


class NetworkModel(NamedTuple):
    """Radial distribution feeder with the HDP coupling node."""

    nodes: Tuple[int, ...]
    lines: Tuple[Line, ...]
    substation: int
    hdp_node: int
    vsq_min: float
    vsq_max: float
    vsq_sub: float
    base_kva: float

    def node_index(self, node: int) -> int:
        return self.nodes.index(node)


class GridConfig(NamedTuple):
    """Feeder settings and the co-located PV system."""

    network: str
    peak_load: str
    load_profile: str
    base_kv: float
    base_kva: float
    substation_node: int
    hdp_node: int
    v_min: float = 0.95
    v_max: float = 1.05
    v_substation: float = 1.0
    pv_rating: float = 1000.0
    pv_forecast_eps: float = 0.0
    """Forecasts may exceed the rating by this fraction."""


class SeriesPaths(NamedTuple):
    """Hourly input files, relative to the config document."""

    buy_price: str
    pv_forecast: str
    water_demand: str
    sell_price: Optional[str] = None
    base_load: Optional[str] = None
    sell_ratio: float = 0.5


class PwlConfig(NamedTuple):
    """Breakpoint spacing of the linearized surfaces."""

    flow_step: float = 25.0
    speed_step: float = 0.05
    brine_step: float = 20.0
    volume_step: float = 180.0
    tds_step: float = 0.05


class ScenarioConfig(NamedTuple):
    """Joint PV/price uncertainty settings."""

    count: int = 2000
    reduced: int = 10
    seed: int = 7
    pv_range: float = 0.2
    """Deviation range as a fraction of forecast (±2σ)."""
    price_range: float = 0.15
    rank_correlation: float = 0.0
    autocorrelation: float = 0.8


class SolverSettings(NamedTuple):
    name: str = 'appsi_highs'
    mip_gap: float = 1e-4
    time_limit: Optional[float] = None


class PumpSection(NamedTuple):
    """Pump curve source plus envelope."""

    curve: str
    n_stages: int
    limits: PumpLimits


class CaseConfig(NamedTuple):
    """Everything a config document describes."""

    plant: PlantConfig
    tank: TankConfig
    flush: FlushConfig
    pump: PumpSection
    grid: GridConfig
    time: TimeGrid
    series: SeriesPaths
    pwl: PwlConfig = PwlConfig()
    scenarios: ScenarioConfig = ScenarioConfig()
    solver: SolverSettings = SolverSettings()
    base_path: str = '.'

    @property
    def limits(self) -> PumpLimits:
        return self.pump.limits


class MarketSeries(NamedTuple):
    """Hourly prices, PV forecast, base load and water demand."""

    buy_price: np.ndarray
    sell_price: np.ndarray
    pv_forecast: np.ndarray
    base_load_p: np.ndarray
    """Shape (T, nodes), kW, ordered as :attr:`NetworkModel.nodes`."""
    base_load_q: np.ndarray
    water_demand: np.ndarray


class Case(NamedTuple):
    """A loaded case: configuration, series, feeder and fitted pump."""

    config: CaseConfig
    series: MarketSeries
    network: NetworkModel
    curve: PumpCurve


class FlexibilityMode(Enum):
    """Tank-mixing and permeate-quality settings of a scheduling run."""

    NoMix = 'NoMix'
    MixIni = 'MixIni'
    MixFlex = 'MixFlex'
    MixFlexIni = 'MixFlexIni'

    @property
    def tank_mixing(self) -> bool:
        return self is not FlexibilityMode.NoMix

    @property
    def end_tds_closure(self) -> bool:
        return self in (FlexibilityMode.MixIni, FlexibilityMode.MixFlexIni)

    @property
    def flexible_permeate(self) -> bool:
        return self in (FlexibilityMode.MixFlex, FlexibilityMode.MixFlexIni)

    def permeate_cap(self, plant: PlantConfig) -> float:
        """Effective S^pe_max for this mode."""
        if self.flexible_permeate:
            return plant.permeate_tds_max
        return plant.outflow_tds_max


class Schedule(NamedTuple):
    """Hourly decision trajectory returned by a scheduling solve."""

    mode: FlexibilityMode
    on: np.ndarray
    shut: np.ndarray
    start: np.ndarray
    speed: np.ndarray
    feed_flow: np.ndarray
    permeate_flow: np.ndarray
    brine_flow: np.ndarray
    brine_tds: np.ndarray
    permeate_salt_rate: np.ndarray
    feed_head: np.ndarray
    pump_power: np.ndarray
    hps_power: np.ndarray
    flush_water: np.ndarray
    flush_energy: np.ndarray
    tank_volume: np.ndarray
    """End-of-hour volume."""
    tank_tds: Optional[np.ndarray]
    """End-of-hour TDS; ``None`` when tank mixing is not modeled."""
    outflow_tds: Optional[np.ndarray]
    pv_power: np.ndarray
    pv_reactive: np.ndarray
    hdp_power: np.ndarray
    grid_buy: np.ndarray
    grid_sell: np.ndarray
    cost: float
    status: str = 'optimal'
    gap: Optional[float] = None
    scenario: Optional[int] = None

    @property
    def horizon(self) -> int:
        return len(self.on)

    def production(self, step_hours: float = 1.0) -> float:
        return float(np.sum(self.permeate_flow) * step_hours)


class VerifiedReport(NamedTuple):
    """A schedule executed through the full plant model."""

    states: List[ROState]
    tanks: List[TankState]
    """Tank trajectory including the initial state."""
    outflow_tds: np.ndarray
    hps_power: np.ndarray
    hdp_power: np.ndarray
    flush_water: np.ndarray
    hourly_cost: np.ndarray
    verified_cost: float
    prorated_cost: float
    verified_production: float
    scheduled_production: float
    required_production: float
    end_tds: float
    min_vsq: float
    violations: List[Violation]

    @property
    def production_delta(self) -> float:
        return self.verified_production - self.scheduled_production


class Scenario(NamedTuple):
    """A joint PV and price trajectory with its probability."""

    pv: np.ndarray
    buy_price: np.ndarray
    sell_price: np.ndarray
    probability: float
    index: int = 0


class FopPoint(NamedTuple):
    """A feasible operating point of the plant."""

    flow: float
    speed: float
    head: float
    power: float
    permeate_flow: float
    brine_flow: float
    brine_tds: float
    permeate_salt_rate: float

    @property
    def permeate_tds(self) -> float:
        return self.permeate_salt_rate / self.permeate_flow


class FopSet(NamedTuple):
    """Enumerated operating points on a flow/speed segmentation."""

    points: List[FopPoint]
    flow_step: float
    speed_step: float
    permeate_cap: float


class TdcsoResult(NamedTuple):
    """Outcome of the two-step stochastic scheduling algorithm."""

    commitment: CommitmentPlan
    schedules: List[Schedule]
    probabilities: List[float]
    expected_cost: float
    step1_cost: float
    timings: Dict[str, float]


class ErrorMap(NamedTuple):
    """Simplified-minus-full model errors over a flow/speed grid."""

    flows: np.ndarray
    speeds: np.ndarray
    dfpe: np.ndarray
    """Shape (flows, speeds); NaN where the full model did not solve."""
    dspe: np.ndarray
    feasible: np.ndarray


RunManifest = TypedDict(
    'RunManifest',
    {
        'command': str,
        'version': str,
        'inputs': Dict[str, str],
        'seed': Optional[int],
        'solver': Dict[str, Any],
        'outputs': List[str],
        'timings': Dict[str, float]
    }
)
