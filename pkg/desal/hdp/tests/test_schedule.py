"""Tests for :mod:`.schedule`."""

from unittest import TestCase, skipUnless
import os

import numpy as np

from ..domain import FlexibilityMode, FopPoint, FopSet, PwlConfig
from ..pump import check_operating_point, operating_point
from ..ro import check_ro_bounds, simplified_solve
from ..services import source
from ..services.solver import SolverInterface
from .. import milp, schedule

DATA_PATH = os.path.join(os.path.split(os.path.abspath(__file__))[0], 'data')
SOLVER = SolverInterface()
COARSE = PwlConfig(flow_step=50.0, speed_step=0.1, brine_step=40.0,
                   volume_step=360.0, tds_step=0.1)


def load_coarse(hours: int = 6):
    """The fixture case on a short horizon with coarse breakpoints."""
    case = source.load_case(os.path.join(DATA_PATH, 'plant.yaml'))
    case = source.truncate(case, hours)
    return case._replace(config=case.config._replace(pwl=COARSE))


def _row(flows, speed=1.0):
    return FopSet(points=[FopPoint(flow=f, speed=speed, head=0.0, power=0.0,
                                   permeate_flow=0.0, brine_flow=0.0,
                                   brine_tds=0.0, permeate_salt_rate=0.0)
                          for f in flows],
                  flow_step=0.0, speed_step=0.0, permeate_cap=1.0)


class TestFopEnumerate(TestCase):
    """Operating-point enumeration on the fixture plant."""

    @classmethod
    def setUpClass(cls):
        cls.case = source.load_case(os.path.join(DATA_PATH, 'plant.yaml'))
        cls.fops = schedule.fop_enumerate(cls.case, 25.0, 0.05)

    def test_points_are_feasible(self):
        """Every enumerated point passes the pump and RO checks again."""
        cfg = self.case.config
        self.assertGreater(len(self.fops.points), 0)
        self.assertEqual(self.fops.permeate_cap, cfg.plant.permeate_tds_max)
        for p in self.fops.points:
            pump = operating_point(self.case.curve, p.flow, p.speed)
            self.assertEqual(check_operating_point(
                self.case.curve, cfg.limits, cfg.plant, pump, True), [])
            state = simplified_solve(p.flow, None, p.speed, self.case.curve,
                                     cfg.plant)
            self.assertEqual(check_ro_bounds(state, cfg.plant,
                                             self.fops.permeate_cap), [])
            self.assertAlmostEqual(p.flow, p.permeate_flow + p.brine_flow)

    def test_prune_keeps_non_dominated(self):
        pruned = schedule.fop_enumerate(self.case, 25.0, 0.05, prune=True)
        self.assertLessEqual(len(pruned.points), len(self.fops.points))
        self.assertGreater(len(pruned.points), 0)
        kept = {(p.flow, p.speed) for p in pruned.points}
        self.assertTrue(kept <= {(p.flow, p.speed) for p in self.fops.points})
        for p in pruned.points:
            for q in pruned.points:
                beats = q.power <= p.power \
                    and q.permeate_flow >= p.permeate_flow \
                    and q.permeate_salt_rate <= p.permeate_salt_rate \
                    and (q.power < p.power or q.permeate_flow > p.permeate_flow
                         or q.permeate_salt_rate < p.permeate_salt_rate)
                self.assertFalse(beats)

    def test_no_feasible_point(self):
        with self.assertRaises(schedule.EmptyFopSet):
            schedule.fop_enumerate(self.case, 25.0, 0.05, permeate_cap=1e-6)

    def test_bad_step(self):
        with self.assertRaises(ValueError):
            schedule.fop_enumerate(self.case, 0.0, 0.05)

    def test_snapping_error(self):
        """Snapping to the nearest point costs little pump power."""
        self.assertLess(schedule.fop_power_error(self.case, self.fops), 0.02)

    def test_snapping_error_shrinks_with_spacing(self):
        coarse = schedule.fop_power_error(self.case, _row([200.0, 300.0]))
        fine = schedule.fop_power_error(self.case,
                                        _row([200.0, 225.0, 250.0, 275.0,
                                              300.0]))
        self.assertGreater(fine, 0.0)
        self.assertLess(fine, coarse)
        self.assertEqual(schedule.fop_power_error(self.case, _row([250.0])),
                         0.0)


class TestDiagnose(TestCase):
    """Capacity margins reported for infeasible cases."""

    def test_margins(self):
        case = source.load_case(os.path.join(DATA_PATH, 'plant.yaml'))
        found = schedule.diagnose(case)
        self.assertTrue(found[0].startswith('demand 1400'))
        self.assertEqual(len(found), 1)

        found = schedule.diagnose(source.scale_demand(case, 1e5))
        self.assertTrue(any('exceeds stored water' in m for m in found))


class TestSweep(TestCase):
    """Sweep bookkeeping that needs no solver."""

    @classmethod
    def setUpClass(cls):
        cls.case = load_coarse()

    def test_infeasible_cells_blank(self):
        result = schedule.sensitivity_sweep(self.case, [1e6], [6250.0, 6300.0])
        self.assertEqual(result.cost_delta.shape, (1, 2))
        self.assertTrue(np.all(np.isnan(result.cost_delta)))
        self.assertTrue(np.all(np.isnan(result.end_tds_delta)))
        self.assertEqual(set(result.failures), {(0, 0), (0, 1)})

    def test_empty_grid(self):
        with self.assertRaises(schedule.InvalidGrid):
            schedule.sensitivity_sweep(self.case, [], [6250.0])


@skipUnless(SOLVER.available(), 'no MILP solver installed')
class TestScheduling(TestCase):
    """Solved scheduling runs on a short horizon."""

    @classmethod
    def setUpClass(cls):
        cls.case = load_coarse()
        forecast = milp.forecast_scenario(cls.case)
        cls.scenarios = [
            forecast._replace(probability=0.5, index=0),
            forecast._replace(pv=forecast.pv * 0.5,
                              buy_price=forecast.buy_price * 1.2,
                              sell_price=forecast.sell_price * 1.2,
                              probability=0.5, index=1)
        ]
        cls.result = schedule.tdcso(cls.case, cls.scenarios, SOLVER)

    def _tolerance(self, *costs):
        return 2 * SOLVER.mip_gap * max(abs(c) for c in costs) + 1e-6

    def test_deterministic(self):
        sched, report = schedule.schedule_deterministic(
            self.case, FlexibilityMode.MixIni, SOLVER)
        self.assertEqual(sched.horizon, 6)
        self.assertEqual(len(report.states), 6)
        self.assertAlmostEqual(report.scheduled_production,
                               sched.production())

    def test_commitment_shared(self):
        plan = self.result.commitment
        self.assertEqual(len(self.result.schedules), 2)
        for sched in self.result.schedules:
            self.assertEqual(tuple(int(u) for u in sched.on), plan.on)
            self.assertEqual(sched.mode, FlexibilityMode.MixFlexIni)
        self.assertEqual(set(self.result.timings), {'step1', 'step2', 'total'})

    def test_expected_cost(self):
        result = self.result
        self.assertAlmostEqual(
            result.expected_cost,
            sum(p * s.cost
                for p, s in zip(result.probabilities, result.schedules)))

    def test_flexible_dispatch_no_dearer(self):
        """Under the same plan, MixFlexIni costs no more than MixIni."""
        strict = schedule.dispatch(self.case, FlexibilityMode.MixIni,
                                   self.scenarios, self.result.commitment,
                                   SOLVER)
        for flex, base in zip(self.result.schedules, strict):
            self.assertLessEqual(flex.cost,
                                 base.cost + self._tolerance(flex.cost,
                                                             base.cost))

    def test_expected_cost_bounded_below(self):
        """The fixed plan costs at least the free optimum per scenario."""
        bound = 0.0
        for scenario in self.scenarios:
            model = milp.build(self.case, FlexibilityMode.MixFlexIni, None,
                               [scenario._replace(probability=1.0)])
            free = milp.solve(model, SOLVER).cost
            bound += scenario.probability * (free - self._tolerance(free))
        self.assertGreaterEqual(self.result.expected_cost, bound)

    def test_solved_sweep(self):
        """Flexible mixing never raises the verified cost per cell."""
        result = schedule.sensitivity_sweep(
            self.case, [150.0, 205.0, 260.0], [6200.0, 6250.0, 6300.0],
            SOLVER)
        self.assertEqual(result.cost_delta.shape, (3, 3))
        solved = result.cost_delta[~np.isnan(result.cost_delta)]
        self.assertTrue(solved.size)
        allowance = 100 * 2 * SOLVER.mip_gap + 0.5
        self.assertTrue(np.all(solved <= allowance), solved)

    def test_verify_scenarios(self):
        reports = schedule.verify_scenarios(self.result, self.case,
                                            self.scenarios)
        self.assertEqual(len(reports), 2)

    def test_fop_schedule(self):
        """Each on hour runs at one enumerated point."""
        fops = schedule.fop_enumerate(self.case, 25.0, 0.05)
        sched = schedule.fop_schedule(self.case, FlexibilityMode.MixIni,
                                      fops, SOLVER)
        points = {(round(p.flow, 6), round(p.speed, 6)) for p in fops.points}
        for t in np.flatnonzero(sched.on):
            self.assertIn((round(sched.feed_flow[t], 6),
                           round(sched.speed[t], 6)), points)
        report = schedule.verify(sched, self.case)
        self.assertFalse([v for v in report.violations
                          if v.quantity.startswith('pump')])


@skipUnless(SOLVER.available(), 'no MILP solver installed')
class TestVerifiedSchedules(TestCase):
    """Every mode's schedule holds up under the full plant model."""

    QUALITY = {'tank emptied', 'tank TDS', 'outflow TDS'}

    @classmethod
    def setUpClass(cls):
        cls.case = load_coarse()
        cls.runs = {mode: schedule.schedule_deterministic(cls.case, mode,
                                                          SOLVER)
                    for mode in FlexibilityMode}

    def test_demand_and_tank(self):
        """Tank volume may drift by the production shortfall only."""
        tank = self.case.config.tank
        for mode, (_, report) in self.runs.items():
            self.assertFalse([v for v in report.violations
                              if v.quantity in self.QUALITY], mode)
            slack = 0.03 * report.scheduled_production + 1e-6
            for state in report.tanks:
                self.assertGreaterEqual(state.volume, tank.min_level - slack)
                self.assertLessEqual(state.volume, tank.capacity + slack)
            self.assertTrue(np.all(report.outflow_tds
                                   <= self.case.config.plant.outflow_tds_max
                                   + 1e-6))

    def test_production_not_overstated(self):
        """Verified production matches the plan within breakpoint error."""
        for mode, (_, report) in self.runs.items():
            self.assertGreaterEqual(report.verified_production,
                                    0.97 * report.scheduled_production, mode)

    def test_end_tds_closed(self):
        initial = self.case.config.tank.initial_tds
        for mode in (FlexibilityMode.MixIni, FlexibilityMode.MixFlexIni):
            self.assertLessEqual(self.runs[mode][1].end_tds, initial + 1e-6)

    def test_flexible_prorated_cost(self):
        """
        MixFlexIni is no dearer than MixIni once verified. The allowance
        covers the two plans verifying at slightly different production.
        """
        flex = self.runs[FlexibilityMode.MixFlexIni][1].prorated_cost
        base = self.runs[FlexibilityMode.MixIni][1].prorated_cost
        self.assertLessEqual(flex, base * 1.005 + 1e-6)


@skipUnless(SOLVER.available(), 'no MILP solver installed')
class TestFopCrossCheck(TestCase):
    """The linearized schedule against the best enumerated-point schedule."""

    def test_costs_agree(self):
        case = source.truncate(
            source.load_case(os.path.join(DATA_PATH, 'plant.yaml')), 6)
        solver = SolverInterface(mip_gap=1e-3)
        mode = FlexibilityMode.MixIni
        _, linearized = schedule.schedule_deterministic(case, mode, solver)
        fops = schedule.fop_enumerate(case, 5.0, 0.002)
        enumerated = schedule.verify(
            schedule.fop_schedule(case, mode, fops, solver), case)
        self.assertLessEqual(
            abs(linearized.prorated_cost - enumerated.prorated_cost),
            0.02 * enumerated.prorated_cost)
