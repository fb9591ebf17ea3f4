"""Tests for :mod:`.pwl`."""

from unittest import TestCase, skipUnless
import os

import numpy as np
import pyomo.environ as pyo

from ..services import source
from ..services.solver import SolverInterface
from ..pump import eval_power
from .. import milp, pwl

DATA_PATH = os.path.join(os.path.split(os.path.abspath(__file__))[0], 'data')
SOLVER = SolverInterface()


def _product(x, y):
    return x * y


class TestBreakpoints(TestCase):
    """Breakpoint grids."""

    def test_whole_steps(self):
        np.testing.assert_allclose(pwl.breakpoints(100, 300, 50),
                                   [100, 150, 200, 250, 300])

    def test_short_last_interval(self):
        breaks = pwl.breakpoints(0.0, 1.0, 0.3)
        np.testing.assert_allclose(breaks, [0.0, 0.3, 0.6, 0.9, 1.0])

    def test_step_larger_than_range(self):
        np.testing.assert_allclose(pwl.breakpoints(0.7, 0.75, 0.1),
                                   [0.7, 0.75])

    def test_bad_range(self):
        with self.assertRaises(pwl.PwlDomainError):
            pwl.breakpoints(1.0, 1.0, 0.1)
        with self.assertRaises(pwl.PwlDomainError):
            pwl.breakpoints(0.0, 1.0, 0.0)


class TestSurface(TestCase):
    """Tabulation and interpolation."""

    def setUp(self):
        self.s = pwl.tabulate(_product, [0.0, 1.0, 2.0, 4.0],
                              [0.0, 2.0, 3.0], 'product')

    def test_tabulate(self):
        self.assertEqual(self.s.shape, (4, 3))
        self.assertEqual(self.s.z_grid[3, 2], 12.0)

    def test_undefined_vertex(self):
        with self.assertRaises(pwl.PwlDomainError):
            pwl.tabulate(lambda x, y: x / y, [1.0, 2.0], [0.0, 1.0])

    def test_breaks_must_increase(self):
        with self.assertRaises(pwl.PwlDomainError):
            pwl.tabulate(_product, [0.0, 0.0, 1.0], [0.0, 1.0])

    def test_exact_at_vertices(self):
        for method in pwl.METHODS.values():
            for m, x in enumerate(self.s.x_breaks):
                for n, y in enumerate(self.s.y_breaks):
                    self.assertAlmostEqual(method(self.s, x, y),
                                           self.s.z_grid[m, n], places=12)

    def test_linear_function_reproduced(self):
        """Triangles reproduce an affine function everywhere."""
        s = pwl.tabulate(lambda x, y: 3 * x - 2 * y + 1,
                         [0.0, 1.0, 2.5], [0.0, 0.5, 2.0])
        rng = np.random.default_rng(2)
        for x, y in rng.uniform([0, 0], [2.5, 2.0], size=(200, 2)):
            self.assertAlmostEqual(pwl.interpolate(s, x, y),
                                   3 * x - 2 * y + 1, places=10)

    def test_diagonal_belongs_to_lower_triangle(self):
        """On a patch diagonal both triangles give the same value."""
        x, y = 0.5, 1.0
        lower = self.s.z_grid[0, 0] + 0.5 * (self.s.z_grid[1, 0]
                                             - self.s.z_grid[0, 0]) \
            + 0.5 * (self.s.z_grid[1, 1] - self.s.z_grid[1, 0])
        self.assertAlmostEqual(pwl.interpolate(self.s, x, y), lower)

    def test_outside_domain(self):
        with self.assertRaises(pwl.PwlDomainError):
            pwl.interpolate(self.s, 4.5, 1.0)
        with self.assertRaises(pwl.PwlDomainError):
            pwl.interpolate_univariate(self.s, 1.0, -0.1)

    def test_error_report(self):
        samples = [(0.5, 0.5), (3.0, 2.5), (1.5, 1.0)]
        max_abs, max_rel = pwl.error_report(self.s, _product, samples)
        self.assertGreater(max_abs, 0.0)
        self.assertGreaterEqual(max_rel, max_abs / 12.0)
        # Bilinear interpolation is exact for a product.
        max_abs, _ = pwl.error_report(self.s, _product, samples, 'rectangle')
        self.assertAlmostEqual(max_abs, 0.0, places=12)


class TestPumpSurfaces(TestCase):
    """Linearization of the fixture pump."""

    @classmethod
    def setUpClass(cls):
        cls.case = source.load_case(os.path.join(DATA_PATH, 'plant.yaml'))
        cls.surfaces = milp.default_surfaces(cls.case)

    def test_power_error_on_default_grid(self):
        """Pump power is within 1% on the default breakpoint spacing."""
        s = self.surfaces.pump_power
        rng = np.random.default_rng(0)
        samples = rng.uniform([s.x_breaks[0], s.y_breaks[0]],
                              [s.x_breaks[-1], s.y_breaks[-1]],
                              size=(2000, 2))
        _, max_rel = pwl.error_report(
            s, lambda f, w: eval_power(self.case.curve, f, w), samples)
        self.assertLess(max_rel, 0.01)

    def test_speed_window_reaches_feed_pressure(self):
        """Head breakpoints span the feed-pressure window."""
        s = self.surfaces.pump_head
        plant = self.case.config.plant
        self.assertLessEqual(s.z_grid.min(), plant.feed_pressure_min)
        self.assertGreaterEqual(s.z_grid.max(), plant.feed_pressure_max)


class TestBlock(TestCase):
    """Triangle-selection blocks."""

    def setUp(self):
        self.s = pwl.tabulate(_product, [0.0, 1.0, 2.0, 4.0],
                              [0.0, 2.0, 3.0], 'product')
        self.model = pyo.ConcreteModel()

    def test_structure(self):
        handles = pwl.emit_milp_block(self.s, 1, self.model, 'blk')
        blk = handles.block
        self.assertIs(blk, self.model.blk)
        self.assertEqual(len(blk.lam), 12)
        self.assertEqual(len(blk.u_lo) + len(blk.u_up), 2 * 3 * 2)
        self.assertEqual(len(blk.activation), 12)
        self.assertEqual(len(handles.z), 1)

    def test_shared_grid(self):
        other = pwl.tabulate(lambda x, y: x + y, self.s.x_breaks,
                             self.s.y_breaks, 'sum')
        handles = pwl.emit_milp_block((self.s, other), 1, self.model, 'blk')
        self.assertEqual(len(handles.z), 2)
        self.assertTrue(hasattr(self.model.blk, 'z1'))

    def test_grid_mismatch(self):
        other = pwl.tabulate(_product, [0.0, 1.0], [0.0, 1.0], 'small')
        with self.assertRaises(pwl.PwlDomainError):
            pwl.emit_milp_block((self.s, other), 1, self.model, 'blk')

    def test_other_methods_not_emitted(self):
        with self.assertRaises(NotImplementedError):
            pwl.emit_milp_block(self.s, 1, self.model, 'blk', 'rectangle')

    def test_check_block_solution(self):
        """Weights must sit on the corners of the one selected triangle."""
        blk = pwl.emit_milp_block(self.s, 1, self.model, 'blk').block
        for var in blk.lam.values():
            var.set_value(0.0)
        for var in list(blk.u_lo.values()) + list(blk.u_up.values()):
            var.set_value(0)
        blk.u_lo[1, 0].set_value(1)
        blk.lam[1, 0].set_value(0.5)
        blk.lam[2, 0].set_value(0.25)
        blk.lam[2, 1].set_value(0.25)
        self.assertIsNone(pwl.check_block_solution(blk, 1.0))

        blk.lam[1, 1].set_value(0.25)
        blk.lam[1, 0].set_value(0.25)
        self.assertIn('more than one triangle',
                      pwl.check_block_solution(blk, 1.0))

        blk.u_up[0, 0].set_value(1)
        self.assertIn('2 triangles', pwl.check_block_solution(blk, 1.0))
        self.assertIn('sum to', pwl.check_block_solution(blk, 0.0))

    @skipUnless(SOLVER.available(), 'no MILP solver installed')
    def test_solved_block_interpolates(self):
        """A solved block reproduces triangular interpolation."""
        handles = pwl.emit_milp_block(self.s, 1, self.model, 'blk')
        self.model.fix_x = pyo.Constraint(expr=handles.x == 1.3)
        self.model.fix_y = pyo.Constraint(expr=handles.y == 2.7)
        self.model.obj = pyo.Objective(expr=handles.z[0])
        SOLVER.solve(self.model)
        self.assertAlmostEqual(pyo.value(handles.z[0]),
                               pwl.interpolate(self.s, 1.3, 2.7), places=5)
        self.assertIsNone(pwl.check_block_solution(self.model.blk, 1.0,
                                                   1e-6))

    @skipUnless(SOLVER.available(), 'no MILP solver installed')
    def test_block_switched_off(self):
        """With the on variable at zero every output is zero."""
        self.model.on = pyo.Var(within=pyo.Binary)
        self.model.on.fix(0)
        handles = pwl.emit_milp_block(self.s, self.model.on, self.model,
                                      'blk')
        self.model.obj = pyo.Objective(expr=-handles.z[0])
        SOLVER.solve(self.model)
        self.assertAlmostEqual(pyo.value(handles.z[0]), 0.0, places=9)
        self.assertAlmostEqual(pyo.value(handles.x), 0.0, places=9)
