"""Tests for :mod:`.source`."""

from unittest import TestCase
import io
import os
import shutil
import tempfile

import numpy as np
import yaml

from ...domain import PwlConfig, SolverSettings
from ...grid import NetworkTopologyError
from .. import source

DATA_PATH = os.path.join(os.path.split(os.path.abspath(__file__))[0], 'data')
CASE_DATA = os.path.join(os.path.split(os.path.abspath(__file__))[0],
                         os.pardir, os.pardir, 'tests', 'data')
CASE_PATH = os.path.join(CASE_DATA, 'plant.yaml')


def _document():
    with open(CASE_PATH) as f:
        return yaml.safe_load(f)


def _load(document):
    return source.load_config(yaml.safe_dump(document), CASE_DATA)


class TestLoadTimeseries(TestCase):
    """Reading ``hour,value`` series."""

    def _path(self, name):
        return os.path.join(DATA_PATH, name)

    def test_fixture_series(self):
        values = source.load_timeseries(os.path.join(CASE_DATA, 'demand.csv'),
                                        24)
        self.assertEqual(values.shape, (24,))
        self.assertEqual(values.sum(), 1400.0)

    def test_wrong_length(self):
        with self.assertRaisesRegex(source.SeriesError, 'expected 24 rows'):
            source.load_timeseries(self._path('short.csv'), 24)

    def test_duplicate_hour(self):
        with self.assertRaisesRegex(source.SeriesError,
                                    'not strictly increasing at row 14'):
            source.load_timeseries(self._path('duplicate.csv'), 24)

    def test_non_numeric(self):
        with self.assertRaisesRegex(source.SeriesError,
                                    "non-numeric value 'abc' in row 7"):
            source.load_timeseries(self._path('nonnumeric.csv'), 24)

    def test_gap(self):
        with self.assertRaisesRegex(source.SeriesError, 'gap'):
            source.load_timeseries(self._path('gap.csv'), 24)

    def test_iso_timestamps(self):
        values = source.load_timeseries(self._path('iso.csv'), 24)
        self.assertEqual(len(values), 24)
        self.assertAlmostEqual(values[1], 0.2)

    def test_missing_column(self):
        stream = io.StringIO('hour,price\n1,0.1\n')
        with self.assertRaisesRegex(source.SeriesError,
                                    'series: missing column value'):
            source.load_timeseries(stream, 1)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            source.load_timeseries(self._path('nope.csv'), 24)


class TestLoadConfig(TestCase):
    """Parsing and validating the case document."""

    def test_defaults(self):
        cfg = _load(_document())
        self.assertEqual(cfg.pwl, PwlConfig())
        self.assertEqual(cfg.solver, SolverSettings())
        self.assertEqual(cfg.tank.flush_tds_estimate, cfg.tank.initial_tds)
        self.assertEqual(cfg.pump.n_stages, 8)
        self.assertEqual(cfg.limits.speed_max, 1.3)
        self.assertEqual(cfg.scenarios.rank_correlation, -0.3)
        self.assertEqual(cfg.base_path, CASE_DATA)

    def test_dump_round_trip(self):
        cfg = _load(_document())
        again = source.load_config(source.dump_config(cfg), CASE_DATA)
        self.assertEqual(again, cfg)

    def test_missing_section(self):
        document = _document()
        del document['tank']
        with self.assertRaisesRegex(source.MissingKey, 'tank'):
            _load(document)

    def test_missing_key(self):
        document = _document()
        del document['plant']['seawater_tds']
        with self.assertRaisesRegex(source.MissingKey, 'plant.seawater_tds'):
            _load(document)
        document = _document()
        del document['pump']['curve']
        with self.assertRaisesRegex(source.MissingKey, 'pump.curve'):
            _load(document)

    def test_unknown_names(self):
        document = _document()
        document['plant']['membrane_age'] = 3
        with self.assertRaisesRegex(source.ConfigValidationError,
                                    'membrane_age'):
            _load(document)
        document = _document()
        document['weather'] = {}
        with self.assertRaisesRegex(source.ConfigValidationError, 'weather'):
            _load(document)

    def test_bad_type(self):
        document = _document()
        document['time']['horizon_steps'] = 'a day'
        with self.assertRaisesRegex(source.ConfigValidationError,
                                    'time.horizon_steps'):
            _load(document)
        document = _document()
        document['flush']['initial_on'] = 'yes please'
        with self.assertRaises(source.ConfigValidationError):
            _load(document)

    def test_bounds(self):
        """Every violated bound is reported together."""
        document = _document()
        document['tank']['min_level'] = 5000.0
        document['plant']['recovery_min'] = 0.6
        with self.assertRaises(source.ConfigValidationError) as caught:
            _load(document)
        message = str(caught.exception)
        self.assertIn('tank levels', message)
        self.assertIn('recovery_min', message)
        self.assertEqual(message.count(';'), 1)

    def test_not_a_document(self):
        with self.assertRaises(source.ConfigError):
            source.load_config('plant: [')
        with self.assertRaises(source.ConfigError):
            source.load_config('- just\n- a list\n')


class TestLoadCase(TestCase):
    """Loading the fixture case and variants of it."""

    @classmethod
    def setUpClass(cls):
        cls.case = source.load_case(CASE_PATH)

    def setUp(self):
        self.workdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.workdir)

    def _series_file(self, name, value):
        path = os.path.join(self.workdir, name)
        with open(path, 'w') as f:
            f.write('hour,value\n')
            for hour in range(1, 25):
                f.write(f'{hour},{value}\n')
        return path

    def test_shapes(self):
        series = self.case.series
        self.assertEqual(series.buy_price.shape, (24,))
        self.assertEqual(series.base_load_p.shape, (24, 33))
        self.assertEqual(series.water_demand.sum(), 1400.0)
        np.testing.assert_allclose(series.sell_price, 0.5 * series.buy_price)
        self.assertEqual(int(np.argmax(series.pv_forecast)), 12)
        self.assertEqual(len(self.case.network.lines), 32)

    def test_input_paths(self):
        paths = source.input_paths(self.case)
        self.assertEqual(set(paths), {'pump_curve', 'network', 'buy_price',
                                      'pv_forecast', 'water_demand',
                                      'peak_load', 'load_profile'})
        for path in paths.values():
            self.assertTrue(os.path.exists(path), path)

    def test_truncate(self):
        short = source.truncate(self.case, 6)
        self.assertEqual(short.config.time.horizon_steps, 6)
        self.assertEqual(short.series.water_demand.sum(), 205.0)
        self.assertEqual(short.series.base_load_q.shape, (6, 33))
        for hours in (0, 25):
            with self.assertRaises(ValueError):
                source.truncate(self.case, hours)

    def test_scale_demand(self):
        scaled = source.scale_demand(self.case, 700.0)
        self.assertAlmostEqual(scaled.series.water_demand.sum(), 700.0)
        np.testing.assert_allclose(scaled.series.water_demand,
                                   self.case.series.water_demand / 2)

    def test_series_override(self):
        path = self._series_file('demand.csv', 50)
        case = source.load_case(CASE_PATH, {'water_demand': path})
        self.assertEqual(case.series.water_demand.sum(), 1200.0)
        self.assertEqual(source.input_paths(case)['water_demand'], path)

    def test_sell_above_buy(self):
        path = self._series_file('sell.csv', 10)
        with self.assertRaisesRegex(source.SeriesError, 'Sell price'):
            source.load_case(CASE_PATH, {'sell_price': path})

    def test_pv_above_rating(self):
        path = self._series_file('pv.csv', 2000)
        with self.assertRaisesRegex(source.SeriesError, 'PV forecast'):
            source.load_case(CASE_PATH, {'pv_forecast': path})

    def _variant(self, edit_document=None, extra_line=None):
        data = os.path.join(self.workdir, 'case')
        shutil.copytree(CASE_DATA, data)
        path = os.path.join(data, 'plant.yaml')
        if edit_document:
            with open(path) as f:
                document = yaml.safe_load(f)
            edit_document(document)
            with open(path, 'w') as f:
                yaml.safe_dump(document, f)
        if extra_line:
            with open(os.path.join(data, 'network.csv'), 'a') as f:
                f.write(extra_line + '\n')
        return path

    def test_meshed_feeder(self):
        path = self._variant(extra_line='8,21,2.0,2.0,5000')
        with self.assertRaises(NetworkTopologyError):
            source.load_case(path)

    def test_hdp_node_absent(self):
        def move(document):
            document['grid']['hdp_node'] = 99

        path = self._variant(edit_document=move)
        with self.assertRaisesRegex(source.ConfigValidationError,
                                    'hdp_node 99'):
            source.load_case(path)

    def test_missing_series_file(self):
        path = self._variant()
        os.remove(os.path.join(os.path.dirname(path), 'pv.csv'))
        with self.assertRaises(FileNotFoundError) as caught:
            source.load_case(path)
        self.assertIn('pv.csv', str(caught.exception))
