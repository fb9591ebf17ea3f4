"""Tests for :mod:`.store`."""

from unittest import TestCase, mock
import json
import os
import shutil
import tempfile

import numpy as np
import pandas as pd

from ...domain import CommitmentPlan, ErrorMap, FlexibilityMode, FopPoint, \
    FopSet, ROState, Scenario, Schedule, TankState, TdcsoResult, \
    VerifiedReport, Violation
from .. import store


def _schedule(mode=FlexibilityMode.NoMix, cost=12.5):
    on = np.array([1, 1, 0])
    flow = np.array([250.0, 200.0, 0.0])
    permeate = np.array([110.5, 80.25, 0.0])
    zeros = np.zeros(3)
    return Schedule(
        mode=mode, on=on, shut=np.array([0, 0, 1]), start=np.zeros(3, int),
        speed=np.array([1.0, 0.97, 0.0]), feed_flow=flow,
        permeate_flow=permeate, brine_flow=flow - permeate,
        brine_tds=np.array([73.0, 70.0, 0.0]),
        permeate_salt_rate=permeate * 0.25, feed_head=np.array([6247.0,
                                                                6300.0, 0.0]),
        pump_power=np.array([544.0, 470.0, 0.0]),
        hps_power=np.array([590.0, 510.0, 0.0]),
        flush_water=np.array([0.0, 0.0, 15.0]),
        flush_energy=np.array([0.0, 0.0, 25.0]),
        tank_volume=np.array([795.5, 845.75, 800.0]),
        tank_tds=None if not mode.tank_mixing
        else np.array([0.29, 0.28, 0.28]),
        outflow_tds=None, pv_power=zeros, pv_reactive=zeros,
        hdp_power=np.array([590.0, 510.0, 25.0]),
        grid_buy=np.array([590.0, 510.0, 25.0]), grid_sell=zeros, cost=cost
    )


def _report():
    states = [ROState(on=True, feed_flow=250.0, permeate_flow=112.0,
                      feed_head=6247.0, permeate_tds=0.24),
              ROState(on=True, feed_flow=200.0, permeate_flow=81.0,
                      feed_head=6300.0, permeate_tds=0.26),
              ROState()]
    tanks = [TankState.from_tds(720.0, 0.3), TankState.from_tds(797.0, 0.29),
             TankState.from_tds(848.0, 0.28), TankState.from_tds(800.0, 0.28)]
    return VerifiedReport(
        states=states, tanks=tanks,
        outflow_tds=np.array([0.295, 0.285, 0.28]),
        hps_power=np.array([590.0, 510.0, 0.0]),
        hdp_power=np.array([590.0, 510.0, 25.0]),
        flush_water=np.array([0.0, 0.0, 15.0]),
        hourly_cost=np.array([5.9, 5.1, 0.25]), verified_cost=11.25,
        prorated_cost=11.0, verified_production=193.0,
        scheduled_production=190.75, required_production=188.0,
        end_tds=0.28, min_vsq=0.93,
        violations=[Violation(1, 'permeate TDS', 0.4, 0.35, 'max'),
                    Violation(None, 'end volume', 700.0, 720.0, 'min')]
    )


class TestScheduleFiles(TestCase):
    """Schedule CSV files."""

    def setUp(self):
        self.workdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.workdir)

    def test_frame(self):
        frame = store.schedule_frame(_schedule())
        self.assertEqual(list(frame['hour']), [1, 2, 3])
        self.assertEqual(list(frame.columns[:3]), ['hour', 'on', 'shut'])
        self.assertEqual(frame.columns[-1], 'grid_sell')
        self.assertTrue(frame['tank_tds'].isna().all())

    def test_load_written(self):
        for mode in (FlexibilityMode.NoMix, FlexibilityMode.MixIni):
            sched = _schedule(mode)
            path = store.write_schedule(sched, os.path.join(self.workdir,
                                                            'schedule.csv'))
            loaded = store.load_schedule(path, mode)
            self.assertEqual(loaded.mode, mode)
            self.assertEqual(loaded.status, 'loaded')
            self.assertTrue(np.isnan(loaded.cost))
            np.testing.assert_array_equal(loaded.on, sched.on)
            np.testing.assert_array_equal(loaded.shut, sched.shut)
            np.testing.assert_allclose(loaded.permeate_flow,
                                       sched.permeate_flow)
            self.assertIsNone(loaded.outflow_tds)
            self.assertEqual(loaded.tank_tds is None, not mode.tank_mixing)

    def test_minimal_columns(self):
        path = os.path.join(self.workdir, 'minimal.csv')
        pd.DataFrame({'hour': [1, 2], 'on': [1, 0], 'speed': [1.0, 0.0],
                      'feed_flow': [250.0, 0.0]}).to_csv(path, index=False)
        loaded = store.load_schedule(path, FlexibilityMode.MixIni)
        self.assertEqual(loaded.horizon, 2)
        np.testing.assert_array_equal(loaded.hps_power, [0.0, 0.0])

        pd.DataFrame({'hour': [1], 'on': [1]}).to_csv(path, index=False)
        with self.assertRaisesRegex(ValueError, 'missing columns'):
            store.load_schedule(path, FlexibilityMode.MixIni)


class TestReports(TestCase):
    """JSON reports and long-format tables."""

    def setUp(self):
        self.workdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.workdir)

    def _path(self, name):
        return os.path.join(self.workdir, name)

    def test_verified_report(self):
        path = store.write_verified_report(_report(), self._path('r.json'))
        with open(path) as f:
            data = json.load(f)
        self.assertEqual(data['manifest'], 'manifest.json')
        self.assertAlmostEqual(data['production_delta'], 2.25)
        self.assertEqual([v['hour'] for v in data['violations']], [2, None])
        self.assertEqual(data['hourly']['tank_volume'], [797.0, 848.0, 800.0])
        self.assertEqual(data['hourly']['permeate_tds'], [0.24, 0.26, 0.0])

    def test_error_map(self):
        emap = ErrorMap(flows=np.array([150.0, 250.0]),
                        speeds=np.array([0.5, 1.0, 1.1]),
                        dfpe=np.array([[np.nan, -1.0, -2.0],
                                       [np.nan, -3.0, -4.0]]),
                        dspe=np.array([[np.nan, 0.01, 0.02],
                                       [np.nan, 0.03, 0.04]]),
                        feasible=np.array([[False, True, False],
                                           [False, True, True]]))
        path = store.write_error_map(emap, self._path('map.csv'))
        frame = pd.read_csv(path)
        self.assertEqual(len(frame), 6)
        row = frame[(frame.flow == 250.0) & (frame.speed == 1.1)].iloc[0]
        self.assertEqual(row.dfpe, -4.0)
        self.assertEqual(row.feasible, 1)
        self.assertTrue(frame[frame.speed == 0.5].dfpe.isna().all())

    def test_sweep_blanks(self):
        path = store.write_sweep([700.0, 1400.0], [6250.0], {
            'cost_delta_pct': np.array([[-1.5], [np.nan]]),
        }, self._path('sweep.csv'))
        with open(path) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], 'demand,head,cost_delta_pct')
        self.assertEqual(lines[2], '1400,6250,')

    def test_summary(self):
        runs = {'NoMix': (_schedule(), _report()),
                'MixIni': (_schedule(FlexibilityMode.MixIni, 13.0),
                           _report())}
        frame = store.summary_frame(runs)
        self.assertEqual(list(frame.columns), ['NoMix', 'MixIni'])
        self.assertEqual(list(frame.index),
                         [label for _, label in store.SUMMARY_ROWS])
        self.assertEqual(frame.loc['Scheduled cost ($)', 'MixIni'], 13.0)
        self.assertEqual(frame.loc['Max outflow TDS (kg/m3)', 'NoMix'],
                         0.295)
        path = store.write_summary(runs, self._path('summary.csv'))
        with open(path) as f:
            self.assertTrue(f.readline().startswith('quantity,NoMix,MixIni'))

    def test_fop_points(self):
        fops = FopSet(points=[FopPoint(250.0, 1.0, 6247.0, 544.0, 110.0,
                                       140.0, 73.0, 26.4)],
                      flow_step=25.0, speed_step=0.05, permeate_cap=0.8)
        frame = pd.read_csv(store.write_fop_points(fops,
                                                   self._path('fop.csv')))
        self.assertAlmostEqual(frame.permeate_tds[0], 0.24)

    def test_scenarios(self):
        drawn = [Scenario(pv=np.array([0.0, 500.0]),
                          buy_price=np.array([0.1, 0.2]),
                          sell_price=np.array([0.05, 0.1]),
                          probability=0.25, index=4)]
        path = store.write_scenarios(drawn, self._path('s.json'))
        loaded = store.load_scenarios(path)
        self.assertEqual(loaded[0].index, 4)
        self.assertEqual(loaded[0].probability, 0.25)
        np.testing.assert_array_equal(loaded[0].pv, drawn[0].pv)

    def test_tdcso(self):
        plan = CommitmentPlan(on=(1, 1, 0), shut=(0, 0, 1), start=(0, 0, 0))
        result = TdcsoResult(commitment=plan,
                             schedules=[_schedule()._replace(scenario=3)],
                             probabilities=[1.0], expected_cost=12.5,
                             step1_cost=13.0, timings={'total': 1.0})
        path = store.write_tdcso(result, self._path('t.json'))
        with open(path) as f:
            data = json.load(f)
        self.assertEqual(data['commitment']['shut'], [0, 0, 1])
        self.assertEqual(data['scenarios'][0]['index'], 3)
        self.assertAlmostEqual(data['scenarios'][0]['production'], 190.75)


class TestEncoder(TestCase):
    """JSON encoding of numpy values and enums."""

    def test_encode(self):
        text = json.dumps({'a': np.arange(3), 'b': np.float64(0.5),
                           'c': np.int64(7), 'd': FlexibilityMode.MixFlex},
                          cls=store.ReportEncoder, sort_keys=True)
        self.assertEqual(json.loads(text),
                         {'a': [0, 1, 2], 'b': 0.5, 'c': 7, 'd': 'MixFlex'})

    def test_unknown_type(self):
        with self.assertRaises(TypeError):
            json.dumps({'a': object()}, cls=store.ReportEncoder)


class TestManifest(TestCase):
    """Run manifests."""

    def setUp(self):
        self.workdir = tempfile.mkdtemp()
        self.inputs = []
        for name, content in (('b.csv', 'hour,value\n1,2\n'),
                              ('a.yaml', 'plant: {}\n')):
            path = os.path.join(self.workdir, name)
            with open(path, 'w') as f:
                f.write(content)
            self.inputs.append(path)

    def tearDown(self):
        shutil.rmtree(self.workdir)

    @mock.patch(f'{store.__name__}.config')
    def test_manifest(self, mock_config):
        mock_config.return_value = {'APP_VERSION': '9.9'}
        manifest = store.make_manifest(
            'schedule', self.inputs + self.inputs[:1], 7, {'name': 'cbc'},
            ['/x/summary.csv', '/x/schedule.csv'], {'total': 1.5})
        self.assertEqual(manifest['version'], '9.9')
        self.assertEqual(list(manifest['inputs']), sorted(self.inputs))
        self.assertEqual(manifest['inputs'][self.inputs[0]],
                         store.content_hash(self.inputs[0]))
        self.assertEqual(manifest['outputs'], ['schedule.csv', 'summary.csv'])

        path = store.write_manifest(manifest, self.workdir)
        self.assertEqual(os.path.basename(path), 'manifest.json')
        with open(path) as f:
            self.assertEqual(json.load(f)['seed'], 7)

    def test_hash_tracks_content(self):
        before = store.content_hash(self.inputs[0])
        self.assertEqual(len(before), 64)
        with open(self.inputs[0], 'a') as f:
            f.write('2,3\n')
        self.assertNotEqual(store.content_hash(self.inputs[0]), before)
