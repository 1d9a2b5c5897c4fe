# -*- coding: utf-8 -*-
"""Tests for the deskgaze command line."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import io
import json
import os
import unittest

import mock
import numpy as np
import pandas as pd

from deskgaze import cli, data
from deskgaze.blazegaze import BlazeGazeModel
from deskgaze.meta import load_meta_checkpoint
from deskgaze.metrics import AdaptationMetrics
from deskgaze.tests import skip_slow_tests
from deskgaze.tests.misc import TempDirMixin

SMALL = ['--set', 'synth.users=4', '--set', 'synth.samples_per_user=6']


class TestCommandLine(TempDirMixin, unittest.TestCase):
    """Test run records, exit codes and single commands."""

    def run_cli(self, *argv):
        """Run a command; return its exit code, record and stdout JSON."""
        stdout = io.StringIO()
        code, record = cli.run(list(argv), stdout=stdout)
        return code, record, json.loads(stdout.getvalue())

    def out(self, name):
        """Output directory ``name`` under the test directory."""
        return os.path.join(self.tmp, name)

    def test_synth_and_pose(self):
        """Test that synth writes a manifest and pose solves it."""
        code, record, printed = self.run_cli('synth', '--out', self.out('d'),
                                             *SMALL)
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(printed['status'], 'ok')
        self.assertEqual(printed['metrics']['samples'], 24)
        self.assertEqual(printed['metrics']['splits'],
                         {'train': 2, 'test': 2})
        manifest = printed['outputs'][0]['path']

        code, record, printed = self.run_cli('pose', manifest, '--out',
                                             self.out('p'))
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(printed['metrics']['solved'], 24)
        self.assertEqual(printed['metrics']['skipped'], 0)
        self.assertLess(printed['metrics']['mean_abs_z_error_cm'], 1.0)
        frame = pd.read_csv(os.path.join(self.out('p'), 'pose.csv'))
        self.assertEqual(len(frame), 24)
        self.assertTrue(frame['converged'].all())
        with io.open(os.path.join(self.out('p'), 'run.json'),
                     encoding='utf-8') as f:
            self.assertEqual(json.load(f)['hashes'], printed['hashes'])

    def test_synth_is_deterministic(self):
        """Test that a seed reproduces the dataset."""
        digests = []
        for name in ('a', 'b'):
            _, record, _ = self.run_cli('synth', '--out', self.out(name),
                                        '--seed', '5', *SMALL)
            digests.append(record.outputs[0]['sha256'])
        self.assertEqual(digests[0], digests[1])

    def test_usage_errors(self):
        """Test that bad flags and config keys exit with status 2."""
        code, record, printed = self.run_cli('pose', '--bogus')
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertEqual(printed['status'], 'error')
        self.assertEqual(printed['error']['type'], 'ConfigError')

        code, _, printed = self.run_cli('synth', '--out', self.out('c'),
                                        '--set', 'synth.colour=red')
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertIn('synth.colour', printed['error']['message'])

    def test_failure_record(self):
        """Test that a runtime failure writes an error record."""
        code, _, printed = self.run_cli(
            'pose', os.path.join(self.tmp, 'missing.json'), '--out',
            self.out('f'))
        self.assertEqual(code, cli.EXIT_FAILURE)
        self.assertEqual(printed['partial_outputs'], [])
        self.assertNotIn('outputs', printed)
        with io.open(os.path.join(self.out('f'), 'run.json'),
                     encoding='utf-8') as f:
            self.assertEqual(json.load(f)['status'], 'error')

    def test_malformed_manifest_record(self):
        """Test that a manifest with a null image size fails with a record."""
        _, _, printed = self.run_cli('synth', '--out', self.out('d'), *SMALL)
        manifest = printed['outputs'][0]['path']
        with io.open(manifest, encoding='utf-8') as f:
            document = json.load(f)
        document['image_size'] = [None, 480]
        with io.open(manifest, 'w', encoding='utf-8') as f:
            f.write(json.dumps(document))

        code, _, printed = self.run_cli('pose', manifest, '--out',
                                        self.out('p'))
        self.assertEqual(code, cli.EXIT_FAILURE)
        self.assertEqual(printed['status'], 'error')
        self.assertEqual(printed['error']['type'], 'ManifestError')
        self.assertEqual(printed['error']['pointer'], '/image_size')

    def test_unexpected_error_record(self):
        """Test that any exception inside a command exits with status 1."""
        with mock.patch('deskgaze.cli.cmd_bench',
                        side_effect=RuntimeError('boom')):
            code, _, printed = self.run_cli('bench', '--out', self.out('x'))
        self.assertEqual(code, cli.EXIT_FAILURE)
        self.assertEqual(printed['error'],
                         {'type': 'RuntimeError', 'message': 'boom'})
        with io.open(os.path.join(self.out('x'), 'run.json'),
                     encoding='utf-8') as f:
            self.assertEqual(json.load(f)['status'], 'error')

    def test_stale_metric_points_dropped(self):
        """Test that points left over from an earlier run are not written."""
        AdaptationMetrics(user='stale', steps=1, support_size=1,
                          loss_before=1.0, loss_after=1.0, evicted=0)
        self.run_cli('synth', '--out', self.out('d'), *SMALL)
        self.assertEqual(AdaptationMetrics._json_body_(), [])

    def test_bench(self):
        """Test the size and latency summary."""
        code, _, printed = self.run_cli(
            'bench', '--profile', 'reduced', '--out', self.out('b'),
            '--set', 'bench.repeats=2', '--set', 'bench.warmup=0')
        self.assertEqual(code, cli.EXIT_OK)
        metrics = printed['metrics']
        self.assertEqual(metrics['profile'], 'reduced')
        self.assertGreater(metrics['params'], 0)
        self.assertGreater(metrics['flops'], 0)
        self.assertGreater(metrics['params_decoder'], 0)
        layers = pd.read_csv(os.path.join(self.out('b'), 'bench_layers.csv'))
        self.assertEqual(list(layers.columns),
                         ['layer', 'output_shape', 'params', 'macs'])

    def assertSameBytes(self, first, second, *names):
        """Check that two output directories hold identical files."""
        for name in names:
            with io.open(os.path.join(first, name), 'rb') as f:
                expected = f.read()
            with io.open(os.path.join(second, name), 'rb') as f:
                self.assertEqual(f.read(), expected, name)

    @skip_slow_tests
    def test_pipeline(self):
        """Test synth, pretrain, metatrain, adapt, eval and report."""
        code, _, printed = self.run_cli('synth', '--out', self.out('d'),
                                        *SMALL)
        manifest = printed['outputs'][0]['path']
        user = data.load_manifest(manifest).split('test')[0]

        pretrain = ['pretrain', manifest, '--seed', '3', '--set',
                    'stage1.epochs=2', '--set', 'stage1.batch_size=4']
        code, _, printed = self.run_cli(*pretrain + ['--out', self.out('s1')])
        self.assertEqual(code, cli.EXIT_OK, printed.get('error'))
        stage1 = os.path.join(self.out('s1'), 'stage1.dgzc')
        self.run_cli(*pretrain + ['--out', self.out('s1b')])
        self.assertSameBytes(self.out('s1'), self.out('s1b'),
                             'stage1_history.csv', 'stage1.dgzc')

        meta_args = ['--set', 'meta.k=3', '--set', 'meta.l=3']
        for name in ('s2', 's2b'):
            code, _, printed = self.run_cli(
                'metatrain', manifest, '--checkpoint', stage1, '--out',
                self.out(name), '--set', 'meta.meta_steps=5', '--cache',
                os.path.join(self.out(name), 'cache.dgzc'), *meta_args)
            self.assertEqual(code, cli.EXIT_OK, printed.get('error'))
        self.assertEqual(printed['metrics']['users'], 2)
        self.assertSameBytes(self.out('s2'), self.out('s2b'),
                             'stage2_history.csv', 'meta.dgzc')
        meta = os.path.join(self.out('s2'), 'meta.dgzc')
        self.assertEqual(load_meta_checkpoint(meta)[0].encoder_hash(),
                         BlazeGazeModel.load(stage1)[0].encoder_hash())

        for name in ('a', 'ab'):
            code, _, printed = self.run_cli(
                'adapt', manifest, '--checkpoint', meta, '--user', user,
                '--out', self.out(name), '--set', 'meta.adapt_steps=10',
                *meta_args)
            self.assertEqual(code, cli.EXIT_OK, printed.get('error'))
        self.assertEqual(printed['metrics']['support_size'], 3)
        self.assertLessEqual(printed['metrics']['loss_after'],
                             printed['metrics']['loss_before'])
        head_name = 'head-{0}.dgzc'.format(user)
        self.assertSameBytes(self.out('a'), self.out('ab'), head_name)
        head = os.path.join(self.out('a'), head_name)

        evaluate = ['eval', manifest, '--checkpoint', meta, '--head', head]
        code, _, printed = self.run_cli(*evaluate + ['--out', self.out('e')])
        self.assertEqual(code, cli.EXIT_OK, printed.get('error'))
        samples = pd.read_csv(os.path.join(self.out('e'),
                                           'eval_samples.csv'))
        self.assertEqual(len(samples), 9)
        self.assertEqual(
            (samples['head'] == 'personalized').sum(), 3)
        self.assertTrue(np.isfinite(samples['error_cm']).all())
        self.assertTrue(np.isfinite(samples['error_meta_cm']).all())
        self.assertEqual(printed['metrics']['scored'], 9)
        self.run_cli(*evaluate + ['--out', self.out('eb')])
        self.assertSameBytes(self.out('e'), self.out('eb'),
                             'eval_samples.csv', 'eval_users.csv',
                             'eval_windows.csv')

        closed = samples['sample_id'].iloc[4]
        gate = cli._gated
        with mock.patch('deskgaze.cli._gated', side_effect=lambda s, t: (
                s.sample_id == closed or gate(s, t))):
            code, _, printed = self.run_cli(*evaluate +
                                            ['--out', self.out('eg')])
        self.assertEqual(code, cli.EXIT_OK, printed.get('error'))
        self.assertEqual(printed['metrics']['gated'], 1)
        gated = pd.read_csv(os.path.join(self.out('eg'), 'eval_samples.csv'))
        self.assertEqual(list(gated['sample_id']), list(samples['sample_id']))
        others = (gated['sample_id'] != closed).values
        self.assertTrue(np.isnan(gated['error_cm'][~others]).all())
        for column in ('error_cm', 'error_meta_cm'):
            np.testing.assert_array_equal(gated[column][others].values,
                                          samples[column][others].values)

        code, _, printed = self.run_cli('report', self.out('e'), '--out',
                                        self.out('r'))
        self.assertEqual(code, cli.EXIT_OK, printed.get('error'))
        self.assertEqual(printed['metrics']['plots'], 2)
