# -*- coding: utf-8 -*-
"""Command line entry points.

Every command resolves its configuration, does its work under ``--out`` and
emits exactly one JSON run record, written to ``<out>/run.json`` and
printed on stdout. Failures produce an error record and a nonzero exit
status.
"""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import argparse
import contextlib
import io
import json
import os
import subprocess
import sys
import time
import warnings
from collections import OrderedDict

import numpy as np
import pandas as pd
import six

from . import __version__
from . import config as deskgaze_config
from . import data, report, simulator
from .blazegaze import BlazeGazeModel, PoseNormalizer, train_stage1
from .exceptions import (ConfigError, DeskGazeError, DegenerateEyeError,
                         DiagnosticWarning, InvalidInputError,
                         SkippedSampleWarning)
from .geometry import pog_error_cm
from .headpose import estimate_head_pose
from .meta import (HeadEvaluator, PersonalizedHead, append_calibration,
                   embed_samples, head_params, load_meta_checkpoint,
                   personalize, save_meta_checkpoint, support_hash,
                   train_stage2)
from .metrics import AdaptationMetrics, MetricsLog, reset_series
from .nn import container
from .nn.profile import count_flops, count_params, layer_stats
from .preprocess import SampleWeightGrid, blink_gate, frame_ears

#: Version of the CSV layouts written by the commands.
CSV_SCHEMA = 1

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class ArgumentParser(argparse.ArgumentParser):
    """Parser that raises :class:`ConfigError` instead of exiting."""

    def error(self, message):
        """Turn a usage error into an exception."""
        raise ConfigError(message)


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError('{0!r} is not JSON serializable'.format(value))


def _git_revision():
    try:
        with open(os.devnull, 'w') as devnull:
            out = subprocess.check_output(
                ['git', 'rev-parse', 'HEAD'], stderr=devnull,
                cwd=os.path.dirname(os.path.abspath(__file__)))
    except (OSError, subprocess.CalledProcessError):
        return None
    return out.decode('ascii').strip() or None


class RunRecord(object):
    """Machine-readable account of one command run."""

    def __init__(self, command, config=None, seeds=None):
        """Start a record; the wall clock starts now."""
        self.command = command
        self.config = config
        self.seeds = seeds or {}
        self.hashes = OrderedDict([('git', _git_revision())])
        self.metrics = OrderedDict()
        self.outputs = []
        self.timings = OrderedDict()
        self.diagnostics = []
        self.status = 'ok'
        self.error = None
        self._start = time.time()

    @contextlib.contextmanager
    def timed(self, name):
        """Record the wall-clock seconds spent in a block."""
        start = time.time()
        try:
            yield
        finally:
            self.timings[name] = time.time() - start

    def output(self, path):
        """Register a written file together with its SHA-256."""
        self.outputs.append(OrderedDict([
            ('path', path), ('sha256', container.file_digest(path))]))
        return path

    def fail(self, error):
        """Mark the run as failed; written outputs become partial."""
        self.status = 'error'
        self.error = OrderedDict([('type', type(error).__name__),
                                  ('message', six.text_type(error))])
        for attr in ('pointer', 'path', 'expected', 'actual', 'name',
                     'epoch'):
            value = getattr(error, attr, None)
            if value is not None:
                self.error[attr] = value

    def to_dict(self):
        """Return the record as a JSON-serializable dict."""
        self.timings['total_s'] = time.time() - self._start
        record = OrderedDict([
            ('deskgaze', __version__), ('command', self.command),
            ('status', self.status), ('config', self.config),
            ('seeds', self.seeds), ('hashes', self.hashes),
            ('metrics', self.metrics), ('timings', self.timings),
            ('diagnostics', self.diagnostics)])
        if self.status == 'ok':
            record['outputs'] = self.outputs
        else:
            record['partial_outputs'] = self.outputs
            record['error'] = self.error
        return record

    def dumps(self):
        """Serialize to indented JSON."""
        return json.dumps(self.to_dict(), indent=1, default=_jsonable)


def _write_csv(record, frame, out, name):
    path = os.path.join(out, name)
    frame.to_csv(path, index=False)
    return record.output(path)


def _manifest(record, path):
    manifest = data.load_manifest(path)
    record.hashes['manifest'] = container.file_digest(path)
    return manifest


def _users(manifest, split):
    if split is None:
        return None
    if split not in manifest.splits:
        warnings.warn('manifest has no {0!r} split, using every user'
                      .format(split), DiagnosticWarning)
        return None
    return manifest.split(split)


def _embed(model, samples, cache_path=None, batch_size=32):
    """Attach embeddings to samples through an on-disk embedding cache."""
    if not samples:
        return samples
    cache = data.EmbeddingCache()
    if cache_path and os.path.exists(cache_path):
        cache = data.EmbeddingCache.load(cache_path)
    z = cache.get(model.encoder_hash(), samples, lambda missing: model.embed(
        np.stack([s.patch for s in missing]), batch_size))
    if cache_path:
        cache.save(cache_path)
    return [s._replace(embedding=v) for s, v in zip(samples, z)]


def _checkpoint_extras(meta):
    return (PoseNormalizer.from_dict(meta['pose_normalizer']),
            SampleWeightGrid.from_dict(meta['weight_grid']))


def cmd_synth(args, config, record):
    """Render a synthetic dataset and its manifest."""
    synth = config['synth']
    with record.timed('render_s'):
        path = simulator.write_synthetic_dataset(
            os.path.join(args.out, 'data'),
            n_users=synth['users'],
            samples_per_user=synth['samples_per_user'],
            seed=config['seed'], noise_px=synth['noise_px'],
            patch_size=tuple(config['gate']['patch_size']),
            image_size=tuple(synth['image_size']),
            test_fraction=synth['test_fraction'],
            blink_rate=synth['blink_rate'], drift_std=synth['drift_std'])
    record.output(path)
    manifest = data.load_manifest(path)
    record.metrics['samples'] = len(manifest.samples)
    record.metrics['users'] = len(manifest.users)
    record.metrics['splits'] = dict(
        (k, len(v)) for k, v in manifest.splits.items())


def cmd_pose(args, config, record):
    """Solve the metric head pose of every sample."""
    manifest = _manifest(record, args.manifest)
    solver = deskgaze_config.solver_config(config)
    rows = []
    with record.timed('solve_s'):
        for entry in manifest.entries(_users(manifest, args.split)):
            try:
                frame = data.landmark_frame(manifest, entry)
                if frame is None or entry.get('rotation') is None:
                    raise InvalidInputError('no landmarks or rotation')
                result = estimate_head_pose(
                    frame, entry['rotation'],
                    data.entry_intrinsics(manifest, entry), solver)
            except (DeskGazeError, KeyError, TypeError, ValueError) as e:
                message = 'skipped sample {0}: {1}'.format(entry['id'], e)
                warnings.warn(message, SkippedSampleWarning)
                continue
            t = result.pose.t
            row = OrderedDict([
                ('sample_id', entry['id']), ('user', entry['user']),
                ('tx_cm', t[0]), ('ty_cm', t[1]), ('tz_cm', t[2]),
                ('iterations', result.iterations),
                ('rmse_px', result.final_reprojection_rmse),
                ('converged', bool(result.converged))])
            truth = entry.get('truth') or {}
            if truth.get('t') is not None:
                true_t = np.asarray(truth['t'], dtype=np.float64)
                row['z_error_cm'] = t[2] - true_t[2]
                row['xy_error_cm'] = float(np.linalg.norm(t[:2] - true_t[:2]))
            rows.append(row)
    frame = pd.DataFrame(rows)
    _write_csv(record, frame, args.out, 'pose.csv')
    record.metrics['solved'] = len(rows)
    record.metrics['skipped'] = len(manifest.entries(
        _users(manifest, args.split))) - len(rows)
    if rows:
        record.metrics['mean_iterations'] = float(frame['iterations'].mean())
        record.metrics['mean_rmse_px'] = float(frame['rmse_px'].mean())
    if 'z_error_cm' in frame:
        abs_z = frame['z_error_cm'].abs()
        record.metrics['mean_abs_z_error_cm'] = float(abs_z.mean())
        record.metrics['median_abs_z_error_cm'] = float(abs_z.median())
        record.metrics['mean_xy_error_cm'] = float(
            frame['xy_error_cm'].mean())


def cmd_pretrain(args, config, record):
    """Train encoder, decoder and gaze head (stage 1)."""
    manifest = _manifest(record, args.manifest)
    cfg = deskgaze_config.stage1_config(config)
    samples = list(data.iterate(manifest, _users(manifest, args.split),
                                deskgaze_config.solver_config(config)))
    log_path = os.path.join(args.out, 'metrics.lp')
    with record.timed('train_s'):
        with MetricsLog(log_path, {'command': 'pretrain'}) as log:
            result = train_stage1(samples, cfg, metrics_log=log)
    record.output(log_path)
    _write_csv(record, result.history, args.out, 'stage1_history.csv')

    path = os.path.join(args.out, 'stage1.dgzc')
    result.model.save(path, {
        'stage': 'pretrain',
        'pose_normalizer': result.pose_normalizer.to_dict(),
        'weight_grid': result.weight_grid.to_dict(),
        'train_users': result.train_users,
        'val_users': result.val_users,
        'best_epoch': result.best_epoch,
        'manifest': record.hashes['manifest']})
    record.output(path)
    record.hashes['checkpoint'] = record.outputs[-1]['sha256']
    record.hashes['encoder'] = result.model.encoder_hash()

    val = result.history[result.history['split'] == 'val']
    baseline = float(val['loss_total'].iloc[0])
    record.metrics['samples'] = len(samples)
    record.metrics['best_epoch'] = result.best_epoch
    record.metrics['val_loss_epoch0'] = baseline
    record.metrics['best_val_loss'] = result.best_val_loss
    record.metrics['val_loss_reduction'] = \
        1.0 - result.best_val_loss / baseline if baseline > 0 else 0.0


def cmd_metatrain(args, config, record):
    """Meta-train the gaze head over per-user tasks (stage 2)."""
    manifest = _manifest(record, args.manifest)
    model, meta = BlazeGazeModel.load(args.checkpoint)
    record.hashes['stage1_checkpoint'] = container.file_digest(
        args.checkpoint)
    normalizer, grid = _checkpoint_extras(meta)
    cfg = deskgaze_config.meta_config(config)

    samples = list(data.iterate(manifest, _users(manifest, args.split),
                                deskgaze_config.solver_config(config)))
    with record.timed('embed_s'):
        samples = _embed(model, samples, args.cache)
    by_user = OrderedDict()
    for sample in samples:
        by_user.setdefault(sample.user_id, []).append(sample)
    user_sets = OrderedDict(
        (user, embed_samples(model, rows, normalizer, grid))
        for user, rows in by_user.items())

    log_path = os.path.join(args.out, 'metrics.lp')
    with record.timed('train_s'):
        with MetricsLog(log_path, {'command': 'metatrain'}) as log:
            result = train_stage2(head_params(model), user_sets, cfg, log)
    record.output(log_path)
    _write_csv(record, result.history, args.out, 'stage2_history.csv')

    path = os.path.join(args.out, 'meta.dgzc')
    save_meta_checkpoint(path, model, result.theta, {
        'pose_normalizer': normalizer.to_dict(),
        'weight_grid': grid.to_dict(),
        'stage1_checkpoint': record.hashes['stage1_checkpoint'],
        'meta_config': cfg.to_dict()})
    record.output(path)
    record.hashes['checkpoint'] = container.file_digest(path)

    losses = result.history['meta_loss']
    window = min(50, len(losses))
    record.metrics['users'] = len(user_sets)
    record.metrics['meta_loss_first'] = float(losses.iloc[:window].mean())
    record.metrics['meta_loss_last'] = float(losses.iloc[-window:].mean())


def cmd_adapt(args, config, record):
    """Personalize the meta-trained head to one user."""
    manifest = _manifest(record, args.manifest)
    model, theta, meta = load_meta_checkpoint(args.checkpoint)
    record.hashes['meta_checkpoint'] = container.file_digest(args.checkpoint)
    normalizer, grid = _checkpoint_extras(meta)
    cfg = deskgaze_config.meta_config(config)

    previous = PersonalizedHead.load(args.append) if args.append else None
    used = set(previous.provenance.get('support_ids', [])) \
        if previous else set()
    samples = [s for s in data.iterate(manifest, [args.user],
                                       deskgaze_config.solver_config(config))
               if s.sample_id not in used][:args.k or cfg.k]
    if not samples:
        raise InvalidInputError(
            'no calibration samples for user {0!r}'.format(args.user))
    samples = _embed(model, samples, args.cache)
    support = embed_samples(model, samples, normalizer, grid)
    ids = [s.sample_id for s in samples]

    with record.timed('adapt_s'):
        if previous is None:
            head = personalize(theta, support, cfg,
                               record.hashes['meta_checkpoint'])
            evicted = 0
        else:
            head = append_calibration(previous, support, cfg)
            evicted = head.provenance['evicted'] - \
                previous.provenance.get('evicted', 0)
            ids = previous.provenance.get('support_ids', []) + ids
        head.provenance['support_ids'] = ids[evicted:]
        head.provenance['user'] = args.user

    evaluator = HeadEvaluator(head.params)
    before = evaluator.loss(head.base, head.support)
    after = evaluator.loss(head.params, head.support)
    path = os.path.join(args.out, 'head-{0}.dgzc'.format(args.user))
    head.save(path)
    record.output(path)
    record.hashes['support'] = support_hash(head.support)

    log_path = os.path.join(args.out, 'metrics.lp')
    with MetricsLog(log_path, {'command': 'adapt'}) as log:
        AdaptationMetrics(user=args.user, steps=cfg.adapt_steps,
                          support_size=len(head.support), loss_before=before,
                          loss_after=after, evicted=evicted)
        AdaptationMetrics.commit(log)
    record.output(log_path)
    record.metrics.update(OrderedDict([
        ('support_size', len(head.support)), ('new_samples', len(samples)),
        ('evicted', evicted), ('loss_before', before),
        ('loss_after', after)]))


def _gated(sample, threshold):
    if sample.landmarks is None:
        return False
    return blink_gate(*frame_ears(sample.landmarks), threshold=threshold)


def _windows(scored, window_s):
    """Mean error per user over consecutive ``window_s`` second windows."""
    columns = ['user', 'window', 'start_s', 'end_s', 'n', 'mean_error_cm']
    if scored.empty:
        return pd.DataFrame(columns=columns)
    frame = scored.copy()
    start = frame.groupby('user')['timestamp'].transform('min')
    frame['window'] = ((frame['timestamp'] - start) // window_s).astype(int)
    windows = frame.groupby(['user', 'window'], sort=True).agg(
        n=('error_cm', 'size'),
        mean_error_cm=('error_cm', 'mean')).reset_index()
    windows['start_s'] = windows['window'] * window_s
    windows['end_s'] = windows['start_s'] + window_s
    return windows[columns]


def _user_summary(frame, scored):
    columns = ['user', 'n', 'n_gated', 'mean_error_cm', 'median_error_cm',
               'mean_error_meta_cm']
    if scored.empty:
        return pd.DataFrame(columns=columns)
    users = scored.groupby('user', sort=True).agg(
        n=('error_cm', 'size'), mean_error_cm=('error_cm', 'mean'),
        median_error_cm=('error_cm', 'median'),
        mean_error_meta_cm=('error_meta_cm', 'mean')).reset_index()
    gated = frame.groupby('user', sort=True)['gated'].sum()
    users['n_gated'] = users['user'].map(gated).fillna(0).astype(int)
    return users[columns]


def cmd_eval(args, config, record):
    """Per-user point-of-gaze error with blink-gated frames excluded."""
    manifest = _manifest(record, args.manifest)
    model, theta, meta = load_meta_checkpoint(args.checkpoint)
    record.hashes['meta_checkpoint'] = container.file_digest(args.checkpoint)
    normalizer, _ = _checkpoint_extras(meta)
    threshold = config['gate']['blink_threshold']
    window_s = float(config['eval']['window_s'])
    if window_s <= 0:
        raise ConfigError('eval.window_s must be positive')

    heads = {}
    for path in args.head:
        head = PersonalizedHead.load(path)
        user = head.provenance.get('user')
        if not user:
            raise InvalidInputError('{0} names no user'.format(path))
        heads[user] = head
        record.hashes['head:' + user] = container.file_digest(path)

    rows, kept = [], []
    for sample in data.iterate(manifest, _users(manifest, args.split),
                               deskgaze_config.solver_config(config)):
        head = heads.get(sample.user_id)
        if head and sample.sample_id in \
                head.provenance.get('support_ids', ()):
            continue
        try:
            gated = _gated(sample, threshold)
        except DegenerateEyeError as e:
            warnings.warn('skipped sample {0}: {1}'.format(
                sample.sample_id, e), SkippedSampleWarning)
            continue
        rows.append(OrderedDict([
            ('sample_id', sample.sample_id), ('user', sample.user_id),
            ('timestamp', sample.timestamp), ('gated', bool(gated)),
            ('head', 'personalized' if head else 'meta'),
            ('error_cm', np.nan), ('error_meta_cm', np.nan)]))
        if not gated:
            kept.append((rows[-1], sample))

    # Each sample is encoded and scored on its own.
    with record.timed('predict_s'):
        samples = _embed(model, [s for _, s in kept], args.cache,
                         batch_size=1)
        evaluator = HeadEvaluator(theta)
        for (row, _), sample in zip(kept, samples):
            one = embed_samples(model, [sample], normalizer)
            head = heads.get(sample.user_id)
            params = head.params if head else theta
            row['error_meta_cm'] = float(pog_error_cm(
                evaluator.predict(theta, one), one.g, manifest.screen)[0])
            row['error_cm'] = float(pog_error_cm(
                evaluator.predict(params, one), one.g, manifest.screen)[0])

    frame = pd.DataFrame(rows, columns=[
        'sample_id', 'user', 'timestamp', 'gated', 'head', 'error_cm',
        'error_meta_cm'])
    _write_csv(record, frame, args.out, 'eval_samples.csv')
    scored = frame[~frame['gated'].astype(bool)]
    users = _user_summary(frame, scored)
    _write_csv(record, users, args.out, 'eval_users.csv')
    _write_csv(record, _windows(scored, window_s), args.out,
               'eval_windows.csv')

    record.metrics['schema'] = CSV_SCHEMA
    record.metrics['scored'] = int(len(scored))
    record.metrics['gated'] = int(len(frame) - len(scored))
    if len(scored):
        record.metrics['mean_error_cm'] = float(scored['error_cm'].mean())
        record.metrics['mean_error_meta_cm'] = float(
            scored['error_meta_cm'].mean())
        record.metrics['per_user_mean_error_cm'] = OrderedDict(
            (u, float(e)) for u, e in zip(users['user'],
                                          users['mean_error_cm']))


def cmd_bench(args, config, record):
    """Parameter count, FLOPs and host inference latency."""
    bench = config['bench']
    profile = args.profile or bench['profile']
    repeats, warmup = int(bench['repeats']), int(bench['warmup'])
    if repeats < 1 or warmup < 0:
        raise ConfigError('bench.repeats must be >= 1, bench.warmup >= 0')
    model = BlazeGazeModel(profile, seed=config['seed'])
    inference = model.inference_layers()
    shape = model.patch_shape

    rng = np.random.default_rng(config['seed'])
    patch = rng.random((1,) + shape).astype(model.dtype)
    pose = np.zeros((1, 12), dtype=model.dtype)
    for _ in range(warmup):
        inference.forward((patch, pose))
    latencies = []
    with record.timed('latency_s'):
        for _ in range(repeats):
            start = time.perf_counter()
            inference.forward((patch, pose))
            latencies.append(1e3 * (time.perf_counter() - start))

    params = count_params(inference)
    flops = count_flops(inference, shape)
    summary = OrderedDict([
        ('profile', model.profile.name), ('params', params),
        ('params_m', params / 1e6),
        ('params_decoder', count_params(model.decoder)),
        ('flops', flops), ('gflops', flops / 1e9),
        ('latency_p50_ms', float(np.percentile(latencies, 50))),
        ('latency_p95_ms', float(np.percentile(latencies, 95))),
        ('repeats', repeats)])
    _write_csv(record, pd.DataFrame([summary]), args.out, 'bench.csv')
    layers = pd.DataFrame(
        [OrderedDict([('layer', s.name),
                      ('output_shape', 'x'.join(str(d)
                                                for d in s.output_shape)),
                      ('params', s.params), ('macs', s.macs)])
         for s in layer_stats(model.encoder, shape)])
    _write_csv(record, layers, args.out, 'bench_layers.csv')
    record.metrics.update(summary)


def cmd_report(args, config, record):
    """Render existing CSVs and metrics logs as SVG plots."""
    with record.timed('render_s'):
        for path in report.render(args.inputs, args.out):
            record.output(path)
    record.metrics['plots'] = len(record.outputs)


def _common_options():
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML or JSON config file')
    common.add_argument('--set', dest='overrides', action='append',
                        default=[], metavar='KEY=VALUE',
                        help='override one config value, e.g. '
                             'stage1.epochs=5 (repeatable)')
    common.add_argument('--seed', type=int,
                        help='seed for data, training and meta-training')
    common.add_argument('--out', default='out',
                        help='output directory (default: out)')
    return common


def build_parser():
    """Return the ``deskgaze`` argument parser."""
    common = _common_options()
    parser = ArgumentParser(
        prog='deskgaze',
        description='Metric head pose, gaze estimation and few-shot '
                    'personalization on synthetic and recorded data.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    def command(name, fn, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text,
                           description=fn.__doc__)
        p.set_defaults(func=fn)
        return p

    command('synth', cmd_synth, 'write a synthetic dataset')

    p = command('pose', cmd_pose, 'solve head poses, CSV of t/iterations/RMSE')
    p.add_argument('manifest')
    p.add_argument('--split', help='only users of this split')

    p = command('pretrain', cmd_pretrain, 'stage-1 representation training')
    p.add_argument('manifest')
    p.add_argument('--split', default='train')

    p = command('metatrain', cmd_metatrain, 'stage-2 meta-training')
    p.add_argument('manifest')
    p.add_argument('--checkpoint', required=True, help='stage-1 checkpoint')
    p.add_argument('--split', default='train')
    p.add_argument('--cache', help='embedding cache container')

    p = command('adapt', cmd_adapt, 'personalize the head to one user')
    p.add_argument('manifest', help='manifest holding the support samples')
    p.add_argument('--checkpoint', required=True, help='meta checkpoint')
    p.add_argument('--user', required=True)
    p.add_argument('--k', type=int,
                   help='calibration samples to use (default: meta.k)')
    p.add_argument('--append', metavar='HEAD',
                   help='grow the support set of an existing head')
    p.add_argument('--cache', help='embedding cache container')

    p = command('eval', cmd_eval, 'per-user point-of-gaze error')
    p.add_argument('manifest')
    p.add_argument('--checkpoint', required=True, help='meta checkpoint')
    p.add_argument('--head', action='append', default=[],
                   help='personalized head (repeatable)')
    p.add_argument('--split', default='test')
    p.add_argument('--cache', help='embedding cache container')

    p = command('bench', cmd_bench, 'model size, FLOPs and host latency')
    p.add_argument('--profile', choices=['full', 'reduced'])

    p = command('report', cmd_report, 'render CSVs to SVG plots')
    p.add_argument('inputs', nargs='+',
                   help='CSV files, metrics logs or directories')
    return parser


def _resolve(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides += ['seed={0}'.format(args.seed),
                      'stage1.seed={0}'.format(args.seed),
                      'meta.seed={0}'.format(args.seed)]
    config = deskgaze_config.load_config(args.config, overrides)
    seeds = OrderedDict([('seed', config['seed']),
                         ('stage1', config['stage1']['seed']),
                         ('meta', config['meta']['seed'])])
    return config, seeds


def run(argv=None, stdout=None):
    """Run one command and return ``(exit_code, record)``."""
    stdout = stdout or sys.stdout
    command = out = record = None
    try:
        reset_series()
        args = build_parser().parse_args(argv)
        command, out = args.command, args.out
        config, seeds = _resolve(args)
        record = RunRecord(command, deskgaze_config.snapshot(config), seeds)
        if not os.path.isdir(out):
            os.makedirs(out)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            try:
                args.func(args, config, record)
            finally:
                record.diagnostics.extend(
                    '{0}: {1}'.format(w.category.__name__, w.message)
                    for w in caught)
        code = EXIT_OK
    except ConfigError as e:
        record = record or RunRecord(command)
        record.fail(e)
        code = EXIT_USAGE
    except Exception as e:
        record = record or RunRecord(command)
        record.fail(e)
        code = EXIT_FAILURE

    text = record.dumps()
    if record.config is not None and os.path.isdir(out):
        with io.open(os.path.join(out, 'run.json'), 'w',
                     encoding='utf-8') as f:
            f.write(six.text_type(text))
            f.write('\n')
    print(text, file=stdout)
    return code, record


def main(argv=None):
    """Console entry point."""
    return run(argv)[0]


if __name__ == '__main__':
    sys.exit(main())
