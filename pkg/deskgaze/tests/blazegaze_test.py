# -*- coding: utf-8 -*-
"""Tests for the BlazeGaze model, its losses and stage-1 training."""

from __future__ import absolute_import
from __future__ import division
from __future__ import print_function
from __future__ import unicode_literals

import os
import unittest

import numpy as np
import pandas as pd

from deskgaze import blazegaze
from deskgaze.exceptions import (ConfigError, InvalidInputError,
                                 NonFiniteError, ShapeError)
from deskgaze.metrics import MetricsLog, read_points
from deskgaze.nn.blaze import BlazeBlockSpec
from deskgaze.nn.profile import count_params
from deskgaze.nn.tensor import CHECK_DTYPE
from deskgaze.simulator import make_user_dataset, make_users
from deskgaze.tests import skip_slow_tests
from deskgaze.tests.misc import TempDirMixin, numeric_gradient, \
    relative_error

TINY = blazegaze.ModelProfile(
    name='tiny',
    patch_size=(16, 32),
    stem_channels=4,
    blocks=(BlazeBlockSpec.single(4, 4),
            BlazeBlockSpec.double(4, 6, 3, stride=2)),
    decoder_channels=(2, 2, 2, 2),
    embedding_dim=8)


def random_batch(rng, b=4, shape=(16, 32, 3)):
    """Patches, z-scored pose, gaze labels and weights."""
    return blazegaze._Arrays(
        rng.uniform(0, 1, (b,) + shape),
        rng.normal(size=(b, blazegaze.POSE_FEATURES)),
        rng.uniform(-0.5, 0.5, (b, 2)),
        rng.uniform(0.5, 2.0, b))


def synthetic_samples(n_users, per_user, seed=0):
    """Rendered samples with true poses for several users."""
    samples = []
    for i, user in enumerate(make_users(n_users, seed)):
        samples.extend(make_user_dataset(user, per_user, seed=100 + i))
    return samples


class TestLosses(unittest.TestCase):
    """Test the three loss terms and their combination."""

    def test_gaze_unit_weights_is_mse(self):
        """Test that unit weights give the mean squared distance."""
        rng = np.random.default_rng(0)
        pred, true = rng.normal(size=(9, 2)), rng.normal(size=(9, 2))
        expected = np.mean(np.sum((pred - true) ** 2, axis=1))
        self.assertAlmostEqual(
            blazegaze.loss_gaze(pred, true, np.ones(9)), expected, places=12)

    def test_gaze_weighted(self):
        """Test a weighted batch against direct summation."""
        rng = np.random.default_rng(1)
        pred, true = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        w = rng.uniform(0, 3, 5)
        expected = sum(w[i] * ((pred[i, 0] - true[i, 0]) ** 2 +
                               (pred[i, 1] - true[i, 1]) ** 2)
                       for i in range(5)) / 5
        self.assertAlmostEqual(blazegaze.loss_gaze(pred, true, w), expected,
                               places=12)

    def test_gaze_rejects_bad_input(self):
        """Test shape and finiteness checks."""
        with self.assertRaises(ShapeError):
            blazegaze.loss_gaze(np.zeros((3, 2)), np.zeros((2, 2)),
                                np.ones(3))
        with self.assertRaises(NonFiniteError):
            blazegaze.loss_gaze(np.full((2, 2), np.nan), np.zeros((2, 2)),
                                np.ones(2))

    def test_consistency_double_loop(self):
        """Test the consistency loss against an explicit double loop."""
        rng = np.random.default_rng(2)
        z, g = rng.normal(size=(6, 5)), rng.uniform(-0.5, 0.5, (6, 2))
        w = rng.uniform(0.5, 2, 6)
        dmax = max(np.linalg.norm(g[i] - g[j])
                   for i in range(6) for j in range(6))
        expected = 0.0
        for i in range(6):
            for j in range(6):
                delta = np.linalg.norm(g[i] - g[j]) / (dmax + 1e-8)
                expected += w[i] * w[j] * (
                    np.linalg.norm(z[i] - z[j]) - delta) ** 2
        expected /= 36
        self.assertAlmostEqual(blazegaze.loss_consistency(z, g, w),
                               expected, places=10)

    def test_consistency_zero_for_isometry(self):
        """Test that embeddings spaced like normalized gaze cost nothing."""
        rng = np.random.default_rng(3)
        g = rng.uniform(-0.5, 0.5, (7, 2))
        dmax = max(np.linalg.norm(g[i] - g[j])
                   for i in range(7) for j in range(7))
        z = np.hstack([g, np.zeros((7, 3))]) / (dmax + 1e-8)
        self.assertLess(blazegaze.loss_consistency(z, g, np.ones(7)), 1e-28)

    def test_consistency_needs_pairs(self):
        """Test that a single sample cannot form pairs."""
        with self.assertRaises(InvalidInputError):
            blazegaze.loss_consistency(np.zeros((1, 4)), np.zeros((1, 2)),
                                       np.ones(1))

    def test_total_is_weighted_sum(self):
        """Test the combined objective."""
        weights = blazegaze.LossWeights(0.3, 2.0, 0.7)
        self.assertAlmostEqual(
            blazegaze.total_loss(1.5, 0.25, 4.0, weights),
            0.3 * 1.5 + 2.0 * 0.25 + 0.7 * 4.0, places=12)
        self.assertAlmostEqual(blazegaze.total_loss(1.0, 1.0, 1.0), 2.5)
        with self.assertRaises(ConfigError):
            blazegaze.LossWeights(-1.0)
        with self.assertRaises(ConfigError):
            blazegaze.LossWeights(0, 0, 0)

    def test_loss_gradients(self):
        """Finite-difference checks of the three loss gradients."""
        for seed in range(20):
            rng = np.random.default_rng(seed)
            w = rng.uniform(0.5, 2, 5)
            g = rng.uniform(-0.5, 0.5, (5, 2))

            pred = rng.normal(size=(5, 2))
            _, grad = blazegaze.loss_gaze(pred, g, w, True)
            numeric = numeric_gradient(
                lambda: blazegaze.loss_gaze(pred, g, w), pred)
            self.assertLess(relative_error(grad, numeric), 1e-4)

            z = rng.normal(size=(5, 4))
            _, grad = blazegaze.loss_consistency(z, g, w, return_grad=True)
            numeric = numeric_gradient(
                lambda: blazegaze.loss_consistency(z, g, w), z)
            self.assertLess(relative_error(grad, numeric), 1e-4)

            image = rng.uniform(size=(2, 4, 4, 3))
            recon = rng.uniform(size=(2, 4, 4, 3))
            _, grad = blazegaze.loss_reconstruction(image, recon, True)
            numeric = numeric_gradient(
                lambda: blazegaze.loss_reconstruction(image, recon), recon)
            self.assertLess(relative_error(grad, numeric), 1e-4)


class TestModel(TempDirMixin, unittest.TestCase):
    """Test model construction, accounting and checkpoints."""

    def test_full_size(self):
        """Test the deployed parameter count of the full profile."""
        model = blazegaze.BlazeGazeModel('full')
        params = count_params(model.inference_layers())
        self.assertGreaterEqual(params, 120000)
        self.assertLessEqual(params, 200000)
        self.assertEqual(count_params(model.gaze_head), 8706)
        self.assertEqual(params, 144874)

    def test_reduced_shapes(self):
        """Test the shapes of one forward pass."""
        model = blazegaze.BlazeGazeModel('reduced', seed=1)
        patches = np.random.default_rng(0).uniform(size=(2, 32, 128, 3))
        z, recon, g = model.forward(patches, np.zeros((2, 12)))
        self.assertEqual(z.shape, (2, 512))
        self.assertEqual(recon.shape, patches.shape)
        self.assertEqual(g.shape, (2, 2))
        self.assertTrue(np.all((recon >= 0) & (recon <= 1)))
        with self.assertRaises(ShapeError):
            model.encode(np.zeros((1, 16, 16, 3)))
        with self.assertRaises(ShapeError):
            model.predict_gaze(z, np.zeros((2, 11)))

    def test_unknown_profile(self):
        """Test that an unknown profile name raises ConfigError."""
        with self.assertRaises(ConfigError):
            blazegaze.BlazeGazeModel('huge')

    def test_checkpoint(self):
        """Test that a saved model restores its parameters and header."""
        model = blazegaze.BlazeGazeModel('reduced', seed=3)
        path = os.path.join(self.tmp, 'stage1.dgzc')
        model.save(path, meta={'best_epoch': 4})
        again, meta = blazegaze.BlazeGazeModel.load(path)
        self.assertEqual(meta['best_epoch'], 4)
        self.assertEqual(meta['profile'], 'reduced')
        self.assertEqual(again.encoder_hash(), model.encoder_hash())
        for name, value in model.state().items():
            np.testing.assert_array_equal(again.state()[name], value)

    def test_seeds_differ(self):
        """Test that the encoder hash follows the seed."""
        a = blazegaze.BlazeGazeModel('reduced', seed=0)
        b = blazegaze.BlazeGazeModel('reduced', seed=0)
        c = blazegaze.BlazeGazeModel('reduced', seed=1)
        self.assertEqual(a.encoder_hash(), b.encoder_hash())
        self.assertNotEqual(a.encoder_hash(), c.encoder_hash())


class TestComposedGradients(unittest.TestCase):
    """Finite-difference check of the whole stage-1 objective."""

    def test_total_loss_gradients(self):
        """Test sampled parameter gradients of a tiny model in float64."""
        cfg = blazegaze.Stage1Config()
        for seed in range(20):
            rng = np.random.default_rng(seed)
            model = blazegaze.BlazeGazeModel(TINY, seed=seed,
                                             dtype=CHECK_DTYPE)
            # zero biases put ReLU inputs exactly on the kink
            for name, tensor in model.named_parameters():
                if name.endswith('bias'):
                    tensor.values = rng.normal(0, 0.1, tensor.shape)
            batch = random_batch(rng)
            model.zero_grad()
            blazegaze._batch_losses(model, batch, cfg, True)
            for name, tensor in model.named_parameters():
                flat = tensor.values.reshape(-1)
                picks = rng.choice(flat.size, min(3, flat.size),
                                   replace=False)
                analytic, numeric = [], []
                for i in picks:
                    original = flat[i]
                    flat[i] = original + 1e-6
                    plus = blazegaze._batch_losses(model, batch, cfg,
                                                   False)[0]
                    flat[i] = original - 1e-6
                    minus = blazegaze._batch_losses(model, batch, cfg,
                                                    False)[0]
                    flat[i] = original
                    analytic.append(tensor.grad.reshape(-1)[i])
                    numeric.append((plus - minus) / 2e-6)
                error = relative_error(analytic, numeric, floor=1e-8)
                self.assertLess(error, 1e-4, '{0} seed {1}: {2:.2e}'.format(
                    name, seed, error))


class TestPoseNormalizer(unittest.TestCase):
    """Test z-scoring of head-pose features."""

    def test_fit_and_transform(self):
        """Test zero mean, unit scale and constant columns."""
        rng = np.random.default_rng(0)
        features = rng.normal(3, 2, (50, 12))
        features[:, 0] = 1.0
        normalizer = blazegaze.PoseNormalizer.fit(features)
        out = normalizer.transform(features)
        np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(out[:, 1:].std(axis=0), 1)
        self.assertEqual(normalizer.std[0], 1.0)
        again = blazegaze.PoseNormalizer.from_dict(normalizer.to_dict())
        np.testing.assert_array_equal(again.transform(features), out)


class TestStage1(TempDirMixin, unittest.TestCase):
    """Test representation training."""

    def test_config(self):
        """Test defaults and unknown keys."""
        cfg = blazegaze.Stage1Config()
        self.assertEqual((cfg.epochs, cfg.batch_size, cfg.lr, cfg.decay),
                         (20, 8, 1e-3, 0.95))
        self.assertEqual(cfg.loss_weights, (1.0, 1.0, 0.5))
        with self.assertRaises(ConfigError):
            blazegaze.Stage1Config.from_dict({'epoch': 3})
        cfg = blazegaze.Stage1Config.from_dict(
            {'loss_weights': {'beta_c': 0.1}})
        self.assertEqual(cfg.loss_weights.beta_c, 0.1)

    def test_short_run(self):
        """Test the history, the best epoch and the metrics log."""
        samples = synthetic_samples(3, 6)
        cfg = blazegaze.Stage1Config(epochs=2, batch_size=4,
                                     val_fraction=0.34)
        path = os.path.join(self.tmp, 'metrics.lp')
        with MetricsLog(path) as log:
            result = blazegaze.train_stage1(samples, cfg, metrics_log=log)

        history = result.history
        self.assertIsInstance(history, pd.DataFrame)
        self.assertEqual(list(history['epoch']), [0, 1, 1, 2, 2])
        self.assertEqual(list(history['split']),
                         ['val', 'train', 'val', 'train', 'val'])
        val = history[history['split'] == 'val']
        self.assertAlmostEqual(result.best_val_loss,
                               val['loss_total'].min())
        self.assertEqual(len(result.val_users), 1)
        self.assertEqual(len(result.train_users), 2)
        self.assertEqual(len(read_points(path)), 5)

    def test_empty(self):
        """Test that training without samples raises."""
        with self.assertRaises(InvalidInputError):
            blazegaze.train_stage1([])

    @skip_slow_tests
    def test_validation_loss_halves(self):
        """Test 20 default epochs on 8 synthetic users."""
        result = blazegaze.train_stage1(synthetic_samples(8, 25))
        val = result.history[result.history['split'] == 'val']
        start = val['loss_total'].iloc[0]
        self.assertLessEqual(result.best_val_loss, 0.5 * start)
