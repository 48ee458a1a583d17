import os
import tempfile
import unittest
from dataclasses import replace

import numpy as np
import torch

from tests.helpers import random_records
from xchem.config import EncoderConfig, FusionConfig, TrainConfig, config_hash
from xchem.errors import ConfigurationError, TrainingDivergedError, XChemError
from xchem.properties import TargetProperty
from xchem.training import (Sample, build_model, build_samples, checkpoint_path, evaluate, fold_splits,
                            load_checkpoint, mean_absolute_error, percent_change, predict_values, run_folds,
                            save_checkpoint, set_seed, standardization, train)

ENCODER = EncoderConfig(interaction_blocks=1, hidden_dim=8, n_radial=6, cutoff=5.0)
FUSION = FusionConfig(text_dim=16, latent_dim=4, projection_hidden=8)
TRAIN = TrainConfig(epochs=3, batch_size=4, folds=3, dtype='float64', seed=0)


def physics_for(records, dim=16, seed=0):
    rng = np.random.default_rng(seed)
    return {m.id: rng.standard_normal(dim) for m, _ in records}


def state_equal(a, b):
    return a.keys() == b.keys() and all(torch.equal(a[k], b[k]) for k in a)


class MetricTestCase(unittest.TestCase):

    def test_mae_matches_loop(self):
        rng = np.random.default_rng(0)
        predictions = rng.standard_normal(50)
        labels = rng.standard_normal(50)
        total = 0.0
        for p, y in zip(predictions, labels):
            total += abs(p - y)
        self.assertAlmostEqual(mean_absolute_error(predictions, labels), total / 50, places=12)

    def test_mae_errors(self):
        with self.assertRaises(ValueError):
            mean_absolute_error([], [])
        with self.assertRaises(ValueError):
            mean_absolute_error([1.0, 2.0], [1.0])

    def test_percent_change(self):
        self.assertEqual(round(percent_change(0.1312, 0.1027), 2), -21.72)
        self.assertEqual(round(percent_change(0.2650, 0.2820), 2), 6.42)
        self.assertEqual(percent_change(0.5, 0.5), 0.0)
        with self.assertRaises(ValueError):
            percent_change(0.0, 0.1)

    def test_standardization(self):
        self.assertEqual(standardization([2.0, 2.0, 2.0]), (2.0, 1.0))
        mean, std = standardization([1.0, 3.0])
        self.assertEqual((mean, std), (2.0, 1.0))


class SampleTestCase(unittest.TestCase):

    def test_fused_samples_need_physics(self):
        records = random_records(4)
        physics = physics_for(records[:3])
        samples = build_samples(records, 'homo', ENCODER.cutoff, physics)
        self.assertEqual([s.molecule_id for s in samples], [m.id for m, _ in records[:3]])
        self.assertEqual(samples[0].y, records[0][0].targets[TargetProperty.HOMO])
        np.testing.assert_array_equal(samples[1].t_phys, physics[records[1][0].id])

    def test_base_samples(self):
        records = random_records(4)
        samples = build_samples(records, 'mu', ENCODER.cutoff)
        self.assertEqual(len(samples), 4)
        self.assertIsNone(samples[0].t_phys)


class TrainTestCase(unittest.TestCase):

    def setUp(self):
        self.records = random_records(12, seed=1)
        self.physics = physics_for(self.records)
        self.samples = build_samples(self.records, 'gap', ENCODER.cutoff, self.physics)
        self.train_samples, self.val_samples = self.samples[:9], self.samples[9:]

    def run_train(self, config, variant='fused'):
        return train(self.train_samples, self.val_samples, 'gap', variant, ENCODER, FUSION, config)

    def test_zero_epochs_returns_initialization(self):
        result = self.run_train(replace(TRAIN, epochs=0))
        self.assertEqual(result.best_epoch, 0)
        self.assertEqual(result.losses, [])
        set_seed(TRAIN.seed)
        mean, std = standardization([s.y for s in self.train_samples])
        initial = build_model('gap', 'fused', ENCODER, FUSION, mean, std, torch.float64)
        self.assertTrue(state_equal(result.model.state_dict(), initial.state_dict()))

    def test_deterministic(self):
        a = self.run_train(TRAIN)
        b = self.run_train(TRAIN)
        self.assertEqual(a.losses, b.losses)
        self.assertEqual(a.val_maes, b.val_maes)
        self.assertTrue(state_equal(a.model.state_dict(), b.model.state_dict()))

    def test_best_epoch_is_validation_minimum(self):
        initial = evaluate(self.run_train(replace(TRAIN, epochs=0)).model, self.val_samples)
        result = self.run_train(TRAIN)
        self.assertEqual(len(result.val_maes), TRAIN.epochs)
        maes = [initial] + result.val_maes
        self.assertEqual(result.best_epoch, int(np.argmin(maes)))
        self.assertAlmostEqual(evaluate(result.model, self.val_samples), min(maes), places=10)

    def test_base_variant_ignores_physics(self):
        result = self.run_train(TRAIN, variant='base')
        self.assertEqual(result.model.variant, 'base')
        self.assertEqual(result.config_hash, config_hash(ENCODER, FUSION, 'gap', 'base'))
        self.assertNotEqual(result.config_hash, config_hash(ENCODER, FUSION, 'gap', 'fused'))

    def test_mse_loss(self):
        result = self.run_train(replace(TRAIN, loss='mse', epochs=1))
        self.assertEqual(len(result.losses), 1)

    def test_divergence(self):
        broken = [Sample(s.molecule_id, s.graph, s.y, np.full(16, np.nan)) for s in self.train_samples]
        with self.assertRaises(TrainingDivergedError):
            train(broken, [], 'gap', 'fused', ENCODER, FUSION, replace(TRAIN, epochs=1))

    def test_empty_sets(self):
        with self.assertRaises(XChemError):
            train([], self.val_samples, 'gap', 'fused', ENCODER, FUSION, TRAIN)
        model = self.run_train(replace(TRAIN, epochs=0)).model
        with self.assertRaises(XChemError):
            evaluate(model, [])

    def test_evaluate_matches_predictions(self):
        model = self.run_train(replace(TRAIN, epochs=1)).model
        predictions = predict_values(model, self.val_samples)
        self.assertAlmostEqual(evaluate(model, self.val_samples),
                               mean_absolute_error(predictions, [s.y for s in self.val_samples]), places=12)


class CheckpointTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        records = random_records(8, seed=2)
        self.samples = build_samples(records, 'mu', ENCODER.cutoff, physics_for(records))
        self.result = train(self.samples[:6], self.samples[6:], 'mu', 'fused', ENCODER, FUSION,
                            replace(TRAIN, epochs=1))
        self.path = checkpoint_path(self.tmp.name, 'mu', 'fused', 0)
        save_checkpoint(self.path, self.result)

    def tearDown(self):
        self.tmp.cleanup()

    def test_path(self):
        self.assertEqual(os.path.basename(self.path), 'mu-fused-fold0.pt')

    def test_round_trip(self):
        model = load_checkpoint(self.path, ENCODER, FUSION, 'mu', 'fused')
        self.assertEqual(model.mean, self.result.model.mean)
        self.assertEqual(predict_values(model, self.samples), predict_values(self.result.model, self.samples))

    def test_config_mismatch(self):
        with self.assertRaises(ConfigurationError):
            load_checkpoint(self.path, replace(ENCODER, hidden_dim=16), FUSION, 'mu', 'fused')
        with self.assertRaises(ConfigurationError):
            load_checkpoint(self.path, ENCODER, FUSION, 'mu', 'base')

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            load_checkpoint(os.path.join(self.tmp.name, 'none.pt'), ENCODER, FUSION, 'mu', 'fused')


class FoldTestCase(unittest.TestCase):

    def test_run_folds(self):
        records = random_records(12, seed=3)
        samples = build_samples(records, 'alpha', ENCODER.cutoff)
        with tempfile.TemporaryDirectory() as tmp:
            results = run_folds(samples, 'alpha', 'base', ENCODER, FUSION, replace(TRAIN, epochs=1), tmp)
            self.assertEqual([r.fold for r in results], [0, 1, 2])
            for r in results:
                self.assertEqual(r.sizes, {'train': 7, 'val': 1, 'test': 4})
                self.assertTrue(os.path.exists(r.checkpoint))
                self.assertGreaterEqual(r.mae, 0.0)
            only = run_folds(samples, 'alpha', 'base', ENCODER, FUSION, replace(TRAIN, epochs=1), folds=[1])
        self.assertEqual([r.fold for r in only], [1])
        self.assertEqual(only[0].mae, results[1].mae)
        self.assertEqual(results[0].to_dict()['sizes']['test'], 4)

    def test_holdout_splits(self):
        ids = ['m{0}'.format(i) for i in range(20)]
        splits = fold_splits(ids, replace(TRAIN, split='holdout'))
        self.assertEqual(len(splits), 3)
        for train_ids, val_ids, test_ids in splits:
            self.assertEqual((len(train_ids), len(val_ids), len(test_ids)), (16, 2, 2))
        self.assertNotEqual(splits[0][2], splits[1][2])

    def test_run_folds_holdout_on_small_set(self):
        records = random_records(5, seed=6)
        samples = build_samples(records, 'alpha', ENCODER.cutoff)
        results = run_folds(samples, 'alpha', 'base', ENCODER, FUSION, replace(TRAIN, epochs=1, split='holdout'))
        self.assertEqual(len(results), 3)
        for r in results:
            self.assertEqual(r.sizes, {'train': 3, 'val': 1, 'test': 1})
            self.assertGreaterEqual(r.mae, 0.0)


if __name__ == '__main__':
    unittest.main()
