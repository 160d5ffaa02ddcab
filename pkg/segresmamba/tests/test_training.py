import logging
import math
import os
from unittest import skipUnless

import numpy as np

from django.test import SimpleTestCase

from segresmamba.core import Parameter, Tensor, gradcheck
from segresmamba.network import ModelConfig, SegResMamba
from segresmamba.training import AdamW, OptimState, TrainHyper, Trainer, \
    VolumeSample, adamw_step, augment, cosine_lr, crop_sample, dice_loss, \
    dice_metric, evaluate, flip_sample, foreground_crop, one_hot, \
    scale_intensity_range, synth_dataset, train_loop
from segresmamba.utils import ShapeError, TrainingError

logger = logging.getLogger('segresmamba.test')
logger.setLevel('INFO')


def tiny_config(**kwargs):
    values = dict(in_channels=1, num_classes=3, stage_channels=(4, 4, 4, 4),
                  waive_bottleneck=True, norm_groups=2, d_state=2, expand=1,
                  cmmb_per_stage=0, input_extents=(16, 16, 16))
    values.update(kwargs)
    return ModelConfig(**values)


class DiceTestCase(SimpleTestCase):
    def test_one_hot(self):
        out = one_hot(np.array([[0, 2, 1]]), 3)
        self.assertEqual(out.shape, (1, 3, 3))
        self.assertEqual(out[0].tolist(), [[1, 0, 0], [0, 0, 1], [0, 1, 0]])
        with self.assertRaises(ValueError):
            one_hot(np.array([3]), 3)

    def test_perfect_prediction(self):
        target = one_hot(np.array([[[0, 1], [1, 0]]]), 2)
        loss = dice_loss(Tensor(target), target, activation=None)
        self.assertAlmostEqual(loss.item(), 0.0, places=12)

    def test_disjoint_prediction(self):
        target = one_hot(np.array([[0, 0, 1, 1]]), 2)
        loss = dice_loss(Tensor(1.0 - target), target, smooth=0.0,
                         activation=None)
        self.assertAlmostEqual(loss.item(), 1.0)

    def test_range(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            logits = Tensor(rng.standard_normal((2, 3, 4, 4, 4)) * 5)
            target = one_hot(rng.integers(0, 3, (2, 4, 4, 4)), 3)
            for activation in ('softmax', 'sigmoid'):
                loss = dice_loss(logits, target, activation=activation)
                self.assertTrue(0.0 <= loss.item() <= 1.0 + 1e-5)

    def test_gradients(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            logits = Tensor(rng.standard_normal((1, 2, 2, 2, 2)),
                            requires_grad=True)
            target = one_hot(rng.integers(0, 2, (1, 2, 2, 2)), 2)
            for include_background in (True, False):
                error = gradcheck(lambda: dice_loss(
                    logits, target, include_background=include_background),
                    [logits])
                self.assertLess(error, 1e-6)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            dice_loss(Tensor(np.zeros((1, 2, 2))), np.zeros((1, 3, 2)))
        with self.assertRaises(ValueError):
            dice_loss(Tensor(np.zeros((1, 2, 2))), np.zeros((1, 2, 2)),
                      activation='tanh')

    def test_metric(self):
        pred = np.array([0, 1, 1, 2])
        target = np.array([0, 1, 2, 2])
        scores = dice_metric(pred, target, 3)
        np.testing.assert_allclose(scores.per_class, [1.0, 2 / 3, 2 / 3])
        self.assertAlmostEqual(scores.mean, 7 / 9)
        self.assertAlmostEqual(
            dice_metric(pred, target, 3, include_background=False).mean,
            2 / 3)

    def test_metric_absent_class(self):
        scores = dice_metric(np.zeros(4, int), np.zeros(4, int), 2)
        self.assertEqual(scores.per_class.tolist(), [1.0, 1.0])

    def test_metric_multi_label(self):
        pred = np.array([[1, 1, 0, 0], [0, 0, 0, 0]])
        target = np.array([[1, 0, 0, 0], [0, 0, 0, 0]])
        scores = dice_metric(pred, target, multi_label=True)
        np.testing.assert_allclose(scores.per_class, [2 / 3, 1.0])


class OptimTestCase(SimpleTestCase):
    def test_scalar_trace(self):
        # closed-form AdamW on f(p) = p^2 / 2, starting from p = 1
        lr, beta1, beta2, eps, wd = 0.1, 0.9, 0.999, 1e-8, 0.01
        p = np.array([1.0])
        state = OptimState(lr, (beta1, beta2), eps, wd)
        expected, m, v = 1.0, 0.0, 0.0
        for t in range(1, 21):
            g = expected
            expected -= lr * wd * expected
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            expected -= lr * (m / (1 - beta1 ** t)) / \
                (math.sqrt(v / (1 - beta2 ** t)) + eps)
            adamw_step([p], [p.copy()], state)
            self.assertAlmostEqual(p[0], expected, places=14)
        self.assertEqual(state.step, 20)

    def test_first_step(self):
        # the first bias corrected step moves by lr whatever the gradient
        p = np.array([0.5, -2.0, 3.0])
        adamw_step([p], [np.array([1e-3, -5.0, 40.0])],
                   OptimState(lr=0.1, eps=0.0))
        np.testing.assert_allclose(p, [0.4, -1.9, 2.9])

    def test_module(self):
        param = Parameter(np.ones(3))
        optim = AdamW([param], lr=0.1, weight_decay=0.5)
        param.grad = np.zeros(3)
        optim.step()
        np.testing.assert_allclose(param.data, 0.95)
        optim.zero_grad()
        self.assertIsNone(param.grad)
        # no gradient: decay only
        optim.step()
        np.testing.assert_allclose(param.data, 0.95 * 0.95)

    def test_mismatch(self):
        with self.assertRaises(ShapeError):
            adamw_step([np.ones(2)], [np.ones(3)], OptimState())
        with self.assertRaises(ShapeError):
            adamw_step([np.ones(2)], [], OptimState())

    def test_cosine(self):
        self.assertEqual(cosine_lr(0, 100, 1e-4), 1e-4)
        self.assertAlmostEqual(cosine_lr(100, 100, 1e-4, 1e-6), 1e-6)
        self.assertAlmostEqual(cosine_lr(50, 100, 1e-4, 0.0), 5e-5)
        self.assertEqual(cosine_lr(0, 0, 1e-4), 1e-4)
        with self.assertRaises(ValueError):
            cosine_lr(101, 100, 1e-4)


class DataTestCase(SimpleTestCase):
    def test_synth(self):
        dataset = synth_dataset(4, 16, 3, seed=1)
        self.assertEqual(len(dataset), 4)
        for sample in dataset:
            self.assertEqual(sample.image.shape, (1, 16, 16, 16))
            self.assertEqual(sample.label.shape, (16, 16, 16))
            self.assertTrue(0 <= sample.label.min() and
                            sample.label.max() < 3)
        self.assertFalse(np.array_equal(dataset[0].label, dataset[1].label))

    def test_synth_deterministic(self):
        first = synth_dataset(3, 16, 3, seed=4, in_channels=2)
        second = synth_dataset(3, 16, 3, seed=4, in_channels=2)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.image, b.image)
            np.testing.assert_array_equal(a.label, b.label)
        # samples do not depend on the dataset size
        np.testing.assert_array_equal(
            synth_dataset(1, 16, 3, seed=4, in_channels=2)[0].image,
            first[0].image)

    def test_every_class_present(self):
        for seed in range(5):
            for num_classes in (2, 3, 5):
                dataset = synth_dataset(num_classes, 16, num_classes,
                                        seed=seed)
                present = set()
                for sample in dataset:
                    present.update(np.unique(sample.label).tolist())
                self.assertTrue(set(range(1, num_classes)) <= present)

    def test_multi_label(self):
        sample = synth_dataset(1, 16, 3, multi_label=True)[0]
        self.assertEqual(sample.label.shape, (3, 16, 16, 16))
        # nested masks
        self.assertTrue((sample.label[1] <= sample.label[0]).all())

    def test_synth_invalid(self):
        with self.assertRaises(ShapeError):
            synth_dataset(1, 20, 3)
        with self.assertRaises(ValueError):
            synth_dataset(1, 16, 1)

    def test_sample_checks(self):
        with self.assertRaises(ShapeError):
            VolumeSample(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)))
        with self.assertRaises(ShapeError):
            VolumeSample(np.zeros((1, 2, 2, 2)), np.zeros((2, 2, 3)))
        with self.assertRaises(ValueError):
            VolumeSample(np.full((1, 2, 2, 2), np.nan), np.zeros((2, 2, 2)))

    def sample(self, seed=0):
        rng = np.random.default_rng(seed)
        return VolumeSample(rng.standard_normal((2, 4, 6, 8)),
                            rng.integers(0, 3, (4, 6, 8)))

    def test_double_flip(self):
        sample = self.sample()
        for axes in ([0], [1, 2], [0, 1, 2]):
            twice = flip_sample(flip_sample(sample, axes), axes)
            np.testing.assert_array_equal(twice.image, sample.image)
            np.testing.assert_array_equal(twice.label, sample.label)

    def test_flip_keeps_histogram(self):
        sample = self.sample(1)
        flipped = flip_sample(sample, [0, 2])
        self.assertEqual(np.bincount(flipped.label.ravel()).tolist(),
                         np.bincount(sample.label.ravel()).tolist())
        np.testing.assert_array_equal(flipped.label,
                                      sample.label[::-1, :, ::-1])

    def test_augment(self):
        sample = self.sample(2)
        first = augment(sample, np.random.default_rng(3), (4, 4, 4))
        second = augment(sample, np.random.default_rng(3), (4, 4, 4))
        np.testing.assert_array_equal(first.image, second.image)
        np.testing.assert_array_equal(first.label, second.label)
        self.assertEqual(first.image.shape, (2, 4, 4, 4))
        counts = np.bincount(first.label.ravel(), minlength=3)
        self.assertTrue((counts <= np.bincount(sample.label.ravel(),
                                               minlength=3)).all())

    def test_augment_scaling(self):
        sample = self.sample(3)
        out = augment(sample, np.random.default_rng(0), flips=[])
        factor = out.image / sample.image
        self.assertTrue(0.9 <= factor.min() <= factor.max() <= 1.1)
        np.testing.assert_allclose(factor, factor.flat[0])
        np.testing.assert_array_equal(out.label, sample.label)

    def test_crop(self):
        sample = self.sample(4)
        crop = crop_sample(sample, (1, 2, 3), (2, 2, 2))
        np.testing.assert_array_equal(crop.label,
                                      sample.label[1:3, 2:4, 3:5])
        with self.assertRaises(ShapeError):
            crop_sample(sample, (3, 0, 0), (2, 2, 2))
        with self.assertRaises(ShapeError):
            augment(sample, np.random.default_rng(0), (8, 8, 8))

    def test_foreground_crop(self):
        label = np.zeros((8, 8, 8), int)
        label[6:8, 6:8, 6:8] = 1
        sample = VolumeSample(np.zeros((1, 8, 8, 8)), label)
        crop = foreground_crop(sample, (4, 4, 4))
        self.assertEqual(crop.label.sum(), 8)

    def test_scale_intensity_range(self):
        out = scale_intensity_range(np.array([-100.0, 0.0, 50.0, 300.0]),
                                    0.0, 200.0)
        np.testing.assert_allclose(out, [0.0, 0.0, 0.25, 1.0])
        with self.assertRaises(ValueError):
            scale_intensity_range(np.zeros(2), 1.0, 1.0)


class TrainerTestCase(SimpleTestCase):
    def dataset(self, n=2):
        return synth_dataset(n, 16, 3, seed=0)

    def hyper(self, **kwargs):
        values = dict(steps=4, eval_every=2, lr_max=1e-3, patch_extents=None)
        values.update(kwargs)
        return TrainHyper(**values)

    def test_zero_steps(self):
        model = SegResMamba(tiny_config(), seed=0)
        state = model.state_dict()
        history = train_loop(model, self.dataset(), steps=0,
                             hyper=self.hyper())
        self.assertEqual(len(history), 0)
        self.assertEqual(history.to_csv(), 'step,loss,lr,mean_dice\n')
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(value, state[name])

    def test_steps_leave_hyper_unchanged(self):
        hyper = self.hyper(epochs=3, eval_every=0)
        model = SegResMamba(tiny_config(), seed=0)
        history = train_loop(model, self.dataset(), 1, hyper)
        self.assertEqual(len(history), 1)
        self.assertEqual((hyper.steps, hyper.epochs), (4, 3))
        self.assertEqual(hyper, self.hyper(epochs=3, eval_every=0))

    def test_history(self):
        model = SegResMamba(tiny_config(), seed=0)
        history = Trainer(model, self.dataset(), self.hyper()).run()
        self.assertEqual([row['step'] for row in history.steps],
                         [0, 1, 2, 3])
        self.assertEqual(history.steps[0]['lr'], 1e-3)
        self.assertEqual([row['step'] for row in history.evals], [1, 3])
        for row in history.steps:
            self.assertTrue(0.0 <= row['loss'] <= 1.0 + 1e-5)
            self.assertTrue(0.0 <= row['mean_dice'] <= 1.0)
        self.assertEqual(len(history.evals[0]['per_class']), 3)
        self.assertEqual(history.eval_csv().splitlines()[0],
                         'step,mean_dice,dice_0,dice_1,dice_2')

    def test_deterministic(self):
        outputs = []
        for _ in range(2):
            model = SegResMamba(tiny_config(), seed=1)
            history = Trainer(model, self.dataset(), self.hyper(seed=5)).run()
            outputs.append((history.to_csv(), history.to_json()))
        self.assertEqual(outputs[0], outputs[1])

    def test_epochs(self):
        hyper = self.hyper(epochs=2, eval_every=0)
        self.assertEqual(hyper.total_steps(3), 6)
        model = SegResMamba(tiny_config(), seed=0)
        history = Trainer(model, self.dataset(3), hyper).run()
        self.assertEqual(len(history), 6)
        self.assertEqual(len(history.evals), 1)

    def test_updates_parameters(self):
        model = SegResMamba(tiny_config(), seed=0)
        before = model.state_dict()
        train_loop(model, self.dataset(1), 1, self.hyper())
        # weights are nonzero: decay alone moves them
        changed = [not np.array_equal(value, before[name])
                   for name, value in model.state_dict().items()
                   if name.endswith('weight')]
        self.assertTrue(changed and all(changed))

    def test_patch_and_preprocessing(self):
        model = SegResMamba(tiny_config(), seed=0)
        hyper = self.hyper(steps=2, patch_extents=(16, 16, 16),
                           foreground_crop=True, intensity_range=(0.0, 1.0))
        history = Trainer(model, synth_dataset(1, 32, 3), hyper).run()
        self.assertEqual(len(history), 2)

    def test_non_finite_loss(self):
        model = SegResMamba(tiny_config(), seed=0)
        trainer = Trainer(model, self.dataset(), self.hyper())
        trainer.run()
        model.decoder.head.bias.data[0] = np.nan
        trainer.history.steps.clear()
        with np.errstate(all='ignore'):
            with self.assertRaises(TrainingError) as ctx:
                trainer.run()
        self.assertEqual(ctx.exception.step, 0)
        self.assertIsNone(ctx.exception.last_good_step)

    def test_labels_checked(self):
        model = SegResMamba(tiny_config(num_classes=2), seed=0)
        with self.assertRaises(ValueError):
            Trainer(model, self.dataset(), self.hyper())

    def test_evaluate(self):
        model = SegResMamba(tiny_config(), seed=0)
        scores = evaluate(model, self.dataset())
        self.assertEqual(len(scores.per_class), 3)
        self.assertAlmostEqual(scores.mean, scores.per_class.mean())

    @skipUnless(os.getenv('SRM_SLOW_TESTS'), 'set SRM_SLOW_TESTS to run')
    def test_overfit(self):
        config = ModelConfig(in_channels=1, num_classes=3,
                             stage_channels=(16, 32, 64, 128),
                             waive_bottleneck=True,
                             input_extents=(32, 32, 32))
        dataset = synth_dataset(8, 32, 3, seed=0)
        model = SegResMamba(config, seed=0)
        history = train_loop(model, dataset, 500, TrainHyper(eval_every=100))
        scores = history.evals[-1]
        logger.info('overfit: mean dice %.4f', scores['mean_dice'])
        self.assertGreaterEqual(scores['mean_dice'], 0.90)
        self.assertTrue(all(s > 0 for s in scores['per_class'][1:]))
