from collections import Counter
import logging

import numpy as np

from django.test import SimpleTestCase

from segresmamba.core import MacCounter, Tensor, backward, gradcheck
from segresmamba.cost import count_macs, count_params
from segresmamba.network import CMMB, ModelConfig, SegResMamba, layer_plan, \
    predict
from segresmamba.utils import ShapeError

logger = logging.getLogger('segresmamba.test')
logger.setLevel('INFO')


def tiny_config(**kwargs):
    """ Reduced widths; the bottleneck rule is waived for these. """
    values = dict(in_channels=1, num_classes=2, stage_channels=(4, 4, 4, 4),
                  waive_bottleneck=True, norm_groups=2, d_state=2, expand=1,
                  input_extents=(32, 32, 32))
    values.update(kwargs)
    return ModelConfig(**values)


def random_config(rng, **kwargs):
    groups = int(rng.choice([1, 2]))
    values = dict(
        in_channels=int(rng.integers(1, 4)),
        num_classes=int(rng.integers(2, 5)),
        stage_channels=tuple(int(groups * rng.integers(1, 4))
                             for _ in range(4)),
        waive_bottleneck=True,
        norm_groups=groups,
        cmmb_per_stage=int(rng.integers(0, 3)),
        d_state=int(rng.integers(1, 5)),
        expand=int(rng.integers(1, 3)),
        d_conv=int(rng.integers(2, 5)),
        residual_order=str(rng.choice(['pre', 'post'])),
        mlp_hidden_ratio=float(rng.choice([0.5, 1, 2])),
        mlp_activation=str(rng.choice(['silu', 'relu', 'identity'])),
        mlp_norm=bool(rng.integers(2)),
        tom_pre_norm=bool(rng.integers(2)),
        slice_order=str(rng.choice(['hwd', 'whd'])),
        input_extents=(32, 32, 32),
    )
    values.update(kwargs)
    return ModelConfig(**values)


class ConfigTestCase(SimpleTestCase):
    def test_bottleneck(self):
        with self.assertRaises(ValueError):
            ModelConfig(stage_channels=(8, 16, 32, 64))
        config = ModelConfig(stage_channels=(8, 16, 32, 64),
                             waive_bottleneck=True)
        self.assertEqual(config.decoder_channels, (32, 16, 8))

    def test_extents(self):
        with self.assertRaises(ShapeError):
            ModelConfig(input_extents=(24, 32, 32))
        with self.assertRaises(ShapeError):
            layer_plan(ModelConfig(), (32, 32, 40))

    def test_cmmb_extents(self):
        for extents in ((16, 16, 16), (48, 32, 32), (32, 32, 80)):
            with self.assertRaises(ShapeError):
                ModelConfig(input_extents=extents)
            config = ModelConfig(input_extents=extents, cmmb_per_stage=0)
            self.assertEqual(config.input_extents, extents)
        with self.assertRaises(ShapeError):
            layer_plan(ModelConfig(), (64, 64, 48))
        model = SegResMamba(tiny_config(cmmb_per_stage=1), seed=0)
        with self.assertRaises(ShapeError):
            model.encoder(Tensor(np.zeros((1, 1, 16, 16, 16))))

    def test_invalid(self):
        for kwargs in ({'norm_groups': 5}, {'residual_order': 'mid'},
                       {'mlp_activation': 'tanh'}, {'slice_order': 'dhw'},
                       {'cmmb_per_stage': -1}, {'num_classes': 0}):
            with self.assertRaises(ValueError):
                ModelConfig(**kwargs)

    def test_presets(self):
        config = ModelConfig.from_preset('btcv')
        self.assertEqual((config.in_channels, config.num_classes), (1, 14))
        self.assertTrue(ModelConfig.from_preset('brats').multi_label)
        self.assertEqual(ModelConfig.from_preset('spleen').input_extents,
                         (96, 96, 96))
        with self.assertRaises(ValueError):
            ModelConfig.from_preset('kits')

    def test_dict(self):
        config = tiny_config(mlp_activation='relu')
        self.assertEqual(ModelConfig.from_dict(config.to_dict()), config)
        self.assertEqual(ModelConfig.from_dict(config.to_dict()).digest,
                         config.digest)
        self.assertNotEqual(tiny_config().digest, config.digest)
        with self.assertRaises(ValueError):
            ModelConfig.from_dict({'channels': 3})


class LayerPlanTestCase(SimpleTestCase):
    def output(self, plan, name):
        return next(layer for layer in plan if layer.name == name).out_shape

    def test_default_shape_contract(self):
        config = ModelConfig()
        plan = layer_plan(config, (32, 32, 32))
        for k, (channels, extent) in enumerate(zip((96, 192, 384, 768),
                                                   (16, 8, 4, 2))):
            name = 'encoder.stages.{}.blocks.0.tom2.add_s'.format(k)
            self.assertEqual(self.output(plan, name),
                             (1, channels) + (extent,) * 3)
        self.assertEqual(self.output(plan, 'decoder.head'),
                         (1, 3, 32, 32, 32))
        self.assertEqual(plan[-1].name, 'decoder.head')

    def test_stage_extents(self):
        config = ModelConfig()
        self.assertEqual(config.stage_extents((64, 32, 48)),
                         [(32, 16, 24), (16, 8, 12), (8, 4, 6), (4, 2, 3)])

    def test_cmmb_needs_even_extents(self):
        # the fourth stage is a single voxel
        with self.assertRaises(ShapeError):
            layer_plan(tiny_config(), (16, 16, 16))
        plan = layer_plan(tiny_config(cmmb_per_stage=0), (16, 16, 16))
        self.assertEqual(plan[-1].out_shape, (1, 2, 16, 16, 16))

    def test_batch(self):
        plan = layer_plan(tiny_config(), batch=3)
        self.assertTrue(all(layer.in_shape[0] == 3 for layer in plan))

    def test_names_are_parameter_prefixes(self):
        config = random_config(np.random.default_rng(0), cmmb_per_stage=1)
        model = SegResMamba(config, seed=0)
        sizes = Counter()
        for name, param in model.named_parameters():
            sizes[name.rsplit('.', 1)[0]] += param.size
        rows = {row.name: row.params for row in count_params(config)}
        self.assertEqual(rows, dict(sizes))


class CMMBTestCase(SimpleTestCase):
    def block(self, channels=2, seed=0):
        spec = tiny_config(stage_channels=(channels,) * 4,
                           norm_groups=1).mamba_spec(channels)
        return CMMB(channels, spec, rng=np.random.default_rng(seed))

    def test_shape_preserving(self):
        block = self.block()
        rng = np.random.default_rng(0)
        for extents in ((2, 2, 2), (4, 4, 4), (6, 6, 6), (8, 8, 8),
                        (2, 6, 4)):
            x = Tensor(rng.standard_normal((1, 2) + extents))
            self.assertEqual(block(x).shape, x.shape)

    def test_odd_extents(self):
        with self.assertRaises(ShapeError):
            self.block()(Tensor(np.ones((1, 2, 4, 5, 4))))

    def test_zero_path(self):
        block = self.block(seed=1)
        block.conv_t.weight.data[...] = 0.0
        block.conv_t.bias.data[...] = 0.0
        x = Tensor(np.random.default_rng(1).standard_normal((1, 2, 4, 4, 4)))
        np.testing.assert_array_equal(block.inner(x).data, 0.0)
        np.testing.assert_allclose(block(x).data, block.tom2(x).data,
                                   rtol=0, atol=1e-15)

    def test_channels(self):
        block = self.block(channels=96)
        x = Tensor(np.random.default_rng(2).standard_normal((1, 96, 8, 8, 8)))
        self.assertEqual(block(x).shape, (1, 96, 8, 8, 8))

    def test_gradients(self):
        for seed in range(10):
            block = self.block(seed=seed)
            x = Tensor(np.random.default_rng(seed).standard_normal(
                (1, 2, 4, 4, 4)), requires_grad=True)
            params = [x, block.conv1.weight, block.conv_t.weight,
                      block.tom1.blocks[2].ssm.A_log,
                      block.tom2.blocks[0].in_proj.weight]
            error = gradcheck(lambda: block(x), params, max_entries=3)
            self.assertLess(error, 1e-5)


class SegResMambaTestCase(SimpleTestCase):
    def test_shape(self):
        config = tiny_config(in_channels=2, num_classes=3)
        model = SegResMamba(config, seed=0)
        x = np.random.default_rng(0).standard_normal((1, 2, 32, 32, 32))
        enc = model.encoder(Tensor(x))
        self.assertEqual([f.shape for f in enc.skips],
                         [(1, 4, 16, 16, 16), (1, 4, 8, 8, 8),
                          (1, 4, 4, 4, 4)])
        self.assertEqual(enc.bottleneck.shape, (1, 4, 2, 2, 2))
        self.assertEqual(model.decoder(enc).shape, (1, 3, 32, 32, 32))

    def test_wrong_input(self):
        model = SegResMamba(tiny_config(cmmb_per_stage=0), seed=0)
        with self.assertRaises(ShapeError):
            model(np.zeros((1, 1, 24, 16, 16)))
        with self.assertRaises(ShapeError):
            model(np.zeros((1, 2, 16, 16, 16)))

    def test_deterministic(self):
        config = tiny_config(cmmb_per_stage=0)
        x = np.random.default_rng(0).standard_normal((1, 1, 16, 16, 16))
        first = SegResMamba(config, seed=7)(x).data
        second = SegResMamba(config, seed=7)
        np.testing.assert_array_equal(first, second(x).data)
        np.testing.assert_array_equal(first, second(x).data)
        other = SegResMamba(config, seed=8)(x).data
        self.assertFalse(np.array_equal(first, other))

    def test_num_parameters(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            config = random_config(rng)
            rows = count_params(config)
            model = SegResMamba(config, seed=0)
            self.assertEqual(sum(row.params for row in rows),
                             model.num_parameters())

    def test_macs(self):
        rng = np.random.default_rng(1)
        cases = [(random_config(rng, cmmb_per_stage=0), (16, 16, 16), 1)
                 for _ in range(16)]
        cases += [(random_config(rng, cmmb_per_stage=1), (32, 32, 32), 1),
                  (tiny_config(), (32, 32, 32), 1),
                  (tiny_config(cmmb_per_stage=0), (16, 32, 16), 2),
                  (tiny_config(cmmb_per_stage=0, residual_order='post'),
                   (16, 16, 16), 1)]
        for config, extents, batch in cases:
            model = SegResMamba(config, seed=0)
            x = np.zeros((batch, config.in_channels) + extents)
            with MacCounter() as counter:
                predict(model, x)
            rows = count_macs(config, extents, batch)
            self.assertEqual(sum(row.macs for row in rows), counter.total)
            expected = Counter()
            for row in rows:
                if row.macs:
                    expected[row.kind] += row.macs
            self.assertEqual(expected, +counter.by_kind)

    def test_backward_finite(self):
        config = tiny_config(stage_channels=(2, 2, 2, 2), norm_groups=1,
                             num_classes=3)
        for seed in range(100):
            model = SegResMamba(config, seed=seed)
            x = np.random.default_rng(seed).standard_normal(
                (1, 1, 32, 32, 32))
            backward(model(x).sum())
            for name, param in model.named_parameters():
                self.assertTrue(np.isfinite(param.grad).all(), name)

    def test_gradients_through_cmmb(self):
        config = tiny_config(stage_channels=(2, 2, 2, 2), norm_groups=1)
        model = SegResMamba(config, seed=5)
        x = Tensor(np.random.default_rng(5).standard_normal(
            (1, 1, 32, 32, 32)), requires_grad=True)
        first, last = model.encoder.stages[0].blocks[0], \
            model.encoder.stages[3].blocks[0]
        params = [x, first.conv1.weight, first.conv_t.weight,
                  first.tom1.blocks[1].ssm.dt_proj.weight,
                  last.tom2.blocks[0].in_proj.weight,
                  last.tom2.blocks[2].conv.weight,
                  model.decoder.head.weight]
        error = gradcheck(lambda: model(x), params, max_entries=3)
        self.assertLess(error, 1e-5)

    def test_zero_in_zero_out(self):
        config = tiny_config(stage_channels=(2, 2, 2, 2), norm_groups=1)
        model = SegResMamba(config, seed=6)
        for name, param in model.named_parameters():
            if name.endswith('.bias'):
                param.data[...] = 0.0
        enc = model.encoder(Tensor(np.zeros((1, 1, 32, 32, 32))))
        for skip in enc.skips:
            np.testing.assert_array_equal(skip.data, 0.0)
        np.testing.assert_array_equal(enc.bottleneck.data, 0.0)
        logits = model.decoder(enc)
        self.assertEqual(logits.shape, (1, 2, 32, 32, 32))
        np.testing.assert_array_equal(logits.data, 0.0)

    def test_gradients(self):
        config = tiny_config(cmmb_per_stage=0,
                             stage_channels=(2, 2, 2, 2), norm_groups=1)
        model = SegResMamba(config, seed=3)
        x = Tensor(np.random.default_rng(3).standard_normal(
            (1, 1, 16, 16, 16)), requires_grad=True)
        params = [x, model.encoder.stages[0].down.conv.weight,
                  model.encoder.skips[1].fc1.weight,
                  model.decoder.stages[0].block.conv1.weight,
                  model.decoder.head.weight]
        error = gradcheck(lambda: model(x), params, max_entries=4)
        self.assertLess(error, 1e-5)

    def test_predict_ties(self):
        model = SegResMamba(tiny_config(cmmb_per_stage=0, num_classes=4),
                            seed=0)
        for param in model.parameters():
            param.data[...] = 0.0
        x = np.random.default_rng(0).standard_normal((2, 1, 16, 16, 16))
        labels = predict(model, x)
        self.assertEqual(labels.shape, (2, 16, 16, 16))
        self.assertEqual(labels.dtype, np.int32)
        self.assertFalse(labels.any())

    def test_predict_multi_label(self):
        model = SegResMamba(tiny_config(cmmb_per_stage=0, multi_label=True),
                            seed=0)
        masks = predict(model, np.ones((1, 1, 16, 16, 16)))
        self.assertEqual(masks.shape, (1, 2, 16, 16, 16))
        self.assertTrue(set(np.unique(masks)) <= {0, 1})
