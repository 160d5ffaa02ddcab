import logging

import numpy as np

from django.test import SimpleTestCase

from segresmamba.core import MacCounter, Tensor, backward, gradcheck
from segresmamba.layers import Conv3d, ConvSpec, ConvTranspose3d, GroupNorm, \
    InstanceNorm, LayerNorm, Linear, MlpSkip, Module, ModuleList, NormSpec, \
    ResidualBlock, conv3d, conv_transpose3d, interpolation_matrix, \
    normalize, upsample_trilinear
from segresmamba.utils import ShapeError

logger = logging.getLogger('segresmamba.test')
logger.setLevel('INFO')


def naive_conv(x, weight, bias, stride, padding, groups=1):
    """ Literal loops over outputs and kernel offsets. """
    n, cin = x.shape[:2]
    cout, cig = weight.shape[:2]
    k = weight.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in padding))
    out_ext = [(e + 2 * p - kk) // s + 1 for e, p, kk, s in zip(
        x.shape[2:], padding, k, stride)]
    og = cout // groups
    out = np.zeros((n, cout) + tuple(out_ext))
    for b in range(n):
        for o in range(cout):
            g = o // og
            for i in range(out_ext[0]):
                for j in range(out_ext[1]):
                    for l in range(out_ext[2]):
                        acc = bias[o] if bias is not None else 0.0
                        for c in range(cig):
                            for a in range(k[0]):
                                for e in range(k[1]):
                                    for f in range(k[2]):
                                        acc += weight[o, c, a, e, f] * xp[
                                            b, g * cig + c,
                                            i * stride[0] + a,
                                            j * stride[1] + e,
                                            l * stride[2] + f]
                        out[b, o, i, j, l] = acc
    return out


def naive_conv_transpose(x, weight, stride, padding, output_padding):
    """ Scatter every input voxel through the kernel. """
    n, cin = x.shape[:2]
    cout = weight.shape[1]
    k = weight.shape[2:]
    full = [(e - 1) * s + kk + op for e, s, kk, op in zip(
        x.shape[2:], stride, k, output_padding)]
    out = np.zeros((n, cout) + tuple(full))
    for b in range(n):
        for c in range(cin):
            for i, j, l in np.ndindex(*x.shape[2:]):
                for a, e, f in np.ndindex(*k):
                    out[b, :, i * stride[0] + a, j * stride[1] + e,
                        l * stride[2] + f] += x[b, c, i, j, l] * \
                        weight[c, :, a, e, f]
    p = padding
    return out[:, :, p[0]:full[0] - p[0], p[1]:full[1] - p[1],
               p[2]:full[2] - p[2]]


class ConvSpecTestCase(SimpleTestCase):
    def test_num_parameters(self):
        self.assertEqual(ConvSpec.make(2, 4, 3).num_parameters, 220)
        self.assertEqual(ConvSpec.make(768, 384, 1).num_parameters, 295296)

    def test_macs(self):
        spec = ConvSpec.make(2, 4, 3, 1, 1)
        self.assertEqual(spec.macs(1, (8, 8, 8)), 110592)

    def test_output_extents(self):
        self.assertEqual(ConvSpec.make(1, 1, 7, 2, 3).output_extents(32),
                         (16, 16, 16))
        self.assertEqual(ConvSpec.make(1, 1, 2, 2, 0).output_extents(16),
                         (8, 8, 8))
        spec = ConvSpec.make(1, 1, 5, 2, 2, transposed=True,
                             output_padding=(1, 1, 1))
        self.assertEqual(spec.output_extents(4), (8, 8, 8))
        with self.assertRaises(ShapeError):
            ConvSpec.make(1, 1, 5).output_extents(3)

    def test_random_specs(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            k, s = rng.integers(1, 4, 3), rng.integers(1, 3, 3)
            p = [int(rng.integers(0, kk)) for kk in k]
            extents = rng.integers(4, 7, 3)
            spec = ConvSpec.make(2, 2, tuple(k), tuple(s), tuple(p))
            x = Tensor(rng.standard_normal((1, 2) + tuple(extents)))
            out = conv3d(x, spec, Tensor(rng.standard_normal(
                spec.weight_shape)))
            self.assertEqual(out.shape[2:], spec.output_extents(extents))

    def test_invalid(self):
        with self.assertRaises(ValueError):
            ConvSpec.make(3, 4, 3, groups=2)
        with self.assertRaises(ValueError):
            ConvSpec.make(2, 2, 3, output_padding=(1, 1, 1))
        with self.assertRaises(ValueError):
            ConvSpec.make(2, 2, 3, 2, transposed=True,
                          output_padding=(2, 0, 0))
        with self.assertRaises(ValueError):
            ConvSpec.make(2, 2, 0)


class ConvTestCase(SimpleTestCase):
    def test_sum_of_ones(self):
        spec = ConvSpec.make(1, 1, 3)
        out = conv3d(Tensor(np.ones((1, 1, 3, 3, 3))), spec,
                     Tensor(np.ones(spec.weight_shape)))
        self.assertEqual(out.shape, (1, 1, 1, 1, 1))
        self.assertEqual(out.item(), 27.0)

    def test_identity_kernel(self):
        spec = ConvSpec.make(1, 1, 3, 1, 1)
        weight = np.zeros(spec.weight_shape)
        weight[0, 0, 1, 1, 1] = 1.0
        x = np.random.default_rng(0).standard_normal((1, 1, 4, 5, 3))
        out = conv3d(Tensor(x), spec, Tensor(weight))
        np.testing.assert_array_equal(out.data, x)

    def test_naive_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 2, 6, 6, 6))
        spec = ConvSpec.make(2, 3, 3, 2, 1)
        weight = rng.standard_normal(spec.weight_shape)
        bias = rng.standard_normal(3)
        out = conv3d(Tensor(x), spec, Tensor(weight), Tensor(bias))
        self.assertEqual(out.shape, (1, 3, 3, 3, 3))
        np.testing.assert_allclose(
            out.data, naive_conv(x, weight, bias, spec.stride, spec.padding),
            rtol=0, atol=1e-12)

    def test_groups(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 4, 4, 4, 4))
        spec = ConvSpec.make(4, 2, 3, 1, 1, groups=2)
        weight = rng.standard_normal(spec.weight_shape)
        out = conv3d(Tensor(x), spec, Tensor(weight))
        np.testing.assert_allclose(
            out.data, naive_conv(x, weight, None, spec.stride, spec.padding,
                                 groups=2), rtol=0, atol=1e-12)

    def test_transposed_block(self):
        spec = ConvSpec.make(1, 1, 2, 2, transposed=True)
        out = conv_transpose3d(Tensor(np.full((1, 1, 1, 1, 1), 2.5)), spec,
                               Tensor(np.ones(spec.weight_shape)))
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2, 2), 2.5))

    def test_transposed_naive_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 2, 3, 3, 3))
        spec = ConvSpec.make(2, 3, 5, 2, 2, transposed=True,
                             output_padding=(1, 1, 1))
        weight = rng.standard_normal(spec.weight_shape)
        out = conv_transpose3d(Tensor(x), spec, Tensor(weight))
        self.assertEqual(out.shape, (1, 3, 6, 6, 6))
        np.testing.assert_allclose(
            out.data, naive_conv_transpose(x, weight, spec.stride,
                                           spec.padding,
                                           spec.output_padding),
            rtol=0, atol=1e-12)

    def test_transposed_is_input_gradient(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.standard_normal((1, 2, 4, 4, 4)), requires_grad=True)
        spec = ConvSpec.make(2, 3, 3, 2, 1)
        weight = rng.standard_normal(spec.weight_shape)
        out = conv3d(x, spec, Tensor(weight))
        upstream = rng.standard_normal(out.shape)
        backward((out * Tensor(upstream)).sum())

        transposed = ConvSpec.make(3, 2, 3, 2, 1, transposed=True,
                                   output_padding=(1, 1, 1))
        gx = conv_transpose3d(Tensor(upstream), transposed, Tensor(weight))
        np.testing.assert_allclose(gx.data, x.grad, rtol=0, atol=1e-12)

    def test_gradients(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            conv = Conv3d(2, 2, 3, stride=2, padding=1, rng=rng)
            x = Tensor(rng.standard_normal((1, 2, 4, 4, 4)),
                       requires_grad=True)
            error = gradcheck(lambda: conv(x),
                              [x, conv.weight, conv.bias])
            self.assertLess(error, 1e-6)

    def test_transposed_gradients(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            conv = ConvTranspose3d(2, 2, 3, stride=2, padding=1,
                                   output_padding=1, rng=rng)
            x = Tensor(rng.standard_normal((1, 2, 2, 2, 2)),
                       requires_grad=True)
            error = gradcheck(lambda: conv(x),
                              [x, conv.weight, conv.bias])
            self.assertLess(error, 1e-6)

    def test_macs_recorded(self):
        rng = np.random.default_rng(5)
        conv = Conv3d(2, 4, 3, padding=1, rng=rng)
        with MacCounter() as counter:
            conv(Tensor(np.ones((1, 2, 8, 8, 8))))
        self.assertEqual(counter.total, 110592)

    def test_macs_by_hand(self):
        rng = np.random.default_rng(6)
        cases = (
            (Conv3d(4, 4, 3, padding=1, groups=2, rng=rng), (1, 4, 4, 4, 4),
             'conv', 13824),
            (Conv3d(2, 3, 2, stride=2, rng=rng), (2, 2, 4, 4, 4), 'conv',
             768),
            (ConvTranspose3d(4, 2, 2, stride=2, rng=rng), (1, 4, 2, 2, 2),
             'conv_transpose', 512),
            (ConvTranspose3d(4, 6, 2, stride=2, groups=2, rng=rng),
             (1, 4, 2, 2, 2), 'conv_transpose', 768),
        )
        for layer, shape, kind, macs in cases:
            with MacCounter() as counter:
                layer(Tensor(rng.standard_normal(shape)))
            self.assertEqual(counter.by_kind[kind], macs)
            self.assertEqual(counter.total, macs)

    def test_wrong_channels(self):
        conv = Conv3d(2, 4, 3, rng=np.random.default_rng(0))
        with self.assertRaises(ShapeError):
            conv(Tensor(np.ones((1, 3, 4, 4, 4))))


class NormTestCase(SimpleTestCase):
    def test_constant(self):
        spec = NormSpec('instance', 2)
        out = normalize(Tensor(np.full((1, 2, 2, 2, 2), 3.0)), spec)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_two_values(self):
        spec = NormSpec('instance', 1)
        out = normalize(Tensor(np.array([1.0, 3.0]).reshape(1, 1, 2, 1, 1)),
                        spec)
        np.testing.assert_allclose(out.data.reshape(-1), [-1.0, 1.0],
                                   atol=1e-5)

    def test_statistics(self):
        rng = np.random.default_rng(0)
        x = rng.normal(2.0, 10.0, (2, 8, 3, 3, 3))
        for spec in (NormSpec('group', 8, 4), NormSpec('instance', 8),
                     NormSpec('layer', 8)):
            out = normalize(Tensor(x), spec).data.reshape(
                2, spec.num_groups, -1)
            self.assertLess(np.abs(out.mean(axis=-1)).max(), 1e-10)
            self.assertLess(np.abs(out.var(axis=-1) - 1.0).max(), 1e-6)

    def test_group_equals_instance(self):
        x = Tensor(np.random.default_rng(1).standard_normal((1, 4, 2, 2, 2)))
        group = normalize(x, NormSpec('group', 4, 4))
        instance = normalize(x, NormSpec('instance', 4))
        np.testing.assert_array_equal(group.data, instance.data)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            NormSpec('group', 6, 4)
        with self.assertRaises(ValueError):
            NormSpec('instance', 4, epsilon=0)
        with self.assertRaises(ValueError):
            NormSpec('batch', 4)

    def test_gradients(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            x = Tensor(rng.standard_normal((2, 4, 2, 3, 2)),
                       requires_grad=True)
            for norm in (GroupNorm(2, 4), InstanceNorm(4)):
                norm.weight.data[:] = rng.uniform(0.5, 1.5, 4)
                norm.bias.data[:] = rng.standard_normal(4)
                error = gradcheck(lambda: norm(x),
                                  [x, norm.weight, norm.bias])
                self.assertLess(error, 1e-6)

    def test_layer_norm_tokens(self):
        rng = np.random.default_rng(2)
        norm = LayerNorm(6)
        x = Tensor(rng.standard_normal((2, 5, 6)), requires_grad=True)
        out = norm(x).data
        self.assertLess(np.abs(out.mean(axis=-1)).max(), 1e-10)
        self.assertLess(gradcheck(lambda: norm(x), [x, norm.weight]), 1e-6)


class UpsampleTestCase(SimpleTestCase):
    def test_align_corners(self):
        matrix = interpolation_matrix(2, 4)
        np.testing.assert_allclose(matrix @ np.array([1.0, 3.0]),
                                   [1.0, 5 / 3, 7 / 3, 3.0], atol=1e-15)

    def test_constant(self):
        out = upsample_trilinear(Tensor(np.full((1, 2, 2, 3, 1), 4.0)))
        self.assertEqual(out.shape, (1, 2, 4, 6, 2))
        np.testing.assert_allclose(out.data, 4.0, atol=1e-15)

    def test_corners(self):
        x = np.random.default_rng(0).standard_normal((1, 1, 2, 2, 2))
        out = upsample_trilinear(Tensor(x)).data
        for corner in np.ndindex(2, 2, 2):
            index = tuple(3 * c for c in corner)
            self.assertAlmostEqual(out[(0, 0) + index], x[(0, 0) + corner],
                                   places=14)

    def test_gradients(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            x = Tensor(rng.standard_normal((1, 2, 2, 3, 2)),
                       requires_grad=True)
            self.assertLess(gradcheck(lambda: upsample_trilinear(x), [x]),
                            1e-6)

    def test_invalid_scale(self):
        with self.assertRaises(ValueError):
            upsample_trilinear(Tensor(np.ones((1, 1, 2, 2, 2))), 0)


class BlocksTestCase(SimpleTestCase):
    def test_mlp_zero(self):
        mlp = MlpSkip(4, rng=np.random.default_rng(0), norm=False)
        for conv in (mlp.fc1, mlp.fc2):
            conv.bias.data[:] = 0.0
        out = mlp(Tensor(np.zeros((1, 4, 2, 2, 2))))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_mlp_shape(self):
        mlp = MlpSkip(96, rng=np.random.default_rng(0))
        x = Tensor(np.random.default_rng(1).standard_normal((1, 96, 8, 8, 8)))
        self.assertEqual(mlp(x).shape, x.shape)

    def test_mlp_identity(self):
        mlp = MlpSkip(3, activation='identity', norm=False,
                      rng=np.random.default_rng(0))
        for conv in (mlp.fc1, mlp.fc2):
            conv.weight.data[...] = np.eye(3).reshape(3, 3, 1, 1, 1)
            conv.bias.data[:] = 0.0
        x = np.random.default_rng(1).standard_normal((2, 3, 2, 4, 2))
        np.testing.assert_array_equal(mlp(Tensor(x)).data, x)

    def test_mlp_gradients(self):
        rng = np.random.default_rng(2)
        mlp = MlpSkip(3, hidden_ratio=2, rng=rng)
        x = Tensor(rng.standard_normal((1, 3, 2, 2, 2)), requires_grad=True)
        self.assertLess(gradcheck(lambda: mlp(x), [x] + mlp.parameters()),
                        1e-6)

    def test_residual_identity(self):
        for order in ('pre', 'post'):
            block = ResidualBlock(4, num_groups=2, order=order,
                                  rng=np.random.default_rng(0))
            for conv in (block.conv1, block.conv2):
                conv.weight.data[...] = 0.0
                conv.bias.data[:] = 0.0
            x = np.random.default_rng(1).standard_normal((1, 4, 3, 3, 3))
            np.testing.assert_array_equal(block(Tensor(x)).data, x)

    def test_residual_shape(self):
        block = ResidualBlock(96, rng=np.random.default_rng(0))
        x = Tensor(np.random.default_rng(1).standard_normal((1, 96, 4, 4, 4)))
        self.assertEqual(block(x).shape, x.shape)

    def test_residual_gradients(self):
        rng = np.random.default_rng(3)
        block = ResidualBlock(2, num_groups=1, rng=rng)
        x = Tensor(rng.standard_normal((1, 2, 3, 3, 3)), requires_grad=True)
        error = gradcheck(lambda: block(x), [x] + block.parameters(),
                          max_entries=20)
        self.assertLess(error, 1e-5)

    def test_linear(self):
        rng = np.random.default_rng(4)
        layer = Linear(3, 5, rng=rng)
        x = Tensor(rng.standard_normal((2, 4, 3)), requires_grad=True)
        self.assertEqual(layer(x).shape, (2, 4, 5))
        self.assertLess(gradcheck(lambda: layer(x), [x, layer.weight,
                                                     layer.bias]), 1e-6)


class ModuleTestCase(SimpleTestCase):
    def build(self):
        module = Module()
        module.head = Linear(2, 3, rng=np.random.default_rng(0))
        module.blocks = ModuleList([Linear(3, 3, bias=False,
                                           rng=np.random.default_rng(1))])
        return module

    def test_named_parameters(self):
        names = [name for name, _ in self.build().named_parameters()]
        self.assertEqual(names, ['head.weight', 'head.bias',
                                 'blocks.0.weight'])

    def test_num_parameters(self):
        self.assertEqual(self.build().num_parameters(), 2 * 3 + 3 + 9)

    def test_state_dict(self):
        source, target = self.build(), self.build()
        for param in source.parameters():
            param.data[...] = 1.5
        target.load_state_dict(source.state_dict())
        for param in target.parameters():
            np.testing.assert_array_equal(param.data, 1.5)

    def test_state_dict_mismatch(self):
        module = self.build()
        state = module.state_dict()
        state.pop('head.bias')
        with self.assertRaises(KeyError):
            module.load_state_dict(state)
        state = module.state_dict()
        state['head.bias'] = np.zeros(4)
        with self.assertRaises(ShapeError):
            module.load_state_dict(state)

    def test_zero_grad(self):
        module = self.build()
        x = Tensor(np.ones((1, 2)))
        backward(module.blocks[0](module.head(x)).sum())
        self.assertTrue(all(p.grad is not None for p in module.parameters()))
        module.zero_grad()
        self.assertTrue(all(p.grad is None for p in module.parameters()))
