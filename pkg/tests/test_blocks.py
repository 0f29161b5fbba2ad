import numpy as np
import pytest

from gyolo import analysis, arch, blocks
from gyolo.weights import ContainerSource, RandomSource, WeightContainer
from tests.conftest import seeded


def fill_conv_block(container, prefix, c1, c2, k, g=1, weight=None):
    shape = (c2, c1 // g, k, k)
    w = np.zeros(shape, np.float32) if weight is None else weight.astype(np.float32)
    container.add(f"{prefix}.conv.weight", w.reshape(shape))
    blocks.identity_bn(container, prefix, c2)


def identity_1x1(c1, c2):
    """1x1 kernel passing channel i of the input through to output i."""
    w = np.zeros((c2, c1, 1, 1), np.float32)
    for i in range(min(c1, c2)):
        w[i, i, 0, 0] = 1.0
    return w


class TestGhostConv:
    def test_channel_split_structure(self):
        src = RandomSource(0)
        blk = blocks.GhostConvBlock(src, "g", 3, 16, k=1)
        x = seeded(0).standard_normal((1, 3, 8, 8)).astype(np.float32)
        y = blk(x)
        assert y.shape == (1, 16, 8, 8)
        assert blk.primary.c2 == 8 and blk.cheap.c2 == 8

    def test_identity_mode_passthrough_and_zero_ghosts(self):
        c = WeightContainer()
        fill_conv_block(c, "g.primary", 8, 8, 1, weight=identity_1x1(8, 8))
        fill_conv_block(c, "g.cheap", 8, 8, 5, g=8)  # zero kernels
        src = ContainerSource(c)
        blk = blocks.GhostConvBlock(src, "g", 8, 16, k=1, act=False)
        x = seeded(1).standard_normal((1, 8, 6, 6)).astype(np.float32)
        y = blk(x)
        np.testing.assert_array_equal(y[:, :8], x)
        np.testing.assert_array_equal(y[:, 8:], np.zeros_like(x))

    def test_parameter_count_example(self):
        # (c1=16, c2=32, k=1): primary 16*16+2*16 = 288, cheap 16*25+2*16 = 432
        src = RandomSource(0)
        blocks.GhostConvBlock(src, "g", 16, 32, k=1)
        learnable = src.container.learnable_count()
        assert learnable == 288 + 432 == 720
        tally = analysis._Tally()
        analysis._ghost_conv(tally, 16, 32, 1, (1, 1))
        assert tally.params == 720


class TestGhostBottleneck:
    def test_zeroed_ghost_path_is_identity(self):
        c = WeightContainer()
        fill_conv_block(c, "b.expand.primary", 8, 2, 1)
        fill_conv_block(c, "b.expand.cheap", 2, 2, 5, g=2)
        fill_conv_block(c, "b.reduce.primary", 4, 4, 1)
        fill_conv_block(c, "b.reduce.cheap", 4, 4, 5, g=4)
        blk = blocks.GhostBottleneck(ContainerSource(c), "b", 8, 8)
        x = seeded(2).standard_normal((1, 8, 5, 5)).astype(np.float32)
        np.testing.assert_array_equal(blk(x), x)

    def test_output_channels(self):
        src = RandomSource(0)
        blk = blocks.GhostBottleneck(src, "b", 64, 64)
        x = seeded(3).standard_normal((1, 64, 4, 4)).astype(np.float32)
        assert blk(x).shape == (1, 64, 4, 4)

    def test_doubling_final_primary_weight_doubles_residual(self):
        # reduce stage has no activation, so its cheap half is linear in the
        # primary half: scaling the primary weight scales the whole ghost path
        src = RandomSource(0)
        blk = blocks.GhostBottleneck(src, "b", 16, 16)
        x = seeded(4).standard_normal((1, 16, 6, 6)).astype(np.float32)
        base = blk(x) - x
        blk.reduce.primary.weight = blk.reduce.primary.weight * 2
        doubled = blk(x) - x
        # the ghost path itself doubles exactly; the residual subtraction
        # against x reintroduces one rounding step per element
        np.testing.assert_allclose(doubled, 2 * base, rtol=1e-4, atol=1e-6)


class TestCompositeShapes:
    def test_sppf_shape_preserving(self):
        src = RandomSource(0)
        blk = blocks.SPPFBlock(src, "s", 256, 256)
        x = seeded(5).standard_normal((1, 256, 20, 20)).astype(np.float32)
        assert blk(x).shape == (1, 256, 20, 20)

    def test_c2psa_shape_preserving(self):
        src = RandomSource(0)
        blk = blocks.C2PSABlock(src, "p", 128, n=1)
        x = seeded(6).standard_normal((1, 128, 20, 20)).astype(np.float32)
        assert blk(x).shape == (1, 128, 20, 20)

    def test_sppf_pyramid_equals_parallel_pools(self):
        from gyolo import ops

        src = RandomSource(0)
        blk = blocks.SPPFBlock(src, "s", 32, 32)
        x = seeded(7).standard_normal((1, 32, 12, 12)).astype(np.float32)
        y1 = blk.cv1(x)
        chained = [y1]
        for _ in range(3):
            chained.append(ops.maxpool2d(chained[-1], 5, stride=1, padding=2))
        parallel = [y1,
                    ops.maxpool2d(y1, 5, stride=1, padding=2),
                    ops.maxpool2d(y1, 9, stride=1, padding=4),
                    ops.maxpool2d(y1, 13, stride=1, padding=6)]
        for a, b in zip(chained, parallel):
            np.testing.assert_array_equal(a, b)

    def test_c3ghost_and_c3k2_output_channels(self):
        src = RandomSource(0)
        g = blocks.C3GhostBlock(src, "cg", 64, 32, n=1)
        k = blocks.C3k2Block(RandomSource(0), "ck", 64, 32, n=1, c3k=True)
        x = seeded(8).standard_normal((1, 64, 8, 8)).astype(np.float32)
        assert g(x).shape == (1, 32, 8, 8)
        assert k(x).shape == (1, 32, 8, 8)


class TestAttention:
    def test_rows_stochastic(self):
        src = RandomSource(3)
        blk = blocks.AttentionBlock(src, "a", 64)
        x = seeded(9).standard_normal((1, 64, 6, 6)).astype(np.float32)
        attn = blk.attn_weights(x)
        np.testing.assert_allclose(attn.sum(axis=-1), 1.0, atol=1e-5)

    def test_head_arithmetic(self):
        src = RandomSource(0)
        blk = blocks.AttentionBlock(src, "a", 128)
        assert blk.heads == 2 and blk.head_dim == 64 and blk.key_dim == 32
        tiny = blocks.AttentionBlock(RandomSource(0), "t", 32)
        assert tiny.heads == 1  # floor would give 0; clamped to 1


class TestDetectHead:
    def test_output_channels_and_anchor_count(self):
        src = RandomSource(0)
        head = blocks.DetectHead(src, "d", 9, (64, 128, 256), cls_style="dw")
        feats = [np.zeros((1, c, s, s), dtype=np.float32)
                 for c, s in ((64, 80), (128, 40), (256, 20))]
        outs = head(feats)
        assert [o.shape[1] for o in outs] == [73, 73, 73]  # 4*16+9
        assert sum(o.shape[2] * o.shape[3] for o in outs) == 80**2 + 40**2 + 20**2 == 8400

    def test_channel_mismatch_raises(self):
        from gyolo.errors import ShapeError

        src = RandomSource(0)
        head = blocks.DetectHead(src, "d", 9, (64, 128, 256), cls_style="conv")
        feats = [np.zeros((1, 32, 8, 8), dtype=np.float32)] * 3
        with pytest.raises(ShapeError):
            head(feats)


class TestFamilyWideProperties:
    def test_ghost_conv_cheaper_than_plain_conv_everywhere(self):
        # every (c1, c2, k) ghost-conv slot beats a 3x3 dense conv of same widths
        for scale in "nsmlx":
            graph = arch.make_graph("g-yolov11", scale, 9)
            chans = arch.node_channels(graph)
            for node in graph.nodes:
                if node.kind != "GhostConv":
                    continue
                c1 = chans[node.inputs[0]] if node.inputs[0] >= 0 else 3
                c2 = node.args["c2"]
                tally = analysis._Tally()
                analysis._ghost_conv(tally, c1, c2, node.args["k"], (1, 1))
                dense = c2 * c1 * 9 + 2 * c2
                assert tally.params < dense, (scale, node.index)

    def test_declared_channels_match_forward_all_variants(self):
        # shape propagation at a small input: every block's realized output
        # channel count equals the graph's declared width
        for family in arch.FAMILIES:
            for scale in "nsmlx":
                graph = arch.make_graph(family, scale, 9)
                declared = arch.node_channels(graph)
                model = arch.build(graph, seed=0)
                x = np.zeros((1, 3, 64, 64), dtype=np.float32)
                cache = {}
                from gyolo import ops

                for node in graph.nodes:
                    srcs = [cache[i] if i >= 0 else x for i in node.inputs]
                    if node.kind == "Concat":
                        y = ops.concat_channels(srcs)
                    elif node.kind == "Upsample":
                        y = ops.upsample_nearest2x(srcs[0])
                    elif node.kind == "Detect":
                        continue
                    else:
                        y = model._blocks[node.index](srcs[0])
                    assert y.shape[1] == declared[node.index], (family, scale, node.index)
                    cache[node.index] = y

    def test_blocks_do_not_mutate_input(self):
        src = RandomSource(1)
        blk = blocks.C3GhostBlock(src, "c", 16, 16, n=1)
        x = seeded(10).standard_normal((1, 16, 8, 8)).astype(np.float32)
        snapshot = x.copy()
        blk(x)
        np.testing.assert_array_equal(x, snapshot)
