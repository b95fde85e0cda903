"""Architecture tests: splitting, shape traces, parameter counts, heads."""

import numpy as np
import pytest

from subspectral.models import (
    SubSpectralConfig,
    build_baseline,
    build_from_description,
    build_subclassifier,
    build_subspectralnet,
    count_params,
    global_head_widths,
    load_model,
    multi_head_loss,
    split_subspectrograms,
)
from subspectral.nn import functional as F


def dimension_oracle_subclassifier(sub_size, frames, channels, time_pool):
    """Independent layer-by-layer shape arithmetic for the band CNN."""
    shapes = []
    f, t = sub_size, frames
    shapes.append(("conv1", (32, f, t)))
    f, t = f // (sub_size // 10), t // 5
    shapes.append(("pool1", (32, f, t)))
    shapes.append(("conv2", (64, f, t)))
    f, t = f // 4, t // time_pool
    shapes.append(("pool2", (64, f, t)))
    shapes.append(("flatten", (64 * f * t,)))
    shapes.append(("dense1", (32,)))
    shapes.append(("head", (10,)))
    return shapes


class TestSplitConfig:
    def test_paper_geometry_40_20_10(self):
        cfg = SubSpectralConfig(40, 20, 10)
        assert cfg.crop_count == 3
        assert cfg.crop_ranges() == [(0, 20), (10, 30), (20, 40)]

    @pytest.mark.parametrize(
        "mel_bins,sub,hop,expected",
        [(40, 20, 10, 3), (200, 30, 10, 18), (200, 20, 10, 19), (200, 200, 1, 1), (40, 40, 1, 1)],
    )
    def test_crop_count_formula(self, mel_bins, sub, hop, expected):
        assert SubSpectralConfig(mel_bins, sub, hop).crop_count == expected

    def test_single_crop_is_identity(self, rng):
        cfg = SubSpectralConfig(40, 40, 1)
        x = rng.standard_normal((2, 2, 40, 7))
        crops = split_subspectrograms(x, cfg)
        assert len(crops) == 1
        np.testing.assert_array_equal(crops[0], x)

    def test_crops_cover_expected_bins(self, rng):
        cfg = SubSpectralConfig(40, 20, 10)
        x = rng.standard_normal((1, 2, 40, 5))
        crops = split_subspectrograms(x, cfg)
        for (lo, hi), crop in zip(cfg.crop_ranges(), crops):
            np.testing.assert_array_equal(crop, x[:, :, lo:hi, :])

    def test_overlap_regions_bit_identical(self, rng):
        cfg = SubSpectralConfig(40, 20, 10)
        x = rng.standard_normal((1, 1, 40, 5)).astype(np.float32)
        crops = split_subspectrograms(x, cfg)
        # crops 0 and 1 share bins [10, 20); crops 1 and 2 share [20, 30)
        np.testing.assert_array_equal(crops[0][:, :, 10:20], crops[1][:, :, :10])
        np.testing.assert_array_equal(crops[1][:, :, 10:20], crops[2][:, :, :10])

    def test_reassembly_reproduces_input(self, rng):
        cfg = SubSpectralConfig(30, 10, 10)  # disjoint crops covering all bins
        x = rng.standard_normal((2, 1, 30, 4)).astype(np.float32)
        crops = split_subspectrograms(x, cfg)
        rebuilt = np.concatenate(crops, axis=2)
        np.testing.assert_array_equal(rebuilt, x)

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            SubSpectralConfig(40, 50, 10)  # crop taller than input
        with pytest.raises(ValueError, match="divisible by 10"):
            SubSpectralConfig(40, 15, 10)
        with pytest.raises(ValueError):
            SubSpectralConfig(40, 20, 0)

    def test_split_wrong_height_errors(self):
        cfg = SubSpectralConfig(40, 20, 10)
        with pytest.raises(ValueError, match="mel bins"):
            split_subspectrograms(np.zeros((1, 2, 30, 5)), cfg)


class TestGlobalHeadWidths:
    def test_single_crop_no_hidden_layers(self):
        assert global_head_widths(1) == []

    def test_eighteen_crops(self):
        assert global_head_widths(18) == [256, 128, 64]

    def test_printed_formula_for_three_crops(self):
        assert global_head_widths(3) == []

    def test_compat_mode_for_three_crops(self):
        assert global_head_widths(3, head_compat=True) == [64]

    def test_widths_halve_and_end_at_64(self):
        for m in (2, 3, 4, 8, 18, 19, 32):
            widths = global_head_widths(m)
            if widths:
                assert widths[-1] == 64
                assert all(a == 2 * b for a, b in zip(widths, widths[1:]))


class TestShapeTraces:
    @pytest.mark.parametrize(
        "mel_bins,sub,hop,frames",
        [(40, 20, 10, 500), (200, 30, 10, 500), (200, 20, 10, 500)],
    )
    def test_forward_shapes_match_dimension_oracle(self, mel_bins, sub, hop, frames):
        cfg = SubSpectralConfig(mel_bins, sub, hop)
        graph = build_subspectralnet(cfg, frames, 2, dropout=0.0, seed=0)
        x = np.random.default_rng(0).standard_normal((1, 2, mel_bins, frames)).astype(np.float32)
        crops = split_subspectrograms(x, cfg)
        assert len(crops) == cfg.crop_count
        oracle = dimension_oracle_subclassifier(sub, frames, 2, 100)
        expected = {name: shape for name, shape in oracle}
        for trunk, crop in zip(graph.trunks[:2], crops[:2]):  # same layers; checking two is enough
            h = crop
            for layer in trunk.layers:
                h = layer.forward(h, train=True)
                key = layer.name.split(".")[-1]
                if key in expected and key != "head":
                    assert h.shape[1:] == expected[key], f"{layer.name}: {h.shape[1:]} != {expected[key]}"

    def test_subclassifier_trace_40_20_10_stereo(self):
        # 2x20x500 -> 32x10x100 -> 64x2x1 -> 128 -> 32 -> 10
        trunk, head = build_subclassifier(20, 500, 2, dropout=0.0)
        x = np.zeros((1, 2, 20, 500), dtype=np.float32)
        shapes = [x.shape]
        h = x
        for layer in trunk.layers:
            h = layer.forward(h, train=True)
            shapes.append(h.shape)
        probs = head.forward(h, train=True)
        assert (1, 32, 20, 500) in shapes
        assert (1, 32, 10, 100) in shapes
        assert (1, 64, 10, 100) in shapes
        assert (1, 64, 2, 1) in shapes
        assert (1, 128) in shapes
        assert (1, 32) in shapes
        assert probs.shape == (1, 10)

    def test_sub_size_10_first_pool(self):
        trunk, _ = build_subclassifier(10, 500, 2, dropout=0.0)
        x = np.zeros((1, 2, 10, 500), dtype=np.float32)
        h = x
        for layer in trunk.layers:
            h = layer.forward(h, train=True)
            if layer.name.endswith("pool1"):
                assert h.shape == (1, 32, 10, 100)

    def test_baseline_200_mel_flatten_width(self):
        graph = build_baseline(200, 500, 2, dropout=0.0)
        x = np.zeros((1, 2, 200, 500), dtype=np.float32)
        h = x
        for layer in graph.stack.layers:
            h = layer.forward(h, train=True)
            if layer.name.endswith("flatten"):
                assert h.shape == (1, 640)  # 64 * (200/5/4) * (500/5/100)

    def test_out_shape_methods_agree_with_forward(self):
        trunk, head = build_subclassifier(20, 500, 2, dropout=0.0)
        x = np.zeros((3, 2, 20, 500), dtype=np.float32)
        h = x
        for layer in trunk.layers:
            predicted = layer.out_shape(h.shape)
            h = layer.forward(h, train=True)
            assert h.shape == predicted


class TestParameterCounts:
    def test_subclassifier_closed_form(self):
        trunk, head = build_subclassifier(20, 500, 2)
        total = sum(p.size for p in trunk.params()) + sum(p.size for p in head.params())
        # 3,168 + 64 + 100,416 + 128 + 4,128 + 330
        assert total == 108234

    def test_baseline_40_stereo(self):
        assert count_params(build_baseline(40, 500, 2)) == 117686
        assert abs(count_params(build_baseline(40, 500, 2)) - 117_000) / 117_000 < 0.02

    def test_baseline_doubled(self):
        assert count_params(build_baseline(40, 500, 2, width_multiplier=2)) == 434966

    def test_baseline_mono_conv1_delta(self):
        stereo = build_baseline(40, 500, 2)
        mono = build_baseline(40, 500, 1)
        assert count_params(stereo) - count_params(mono) == 32 * 7 * 7 * 1

    def test_subspectralnet_counts(self):
        cfg = SubSpectralConfig(40, 20, 10)
        assert count_params(build_subspectralnet(cfg, 500, 2, head_compat=True)) == 331560
        assert count_params(build_subspectralnet(cfg, 500, 2, head_compat=False)) == 325672
        assert count_params(build_subspectralnet(cfg, 500, 2, head_compat=True, include_sub_heads=False)) == 330570

    def test_no_sub_heads_delta_is_three_heads(self):
        cfg = SubSpectralConfig(40, 20, 10)
        with_heads = count_params(build_subspectralnet(cfg, 500, 2, head_compat=True))
        without = count_params(build_subspectralnet(cfg, 500, 2, head_compat=True, include_sub_heads=False))
        assert with_heads - without == 3 * (32 * 10 + 10)

    def test_count_monotone_in_crop_count(self):
        counts = []
        for hop in (20, 10, 5, 2):
            cfg = SubSpectralConfig(40, 20, hop)
            counts.append((cfg.crop_count, count_params(build_subspectralnet(cfg, 500, 2))))
        counts.sort()
        assert all(a[1] <= b[1] for a, b in zip(counts, counts[1:]))

    def test_empty_graph_is_zero(self):
        from subspectral.models import ModelGraph

        graph = ModelGraph("subspectralnet", {})
        assert count_params(graph) == 0

    def test_layer_table_total_matches(self):
        graph = build_baseline(40, 500, 2)
        assert sum(r["params"] for r in graph.layer_table()) == count_params(graph)


class TestMultiHeadLoss:
    def test_uniform_heads_sum(self):
        probs = {name: np.full((2, 10), 0.1) for name in ("global", "sub0", "sub1", "sub2")}
        loss, dprobs = multi_head_loss(probs, np.array([3, 7]))
        assert loss == pytest.approx(4 * np.log(10), rel=1e-9)
        assert set(dprobs) == set(probs)

    def test_disabled_sub_losses(self):
        probs = {name: np.full((2, 10), 0.1) for name in ("global", "sub0")}
        loss, dprobs = multi_head_loss(probs, np.array([0, 0]), heads=["global"])
        assert loss == pytest.approx(np.log(10), rel=1e-9)
        assert list(dprobs) == ["global"]

    def test_gradient_is_sum_of_head_gradients(self, rng):
        cfg = SubSpectralConfig(20, 10, 10)
        graph = build_subspectralnet(cfg, 20, 1, dropout=0.0, seed=5, dtype=np.float64)
        x = rng.standard_normal((2, 1, 20, 20))
        labels = np.array([1, 8])
        store = graph.param_store()

        probs = graph.forward(x, train=True)
        _, dprobs = multi_head_loss(probs, labels)
        store.zero_grad()
        graph.backward(dprobs)
        combined = {p.name: p.grad.copy() for p in graph.parameters()}

        total = {p.name: np.zeros_like(p.grad) for p in graph.parameters()}
        for head in graph.head_names():
            probs = graph.forward(x, train=True)
            _, dp = multi_head_loss(probs, labels, heads=[head])
            store.zero_grad()
            graph.backward(dp)
            for p in graph.parameters():
                total[p.name] += p.grad
        for name in combined:
            np.testing.assert_allclose(combined[name], total[name], rtol=1e-9, atol=1e-12)


class TestHeadGradientFlow:
    def test_disabled_sub_losses_leave_head_params_untouched(self, rng):
        cfg = SubSpectralConfig(40, 20, 10)
        graph = build_subspectralnet(cfg, 50, 2, dropout=0.0, seed=2, time_pool=10)
        x = rng.standard_normal((2, 2, 40, 50)).astype(np.float32)
        labels = np.array([0, 5])
        store = graph.param_store()
        probs = graph.forward(x, train=True)
        _, dprobs = multi_head_loss(probs, labels, heads=["global"])
        store.zero_grad()
        graph.backward(dprobs)
        for head in graph.sub_heads:
            for p in head.params():
                assert np.all(p.grad == 0), f"{p.name} should receive no gradient"
        for trunk in graph.trunks:
            assert any(np.any(p.grad != 0) for p in trunk.params()), "trunks must still learn from the global head"

    def test_head_count_and_stochastic_rows(self, rng):
        cfg = SubSpectralConfig(40, 20, 10)
        graph = build_subspectralnet(cfg, 50, 2, dropout=0.0, seed=0, time_pool=10)
        x = rng.standard_normal((4, 2, 40, 50)).astype(np.float32)
        probs = graph.forward(x, train=True)
        assert len(probs) == cfg.crop_count + 1
        for p in probs.values():
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


class TestCheckpointRoundTrip:
    def test_bit_exact_params_and_buffers(self, tmp_path, rng):
        cfg = SubSpectralConfig(40, 20, 10)
        graph = build_subspectralnet(cfg, 50, 2, seed=9, time_pool=10, class_names=[f"c{i}" for i in range(10)])
        graph.set_dropout_rng(np.random.default_rng(0))
        # push one training batch through so BN stats are nontrivial
        x = rng.standard_normal((4, 2, 40, 50)).astype(np.float32)
        graph.forward(x, train=True)
        path = tmp_path / "model.ssnw"
        graph.save(path, meta={"note": "test"})
        loaded, meta = load_model(path)
        assert meta["note"] == "test"
        for a, b in zip(graph.parameters(), loaded.parameters()):
            assert a.name == b.name
            np.testing.assert_array_equal(a.data, b.data)
        probs_a = graph.forward(x, train=False)
        probs_b = loaded.forward(x, train=False)
        for name in probs_a:
            np.testing.assert_array_equal(probs_a[name], probs_b[name])

    def test_eval_before_training_errors(self):
        graph = build_baseline(40, 50, 2, time_pool=10)
        x = np.zeros((1, 2, 40, 50), dtype=np.float32)
        with pytest.raises(RuntimeError, match="eval before any training batch"):
            graph.forward(x, train=False)

    def test_rebuild_from_description(self):
        cfg = SubSpectralConfig(40, 20, 10)
        graph = build_subspectralnet(cfg, 500, 2, head_compat=True)
        rebuilt = build_from_description(graph.describe())
        assert count_params(rebuilt) == count_params(graph)
        assert [p.name for p in rebuilt.parameters()] == [p.name for p in graph.parameters()]


class TestBuilderErrors:
    def test_time_pool_too_large_names_dimension(self):
        with pytest.raises(ValueError, match="time"):
            build_subclassifier(20, 40, 2, time_pool=100)

    def test_baseline_mel_bins_constraint(self):
        with pytest.raises(ValueError, match="divide"):
            build_baseline(42, 500, 2)

    def test_sub_size_divisibility_enforced(self):
        with pytest.raises(ValueError, match="divisible"):
            build_subclassifier(15, 500, 2)
