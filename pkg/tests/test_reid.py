import math

import numpy as np
import pytest
import torch

from unitystyle.errors import ConfigError
from unitystyle.reid import (
    ReidModel,
    TrainBatch,
    build_reid_model,
    combined_cross_entropy,
    cross_entropy,
    extract_features,
    reid_loss,
)


class TestBuildModel:
    def test_small_variant_descriptor(self):
        model = build_reid_model(10, "small").eval()
        x = torch.rand(2, 3, 64, 32)
        assert model.features(x).shape == (2, 256)
        assert model(x).shape == (2, 10)

    def test_unknown_backbone(self):
        with pytest.raises(ConfigError):
            build_reid_model(10, "vgg")

    def test_single_class_rejected(self):
        with pytest.raises(ConfigError):
            build_reid_model(1, "small")

    def test_softmax_rows_sum_to_one(self):
        model = build_reid_model(7, "small").eval()
        p = torch.softmax(model(torch.rand(3, 3, 64, 32)), dim=1)
        assert torch.allclose(p.sum(dim=1), torch.ones(3), atol=1e-6)

    @pytest.mark.slow
    def test_full_variant_2048(self):
        model = build_reid_model(751, "resnet50").eval()
        x = torch.rand(1, 3, 256, 128)
        assert model.features(x).shape == (1, 2048)
        assert model(x).shape == (1, 751)


class TestCrossEntropy:
    def test_certain_prediction(self):
        assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0

    def test_half(self):
        assert abs(cross_entropy(np.array([0.5, 0.5]), 0) - math.log(2)) < 1e-9

    def test_uniform_ten(self):
        p = np.full(10, 0.1)
        for y in range(10):
            assert abs(cross_entropy(p, y) - math.log(10)) < 1e-9

    def test_zero_probability_clamped(self):
        v = cross_entropy(np.array([1.0, 0.0]), 1)
        assert np.isfinite(v)
        assert abs(v - (-math.log(1e-12))) < 1e-6

    def test_no_label_smoothing(self):
        # one-hot-correct prediction costs exactly zero; LSR would not
        assert cross_entropy(np.array([0.0, 0.0, 1.0]), 2) == 0.0


class TestReidLossIdentity:
    def test_perfect_predictions(self):
        p = torch.eye(4)
        labels = torch.arange(4)
        assert float(combined_cross_entropy(p, p, labels)) == 0.0

    def test_half_half_single(self):
        p = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
        labels = torch.tensor([0])
        assert abs(float(combined_cross_entropy(p, p, labels)) - 2 * math.log(2)) < 1e-9

    def test_sum_form_equals_product_form(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n, L = 8, 5
            pr = rng.dirichlet(np.ones(L), size=n)
            pu = rng.dirichlet(np.ones(L), size=n)
            y = rng.integers(0, L, size=n)
            eq5 = np.mean([-np.log(pr[i, y[i]]) - np.log(pu[i, y[i]]) for i in range(n)])
            eq8 = -np.mean(np.log(pr[np.arange(n), y] * pu[np.arange(n), y]))
            ours = float(
                combined_cross_entropy(torch.from_numpy(pr), torch.from_numpy(pu), torch.from_numpy(y))
            )
            assert abs(eq5 - eq8) < 1e-9
            assert abs(ours - eq5) < 1e-9

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            combined_cross_entropy(torch.zeros(0, 3), torch.zeros(0, 3), torch.zeros(0, dtype=torch.long))

    def test_reid_loss_uses_inherited_labels(self):
        torch.manual_seed(0)
        model = build_reid_model(3, "small").eval()
        real = torch.rand(2, 3, 32, 32)
        batch = TrainBatch(real_images=real, unity_images=real.clone(), labels=torch.tensor([0, 2]))
        loss = reid_loss(batch, model)
        with torch.no_grad():
            p = torch.softmax(model(real), dim=1)
            expected = float(combined_cross_entropy(p, p, batch.labels))
        assert abs(float(loss.detach()) - expected) < 1e-6

    def test_mismatched_counts_rejected(self):
        model = build_reid_model(3, "small")
        with pytest.raises(ValueError):
            reid_loss(
                TrainBatch(torch.rand(2, 3, 32, 32), torch.rand(3, 3, 32, 32), torch.tensor([0, 1])),
                model,
            )


class TestExtractFeatures:
    def test_shape_and_determinism(self):
        model = build_reid_model(5, "small")
        model.input_size = (32, 16)
        rng = np.random.default_rng(0)
        imgs = [rng.random((32, 16, 3)).astype(np.float32) for _ in range(3)]
        f1 = extract_features(model, imgs)
        f2 = extract_features(model, imgs + imgs[:1])
        assert f1.shape == (3, 256)
        assert np.array_equal(f1[0], f2[3])

    def test_empty_input(self):
        model = build_reid_model(5, "small")
        out = extract_features(model, [])
        assert out.shape == (0, 256)

    def test_bad_channel_count(self):
        model = build_reid_model(5, "small")
        with pytest.raises(ValueError):
            extract_features(model, [np.zeros((16, 16, 4), dtype=np.float32)])


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        torch.manual_seed(1)
        model = build_reid_model(4, "small")
        model.input_size = (32, 16)
        path = tmp_path / "reid.ckpt"
        model.save(path)
        loaded = ReidModel.load(path)
        rng = np.random.default_rng(1)
        imgs = [rng.random((32, 16, 3)).astype(np.float32) for _ in range(2)]
        assert np.array_equal(extract_features(model.eval(), imgs), extract_features(loaded, imgs))

    def test_version_mismatch_fails(self, tmp_path):
        model = build_reid_model(4, "small")
        path = tmp_path / "reid.ckpt"
        model.save(path)
        payload = torch.load(path, weights_only=False)
        payload["format_version"] = 99
        torch.save(payload, path)
        with pytest.raises(ConfigError):
            ReidModel.load(path)
