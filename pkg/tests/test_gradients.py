"""Finite-difference checks of every differentiable training loss.

All checks run in float64 on tiny inputs. Networks are put in eval mode and
running-magnitude normalizer states are frozen so the loss is a pure function
of its input.
"""

import pytest
import torch

from conftest import assert_grad_close
from unitystyle.gan.losses import (
    LossWeights,
    cyclic_loss,
    feature_matching_loss,
    gan_loss,
    identity_loss,
    unitystyle_loss,
)
from unitystyle.gan.msssim import ms_ssim
from unitystyle.gan.networks import PatchDiscriminator
from unitystyle.gan.training import TransferConfig, new_transfer_model
from unitystyle.reid import build_reid_model, combined_cross_entropy


def _double_model(seed=0):
    torch.manual_seed(seed)
    cfg = TransferConfig(
        resolution=(8, 8), base_channels=4, num_scales=2, disc_channels=4, disc_layers=2
    )
    model = new_transfer_model(1, cfg, [1, 2]).eval_mode()
    for net in (model.G, model.F, model.D_X, model.D_Y):
        net.double()
        with torch.no_grad():
            # nudge every weight so zero-initialized heads do not hide terms
            for p in net.parameters():
                p.add_(0.05 * torch.randn(p.shape, dtype=torch.float64))
    for state in model.sln.values():
        state.magnitude = 1.0
        state.frozen = True
    return model


def _x(seed, n=1, size=8):
    g = torch.Generator().manual_seed(seed)
    # keep pixel values away from 0/1 so sigmoid saturation stays mild
    return (0.1 + 0.8 * torch.rand(n, 3, size, size, generator=g)).double()


@pytest.fixture(scope="module")
def model():
    return _double_model()


class TestLossGradients:
    def test_identity_loss(self, model):
        y = _x(1)
        assert_grad_close(lambda x: identity_loss(model.G, model.F, x, y), _x(2))

    def test_gan_generator_loss(self, model):
        real = _x(3)
        assert_grad_close(lambda f: gan_loss(model.D_Y, real, f)[1], _x(4))

    def test_gan_discriminator_loss_wrt_fake(self, model):
        real = _x(5)
        assert_grad_close(lambda f: gan_loss(model.D_Y, real, f)[0], _x(6))

    def test_feature_matching_loss(self, model):
        real = _x(7)
        assert_grad_close(lambda f: feature_matching_loss(model.D_Y, real, f), _x(8))

    def test_cyclic_l1_term(self, model):
        y = _x(9)
        assert_grad_close(lambda x: cyclic_loss(model.G, model.F, x, y, 0.0, 1.0), _x(10))

    def test_cyclic_structural_term(self, model):
        y = _x(11)
        assert_grad_close(
            lambda x: cyclic_loss(model.G, model.F, x, y, 1.0, 0.0), _x(12), step=1e-5
        )

    def test_ms_ssim_direct(self):
        y = _x(13)
        assert_grad_close(lambda x: ms_ssim(x, y), _x(14), step=1e-5)

    def test_unitystyle_total(self, model):
        # the feature-matching term detaches real-image features by design,
        # which finite differences cannot see; it is checked on its own above,
        # so the whole-objective check runs with its weight moved elsewhere
        w = LossWeights(lambda_gan=0.35, lambda_fm=0.0, lambda_id=0.15, lambda_cyc=0.5)
        refs = {1: _x(15), 2: _x(16)}
        assert_grad_close(lambda x: unitystyle_loss(x, refs, model, weights=w), _x(17))

    def test_unitystyle_attention_carries_gradient(self, model):
        # gradient must also flow through the reference images via A(y_c)
        w = LossWeights(lambda_gan=0.35, lambda_fm=0.0, lambda_id=0.15, lambda_cyc=0.5)
        x = _x(18)
        other = _x(19)
        assert_grad_close(
            lambda y: unitystyle_loss(x, {1: y, 2: other}, model, weights=w),
            _x(20),
            step=1e-5,
        )


class TestDiscriminatorGradients:
    def test_patch_discriminator_output_sum(self):
        torch.manual_seed(1)
        d = PatchDiscriminator(4, num_layers=2).double().eval()
        assert_grad_close(lambda x: d(x).sum(), _x(21))


class TestClassifierGradients:
    def test_combined_cross_entropy_wrt_probabilities(self):
        g = torch.Generator().manual_seed(22)
        p = torch.rand(3, 5, generator=g).double() * 0.8 + 0.1
        labels = torch.tensor([0, 2, 4])
        other = torch.rand(3, 5, generator=g).double() * 0.8 + 0.1

        assert_grad_close(lambda q: combined_cross_entropy(q, other, labels), p)

    def test_cross_entropy_wrt_logits_tight(self):
        # 8-class toy head: softmax + log are smooth, so the finite-difference
        # agreement should be much tighter than for full networks
        g = torch.Generator().manual_seed(25)
        logits = torch.randn(2, 8, generator=g).double()
        labels = torch.tensor([3, 7])

        def f(z):
            p = torch.softmax(z, dim=1)
            return combined_cross_entropy(p, p, labels)

        from conftest import analytic_grad, finite_difference_grad

        a = analytic_grad(f, logits.clone())
        n = finite_difference_grad(f, logits.clone())
        rel = (a - n).abs() / torch.maximum(a.abs(), torch.tensor(1e-6, dtype=torch.float64))
        assert float(rel.max()) <= 1e-4

    def test_classifier_loss_wrt_input_image(self):
        torch.manual_seed(23)
        model = build_reid_model(4, "small").double().eval()
        labels = torch.tensor([1])

        def f(x):
            p = torch.softmax(model(x), dim=1)
            return combined_cross_entropy(p, p, labels)

        assert_grad_close(f, _x(24, size=16))
