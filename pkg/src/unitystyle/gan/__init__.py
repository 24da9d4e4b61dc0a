from .blocks import IBNNorm, IBNResBlock, StyleAttentionHead, StyleAttentionOutput
from .networks import GeneratorSpec, UnityGenerator, PatchDiscriminator, build_generator
from .losses import (
    LossWeights,
    SLNState,
    identity_loss,
    gan_loss,
    feature_matching_loss,
    cyclic_loss,
    sln,
    unitygan_loss,
    unitystyle_loss,
)
from .msssim import ms_ssim, structural_dissimilarity
from .training import TransferConfig, TransferModel, train_transfer, generate_unity

__all__ = [
    "IBNNorm",
    "IBNResBlock",
    "StyleAttentionHead",
    "StyleAttentionOutput",
    "GeneratorSpec",
    "UnityGenerator",
    "PatchDiscriminator",
    "build_generator",
    "LossWeights",
    "SLNState",
    "identity_loss",
    "gan_loss",
    "feature_matching_loss",
    "cyclic_loss",
    "sln",
    "unitygan_loss",
    "unitystyle_loss",
    "ms_ssim",
    "structural_dissimilarity",
    "TransferConfig",
    "TransferModel",
    "train_transfer",
    "generate_unity",
]
