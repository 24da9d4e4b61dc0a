"""IDE-style re-identification model, combined real+unified-style training
loss, and descriptor extraction.

The classifier is trained with plain cross-entropy (no label smoothing) on
batches containing N real and N unified-style samples; retrieval uses the
backbone's penultimate features.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .data import AugmentConfig, DatasetIndex, augment
from .errors import ConfigError
from .gan.training import TransferModel, generate_unity_batch, images_to_tensor

logger = logging.getLogger(__name__)

REID_FORMAT_VERSION = 1
PROB_EPS = 1e-12


class SmallBackbone(nn.Module):
    """Reduced-width 4-block conv backbone (256-d descriptors) for desk-scale runs."""

    feature_dim = 256

    def __init__(self):
        super().__init__()
        widths = [32, 64, 128, 256]
        layers: list[nn.Module] = []
        c_in = 3
        for w in widths:
            layers += [
                nn.Conv2d(c_in, w, kernel_size=3, padding=1),
                nn.BatchNorm2d(w),
                nn.ReLU(inplace=True),
                nn.MaxPool2d(2),
            ]
            c_in = w
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(self.features(x)).flatten(1)


class ResNet50Backbone(nn.Module):
    """Full 2048-d variant; ImageNet weights when available, random otherwise."""

    feature_dim = 2048

    def __init__(self):
        super().__init__()
        from torchvision.models import resnet50

        try:
            net = resnet50(weights="IMAGENET1K_V1")
        except Exception as exc:  # offline: fall back to random init
            logger.warning("pretrained weights unavailable (%s); using random init", exc)
            net = resnet50(weights=None)
        self.features = nn.Sequential(*list(net.children())[:-1])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x).flatten(1)


_BACKBONES = {"small": SmallBackbone, "resnet50": ResNet50Backbone}


class ReidModel(nn.Module):
    """Feature backbone plus a two-FC classifier head."""

    def __init__(self, num_classes: int, backbone_name: str = "small"):
        super().__init__()
        if num_classes < 2:
            raise ConfigError(f"need at least 2 identity classes, got {num_classes}")
        if backbone_name not in _BACKBONES:
            raise ConfigError(f"unknown backbone {backbone_name!r}; choose from {sorted(_BACKBONES)}")
        self.backbone = _BACKBONES[backbone_name]()
        self.backbone_name = backbone_name
        self.num_classes = num_classes
        self.feature_dim = self.backbone.feature_dim
        self.head = nn.Sequential(
            nn.Linear(self.feature_dim, 512),
            nn.BatchNorm1d(512),
            nn.ReLU(inplace=True),
            nn.Linear(512, num_classes),
        )
        self.input_size: tuple[int, int] = (256, 128)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(x))

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x)

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        torch.save(
            {
                "format_version": REID_FORMAT_VERSION,
                "kind": "reid",
                "num_classes": self.num_classes,
                "backbone_name": self.backbone_name,
                "input_size": list(self.input_size),
                "meta": meta or {},
                "state": self.state_dict(),
            },
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ReidModel":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        if payload.get("format_version") != REID_FORMAT_VERSION:
            raise ConfigError(f"reid checkpoint {path} has unsupported format version")
        model = cls(payload["num_classes"], payload["backbone_name"])
        model.load_state_dict(payload["state"])
        model.input_size = tuple(payload["input_size"])
        model.eval()
        return model


def build_reid_model(num_classes: int, backbone_name: str = "small") -> ReidModel:
    return ReidModel(num_classes, backbone_name)


def cross_entropy(p: torch.Tensor | np.ndarray, y: int) -> float:
    """-log p(y) for one probability vector; p(y) clamped at 1e-12."""
    py = float(p[y])
    if py < PROB_EPS:
        logger.debug("clamping zero probability for label %d", y)
        py = PROB_EPS
    return -float(np.log(py))


def combined_cross_entropy(p_real: torch.Tensor, p_unity: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """(1/N) sum_i [-log p_R(y_i) - log p_U(y_i)] over paired probability rows."""
    if p_real.shape[0] == 0:
        raise ValueError("combined_cross_entropy needs a non-empty batch")
    idx = torch.arange(p_real.shape[0])
    pr = torch.clamp(p_real[idx, labels], min=PROB_EPS)
    pu = torch.clamp(p_unity[idx, labels], min=PROB_EPS)
    return (-(torch.log(pr) + torch.log(pu))).mean()


@dataclass
class TrainBatch:
    real_images: torch.Tensor  # (N,3,H,W)
    unity_images: torch.Tensor  # (N,3,H,W), labels inherited from the sources
    labels: torch.Tensor  # (N,)

    def validate(self) -> None:
        if self.real_images.shape[0] != self.unity_images.shape[0]:
            raise ValueError("real and unified-style sample counts must match")
        if self.real_images.shape[0] == 0:
            raise ValueError("empty training batch")


def reid_loss(batch: TrainBatch, model: ReidModel) -> torch.Tensor:
    """Mean cross-entropy over the paired real + unified-style batch."""
    batch.validate()
    p_real = torch.softmax(model(batch.real_images), dim=1)
    p_unity = torch.softmax(model(batch.unity_images), dim=1)
    return combined_cross_entropy(p_real, p_unity, batch.labels)


@dataclass
class ReidConfig:
    epochs: int = 50
    batch_n: int = 128  # per-step count of real samples; unity adds the same again
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_decay_at: float = 0.8  # fraction of epochs after which lr drops 10x
    seed: int = 0
    backbone_name: str = "small"
    input_size: tuple[int, int] = (256, 128)
    use_unity: bool = True
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    steps_per_epoch: int | None = None


def _prepare_training_arrays(
    dataset: DatasetIndex,
    transfers: dict[int, TransferModel] | None,
    config: ReidConfig,
):
    train = dataset.train_images()
    pids = sorted({im.person_id for im in train})
    label_of = {pid: i for i, pid in enumerate(pids)}
    reals = [im.load() for im in train]
    labels = np.array([label_of[im.person_id] for im in train], dtype=np.int64)
    unities = None
    if config.use_unity:
        if transfers is None:
            raise ConfigError("use_unity=True requires transfer models")
        missing = set(dataset.cameras()) - set(transfers)
        if missing:
            raise ConfigError(f"missing transfer models for cameras {sorted(missing)}")
        # one pass per camera: unified-style images are generated once, up front
        unities = [None] * len(train)
        for cam in dataset.cameras():
            idxs = [i for i, im in enumerate(train) if im.camera_id == cam]
            if not idxs:
                continue
            outs = generate_unity_batch([reals[i] for i in idxs], transfers[cam])
            for i, o in zip(idxs, outs):
                unities[i] = o
    return reals, unities, labels, pids


def train_reid(
    dataset: DatasetIndex,
    transfers: dict[int, TransferModel] | None,
    config: ReidConfig,
    log_path: str | Path | None = None,
) -> ReidModel:
    """SGD training on N real (+ N unified-style) samples per step.

    Returns the model in eval mode with its per-epoch loss history attached as
    `model.loss_history`.
    """
    reals, unities, labels, pids = _prepare_training_arrays(dataset, transfers, config)
    torch.manual_seed(config.seed)
    model = build_reid_model(len(pids), config.backbone_name)
    model.input_size = tuple(config.input_size)
    model.train()

    opt = torch.optim.SGD(model.parameters(), lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay)
    milestone = max(int(config.epochs * config.lr_decay_at), 1)
    sched = torch.optim.lr_scheduler.MultiStepLR(opt, milestones=[milestone], gamma=0.1)
    rng = np.random.default_rng(config.seed)
    n = min(config.batch_n, len(reals))
    steps = config.steps_per_epoch or max(len(reals) // n, 1)
    ce = nn.CrossEntropyLoss()

    history: list[dict] = []
    log_file = open(log_path, "a") if log_path else None
    try:
        for epoch in range(config.epochs):
            epoch_loss = 0.0
            for _ in range(steps):
                ridx = rng.integers(0, len(reals), size=n)
                xs = [augment(reals[i], config.augment, rng) for i in ridx]
                ys = labels[ridx]
                if unities is not None:
                    uidx = rng.integers(0, len(reals), size=n)
                    xs += [augment(unities[i], config.augment, rng) for i in uidx]
                    ys = np.concatenate([ys, labels[uidx]])
                batch = images_to_tensor(xs, config.input_size)
                target = torch.from_numpy(ys)
                logits = model(batch)
                if unities is not None:
                    # (1/N) sum (L_R + L_U): per-half means added, not pooled
                    loss = ce(logits[:n], target[:n]) + ce(logits[n:], target[n:])
                else:
                    loss = ce(logits, target)
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_loss += float(loss.detach())
            sched.step()
            record = {"epoch": epoch, "loss": epoch_loss / steps, "lr": sched.get_last_lr()[0]}
            history.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()
    model.eval()
    model.loss_history = history
    model.train_pids = pids
    return model


def extract_features(model: ReidModel, images: list[np.ndarray], batch_size: int = 64) -> np.ndarray:
    """K x feature_dim descriptor matrix; deterministic in eval mode."""
    model.eval()
    if not images:
        return np.zeros((0, model.feature_dim), dtype=np.float32)
    for im in images:
        if im.shape[2] != 3:
            raise ValueError("expected HxWx3 images")
    rows = []
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            t = images_to_tensor(images[i:i + batch_size], model.input_size)
            rows.append(model.features(t).numpy())
    return np.concatenate(rows, axis=0).astype(np.float32)


def export_features(
    path_prefix: str | Path,
    features: np.ndarray,
    paths: list[str],
    person_ids: list[int],
    camera_ids: list[int],
) -> None:
    """Binary feature matrix (.npy) plus a JSON sidecar in row order."""
    prefix = Path(path_prefix)
    np.save(prefix.with_suffix(".npy"), features)
    sidecar = {
        "rows": [
            {"path": p, "person_id": pid, "camera_id": cam}
            for p, pid, cam in zip(paths, person_ids, camera_ids)
        ]
    }
    prefix.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
