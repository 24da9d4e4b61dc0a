"""Camera-grouped style-transfer training and unified-style inference.

For camera k, domain X is that camera's training images and domain Y is the
training images of all cameras pooled together, so a trained generator maps
camera k's style into the shared multi-camera style. One model is trained per
camera.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as nnF

from ..data import DatasetIndex, PersonImage
from ..errors import ConfigError
from .losses import LossWeights, SLNState, gan_loss, sln, unitygan_loss, unitystyle_loss
from .networks import GeneratorSpec, PatchDiscriminator, UnityGenerator

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TransferConfig:
    epochs: int = 50
    steps_per_epoch: int | None = None
    resolution: tuple[int, int] = (256, 256)
    base_channels: int = 64
    num_scales: int = 3
    ibn_res_blocks_per_scale: int = 1
    disc_channels: int = 64
    disc_layers: int = 4
    batch_size: int = 1
    lr: float = 2e-4
    beta1: float = 0.5
    seed: int = 0
    attention_enabled: bool = True
    use_style_attention_loss: bool = True
    sln_decay: float = 0.99
    loss_weights: LossWeights = field(default_factory=LossWeights)


@dataclass
class TransferModel:
    """One trained camera-to-unified-style translation pair."""

    camera_id: int
    G: UnityGenerator
    F: UnityGenerator
    D_X: PatchDiscriminator
    D_Y: PatchDiscriminator
    loss_weights: LossWeights
    sln: dict[str, SLNState]
    training_meta: dict

    def eval_mode(self) -> "TransferModel":
        for net in (self.G, self.F, self.D_X, self.D_Y):
            net.eval()
        return self

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "transfer",
            "camera_id": self.camera_id,
            "generator_spec": asdict(self.G.spec),
            "disc_channels": self.training_meta.get("disc_channels", 64),
            "disc_layers": self.training_meta.get("disc_layers", 4),
            "loss_weights": asdict(self.loss_weights),
            "sln": {k: asdict(v) for k, v in self.sln.items()},
            "training_meta": self.training_meta,
            "state": {
                "G": self.G.state_dict(),
                "F": self.F.state_dict(),
                "D_X": self.D_X.state_dict(),
                "D_Y": self.D_Y.state_dict(),
            },
        }
        torch.save(payload, path)

    @classmethod
    def load(cls, path: str | Path) -> "TransferModel":
        payload = torch.load(path, map_location="cpu", weights_only=False)
        version = payload.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ConfigError(
                f"checkpoint {path} has format version {version}, expected {CHECKPOINT_FORMAT_VERSION}"
            )
        spec = GeneratorSpec(**{**payload["generator_spec"], "input_resolution": tuple(payload["generator_spec"]["input_resolution"])})
        model = cls(
            camera_id=payload["camera_id"],
            G=UnityGenerator(spec),
            F=UnityGenerator(spec),
            D_X=PatchDiscriminator(payload["disc_channels"], num_layers=payload["disc_layers"]),
            D_Y=PatchDiscriminator(payload["disc_channels"], num_layers=payload["disc_layers"]),
            loss_weights=LossWeights(**payload["loss_weights"]),
            sln={k: SLNState(**v) for k, v in payload["sln"].items()},
            training_meta=payload["training_meta"],
        )
        model.G.load_state_dict(payload["state"]["G"])
        model.F.load_state_dict(payload["state"]["F"])
        model.D_X.load_state_dict(payload["state"]["D_X"])
        model.D_Y.load_state_dict(payload["state"]["D_Y"])
        return model.eval_mode()


def new_transfer_model(camera_id: int, config: TransferConfig, cameras: list[int]) -> TransferModel:
    spec = GeneratorSpec(
        input_resolution=config.resolution,
        base_channels=config.base_channels,
        num_scales=config.num_scales,
        ibn_res_blocks_per_scale=config.ibn_res_blocks_per_scale,
        attention_enabled=config.attention_enabled,
    )
    sln_states = {k: SLNState(decay=config.sln_decay) for k in ("gan", "fm", "id", "cyc")}
    meta = {
        "cameras": cameras,
        "epochs": config.epochs,
        "seed": config.seed,
        "resolution": list(config.resolution),
        "disc_channels": config.disc_channels,
        "disc_layers": config.disc_layers,
        "use_style_attention_loss": config.use_style_attention_loss,
        "fusion": "skip-connection encoder-decoder with sigmoid output head",
    }
    return TransferModel(
        camera_id=camera_id,
        G=UnityGenerator(spec),
        F=UnityGenerator(spec),
        D_X=PatchDiscriminator(config.disc_channels, num_layers=config.disc_layers),
        D_Y=PatchDiscriminator(config.disc_channels, num_layers=config.disc_layers),
        loss_weights=config.loss_weights,
        sln=sln_states,
        training_meta=meta,
    )


def images_to_tensor(images: list[np.ndarray], resolution: tuple[int, int]) -> torch.Tensor:
    """Stack HxWx3 [0,1] arrays into an NCHW tensor at the given resolution."""
    t = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).float()
    if t.shape[-2:] != tuple(resolution):
        t = nnF.interpolate(t, size=tuple(resolution), mode="bilinear", align_corners=False)
    return t


class _ImagePool:
    """Pre-resized training tensors per camera, loaded once."""

    def __init__(self, dataset: DatasetIndex, resolution: tuple[int, int]):
        self.by_camera: dict[int, torch.Tensor] = {}
        for cam in dataset.cameras():
            imgs = dataset.train_images(cam)
            if imgs:
                self.by_camera[cam] = images_to_tensor([im.load() for im in imgs], resolution)
        self.all = torch.cat(list(self.by_camera.values()), dim=0)

    def sample(self, camera: int | None, n: int, gen: torch.Generator) -> torch.Tensor:
        pool = self.all if camera is None else self.by_camera[camera]
        idx = torch.randint(0, pool.shape[0], (n,), generator=gen)
        return pool[idx]


def train_transfer(
    dataset: DatasetIndex,
    camera_id: int,
    config: TransferConfig,
    log_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    resume: bool = False,
) -> TransferModel:
    """Train one camera's style-transfer model; returns it in eval mode.

    When checkpoint_path is given the model (plus a sidecar optimizer state)
    is written every epoch, and resume=True restarts from the last finished
    epoch.
    """
    if dataset.num_cameras < 2:
        raise ConfigError("style-transfer training needs at least 2 cameras")
    if camera_id not in dataset.cameras():
        raise ConfigError(f"unknown camera id {camera_id}; valid ids: {dataset.cameras()}")
    if not dataset.train_images(camera_id):
        raise ConfigError(f"camera {camera_id} has no training images")

    torch.manual_seed(config.seed * 10007 + camera_id)
    model = new_transfer_model(camera_id, config, dataset.cameras())
    pool = _ImagePool(dataset, config.resolution)
    steps = config.steps_per_epoch or max(len(dataset.train_images(camera_id)) // config.batch_size, 1)

    g_params = list(model.G.parameters()) + list(model.F.parameters())
    d_params = list(model.D_X.parameters()) + list(model.D_Y.parameters())
    opt_g = torch.optim.Adam(g_params, lr=config.lr, betas=(config.beta1, 0.999))
    opt_d = torch.optim.Adam(d_params, lr=config.lr, betas=(config.beta1, 0.999))

    def lr_factor(epoch: int) -> float:
        half = config.epochs / 2.0
        return 1.0 if epoch < half else max((config.epochs - epoch) / max(config.epochs - half, 1.0), 0.0)

    sched_g = torch.optim.lr_scheduler.LambdaLR(opt_g, lr_factor)
    sched_d = torch.optim.lr_scheduler.LambdaLR(opt_d, lr_factor)
    sampler = torch.Generator().manual_seed(config.seed * 31337 + camera_id)

    start_epoch = 0
    state_path = Path(str(checkpoint_path) + ".trainstate") if checkpoint_path else None
    if resume and state_path is not None and state_path.exists():
        state = torch.load(state_path, map_location="cpu", weights_only=False)
        model = TransferModel.load(checkpoint_path)
        opt_g = torch.optim.Adam(list(model.G.parameters()) + list(model.F.parameters()), lr=config.lr, betas=(config.beta1, 0.999))
        opt_d = torch.optim.Adam(list(model.D_X.parameters()) + list(model.D_Y.parameters()), lr=config.lr, betas=(config.beta1, 0.999))
        opt_g.load_state_dict(state["opt_g"])
        opt_d.load_state_dict(state["opt_d"])
        sched_g = torch.optim.lr_scheduler.LambdaLR(opt_g, lr_factor)
        sched_d = torch.optim.lr_scheduler.LambdaLR(opt_d, lr_factor)
        with warnings.catch_warnings():
            # replaying scheduler steps to restore the lr is intentional
            warnings.simplefilter("ignore", UserWarning)
            for _ in range(state["epoch"]):
                sched_g.step()
                sched_d.step()
        sampler.set_state(state["sampler"])
        torch.set_rng_state(state["torch_rng"])
        start_epoch = state["epoch"]

    model.G.train(), model.F.train(), model.D_X.train(), model.D_Y.train()
    log_file = open(log_path, "a") if log_path else None
    use_attention = config.attention_enabled and config.use_style_attention_loss
    try:
        for epoch in range(start_epoch, config.epochs):
            epoch_terms: dict[str, float] = {"L_GAN": 0.0, "L_FM": 0.0, "L_ID": 0.0, "L_CYC": 0.0, "total": 0.0}
            for _ in range(steps):
                x = pool.sample(camera_id, config.batch_size, sampler)
                if use_attention:
                    refs = {cam: pool.sample(cam, config.batch_size, sampler) for cam in dataset.cameras()}
                else:
                    refs = {0: pool.sample(None, config.batch_size, sampler)}

                # discriminator step on detached fakes
                with torch.no_grad():
                    fake_y = model.G(x)
                    fake_xs = {cam: model.F(y) for cam, y in refs.items()}
                d_loss = None
                for cam, y in refs.items():
                    d_x, _ = gan_loss(model.D_X, x, fake_xs[cam])
                    d_y, _ = gan_loss(model.D_Y, y, fake_y)
                    term = d_x + d_y
                    d_loss = term if d_loss is None else d_loss + term
                d_loss = d_loss / len(refs)
                opt_d.zero_grad()
                d_loss.backward()
                opt_d.step()

                # generator step
                if use_attention:
                    g_loss, details = unitystyle_loss(x, refs, model, return_details=True)
                else:
                    g_loss, detail = unitygan_loss(model, x, refs[0])
                    details = [detail]
                opt_g.zero_grad()
                g_loss.backward()
                opt_g.step()

                for key in ("L_GAN", "L_FM", "L_ID", "L_CYC"):
                    epoch_terms[key] += sum(d[key] for d in details) / len(details)
                epoch_terms["total"] += float(g_loss.detach())
            sched_g.step()
            sched_d.step()
            record = {"epoch": epoch, **{k: v / steps for k, v in epoch_terms.items()}}
            if log_file:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            model.training_meta["loss_trace"] = model.training_meta.get("loss_trace", [])
            model.training_meta["loss_trace"].append(record)
            if checkpoint_path is not None:
                model.training_meta["completed_epochs"] = epoch + 1
                model.save(checkpoint_path)
                torch.save(
                    {
                        "epoch": epoch + 1,
                        "opt_g": opt_g.state_dict(),
                        "opt_d": opt_d.state_dict(),
                        "sampler": sampler.get_state(),
                        "torch_rng": torch.get_rng_state(),
                    },
                    state_path,
                )
    finally:
        if log_file:
            log_file.close()
    return model.eval_mode()


def _as_array_and_camera(image, camera_id: int | None):
    if isinstance(image, PersonImage):
        return image.load(), image.camera_id if camera_id is None else camera_id
    return np.asarray(image, dtype=np.float32), camera_id


def generate_unity(image, model: TransferModel, camera_id: int | None = None) -> np.ndarray:
    """Map one image to the unified style; output matches input resolution."""
    arr, cam = _as_array_and_camera(image, camera_id)
    if cam is not None and cam != model.camera_id:
        raise ValueError(f"image from camera {cam} given to the camera-{model.camera_id} model")
    return generate_unity_batch([arr], model)[0]


def generate_unity_batch(images: list[np.ndarray], model: TransferModel) -> list[np.ndarray]:
    """Batched unified-style generation; deterministic, outputs clamped to [0,1]."""
    if not images:
        return []
    model.G.eval()
    out: list[np.ndarray] = []
    shapes = [im.shape[:2] for im in images]
    res = tuple(model.training_meta["resolution"])
    with torch.no_grad():
        t = images_to_tensor(images, res)
        gen = torch.clamp(model.G(t), 0.0, 1.0)
    for i, (h, w) in enumerate(shapes):
        g = gen[i:i + 1]
        if g.shape[-2:] != (h, w):
            g = nnF.interpolate(g, size=(h, w), mode="bilinear", align_corners=False)
            g = torch.clamp(g, 0.0, 1.0)
        out.append(g[0].permute(1, 2, 0).numpy().astype(np.float32))
    return out
