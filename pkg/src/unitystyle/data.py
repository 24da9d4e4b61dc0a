"""Dataset loading, synthetic corpus generation and image augmentation.

Images are HxWx3 float32 arrays in [0, 1] throughout. On-disk corpora follow
the Market-1501 / DukeMTMC-reID directory conventions so that synthetic and
real datasets are interchangeable downstream.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import ConfigError, DatasetError, FilenameParseError

DISTRACTOR_ID = -1

SPLIT_DIRS = {
    "market1501": {"train": "bounding_box_train", "query": "query", "gallery": "bounding_box_test"},
    "dukemtmc": {"train": "bounding_box_train", "query": "query", "gallery": "bounding_box_test"},
}

_IMAGE_EXTS = (".jpg", ".jpeg", ".png", ".bmp")

# <pid>_c<cam>, e.g. 0002_c1s1_000451_03.jpg or 0001_c2_f0046182.jpg
_NAME_RE = re.compile(r"^(-?\d+)_c(\d+)")


@dataclass
class PersonImage:
    """One cropped pedestrian image with identity/camera annotations."""

    person_id: int
    camera_id: int
    split: str  # train | query | gallery
    path: Path | None = None
    _pixels: np.ndarray | None = None

    def load(self) -> np.ndarray:
        """Pixels as HxWx3 float32 in [0, 1]; cached after first disk read."""
        if self._pixels is None:
            if self.path is None:
                raise DatasetError("PersonImage has neither pixels nor a path")
            with Image.open(self.path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
            self._pixels = arr
        return self._pixels


@dataclass
class DatasetIndex:
    """Immutable index over a camera-annotated re-ID corpus."""

    images: list[PersonImage]
    num_identities: int
    num_cameras: int
    split_counts: dict[str, int]
    layout_name: str

    def split(self, name: str) -> list[PersonImage]:
        return [im for im in self.images if im.split == name]

    def train_images(self, camera_id: int | None = None) -> list[PersonImage]:
        imgs = [im for im in self.images if im.split == "train"]
        if camera_id is not None:
            imgs = [im for im in imgs if im.camera_id == camera_id]
        return imgs

    def cameras(self) -> list[int]:
        return list(range(1, self.num_cameras + 1))


@dataclass
class SyntheticStyleParams:
    """Per-camera photometric transform standing in for real camera style."""

    gamma: float = 1.0
    channel_gain: tuple[float, float, float] = (1.0, 1.0, 1.0)
    brightness_offset: float = 0.0
    hue_rotation: float = 0.0
    noise_sigma: float = 0.0

    def is_identity(self) -> bool:
        return (
            self.gamma == 1.0
            and tuple(self.channel_gain) == (1.0, 1.0, 1.0)
            and self.brightness_offset == 0.0
            and self.hue_rotation == 0.0
            and self.noise_sigma == 0.0
        )


@dataclass
class StyleStats:
    channel_means: np.ndarray
    channel_stds: np.ndarray
    gram_summary: np.ndarray | None = None


def parse_reid_filename(name: str, layout: str) -> tuple[int, int]:
    """Extract (person_id, camera_id) from a Market/Duke-style filename.

    Distractor prefixes (-1 and 0000) map to DISTRACTOR_ID.
    """
    if layout not in SPLIT_DIRS:
        raise ConfigError(f"unknown layout {layout!r}; expected one of {sorted(SPLIT_DIRS)}")
    m = _NAME_RE.match(name)
    if m is None:
        # report the offending token: the pid field or the missing camera token
        first = name.split("_", 1)[0]
        token = first if not re.fullmatch(r"-?\d+", first) else name.split("_")[1] if "_" in name else name
        raise FilenameParseError(name, token)
    pid = int(m.group(1))
    cam = int(m.group(2))
    if pid <= 0:
        pid = DISTRACTOR_ID
    return pid, cam


def _index_split(split_dir: Path, split: str, layout: str) -> list[PersonImage]:
    files = sorted(p for p in split_dir.iterdir() if p.suffix.lower() in _IMAGE_EXTS)
    out = []
    for p in files:
        pid, cam = parse_reid_filename(p.name, layout)
        if split == "train" and pid == DISTRACTOR_ID:
            continue  # distractors are test-time noise only
        out.append(PersonImage(person_id=pid, camera_id=cam, split=split, path=p))
    return out


def load_dataset(root: str | Path, layout: str) -> DatasetIndex:
    """Index a Market-1501/DukeMTMC-layout directory tree."""
    root = Path(root)
    if layout not in SPLIT_DIRS:
        raise ConfigError(f"unknown layout {layout!r}; expected one of {sorted(SPLIT_DIRS)}")
    images: list[PersonImage] = []
    for split, dirname in SPLIT_DIRS[layout].items():
        split_dir = root / dirname
        if not split_dir.is_dir():
            raise ConfigError(f"missing split directory {split_dir} for layout {layout!r}")
        split_images = _index_split(split_dir, split, layout)
        if not split_images:
            raise DatasetError(f"no images found in split directory {split_dir}")
        images.extend(split_images)
    train_pids = {im.person_id for im in images if im.split == "train"}
    num_cameras = max(im.camera_id for im in images)
    counts: dict[str, int] = {}
    for im in images:
        counts[im.split] = counts.get(im.split, 0) + 1
    return DatasetIndex(
        images=images,
        num_identities=len(train_pids),
        num_cameras=num_cameras,
        split_counts=counts,
        layout_name=layout,
    )


def _hue_rotation_matrix(theta: float) -> np.ndarray:
    """Rotation of RGB space around the gray axis (1,1,1)/sqrt(3)."""
    a = np.ones(3) / np.sqrt(3.0)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.cos(theta) * np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * np.outer(a, a)


def apply_camera_style(
    image: np.ndarray,
    params: SyntheticStyleParams,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """clamp(gain * hue_rotate(image)^gamma + offset + noise); in-range output."""
    if params.is_identity():
        return image
    out = image.astype(np.float32)
    if params.hue_rotation != 0.0:
        out = np.clip(out @ _hue_rotation_matrix(params.hue_rotation).T.astype(np.float32), 0.0, 1.0)
    if params.gamma != 1.0:
        out = np.power(np.clip(out, 0.0, 1.0), params.gamma)
    out = out * np.asarray(params.channel_gain, dtype=np.float32)
    out = out + params.brightness_offset
    if params.noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        out = out + rng.normal(0.0, params.noise_sigma, size=out.shape).astype(np.float32)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def default_style_params(num_cameras: int, seed: int = 0, strength: float = 1.0) -> list[SyntheticStyleParams]:
    """Distinct, fairly strong per-camera styles; strength 0 gives identities."""
    rng = np.random.default_rng(seed)
    params = []
    for c in range(num_cameras):
        # rotate channel-gain emphasis so cameras have well-separated tints
        base = np.array([1.35, 1.0, 0.65])
        gain = 1.0 + strength * (np.roll(base, c % 3) - 1.0)
        gain = gain * (1.0 + strength * rng.uniform(-0.05, 0.05, size=3))
        params.append(
            SyntheticStyleParams(
                gamma=float(1.0 + strength * rng.uniform(-0.3, 0.4)),
                channel_gain=tuple(float(g) for g in gain),
                brightness_offset=float(strength * rng.uniform(-0.08, 0.08)),
                hue_rotation=float(strength * rng.uniform(-0.35, 0.35)),
                noise_sigma=float(strength * 0.01),
            )
        )
    return params


def _render_person(pid: int, jitter: np.random.Generator, resolution: int, corpus_seed: int) -> np.ndarray:
    """Procedural colored-block pedestrian, deterministic per (pid, corpus_seed)."""
    idrng = np.random.default_rng(np.random.SeedSequence([corpus_seed, pid]))
    h = w = resolution
    img = np.empty((h, w, 3), dtype=np.float32)
    img[...] = idrng.uniform(0.35, 0.65, size=3).astype(np.float32)  # background
    skin = idrng.uniform([0.5, 0.35, 0.25], [0.95, 0.8, 0.7]).astype(np.float32)
    shirt = idrng.uniform(0.05, 0.95, size=3).astype(np.float32)
    pants = idrng.uniform(0.05, 0.95, size=3).astype(np.float32)
    logo = idrng.uniform(0.05, 0.95, size=3).astype(np.float32)
    logo_pos = idrng.integers(0, 3)

    dx = int(jitter.integers(-resolution // 16 - 1, resolution // 16 + 2))
    cx = w // 2 + dx
    bw = int(w * 0.36)

    def hl(frac_a, frac_b):
        return int(h * frac_a), int(h * frac_b)

    def paint(r0, r1, half_width, color):
        c0, c1 = max(cx - half_width, 0), min(cx + half_width, w)
        img[r0:r1, c0:c1] = color

    r0, r1 = hl(0.08, 0.24)
    paint(r0, r1, bw // 3, skin)  # head
    r0, r1 = hl(0.24, 0.58)
    paint(r0, r1, bw // 2, shirt)  # torso
    lr0 = int(h * (0.30 + 0.07 * logo_pos))
    paint(lr0, lr0 + max(h // 16, 2), bw // 6, logo)  # identity mark
    r0, r1 = hl(0.58, 0.92)
    paint(r0, r1, bw // 2, pants)  # legs
    split = max(w // 32, 1)
    img[r0:r1, max(cx - split, 0):min(cx + split, w)] = img[0, 0]  # gap between legs
    return img


def _quantize(image: np.ndarray) -> np.ndarray:
    """8-bit round trip so in-memory pixels match what lands on disk."""
    return (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8).astype(np.float32) / 255.0


def make_synthetic_dataset(
    num_ids: int,
    num_cameras: int,
    images_per_id_per_cam: int,
    style: Sequence[SyntheticStyleParams],
    seed: int,
    resolution: int = 64,
    train_fraction: float = 0.5,
) -> DatasetIndex:
    """Deterministic multi-camera toy corpus with disjoint train/test identities."""
    if num_ids < 2 or num_cameras < 2:
        raise ConfigError("synthetic corpus needs num_ids >= 2 and num_cameras >= 2")
    if len(style) < num_cameras:
        raise ConfigError(f"got {len(style)} style parameter sets for {num_cameras} cameras")
    rng = np.random.default_rng(seed)
    num_train_ids = max(int(round(num_ids * train_fraction)), 1)
    images: list[PersonImage] = []
    for pid in range(1, num_ids + 1):
        is_train = pid <= num_train_ids
        for cam in range(1, num_cameras + 1):
            for k in range(images_per_id_per_cam):
                base = _render_person(pid, rng, resolution, seed)
                pix = _quantize(apply_camera_style(base, style[cam - 1], rng))
                if is_train:
                    split = "train"
                else:
                    split = "query" if k == 0 else "gallery"
                images.append(PersonImage(person_id=pid, camera_id=cam, split=split, _pixels=pix))
    counts: dict[str, int] = {}
    for im in images:
        counts[im.split] = counts.get(im.split, 0) + 1
    return DatasetIndex(
        images=images,
        num_identities=num_train_ids,
        num_cameras=num_cameras,
        split_counts=counts,
        layout_name="synthetic",
    )


def write_dataset(index: DatasetIndex, out_dir: str | Path, manifest: dict | None = None) -> Path:
    """Write a corpus in Market-1501 layout (lossless PNG) plus a manifest."""
    out_dir = Path(out_dir)
    dirs = SPLIT_DIRS["market1501"]
    counters: dict[tuple[int, int], int] = {}
    for split_dir in dirs.values():
        (out_dir / split_dir).mkdir(parents=True, exist_ok=True)
    for im in index.images:
        key = (im.person_id, im.camera_id)
        idx = counters.get(key, 0)
        counters[key] = idx + 1
        name = f"{im.person_id:04d}_c{im.camera_id}s1_{idx:06d}_00.png"
        arr = (np.clip(im.load(), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
        Image.fromarray(arr).save(out_dir / dirs[im.split] / name)
    manifest = dict(manifest or {})
    manifest.update(
        {
            "layout": "market1501",
            "num_identities": index.num_identities,
            "num_cameras": index.num_cameras,
            "split_counts": index.split_counts,
        }
    )
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out_dir


@dataclass
class AugmentConfig:
    crop: bool = True
    crop_pad: int = 10
    flip_prob: float = 0.5
    erase_prob: float = 0.5
    erase_area: tuple[float, float] = (0.02, 0.4)
    erase_aspect: tuple[float, float] = (0.3, 3.3)

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(crop=False, flip_prob=0.0, erase_prob=0.0)


def augment(image: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Padded random crop, horizontal flip, random erasing. Resolution preserved."""
    h, w = image.shape[:2]
    out = image
    if config.crop and config.crop_pad > 0:
        p = config.crop_pad
        padded = np.pad(out, ((p, p), (p, p), (0, 0)), mode="edge")
        y = int(rng.integers(0, 2 * p + 1))
        x = int(rng.integers(0, 2 * p + 1))
        out = padded[y:y + h, x:x + w]
    if config.flip_prob > 0 and rng.random() < config.flip_prob:
        out = out[:, ::-1]
    if config.erase_prob > 0 and rng.random() < config.erase_prob:
        out = out.copy()
        for _ in range(100):
            area = rng.uniform(*config.erase_area) * h * w
            aspect = rng.uniform(*config.erase_aspect)
            eh = int(round(np.sqrt(area * aspect)))
            ew = int(round(np.sqrt(area / aspect)))
            if 0 < eh < h and 0 < ew < w:
                y = int(rng.integers(0, h - eh + 1))
                x = int(rng.integers(0, w - ew + 1))
                out[y:y + eh, x:x + ew] = rng.random((eh, ew, 3), dtype=np.float32)
                break
    return np.ascontiguousarray(out, dtype=np.float32)


_GRAM_FILTERS = np.stack(
    [
        np.array([[1, 0, -1], [2, 0, -2], [1, 0, -1]], dtype=np.float32),  # horizontal edges
        np.array([[1, 2, 1], [0, 0, 0], [-1, -2, -1]], dtype=np.float32),  # vertical edges
        np.full((3, 3), 1.0 / 9.0, dtype=np.float32),  # local mean
    ]
)


def _shallow_features(image: np.ndarray) -> np.ndarray:
    """Fixed 3-filter bank applied per channel; (H-2)x(W-2)x9 feature map."""
    gray_stack = []
    for f in _GRAM_FILTERS:
        for c in range(3):
            ch = image[:, :, c]
            # valid cross-correlation via stride tricks
            win = np.lib.stride_tricks.sliding_window_view(ch, (3, 3))
            gray_stack.append(np.einsum("ijkl,kl->ij", win, f))
    return np.stack(gray_stack, axis=-1)


def style_statistics(images: Iterable[np.ndarray], with_gram: bool = False) -> StyleStats:
    """Pooled per-channel means/stds over a collection; optional Gram summary."""
    images = list(images)
    if not images:
        raise ValueError("style_statistics requires a non-empty collection")
    shape = images[0].shape
    for im in images:
        if im.shape != shape:
            raise ValueError("style_statistics requires uniform resolution")
    stacked = np.stack(images).reshape(-1, 3)
    means = stacked.mean(axis=0)
    stds = stacked.std(axis=0)
    gram = None
    if with_gram:
        grams = []
        for im in images:
            f = _shallow_features(im).reshape(-1, 9)
            grams.append((f.T @ f) / f.shape[0])
        gram = np.mean(grams, axis=0).ravel()
    return StyleStats(channel_means=means, channel_stds=stds, gram_summary=gram)
