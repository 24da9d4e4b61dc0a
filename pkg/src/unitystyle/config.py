"""Declarative run configuration: one JSON document drives the whole pipeline.

Every field has a default, so an empty file (or no file) yields the documented
default desk-scale run. CLI flags override file values.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import AugmentConfig, default_style_params, load_dataset, make_synthetic_dataset, DatasetIndex
from .errors import ConfigError
from .gan.losses import LossWeights
from .gan.training import TransferConfig
from .reid import ReidConfig


@dataclass
class DatasetConfig:
    kind: str = "synthetic"  # synthetic | disk
    layout: str = "market1501"
    root: str | None = None
    num_ids: int = 20
    num_cameras: int = 4
    images_per_id_per_cam: int = 4
    resolution: int = 64
    seed: int = 7
    style_seed: int = 0
    style_strength: float = 1.0


@dataclass
class EvalConfig:
    unity_inputs: bool = True
    use_rerank: bool = False
    rerank_k1: int = 20
    rerank_k2: int = 6
    rerank_lambda: float = 0.3
    cmc_ks: tuple[int, ...] = (1, 5, 10)


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    gan: TransferConfig = field(default_factory=TransferConfig)
    reid: ReidConfig = field(default_factory=ReidConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        cfg = cls()
        for section_name in ("dataset", "gan", "reid", "eval"):
            section = getattr(cfg, section_name)
            overrides = raw.get(section_name, {})
            if not isinstance(overrides, dict):
                raise ConfigError(f"config section {section_name!r} must be an object")
            for key, value in overrides.items():
                if not hasattr(section, key):
                    raise ConfigError(f"unknown config key {section_name}.{key}")
                current = getattr(section, key)
                if isinstance(current, LossWeights):
                    value = LossWeights(**value)
                elif isinstance(current, AugmentConfig):
                    value = AugmentConfig(
                        **{k: tuple(v) if isinstance(v, list) else v for k, v in value.items()}
                    )
                elif isinstance(current, tuple) and isinstance(value, list):
                    value = tuple(value)
                setattr(section, key, value)
        if "output_dir" in raw:
            cfg.output_dir = raw["output_dir"]
        unknown = set(raw) - {"dataset", "gan", "reid", "eval", "output_dir"}
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        return cfg

    @classmethod
    def from_file(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        text = Path(path).read_text().strip()
        raw = json.loads(text) if text else {}
        return cls.from_dict(raw)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def resolve_dataset(config: RunConfig, data_dir: Path | None = None) -> DatasetIndex:
    """Load the configured dataset: from disk if materialized, else synthesize."""
    ds = config.dataset
    if ds.kind == "disk":
        if not ds.root:
            raise ConfigError("dataset.kind='disk' requires dataset.root")
        return load_dataset(ds.root, ds.layout)
    if ds.kind != "synthetic":
        raise ConfigError(f"unknown dataset.kind {ds.kind!r}")
    if data_dir is not None and (data_dir / "manifest.json").exists():
        return load_dataset(data_dir, "market1501")
    styles = default_style_params(ds.num_cameras, seed=ds.style_seed, strength=ds.style_strength)
    return make_synthetic_dataset(
        ds.num_ids, ds.num_cameras, ds.images_per_id_per_cam, styles, ds.seed, resolution=ds.resolution
    )
