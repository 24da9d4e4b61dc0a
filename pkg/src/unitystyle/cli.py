"""Batch pipeline commands: synth-data, train-transfer, gen-unity, train-reid,
eval, grid.

Exit codes: 0 success, 2 usage/config error, 3 missing upstream artifact,
4 runtime failure.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
import traceback
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .config import RunConfig, resolve_dataset
from .data import SPLIT_DIRS, make_synthetic_dataset, default_style_params, write_dataset
from .errors import ConfigError, MissingArtifactError, UnityStyleError
from .evaluation import EvalProtocol, evaluate
from .gan.training import TransferModel, generate_unity_batch, train_transfer
from .reid import ReidModel, train_reid
from .viz import image_grid

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_RUNTIME = 4


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except MissingArtifactError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_MISSING)
        except (UnityStyleError, RuntimeError, OSError) as exc:
            traceback.print_exc()
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON run configuration.")
@click.option("--seed", type=int, default=None, help="Override all section seeds.")
@click.option("--output-dir", type=click.Path(), default=None, help="Override config output_dir.")
@click.option("--force", is_flag=True, help="Overwrite existing outputs.")
@click.pass_context
def main(ctx, config_path, seed, output_dir, force):
    """Camera-style unification pipeline for person re-identification."""
    try:
        cfg = RunConfig.from_file(config_path)
    except (ConfigError, json.JSONDecodeError) as exc:
        click.echo(f"error: bad config: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if output_dir is not None:
        cfg.output_dir = output_dir
    if seed is not None:
        cfg.dataset.seed = seed
        cfg.gan.seed = seed
        cfg.reid.seed = seed
    ctx.obj = {"config": cfg, "force": force}


def _out(ctx) -> Path:
    out = Path(ctx.obj["config"].output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _data_dir(ctx) -> Path:
    return Path(ctx.obj["config"].output_dir) / "data"


def _transfer_ckpt(out: Path, cam: int, attention: bool) -> Path:
    stem = "transfer" if attention else "transfer_noattn"
    return out / f"{stem}_cam{cam}.ckpt"


def _load_transfers(out: Path, cameras: list[int], attention: bool = True) -> dict[int, TransferModel]:
    transfers = {}
    for cam in cameras:
        path = _transfer_ckpt(out, cam, attention)
        if not path.exists():
            raise MissingArtifactError(
                f"missing checkpoint {path}; produce it with `unitystyle train-transfer --camera {cam}`"
                + ("" if attention else " --no-attention")
            )
        transfers[cam] = TransferModel.load(path)
    return transfers


@main.command("synth-data")
@click.pass_context
@_handle_errors
def cmd_synth_data(ctx):
    """Generate the synthetic multi-camera corpus on disk."""
    cfg = ctx.obj["config"]
    target = _data_dir(ctx)
    if target.exists() and any(target.iterdir()):
        if not ctx.obj["force"]:
            raise ConfigError(f"output directory {target} is not empty (use --force to overwrite)")
        import shutil

        shutil.rmtree(target)
    ds = cfg.dataset
    styles = default_style_params(ds.num_cameras, seed=ds.style_seed, strength=ds.style_strength)
    index = make_synthetic_dataset(
        ds.num_ids, ds.num_cameras, ds.images_per_id_per_cam, styles, ds.seed, resolution=ds.resolution
    )
    write_dataset(
        index,
        target,
        manifest={
            "seed": ds.seed,
            "num_ids": ds.num_ids,
            "num_cameras": ds.num_cameras,
            "images_per_id_per_cam": ds.images_per_id_per_cam,
            "resolution": ds.resolution,
            "style_seed": ds.style_seed,
            "style_strength": ds.style_strength,
        },
    )
    click.echo(f"wrote synthetic corpus to {target}")


@main.command("train-transfer")
@click.option("--camera", default="all", help="'all' or one camera id.")
@click.option("--attention/--no-attention", default=True, help="Use the style-attention loss.")
@click.option("--resume", is_flag=True, help="Resume from the last epoch checkpoint.")
@click.pass_context
@_handle_errors
def cmd_train_transfer(ctx, camera, attention, resume):
    """Train one style-transfer model per camera."""
    cfg = ctx.obj["config"]
    out = _out(ctx)
    dataset = resolve_dataset(cfg, _data_dir(ctx))
    if camera == "all":
        cameras = dataset.cameras()
    else:
        try:
            cameras = [int(camera)]
        except ValueError:
            raise ConfigError(f"--camera must be 'all' or an integer, got {camera!r}")
        if cameras[0] not in dataset.cameras():
            raise ConfigError(f"unknown camera id {camera}; valid ids: {dataset.cameras()}")
    gan_cfg = cfg.gan
    gan_cfg.attention_enabled = attention
    gan_cfg.use_style_attention_loss = attention
    for cam in cameras:
        ckpt = _transfer_ckpt(out, cam, attention)
        model = train_transfer(
            dataset,
            cam,
            gan_cfg,
            log_path=ckpt.with_suffix(".log.jsonl"),
            checkpoint_path=ckpt,
            resume=resume,
        )
        model.save(ckpt)
        click.echo(f"camera {cam}: saved {ckpt}")


@main.command("gen-unity")
@click.option("--split", type=click.Choice(["train", "query", "gallery", "all"]), default="all")
@click.pass_context
@_handle_errors
def cmd_gen_unity(ctx, split):
    """Write unified-style versions of a split, mirroring the source layout."""
    cfg = ctx.obj["config"]
    out = _out(ctx)
    dataset = resolve_dataset(cfg, _data_dir(ctx))
    transfers = _load_transfers(out, dataset.cameras())  # fails before any file is written
    splits = ["train", "query", "gallery"] if split == "all" else [split]
    unity_root = out / "unity"
    for sp in splits:
        split_dir = unity_root / SPLIT_DIRS["market1501"][sp]
        split_dir.mkdir(parents=True, exist_ok=True)
        images = dataset.split(sp)
        for cam in dataset.cameras():
            cam_images = [im for im in images if im.camera_id == cam]
            if not cam_images:
                continue
            outs = generate_unity_batch([im.load() for im in cam_images], transfers[cam])
            for im, arr in zip(cam_images, outs):
                stem = im.path.stem if im.path else f"{im.person_id:04d}_c{im.camera_id}s1_000000_00"
                Image.fromarray((np.clip(arr, 0, 1) * 255 + 0.5).astype(np.uint8)).save(
                    split_dir / f"{stem}.png"
                )
        click.echo(f"{sp}: wrote {len(images)} unified-style images to {split_dir}")


@main.command("train-reid")
@click.option(
    "--variant",
    type=click.Choice(["ide", "unitygan", "unitystyle"]),
    default="unitystyle",
    help="ide: real images only; unitygan: + images from attention-free transfers; unitystyle: + attention transfers.",
)
@click.pass_context
@_handle_errors
def cmd_train_reid(ctx, variant):
    """Train the re-identification model."""
    cfg = ctx.obj["config"]
    out = _out(ctx)
    dataset = resolve_dataset(cfg, _data_dir(ctx))
    reid_cfg = cfg.reid
    transfers = None
    if variant == "ide":
        reid_cfg.use_unity = False
    else:
        reid_cfg.use_unity = True
        transfers = _load_transfers(out, dataset.cameras(), attention=(variant == "unitystyle"))
    ckpt = out / f"reid_{variant}.ckpt"
    model = train_reid(dataset, transfers, reid_cfg, log_path=ckpt.with_suffix(".log.jsonl"))
    model.save(ckpt, meta={"variant": variant, "loss_history": model.loss_history})
    click.echo(f"saved {ckpt}")


def _eval_one(model, dataset, cfg, transfers, use_rerank):
    rr = (cfg.eval.rerank_k1, cfg.eval.rerank_k2, cfg.eval.rerank_lambda) if use_rerank else None
    return evaluate(
        model,
        dataset,
        EvalProtocol(cmc_ks=tuple(cfg.eval.cmc_ks)),
        transfers=transfers,
        rerank_params=rr,
    )


@main.command("eval")
@click.option("--variant", type=click.Choice(["ide", "unitygan", "unitystyle"]), default="unitystyle")
@click.option("--ablation", is_flag=True, help="Evaluate all variants into an ablation table.")
@click.pass_context
@_handle_errors
def cmd_eval(ctx, variant, ablation):
    """Evaluate retrieval accuracy; optionally emit the 4-row ablation table."""
    cfg = ctx.obj["config"]
    out = _out(ctx)
    dataset = resolve_dataset(cfg, _data_dir(ctx))
    eval_dir = out / "eval"
    eval_dir.mkdir(exist_ok=True)

    def load_reid(name) -> ReidModel:
        path = out / f"reid_{name}.ckpt"
        if not path.exists():
            raise MissingArtifactError(
                f"missing checkpoint {path}; produce it with `unitystyle train-reid --variant {name}`"
            )
        return ReidModel.load(path)

    if not ablation:
        model = load_reid(variant)
        transfers = None
        if variant == "unitystyle" and cfg.eval.unity_inputs:
            transfers = _load_transfers(out, dataset.cameras())
        report = _eval_one(model, dataset, cfg, transfers, cfg.eval.use_rerank)
        report.save(eval_dir / f"report_{variant}")
        click.echo(json.dumps({"variant": variant, "top1": report.cmc[1], "mAP": report.mAP}))
        return

    transfers = _load_transfers(out, dataset.cameras())
    rows = []
    # IDE baseline: real training, real test inputs
    rows.append(("IDE", _eval_one(load_reid("ide"), dataset, cfg, None, False)))
    # UnityGAN: train-time augmentation only, real test inputs
    rows.append(("UnityGAN", _eval_one(load_reid("unitygan"), dataset, cfg, None, False)))
    # UnityStyle: augmented training plus unified-style test inputs
    us_model = load_reid("unitystyle")
    rows.append(("UnityStyle", _eval_one(us_model, dataset, cfg, transfers, False)))
    rows.append(("+RE", _eval_one(us_model, dataset, cfg, transfers, True)))
    table = [{"row": name, "top1": rep.cmc[1], "mAP": rep.mAP} for name, rep in rows]
    (eval_dir / "ablation.json").write_text(json.dumps(table, indent=2))
    with open(eval_dir / "ablation.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "top1", "mAP"])
        for r in table:
            w.writerow([r["row"], f"{r['top1']:.4f}", f"{r['mAP']:.4f}"])
    for name, rep in rows:
        rep.save(eval_dir / f"report_{name.replace('+', 'RE_') .lower()}")
    click.echo(json.dumps(table))


@main.command("grid")
@click.argument("images", nargs=-1, type=click.Path(exists=True))
@click.option("--cols", type=int, required=True, help="Images per row.")
@click.option("--row-label", "row_labels", multiple=True, help="One caption per row.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
@_handle_errors
def cmd_grid(ctx, images, cols, row_labels, out_path):
    """Tile images (row-major) into one labeled comparison PNG."""
    if not images:
        raise ConfigError("grid needs at least one image")
    if len(images) % cols != 0:
        raise ConfigError(f"{len(images)} images do not fill rows of {cols}")
    arrs = [np.asarray(Image.open(p).convert("RGB"), dtype=np.float32) / 255.0 for p in images]
    rows = [arrs[i:i + cols] for i in range(0, len(arrs), cols)]
    out_file = Path(out_path) if out_path else _out(ctx) / "grid.png"
    image_grid(rows, list(row_labels) or None, out_file)
    click.echo(f"wrote {out_file}")


if __name__ == "__main__":
    main()
