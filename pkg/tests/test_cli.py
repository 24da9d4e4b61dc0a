import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from unitystyle.cli import main
from unitystyle.config import RunConfig


TINY_CONFIG = {
    "dataset": {
        "num_ids": 6,
        "num_cameras": 2,
        "images_per_id_per_cam": 2,
        "resolution": 16,
    },
    "gan": {
        "epochs": 1,
        "steps_per_epoch": 1,
        "resolution": [16, 16],
        "base_channels": 4,
        "num_scales": 2,
        "disc_channels": 4,
        "disc_layers": 2,
    },
    "reid": {
        "epochs": 1,
        "batch_n": 4,
        "steps_per_epoch": 1,
        "input_size": [16, 16],
        "augment": {"crop": False, "flip_prob": 0.0, "erase_prob": 0.0},
    },
    "eval": {"cmc_ks": [1, 2]},
}


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def workspace(tmp_path):
    cfg = dict(TINY_CONFIG)
    cfg["output_dir"] = str(tmp_path / "run")
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    return cfg_path, Path(cfg["output_dir"])


def invoke(runner, cfg_path, *args):
    return runner.invoke(main, ["--config", str(cfg_path), *args], catch_exceptions=False)


class TestRunConfig:
    def test_round_trip(self, tmp_path):
        cfg = RunConfig.from_dict(TINY_CONFIG)
        path = tmp_path / "cfg.json"
        cfg.save(path)
        again = RunConfig.from_file(path)
        assert again.to_dict() == cfg.to_dict()

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")
        assert RunConfig.from_file(path).to_dict() == RunConfig().to_dict()

    def test_unknown_key_rejected(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dataset": {"nun_ids": 5}}))
        result = runner.invoke(main, ["--config", str(path), "synth-data"])
        assert result.exit_code == 2
        assert "nun_ids" in result.output


class TestSynthData:
    def test_writes_layout(self, runner, workspace):
        cfg_path, out = workspace
        result = invoke(runner, cfg_path, "synth-data")
        assert result.exit_code == 0
        data = out / "data"
        assert (data / "manifest.json").exists()
        train = list((data / "bounding_box_train").glob("*.png"))
        query = list((data / "query").glob("*.png"))
        gallery = list((data / "bounding_box_test").glob("*.png"))
        # 6 ids split in half between train and test; 2 cams x 2 shots each
        assert len(train) == 3 * 2 * 2
        assert len(query) + len(gallery) == 3 * 2 * 2
        assert len(query) == 3 * 2  # one query per (id, cam)

    def test_refuses_to_overwrite(self, runner, workspace):
        cfg_path, out = workspace
        assert invoke(runner, cfg_path, "synth-data").exit_code == 0
        result = runner.invoke(main, ["--config", str(cfg_path), "synth-data"])
        assert result.exit_code == 2
        assert "--force" in result.output

    def test_force_overwrites(self, runner, workspace):
        cfg_path, _ = workspace
        assert invoke(runner, cfg_path, "synth-data").exit_code == 0
        result = invoke(runner, cfg_path, "--force", "synth-data")
        assert result.exit_code == 0

    def test_rerun_is_byte_identical(self, runner, workspace):
        cfg_path, out = workspace
        invoke(runner, cfg_path, "synth-data")
        manifest = (out / "data" / "manifest.json").read_bytes()
        sample = sorted((out / "data" / "bounding_box_train").glob("*.png"))[0]
        pixels = sample.read_bytes()
        invoke(runner, cfg_path, "--force", "synth-data")
        assert (out / "data" / "manifest.json").read_bytes() == manifest
        assert sample.read_bytes() == pixels


class TestMissingArtifacts:
    def test_gen_unity_without_checkpoints_exits_3(self, runner, workspace):
        cfg_path, out = workspace
        invoke(runner, cfg_path, "synth-data")
        result = runner.invoke(main, ["--config", str(cfg_path), "gen-unity"])
        assert result.exit_code == 3
        assert "train-transfer" in result.output
        assert not (out / "unity").exists()  # fails before writing anything

    def test_eval_without_reid_checkpoint_exits_3(self, runner, workspace):
        cfg_path, _ = workspace
        invoke(runner, cfg_path, "synth-data")
        result = runner.invoke(main, ["--config", str(cfg_path), "eval", "--variant", "ide"])
        assert result.exit_code == 3
        assert "train-reid" in result.output

    def test_train_reid_unity_without_transfers_exits_3(self, runner, workspace):
        cfg_path, _ = workspace
        invoke(runner, cfg_path, "synth-data")
        result = runner.invoke(main, ["--config", str(cfg_path), "train-reid"])
        assert result.exit_code == 3

    def test_bad_camera_id_exits_2(self, runner, workspace):
        cfg_path, _ = workspace
        invoke(runner, cfg_path, "synth-data")
        result = runner.invoke(
            main, ["--config", str(cfg_path), "train-transfer", "--camera", "9"]
        )
        assert result.exit_code == 2


class TestPipeline:
    def test_end_to_end_tiny_run(self, runner, workspace):
        cfg_path, out = workspace
        assert invoke(runner, cfg_path, "synth-data").exit_code == 0
        assert invoke(runner, cfg_path, "train-transfer").exit_code == 0
        for cam in (1, 2):
            assert (out / f"transfer_cam{cam}.ckpt").exists()

        # with one of the per-camera checkpoints missing, nothing is written
        ckpt1 = out / "transfer_cam1.ckpt"
        hidden = ckpt1.read_bytes()
        ckpt1.unlink()
        result = runner.invoke(main, ["--config", str(cfg_path), "gen-unity"])
        assert result.exit_code == 3
        assert not (out / "unity").exists()
        ckpt1.write_bytes(hidden)

        result = invoke(runner, cfg_path, "gen-unity", "--split", "query")
        assert result.exit_code == 0
        unity_query = sorted((out / "unity" / "query").glob("*.png"))
        assert len(unity_query) == len(list((out / "data" / "query").glob("*.png")))
        names = {p.name for p in unity_query}
        assert names == {p.name for p in (out / "data" / "query").glob("*.png")}

        # regenerating produces identical bytes
        before = [p.read_bytes() for p in unity_query]
        assert invoke(runner, cfg_path, "gen-unity", "--split", "query").exit_code == 0
        assert [p.read_bytes() for p in unity_query] == before

        assert invoke(runner, cfg_path, "train-reid", "--variant", "ide").exit_code == 0
        assert invoke(runner, cfg_path, "train-reid", "--variant", "unitystyle").exit_code == 0
        assert (out / "reid_unitystyle.ckpt").exists()

        result = invoke(runner, cfg_path, "eval", "--variant", "unitystyle")
        assert result.exit_code == 0
        summary = json.loads(result.output.strip().splitlines()[-1])
        assert 0.0 <= summary["mAP"] <= 1.0
        report = json.loads((out / "eval" / "report_unitystyle.json").read_text())
        assert report["meta"]["unity_inputs"] is True
        assert (out / "eval" / "report_unitystyle_camera_matrix.csv").exists()

    def test_ablation_table(self, runner, workspace):
        cfg_path, out = workspace
        invoke(runner, cfg_path, "synth-data")
        invoke(runner, cfg_path, "train-transfer")
        invoke(runner, cfg_path, "train-transfer", "--no-attention")
        for variant in ("ide", "unitygan", "unitystyle"):
            invoke(runner, cfg_path, "train-reid", "--variant", variant)
        result = invoke(runner, cfg_path, "eval", "--ablation")
        assert result.exit_code == 0
        table = json.loads((out / "eval" / "ablation.json").read_text())
        assert [r["row"] for r in table] == ["IDE", "UnityGAN", "UnityStyle", "+RE"]
        csv_lines = (out / "eval" / "ablation.csv").read_text().splitlines()
        assert csv_lines[0] == "row,top1,mAP"
        assert len(csv_lines) == 5


class TestGrid:
    def test_tiles_images(self, runner, tmp_path):
        paths = []
        for i in range(4):
            p = tmp_path / f"im{i}.png"
            Image.fromarray(np.full((8, 8, 3), i * 60, dtype=np.uint8)).save(p)
            paths.append(str(p))
        out = tmp_path / "grid.png"
        result = runner.invoke(
            main,
            ["grid", *paths, "--cols", "2", "--row-label", "a", "--row-label", "b", "--out", str(out)],
            catch_exceptions=False,
        )
        assert result.exit_code == 0
        img = Image.open(out)
        assert img.width > 16 and img.height >= 16

    def test_ragged_row_rejected(self, runner, tmp_path):
        p = tmp_path / "im.png"
        Image.fromarray(np.zeros((8, 8, 3), dtype=np.uint8)).save(p)
        result = runner.invoke(main, ["grid", str(p), str(p), str(p), "--cols", "2"])
        assert result.exit_code == 2
